//! Seed mixing and precision-preserving serialization helpers.

use serde::Serialize;

/// splitmix64 finalizer; the basis for deriving independent RNG streams.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a new seed from a base seed and a sequence of stream labels.
///
/// Used everywhere a computation needs its own reproducible random stream
/// (per round, per scoring task, per synthetic curve).
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(seed ^ 0xa076_1d64_78bd_642f);
    for &p in parts {
        s = splitmix64(s ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    s
}

/// Format a float as a decimal with 17 significant digits.
///
/// 17 significant digits are enough to reproduce any f64 bit-exactly on
/// parse, which the state documents, wire protocol, and CSV files rely on.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Float17Formatter;

impl serde_json::ser::Formatter for Float17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize a value as JSON with every float written at 17 significant digits.
pub fn to_json_17<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Float17Formatter);
    value
        .serialize(&mut ser)
        .expect("in-memory JSON serialization cannot fail");
    String::from_utf8(out).expect("serde_json emits valid utf-8")
}
