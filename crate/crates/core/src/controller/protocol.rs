//! Line-delimited JSON ask/tell protocol over standard streams.
//!
//! Requests (one JSON object per line):
//!   {"request":"suggest"}
//!   {"request":"observe","config_id":N,"epoch":N,"loss":X}
//!
//! Responses:
//!   {"action":"start","config_id":N,"x":[...],"epochs":N}
//!   {"action":"resume","config_id":N,"x":[...],"epochs":N}
//!   {"ok":MESSAGE}
//!   {"error":MESSAGE}
//!
//! Floats are serialized with 17 significant digits. A malformed line gets
//! an error response and leaves the state untouched; end-of-input shuts the
//! session down cleanly.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::util::to_json_17;

use super::{Action, ActionKind, OptState};

#[derive(Deserialize)]
#[serde(tag = "request", rename_all = "lowercase", deny_unknown_fields)]
enum Request {
    Suggest,
    Observe { config_id: u64, epoch: u64, loss: f64 },
}

#[derive(Serialize)]
struct ActionResponse<'a> {
    action: &'a str,
    config_id: u64,
    x: Vec<f64>,
    epochs: u32,
}

#[derive(Serialize)]
struct OkResponse<'a> {
    ok: &'a str,
}

#[derive(Serialize)]
struct ErrorResponse {
    error: String,
}

fn error_line(message: impl std::fmt::Display) -> String {
    to_json_17(&ErrorResponse {
        error: message.to_string(),
    })
}

fn action_line(state: &OptState, action: &Action) -> String {
    let (tag, config_id, x) = match &action.kind {
        ActionKind::StartNew { config_id, x } => ("start", *config_id, x.clone()),
        ActionKind::Resume { config_id } => (
            "resume",
            *config_id,
            state.config_x(*config_id).unwrap_or_default(),
        ),
    };
    to_json_17(&ActionResponse {
        action: tag,
        config_id,
        x,
        epochs: action.epochs,
    })
}

/// Handle one request line. Returns the response line and whether the state
/// changed (and therefore needs persisting before the response is sent).
pub fn handle_line(state: &mut OptState, line: &str) -> (String, bool) {
    let request: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return (error_line(format!("malformed request: {e}")), false),
    };
    match request {
        Request::Suggest => match state.suggest() {
            Ok(action) => (action_line(state, &action), true),
            Err(e) => (error_line(e), false),
        },
        Request::Observe {
            config_id,
            epoch,
            loss,
        } => match state.observe(config_id, epoch, loss) {
            Ok(()) => (
                to_json_17(&OkResponse {
                    ok: &format!("recorded config {config_id} epoch {epoch}"),
                }),
                true,
            ),
            Err(e) => (error_line(e), false),
        },
    }
}

/// Serve the protocol until end-of-input. When `state_path` is given, the
/// state is persisted (atomically) after every mutating request, before the
/// response is written, so an acknowledged observation is never lost.
pub fn serve<R: BufRead, W: Write>(
    state: &mut OptState,
    input: R,
    mut output: W,
    state_path: Option<&Path>,
) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (response, mutated) = handle_line(state, &line);
        if mutated {
            if let Some(path) = state_path {
                state.save_to_file(path)?;
            }
        }
        writeln!(output, "{response}")?;
        output.flush()?;
    }
    Ok(())
}
