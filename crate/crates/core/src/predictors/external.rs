//! Client for a predictor running in a child process.
//!
//! Protocol: newline-delimited JSON over the child's stdin/stdout.
//! Request `{"id": 0, "inputs": [[...], ...]}`, response
//! `{"id": 0, "outputs": [...]}`, answered in request order.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{batch_rows, Predictor};
use crate::error::{PredictorError, Result};

pub const DEFAULT_MAX_BATCH: usize = 256;

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    inputs: Vec<&'a [f64]>,
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    outputs: Vec<f64>,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

pub struct ExternalPredictor {
    command: String,
    dim: usize,
    timeout: Duration,
    max_batch: usize,
    session: Mutex<Session>,
}

impl fmt::Debug for ExternalPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalPredictor")
            .field("command", &self.command)
            .field("dim", &self.dim)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalPredictor {
    /// Spawns `command` through `sh -c`. Requests carry at most `max_batch`
    /// rows each.
    pub fn spawn(command: &str, dim: usize, timeout_secs: f64, max_batch: usize) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| PredictorError::Spawn {
                command: command.to_owned(),
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalPredictor {
            command: command.to_owned(),
            dim,
            timeout: Duration::from_secs_f64(timeout_secs),
            max_batch: max_batch.max(1),
            session: Mutex::new(Session {
                child,
                stdin,
                lines: rx,
                next_id: 0,
            }),
        })
    }

    fn exited(session: &mut Session) -> PredictorError {
        let status = match session.child.wait() {
            Ok(s) => s.to_string(),
            Err(e) => e.to_string(),
        };
        PredictorError::Exited { status }
    }

    fn round_trip(
        &self,
        session: &mut Session,
        rows: &[f64],
        first_row: usize,
    ) -> Result<Vec<f64>> {
        let id = session.next_id;
        session.next_id += 1;
        let request = Request {
            id,
            inputs: rows.chunks_exact(self.dim).collect(),
        };
        let mut line = serde_json::to_string(&request)?;
        line.push('\n');
        if session
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| session.stdin.flush())
            .is_err()
        {
            return Err(Self::exited(session).into());
        }
        let reply = match session.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(PredictorError::Io(e).into()),
            Err(RecvTimeoutError::Timeout) => {
                return Err(PredictorError::Timeout {
                    id,
                    timeout_secs: self.timeout.as_secs_f64(),
                }
                .into())
            }
            Err(RecvTimeoutError::Disconnected) => return Err(Self::exited(session).into()),
        };
        let response: Response = serde_json::from_str(&reply)
            .map_err(|e| PredictorError::Malformed(format!("{e}: {reply}")))?;
        let expected = rows.len() / self.dim;
        if response.id != id || response.outputs.len() != expected {
            return Err(PredictorError::Malformed(format!(
                "expected id {id} with {expected} outputs, got id {} with {}",
                response.id,
                response.outputs.len()
            ))
            .into());
        }
        for (i, &v) in response.outputs.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(PredictorError::OutOfRange {
                    row: first_row + i,
                    value: v,
                }
                .into());
            }
        }
        Ok(response.outputs)
    }
}

impl Predictor for ExternalPredictor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        batch_rows(self.dim, rows)?;
        let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
        let mut out = Vec::with_capacity(rows.len() / self.dim);
        for (k, chunk) in rows.chunks(self.max_batch * self.dim).enumerate() {
            out.extend(self.round_trip(&mut session, chunk, k * self.max_batch)?);
        }
        Ok(out)
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        let session = self.session.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = session.child.kill();
        let _ = session.child.wait();
    }
}
