use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::PairScorer;
use crate::corpus::Sentence;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Request<'a> {
    id: usize,
    post: &'a str,
    response: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    id: usize,
    score: f64,
}

/// Scores pairs by piping JSON lines through a user-supplied command.
///
/// Requests are written as `{"id","post","response"}` lines on the child's
/// stdin, replies are read as `{"id","score"}` lines from its stdout. One
/// child is launched per batch and batches never overlap.
#[derive(Debug)]
pub struct ExternalScorer {
    command: String,
    timeout: Duration,
    lock: Mutex<()>,
}

impl ExternalScorer {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            timeout: Duration::from_secs(60),
            lock: Mutex::new(()),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut payload = Vec::new();
        for (id, (post, response)) in pairs.iter().enumerate() {
            serde_json::to_writer(&mut payload, &Request { id, post, response })?;
            payload.push(b'\n');
        }

        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::External(format!("cannot launch {:?}: {e}", self.command)))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            // a child that exits early closes the pipe; its exit status reports that
            let _ = stdin.write_all(&payload);
        });
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let deadline = Instant::now() + self.timeout;
        let mut lines = Vec::new();
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(remaining) {
                Ok(Ok(line)) => lines.push(line),
                Ok(Err(e)) => {
                    let _ = child.kill();
                    return Err(Error::External(format!("reading scorer output: {e}")));
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::External(format!(
                        "timeout after {:?} waiting for {:?}",
                        self.timeout, self.command
                    )));
                }
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
        }
        let _ = writer.join();
        let status = child
            .wait()
            .map_err(|e| Error::External(format!("waiting for scorer: {e}")))?;
        if !status.success() {
            return Err(Error::External(format!("scorer exited with {status}")));
        }

        let mut by_id: HashMap<usize, f64> = HashMap::new();
        for (n, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let reply: Reply = serde_json::from_str(line)
                .map_err(|e| Error::External(format!("malformed line {}: {e}", n + 1)))?;
            if reply.id >= pairs.len() {
                return Err(Error::External(format!("unknown id {}", reply.id)));
            }
            if reply.score.is_nan() {
                return Err(Error::External(format!("NaN score for id {}", reply.id)));
            }
            by_id.insert(reply.id, reply.score);
        }
        (0..pairs.len())
            .map(|id| {
                let s = *by_id
                    .get(&id)
                    .ok_or_else(|| Error::External(format!("missing_id {id}")))?;
                if !(0.0..=1.0).contains(&s) {
                    log::warn!("external score {s} for id {id} clamped to [0,1]");
                }
                Ok(s.clamp(0.0, 1.0))
            })
            .collect()
    }
}

impl PairScorer for ExternalScorer {
    fn score_pairs(&self, pairs: &[(&Sentence, &Sentence)]) -> Result<Vec<f64>> {
        let raw: Vec<(&str, &str)> = pairs
            .iter()
            .map(|(p, r)| (p.raw.as_str(), r.raw.as_str()))
            .collect();
        self.score_batch(&raw)
    }
}
