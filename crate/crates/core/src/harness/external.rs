//! Classifier served by a child process over JSON Lines.
//!
//! Each request is one line on the child's stdin:
//!
//! ```text
//! {"id":<u64>,"shape":[T,H,W,C],"tensor":"<base64 f32 LE row-major>","label":"<token>"}
//! ```
//!
//! and the child answers every id exactly once, in any order, with
//! `{"id":<u64>,"confidence":<float in [0,1]>}` on its stdout.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::ClassifierError;
use crate::volume::{Classifier, ImageVolume, Label};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub shape: [usize; 4],
    pub tensor: String,
    pub label: String,
}

impl Request {
    pub fn new(id: u64, image: &ImageVolume, label: &Label) -> Self {
        let d = image.dims();
        let mut bytes = Vec::with_capacity(4 * image.data().len());
        for v in image.data() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        Self {
            id,
            shape: [d.frames, d.height, d.width, image.channels()],
            tensor: STANDARD.encode(bytes),
            label: label.to_string(),
        }
    }

    /// Decodes the tensor payload back into `f32` values.
    pub fn values(&self) -> Result<Vec<f32>, ClassifierError> {
        let bytes = STANDARD
            .decode(&self.tensor)
            .map_err(|e| ClassifierError::Protocol(format!("bad base64 tensor: {e}")))?;
        let expected: usize = self.shape.iter().product::<usize>() * 4;
        if bytes.len() != expected {
            return Err(ClassifierError::Protocol(format!(
                "tensor has {} bytes, shape needs {expected}",
                bytes.len()
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub confidence: f64,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl Session {
    fn spawn(argv: &[String]) -> Result<Self, ClassifierError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| ClassifierError::Other("empty classifier command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            next_id: 0,
        })
    }

    fn exit_error(&mut self) -> ClassifierError {
        match self.child.wait() {
            Ok(status) if !status.success() => {
                ClassifierError::NonZeroExit(status.code().unwrap_or(-1))
            }
            Ok(_) => {
                ClassifierError::Protocol("classifier closed its output before answering".into())
            }
            Err(e) => ClassifierError::Io(e),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A long-lived child process speaking the JSON Lines protocol.
pub struct ExternalClassifier {
    argv: Vec<String>,
    labels: Vec<Label>,
    timeout: Duration,
    session: Mutex<Option<Session>>,
}

impl ExternalClassifier {
    /// `argv[0]` is the program, the rest its arguments. The process is
    /// started lazily on first use and restarted after a failure. An empty
    /// `labels` accepts any label.
    pub fn new(argv: Vec<String>, labels: Vec<Label>, timeout: Duration) -> Self {
        Self {
            argv,
            labels,
            timeout,
            session: Mutex::new(None),
        }
    }

    fn exchange(
        &self,
        session: &mut Session,
        batch: &[&ImageVolume],
        label: &Label,
    ) -> Result<Vec<f64>, ClassifierError> {
        let first = session.next_id;
        session.next_id += batch.len() as u64;
        let mut wanted: HashMap<u64, usize> = HashMap::with_capacity(batch.len());
        let mut payload = String::new();
        for (k, image) in batch.iter().enumerate() {
            let id = first + k as u64;
            wanted.insert(id, k);
            payload.push_str(
                &serde_json::to_string(&Request::new(id, image, label)).expect("serializable"),
            );
            payload.push('\n');
        }
        if let Err(e) = session
            .stdin
            .write_all(payload.as_bytes())
            .and_then(|_| session.stdin.flush())
        {
            return Err(match session.child.try_wait() {
                Ok(Some(status)) if !status.success() => {
                    ClassifierError::NonZeroExit(status.code().unwrap_or(-1))
                }
                _ => ClassifierError::Io(e),
            });
        }

        let mut out = vec![f64::NAN; batch.len()];
        let deadline = Instant::now() + self.timeout;
        while !wanted.is_empty() {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match session.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(ClassifierError::Io(e)),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(ClassifierError::Timeout(self.timeout))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    if let Some(id) = wanted.keys().min() {
                        let err = session.exit_error();
                        return Err(match err {
                            ClassifierError::Protocol(_) => {
                                ClassifierError::Protocol(format!("no response for id {id}"))
                            }
                            other => other,
                        });
                    }
                    break;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp: Response = serde_json::from_str(&line).map_err(|e| {
                ClassifierError::Protocol(format!("malformed response `{line}`: {e}"))
            })?;
            let slot = wanted.remove(&resp.id).ok_or_else(|| {
                ClassifierError::Protocol(format!("unexpected or repeated id {}", resp.id))
            })?;
            if !(0.0..=1.0).contains(&resp.confidence) {
                return Err(ClassifierError::Protocol(format!(
                    "confidence {} for id {} is outside [0, 1]",
                    resp.confidence, resp.id
                )));
            }
            out[slot] = resp.confidence;
        }
        Ok(out)
    }
}

impl Classifier for ExternalClassifier {
    fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn evaluate(&self, batch: &[&ImageVolume], label: &Label) -> Result<Vec<f64>, ClassifierError> {
        if !self.labels.is_empty() && !self.labels.contains(label) {
            return Err(ClassifierError::UnknownLabel(label.to_string()));
        }
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let mut guard = self.session.lock().expect("classifier session poisoned");
        if guard.is_none() {
            *guard = Some(Session::spawn(&self.argv)?);
        }
        let result = self.exchange(guard.as_mut().unwrap(), batch, label);
        if result.is_err() {
            // A failed exchange leaves the stream in an unknown state.
            *guard = None;
        }
        result
    }

    fn is_serial(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    #[test]
    fn request_round_trips_tensor() {
        let img = ImageVolume::from_fn(Dims::new(2, 2, 3), 3, |n, y, x, c| {
            ((n + y + x + c) % 4) as f64 / 4.0
        })
        .unwrap();
        let req = Request::new(7, &img, &Label::new("cat").unwrap());
        assert_eq!(req.shape, [2, 2, 3, 3]);
        let line = serde_json::to_string(&req).unwrap();
        let back: Request = serde_json::from_str(&line).unwrap();
        let vals = back.values().unwrap();
        assert_eq!(vals.len(), 36);
        assert!(vals
            .iter()
            .zip(img.data())
            .all(|(a, b)| f64::from(*a) == *b));
    }
}
