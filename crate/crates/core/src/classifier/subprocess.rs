//! Line-oriented JSON bridge to an external classifier process.
//!
//! Request (engine to child, one line on stdin):
//! `{"id": 7, "wav_path": "/tmp/adjfree-XXXX.wav"}`
//!
//! Reply (child to engine, one line on stdout):
//! `{"id": 7, "confidences": {"yes": 0.9, "no": 0.1}}`
//!
//! Each child handles one request at a time. Replies whose confidences sum
//! to 1 within [`REPLY_SUM_TOLERANCE`] are renormalized; anything further
//! off is rejected. A child that times out or answers garbage is killed and
//! respawned on the next request.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{ClassificationResult, Classifier, ClassifierError};
use crate::audio::{encode_wav, Waveform};

/// Directory override for the WAV files handed to the child.
pub const TMPDIR_ENV: &str = "ADJFREE_TMPDIR";

pub const REPLY_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SubprocessConfig {
    /// Shell command line that starts the classifier.
    pub command: String,
    pub timeout: Duration,
    /// Number of child processes serving requests concurrently.
    pub pool_size: usize,
    /// Where request WAVs are written; falls back to `$ADJFREE_TMPDIR`, then
    /// the system temp directory.
    pub tmpdir: Option<PathBuf>,
}

impl SubprocessConfig {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            timeout: Duration::from_secs(10),
            pool_size: 1,
            tmpdir: None,
        }
    }

    fn exchange_dir(&self) -> PathBuf {
        self.tmpdir
            .clone()
            .or_else(|| std::env::var_os(TMPDIR_ENV).map(PathBuf::from))
            .unwrap_or_else(std::env::temp_dir)
    }
}

#[derive(Deserialize)]
struct Reply {
    id: u64,
    confidences: BTreeMap<String, f64>,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &str) -> Result<Self, ClassifierError> {
        let mut cmd = if cfg!(windows) {
            let mut c = Command::new("cmd");
            c.arg("/C").arg(command);
            c
        } else {
            let mut c = Command::new("sh");
            c.arg("-c").arg(command);
            c
        };
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ClassifierError::Spawn {
                command: command.to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
        })
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct SubprocessClassifier {
    cfg: SubprocessConfig,
    slots: Vec<Mutex<Option<Worker>>>,
    next_id: AtomicU64,
    next_slot: AtomicUsize,
}

impl std::fmt::Debug for SubprocessClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubprocessClassifier")
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

impl SubprocessClassifier {
    /// Starts the configured number of children eagerly so that a bad
    /// command fails here rather than on the first query.
    pub fn spawn(cfg: SubprocessConfig) -> Result<Self, ClassifierError> {
        if cfg.pool_size == 0 {
            return Err(ClassifierError::InvalidSetup(
                "pool_size must be >= 1".into(),
            ));
        }
        let slots = (0..cfg.pool_size)
            .map(|_| Worker::spawn(&cfg.command).map(|w| Mutex::new(Some(w))))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            cfg,
            slots,
            next_id: AtomicU64::new(0),
            next_slot: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &SubprocessConfig {
        &self.cfg
    }

    fn request(
        &self,
        slot: &mut Option<Worker>,
        id: u64,
        wav_path: &str,
    ) -> Result<ClassificationResult, ClassifierError> {
        if slot.is_none() {
            *slot = Some(Worker::spawn(&self.cfg.command)?);
        }
        let worker = slot.as_mut().expect("spawned above");
        let line = serde_json::json!({ "id": id, "wav_path": wav_path }).to_string();
        if writeln!(worker.stdin, "{line}")
            .and_then(|_| worker.stdin.flush())
            .is_err()
        {
            return Err(ClassifierError::ProcessExited(id));
        }

        let deadline = Instant::now() + self.cfg.timeout;
        let reply = match worker
            .lines
            .recv_timeout(deadline.saturating_duration_since(Instant::now()))
        {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(ClassifierError::Io(e)),
            Err(RecvTimeoutError::Timeout) => {
                return Err(ClassifierError::Timeout {
                    id,
                    seconds: self.cfg.timeout.as_secs_f64(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => return Err(ClassifierError::ProcessExited(id)),
        };

        let reply: Reply = serde_json::from_str(reply.trim())
            .map_err(|e| ClassifierError::MalformedReply(format!("{e}: `{}`", reply.trim())))?;
        if reply.id != id {
            return Err(ClassifierError::MalformedReply(format!(
                "reply id {} does not match request id {id}",
                reply.id
            )));
        }
        ClassificationResult::normalized(reply.confidences, REPLY_SUM_TOLERANCE)
    }
}

impl Classifier for SubprocessClassifier {
    fn classify(&self, w: &Waveform) -> Result<ClassificationResult, ClassifierError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);

        let mut file = tempfile::Builder::new()
            .prefix("adjfree-")
            .suffix(".wav")
            .tempfile_in(self.cfg.exchange_dir())?;
        file.write_all(&encode_wav(w)?)?;
        file.flush()?;
        let path = file.path().to_string_lossy().into_owned();

        // Prefer an idle child; otherwise queue on one round-robin.
        let guard = self
            .slots
            .iter()
            .find_map(|s| s.try_lock().ok())
            .unwrap_or_else(|| {
                let i = self.next_slot.fetch_add(1, Ordering::Relaxed) % self.slots.len();
                self.slots[i].lock().unwrap_or_else(|p| p.into_inner())
            });
        let mut guard = guard;
        let result = self.request(&mut guard, id, &path);
        if matches!(
            result,
            Err(ClassifierError::Timeout { .. })
                | Err(ClassifierError::MalformedReply(_))
                | Err(ClassifierError::ProcessExited(_))
                | Err(ClassifierError::Io(_))
        ) {
            // the child's stream is no longer in a known state
            *guard = None;
        }
        result
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    const ECHO: &str = r#"while read -r line; do id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/'); printf '{"id":%s,"confidences":{"no":0.25,"yes":0.75}}\n' "$id"; done"#;

    fn cfg(cmd: &str, timeout_ms: u64) -> SubprocessConfig {
        SubprocessConfig {
            timeout: Duration::from_millis(timeout_ms),
            ..SubprocessConfig::new(cmd)
        }
    }

    fn clip() -> Waveform {
        Waveform::new(vec![0.0, 0.1, -0.1, 0.2], 8000).unwrap()
    }

    #[test]
    fn echo_protocol_round_trip() {
        let c = SubprocessClassifier::spawn(cfg(ECHO, 5000)).unwrap();
        for _ in 0..3 {
            let r = c.classify(&clip()).unwrap();
            assert_eq!(r.predicted(), "yes");
            assert_eq!(r.confidence_of("no").unwrap(), 0.25);
        }
    }

    #[test]
    fn garbage_reply_is_malformed() {
        let c = SubprocessClassifier::spawn(cfg("while read -r l; do echo not-json; done", 5000))
            .unwrap();
        assert!(matches!(
            c.classify(&clip()),
            Err(ClassifierError::MalformedReply(_))
        ));
    }

    #[test]
    fn wrong_id_is_malformed() {
        let cmd = r#"while read -r l; do echo '{"id":999,"confidences":{"a":0.5,"b":0.5}}'; done"#;
        let c = SubprocessClassifier::spawn(cfg(cmd, 5000)).unwrap();
        assert!(matches!(
            c.classify(&clip()),
            Err(ClassifierError::MalformedReply(_))
        ));
    }

    #[test]
    fn silent_child_times_out() {
        let c = SubprocessClassifier::spawn(cfg("sleep 30", 200)).unwrap();
        let t = Instant::now();
        assert!(matches!(
            c.classify(&clip()),
            Err(ClassifierError::Timeout { id: 0, .. })
        ));
        assert!(t.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn exiting_child_is_reported() {
        let c = SubprocessClassifier::spawn(cfg("read -r l; exit 0", 5000)).unwrap();
        assert!(matches!(
            c.classify(&clip()),
            Err(ClassifierError::ProcessExited(0))
        ));
    }

    #[test]
    fn bad_sums_are_rejected() {
        let cmd = r#"while read -r l; do echo '{"id":0,"confidences":{"a":0.7,"b":0.5}}'; done"#;
        let c = SubprocessClassifier::spawn(cfg(cmd, 5000)).unwrap();
        assert!(matches!(
            c.classify(&clip()),
            Err(ClassifierError::InvalidConfidences(_))
        ));
    }
}
