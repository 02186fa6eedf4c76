//! Client side of the external embedder bridge.

use std::io::{BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{read_frame, write_frame, Frame};
use super::{EmbedError, Embedder, EmbedderSpec};
use crate::audio::AudioBuffer;

pub const DEFAULT_BRIDGE_TIMEOUT_S: f64 = 60.0;
const TIMEOUT_ENV: &str = "APA_BRIDGE_TIMEOUT_S";

/// A running bridge process. One batch is in flight at a time; run several
/// clients for parallelism.
pub struct BridgeClient {
    spec: EmbedderSpec,
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    frames: Receiver<Result<Frame, EmbedError>>,
    next_id: u64,
    timeout: Duration,
    broken: bool,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("spec", &self.spec)
            .field("pid", &self.child.id())
            .finish()
    }
}

fn timeout_from_env() -> Duration {
    let secs = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
        .unwrap_or(DEFAULT_BRIDGE_TIMEOUT_S);
    Duration::from_secs_f64(secs)
}

impl BridgeClient {
    /// Starts `command` under `sh -c` and waits for its handshake. The batch
    /// timeout comes from `APA_BRIDGE_TIMEOUT_S` (default 60 s).
    pub fn spawn(command: &str) -> Result<Self, EmbedError> {
        Self::spawn_with_timeout(command, timeout_from_env())
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self, EmbedError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        // Own process group, so killing it also reaches whatever the shell
        // started.
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd
            .spawn()
            .map_err(|e| EmbedError::Bridge(format!("cannot start `{command}`: {e}")))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take().expect("stdin is piped");

        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let item = match read_frame(&mut reader) {
                    Ok(Some(frame)) => Ok(frame),
                    Ok(None) => Err(EmbedError::Bridge("bridge closed its output".into())),
                    Err(e) => Err(e),
                };
                let stop = item.is_err();
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        });

        let mut client = BridgeClient {
            spec: EmbedderSpec {
                id: String::new(),
                dim: 0,
                input_rate: 0,
            },
            child,
            stdin: Some(BufWriter::new(stdin)),
            frames: rx,
            next_id: 0,
            timeout,
            broken: false,
        };
        let deadline = Instant::now() + timeout;
        match client.next_frame(deadline)? {
            Frame::Hello(hello) => {
                if hello.dim == 0 || hello.input_rate == 0 {
                    return Err(client.fail(EmbedError::Protocol(format!(
                        "handshake declares dim {} at {} Hz",
                        hello.dim, hello.input_rate
                    ))));
                }
                client.spec = EmbedderSpec {
                    id: hello.embedder_id,
                    dim: hello.dim,
                    input_rate: hello.input_rate,
                };
                Ok(client)
            }
            other => Err(client.fail(EmbedError::Protocol(format!(
                "expected APHI handshake, got {}",
                frame_name(&other)
            )))),
        }
    }

    fn fail(&mut self, e: EmbedError) -> EmbedError {
        self.broken = true;
        self.kill();
        e
    }

    fn kill(&mut self) {
        #[cfg(unix)]
        if let Ok(pid) = libc::pid_t::try_from(self.child.id()) {
            // SAFETY: signals the process group created at spawn time.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
    }

    fn next_frame(&mut self, deadline: Instant) -> Result<Frame, EmbedError> {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.frames.recv_timeout(wait) {
            Ok(Ok(frame)) => Ok(frame),
            Ok(Err(e)) => Err(self.fail(e)),
            Err(RecvTimeoutError::Timeout) => {
                let t = self.timeout;
                Err(self.fail(EmbedError::Timeout(t)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(self.fail(EmbedError::Bridge("bridge output reader stopped".into())))
            }
        }
    }

    fn run_batch(&mut self, windows: &[AudioBuffer]) -> Result<Vec<Vec<f32>>, EmbedError> {
        if self.broken {
            return Err(EmbedError::Bridge("bridge is unusable after an earlier failure".into()));
        }
        let first_id = self.next_id;
        self.next_id += windows.len() as u64;
        let deadline = Instant::now() + self.timeout;
        let mut stdin = self.stdin.take().expect("stdin present while not broken");

        // Requests go out from a helper thread so a stalled bridge cannot
        // block us past the deadline; its responses are drained concurrently.
        let (stdin, result) = thread::scope(|scope| {
            let writer = scope.spawn(move || {
                let mut res = Ok(());
                for (i, w) in windows.iter().enumerate() {
                    let frame = Frame::Request {
                        id: first_id + i as u64,
                        sample_rate: w.sample_rate(),
                        samples: w.samples().to_vec(),
                    };
                    res = write_frame(&mut stdin, &frame);
                    if res.is_err() {
                        break;
                    }
                }
                let res = res.and_then(|_| stdin.flush());
                (stdin, res)
            });

            let mut rows = Vec::with_capacity(windows.len());
            let mut failure = None;
            for i in 0..windows.len() {
                let expected = first_id + i as u64;
                match self.next_frame(deadline) {
                    Ok(Frame::Response { id, vector }) if id == expected => rows.push(vector),
                    Ok(Frame::Response { id, .. }) => {
                        failure = Some(self.fail(EmbedError::Protocol(format!(
                            "response id {id} where {expected} was due"
                        ))));
                        break;
                    }
                    Ok(Frame::Error(e)) => {
                        failure = Some(self.fail(EmbedError::Bridge(format!(
                            "request {} rejected: {}",
                            e.id, e.message
                        ))));
                        break;
                    }
                    Ok(other) => {
                        failure = Some(self.fail(EmbedError::Protocol(format!(
                            "unexpected {} frame",
                            frame_name(&other)
                        ))));
                        break;
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            let (stdin, write_result) = writer.join().expect("writer thread does not panic");
            let result = match (failure, write_result) {
                (Some(e), _) => Err(e),
                (None, Err(e)) => Err(self.fail(EmbedError::Bridge(format!("write failed: {e}")))),
                (None, Ok(())) => Ok(rows),
            };
            (stdin, result)
        });
        self.stdin = Some(stdin);
        result
    }
}

fn frame_name(f: &Frame) -> &'static str {
    match f {
        Frame::Hello(_) => "APHI",
        Frame::Request { .. } => "APRQ",
        Frame::Response { .. } => "APRS",
        Frame::Error(_) => "APER",
    }
}

impl Embedder for BridgeClient {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_batch(&mut self, windows: &[AudioBuffer]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let rows = self.run_batch(windows)?;
        if let Some(r) = rows.iter().find(|r| r.len() != self.spec.dim) {
            return Err(EmbedError::DimensionMismatch {
                expected: self.spec.dim,
                actual: r.len(),
            });
        }
        Ok(rows)
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        // Closing stdin asks a well-behaved bridge to exit.
        drop(self.stdin.take());
        let deadline = Instant::now() + Duration::from_millis(500);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => break,
            }
        }
        self.kill();
        let _ = self.child.wait();
    }
}
