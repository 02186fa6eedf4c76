//! Stem transforms delegated to a child process.
//!
//! The command runs under `sh -c`, receives the stem as a 32-bit float mono
//! WAV on stdin and must write a WAV of the same length and rate to stdout,
//! exiting 0.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;

use super::PerturbError;
use crate::audio::{decode_wav, encode_wav, WavFormat, Window};

pub fn external_transform(stem: &Window, command: &str) -> Result<Window, PerturbError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| PerturbError::CommandFailed(format!("cannot start `{command}`: {e}")))?;

    let input = encode_wav(&stem.buffer, WavFormat::Float32);
    let mut stdin = child.stdin.take().expect("stdin is piped");
    // Written from a separate thread so a child that streams output before
    // consuming all of its input cannot deadlock us.
    let writer = thread::spawn(move || {
        // A child that exits early closes the pipe; its exit status reports that.
        let _ = stdin.write_all(&input);
    });
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let err_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let mut output = Vec::new();
    child
        .stdout
        .take()
        .expect("stdout is piped")
        .read_to_end(&mut output)
        .map_err(|e| PerturbError::CommandFailed(format!("reading output of `{command}`: {e}")))?;
    let status = child
        .wait()
        .map_err(|e| PerturbError::CommandFailed(format!("waiting for `{command}`: {e}")))?;
    let _ = writer.join();
    let stderr_text = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(PerturbError::CommandFailed(format!(
            "`{command}` exited with {status}: {}",
            stderr_text.trim()
        )));
    }
    let buffer = decode_wav(&output)
        .map_err(|e| PerturbError::CommandFailed(format!("`{command}` produced bad WAV: {e}")))?;
    if buffer.len() != stem.len() || buffer.sample_rate() != stem.sample_rate() {
        return Err(PerturbError::LengthMismatch {
            expected: (stem.len(), stem.sample_rate()),
            actual: (buffer.len(), buffer.sample_rate()),
        });
    }
    Ok(stem.with_buffer(buffer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{extract_window, AudioBuffer};

    fn stem() -> Window {
        let s: Vec<f32> = (0..4800).map(|i| ((i as f32) * 0.03).sin() * 0.4).collect();
        extract_window(&AudioBuffer::new(s, 48_000).unwrap(), 0.0, 0.1).unwrap()
    }

    #[test]
    fn identity_command_returns_input() {
        let w = stem();
        assert_eq!(external_transform(&w, "cat").unwrap(), w);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let short = encode_wav(&AudioBuffer::silence(100, 48_000), WavFormat::Float32);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.wav");
        std::fs::write(&path, short).unwrap();
        let cmd = format!("cat > /dev/null; cat {}", path.display());
        assert!(matches!(
            external_transform(&stem(), &cmd),
            Err(PerturbError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn nonzero_exit_is_reported() {
        assert!(matches!(
            external_transform(&stem(), "cat > /dev/null; echo boom >&2; exit 3"),
            Err(PerturbError::CommandFailed(m)) if m.contains("boom")
        ));
    }
}
