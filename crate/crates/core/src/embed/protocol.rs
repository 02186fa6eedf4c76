//! Framed stdio protocol spoken with external embedders.
//!
//! Every frame is a 4-byte tag, a little-endian `u32` header length, a JSON
//! header, then an optional `f32` little-endian payload whose length the
//! header determines:
//!
//! | tag    | direction      | header                                   | payload            |
//! |--------|----------------|------------------------------------------|--------------------|
//! | `APHI` | bridge → host  | `{"embedder_id", "dim", "input_rate"}`    | none               |
//! | `APRQ` | host → bridge  | `{"id", "sample_rate", "num_samples"}`    | `num_samples` PCM  |
//! | `APRS` | bridge → host  | `{"id", "dim"}`                           | `dim` values       |
//! | `APER` | bridge → host  | `{"id", "message"}`                       | none               |
//!
//! The bridge sends `APHI` once on startup and answers requests in order.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::EmbedError;

pub const HELLO: &[u8; 4] = b"APHI";
pub const REQUEST: &[u8; 4] = b"APRQ";
pub const RESPONSE: &[u8; 4] = b"APRS";
pub const ERROR: &[u8; 4] = b"APER";

const MAX_HEADER: u32 = 1 << 20;
const MAX_VALUES: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub embedder_id: String,
    pub dim: usize,
    pub input_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestHeader {
    pub id: u64,
    pub sample_rate: u32,
    pub num_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseHeader {
    pub id: u64,
    pub dim: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHeader {
    pub id: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Hello(Hello),
    Request { id: u64, sample_rate: u32, samples: Vec<f32> },
    Response { id: u64, vector: Vec<f32> },
    Error(ErrorHeader),
}

fn write_raw<W: Write>(w: &mut W, tag: &[u8; 4], header: &[u8], payload: &[f32]) -> io::Result<()> {
    w.write_all(tag)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header)?;
    let mut bytes = Vec::with_capacity(payload.len() * 4);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    match frame {
        Frame::Hello(h) => write_raw(w, HELLO, &json(h), &[]),
        Frame::Request {
            id,
            sample_rate,
            samples,
        } => {
            let header = RequestHeader {
                id: *id,
                sample_rate: *sample_rate,
                num_samples: samples.len() as u64,
            };
            write_raw(w, REQUEST, &json(&header), samples)
        }
        Frame::Response { id, vector } => {
            let header = ResponseHeader {
                id: *id,
                dim: vector.len() as u64,
            };
            write_raw(w, RESPONSE, &json(&header), vector)
        }
        Frame::Error(e) => write_raw(w, ERROR, &json(e), &[]),
    }
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("protocol headers are always serializable")
}

/// Fills `buf` completely. `Ok(false)` on EOF before the first byte.
fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, EmbedError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(EmbedError::Protocol("stream ended mid-frame".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(EmbedError::Bridge(format!("read failed: {e}"))),
        }
    }
    Ok(true)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), EmbedError> {
    if buf.is_empty() || read_exact_or_eof(r, buf)? {
        Ok(())
    } else {
        Err(EmbedError::Protocol("stream ended mid-frame".into()))
    }
}

fn read_floats<R: Read>(r: &mut R, n: u64) -> Result<Vec<f32>, EmbedError> {
    if n > MAX_VALUES {
        return Err(EmbedError::Protocol(format!("payload of {n} values is too large")));
    }
    let mut bytes = vec![0u8; n as usize * 4];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

fn parse<T: serde::de::DeserializeOwned>(tag: &str, bytes: &[u8]) -> Result<T, EmbedError> {
    serde_json::from_slice(bytes).map_err(|e| EmbedError::Protocol(format!("bad {tag} header: {e}")))
}

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, EmbedError> {
    let mut tag = [0u8; 4];
    if !read_exact_or_eof(r, &mut tag)? {
        return Ok(None);
    }
    let mut len = [0u8; 4];
    read_exact(r, &mut len)?;
    let len = u32::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(EmbedError::Protocol(format!("header of {len} bytes is too large")));
    }
    let mut header = vec![0u8; len as usize];
    read_exact(r, &mut header)?;
    let frame = match &tag {
        HELLO => Frame::Hello(parse("APHI", &header)?),
        REQUEST => {
            let h: RequestHeader = parse("APRQ", &header)?;
            Frame::Request {
                id: h.id,
                sample_rate: h.sample_rate,
                samples: read_floats(r, h.num_samples)?,
            }
        }
        RESPONSE => {
            let h: ResponseHeader = parse("APRS", &header)?;
            Frame::Response {
                id: h.id,
                vector: read_floats(r, h.dim)?,
            }
        }
        ERROR => Frame::Error(parse("APER", &header)?),
        other => {
            return Err(EmbedError::Protocol(format!(
                "unknown frame tag {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    Ok(Some(frame))
}
