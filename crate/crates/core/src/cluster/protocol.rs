//! Binary framing for master/worker messages.
//!
//! A frame is a big-endian `u32` length (tag byte plus payload), a one-byte
//! tag, then the fields in declared order. Strings and byte blobs carry a
//! `u32` length prefix, lists a `u32` count. Chunk ids travel as their
//! `source:offset_ms:generation` text.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::audio::ChunkId;

/// Frames larger than this are rejected before allocating.
pub const MAX_FRAME: usize = 256 * 1024 * 1024;

const HELLO: u8 = 0x01;
const WORK_REQUEST: u8 = 0x02;
const WORK_GRANT: u8 = 0x03;
const NO_MORE_WORK: u8 = 0x04;
const RESULT_PROCESSED: u8 = 0x05;
const RESULT_DELETED: u8 = 0x06;
const SHUTDOWN: u8 = 0x07;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello {
        worker_name: String,
        thread_count: u32,
    },
    WorkRequest {
        count: u32,
    },
    WorkGrant {
        chunk_id: ChunkId,
        wav_bytes: Vec<u8>,
    },
    NoMoreWork,
    ResultProcessed {
        original: ChunkId,
        outputs: Vec<(ChunkId, Vec<u8>)>,
        /// Stage name and elapsed microseconds.
        stage_us: Vec<(String, u32)>,
    },
    ResultDeleted {
        chunk_ids: Vec<ChunkId>,
        reasons: Vec<String>,
    },
    Shutdown,
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Hello { .. } => HELLO,
            Message::WorkRequest { .. } => WORK_REQUEST,
            Message::WorkGrant { .. } => WORK_GRANT,
            Message::NoMoreWork => NO_MORE_WORK,
            Message::ResultProcessed { .. } => RESULT_PROCESSED,
            Message::ResultDeleted { .. } => RESULT_DELETED,
            Message::Shutdown => SHUTDOWN,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("frame too short: need {needed} bytes, have {have}")]
    FrameTooShort { needed: usize, have: usize },
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("frame declares {declared} bytes but holds {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("malformed field: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct Enc(Vec<u8>);

impl Enc {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }
    fn id(&mut self, id: &ChunkId) {
        self.str(&id.to_string());
    }
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let mut e = Enc(vec![0, 0, 0, 0, msg.tag()]);
    match msg {
        Message::Hello {
            worker_name,
            thread_count,
        } => {
            e.str(worker_name);
            e.u32(*thread_count);
        }
        Message::WorkRequest { count } => e.u32(*count),
        Message::WorkGrant {
            chunk_id,
            wav_bytes,
        } => {
            e.id(chunk_id);
            e.bytes(wav_bytes);
        }
        Message::ResultProcessed {
            original,
            outputs,
            stage_us,
        } => {
            e.id(original);
            e.u32(outputs.len() as u32);
            for (id, wav) in outputs {
                e.id(id);
                e.bytes(wav);
            }
            e.u32(stage_us.len() as u32);
            for (name, us) in stage_us {
                e.str(name);
                e.u32(*us);
            }
        }
        Message::ResultDeleted { chunk_ids, reasons } => {
            e.u32(chunk_ids.len() as u32);
            for id in chunk_ids {
                e.id(id);
            }
            e.u32(reasons.len() as u32);
            for r in reasons {
                e.str(r);
            }
        }
        Message::NoMoreWork | Message::Shutdown => {}
    }
    let len = (e.0.len() - 4) as u32;
    e.0[..4].copy_from_slice(&len.to_be_bytes());
    e.0
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let have = self.buf.len() - self.pos;
        if n > have {
            return Err(ProtocolError::FrameTooShort {
                needed: self.pos + n,
                have: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
    fn str(&mut self) -> Result<String, ProtocolError> {
        String::from_utf8(self.bytes()?).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }
    fn id(&mut self) -> Result<ChunkId, ProtocolError> {
        self.str()?.parse().map_err(ProtocolError::Malformed)
    }
    /// List count, sanity-checked against the bytes left so a hostile count
    /// cannot trigger a huge allocation.
    fn count(&mut self, min_item: usize) -> Result<usize, ProtocolError> {
        let n = self.u32()? as usize;
        let left = self.buf.len() - self.pos;
        if n.saturating_mul(min_item) > left {
            return Err(ProtocolError::FrameTooShort {
                needed: self.pos.saturating_add(n.saturating_mul(min_item)),
                have: self.buf.len(),
            });
        }
        Ok(n)
    }
}

/// Decodes exactly one complete frame.
pub fn decode_message(frame: &[u8]) -> Result<Message, ProtocolError> {
    if frame.len() < 5 {
        return Err(ProtocolError::FrameTooShort {
            needed: 5,
            have: frame.len(),
        });
    }
    let declared = u32::from_be_bytes(frame[..4].try_into().expect("4 bytes")) as usize;
    if declared != frame.len() - 4 {
        return Err(ProtocolError::LengthMismatch {
            declared,
            actual: frame.len() - 4,
        });
    }
    let tag = frame[4];
    let mut d = Dec { buf: frame, pos: 5 };
    let msg = match tag {
        HELLO => Message::Hello {
            worker_name: d.str()?,
            thread_count: d.u32()?,
        },
        WORK_REQUEST => Message::WorkRequest { count: d.u32()? },
        WORK_GRANT => Message::WorkGrant {
            chunk_id: d.id()?,
            wav_bytes: d.bytes()?,
        },
        NO_MORE_WORK => Message::NoMoreWork,
        RESULT_PROCESSED => {
            let original = d.id()?;
            let n = d.count(8)?;
            let mut outputs = Vec::with_capacity(n);
            for _ in 0..n {
                outputs.push((d.id()?, d.bytes()?));
            }
            let n = d.count(8)?;
            let mut stage_us = Vec::with_capacity(n);
            for _ in 0..n {
                stage_us.push((d.str()?, d.u32()?));
            }
            Message::ResultProcessed {
                original,
                outputs,
                stage_us,
            }
        }
        RESULT_DELETED => {
            let n = d.count(4)?;
            let chunk_ids = (0..n).map(|_| d.id()).collect::<Result<Vec<_>, _>>()?;
            let n = d.count(4)?;
            let reasons = (0..n).map(|_| d.str()).collect::<Result<Vec<_>, _>>()?;
            if reasons.len() != chunk_ids.len() {
                return Err(ProtocolError::Malformed(format!(
                    "{} chunk ids but {} reasons",
                    chunk_ids.len(),
                    reasons.len()
                )));
            }
            Message::ResultDeleted { chunk_ids, reasons }
        }
        SHUTDOWN => Message::Shutdown,
        other => return Err(ProtocolError::UnknownTag(other)),
    };
    if d.pos != frame.len() {
        return Err(ProtocolError::LengthMismatch {
            declared,
            actual: d.pos - 4,
        });
    }
    Ok(msg)
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any byte of
/// a new frame.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) if got == 0 => return Err(e.into()),
            Err(e) => return Err(stalled(e)),
        }
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(ProtocolError::FrameTooLarge(n));
    }
    let mut frame = vec![0u8; 4 + n];
    frame[..4].copy_from_slice(&len);
    r.read_exact(&mut frame[4..]).map_err(stalled)?;
    Ok(Some(frame))
}

/// True for the error a socket read timeout produces.
pub fn is_timeout(e: &ProtocolError) -> bool {
    matches!(e, ProtocolError::Io(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
}

// A timeout inside a frame leaves the stream unusable, so it must not look
// like an idle timeout between frames.
fn stalled(e: io::Error) -> ProtocolError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => {
            io::Error::other(format!("stalled mid-frame: {e}")).into()
        }
        _ => e.into(),
    }
}

pub fn read_message(r: &mut impl Read) -> Result<Option<Message>, ProtocolError> {
    match read_frame(r)? {
        Some(f) => decode_message(&f).map(Some),
        None => Ok(None),
    }
}

/// Writes one message and returns the frame size in bytes.
pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<usize, ProtocolError> {
    let frame = encode_message(msg);
    w.write_all(&frame)?;
    w.flush()?;
    Ok(frame.len())
}
