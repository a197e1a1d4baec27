//! Frame layout (little-endian):
//!
//! ```text
//! u32 len | u8 kind | u64 round | payload
//! ```
//!
//! `len` counts everything after itself. Vectors are raw `f64`s filling the
//! rest of the payload.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const HELLO: u8 = 0;
pub const ASSIGN: u8 = 1;
pub const MODEL: u8 = 2;
pub const GRADIENT: u8 = 3;
pub const STOP: u8 = 4;

/// Frames larger than this are rejected.
pub const MAX_FRAME: usize = (1 << 31) - 1;

const HEADER: usize = 1 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerAssignment {
    pub worker_id: u32,
    pub block_id: u32,
    /// Component indices, one per task.
    pub indices: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Worker introduces itself.
    Hello {
        worker_id: u32,
    },
    Assign(WorkerAssignment),
    Model {
        x: Vec<f64>,
    },
    Gradient {
        worker_id: u32,
        block_id: u32,
        y: Vec<f64>,
    },
    Stop,
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::Hello { .. } => HELLO,
            Message::Assign(_) => ASSIGN,
            Message::Model { .. } => MODEL,
            Message::Gradient { .. } => GRADIENT,
            Message::Stop => STOP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub round: u64,
    pub msg: Message,
}

impl Frame {
    pub fn new(round: u64, msg: Message) -> Self {
        Self { round, msg }
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(frame: &Frame) -> Result<Vec<u8>> {
    let mut body = Vec::with_capacity(HEADER + 16);
    body.push(frame.msg.kind());
    body.extend_from_slice(&frame.round.to_le_bytes());
    match &frame.msg {
        Message::Hello { worker_id } => body.extend_from_slice(&worker_id.to_le_bytes()),
        Message::Assign(a) => {
            body.extend_from_slice(&a.worker_id.to_le_bytes());
            body.extend_from_slice(&a.block_id.to_le_bytes());
            body.extend_from_slice(&(a.indices.len() as u32).to_le_bytes());
            for i in &a.indices {
                body.extend_from_slice(&i.to_le_bytes());
            }
        }
        Message::Model { x } => put_f64s(&mut body, x),
        Message::Gradient { worker_id, block_id, y } => {
            body.extend_from_slice(&worker_id.to_le_bytes());
            body.extend_from_slice(&block_id.to_le_bytes());
            put_f64s(&mut body, y);
        }
        Message::Stop => {}
    }
    if body.len() > MAX_FRAME {
        return Err(Error::Protocol(format!(
            "frame of {} bytes exceeds the limit",
            body.len()
        )));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend(body);
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Protocol("payload shorter than its fields".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        if self.buf.len() % 8 != 0 {
            return Err(Error::Protocol(format!(
                "vector payload of {} bytes is not a multiple of 8",
                self.buf.len()
            )));
        }
        let v = self
            .buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.buf = &[];
        Ok(v)
    }

    fn done(&self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Protocol(format!("{} trailing payload bytes", self.buf.len())))
        }
    }
}

/// Decodes a frame body (everything after the length prefix).
pub fn decode_body(body: &[u8]) -> Result<Frame> {
    if body.len() < HEADER {
        return Err(Error::Protocol(format!(
            "frame body of {} bytes is truncated",
            body.len()
        )));
    }
    let kind = body[0];
    let round = u64::from_le_bytes(body[1..9].try_into().unwrap());
    let mut c = Cursor { buf: &body[HEADER..] };
    let msg = match kind {
        HELLO => Message::Hello { worker_id: c.u32()? },
        ASSIGN => {
            let worker_id = c.u32()?;
            let block_id = c.u32()?;
            let count = c.u32()? as usize;
            if c.buf.len() != 4 * count {
                return Err(Error::Protocol(format!(
                    "assignment declares {count} indices, payload has {} bytes",
                    c.buf.len()
                )));
            }
            let indices = (0..count).map(|_| c.u32()).collect::<Result<_>>()?;
            Message::Assign(WorkerAssignment {
                worker_id,
                block_id,
                indices,
            })
        }
        MODEL => Message::Model { x: c.f64s()? },
        GRADIENT => Message::Gradient {
            worker_id: c.u32()?,
            block_id: c.u32()?,
            y: c.f64s()?,
        },
        STOP => Message::Stop,
        other => return Err(Error::Protocol(format!("unknown message kind {other}"))),
    };
    c.done()?;
    Ok(Frame { round, msg })
}

/// Decodes one complete frame including its length prefix.
pub fn decode(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 4 {
        return Err(Error::Protocol("truncated length prefix".into()));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() - 4 != len {
        return Err(Error::Protocol(format!(
            "length prefix says {len} bytes, got {}",
            bytes.len() - 4
        )));
    }
    decode_body(&bytes[4..])
}

/// Reads one frame. `Ok(None)` on a clean end of stream before a new frame.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame length {len} exceeds the limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Protocol("connection closed mid-frame".into())
        } else {
            e.into()
        }
    })?;
    decode_body(&body).map(Some)
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<()> {
    w.write_all(&encode(frame)?)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(f: Frame) {
        let bytes = encode(&f).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back, f);
        let mut r = &bytes[..];
        assert_eq!(read_frame(&mut r).unwrap(), Some(f));
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn fixed_messages_round_trip() {
        round_trip(Frame::new(9, Message::Stop));
        round_trip(Frame::new(
            3,
            Message::Gradient {
                worker_id: 1,
                block_id: 0,
                y: vec![0.5, -1.25],
            },
        ));
        round_trip(Frame::new(0, Message::Hello { worker_id: 7 }));
        round_trip(Frame::new(
            0,
            Message::Assign(WorkerAssignment {
                worker_id: 2,
                block_id: 1,
                indices: vec![2, 3],
            }),
        ));
        round_trip(Frame::new(u64::MAX, Message::Model { x: vec![] }));
    }

    #[test]
    fn stop_layout() {
        let bytes = encode(&Frame::new(2, Message::Stop)).unwrap();
        assert_eq!(bytes, [9, 0, 0, 0, STOP, 2, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn malformed_frames() {
        let good = encode(&Frame::new(1, Message::Model { x: vec![1.0] })).unwrap();
        assert!(decode(&good[..good.len() - 1]).is_err());
        let mut bad_kind = good.clone();
        bad_kind[4] = 42;
        assert!(decode(&bad_kind).is_err());
        // vector not a multiple of 8 bytes
        let mut ragged = good.clone();
        ragged.push(0);
        ragged[0] += 1;
        assert!(decode(&ragged).is_err());
        // assignment count disagrees with payload
        let mut a = encode(&Frame::new(
            0,
            Message::Assign(WorkerAssignment {
                worker_id: 0,
                block_id: 0,
                indices: vec![0],
            }),
        ))
        .unwrap();
        a[4 + HEADER + 8] = 2;
        assert!(decode(&a).is_err());
        let mut r = &good[..6];
        assert!(read_frame(&mut r).is_err());
    }
}
