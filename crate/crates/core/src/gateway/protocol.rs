//! Length-prefixed frames over TCP.
//!
//! A frame is `[u32 BE body length][u8 tag][body]`. Bodies are UTF-8 text
//! except RESULT frames that carry a sealed query reply.
//!
//! | tag | name   | client body                   | server body                            |
//! |-----|--------|-------------------------------|----------------------------------------|
//! | 1   | LOGIN  | `tenant\tuser\tpassword`      |                                        |
//! | 2   | KEYREQ | empty                         |                                        |
//! | 3   | QUERY  | envelope wire string          |                                        |
//! | 4   | RESULT |                               | LOGIN: user id; KEYREQ: `sid\thex key`; QUERY: timings (24 bytes) + sealed reply |
//! | 5   | ERROR  |                               | message                                |

use std::io::{self, Read, Write};

use thiserror::Error;

use super::Timings;

pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    Login = 1,
    KeyRequest = 2,
    Query = 3,
    Result = 4,
    Error = 5,
}

impl TryFrom<u8> for Tag {
    type Error = ProtocolError;

    fn try_from(b: u8) -> Result<Self, ProtocolError> {
        Ok(match b {
            1 => Tag::Login,
            2 => Tag::KeyRequest,
            3 => Tag::Query,
            4 => Tag::Result,
            5 => Tag::Error,
            other => return Err(ProtocolError::UnknownTag(other)),
        })
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("unknown frame tag {0}")]
    UnknownTag(u8),
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: Tag,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn new(tag: Tag, body: impl Into<Vec<u8>>) -> Self {
        Self { tag, body: body.into() }
    }

    pub fn text(&self) -> Result<&str, ProtocolError> {
        std::str::from_utf8(&self.body).map_err(|_| ProtocolError::Malformed("body is not UTF-8"))
    }
}

pub fn write_frame<W: Write>(w: &mut W, f: &Frame) -> Result<(), ProtocolError> {
    if f.body.len() > MAX_FRAME {
        return Err(ProtocolError::TooLarge(f.body.len()));
    }
    let mut buf = Vec::with_capacity(f.body.len() + 5);
    buf.extend_from_slice(&(f.body.len() as u32).to_be_bytes());
    buf.push(f.tag as u8);
    buf.extend_from_slice(&f.body);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, ProtocolError> {
    let mut head = [0u8; 5];
    let mut got = 0;
    while got < head.len() {
        match r.read(&mut head[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(ProtocolError::Malformed("truncated header")),
            n => got += n,
        }
    }
    let len = u32::from_be_bytes(head[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME {
        return Err(ProtocolError::TooLarge(len));
    }
    let tag = Tag::try_from(head[4])?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(Frame { tag, body }))
}

pub fn encode_query_result(timings: &Timings, sealed: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + sealed.len());
    for v in [timings.access_us, timings.activate_us, timings.deactivate_us] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(sealed);
    out
}

pub fn decode_query_result(body: &[u8]) -> Result<(Timings, &[u8]), ProtocolError> {
    if body.len() < 24 {
        return Err(ProtocolError::Malformed("short query result"));
    }
    let word = |i: usize| u64::from_be_bytes(body[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
    Ok((Timings { access_us: word(0), activate_us: word(1), deactivate_us: word(2) }, &body[24..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &Frame::new(Tag::Query, "hello")).unwrap();
        write_frame(&mut buf, &Frame::new(Tag::KeyRequest, Vec::new())).unwrap();
        assert_eq!(&buf[..5], &[0, 0, 0, 5, 3]);
        let mut r = buf.as_slice();
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), Frame::new(Tag::Query, "hello"));
        assert_eq!(read_frame(&mut r).unwrap().unwrap().tag, Tag::KeyRequest);
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn rejects_bad_frames() {
        let mut r: &[u8] = &[0xff, 0xff, 0xff, 0xff, 1];
        assert!(matches!(read_frame(&mut r), Err(ProtocolError::TooLarge(_))));
        let mut r: &[u8] = &[0, 0, 0, 0, 9];
        assert!(matches!(read_frame(&mut r), Err(ProtocolError::UnknownTag(9))));
        let mut r: &[u8] = &[0, 0];
        assert!(matches!(read_frame(&mut r), Err(ProtocolError::Malformed(_))));
        let mut r: &[u8] = &[0, 0, 0, 4, 1, b'a'];
        assert!(matches!(read_frame(&mut r), Err(ProtocolError::Io(_))));
    }

    #[test]
    fn query_result_roundtrip() {
        let t = Timings { access_us: 1, activate_us: 2, deactivate_us: 3 };
        let body = encode_query_result(&t, b"xyz");
        assert_eq!(decode_query_result(&body).unwrap(), (t, &b"xyz"[..]));
    }
}
