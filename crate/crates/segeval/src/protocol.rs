//! Wire protocol `segeval-seg/1`.
//!
//! Every message is one JSON document. Over stdio each document is framed
//! like LSP, `Content-Length: <bytes>\r\n\r\n<json>`; over HTTP the same
//! request bodies are POSTed to `/handshake`, `/segment` and
//! `/segment_sequence`.
//!
//! Requests are `{"method": "...", "params": {...}}`; replies are
//! `{"ok": <result>}` or `{"error": "<message>"}`. Masks travel as
//! `{"width", "height", "rle"}` with the run-length form of
//! [`segeval_core::rle`].

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use segeval_core::segmenter::{Handshake, SegmentRequest, SegmentResponse, Segmenter, SequenceRequest};
use segeval_core::{BinaryMask, SegmenterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "snake_case")]
pub enum Request {
    Handshake,
    Segment(SegmentRequest),
    SegmentSequence(SequenceRequest),
}

impl Request {
    pub fn path(&self) -> &'static str {
        match self {
            Request::Handshake => "/handshake",
            Request::Segment(_) => "/segment",
            Request::SegmentSequence(_) => "/segment_sequence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply<T> {
    Ok(T),
    Error(String),
}

impl<T> Reply<T> {
    pub fn into_result(self) -> Result<T, SegmenterError> {
        match self {
            Reply::Ok(v) => Ok(v),
            Reply::Error(e) => Err(SegmenterError::Remote(e)),
        }
    }
}

fn reply<T: Serialize>(r: Result<T, SegmenterError>) -> Vec<u8> {
    let r = match r {
        Ok(v) => Reply::Ok(v),
        Err(e) => Reply::Error(e.to_string()),
    };
    serde_json::to_vec(&r).expect("reply serializes")
}

/// Server side: answers one request body with a reply body.
pub fn dispatch<S: Segmenter + ?Sized>(seg: &mut S, body: &[u8]) -> Vec<u8> {
    match serde_json::from_slice::<Request>(body) {
        Ok(Request::Handshake) => reply(seg.handshake()),
        Ok(Request::Segment(r)) => reply(seg.segment(&r)),
        Ok(Request::SegmentSequence(r)) => reply(seg.segment_sequence(&r)),
        Err(e) => reply::<()>(Err(SegmenterError::Malformed(format!("bad request: {e}")))),
    }
}

/// Same as [`dispatch`] for an HTTP route whose body is the bare params.
pub fn dispatch_route<S: Segmenter + ?Sized>(seg: &mut S, path: &str, body: &[u8]) -> Option<Vec<u8>> {
    let bad = |e: serde_json::Error| reply::<()>(Err(SegmenterError::Malformed(format!("bad request: {e}"))));
    Some(match path {
        "/handshake" => reply(seg.handshake()),
        "/segment" => match serde_json::from_slice::<SegmentRequest>(body) {
            Ok(r) => reply(seg.segment(&r)),
            Err(e) => bad(e),
        },
        "/segment_sequence" => match serde_json::from_slice::<SequenceRequest>(body) {
            Ok(r) => reply(seg.segment_sequence(&r)),
            Err(e) => bad(e),
        },
        _ => return None,
    })
}

pub fn decode_handshake(body: &[u8]) -> Result<Handshake, SegmenterError> {
    decode::<Handshake>(body)
}

pub fn decode_segment(body: &[u8]) -> Result<SegmentResponse, SegmenterError> {
    decode::<SegmentResponse>(body)
}

pub fn decode_sequence(body: &[u8]) -> Result<Vec<BinaryMask>, SegmenterError> {
    decode::<Vec<BinaryMask>>(body)
}

fn decode<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, SegmenterError> {
    serde_json::from_slice::<Reply<T>>(body)
        .map_err(|e| SegmenterError::Malformed(e.to_string()))?
        .into_result()
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    write!(w, "Content-Length: {}\r\n\r\n", body.len())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one framed message; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: BufRead>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len: Option<usize> = None;
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return if len.is_none() {
                Ok(None)
            } else {
                Err(io::Error::new(io::ErrorKind::UnexpectedEof, "stream ended inside a header"))
            };
        }
        let l = line.trim_end_matches(['\r', '\n']);
        if l.is_empty() {
            if len.is_some() {
                break;
            }
            continue;
        }
        let (k, v) = l
            .split_once(':')
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad header line {l:?}")))?;
        if k.trim().eq_ignore_ascii_case("content-length") {
            len = Some(v.trim().parse().map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad Content-Length"))?);
        }
    }
    let mut body = vec![0u8; len.expect("checked")];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

/// Serves framed requests until the input closes.
pub fn serve_stdio<S: Segmenter + ?Sized, R: BufRead, W: Write>(seg: &mut S, mut input: R, mut output: W) -> io::Result<()> {
    while let Some(body) = read_frame(&mut input)? {
        let out = dispatch(seg, &body);
        write_frame(&mut output, &out)?;
    }
    Ok(())
}
