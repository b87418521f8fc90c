//! Run-length mask encoding used on the wire.
//!
//! A mask is written row-major as space-separated `value:count` runs. The
//! first run always has value `0` (its count is `0` when the first pixel is
//! foreground); values then alternate and every later count is at least 1.
//! Counts sum to `width * height`. Example: a 3×2 mask `#.. / .##` encodes as
//! `0:0 1:1 0:3 1:2`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub fn encode(mask: &BinaryMask) -> String {
    let mut out = String::new();
    let mut value = false;
    let mut run = 0usize;
    for &b in mask.bits() {
        if b == value {
            run += 1;
        } else {
            push_run(&mut out, value, run);
            value = b;
            run = 1;
        }
    }
    push_run(&mut out, value, run);
    out
}

fn push_run(out: &mut String, value: bool, count: usize) {
    if !out.is_empty() {
        out.push(' ');
    }
    let _ = write!(out, "{}:{}", value as u8, count);
}

pub fn decode(width: usize, height: usize, rle: &str) -> Result<BinaryMask> {
    let total = width
        .checked_mul(height)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Rle(format!("invalid dimensions {width}x{height}")))?;
    let mut bits = Vec::with_capacity(total);
    let mut expected = false;
    for (i, token) in rle.split(' ').enumerate() {
        let (v, c) = token
            .split_once(':')
            .ok_or_else(|| Error::Rle(format!("run {i} ({token:?}) is not value:count")))?;
        let value = match v {
            "0" => false,
            "1" => true,
            _ => return Err(Error::Rle(format!("run {i} has value {v:?}"))),
        };
        if value != expected {
            return Err(Error::Rle(format!("run {i} does not alternate (starts with background)")));
        }
        let count: usize = c
            .parse()
            .map_err(|_| Error::Rle(format!("run {i} has count {c:?}")))?;
        if count == 0 && i > 0 {
            return Err(Error::Rle(format!("run {i} is empty")));
        }
        if bits.len() + count > total {
            return Err(Error::Rle(format!("runs exceed {total} pixels")));
        }
        bits.resize(bits.len() + count, value);
        expected = !expected;
    }
    if bits.len() != total {
        return Err(Error::Rle(format!("runs cover {} of {total} pixels", bits.len())));
    }
    BinaryMask::from_bits(width, height, bits)
}

/// Serialized form of a [`BinaryMask`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub rle: String,
}

impl From<BinaryMask> for RleMask {
    fn from(m: BinaryMask) -> Self {
        RleMask { width: m.width(), height: m.height(), rle: encode(&m) }
    }
}

impl TryFrom<RleMask> for BinaryMask {
    type Error = Error;

    fn try_from(w: RleMask) -> Result<Self> {
        decode(w.width, w.height, &w.rle)
    }
}
