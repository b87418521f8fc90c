//! Segmenter selection and a small pool of connected sessions.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use segeval_core::oracle::{EmptyOracle, EverythingOracle, GtEchoOracle, GtOracle, GtStore, NoisyOracle};
use segeval_core::segmenter::{Handshake, Segmenter, SegmenterHandle};
use segeval_core::SegmenterError;

use crate::transport::{HttpSegmenter, StdioSegmenter};

pub type DynSegmenter = Box<dyn Segmenter + Send>;
pub type Handle = SegmenterHandle<DynSegmenter>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OracleKind {
    Gt,
    GtEcho,
    Noisy,
    Everything,
    Empty,
}

impl OracleKind {
    pub fn name(self) -> &'static str {
        match self {
            OracleKind::Gt => "gt",
            OracleKind::GtEcho => "gt-echo",
            OracleKind::Noisy => "noisy",
            OracleKind::Everything => "everything",
            OracleKind::Empty => "empty",
        }
    }

    pub fn build(self, store: Arc<GtStore>, seed: u64) -> DynSegmenter {
        match self {
            OracleKind::Gt => Box::new(GtOracle::new(store)),
            OracleKind::GtEcho => Box::new(GtEchoOracle::new(store)),
            OracleKind::Noisy => Box::new(NoisyOracle::new(store, seed)),
            OracleKind::Everything => Box::new(EverythingOracle::new(store)),
            OracleKind::Empty => Box::new(EmptyOracle),
        }
    }
}

/// Where requests go. Parsed from
/// `oracle:<gt|gt-echo|noisy|everything|empty>`, `stdio:<command line>` or
/// an `http://` / `https://` URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmenterSpec {
    Oracle(OracleKind),
    Stdio(String),
    Http(String),
}

impl FromStr for SegmenterSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(name) = s.strip_prefix("oracle:") {
            let kind = <OracleKind as clap::ValueEnum>::from_str(name, true)
                .map_err(|_| format!("unknown oracle {name:?} (gt, gt-echo, noisy, everything, empty)"))?;
            Ok(SegmenterSpec::Oracle(kind))
        } else if let Some(cmd) = s.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                return Err("stdio: needs a command".into());
            }
            Ok(SegmenterSpec::Stdio(cmd.to_string()))
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(SegmenterSpec::Http(s.to_string()))
        } else {
            Err(format!("cannot interpret segmenter {s:?}; use oracle:<name>, stdio:<command> or an http(s) URL"))
        }
    }
}

impl fmt::Display for SegmenterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmenterSpec::Oracle(k) => write!(f, "oracle:{}", k.name()),
            SegmenterSpec::Stdio(c) => write!(f, "stdio:{c}"),
            SegmenterSpec::Http(u) => f.write_str(u),
        }
    }
}

impl SegmenterSpec {
    /// Opens and handshakes one session. Oracles answer from `store`.
    pub fn connect(&self, store: &Arc<GtStore>, seed: u64, timeout: Duration) -> Result<Handle, SegmenterError> {
        let seg: DynSegmenter = match self {
            SegmenterSpec::Oracle(k) => k.build(store.clone(), seed),
            SegmenterSpec::Stdio(cmd) => Box::new(StdioSegmenter::from_command_line(cmd)?.with_timeout(timeout)),
            SegmenterSpec::Http(url) => Box::new(HttpSegmenter::new(url.clone(), timeout)),
        };
        SegmenterHandle::connect(seg)
    }
}

/// Connected sessions shared by worker threads. A worker borrows one session
/// for a whole sample or sequence.
pub struct HandlePool {
    slots: Mutex<Vec<Handle>>,
    ready: Condvar,
    info: Handshake,
    size: usize,
    calls: Mutex<u64>,
}

impl HandlePool {
    /// Opens up to `workers` sessions, fewer if the handshake declares a
    /// smaller `max_sessions`.
    pub fn open(spec: &SegmenterSpec, store: &Arc<GtStore>, seed: u64, timeout: Duration, workers: usize) -> Result<Self, SegmenterError> {
        let first = spec.connect(store, seed, timeout)?;
        let info = first.info().clone();
        let size = workers.max(1).min(info.max_sessions.max(1) as usize);
        let mut slots = vec![first];
        while slots.len() < size {
            slots.push(spec.connect(store, seed, timeout)?);
        }
        Ok(Self { slots: Mutex::new(slots), ready: Condvar::new(), info, size, calls: Mutex::new(0) })
    }

    pub fn info(&self) -> &Handshake {
        &self.info
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Segment calls issued so far by returned sessions.
    pub fn calls(&self) -> u64 {
        *self.calls.lock().expect("pool lock")
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut Handle) -> R) -> R {
        let mut handle = {
            let mut slots = self.slots.lock().expect("pool lock");
            loop {
                if let Some(h) = slots.pop() {
                    break h;
                }
                slots = self.ready.wait(slots).expect("pool lock");
            }
        };
        let before = handle.calls();
        let out = f(&mut handle);
        *self.calls.lock().expect("pool lock") += handle.calls() - before;
        self.slots.lock().expect("pool lock").push(handle);
        self.ready.notify_one();
        out
    }
}
