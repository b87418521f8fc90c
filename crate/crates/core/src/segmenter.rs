//! The segmenter contract: message types, the [`Segmenter`] trait that
//! transports and oracles implement, and [`SegmenterHandle`], which enforces
//! declared capabilities, retries transport failures once and validates every
//! response before the pipeline sees it.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SegmenterError};
use crate::mask::BinaryMask;
use crate::prompt::{ImageRef, Prompt, PromptKind};

pub const PROTOCOL_VERSION: &str = "segeval-seg/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Points,
    Boxes,
    Mask,
    Everything,
    ContextMemory,
}

impl Capability {
    pub fn name(self) -> &'static str {
        match self {
            Capability::Points => "points",
            Capability::Boxes => "boxes",
            Capability::Mask => "mask",
            Capability::Everything => "everything",
            Capability::ContextMemory => "context_memory",
        }
    }

    pub fn for_prompt(kind: &PromptKind) -> Capability {
        match kind {
            PromptKind::Points(_) => Capability::Points,
            PromptKind::Boxes(_) => Capability::Boxes,
            PromptKind::Mask(_) => Capability::Mask,
            PromptKind::Everything => Capability::Everything,
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    /// Free-form identity of the model behind the endpoint.
    pub name: String,
    pub capabilities: Vec<Capability>,
    /// Number of independent sessions the endpoint tolerates concurrently.
    #[serde(default = "one")]
    pub max_sessions: u32,
}

fn one() -> u32 {
    1
}

impl Handshake {
    pub fn new(name: impl Into<String>, capabilities: &[Capability]) -> Self {
        Self {
            protocol: PROTOCOL_VERSION.into(),
            name: name.into(),
            capabilities: capabilities.to_vec(),
            max_sessions: 1,
        }
    }

    pub fn with_max_sessions(mut self, n: u32) -> Self {
        self.max_sessions = n;
        self
    }

    pub fn supports(&self, cap: Capability) -> bool {
        self.capabilities.contains(&cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: ImageRef,
    pub width: usize,
    pub height: usize,
    pub prompt: Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub mask: BinaryMask,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentResponse {
    Mask(BinaryMask),
    Candidates(Vec<Candidate>),
    Entities(Vec<BinaryMask>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrompt {
    pub frame: usize,
    pub prompt: Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRequest {
    pub frames: Vec<ImageRef>,
    pub width: usize,
    pub height: usize,
    /// Prompts for the scheduled frames, sorted by frame index.
    pub prompts: Vec<FramePrompt>,
}

/// Anything that can answer segmentation requests: a transport to an external
/// model, or one of the bundled oracles.
pub trait Segmenter {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError>;

    fn segment(&mut self, request: &SegmentRequest) -> Result<SegmentResponse, SegmenterError>;

    fn segment_sequence(
        &mut self,
        _request: &SequenceRequest,
    ) -> Result<Vec<BinaryMask>, SegmenterError> {
        Err(SegmenterError::MissingCapability(Capability::ContextMemory))
    }
}

impl<S: Segmenter + ?Sized> Segmenter for Box<S> {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError> {
        (**self).handshake()
    }

    fn segment(&mut self, request: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        (**self).segment(request)
    }

    fn segment_sequence(&mut self, request: &SequenceRequest) -> Result<Vec<BinaryMask>, SegmenterError> {
        (**self).segment_sequence(request)
    }
}

/// Result of one `segment` call after validation.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentOutput {
    Mask(BinaryMask),
    Entities(Vec<BinaryMask>),
}

/// A connected segmenter with its declared capabilities.
pub struct SegmenterHandle<S: ?Sized> {
    info: Handshake,
    calls: u64,
    inner: S,
}

impl<S: Segmenter> SegmenterHandle<S> {
    /// Performs the handshake and checks the protocol version.
    pub fn connect(mut inner: S) -> Result<Self, SegmenterError> {
        let info = with_retry(|| inner.handshake())?;
        if info.protocol != PROTOCOL_VERSION {
            return Err(SegmenterError::VersionMismatch {
                expected: PROTOCOL_VERSION.into(),
                found: info.protocol,
            });
        }
        Ok(Self { info, calls: 0, inner })
    }
}

impl<S: Segmenter + ?Sized> SegmenterHandle<S> {
    pub fn info(&self) -> &Handshake {
        &self.info
    }

    pub fn supports(&self, cap: Capability) -> bool {
        self.info.supports(cap)
    }

    /// Number of requests that reached the underlying segmenter, retries included.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn require(&self, cap: Capability) -> Result<(), SegmenterError> {
        if self.supports(cap) {
            Ok(())
        } else {
            Err(SegmenterError::MissingCapability(cap))
        }
    }

    pub fn segment(&mut self, image: &ImageRef, dims: (usize, usize), prompt: &Prompt) -> Result<SegmentOutput> {
        let icl = is_in_context(prompt);
        if !icl {
            self.require(Capability::for_prompt(&prompt.kind))?;
        }
        if !prompt.context.is_empty() {
            self.require(Capability::ContextMemory)?;
        }
        prompt.validate(dims.0, dims.1)?;
        let request = SegmentRequest { image: image.clone(), width: dims.0, height: dims.1, prompt: prompt.clone() };
        let calls = &mut self.calls;
        let inner = &mut self.inner;
        let response = with_retry(|| {
            *calls += 1;
            inner.segment(&request)
        })?;
        let check = |m: &BinaryMask| -> Result<(), SegmenterError> {
            if m.dims() == dims {
                Ok(())
            } else {
                Err(SegmenterError::Malformed(format!(
                    "mask is {}x{}, image is {}x{}",
                    m.width(),
                    m.height(),
                    dims.0,
                    dims.1
                )))
            }
        };
        let everything = matches!(prompt.kind, PromptKind::Everything) && !icl;
        let out = match response {
            SegmentResponse::Entities(entities) if everything => {
                entities.iter().try_for_each(check)?;
                SegmentOutput::Entities(entities)
            }
            SegmentResponse::Mask(m) if !everything => {
                check(&m)?;
                SegmentOutput::Mask(m)
            }
            SegmentResponse::Candidates(cands) if !everything => {
                cands.iter().try_for_each(|c| check(&c.mask))?;
                SegmentOutput::Mask(best_candidate(cands)?)
            }
            other => {
                return Err(SegmenterError::Malformed(format!(
                    "{} prompt answered with {}",
                    prompt.kind.name(),
                    response_kind(&other)
                ))
                .into())
            }
        };
        Ok(out)
    }

    /// Like [`segment`](Self::segment) for point, box and mask prompts.
    pub fn segment_mask(&mut self, image: &ImageRef, dims: (usize, usize), prompt: &Prompt) -> Result<BinaryMask> {
        match self.segment(image, dims, prompt)? {
            SegmentOutput::Mask(m) => Ok(m),
            SegmentOutput::Entities(_) => {
                Err(SegmenterError::Malformed("expected a single mask".into()).into())
            }
        }
    }

    pub fn segment_entities(&mut self, image: &ImageRef, dims: (usize, usize)) -> Result<Vec<BinaryMask>> {
        match self.segment(image, dims, &Prompt::everything())? {
            SegmentOutput::Entities(e) => Ok(e),
            SegmentOutput::Mask(_) => Err(SegmenterError::Malformed("expected entities".into()).into()),
        }
    }

    pub fn segment_sequence(
        &mut self,
        frames: &[ImageRef],
        dims: (usize, usize),
        prompts: &[FramePrompt],
    ) -> Result<Vec<BinaryMask>> {
        self.require(Capability::ContextMemory)?;
        for fp in prompts {
            self.require(Capability::for_prompt(&fp.prompt.kind))?;
            if fp.frame >= frames.len() {
                return Err(Error::Precondition(format!(
                    "prompt for frame {} of a {}-frame sequence",
                    fp.frame,
                    frames.len()
                )));
            }
            fp.prompt.validate(dims.0, dims.1)?;
        }
        let request = SequenceRequest {
            frames: frames.to_vec(),
            width: dims.0,
            height: dims.1,
            prompts: prompts.to_vec(),
        };
        let calls = &mut self.calls;
        let inner = &mut self.inner;
        let masks = with_retry(|| {
            *calls += 1;
            inner.segment_sequence(&request)
        })?;
        if masks.len() != frames.len() {
            return Err(SegmenterError::Malformed(format!(
                "{} masks for {} frames",
                masks.len(),
                frames.len()
            ))
            .into());
        }
        if let Some(m) = masks.iter().find(|m| m.dims() != dims) {
            return Err(SegmenterError::Malformed(format!(
                "sequence mask is {}x{}, frames are {}x{}",
                m.width(),
                m.height(),
                dims.0,
                dims.1
            ))
            .into());
        }
        Ok(masks)
    }
}

/// An everything prompt carrying exemplars asks for one mask of the concept
/// the exemplars show, not for an entity list.
pub fn is_in_context(prompt: &Prompt) -> bool {
    matches!(prompt.kind, PromptKind::Everything) && !prompt.context.is_empty()
}

fn response_kind(r: &SegmentResponse) -> &'static str {
    match r {
        SegmentResponse::Mask(_) => "a mask",
        SegmentResponse::Candidates(_) => "candidates",
        SegmentResponse::Entities(_) => "entities",
    }
}

/// Highest-scoring candidate; the first one wins ties.
fn best_candidate(cands: Vec<Candidate>) -> Result<BinaryMask, SegmenterError> {
    let mut best: Option<Candidate> = None;
    for c in cands {
        if !c.score.is_finite() {
            return Err(SegmenterError::Malformed(format!("candidate score {}", c.score)));
        }
        if best.as_ref().is_none_or(|b| c.score > b.score) {
            best = Some(c);
        }
    }
    best.map(|c| c.mask).ok_or_else(|| SegmenterError::Malformed("empty candidate list".into()))
}

// One retry on transport failure; anything else is returned as is.
fn with_retry<T>(mut f: impl FnMut() -> Result<T, SegmenterError>) -> Result<T, SegmenterError> {
    match f() {
        Err(SegmenterError::Transport { .. }) => f().map_err(|e| match e {
            SegmenterError::Transport { message, .. } => SegmenterError::Transport { message, attempts: 2 },
            other => other,
        }),
        other => other,
    }
}
