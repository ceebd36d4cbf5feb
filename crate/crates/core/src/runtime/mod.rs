// SPDX-License-Identifier: MIT OR Apache-2.0

//! Decoder-only transformer runtime with q/k capture at prompt anchors.

pub mod capture;
pub mod forward;
pub mod model;
pub mod render;
pub mod rope;
pub mod spec;
pub mod tokenizer;

pub use capture::{read_capture, write_capture, CaptureSet, HeadVectors, QKCapture, Variant, CAPTURE_VERSION};
pub use forward::{forward_capture, forward_trace, ForwardTrace};
pub use model::{load_model, save_model, Model, QKPM_VERSION};
pub use render::{render_prompt, PromptSpans, RenderedPrompt, TEMPLATES};
pub use spec::{Ffn, HeadId, ModelSpec, Norm, Positional};
pub use tokenizer::{tokenize, PromptLayout, Vocab};

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("format error: {0}")]
    Format(String),
    #[error("shape mismatch for {tensor}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { tensor: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("checksum mismatch: manifest {expected}, blob {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("span `{span}` at byte {start} does not start a token")]
    SpanResolution { span: String, start: usize },
    #[error("no template `{template}` for family {family}")]
    TemplateMissing { template: String, family: String },
    #[error("sequence of {len} tokens exceeds the limit of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("unsupported version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
