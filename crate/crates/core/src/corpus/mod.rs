//! Documents, their paragraph/sentence structure, and datasets of retrieval
//! samples.
//!
//! All character spans are half-open UTF-8 byte ranges into the document's
//! raw text. Token spans are inclusive index pairs into the tokenizer output.

pub(crate) mod align;
mod dataset;
mod segment;

pub use align::{align_tokens, TokenAlignment, TokenRange};
pub use dataset::{
    load_dataset, parse_dataset, write_dataset, DatasetStats, QueryType, RetrievalSample,
    SubqueryGold,
};
pub use segment::{
    segment_document, Paragraph, SegmentationConfig, SegmentedDocument, Sentence, Span,
};
