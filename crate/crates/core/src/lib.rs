//! Drug-discourse analysis pipeline: corpus intake, drug and place matching,
//! stance labelling, content and demographic analysis, and the statistics
//! built on top of them.

pub mod content;
pub mod corpus;
pub mod demographics;
pub mod geo;
pub mod lexicon;
pub mod registry;
pub mod sidecar;
pub mod stance;
pub mod stats;
pub mod text;
pub mod timeline;
