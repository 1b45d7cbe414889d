//! Sessions, segmentation, score scales, and the synthetic corpus generator.

mod io;
mod scale;
mod segment;
mod synth;
mod types;

pub use io::{load_planted, load_sessions, parse_sessions, save_planted, save_sessions, tokenize};
pub use scale::{binarize, rescale, unrescale, BinaryLabel, ScoreScale};
pub use segment::{augment_segmentations, segment_session, SegmentationConfig};
pub use synth::{generate_synthetic_corpus, PlantedTruth, QualityProfile, SyntheticCorpus, SyntheticSpec};
pub use types::{Code, CtrsLabels, Segment, Session, Speaker, Target, Utterance};
