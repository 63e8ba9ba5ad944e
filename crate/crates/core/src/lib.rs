//! Symbolic music plagiarism detection.
//!
//! Songs arrive as per-instrument notes plus beat, structure and chord
//! annotations. They are quantized onto a bar grid, cut into fixed-length
//! segments, and compared segment by segment with a score combining pitch
//! pattern, rhythm, tempo and functional harmony. Segment scores feed
//! segment- and song-level retrieval and its evaluation.

pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod quantizer;
pub mod retrieval;
pub mod segmenter;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{
    load_bundle, load_smp_manifest, parse_standard_midi, Instrument, InstrumentTrack, NoteEvent, SmpPair,
    TrackAnnotation, TrackBundle,
};
pub use quantizer::{BeatGrid, KeySignature, QuantizedNote, QuantizedTrack};
pub use retrieval::{Aggregation, SegmentIndex, SegmentMatch, SongRanking};
pub use segmenter::{SegmentDescriptor, SegmentationConfig};
pub use similarity::{combined_score, Ablation, ScoreBreakdown, SegmentFeatures, SimilarityParams};
