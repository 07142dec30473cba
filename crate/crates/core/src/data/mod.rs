//! Training data: procedural faces, alignment, curation, tagging and
//! degradation.

pub mod align;
pub mod annotate;
pub mod curate;
pub mod degrade;
pub mod face;
pub mod manifest;

pub use align::{align, AlignmentTemplate, Similarity};
pub use annotate::{annotate, AnnotationRecord};
pub use curate::{curate, curate_lines, CurationOutcome, CurationThresholds, Rejection};
pub use degrade::{degrade, sample_degradation, DegradationParams, DegradationRanges};
pub use face::{gen_face, render_face, sample_face_params, FaceParams, GeneratedFace};
pub use manifest::{read_jsonl, write_jsonl, FaceRecord, PairRecord};
