//! File formats and synthetic data.

pub mod annotation;
pub mod model_file;
pub mod sequence;
pub mod synth;

pub use annotation::{AnnotatedSegment, AnnotationFile};
pub use model_file::{decode_model, encode_model, load_model, save_model, SavedModel};
pub use sequence::{parse_sequence, read_sequence, sequence_string, write_frame, write_header, write_sequence, SequenceHeader, SequenceReader};
pub use synth::{gen_instances, gen_synthetic, rest_pose, ClassTemplate, Limb, SyntheticSpec};
