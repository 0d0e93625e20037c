//! Minutia-based fingerprint matching by iterative weighted global
//! alignment.
//!
//! The matcher considers every pairing between a query and a template
//! minutia set, solves the weighted rigid registration in closed form,
//! prunes pairs that stay far apart after alignment, reweights the rest,
//! and repeats with tightening thresholds until a one-to-one sized pair set
//! remains.

pub mod error;
pub mod evaluation;
pub mod match_loop;
pub mod model;
pub mod pair_weights;
pub mod registration;
pub mod synth;
pub mod template_io;

pub use error::{ConfigError, DatasetError, EvalError, MatchError, SynthError, TemplateError};
pub use match_loop::{run_matcher, MatchResult};
pub use model::{
    angle_diff, transform_point, AlignmentParams, MatchConfig, Minutia, MinutiaTemplate,
    MinutiaType, PairEntry, PairQueue,
};
pub use registration::{solve_alignment, AlignmentDiagnostics};
