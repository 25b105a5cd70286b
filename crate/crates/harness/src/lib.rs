//! Convergence studies for the diffuse-domain solvers in `ddlab-core`.
//!
//! A [`CaseConfig`] selects a problem (a manufactured solution or a singular
//! source), an ε list and a mesh policy; [`run_case`] sweeps ε and measures
//! errors on the sharp domain; [`output`] turns the result into files.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod manufactured;
pub mod output;
pub mod study;

pub use config::{CaseConfig, CaseId, OutputFormat, Reference};
pub use error::{HarnessError, Result};
pub use fields::FieldSpec;
pub use manufactured::{Extension, Manufactured};
pub use output::{emit_results, write_study_outputs};
pub use study::{run_case, run_case_b, run_case_c, StudyResult};
