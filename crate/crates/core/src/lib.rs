//! Diffuse-domain approximation of boundary value problems on a fixed
//! structured background mesh.
//!
//! A sharp domain `D` is replaced by a phase field `ω` that is one inside,
//! zero outside and varies across a band of half-width `ε`. Volume integrals
//! over `D` become `∫ · ω dx`, boundary integrals become `∫ · |∇ω| dx`.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod fem;
pub mod gauss;
pub mod geometry;
pub mod integrals;
pub mod mesh;
pub mod phasefield;
pub mod solver;
pub mod sparse;

pub use error::{Axiom, Error, Result};
pub use exec::ExecPolicy;
pub use geometry::{ComputationalBox, Point2, SharpDomain};
pub use phasefield::{PhaseField, SProfile};
