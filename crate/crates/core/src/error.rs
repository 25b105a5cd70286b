use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("distance gradient is undefined at ({}, {})", .0.x, .0.y)]
    SingularPoint(Point2),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("profile violates assumption {axiom} at t = {witness}")]
    AxiomViolation { axiom: Axiom, witness: f64 },

    #[error("mesh would need {requested} vertices, cap is {cap}")]
    ResourceLimit { requested: usize, cap: usize },

    #[error("degenerate element (area {area:e})")]
    DegenerateElement { area: f64 },

    #[error("non-finite integrand sample at ({}, {})", .0.x, .0.y)]
    NonFiniteSample(Point2),

    #[error("error sequence contains a non-positive entry at index {index} ({value})")]
    NonPositiveError { index: usize, value: f64 },

    #[error("diffusion tensor is not positive definite at ({}, {}) (min eigenvalue {min_eig:e})", .at.x, .at.y)]
    EllipticityViolation { at: Point2, min_eig: f64 },

    #[error("assembled system has no active degrees of freedom")]
    EmptySystem,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("reference norm vanishes ({0:e})")]
    ZeroReference(f64),
}

/// Assumptions a sign-regularising profile must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    /// Lipschitz, saturating, strictly increasing on (-1, 1), odd.
    S1,
    /// Power-law bounds on the one-sided weight near the outer band edge.
    S2,
    /// Derivative non-increasing on [0, 1).
    S3,
}

impl std::fmt::Display for Axiom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Axiom::S1 => "S1",
            Axiom::S2 => "S2",
            Axiom::S3 => "S3",
        };
        f.write_str(name)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
