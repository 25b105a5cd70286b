//! Sign-regularising profiles and the phase-field weight built from them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Axiom, Error, Result};
use crate::geometry::{Point2, SharpDomain};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smoothed sign function `S` that saturates at `±1` for `|t| ≥ 1`.
#[derive(Clone)]
pub enum SProfile {
    /// `S(t) = t` on (-1, 1).
    Linear,
    /// `S(t) = (3t - t³)/2` on (-1, 1).
    Cubic,
    /// `S(t) = 15t/8 - 5t³/4 + 3t⁵/8` on (-1, 1).
    Quintic,
    /// User supplied profile together with its power-law constants. `s` and
    /// `s_prime` are only consulted on (-1, 1).
    Custom {
        s: RealFn,
        s_prime: RealFn,
        alpha: f64,
        zeta1: f64,
        zeta2: f64,
    },
}

impl fmt::Debug for SProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SProfile::Linear => f.write_str("Linear"),
            SProfile::Cubic => f.write_str("Cubic"),
            SProfile::Quintic => f.write_str("Quintic"),
            SProfile::Custom { alpha, zeta1, zeta2, .. } => f
                .debug_struct("Custom")
                .field("alpha", alpha)
                .field("zeta1", zeta1)
                .field("zeta2", zeta2)
                .finish_non_exhaustive(),
        }
    }
}

impl FromStr for SProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(SProfile::Linear),
            "cubic" => Ok(SProfile::Cubic),
            "quintic" => Ok(SProfile::Quintic),
            other => Err(Error::Config(format!(
                "unknown profile '{other}' (expected linear, cubic or quintic)"
            ))),
        }
    }
}

impl fmt::Display for SProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl SProfile {
    pub fn name(&self) -> &'static str {
        match self {
            SProfile::Linear => "linear",
            SProfile::Cubic => "cubic",
            SProfile::Quintic => "quintic",
            SProfile::Custom { .. } => "custom",
        }
    }

    pub fn builtin() -> [SProfile; 3] {
        [SProfile::Linear, SProfile::Cubic, SProfile::Quintic]
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return 1.0;
        }
        if t <= -1.0 {
            return -1.0;
        }
        match self {
            SProfile::Linear => t,
            SProfile::Cubic => 0.5 * (3.0 * t - t * t * t),
            SProfile::Quintic => {
                let t2 = t * t;
                t * (15.0 / 8.0 - 5.0 / 4.0 * t2 + 3.0 / 8.0 * t2 * t2)
            }
            SProfile::Custom { s, .. } => s(t),
        }
    }

    /// `S'(t)`, taken as zero on `|t| ≥ 1`.
    pub fn derivative(&self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            SProfile::Linear => 1.0,
            SProfile::Cubic => 1.5 * (1.0 - t * t),
            SProfile::Quintic => {
                let t2 = t * t;
                15.0 / 8.0 - 15.0 / 4.0 * t2 + 15.0 / 8.0 * t2 * t2
            }
            SProfile::Custom { s_prime, .. } => s_prime(t),
        }
    }

    /// `(alpha, zeta1, zeta2)` of the power-law bound
    /// `zeta1 t^alpha ≤ (1 + S(t-1))/2 ≤ zeta2 t^alpha` on (0, 2).
    pub fn power_law(&self) -> (f64, f64, f64) {
        match self {
            SProfile::Linear => (1.0, 0.5, 0.5),
            SProfile::Cubic => (2.0, 0.25, 0.75),
            SProfile::Quintic => (3.0, 0.125, 2.5),
            SProfile::Custom { alpha, zeta1, zeta2, .. } => (*alpha, *zeta1, *zeta2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub passed: bool,
    /// First sample at which the check failed.
    pub witness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileReport {
    pub samples: usize,
    pub checks: [AxiomCheck; 3],
}

impl ProfileReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.checks.iter().find(|c| !c.passed) {
            Some(c) => Err(Error::AxiomViolation {
                axiom: c.axiom,
                witness: c.witness.unwrap_or(f64::NAN),
            }),
            None => Ok(self),
        }
    }
}

const AXIOM_TOL: f64 = 1e-12;

/// Samples the profile on a midpoint grid of (0, 2) and evaluates each
/// assumption, without failing.
pub fn check_profile(profile: &SProfile, samples: usize) -> ProfileReport {
    let samples = samples.max(100);
    let grid: Vec<f64> = (0..samples)
        .map(|k| 2.0 * (k as f64 + 0.5) / samples as f64)
        .collect();

    let mut s1 = None;
    for &t in &grid {
        let odd = (profile.eval(t) + profile.eval(-t)).abs() > AXIOM_TOL;
        let saturates = t >= 1.0 && (profile.eval(t) - 1.0).abs() > AXIOM_TOL;
        let increasing = t < 1.0 && !(profile.derivative(t) > 0.0 && profile.derivative(-t) > 0.0);
        if odd || saturates || increasing {
            s1 = Some(t);
            break;
        }
    }
    if s1.is_none() {
        // Monotone across the whole symmetric grid.
        let symmetric: Vec<f64> = grid.iter().rev().map(|t| -t).chain(grid.iter().copied()).collect();
        s1 = symmetric
            .windows(2)
            .find(|w| profile.eval(w[1]) < profile.eval(w[0]) - AXIOM_TOL)
            .map(|w| w[1]);
    }

    let (alpha, zeta1, zeta2) = profile.power_law();
    let s2 = grid.iter().copied().find(|&t| {
        let w = 0.5 * (1.0 + profile.eval(t - 1.0));
        let tp = t.powf(alpha);
        let slack = AXIOM_TOL * tp.max(1.0);
        w < zeta1 * tp - slack || w > zeta2 * tp + slack
    });

    let mut s3 = None;
    let mut prev = profile.derivative(0.0);
    for &t in grid.iter().filter(|&&t| t < 1.0) {
        let d = profile.derivative(t);
        if d > prev + AXIOM_TOL {
            s3 = Some(t);
            break;
        }
        prev = d;
    }

    let check = |axiom, witness: Option<f64>| AxiomCheck {
        axiom,
        passed: witness.is_none(),
        witness,
    };
    ProfileReport {
        samples,
        checks: [check(Axiom::S1, s1), check(Axiom::S2, s2), check(Axiom::S3, s3)],
    }
}

/// Like [`check_profile`] but fails on the first violated assumption.
pub fn verify_profile(profile: &SProfile, samples: usize) -> Result<ProfileReport> {
    if samples < 100 {
        return Err(Error::Config(format!("profile verification needs at least 100 samples, got {samples}")));
    }
    check_profile(profile, samples).into_result()
}

/// Phase-field weight `ω = (1 + S(-d/ε))/2` of a sharp domain.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub profile: SProfile,
    pub eps: f64,
    pub domain: SharpDomain,
}

impl PhaseField {
    pub fn new(profile: SProfile, eps: f64, domain: SharpDomain) -> Result<Self> {
        domain.check_eps(eps)?;
        Ok(PhaseField { profile, eps, domain })
    }

    #[inline]
    pub fn omega_from_distance(&self, d: f64) -> f64 {
        0.5 * (1.0 + self.profile.eval(-d / self.eps))
    }

    /// `|∇ω|` as a function of the signed distance, using `|∇d| = 1`.
    #[inline]
    pub fn grad_omega_from_distance(&self, d: f64) -> f64 {
        self.profile.derivative(-d / self.eps) / (2.0 * self.eps)
    }

    pub fn omega(&self, p: Point2) -> f64 {
        self.omega_from_distance(self.domain.signed_distance(p))
    }

    pub fn grad_omega_magnitude(&self, p: Point2) -> f64 {
        self.grad_omega_from_distance(self.domain.signed_distance(p))
    }

    /// `(ω, |∇ω|)` from a single distance evaluation.
    #[inline]
    pub fn weights(&self, p: Point2) -> (f64, f64) {
        let d = self.domain.signed_distance(p);
        (self.omega_from_distance(d), self.grad_omega_from_distance(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk_field(profile: SProfile, eps: f64) -> PhaseField {
        PhaseField::new(profile, eps, SharpDomain::disk(Point2::default(), 0.5f64.sqrt()).unwrap())
            .unwrap()
    }

    /// Point on the positive x axis with signed distance `d` to the disk.
    fn at_distance(d: f64) -> Point2 {
        Point2::new(0.5f64.sqrt() + d, 0.0)
    }

    #[test]
    fn profile_values() {
        assert_eq!(SProfile::Cubic.eval(1.0), 1.0);
        assert_eq!(SProfile::Cubic.eval(0.0), 0.0);
        assert!((SProfile::Cubic.eval(0.5) - 0.6875).abs() < 1e-15);
        assert_eq!(SProfile::Quintic.eval(-3.0), -1.0);
    }

    #[test]
    fn profile_derivatives() {
        assert_eq!(SProfile::Cubic.derivative(0.0), 1.5);
        assert_eq!(SProfile::Linear.derivative(0.3), 1.0);
        assert_eq!(SProfile::Quintic.derivative(2.0), 0.0);
        assert_eq!(SProfile::Linear.derivative(1.0), 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for p in SProfile::builtin() {
            for k in 1..40 {
                let t = -0.95 + 1.9 * k as f64 / 40.0;
                let h = 1e-6;
                let fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h);
                assert!((fd - p.derivative(t)).abs() < 1e-8, "{p:?} at {t}");
            }
        }
    }

    #[test]
    fn omega_examples() {
        let eps = 0.1;
        let lin = disk_field(SProfile::Linear, eps);
        assert!((lin.omega(at_distance(0.0)) - 0.5).abs() < 1e-15);
        assert!((lin.omega(at_distance(-eps / 2.0)) - 0.75).abs() < 1e-12);
        let cub = disk_field(SProfile::Cubic, eps);
        assert!((cub.omega(at_distance(eps / 2.0)) - 0.15625).abs() < 1e-12);
        assert_eq!(cub.omega(Point2::default()), 1.0);
        assert_eq!(cub.omega(Point2::new(3.0, 0.0)), 0.0);
    }

    #[test]
    fn grad_omega_examples() {
        let eps = 0.1;
        let lin = disk_field(SProfile::Linear, eps);
        assert!((lin.grad_omega_magnitude(at_distance(0.03)) - 1.0 / (2.0 * eps)).abs() < 1e-12);
        assert_eq!(lin.grad_omega_magnitude(at_distance(2.0 * eps)), 0.0);
        let cub = disk_field(SProfile::Cubic, eps);
        assert!((cub.grad_omega_magnitude(at_distance(0.0)) - 3.0 / (4.0 * eps)).abs() < 1e-12);
    }

    #[test]
    fn builtin_profiles_satisfy_axioms() {
        let cubic = verify_profile(&SProfile::Cubic, 1000).unwrap();
        assert!(cubic.all_passed());
        assert_eq!(SProfile::Cubic.power_law(), (2.0, 0.25, 0.75));
        assert!(verify_profile(&SProfile::Quintic, 1000).is_ok());
        assert_eq!(SProfile::Quintic.power_law(), (3.0, 0.125, 2.5));
        assert!(verify_profile(&SProfile::Linear, 1000).is_ok());
    }

    #[test]
    fn convex_profile_violates_s3() {
        let cube = SProfile::Custom {
            s: Arc::new(|t| t * t * t),
            s_prime: Arc::new(|t| 3.0 * t * t),
            alpha: 1.0,
            zeta1: 0.375,
            zeta2: 1.5,
        };
        let report = check_profile(&cube, 1000);
        assert!(report.checks[0].passed);
        assert!(report.checks[1].passed);
        assert!(!report.checks[2].passed);
        match verify_profile(&cube, 1000) {
            Err(Error::AxiomViolation { axiom: Axiom::S3, witness }) => {
                assert!(witness > 0.0 && witness < 1.0);
                // S'' = 6t > 0 at the witness.
                assert!(6.0 * witness > 0.0);
            }
            other => panic!("expected S3 violation, got {other:?}"),
        }
    }

    #[test]
    fn wrong_constants_violate_s2() {
        let bad = SProfile::Custom {
            s: Arc::new(|t| t),
            s_prime: Arc::new(|_| 1.0),
            alpha: 1.0,
            zeta1: 0.6,
            zeta2: 0.7,
        };
        assert!(matches!(
            verify_profile(&bad, 200),
            Err(Error::AxiomViolation { axiom: Axiom::S2, .. })
        ));
        assert!(verify_profile(&SProfile::Linear, 10).is_err());
    }

    #[test]
    fn profile_names_round_trip() {
        for p in SProfile::builtin() {
            assert_eq!(p.name().parse::<SProfile>().unwrap().name(), p.name());
        }
        assert!("tanh".parse::<SProfile>().is_err());
    }

    proptest! {
        #[test]
        fn mirror_weights_sum_to_one(d in -0.3..0.3f64, k in 0usize..3) {
            let pf = disk_field(SProfile::builtin()[k].clone(), 0.2);
            let w = pf.omega(at_distance(d)) + pf.omega(at_distance(-d));
            prop_assert!((w - 1.0).abs() < 1e-12);
        }

        #[test]
        fn surface_density_is_normal_derivative(s in -0.95..0.95f64, k in 0usize..3) {
            let eps = 0.2;
            let pf = disk_field(SProfile::builtin()[k].clone(), eps);
            // Steer clear of the Linear kinks at |d| = eps.
            let d = s * eps;
            let h = 1e-7 * eps;
            let fd = (pf.omega(at_distance(d - h)) - pf.omega(at_distance(d + h))) / (2.0 * h);
            let exact = pf.grad_omega_magnitude(at_distance(d));
            prop_assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-12));
        }

        #[test]
        fn weight_power_law(s in -0.999..0.999f64, k in 0usize..3) {
            let eps = 0.2;
            let profile = SProfile::builtin()[k].clone();
            let (alpha, z1, z2) = profile.power_law();
            let pf = disk_field(profile, eps);
            let d = s * eps;
            let t = (eps - d) / eps;
            let w = pf.omega(at_distance(d));
            prop_assert!(w >= z1 * t.powf(alpha) - 1e-12);
            prop_assert!(w <= z2 * t.powf(alpha) + 1e-12);
        }
    }
}
