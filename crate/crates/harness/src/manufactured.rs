//! Closed-form solutions and the PDE data derived from them.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ddlab_core::fem::{BcKind, Coefficients};
use ddlab_core::{Point2, SharpDomain};
use serde::{Deserialize, Serialize};

/// Value, gradient and Laplacian of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondJet {
    pub value: f64,
    pub grad: Point2,
    pub laplacian: f64,
}

/// How boundary data is continued off `∂D` into the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    /// Constant along normals: `g(x) = G(π(x))` with `π` the closest point
    /// on `∂D`.
    #[default]
    ClosestPoint,
    /// The closed form evaluated at `x` itself, with `n = ∇d(x)`.
    Pointwise,
}

type Fun<T> = Arc<dyn Fn(Point2) -> T + Send + Sync>;

/// An exact solution `u*` of `−div(a∇u) + c u = f` with scalar diffusion
/// `a`, constant reaction `c` and constant Robin coefficient `b`.
#[derive(Clone)]
pub struct Manufactured {
    pub label: String,
    solution: Fun<(f64, Point2)>,
    diffusion: Fun<f64>,
    source: Fun<f64>,
    pub reaction: f64,
    pub robin: f64,
}

impl fmt::Debug for Manufactured {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Manufactured")
            .field("label", &self.label)
            .field("reaction", &self.reaction)
            .field("robin", &self.robin)
            .finish_non_exhaustive()
    }
}

impl Manufactured {
    /// `f = −(∇a·∇u + a Δu) + c u` from closed forms of `u` and `(a, ∇a)`.
    pub fn smooth(
        label: impl Into<String>,
        u: impl Fn(Point2) -> SecondJet + Send + Sync + 'static,
        a: impl Fn(Point2) -> (f64, Point2) + Send + Sync + 'static,
        reaction: f64,
        robin: f64,
    ) -> Self {
        let u = Arc::new(u);
        let a = Arc::new(a);
        let (us, ud, as_, ad) = (u.clone(), u.clone(), a.clone(), a);
        Manufactured {
            label: label.into(),
            solution: Arc::new(move |p| {
                let j = us(p);
                (j.value, j.grad)
            }),
            diffusion: Arc::new(move |p| as_(p).0),
            source: Arc::new(move |p| {
                let j = ud(p);
                let (av, ag) = ad(p);
                -(ag.dot(j.grad) + av * j.laplacian) + reaction * j.value
            }),
            reaction,
            robin,
        }
    }

    /// `u ≡ value` with `a = 1`.
    pub fn constant(value: f64, reaction: f64, robin: f64) -> Self {
        Self::smooth(
            "constant",
            move |_| SecondJet { value, grad: Point2::default(), laplacian: 0.0 },
            |_| (1.0, Point2::default()),
            reaction,
            robin,
        )
    }

    /// `u = 10 sin(πx)/(1 + π²) − 5y² − 10` with `a = c = b = 1`, so that
    /// `f = 10 sin(πx) − 5y²`.
    pub fn case_a() -> Self {
        Self::case_a_with(1.0)
    }

    /// The same `u` with reaction `c`; the source changes accordingly.
    pub fn case_a_with(reaction: f64) -> Self {
        let k = 10.0 / (1.0 + PI * PI);
        Self::smooth(
            "case-a",
            move |p| {
                let (s, c) = (PI * p.x).sin_cos();
                SecondJet {
                    value: k * s - 5.0 * p.y * p.y - 10.0,
                    grad: Point2::new(k * PI * c, -10.0 * p.y),
                    laplacian: -k * PI * PI * s - 10.0,
                }
            },
            |_| (1.0, Point2::default()),
            reaction,
            1.0,
        )
    }

    /// `u = sin(πx) cos(πy)` with `a = 1`.
    pub fn sin_cos(reaction: f64, robin: f64) -> Self {
        Self::smooth(
            "sin-cos",
            |p| {
                let (sx, cx) = (PI * p.x).sin_cos();
                let (sy, cy) = (PI * p.y).sin_cos();
                SecondJet {
                    value: sx * cy,
                    grad: Point2::new(PI * cx * cy, -PI * sx * sy),
                    laplacian: -2.0 * PI * PI * sx * cy,
                }
            },
            |_| (1.0, Point2::default()),
            reaction,
            robin,
        )
    }

    /// Radial two-layer problem around `center`: `a = k1` for `r < r1` and
    /// `k2` outside, `u = 1 + (r² − r1²)/a`. Both `u` and the flux `a u'`
    /// are continuous at `r1`, and `−div(a∇u) = −4` in each layer.
    pub fn two_layer(center: Point2, k1: f64, k2: f64, r1: f64, reaction: f64, robin: f64) -> Self {
        let a = move |p: Point2| if (p - center).norm() < r1 { k1 } else { k2 };
        Manufactured {
            label: format!("two-layer(k1={k1},k2={k2},r1={r1})"),
            solution: Arc::new(move |p| {
                let x = p - center;
                let k = a(p);
                let r2 = x.dot(x);
                (1.0 + (r2 - r1 * r1) / k, x * (2.0 / k))
            }),
            diffusion: Arc::new(a),
            source: Arc::new(move |p| {
                let x = p - center;
                let u = 1.0 + (x.dot(x) - r1 * r1) / a(p);
                -4.0 + reaction * u
            }),
            reaction,
            robin,
        }
    }

    pub fn with_robin(mut self, robin: f64) -> Self {
        self.robin = robin;
        self
    }

    pub fn value_grad(&self, p: Point2) -> (f64, Point2) {
        (self.solution)(p)
    }

    pub fn value(&self, p: Point2) -> f64 {
        (self.solution)(p).0
    }

    pub fn source(&self, p: Point2) -> f64 {
        (self.source)(p)
    }

    pub fn diffusion(&self, p: Point2) -> f64 {
        (self.diffusion)(p)
    }

    /// `n·a∇u + b u` at `p`.
    pub fn robin_datum(&self, p: Point2, n: Point2) -> f64 {
        let (u, g) = self.value_grad(p);
        self.diffusion(p) * n.dot(g) + self.robin * u
    }

    /// `n·a∇u` at `p`.
    pub fn normal_flux(&self, p: Point2, n: Point2) -> f64 {
        self.diffusion(p) * n.dot(self.value_grad(p).1)
    }

    /// Boundary datum for `bc` at a band point `x`, after extension.
    pub fn boundary_datum(&self, domain: &SharpDomain, bc: BcKind, extension: Extension, x: Point2) -> f64 {
        let frame = match extension {
            Extension::ClosestPoint => domain.closest_point(x),
            Extension::Pointwise => domain.distance_gradient(x).map(|n| (x, n)),
        };
        // Only reachable at gradient singularities, which carry no band weight.
        let Ok((p, n)) = frame else { return f64::NAN };
        match bc {
            BcKind::Robin => self.robin_datum(p, n),
            BcKind::DirichletPenalty { .. } => self.value(p),
            BcKind::Neumann => self.normal_flux(p, n),
        }
    }

    /// Assembly data for the diffuse problem on `domain`.
    pub fn coefficients(&self, domain: SharpDomain, bc: BcKind, extension: Extension) -> Coefficients {
        let (a, f, g) = (self.clone(), self.clone(), self.clone());
        let (c, b) = (self.reaction, self.robin);
        Coefficients::default()
            .with_diffusion(move |p| {
                let k = a.diffusion(p);
                [[k, 0.0], [0.0, k]]
            })
            .with_reaction(move |_| c)
            .with_robin(move |_| b)
            .with_source(move |p| f.source(p))
            .with_boundary(move |p| g.boundary_datum(&domain, bc, extension, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk() -> SharpDomain {
        SharpDomain::disk(Point2::default(), 0.5f64.sqrt()).unwrap()
    }

    /// Five-point Laplacian.
    fn fd_laplacian(u: impl Fn(Point2) -> f64, p: Point2, h: f64) -> f64 {
        let c = u(p);
        (u(p + Point2::new(h, 0.0)) + u(p - Point2::new(h, 0.0)) + u(p + Point2::new(0.0, h))
            + u(p - Point2::new(0.0, h))
            - 4.0 * c)
            / (h * h)
    }

    #[test]
    fn constant_solution_data() {
        let m = Manufactured::constant(1.0, 1.0, 1.0);
        let coeffs = m.coefficients(disk(), BcKind::Robin, Extension::ClosestPoint);
        for p in [Point2::new(0.1, 0.2), Point2::new(0.7, 0.1), Point2::new(-0.5, 0.6)] {
            assert_eq!((coeffs.source)(p), 1.0);
            assert_eq!((coeffs.boundary)(p), 1.0);
        }
    }

    #[test]
    fn sin_cos_source_matches_hand_derivation_and_differences() {
        let m = Manufactured::sin_cos(1.0, 1.0);
        for p in [Point2::new(0.13, -0.4), Point2::new(0.5, 0.25), Point2::new(-0.71, 0.33)] {
            let hand = (2.0 * PI * PI + 1.0) * (PI * p.x).sin() * (PI * p.y).cos();
            assert!((m.source(p) - hand).abs() < 1e-12);
            let fd = -fd_laplacian(|q| m.value(q), p, 1e-4) + m.value(p);
            assert!((m.source(p) - fd).abs() < 1e-5, "{} vs {fd}", m.source(p));
        }
    }

    #[test]
    fn case_a_source() {
        let m = Manufactured::case_a();
        for p in [Point2::new(0.3, -0.2), Point2::new(-0.6, 0.1)] {
            let want = 10.0 * (PI * p.x).sin() - 5.0 * p.y * p.y;
            assert!((m.source(p) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn two_layer_matching_conditions() {
        let (k1, k2, r1) = (1.0, 10.0, 0.9 * 0.5f64.sqrt());
        let m = Manufactured::two_layer(Point2::default(), k1, k2, r1, 1.0, 1.0);
        let dir = Point2::new(0.6, 0.8);
        let (inside, outside) = (dir * (r1 - 1e-9), dir * (r1 + 1e-9));
        assert!((m.value(inside) - m.value(outside)).abs() < 1e-8);
        let flux = |p: Point2| m.diffusion(p) * m.value_grad(p).1.dot(dir);
        assert!((flux(inside) - flux(outside)).abs() < 1e-8);
        // −(a u')' − a u'/r = −4 in each layer, checked by differences.
        for r in [0.3, 0.68] {
            let p = dir * r;
            let fd = -m.diffusion(p) * fd_laplacian(|q| m.value(q), p, 1e-4);
            assert!((fd + 4.0).abs() < 1e-5, "{fd}");
            assert!((m.source(p) - (fd + m.value(p))).abs() < 1e-5);
        }
    }

    #[test]
    fn closest_point_extension_is_constant_along_normals() {
        let m = Manufactured::case_a();
        let d = disk();
        let n = Point2::new(1f64.cos(), 1f64.sin());
        let on = n * 0.5f64.sqrt();
        let g0 = m.boundary_datum(&d, BcKind::Robin, Extension::ClosestPoint, on);
        for s in [-0.1, 0.05, 0.2] {
            let g = m.boundary_datum(&d, BcKind::Robin, Extension::ClosestPoint, on + n * s);
            assert!((g - g0).abs() < 1e-12);
        }
        let pw = m.boundary_datum(&d, BcKind::Robin, Extension::Pointwise, on + n * 0.2);
        assert!((pw - g0).abs() > 1e-3);
        let dir = m.boundary_datum(&d, BcKind::DirichletPenalty { sigma: 1.0 }, Extension::ClosestPoint, on + n * 0.1);
        assert!((dir - m.value(on)).abs() < 1e-12);
    }
}
