//! Error norms and discrete estimates of the ε-uniform functional
//! inequality constants.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::fem::{assemble_with, DofMap, FeFunction};
use crate::geometry::{Point2, SharpDomain};
use crate::integrals::{ELEMENT_CHUNK, SHARP_DEPTH};
use crate::mesh::{element_band, push_inside_points, quadrature_points, ElementBand, ElementQuadrature, P1Element, TriMesh, TriangleRule};
use crate::phasefield::PhaseField;
use crate::solver::{pcg, CgOptions, Preconditioner};
use crate::sparse::{dot, CsrMatrix};

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NormKind {
    L2D,
    W12D,
    W11D,
    W1InfD,
    L2Weighted,
    W12Weighted,
}

impl NormKind {
    pub const RESTRICTED: [NormKind; 4] = [NormKind::L2D, NormKind::W12D, NormKind::W11D, NormKind::W1InfD];

    pub fn name(self) -> &'static str {
        match self {
            NormKind::L2D => "L2",
            NormKind::W12D => "W12",
            NormKind::W11D => "W11",
            NormKind::W1InfD => "W1inf",
            NormKind::L2Weighted => "L2w",
            NormKind::W12Weighted => "W12w",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            NormKind::L2D,
            NormKind::W12D,
            NormKind::W11D,
            NormKind::W1InfD,
            NormKind::L2Weighted,
            NormKind::W12Weighted,
        ]
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::Config(format!("unknown norm '{s}'")))
    }
}

/// Relative errors of one diffuse solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub eps: f64,
    pub dof_count: usize,
    pub errors: Vec<(NormKind, f64)>,
}

impl ErrorReport {
    pub fn get(&self, kind: NormKind) -> Option<f64> {
        self.errors.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
    }
}

/// Raw integrals over `D` from which every restricted norm is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    l2: f64,
    grad_l2: f64,
    l1: f64,
    grad_l1: f64,
    sup: f64,
    grad_sup: f64,
}

impl Moments {
    fn add(&mut self, w: f64, v: f64, g: Point2) {
        let gn = g.norm();
        self.l2 += w * v * v;
        self.grad_l2 += w * gn * gn;
        self.l1 += w * v.abs();
        self.grad_l1 += w * gn;
        self.sup = self.sup.max(v.abs());
        self.grad_sup = self.grad_sup.max(gn);
    }

    fn merge(mut self, o: Moments) -> Moments {
        self.l2 += o.l2;
        self.grad_l2 += o.grad_l2;
        self.l1 += o.l1;
        self.grad_l1 += o.grad_l1;
        self.sup = self.sup.max(o.sup);
        self.grad_sup = self.grad_sup.max(o.grad_sup);
        self
    }

    fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L2D => self.l2.sqrt(),
            NormKind::W12D => (self.l2 + self.grad_l2).sqrt(),
            NormKind::W11D => self.l1 + self.grad_l1,
            NormKind::W1InfD => self.sup.max(self.grad_sup),
            _ => unreachable!("weighted norms are not restricted to D"),
        }
    }
}

/// Relative errors `‖u_ref − u_h‖ / ‖u_ref‖` over `D` for each requested
/// restricted norm. Elements cut by `∂D` are refined `depth` times and
/// children are assigned to `D` by the sign of the distance at their
/// centroid; the `W1inf` norm is a supremum over quadrature nodes.
pub fn restricted_errors<F>(
    u_h: &FeFunction,
    u_ref: F,
    domain: &SharpDomain,
    mesh: &TriMesh,
    kinds: &[NormKind],
    depth: usize,
    exec: ExecPolicy,
) -> Result<Vec<(NormKind, f64)>>
where
    F: Fn(Point2) -> (f64, Point2) + Sync + Send,
{
    if let Some(k) = kinds.iter().find(|k| !NormKind::RESTRICTED.contains(k)) {
        return Err(Error::Config(format!("{k} is not a norm over D")));
    }
    let rule = TriangleRule::degree4();
    let parts = exec.map_chunks(mesh.n_triangles(), ELEMENT_CHUNK, |range| -> Result<(Moments, Moments)> {
        let mut pts = Vec::new();
        let mut err = Moments::default();
        let mut reference = Moments::default();
        for t in range {
            let tri = mesh.triangle(t);
            pts.clear();
            push_inside_points(&tri, &rule, domain, depth, &mut pts);
            if pts.is_empty() {
                continue;
            }
            let el = P1Element::new(&tri)?;
            for &(p, w) in &pts {
                let (v, g) = u_h.eval_on(mesh, t, &el, p);
                let (rv, rg) = u_ref(p);
                if !(rv.is_finite() && rg.is_finite()) {
                    return Err(Error::NonFiniteSample(p));
                }
                err.add(w, rv - v, rg - g);
                reference.add(w, rv, rg);
            }
        }
        Ok((err, reference))
    });
    let mut err = Moments::default();
    let mut reference = Moments::default();
    for part in parts {
        let (e, r) = part?;
        err = err.merge(e);
        reference = reference.merge(r);
    }
    kinds
        .iter()
        .map(|&k| {
            let denom = reference.norm(k);
            if denom < 1e-14 {
                Err(Error::ZeroReference(denom))
            } else {
                Ok((k, err.norm(k) / denom))
            }
        })
        .collect()
}

/// Single-norm form of [`restricted_errors`] at the default depth.
pub fn restricted_error<F>(
    u_h: &FeFunction,
    u_ref: F,
    domain: &SharpDomain,
    mesh: &TriMesh,
    kind: NormKind,
) -> Result<f64>
where
    F: Fn(Point2) -> (f64, Point2) + Sync + Send,
{
    restricted_errors(u_h, u_ref, domain, mesh, &[kind], SHARP_DEPTH, ExecPolicy::default()).map(|v| v[0].1)
}

/// `(∫ |v|² dω)^½` or `(∫ (|∇v|² + |v|²) dω)^½` with the band quadrature.
pub fn weighted_norm(
    v: &FeFunction,
    pf: &PhaseField,
    mesh: &TriMesh,
    quad: &ElementQuadrature,
    kind: NormKind,
    exec: ExecPolicy,
) -> Result<f64> {
    let with_gradient = match kind {
        NormKind::L2Weighted => false,
        NormKind::W12Weighted => true,
        other => return Err(Error::Config(format!("{other} is not a weighted norm"))),
    };
    let parts = exec.map_chunks(mesh.n_triangles(), ELEMENT_CHUNK, |range| -> Result<f64> {
        let mut pts = Vec::new();
        let mut acc = 0.0;
        for t in range {
            let tri = mesh.triangle(t);
            if element_band(&tri, &pf.domain, pf.eps) == ElementBand::Outside {
                continue;
            }
            let el = P1Element::new(&tri)?;
            quadrature_points(&tri, quad, pf, &mut pts);
            for &(p, w) in &pts {
                let omega = pf.omega(p);
                if omega != 0.0 {
                    let (val, g) = v.eval_on(mesh, t, &el, p);
                    let integrand = if with_gradient { val * val + g.dot(g) } else { val * val };
                    acc += w * omega * integrand;
                }
            }
        }
        Ok(acc)
    });
    let total = parts.into_iter().try_fold(0.0, |acc, r| r.map(|v| acc + v))?;
    Ok(total.sqrt())
}

/// Weighted stiffness, mass and diffuse boundary mass on a common set of
/// active unknowns, with `A = I`, `c = b = 1`.
#[derive(Debug, Clone)]
pub struct InequalityOperators {
    pub dofs: DofMap,
    /// Positions of the unknowns.
    pub coords: Vec<Point2>,
    /// `∫ ∇φ_i·∇φ_j dω`
    pub stiffness: CsrMatrix,
    /// `∫ φ_i φ_j dω`
    pub mass: CsrMatrix,
    /// `∫ φ_i φ_j |∇ω| dx`
    pub boundary: CsrMatrix,
    /// `∫ φ_i dω`
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative accuracy targeted for the eigenvalue.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of vectors iterated together. Two or more keep a nearly
    /// repeated top eigenvalue from stalling the iteration.
    pub block: usize,
    pub cg: CgOptions,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-6,
            max_iter: 500,
            block: 2,
            // Inner solves only need to be accurate relative to the
            // eigenvector residual they feed.
            cg: CgOptions { tol: 1e-8, preconditioner: Preconditioner::Ssor { omega: 1.95 }, ..CgOptions::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Relative residual of the final eigenpair in the energy norm.
    pub residual: f64,
}

impl InequalityOperators {
    pub fn assemble(mesh: &TriMesh, pf: &PhaseField, quad: &ElementQuadrature, exec: ExecPolicy) -> Result<Self> {
        let (dofs, [stiffness, mass, boundary], [mean]) =
            assemble_with::<3, 1, _>(mesh, quad, pf, exec, |el, samples, local| {
                let g = &el.gradients;
                for s in samples {
                    let wo = s.w * s.omega;
                    let wd = s.w * s.density;
                    for i in 0..3 {
                        for j in i..3 {
                            local.mats[0][i][j] += wo * g[i].dot(g[j]);
                            local.mats[1][i][j] += wo * s.shape[i] * s.shape[j];
                            local.mats[2][i][j] += wd * s.shape[i] * s.shape[j];
                        }
                        local.vecs[0][i] += wo * s.shape[i];
                    }
                }
                for m in local.mats.iter_mut() {
                    for i in 0..3 {
                        for j in 0..i {
                            m[i][j] = m[j][i];
                        }
                    }
                }
                Ok(())
            })?;
        let coords = dofs.vertex_of_dof.iter().map(|&v| mesh.vertices[v as usize]).collect();
        Ok(InequalityOperators { dofs, coords, stiffness, mass, boundary, mean })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    /// Smooth start vectors: `1, x, y, xy, …` evaluated at the unknowns.
    fn start_block(&self, k: usize, skip_constant: bool) -> Vec<Vec<f64>> {
        let basis: [fn(Point2) -> f64; 5] =
            [|_| 1.0, |p| p.x, |p| p.y, |p| p.x * p.y, |p| p.x * p.x - p.y * p.y];
        basis
            .iter()
            .skip(usize::from(skip_constant))
            .take(k)
            .map(|f| self.coords.iter().map(|&p| f(p)).collect())
            .collect()
    }

    /// Best `C` in `∫ |v|² |∇ω| ≤ C ‖v‖²_{W^{1,2}(ω)}`.
    pub fn trace_constant(&self, opts: &EigenOptions) -> Result<EigenEstimate> {
        let rhs = self.stiffness.add_scaled(1.0, &self.mass);
        largest_generalized_eigenvalue(&self.boundary, &rhs, None, self.start_block(opts.block, false), opts)
    }

    /// Best `C` in `‖v‖²_{L²(ω)} ≤ C (‖∇v‖²_{L²(ω)} + ∫ |v|² |∇ω|)`.
    pub fn poincare_friedrichs_constant(&self, opts: &EigenOptions) -> Result<EigenEstimate> {
        let rhs = self.stiffness.add_scaled(1.0, &self.boundary);
        largest_generalized_eigenvalue(&self.mass, &rhs, None, self.start_block(opts.block, false), opts)
    }

    /// Best `C` in `‖v − v̄‖²_{L²(ω)} ≤ C ‖∇v‖²_{L²(ω)}` with `v̄` the weighted
    /// mean.
    pub fn poincare_mean_constant(&self, opts: &EigenOptions) -> Result<EigenEstimate> {
        let start = self.start_block(opts.block, true);
        largest_generalized_eigenvalue(&self.mass, &self.stiffness, Some(&self.mean), start, opts)
    }
}

/// Largest `λ` in `L v = λ R v` with `R` symmetric positive definite (on the
/// complement of `constraint` when given) and `L` symmetric positive
/// semidefinite.
///
/// Subspace iteration: every step solves `R Y = L X` by CG, warm-started at
/// the current Ritz values, followed by a Rayleigh-Ritz step on `span Y`.
/// Stops once the top Ritz pair has energy-norm residual `r` with
/// `r² ≤ tol / 10`; the eigenvalue error is quadratic in `r`.
pub fn largest_generalized_eigenvalue(
    lhs: &CsrMatrix,
    rhs: &CsrMatrix,
    constraint: Option<&[f64]>,
    start: Vec<Vec<f64>>,
    opts: &EigenOptions,
) -> Result<EigenEstimate> {
    let exec = opts.cg.exec;
    let n = lhs.n;
    if lhs.values.iter().all(|&v| v == 0.0) {
        return Ok(EigenEstimate { value: 0.0, iterations: 0, residual: 0.0 });
    }
    let project = |v: &mut [f64]| {
        if let Some(m) = constraint {
            let s = dot(m, v, exec) / dot(m, m, exec);
            v.iter_mut().zip(m).for_each(|(vi, mi)| *vi -= s * mi);
        }
    };
    let mut x: Vec<Vec<f64>> = start
        .into_iter()
        .filter(|v| v.len() == n)
        .map(|mut v| {
            project(&mut v);
            v
        })
        .collect();
    if x.is_empty() {
        return Err(Error::Config("eigenvalue iteration needs a start vector".into()));
    }
    let (mut x, mut theta) = rayleigh_ritz(lhs, rhs, &x.drain(..).collect::<Vec<_>>(), exec)?;

    for it in 1..=opts.max_iter {
        let mut y = Vec::with_capacity(x.len());
        for (xj, &tj) in x.iter().zip(&theta) {
            let lx = lhs.mul(xj, exec);
            let mut yj: Vec<f64> = xj.iter().map(|v| tj * v).collect();
            pcg(rhs, &lx, &mut yj, constraint, &opts.cg)?;
            project(&mut yj);
            y.push(yj);
        }
        // Residual of the top pair: with ‖x‖_R = 1, R⁻¹L x − θ x.
        let d: Vec<f64> = y[0].iter().zip(&x[0]).map(|(yi, xi)| yi - theta[0] * xi).collect();
        let rd = rhs.mul(&d, exec);
        let residual = dot(&d, &rd, exec).max(0.0).sqrt() / theta[0].max(f64::MIN_POSITIVE);
        if residual * residual <= 0.1 * opts.tol {
            return Ok(EigenEstimate { value: theta[0], iterations: it, residual });
        }
        if it == opts.max_iter {
            return Err(Error::NoConvergence { iterations: it, residual });
        }
        (x, theta) = rayleigh_ritz(lhs, rhs, &y, exec)?;
    }
    Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY })
}

/// Ritz pairs of `L v = λ R v` on `span vs`, sorted by decreasing value and
/// normalised to `‖v‖_R = 1`. Directions the basis cannot resolve are
/// dropped.
fn rayleigh_ritz(lhs: &CsrMatrix, rhs: &CsrMatrix, vs: &[Vec<f64>], exec: ExecPolicy) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let k = vs.len();
    let lv: Vec<Vec<f64>> = vs.iter().map(|v| lhs.mul(v, exec)).collect();
    let rv: Vec<Vec<f64>> = vs.iter().map(|v| rhs.mul(v, exec)).collect();
    let a = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&vs[i], &lv[j], exec) + dot(&vs[j], &lv[i], exec)));
    let b = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&vs[i], &rv[j], exec) + dot(&vs[j], &rv[i], exec)));
    // Orthonormalise in the R inner product through the eigenbasis of B,
    // discarding near-dependent directions.
    let be = SymmetricEigen::new(b);
    let bmax = be.eigenvalues.max();
    let keep: Vec<usize> = (0..k).filter(|&i| be.eigenvalues[i] > 1e-12 * bmax).collect();
    if keep.is_empty() {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let w = DMatrix::from_fn(k, keep.len(), |i, j| be.eigenvectors[(i, keep[j])] / be.eigenvalues[keep[j]].sqrt());
    let c = w.transpose() * a * &w;
    let ce = SymmetricEigen::new((&c + c.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&i, &j| ce.eigenvalues[j].total_cmp(&ce.eigenvalues[i]));
    let coeffs = w * ce.eigenvectors;
    let mut out = Vec::with_capacity(order.len());
    let mut theta = Vec::with_capacity(order.len());
    for &o in &order {
        let mut v = vec![0.0; lhs.n];
        for (i, vi) in vs.iter().enumerate() {
            let c = coeffs[(i, o)];
            v.iter_mut().zip(vi).for_each(|(a, b)| *a += c * b);
        }
        out.push(v);
        theta.push(ce.eigenvalues[o]);
    }
    Ok((out, theta))
}

pub fn discrete_trace_constant(mesh: &TriMesh, pf: &PhaseField, quad: &ElementQuadrature) -> Result<f64> {
    let ops = InequalityOperators::assemble(mesh, pf, quad, ExecPolicy::default())?;
    ops.trace_constant(&EigenOptions::default()).map(|e| e.value)
}

pub fn discrete_poincare_friedrichs_constant(mesh: &TriMesh, pf: &PhaseField, quad: &ElementQuadrature) -> Result<f64> {
    let ops = InequalityOperators::assemble(mesh, pf, quad, ExecPolicy::default())?;
    ops.poincare_friedrichs_constant(&EigenOptions::default()).map(|e| e.value)
}

pub fn discrete_poincare_mean_constant(mesh: &TriMesh, pf: &PhaseField, quad: &ElementQuadrature) -> Result<f64> {
    let ops = InequalityOperators::assemble(mesh, pf, quad, ExecPolicy::default())?;
    ops.poincare_mean_constant(&EigenOptions::default()).map(|e| e.value)
}
