//! Assembly and solution of the diffuse weak forms with linear elements.
//!
//! For a phase field `ω` the Robin problem reads: find `u` with
//!
//! ```text
//! ∫ A∇u·∇v + c u v dω + ∫ b u v |∇ω| dx = ∫ f v dω + ∫ g v |∇ω| dx
//! ```
//!
//! for all test functions `v`. The penalised Dirichlet problem is the Robin
//! problem with `b = 1/β` and datum `g/β`, `β = ε^σ`. The Neumann problem
//! drops the boundary mass and pins the weighted mean `∫ u dω` to zero.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::geometry::Point2;
use crate::mesh::{element_band, quadrature_points, ElementBand, ElementQuadrature, P1Element, TriMesh};
use crate::phasefield::PhaseField;
use crate::solver::{pcg, CgOptions, CgReport};
use crate::sparse::{norm2, CsrMatrix};

/// Elements whose summed weight `∫ ω + |∇ω|` falls below this are dropped
/// and vertices touching only such elements carry no unknown.
pub const INACTIVE_WEIGHT: f64 = 1e-14;

const ELEMENT_CHUNK: usize = 1024;

pub type Mat2 = [[f64; 2]; 2];
pub type Field<T> = Arc<dyn Fn(Point2) -> T + Send + Sync>;

/// PDE data. `robin` is only read for [`BcKind::Robin`].
#[derive(Clone)]
pub struct Coefficients {
    pub diffusion: Field<Mat2>,
    pub reaction: Field<f64>,
    pub source: Field<f64>,
    pub boundary: Field<f64>,
    pub robin: Field<f64>,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Coefficients { .. }")
    }
}

impl Default for Coefficients {
    /// `A = I`, `c = 1`, `b = 1`, `f = g = 0`.
    fn default() -> Self {
        Coefficients {
            diffusion: Arc::new(|_| IDENTITY),
            reaction: Arc::new(|_| 1.0),
            source: Arc::new(|_| 0.0),
            boundary: Arc::new(|_| 0.0),
            robin: Arc::new(|_| 1.0),
        }
    }
}

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

impl Coefficients {
    pub fn with_diffusion(mut self, a: impl Fn(Point2) -> Mat2 + Send + Sync + 'static) -> Self {
        self.diffusion = Arc::new(a);
        self
    }

    pub fn with_reaction(mut self, c: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        self.reaction = Arc::new(c);
        self
    }

    pub fn with_source(mut self, f: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Arc::new(f);
        self
    }

    pub fn with_boundary(mut self, g: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary = Arc::new(g);
        self
    }

    pub fn with_robin(mut self, b: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        self.robin = Arc::new(b);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcKind {
    Robin,
    /// Penalty `β = ε^sigma`.
    DirichletPenalty { sigma: f64 },
    Neumann,
}

impl BcKind {
    /// `(boundary mass factor, datum factor)` applied to `b` and `g`.
    fn boundary_scaling(&self, eps: f64) -> (Option<f64>, f64) {
        match *self {
            BcKind::Robin => (Some(1.0), 1.0),
            BcKind::DirichletPenalty { sigma } => {
                let inv_beta = eps.powf(-sigma);
                (Some(inv_beta), inv_beta)
            }
            BcKind::Neumann => (None, 1.0),
        }
    }
}

/// Map between mesh vertices and the unknowns of an assembled system.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// `u32::MAX` marks inactive vertices.
    pub dof_of_vertex: Vec<u32>,
    pub vertex_of_dof: Vec<u32>,
}

impl DofMap {
    pub const INACTIVE: u32 = u32::MAX;

    pub fn n_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.dof_of_vertex.len()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        match self.dof_of_vertex[vertex] {
            Self::INACTIVE => None,
            d => Some(d as usize),
        }
    }

    /// Restricts nodal values to the active unknowns.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.vertex_of_dof.iter().map(|&v| nodal[v as usize]).collect()
    }

    /// Extends unknowns to all vertices with zeros elsewhere.
    pub fn extend(&self, x: &[f64]) -> FeFunction {
        let mut values = vec![0.0; self.n_vertices()];
        for (d, &v) in self.vertex_of_dof.iter().enumerate() {
            values[v as usize] = x[d];
        }
        FeFunction { values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    /// Weighted-mean row `∫ φ_i dω`, present for Neumann problems.
    pub constraint: Option<Vec<f64>>,
    /// Smallest and largest eigenvalue of `A` seen at quadrature nodes.
    pub ellipticity: (f64, f64),
}

impl AssembledSystem {
    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    /// Ellipticity constant `κ` with `κ⁻¹|ξ|² ≤ ξ·Aξ ≤ κ|ξ|²`.
    pub fn kappa(&self) -> f64 {
        let (lo, hi) = self.ellipticity;
        (1.0 / lo).max(hi)
    }

    /// Largest Galerkin residual `|a(u, φ_i) − ℓ(φ_i)|` over the active basis,
    /// including the constraint multiplier for Neumann problems.
    pub fn galerkin_residual(&self, u: &FeFunction, exec: ExecPolicy) -> f64 {
        let x = self.dofs.restrict(&u.values);
        let ax = self.matrix.mul(&x, exec);
        let mut r: Vec<f64> = self.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        if let Some(m) = &self.constraint {
            let mm: f64 = m.iter().map(|v| v * v).sum();
            let s: f64 = m.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / mm;
            r.iter_mut().zip(m).for_each(|(ri, mi)| *ri -= s * mi);
        }
        r.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Scale the Galerkin residual is measured against: `‖rhs‖₂`.
    pub fn residual_scale(&self) -> f64 {
        norm2(&self.rhs, ExecPolicy::Sequential)
    }
}

/// Nodal values of a continuous piecewise linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub values: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(n: usize) -> Self {
        FeFunction { values: vec![0.0; n] }
    }

    pub fn interpolate(mesh: &TriMesh, f: impl Fn(Point2) -> f64) -> Self {
        FeFunction { values: mesh.vertices.iter().map(|&p| f(p)).collect() }
    }

    /// Value and gradient at `p`, or `None` outside the mesh.
    pub fn eval(&self, mesh: &TriMesh, p: Point2) -> Option<(f64, Point2)> {
        let t = mesh.locate(p)?;
        let el = P1Element::new(&mesh.triangle(t)).ok()?;
        Some(self.eval_on(mesh, t, &el, p))
    }

    #[inline]
    pub fn eval_on(&self, mesh: &TriMesh, t: usize, el: &P1Element, p: Point2) -> (f64, Point2) {
        let idx = mesh.triangles[t];
        let s = el.shape_values(p);
        let mut v = 0.0;
        let mut g = Point2::default();
        for k in 0..3 {
            let u = self.values[idx[k] as usize];
            v += u * s[k];
            g = g + el.gradients[k] * u;
        }
        (v, g)
    }

    /// CSV `vertex_index,x,y,value`.
    pub fn write_csv<W: Write>(&self, mesh: &TriMesh, mut out: W) -> io::Result<()> {
        writeln!(out, "vertex_index,x,y,value")?;
        for (i, (p, v)) in mesh.vertices.iter().zip(&self.values).enumerate() {
            writeln!(out, "{i},{},{},{:.15e}", p.x, p.y, v)?;
        }
        Ok(())
    }
}

/// Per-element result of a quadrature kernel: `M` local matrices and `V`
/// local vectors.
pub(crate) struct ElementLocal<const M: usize, const V: usize> {
    pub tri: u32,
    pub mats: [[[f64; 3]; 3]; M],
    pub vecs: [[f64; 3]; V],
}

/// Quadrature data handed to element kernels.
pub(crate) struct QuadSample {
    pub p: Point2,
    pub w: f64,
    pub omega: f64,
    pub density: f64,
    pub shape: [f64; 3],
}

/// Runs `kernel` over all elements touching the support of `ω`, drops the
/// ones below [`INACTIVE_WEIGHT`] and scatters the survivors into matrices
/// sharing one sparsity pattern.
pub(crate) fn assemble_with<const M: usize, const V: usize, K>(
    mesh: &TriMesh,
    quad: &ElementQuadrature,
    pf: &PhaseField,
    exec: ExecPolicy,
    kernel: K,
) -> Result<(DofMap, [CsrMatrix; M], [Vec<f64>; V])>
where
    K: Fn(&P1Element, &[QuadSample], &mut ElementLocal<M, V>) -> Result<()> + Sync + Send,
{
    let chunks = exec.map_chunks(mesh.n_triangles(), ELEMENT_CHUNK, |range| -> Result<Vec<ElementLocal<M, V>>> {
        let mut pts = Vec::new();
        let mut samples = Vec::new();
        let mut out = Vec::new();
        for t in range {
            let tri = mesh.triangle(t);
            if element_band(&tri, &pf.domain, pf.eps) == ElementBand::Outside {
                continue;
            }
            let el = P1Element::new(&tri)?;
            quadrature_points(&tri, quad, pf, &mut pts);
            samples.clear();
            let mut weight = 0.0;
            for &(p, w) in &pts {
                let (omega, density) = pf.weights(p);
                weight += w * (omega + density);
                if omega != 0.0 || density != 0.0 {
                    samples.push(QuadSample { p, w, omega, density, shape: el.shape_values(p) });
                }
            }
            if weight < INACTIVE_WEIGHT {
                continue;
            }
            let mut local = ElementLocal { tri: t as u32, mats: [[[0.0; 3]; 3]; M], vecs: [[0.0; 3]; V] };
            kernel(&el, &samples, &mut local)?;
            out.push(local);
        }
        Ok(out)
    });
    let mut locals = Vec::new();
    for c in chunks {
        locals.extend(c?);
    }
    if locals.is_empty() {
        return Err(Error::EmptySystem);
    }

    let mut dof_of_vertex = vec![DofMap::INACTIVE; mesh.n_vertices()];
    for l in &locals {
        for &v in &mesh.triangles[l.tri as usize] {
            dof_of_vertex[v as usize] = 0;
        }
    }
    let mut vertex_of_dof = Vec::new();
    for (v, d) in dof_of_vertex.iter_mut().enumerate() {
        if *d == 0 {
            *d = vertex_of_dof.len() as u32;
            vertex_of_dof.push(v as u32);
        }
    }
    let dofs = DofMap { dof_of_vertex, vertex_of_dof };
    let element_dofs: Vec<[u32; 3]> = locals
        .iter()
        .map(|l| mesh.triangles[l.tri as usize].map(|v| dofs.dof_of_vertex[v as usize]))
        .collect();

    let pattern = CsrMatrix::from_triples_pattern(dofs.n_dofs(), &element_dofs);
    let mut mats: [CsrMatrix; M] = std::array::from_fn(|_| pattern.zeros_like());
    let mut vecs: [Vec<f64>; V] = std::array::from_fn(|_| vec![0.0; dofs.n_dofs()]);
    for (l, ed) in locals.iter().zip(&element_dofs) {
        for a in 0..3 {
            let row = ed[a] as usize;
            for (mat, local) in mats.iter_mut().zip(&l.mats) {
                let start = mat.row_ptr[row];
                let end = mat.row_ptr[row + 1];
                for b in 0..3 {
                    let k = start
                        + mat.col_idx[start..end]
                            .iter()
                            .position(|&c| c == ed[b])
                            .expect("pattern covers element");
                    mat.values[k] += local[a][b];
                }
            }
            for (vec, local) in vecs.iter_mut().zip(&l.vecs) {
                vec[row] += local[a];
            }
        }
    }
    Ok((dofs, mats, vecs))
}

fn sym_eigs(a: &Mat2) -> (f64, f64) {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

/// Assembles the diffuse problem of kind `bc` on the active part of `mesh`.
pub fn assemble(
    mesh: &TriMesh,
    quad: &ElementQuadrature,
    pf: &PhaseField,
    coeffs: &Coefficients,
    bc: BcKind,
    exec: ExecPolicy,
) -> Result<AssembledSystem> {
    let (mass_factor, datum_factor) = bc.boundary_scaling(pf.eps);
    let robin = bc == BcKind::Robin;
    let ellipticity = std::sync::Mutex::new((f64::INFINITY, 0.0f64));

    let (dofs, [matrix], [rhs, mean]) = assemble_with::<1, 2, _>(mesh, quad, pf, exec, |el, samples, local| {
        let g = &el.gradients;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let k = &mut local.mats[0];
        for s in samples {
            if s.omega > 0.0 {
                let a = (coeffs.diffusion)(s.p);
                let (l, h) = sym_eigs(&a);
                if !(l > 0.0) || (a[0][1] - a[1][0]).abs() > 1e-12 * h.abs().max(1.0) {
                    return Err(Error::EllipticityViolation { at: s.p, min_eig: l });
                }
                lo = lo.min(l);
                hi = hi.max(h);
                let c = (coeffs.reaction)(s.p);
                let f = (coeffs.source)(s.p);
                if !(c.is_finite() && f.is_finite()) {
                    return Err(Error::NonFiniteSample(s.p));
                }
                let wo = s.w * s.omega;
                for i in 0..3 {
                    let agi = Point2::new(
                        a[0][0] * g[i].x + a[0][1] * g[i].y,
                        a[1][0] * g[i].x + a[1][1] * g[i].y,
                    );
                    for j in i..3 {
                        k[i][j] += wo * (agi.dot(g[j]) + c * s.shape[i] * s.shape[j]);
                    }
                    local.vecs[0][i] += wo * f * s.shape[i];
                    local.vecs[1][i] += wo * s.shape[i];
                }
            }
            if s.density > 0.0 {
                let wd = s.w * s.density;
                let gval = (coeffs.boundary)(s.p) * datum_factor;
                if !gval.is_finite() {
                    return Err(Error::NonFiniteSample(s.p));
                }
                if let Some(factor) = mass_factor {
                    let b = (coeffs.robin)(s.p);
                    if robin && !(b > 0.0) {
                        return Err(Error::Config(format!(
                            "Robin coefficient must be positive (got {b} at ({}, {})); use the Neumann problem for b = 0",
                            s.p.x, s.p.y
                        )));
                    }
                    let beff = if robin { b } else { factor };
                    for i in 0..3 {
                        for j in i..3 {
                            k[i][j] += wd * beff * s.shape[i] * s.shape[j];
                        }
                    }
                }
                for i in 0..3 {
                    local.vecs[0][i] += wd * gval * s.shape[i];
                }
            }
        }
        for i in 0..3 {
            for j in 0..i {
                k[i][j] = k[j][i];
            }
        }
        if lo.is_finite() {
            let mut e = ellipticity.lock().expect("ellipticity lock");
            e.0 = e.0.min(lo);
            e.1 = e.1.max(hi);
        }
        Ok(())
    })?;

    let ellipticity = ellipticity.into_inner().expect("ellipticity lock");
    Ok(AssembledSystem {
        matrix,
        rhs,
        dofs,
        constraint: (bc == BcKind::Neumann).then_some(mean),
        ellipticity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub n_dofs: usize,
    pub cg: CgReport,
}

/// Solves an assembled system, optionally from an initial nodal guess.
pub fn solve_cg(
    system: &AssembledSystem,
    opts: &CgOptions,
    initial: Option<&FeFunction>,
) -> Result<(FeFunction, SolveReport)> {
    let mut x = match initial {
        Some(u) => system.dofs.restrict(&u.values),
        None => vec![0.0; system.n_dofs()],
    };
    let cg = pcg(&system.matrix, &system.rhs, &mut x, system.constraint.as_deref(), opts)?;
    Ok((system.dofs.extend(&x), SolveReport { n_dofs: system.n_dofs(), cg }))
}

/// Assembly followed by [`solve_cg`].
pub fn solve_diffuse_problem(
    mesh: &TriMesh,
    quad: &ElementQuadrature,
    pf: &PhaseField,
    coeffs: &Coefficients,
    bc: BcKind,
    opts: &CgOptions,
) -> Result<(FeFunction, AssembledSystem, SolveReport)> {
    let system = assemble(mesh, quad, pf, coeffs, bc, opts.exec)?;
    let (u, report) = solve_cg(&system, opts, None)?;
    Ok((u, system, report))
}

/// `∫ u dω / ∫ dω` for the weighted-mean row of an assembled system.
pub fn weighted_mean(system: &AssembledSystem, u: &FeFunction) -> Option<f64> {
    let m = system.constraint.as_ref()?;
    let x = system.dofs.restrict(&u.values);
    let total: f64 = m.iter().sum();
    Some(m.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ComputationalBox, SharpDomain};
    use crate::mesh::build_structured_mesh;
    use crate::phasefield::SProfile;

    fn setup(eps: f64, h: f64) -> (TriMesh, PhaseField) {
        let domain = SharpDomain::disk(Point2::default(), 0.5f64.sqrt()).unwrap();
        let pf = PhaseField::new(SProfile::Linear, eps, domain).unwrap();
        let bx = ComputationalBox::around(&domain, 1.25 * eps);
        (build_structured_mesh(&bx, h).unwrap(), pf)
    }

    #[test]
    fn zero_data_gives_zero_rhs() {
        let (mesh, pf) = setup(0.25, 0.1);
        let sys = assemble(&mesh, &ElementQuadrature::default(), &pf, &Coefficients::default(), BcKind::Robin, ExecPolicy::Sequential)
            .unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        assert!(sys.matrix.is_symmetric(0.0));
        assert!(sys.n_dofs() < mesh.n_vertices());
    }

    #[test]
    fn neumann_stiffness_annihilates_constants() {
        let (mesh, pf) = setup(0.25, 0.1);
        let coeffs = Coefficients::default().with_reaction(|_| 0.0);
        let sys = assemble(&mesh, &ElementQuadrature::default(), &pf, &coeffs, BcKind::Neumann, ExecPolicy::Sequential)
            .unwrap();
        let ones = vec![1.0; sys.n_dofs()];
        let y = sys.matrix.mul(&ones, ExecPolicy::Sequential);
        assert!(y.iter().all(|v| v.abs() < 1e-10));
        assert!(sys.constraint.is_some());
    }

    #[test]
    fn constants_are_reproduced_exactly() {
        // u = 1 with A = I, c = b = 1 needs f = 1 and g = 1.
        let (mesh, pf) = setup(0.25, 0.05);
        let coeffs = Coefficients::default().with_source(|_| 1.0).with_boundary(|_| 1.0);
        let (u, sys, _) = solve_diffuse_problem(
            &mesh,
            &ElementQuadrature::default(),
            &pf,
            &coeffs,
            BcKind::Robin,
            &CgOptions::default(),
        )
        .unwrap();
        for d in 0..sys.n_dofs() {
            let v = sys.dofs.vertex_of_dof[d] as usize;
            assert!((u.values[v] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn indefinite_diffusion_is_rejected() {
        let (mesh, pf) = setup(0.25, 0.1);
        let coeffs = Coefficients::default().with_diffusion(|_| [[1.0, 0.0], [0.0, -1.0]]);
        let res = assemble(&mesh, &ElementQuadrature::default(), &pf, &coeffs, BcKind::Robin, ExecPolicy::Sequential);
        assert!(matches!(res, Err(Error::EllipticityViolation { .. })));
    }

    #[test]
    fn zero_robin_coefficient_is_rejected() {
        let (mesh, pf) = setup(0.25, 0.1);
        let coeffs = Coefficients::default().with_robin(|_| 0.0);
        let res = assemble(&mesh, &ElementQuadrature::default(), &pf, &coeffs, BcKind::Robin, ExecPolicy::Sequential);
        assert!(matches!(res, Err(Error::Config(_))));
    }

    #[test]
    fn empty_support_is_an_error() {
        let domain = SharpDomain::disk(Point2::new(10.0, 10.0), 0.5).unwrap();
        let pf = PhaseField::new(SProfile::Linear, 0.1, domain).unwrap();
        let bx = ComputationalBox::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap();
        let mesh = build_structured_mesh(&bx, 0.25).unwrap();
        let res = assemble(&mesh, &ElementQuadrature::default(), &pf, &Coefficients::default(), BcKind::Robin, ExecPolicy::Sequential);
        assert!(matches!(res, Err(Error::EmptySystem)));
    }

    #[test]
    fn solution_csv_layout() {
        let (mesh, _) = setup(0.25, 0.5);
        let u = FeFunction::interpolate(&mesh, |p| p.x);
        let mut buf = Vec::new();
        u.write_csv(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "vertex_index,x,y,value");
        assert_eq!(text.lines().count(), mesh.n_vertices() + 1);
    }
}
