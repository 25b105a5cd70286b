//! Diffuse volume and surface integrals, their sharp counterparts and
//! ε-convergence studies of the difference.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::geometry::{ComputationalBox, Point2, SharpDomain};
use crate::mesh::{
    build_structured_mesh_capped, element_band, push_inside_points, quadrature_points, ElementBand,
    ElementQuadrature, TriMesh, TriangleRule, DEFAULT_VERTEX_CAP,
};
use crate::phasefield::{PhaseField, SProfile};

/// Default refinement depth for elements cut by the sharp boundary.
pub const SHARP_DEPTH: usize = 4;

pub(crate) const ELEMENT_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothness {
    Smooth,
    /// `|x - pole|^(-mu)`-type singularity.
    SingularLp { mu: f64, pole: Point2 },
}

/// A scalar integrand on the plane.
#[derive(Clone)]
pub struct ScalarField {
    eval: Arc<dyn Fn(Point2) -> f64 + Send + Sync>,
    pub smoothness: Smoothness,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("smoothness", &self.smoothness).finish_non_exhaustive()
    }
}

impl ScalarField {
    pub fn smooth(f: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { eval: Arc::new(f), smoothness: Smoothness::Smooth }
    }

    pub fn constant(c: f64) -> Self {
        Self::smooth(move |_| c)
    }

    /// `|x - pole|^(-mu)`.
    pub fn inverse_power(pole: Point2, mu: f64) -> Self {
        ScalarField {
            eval: Arc::new(move |p| (p - pole).norm().powf(-mu)),
            smoothness: Smoothness::SingularLp { mu, pole },
        }
    }

    #[inline]
    pub fn eval(&self, p: Point2) -> f64 {
        (self.eval)(p)
    }
}

#[inline]
fn sample(h: &ScalarField, p: Point2) -> Result<f64> {
    let v = h.eval(p);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteSample(p))
    }
}

fn reduce(parts: Vec<Result<f64>>) -> Result<f64> {
    parts.into_iter().try_fold(0.0, |acc, r| r.map(|v| acc + v))
}

/// Quadrature approximation of `∫_Ω h ω dx`.
pub fn diffuse_volume_integral(
    h: &ScalarField,
    pf: &PhaseField,
    mesh: &TriMesh,
    quad: &ElementQuadrature,
    exec: ExecPolicy,
) -> Result<f64> {
    let parts = exec.map_chunks(mesh.n_triangles(), ELEMENT_CHUNK, |range| {
        let mut pts = Vec::new();
        let mut acc = 0.0;
        for t in range {
            let tri = mesh.triangle(t);
            if element_band(&tri, &pf.domain, pf.eps) == ElementBand::Outside {
                continue;
            }
            quadrature_points(&tri, quad, pf, &mut pts);
            for &(p, w) in &pts {
                let omega = pf.omega(p);
                if omega != 0.0 {
                    acc += w * omega * sample(h, p)?;
                }
            }
        }
        Ok(acc)
    });
    reduce(parts)
}

/// Quadrature approximation of `∫_Ω h |∇ω| dx`.
pub fn diffuse_surface_integral(
    h: &ScalarField,
    pf: &PhaseField,
    mesh: &TriMesh,
    quad: &ElementQuadrature,
    exec: ExecPolicy,
) -> Result<f64> {
    let parts = exec.map_chunks(mesh.n_triangles(), ELEMENT_CHUNK, |range| {
        let mut pts = Vec::new();
        let mut acc = 0.0;
        for t in range {
            let tri = mesh.triangle(t);
            if element_band(&tri, &pf.domain, pf.eps) != ElementBand::Band {
                continue;
            }
            quadrature_points(&tri, quad, pf, &mut pts);
            for &(p, w) in &pts {
                let density = pf.grad_omega_magnitude(p);
                if density != 0.0 {
                    acc += w * density * sample(h, p)?;
                }
            }
        }
        Ok(acc)
    });
    reduce(parts)
}

/// Reference `∫_D h dx` with boundary elements refined `depth` times.
pub fn sharp_volume_integral(
    h: &ScalarField,
    domain: &SharpDomain,
    mesh: &TriMesh,
    rule: &TriangleRule,
    depth: usize,
    exec: ExecPolicy,
) -> Result<f64> {
    let parts = exec.map_chunks(mesh.n_triangles(), ELEMENT_CHUNK, |range| {
        let mut pts = Vec::new();
        let mut acc = 0.0;
        for t in range {
            pts.clear();
            push_inside_points(&mesh.triangle(t), rule, domain, depth, &mut pts);
            for &(p, w) in &pts {
                acc += w * sample(h, p)?;
            }
        }
        Ok(acc)
    });
    reduce(parts)
}

/// Reference `∫_{∂D} g dσ`.
pub fn sharp_surface_integral(g: &ScalarField, domain: &SharpDomain, order: usize) -> Result<f64> {
    domain
        .boundary_quadrature(order)
        .into_iter()
        .try_fold(0.0, |acc, (p, w)| sample(g, p).map(|v| acc + w * v))
}

/// Pairwise experimental orders `log2(e_k / e_{k+1})`.
pub fn eoc(errors: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = errors.iter().enumerate().find(|(_, &e)| !(e > 0.0)) {
        return Err(Error::NonPositiveError { index, value });
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralErrorRow {
    pub eps: f64,
    pub diffuse_value: f64,
    pub sharp_value: f64,
    pub error: f64,
    pub h: f64,
}

impl IntegralErrorRow {
    fn new(eps: f64, diffuse_value: f64, sharp_value: f64, h: f64) -> Self {
        IntegralErrorRow { eps, diffuse_value, sharp_value, error: (diffuse_value - sharp_value).abs(), h }
    }
}

/// How the study picks a mesh for each ε: `h = gamma ε²`, coarsened if the
/// vertex count would exceed `vertex_cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshPolicy {
    pub gamma: f64,
    pub vertex_cap: usize,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        MeshPolicy { gamma: 0.5, vertex_cap: DEFAULT_VERTEX_CAP }
    }
}

impl MeshPolicy {
    /// Mesh size for `eps` on `bx`.
    pub fn mesh_size(&self, bx: &ComputationalBox, eps: f64) -> f64 {
        let target = self.gamma * eps * eps;
        // Smallest h whose grid still fits under the cap.
        let side = (self.vertex_cap as f64).sqrt().floor() - 1.0;
        let floor = (bx.width().max(bx.height()) / side) * (1.0 + 1e-9);
        target.max(floor)
    }

    pub fn build(&self, bx: &ComputationalBox, eps: f64) -> Result<TriMesh> {
        build_structured_mesh_capped(bx, self.mesh_size(bx, eps), self.vertex_cap)
    }
}

/// Common set-up of an ε-sweep over one domain and profile.
#[derive(Debug, Clone)]
pub struct StudySetup {
    pub profile: SProfile,
    pub domain: SharpDomain,
    pub eps_list: Vec<f64>,
    pub mesh_policy: MeshPolicy,
    pub quad: ElementQuadrature,
    pub sharp_depth: usize,
    pub exec: ExecPolicy,
}

impl StudySetup {
    pub fn new(profile: SProfile, domain: SharpDomain, eps_list: Vec<f64>) -> Self {
        StudySetup {
            profile,
            domain,
            eps_list,
            mesh_policy: MeshPolicy::default(),
            quad: ElementQuadrature::default(),
            sharp_depth: SHARP_DEPTH,
            exec: ExecPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_eps_list(&self.eps_list, 3)?;
        for &e in &self.eps_list {
            self.domain.check_eps(e)?;
        }
        Ok(())
    }

    /// Box holding `D_eps` for the widest ε with a quarter of that width
    /// to spare.
    pub fn computational_box(&self) -> ComputationalBox {
        let eps_max = self.eps_list.iter().copied().fold(0.0, f64::max);
        ComputationalBox::around(&self.domain, 1.25 * eps_max)
    }
}

pub fn validate_eps_list(eps_list: &[f64], min_len: usize) -> Result<()> {
    if eps_list.len() < min_len {
        return Err(Error::Config(format!(
            "eps_list needs at least {min_len} entries, got {}",
            eps_list.len()
        )));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Config("eps_list entries must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps_list must be strictly decreasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralStudy {
    pub rows: Vec<IntegralErrorRow>,
    pub eoc: Vec<f64>,
}

impl IntegralStudy {
    fn from_rows(rows: Vec<IntegralErrorRow>) -> Self {
        let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
        // Exact zeros (e.g. odd integrands) leave the rate undefined.
        let eoc = eoc(&errors).unwrap_or_else(|_| vec![f64::NAN; errors.len().saturating_sub(1)]);
        IntegralStudy { rows, eoc }
    }

    /// CSV with header `eps,diffuse,sharp,error,eoc`; the first row has an
    /// empty rate.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "eps,diffuse,sharp,error,eoc")?;
        for (k, r) in self.rows.iter().enumerate() {
            let rate = if k == 0 { String::new() } else { format!("{:.6}", self.eoc[k - 1]) };
            writeln!(
                out,
                "{},{:.12e},{:.12e},{:.12e},{}",
                r.eps, r.diffuse_value, r.sharp_value, r.error, rate
            )?;
        }
        Ok(())
    }
}

/// `E_V(ε) = ∫_Ω h ω dx − ∫_D h dx` over the configured ε list.
pub fn volume_error_study(h: &ScalarField, setup: &StudySetup) -> Result<IntegralStudy> {
    setup.validate()?;
    let bx = setup.computational_box();
    let eps_min = *setup.eps_list.last().expect("validated");
    let finest = setup.mesh_policy.build(&bx, eps_min)?;
    let sharp = sharp_volume_integral(h, &setup.domain, &finest, &setup.quad.base_rule, setup.sharp_depth, setup.exec)?;
    drop(finest);

    let mut rows = Vec::with_capacity(setup.eps_list.len());
    for &eps in &setup.eps_list {
        let pf = PhaseField::new(setup.profile.clone(), eps, setup.domain)?;
        let mesh = setup.mesh_policy.build(&bx, eps)?;
        let diffuse = diffuse_volume_integral(h, &pf, &mesh, &setup.quad, setup.exec)?;
        rows.push(IntegralErrorRow::new(eps, diffuse, sharp, mesh.h));
    }
    Ok(IntegralStudy::from_rows(rows))
}

/// `E_B(ε) = ∫_Ω g |∇ω| dx − ∫_{∂D} g dσ` over the configured ε list.
pub fn surface_error_study(g: &ScalarField, setup: &StudySetup) -> Result<IntegralStudy> {
    setup.validate()?;
    let bx = setup.computational_box();
    let sharp = sharp_surface_integral(g, &setup.domain, 32)?;
    let mut rows = Vec::with_capacity(setup.eps_list.len());
    for &eps in &setup.eps_list {
        let pf = PhaseField::new(setup.profile.clone(), eps, setup.domain)?;
        let mesh = setup.mesh_policy.build(&bx, eps)?;
        let diffuse = diffuse_surface_integral(g, &pf, &mesh, &setup.quad, setup.exec)?;
        rows.push(IntegralErrorRow::new(eps, diffuse, sharp, mesh.h));
    }
    Ok(IntegralStudy::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;
    use std::f64::consts::PI;

    #[test]
    fn eoc_examples() {
        let r = eoc(&[0.199128, 0.049532]).unwrap();
        assert!((r[0] - 2.01).abs() < 0.005);
        let r = eoc(&[0.337471, 0.126688]).unwrap();
        assert!((r[0] - 1.41).abs() < 0.005);
        assert_eq!(eoc(&[8.0, 4.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(eoc(&[1.0, 0.0]), Err(Error::NonPositiveError { index: 1, .. })));
    }

    #[test]
    fn zero_integrand_integrates_to_zero() {
        let domain = SharpDomain::disk(Point2::default(), 0.5f64.sqrt()).unwrap();
        let pf = PhaseField::new(SProfile::Linear, 0.1, domain).unwrap();
        let bx = ComputationalBox::around(&domain, 0.2);
        let mesh = build_structured_mesh(&bx, 0.05).unwrap();
        let q = ElementQuadrature::default();
        let zero = ScalarField::constant(0.0);
        assert_eq!(diffuse_volume_integral(&zero, &pf, &mesh, &q, ExecPolicy::Sequential).unwrap(), 0.0);
        assert_eq!(diffuse_surface_integral(&zero, &pf, &mesh, &q, ExecPolicy::Sequential).unwrap(), 0.0);
    }

    #[test]
    fn sharp_volume_examples() {
        let r = 0.5f64.sqrt();
        let domain = SharpDomain::disk(Point2::default(), r).unwrap();
        let bx = ComputationalBox::around(&domain, 0.1);
        let mesh = build_structured_mesh(&bx, 0.02).unwrap();
        let rule = TriangleRule::degree4();
        let run = |h: ScalarField| {
            sharp_volume_integral(&h, &domain, &mesh, &rule, SHARP_DEPTH, ExecPolicy::Sequential).unwrap()
        };
        let area = run(ScalarField::constant(1.0));
        assert!((area - PI / 2.0).abs() < 1e-3 * PI / 2.0);
        assert!(run(ScalarField::smooth(|p| p.x)).abs() < 1e-6);
        let second = run(ScalarField::smooth(|p| p.x * p.x + p.y * p.y));
        let exact = PI * r.powi(4) / 2.0;
        assert!((second - exact).abs() < 1e-3 * exact);
    }

    #[test]
    fn singular_sample_fails_loudly() {
        let domain = SharpDomain::disk(Point2::default(), 0.5).unwrap();
        let bx = ComputationalBox::around(&domain, 0.2);
        let mesh = build_structured_mesh(&bx, 0.1).unwrap();
        // Pole exactly on a quadrature node of the first element.
        let mut pts = Vec::new();
        TriangleRule::degree4().push_points(&mesh.triangle(0), &mut pts);
        let h = ScalarField::inverse_power(pts[0].0, 1.0);
        let res = sharp_volume_integral(
            &h,
            &SharpDomain::disk(Point2::new(-0.7, -0.7), 0.3).unwrap(),
            &mesh,
            &TriangleRule::degree4(),
            0,
            ExecPolicy::Sequential,
        );
        assert!(matches!(res, Err(Error::NonFiniteSample(_))));
    }

    #[test]
    fn eps_list_validation() {
        assert!(validate_eps_list(&[0.5, 0.25, 0.125], 3).is_ok());
        assert!(validate_eps_list(&[0.5, 0.6, 0.1], 3).is_err());
        assert!(validate_eps_list(&[0.5, 0.25], 3).is_err());
    }

    #[test]
    fn mesh_policy_respects_cap() {
        let bx = ComputationalBox::new(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0)).unwrap();
        let policy = MeshPolicy { gamma: 0.5, vertex_cap: 10_000 };
        let h = policy.mesh_size(&bx, 1.0 / 32.0);
        assert!(h > 0.5 / 1024.0);
        let mesh = policy.build(&bx, 1.0 / 32.0).unwrap();
        assert!(mesh.n_vertices() <= 10_000);
        assert_eq!(policy.mesh_size(&bx, 0.25), 0.5 / 16.0);
    }

    #[test]
    fn csv_layout() {
        let study = IntegralStudy::from_rows(vec![
            IntegralErrorRow::new(0.5, 1.5, 1.0, 0.1),
            IntegralErrorRow::new(0.25, 1.125, 1.0, 0.1),
        ]);
        let mut buf = Vec::new();
        study.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "eps,diffuse,sharp,error,eoc");
        assert!(lines[1].ends_with(','));
        assert!(lines[2].ends_with(",2.000000"));
    }
}
