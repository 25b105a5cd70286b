//! ε-sweeps of the diffuse problem against a reference solution.

use std::time::Instant;

use ddlab_core::analysis::{restricted_errors, ErrorReport, NormKind};
use ddlab_core::fem::{assemble, solve_cg, AssembledSystem, BcKind, Coefficients, FeFunction, SolveReport};
use ddlab_core::integrals::{diffuse_volume_integral, ScalarField};
use ddlab_core::mesh::{build_structured_mesh_capped, ElementQuadrature, TriMesh};
use ddlab_core::{ComputationalBox, Error as CoreError, ExecPolicy, PhaseField, Point2, SProfile, SharpDomain};

use crate::config::{CaseConfig, CaseId, InitialGuess, Reference, SeriesSpec, Solution};
use crate::error::{HarnessError, Result};
use crate::manufactured::Manufactured;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub eps: f64,
    /// Requested mesh size.
    pub h: f64,
    pub h_max: f64,
    pub dofs: usize,
    pub iterations: usize,
    pub cg_residual: f64,
    pub galerkin_residual: f64,
    pub residual_scale: f64,
    pub errors: ErrorReport,
    /// Rate against the previous row, `ln(e_prev/e) / ln(ε_prev/ε)`; empty
    /// on the first row.
    pub eoc: Vec<(NormKind, f64)>,
    pub seconds: f64,
}

impl StudyRow {
    pub fn error(&self, kind: NormKind) -> Option<f64> {
        self.errors.get(kind)
    }

    pub fn rate(&self, kind: NormKind) -> Option<f64> {
        self.eoc.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    pub eps: f64,
    pub reason: String,
}

/// The surrogate reference of a self-convergence series.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolve {
    pub eps: f64,
    pub h_max: f64,
    pub dofs: usize,
    pub iterations: usize,
    pub galerkin_residual: f64,
    pub residual_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub parameter: Option<(String, f64)>,
    pub rows: Vec<StudyRow>,
    pub skipped: Vec<SkippedRow>,
    pub reference: Option<ReferenceSolve>,
    /// Rates of the last pair corrected for the error of a self-convergence
    /// reference, see [`self_convergence_rate`].
    pub corrected_rates: Vec<(NormKind, f64)>,
}

impl Series {
    fn new(spec: &SeriesSpec) -> Self {
        let mut s = Series::named(&spec.label);
        s.parameter = spec.parameter.map(|(k, v)| (k.to_string(), v));
        s
    }

    /// An empty series, e.g. for assembling results by hand.
    pub fn named(label: &str) -> Self {
        Series {
            label: label.to_string(),
            parameter: None,
            rows: Vec::new(),
            skipped: Vec::new(),
            reference: None,
            corrected_rates: Vec::new(),
        }
    }

    /// Rate of the last pair of rows.
    pub fn final_rate(&self, kind: NormKind) -> Option<f64> {
        self.rows.last().and_then(|r| r.rate(kind))
    }

    pub fn corrected_rate(&self, kind: NormKind) -> Option<f64> {
        self.corrected_rates.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
    }

    /// Appends a row (ε decreasing) and fills in its rates.
    pub fn push_row(&mut self, mut row: StudyRow) {
        if let Some(prev) = self.rows.last() {
            let scale = (prev.eps / row.eps).ln();
            row.eoc = row
                .errors
                .errors
                .iter()
                .filter_map(|&(k, e)| prev.error(k).map(|p| (k, (p / e).ln() / scale)))
                .collect();
        }
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub config_hash: String,
    pub reference: Reference,
    pub started_at: String,
    pub finished_at: String,
    pub total_dofs: usize,
    pub total_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub case: CaseId,
    pub norms: Vec<NormKind>,
    pub series: Vec<Series>,
    pub metadata: Metadata,
}

impl StudyResult {
    pub fn empty(case: CaseId, norms: Vec<NormKind>) -> Self {
        StudyResult {
            case,
            norms,
            series: Vec::new(),
            metadata: Metadata {
                config_hash: String::new(),
                reference: Reference::Manufactured,
                started_at: String::new(),
                finished_at: String::new(),
                total_dofs: 0,
                total_iterations: 0,
            },
        }
    }

    pub fn series(&self, label: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.label == label)
    }

    pub fn rows(&self) -> impl Iterator<Item = &StudyRow> {
        self.series.iter().flat_map(|s| &s.rows)
    }

    fn finish(&mut self) {
        self.metadata.finished_at = timestamp();
        self.metadata.total_dofs = self.rows().map(|r| r.dofs).sum::<usize>()
            + self.series.iter().filter_map(|s| s.reference.as_ref()).map(|r| r.dofs).sum::<usize>();
        self.metadata.total_iterations = self.rows().map(|r| r.iterations).sum::<usize>()
            + self.series.iter().filter_map(|s| s.reference.as_ref()).map(|r| r.iterations).sum::<usize>();
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Last-pair rate when the reference sits at half the finest ε: with
/// `e(ε) ≈ C(ε^r − ε_ref^r)` and `ε_k = 4 ε_ref`, `ε_{k+1} = 2 ε_ref`, the
/// error ratio is `2^r + 1`.
pub fn self_convergence_rate(coarse: f64, fine: f64) -> f64 {
    (coarse / fine - 1.0).log2()
}

/// Everything a row needs besides ε.
struct Runner<'a> {
    cfg: &'a CaseConfig,
    domain: SharpDomain,
    profile: SProfile,
    norms: Vec<NormKind>,
    quad: ElementQuadrature,
    exec: ExecPolicy,
}

struct Solved {
    u: FeFunction,
    system: AssembledSystem,
    report: SolveReport,
}

impl Runner<'_> {
    fn solve(&self, mesh: &TriMesh, eps: f64, coeffs: &Coefficients, bc: BcKind, guess: Option<&FeFunction>) -> Result<Solved, CoreError> {
        let pf = PhaseField::new(self.profile.clone(), eps, self.domain)?;
        let system = assemble(mesh, &self.quad, &pf, coeffs, bc, self.exec)?;
        let (u, report) = solve_cg(&system, &self.cfg.cg_options(), guess)?;
        Ok(Solved { u, system, report })
    }

    fn guard(&self, eps: f64, mesh: &TriMesh) -> Result<()> {
        let h_max = mesh.h_max();
        if h_max < eps * eps {
            Ok(())
        } else {
            Err(HarnessError::MeshGuard { eps, h_max })
        }
    }

    fn row(&self, eps: f64, mesh: &TriMesh, s: &Solved, errors: Vec<(NormKind, f64)>, t0: Instant) -> StudyRow {
        StudyRow {
            eps,
            h: mesh.h,
            h_max: mesh.h_max(),
            dofs: s.system.n_dofs(),
            iterations: s.report.cg.iterations,
            cg_residual: s.report.cg.residual,
            galerkin_residual: s.system.galerkin_residual(&s.u, self.exec),
            residual_scale: s.system.residual_scale(),
            errors: ErrorReport { eps, dof_count: s.system.n_dofs(), errors },
            eoc: Vec::new(),
            seconds: t0.elapsed().as_secs_f64(),
        }
    }

    fn coefficients(&self, spec: &SeriesSpec, m: &Manufactured) -> Result<Coefficients> {
        Ok(match &spec.source {
            Some(field) => {
                let f = field.to_field(&self.domain);
                let (c, b) = (self.cfg.case.reaction, self.cfg.case.robin);
                Coefficients::default()
                    .with_source(move |p| f.eval(p))
                    .with_reaction(move |_| c)
                    .with_robin(move |_| b)
            }
            None => m.coefficients(self.domain, spec.bc, self.cfg.case.extension),
        })
    }

    fn manufactured_series(&self, spec: &SeriesSpec, done: &StudyResult) -> Result<Series> {
        let m = self.cfg.manufactured()?;
        let coeffs = self.coefficients(spec, &m)?;
        let mut series = Series::new(spec);
        for &eps in &self.cfg.case.eps_list {
            let t0 = Instant::now();
            let bx = ComputationalBox::around(&self.domain, 1.25 * eps);
            let mesh = match build_structured_mesh_capped(&bx, self.cfg.mesh.gamma * eps * eps, self.cfg.mesh.vertex_cap) {
                Ok(mesh) => mesh,
                Err(e @ CoreError::ResourceLimit { .. }) => {
                    series.skipped.push(SkippedRow { eps, reason: e.to_string() });
                    continue;
                }
                Err(e) => return Err(row_failure(done, series, eps, e)),
            };
            self.guard(eps, &mesh)?;
            match self.manufactured_row(spec, &m, &coeffs, &mesh, eps, true, t0) {
                Ok((row, _)) => series.push_row(row),
                Err(e) => return Err(row_failure(done, series, eps, e)),
            }
        }
        Ok(series)
    }

    /// Solves at one ε and, if `measure`, compares with the manufactured
    /// solution on `D`.
    #[allow(clippy::too_many_arguments)]
    fn manufactured_row(
        &self,
        spec: &SeriesSpec,
        m: &Manufactured,
        coeffs: &Coefficients,
        mesh: &TriMesh,
        eps: f64,
        measure: bool,
        t0: Instant,
    ) -> Result<(StudyRow, FeFunction), CoreError> {
        let guess = (self.cfg.solver.initial_guess == InitialGuess::Reference)
            .then(|| FeFunction::interpolate(mesh, |p| m.value(p)));
        let solved = self.solve(mesh, eps, coeffs, spec.bc, guess.as_ref())?;
        let errors = if measure {
            let shift = if spec.bc == BcKind::Neumann {
                // The discrete solution has zero weighted mean, so compare
                // against the representative with the same mean.
                let pf = PhaseField::new(self.profile.clone(), eps, self.domain)?;
                let mv = m.clone();
                let num = diffuse_volume_integral(&ScalarField::smooth(move |p| mv.value(p)), &pf, mesh, &self.quad, self.exec)?;
                let den = diffuse_volume_integral(&ScalarField::constant(1.0), &pf, mesh, &self.quad, self.exec)?;
                num / den
            } else {
                0.0
            };
            let reference = |p: Point2| {
                let (v, g) = m.value_grad(p);
                (v - shift, g)
            };
            restricted_errors(&solved.u, reference, &self.domain, mesh, &self.norms, self.cfg.mesh.sharp_depth, self.exec)?
        } else {
            Vec::new()
        };
        let row = self.row(eps, mesh, &solved, errors, t0);
        Ok((row, solved.u))
    }

    /// Square box around `D` so both grid directions nest alike.
    fn square_box(&self, margin: f64) -> ComputationalBox {
        let (lo, hi) = self.domain.bounding_box();
        let c = (lo + hi) * 0.5;
        let half = 0.5 * (hi.x - lo.x).max(hi.y - lo.y) + margin;
        ComputationalBox::new(c - Point2::new(half, half), c + Point2::new(half, half)).expect("non-empty box")
    }

    fn self_convergence_series(&self, spec: &SeriesSpec, done: &StudyResult) -> Result<Series> {
        let m = self.cfg.manufactured()?;
        let coeffs = self.coefficients(spec, &m)?;
        let eps_list = &self.cfg.case.eps_list;
        let levels = eps_list.len() as u32;
        let eps_ref = eps_list[eps_list.len() - 1] / 2.0;
        let bx = self.square_box(1.25 * eps_list[0]);
        let width = bx.width();
        let factor = 4usize.pow(levels);
        let n_min = (width / (self.cfg.mesh.gamma * eps_ref * eps_ref)).ceil() as usize;
        let n_ref = n_min.div_ceil(factor) * factor;
        let mut series = Series::new(spec);
        let cap = self.cfg.mesh.vertex_cap;

        let fine = match build_structured_mesh_capped(&bx, width / n_ref as f64, cap) {
            Ok(mesh) => mesh,
            Err(e @ CoreError::ResourceLimit { .. }) => {
                let reason = format!("reference mesh at eps = {eps_ref}: {e}");
                series.skipped = eps_list.iter().map(|&eps| SkippedRow { eps, reason: reason.clone() }).collect();
                return Ok(series);
            }
            Err(e) => return Err(row_failure(done, series, eps_ref, e)),
        };
        self.guard(eps_ref, &fine)?;
        let reference = self
            .solve(&fine, eps_ref, &coeffs, spec.bc, None)
            .map_err(|e| row_failure(done, series.clone(), eps_ref, e))?;
        series.reference = Some(ReferenceSolve {
            eps: eps_ref,
            h_max: fine.h_max(),
            dofs: reference.system.n_dofs(),
            iterations: reference.report.cg.iterations,
            galerkin_residual: reference.system.galerkin_residual(&reference.u, self.exec),
            residual_scale: reference.system.residual_scale(),
        });
        let reference_eval = |p: Point2| reference.u.eval(&fine, p).unwrap_or((0.0, Point2::default()));

        for (k, &eps) in eps_list.iter().enumerate() {
            let t0 = Instant::now();
            let n = n_ref / 4usize.pow(levels - k as u32);
            let mesh = build_structured_mesh_capped(&bx, width / n as f64, cap)
                .map_err(|e| row_failure(done, series.clone(), eps, e))?;
            self.guard(eps, &mesh)?;
            let run = || -> Result<StudyRow, CoreError> {
                let solved = self.solve(&mesh, eps, &coeffs, spec.bc, None)?;
                // Nested meshes: interpolation onto the fine grid is exact.
                let lifted = FeFunction::interpolate(&fine, |p| solved.u.eval(&mesh, p).map_or(0.0, |(v, _)| v));
                let errors = restricted_errors(
                    &lifted,
                    reference_eval,
                    &self.domain,
                    &fine,
                    &self.norms,
                    self.cfg.mesh.sharp_depth,
                    self.exec,
                )?;
                Ok(self.row(eps, &mesh, &solved, errors, t0))
            };
            match run() {
                Ok(row) => series.push_row(row),
                Err(e) => return Err(row_failure(done, series, eps, e)),
            }
        }
        if let [.., a, b] = series.rows.as_slice() {
            series.corrected_rates = b
                .errors
                .errors
                .iter()
                .filter_map(|&(k, e)| a.error(k).map(|p| (k, self_convergence_rate(p, e))))
                .collect();
        }
        Ok(series)
    }
}

/// One solve of a configured problem.
#[derive(Debug, Clone)]
pub struct SingleSolve {
    pub label: String,
    pub mesh: TriMesh,
    pub u: FeFunction,
    /// Errors are filled in only against a manufactured reference.
    pub row: StudyRow,
}

/// Solves every series of `cfg` at the single width `eps`.
pub fn solve_single(cfg: &CaseConfig, eps: f64) -> Result<Vec<SingleSolve>> {
    cfg.validate()?;
    let runner = Runner {
        cfg,
        domain: cfg.domain()?,
        profile: cfg.profile()?,
        norms: cfg.norms()?,
        quad: ElementQuadrature::default(),
        exec: cfg.exec(),
    };
    runner.domain.check_eps(eps).map_err(|e| HarnessError::config("case.eps", e.to_string()))?;
    let m = cfg.manufactured()?;
    let measure = cfg.case.reference == Reference::Manufactured;
    let mut out = Vec::new();
    for spec in cfg.series() {
        let t0 = Instant::now();
        let coeffs = runner.coefficients(&spec, &m)?;
        let bx = ComputationalBox::around(&runner.domain, 1.25 * eps);
        let mesh = build_structured_mesh_capped(&bx, cfg.mesh.gamma * eps * eps, cfg.mesh.vertex_cap)?;
        runner.guard(eps, &mesh)?;
        let (row, u) = runner.manufactured_row(&spec, &m, &coeffs, &mesh, eps, measure && spec.source.is_none(), t0)?;
        out.push(SingleSolve { label: spec.label.clone(), mesh, u, row });
    }
    Ok(out)
}

fn row_failure(done: &StudyResult, series: Series, eps: f64, source: CoreError) -> HarnessError {
    let mut partial = done.clone();
    partial.series.push(series);
    partial.finish();
    HarnessError::Row { eps, source, partial: Box::new(partial) }
}

/// Runs every series of `cfg`, one ε at a time.
pub fn run_case(cfg: &CaseConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let runner = Runner {
        cfg,
        domain: cfg.domain()?,
        profile: cfg.profile()?,
        norms: cfg.norms()?,
        quad: ElementQuadrature::default(),
        exec: cfg.exec(),
    };
    let mut result = StudyResult::empty(cfg.case.id, runner.norms.clone());
    result.metadata.config_hash = cfg.hash();
    result.metadata.reference = cfg.case.reference;
    result.metadata.started_at = timestamp();
    for spec in cfg.series() {
        let series = match cfg.case.reference {
            Reference::Manufactured => runner.manufactured_series(&spec, &result)?,
            Reference::SelfConvergence => runner.self_convergence_series(&spec, &result)?,
        };
        result.series.push(series);
    }
    result.finish();
    Ok(result)
}

/// [`run_case`] for the layered-coefficient configuration.
pub fn run_case_b(cfg: &CaseConfig) -> Result<StudyResult> {
    if cfg.case.solution != Solution::TwoLayer {
        return Err(HarnessError::config("case.solution", "the layered study needs solution = \"two-layer\""));
    }
    run_case(cfg)
}

/// [`run_case`] for singular sources against a self-convergence reference.
pub fn run_case_c(cfg: &CaseConfig) -> Result<StudyResult> {
    if cfg.case.reference != Reference::SelfConvergence || cfg.case.mu.is_empty() {
        return Err(HarnessError::config("case.mu", "the singular study needs mu values and self-convergence"));
    }
    run_case(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrected_rate_inverts_the_model() {
        for r in [0.5, 1.0, 1.5, 2.0] {
            let e = |eps: f64| eps.powf(r) - (1.0f64 / 16.0).powf(r);
            let got = self_convergence_rate(e(0.25), e(0.125));
            assert!((got - r).abs() < 1e-12, "{r}: {got}");
        }
    }

    #[test]
    fn eoc_uses_eps_ratio() {
        let spec = SeriesSpec { label: "x".into(), parameter: None, bc: BcKind::Robin, source: None };
        let mut s = Series::new(&spec);
        let row = |eps: f64, e: f64| StudyRow {
            eps,
            h: 0.0,
            h_max: 0.0,
            dofs: 0,
            iterations: 0,
            cg_residual: 0.0,
            galerkin_residual: 0.0,
            residual_scale: 0.0,
            errors: ErrorReport { eps, dof_count: 0, errors: vec![(NormKind::L2D, e)] },
            eoc: Vec::new(),
            seconds: 0.0,
        };
        s.push_row(row(0.5, 1.0));
        s.push_row(row(0.25, 0.25));
        s.push_row(row(0.0625, 0.25 / 16.0));
        assert!(s.rows[0].eoc.is_empty());
        assert!((s.rows[1].rate(NormKind::L2D).unwrap() - 2.0).abs() < 1e-12);
        assert!((s.rows[2].rate(NormKind::L2D).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_study_runs_and_guards() {
        let mut cfg = CaseConfig::preset(CaseId::A);
        cfg.case.eps_list = vec![0.5, 0.25];
        let r = run_case(&cfg).unwrap();
        let s = &r.series[0];
        assert_eq!(s.rows.len(), 2);
        assert!(s.rows.iter().all(|row| row.h_max < row.eps * row.eps));
        assert_eq!(r.metadata.config_hash, cfg.hash());

        cfg.mesh.gamma = 1.0;
        assert!(matches!(run_case(&cfg), Err(HarnessError::MeshGuard { .. })));
    }

    #[test]
    fn vertex_cap_skips_rows() {
        let mut cfg = CaseConfig::preset(CaseId::A);
        cfg.case.eps_list = vec![0.5, 0.25, 0.125];
        cfg.mesh.vertex_cap = 40_000;
        let r = run_case(&cfg).unwrap();
        assert_eq!(r.series[0].rows.len(), 2);
        assert_eq!(r.series[0].skipped.len(), 1);
        assert_eq!(r.series[0].skipped[0].eps, 0.125);
    }
}
