//! Integral studies, inequality-constant sweeps and profile checks.

use std::sync::Arc;
use std::time::Instant;

use ddlab_core::analysis::{EigenOptions, InequalityOperators};
use ddlab_core::integrals::{surface_error_study, volume_error_study, IntegralStudy, MeshPolicy, StudySetup};
use ddlab_core::mesh::{build_structured_mesh_capped, ElementQuadrature, DEFAULT_VERTEX_CAP};
use ddlab_core::phasefield::{check_profile, ProfileReport};
use ddlab_core::{ComputationalBox, ExecPolicy, PhaseField, SProfile, SharpDomain};

use crate::error::Result;
use crate::fields::FieldSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralKind {
    Volume,
    Surface,
}

#[derive(Debug, Clone)]
pub struct IntegralRequest {
    pub kind: IntegralKind,
    pub field: FieldSpec,
    pub profile: SProfile,
    pub domain: SharpDomain,
    pub eps_list: Vec<f64>,
    pub mesh_policy: MeshPolicy,
    pub exec: ExecPolicy,
}

impl IntegralRequest {
    pub fn new(kind: IntegralKind, field: FieldSpec, profile: SProfile, domain: SharpDomain, eps_list: Vec<f64>) -> Self {
        IntegralRequest {
            kind,
            field,
            profile,
            domain,
            eps_list,
            mesh_policy: MeshPolicy::default(),
            exec: ExecPolicy::default(),
        }
    }
}

pub fn run_integral_study(req: &IntegralRequest) -> Result<IntegralStudy> {
    let mut setup = StudySetup::new(req.profile.clone(), req.domain, req.eps_list.clone());
    setup.mesh_policy = req.mesh_policy;
    setup.exec = req.exec;
    let field = req.field.to_field(&req.domain);
    Ok(match req.kind {
        IntegralKind::Volume => volume_error_study(&field, &setup)?,
        IntegralKind::Surface => surface_error_study(&field, &setup)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantKind {
    Trace,
    PoincareFriedrichs,
    PoincareMean,
}

impl ConstantKind {
    pub const ALL: [ConstantKind; 3] = [ConstantKind::Trace, ConstantKind::PoincareFriedrichs, ConstantKind::PoincareMean];

    pub fn name(self) -> &'static str {
        match self {
            ConstantKind::Trace => "trace",
            ConstantKind::PoincareFriedrichs => "poincare-friedrichs",
            ConstantKind::PoincareMean => "poincare-mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsRow {
    pub eps: f64,
    pub h: f64,
    pub dofs: usize,
    pub values: Vec<(ConstantKind, f64)>,
    pub seconds: f64,
}

impl ConstantsRow {
    pub fn get(&self, kind: ConstantKind) -> Option<f64> {
        self.values.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
    }
}

/// Discrete inequality constants for each ε on a box with margin `1.25 ε`
/// and mesh size `gamma ε²`.
pub fn constants_sweep(
    profile: &SProfile,
    domain: SharpDomain,
    eps_list: &[f64],
    gamma: f64,
    kinds: &[ConstantKind],
    exec: ExecPolicy,
) -> Result<Vec<ConstantsRow>> {
    let opts = EigenOptions::default();
    let quad = ElementQuadrature::default();
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let t0 = Instant::now();
        let pf = PhaseField::new(profile.clone(), eps, domain)?;
        let mesh = build_structured_mesh_capped(&ComputationalBox::around(&domain, 1.25 * eps), gamma * eps * eps, DEFAULT_VERTEX_CAP)?;
        let ops = InequalityOperators::assemble(&mesh, &pf, &quad, exec)?;
        let mut values = Vec::with_capacity(kinds.len());
        for &k in kinds {
            let est = match k {
                ConstantKind::Trace => ops.trace_constant(&opts)?,
                ConstantKind::PoincareFriedrichs => ops.poincare_friedrichs_constant(&opts)?,
                ConstantKind::PoincareMean => ops.poincare_mean_constant(&opts)?,
            };
            values.push((k, est.value));
        }
        rows.push(ConstantsRow { eps, h: mesh.h, dofs: ops.n_dofs(), values, seconds: t0.elapsed().as_secs_f64() });
    }
    Ok(rows)
}

/// `max / min` of one constant across a sweep.
pub fn variation(rows: &[ConstantsRow], kind: ConstantKind) -> f64 {
    let vals: Vec<f64> = rows.iter().filter_map(|r| r.get(kind)).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// `S(t) = t³`: odd, saturating and increasing, but its derivative grows
/// on `[0, 1)`.
pub fn convex_cubic_profile() -> SProfile {
    SProfile::Custom {
        s: Arc::new(|t| t * t * t),
        s_prime: Arc::new(|t| 3.0 * t * t),
        alpha: 1.0,
        zeta1: 0.375,
        zeta2: 1.5,
    }
}

/// Reports for the built-in profiles followed by [`convex_cubic_profile`].
pub fn profile_reports(samples: usize) -> Vec<(String, ProfileReport)> {
    SProfile::builtin()
        .into_iter()
        .map(|p| (p.name().to_string(), check_profile(&p, samples)))
        .chain(std::iter::once(("t^3".to_string(), check_profile(&convex_cubic_profile(), samples))))
        .collect()
}
