//! Case configuration: built-in presets, TOML documents and validation.
//!
//! A document has the sections `[case]`, `[phasefield]`, `[mesh]`,
//! `[solver]` and `[output]`. Keys missing from a document fall back to the
//! preset of `case.id`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ddlab_core::analysis::NormKind;
use ddlab_core::fem::BcKind;
use ddlab_core::mesh::DEFAULT_VERTEX_CAP;
use ddlab_core::solver::CgOptions;
use ddlab_core::{ExecPolicy, Point2, SProfile, SharpDomain};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::fields::FieldSpec;
use crate::manufactured::{Extension, Manufactured};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    A,
    B,
    C,
    D,
    E,
    #[serde(rename = "custom-robin")]
    CustomRobin,
    #[serde(rename = "custom-dirichlet")]
    CustomDirichlet,
    #[serde(rename = "custom-neumann")]
    CustomNeumann,
}

impl CaseId {
    pub const ALL: [CaseId; 8] = [
        CaseId::A,
        CaseId::B,
        CaseId::C,
        CaseId::D,
        CaseId::E,
        CaseId::CustomRobin,
        CaseId::CustomDirichlet,
        CaseId::CustomNeumann,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CaseId::A => "A",
            CaseId::B => "B",
            CaseId::C => "C",
            CaseId::D => "D",
            CaseId::E => "E",
            CaseId::CustomRobin => "custom-robin",
            CaseId::CustomDirichlet => "custom-dirichlet",
            CaseId::CustomNeumann => "custom-neumann",
        }
    }

    /// Boundary condition family; the penalty exponent is filled in per series.
    pub fn boundary(self) -> BoundaryKind {
        match self {
            CaseId::D | CaseId::CustomDirichlet => BoundaryKind::Dirichlet,
            CaseId::CustomNeumann => BoundaryKind::Neumann,
            _ => BoundaryKind::Robin,
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CaseId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        CaseId::ALL
            .into_iter()
            .find(|c| c.label().replace('-', "").to_ascii_lowercase() == key)
            .ok_or_else(|| HarnessError::config("case.id", format!("unknown case `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Robin,
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    Manufactured,
    /// Compare against the solution at half the smallest ε on a nested mesh.
    SelfConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    /// Disk of radius `case.radius` around the origin.
    Disk,
    /// The unit square.
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solution {
    CaseA,
    TwoLayer,
    SinCos,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    #[default]
    Zero,
    /// Interpolated manufactured solution.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    Plotdata,
}

impl FromStr for OutputFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "plotdata" | "plot" | "dat" => Ok(OutputFormat::Plotdata),
            _ => Err(HarnessError::config("output.formats", format!("unknown format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub id: CaseId,
    pub eps_list: Vec<f64>,
    pub domain: DomainKind,
    pub radius: f64,
    pub solution: Solution,
    pub reference: Reference,
    pub extension: Extension,
    /// Penalty exponents for Dirichlet cases, `β = ε^σ`.
    pub sigma: Vec<f64>,
    /// Singular source exponents; empty means the manufactured source.
    pub mu: Vec<f64>,
    pub pole_angle: f64,
    pub k1: f64,
    pub k2: f64,
    /// Layer interface radius as a fraction of `radius`.
    pub r1: f64,
    pub reaction: f64,
    pub robin: f64,
    pub norms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseFieldSection {
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// `h = gamma ε²`.
    pub gamma: f64,
    pub vertex_cap: usize,
    pub sharp_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    /// Zero picks `50 √n`.
    pub max_iter: usize,
    pub initial_guess: InitialGuess,
    pub exec: ExecMode,
    /// Zero uses every available core.
    pub threads: usize,
    /// Recorded in the resolved config; no computation is randomized.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub case: CaseSection,
    pub phasefield: PhaseFieldSection,
    pub mesh: MeshSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

/// One ε-sweep of a study. Case C has one per `mu`, Case D one per `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub label: String,
    pub parameter: Option<(&'static str, f64)>,
    pub bc: BcKind,
    /// Singular source replacing the manufactured data, with `g = 0`.
    pub source: Option<FieldSpec>,
}

const R_DEFAULT: f64 = std::f64::consts::FRAC_1_SQRT_2;

impl CaseConfig {
    pub fn preset(id: CaseId) -> Self {
        let dyadic = |from: i32, to: i32| (from..=to).map(|k| 2f64.powi(-k)).collect::<Vec<_>>();
        let mut case = CaseSection {
            id,
            eps_list: dyadic(1, 4),
            domain: DomainKind::Disk,
            radius: R_DEFAULT,
            solution: Solution::CaseA,
            reference: Reference::Manufactured,
            extension: Extension::ClosestPoint,
            sigma: Vec::new(),
            mu: Vec::new(),
            pole_angle: 1.0,
            k1: 1.0,
            k2: 10.0,
            r1: 0.9,
            reaction: 1.0,
            robin: 1.0,
            norms: NormKind::RESTRICTED.iter().map(|k| k.name().to_string()).collect(),
        };
        match id {
            CaseId::B => case.solution = Solution::TwoLayer,
            CaseId::C => {
                case.reference = Reference::SelfConvergence;
                case.mu = vec![0.25, 0.5, 0.75, 1.0];
                case.eps_list = dyadic(1, 3);
            }
            CaseId::D => case.sigma = vec![0.75, 1.0],
            CaseId::CustomDirichlet => case.sigma = vec![1.0],
            CaseId::E => case.domain = DomainKind::Square,
            CaseId::CustomNeumann => case.reaction = 0.0,
            CaseId::A | CaseId::CustomRobin => {}
        }
        CaseConfig {
            case,
            phasefield: PhaseFieldSection { profile: "linear".into() },
            mesh: MeshSection { gamma: 0.5, vertex_cap: DEFAULT_VERTEX_CAP, sharp_depth: 4 },
            solver: SolverSection {
                tol: 1e-10,
                max_iter: 0,
                initial_guess: InitialGuess::Zero,
                exec: ExecMode::Parallel,
                threads: 0,
                seed: 0,
            },
            output: OutputSection {
                dir: "out".into(),
                formats: vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Plotdata],
            },
        }
    }

    /// Preset of the document's `case.id` (or `A`), overlaid with the
    /// document and then with `overrides`, and validated.
    pub fn resolve(document: Option<&str>, overrides: toml::Table) -> Result<Self> {
        let mut merged = match document {
            Some(text) => text.parse::<toml::Table>().map_err(|e| HarnessError::ConfigSyntax(e.to_string()))?,
            None => toml::Table::new(),
        };
        merge(&mut merged, overrides);
        let id = match merged.get("case").and_then(|c| c.get("id")) {
            Some(toml::Value::String(s)) => s.parse::<CaseId>()?,
            Some(other) => return Err(HarnessError::config("case.id", format!("expected a string, got {other}"))),
            None => CaseId::A,
        };
        if let Some(toml::Value::Table(case)) = merged.get_mut("case") {
            case.insert("id".into(), toml::Value::String(id.label().into()));
        }
        let mut base = toml::Table::try_from(Self::preset(id)).map_err(|e| HarnessError::Serialize(e.to_string()))?;
        merge(&mut base, merged);
        let text = toml::to_string(&base).map_err(|e| HarnessError::Serialize(e.to_string()))?;
        let cfg: CaseConfig = toml::from_str(&text).map_err(|e| HarnessError::ConfigSyntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::resolve(Some(text), toml::Table::new())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved document.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.case;
        let domain = self.domain()?;
        if c.eps_list.len() < 2 {
            return Err(HarnessError::config("case.eps_list", "needs at least two values"));
        }
        if c.eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(HarnessError::config("case.eps_list", "values must be positive"));
        }
        if c.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(HarnessError::config("case.eps_list", "eps_list must be strictly decreasing"));
        }
        for &eps in &c.eps_list {
            domain.check_eps(eps).map_err(|e| HarnessError::config("case.eps_list", e.to_string()))?;
        }
        self.profile()?;
        self.norms()?;
        match c.reference {
            Reference::SelfConvergence => {
                if c.eps_list.windows(2).any(|w| (w[0] / w[1] - 2.0).abs() > 1e-12) {
                    return Err(HarnessError::config(
                        "case.eps_list",
                        "self-convergence needs eps_list to halve at every step",
                    ));
                }
            }
            Reference::Manufactured => {
                if c.id == CaseId::C {
                    return Err(HarnessError::config("case.reference", "case C requires self-convergence"));
                }
                if !c.mu.is_empty() {
                    return Err(HarnessError::config("case.mu", "singular sources need the self-convergence reference"));
                }
            }
        }
        if c.mu.iter().any(|m| !(0.0..2.0).contains(m)) {
            return Err(HarnessError::config("case.mu", "values must lie in [0, 2)"));
        }
        if !c.pole_angle.is_finite() {
            return Err(HarnessError::config("case.pole_angle", "must be finite"));
        }
        if self.case.id.boundary() == BoundaryKind::Dirichlet {
            if c.sigma.is_empty() || c.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(HarnessError::config("case.sigma", "Dirichlet cases need positive penalty exponents"));
            }
        } else if !c.sigma.is_empty() {
            return Err(HarnessError::config("case.sigma", "only Dirichlet cases take penalty exponents"));
        }
        if !(c.k1 > 0.0 && c.k2 > 0.0 && c.k1.is_finite() && c.k2.is_finite()) {
            return Err(HarnessError::config("case.k1", "layer coefficients must be positive"));
        }
        if !(c.r1 > 0.0 && c.r1 < 1.0) {
            return Err(HarnessError::config("case.r1", "must lie in (0, 1)"));
        }
        if !(c.reaction >= 0.0 && c.reaction.is_finite()) {
            return Err(HarnessError::config("case.reaction", "must be non-negative"));
        }
        if self.case.id.boundary() == BoundaryKind::Robin && !(c.robin > 0.0 && c.robin.is_finite()) {
            return Err(HarnessError::config("case.robin", "must be positive; use custom-neumann for b = 0"));
        }
        if self.case.id.boundary() == BoundaryKind::Neumann && c.reaction != 0.0 {
            return Err(HarnessError::config("case.reaction", "the Neumann case is posed with c = 0"));
        }
        if !(self.mesh.gamma > 0.0 && self.mesh.gamma <= 1.0) {
            return Err(HarnessError::config("mesh.gamma", "must lie in (0, 1]"));
        }
        if self.mesh.vertex_cap < 16 {
            return Err(HarnessError::config("mesh.vertex_cap", "too small"));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(HarnessError::config("solver.tol", "must lie in (0, 1)"));
        }
        if self.output.formats.is_empty() {
            return Err(HarnessError::config("output.formats", "at least one format is needed"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<SharpDomain> {
        let d = match self.case.domain {
            DomainKind::Disk => SharpDomain::disk(Point2::default(), self.case.radius),
            DomainKind::Square => SharpDomain::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)),
        };
        d.map_err(|e| HarnessError::config("case.radius", e.to_string()))
    }

    pub fn profile(&self) -> Result<SProfile> {
        self.phasefield
            .profile
            .parse::<SProfile>()
            .map_err(|e| HarnessError::config("phasefield.profile", e.to_string()))
    }

    pub fn norms(&self) -> Result<Vec<NormKind>> {
        if self.case.norms.is_empty() {
            return Err(HarnessError::config("case.norms", "at least one norm is needed"));
        }
        self.case
            .norms
            .iter()
            .map(|s| {
                let k = s.parse::<NormKind>().map_err(|e| HarnessError::config("case.norms", e.to_string()))?;
                if NormKind::RESTRICTED.contains(&k) {
                    Ok(k)
                } else {
                    Err(HarnessError::config("case.norms", format!("`{s}` is not a norm on D")))
                }
            })
            .collect()
    }

    pub fn exec(&self) -> ExecPolicy {
        match self.solver.exec {
            ExecMode::Parallel => ExecPolicy::Parallel,
            ExecMode::Sequential => ExecPolicy::Sequential,
        }
    }

    pub fn cg_options(&self) -> CgOptions {
        CgOptions {
            tol: self.solver.tol,
            max_iter: (self.solver.max_iter > 0).then_some(self.solver.max_iter),
            exec: self.exec(),
            ..CgOptions::default()
        }
    }

    pub fn manufactured(&self) -> Result<Manufactured> {
        let c = &self.case;
        Ok(match c.solution {
            Solution::CaseA => Manufactured::case_a_with(c.reaction),
            Solution::SinCos => Manufactured::sin_cos(c.reaction, c.robin),
            Solution::Constant => Manufactured::constant(1.0, c.reaction, c.robin),
            Solution::TwoLayer => {
                let SharpDomain::Disk { center, radius } = self.domain()? else {
                    return Err(HarnessError::config("case.solution", "the two-layer solution needs a disk"));
                };
                Manufactured::two_layer(center, c.k1, c.k2, c.r1 * radius, c.reaction, c.robin)
            }
        }
        .with_robin(c.robin))
    }

    pub fn series(&self) -> Vec<SeriesSpec> {
        let id = self.case.id;
        match id.boundary() {
            BoundaryKind::Dirichlet => self
                .case
                .sigma
                .iter()
                .map(|&sigma| SeriesSpec {
                    label: format!("{id}:sigma={sigma}"),
                    parameter: Some(("sigma", sigma)),
                    bc: BcKind::DirichletPenalty { sigma },
                    source: None,
                })
                .collect(),
            kind => {
                let bc = if kind == BoundaryKind::Neumann { BcKind::Neumann } else { BcKind::Robin };
                if self.case.mu.is_empty() {
                    vec![SeriesSpec { label: id.to_string(), parameter: None, bc, source: None }]
                } else {
                    self.case
                        .mu
                        .iter()
                        .map(|&mu| SeriesSpec {
                            label: format!("{id}:mu={mu}"),
                            parameter: Some(("mu", mu)),
                            bc,
                            source: Some(FieldSpec::Singular { mu, angle: self.case.pole_angle }),
                        })
                        .collect()
                }
            }
        }
    }
}

/// Recursive table overlay; values in `over` win.
pub fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Builds an override table from a dotted key, e.g. `("case.eps_list", [..])`.
pub fn override_entry(table: &mut toml::Table, dotted: &str, value: toml::Value) {
    let mut parts: Vec<&str> = dotted.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut t = table;
    for p in parts {
        t = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .expect("override path is a table");
    }
    t.insert(last.to_string(), value);
}
