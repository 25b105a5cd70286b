//! `ddlab`: diffuse-domain experiments from the command line.
//!
//! Exit status is 0 on success, 2 for invalid arguments or configuration and
//! 1 when a computation fails.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddlab_core::integrals::{IntegralStudy, MeshPolicy};
use ddlab_core::mesh::build_structured_mesh_capped;
use ddlab_core::{ComputationalBox, ExecPolicy, Point2, SProfile, SharpDomain};
use ddlab_harness::config::{override_entry, CaseConfig};
use ddlab_harness::experiments::{
    constants_sweep, profile_reports, run_integral_study, variation, ConstantKind, IntegralKind, IntegralRequest,
};
use ddlab_harness::output::{format_table, write_study_outputs};
use ddlab_harness::study::solve_single;
use ddlab_harness::{run_case, FieldSpec, HarnessError};

#[derive(Parser, Debug)]
#[command(name = "ddlab", version, about = "Diffuse-domain method experiments")]
struct Cli {
    /// Worker threads for data-parallel loops (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed recorded with the run; no computation is randomized.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// ε-sweep of a diffuse volume or surface integral against its sharp value.
    Integrals(IntegralsArgs),
    /// One diffuse solve at a single ε.
    Solve(SolveArgs),
    /// Convergence study of a case; writes result files.
    Study(StudyArgs),
    /// Inequality constants and profile assumptions.
    Properties(PropertiesArgs),
    /// Writes the structured mesh for a domain and ε.
    MeshDump(MeshDumpArgs),
}

#[derive(Args, Debug)]
#[group(id = "integral-kind", required = true, multiple = false)]
struct KindFlags {
    /// Volume integral `∫ h ω`.
    #[arg(long, group = "integral-kind")]
    volume: bool,
    /// Surface integral `∫ h |∇ω|`.
    #[arg(long, group = "integral-kind")]
    surface: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DomainArg {
    Disk,
    Square,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ExecArg {
    Parallel,
    Sequential,
}

impl From<ExecArg> for ExecPolicy {
    fn from(e: ExecArg) -> Self {
        match e {
            ExecArg::Parallel => ExecPolicy::Parallel,
            ExecArg::Sequential => ExecPolicy::Sequential,
        }
    }
}

#[derive(Args, Debug)]
struct GeometryArgs {
    /// Profile name: linear, cubic or quintic.
    #[arg(long, default_value = "linear")]
    profile: String,
    #[arg(long, value_enum, default_value = "disk")]
    domain: DomainArg,
    /// Disk radius.
    #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
    radius: f64,
    /// Comma-separated decreasing interface widths.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.125, 0.0625])]
    eps: Vec<f64>,
    /// Mesh size factor, `h = gamma ε²`.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "parallel")]
    exec: ExecArg,
}

impl GeometryArgs {
    fn domain(&self) -> Result<SharpDomain, HarnessError> {
        match self.domain {
            DomainArg::Disk => SharpDomain::disk(Point2::default(), self.radius)
                .map_err(|e| HarnessError::config("radius", e.to_string())),
            DomainArg::Square => Ok(SharpDomain::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0))?),
        }
    }

    fn profile(&self) -> Result<SProfile, HarnessError> {
        self.profile.parse().map_err(|e: ddlab_core::Error| HarnessError::config("profile", e.to_string()))
    }
}

#[derive(Args, Debug)]
struct IntegralsArgs {
    #[command(flatten)]
    kind: KindFlags,
    /// Integrand: const1, const{c}, caseA, singular{mu=..,angle=..} or poly{..}.
    #[arg(long = "h", default_value = "const1")]
    field: String,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Every config key, as flags that override the config file.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML config file with [case], [phasefield], [mesh], [solver], [output].
    #[arg(long)]
    config: Option<PathBuf>,
    /// A, B, C, D, E, custom-robin, custom-dirichlet or custom-neumann.
    #[arg(long)]
    case: Option<String>,
    /// case.eps_list, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// case.domain: disk or square.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    /// case.solution: case-a, two-layer, sin-cos or constant.
    #[arg(long)]
    solution: Option<String>,
    /// case.reference: manufactured or self-convergence.
    #[arg(long)]
    reference: Option<String>,
    /// case.extension: closest-point or pointwise.
    #[arg(long)]
    extension: Option<String>,
    /// case.sigma, penalty exponents.
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    /// case.mu, singular source exponents.
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long)]
    pole_angle: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    /// case.r1 as a fraction of the radius.
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    reaction: Option<f64>,
    #[arg(long)]
    robin: Option<f64>,
    /// case.norms: any of L2, W12, W11, W1inf.
    #[arg(long, value_delimiter = ',')]
    norms: Option<Vec<String>>,
    /// phasefield.profile.
    #[arg(long)]
    profile: Option<String>,
    /// mesh.gamma.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    vertex_cap: Option<usize>,
    #[arg(long)]
    sharp_depth: Option<usize>,
    /// solver.tol.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// solver.initial_guess: zero or reference.
    #[arg(long)]
    initial_guess: Option<String>,
    /// solver.exec: parallel or sequential.
    #[arg(long)]
    exec: Option<String>,
    /// output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// output.formats: csv, json, plotdata.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<String>>,
    /// Print the resolved config and stop.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Width to solve at; defaults to the last entry of the ε list.
    #[arg(long = "at")]
    at: Option<f64>,
    /// Write nodal values `x,y,u` of the solution.
    #[arg(long)]
    solution_csv: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PropertyArg {
    Trace,
    Poincare,
    Mean,
    All,
    Profile,
}

#[derive(Args, Debug)]
struct PropertiesArgs {
    #[arg(value_enum)]
    which: PropertyArg,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Samples for the profile checks.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
}

#[derive(Args, Debug)]
struct MeshDumpArgs {
    #[arg(long, value_enum, default_value = "disk")]
    domain: DomainArg,
    #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
    radius: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    if let Some(n) = cli.threads {
        set_threads(n)?;
    }
    match cli.command {
        Command::Integrals(a) => integrals(a),
        Command::Solve(a) => solve(a, cli.seed),
        Command::Study(a) => study(a, cli.seed),
        Command::Properties(a) => properties(a),
        Command::MeshDump(a) => mesh_dump(a),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<(), HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::config("threads", e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_n: usize) -> Result<(), HarnessError> {
    Ok(())
}

fn stdout_err(e: io::Error) -> HarnessError {
    HarnessError::Io { path: PathBuf::from("<stdout>"), source: e }
}

/// `2 ∫₀¹ t S(t) dt`; a constant integrand over a disk has
/// `E_V = c π ε² (1 − m)` with this `m`.
fn profile_moment(profile: &SProfile) -> f64 {
    let n = 20_000;
    let h = 1.0 / n as f64;
    let f = |t: f64| t * profile.eval(t);
    let mut acc = f(0.0) + f(1.0);
    for k in 1..n {
        acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * acc * h / 3.0
}

fn integrals(a: IntegralsArgs) -> Result<(), HarnessError> {
    let field: FieldSpec = a.field.parse().map_err(|e: HarnessError| HarnessError::config("h", e.to_string()))?;
    let domain = a.geometry.domain()?;
    let profile = a.geometry.profile()?;
    if !(a.geometry.gamma > 0.0 && a.geometry.gamma <= 1.0) {
        return Err(HarnessError::config("gamma", "must lie in (0, 1]"));
    }
    let kind = if a.kind.volume { IntegralKind::Volume } else { IntegralKind::Surface };
    let mut req = IntegralRequest::new(kind, field.clone(), profile.clone(), domain, a.geometry.eps.clone());
    req.mesh_policy = MeshPolicy { gamma: a.geometry.gamma, ..MeshPolicy::default() };
    req.exec = a.geometry.exec.into();
    let study = run_integral_study(&req).map_err(|e| match e {
        HarnessError::Core(ddlab_core::Error::Config(m)) => HarnessError::config("eps", m),
        other => other,
    })?;

    let closed = match (&field, kind, domain) {
        (FieldSpec::Constant(c), IntegralKind::Volume, SharpDomain::Disk { .. }) => {
            let m = profile_moment(&profile);
            Some(move |eps: f64| c * PI * eps * eps * (1.0 - m))
        }
        _ => None,
    };
    print_integral_table(&study, kind, &field, closed).map_err(stdout_err)?;
    if let Some(path) = a.csv {
        let file = File::create(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
        study.write_csv(BufWriter::new(file)).map_err(|e| HarnessError::Io { path, source: e })?;
    }
    Ok(())
}

fn print_integral_table(
    study: &IntegralStudy,
    kind: IntegralKind,
    field: &FieldSpec,
    closed: Option<impl Fn(f64) -> f64>,
) -> io::Result<()> {
    let mut out = io::stdout().lock();
    let name = if kind == IntegralKind::Volume { "E_V" } else { "E_B" };
    writeln!(out, "{name} for h = {field}")?;
    write!(out, "{:>10} {:>18} {:>18} {:>14} {:>8}", "eps", "diffuse", "sharp", "error", "eoc")?;
    if closed.is_some() {
        write!(out, " {:>14}", "closed form")?;
    }
    writeln!(out)?;
    for (k, r) in study.rows.iter().enumerate() {
        let rate = if k == 0 { String::new() } else { format!("{:.3}", study.eoc[k - 1]) };
        write!(out, "{:>10} {:>18.12} {:>18.12} {:>14.6e} {:>8}", r.eps, r.diffuse_value, r.sharp_value, r.error, rate)?;
        if let Some(f) = &closed {
            write!(out, " {:>14.6e}", f(r.eps))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn overrides(a: &ConfigArgs, seed: Option<u64>) -> toml::Table {
    use toml::Value;
    let mut t = toml::Table::new();
    let floats = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
    let strings = |v: &[String]| Value::Array(v.iter().map(|x| Value::String(x.clone())).collect());
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            override_entry(&mut t, k, v);
        }
    };
    set("case.id", a.case.clone().map(Value::String));
    set("case.eps_list", a.eps.as_deref().map(floats));
    set("case.domain", a.domain.clone().map(Value::String));
    set("case.radius", a.radius.map(Value::Float));
    set("case.solution", a.solution.clone().map(Value::String));
    set("case.reference", a.reference.clone().map(Value::String));
    set("case.extension", a.extension.clone().map(Value::String));
    set("case.sigma", a.sigma.as_deref().map(floats));
    set("case.mu", a.mu.as_deref().map(floats));
    set("case.pole_angle", a.pole_angle.map(Value::Float));
    set("case.k1", a.k1.map(Value::Float));
    set("case.k2", a.k2.map(Value::Float));
    set("case.r1", a.r1.map(Value::Float));
    set("case.reaction", a.reaction.map(Value::Float));
    set("case.robin", a.robin.map(Value::Float));
    set("case.norms", a.norms.as_deref().map(strings));
    set("phasefield.profile", a.profile.clone().map(Value::String));
    set("mesh.gamma", a.gamma.map(Value::Float));
    set("mesh.vertex_cap", a.vertex_cap.map(|v| Value::Integer(v as i64)));
    set("mesh.sharp_depth", a.sharp_depth.map(|v| Value::Integer(v as i64)));
    set("solver.tol", a.tol.map(Value::Float));
    set("solver.max_iter", a.max_iter.map(|v| Value::Integer(v as i64)));
    set("solver.initial_guess", a.initial_guess.clone().map(Value::String));
    set("solver.exec", a.exec.clone().map(Value::String));
    set("solver.seed", seed.map(|v| Value::Integer(v as i64)));
    set("output.dir", a.out.as_ref().map(|p| Value::String(p.display().to_string())));
    set("output.formats", a.format.as_deref().map(strings));
    t
}

fn resolve(a: &ConfigArgs, seed: Option<u64>) -> Result<CaseConfig, HarnessError> {
    let document = match &a.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
            key: "config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?),
        None => None,
    };
    CaseConfig::resolve(document.as_deref(), overrides(a, seed))
}

fn apply_threads(cfg: &CaseConfig) -> Result<(), HarnessError> {
    if cfg.solver.threads > 0 {
        // A pool set by `--threads` already wins.
        let _ = set_threads(cfg.solver.threads);
    }
    Ok(())
}

fn study(a: StudyArgs, seed: Option<u64>) -> Result<(), HarnessError> {
    let cfg = resolve(&a.config, seed)?;
    if a.config.dry_run {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    apply_threads(&cfg)?;
    let result = match run_case(&cfg) {
        Ok(r) => r,
        Err(HarnessError::Row { eps, source, partial }) => {
            eprint!("{}", format_table(&partial));
            return Err(HarnessError::Row { eps, source, partial });
        }
        Err(e) => return Err(e),
    };
    print!("{}", format_table(&result));
    let dir = write_study_outputs(&result, &cfg, Path::new(&cfg.output.dir))?;
    println!("results written to {}", dir.display());
    Ok(())
}

fn solve(a: SolveArgs, seed: Option<u64>) -> Result<(), HarnessError> {
    let cfg = resolve(&a.config, seed)?;
    let eps = a.at.unwrap_or(*cfg.case.eps_list.last().expect("validated list"));
    if a.config.dry_run {
        print!("{}", cfg.to_toml_string());
        println!("# solve at eps = {eps}");
        return Ok(());
    }
    apply_threads(&cfg)?;
    let solves = solve_single(&cfg, eps)?;
    let mut out = io::stdout().lock();
    for s in &solves {
        let r = &s.row;
        writeln!(
            out,
            "{}: eps {} dofs {} iterations {} residual {:.3e} galerkin {:.3e}",
            s.label, r.eps, r.dofs, r.iterations, r.cg_residual, r.galerkin_residual
        )
        .map_err(stdout_err)?;
        for (k, e) in &r.errors.errors {
            writeln!(out, "  {k:>6} {e:.6e}").map_err(stdout_err)?;
        }
    }
    if let Some(path) = a.solution_csv {
        let file = File::create(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
        let mut w = BufWriter::new(file);
        if let Some(s) = solves.first() {
            s.u.write_csv(&s.mesh, &mut w).map_err(|e| HarnessError::Io { path, source: e })?;
        }
    }
    Ok(())
}

fn properties(a: PropertiesArgs) -> Result<(), HarnessError> {
    let mut out = io::stdout().lock();
    if let PropertyArg::Profile = a.which {
        for (name, report) in profile_reports(a.samples) {
            let verdict = if report.all_passed() { "accepted" } else { "rejected" };
            write!(out, "{name:>8}: {verdict:<8}").map_err(stdout_err)?;
            for c in &report.checks {
                let status = match c.witness {
                    None => "ok".to_string(),
                    Some(t) => format!("fails at t = {t:.4}"),
                };
                write!(out, "  {}: {status}", c.axiom).map_err(stdout_err)?;
            }
            writeln!(out).map_err(stdout_err)?;
        }
        return Ok(());
    }
    let kinds: Vec<ConstantKind> = match a.which {
        PropertyArg::Trace => vec![ConstantKind::Trace],
        PropertyArg::Poincare => vec![ConstantKind::PoincareFriedrichs],
        PropertyArg::Mean => vec![ConstantKind::PoincareMean],
        _ => ConstantKind::ALL.to_vec(),
    };
    let g = &a.geometry;
    if g.eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HarnessError::config("eps", "eps_list must be strictly decreasing"));
    }
    if !(g.gamma > 0.0 && g.gamma <= 1.0) {
        return Err(HarnessError::config("gamma", "must lie in (0, 1]"));
    }
    let domain = g.domain()?;
    for &eps in &g.eps {
        domain.check_eps(eps).map_err(|e| HarnessError::config("eps", e.to_string()))?;
    }
    let rows = constants_sweep(&g.profile()?, domain, &g.eps, g.gamma, &kinds, g.exec.into())?;
    write!(out, "{:>10} {:>9}", "eps", "dofs").map_err(stdout_err)?;
    for k in &kinds {
        write!(out, " {:>20}", k.name()).map_err(stdout_err)?;
    }
    writeln!(out).map_err(stdout_err)?;
    for r in &rows {
        write!(out, "{:>10} {:>9}", r.eps, r.dofs).map_err(stdout_err)?;
        for &(_, v) in &r.values {
            write!(out, " {v:>20.6}").map_err(stdout_err)?;
        }
        writeln!(out).map_err(stdout_err)?;
    }
    write!(out, "{:>20}", "max/min").map_err(stdout_err)?;
    for &k in &kinds {
        write!(out, " {:>20.4}", variation(&rows, k)).map_err(stdout_err)?;
    }
    writeln!(out).map_err(stdout_err)?;
    Ok(())
}

fn mesh_dump(a: MeshDumpArgs) -> Result<(), HarnessError> {
    let domain = match a.domain {
        DomainArg::Disk => SharpDomain::disk(Point2::default(), a.radius).map_err(|e| HarnessError::config("radius", e.to_string()))?,
        DomainArg::Square => SharpDomain::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0))?,
    };
    domain.check_eps(a.eps).map_err(|e| HarnessError::config("eps", e.to_string()))?;
    if !(a.gamma > 0.0 && a.gamma <= 1.0) {
        return Err(HarnessError::config("gamma", "must lie in (0, 1]"));
    }
    let mesh = build_structured_mesh_capped(
        &ComputationalBox::around(&domain, 1.25 * a.eps),
        a.gamma * a.eps * a.eps,
        ddlab_core::mesh::DEFAULT_VERTEX_CAP,
    )?;
    match a.out {
        Some(path) => {
            let file = File::create(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
            mesh.write_text(BufWriter::new(file)).map_err(|e| HarnessError::Io { path, source: e })
        }
        None => mesh.write_text(io::stdout().lock()).map_err(stdout_err),
    }
}
