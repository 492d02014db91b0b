use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use stopdex::grid;
use stopdex::index::{IndexEngine, ThresholdSide};
use stopdex::inverse::{
    recover, round_trip, verify_candidate, Extension, IndexPiece, InverseProblem, PieceMode,
    CONSISTENCY_TOL,
};
use stopdex::modularity::{check_grid_log, LatticeOptions};
use stopdex::montecarlo::{simulate_value, SimConfig, StopRule};
use stopdex::{
    fn1, fn2, Atom, Boundary, DiffusionSpec, Domain, EarlyReward, Fn1, Fn2, ForwardProblem,
    Numerics, RewardFamily, StopError,
};

use crate::config::{Config, ConfigError};
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Infeasible(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Infeasible(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<StopError> for CliError {
    fn from(e: StopError) -> Self {
        match e {
            StopError::InvalidInput(_)
            | StopError::InvalidBoundary(_)
            | StopError::InvalidRule(_)
            | StopError::AtomUnsupported => CliError::Config(e.to_string()),
            StopError::NegativeVariance { .. } | StopError::NonMonotoneIndex { .. } => {
                CliError::Infeasible(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "stopdex",
    version,
    about = "Optimal stopping of one-dimensional diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Number of θ-grid points.
    #[arg(long = "theta-grid", global = true)]
    theta_grid: Option<usize>,
    /// Number of x-grid points.
    #[arg(long = "x-grid", global = true)]
    x_grid: Option<usize>,
    /// Simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Value curve, thresholds and classification over the θ-grid.
    Forward,
    /// Recover σ², μ and atoms from a value curve and an index.
    Inverse,
    /// Indifference index θ*(x).
    Index,
    /// Log-supermodularity of the early stopping reward.
    CheckModularity,
    /// Monte Carlo estimate of a stopping rule's value.
    Simulate,
    /// Recover, then run the candidate checklist and a forward round trip.
    Verify,
}

struct Ctx {
    cfg: Config,
    out: PathBuf,
    theta_grid: Option<usize>,
    x_grid: Option<usize>,
    seed: Option<u64>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> CliResult<String> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let ctx = Ctx {
        cfg: Config::parse(&text)?,
        out: cli.out.clone(),
        theta_grid: cli.theta_grid,
        x_grid: cli.x_grid,
        seed: cli.seed,
    };
    fs::create_dir_all(&ctx.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", ctx.out.display())))?;
    match cli.command {
        Command::Forward => forward(&ctx),
        Command::Inverse => inverse(&ctx, false),
        Command::Verify => inverse(&ctx, true),
        Command::Index => index(&ctx),
        Command::CheckModularity => modularity(&ctx),
        Command::Simulate => simulate(&ctx),
    }
}

/// Seventeen significant digits; empty for missing values.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn write_file(dir: &Path, name: &str, body: &str) -> CliResult<()> {
    let p = dir.join(name);
    fs::write(&p, body).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn x_fn(e: Expr) -> Fn1 {
    fn1(move |x| e.eval(x, 0.0).unwrap_or(f64::NAN))
}

fn theta_fn(e: Expr) -> Fn1 {
    fn1(move |t| e.eval(0.0, t).unwrap_or(f64::NAN))
}

fn xt_fn(e: Expr) -> Fn2 {
    fn2(move |x, t| e.eval(x, t).unwrap_or(f64::NAN))
}

fn boundary(cfg: &Config, key: &str) -> CliResult<Boundary> {
    match cfg.string("diffusion", key) {
        None => Ok(Boundary::Inaccessible),
        Some(s) => Boundary::parse(&s).ok_or_else(|| {
            CliError::Config(format!(
                "[diffusion] {key}: unknown boundary '{s}' (absorbing, killing, reflecting, inaccessible)"
            ))
        }),
    }
}

fn domain(cfg: &Config) -> CliResult<Domain> {
    let left = cfg.require_number("diffusion", "left")?;
    let right = cfg.require_number("diffusion", "right")?;
    Ok(Domain::new(
        left,
        right,
        boundary(cfg, "left_boundary")?,
        boundary(cfg, "right_boundary")?,
    )?)
}

fn start(cfg: &Config) -> CliResult<f64> {
    Ok(cfg.require_number("diffusion", "start")?)
}

fn diffusion(cfg: &Config) -> CliResult<DiffusionSpec> {
    let sigma2 = x_fn(cfg.require_expr_x("diffusion", "sigma2")?);
    let mu = x_fn(cfg.require_expr_x("diffusion", "mu")?);
    let atoms = cfg
        .pairs("diffusion", "atoms")?
        .into_iter()
        .map(|(x, mass)| Atom { x, mass })
        .collect();
    Ok(DiffusionSpec::new(
        domain(cfg)?,
        sigma2,
        mu,
        atoms,
        start(cfg)?,
    )?)
}

fn theta_range(cfg: &Config) -> CliResult<(f64, f64)> {
    let lo = cfg
        .number("reward", "theta_min")?
        .unwrap_or(f64::NEG_INFINITY);
    let hi = cfg.number("reward", "theta_max")?.unwrap_or(f64::INFINITY);
    if !(lo < hi) {
        return Err(CliError::Config(format!(
            "[reward] theta_min = {lo} must be below theta_max = {hi}"
        )));
    }
    Ok((lo, hi))
}

fn reward(cfg: &Config) -> CliResult<RewardFamily> {
    let (lo, hi) = theta_range(cfg)?;
    let fam = RewardFamily::new(
        xt_fn(cfg.require_expr("reward", "G")?),
        xt_fn(cfg.require_expr("reward", "G_theta")?),
        lo,
        hi,
    );
    match cfg.expr("reward", "c")? {
        None => Ok(fam),
        Some(c) if c.uses(crate::expr::Var::Theta) => {
            let ct = cfg.expr("reward", "c_theta")?.ok_or_else(|| {
                CliError::Config("[reward] c depends on theta, so c_theta is required".into())
            })?;
            Ok(fam.with_parametric_running(xt_fn(c), xt_fn(ct)))
        }
        Some(c) => Ok(fam.with_running(x_fn(c))),
    }
}

fn rho(cfg: &Config) -> CliResult<f64> {
    let r = cfg.require_number("discount", "rho")?;
    if !(r > 0.0) {
        return Err(CliError::Config(format!(
            "[discount] rho must be positive, got {r}"
        )));
    }
    Ok(r)
}

fn side(cfg: &Config) -> CliResult<ThresholdSide> {
    match cfg.string("reward", "side") {
        None => Ok(ThresholdSide::Upper),
        Some(s) => ThresholdSide::parse(&s).ok_or_else(|| {
            CliError::Config(format!("[reward] side: expected upper or lower, got '{s}'"))
        }),
    }
}

fn numerics(cfg: &Config) -> CliResult<Numerics> {
    let mut n = Numerics::default();
    if let Some(v) = cfg.count("numerics", "grid_points")? {
        n.grid_points = v;
    }
    n.left_cutoff = cfg.number("numerics", "left_cutoff")?;
    n.right_cutoff = cfg.number("numerics", "right_cutoff")?;
    if let Some(v) = cfg.number("numerics", "positive_factor")? {
        n.positive_factor = v;
    }
    if let Some(v) = cfg.number("numerics", "additive_width")? {
        n.additive_width = v;
    }
    if let Some(v) = cfg.number("numerics", "shoot_tol")? {
        n.shoot_tol = v;
    }
    if let Some(v) = cfg.count("numerics", "max_shots")? {
        n.max_shots = v;
    }
    Ok(n)
}

fn forward_problem(cfg: &Config) -> CliResult<ForwardProblem> {
    Ok(ForwardProblem::new(
        diffusion(cfg)?,
        rho(cfg)?,
        reward(cfg)?,
        numerics(cfg)?,
    )?)
}

fn theta_points(ctx: &Ctx, default: usize) -> CliResult<usize> {
    let n = match ctx.theta_grid {
        Some(n) => n,
        None => ctx
            .cfg
            .count("numerics", "theta_points")?
            .unwrap_or(default),
    };
    if n < 2 {
        return Err(CliError::Config(format!(
            "theta grid needs at least 2 points, got {n}"
        )));
    }
    Ok(n)
}

fn x_points(ctx: &Ctx, section: &str, default: usize) -> CliResult<usize> {
    let n = match ctx.x_grid {
        Some(n) => n,
        None => ctx.cfg.count(section, "x_points")?.unwrap_or(default),
    };
    if n < 2 {
        return Err(CliError::Config(format!(
            "x grid needs at least 2 points, got {n}"
        )));
    }
    Ok(n)
}

fn forward_thetas(ctx: &Ctx, fam: &RewardFamily) -> CliResult<Vec<f64>> {
    let clip = ctx.cfg.number("numerics", "theta_clip")?.unwrap_or(50.0);
    Ok(fam.theta_grid(theta_points(ctx, 201)?, clip))
}

fn forward(ctx: &Ctx) -> CliResult<String> {
    let p = forward_problem(&ctx.cfg)?;
    let thetas = forward_thetas(ctx, &p.reward)?;
    let reports = p.value_curve(&thetas)?;
    let mut rows = Vec::with_capacity(reports.len());
    let mut counts: Vec<(String, usize)> = Vec::new();
    for r in &reports {
        let (lo, hi) = match (r.thresholds.first(), r.thresholds.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => (f64::NAN, f64::NAN),
        };
        let (dl, dr) = if r.thresholds.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            p.value_derivatives(r)?
        };
        rows.push(vec![
            num(r.theta),
            num(r.value),
            num(r.early_value),
            r.classification.to_string(),
            num(lo),
            num(hi),
            num(dl),
            num(dr),
        ]);
        let name = r.classification.to_string();
        match counts.iter_mut().find(|c| c.0 == name) {
            Some(c) => c.1 += 1,
            None => counts.push((name, 1)),
        }
    }
    write_file(
        &ctx.out,
        "value_curve.csv",
        &csv(
            &[
                "theta",
                "V",
                "E",
                "classification",
                "threshold_lo",
                "threshold_hi",
                "dV_left",
                "dV_right",
            ],
            &rows,
        ),
    )?;
    let mut s = format!("wrote value_curve.csv ({} rows)\n", rows.len());
    for (name, n) in counts {
        let _ = writeln!(s, "  {name}: {n}");
    }
    Ok(s)
}

fn axis(kind: &str, lo: f64, hi: f64, n: usize, what: &str) -> CliResult<Vec<f64>> {
    match kind {
        "uniform" => Ok(grid::uniform(lo, hi, n)),
        "geometric" if lo > 0.0 => Ok(grid::geometric(lo, hi, n)),
        "geometric" => Err(CliError::Config(format!(
            "{what}: a geometric grid needs a positive lower end"
        ))),
        "quadratic" => Ok(grid::uniform(0.0, 1.0, n)
            .into_iter()
            .map(|t| lo + (hi - lo) * t * t)
            .collect()),
        _ => Err(CliError::Config(format!(
            "{what}: unknown grid '{kind}' (uniform, geometric, quadratic)"
        ))),
    }
}

struct InverseSetup {
    problem: InverseProblem,
    pieces: Vec<IndexPiece>,
    xs: Vec<f64>,
    thetas: Vec<f64>,
    numerics: Numerics,
}

fn extension_side(cfg: &Config, s2: &str, mu: &str) -> CliResult<Option<(Fn1, Fn1)>> {
    match (cfg.expr("inverse", s2)?, cfg.expr("inverse", mu)?) {
        (None, None) => Ok(None),
        (Some(_), None) | (None, Some(_)) => Err(CliError::Config(format!(
            "[inverse] {s2} and {mu} must be given together"
        ))),
        (Some(_), Some(_)) => Ok(Some((
            x_fn(cfg.require_expr_x("inverse", s2)?),
            x_fn(cfg.require_expr_x("inverse", mu)?),
        ))),
    }
}

fn inverse_setup(ctx: &Ctx) -> CliResult<InverseSetup> {
    let cfg = &ctx.cfg;
    if !cfg.has_section("inverse") {
        return Err(CliError::Config("missing section [inverse]".into()));
    }
    let (theta_lo, theta_hi) = theta_range(cfg)?;
    let c = match cfg.expr("reward", "c")? {
        None => None,
        Some(_) => Some(x_fn(cfg.require_expr_x("reward", "c")?)),
    };
    let problem = InverseProblem {
        v: theta_fn(cfg.require_expr_theta("inverse", "V")?),
        v_prime: theta_fn(cfg.require_expr_theta("inverse", "V_prime")?),
        g: xt_fn(cfg.require_expr("reward", "G")?),
        g_theta: xt_fn(cfg.require_expr("reward", "G_theta")?),
        c,
        start: start(cfg)?,
        theta_lo,
        theta_hi,
        rho: rho(cfg)?,
        side: side(cfg)?,
        domain: domain(cfg)?,
        feasibility_condition: cfg.string("inverse", "feasibility_condition"),
        extension: Extension {
            below: extension_side(cfg, "sigma2_below", "mu_below")?,
            above: extension_side(cfg, "sigma2_above", "mu_above")?,
        },
    };
    let lo = cfg.require_number("inverse", "x_min")?;
    let hi = cfg.require_number("inverse", "x_max")?;
    let kind = cfg
        .string("inverse", "x_grid")
        .unwrap_or_else(|| "uniform".into());
    let mut xs = axis(
        &kind,
        lo,
        hi,
        x_points(ctx, "inverse", 401)?,
        "[inverse] x_grid",
    )?;
    let mut pieces = vec![IndexPiece::new(
        lo,
        hi,
        x_fn(cfg.require_expr_x("inverse", "theta_star")?),
    )];
    if cfg.has("inverse", "extension_theta_star") {
        let elo = cfg.require_number("inverse", "extension_min")?;
        let ehi = cfg.require_number("inverse", "extension_max")?;
        let mode = match cfg.string("inverse", "extension_mode").as_deref() {
            None | Some("value") => PieceMode::ValueFormula,
            Some("stationarity") => PieceMode::Stationarity,
            Some(m) => {
                return Err(CliError::Config(format!(
                    "[inverse] extension_mode: expected value or stationarity, got '{m}'"
                )))
            }
        };
        let n = cfg.count("inverse", "extension_points")?.unwrap_or(201);
        let ekind = cfg
            .string("inverse", "extension_grid")
            .unwrap_or_else(|| "uniform".into());
        xs.extend(axis(&ekind, elo, ehi, n, "[inverse] extension_grid")?);
        pieces.push(IndexPiece::extension(
            elo,
            ehi,
            x_fn(cfg.require_expr_x("inverse", "extension_theta_star")?),
            mode,
        ));
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (clo, chi) = {
        let pad = 0.025 * (theta_hi - theta_lo);
        let lo = cfg
            .number("inverse", "check_theta_min")?
            .unwrap_or(theta_lo + pad);
        let hi = cfg
            .number("inverse", "check_theta_max")?
            .unwrap_or(theta_hi - pad);
        (lo, hi)
    };
    if !(clo.is_finite() && chi.is_finite() && clo < chi) {
        return Err(CliError::Config(
            "[inverse] check_theta_min/check_theta_max must be a finite increasing pair".into(),
        ));
    }
    let thetas = grid::uniform(clo, chi, theta_points(ctx, 21)?);
    Ok(InverseSetup {
        problem,
        pieces,
        xs,
        thetas,
        numerics: numerics(cfg)?,
    })
}

fn inverse(ctx: &Ctx, verify: bool) -> CliResult<String> {
    let s = inverse_setup(ctx)?;
    let rec = recover(&s.problem, &s.pieces, &s.xs)?;
    let rows: Vec<Vec<String>> = (0..rec.phi.len())
        .map(|i| {
            let s2 = rec.sigma2.values[i];
            vec![
                num(rec.phi.grid[i]),
                num(rec.phi.values[i]),
                num(rec.r_hat.values[i]),
                num(s2),
                num(rec.mu.values[i]),
                (s2 >= 0.0).to_string(),
            ]
        })
        .collect();
    write_file(
        &ctx.out,
        "recovered.csv",
        &csv(&["x", "phi", "R_hat", "sigma2", "mu", "feasible"], &rows),
    )?;
    let atoms: Vec<Vec<String>> = rec
        .atoms
        .iter()
        .map(|a| vec![num(a.x), num(a.mass)])
        .collect();
    write_file(&ctx.out, "atoms.csv", &csv(&["x", "mass"], &atoms))?;

    let mut report = String::new();
    let mut summary = format!(
        "wrote recovered.csv ({} rows), atoms.csv ({} atoms), report.txt\n",
        rows.len(),
        atoms.len()
    );
    let diagnostics = if rec.feasible {
        verify_candidate(&s.problem, &s.pieces, &rec, &s.thetas, &s.numerics)
    } else {
        rec.diagnostics.clone()
    };
    let _ = writeln!(report, "feasible: {}", rec.feasible);
    let _ = writeln!(report, "natural scale: {}", rec.natural_scale);
    for d in &diagnostics {
        let _ = writeln!(report, "{d}");
    }
    let mut failed: Vec<String> = diagnostics
        .iter()
        .filter(|d| !d.passed)
        .map(|d| d.to_string())
        .collect();
    if verify && rec.feasible {
        let err = round_trip(&s.problem, &rec, &s.thetas, &s.numerics)?;
        let ok = err <= CONSISTENCY_TOL;
        let line = format!(
            "[{}] round trip: max relative value error {err:.3e} over {} θ points (tolerance {CONSISTENCY_TOL:e})",
            if ok { "PASS" } else { "FAIL" },
            s.thetas.len()
        );
        let _ = writeln!(report, "{line}");
        if !ok {
            failed.push(line);
        }
    }
    write_file(&ctx.out, "report.txt", &report)?;
    if !rec.feasible {
        return Err(CliError::Infeasible(format!(
            "infeasible candidate\n{}",
            failed.join("\n")
        )));
    }
    if verify && !failed.is_empty() {
        return Err(CliError::Infeasible(format!(
            "candidate checks failed\n{}",
            failed.join("\n")
        )));
    }
    for f in &failed {
        let _ = writeln!(summary, "warning: {f}");
    }
    Ok(summary)
}

fn x_axis(ctx: &Ctx, p: &ForwardProblem, default: usize) -> CliResult<Vec<f64>> {
    let g = p.grid();
    let (glo, ghi) = (g[0], g[g.len() - 1]);
    let lo = ctx.cfg.number("numerics", "x_min")?.unwrap_or(glo);
    let hi = ctx.cfg.number("numerics", "x_max")?.unwrap_or(ghi);
    if !(lo < hi) || lo < glo || hi > ghi {
        return Err(CliError::Config(format!(
            "[numerics] x range [{lo}, {hi}] must be increasing and inside the working interval [{glo}, {ghi}]"
        )));
    }
    Ok(grid::uniform(lo, hi, x_points(ctx, "numerics", default)?))
}

fn index(ctx: &Ctx) -> CliResult<String> {
    let p = forward_problem(&ctx.cfg)?;
    let thetas = forward_thetas(ctx, &p.reward)?;
    let xs = x_axis(ctx, &p, 41)?;
    let engine = IndexEngine::new(&p, side(&ctx.cfg)?);
    let curve = engine.index_curve(&xs, &thetas)?;
    let rows: Vec<Vec<String>> = (0..xs.len())
        .map(|i| {
            vec![
                num(xs[i]),
                num(curve.theta_lo[i].unwrap_or(f64::NAN)),
                num(curve.theta_hi[i].unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    write_file(
        &ctx.out,
        "index_curve.csv",
        &csv(&["x", "theta_star_lo", "theta_star_hi"], &rows),
    )?;
    Ok(format!(
        "wrote index_curve.csv ({} rows); direction {:?}, stationarity residual {:.3e}\n",
        rows.len(),
        curve.direction,
        curve.stationarity_residual
    ))
}

fn modularity(ctx: &Ctx) -> CliResult<String> {
    let p = forward_problem(&ctx.cfg)?;
    let thetas = forward_thetas(ctx, &p.reward)?;
    let xs = x_axis(ctx, &p, 101)?;
    let rows: Vec<EarlyReward> = thetas
        .iter()
        .map(|&t| p.early_reward(t))
        .collect::<Result<_, _>>()?;
    let l: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            rows.iter()
                .map(|e| Ok(e.log_eval(x)?.unwrap_or(f64::NAN)))
                .collect::<Result<Vec<f64>, StopError>>()
        })
        .collect::<Result<_, _>>()?;
    let v = check_grid_log(&l, &xs, &thetas, &LatticeOptions::default())?;
    let mut s = String::new();
    let _ = writeln!(s, "verdict: {}", v.verdict);
    let _ = writeln!(s, "strict: {}", v.strict);
    let _ = writeln!(
        s,
        "tested: {} of {} grid points positive, {} component(s)",
        v.tested_domain.positive_points, v.tested_domain.total_points, v.tested_domain.components
    );
    match v.witness {
        Some((x, x2, t, t2)) => {
            let _ = writeln!(s, "witness: x = {x}, x' = {x2}, theta = {t}, theta' = {t2}");
        }
        None => {
            let _ = writeln!(s, "witness: none");
        }
    }
    write_file(&ctx.out, "modularity.txt", &s)?;
    Ok(s)
}

fn simulate(ctx: &Ctx) -> CliResult<String> {
    let cfg = &ctx.cfg;
    let spec = diffusion(cfg)?;
    let fam = reward(cfg)?;
    let d = SimConfig::default();
    let sim = SimConfig {
        n_paths: cfg.count("simulate", "n_paths")?.unwrap_or(d.n_paths),
        dt: cfg.number("simulate", "dt")?.unwrap_or(d.dt),
        t_max: cfg.number("simulate", "t_max")?.unwrap_or(d.t_max),
        seed: match ctx.seed {
            Some(s) => s,
            None => cfg.count("simulate", "seed")?.map_or(d.seed, |s| s as u64),
        },
        antithetic: cfg.flag("simulate", "antithetic")?.unwrap_or(d.antithetic),
    };
    let theta = cfg.require_number("simulate", "theta")?;
    let rule = match cfg.string("simulate", "rule").as_deref().unwrap_or("hit") {
        "hit" => StopRule::HitLevel(cfg.require_number("simulate", "level")?),
        "now" => StopRule::StopNow,
        "never" => StopRule::NeverStop,
        r => {
            return Err(CliError::Config(format!(
                "[simulate] rule: expected hit, now or never, got '{r}'"
            )))
        }
    };
    let est = simulate_value(&spec, &fam, rho(cfg)?, theta, rule, &sim)?;
    let mut s = String::new();
    let _ = writeln!(s, "mean = {}", num(est.mean));
    let _ = writeln!(s, "stderr = {}", num(est.stderr));
    let _ = writeln!(s, "bias_bound = {}", num(est.truncation_bias_bound));
    let _ = writeln!(s, "n_effective = {}", est.n_effective);
    if let Some(w) = &est.warning {
        let _ = writeln!(s, "warning = {w}");
    }
    write_file(&ctx.out, "estimate.txt", &s)?;
    Ok(s)
}
