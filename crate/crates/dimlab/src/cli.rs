//! The `dimlab` command tree.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dimlab_core::estimators::{box_dimension, generic_trace, sample_scheme_points, OrbitSource};
use dimlab_core::math::checked_pow;
use dimlab_core::measures::{metric_d, MomentFamily, DEFAULT_DEPTH};
use dimlab_core::moran::{
    build_moran_m, build_moran_padded, check_abstract_scheme, local_dimension, MoranConfig, MoranScheme,
    MAX_SCHEME_INTERVALS,
};
use dimlab_core::pressure::{
    bowen_root, richardson_sweep, sup_dim_ratio, BowenOptions, ConstraintBall, GoodCylinderFilter, OptimizerConfig,
    PressureTables, RateMethod,
};
use dimlab_core::symbolic::{format_symbols, CylinderEnumerator, EnumConfig, Word, SEED_CENTER};
use dimlab_core::{IntervalMap, MeasureSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{read_json, FilterFile, LevelStatsFile, MapFile, MeasureFile, ScheduleFile, SchemeFile};
use crate::output::{Format, Report};
use crate::{CliError, Pool};

#[derive(Debug, Parser)]
#[command(name = "dimlab", version, about = "Dimension estimates for interval maps with parabolic fixed points")]
pub struct Cli {
    /// Emit reports as JSON instead of CSV.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub budgets: Budgets,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct Budgets {
    /// Most cylinders one enumeration may visit.
    #[arg(long, global = true, default_value_t = 1 << 24)]
    pub max_cylinders: u64,
    /// Longest word or orbit.
    #[arg(long, global = true, default_value_t = 1 << 20)]
    pub max_word: usize,
    /// Most sample points.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    pub max_points: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map files.
    #[command(subcommand)]
    Map(MapCmd),
    /// List the cylinders of one depth.
    Cylinders {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        depth: usize,
    },
    /// Moment distance between two measures.
    Metric {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, default_value_t = 32)]
        moments: usize,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
    },
    /// Pressure rates of the good-cylinder sums over a grid of exponents.
    Pressure {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        filter: Option<PathBuf>,
        /// `start:stop:step`.
        #[arg(long, default_value = "0:1:0.05")]
        s_grid: String,
        #[arg(long, default_value_t = 8)]
        n_min: usize,
        #[arg(long, default_value_t = 16)]
        n_max: usize,
    },
    /// Dimension estimates.
    #[command(subcommand)]
    Dimension(DimensionCmd),
    /// Moran constructions and schemes.
    #[command(subcommand)]
    Moran(MoranCmd),
    /// Estimators on sampled sets.
    #[command(subcommand)]
    Estimate(EstimateCmd),
    /// Distance of the empirical measures along an orbit to a measure.
    Trace {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        /// File with the coding word of the starting point.
        #[arg(long, conflicts_with = "x")]
        word_file: Option<PathBuf>,
        /// Starting point, iterated forward.
        #[arg(long)]
        x: Option<f64>,
        /// Orbit length; defaults to the word length.
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 32)]
        moments: usize,
    },
    /// Reproduction tables against closed forms.
    #[command(subcommand)]
    Repro(ReproCmd),
}

#[derive(Debug, Subcommand)]
pub enum MapCmd {
    /// Load a map and report its branches and fixed points.
    Validate { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Windowed,
    Tilted,
}

#[derive(Debug, Subcommand)]
pub enum DimensionCmd {
    /// Zero of the good-cylinder pressure rate.
    Bowen {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, default_value_t = 8)]
        n_min: usize,
        #[arg(long, default_value_t = 16)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-5)]
        s_tol: f64,
        /// Also sweep the window at eps, eps/2, eps/4 and extrapolate.
        #[arg(long)]
        richardson: bool,
    },
    /// `sup h/λ` over Markov measures of the given order.
    Hyp {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 12)]
        depth: usize,
        /// Restrict to a moment ball around this measure.
        #[arg(long, requires = "radius")]
        center: Option<PathBuf>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        lyapunov_floor: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum MoranCmd {
    /// Harvest blocks for a measure and assemble the construction.
    Build {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long, default_value_t = 3)]
        stages: usize,
        #[arg(long, default_value_t = 8)]
        m1: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Insert parabolic pad blocks between the harvested blocks.
        #[arg(long)]
        padded: bool,
        #[arg(long, default_value_t = 0)]
        pad_symbol: u8,
        /// Longest total construction word.
        #[arg(long, default_value_t = 1 << 16)]
        max_length: usize,
        /// Levels to write into the scheme file; defaults to as many as fit.
        #[arg(long)]
        levels: Option<usize>,
        /// Scheme JSON destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one sampled construction word here.
        #[arg(long)]
        word_out: Option<PathBuf>,
        #[command(flatten)]
        export: SchemeExport,
    },
    /// Level diagnostics of a scheme file.
    Check { scheme: PathBuf },
    /// Scheme of all cylinders up to a depth, weighted by a measure.
    Cylinders {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// How much of a construction goes into a scheme file.
#[derive(Debug, Clone, Copy, Args)]
pub struct SchemeExport {
    /// Words kept per block family, those of largest weight first.
    #[arg(long = "scheme-words", default_value_t = 4)]
    pub words: usize,
    /// Interval budget used when `--levels` is not given.
    #[arg(long = "scheme-intervals", default_value_t = 1 << 16)]
    pub intervals: usize,
}

#[derive(Debug, Subcommand)]
pub enum EstimateCmd {
    /// Box-counting dimension of points sampled from a scheme.
    Boxdim {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        points: usize,
        #[arg(long, default_value_t = 4)]
        j_min: usize,
        #[arg(long, default_value_t = 20)]
        j_max: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReproCmd {
    /// Bowen roots of Birkhoff level sets of the doubling map against
    /// `H(p)/log 2`.
    Besicovitch {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.7, 0.9])]
        p: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        n_min: usize,
        #[arg(long, default_value_t = 16)]
        n_max: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
    },
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dimlab: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns its report without printing it.
pub fn report(cli: &Cli) -> Result<Report, CliError> {
    let pool = Pool::new(cli.threads).map_err(|e| CliError::Io(e.to_string()))?;
    let ctx = Ctx { seed: cli.seed, budgets: cli.budgets, pool };
    match &cli.command {
        Command::Map(MapCmd::Validate { file }) => map_validate(&ctx, file),
        Command::Cylinders { map, depth } => cylinders(&ctx, map, *depth),
        Command::Metric { map, mu, nu, moments, depth } => metric(&ctx, map, mu, nu, *moments, *depth),
        Command::Pressure { map, filter, s_grid, n_min, n_max } => {
            pressure(&ctx, map, filter.as_deref(), s_grid, (*n_min, *n_max))
        }
        Command::Dimension(DimensionCmd::Bowen { map, filter, method, n_min, n_max, s_tol, richardson }) => {
            bowen(&ctx, map, filter.as_deref(), *method, (*n_min, *n_max), *s_tol, *richardson)
        }
        Command::Dimension(DimensionCmd::Hyp {
            map,
            order,
            restarts,
            iterations,
            depth,
            center,
            radius,
            lyapunov_floor,
        }) => {
            let cfg = OptimizerConfig {
                restarts: *restarts,
                iterations: *iterations,
                depth: *depth,
                seed: ctx.seed,
                ..Default::default()
            };
            hyp(&ctx, map, *order, &cfg, center.as_deref(), *radius, *lyapunov_floor)
        }
        Command::Moran(MoranCmd::Build {
            map,
            mu,
            stages,
            m1,
            delta,
            samples,
            padded,
            pad_symbol,
            max_length,
            levels,
            out,
            word_out,
            export,
        }) => {
            let cfg = MoranConfig {
                stages: *stages,
                m1: *m1,
                delta: *delta,
                samples: *samples,
                seed: ctx.seed,
                pad_symbol: *pad_symbol,
                max_total_length: *max_length,
                ..Default::default()
            };
            moran_build(&ctx, map, mu, &cfg, *padded, *levels, *export, out.as_deref(), word_out.as_deref())
        }
        Command::Moran(MoranCmd::Check { scheme }) => moran_check(&ctx, scheme),
        Command::Moran(MoranCmd::Cylinders { map, mu, depth, out }) => moran_cylinders(&ctx, map, mu, *depth, out),
        Command::Estimate(EstimateCmd::Boxdim { scheme, points, j_min, j_max }) => {
            boxdim(&ctx, scheme, *points, (*j_min, *j_max))
        }
        Command::Trace { map, mu, word_file, x, n_max, moments } => {
            trace(&ctx, map, mu, word_file.as_deref(), *x, *n_max, *moments)
        }
        Command::Repro(ReproCmd::Besicovitch { p, n_min, n_max, eps, delta }) => {
            besicovitch(&ctx, p, (*n_min, *n_max), *eps, *delta)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let r = report(cli)?;
    let format = if cli.json { Format::Json } else { Format::Csv };
    r.emit(format, cli.csv.as_deref())
}

struct Ctx {
    seed: u64,
    budgets: Budgets,
    pool: Pool,
}

impl Ctx {
    fn check_cylinders(&self, map: &IntervalMap, depth: usize) -> Result<(), CliError> {
        let n = checked_pow(map.alphabet(), depth);
        if n > self.budgets.max_cylinders as u128 {
            return Err(CliError::Budget(format!(
                "{n} cylinders at depth {depth} exceed --max-cylinders {}",
                self.budgets.max_cylinders
            )));
        }
        Ok(())
    }

    fn check_word(&self, len: usize) -> Result<(), CliError> {
        if len > self.budgets.max_word {
            return Err(CliError::Budget(format!("length {len} exceeds --max-word {}", self.budgets.max_word)));
        }
        Ok(())
    }

    fn check_points(&self, n: usize) -> Result<(), CliError> {
        if n > self.budgets.max_points {
            return Err(CliError::Budget(format!("{n} points exceed --max-points {}", self.budgets.max_points)));
        }
        Ok(())
    }
}

fn load_map(path: &Path) -> Result<(IntervalMap, Value), CliError> {
    let (file, raw): (MapFile, Value) = read_json(path)?;
    Ok((file.build()?, raw))
}

fn load_measure(path: &Path) -> Result<(MeasureFile, Value), CliError> {
    read_json(path)
}

/// Lyapunov floor of the filter used when no filter file is given.
pub const DEFAULT_DELTA: f64 = 0.02;

fn load_filter(path: Option<&Path>, map: &IntervalMap) -> Result<(GoodCylinderFilter, Value), CliError> {
    match path {
        Some(p) => {
            let (f, raw): (FilterFile, Value) = read_json(p)?;
            Ok((f.build(map)?, raw))
        }
        None => Ok((GoodCylinderFilter::unconstrained(DEFAULT_DELTA, DEFAULT_DELTA / 2.0)?, Value::Null)),
    }
}

fn kind_name(map: &IntervalMap, b: usize) -> &'static str {
    match map.branch(b).kind {
        dimlab_core::BranchKind::Linear { .. } => "linear",
        dimlab_core::BranchKind::Manneville { .. } => "manneville",
        dimlab_core::BranchKind::Polynomial { .. } => "polynomial",
    }
}

fn map_validate(ctx: &Ctx, file: &Path) -> Result<Report, CliError> {
    let (map, raw) = load_map(file)?;
    let mut r = Report::new("map-validate", ctx.seed, json!({ "map": raw }));
    r.summary("branches", map.alphabet())
        .summary("parabolic", map.parabolic_branches().len())
        .summary("affine", map.is_affine())
        .summary("full", map.is_full());
    r.columns(&["branch", "kind", "lo", "hi", "fixed_point", "parabolic"]);
    for fp in map.fixed_points() {
        let b = map.branch(fp.branch);
        r.row(vec![
            json!(fp.branch),
            json!(kind_name(&map, fp.branch)),
            json!(b.domain.0),
            json!(b.domain.1),
            json!(fp.x),
            json!(fp.parabolic),
        ]);
    }
    Ok(r)
}

fn cylinders(ctx: &Ctx, map_path: &Path, depth: usize) -> Result<Report, CliError> {
    let (map, raw) = load_map(map_path)?;
    ctx.check_cylinders(&map, depth)?;
    let en = CylinderEnumerator::new(&map, depth, &[], EnumConfig { budget: ctx.budgets.max_cylinders as u128 })?;
    let mut r = Report::new("cylinders", ctx.seed, json!({ "map": raw, "depth": depth }));
    r.columns(&["word", "lo", "hi", "diam", "s_n_g"]);
    let mut rows = Vec::new();
    en.for_each(|v| {
        let c = v.to_cylinder();
        rows.push(vec![
            json!(format_symbols(c.word.symbols())),
            json!(c.lo),
            json!(c.hi),
            json!(c.diam),
            json!(v.lyapunov_sum(SEED_CENTER)),
        ]);
    })?;
    r.summary("count", rows.len());
    r.rows = rows;
    Ok(r)
}

fn metric(ctx: &Ctx, map_path: &Path, mu: &Path, nu: &Path, count: usize, depth: usize) -> Result<Report, CliError> {
    let (map, raw) = load_map(map_path)?;
    let family = MomentFamily::new(count)?;
    let (mf, mraw) = load_measure(mu)?;
    let (nf, nraw) = load_measure(nu)?;
    let a = mf.moments(&map, family, depth)?;
    let b = nf.moments(&map, family, depth)?;
    let d = metric_d(&a, &b)?;
    let mut r = Report::new(
        "metric",
        ctx.seed,
        json!({ "map": raw, "mu": mraw, "nu": nraw, "moments": count, "depth": depth }),
    );
    r.summary("d", d.distance)
        .summary("truncation_bound", d.truncation_bound)
        .summary("quadrature_bound", d.quadrature_bound);
    r.columns(&["j", "mu_moment", "nu_moment"]);
    for (j, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        r.row(vec![json!(j + 1), json!(x), json!(y)]);
    }
    Ok(r)
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Validation(format!("grid {text:?} is not start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let (a, b, h) = (v[0], v[1], v[2]);
    if !(h > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let steps = ((b - a) / h + 1e-9).floor() as usize;
    if steps > 100_000 {
        return Err(CliError::Budget(format!("{steps} grid points")));
    }
    Ok((0..=steps).map(|i| a + i as f64 * h).collect())
}

fn pressure(
    ctx: &Ctx,
    map_path: &Path,
    filter: Option<&Path>,
    grid: &str,
    n_range: (usize, usize),
) -> Result<Report, CliError> {
    let (map, raw) = load_map(map_path)?;
    let (f, fraw) = load_filter(filter, &map)?;
    let grid = parse_grid(grid)?;
    ctx.check_cylinders(&map, n_range.1)?;
    let tables = PressureTables::build(&map, &f, n_range, &ctx.pool)?;
    let mut r = Report::new(
        "pressure",
        ctx.seed,
        json!({ "map": raw, "filter": fraw, "s_grid": grid, "n_range": [n_range.0, n_range.1] }),
    );
    let counts = tables.counts();
    r.summary(
        "counts",
        counts.iter().map(|(n, c)| format!("{n}:{c}")).collect::<Vec<_>>().join(" "),
    );
    r.columns(&["s", "rate", "rate_stderr", "rate_sup", "rate_sup_stderr", "rate_gap"]);
    for s in grid {
        let e = tables.estimate(s)?;
        r.row(vec![
            json!(s),
            json!(e.rate),
            json!(e.rate_stderr),
            json!(e.rate_sup),
            json!(e.rate_sup_stderr),
            json!(e.rate_gap()),
        ]);
    }
    Ok(r)
}

fn bowen(
    ctx: &Ctx,
    map_path: &Path,
    filter: Option<&Path>,
    method: Option<MethodArg>,
    n_range: (usize, usize),
    s_tol: f64,
    richardson: bool,
) -> Result<Report, CliError> {
    let (map, raw) = load_map(map_path)?;
    let (f, fraw) = load_filter(filter, &map)?;
    ctx.check_cylinders(&map, n_range.1)?;
    let method = method.map(|m| match m {
        MethodArg::Windowed => RateMethod::Windowed,
        MethodArg::Tilted => RateMethod::Tilted,
    });
    let opts = BowenOptions { n_range, s_tol, method };
    let root = bowen_root(&map, &f, &opts, &ctx.pool)?;
    let mut r = Report::new(
        "dimension-bowen",
        ctx.seed,
        json!({
            "map": raw, "filter": fraw, "n_range": [n_range.0, n_range.1],
            "s_tol": s_tol, "method": format!("{:?}", root.method), "richardson": richardson,
        }),
    );
    r.summary("s", root.s)
        .summary("bracket_lo", root.bracket.0)
        .summary("bracket_hi", root.bracket.1)
        .summary("rate_at_zero", root.rate_at_zero)
        .summary("method", format!("{:?}", root.method).to_lowercase())
        .summary("evaluations", root.evaluations);
    r.columns(&["eps", "root"]);
    r.row(vec![json!(f.eps), json!(root.s)]);
    if richardson && f.eps > 0.0 {
        let sweep = richardson_sweep(&map, &f, [f.eps, f.eps / 2.0, f.eps / 4.0], &opts, &ctx.pool)?;
        r.rows.clear();
        for (e, s) in sweep.eps.iter().zip(&sweep.roots) {
            r.row(vec![json!(e), json!(s)]);
        }
        r.row(vec![json!(0.0), json!(sweep.extrapolated)]);
        r.summary("extrapolated", sweep.extrapolated).summary("spread", sweep.spread);
    }
    Ok(r)
}

fn spec_row(spec: &MeasureSpec) -> String {
    serde_json::to_string(&MeasureFile::from_spec(spec)).unwrap_or_default()
}

fn hyp(
    ctx: &Ctx,
    map_path: &Path,
    order: usize,
    cfg: &OptimizerConfig,
    center: Option<&Path>,
    radius: Option<f64>,
    floor: f64,
) -> Result<Report, CliError> {
    let (map, raw) = load_map(map_path)?;
    ctx.check_cylinders(&map, cfg.depth)?;
    let (ball, craw) = match (center, radius) {
        (Some(c), Some(rad)) => {
            let (mf, craw) = load_measure(c)?;
            (Some(ConstraintBall::new(mf.spec(&map)?, rad, floor)?), craw)
        }
        _ => (None, Value::Null),
    };
    let opt = sup_dim_ratio(&map, ball.as_ref(), order, cfg, &ctx.pool)?;
    let mut r = Report::new(
        "dimension-hyp",
        ctx.seed,
        json!({
            "map": raw, "order": order, "restarts": cfg.restarts, "iterations": cfg.iterations,
            "depth": cfg.depth, "center": craw, "radius": radius, "lyapunov_floor": floor,
        }),
    );
    r.summary("ratio", opt.ratio)
        .summary("entropy", opt.entropy)
        .summary("lyapunov", opt.lyapunov)
        .summary("feasible_restarts", opt.feasible_restarts);
    if let Some(d) = opt.distance {
        r.summary("distance", d);
    }
    r.columns(&["ratio", "entropy", "lyapunov", "measure"]);
    r.row(vec![json!(opt.ratio), json!(opt.entropy), json!(opt.lyapunov), json!(spec_row(&opt.spec))]);
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn moran_build(
    ctx: &Ctx,
    map_path: &Path,
    mu_path: &Path,
    cfg: &MoranConfig,
    padded: bool,
    levels: Option<usize>,
    export: SchemeExport,
    out: Option<&Path>,
    word_out: Option<&Path>,
) -> Result<Report, CliError> {
    let (map, raw) = load_map(map_path)?;
    let (mf, mraw) = load_measure(mu_path)?;
    let mu = mf.spec(&map)?;
    ctx.check_word(cfg.max_total_length)?;
    let c = if padded {
        build_moran_padded(&map, &mu, cfg, &ctx.pool)?
    } else {
        build_moran_m(&map, &mu, cfg, &ctx.pool)?
    };
    let mut r = Report::new(
        "moran-build",
        ctx.seed,
        json!({
            "map": raw, "mu": mraw, "stages": cfg.stages, "m1": cfg.m1, "delta": cfg.delta,
            "samples": cfg.samples, "padded": padded, "pad_symbol": cfg.pad_symbol,
            "max_length": cfg.max_total_length, "levels": levels,
            "scheme_words": export.words, "scheme_intervals": export.intervals,
        }),
    );
    r.summary("target_dimension", c.target_dimension())
        .summary("total_length", c.total_length())
        .summary("families", c.families.len())
        .summary("retries", c.retries);
    let stats: Vec<LevelStatsFile> = c.levels.iter().map(LevelStatsFile::of).collect();
    stats_table(&mut r, &stats);
    if let Some(path) = out {
        let l = levels.unwrap_or_else(|| c.scheme_levels_within(export.words, export.intervals)).max(1);
        let scheme = c.to_scheme_capped(&map, l, export.words)?;
        r.summary("scheme_levels", scheme.depth());
        let mut file = SchemeFile::from_scheme(&scheme, Some(ScheduleFile::of(&c)));
        file.stats = c.levels.iter().map(LevelStatsFile::of).collect();
        let text = serde_json::to_string(&file).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = word_out {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let w = c.sample_word(&mut rng, None);
        fs::write(path, format_symbols(&w)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(r)
}

fn stats_table(r: &mut Report, stats: &[LevelStatsFile]) {
    r.columns(&[
        "level",
        "length",
        "min_quotient",
        "max_quotient",
        "balance",
        "eta_sandwich",
        "diam_sandwich",
        "exhaustive",
    ]);
    for l in stats {
        r.row(vec![
            json!(l.level),
            json!(l.length),
            json!(l.min_quotient),
            json!(l.max_quotient),
            json!(l.balance),
            json!(l.eta_sandwich),
            json!(l.diam_sandwich),
            json!(l.exhaustive),
        ]);
    }
}

fn load_scheme(path: &Path) -> Result<(SchemeFile, Value), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let file: SchemeFile =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let total: usize = file.levels.iter().map(|l| l.len()).sum();
    if total > MAX_SCHEME_INTERVALS {
        return Err(CliError::Budget(format!("{total} scheme intervals")));
    }
    // the hash covers the file bytes; re-serializing thousands of intervals
    // into the config value would only slow things down
    let hash = crate::output::config_hash(&Value::String(text));
    Ok((file, json!({ "scheme_sha256": hash })))
}

fn moran_check(ctx: &Ctx, path: &Path) -> Result<Report, CliError> {
    let (file, cfg) = load_scheme(path)?;
    let scheme = file.scheme()?;
    let mut r = Report::new("moran-check", ctx.seed, cfg);
    r.summary("explicit_levels", scheme.depth());
    if let Some(s) = &file.schedule {
        r.summary("target_dimension", s.target_dimension);
    }
    // constructions resolve far deeper in log space than as explicit
    // intervals, so their stored statistics take precedence
    if !file.stats.is_empty() {
        r.summary("source", "construction");
        stats_table(&mut r, &file.stats);
        return Ok(r);
    }
    let rep = check_abstract_scheme(&scheme)?;
    r.summary("source", "explicit").summary("flags", rep.flags.join(" "));
    r.columns(&[
        "level",
        "count",
        "r",
        "big_r",
        "diameter_ratio",
        "growth_ratio",
        "balance",
        "local_dim_min",
        "local_dim_max",
        "local_dim_mean",
    ]);
    for l in &rep.levels {
        let ld = local_dimension(&scheme, l.level)?;
        r.row(vec![
            json!(l.level),
            json!(l.count),
            json!(l.r),
            json!(l.big_r),
            json!(l.diameter_ratio),
            json!(l.growth_ratio),
            json!(l.balance),
            json!(ld.min),
            json!(ld.max),
            json!(ld.weighted_mean),
        ]);
    }
    Ok(r)
}

fn moran_cylinders(ctx: &Ctx, map_path: &Path, mu_path: &Path, depth: usize, out: &Path) -> Result<Report, CliError> {
    let (map, raw) = load_map(map_path)?;
    let (mf, mraw) = load_measure(mu_path)?;
    let mu = mf.spec(&map)?;
    let total: u128 = (1..=depth).map(|n| checked_pow(map.alphabet(), n)).sum();
    if total > MAX_SCHEME_INTERVALS as u128 {
        return Err(CliError::Budget(format!("{total} scheme intervals")));
    }
    let scheme = MoranScheme::from_measure(&map, &mu, depth)?;
    let file = SchemeFile::from_scheme(&scheme, None);
    let text = serde_json::to_string(&file).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(out, text).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut r = Report::new("moran-cylinders", ctx.seed, json!({ "map": raw, "mu": mraw, "depth": depth }));
    r.summary("levels", depth).summary("entropy", mu.entropy());
    r.columns(&["level", "count"]);
    for (i, lv) in scheme.levels().iter().enumerate() {
        r.row(vec![json!(i + 1), json!(lv.len())]);
    }
    Ok(r)
}

fn boxdim(ctx: &Ctx, path: &Path, points: usize, j_range: (usize, usize)) -> Result<Report, CliError> {
    ctx.check_points(points)?;
    let (file, mut cfg) = load_scheme(path)?;
    cfg["points"] = json!(points);
    cfg["j_range"] = json!([j_range.0, j_range.1]);
    let scheme = file.scheme()?;
    let pts = sample_scheme_points(&scheme, points, ctx.seed, &ctx.pool);
    let b = box_dimension(&pts, j_range)?;
    let mut r = Report::new("estimate-boxdim", ctx.seed, cfg);
    r.summary("slope", b.slope).summary("r2", b.r2).summary("occupied_slope", b.occupied_slope);
    r.columns(&["j", "scale", "count", "entropy", "fitted"]);
    for i in 0..b.j.len() {
        r.row(vec![json!(b.j[i]), json!(b.scales[i]), json!(b.counts[i]), json!(b.entropies[i]), json!(b.fitted[i])]);
    }
    Ok(r)
}

fn trace(
    ctx: &Ctx,
    map_path: &Path,
    mu_path: &Path,
    word_file: Option<&Path>,
    x: Option<f64>,
    n_max: Option<usize>,
    count: usize,
) -> Result<Report, CliError> {
    let (map, raw) = load_map(map_path)?;
    let (mf, mraw) = load_measure(mu_path)?;
    let family = MomentFamily::new(count)?;
    let target = mf.moments(&map, family, DEFAULT_DEPTH)?;
    let (source, n, sraw) = match (word_file, x) {
        (Some(p), None) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            ctx.check_word(text.len())?;
            let w = Word::parse(&text)?;
            w.check(map.alphabet())?;
            let n = n_max.unwrap_or(w.len());
            let h = crate::output::config_hash(&Value::String(text));
            (OrbitSource::Word(w.into_inner()), n, json!({ "word_sha256": h }))
        }
        (None, Some(x)) => {
            let n = n_max.ok_or_else(|| CliError::Validation("--x needs --n-max".into()))?;
            (OrbitSource::Point(x), n, json!({ "x": x }))
        }
        _ => return Err(CliError::Validation("give exactly one of --word-file and --x".into())),
    };
    ctx.check_word(n)?;
    let tr = generic_trace(&map, &source, &target, n)?;
    let mut r = Report::new(
        "trace",
        ctx.seed,
        json!({ "map": raw, "mu": mraw, "source": sraw, "n_max": n, "moments": count }),
    );
    r.summary("tail_liminf", tr.tail_liminf).summary("tail_limsup", tr.tail_limsup);
    r.columns(&["n", "distance", "tail"]);
    for (i, (k, d)) in tr.n.iter().zip(&tr.distances).enumerate() {
        r.row(vec![json!(k), json!(d), json!(i >= tr.tail_start)]);
    }
    Ok(r)
}

/// `H(p)/log 2` in bits.
pub fn binary_entropy_bits(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    (h(p) + h(1.0 - p)) / std::f64::consts::LN_2
}

fn besicovitch(ctx: &Ctx, ps: &[f64], n_range: (usize, usize), eps: f64, delta: f64) -> Result<Report, CliError> {
    let map = IntervalMap::doubling();
    ctx.check_cylinders(&map, n_range.1)?;
    let mut r = Report::new(
        "repro-besicovitch",
        ctx.seed,
        json!({ "p": ps, "n_range": [n_range.0, n_range.1], "eps": eps, "delta": delta }),
    );
    r.columns(&["p", "bowen_root", "closed_form", "abs_error"]);
    let mut worst: f64 = 0.0;
    for &p in ps {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Validation(format!("p = {p} is not a probability")));
        }
        // the mean of x under Bernoulli(1-p, p) on the doubling map is p
        let f = GoodCylinderFilter::new(vec![p], delta, eps)?;
        let opts = BowenOptions { n_range, s_tol: 1e-5, method: Some(RateMethod::Tilted) };
        let root = bowen_root(&map, &f, &opts, &ctx.pool)?;
        let exact = binary_entropy_bits(p);
        worst = worst.max((root.s - exact).abs());
        r.row(vec![json!(p), json!(root.s), json!(exact), json!((root.s - exact).abs())]);
    }
    r.summary("max_abs_error", worst);
    Ok(r)
}
