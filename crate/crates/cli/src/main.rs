//! `orbm`: command-line front end for the ORBM toolkit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use orbm::analytics::constants_table;
use orbm::conformal::{transport, MapSpec, Target};
use orbm::coupling::{run_pair, stochastic_gap_growth};
use orbm::drivers::{brownian_driver, build_cycle_driver, CyclePlan, DrivingPath};
use orbm::params::{classify, derive, region_grid, write_grid_csv, WedgeAngles, DEFAULT_REGION};
use orbm::reflect::{solve_path, ReflectionSpec};
use orbm::sim::{simulate, DriftSpec, DriverInput, LevelRule, Observable, StopRules};
use orbm::verify::{run_suite, Overrides, SUITES};
use orbm::{Vec2, VERSION};

#[derive(Parser, Debug)]
#[command(name = "orbm", version, about = "Obliquely reflected Brownian motion in the quadrant")]
struct Cli {
    /// Worker threads for Monte Carlo replicas (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for artifacts written under their default names.
    #[arg(long, global = true, env = "ORBM_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derived constants and regime label for one angle pair.
    Params(ParamsArgs),
    /// Regime labels on a grid of angle pairs.
    Region(RegionArgs),
    /// Solve the discrete Skorokhod problem for one driving path.
    Reflect(ReflectArgs),
    /// Simulate one trajectory with drift and stopping rules.
    Simulate(SimulateArgs),
    /// Two solutions driven by the same noise.
    Couple(CoupleArgs),
    /// Run a named verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct AngleArgs {
    #[arg(long, allow_hyphen_values = true)]
    theta1: f64,
    #[arg(long, allow_hyphen_values = true)]
    theta2: f64,
}

impl AngleArgs {
    fn angles(&self) -> Result<WedgeAngles> {
        Ok(WedgeAngles::new(self.theta1, self.theta2)?)
    }
}

#[derive(Args, Debug, Serialize)]
struct ParamsArgs {
    #[command(flatten)]
    angles: AngleArgs,
    /// Output file (default: <out-dir>/params.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RegionArgs {
    /// Nodes per axis.
    #[arg(long, default_value_t = 64)]
    res: usize,
    #[arg(long, allow_hyphen_values = true, default_value_t = DEFAULT_REGION.0 .0)]
    theta1_min: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = DEFAULT_REGION.0 .1)]
    theta1_max: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = DEFAULT_REGION.1 .0)]
    theta2_min: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = DEFAULT_REGION.1 .1)]
    theta2_max: f64,
    /// Output file (default: <out-dir>/region.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DomainKind {
    Quadrant,
    Strip,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DriverKind {
    Brownian,
    Cycle,
    File,
}

#[derive(Args, Debug, Serialize)]
struct DriverArgs {
    #[arg(long, value_enum, default_value_t = DriverKind::Brownian)]
    driver: DriverKind,
    /// Driver CSV (t,bx,by) for `--driver file`.
    #[arg(long)]
    driver_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    /// Initial gap for the cycle driver.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Number of cycles for the cycle driver.
    #[arg(long, default_value_t = 1)]
    cycles: usize,
}

#[derive(Args, Debug, Serialize)]
struct ReflectArgs {
    #[command(flatten)]
    angles: AngleArgs,
    #[arg(long, value_enum, default_value_t = DomainKind::Quadrant)]
    domain: DomainKind,
    /// Start point `x,y` (ignored for the cycle driver, which fixes its own).
    #[arg(long, value_parser = parse_point, default_value = "0,0", allow_hyphen_values = true)]
    x0: (f64, f64),
    #[command(flatten)]
    driver: DriverArgs,
    /// Also write the driving path here.
    #[arg(long)]
    save_driver: Option<PathBuf>,
    /// Output file (default: <out-dir>/reflect.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DriftKind {
    None,
    H,
    Strip,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ObservableKind {
    H,
    Vertical,
    LogScale,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum TargetKind {
    Wedge,
    Strip,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    angles: AngleArgs,
    #[arg(long, value_enum, default_value_t = DomainKind::Quadrant)]
    domain: DomainKind,
    #[arg(long, value_enum, default_value_t = DriftKind::None)]
    drift: DriftKind,
    #[arg(long, value_parser = parse_point, default_value = "1,1", allow_hyphen_values = true)]
    x0: (f64, f64),
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Observable for level stopping.
    #[arg(long, value_enum)]
    observable: Option<ObservableKind>,
    #[arg(long, allow_hyphen_values = true)]
    level_lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    level_upper: Option<f64>,
    /// Brownian-bridge correction for level crossings between grid points.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    bridge: bool,
    /// Stop when `|z| < 10 sqrt(dt)`.
    #[arg(long)]
    origin_guard: bool,
    /// Also write the conformally transported path.
    #[arg(long, value_enum)]
    transport: Option<TargetKind>,
    /// Output file (default: <out-dir>/simulate.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CoupleMode {
    /// Deterministic amplification cycle driver.
    Cycle,
    /// One Brownian driver, starts `x0` and `x0 + (eta, 0)`.
    Brownian,
    /// Repeated stochastic cycles with gap rescaling.
    Stochastic,
}

#[derive(Args, Debug, Serialize)]
struct CoupleArgs {
    #[command(flatten)]
    angles: AngleArgs,
    #[arg(long, value_enum, default_value_t = CoupleMode::Cycle)]
    mode: CoupleMode,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    #[arg(long, default_value_t = 1)]
    cycles: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    #[arg(long, value_parser = parse_point, default_value = "1,0", allow_hyphen_values = true)]
    x0: (f64, f64),
    /// Step budget for `--mode stochastic`.
    #[arg(long, default_value_t = 10_000_000)]
    max_steps: usize,
    /// Output file (default: <out-dir>/couple.json; the gap series goes next to it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// Suite name, or `all`.
    #[arg(long)]
    suite: String,
    #[arg(long, allow_hyphen_values = true)]
    theta1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    theta2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Output file (default: <out-dir>/verify-<suite>.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_point(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Failure of a verification suite, as opposed to invalid input.
#[derive(Debug)]
struct SuiteFailed(Vec<String>);

impl std::fmt::Display for SuiteFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0.join("; "))
    }
}

impl std::error::Error for SuiteFailed {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<SuiteFailed>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker pool")?;
    }
    let out = Output { dir: cli.out_dir };
    match &cli.command {
        Command::Params(a) => params(a, &out),
        Command::Region(a) => region(a, &out),
        Command::Reflect(a) => reflect(a, &out),
        Command::Simulate(a) => simulate_cmd(a, &out),
        Command::Couple(a) => couple(a, &out),
        Command::Verify(a) => verify(a, &out),
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn path(&self, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
        match explicit {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.dir.join(p),
            None => self.dir.join(default),
        }
    }

    fn create(&self, path: &Path) -> Result<BufWriter<File>> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn json(&self, path: &Path, value: &Value) -> Result<()> {
        let mut w = self.create(path)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Materialized configuration, echoed into every artifact.
fn config_value<T: Serialize>(command: &str, args: &T, threads: Option<usize>) -> Value {
    json!({ "command": command, "args": args, "threads": threads, "version": VERSION })
}

fn preamble(config: &Value) -> Vec<String> {
    vec![format!("version={VERSION}"), format!("config={config}")]
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn emit(value: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match serde_json::to_writer_pretty(&mut out, value)
        .map_err(std::io::Error::from)
        .and_then(|()| writeln!(out))
    {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn threads() -> Option<usize> {
    Some(rayon::current_num_threads())
}

fn params(a: &ParamsArgs, out: &Output) -> Result<()> {
    let angles = a.angles.angles()?;
    let p = derive(angles)?;
    // Strip constants only exist for a positive opening.
    let constants = constants_table(&angles).ok();
    let report = json!({
        "config": config_value("params", a, threads()),
        "params": p,
        "label": classify(&p).as_str(),
        "constants": constants,
    });
    out.json(&out.path(&a.out, "params.json"), &report)?;
    emit(&report)?;
    Ok(())
}

fn region(a: &RegionArgs, out: &Output) -> Result<()> {
    let nodes = region_grid((a.theta1_min, a.theta1_max), (a.theta2_min, a.theta2_max), a.res)?;
    let path = out.path(&a.out, "region.csv");
    let mut w = out.create(&path)?;
    for line in preamble(&config_value("region", a, threads())) {
        writeln!(w, "# {line}")?;
    }
    write_grid_csv(&nodes, &mut w)?;
    w.flush()?;
    eprintln!("wrote {} nodes to {}", nodes.len(), path.display());
    Ok(())
}

fn reflection_spec(angles: &WedgeAngles, domain: DomainKind) -> Result<ReflectionSpec> {
    Ok(match domain {
        DomainKind::Quadrant => ReflectionSpec::quadrant_from_angles(angles)?,
        DomainKind::Strip => ReflectionSpec::strip(angles)?,
    })
}

fn reflect(a: &ReflectArgs, out: &Output) -> Result<()> {
    let angles = a.angles.angles()?;
    let spec = reflection_spec(&angles, a.domain)?;
    let d = &a.driver;
    let (driver, x0): (DrivingPath, Vec2) = match d.driver {
        DriverKind::Brownian => (brownian_driver(d.seed, d.horizon, d.dt)?, Vec2::new(a.x0.0, a.x0.1)),
        DriverKind::File => {
            let path = d.driver_file.as_ref().context("--driver file needs --driver-file")?;
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            (DrivingPath::read_csv(BufReader::new(f))?, Vec2::new(a.x0.0, a.x0.1))
        }
        DriverKind::Cycle => {
            if !matches!(a.domain, DomainKind::Quadrant) {
                bail!("the cycle driver is defined for the quadrant");
            }
            let plan = CyclePlan {
                cycles: d.cycles,
                dt: d.dt,
                ..CyclePlan::new(d.eta)
            };
            let cd = build_cycle_driver(&derive(angles)?, &plan)?;
            (cd.driver, cd.first_start)
        }
    };
    let config = config_value("reflect", a, threads());
    if let Some(p) = &a.save_driver {
        let p = out.path(&Some(p.clone()), "");
        let mut w = out.create(&p)?;
        driver.write_csv(&mut w, &preamble(&config))?;
        w.flush()?;
    }
    let path = solve_path(&driver, x0, &spec)?;
    let dest = out.path(&a.out, "reflect.csv");
    let mut w = out.create(&dest)?;
    path.write_csv(&mut w, &preamble(&config), &[])?;
    w.flush()?;
    eprintln!(
        "wrote {} states to {} (L = {:.6}, M = {:.6})",
        path.len(),
        dest.display(),
        path.l_lower.last().copied().unwrap_or(0.0),
        path.l_upper.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn simulate_cmd(a: &SimulateArgs, out: &Output) -> Result<()> {
    let angles = a.angles.angles()?;
    let spec = reflection_spec(&angles, a.domain)?;
    let map = || -> Result<MapSpec> { Ok(MapSpec::new(&angles)?) };
    let drift = match a.drift {
        DriftKind::None => DriftSpec::None,
        DriftKind::H => DriftSpec::HTransform(map()?),
        DriftKind::Strip => DriftSpec::StripConditioned,
    };
    let level = match a.observable {
        None => {
            if a.level_lower.is_some() || a.level_upper.is_some() {
                bail!("--level-lower/--level-upper need --observable");
            }
            None
        }
        Some(kind) => Some(LevelRule {
            observable: match kind {
                ObservableKind::H => Observable::H(map()?),
                ObservableKind::Vertical => Observable::Vertical,
                ObservableKind::LogScale => Observable::LogScale,
            },
            lower: a.level_lower,
            upper: a.level_upper,
            bridge: a.bridge,
        }),
    };
    let stop = StopRules {
        horizon: a.horizon,
        level,
        origin_guard: a.origin_guard,
    };
    let x0 = Vec2::new(a.x0.0, a.x0.1);
    let traj = simulate(x0, &spec, &drift, DriverInput::Seeded { seed: a.seed, dt: a.dt }, &stop)?;
    let config = config_value("simulate", a, threads());
    let dest = out.path(&a.out, "simulate.csv");
    let mut w = out.create(&dest)?;
    traj.write_csv(&mut w, &preamble(&config))?;
    w.flush()?;
    if let Some(t) = a.transport {
        if !matches!(a.domain, DomainKind::Quadrant) {
            bail!("--transport maps quadrant paths");
        }
        let target = match t {
            TargetKind::Wedge => Target::Wedge,
            TargetKind::Strip => Target::Strip,
        };
        let tp = transport(&traj.path, &map()?, target, 10.0 * a.dt.sqrt())?;
        let name = match t {
            TargetKind::Wedge => "transport-wedge.csv",
            TargetKind::Strip => "transport-strip.csv",
        };
        let tdest = dest.with_file_name(name);
        let mut w = out.create(&tdest)?;
        tp.write_csv(&mut w, &preamble(&config))?;
        w.flush()?;
    }
    emit(&json!({ "config": config, "summary": traj.summary }))?;
    Ok(())
}

fn couple(a: &CoupleArgs, out: &Output) -> Result<()> {
    let angles = a.angles.angles()?;
    let p = derive(angles)?;
    let spec = ReflectionSpec::quadrant(p.a1, p.a2)?;
    let config = config_value("couple", a, threads());
    let dest = out.path(&a.out, "couple.json");
    let report = match a.mode {
        CoupleMode::Stochastic => {
            let g = stochastic_gap_growth(a.seed, &p, a.eta, a.cycles, a.dt, a.max_steps)?;
            json!({ "config": config, "beta": p.beta, "growth": g })
        }
        CoupleMode::Cycle | CoupleMode::Brownian => {
            let (driver, x0, y0) = if let CoupleMode::Cycle = a.mode {
                let plan = CyclePlan {
                    cycles: a.cycles,
                    dt: a.dt,
                    ..CyclePlan::new(a.eta)
                };
                let cd = build_cycle_driver(&p, &plan)?;
                (cd.driver, cd.first_start, cd.second_start)
            } else {
                let x0 = Vec2::new(a.x0.0, a.x0.1);
                (brownian_driver(a.seed, a.horizon, a.dt)?, x0, x0 + Vec2::new(a.eta, 0.0))
            };
            let r = run_pair(&driver, x0, y0, &spec, &DriftSpec::None)?;
            let gap_dest = dest.with_extension("gap.csv");
            let mut w = out.create(&gap_dest)?;
            r.write_gap_csv(&mut w, &preamble(&config))?;
            w.flush()?;
            json!({
                "config": config,
                "beta": p.beta,
                "gap_csv_path": gap_dest,
                "stage_events": r.events,
                "stages": r.stages,
                "factors": r.cycle_factors,
                "cycle_factor": r.cycle_factor(),
                "cumulative_factor": r.cumulative_factor(),
                "pattern_break_rate": r.pattern_break_rate(),
            })
        }
    };
    out.json(&dest, &report)?;
    let brief = json!({
        "beta": report["beta"],
        "cycle_factor": report.get("cycle_factor"),
        "cumulative_factor": report.get("cumulative_factor"),
        "log_mean": report.get("growth").and_then(|g| g.get("log_mean")),
    });
    emit(&brief)?;
    Ok(())
}

fn verify(a: &VerifyArgs, out: &Output) -> Result<()> {
    let names: Vec<&str> = if a.suite == "all" {
        SUITES.to_vec()
    } else {
        vec![a.suite.as_str()]
    };
    let overrides = Overrides {
        theta1: a.theta1,
        theta2: a.theta2,
        seed: a.seed,
        replicas: a.replicas,
        dt: a.dt,
    };
    let mut failing = Vec::new();
    let mut reports = Vec::new();
    for name in names {
        let report = run_suite(name, &overrides)?;
        for c in &report.checks {
            eprintln!("[{name}] {}", c.line());
        }
        failing.extend(report.failing().iter().map(|c| format!("{name}: {c}")));
        reports.push(report);
    }
    let doc = json!({
        "config": config_value("verify", a, threads()),
        "passed": failing.is_empty(),
        "reports": reports,
    });
    out.json(&out.path(&a.out, &format!("verify-{}.json", a.suite)), &doc)?;
    emit(&doc)?;
    if failing.is_empty() {
        Ok(())
    } else {
        Err(SuiteFailed(failing).into())
    }
}
