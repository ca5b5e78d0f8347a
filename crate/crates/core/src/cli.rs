//! Command-line experiment runner.
//!
//! Every command writes comma-separated text: a `#` metadata block, a
//! header row and data rows. Lines of the form `# key = value` list the
//! resolved flags of the run; stripped of the `# ` they form a valid
//! `--config` file that reproduces it.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::approx::{self, Evaluation, RctBreakdown};
use crate::curve::{curve_for_generation, Direction, KappaCurve, Mode, TraceConfig};
use crate::endemic::{self, SisScenario};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::kappa::{self, SolverSettings};
use crate::mc::{self, Caps};
use crate::model::{AgeProfile, DelayKernel, Rates};
use crate::presets::{self, TracingFigure};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CTDELAY_THREADS";

#[derive(Parser, Debug)]
#[command(name = "ctdelay", version, about = "Survival under delayed contact tracing")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve for the survival curves of one tracing configuration.
    Kappa(KappaArgs),
    /// Estimate a survival curve from simulated outbreaks.
    Simulate(SimulateArgs),
    /// Reproduction numbers with tracing: closed form and quadrature.
    Rct(RctArgs),
    /// Parameter grids of closed-form quantities.
    Sweep(SweepArgs),
    /// Endemic SIS model with tracing switched on part way.
    Sis(SisArgs),
    /// Regenerate the data behind a figure.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output file; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Flat `key = value` file of flag values; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
    /// `dirac:T`, `exp:MEAN` or `table:STEP:d0,d1,...`.
    #[arg(long, default_value = "dirac:0.5")]
    pub delay: DelayKernel,
    /// Initial period without infectivity or detection.
    #[arg(long)]
    pub latency: Option<f64>,
}

impl ModelArgs {
    fn rates(&self) -> Result<Rates> {
        Rates::new(self.beta, self.alpha, self.sigma, self.p)
    }

    fn profile(&self) -> Result<AgeProfile> {
        let rates = self.rates()?;
        match self.latency {
            Some(ti) if ti > 0.0 => AgeProfile::fixed_latency(rates, ti),
            Some(ti) if ti < 0.0 => Err(invalid("latency must be nonnegative")),
            _ => Ok(AgeProfile::Constant(rates)),
        }
    }

    fn params(&self, out: &mut Params) {
        out.push("beta", self.beta);
        out.push("alpha", self.alpha);
        out.push("sigma", self.sigma);
        out.push("p", self.p);
        out.push("delay", &self.delay);
        if let Some(ti) = self.latency {
            out.push("latency", ti);
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TraceArgs {
    #[arg(long, default_value = "backward")]
    pub direction: Direction,
    #[arg(long, default_value = "recursive")]
    pub mode: Mode,
    /// Highest generation solved for forward and full tracing.
    #[arg(long, default_value_t = 4)]
    pub generations: usize,
}

impl TraceArgs {
    fn config(&self) -> Result<TraceConfig> {
        TraceConfig::new(self.direction, self.mode, self.generations)
    }

    fn params(&self, out: &mut Params) {
        out.push("direction", self.direction);
        out.push("mode", self.mode);
        out.push("generations", self.generations);
    }
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Age step; chosen from the rates and the delay when absent.
    #[arg(long)]
    pub h: Option<f64>,
    /// Last age of the grid.
    #[arg(long)]
    pub a_max: Option<f64>,
}

impl GridArgs {
    fn grid(&self, profile: &AgeProfile, kernel: &DelayKernel) -> Result<Grid> {
        let auto = Grid::for_profile(profile, kernel)?;
        match (self.h, self.a_max) {
            (None, None) => Ok(auto),
            (h, a_max) => Grid::new(h.unwrap_or(auto.h()), a_max.unwrap_or(auto.a_max())),
        }
    }

    fn params(&self, out: &mut Params) {
        if let Some(h) = self.h {
            out.push("h", h);
        }
        if let Some(a) = self.a_max {
            out.push("a-max", a);
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct KappaArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Add the first-order curve as a column.
    #[arg(long)]
    pub first_order: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Generation whose survival is estimated.
    #[arg(long, default_value_t = 0)]
    pub generation: u32,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the event log of the first replica to this file.
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct RctArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// First-order effect over tracing delay and latency.
    RctLatency,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    pub kind: SweepKind,
    #[arg(long, default_value_t = presets::SWEEP.r0)]
    pub r0: f64,
    /// Delays as `start:stop:step` or a single value.
    #[arg(long = "T", default_value = "0:3:0.05")]
    pub delays: Range,
    /// Latencies as `start:stop:step` or a single value.
    #[arg(long = "Ti", default_value = "0:3:0.05")]
    pub latencies: Range,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct SisArgs {
    #[arg(long, default_value_t = presets::SIS.beta)]
    pub beta: f64,
    #[arg(long, default_value_t = presets::SIS.alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = presets::SIS.sigma)]
    pub sigma: f64,
    /// Tracing probability from `tracing_start` on.
    #[arg(long, default_value_t = presets::SIS.p)]
    pub p: f64,
    #[arg(long, default_value_t = presets::SIS.delay)]
    pub delay: f64,
    #[arg(long, default_value = "full")]
    pub direction: Direction,
    #[arg(long, default_value = "recursive")]
    pub mode: Mode,
    #[arg(long, default_value_t = presets::SIS.population)]
    pub population: u32,
    #[arg(long, default_value_t = presets::SIS.initial_infected)]
    pub initial: u32,
    #[arg(long, default_value_t = presets::SIS.horizon)]
    pub horizon: f64,
    #[arg(long, default_value_t = presets::SIS.tracing_start)]
    pub tracing_start: f64,
    /// Output spacing and integration step.
    #[arg(long, default_value_t = presets::SIS.step)]
    pub step: f64,
    #[arg(long, default_value_t = presets::SIS.seeds)]
    pub seeds: u64,
    /// First seed; runs use consecutive seeds.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Start of the window averaged for the summary.
    #[arg(long, default_value_t = presets::SIS.settled_from)]
    pub window_start: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Kernels,
    Sis,
    Sweep,
}

#[derive(Args, Debug, Clone)]
pub struct ReproduceArgs {
    pub figure: Figure,
    /// Directory receiving one file per panel.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Accepted for symmetry with the other commands.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Inclusive arithmetic range of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        if self.step == 0.0 {
            return vec![self.start];
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.step == 0.0 {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}:{}:{}", self.start, self.stop, self.step)
        }
    }
}

impl std::str::FromStr for Range {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{v}' in range '{s}'")))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let range = match parts.as_slice() {
            [v] => {
                let v = num(v)?;
                Range { start: v, stop: v, step: 0.0 }
            }
            [a, b, h] => Range {
                start: num(a)?,
                stop: num(b)?,
                step: num(h)?,
            },
            _ => return Err(Error::Parse(format!("range '{s}' is not START:STOP:STEP"))),
        };
        if !(range.start.is_finite() && range.stop >= range.start) {
            return Err(Error::Parse(format!("range '{s}' is empty")));
        }
        if !(range.step > 0.0 || (range.step == 0.0 && range.stop == range.start)) {
            return Err(Error::Parse(format!("range '{s}' needs a positive step")));
        }
        Ok(range)
    }
}

/// Resolved flags of a run, written into the metadata block.
#[derive(Debug, Default, Clone)]
struct Params(Vec<(String, String)>);

impl Params {
    fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.0.push((key.to_owned(), value.to_string()));
    }
}

/// Column-oriented table with a metadata header.
struct Table {
    command: String,
    params: Params,
    notes: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(command: &str, params: Params, header: Vec<String>) -> Self {
        Self {
            command: command.to_owned(),
            params,
            notes: Vec::new(),
            header,
            rows: Vec::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.notes.push((key.to_owned(), value.to_string()));
    }

    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# ctdelay {} {}", env!("CARGO_PKG_VERSION"), self.command);
        for (k, v) in &self.params.0 {
            let _ = writeln!(s, "# {k} = {v}");
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "{}", self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, or to standard output.
fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(contents.as_bytes())?;
            lock.flush()?;
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(contents.as_bytes())?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        }
    }
    Ok(())
}

/// Prints the run summary next to, not into, the data.
fn summary(to_file: bool, line: &str) {
    if to_file {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

/// Parses a flat `key = value` configuration. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", n + 1)))?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(Error::Parse(format!("config line {}: empty key", n + 1)));
        }
        out.push((k.to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

/// Turns config entries into flags placed right after the subcommand, so
/// that flags given on the command line override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        }
    }
    let Some(path) = path else { return Ok(args) };
    if args.len() < 2 {
        return Ok(args);
    }
    let text = std::fs::read_to_string(&path)?;
    let mut injected = Vec::new();
    for (k, v) in parse_config(&text)? {
        match v.as_str() {
            "true" => injected.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => injected.push(OsString::from(format!("--{k}={v}"))),
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status; diagnostics go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("ctdelay: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match with_threads(|| run(&cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ctdelay: {e}");
            e.exit_code()
        }
    }
}

/// Runs `f` on a pool sized by `CTDELAY_THREADS` when that is set.
fn with_threads<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("{THREADS_ENV} must be a thread count, got '{v}'")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| invalid(e.to_string()))?;
            pool.install(f)
        }
        Err(_) => f(),
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Kappa(a) => run_kappa(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Rct(a) => run_rct(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Sis(a) => run_sis(a),
        Command::Reproduce(a) => run_reproduce(a),
    }
}

fn column_label(c: &KappaCurve) -> String {
    let g = c.generation();
    if g.is_limit() {
        format!("gen_{}_limit", g.index())
    } else {
        format!("gen_{}", g.index())
    }
}

/// Closed-form first-order reproduction number for the traced directions,
/// when one exists.
fn closed_form_rct(model: &ModelArgs, direction: Direction) -> Result<Option<f64>> {
    let r = model.rates()?;
    let b = match (&model.delay, model.latency) {
        (DelayKernel::Dirac { delay }, Some(ti)) if ti > 0.0 => {
            approx::rct_latency(r.r0(), r.p(), r.p_obs(), r.gamma(), *delay, ti)?
        }
        (DelayKernel::Dirac { delay }, _) => approx::rct_fixed(r.r0(), r.p(), r.p_obs(), r.gamma(), *delay)?,
        (DelayKernel::Exponential { mean }, None) => {
            approx::rct_exponential(r.r0(), r.p(), r.p_obs(), r.gamma(), *mean)?
        }
        _ => return Ok(None),
    };
    Ok(Some(directional(&b, direction)))
}

fn directional(b: &RctBreakdown, direction: Direction) -> f64 {
    let mut effect = 0.0;
    if direction.traces_infector() {
        effect += b.backward_term;
    }
    if direction.traces_infectees() {
        effect += b.forward_term;
    }
    b.r0 - b.p * effect
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.6}"))
}

fn run_kappa(a: &KappaArgs) -> Result<()> {
    let profile = a.model.profile()?;
    let kernel = &a.model.delay;
    let config = a.trace.config()?;
    let grid = a.grid.grid(&profile, kernel)?;
    let settings = SolverSettings::new(grid);
    let curves = kappa::solve(&profile, kernel, &config, &settings)?;
    let baseline = KappaCurve::baseline(&profile, grid);
    let first = if a.first_order {
        match &profile {
            AgeProfile::Constant(r) => {
                Some(approx::first_order(config.direction, r, kernel, &grid, Evaluation::Auto)?)
            }
            _ => return Err(invalid("first-order curves need constant rates")),
        }
    } else {
        None
    };

    let mut params = Params::default();
    a.model.params(&mut params);
    a.trace.params(&mut params);
    a.grid.params(&mut params);
    if a.first_order {
        params.push("first-order", true);
    }
    let mut header = vec!["a".to_owned(), "kappa_hat".to_owned()];
    header.extend(curves.iter().map(column_label));
    if first.is_some() {
        header.push("first_order".to_owned());
    }
    let mut table = Table::new("kappa", params, header);
    table.note("grid", format!("h={} n={}", grid.h(), grid.len()));
    if let Some(f) = &first {
        table.note("first_order_clipped", f.clipped);
        table.note("first_order_valid", f.valid);
    }
    for (k, age) in grid.ages().enumerate() {
        let mut row = vec![age, baseline.values()[k]];
        row.extend(curves.iter().map(|c| c.values()[k]));
        if let Some(f) = &first {
            row.push(f.curve.values()[k]);
        }
        table.rows.push(row);
    }
    let r0 = approx::reproduction_number(&baseline, &profile);
    let closed = closed_form_rct(&a.model, config.direction)?;
    let numeric = approx::reproduction_number(curves.last().expect("solver returns curves"), &profile);
    emit(a.common.output.as_deref(), &table.render())?;
    summary(
        a.common.output.is_some(),
        &format!("R0={r0:.6} Rct_closed={} R_numeric={numeric:.6}", fmt_opt(closed)),
    );
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let profile = a.model.profile()?;
    let kernel = &a.model.delay;
    let config = a.trace.config()?;
    let grid = a.grid.grid(&profile, kernel)?;
    if a.replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let caps = Caps::for_generation(&config, a.generation);
    let ensemble = mc::run_ensemble(&profile, kernel, &config, &caps, a.replicas, a.seed, &grid);
    let emp = mc::estimate_kappa(&ensemble, a.generation, &grid, &config)?;
    let (r, se) = mc::estimate_r(&ensemble, a.generation)?;
    if let Some(path) = &a.event_log {
        let outbreak = mc::simulate_outbreak(&profile, kernel, &config, a.seed, &caps);
        let mut buf = Vec::new();
        mc::write_event_log(&outbreak, &mut buf)?;
        emit(Some(path), &String::from_utf8_lossy(&buf))?;
    }

    let mut params = Params::default();
    a.model.params(&mut params);
    a.trace.params(&mut params);
    a.grid.params(&mut params);
    params.push("generation", a.generation);
    params.push("replicas", a.replicas);
    params.push("seed", a.seed);
    let header = ["a", "kappa", "ci_lo", "ci_hi"].map(String::from).to_vec();
    let mut table = Table::new("simulate", params, header);
    table.note("sample_size", emp.sample_size);
    for (k, age) in grid.ages().enumerate() {
        table.rows.push(vec![age, emp.curve.values()[k], emp.lower[k], emp.upper[k]]);
    }
    emit(a.common.output.as_deref(), &table.render())?;
    let r0 = profile_r0(&profile, &grid);
    summary(
        a.common.output.is_some(),
        &format!(
            "R0={r0:.6} Rct_closed={} R_mc={r:.6} se={se:.6} n={}",
            fmt_opt(closed_form_rct(&a.model, config.direction)?),
            emp.sample_size
        ),
    );
    Ok(())
}

fn profile_r0(profile: &AgeProfile, grid: &Grid) -> f64 {
    approx::reproduction_number(&KappaCurve::baseline(profile, *grid), profile)
}

fn run_rct(a: &RctArgs) -> Result<()> {
    let profile = a.model.profile()?;
    let kernel = &a.model.delay;
    let grid = a.grid.grid(&profile, kernel)?;
    let rates = a.model.rates()?;
    let closed = closed_form_rct(&a.model, Direction::Full)?;
    let quad = match &profile {
        AgeProfile::Constant(r) => approx::rct_quadrature(r, kernel, &grid),
        _ => {
            let (minus, plus) = approx::eta_integrals(&profile, kernel, &grid)?;
            RctBreakdown::new(rates.r0(), rates.p(), minus, plus)
        }
    };
    let mut params = Params::default();
    a.model.params(&mut params);
    a.grid.params(&mut params);
    let header = [
        "r0",
        "p",
        "p_obs",
        "backward_term",
        "forward_term",
        "rct_quadrature",
        "rct_closed",
    ]
    .map(String::from)
    .to_vec();
    let mut table = Table::new("rct", params, header);
    table.rows.push(vec![
        quad.r0,
        quad.p,
        rates.p_obs(),
        quad.backward_term,
        quad.forward_term,
        quad.rct,
        closed.unwrap_or(f64::NAN),
    ]);
    emit(a.common.output.as_deref(), &table.render())?;
    summary(
        a.common.output.is_some(),
        &format!(
            "R0={:.6} Rct_closed={} R_numeric={:.6}",
            quad.r0,
            fmt_opt(closed),
            quad.rct
        ),
    );
    Ok(())
}

/// `R0 kappa_hat(T + Ti) + (kappa_hat(M) / kappa_hat(Ti)) (2 - kappa_hat(M) / kappa_hat(T))`
/// with `M = max(T, Ti)`, times measured in mean infectious periods.
pub fn latency_effect(r0: f64, t: f64, ti: f64) -> Result<RctBreakdown> {
    approx::rct_latency(r0, 1.0, 1.0, 1.0, t, ti)
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    match a.kind {
        SweepKind::RctLatency => {
            let mut params = Params::default();
            params.push("r0", a.r0);
            params.push("T", &a.delays);
            params.push("Ti", &a.latencies);
            let header = ["T", "Ti", "effect", "backward", "forward"].map(String::from).to_vec();
            let mut table = Table::new("sweep rct-latency", params, header);
            for t in a.delays.values() {
                for ti in a.latencies.values() {
                    let b = latency_effect(a.r0, t, ti)?;
                    let scale = 0.5 * a.r0;
                    table.rows.push(vec![
                        t,
                        ti,
                        (b.backward_term + b.forward_term) / scale,
                        b.backward_term / scale,
                        b.forward_term / scale,
                    ]);
                }
            }
            emit(a.common.output.as_deref(), &table.render())?;
            summary(
                a.common.output.is_some(),
                &format!("cells={}", table.rows.len()),
            );
        }
    }
    Ok(())
}

fn sis_scenario(a: &SisArgs) -> Result<SisScenario> {
    let scenario = SisScenario {
        rates: Rates::new(a.beta, a.alpha, a.sigma, a.p)?,
        kernel: DelayKernel::dirac(a.delay)?,
        population: a.population,
        initial_infected: a.initial,
        horizon: a.horizon,
        tracing_start: a.tracing_start,
        step: a.step,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Output of the endemic comparison: the ODE path and the stochastic runs.
pub struct SisComparison {
    pub ode: endemic::SisTimeSeries,
    pub runs: Vec<endemic::SisTimeSeries>,
    pub window_start: f64,
}

impl SisComparison {
    pub fn ode_level(&self) -> f64 {
        self.ode.mean_over(self.window_start, self.ode.times[self.ode.times.len() - 1])
    }

    /// Window mean of each run, averaged over runs.
    pub fn stochastic_level(&self) -> f64 {
        let end = self.ode.times[self.ode.times.len() - 1];
        self.runs.iter().map(|r| r.mean_over(self.window_start, end)).sum::<f64>()
            / self.runs.len() as f64
    }
}

pub fn sis_compare(a: &SisArgs) -> Result<SisComparison> {
    let scenario = sis_scenario(a)?;
    if a.seeds == 0 {
        return Err(invalid("need at least one seed"));
    }
    if !(a.window_start >= a.tracing_start && a.window_start < a.horizon) {
        return Err(invalid("averaging window must start after tracing and before the horizon"));
    }
    let config = TraceConfig::new(a.direction, a.mode, 1)?;
    let ode = endemic::integrate_sis(&scenario)?;
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let runs = endemic::simulate_sis_ensemble(&scenario, &config, &seeds)?;
    Ok(SisComparison {
        ode,
        runs,
        window_start: a.window_start,
    })
}

fn run_sis(a: &SisArgs) -> Result<()> {
    let cmp = sis_compare(a)?;
    let mut params = Params::default();
    for (k, v) in [
        ("beta", a.beta),
        ("alpha", a.alpha),
        ("sigma", a.sigma),
        ("p", a.p),
        ("delay", a.delay),
    ] {
        params.push(k, v);
    }
    params.push("direction", a.direction);
    params.push("mode", a.mode);
    params.push("population", a.population);
    params.push("initial", a.initial);
    params.push("horizon", a.horizon);
    params.push("tracing-start", a.tracing_start);
    params.push("step", a.step);
    params.push("seeds", a.seeds);
    params.push("seed", a.seed);
    params.push("window-start", a.window_start);
    let table = sis_table(&cmp, params);
    emit(a.common.output.as_deref(), &table.render())?;
    summary(
        a.common.output.is_some(),
        &format!(
            "ode_level={:.6} stochastic_level={:.6} extinct={}",
            cmp.ode_level(),
            cmp.stochastic_level(),
            cmp.runs.iter().filter(|r| r.extinct_at.is_some()).count()
        ),
    );
    Ok(())
}

fn sis_table(cmp: &SisComparison, params: Params) -> Table {
    let header = ["t", "phase", "ode", "stochastic_mean", "stochastic_first"]
        .map(String::from)
        .to_vec();
    let mut table = Table::new("sis", params, header);
    table.note("effect_start", cmp.ode.effect_start);
    let n = cmp.runs.len() as f64;
    for (k, &t) in cmp.ode.times.iter().enumerate() {
        let phase = if t < cmp.ode.tracing_start {
            0.0
        } else if t < cmp.ode.effect_start {
            1.0
        } else {
            2.0
        };
        let mean = cmp.runs.iter().map(|r| r.fractions[k]).sum::<f64>() / n;
        table
            .rows
            .push(vec![t, phase, cmp.ode.fractions[k], mean, cmp.runs[0].fractions[k]]);
    }
    table
}

fn run_reproduce(a: &ReproduceArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    let mut params = Params::default();
    params.push("replicas", a.replicas);
    params.push("seed", a.seed);
    match a.figure {
        Figure::Fig1 => reproduce_tracing(&presets::FIG1, a, params),
        Figure::Fig2 => reproduce_tracing(&presets::FIG2, a, params),
        Figure::Fig3 => reproduce_tracing(&presets::FIG3, a, params),
        Figure::Kernels => reproduce_kernels(a),
        Figure::Sis => {
            let p = presets::SIS;
            let args = SisArgs {
                beta: p.beta,
                alpha: p.alpha,
                sigma: p.sigma,
                p: p.p,
                delay: p.delay,
                direction: Direction::Full,
                mode: Mode::Recursive,
                population: p.population,
                initial: p.initial_infected,
                horizon: p.horizon,
                tracing_start: p.tracing_start,
                step: p.step,
                seeds: p.seeds,
                seed: a.seed,
                window_start: p.settled_from,
                common: Common {
                    output: Some(a.out_dir.join("sis.csv")),
                    config: None,
                },
            };
            run_sis(&args)
        }
        Figure::Sweep => {
            let s = presets::SWEEP;
            let range = Range {
                start: s.start,
                stop: s.stop,
                step: s.step,
            };
            run_sweep(&SweepArgs {
                kind: SweepKind::RctLatency,
                r0: s.r0,
                delays: range.clone(),
                latencies: range,
                common: Common {
                    output: Some(a.out_dir.join("sweep_rct_latency.csv")),
                    config: None,
                },
            })
        }
    }
}

/// Theory, first-order and simulated curves of one survival-figure panel.
pub struct Panel {
    pub grid: Grid,
    pub baseline: KappaCurve,
    pub theory: KappaCurve,
    pub first_order: KappaCurve,
    pub simulated: mc::EmpiricalCurve,
}

pub fn tracing_panel(
    fig: &TracingFigure,
    mode: Mode,
    p: f64,
    replicas: u64,
    seed: u64,
) -> Result<Panel> {
    let rates = fig.rates(p)?;
    let profile = AgeProfile::Constant(rates);
    let kernel = fig.kernel();
    let grid = Grid::for_rates(rates.gamma(), &kernel)?;
    let settings = SolverSettings::new(grid);
    let g = fig.generation;
    let config = TraceConfig::new(fig.direction, mode, g.max(1) as usize)?;
    let curves = kappa::solve(&profile, &kernel, &config, &settings)?;
    let theory = curve_for_generation(&curves, g as usize)
        .cloned()
        .ok_or_else(|| invalid(format!("no curve for generation {g}")))?;
    let first_order = approx::first_order(fig.direction, &rates, &kernel, &grid, Evaluation::Auto)?.curve;
    let caps = Caps::for_generation(&config, g);
    let ensemble = mc::run_ensemble(&profile, &kernel, &config, &caps, replicas, seed, &grid);
    let simulated = mc::estimate_kappa(&ensemble, g, &grid, &config)?;
    Ok(Panel {
        grid,
        baseline: KappaCurve::baseline(&profile, grid),
        theory,
        first_order,
        simulated,
    })
}

fn reproduce_tracing(fig: &TracingFigure, a: &ReproduceArgs, params: Params) -> Result<()> {
    for mode in [Mode::OneStep, Mode::Recursive] {
        for p in fig.probabilities {
            let panel = tracing_panel(fig, mode, p, a.replicas, a.seed)?;
            let header = ["a", "kappa_hat", "theory", "first_order", "mc", "mc_lo", "mc_hi"]
                .map(String::from)
                .to_vec();
            let mut table = Table::new(&format!("reproduce {}", fig.id), params.clone(), header);
            table.note("direction", fig.direction);
            table.note("mode", mode);
            table.note("p", p);
            table.note("beta", fig.beta);
            table.note("alpha", fig.alpha);
            table.note("sigma", fig.sigma);
            table.note("delay", fig.kernel());
            table.note("generation", fig.generation);
            table.note("sample_size", panel.simulated.sample_size);
            let last = panel.grid.floor_index(fig.age_window);
            for (k, age) in panel.grid.ages().enumerate().take(last + 1) {
                table.rows.push(vec![
                    age,
                    panel.baseline.values()[k],
                    panel.theory.values()[k],
                    panel.first_order.values()[k],
                    panel.simulated.curve.values()[k],
                    panel.simulated.lower[k],
                    panel.simulated.upper[k],
                ]);
            }
            let name = format!("{}_{}_p{}.csv", fig.id, mode, p);
            let path = a.out_dir.join(&name);
            emit(Some(&path), &table.render())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn reproduce_kernels(a: &ReproduceArgs) -> Result<()> {
    let f = presets::KERNELS;
    let rates = Rates::new(f.beta, f.alpha, f.sigma, f.p)?;
    let fixed = DelayKernel::dirac(f.mean_delay)?;
    let exp = DelayKernel::exponential(f.mean_delay)?;
    let grid = Grid::for_rates(rates.gamma(), &fixed)?;
    let hat = KappaCurve::baseline(&AgeProfile::Constant(rates), grid);
    for direction in [Direction::Backward, Direction::Forward] {
        let fixed_curve = approx::first_order(direction, &rates, &fixed, &grid, Evaluation::Auto)?;
        let exp_curve = approx::first_order(direction, &rates, &exp, &grid, Evaluation::Auto)?;
        let header = ["a", "kappa_hat", "fixed", "exponential"].map(String::from).to_vec();
        let mut table = Table::new("reproduce kernels", Params::default(), header);
        table.note("direction", direction);
        table.note("beta", f.beta);
        table.note("alpha", f.alpha);
        table.note("sigma", f.sigma);
        table.note("p", f.p);
        table.note("mean_delay", f.mean_delay);
        let last = grid.floor_index(f.age_window);
        for (k, age) in grid.ages().enumerate().take(last + 1) {
            table.rows.push(vec![
                age,
                hat.values()[k],
                fixed_curve.curve.values()[k] / hat.values()[k],
                exp_curve.curve.values()[k] / hat.values()[k],
            ]);
        }
        let path = a.out_dir.join(format!("kernels_{direction}.csv"));
        emit(Some(&path), &table.render())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse_and_expand() {
        let r: Range = "0:3:0.05".parse().unwrap();
        let v = r.values();
        assert_eq!(v.len(), 61);
        assert!((v[60] - 3.0).abs() < 1e-12);
        assert_eq!("1.5".parse::<Range>().unwrap().values(), vec![1.5]);
        assert!("3:0:1".parse::<Range>().is_err());
        assert!("0:1".parse::<Range>().is_err());
        assert!("0:1:0".parse::<Range>().is_err());
        assert_eq!(r.to_string().parse::<Range>().unwrap(), r);
    }

    #[test]
    fn config_lines() {
        let c = parse_config("# note\n\nbeta = 3\n--p=0.2\nfirst-order = true\n").unwrap();
        assert_eq!(
            c,
            vec![
                ("beta".into(), "3".into()),
                ("p".into(), "0.2".into()),
                ("first-order".into(), "true".into())
            ]
        );
        assert!(parse_config("beta 3").is_err());
    }

    #[test]
    fn directional_terms() {
        let b = approx::rct_fixed(2.0, 0.5, 0.9, 1.0, 0.5).unwrap();
        assert!((directional(&b, Direction::Full) - b.rct).abs() < 1e-15);
        let back = directional(&b, Direction::Backward);
        let fwd = directional(&b, Direction::Forward);
        assert!((back + fwd - b.r0 - b.rct).abs() < 1e-12);
    }

    #[test]
    fn latency_effect_matches_bracket() {
        let khat = |x: f64| (-x).exp();
        for (t, ti) in [(0.5, 1.0), (1.5, 0.2), (0.0, 0.0), (2.0, 2.0)] {
            let b = latency_effect(2.0, t, ti).unwrap();
            let m = f64::max(t, ti);
            let bracket = 2.0 * khat(t + ti) + khat(m) / khat(ti) * (2.0 - khat(m) / khat(t));
            assert!(((b.backward_term + b.forward_term) / 1.0 - bracket).abs() < 1e-12);
        }
    }
}
