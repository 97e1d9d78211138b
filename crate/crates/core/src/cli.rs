//! Command-line front end: one subcommand per experiment.
//!
//! Every run reads a JSON [`RunConfig`], writes `results.csv`, `verdict.json`
//! and `config-echo.json` into the output directory, and exits 0 when every
//! asserted check passed, 1 on a failed check and 2 on a malformed request.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::domains::{Bc, Domain, Field, Grid};
use crate::error::HeatlabError;
use crate::kernels::{offdiag_decay_probe, ClosedFormKernel};
use crate::lp_analysis::{
    besov_heat_norm, boundary_bump, dyadic_range, global_bernstein_check, local_bernstein_check,
    standard_battery, tail_slope, vanishing_diagnostic, vmo_vs_heat_compare, BatteryField, BesovQ,
    Classification,
};
use crate::onsager_lab::{flux_experiment, make_field, strip_decay, FieldSpec, Mollifier};
use crate::parametrix::{build_parametrix, ModelOperator, ParametrixConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONTRACT: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "heatlab",
    version,
    about = "Heat-semigroup experiments on flat model domains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "heatlab-out")]
    pub out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the closed-form kernel at point pairs.
    KernelEval(RunArgs),
    /// Fit the off-diagonal Gaussian rate between two points.
    KernelProbe(RunArgs),
    /// Global and localized Bernstein ratios on the standard battery.
    BernsteinVerify(RunArgs),
    /// Heat Besov norm of one battery field in integral and dyadic form.
    BesovNorm(RunArgs),
    /// Three-tail vanishing diagnostic of one battery field.
    Vanishing(RunArgs),
    /// VMO modulus against the heat tail on the channel battery.
    VmoCompare(RunArgs),
    /// Build the small-time parametrix and compare it with a reference kernel.
    ParametrixBuild(RunArgs),
    /// Flux scaling of synthetic fields under heat or convolution mollification.
    OnsagerFlux(RunArgs),
    /// Boundary-band flux averages of a steady field.
    StripDecay(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::KernelEval(_) => "kernel-eval",
            Command::KernelProbe(_) => "kernel-probe",
            Command::BernsteinVerify(_) => "bernstein-verify",
            Command::BesovNorm(_) => "besov-norm",
            Command::Vanishing(_) => "vanishing",
            Command::VmoCompare(_) => "vmo-compare",
            Command::ParametrixBuild(_) => "parametrix-build",
            Command::OnsagerFlux(_) => "onsager-flux",
            Command::StripDecay(_) => "strip-decay",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::KernelEval(a)
            | Command::KernelProbe(a)
            | Command::BernsteinVerify(a)
            | Command::BesovNorm(a)
            | Command::Vanishing(a)
            | Command::VmoCompare(a)
            | Command::ParametrixBuild(a)
            | Command::OnsagerFlux(a)
            | Command::StripDecay(a) => a,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Heatlab(#[from] HeatlabError),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Heatlab(e) => match e {
                HeatlabError::Parameter(_)
                | HeatlabError::Config(_)
                | HeatlabError::Unsupported(_)
                | HeatlabError::Resolution(_)
                | HeatlabError::Aliasing(_)
                | HeatlabError::Chart(_)
                | HeatlabError::Json(_) => EXIT_SCHEMA,
                _ => EXIT_CONTRACT,
            },
            CliError::Output(_) => EXIT_CONTRACT,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// circle, interval, half_line, channel, rectangle or free.
    pub kind: String,
    #[serde(default)]
    pub lengths: Vec<f64>,
    /// Dimension of free space; ignored for bounded domains.
    #[serde(default)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Battery depth for lacunary fields.
    pub depth: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { depth: 7 }
    }
}

/// Bounds used by the asserted checks. Unset entries take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub symmetry: f64,
    pub probe_gap: f64,
    pub bernstein: f64,
    pub decay_order: f64,
    pub besov_equivalence: f64,
    pub parametrix: f64,
    pub slope: f64,
    pub strip_slope: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            symmetry: 1e-14,
            probe_gap: 0.05,
            bernstein: 10.0,
            decay_order: 6.0,
            besov_equivalence: 10.0,
            parametrix: 0.05,
            slope: crate::onsager_lab::SLOPE_TOLERANCE,
            strip_slope: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    /// Nodes per axis.
    #[serde(default)]
    pub grid: Vec<usize>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    /// Subcommand-specific parameters.
    #[serde(default)]
    pub experiment: Value,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| schema(format!("config: {e}")))
    }

    fn experiment<T: DeserializeOwned>(&self) -> CliResult<T> {
        let v = if self.experiment.is_null() {
            json!({})
        } else {
            self.experiment.clone()
        };
        serde_json::from_value(v).map_err(|e| schema(format!("experiment block: {e}")))
    }

    fn domain(&self) -> CliResult<Domain> {
        let spec = self
            .domain
            .as_ref()
            .ok_or_else(|| schema("missing domain"))?;
        Ok(Domain::from_spec(&spec.kind, &spec.lengths)?)
    }

    fn grid(&self) -> CliResult<Grid> {
        Ok(Grid::new(self.domain()?, &self.grid)?)
    }
}

// ---------------------------------------------------------------------------
// Output

/// One asserted inequality in a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `<=` or `>=`, read as `value relation bound`.
    pub relation: String,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            relation: "<=".into(),
            pass: value <= bound,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            relation: ">=".into(),
            pass: value >= bound,
        }
    }

    fn holds(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Check {
            name: name.into(),
            value: v,
            bound: 1.0,
            relation: ">=".into(),
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub subcommand: String,
    /// Result the run exercises.
    pub anchor: String,
    pub pass: bool,
    pub failures: Vec<String>,
    pub checks: Vec<Check>,
    pub details: Value,
}

/// Rows of `results.csv` with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn class_name(c: Classification) -> String {
    match c {
        Classification::Vanishing => "vanishing",
        Classification::Plateau => "plateau",
        Classification::Inconclusive => "inconclusive",
    }
    .to_string()
}

struct Outcome {
    anchor: &'static str,
    table: Table,
    checks: Vec<Check>,
    details: Value,
}

fn write_outputs(dir: &Path, table: &Table, verdict: &Verdict, echo: &RunConfig) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let mut w = csv::Writer::from_path(dir.join("results.csv"))
        .map_err(|e| CliError::Output(e.to_string()))?;
    w.write_record(&table.header)
        .map_err(|e| CliError::Output(e.to_string()))?;
    for row in &table.rows {
        w.write_record(row)
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    w.flush().map_err(io)?;
    fs::write(dir.join("verdict.json"), pretty(verdict)?).map_err(io)?;
    fs::write(dir.join("config-echo.json"), pretty(echo)?).map_err(io)?;
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(HeatlabError::from)?;
    s.push('\n');
    Ok(s)
}

// ---------------------------------------------------------------------------
// Entry points

/// Cap the rayon pool from `HEATLAB_THREADS`.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("HEATLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| schema(format!("HEATLAB_THREADS={raw:?} is not a count")))?;
    if n == 0 {
        return Err(schema("HEATLAB_THREADS must be at least 1"));
    }
    // A pool built earlier in the process (tests) is kept.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Run one subcommand and write its artifacts. Returns the verdict.
pub fn run(command: &Command) -> CliResult<Verdict> {
    let args = command.args();
    let text = fs::read_to_string(&args.config)
        .map_err(|e| schema(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let outcome = match command {
        Command::KernelEval(_) => kernel_eval(&cfg)?,
        Command::KernelProbe(_) => kernel_probe(&cfg)?,
        Command::BernsteinVerify(_) => bernstein_verify(&cfg)?,
        Command::BesovNorm(_) => besov_norm(&cfg)?,
        Command::Vanishing(_) => vanishing(&cfg)?,
        Command::VmoCompare(_) => vmo_compare(&cfg)?,
        Command::ParametrixBuild(_) => parametrix_build(&cfg)?,
        Command::OnsagerFlux(_) => onsager_flux(&cfg)?,
        Command::StripDecay(_) => strip(&cfg)?,
    };
    let failures: Vec<String> = outcome
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.clone())
        .collect();
    let verdict = Verdict {
        subcommand: command.name().to_string(),
        anchor: outcome.anchor.to_string(),
        pass: failures.is_empty(),
        failures,
        checks: outcome.checks,
        details: outcome.details,
    };
    write_outputs(&args.out, &outcome.table, &verdict, &cfg)?;
    Ok(verdict)
}

/// Parse `argv`, run, report on stderr and return the exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_SCHEMA
            } else {
                EXIT_PASS
            };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("heatlab: {e}");
        return e.exit_code();
    }
    match run(&cli.command) {
        Ok(v) if v.pass => EXIT_PASS,
        Ok(v) => {
            for c in v.checks.iter().filter(|c| !c.pass) {
                eprintln!(
                    "heatlab: contract failed: {} ({} {} {})",
                    c.name, c.value, c.relation, c.bound
                );
            }
            EXIT_CONTRACT
        }
        Err(e) => {
            eprintln!("heatlab: {e}");
            e.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommands

fn kernel_for(cfg: &RunConfig, form: bool, bc: Bc) -> CliResult<ClosedFormKernel> {
    let spec = cfg
        .domain
        .as_ref()
        .ok_or_else(|| schema("missing domain"))?;
    if spec.kind == "free" {
        let n = spec.dim.ok_or_else(|| schema("free space needs `dim`"))?;
        if !(1..=2).contains(&n) {
            return Err(schema("free space dimension must be 1 or 2"));
        }
        return Ok(ClosedFormKernel::free(n));
    }
    let domain = cfg.domain()?;
    Ok(if form {
        ClosedFormKernel::form(domain)?
    } else {
        ClosedFormKernel::scalar(domain, bc)?
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelEvalParams {
    t: Vec<f64>,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    #[serde(default = "neumann")]
    bc: Bc,
}

fn neumann() -> Bc {
    Bc::Neumann
}

fn kernel_eval(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: KernelEvalParams = cfg.experiment()?;
    let k = kernel_for(cfg, false, p.bc)?;
    let mut table = Table::new(&["t", "pair", "value", "swapped"]);
    let mut worst_sym = 0.0f64;
    let mut finite = true;
    for &t in &p.t {
        for (i, (x, y)) in p.pairs.iter().enumerate() {
            let a = k.eval_scalar(t, x, y)?;
            let b = k.eval_scalar(t, y, x)?;
            finite &= a.is_finite() && b.is_finite();
            worst_sym = worst_sym.max((a - b).abs() / a.abs().max(1.0));
            table.push(vec![num(t), i.to_string(), num(a), num(b)]);
        }
    }
    Ok(Outcome {
        anchor: "heat_kernel_images",
        table,
        checks: vec![
            Check::holds("finite", finite),
            Check::at_most("symmetry", worst_sym, cfg.tolerances.symmetry),
        ],
        details: json!({ "max_symmetry_gap": worst_sym }),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelProbeParams {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Strictly decreasing probe times; defaults to `d^2 4^{-1 - i/2}`, i < 10.
    #[serde(default)]
    t_list: Option<Vec<f64>>,
    #[serde(default)]
    comp: usize,
    #[serde(default)]
    form: bool,
}

fn kernel_probe(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: KernelProbeParams = cfg.experiment()?;
    let k = kernel_for(cfg, p.form, Bc::Neumann)?;
    let d2: f64 = p.x.iter().zip(&p.y).map(|(a, b)| (a - b) * (a - b)).sum();
    let t_list = p.t_list.unwrap_or_else(|| {
        (0..10)
            .map(|i| d2 * 4f64.powf(-1.0 - i as f64 / 2.0))
            .collect()
    });
    let r = offdiag_decay_probe(&k, p.comp, &p.x, &p.y, &t_list)?;
    let mut table = Table::new(&["t", "kernel"]);
    for (t, v) in r.t.iter().zip(&r.values) {
        table.push(vec![num(*t), num(*v)]);
    }
    let gap = r.rel_gap.unwrap_or(f64::INFINITY);
    Ok(Outcome {
        anchor: "off_diagonal_decay",
        table,
        checks: vec![
            Check::holds("no_underflow", !r.underflow),
            Check::at_most("gap", gap, cfg.tolerances.probe_gap),
        ],
        details: json!({ "d": r.d, "c": r.c, "target": r.target, "gap": r.rel_gap }),
    })
}

fn battery(cfg: &RunConfig) -> CliResult<(ClosedFormKernel, Vec<BatteryField>)> {
    let grid = cfg.grid()?;
    let bat = standard_battery(&grid, cfg.budgets.depth);
    let k = ClosedFormKernel::for_field(&bat[0].field)?;
    Ok((k, bat))
}

fn pick(bat: Vec<BatteryField>, name: &str) -> CliResult<BatteryField> {
    let names: Vec<String> = bat.iter().map(|b| b.name.clone()).collect();
    bat.into_iter().find(|b| b.name == name).ok_or_else(|| {
        schema(format!(
            "unknown battery field '{name}', expected one of {names:?}"
        ))
    })
}

fn ladder(lo: i32, hi: i32) -> Vec<f64> {
    dyadic_range(lo, hi)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalParams {
    r: f64,
    /// Bump half-width, a multiple of the boundary distance.
    width: f64,
    n_list: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BernsteinParams {
    #[serde(default = "three")]
    p: f64,
    #[serde(default = "bernstein_ns")]
    n_list: Vec<f64>,
    #[serde(default)]
    local: Option<LocalParams>,
}

fn three() -> f64 {
    3.0
}

fn bernstein_ns() -> Vec<f64> {
    ladder(1, 7)
}

fn bernstein_verify(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: BernsteinParams = cfg.experiment()?;
    let (k, bat) = battery(cfg)?;
    let mut table = Table::new(&["field", "n", "r1", "r2"]);
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    for b in &bat {
        let t = global_bernstein_check(&k, &b.field, &p.n_list, p.p)?;
        for row in &t.rows {
            table.push(vec![b.name.clone(), num(row.n), opt(row.r1), opt(row.r2)]);
        }
        checks.push(Check::at_most(
            format!("{}: max ratio", b.name),
            t.max_ratio,
            cfg.tolerances.bernstein,
        ));
        details.insert(
            b.name.clone(),
            json!({ "max_ratio": t.max_ratio, "skipped": t.skipped }),
        );
    }
    if let Some(lp) = &p.local {
        let grid = &bat[0].field.grid;
        let bump = Field::scalar_fn(grid, |x| boundary_bump(x[grid.dim() - 1], lp.width));
        let rep = local_bernstein_check(&k, &bump, lp.r, 0, 1, p.p, &lp.n_list)?;
        for (n, v) in rep.n.iter().zip(&rep.lhs) {
            table.push(vec!["local_bump".into(), num(*n), num(*v), String::new()]);
        }
        let order = rep.decay_order.unwrap_or(f64::INFINITY);
        checks.push(Check::at_least(
            "local_bump: decay order",
            order,
            cfg.tolerances.decay_order,
        ));
        details.insert(
            "local_bump".into(),
            serde_json::to_value(&rep).map_err(HeatlabError::from)?,
        );
    }
    Ok(Outcome {
        anchor: "global_bernstein",
        table,
        checks,
        details: Value::Object(details),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BesovParams {
    field: String,
    alpha: f64,
    #[serde(default = "three")]
    p: f64,
    #[serde(default = "one")]
    q: f64,
    #[serde(default = "n_max")]
    n_max: f64,
}

fn one() -> f64 {
    1.0
}

fn n_max() -> f64 {
    64.0
}

fn besov_norm(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: BesovParams = cfg.experiment()?;
    let (k, bat) = battery(cfg)?;
    let b = pick(bat, &p.field)?;
    let rep = besov_heat_norm(&k, &b.field, p.alpha, p.p, BesovQ::from_f64(p.q)?, p.n_max)?;
    let mut table = Table::new(&["series", "x", "value"]);
    for (s, v) in rep.profile.s.iter().zip(&rep.profile.values) {
        table.push(vec!["profile".into(), num(*s), num(*v)]);
    }
    for (n, v) in rep.ladder.n.iter().zip(&rep.ladder.values) {
        table.push(vec!["ladder".into(), num(*n), num(*v)]);
    }
    let c = cfg.tolerances.besov_equivalence;
    let finite = rep.integral.is_finite() && rep.dyadic.is_finite();
    Ok(Outcome {
        anchor: "besov_heat_norm",
        table,
        checks: vec![
            Check::holds("finite", finite),
            Check::at_most("integral/dyadic upper", rep.ratio, c),
            Check::at_least("integral/dyadic lower", rep.ratio, 1.0 / c),
        ],
        details: json!({ "field": b.name, "lp": rep.lp, "integral": rep.integral, "dyadic": rep.dyadic, "ratio": rep.ratio }),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VanishingParams {
    field: String,
    #[serde(default = "three")]
    p: f64,
    r: f64,
    n_list: Vec<f64>,
    /// Asserted classification, when given.
    #[serde(default)]
    expect: Option<Classification>,
}

fn vanishing(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: VanishingParams = cfg.experiment()?;
    let (k, bat) = battery(cfg)?;
    let b = pick(bat, &p.field)?;
    let rep = vanishing_diagnostic(&k, &b.field, p.p, p.r, &p.n_list)?;
    let mut table = Table::new(&["tail", "n", "value"]);
    for tail in &rep.tails {
        for (n, v) in tail.n.iter().zip(&tail.values) {
            table.push(vec![tail.quantity.clone(), num(*n), num(*v)]);
        }
    }
    let mut checks = vec![Check::holds("tails agree", rep.agree)];
    if let Some(e) = p.expect {
        checks.push(Check::holds(
            format!("classification is {}", class_name(e)),
            rep.classification == e,
        ));
    }
    Ok(Outcome {
        anchor: "equiv_tail_conditions",
        table,
        checks,
        details: json!({
            "field": b.name,
            "classification": class_name(rep.classification),
            "classes": rep.classes.iter().map(|c| class_name(*c)).collect::<Vec<_>>(),
            "slopes": rep.tails.iter().map(|t| tail_slope(&t.values)).collect::<Vec<_>>(),
            "plateau_level": rep.plateau_level,
            "rule": rep.rule,
        }),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VmoParams {
    #[serde(default = "three")]
    p: f64,
    r: f64,
    n_list: Vec<f64>,
}

fn vmo_compare(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: VmoParams = cfg.experiment()?;
    let (k, bat) = battery(cfg)?;
    let rows = vmo_vs_heat_compare(&k, &bat, p.p, p.r, &p.n_list)?;
    let mut table = Table::new(&["field", "n", "vmo", "heat"]);
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    for row in &rows {
        for i in 0..row.vmo.n.len() {
            table.push(vec![
                row.name.clone(),
                num(row.vmo.n[i]),
                num(row.vmo.values[i]),
                num(row.heat.values[i]),
            ]);
        }
        checks.push(Check::holds(
            format!("{}: classes agree", row.name),
            row.agree,
        ));
        details.insert(
            row.name.clone(),
            json!({ "vmo": class_name(row.vmo_class), "heat": class_name(row.heat_class) }),
        );
    }
    Ok(Outcome {
        anchor: "contain_vmo",
        table,
        checks,
        details: Value::Object(details),
    })
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum OperatorSpec {
    Flat,
    Constant { c: f64 },
    Bump { amp: f64, center: f64, width: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParametrixParams {
    operator: OperatorSpec,
    j_td: usize,
    #[serde(default)]
    j_rf: usize,
    #[serde(default)]
    n_volterra: usize,
    #[serde(default)]
    t_list: Option<Vec<f64>>,
    #[serde(default)]
    n_ref: Option<usize>,
    #[serde(default)]
    eval_max: Option<f64>,
    #[serde(default)]
    eval_points: Option<usize>,
}

fn parametrix_build(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: ParametrixParams = cfg.experiment()?;
    let op = match p.operator {
        OperatorSpec::Flat => ModelOperator::flat(),
        OperatorSpec::Constant { c } => ModelOperator::constant(c),
        OperatorSpec::Bump { amp, center, width } => ModelOperator::bump(amp, center, width)?,
    };
    let mut pc = ParametrixConfig::default();
    if let Some(v) = p.t_list {
        pc.t_list = v;
    }
    if let Some(v) = p.n_ref {
        pc.n_ref = v;
    }
    if let Some(v) = p.eval_max {
        pc.eval_max = v;
    }
    if let Some(v) = p.eval_points {
        pc.eval_points = v;
    }
    let (_, rep) = build_parametrix(&op, p.j_td, p.j_rf, p.n_volterra, &pc)?;
    let mut table = Table::new(&["t", "sup_error", "sup_reference"]);
    let mut checks = Vec::new();
    for row in &rep.rows {
        table.push(vec![num(row.t), num(row.sup_error), num(row.sup_reference)]);
        checks.push(Check::at_most(
            format!("relative error at t={}", row.t),
            row.sup_error / row.sup_reference,
            cfg.tolerances.parametrix,
        ));
    }
    Ok(Outcome {
        anchor: "parametrix",
        table,
        checks,
        details: serde_json::to_value(&rep).map_err(HeatlabError::from)?,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FluxParams {
    /// Regularity exponents of the seeded lacunary fields.
    #[serde(default)]
    alphas: Vec<f64>,
    /// Further fields, run as given.
    #[serde(default)]
    fields: Vec<FieldSpec>,
    #[serde(default)]
    r: Option<f64>,
    #[serde(default)]
    s_list: Option<Vec<f64>>,
    #[serde(default = "heat")]
    mollifier: Mollifier,
}

fn heat() -> Mollifier {
    Mollifier::Heat
}

fn onsager_flux(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: FluxParams = cfg.experiment()?;
    let grid = cfg.grid()?;
    let kernel = ClosedFormKernel::form(grid.domain)?;
    let depth = cfg.budgets.depth as u32;
    let mut specs: Vec<FieldSpec> = p
        .alphas
        .iter()
        .map(|&alpha| FieldSpec::Lacunary {
            alpha,
            depth,
            seed: cfg.seed,
            damped: false,
        })
        .collect();
    specs.extend(p.fields.iter().cloned());
    if specs.is_empty() {
        return Err(schema("onsager-flux needs at least one field"));
    }
    let fields = specs
        .iter()
        .map(|s| make_field(&grid, s))
        .collect::<crate::Result<Vec<_>>>()?;
    let s_list = p
        .s_list
        .unwrap_or_else(|| (2..=7).map(|i| 4f64.powi(-i)).collect());
    let reports = flux_experiment(&kernel, &fields, p.r, &s_list, p.mollifier)?;
    let mut table = Table::new(&["field", "s", "flux"]);
    let mut checks = Vec::new();
    for rep in &reports {
        for (s, f) in rep.s.iter().zip(&rep.flux) {
            table.push(vec![rep.field.clone(), num(*s), num(*f)]);
        }
        match rep.target {
            Some(target) if target > 0.0 => {
                checks.push(Check::at_most(
                    format!("{}: |slope - target|", rep.field),
                    (rep.slope - target).abs(),
                    cfg.tolerances.slope,
                ));
            }
            Some(_) => {}
            None => checks.push(Check::holds(
                format!("{}: vanishing", rep.field),
                rep.classification == Classification::Vanishing,
            )),
        }
    }
    let lac: Vec<_> = reports.iter().filter(|r| r.target.is_some()).collect();
    if lac.len() >= 2 {
        let mut by_alpha: Vec<_> = lac.iter().map(|r| (r.target.unwrap(), r.slope)).collect();
        by_alpha.sort_by(|a, b| a.0.total_cmp(&b.0));
        let monotone = by_alpha.windows(2).all(|w| w[1].1 > w[0].1);
        checks.push(Check::holds("slope increases with alpha", monotone));
    }
    let details: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "field": r.field,
                "mollifier": r.mollifier,
                "r": r.r,
                "slope": r.slope,
                "target": r.target,
                "tolerance": r.tolerance,
                "classification": class_name(r.classification),
            })
        })
        .collect();
    Ok(Outcome {
        anchor: "onsager_energy_conservation",
        table,
        checks,
        details: json!({ "fields": details }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StripExpect {
    Zero,
    Linear,
    Plateau,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StripParams {
    field: FieldSpec,
    /// Constant added to the normal component (a non-physical control).
    #[serde(default)]
    normal_offset: f64,
    /// Constant pressure.
    #[serde(default)]
    pressure: f64,
    r_list: Vec<f64>,
    expect: StripExpect,
}

fn strip(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: StripParams = cfg.experiment()?;
    let grid = cfg.grid()?;
    let mut v = make_field(&grid, &p.field)?.field;
    if p.normal_offset != 0.0 {
        v.comps[1].iter_mut().for_each(|x| *x += p.normal_offset);
    }
    let rep = strip_decay(&v, &vec![p.pressure; grid.len()], &p.r_list)?;
    let mut table = Table::new(&["r", "band_average"]);
    for (r, x) in rep.r.iter().zip(&rep.values) {
        table.push(vec![num(*r), num(*x)]);
    }
    let slope = rep.slope.unwrap_or(f64::NAN);
    let checks = match p.expect {
        StripExpect::Zero => {
            vec![Check::at_most(
                "max band average",
                rep.values.iter().fold(0.0, |m, x| m.max(*x)),
                0.0,
            )]
        }
        StripExpect::Linear => vec![Check::at_least(
            "slope in r",
            slope,
            cfg.tolerances.strip_slope,
        )],
        StripExpect::Plateau => vec![Check::at_most(
            "slope in r",
            slope.abs(),
            1.0 - cfg.tolerances.strip_slope,
        )],
    };
    Ok(Outcome {
        anchor: "strip_decay",
        table,
        checks,
        details: json!({ "slope": rep.slope }),
    })
}
