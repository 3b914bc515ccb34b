//! Command-line driver. Each command reads a JSON config, runs one
//! experiment and writes CSV and JSON artifacts into the output directory.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad config or arguments,
//! 3 capacity exceeded, 4 search budget exceeded (partial results and the
//! best bound so far are still written).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::json;

use crate::addcomb::{additive_energy, doubling, inverse_witness, sumset, DyadicSet};
use crate::dyadic_measure::{DyadicMeasure, Geometry};
use crate::error::Error;
use crate::exact::Scalar;
use crate::geometry::{
    cantor_cells, cantor_intersection_profile, exponent_fit, planar_attractor, planar_attractor_atoms, project_measure,
    slice_count, sumset_dimension, CellSet1D,
};
use crate::models::{ModelSpec, PlanarAtom, State, StateSpace};
use crate::separation::{difference_set, min_poly_value_with, separation_profile, Mode, SearchOptions, DEFAULT_BUDGET};
use crate::spectra::{empirical_spectrum, spectrum_csv, tau_tilde, Source, DEFAULT_Q_GRID};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "fractal-lq", version, about = "L^q spectra, separation and box-counting experiments")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for sampled states.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Empirical and theoretical L^q spectra of a model or grid measure.
    Spectrum,
    /// Minimum polynomial values or atom-gap profiles.
    Separation(SeparationArgs),
    /// Cantor set against an affine copy of itself.
    Intersect,
    /// Line slices of a planar self-similar set.
    Slice,
    /// Sumset box counts and additive statistics.
    Sumset,
    /// Structure report for a pair of grid measures.
    Witness,
    /// Projection of a planar measure.
    Project,
}

#[derive(Args, Debug)]
struct SeparationArgs {
    /// Coefficient set, e.g. `-1,0,1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    coeffs: Option<Vec<String>>,
    #[arg(long)]
    lambda: Option<String>,
    /// Largest degree.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    mode: Option<Mode>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(Error),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Lib(Error::Capacity { .. }) => 3,
            CliError::Lib(Error::Budget { .. }) => 4,
            CliError::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(s) => write!(f, "config error: {s}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Files produced by a command, written together at the end.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    summary: String,
}

impl Artifacts {
    fn csv(&mut self, name: &str, body: &str) {
        self.files.push((name.into(), format!("# version={FORMAT_VERSION}\n{body}").into_bytes()));
    }

    fn json(&mut self, name: &str, command: &str, body: serde_json::Value) {
        let mut v = json!({ "version": FORMAT_VERSION, "command": command });
        if let (Some(o), serde_json::Value::Object(b)) = (v.as_object_mut(), body) {
            o.extend(b);
        }
        let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
        s.push('\n');
        self.files.push((name.into(), s.into_bytes()));
    }

    fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(dir.join(name)).map_err(|e| e.error)?;
        }
        Ok(())
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I: IntoIterator<Item = T>, T: Into<OsString> + Clone>(args: I) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let mut art = Artifacts::default();
    let outcome = dispatch(&cli, &mut art);
    let budget_hit = matches!(outcome, Err(CliError::Lib(Error::Budget { .. })));
    if outcome.is_ok() || budget_hit {
        if let Err(e) = art.write(&cli.out) {
            eprintln!("i/o error: {e}");
            return 1;
        }
        print!("{}", art.summary);
    }
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, art: &mut Artifacts) -> CliResult<()> {
    match &cli.command {
        Command::Spectrum => cmd_spectrum(load(cli)?, cli.seed, art),
        Command::Separation(a) => {
            let cfg = match (&cli.config, &a.coeffs) {
                (None, Some(_)) => SeparationConfig::default(),
                _ => load(cli)?,
            };
            cmd_separation(cfg.with_flags(a)?, art)
        }
        Command::Intersect => cmd_intersect(load(cli)?, art),
        Command::Slice => cmd_slice(load(cli)?, art),
        Command::Sumset => cmd_sumset(load(cli)?, art),
        Command::Witness => cmd_witness(load(cli)?, art),
        Command::Project => cmd_project(load(cli)?, art),
    }
}

/// Reads and validates a config; errors name the offending field.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let v = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            CliError::Config(e.into_inner().to_string())
        } else {
            CliError::Config(format!("field `{path}`: {}", e.into_inner()))
        }
    })?;
    Ok(v)
}

fn load<T: DeserializeOwned>(cli: &Cli) -> CliResult<T> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

// ---------------------------------------------------------------- spectrum

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub state: Option<State>,
    #[serde(default)]
    pub measure: Option<DyadicMeasure>,
    #[serde(default = "default_q")]
    pub q: Vec<f64>,
    #[serde(default = "default_m_min")]
    pub m_min: u32,
    #[serde(default = "default_m_max")]
    pub m_max: u32,
    /// Extra states drawn with `--seed`; their median dimension is reported.
    #[serde(default)]
    pub states: usize,
}

fn default_q() -> Vec<f64> {
    DEFAULT_Q_GRID.to_vec()
}
fn default_m_min() -> u32 {
    8
}
fn default_m_max() -> u32 {
    16
}

fn random_state(space: &StateSpace, rng: &mut ChaCha8Rng) -> State {
    match space {
        StateSpace::Trivial => State::Trivial,
        StateSpace::Circle { period } => State::Circle(rng.gen::<f64>() * period),
        StateSpace::Torus { periods } => State::Torus(periods.iter().map(|p| rng.gen::<f64>() * p).collect()),
        StateSpace::Product { base, k } => State::Product(Box::new(random_state(base, rng)), rng.gen_range(0..*k)),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn cmd_spectrum(cfg: SpectrumConfig, seed: u64, art: &mut Artifacts) -> CliResult<()> {
    match (&cfg.model, &cfg.measure) {
        (Some(spec), None) if spec.is_nonhom() => {
            let ifs = spec.to_nonhom()?;
            let mut csv = String::from("q,tau,dimension,residual\n");
            let mut rows = vec![];
            let _ = writeln!(art.summary, "{:>8} {:>12} {:>12}", "q", "tau", "dimension");
            for &q in &cfg.q {
                let t = tau_tilde(&ifs, q)?;
                let _ = writeln!(csv, "{},{},{},{}", q, f(t.tau), f(t.dimension), f(t.residual));
                let _ = writeln!(art.summary, "{:>8} {:>12.6} {:>12.6}", q, t.tau, t.dimension);
                rows.push(json!({ "q": q, "tau": t.tau, "dimension": t.dimension, "residual": t.residual }));
            }
            art.csv("spectrum.csv", &csv);
            art.json("spectrum.json", "spectrum", json!({ "kind": "nonhom", "rows": rows }));
        }
        (Some(spec), None) => {
            let model = spec.to_model()?;
            let state = cfg.state.clone().unwrap_or_else(|| model.default_state());
            model.validate_state(&state)?;
            let reports = empirical_spectrum(Source::Model { model: &model, state: &state }, &cfg.q, cfg.m_min, cfg.m_max)?;
            art.csv("spectrum.csv", &spectrum_csv(&reports));
            let mut extra = vec![];
            if cfg.states > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let space = model.state_space();
                let mut csv = String::from("state,q,dimension\n");
                let mut dims = vec![vec![]; cfg.q.len()];
                for _ in 0..cfg.states {
                    let x = random_state(&space, &mut rng);
                    let rs = empirical_spectrum(Source::Model { model: &model, state: &x }, &cfg.q, cfg.m_min, cfg.m_max)?;
                    for (i, r) in rs.iter().enumerate() {
                        let _ = writeln!(csv, "\"{x}\",{},{}", r.q, f(r.lq_dimension));
                        dims[i].push(r.lq_dimension);
                    }
                }
                art.csv("states.csv", &csv);
                extra = cfg.q.iter().zip(dims).map(|(q, d)| json!({ "q": q, "median_dimension": median(d) })).collect();
            }
            spectrum_summary(art, &reports);
            art.json(
                "spectrum.json",
                "spectrum",
                json!({ "kind": "model", "state": state, "reports": reports, "sampled_states": extra }),
            );
        }
        (None, Some(mu)) => {
            let reports = empirical_spectrum(Source::Measure(mu), &cfg.q, cfg.m_min, cfg.m_max)?;
            art.csv("spectrum.csv", &spectrum_csv(&reports));
            spectrum_summary(art, &reports);
            art.json("spectrum.json", "spectrum", json!({ "kind": "measure", "reports": reports }));
        }
        _ => return Err(CliError::Config("give exactly one of `model` and `measure`".into())),
    }
    Ok(())
}

fn spectrum_summary(art: &mut Artifacts, reports: &[crate::spectra::SpectrumReport]) {
    let _ = writeln!(art.summary, "{:>8} {:>12} {:>12} {:>12}", "q", "tau", "dimension", "theory");
    for r in reports {
        let th = r.theoretical_dimension().map(|d| format!("{d:.6}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(art.summary, "{:>8} {:>12.6} {:>12.6} {:>12}", r.q, r.regression_tau, r.lq_dimension, th);
    }
}

// -------------------------------------------------------------- separation

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationConfig {
    #[serde(default)]
    pub coeffs: Option<Vec<Scalar>>,
    /// Digit set; the coefficients become its difference set.
    #[serde(default)]
    pub digits: Option<Vec<Scalar>>,
    #[serde(default)]
    pub lambda: Option<Scalar>,
    /// Largest degree; every degree `1..=n` is reported.
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub state: Option<State>,
    #[serde(default)]
    pub n_max: Option<u64>,
    #[serde(default)]
    pub r: Option<f64>,
}

impl SeparationConfig {
    fn with_flags(mut self, a: &SeparationArgs) -> CliResult<Self> {
        let bad = |what: &str, e: Error| CliError::Config(format!("--{what}: {e}"));
        if let Some(cs) = &a.coeffs {
            self.coeffs = Some(cs.iter().map(|c| Scalar::parse(c).map_err(|e| bad("coeffs", e))).collect::<CliResult<_>>()?);
        }
        if let Some(l) = &a.lambda {
            self.lambda = Some(Scalar::parse(l).map_err(|e| bad("lambda", e))?);
        }
        if a.n.is_some() {
            self.n = a.n;
        }
        if a.mode.is_some() {
            self.mode = a.mode;
        }
        Ok(self)
    }
}

fn cmd_separation(cfg: SeparationConfig, art: &mut Artifacts) -> CliResult<()> {
    let mode = cfg.mode.unwrap_or(Mode::Exact);
    if let Some(spec) = &cfg.model {
        let n_max = cfg.n_max.ok_or_else(|| CliError::Config("field `n_max` is required with `model`".into()))?;
        let model = spec.to_model()?;
        let state = cfg.state.clone().unwrap_or_else(|| model.default_state());
        model.validate_state(&state)?;
        let p = separation_profile(&model, &state, n_max, cfg.r.unwrap_or(1.0), mode)?;
        art.csv("separation.csv", &p.to_csv());
        let _ = writeln!(art.summary, "verdict: {:?}", p.verdict);
        art.json("separation.json", "separation", json!({ "kind": "profile", "profile": p }));
        return Ok(());
    }
    let coeffs = match (&cfg.coeffs, &cfg.digits) {
        (Some(c), None) => c.clone(),
        (None, Some(d)) => difference_set(d),
        _ => return Err(CliError::Config("give exactly one of `coeffs`, `digits` or `model`".into())),
    };
    let lambda = cfg.lambda.clone().ok_or_else(|| CliError::Config("field `lambda` is required".into()))?;
    let n = cfg.n.ok_or_else(|| CliError::Config("field `n` is required".into()))?;
    let opts = SearchOptions { budget: cfg.budget.unwrap_or(DEFAULT_BUDGET), ..SearchOptions::default() };
    let mut csv = String::from("n,value,exact,lo,hi,zero\n");
    let mut rows = vec![];
    let _ = writeln!(art.summary, "{:>4} {:>14} {:>6}", "n", "min value", "zero");
    let mut failure = None;
    for k in 1..=n {
        match min_poly_value_with(&coeffs, &lambda, k, mode, opts) {
            Ok(p) => {
                let ex = p.exact.as_ref().map(|e| e.to_string()).unwrap_or_default();
                let (lo, hi) = p.enclosure.unwrap_or((p.value, p.value));
                let _ = writeln!(csv, "{k},{},{ex},{},{},{}", f(p.value), f(lo), f(hi), p.is_zero());
                let _ = writeln!(art.summary, "{:>4} {:>14.6e} {:>6}", k, p.value, p.is_zero());
                rows.push(json!({ "n": k, "value": p.value, "exact": p.exact, "enclosure": p.enclosure, "zero": p.is_zero() }));
            }
            Err(Error::Budget { budget, best_so_far }) => {
                failure = Some((k, budget, best_so_far));
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    art.csv("separation.csv", &csv);
    let status = match failure {
        None => json!({ "status": "complete" }),
        Some((k, budget, best)) => {
            let _ = writeln!(art.summary, "budget of {budget} nodes exceeded at n = {k}; best value found {best:e}");
            json!({ "status": "budget_exceeded", "failed_at": k, "budget": budget, "best_so_far": best })
        }
    };
    art.json(
        "separation.json",
        "separation",
        json!({ "kind": "polynomial", "mode": mode, "lambda": lambda, "coeffs": coeffs, "rows": rows, "result": status }),
    );
    match failure {
        Some((_, budget, best_so_far)) => Err(Error::Budget { budget, best_so_far }.into()),
        None => Ok(()),
    }
}

// --------------------------------------------------------------- intersect

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectConfig {
    #[serde(default = "default_base")]
    pub base: u32,
    #[serde(default = "default_digits")]
    pub digits: Vec<u32>,
    #[serde(default = "default_t")]
    pub t: Scalar,
    #[serde(default)]
    pub u: f64,
    #[serde(default = "default_depth_min")]
    pub depth_min: u32,
    #[serde(default = "default_depth_max")]
    pub depth_max: u32,
}

fn default_base() -> u32 {
    3
}
fn default_digits() -> Vec<u32> {
    vec![0, 2]
}
fn default_t() -> Scalar {
    Scalar::parse("sqrt(2)").expect("literal parses")
}
fn default_depth_min() -> u32 {
    6
}
fn default_depth_max() -> u32 {
    10
}

fn cmd_intersect(cfg: IntersectConfig, art: &mut Artifacts) -> CliResult<()> {
    if cfg.depth_min > cfg.depth_max {
        return Err(CliError::Config("`depth_min` exceeds `depth_max`".into()));
    }
    let r = cantor_intersection_profile(cfg.base, &cfg.digits, cfg.t.value, cfg.u, cfg.depth_min..=cfg.depth_max)?;
    let mut csv = String::from("eps,count\n");
    let _ = writeln!(art.summary, "{:>6} {:>8} {:>10}", "depth", "count", "exponent");
    for row in &r.rows {
        let _ = writeln!(csv, "{},{}", f(row.eps), row.count);
        let _ = writeln!(art.summary, "{:>6} {:>8} {:>10.4}", row.depth, row.count, row.exponent);
    }
    let _ = writeln!(art.summary, "bound {:.4}, non-increasing: {}", r.bound, r.non_increasing);
    art.csv("intersect.csv", &csv);
    art.json("intersect.json", "intersect", json!({ "report": r }));
    Ok(())
}

// ------------------------------------------------------------------- slice

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub lambda: Scalar,
    #[serde(default)]
    pub alpha: f64,
    pub translations: Vec<[f64; 2]>,
    pub depth: u32,
    pub direction: [Scalar; 2],
    #[serde(default)]
    pub offset: f64,
    /// Depths `k` of the scales `ε = λ^k`; default `1..=depth`.
    #[serde(default)]
    pub eps_depths: Option<Vec<u32>>,
}

fn cmd_slice(cfg: SliceConfig, art: &mut Artifacts) -> CliResult<()> {
    let ts: Vec<(f64, f64)> = cfg.translations.iter().map(|t| (t[0], t[1])).collect();
    let cells = planar_attractor(cfg.lambda.value, cfg.alpha, &ts, cfg.depth)?;
    let dir = (cfg.direction[0].value, cfg.direction[1].value);
    let depths = cfg.eps_depths.clone().unwrap_or_else(|| (1..=cfg.depth).collect());
    let mut counts = vec![];
    for &k in &depths {
        if k > cfg.depth {
            return Err(CliError::Config(format!("field `eps_depths`: {k} exceeds depth {}", cfg.depth)));
        }
        let eps = cfg.lambda.value.powi(k as i32);
        counts.push((eps, slice_count(&cells, dir, cfg.offset, eps)?));
    }
    let mut csv = String::from("eps,count\n");
    for (e, c) in &counts {
        let _ = writeln!(csv, "{},{c}", f(*e));
    }
    let fit = exponent_fit(&counts).ok();
    let _ = writeln!(art.summary, "cells {}, scales {}", cells.len(), counts.len());
    if let Some(ft) = &fit {
        let _ = writeln!(art.summary, "slope {:.4} (r2 {:.4}{})", ft.slope, ft.r2, if ft.unstable { ", unstable" } else { "" });
    }
    art.csv("slice.csv", &csv);
    art.json("slice.json", "slice", json!({ "cells": cells.len(), "counts": counts, "fit": fit }));
    Ok(())
}

// ------------------------------------------------------------------ sumset

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum SetSpec {
    Cantor { base: u32, digits: Vec<u32>, depth: u32 },
    Dyadic { scale_m: u32, indices: Vec<i64> },
}

impl SetSpec {
    fn cells(&self) -> CliResult<CellSet1D> {
        Ok(match self {
            SetSpec::Cantor { base, digits, depth } => cantor_cells(*base, digits, *depth)?,
            SetSpec::Dyadic { scale_m, indices } => CellSet1D::new((-(*scale_m as f64)).exp2(), indices.clone())?,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumsetConfig {
    pub a: SetSpec,
    pub b: SetSpec,
    /// Scales for the box counts; default `2^-2, 2^-3, ...` down to the
    /// coarser cell side.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
}

fn cmd_sumset(cfg: SumsetConfig, art: &mut Artifacts) -> CliResult<()> {
    let (a, b) = (cfg.a.cells()?, cfg.b.cells()?);
    let grid = cfg.eps.clone().unwrap_or_else(|| {
        let k = (-(a.scale.max(b.scale)).log2() + 1e-9).floor() as i32;
        (2..=k).map(|j| 2f64.powi(-j)).collect()
    });
    let (counts, fit) = sumset_dimension(&a, &b, &grid)?;
    let mut csv = String::from("eps,count\n");
    for (e, c) in &counts {
        let _ = writeln!(csv, "{},{c}", f(*e));
    }
    let mut stats = serde_json::Value::Null;
    if let (SetSpec::Dyadic { scale_m: ma, indices: ia }, SetSpec::Dyadic { scale_m: mb, indices: ib }) = (&cfg.a, &cfg.b) {
        let sa = DyadicSet::new(*ma, ia.clone())?;
        let sb = DyadicSet::new(*mb, ib.clone())?;
        let s = sumset(&sa, &sb, Geometry::Line)?;
        let e = additive_energy(&sa, &sb)?;
        let _ = writeln!(art.summary, "|A| {}, |B| {}, |A+B| {}, E(A,B) {}", sa.len(), sb.len(), s.len(), e);
        stats = json!({
            "size_a": sa.len(), "size_b": sb.len(), "size_sum": s.len(),
            "doubling_a": doubling(&sa)?, "energy": e.to_string(),
        });
    }
    let _ = writeln!(art.summary, "sumset slope {:.4} (r2 {:.4})", fit.slope, fit.r2);
    art.csv("sumset.csv", &csv);
    art.json("sumset.json", "sumset", json!({ "counts": counts, "fit": fit, "combinatorics": stats }));
    Ok(())
}

// ----------------------------------------------------------------- witness

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    Uniform { scale_m: u32 },
    Dirac { scale_m: u32, index: i64 },
    /// Uniform on the listed indices.
    Set { scale_m: u32, indices: Vec<i64> },
    /// Uniform on the points whose level-`s` base-`2^d` digits lie in
    /// `digits[s]`.
    Digits { d: u32, digits: Vec<Vec<u32>> },
    Entries { scale_m: u32, entries: Vec<(i64, f64)> },
}

impl MeasureSpec {
    fn measure(&self) -> CliResult<DyadicMeasure> {
        let g = Geometry::Circle;
        Ok(match self {
            MeasureSpec::Uniform { scale_m } => DyadicMeasure::uniform(g, *scale_m)?,
            MeasureSpec::Dirac { scale_m, index } => DyadicMeasure::dirac(g, *scale_m, *index)?,
            MeasureSpec::Set { scale_m, indices } => DyadicSet::new(*scale_m, indices.clone())?.indicator_measure(g)?,
            MeasureSpec::Digits { d, digits } => DyadicSet::from_digits(*d, digits)?.indicator_measure(g)?,
            MeasureSpec::Entries { scale_m, entries } => DyadicMeasure::from_entries(g, *scale_m, entries.clone())?,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessConfig {
    pub mu: MeasureSpec,
    pub nu: MeasureSpec,
    #[serde(default = "default_witness_q")]
    pub q: f64,
    pub d: u32,
    pub delta: f64,
}

fn default_witness_q() -> f64 {
    2.0
}

fn cmd_witness(cfg: WitnessConfig, art: &mut Artifacts) -> CliResult<()> {
    let r = inverse_witness(&cfg.mu.measure()?, &cfg.nu.measure()?, cfg.q, cfg.d, cfg.delta)?;
    let mut csv = String::from("level,r_prime,r_double_prime\n");
    for s in 0..r.ell as usize {
        let get = |v: &Vec<u64>| v.get(s).map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{s},{},{}", get(&r.r_prime), get(&r.r_double_prime));
    }
    let _ = writeln!(art.summary, "{}", r.label);
    let _ = writeln!(art.summary, "hypothesis ratio {:.6}, |A| {}, |B| {}", r.hypothesis_ratio, r.a.len(), r.b.len());
    for c in &r.clauses {
        let how = if c.by_construction { "construction" } else { "measured" };
        let _ = writeln!(art.summary, "{:>9} {:>5} {:>12}  {}", c.id, if c.passes { "pass" } else { "fail" }, how, c.statement);
    }
    art.csv("witness.csv", &csv);
    art.json("witness.json", "witness", json!({ "report": r }));
    Ok(())
}

// ----------------------------------------------------------------- project

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractorSpec {
    pub lambda: Scalar,
    #[serde(default)]
    pub alpha: f64,
    pub translations: Vec<[f64; 2]>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub depth: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default)]
    pub atoms: Option<Vec<PlanarAtom>>,
    #[serde(default)]
    pub attractor: Option<AttractorSpec>,
    pub direction: [Scalar; 2],
}

#[derive(Serialize)]
struct Projected {
    atoms: usize,
    planar_atoms: usize,
    total_mass: f64,
    min_location: f64,
    max_location: f64,
}

fn cmd_project(cfg: ProjectConfig, art: &mut Artifacts) -> CliResult<()> {
    let planar: Vec<((f64, f64), f64)> = match (&cfg.atoms, &cfg.attractor) {
        (Some(a), None) => a.iter().map(|p| ((p.at[0], p.at[1]), p.mass)).collect(),
        (None, Some(s)) => {
            let ts: Vec<(f64, f64)> = s.translations.iter().map(|t| (t[0], t[1])).collect();
            planar_attractor_atoms(s.lambda.value, s.alpha, &ts, s.weights.as_deref(), s.depth)?
        }
        _ => return Err(CliError::Config("give exactly one of `atoms` and `attractor`".into())),
    };
    let p = project_measure(&planar, (cfg.direction[0].value, cfg.direction[1].value))?;
    let mut csv = String::from("location,mass\n");
    for (x, m) in p.atoms() {
        let _ = writeln!(csv, "{},{}", f(*x), f(*m));
    }
    let s = Projected {
        atoms: p.len(),
        planar_atoms: planar.len(),
        total_mass: p.atoms().iter().map(|a| a.1).sum(),
        min_location: *p.min_location(),
        max_location: *p.max_location(),
    };
    let _ = writeln!(art.summary, "{} planar atoms project to {} atoms", s.planar_atoms, s.atoms);
    art.csv("project.csv", &csv);
    art.json("project.json", "project", json!({ "summary": s }));
    Ok(())
}
