//! The `qcstat` command line: `spectrum`, `table`, `verify` and `game`.
//!
//! Every option can come from a flat `key = value` config file
//! (`--config`) or from a flag of the same name; flags win. Exit codes:
//! 0 success, 2 usage or validation, 3 numerical failure, 4 a proven
//! statement came out Violated.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{self, System};
use crate::error::{Error, Result};
use crate::game::{self, AscentOptions, GameState};
use crate::potential::{Potential, PotentialKind};
use crate::spectrum::{self, Spectrum, TruncationPolicy};
use crate::verify::{self, Claim, Status, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VIOLATED: i32 = 4;

/// Overrides the directory that relative `--output` paths resolve against.
pub const ENV_OUTPUT_DIR: &str = "QCSTAT_OUTPUT_DIR";
/// Size of the worker pool for grid evaluation.
pub const ENV_THREADS: &str = "QCSTAT_THREADS";

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_)
        | Error::Domain { .. }
        | Error::Range { .. }
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Contract(_) => EXIT_USAGE,
        Error::Resource(_)
        | Error::Accuracy { .. }
        | Error::Model(_)
        | Error::Truncation { .. }
        | Error::Integrability(_)
        | Error::Convergence { .. } => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// A β or h grid: explicit values or a log grid with points per decade.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    List(Vec<f64>),
    Log { lo: f64, hi: f64, per_decade: usize },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Log { lo, hi, per_decade } => verify::log_grid(*lo, *hi, *per_decade),
        }
    }

    fn parse(key: &str, text: &str) -> Result<Self> {
        let bad = |why: &str| Error::Argument(format!("{key}: {why} in '{text}'"));
        let spec = if let Some(rest) = text.strip_prefix("log:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(bad("expected log:lo:hi:points_per_decade"));
            }
            let lo = parse_f64(key, parts[0])?;
            let hi = parse_f64(key, parts[1])?;
            let per_decade = parts[2].trim().parse().map_err(|_| bad("points per decade must be an integer"))?;
            if !(lo > 0.0 && hi >= lo) || per_decade == 0 {
                return Err(bad("need 0 < lo <= hi and at least one point per decade"));
            }
            GridSpec::Log { lo, hi, per_decade }
        } else {
            GridSpec::List(parse_list(key, text)?)
        };
        let values = spec.values();
        if values.is_empty() {
            return Err(bad("grid is empty"));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(bad(&format!("grid values must be positive, found {v}")));
        }
        Ok(spec)
    }

    fn to_text(&self) -> String {
        match self {
            GridSpec::List(v) => join(v),
            GridSpec::Log { lo, hi, per_decade } => format!("log:{lo}:{hi}:{per_decade}"),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_f64(key: &str, text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::Argument(format!("{key}: '{text}' is not a number")))
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_f64(key, t))
        .collect()
}

fn parse_bool(key: &str, text: &str) -> Result<bool> {
    match text.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Argument(format!("{key}: expected true or false, got '{text}'"))),
    }
}

/// All settings of one run. Grids left unset take the command's default.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: PotentialKind,
    pub dimension: usize,
    pub nu: Option<f64>,
    pub lengths: Vec<f64>,
    pub mass: f64,
    pub potential_file: Option<PathBuf>,
    pub betas: Option<GridSpec>,
    pub hs: Option<GridSpec>,
    pub count: usize,
    pub tail_tolerance: f64,
    pub max_levels: usize,
    pub fd_tolerance: f64,
    pub claims: Vec<Claim>,
    pub levels: Vec<f64>,
    pub lambda: f64,
    pub minors: usize,
    pub ascend: bool,
    pub seed: u64,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let policy = verify::sweep_policy();
        Self {
            model: PotentialKind::Box,
            dimension: 1,
            nu: None,
            lengths: vec![1.0],
            mass: 1.0,
            potential_file: None,
            betas: None,
            hs: None,
            count: 10,
            tail_tolerance: policy.tail_tolerance,
            max_levels: policy.max_levels,
            fd_tolerance: policy.fd_tolerance,
            claims: Claim::ALL.to_vec(),
            levels: Vec::new(),
            lambda: -1.0,
            minors: 0,
            ascend: false,
            seed: 0,
            format: None,
            output: None,
        }
    }
}

/// Config keys in the order [`RunConfig::to_text`] writes them.
pub const CONFIG_KEYS: [&str; 20] = [
    "model",
    "N",
    "nu",
    "L",
    "mass",
    "potential_file",
    "beta",
    "h",
    "count",
    "tail_tolerance",
    "max_levels",
    "fd_tolerance",
    "claims",
    "levels",
    "lambda",
    "minors",
    "ascend",
    "seed",
    "format",
    "output",
];

impl RunConfig {
    /// Sets one key from its text form. Values are validated here so file
    /// entries and flags fail the same way.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let positive = |v: f64| -> Result<f64> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Argument(format!("{key} must be positive, got {v}")))
            }
        };
        let count = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::Argument(format!("{key}: '{v}' is not a non-negative integer")))
        };
        match key {
            "model" => {
                self.model = match value.to_ascii_lowercase().as_str() {
                    "box" => PotentialKind::Box,
                    "homogeneous" => PotentialKind::Homogeneous,
                    "tabulated" => PotentialKind::Tabulated,
                    _ => {
                        return Err(Error::Argument(format!(
                            "model must be box, homogeneous or tabulated, got '{value}'"
                        )))
                    }
                }
            }
            "N" => {
                let n = count(value)?;
                if n == 0 {
                    return Err(Error::Argument("dimension N must be at least 1".into()));
                }
                self.dimension = n;
            }
            "nu" => {
                let nu = parse_f64(key, value)?;
                if !(nu > 0.0 && nu.is_finite()) {
                    return Err(Error::Argument(format!(
                        "homogeneity exponent nu must be positive, got {nu}"
                    )));
                }
                self.nu = Some(nu);
            }
            "L" => {
                let l = parse_list(key, value)?;
                if l.is_empty() {
                    return Err(Error::Argument("L needs at least one side length".into()));
                }
                for v in &l {
                    positive(*v)?;
                }
                self.lengths = l;
            }
            "mass" => self.mass = positive(parse_f64(key, value)?)?,
            "potential_file" => self.potential_file = Some(PathBuf::from(value)),
            "beta" => self.betas = Some(GridSpec::parse(key, value)?),
            "h" => self.hs = Some(GridSpec::parse(key, value)?),
            "count" => {
                self.count = count(value)?;
                if self.count == 0 {
                    return Err(Error::Argument("count must be at least 1".into()));
                }
            }
            "tail_tolerance" => self.tail_tolerance = positive(parse_f64(key, value)?)?,
            "max_levels" => self.max_levels = count(value)?,
            "fd_tolerance" => self.fd_tolerance = positive(parse_f64(key, value)?)?,
            "claims" => {
                self.claims = value
                    .split(',')
                    .filter(|c| !c.trim().is_empty())
                    .map(|c| c.trim().parse())
                    .collect::<Result<_>>()?;
                if self.claims.is_empty() {
                    return Err(Error::Argument("claims list is empty".into()));
                }
            }
            "levels" => self.levels = read_levels(value)?,
            "lambda" => self.lambda = parse_f64(key, value)?,
            "minors" => self.minors = count(value)?,
            "ascend" => self.ascend = parse_bool(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Argument(format!("seed: '{value}' is not an unsigned integer")))?
            }
            "format" => {
                self.format = Some(match value {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(Error::Argument(format!("format must be csv or json, got '{value}'"))),
                })
            }
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::Argument(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// The config as text that [`RunConfig::from_text`] reads back to an
    /// equal value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put(
            "model",
            match self.model {
                PotentialKind::Box => "box",
                PotentialKind::Homogeneous => "homogeneous",
                PotentialKind::Tabulated => "tabulated",
            }
            .into(),
        );
        put("N", self.dimension.to_string());
        if let Some(nu) = self.nu {
            put("nu", nu.to_string());
        }
        put("L", join(&self.lengths));
        put("mass", self.mass.to_string());
        if let Some(p) = &self.potential_file {
            put("potential_file", p.display().to_string());
        }
        if let Some(g) = &self.betas {
            put("beta", g.to_text());
        }
        if let Some(g) = &self.hs {
            put("h", g.to_text());
        }
        put("count", self.count.to_string());
        put("tail_tolerance", self.tail_tolerance.to_string());
        put("max_levels", self.max_levels.to_string());
        put("fd_tolerance", self.fd_tolerance.to_string());
        put(
            "claims",
            self.claims.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(","),
        );
        if !self.levels.is_empty() {
            put("levels", join(&self.levels));
        }
        put("lambda", self.lambda.to_string());
        put("minors", self.minors.to_string());
        put("ascend", self.ascend.to_string());
        put("seed", self.seed.to_string());
        if let Some(f) = self.format {
            put("format", if f == Format::Csv { "csv" } else { "json" }.into());
        }
        if let Some(p) = &self.output {
            put("output", p.display().to_string());
        }
        out
    }

    /// The potential this config describes.
    pub fn potential(&self) -> Result<Potential> {
        let p = match self.model {
            PotentialKind::Box => {
                let lengths = if self.dimension > 1 && self.lengths.len() == 1 {
                    vec![self.lengths[0]; self.dimension]
                } else {
                    self.lengths.clone()
                };
                if lengths.len() != self.dimension {
                    return Err(Error::Argument(format!(
                        "box in N = {} needs {} side lengths, got {}",
                        self.dimension,
                        self.dimension,
                        lengths.len()
                    )));
                }
                Potential::box_well(&lengths)?
            }
            PotentialKind::Homogeneous => {
                let nu = self
                    .nu
                    .ok_or_else(|| Error::Argument("homogeneous model needs --nu".into()))?;
                Potential::homogeneous(self.dimension, nu)?
            }
            PotentialKind::Tabulated => {
                let path = self
                    .potential_file
                    .as_ref()
                    .ok_or_else(|| Error::Argument("tabulated model needs --potential-file".into()))?;
                Potential::load_csv(path)?
            }
        };
        p.with_mass(self.mass)
    }

    pub fn policy(&self, beta_min: f64) -> TruncationPolicy {
        TruncationPolicy {
            beta_min,
            tail_tolerance: self.tail_tolerance,
            max_levels: self.max_levels,
            fd_tolerance: self.fd_tolerance,
            ..TruncationPolicy::default()
        }
    }

    fn betas_or(&self, default: Vec<f64>) -> Vec<f64> {
        self.betas.as_ref().map_or(default, GridSpec::values)
    }

    fn hs_or(&self, default: Vec<f64>) -> Vec<f64> {
        self.hs.as_ref().map_or(default, GridSpec::values)
    }
}

/// Levels inline (`1,2,3`) or from a file (`@path`): either a spectrum CSV
/// with header `n,E` or bare numbers separated by commas or whitespace.
fn read_levels(value: &str) -> Result<Vec<f64>> {
    let Some(path) = value.strip_prefix('@') else {
        return parse_list("levels", value);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
    if let Ok(s) = Spectrum::read_csv(text.as_bytes()) {
        return Ok(s.levels().to_vec());
    }
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split([',', ' ', '\t']))
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_f64("levels", t))
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "qcstat", version, about = "Quantum and classical statistical sums, entropies and their comparison")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lowest energy levels as `n,E` CSV.
    Spectrum(RunArgs),
    /// Ensemble table `beta,h,Zq_scaled,Zc,Eq,Ec,Sq,Sc` over a grid.
    Table(RunArgs),
    /// Runs the selected claim checks and reports margins as JSON.
    Verify(RunArgs),
    /// Stationary point, minor signs and optional ascent of F = λE + S.
    Game(RunArgs),
}

/// Flags shared by all subcommands. Each mirrors a config key.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Writes the resolved config to this path.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
    /// box, homogeneous or tabulated.
    #[arg(long)]
    pub model: Option<String>,
    /// Configuration-space dimension.
    #[arg(long = "N", allow_hyphen_values = true)]
    pub dimension: Option<String>,
    /// Exponent of V = r^nu.
    #[arg(long, allow_hyphen_values = true)]
    pub nu: Option<String>,
    /// Box side lengths, comma separated.
    #[arg(long = "L", allow_hyphen_values = true)]
    pub lengths: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub mass: Option<String>,
    /// CSV with header `x,V` for the tabulated model.
    #[arg(long)]
    pub potential_file: Option<String>,
    /// β values (`0.1,1,10`) or `log:lo:hi:points_per_decade`.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    /// h values, same syntax as --beta.
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<String>,
    /// Number of levels for `spectrum`.
    #[arg(long, allow_hyphen_values = true)]
    pub count: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tail_tolerance: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub max_levels: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub fd_tolerance: Option<String>,
    /// Comma-separated claim ids: c11,c12,c13,t31,t41,c41,p41,p43,wehrl.
    #[arg(long)]
    pub claims: Option<String>,
    /// Game levels, inline or `@file`.
    #[arg(long, allow_hyphen_values = true)]
    pub levels: Option<String>,
    /// Multiplier λ = -β of the game.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    /// Report leading minor signs H_1 … H_k.
    #[arg(long, allow_hyphen_values = true)]
    pub minors: Option<String>,
    /// Run the ascent from a seeded random start and emit its trace.
    #[arg(long)]
    pub ascend: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long)]
    pub output: Option<String>,
}

impl RunArgs {
    /// File first, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        let flags = [
            ("model", &self.model),
            ("N", &self.dimension),
            ("nu", &self.nu),
            ("L", &self.lengths),
            ("mass", &self.mass),
            ("potential_file", &self.potential_file),
            ("beta", &self.beta),
            ("h", &self.h),
            ("count", &self.count),
            ("tail_tolerance", &self.tail_tolerance),
            ("max_levels", &self.max_levels),
            ("fd_tolerance", &self.fd_tolerance),
            ("claims", &self.claims),
            ("levels", &self.levels),
            ("lambda", &self.lambda),
            ("minors", &self.minors),
            ("seed", &self.seed),
            ("format", &self.format),
            ("output", &self.output),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.ascend {
            cfg.ascend = true;
        }
        Ok(cfg)
    }
}

/// Where results go: a file (relative paths under `QCSTAT_OUTPUT_DIR` when
/// set) or the given stdout.
fn emit(cfg: &RunConfig, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match &cfg.output {
        Some(path) => {
            let path = resolve_output(path);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => Ok(stdout.write_all(bytes)?),
    }
}

fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(ENV_OUTPUT_DIR) {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(ENV_THREADS).ok().and_then(|v| v.parse::<usize>().ok()) {
        // A second call in the same process (tests) finds the pool built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn cmd_spectrum(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let potential = cfg.potential()?;
    let hs = cfg.hs_or(vec![1.0]);
    let [h] = hs[..] else {
        return Err(Error::Argument(format!("spectrum takes a single --h, got {}", hs.len())));
    };
    let spec = spectrum::solve_count(&potential, h, cfg.count, cfg.fd_tolerance)?;
    let mut buf = Vec::new();
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => spec.write_csv(&mut buf)?,
        Format::Json => {
            let v = serde_json::json!({
                "h": h,
                "source": spec.source().name(),
                "truncated": spec.is_truncated(),
                "levels": spec.levels(),
                "errors": spec.errors(),
            });
            buf = serde_json::to_vec_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
            buf.push(b'\n');
        }
    }
    emit(cfg, &buf, stdout)?;
    Ok(EXIT_OK)
}

pub fn cmd_table(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let potential = cfg.potential()?;
    let betas = cfg.betas_or(verify::default_beta_grid());
    let hs = cfg.hs_or(verify::default_h_grid());
    let beta_min = betas.iter().copied().fold(f64::INFINITY, f64::min);
    let system = System::prepare(potential, &betas, &hs, cfg.policy(beta_min))?;
    let rows = system.table(&betas, &hs);
    let failed = rows.iter().any(|r| r.check_identities().is_err());
    let mut buf = Vec::new();
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => ensemble::write_table_csv(&rows, &mut buf)?,
        Format::Json => {
            buf = serde_json::to_vec_pretty(&ensemble::table_json(&rows)).map_err(|e| Error::Io(e.to_string()))?;
            buf.push(b'\n');
        }
    }
    emit(cfg, &buf, stdout)?;
    Ok(if failed { EXIT_NUMERICAL } else { EXIT_OK })
}

pub fn cmd_verify(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let potential = cfg.potential()?;
    let mut vc = VerifyConfig {
        policy: cfg.policy(1.0),
        ..VerifyConfig::default()
    };
    if let Some(b) = &cfg.betas {
        vc.betas = b.values();
    }
    if let Some(h) = &cfg.hs {
        vc.hs = h.values();
    }
    let reports = verify::run(&potential, &cfg.claims, &vc)?;
    for r in &reports {
        writeln!(stderr, "{}", r.summary())?;
    }
    let mut buf = Vec::new();
    match cfg.format.unwrap_or(Format::Json) {
        Format::Json => {
            buf = serde_json::to_vec_pretty(&reports).map_err(|e| Error::Io(e.to_string()))?;
            buf.push(b'\n');
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["claim_id", "status", "worst_margin", "tolerance", "notes"])?;
            for r in &reports {
                w.write_record([
                    r.claim_id.as_str().to_string(),
                    r.status.to_string(),
                    format!("{:.16e}", r.worst_margin),
                    format!("{:.16e}", r.tolerance),
                    r.notes.join("; "),
                ])?;
            }
            w.flush()?;
        }
    }
    emit(cfg, &buf, stdout)?;
    let violated = reports.iter().any(|r| r.claim_id.is_theorem() && r.status == Status::Violated);
    Ok(if violated { EXIT_VIOLATED } else { EXIT_OK })
}

pub fn cmd_game(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    if cfg.levels.is_empty() {
        return Err(Error::Argument("game needs --levels".into()));
    }
    let state = GameState::stationary(cfg.levels.clone(), cfg.lambda)?;
    let c = game::compromise(&state);
    let probs = state.probabilities();
    let minors = if cfg.minors > 0 {
        game::principal_minor_signs(&cfg.levels, cfg.lambda, cfg.minors)?
    } else {
        Vec::new()
    };
    let signs = minors
        .iter()
        .map(|m| if m.sign < 0 { "-" } else { "+" })
        .collect::<Vec<_>>()
        .join(",");
    let ascent = if cfg.ascend {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let start: Vec<f64> = cfg.levels.iter().map(|_| rng.gen_range(0.1..10.0)).collect();
        Some(game::ascend(&cfg.levels, cfg.lambda, &start, AscentOptions::default())?)
    } else {
        None
    };

    writeln!(stderr, "P = [{}]", join(&probs))?;
    writeln!(stderr, "F = {}", c.f)?;
    if !minors.is_empty() {
        writeln!(stderr, "minor signs = {signs}")?;
    }
    if let Some(a) = &ascent {
        writeln!(stderr, "ascent converged in {} iterations", a.iterations)?;
    }

    let mut buf = Vec::new();
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => match &ascent {
            Some(a) => game::write_trace_csv(&a.trace, &mut buf)?,
            None => {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["quantity", "value"])?;
                w.write_record(["F".to_string(), format!("{:.16e}", c.f)])?;
                w.write_record(["E".to_string(), format!("{:.16e}", c.energy)])?;
                w.write_record(["S".to_string(), format!("{:.16e}", c.entropy)])?;
                for (i, p) in probs.iter().enumerate() {
                    w.write_record([format!("P_{}", i + 1), format!("{p:.16e}")])?;
                }
                for m in &minors {
                    w.write_record([format!("H_{}", m.k), format!("{:.16e}", m.closed_form)])?;
                }
                if !minors.is_empty() {
                    w.write_record(["minor_signs", &signs])?;
                }
                w.flush()?;
            }
        },
        Format::Json => {
            let v = serde_json::json!({
                "levels": cfg.levels,
                "lambda": cfg.lambda,
                "probabilities": probs,
                "F": c.f,
                "E": c.energy,
                "S": c.entropy,
                "minors": minors.iter().map(|m| serde_json::json!({
                    "k": m.k, "sign": m.sign, "closed_form": m.closed_form, "direct": m.direct,
                })).collect::<Vec<_>>(),
                "ascent": ascent.as_ref().map(|a| serde_json::json!({
                    "iterations": a.iterations,
                    "probabilities": a.state.probabilities(),
                    "trace": a.trace.iter().map(|t| serde_json::json!({
                        "iter": t.iter, "F": t.f, "grad_norm": t.grad_norm,
                    })).collect::<Vec<_>>(),
                })),
            });
            buf = serde_json::to_vec_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
            buf.push(b'\n');
        }
    }
    emit(cfg, &buf, stdout)?;
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command, writing
/// results and diagnostics to the given streams. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads();
    let (args, which) = match &cli.command {
        Command::Spectrum(a) => (a, "spectrum"),
        Command::Table(a) => (a, "table"),
        Command::Verify(a) => (a, "verify"),
        Command::Game(a) => (a, "game"),
    };
    let result = args.resolve().and_then(|cfg| {
        if let Some(path) = &args.save_config {
            std::fs::write(path, cfg.to_text()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        match which {
            "spectrum" => cmd_spectrum(&cfg, stdout),
            "table" => cmd_table(&cfg, stdout),
            "verify" => cmd_verify(&cfg, stdout, stderr),
            _ => cmd_game(&cfg, stdout, stderr),
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            // A spectrum that cannot be produced is reported as bad input.
            if which == "spectrum" {
                EXIT_USAGE
            } else {
                exit_code(&e)
            }
        }
    }
}

/// Entry point for the binary.
pub fn main_exit_code() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
