//! Run configuration: optional flat JSON file, command-line flags on top.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde_json::{Map, Value};
use teleportsim_core::{LindbladSpec, SystemParams};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Channel generation on atoms 2, 3 against (|ee> + i|gg>)/√2.
    Channel,
    /// Seeded end-to-end runs on random payloads, one record per run.
    Teleport,
    /// Outcome table: probabilities and corrected fidelities per detection result.
    Table1,
    /// Full driven-cavity model against the effective model over a regime sweep.
    FullVsEff,
    /// Photon-number, thermal-field and cavity-decay robustness of the teleport leg.
    DecoherenceSweep,
    /// Average fidelity against mistimed interactions, λt over [π/8, 3π/8].
    TimingSweep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Channel => "channel",
            Self::Teleport => "teleport",
            Self::Table1 => "table1",
            Self::FullVsEff => "full-vs-eff",
            Self::DecoherenceSweep => "decoherence-sweep",
            Self::TimingSweep => "timing-sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

const COLUMNS_HELP: &str = "\
Output columns (one record per row, same names as JSON keys):
  channel            g, delta, omega, lambda, t, lambda_t, drive_multiple,
                     amp_ee_re, amp_ee_im, amp_gg_re, amp_gg_im, fidelity
  teleport           sample, alpha_re, alpha_im, beta_re, beta_im, outcome,
                     correction, probability, fidelity
  table1             outcome, atom3_state, correction, count, frequency,
                     probability, min_fidelity, mean_fidelity,
                     max_state_error
  full-vs-eff        point, g, delta, omega, detuning_ratio, drive_ratio,
                     pair_fidelity, end_to_end_fidelity
  decoherence-sweep  point, cavity, photons, kappa, nbar, gamma, n_max, method,
                     average_fidelity, reference_fidelity, drop,
                     trace_deviation, positivity_warning
  timing-sweep       point, lambda_t, lambda_t_over_pi, t, omega,
                     average_fidelity, min_fidelity

The drive Ω is snapped to the nearest value with Ω·t = Nπ before every run;
the value used is reported in the omega column.
Exit status: 0 all checks passed, 1 a check failed, 2 configuration error.";

/// Command-line flags. Every value flag overrides the same key of `--config`.
#[derive(Debug, Parser)]
#[command(name = "teleportsim", version, about = "Cavity-QED teleportation without Bell-state measurement", after_help = COLUMNS_HELP)]
pub struct Cli {
    /// What to run; may instead come from the config file's `mode` key.
    #[arg(value_enum)]
    pub mode: Option<Mode>,
    /// Atom-cavity coupling g.
    #[arg(long)]
    pub g: Option<f64>,
    /// Detuning δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Classical drive Rabi frequency Ω.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Highest retained cavity Fock level.
    #[arg(long)]
    pub nmax: Option<u64>,
    /// Cavity decay rate κ (decoherence-sweep).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Thermal mean photon number n̄ (decoherence-sweep).
    #[arg(long)]
    pub nbar: Option<f64>,
    /// Atomic spontaneous emission rate γ (decoherence-sweep).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Payload count (teleport, table1) or grid points (timing-sweep).
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat JSON object holding any of the keys above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Result file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to json for a `.json` output path, csv otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: SystemParams,
    pub lindblad: LindbladSpec,
    pub n_samples: usize,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub output_format: Format,
}

pub const DEFAULT_SAMPLES: u64 = 100;
pub const DEFAULT_KAPPA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigParseError {
    pub key: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub violations: Vec<String>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration ({} problem(s))", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] ConfigParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Every key a config source may set. `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub g: Option<f64>,
    pub delta: Option<f64>,
    pub omega: Option<f64>,
    pub nmax: Option<u64>,
    pub kappa: Option<f64>,
    pub nbar: Option<f64>,
    pub gamma: Option<f64>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Overrides {
    /// Keeps every value of `self`, filling gaps from `base`.
    pub fn over(self, base: Overrides) -> Overrides {
        Overrides {
            mode: self.mode.or(base.mode),
            g: self.g.or(base.g),
            delta: self.delta.or(base.delta),
            omega: self.omega.or(base.omega),
            nmax: self.nmax.or(base.nmax),
            kappa: self.kappa.or(base.kappa),
            nbar: self.nbar.or(base.nbar),
            gamma: self.gamma.or(base.gamma),
            samples: self.samples.or(base.samples),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
        }
    }
}

impl From<&Cli> for Overrides {
    fn from(cli: &Cli) -> Self {
        Overrides {
            mode: cli.mode,
            g: cli.g,
            delta: cli.delta,
            omega: cli.omega,
            nmax: cli.nmax,
            kappa: cli.kappa,
            nbar: cli.nbar,
            gamma: cli.gamma,
            samples: cli.samples,
            seed: cli.seed,
            out: cli.out.clone(),
            format: cli.format,
        }
    }
}

fn parse_error(key: &str, reason: impl Into<String>) -> ConfigParseError {
    ConfigParseError { key: key.to_string(), reason: reason.into() }
}

fn real(key: &str, v: &Value) -> Result<f64, ConfigParseError> {
    v.as_f64().ok_or_else(|| parse_error(key, format!("expected a number, got {v}")))
}

fn count(key: &str, v: &Value) -> Result<u64, ConfigParseError> {
    v.as_u64().ok_or_else(|| parse_error(key, format!("expected a non-negative integer, got {v}")))
}

fn text<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigParseError> {
    v.as_str().ok_or_else(|| parse_error(key, format!("expected a string, got {v}")))
}

fn choice<T: ValueEnum>(key: &str, v: &Value) -> Result<T, ConfigParseError> {
    let s = text(key, v)?;
    T::from_str(s, false).map_err(|_| {
        let names: Vec<String> = T::value_variants()
            .iter()
            .filter_map(|x| x.to_possible_value().map(|p| p.get_name().to_string()))
            .collect();
        parse_error(key, format!("unknown value `{s}` (expected one of {})", names.join(", ")))
    })
}

/// Parses a flat JSON object. Keys follow the flag names; the long field
/// names (`omega_drive`, `n_max`, `n_bar`, `gamma_atom`, `n_samples`,
/// `output_path`, `output_format`) are accepted as aliases.
pub fn parse_config_document(doc: &str) -> Result<Overrides, ConfigParseError> {
    if doc.trim().is_empty() {
        return Ok(Overrides::default());
    }
    let value: Value = serde_json::from_str(doc)
        .map_err(|e| parse_error("<document>", format!("not valid JSON at line {}, column {}", e.line(), e.column())))?;
    let Value::Object(map) = value else {
        return Err(parse_error("<document>", "expected a JSON object of key/value pairs"));
    };
    overrides_from_map(&map)
}

fn overrides_from_map(map: &Map<String, Value>) -> Result<Overrides, ConfigParseError> {
    let mut o = Overrides::default();
    for (key, v) in map {
        if v.is_null() {
            continue;
        }
        let k = key.as_str();
        match k {
            "mode" => o.mode = Some(choice(k, v)?),
            "g" => o.g = Some(real(k, v)?),
            "delta" => o.delta = Some(real(k, v)?),
            "omega" | "omega_drive" => o.omega = Some(real(k, v)?),
            "nmax" | "n_max" => o.nmax = Some(count(k, v)?),
            "kappa" => o.kappa = Some(real(k, v)?),
            "nbar" | "n_bar" => o.nbar = Some(real(k, v)?),
            "gamma" | "gamma_atom" => o.gamma = Some(real(k, v)?),
            "samples" | "n_samples" => o.samples = Some(count(k, v)?),
            "seed" => o.seed = Some(count(k, v)?),
            "out" | "output_path" => o.out = Some(PathBuf::from(text(k, v)?)),
            "format" | "output_format" => o.format = Some(choice(k, v)?),
            "params" | "lindblad" => {
                // nested groups are flattened into the same namespace
                let Value::Object(inner) = v else {
                    return Err(parse_error(k, "expected an object"));
                };
                o = overrides_from_map(inner)?.over(o);
            }
            _ => return Err(parse_error(k, "unknown key")),
        }
    }
    Ok(o)
}

pub fn read_config_file(path: &Path) -> Result<Overrides, ConfigError> {
    let doc = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    Ok(parse_config_document(&doc)?)
}

/// Applies defaults and checks every field, reporting all problems at once.
pub fn resolve(o: Overrides) -> Result<RunConfig, ValidationError> {
    let defaults = SystemParams::default();
    let g = o.g.unwrap_or(defaults.g);
    let delta = o.delta.unwrap_or(defaults.delta);
    let omega = o.omega.unwrap_or(defaults.omega_drive);
    let nmax = o.nmax.unwrap_or(defaults.n_max as u64);
    let kappa = o.kappa.unwrap_or(DEFAULT_KAPPA);
    let nbar = o.nbar.unwrap_or(0.0);
    let gamma = o.gamma.unwrap_or(0.0);
    let samples = o.samples.unwrap_or(DEFAULT_SAMPLES);

    let mut v = Vec::new();
    let positive = |name: &str, x: f64, v: &mut Vec<String>| {
        if !(x.is_finite() && x > 0.0) {
            v.push(format!("{name} must be finite and > 0 (got {x})"));
        }
    };
    let non_negative = |name: &str, x: f64, v: &mut Vec<String>| {
        if !(x.is_finite() && x >= 0.0) {
            v.push(format!("{name} must be finite and >= 0 (got {x})"));
        }
    };
    if o.mode.is_none() {
        v.push("mode is required (positional argument or `mode` key)".to_string());
    }
    positive("g", g, &mut v);
    positive("delta", delta, &mut v);
    positive("omega", omega, &mut v);
    non_negative("kappa", kappa, &mut v);
    non_negative("nbar", nbar, &mut v);
    non_negative("gamma", gamma, &mut v);
    if !(1..=200).contains(&nmax) {
        v.push(format!("nmax must be between 1 and 200 (got {nmax})"));
    }
    if samples < 1 {
        v.push("samples must be >= 1".to_string());
    } else if o.mode == Some(Mode::TimingSweep) && samples < 3 {
        v.push(format!("samples must be >= 3 for timing-sweep (got {samples})"));
    }
    let Some(mode) = o.mode.filter(|_| v.is_empty()) else {
        return Err(ValidationError { violations: v });
    };

    let format = o.format.unwrap_or_else(|| match &o.out {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => Format::Json,
        _ => Format::Csv,
    });
    Ok(RunConfig {
        mode,
        params: SystemParams { g, delta, omega_drive: omega, n_max: nmax as usize },
        lindblad: LindbladSpec { kappa, n_bar: nbar, gamma_atom: gamma },
        n_samples: samples as usize,
        seed: o.seed.unwrap_or(1),
        output_path: o.out,
        output_format: format,
    })
}

/// File values first, flags on top, then defaults and validation.
pub fn parse_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let file = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => Overrides::default(),
    };
    Ok(resolve(Overrides::from(cli).over(file))?)
}
