use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::{CliError, CliResult};
use crate::dynamics::{beta_from_n12, gamma_from_tau_tilde, QubitInit, QubitModel};
use crate::spectrum::{Bath, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// ω12 = 1, γ = 1, π2 = 1/4, r = 0, a ∈ {0.1, 0.35, 0.8}: one state per region.
    Regions,
    /// ω12 = 5, τ̃ = 0.05, n12 = 5.5, r = 1, θ ∈ {0, π/3, 12π/25, 5π/6}.
    CoherentAngles,
}

/// Unresolved options, shared by the command line and the JSON config file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    /// JSON file with default values for any of these options.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Named parameter set; fills every group left unset.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Qubit gap ε2 - ε1.
    #[arg(long)]
    pub omega12: Option<f64>,
    /// Comma-separated, strictly increasing energy levels.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub energies: Option<Vec<f64>>,
    /// Inverse bath temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Thermal ratio of the qubit gap, β = ln(1 + 1/n12)/ω12.
    #[arg(long)]
    pub n12: Option<f64>,
    /// Thermal ratio of the hotter bath in `experiment`.
    #[arg(long)]
    pub n12_hot: Option<f64>,
    /// Coupling strength.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Dimensionless interaction time, γ = τ̃ ω12 / 2.
    #[arg(long)]
    pub tau_tilde: Option<f64>,
    /// Initial excited population.
    #[arg(long)]
    pub a: Option<f64>,
    /// Bloch angle, a = sin²(θ/2).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Coherence fraction in [0, 1].
    #[arg(long)]
    pub r: Option<f64>,
    /// Coherence phase.
    #[arg(long)]
    pub phi: Option<f64>,
    /// End of the time grid [default: 20/|λ|].
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Number of grid points [default: 2048].
    #[arg(long)]
    pub points: Option<usize>,
    /// Measurement time for `estimate` [default: optimal time].
    #[arg(long)]
    pub time: Option<f64>,
    /// Steps of the a grid in `optimize` [default: 21].
    #[arg(long)]
    pub a_steps: Option<usize>,
    /// Steps of the r grid in `optimize` [default: 11].
    #[arg(long)]
    pub r_steps: Option<usize>,
    /// Experiments per estimate [default: 10000].
    #[arg(long)]
    pub m_experiments: Option<u64>,
    /// Monte Carlo replicas [default: 1000].
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, or directory for multi-table outputs [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format [default: csv].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Corrupt the generator before the spectral checks of `validate`.
    #[arg(long)]
    #[serde(skip)]
    pub inject_fault: bool,
}

macro_rules! overlay {
    ($top:expr, $base:expr, $($field:ident),*) => {
        RawConfig {
            $($field: $top.$field.or($base.$field),)*
            config: $top.config,
            inject_fault: $top.inject_fault,
        }
    };
}

impl RawConfig {
    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: RawConfig) -> RawConfig {
        overlay!(
            self, base, preset, omega12, energies, beta, n12, n12_hot, gamma, tau_tilde, a, theta, r, phi,
            t_max, points, time, a_steps, r_steps, m_experiments, replicas, seed, out, format
        )
    }

    pub fn from_file(path: &Path) -> CliResult<RawConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// One labelled initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub init: QubitInit,
}

/// Options merged from preset, file and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
}

fn exactly_one<T: Copy>(x: Option<T>, y: Option<T>, names: (&str, &str)) -> CliResult<Option<Result<T, T>>> {
    match (x, y) {
        (Some(_), Some(_)) => Err(CliError::Config(format!("give only one of --{} and --{}", names.0, names.1))),
        (Some(v), None) => Ok(Some(Ok(v))),
        (None, Some(v)) => Ok(Some(Err(v))),
        (None, None) => Ok(None),
    }
}

fn preset_defaults(preset: Preset) -> RawConfig {
    match preset {
        Preset::Regions => RawConfig {
            omega12: Some(1.0),
            beta: Some(3f64.ln()),
            gamma: Some(1.0),
            r: Some(0.0),
            ..RawConfig::default()
        },
        Preset::CoherentAngles => RawConfig {
            omega12: Some(5.0),
            n12: Some(5.5),
            n12_hot: Some(9.5),
            tau_tilde: Some(0.05),
            r: Some(1.0),
            ..RawConfig::default()
        },
    }
}

/// Preset values only fill groups that are entirely unset.
fn apply_preset(raw: RawConfig, preset: Preset) -> RawConfig {
    let p = preset_defaults(preset);
    let mut out = raw;
    if out.omega12.is_none() && out.energies.is_none() {
        out.omega12 = p.omega12;
    }
    if out.beta.is_none() && out.n12.is_none() {
        out.beta = p.beta;
        out.n12 = p.n12;
    }
    if out.gamma.is_none() && out.tau_tilde.is_none() {
        out.gamma = p.gamma;
        out.tau_tilde = p.tau_tilde;
    }
    out.n12_hot = out.n12_hot.or(p.n12_hot);
    out.r = out.r.or(p.r);
    out
}

impl RunConfig {
    pub fn load(flags: RawConfig) -> CliResult<Self> {
        let merged = match &flags.config {
            Some(path) => {
                let file = RawConfig::from_file(path)?;
                flags.over(file)
            }
            None => flags,
        };
        Self::resolve(merged)
    }

    pub fn resolve(raw: RawConfig) -> CliResult<Self> {
        let raw = match raw.preset {
            Some(p) => apply_preset(raw, p),
            None => raw,
        };
        exactly_one(raw.beta, raw.n12, ("beta", "n12"))?;
        exactly_one(raw.gamma, raw.tau_tilde, ("gamma", "tau-tilde"))?;
        exactly_one(raw.a, raw.theta, ("a", "theta"))?;
        if raw.omega12.is_some() && raw.energies.is_some() {
            return Err(CliError::Config("give only one of --omega12 and --energies".into()));
        }
        if let Some(t) = raw.t_max {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Config(format!("--t-max must be positive, got {t}")));
            }
        }
        if let Some(n) = raw.points {
            if n < 2 {
                return Err(CliError::Config(format!("--points must be at least 2, got {n}")));
            }
        }
        Ok(Self { raw })
    }

    pub fn spectrum(&self) -> CliResult<Spectrum> {
        match (&self.raw.omega12, &self.raw.energies) {
            (Some(w), None) => Ok(Spectrum::qubit(*w)?),
            (None, Some(e)) => Ok(Spectrum::new(e.clone())?),
            _ => Err(CliError::Config("missing spectrum: give --omega12 or --energies".into())),
        }
    }

    pub fn qubit_spectrum(&self) -> CliResult<Spectrum> {
        let s = self.spectrum()?;
        if s.dim() != 2 {
            return Err(CliError::Config(format!("this command needs a qubit, got {} levels", s.dim())));
        }
        Ok(s)
    }

    /// β from `--beta` or `--n12`.
    pub fn beta(&self, spectrum: &Spectrum) -> CliResult<f64> {
        match exactly_one(self.raw.beta, self.raw.n12, ("beta", "n12"))? {
            Some(Ok(beta)) => Ok(beta),
            Some(Err(n12)) => Ok(beta_from_n12(n12, spectrum.omega12())?),
            None => Err(CliError::Config("missing bath temperature: give --beta or --n12".into())),
        }
    }

    pub fn gamma(&self, spectrum: &Spectrum) -> CliResult<f64> {
        match exactly_one(self.raw.gamma, self.raw.tau_tilde, ("gamma", "tau-tilde"))? {
            Some(Ok(gamma)) => Ok(gamma),
            Some(Err(tau)) => Ok(gamma_from_tau_tilde(tau, spectrum.omega12())?),
            None => Err(CliError::Config("missing coupling: give --gamma or --tau-tilde".into())),
        }
    }

    pub fn bath(&self, spectrum: &Spectrum) -> CliResult<Bath> {
        Ok(Bath::new(self.beta(spectrum)?, self.gamma(spectrum)?)?)
    }

    pub fn r(&self) -> f64 {
        self.raw.r.unwrap_or(0.0)
    }

    pub fn phi(&self) -> f64 {
        self.raw.phi.unwrap_or(0.0)
    }

    /// The initial states to trace: the preset family or the single configured state.
    pub fn curves(&self) -> CliResult<Vec<Curve>> {
        let (r, phi) = (self.r(), self.phi());
        if self.raw.preset.is_some() && (self.raw.a.is_some() || self.raw.theta.is_some()) {
            return Err(CliError::Config("a preset defines its own initial states; drop --a/--theta".into()));
        }
        match self.raw.preset {
            Some(Preset::Regions) => [0.1, 0.35, 0.8]
                .iter()
                .map(|&a| {
                    Ok(Curve {
                        label: format!("a{a}"),
                        init: QubitInit::new(a, r, phi)?,
                    })
                })
                .collect(),
            Some(Preset::CoherentAngles) => [
                ("theta_0", 0.0),
                ("theta_pi_3", PI / 3.0),
                ("theta_12pi_25", 12.0 * PI / 25.0),
                ("theta_5pi_6", 5.0 * PI / 6.0),
            ]
            .iter()
            .map(|&(label, theta)| {
                Ok(Curve {
                    label: label.to_string(),
                    init: QubitInit::from_theta(theta, r, phi)?,
                })
            })
            .collect(),
            None => Ok(vec![Curve {
                label: "trace".into(),
                init: self.init()?,
            }]),
        }
    }

    pub fn init(&self) -> CliResult<QubitInit> {
        let (r, phi) = (self.r(), self.phi());
        match exactly_one(self.raw.a, self.raw.theta, ("a", "theta"))? {
            Some(Ok(a)) => Ok(QubitInit::new(a, r, phi)?),
            Some(Err(theta)) => Ok(QubitInit::from_theta(theta, r, phi)?),
            None => Err(CliError::Config("missing initial state: give --a or --theta".into())),
        }
    }

    pub fn t_max(&self, model: &QubitModel) -> f64 {
        self.raw.t_max.unwrap_or_else(|| model.settle_time())
    }

    pub fn points(&self) -> usize {
        self.raw.points.unwrap_or(2048)
    }

    pub fn format(&self) -> Format {
        self.raw.format.unwrap_or(Format::Csv)
    }

    pub fn seed(&self) -> u64 {
        self.raw.seed.unwrap_or(0)
    }

    pub fn m_experiments(&self) -> u64 {
        self.raw.m_experiments.unwrap_or(10_000)
    }

    pub fn replicas(&self) -> usize {
        self.raw.replicas.unwrap_or(1000)
    }

    pub fn grid_steps(&self) -> (usize, usize) {
        (self.raw.a_steps.unwrap_or(21), self.raw.r_steps.unwrap_or(11))
    }

    pub fn out(&self) -> Option<&Path> {
        self.raw.out.as_deref()
    }
}
