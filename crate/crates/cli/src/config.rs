//! Strict experiment configuration in TOML (or JSON for resolved manifests).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ipslab::analysis::krylov::KrylovTestFunction;
use ipslab::analysis::psi::GeometricProbe;
use ipslab::analysis::trial::FamilyKind;
use ipslab::kernels::{mollify, BoundFlavor, KernelSpec};
use ipslab::lift::{LiftedDrift, PairKernel, ParticleConfiguration};
use ipslab::sde::{PathFunctional, RadialProfile, Scheme, SimPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseScan,
    HardyEstimate,
    MultiparticleHardy,
    PsiTest,
    LyapunovAudit,
    HeatKernelCheck,
    FeynmanKac,
    Krylov,
    RawEnsemble,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PhaseScan => "phase_scan",
            ExperimentKind::HardyEstimate => "hardy_estimate",
            ExperimentKind::MultiparticleHardy => "multiparticle_hardy",
            ExperimentKind::PsiTest => "psi_test",
            ExperimentKind::LyapunovAudit => "lyapunov_audit",
            ExperimentKind::HeatKernelCheck => "heat_kernel_check",
            ExperimentKind::FeynmanKac => "feynman_kac",
            ExperimentKind::Krylov => "krylov",
            ExperimentKind::RawEnsemble => "raw_ensemble",
        }
    }

    /// Whether the top-level `kernel` section is read.
    pub fn uses_kernel(self) -> bool {
        matches!(self, ExperimentKind::HardyEstimate | ExperimentKind::Krylov)
    }

    /// Whether the `sim` section is read.
    pub fn uses_sim(self) -> bool {
        matches!(
            self,
            ExperimentKind::PhaseScan | ExperimentKind::HeatKernelCheck | ExperimentKind::FeynmanKac | ExperimentKind::Krylov | ExperimentKind::RawEnsemble
        )
    }

    /// Whether `sim.drift` is read; other simulating experiments fix the drift themselves.
    pub fn uses_sim_drift(self) -> bool {
        matches!(self, ExperimentKind::Krylov | ExperimentKind::RawEnsemble)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_collision_radius() -> f64 {
    1e-3
}
fn default_max_substeps() -> usize {
    100_000
}
fn default_diffusion_fraction() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_spread() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    ipslab::analysis::feynman_kac::DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFunctional {
    pub name: String,
    pub functional: PathFunctional,
}

/// Ensemble parameters. The initial configuration is given by exactly one of
/// `pair_distance` (N = 2), `spacing` (particles on the first axis) or `positions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_particles: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
    pub dt: f64,
    pub horizon: f64,
    pub ensemble: usize,
    #[serde(default = "default_collision_radius")]
    pub collision_radius: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_max_substeps")]
    pub max_substeps: usize,
    #[serde(default = "default_diffusion_fraction")]
    pub diffusion_fraction: f64,
    #[serde(default = "default_true")]
    pub bridge_correction: bool,
    /// Pair kernel of the drift (raw_ensemble, krylov).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<KernelSpec>,
    /// Mollification radius applied to `drift`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// One ensemble per mollification radius (raw_ensemble).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon_schedule: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functionals: Vec<NamedFunctional>,
}

impl SimConfig {
    pub fn initial(&self) -> ipslab::Result<ParticleConfiguration> {
        let (n, d) = (self.n_particles, self.dim);
        match (self.pair_distance, self.spacing, &self.positions) {
            (Some(r), None, None) if n == 2 => ParticleConfiguration::pair(d, r),
            (Some(_), None, None) => Err(ipslab::Error::InvalidParameter("sim.pair_distance needs n_particles = 2".into())),
            (None, Some(s), None) => {
                let mut p = vec![0.0; n * d];
                for i in 0..n {
                    p[i * d] = s * (i as f64 - (n - 1) as f64 / 2.0);
                }
                ParticleConfiguration::new(n, d, p)
            }
            (None, None, Some(blocks)) => {
                let x = ParticleConfiguration::from_blocks(blocks)?;
                if x.n_particles() != n || x.dim() != d {
                    return Err(ipslab::Error::InvalidParameter("sim.positions does not match n_particles x dim".into()));
                }
                Ok(x)
            }
            _ => Err(ipslab::Error::InvalidParameter("give exactly one of sim.pair_distance, sim.spacing, sim.positions".into())),
        }
    }

    /// Uniform drift from `sim.drift`, mollified when `sim.epsilon` is set.
    pub fn drift(&self) -> ipslab::Result<LiftedDrift> {
        let kernel = self.drift.clone().ok_or_else(|| ipslab::Error::InvalidParameter("sim.drift is required".into()))?;
        let pair: PairKernel = match self.epsilon {
            Some(eps) => mollify(&kernel, eps)?.into(),
            None => kernel.into(),
        };
        LiftedDrift::uniform(pair, self.n_particles)
    }

    /// Plan with the given drift; callers that fix the drift pass a placeholder.
    pub fn plan(&self, drift: LiftedDrift, seed: u64, workers: Option<usize>) -> ipslab::Result<SimPlan> {
        let mut p = SimPlan::new(drift, self.initial()?, self.dt, self.horizon);
        p.scheme = self.scheme;
        p.epsilon_schedule = self.epsilon_schedule.clone();
        p.collision_radius = self.collision_radius;
        p.max_substeps = self.max_substeps;
        p.seed = seed;
        p.ensemble = self.ensemble;
        p.functionals = self.functionals.iter().map(|f| (f.name.clone(), f.functional.clone())).collect();
        p.snapshots = self.snapshots.clone();
        p.diffusion_fraction = self.diffusion_fraction;
        p.bridge_correction = self.bridge_correction;
        p.workers = workers;
        p.validate()?;
        Ok(p)
    }

    /// Plan with a zero placeholder drift.
    pub fn plan_without_drift(&self, seed: u64, workers: Option<usize>) -> ipslab::Result<SimPlan> {
        let drift = LiftedDrift::uniform(KernelSpec::zero(self.dim)?, self.n_particles)?;
        self.plan(drift, seed, workers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseScanAnalysis {
    pub kappa_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardyEstimateAnalysis {
    pub flavor: BoundFlavor,
    pub family: FamilyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiparticleAnalysis {
    pub dim: usize,
    pub n_particles: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiAnalysis {
    pub dim: usize,
    pub n_particles: usize,
    pub kappa_grid: Vec<f64>,
    #[serde(default)]
    pub probe: GeometricProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovAnalysis {
    pub kappa: f64,
    pub dim: usize,
    pub n_particles: usize,
    pub points: usize,
    /// Standard deviation of the sampled coordinates.
    #[serde(default = "default_spread")]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatKernelAnalysis {
    pub kappa: f64,
    pub t_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeynmanKacAnalysis {
    pub kappa: f64,
    pub lambda: f64,
    pub profile: RadialProfile,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovAnalysis {
    pub lambdas: Vec<f64>,
    pub q: f64,
    pub test_function: KrylovTestFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEnsembleAnalysis {
    /// Write one CSV row per trajectory.
    #[serde(default = "default_true")]
    pub write_trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile<A> {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    pub analysis: A,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Config {
    PhaseScan(ConfigFile<PhaseScanAnalysis>),
    HardyEstimate(ConfigFile<HardyEstimateAnalysis>),
    MultiparticleHardy(ConfigFile<MultiparticleAnalysis>),
    PsiTest(ConfigFile<PsiAnalysis>),
    LyapunovAudit(ConfigFile<LyapunovAnalysis>),
    HeatKernelCheck(ConfigFile<HeatKernelAnalysis>),
    FeynmanKac(ConfigFile<FeynmanKacAnalysis>),
    Krylov(ConfigFile<KrylovAnalysis>),
    RawEnsemble(ConfigFile<RawEnsembleAnalysis>),
}

/// Applies `$body` to the inner `ConfigFile` of any variant.
macro_rules! with_file {
    ($config:expr, $f:ident => $body:expr) => {
        match $config {
            Config::PhaseScan($f) => $body,
            Config::HardyEstimate($f) => $body,
            Config::MultiparticleHardy($f) => $body,
            Config::PsiTest($f) => $body,
            Config::LyapunovAudit($f) => $body,
            Config::HeatKernelCheck($f) => $body,
            Config::FeynmanKac($f) => $body,
            Config::Krylov($f) => $body,
            Config::RawEnsemble($f) => $body,
        }
    };
}

impl Config {
    pub fn kind(&self) -> ExperimentKind {
        with_file!(self, f => f.experiment)
    }

    pub fn seed(&self) -> u64 {
        with_file!(self, f => f.seed)
    }

    pub fn set_seed(&mut self, seed: u64) {
        with_file!(self, f => f.seed = seed)
    }

    pub fn output_dir(&self) -> Option<&Path> {
        with_file!(self, f => f.output_dir.as_deref())
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        with_file!(self, f => f.output_dir = Some(dir))
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        with_file!(self, f => f.kernel.as_ref())
    }

    pub fn sim(&self) -> Option<&SimConfig> {
        with_file!(self, f => f.sim.as_ref())
    }

    /// The fully resolved configuration, defaults included.
    pub fn to_json(&self) -> serde_json::Value {
        with_file!(self, f => serde_json::to_value(f).expect("config serializes"))
    }
}

/// Parse failure with the location reported by the underlying parser.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.trim_end())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

#[derive(Deserialize)]
struct Header {
    experiment: ExperimentKind,
}

fn parse_as<A: DeserializeOwned>(text: &str, format: Format) -> Result<ConfigFile<A>, ConfigError> {
    match format {
        Format::Toml => toml::from_str(text).map_err(|e| ConfigError(e.to_string())),
        Format::Json => serde_json::from_str(text).map_err(|e| ConfigError(e.to_string())),
    }
}

pub fn parse_config(text: &str, format: Format) -> Result<Config, ConfigError> {
    // first pass only reads the experiment name; the second is strict
    let header: Header = match format {
        Format::Toml => {
            let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
            let value = table.get("experiment").cloned().ok_or_else(|| ConfigError("missing field `experiment`".into()))?;
            Header { experiment: value.try_into().map_err(|e: toml::de::Error| ConfigError(format!("experiment: {e}")))? }
        }
        Format::Json => serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?,
    };
    Ok(match header.experiment {
        ExperimentKind::PhaseScan => Config::PhaseScan(parse_as(text, format)?),
        ExperimentKind::HardyEstimate => Config::HardyEstimate(parse_as(text, format)?),
        ExperimentKind::MultiparticleHardy => Config::MultiparticleHardy(parse_as(text, format)?),
        ExperimentKind::PsiTest => Config::PsiTest(parse_as(text, format)?),
        ExperimentKind::LyapunovAudit => Config::LyapunovAudit(parse_as(text, format)?),
        ExperimentKind::HeatKernelCheck => Config::HeatKernelCheck(parse_as(text, format)?),
        ExperimentKind::FeynmanKac => Config::FeynmanKac(parse_as(text, format)?),
        ExperimentKind::Krylov => Config::Krylov(parse_as(text, format)?),
        ExperimentKind::RawEnsemble => Config::RawEnsemble(parse_as(text, format)?),
    })
}

/// Reads a config file. A manifest written by `run` is accepted too and
/// yields its resolved config.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let format = Format::from_path(path);
    if format == Format::Json {
        if let Ok(serde_json::Value::Object(m)) = serde_json::from_str::<serde_json::Value>(&text) {
            if let (Some(_), Some(config)) = (m.get("tool"), m.get("config")) {
                return parse_config(&config.to_string(), Format::Json);
            }
        }
    }
    parse_config(&text, format)
}
