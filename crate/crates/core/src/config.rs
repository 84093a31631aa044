//! Experiment configuration files (TOML) and their resolution into runnable
//! objects.
//!
//! ```toml
//! seed = 7
//! trials = 2000
//! t_max = 800
//! checkpoints = [200, 400, 800]
//!
//! [graph]
//! kind = "erdos_renyi"
//! n = 20
//! p = 0.3
//!
//! [h]
//! kind = "identity"
//!
//! [f]
//! kind = "tanh"
//! slope = 2.0
//!
//! [noise]
//! kind = "gaussian"
//! sigma = 1.0
//!
//! [sensing]
//! theta = 5.0
//! noise = { kind = "gaussian", sigma = 0.5 }
//! initial = "shared"
//!
//! [schedule]
//! a = "optimal"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{analyze, optimal_gain, AnalyticReport, CovarianceModel};
use crate::engine::{initial_state, CheckpointPlan, InitialState, RcSystem, SensingConfig, StepSchedule};
use crate::ensemble::{EnsembleSpec, InitialMode};
use crate::error::{Error, Result};
use crate::graph::{build_named, build_random, Family, Graph, RandomModel, Spectrum};
use crate::maps::{db_to_linear, ReceiveMap, ReceiveShape, TransmitMap};
use crate::noise::{functionals, McSettings, NoiseFunctionals, NoiseModel};
use crate::rng::shared_sensing_stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Complete { n: usize },
    Star { n: usize },
    Ring { n: usize },
    Line { n: usize },
    Tree { n: usize },
    Cubic { n: usize },
    KRegularLattice { n: usize, k: usize },
    BipartiteComplete { p: usize, q: usize },
    /// `seed` defaults to the master seed.
    ErdosRenyi { n: usize, p: f64, seed: Option<u64> },
    Geometric { n: usize, radius: f64, seed: Option<u64> },
    /// Edge-list file; relative paths resolve against the config file.
    File { path: PathBuf },
}

impl GraphSpec {
    pub fn build(&self, master_seed: u64, base_dir: &Path) -> Result<Graph> {
        let named = |f: Family, n: usize| build_named(f, n);
        match self {
            GraphSpec::Complete { n } => named(Family::Complete, *n),
            GraphSpec::Star { n } => named(Family::Star, *n),
            GraphSpec::Ring { n } => named(Family::Ring, *n),
            GraphSpec::Line { n } => named(Family::Line, *n),
            GraphSpec::Tree { n } => named(Family::Tree, *n),
            GraphSpec::Cubic { n } => named(Family::Cubic, *n),
            GraphSpec::KRegularLattice { n, k } => named(Family::KRegularLattice { k: *k }, *n),
            GraphSpec::BipartiteComplete { p, q } => named(Family::BipartiteComplete { p: *p, q: *q }, p + q),
            GraphSpec::ErdosRenyi { n, p, seed } => {
                build_random(RandomModel::ErdosRenyi { n: *n, p: *p }, seed.unwrap_or(master_seed))
            }
            GraphSpec::Geometric { n, radius, seed } => {
                build_random(RandomModel::Geometric { n: *n, radius: *radius }, seed.unwrap_or(master_seed))
            }
            GraphSpec::File { path } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::Config(format!("cannot read graph file {}: {e}", full.display())))?;
                Graph::parse_edge_list(&text)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            GraphSpec::ErdosRenyi { n, p, .. } => format!("erdos_renyi(n={n},p={p})"),
            GraphSpec::Geometric { n, radius, .. } => format!("geometric(n={n},radius={radius})"),
            GraphSpec::File { path } => format!("file({})", path.display()),
            GraphSpec::KRegularLattice { n, k } => format!("k_regular_lattice(n={n},k={k})"),
            GraphSpec::BipartiteComplete { p, q } => format!("bipartite_complete(p={p},q={q})"),
            GraphSpec::Complete { n }
            | GraphSpec::Star { n }
            | GraphSpec::Ring { n }
            | GraphSpec::Line { n }
            | GraphSpec::Tree { n }
            | GraphSpec::Cubic { n } => {
                let kind = serde_json::to_value(self).ok().and_then(|v| v["kind"].as_str().map(String::from));
                format!("{}(n={n})", kind.unwrap_or_default())
            }
        }
    }
}

/// Transmit map. Power is given either linearly (`power`) or in dB (`power_db`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HSpec {
    #[default]
    Identity,
    ScaledAtan { power: Option<f64>, power_db: Option<f64>, slope: f64 },
    TanhScaled { power: Option<f64>, power_db: Option<f64>, slope: f64 },
    LinearClip { power: Option<f64>, power_db: Option<f64> },
}

fn resolve_power(power: Option<f64>, power_db: Option<f64>) -> Result<f64> {
    match (power, power_db) {
        (Some(p), None) => Ok(p),
        (None, Some(db)) => Ok(db_to_linear(db)),
        _ => Err(Error::Config("transmit map needs exactly one of `power` or `power_db`".into())),
    }
}

impl HSpec {
    pub fn resolve(&self) -> Result<TransmitMap> {
        let h = match *self {
            HSpec::Identity => TransmitMap::Identity,
            HSpec::ScaledAtan { power, power_db, slope } => TransmitMap::ScaledAtan {
                power: resolve_power(power, power_db)?,
                slope,
            },
            HSpec::TanhScaled { power, power_db, slope } => TransmitMap::TanhScaled {
                power: resolve_power(power, power_db)?,
                slope,
            },
            HSpec::LinearClip { power, power_db } => TransmitMap::LinearClip {
                power: resolve_power(power, power_db)?,
            },
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FKind {
    Identity,
    Tanh,
    Rational,
    Atan,
}

/// Receive map `amplitude * shape(slope * x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FSpec {
    pub kind: FKind,
    #[serde(default = "one")]
    pub slope: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

impl Default for FSpec {
    fn default() -> Self {
        Self { kind: FKind::Identity, slope: 1.0, amplitude: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

impl FSpec {
    pub fn resolve(&self) -> Result<ReceiveMap> {
        let s = self.slope;
        let shape = match self.kind {
            FKind::Identity => ReceiveShape::Identity,
            FKind::Tanh => ReceiveShape::Tanh { slope: s },
            FKind::Rational => ReceiveShape::Rational { slope: s },
            FKind::Atan => ReceiveShape::Atan { slope: s },
        };
        let f = ReceiveMap { shape, amplitude: self.amplitude };
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingSpec {
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "zero_noise")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub initial: InitialMode,
    pub fixed_initials: Option<Vec<f64>>,
}

fn zero_noise() -> NoiseModel {
    NoiseModel::Zero
}

impl Default for SensingSpec {
    fn default() -> Self {
        Self { theta: 0.0, noise: NoiseModel::Zero, initial: InitialMode::PerTrial, fixed_initials: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKeyword {
    Optimal,
}

/// Step gain `a`: a positive number or `"optimal"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Fixed(f64),
    Keyword(GainKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub a: GainSpec,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { a: GainSpec::Fixed(1.0) }
    }
}

/// Monte-Carlo budget for noise laws without a usable density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub draws: usize,
    pub sup_var_draws: usize,
    pub seed: u64,
}

impl Default for McSpec {
    fn default() -> Self {
        let d = McSettings::default();
        Self { draws: d.draws, sup_var_draws: d.sup_var_draws, seed: d.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub trials: usize,
    pub t_max: usize,
    /// Recorded iterations; every iteration when absent.
    pub checkpoints: Option<Vec<usize>>,
    pub output: Option<PathBuf>,
    pub graph: GraphSpec,
    #[serde(default)]
    pub h: HSpec,
    #[serde(default)]
    pub f: FSpec,
    pub noise: NoiseModel,
    #[serde(default)]
    pub sensing: SensingSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub mc: McSpec,
}

fn one_usize() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if let Some(cps) = &self.checkpoints {
            if let Some(bad) = cps.iter().find(|&&t| t == 0 || t > self.t_max) {
                return Err(Error::Config(format!("checkpoint {bad} outside [1, {}]", self.t_max)));
            }
        }
        if let GainSpec::Fixed(a) = self.schedule.a {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("schedule.a must be positive, got {a}")));
            }
        }
        if self.mc.draws < 2 || self.mc.sup_var_draws < 2 {
            return Err(Error::Config("mc draw counts must be at least 2".into()));
        }
        Ok(())
    }

    /// Lower-case hex SHA-256 of the canonical JSON serialisation.
    /// SHA-256 of the canonical JSON form; the output directory is not part of it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let json = serde_json::to_vec(&c).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn mc_settings(&self) -> McSettings {
        McSettings { draws: self.mc.draws, sup_var_draws: self.mc.sup_var_draws, seed: self.mc.seed }
    }

    pub fn plan(&self) -> CheckpointPlan {
        match &self.checkpoints {
            Some(c) => CheckpointPlan::At(c.clone()),
            None => CheckpointPlan::Every,
        }
    }

    /// Builds the graph and maps. `base_dir` anchors relative graph files.
    pub fn resolve(&self, base_dir: &Path) -> Result<Experiment> {
        self.validate()?;
        let graph = self.graph.build(self.seed, base_dir)?;
        let h = self.h.resolve()?;
        let f = self.f.resolve()?;
        self.noise.validate()?;
        let sensing = SensingConfig {
            theta: self.sensing.theta,
            sensing_noise: self.sensing.noise,
            fixed_initials: self.sensing.fixed_initials.clone(),
        };
        let shared = match self.sensing.initial {
            InitialMode::Shared => Some(initial_state(&sensing, graph.node_count(), &mut shared_sensing_stream(self.seed))?),
            InitialMode::PerTrial => None,
        };
        Ok(Experiment { config: self.clone(), graph, h, f, sensing, shared, functionals: None })
    }
}

/// A resolved configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub h: TransmitMap,
    pub f: ReceiveMap,
    pub sensing: SensingConfig,
    /// Initial state when all trials share one.
    pub shared: Option<InitialState>,
    functionals: Option<NoiseFunctionals>,
}

impl Experiment {
    /// The point `theta_0` at which `h'` is evaluated for the analysis: the
    /// mean of the shared initial state, or the sensing centre.
    pub fn theta0(&self) -> f64 {
        self.shared.as_ref().map_or(self.sensing.theta, |s| s.mean)
    }

    pub fn functionals(&mut self) -> Result<NoiseFunctionals> {
        if let Some(fx) = &self.functionals {
            return Ok(fx.clone());
        }
        let fx = functionals(&self.config.noise, &self.f, &self.config.mc_settings())?;
        self.functionals = Some(fx.clone());
        Ok(fx)
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        self.graph.spectrum()
    }

    /// The step gain, computing `a*` when requested.
    pub fn gain(&mut self) -> Result<f64> {
        match self.config.schedule.a {
            GainSpec::Fixed(a) => Ok(a),
            GainSpec::Keyword(GainKeyword::Optimal) => {
                let fx = self.functionals()?;
                let spectrum = self.spectrum()?;
                Ok(optimal_gain(&self.graph, &spectrum, &fx, &self.h, self.theta0())?.a_star)
            }
        }
    }

    pub fn system(&self) -> Result<RcSystem<'_>> {
        RcSystem::new(&self.graph, self.h, self.f, self.config.noise)
    }

    /// Ensemble description at gain `gain` (see [`Self::gain`]).
    pub fn ensemble_spec(&self, gain: f64) -> Result<EnsembleSpec<'_>> {
        Ok(EnsembleSpec {
            system: self.system()?,
            schedule: StepSchedule::new(gain)?,
            sensing: self.sensing.clone(),
            initial: self.config.sensing.initial,
            trials: self.config.trials,
            t_max: self.config.t_max,
            plan: self.config.plan(),
            seed: self.config.seed,
        })
    }

    pub fn report(&mut self) -> Result<AnalyticReport> {
        let gain = self.gain()?;
        let fx = self.functionals()?;
        analyze(&self.graph, &self.spectrum()?, &fx, &self.h, self.theta0(), gain)
    }

    pub fn covariance_model(&mut self) -> Result<CovarianceModel> {
        let gain = self.gain()?;
        let fx = self.functionals()?;
        CovarianceModel::new(&self.graph, &self.spectrum()?, &fx, &self.h, self.theta0(), gain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 7
trials = 10
t_max = 100
checkpoints = [10, 100]

[graph]
kind = "erdos_renyi"
n = 12
p = 0.4

[h]
kind = "scaled_atan"
power_db = 5.0
slope = 0.01

[f]
kind = "tanh"
slope = 5.0

[noise]
kind = "cauchy"
scale = 0.1

[sensing]
theta = 3.0
noise = { kind = "gaussian", sigma = 1.0 }
initial = "shared"

[schedule]
a = "optimal"
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(cfg.schedule.a, GainSpec::Keyword(GainKeyword::Optimal));
        let mut ex = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(ex.graph.node_count(), 12);
        match ex.h {
            TransmitMap::ScaledAtan { power, .. } => assert!((power - db_to_linear(5.0)).abs() < 1e-12),
            _ => panic!(),
        }
        assert!(ex.gain().unwrap() > 0.0);
        assert!(ex.shared.is_some());
    }

    #[test]
    fn round_trip_and_hash() {
        let cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
        let mut other = cfg.clone();
        other.seed = 8;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml("seed = 1").unwrap_err().is_config_error());
        let bad_cp = EXAMPLE.replace("[10, 100]", "[10, 101]");
        assert!(ExperimentConfig::from_toml(&bad_cp).is_err());
        let unknown = EXAMPLE.replace("slope = 5.0", "slope = 5.0\nsharpness = 2");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let bad_gain = EXAMPLE.replace("\"optimal\"", "\"best\"");
        assert!(ExperimentConfig::from_toml(&bad_gain).is_err());
        let both = EXAMPLE.replace("power_db = 5.0", "power_db = 5.0\npower = 2.0");
        let cfg = ExperimentConfig::from_toml(&both).unwrap();
        assert!(cfg.resolve(Path::new(".")).unwrap_err().is_config_error());
    }

    #[test]
    fn graph_file_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_named(Family::Star, 4).unwrap();
        std::fs::write(dir.path().join("g.txt"), g.to_edge_list()).unwrap();
        let spec = GraphSpec::File { path: "g.txt".into() };
        assert_eq!(spec.build(0, dir.path()).unwrap(), g);
    }
}
