//! Training, evaluation, ablation and regret runs, with their file outputs.

mod ablation;
mod output;
mod regret_run;
mod runner;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cognitive::{DependencyVariant, DEFAULT_BINS};
use crate::controller::{ControllerConfig, ControllerMode};
use crate::dialog::{DialogEnv, EpisodeConfig};
use crate::distill::{DEFAULT_CAPACITY, DEFAULT_PERIOD, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::ontology::{generate_goal, CorpusTurn, Ontology};
use crate::policy::{realize_all, ScriptedPolicy};

pub use ablation::{run_ablation, AblationRow, AblationTable, ABLATION_MODES};
pub use output::{EpochRow, EvalRow, TriggerRecord};
pub use regret_run::{run_regret, RegretReport, RegretRunConfig, SeedSlopes, SeedTraces};
pub use runner::{evaluate_run_dir, run_evaluation, run_many, run_training, Evaluation, RunResult, RunSummary};

/// Seeds used when a config names none.
pub const DEFAULT_SEEDS: [u64; 5] = [9841, 35741, 91324, 8134, 13924];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    #[default]
    Restaurant,
    Movie,
    Taxi,
    /// Restaurant, hotel, taxi and train, two domains per goal.
    Multi,
}

impl Scenario {
    pub fn domains(self) -> &'static [&'static str] {
        match self {
            Scenario::Restaurant => &["restaurant"],
            Scenario::Movie => &["movie"],
            Scenario::Taxi => &["taxi"],
            Scenario::Multi => &["restaurant", "hotel", "taxi", "train"],
        }
    }

    pub fn domains_per_goal(self) -> usize {
        match self {
            Scenario::Multi => 2,
            _ => 1,
        }
    }

    pub fn ontology(self) -> Result<Arc<Ontology>> {
        Ok(Arc::new(Ontology::builtin().subset(self.domains())?))
    }

    pub fn episode_config(self, seed: u64) -> EpisodeConfig {
        match self {
            Scenario::Multi => EpisodeConfig::multi_domain(seed),
            _ => EpisodeConfig::single_domain(seed),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Restaurant => "restaurant",
            Scenario::Movie => "movie",
            Scenario::Taxi => "taxi",
            Scenario::Multi => "multi",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restaurant" => Ok(Scenario::Restaurant),
            "movie" => Ok(Scenario::Movie),
            "taxi" => Ok(Scenario::Taxi),
            "multi" => Ok(Scenario::Multi),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected restaurant, movie, taxi or multi)"
            ))),
        }
    }
}

/// Where a policy comes from. Remote backends are written `tcp://host:port`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Tabular,
    Scripted,
    Planner,
    Remote(String),
}

impl BackendSpec {
    pub fn parse_fast(s: &str) -> Result<Self> {
        match Self::parse(s)? {
            BackendSpec::Planner => Err(Error::Config("'planner' cannot serve as the fast policy".into())),
            b => Ok(b),
        }
    }

    pub fn parse_deliberative(s: &str) -> Result<Self> {
        match Self::parse(s)? {
            b @ (BackendSpec::Planner | BackendSpec::Remote(_)) => Ok(b),
            _ => Err(Error::Config(format!("'{s}' cannot serve as the deliberative policy"))),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "tabular" => Ok(BackendSpec::Tabular),
            "scripted" => Ok(BackendSpec::Scripted),
            "planner" => Ok(BackendSpec::Planner),
            _ => match s.strip_prefix("tcp://") {
                Some(addr) if !addr.is_empty() => Ok(BackendSpec::Remote(addr.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown backend '{s}' (expected tabular, scripted, planner or tcp://host:port)"
                ))),
            },
        }
    }
}

/// Everything a training run needs. Missing fields take their defaults
/// when read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub eval_episodes: usize,
    /// Evaluate every this many epochs; the final epoch is always
    /// evaluated. 0 evaluates only at the end.
    pub eval_every: usize,
    pub seeds: Vec<u64>,
    pub mode: ControllerMode,
    pub s1_backend: String,
    pub s2_backend: String,
    pub tau: f64,
    pub kappa: f64,
    pub bins: u32,
    pub random_p: f64,
    pub distill_period: usize,
    pub distill_step: f64,
    pub buffer_capacity: usize,
    pub dependency: DependencyVariant,
    pub p_noise: f64,
    pub gamma: f64,
    /// Line-delimited corpus for the co-occurrence matrix. Without one, the
    /// corpus comes from scripted rollouts.
    pub corpus: Option<PathBuf>,
    pub corpus_episodes: usize,
    pub out_dir: Option<PathBuf>,
    /// Write full per-turn episode logs.
    pub log_episodes: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = ControllerConfig::default();
        RunConfig {
            scenario: Scenario::default(),
            epochs: 50,
            episodes_per_epoch: 100,
            eval_episodes: 100,
            eval_every: 10,
            seeds: DEFAULT_SEEDS.to_vec(),
            mode: ControllerMode::Full,
            s1_backend: "tabular".into(),
            s2_backend: "planner".into(),
            tau: c.tau,
            kappa: c.kappa,
            bins: DEFAULT_BINS,
            random_p: c.random_p,
            distill_period: DEFAULT_PERIOD,
            distill_step: DEFAULT_STEP,
            buffer_capacity: DEFAULT_CAPACITY,
            dependency: DependencyVariant::default(),
            p_noise: 0.0,
            gamma: 1.0,
            corpus: None,
            corpus_episodes: 200,
            out_dir: None,
            log_episodes: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            tau: self.tau,
            kappa: self.kappa,
            bins: self.bins,
            mode: self.mode,
            random_p: self.random_p,
        }
    }

    pub fn episode_config(&self, seed: u64) -> EpisodeConfig {
        EpisodeConfig {
            p_noise: self.p_noise,
            gamma: self.gamma,
            ..self.scenario.episode_config(seed)
        }
    }

    /// Checks every field, including backend names, before anything runs.
    pub fn validate(&self) -> Result<()> {
        BackendSpec::parse_fast(&self.s1_backend)?;
        BackendSpec::parse_deliberative(&self.s2_backend)?;
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".to_string());
        }
        if self.episodes_per_epoch == 0 {
            problems.push("episodes_per_epoch must be at least 1".to_string());
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required".to_string());
        }
        if self.buffer_capacity == 0 {
            problems.push("buffer_capacity must be at least 1".to_string());
        }
        if self.distill_period == 0 {
            problems.push("distill_period must be at least 1".to_string());
        }
        if !(self.distill_step >= 0.0 && self.distill_step.is_finite()) {
            problems.push(format!("distill_step must be >= 0, got {}", self.distill_step));
        }
        if let Err(Error::Validation(p)) = self.controller().validate() {
            problems.extend(p);
        }
        if let Err(Error::Validation(p)) = self.episode_config(0).validate() {
            problems.extend(p);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Directory of one (mode, seed) run under the output root.
    pub fn run_dir(&self, root: &Path, seed: u64) -> PathBuf {
        root.join(self.scenario.as_str())
            .join(self.mode.as_str())
            .join(format!("seed-{seed}"))
    }
}

/// Independent deterministic stream `stream` of a run's root seed.
/// Applies the keys of a TOML document on top of `base`. Keys present in
/// the document win; everything else keeps its value from `base`.
pub fn overlay_toml<T: Serialize + DeserializeOwned>(base: &T, text: &str) -> Result<T> {
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    let file: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    table.extend(file);
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const GOALS: u64 = 1;
    pub const CONTROLLER: u64 = 2;
    pub const S1: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const CORPUS: u64 = 5;
    pub const EVAL_CONTROLLER: u64 = 6;
}

/// Co-occurrence corpus from scripted dialogs: one record per turn holding
/// the slots with a value at that point.
pub fn scripted_corpus(scenario: Scenario, episodes: usize, seed: u64) -> Result<Vec<CorpusTurn>> {
    let ontology = scenario.ontology()?;
    let policy = ScriptedPolicy::new(ontology.clone());
    let mut rng = stream_rng(seed, streams::CORPUS);
    let mut turns = Vec::new();
    for _ in 0..episodes {
        let s = rng.next_u64();
        let goal = generate_goal(&ontology, s, scenario.domains_per_goal())?;
        let mut env = DialogEnv::reset(ontology.clone(), goal, scenario.episode_config(s))?;
        while !env.is_done() {
            let acts = realize_all(&policy.decide(env.belief()).acts, env.belief(), &ontology);
            env.step(&acts)?;
            turns.push(CorpusTurn::new(env.belief().active_slot_ids()));
        }
    }
    Ok(turns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_override_base() {
        let base = RunConfig {
            epochs: 7,
            tau: 2.0,
            out_dir: Some(PathBuf::from("from-flags")),
            ..RunConfig::default()
        };
        let c = overlay_toml(&base, "tau = 0.5\nmode = \"no_CC\"\nout_dir = \"from-file\"\n").unwrap();
        assert_eq!(c.epochs, 7);
        assert_eq!(c.tau, 0.5);
        assert_eq!(c.mode, ControllerMode::NoCc);
        assert_eq!(c.out_dir, Some(PathBuf::from("from-file")));
        assert!(matches!(overlay_toml(&base, "bogus = 1"), Err(Error::Config(_))));
        let r = overlay_toml(&RegretRunConfig::default(), "arms = 6").unwrap();
        assert_eq!(r.arms, 6);
    }

    #[test]
    fn toml_overrides_defaults() {
        let c = RunConfig::from_toml("scenario = \"taxi\"\nmode = \"no_EC\"\nseeds = [1, 2]\n").unwrap();
        assert_eq!(c.scenario, Scenario::Taxi);
        assert_eq!(c.mode, ControllerMode::NoEc);
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.epochs, 50);
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn backends_are_checked_up_front() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        c.s1_backend = "gpt".into();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.s1_backend = "planner".into();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.s1_backend = "tcp://127.0.0.1:9000".into();
        c.s2_backend = "tabular".into();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!("nowhere".parse::<Scenario>().is_err());
    }

    #[test]
    fn corpus_is_deterministic_and_resolvable() {
        let a = scripted_corpus(Scenario::Multi, 5, 3).unwrap();
        assert_eq!(a, scripted_corpus(Scenario::Multi, 5, 3).unwrap());
        let o = Scenario::Multi.ontology().unwrap();
        assert!(a.iter().flat_map(|t| &t.slots).all(|s| o.resolves(s)));
    }
}
