use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{create_dir, write_json, write_text};
use super::DEFAULT_SEEDS;
use crate::cognitive::DEFAULT_BINS;
use crate::error::{Error, Result};
use crate::regret::{
    fit_loglog_slope, make_lipschitz_env, run_count_explorer, run_uniform, RegretTrace, SyntheticBanditEnv,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretRunConfig {
    pub arms: usize,
    pub lipschitz: f64,
    pub noise: f64,
    pub walk_step: f64,
    pub bins: u32,
    pub bonus_scale: f64,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    /// Slope window; the bound constant is fit on `[fit_min, 10 fit_min]`.
    pub fit_min: usize,
    pub fit_max: usize,
    /// Row spacing of the exported traces.
    pub trace_stride: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for RegretRunConfig {
    fn default() -> Self {
        RegretRunConfig {
            arms: SyntheticBanditEnv::DEFAULT_ARMS,
            lipschitz: SyntheticBanditEnv::DEFAULT_LIPSCHITZ,
            noise: SyntheticBanditEnv::DEFAULT_NOISE,
            walk_step: SyntheticBanditEnv::DEFAULT_WALK_STEP,
            bins: DEFAULT_BINS,
            bonus_scale: SyntheticBanditEnv::DEFAULT_BONUS_SCALE,
            horizon: 100_000,
            seeds: DEFAULT_SEEDS.to_vec(),
            fit_min: 1_000,
            fit_max: 100_000,
            trace_stride: 100,
            out_dir: None,
        }
    }
}

impl RegretRunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.arms < 2 {
            problems.push(format!("arms must be at least 2, got {}", self.arms));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            problems.push(format!("lipschitz must be >= 0, got {}", self.lipschitz));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            problems.push(format!("noise must be >= 0, got {}", self.noise));
        }
        if self.bins == 0 {
            problems.push("bins must be at least 1".into());
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required".into());
        }
        if self.fit_min == 0 || self.fit_min >= self.fit_max || self.fit_max > self.horizon {
            problems.push(format!(
                "slope window [{}, {}] must satisfy 0 < fit_min < fit_max <= horizon ({})",
                self.fit_min, self.fit_max, self.horizon
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn env(&self, seed: u64) -> Result<SyntheticBanditEnv> {
        let mut env = make_lipschitz_env(self.arms, self.lipschitz, seed)?;
        env.noise = self.noise;
        env.walk_step = self.walk_step;
        Ok(env)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSlopes {
    pub seed: u64,
    pub explorer_slope: f64,
    pub uniform_slope: f64,
    pub explorer_regret: f64,
    pub uniform_regret: f64,
    /// `c` in `c * sqrt(3 t)`, fit on the first decade of the window.
    pub bound_constant: f64,
    /// Steps after the first decade where the explorer's regret exceeds
    /// the bound curve.
    pub bound_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub config: RegretRunConfig,
    pub seeds: Vec<SeedSlopes>,
}

#[derive(Debug, Clone)]
pub struct SeedTraces {
    pub explorer: RegretTrace,
    pub uniform: RegretTrace,
}

fn one_seed(config: &RegretRunConfig, seed: u64) -> Result<(SeedSlopes, SeedTraces)> {
    let env = config.env(seed)?;
    let explorer = run_count_explorer(&env, config.horizon, config.bins, config.bonus_scale);
    let uniform = run_uniform(&env, config.horizon);
    let c = explorer.bound_constant(config.fit_min)?;
    let bound_violations = (10 * config.fit_min..=config.horizon)
        .filter(|&t| explorer.at(t) > c * (3.0 * t as f64).sqrt())
        .count();
    let slopes = SeedSlopes {
        seed,
        explorer_slope: fit_loglog_slope(&explorer, config.fit_min, config.fit_max)?,
        uniform_slope: fit_loglog_slope(&uniform, config.fit_min, config.fit_max)?,
        explorer_regret: explorer.total(),
        uniform_regret: uniform.total(),
        bound_constant: c,
        bound_violations,
    };
    Ok((slopes, SeedTraces { explorer, uniform }))
}

/// Explorer and uniform baseline on every seed, in parallel. With an
/// output root, writes two trace files per seed and `regret_report.json`.
pub fn run_regret(config: &RegretRunConfig) -> Result<RegretReport> {
    config.validate()?;
    let per_seed: Vec<(SeedSlopes, SeedTraces)> = config
        .seeds
        .par_iter()
        .map(|&seed| one_seed(config, seed))
        .collect::<Result<_>>()?;
    if let Some(root) = &config.out_dir {
        write_traces(config, root, &per_seed)?;
    }
    let report = RegretReport {
        config: config.clone(),
        seeds: per_seed.into_iter().map(|(s, _)| s).collect(),
    };
    if let Some(root) = &config.out_dir {
        write_json(&root.join("regret_report.json"), &report)?;
    }
    Ok(report)
}

fn write_traces(config: &RegretRunConfig, root: &Path, per_seed: &[(SeedSlopes, SeedTraces)]) -> Result<()> {
    create_dir(root)?;
    for (s, t) in per_seed {
        let stride = config.trace_stride;
        write_text(&root.join(format!("regret-explorer-seed-{}.tsv", s.seed)), &t.explorer.to_tsv(stride))?;
        write_text(&root.join(format!("regret-uniform-seed-{}.tsv", s.seed)), &t.uniform.to_tsv(stride))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_writes_files_and_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let config = RegretRunConfig {
            horizon: 2_000,
            fit_min: 100,
            fit_max: 2_000,
            seeds: vec![4],
            out_dir: Some(dir.path().to_path_buf()),
            ..RegretRunConfig::default()
        };
        let a = run_regret(&config).unwrap();
        let first = std::fs::read_to_string(dir.path().join("regret-explorer-seed-4.tsv")).unwrap();
        assert!(dir.path().join("regret-uniform-seed-4.tsv").exists());
        let report = std::fs::read_to_string(dir.path().join("regret_report.json")).unwrap();
        assert!(report.contains("explorer_slope") && report.contains("uniform_slope"));
        let b = run_regret(&config).unwrap();
        assert_eq!(a, b);
        let second = std::fs::read_to_string(dir.path().join("regret-explorer-seed-4.tsv")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn bad_window_is_rejected() {
        let config = RegretRunConfig {
            horizon: 500,
            ..RegretRunConfig::default()
        };
        assert!(matches!(run_regret(&config), Err(Error::Validation(_))));
    }
}
