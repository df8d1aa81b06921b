use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::output::{create_dir, write_json, write_text};
use super::{run_many, RunConfig};
use crate::controller::ControllerMode;
use crate::error::Result;

/// Rows of the ablation table, in order.
pub const ABLATION_MODES: [ControllerMode; 5] = [
    ControllerMode::Full,
    ControllerMode::Random,
    ControllerMode::NoEc,
    ControllerMode::NoCc,
    ControllerMode::S1Only,
];

fn label(mode: ControllerMode) -> &'static str {
    match mode {
        ControllerMode::Full => "full",
        ControllerMode::Random => "w/o MC (random 10%)",
        ControllerMode::NoEc => "w/o EC",
        ControllerMode::NoCc => "w/o CC",
        ControllerMode::S1Only => "System 1 only",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: ControllerMode,
    pub label: String,
    /// Final evaluation success (percent) per seed, in seed order.
    pub success: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd: f64,
    pub s2_rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, mode: ControllerMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("variant");
        for seed in &self.seeds {
            let _ = write!(s, "\tseed-{seed}");
        }
        s.push_str("\tmean\tsd\n");
        for r in &self.rows {
            s.push_str(&r.label);
            for v in &r.success {
                let _ = write!(s, "\t{v:.2}");
            }
            let _ = writeln!(s, "\t{:.2}\t{:.2}", r.mean, r.sd);
        }
        s
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Every ablation mode on every seed of `config`, runs in parallel.
/// Writes `ablation.tsv` and `ablation.json` under the output root when one
/// is set, next to each run's own files.
pub fn run_ablation(config: &RunConfig) -> Result<AblationTable> {
    let jobs: Vec<(RunConfig, u64)> = ABLATION_MODES
        .iter()
        .flat_map(|&mode| {
            config.seeds.iter().map(move |&seed| {
                let mut c = config.clone();
                c.mode = mode;
                (c, seed)
            })
        })
        .collect();
    let results = run_many(&jobs)?;
    let per_mode = config.seeds.len();
    let rows = ABLATION_MODES
        .iter()
        .zip(results.chunks(per_mode))
        .map(|(&mode, runs)| {
            let success: Vec<f64> = runs.iter().map(|r| r.summary.final_eval.success).collect();
            let (mean, sd) = mean_sd(&success);
            AblationRow {
                mode,
                label: label(mode).into(),
                success,
                mean,
                sd,
                s2_rate: runs.iter().map(|r| r.summary.s2_rate).collect(),
            }
        })
        .collect();
    let table = AblationTable {
        scenario: config.scenario.as_str().into(),
        seeds: config.seeds.clone(),
        rows,
    };
    if let Some(root) = &config.out_dir {
        write_table(&table, root)?;
    }
    Ok(table)
}

fn write_table(table: &AblationTable, root: &Path) -> Result<()> {
    create_dir(root)?;
    write_text(&root.join("ablation.tsv"), &table.to_tsv())?;
    write_json(&root.join("ablation.json"), table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        let (m, sd) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        // sum of squared deviations is 32 over 7 degrees of freedom
        assert!((sd - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn table_shape() {
        let config = RunConfig {
            epochs: 1,
            episodes_per_epoch: 2,
            eval_episodes: 2,
            seeds: vec![1, 2],
            corpus_episodes: 5,
            log_episodes: false,
            ..RunConfig::default()
        };
        let t = run_ablation(&config).unwrap();
        assert_eq!(t.rows.len(), 5);
        assert!(t.rows.iter().all(|r| r.success.len() == 2));
        let tsv = t.to_tsv();
        assert_eq!(tsv.lines().count(), 6);
        assert!(tsv.starts_with("variant\tseed-1\tseed-2\tmean\tsd\n"));
    }
}
