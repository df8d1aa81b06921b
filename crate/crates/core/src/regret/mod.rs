//! Empirical regret: a synthetic contextual bandit whose arm means are
//! Lipschitz in the cognitive state, count-based and uniform explorers on
//! it, regret of logged dialogs against a reference policy, and log-log
//! slope fitting.

mod bandit;
mod dialog;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bandit::{
    make_lipschitz_env, run_count_explorer, run_uniform, Bump, SyntheticBanditEnv,
};
pub use dialog::empirical_regret_dialog;

/// Settings for regret estimation on logged dialogs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretConfig {
    pub horizon: usize,
    pub gamma: f64,
    pub episodes_per_state: usize,
    pub seed: u64,
}

impl Default for RegretConfig {
    fn default() -> Self {
        RegretConfig {
            horizon: 100_000,
            gamma: 1.0,
            episodes_per_state: 16,
            seed: 0,
        }
    }
}

impl RegretConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.horizon == 0 {
            problems.push("horizon must be at least 1".to_string());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if self.episodes_per_state == 0 {
            problems.push("episodes_per_state must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegretTrace {
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn from_instant(instant: Vec<f64>) -> Self {
        let mut total = 0.0;
        let cumulative = instant
            .iter()
            .map(|r| {
                total += r;
                total
            })
            .collect();
        RegretTrace { instant, cumulative }
    }

    pub fn len(&self) -> usize {
        self.instant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instant.is_empty()
    }

    /// `R(t)` for 1-based `t`.
    pub fn at(&self, t: usize) -> f64 {
        self.cumulative[t - 1]
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Constant `c` making `c * sqrt(3 t)` touch the curve from above over
    /// `t` in `[t_min, 10 t_min]`.
    pub fn bound_constant(&self, t_min: usize) -> Result<f64> {
        let t_min = t_min.max(1);
        let t_max = (10 * t_min).min(self.len());
        if t_min > t_max {
            return Err(Error::Input(format!(
                "trace of length {} has no decade starting at {t_min}",
                self.len()
            )));
        }
        Ok((t_min..=t_max)
            .map(|t| self.at(t) / (3.0 * t as f64).sqrt())
            .fold(0.0, f64::max))
    }

    /// Two columns, `t` and `R(t)`, every `stride` steps plus the last.
    pub fn to_tsv(&self, stride: usize) -> String {
        let stride = stride.max(1);
        let mut s = String::from("t\tregret\n");
        for (i, r) in self.cumulative.iter().enumerate() {
            let t = i + 1;
            if t % stride == 0 || t == self.len() {
                let _ = writeln!(s, "{t}\t{r}");
            }
        }
        s
    }
}

/// Least-squares slope of `ln R(t)` against `ln t` over `t` in
/// `[t_min, t_max]`. Points are taken on a logarithmic grid (50 per
/// decade) so every decade weighs the same.
pub fn fit_loglog_slope(trace: &RegretTrace, t_min: usize, t_max: usize) -> Result<f64> {
    if t_min == 0 || t_min >= t_max || t_max > trace.len() {
        return Err(Error::Input(format!(
            "window [{t_min}, {t_max}] does not fit a trace of length {}",
            trace.len()
        )));
    }
    let (lo, hi) = ((t_min as f64).ln(), (t_max as f64).ln());
    let n = ((hi - lo) / std::f64::consts::LN_10 * 50.0).ceil().max(2.0) as usize;
    let mut ts: Vec<usize> = (0..=n)
        .map(|k| (lo + (hi - lo) * k as f64 / n as f64).exp().round() as usize)
        .map(|t| t.clamp(t_min, t_max))
        .collect();
    ts.dedup();
    let mut xs = Vec::with_capacity(ts.len());
    let mut ys = Vec::with_capacity(ts.len());
    for t in ts {
        let r = trace.at(t);
        if !(r > 0.0) {
            return Err(Error::Input(format!("regret at t = {t} is {r}, not positive")));
        }
        xs.push((t as f64).ln());
        ys.push(r.ln());
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
