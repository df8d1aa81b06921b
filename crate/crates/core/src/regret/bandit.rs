use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RegretTrace;
use crate::cognitive::{discretize, CognitiveState};
use crate::error::{Error, Result};

/// Gaussian bump `height * exp(-|c - center|^2 / (2 width^2))`. Its
/// steepest slope is `|height| / (width * sqrt(e))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 3],
    pub width: f64,
    pub height: f64,
}

impl Bump {
    pub fn value(&self, c: &[f64; 3]) -> f64 {
        let r2: f64 = c.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        self.height * (-r2 / (2.0 * self.width * self.width)).exp()
    }

    pub fn max_slope(&self) -> f64 {
        self.height.abs() / (self.width * std::f64::consts::E.sqrt())
    }
}

/// Contextual bandit over `[0, 1]^3`. Each arm's mean is a constant offset
/// plus a sum of bumps whose slopes add up to the Lipschitz constant, so
/// `|mean(c, a) - mean(c', a)| <= lipschitz * |c - c'|`. Contexts follow a
/// reflecting Gaussian random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBanditEnv {
    pub arms: usize,
    pub lipschitz: f64,
    pub noise: f64,
    pub walk_step: f64,
    pub offsets: Vec<f64>,
    pub bumps: Vec<Vec<Bump>>,
    pub seed: u64,
}

impl SyntheticBanditEnv {
    pub const BUMPS_PER_ARM: usize = 4;
    pub const DEFAULT_NOISE: f64 = 0.1;
    pub const DEFAULT_WALK_STEP: f64 = 0.05;
    pub const DEFAULT_ARMS: usize = 4;
    pub const DEFAULT_LIPSCHITZ: f64 = 2.0;
    /// Twice the default noise scale.
    pub const DEFAULT_BONUS_SCALE: f64 = 0.2;

    pub fn mean(&self, c: &[f64; 3], arm: usize) -> f64 {
        self.offsets[arm] + self.bumps[arm].iter().map(|b| b.value(c)).sum::<f64>()
    }

    pub fn means(&self, c: &[f64; 3]) -> Vec<f64> {
        (0..self.arms).map(|a| self.mean(c, a)).collect()
    }

    pub fn best_mean(&self, c: &[f64; 3]) -> f64 {
        self.means(c).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of bump slopes for one arm; never above `lipschitz`.
    pub fn slope_bound(&self, arm: usize) -> f64 {
        self.bumps[arm].iter().map(Bump::max_slope).sum()
    }

    /// The context sequence of a run: a fixed function of the seed.
    pub fn contexts(&self, steps: usize) -> impl Iterator<Item = [f64; 3]> + '_ {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_c0de);
        let mut c = [0.5; 3];
        (0..steps).map(move |_| {
            let out = c;
            for x in &mut c {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = reflect(*x + self.walk_step * z);
            }
            out
        })
    }
}

fn reflect(mut x: f64) -> f64 {
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > 1.0 {
            x = 2.0 - x;
        } else {
            return x;
        }
    }
}

pub fn make_lipschitz_env(arms: usize, lipschitz: f64, seed: u64) -> Result<SyntheticBanditEnv> {
    if arms < 2 {
        return Err(Error::Argument(format!("need at least 2 arms, got {arms}")));
    }
    if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
        return Err(Error::Argument(format!("Lipschitz constant must be >= 0, got {lipschitz}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets = Vec::with_capacity(arms);
    let mut bumps = Vec::with_capacity(arms);
    for _ in 0..arms {
        offsets.push(rng.random_range(0.4..0.6));
        let mut arm: Vec<Bump> = (0..SyntheticBanditEnv::BUMPS_PER_ARM)
            .map(|_| {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Bump {
                    center: [rng.random(), rng.random(), rng.random()],
                    width: rng.random_range(0.15..0.35),
                    height: sign * rng.random_range(0.5..1.0),
                }
            })
            .collect();
        let slope: f64 = arm.iter().map(Bump::max_slope).sum();
        for b in &mut arm {
            b.height *= lipschitz / slope;
        }
        bumps.push(arm);
    }
    Ok(SyntheticBanditEnv {
        arms,
        lipschitz,
        noise: SyntheticBanditEnv::DEFAULT_NOISE,
        walk_step: SyntheticBanditEnv::DEFAULT_WALK_STEP,
        offsets,
        bumps,
        seed,
    })
}

fn cell_index(c: &[f64; 3], bins: u32) -> usize {
    let b = discretize(&CognitiveState::new(c[0], c[1], c[2]), bins);
    let n = bins.max(1) as usize;
    (b.d as usize * n + b.u as usize) * n + b.rho as usize
}

/// Per-cell optimistic explorer: in each cell it first tries every arm
/// once (uniformly among the untried), then picks the arm maximizing
/// `empirical mean + bonus_scale * sqrt(ln t / n)`.
pub fn run_count_explorer(
    env: &SyntheticBanditEnv,
    steps: usize,
    bins: u32,
    bonus_scale: f64,
) -> RegretTrace {
    let cells = (bins.max(1) as usize).pow(3);
    let k = env.arms;
    let mut counts = vec![0u64; cells * k];
    let mut sums = vec![0.0f64; cells * k];
    let mut rng = ChaCha8Rng::seed_from_u64(env.seed ^ 0xa11c_e5ed);
    let noise = Normal::new(0.0, env.noise.max(0.0)).expect("finite noise");
    let mut instant = Vec::with_capacity(steps);
    let mut untried = Vec::with_capacity(k);
    for (i, c) in env.contexts(steps).enumerate() {
        let t = (i + 1) as f64;
        let base = cell_index(&c, bins) * k;
        untried.clear();
        untried.extend((0..k).filter(|a| counts[base + a] == 0));
        let arm = if !untried.is_empty() {
            untried[rng.random_range(0..untried.len())]
        } else {
            let score = |a: usize| {
                let n = counts[base + a] as f64;
                sums[base + a] / n + bonus_scale * (t.ln() / n).sqrt()
            };
            (1..k).fold(0, |best, a| if score(a) > score(best) { a } else { best })
        };
        let means = env.means(&c);
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        instant.push(best - means[arm]);
        counts[base + arm] += 1;
        sums[base + arm] += means[arm] + noise.sample(&mut rng);
    }
    RegretTrace::from_instant(instant)
}

/// Uniformly random arm at every step, on the same contexts.
pub fn run_uniform(env: &SyntheticBanditEnv, steps: usize) -> RegretTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(env.seed ^ 0x0f0f_0f0f);
    let instant = env
        .contexts(steps)
        .map(|c| {
            let means = env.means(&c);
            let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            best - means[rng.random_range(0..env.arms)]
        })
        .collect();
    RegretTrace::from_instant(instant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lipschitz_is_constant() {
        let env = make_lipschitz_env(2, 0.0, 3).unwrap();
        let a = env.means(&[0.1, 0.2, 0.3]);
        let b = env.means(&[0.9, 0.8, 0.7]);
        assert_eq!(a, b);
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(make_lipschitz_env(4, 1.0, 9).unwrap(), make_lipschitz_env(4, 1.0, 9).unwrap());
        assert!(make_lipschitz_env(1, 1.0, 9).is_err());
    }

    #[test]
    fn lipschitz_spot_check() {
        let env = make_lipschitz_env(4, 1.5, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let c: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let d: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let dist = c.iter().zip(&d).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            for a in 0..env.arms {
                worst = worst.max((env.mean(&c, a) - env.mean(&d, a)).abs() / dist);
            }
        }
        assert!(worst <= 1.5, "ratio {worst}");
        for a in 0..env.arms {
            assert!((env.slope_bound(a) - 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn contexts_stay_in_cube() {
        let env = make_lipschitz_env(2, 1.0, 0).unwrap();
        assert!(env.contexts(5000).all(|c| c.iter().all(|x| (0.0..=1.0).contains(x))));
    }

    #[test]
    fn first_step_regret_is_a_uniform_pull() {
        let env = make_lipschitz_env(3, 1.0, 5).unwrap();
        let t = run_count_explorer(&env, 1, 5, 1.0);
        assert_eq!(t.len(), 1);
        let c = [0.5; 3];
        let means = env.means(&c);
        let best = env.best_mean(&c);
        assert!(means.iter().any(|m| (best - m - t.instant[0]).abs() < 1e-12));
    }

    #[test]
    fn constant_gap_regret_plateaus() {
        // noiseless, arm 0 always 1.0 and arm 1 always 0.0
        let mut env = make_lipschitz_env(2, 0.0, 0).unwrap();
        env.noise = 0.0;
        env.offsets = vec![1.0, 0.0];
        let bins = 2;
        let t = run_count_explorer(&env, 5000, bins, 0.1);
        assert!(t.instant.iter().all(|r| *r >= 0.0));
        // brute-force count of bad pulls equals the regret
        let bad = t.instant.iter().filter(|r| **r > 0.0).count();
        assert_eq!(t.total(), bad as f64);
        let cells = 8.0;
        assert!(t.total() <= cells * 2.0 + t.at(1000).max(0.0));
        assert_eq!(t.at(5000), t.at(2500));
    }
}
