use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FastPolicy, LearnOutcome, PolicyAction, S1Request};
use crate::dialog::{BeliefState, DialogAct};
use crate::distill::DistillRecord;
use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub state: String,
    pub action: DialogAct,
    pub logit: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TabularWeights {
    pub entries: Vec<WeightEntry>,
}

impl TabularWeights {
    /// Softmax probability of `action` among `available` in `state`,
    /// recomputed from the exported entries alone.
    pub fn probability(&self, state: &str, action: &DialogAct, available: &[DialogAct]) -> f64 {
        let logit = |a: &DialogAct| {
            self.entries
                .iter()
                .find(|e| e.state == state && e.action == a.template())
                .map_or(0.0, |e| e.logit)
        };
        let logits: Vec<f64> = available.iter().map(logit).collect();
        let probs = softmax(&logits);
        available
            .iter()
            .position(|a| a.template() == action.template())
            .map_or(0.0, |i| probs[i])
    }
}

/// Softmax policy over act templates with one logit per (belief status
/// signature, template). Unseen pairs have logit 0, so a fresh policy is
/// uniform. Ties at the maximum are broken at random.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    logits: BTreeMap<String, BTreeMap<DialogAct, f64>>,
    rng: ChaCha8Rng,
}

impl TabularPolicy {
    pub fn new(seed: u64) -> Self {
        TabularPolicy {
            logits: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn logit(&self, state: &str, action: &DialogAct) -> f64 {
        self.logits
            .get(state)
            .and_then(|m| m.get(&action.template()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set_logit(&mut self, state: &str, action: &DialogAct, logit: f64) {
        self.logits
            .entry(state.to_string())
            .or_default()
            .insert(action.template(), logit);
    }

    pub fn distribution(&self, state: &str, available: &[DialogAct]) -> Vec<f64> {
        let logits: Vec<f64> = available.iter().map(|a| self.logit(state, a)).collect();
        softmax(&logits)
    }

    pub fn probability(&self, belief: &BeliefState, action: &DialogAct, available: &[DialogAct]) -> f64 {
        let key = belief.status_key();
        let probs = self.distribution(&key, available);
        available
            .iter()
            .position(|a| a.template() == action.template())
            .map_or(0.0, |i| probs[i])
    }

    pub fn states(&self) -> usize {
        self.logits.len()
    }

    pub fn weights(&self) -> TabularWeights {
        let entries = self
            .logits
            .iter()
            .flat_map(|(state, m)| {
                m.iter().map(move |(action, logit)| WeightEntry {
                    state: state.clone(),
                    action: action.clone(),
                    logit: *logit,
                })
            })
            .collect();
        TabularWeights { entries }
    }

    pub fn load_weights(&mut self, weights: &TabularWeights) {
        self.logits.clear();
        for e in &weights.entries {
            self.set_logit(&e.state, &e.action, e.logit);
        }
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.weights()).expect("weights serialize");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Adds `step` to the logit of every distinct stored (state, action)
    /// pair. Each pair is bumped once per pass however often it was stored,
    /// which keeps every stored pair's probability from dropping.
    pub fn distill_pass(&mut self, records: &[DistillRecord], step: f64) {
        let pairs: BTreeSet<(String, DialogAct)> = records
            .iter()
            .flat_map(|r| {
                let key = r.state.status_key();
                r.action.iter().map(move |a| (key.clone(), a.template()))
            })
            .collect();
        for (state, action) in pairs {
            let l = self.logit(&state, &action);
            self.set_logit(&state, &action, l + step);
        }
    }
}

impl FastPolicy for TabularPolicy {
    fn identity(&self) -> String {
        "tabular".into()
    }

    fn infer(&mut self, request: &S1Request) -> Result<PolicyAction> {
        let available = &request.available_actions;
        if available.is_empty() {
            return Err(Error::Argument("no available actions".into()));
        }
        let key = request.belief_state.status_key();
        let probs = self.distribution(&key, available);
        let best = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] == best).collect();
        let i = *tied.choose(&mut self.rng).expect("at least one action");
        Ok(PolicyAction {
            acts: vec![available[i].template()],
            confidence: probs[i],
        })
    }

    fn learn(&mut self, records: &[DistillRecord], step: f64) -> Result<LearnOutcome> {
        if records.is_empty() {
            return Ok(LearnOutcome::Unsupported);
        }
        self.distill_pass(records, step);
        Ok(LearnOutcome::Updated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::Ontology;
    use crate::policy::available_actions;
    use proptest::prelude::*;

    fn setup() -> (BeliefState, Vec<DialogAct>) {
        let o = Ontology::builtin().subset(&["restaurant"]).unwrap();
        (BeliefState::empty(&o), available_actions(&o))
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, 3.0, 1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[3] > 0.999);
    }

    #[test]
    fn dominant_action_and_confidence() {
        let (b, avail) = setup();
        let mut p = TabularPolicy::new(0);
        let key = b.status_key();
        // logit giving probability 0.9 against 13 zero-logit rivals:
        // e^x / (e^x + 13) = 0.9  =>  x = ln(117)
        let x = 117f64.ln();
        p.set_logit(&key, &avail[2], x);
        let a = p.infer(&S1Request::new(&b, &avail)).unwrap();
        assert_eq!(a.acts, vec![avail[2].clone()]);
        assert!((a.confidence - 0.9).abs() < 1e-12);
        let w = p.weights();
        assert_eq!(w.probability(&key, &avail[2], &avail), a.confidence);
    }

    #[test]
    fn fresh_policy_is_uniform() {
        let (b, avail) = setup();
        let mut p = TabularPolicy::new(1);
        let a = p.infer(&S1Request::new(&b, &avail)).unwrap();
        assert!((a.confidence - 1.0 / avail.len() as f64).abs() < 1e-12);
    }

    fn record(b: &BeliefState, a: &DialogAct) -> DistillRecord {
        DistillRecord {
            state: b.clone(),
            action: vec![a.clone()],
            p_self: 0.95,
        }
    }

    proptest! {
        #[test]
        fn distill_pass_never_lowers_stored_pairs(
            init in prop::collection::vec(-3.0f64..3.0, 14),
            stored in prop::collection::vec(0usize..14, 1..20),
            step in 0.01f64..2.0,
        ) {
            let (b, avail) = setup();
            let mut p = TabularPolicy::new(0);
            let key = b.status_key();
            for (a, l) in avail.iter().zip(&init) {
                p.set_logit(&key, a, *l);
            }
            let records: Vec<DistillRecord> = stored.iter().map(|&i| record(&b, &avail[i])).collect();
            let before: Vec<f64> = stored.iter().map(|&i| p.probability(&b, &avail[i], &avail)).collect();
            p.distill_pass(&records, step);
            for (k, &i) in stored.iter().enumerate() {
                prop_assert!(p.probability(&b, &avail[i], &avail) >= before[k] - 1e-12);
            }
        }
    }
}
