use std::sync::Arc;

use super::{RegretConfig, RegretTrace};
use crate::dialog::{DialogAct, EpisodeLog};
use crate::error::Result;
use crate::ontology::Ontology;
use crate::policy::{realize_all, s1_infer, FastPolicy};

/// Regret of logged dialogs against a reference policy. For every logged
/// turn, in log order, the reference value is the mean discounted return
/// of `config.episodes_per_state` rollouts of `oracle` from the logged
/// belief, and the logged value is the realized return from that turn.
/// Differences are kept signed: a reference weaker than the logged policy
/// shows up as negative regret rather than being hidden.
pub fn empirical_regret_dialog(
    logs: &[EpisodeLog],
    ontology: Arc<Ontology>,
    oracle: &mut dyn FastPolicy,
    available: &[DialogAct],
    config: &RegretConfig,
) -> Result<RegretTrace> {
    config.validate()?;
    let mut instant = Vec::new();
    for log in logs {
        for index in 0..log.turns.len() {
            let mut total = 0.0;
            for k in 0..config.episodes_per_state {
                let seed = config
                    .seed
                    .wrapping_add((log.episode as u64) << 32)
                    .wrapping_add((index as u64) << 16)
                    .wrapping_add(k as u64);
                let mut env = log.resume_at(ontology.clone(), index, seed)?;
                let mut discount = 1.0;
                while !env.is_done() {
                    let action = s1_infer(oracle, env.belief(), available)?;
                    let acts = realize_all(&action.acts, env.belief(), &ontology);
                    total += discount * env.step(&acts)?.reward;
                    discount *= config.gamma;
                }
            }
            let oracle_value = total / config.episodes_per_state as f64;
            instant.push(oracle_value - log.return_from(index, config.gamma));
        }
    }
    Ok(RegretTrace::from_instant(instant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{DialogEnv, EpisodeConfig, TurnRecord};
    use crate::ontology::generate_goal;
    use crate::policy::{available_actions, ScriptedPolicy, TabularPolicy};

    fn run_logged(
        o: &Arc<Ontology>,
        policy: &mut dyn FastPolicy,
        episodes: usize,
        p_noise: f64,
    ) -> Vec<EpisodeLog> {
        let avail = available_actions(o);
        (0..episodes)
            .map(|ep| {
                let goal = generate_goal(o, ep as u64, 1).unwrap();
                let mut cfg = EpisodeConfig::single_domain(ep as u64);
                cfg.p_noise = p_noise;
                let mut env = DialogEnv::reset(o.clone(), goal.clone(), cfg.clone()).unwrap();
                let mut log = EpisodeLog::new(ep, goal, cfg);
                while !env.is_done() {
                    let before = env.belief().clone();
                    let a = s1_infer(policy, &before, &avail).unwrap();
                    let acts = realize_all(&a.acts, &before, o);
                    let out = env.step(&acts).unwrap();
                    log.turns
                        .push(TurnRecord::new(&before, acts, out.user_acts, out.reward).with_snapshot(&before));
                }
                log.finish(&env.result().unwrap());
                log
            })
            .collect()
    }

    fn restaurant() -> Arc<Ontology> {
        Arc::new(Ontology::builtin().subset(&["restaurant"]).unwrap())
    }

    #[test]
    fn self_comparison_is_zero_without_noise() {
        let o = restaurant();
        let mut scripted = ScriptedPolicy::new(o.clone());
        let logs = run_logged(&o, &mut scripted, 5, 0.0);
        let cfg = RegretConfig {
            episodes_per_state: 4,
            ..RegretConfig::default()
        };
        let trace = empirical_regret_dialog(&logs, o.clone(), &mut scripted, &available_actions(&o), &cfg).unwrap();
        assert!(!trace.is_empty());
        assert!(trace.instant.iter().all(|r| r.abs() < 1e-9), "{:?}", trace.instant);
    }

    #[test]
    fn scripted_reference_beats_random_logs() {
        let o = restaurant();
        let mut random = TabularPolicy::new(7);
        let logs = run_logged(&o, &mut random, 100, 0.0);
        let mut scripted = ScriptedPolicy::new(o.clone());
        let cfg = RegretConfig {
            episodes_per_state: 1,
            ..RegretConfig::default()
        };
        let trace = empirical_regret_dialog(&logs, o.clone(), &mut scripted, &available_actions(&o), &cfg).unwrap();
        assert!(trace.total() > 0.0);
        let n = trace.len();
        assert!(trace.at(n) > trace.at(n / 2) && trace.at(n / 2) > 0.0);
    }

    #[test]
    fn missing_snapshot_is_an_input_error() {
        let o = restaurant();
        let mut scripted = ScriptedPolicy::new(o.clone());
        let mut logs = run_logged(&o, &mut scripted, 1, 0.0);
        logs[0].turns[0].belief = None;
        let err = empirical_regret_dialog(&logs, o.clone(), &mut scripted, &available_actions(&o), &RegretConfig::default())
            .unwrap_err();
        assert!(matches!(err, crate::Error::Input(_)));
    }
}
