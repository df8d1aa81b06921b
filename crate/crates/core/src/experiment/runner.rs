use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{create_dir, write_csv, write_json, write_jsonl, write_text};
use super::{scripted_corpus, stream_rng, streams, BackendSpec, EpochRow, EvalRow, RunConfig, TriggerRecord};
use crate::cognitive::{discretize, CognitiveModel, VisitationTable};
use crate::controller::{should_activate_s2, ControllerConfig, ControllerMode, TriggerReason};
use crate::dialog::{BeliefState, DialogAct, DialogEnv, EpisodeLog, TurnRecord};
use crate::distill::{run_distillation, BufferStats, DistillBuffer, DistillRecord};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, AggregateReport, EvalInput, EvalReport};
use crate::ontology::{build_cooccurrence, generate_goal, load_corpus, CooccurrenceMatrix, Ontology};
use crate::policy::{
    active_domains, available_actions, realize_all, s1_infer, s2_deliberate, DeliberativePolicy,
    FastPolicy, Planner, RemotePolicy, ScriptedPolicy, TabularPolicy, TabularWeights, TcpTransport,
};

/// Run-level totals, written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: ControllerMode,
    pub seed: u64,
    pub s1_backend: String,
    pub s2_backend: String,
    pub epochs: usize,
    pub episodes: usize,
    pub turns: u64,
    pub s2_invocations: u64,
    pub s2_rate: f64,
    pub first_quarter_s2_rate: f64,
    pub last_quarter_s2_rate: f64,
    pub trigger_counts: BTreeMap<String, u64>,
    pub train_success_rate: f64,
    pub final_eval: AggregateReport,
    pub final_eval_s2_rate: f64,
    pub cells_visited: usize,
    pub buffer: BufferStats,
    /// Largest buffer length seen at any epoch boundary.
    pub buffer_max_len: usize,
    /// Smallest self-estimate among records ever held in the buffer.
    pub buffer_min_p_self: Option<f64>,
    pub distill_passes: usize,
    /// Distinct stored (state, action) pairs checked around passes, and how
    /// many of them lost probability. Only the tabular backend is checked.
    pub distill_pairs_checked: u64,
    pub distill_pairs_decreased: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub seed: u64,
    pub summary: RunSummary,
    pub epochs: Vec<EpochRow>,
    pub evals: Vec<EvalRow>,
    pub triggers: Vec<TriggerRecord>,
    /// Training episodes, kept when `log_episodes` is set.
    pub logs: Vec<EpisodeLog>,
    pub visitation: VisitationTable,
    pub weights: Option<TabularWeights>,
}

enum Fast {
    Tabular(TabularPolicy),
    Dyn(Box<dyn FastPolicy>),
}

impl Fast {
    fn as_dyn(&mut self) -> &mut dyn FastPolicy {
        match self {
            Fast::Tabular(t) => t,
            Fast::Dyn(d) => d.as_mut(),
        }
    }
}

fn connect(addr: &str) -> Result<RemotePolicy> {
    let transport = TcpTransport::connect(addr).map_err(|e| Error::Backend {
        message: format!("cannot connect to {addr}: {e}"),
        raw: String::new(),
    })?;
    Ok(RemotePolicy::new(addr, Box::new(transport)))
}

fn make_fast(config: &RunConfig, seed: u64, ontology: &Arc<Ontology>, dir: Option<&Path>) -> Result<Fast> {
    Ok(match BackendSpec::parse_fast(&config.s1_backend)? {
        BackendSpec::Tabular => Fast::Tabular(TabularPolicy::new(stream_rng(seed, streams::S1).next_u64())),
        BackendSpec::Scripted => Fast::Dyn(Box::new(ScriptedPolicy::new(ontology.clone()))),
        BackendSpec::Remote(addr) => {
            let mut p = connect(&addr)?;
            if let Some(dir) = dir {
                p = p.with_export_path(dir.join("distill_export.jsonl"));
            }
            Fast::Dyn(Box::new(p))
        }
        BackendSpec::Planner => unreachable!("rejected by parse_fast"),
    })
}

fn make_slow(config: &RunConfig, ontology: &Arc<Ontology>) -> Result<Box<dyn DeliberativePolicy>> {
    Ok(match BackendSpec::parse_deliberative(&config.s2_backend)? {
        BackendSpec::Planner => Box::new(Planner::new(ontology.clone())),
        BackendSpec::Remote(addr) => Box::new(connect(&addr)?),
        _ => unreachable!("rejected by parse_deliberative"),
    })
}

enum Visits<'a> {
    Learn(&'a mut VisitationTable),
    Frozen(&'a VisitationTable),
}

struct Agent<'a> {
    ontology: &'a Arc<Ontology>,
    cooccurrence: &'a CooccurrenceMatrix,
    config: &'a RunConfig,
    controller: ControllerConfig,
    available: Vec<DialogAct>,
    slow: Box<dyn DeliberativePolicy>,
}

struct Played {
    log: EpisodeLog,
    report: EvalReport,
    success: bool,
    reward: f64,
    turns: usize,
    decisions: Vec<TriggerRecord>,
}

impl Agent<'_> {
    #[allow(clippy::too_many_arguments)]
    fn play(
        &mut self,
        fast: &mut dyn FastPolicy,
        env: &mut DialogEnv,
        index: usize,
        mut visits: Visits<'_>,
        mut buffer: Option<&mut DistillBuffer>,
        rng: &mut ChaCha8Rng,
        keep_log: bool,
    ) -> Result<Played> {
        let model = CognitiveModel {
            ontology: self.ontology,
            cooccurrence: self.cooccurrence,
            variant: self.config.dependency,
            max_turns: env.config().max_turns,
        };
        let mut log = EpisodeLog::new(index, env.goal().clone(), env.config().clone());
        let mut decisions = Vec::new();
        while !env.is_done() {
            let belief = BeliefState {
                history: Vec::new(),
                ..env.belief().clone()
            };
            let domains = active_domains(self.ontology, &belief);
            let c = model.observe(&belief, &domains);
            let cell = discretize(&c, self.controller.bins);
            let table: &VisitationTable = match &visits {
                Visits::Learn(t) => t,
                Visits::Frozen(t) => t,
            };
            let n = table.count(&cell);
            let total = table.total() + 1;
            let s1 = s1_infer(fast, &belief, &self.available)?;
            let decision = should_activate_s2(n, total, s1.confidence, &self.controller, rng);
            if let Visits::Learn(t) = &mut visits {
                t.visit(cell);
            }
            let (acts, confidence, source) = if decision.use_s2 {
                let d = s2_deliberate(
                    self.slow.as_mut(),
                    self.ontology,
                    &belief,
                    &self.available,
                    &c,
                    decision.reason,
                )?;
                if let Some(buffer) = buffer.as_deref_mut() {
                    buffer.maybe_store(DistillRecord {
                        state: belief.clone(),
                        action: d.chosen.clone(),
                        p_self: d.p_self,
                    });
                }
                (d.chosen, d.p_self, "s2")
            } else {
                (s1.acts, s1.confidence, "s1")
            };
            let realized = realize_all(&acts, &belief, self.ontology);
            let out = env.step(&realized)?;
            decisions.push(TriggerRecord {
                epoch: 0,
                episode: index,
                turn: belief.turn,
                d: c.d,
                u: c.u,
                rho: c.rho,
                cell: [cell.d, cell.u, cell.rho],
                n,
                threshold: decision.threshold,
                p_s1: s1.confidence,
                use_s2: decision.use_s2,
                reason: decision.reason,
            });
            if keep_log {
                let mut record = TurnRecord::new(&belief, realized, out.user_acts, out.reward).with_snapshot(&belief);
                record.source = Some(source.into());
                record.confidence = Some(confidence);
                record.reason = Some(decision.reason.as_str().into());
                log.turns.push(record);
            }
        }
        let result = env.result()?;
        log.finish(&result);
        let report = evaluate(&EvalInput::new(env.goal(), &result.system_log));
        Ok(Played {
            log,
            report,
            success: result.success,
            reward: result.cumulative_reward,
            turns: result.turns_used,
            decisions,
        })
    }
}

fn cooccurrence_for(config: &RunConfig, ontology: &Ontology, seed: u64) -> Result<CooccurrenceMatrix> {
    let corpus = match &config.corpus {
        Some(path) => load_corpus(path, ontology)?,
        None => scripted_corpus(config.scenario, config.corpus_episodes, seed)?,
    };
    Ok(build_cooccurrence(&corpus, ontology))
}

fn new_env(config: &RunConfig, ontology: &Arc<Ontology>, rng: &mut ChaCha8Rng) -> Result<DialogEnv> {
    let s = rng.next_u64();
    let goal = generate_goal(ontology, s, config.scenario.domains_per_goal())?;
    DialogEnv::reset(ontology.clone(), goal, config.episode_config(s))
}

fn quarter_rate(rows: &[EpochRow]) -> f64 {
    let turns: u64 = rows.iter().map(|r| r.turns).sum();
    let s2: u64 = rows.iter().map(|r| r.s2_turns).sum();
    if turns == 0 {
        0.0
    } else {
        s2 as f64 / turns as f64
    }
}

/// Probabilities of every distinct stored pair under the tabular policy.
fn stored_pair_probs(policy: &TabularPolicy, buffer: &DistillBuffer, available: &[DialogAct]) -> Vec<f64> {
    let pairs: BTreeSet<(String, DialogAct)> = buffer
        .records()
        .flat_map(|r| {
            let key = r.state.status_key();
            r.action.iter().map(move |a| (key.clone(), a.template()))
        })
        .collect();
    pairs
        .iter()
        .map(|(state, action)| {
            let probs = policy.distribution(state, available);
            available
                .iter()
                .position(|a| *a == *action)
                .map_or(0.0, |i| probs[i])
        })
        .collect()
}

/// One training run for one seed: `epochs` epochs of training episodes,
/// distillation at the configured period, frozen evaluations along the way,
/// and every output file when `out_dir` is set.
pub fn run_training(config: &RunConfig, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let ontology = config.scenario.ontology()?;
    let dir = config.out_dir.as_ref().map(|root| config.run_dir(root, seed));
    let cooccurrence = cooccurrence_for(config, &ontology, seed)?;
    let mut fast = make_fast(config, seed, &ontology, dir.as_deref())?;
    let mut agent = Agent {
        ontology: &ontology,
        cooccurrence: &cooccurrence,
        config,
        controller: config.controller(),
        available: available_actions(&ontology),
        slow: make_slow(config, &ontology)?,
    };
    // created only once every backend is reachable
    if let Some(dir) = &dir {
        create_dir(dir)?;
    }
    let mut goals = stream_rng(seed, streams::GOALS);
    let mut controller_rng = stream_rng(seed, streams::CONTROLLER);
    let mut visitation = VisitationTable::new();
    let mut buffer = DistillBuffer::new(config.buffer_capacity).with_period(config.distill_period);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut evals = Vec::new();
    let mut triggers = Vec::new();
    let mut logs = Vec::new();
    let mut trigger_counts: BTreeMap<String, u64> = BTreeMap::new();
    let (mut passes, mut checked, mut decreased) = (0usize, 0u64, 0u64);
    let mut buffer_max_len = 0;
    let mut buffer_min_p: Option<f64> = None;
    let mut train_successes = 0usize;
    let mut last_eval: Option<(AggregateReport, f64)> = None;

    for epoch in 1..=config.epochs {
        let mut row = EpochRow::new(epoch);
        let (mut successes, mut reward) = (0usize, 0.0);
        for i in 0..config.episodes_per_epoch {
            let index = (epoch - 1) * config.episodes_per_epoch + i;
            let mut env = new_env(config, &ontology, &mut goals)?;
            let played = agent.play(
                fast.as_dyn(),
                &mut env,
                index,
                Visits::Learn(&mut visitation),
                Some(&mut buffer),
                &mut controller_rng,
                config.log_episodes,
            )?;
            successes += usize::from(played.success);
            reward += played.reward;
            row.turns += played.turns as u64;
            for mut d in played.decisions {
                d.epoch = epoch;
                row.s2_turns += u64::from(d.use_s2);
                row.count_reason(d.reason);
                *trigger_counts.entry(d.reason.as_str().to_string()).or_insert(0) += 1;
                triggers.push(d);
            }
            if config.log_episodes {
                logs.push(played.log);
            }
        }
        let n = config.episodes_per_epoch as f64;
        row.episodes = config.episodes_per_epoch;
        row.success_rate = successes as f64 / n;
        row.avg_reward = reward / n;
        row.avg_turns = row.turns as f64 / n;
        row.s2_rate = if row.turns == 0 { 0.0 } else { row.s2_turns as f64 / row.turns as f64 };
        train_successes += successes;

        buffer_max_len = buffer_max_len.max(buffer.len());
        if let Some(m) = buffer.records().map(|r| r.p_self).reduce(f64::min) {
            buffer_min_p = Some(buffer_min_p.map_or(m, |p| p.min(m)));
        }
        let before = match &fast {
            Fast::Tabular(t) => Some(stored_pair_probs(t, &buffer, &agent.available)),
            Fast::Dyn(_) => None,
        };
        let attempted = epoch % buffer.period() == 0 && !buffer.is_empty();
        let updated = run_distillation(&buffer, fast.as_dyn(), epoch, config.distill_step)?;
        if attempted {
            passes += 1;
        }
        if let (true, Some(before), Fast::Tabular(t)) = (updated, before, &fast) {
            let after = stored_pair_probs(t, &buffer, &agent.available);
            checked += before.len() as u64;
            decreased += before.iter().zip(&after).filter(|(b, a)| **a < **b - 1e-12).count() as u64;
        }
        row.distilled = attempted;
        row.buffer_len = buffer.len();
        epochs.push(row);

        let due = epoch == config.epochs || (config.eval_every > 0 && epoch % config.eval_every == 0);
        if due && config.eval_episodes > 0 {
            let (report, s2_rate) = run_eval(&mut agent, &fast, &visitation, config, seed)?;
            evals.push(EvalRow {
                epoch,
                episodes: report.episodes,
                inform: report.inform,
                success: report.success,
                book: report.book,
                avg_turns: report.avg_turns,
                s2_rate,
            });
            last_eval = Some((report, s2_rate));
        }
    }

    let q = (config.epochs / 4).max(1);
    let turns: u64 = epochs.iter().map(|r| r.turns).sum();
    let s2_invocations: u64 = epochs.iter().map(|r| r.s2_turns).sum();
    let (final_eval, final_eval_s2_rate) = last_eval.unwrap_or_default();
    let summary = RunSummary {
        scenario: config.scenario.as_str().into(),
        mode: config.mode,
        seed,
        s1_backend: config.s1_backend.clone(),
        s2_backend: config.s2_backend.clone(),
        epochs: config.epochs,
        episodes: config.epochs * config.episodes_per_epoch,
        turns,
        s2_invocations,
        s2_rate: if turns == 0 { 0.0 } else { s2_invocations as f64 / turns as f64 },
        first_quarter_s2_rate: quarter_rate(&epochs[..q]),
        last_quarter_s2_rate: quarter_rate(&epochs[epochs.len() - q..]),
        trigger_counts,
        train_success_rate: train_successes as f64 / (config.epochs * config.episodes_per_epoch) as f64,
        final_eval,
        final_eval_s2_rate,
        cells_visited: visitation.cells().count(),
        buffer: buffer.stats(),
        buffer_max_len,
        buffer_min_p_self: buffer_min_p,
        distill_passes: passes,
        distill_pairs_checked: checked,
        distill_pairs_decreased: decreased,
    };
    let weights = match &fast {
        Fast::Tabular(t) => Some(t.weights()),
        Fast::Dyn(_) => None,
    };
    let result = RunResult {
        config: config.clone(),
        seed,
        summary,
        epochs,
        evals,
        triggers,
        logs,
        visitation,
        weights,
    };
    if let Some(dir) = &dir {
        write_outputs(&result, dir)?;
    }
    Ok(result)
}

/// Frozen evaluation: no visits recorded, nothing stored or learned, and
/// the same goals at every evaluation point. The tabular policy is copied
/// so its tie-breaking stream is left untouched; other fast policies are
/// rebuilt.
fn run_eval(
    agent: &mut Agent<'_>,
    fast: &Fast,
    visitation: &VisitationTable,
    config: &RunConfig,
    seed: u64,
) -> Result<(AggregateReport, f64)> {
    let mut frozen = match fast {
        Fast::Tabular(t) => Fast::Tabular(t.clone()),
        Fast::Dyn(_) => make_fast(config, seed, agent.ontology, None)?,
    };
    let mut goals = stream_rng(seed, streams::EVAL);
    let mut rng = stream_rng(seed, streams::EVAL_CONTROLLER);
    let ontology = agent.ontology.clone();
    let mut reports = Vec::with_capacity(config.eval_episodes);
    let (mut turns, mut s2) = (0u64, 0u64);
    for i in 0..config.eval_episodes {
        let mut env = new_env(config, &ontology, &mut goals)?;
        let p = agent.play(frozen.as_dyn(), &mut env, i, Visits::Frozen(visitation), None, &mut rng, false)?;
        turns += p.turns as u64;
        s2 += p.decisions.iter().filter(|d| d.use_s2).count() as u64;
        reports.push((p.report, p.turns));
    }
    let agg = AggregateReport::from_episodes(reports.iter().map(|(r, t)| (r, *t)));
    Ok((agg, if turns == 0 { 0.0 } else { s2 as f64 / turns as f64 }))
}

/// Result of evaluating a saved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scenario: String,
    pub mode: ControllerMode,
    pub seed: u64,
    pub report: AggregateReport,
    pub s2_rate: f64,
}

/// Frozen evaluation of a finished run from its saved visitation counts and,
/// for the tabular backend, its saved weights. The tabular tie-breaking
/// stream starts fresh, so numbers can differ slightly from the run's own
/// final evaluation.
pub fn run_evaluation(
    config: &RunConfig,
    seed: u64,
    weights: Option<&TabularWeights>,
    visitation: &VisitationTable,
) -> Result<Evaluation> {
    config.validate()?;
    let ontology = config.scenario.ontology()?;
    let cooccurrence = cooccurrence_for(config, &ontology, seed)?;
    let mut fast = make_fast(config, seed, &ontology, None)?;
    match (&mut fast, weights) {
        (Fast::Tabular(t), Some(w)) => t.load_weights(w),
        (Fast::Tabular(_), None) => {
            return Err(Error::Input("the tabular backend needs saved weights".into()));
        }
        (Fast::Dyn(_), _) => {}
    }
    let mut agent = Agent {
        ontology: &ontology,
        cooccurrence: &cooccurrence,
        config,
        controller: config.controller(),
        available: available_actions(&ontology),
        slow: make_slow(config, &ontology)?,
    };
    let (report, s2_rate) = run_eval(&mut agent, &fast, visitation, config, seed)?;
    Ok(Evaluation {
        scenario: config.scenario.as_str().into(),
        mode: config.mode,
        seed,
        report,
        s2_rate,
    })
}

/// [`run_evaluation`] on the files a training run left in `dir`.
pub fn evaluate_run_dir(config: &RunConfig, seed: u64, dir: &Path) -> Result<Evaluation> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
    };
    let visitation = VisitationTable::from_tsv(&read("visitation.tsv")?)?;
    let weights = match BackendSpec::parse_fast(&config.s1_backend)? {
        BackendSpec::Tabular => {
            let text = read("s1_weights.json")?;
            Some(serde_json::from_str::<TabularWeights>(&text).map_err(|e| Error::Input(format!("s1_weights.json: {e}")))?)
        }
        _ => None,
    };
    run_evaluation(config, seed, weights.as_ref(), &visitation)
}

fn write_outputs(result: &RunResult, dir: &Path) -> Result<()> {
    write_csv(&dir.join("epochs.csv"), &result.epochs)?;
    write_csv(&dir.join("eval.csv"), &result.evals)?;
    write_jsonl(&dir.join("triggers.jsonl"), &result.triggers)?;
    write_text(&dir.join("visitation.tsv"), &result.visitation.to_tsv())?;
    write_json(&dir.join("summary.json"), &result.summary)?;
    if result.config.log_episodes {
        let mut text = String::new();
        for log in &result.logs {
            text.push_str(&log.to_jsonl());
        }
        write_text(&dir.join("episodes.jsonl"), &text)?;
    }
    if let Some(w) = &result.weights {
        write_json(&dir.join("s1_weights.json"), w)?;
    }
    Ok(())
}

/// Runs every (config, seed) pair, in parallel across pairs. Each run is
/// sequential internally, so results do not depend on thread scheduling.
pub fn run_many(jobs: &[(RunConfig, u64)]) -> Result<Vec<RunResult>> {
    for (config, _) in jobs {
        config.validate()?;
    }
    jobs.par_iter()
        .map(|(config, seed)| run_training(config, *seed))
        .collect()
}

impl RunSummary {
    pub fn trigger_total(&self, reason: TriggerReason) -> u64 {
        self.trigger_counts.get(reason.as_str()).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Scenario;

    fn small(mode: ControllerMode) -> RunConfig {
        RunConfig {
            scenario: Scenario::Restaurant,
            epochs: 4,
            episodes_per_epoch: 5,
            eval_episodes: 5,
            eval_every: 2,
            distill_period: 2,
            mode,
            corpus_episodes: 20,
            ..RunConfig::default()
        }
    }

    #[test]
    fn s1_only_never_deliberates() {
        let r = run_training(&small(ControllerMode::S1Only), 1).unwrap();
        assert_eq!(r.summary.s2_invocations, 0);
        assert_eq!(r.summary.distill_passes, 0);
        assert!(r.triggers.iter().all(|t| t.reason == TriggerReason::ForcedOff));
    }

    #[test]
    fn bookkeeping_is_consistent() {
        let r = run_training(&small(ControllerMode::Full), 2).unwrap();
        let s2_rows = r.triggers.iter().filter(|t| t.use_s2).count() as u64;
        assert_eq!(r.summary.s2_invocations, s2_rows);
        assert_eq!(r.triggers.len() as u64, r.summary.turns);
        assert_eq!(r.visitation.total(), r.summary.turns);
        assert_eq!(r.logs.len(), 20);
        assert_eq!(r.evals.len(), 2);
        assert_eq!(r.summary.distill_passes, 2);
        assert_eq!(r.summary.distill_pairs_decreased, 0);
        assert!(r.summary.buffer_min_p_self.is_none_or(|p| p > 0.9));
    }

    #[test]
    fn random_mode_uses_random_reason_only() {
        let r = run_training(&small(ControllerMode::Random), 3).unwrap();
        assert!(r.triggers.iter().all(|t| t.reason == TriggerReason::Random));
    }

    #[test]
    fn saved_run_evaluates_from_its_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(ControllerMode::Full);
        c.out_dir = Some(dir.path().to_path_buf());
        let r = run_training(&c, 5).unwrap();
        let run_dir = c.run_dir(dir.path(), 5);
        let a = evaluate_run_dir(&c, 5, &run_dir).unwrap();
        let b = evaluate_run_dir(&c, 5, &run_dir).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.episodes, c.eval_episodes);
        let direct = run_evaluation(&c, 5, r.weights.as_ref(), &r.visitation).unwrap();
        assert_eq!(a, direct);
        assert!(matches!(run_evaluation(&c, 5, None, &r.visitation), Err(Error::Input(_))));
    }

    #[test]
    fn unreachable_backend_fails_before_episodes() {
        let mut c = small(ControllerMode::Full);
        c.s2_backend = "tcp://127.0.0.1:1".into();
        assert!(matches!(run_training(&c, 0), Err(Error::Backend { .. })));
    }
}
