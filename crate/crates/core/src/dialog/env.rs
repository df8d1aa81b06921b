use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActType, BeliefState, DialogAct, Exchange, SlotStatus};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalInput};
use crate::ontology::{Ontology, SlotKind, UserGoal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

/// Turn penalty plus a terminal bonus or penalty scaled by the turn cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScheme {
    pub turn_penalty: f64,
    pub success_factor: f64,
    pub failure_factor: f64,
}

impl Default for RewardScheme {
    fn default() -> Self {
        RewardScheme {
            turn_penalty: 1.0,
            success_factor: 2.0,
            failure_factor: 1.0,
        }
    }
}

impl RewardScheme {
    pub fn terminal(&self, outcome: Outcome, max_turns: usize) -> f64 {
        let cap = max_turns as f64;
        match outcome {
            Outcome::Success => self.success_factor * cap,
            Outcome::Failure => -self.failure_factor * cap,
        }
    }

    pub fn total(&self, outcome: Outcome, turns_used: usize, max_turns: usize) -> f64 {
        -self.turn_penalty * turns_used as f64 + self.terminal(outcome, max_turns)
    }
}

/// Episode return under the default scheme: `-turns + 2L` on success and
/// `-turns - L` on failure.
pub fn reward_for(outcome: Outcome, turns_used: usize, max_turns: usize) -> f64 {
    RewardScheme::default().total(outcome, turns_used, max_turns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_turns: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Probability that the user answers a different slot than the one
    /// requested.
    pub p_noise: f64,
    pub reward: RewardScheme,
}

impl EpisodeConfig {
    pub fn single_domain(seed: u64) -> Self {
        EpisodeConfig {
            max_turns: 30,
            gamma: 1.0,
            seed,
            p_noise: 0.0,
            reward: RewardScheme::default(),
        }
    }

    pub fn multi_domain(seed: u64) -> Self {
        EpisodeConfig {
            max_turns: 40,
            ..Self::single_domain(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.max_turns == 0 {
            problems.push("max_turns must be at least 1".to_string());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.p_noise) {
            problems.push(format!("p_noise must be in [0, 1], got {}", self.p_noise));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub user_acts: Vec<DialogAct>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub turns_used: usize,
    pub cumulative_reward: f64,
    pub rewards: Vec<f64>,
    pub final_belief: BeliefState,
    pub system_log: Vec<DialogAct>,
}

/// Simulated dialog with an agenda-driven rule user.
///
/// The user answers requests from its goal, affirms correct informs and
/// confirmations, corrects wrong ones, volunteers its next unmentioned
/// constraint when it has nothing else to say, and voices all of its
/// requests in the first exchange. The dialog succeeds as soon as the
/// system act log satisfies the task metrics, at which point the user says
/// goodbye.
#[derive(Debug, Clone)]
pub struct DialogEnv {
    ontology: Arc<Ontology>,
    goal: UserGoal,
    config: EpisodeConfig,
    belief: BeliefState,
    system_log: Vec<DialogAct>,
    rewards: Vec<f64>,
    done: bool,
    success: bool,
    rng: ChaCha8Rng,
}

impl DialogEnv {
    pub fn reset(ontology: Arc<Ontology>, goal: UserGoal, config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        goal.validate(&ontology)?;
        let belief = BeliefState::empty(&ontology);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(DialogEnv {
            ontology,
            goal,
            config,
            belief,
            system_log: Vec::new(),
            rewards: Vec::new(),
            done: false,
            success: false,
            rng,
        })
    }

    /// Rebuilds a running episode from a belief snapshot and the system acts
    /// issued so far. The user's noise stream is reseeded from `rng_seed`.
    pub fn resume(
        ontology: Arc<Ontology>,
        goal: UserGoal,
        config: EpisodeConfig,
        belief: BeliefState,
        system_log: Vec<DialogAct>,
        rewards: Vec<f64>,
        rng_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        goal.validate(&ontology)?;
        if belief.turn >= config.max_turns {
            return Err(Error::State(format!(
                "snapshot at turn {} is past the turn cap {}",
                belief.turn, config.max_turns
            )));
        }
        Ok(DialogEnv {
            ontology,
            goal,
            config,
            belief,
            system_log,
            rewards,
            done: false,
            success: false,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn goal(&self) -> &UserGoal {
        &self.goal
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn ontology(&self) -> &Arc<Ontology> {
        &self.ontology
    }

    pub fn turn(&self) -> usize {
        self.belief.turn
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn system_log(&self) -> &[DialogAct] {
        &self.system_log
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn step(&mut self, system_acts: &[DialogAct]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::State("episode already finished".into()));
        }
        if system_acts.is_empty() {
            return Err(Error::Argument("system turn must contain at least one act".into()));
        }
        for act in system_acts {
            act.validate(&self.ontology)?;
        }

        let first_turn = self.belief.turn == 0;
        let mut user_acts = Vec::new();
        let mut system_goodbye = false;
        for act in system_acts {
            self.system_log.push(act.clone());
            match act.act {
                ActType::Request => self.answer_request(act, &mut user_acts),
                ActType::Inform => self.check_inform(act, &mut user_acts),
                ActType::Confirm => self.check_confirm(act, &mut user_acts),
                ActType::Book => self.apply_booking(act, &mut user_acts),
                ActType::Goodbye => system_goodbye = true,
            }
        }
        if first_turn {
            for g in &self.goal.domains {
                for slot in &g.requests {
                    user_acts.push(DialogAct::request(&g.domain, slot));
                }
            }
        }
        if !user_acts.iter().any(|a| a.act == ActType::Inform) {
            if let Some(act) = self.next_volunteered() {
                user_acts.push(act);
            }
        }
        for act in &user_acts {
            self.track_user_act(act);
        }

        self.belief.turn += 1;
        let mut reward = -self.config.reward.turn_penalty;
        let success =
            metrics::success(&EvalInput::new(&self.goal, &self.system_log)) == 1;
        if success {
            user_acts.push(DialogAct::goodbye());
            reward += self.config.reward.terminal(Outcome::Success, self.config.max_turns);
            self.done = true;
            self.success = true;
        } else if system_goodbye || self.belief.turn >= self.config.max_turns {
            reward += self.config.reward.terminal(Outcome::Failure, self.config.max_turns);
            self.done = true;
        }
        self.belief.history.push(Exchange {
            system: system_acts.to_vec(),
            user: user_acts.clone(),
        });
        self.rewards.push(reward);
        Ok(StepOutcome {
            user_acts,
            reward,
            done: self.done,
        })
    }

    pub fn result(&self) -> Result<EpisodeResult> {
        if !self.done {
            return Err(Error::State("episode still running".into()));
        }
        Ok(EpisodeResult {
            success: self.success,
            turns_used: self.belief.turn,
            cumulative_reward: self.rewards.iter().sum(),
            rewards: self.rewards.clone(),
            final_belief: self.belief.clone(),
            system_log: self.system_log.clone(),
        })
    }

    fn goal_value(&self, domain: &str, slot: &str) -> Option<&str> {
        let g = self.goal.domain(domain)?;
        g.constraints
            .get(slot)
            .or_else(|| g.book.get(slot))
            .map(String::as_str)
    }

    fn answer_request(&mut self, act: &DialogAct, out: &mut Vec<DialogAct>) {
        let Some(g) = self.goal.domain(&act.domain) else {
            return;
        };
        match self.ontology.slot_kind(&act.domain, &act.slot) {
            Some(SlotKind::Informable) => {
                if g.constraints.contains_key(&act.slot) {
                    let mut slot = act.slot.clone();
                    if self.config.p_noise > 0.0 && self.rng.random_bool(self.config.p_noise) {
                        let others: Vec<&String> =
                            g.constraints.keys().filter(|s| **s != act.slot).collect();
                        if let Some(s) = others.choose(&mut self.rng) {
                            slot = (*s).clone();
                        }
                    }
                    out.push(DialogAct::inform(&act.domain, &slot, &g.constraints[&slot]));
                } else {
                    out.push(DialogAct::inform(&act.domain, &act.slot, "dont care"));
                }
            }
            Some(SlotKind::Book) => {
                let v = g.book.get(&act.slot).map_or("dont care", String::as_str);
                out.push(DialogAct::inform(&act.domain, &act.slot, v));
            }
            _ => {}
        }
    }

    fn check_inform(&mut self, act: &DialogAct, out: &mut Vec<DialogAct>) {
        match self.ontology.slot_kind(&act.domain, &act.slot) {
            Some(SlotKind::Requestable) => {
                if !metrics::is_null(&act.value) {
                    if let Some(e) = self.belief.request_mut(&act.domain, &act.slot) {
                        e.value = act.value.clone();
                        e.status = SlotStatus::Mentioned;
                    }
                }
            }
            Some(SlotKind::Informable | SlotKind::Book) => self.check_confirm(act, out),
            None => {}
        }
    }

    fn check_confirm(&mut self, act: &DialogAct, out: &mut Vec<DialogAct>) {
        let Some(target) = self.goal_value(&act.domain, &act.slot) else {
            return;
        };
        if act.value == target {
            out.push(DialogAct::confirm(&act.domain, &act.slot, target));
        } else {
            let fix = DialogAct::inform(&act.domain, &act.slot, target);
            if let Some(e) = self.belief.slot_mut(&act.domain, &act.slot) {
                if e.status != SlotStatus::Booked {
                    e.status = SlotStatus::Mentioned;
                }
            }
            out.push(fix);
        }
    }

    fn apply_booking(&mut self, act: &DialogAct, out: &mut Vec<DialogAct>) {
        let Some(g) = self.goal.domain(&act.domain) else {
            return;
        };
        if !g.wants_booking {
            return;
        }
        if act.slot.is_empty() {
            if g.book.is_empty() {
                if let Some(b) = self.belief.domains.get_mut(&act.domain) {
                    b.booked = true;
                }
            }
            return;
        }
        match g.book.get(&act.slot) {
            Some(v) if *v == act.value => {
                if let Some(e) = self.belief.slot_mut(&act.domain, &act.slot) {
                    e.value = act.value.clone();
                    e.status = SlotStatus::Booked;
                }
            }
            Some(v) => out.push(DialogAct::inform(&act.domain, &act.slot, v)),
            None => {}
        }
    }

    /// Next goal item the belief does not hold yet: constraints first, then
    /// booking values, domain by domain.
    fn next_volunteered(&self) -> Option<DialogAct> {
        self.goal.domains.iter().find_map(|g| {
            g.constraints
                .iter()
                .chain(g.book.iter())
                .find(|(s, _)| self.belief.status(&g.domain, s) == SlotStatus::Empty)
                .map(|(s, v)| DialogAct::inform(&g.domain, s, v))
        })
    }

    fn track_user_act(&mut self, act: &DialogAct) {
        match act.act {
            ActType::Inform => {
                if let Some(e) = self.belief.slot_mut(&act.domain, &act.slot) {
                    if e.value != act.value {
                        // New value or a correction: back to unconfirmed.
                        e.value = act.value.clone();
                        e.status = SlotStatus::Mentioned;
                    } else if e.status == SlotStatus::Empty {
                        e.status = SlotStatus::Mentioned;
                    }
                }
            }
            ActType::Confirm => {
                if let Some(e) = self.belief.slot_mut(&act.domain, &act.slot) {
                    e.value = act.value.clone();
                    if e.status != SlotStatus::Booked {
                        e.status = SlotStatus::Confirmed;
                    }
                }
            }
            ActType::Request => {
                if let Some(e) = self.belief.request_mut(&act.domain, &act.slot) {
                    if e.status == SlotStatus::Empty {
                        e.status = SlotStatus::Requested;
                    }
                }
            }
            ActType::Book | ActType::Goodbye => {}
        }
    }
}
