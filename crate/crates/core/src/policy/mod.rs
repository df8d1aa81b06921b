//! Fast (System 1) and deliberative (System 2) policies.
//!
//! Every backend speaks the same request and response shapes as the remote
//! wire protocol, so built-in and external backends are interchangeable.
//! Policies may return act templates (empty value); [`realize`] fills values
//! in from the belief before the acts reach the environment.

mod planner;
mod remote;
mod scripted;
mod tabular;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cognitive::CognitiveState;
use crate::controller::TriggerReason;
use crate::dialog::{ActType, BeliefState, DialogAct, SlotStatus};
use crate::distill::DistillRecord;
use crate::error::{Error, Result};
use crate::ontology::{Ontology, SlotKind};

pub use planner::Planner;
pub use remote::{
    FnTransport, RemotePolicy, S1Request, S1Response, S2Request, S2Response, TcpTransport,
    Transport, WireRequest,
};
pub use scripted::ScriptedPolicy;
pub use tabular::{softmax, TabularPolicy, TabularWeights, WeightEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAction {
    pub acts: Vec<DialogAct>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub sequence_id: u32,
    pub action_sequence: Vec<DialogAct>,
    pub estimated_success_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_s1: bool,
    pub supports_s2: bool,
}

/// What a distillation pass did to a fast policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LearnOutcome {
    Updated,
    /// Demonstrations were written out for an external trainer.
    Exported(std::path::PathBuf),
    Unsupported,
}

pub trait FastPolicy: Send {
    fn identity(&self) -> String;

    fn infer(&mut self, request: &S1Request) -> Result<PolicyAction>;

    /// One pass over the demonstrations. Backends that cannot learn leave
    /// the default.
    fn learn(&mut self, _records: &[DistillRecord], _step: f64) -> Result<LearnOutcome> {
        Ok(LearnOutcome::Unsupported)
    }
}

pub trait DeliberativePolicy: Send {
    fn identity(&self) -> String;

    /// Candidate plans; the caller does the scoring and selection.
    fn propose(&mut self, request: &S2Request) -> Result<Vec<ReasoningPath>>;
}

/// Outcome of one deliberation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deliberation {
    pub chosen: Vec<DialogAct>,
    pub p_self: f64,
    pub chosen_id: u32,
    pub paths: Vec<ReasoningPath>,
    pub scores: Vec<f64>,
}

pub fn s1_infer(
    backend: &mut dyn FastPolicy,
    belief: &BeliefState,
    available: &[DialogAct],
) -> Result<PolicyAction> {
    if available.is_empty() {
        return Err(Error::Argument("no available actions".into()));
    }
    let action = backend.infer(&S1Request::new(belief, available))?;
    if action.acts.is_empty() {
        return Err(Error::Backend {
            message: format!("{} returned no acts", backend.identity()),
            raw: String::new(),
        });
    }
    Ok(action)
}

/// Asks the backend for plans, scores each by the share of key slots it
/// would fill and returns the first act of the best one. Ties go to the
/// lower `sequence_id`.
pub fn s2_deliberate(
    backend: &mut dyn DeliberativePolicy,
    ontology: &Ontology,
    belief: &BeliefState,
    available: &[DialogAct],
    c: &CognitiveState,
    reason: TriggerReason,
) -> Result<Deliberation> {
    if available.is_empty() {
        return Err(Error::Argument("no available actions".into()));
    }
    let request = S2Request::new(belief, available, c, reason);
    let paths = backend.propose(&request)?;
    if paths.is_empty() {
        return Err(Error::Backend {
            message: format!("{} returned no reasoning paths", backend.identity()),
            raw: String::new(),
        });
    }
    let scores: Vec<f64> = paths
        .iter()
        .map(|p| fill_ratio(ontology, belief, &p.action_sequence, available))
        .collect();
    let mut best = 0;
    for i in 1..paths.len() {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best] && paths[i].sequence_id < paths[best].sequence_id);
        if better {
            best = i;
        }
    }
    let path = &paths[best];
    let first = path.action_sequence.first().cloned().ok_or_else(|| Error::Backend {
        message: format!("path {} is empty", path.sequence_id),
        raw: String::new(),
    })?;
    Ok(Deliberation {
        chosen: vec![first],
        p_self: path.estimated_success_probability.clamp(0.0, 1.0),
        chosen_id: path.sequence_id,
        paths: paths.clone(),
        scores,
    })
}

/// Share of key slots holding a value after optimistically applying the
/// sequence: a request or a non-null inform counts as filling its slot.
/// Sequences with an act outside `available` (compared as templates) or
/// unknown to the ontology score 0. With no key slots in scope the ratio
/// is 1.
pub fn fill_ratio(
    ontology: &Ontology,
    belief: &BeliefState,
    sequence: &[DialogAct],
    available: &[DialogAct],
) -> f64 {
    let allowed: BTreeSet<DialogAct> = available.iter().map(DialogAct::template).collect();
    if sequence.is_empty()
        || sequence
            .iter()
            .any(|a| !allowed.contains(&a.template()) || a.validate(ontology).is_err())
    {
        return 0.0;
    }
    let keys = key_slots_in_scope(ontology, belief);
    if keys.is_empty() {
        return 1.0;
    }
    let filled = keys
        .iter()
        .filter(|(d, s)| {
            !belief.value(d, s).is_empty()
                || sequence.iter().any(|a| {
                    a.domain == *d
                        && a.slot == *s
                        && (a.act == ActType::Request
                            || (a.act == ActType::Inform && !crate::metrics::is_null(&a.value)))
                })
        })
        .count();
    filled as f64 / keys.len() as f64
}

/// Domains the user has said anything about. Before that, every domain.
pub fn active_domains<'a>(ontology: &'a Ontology, belief: &BeliefState) -> Vec<&'a str> {
    let active: Vec<&str> = ontology
        .domain_names()
        .filter(|d| {
            belief.domains.get(*d).is_some_and(|b| {
                b.booked
                    || b.slots.values().any(|e| e.status != SlotStatus::Empty)
                    || b.requests.values().any(|e| e.status != SlotStatus::Empty)
            })
        })
        .collect();
    if active.is_empty() {
        ontology.domain_names().collect()
    } else {
        active
    }
}

/// `(domain, slot)` key slots of the active domains.
pub fn key_slots_in_scope(ontology: &Ontology, belief: &BeliefState) -> Vec<(String, String)> {
    active_domains(ontology, belief)
        .into_iter()
        .filter_map(|d| ontology.domain(d))
        .flat_map(|d| d.key_slots.iter().map(move |s| (d.name.clone(), s.clone())))
        .collect()
}

/// Pairs of slots sharing a name across two active domains whose values
/// disagree while at least one of them is still unconfirmed.
pub fn conflicts(ontology: &Ontology, belief: &BeliefState) -> Vec<[(String, String); 2]> {
    let domains = active_domains(ontology, belief);
    let mut out = Vec::new();
    for (i, a) in domains.iter().enumerate() {
        for b in &domains[i + 1..] {
            let (Some(da), Some(db)) = (belief.domains.get(*a), belief.domains.get(*b)) else {
                continue;
            };
            for (slot, ea) in &da.slots {
                let Some(eb) = db.slots.get(slot) else {
                    continue;
                };
                let informable = ontology.slot_kind(a, slot) == Some(SlotKind::Informable)
                    && ontology.slot_kind(b, slot) == Some(SlotKind::Informable);
                let disagree = !ea.value.is_empty() && !eb.value.is_empty() && ea.value != eb.value;
                let unsettled = !ea.status.is_settled() || !eb.status.is_settled();
                if informable && disagree && unsettled {
                    out.push([
                        (a.to_string(), slot.clone()),
                        (b.to_string(), slot.clone()),
                    ]);
                }
            }
        }
    }
    out
}

/// Act templates over the whole ontology: request and confirm every
/// belief slot, inform every requestable slot, one booking act per
/// bookable domain, and goodbye.
pub fn available_actions(ontology: &Ontology) -> Vec<DialogAct> {
    let mut acts = Vec::new();
    for d in ontology.domains() {
        for (slot, kind) in d.belief_slots() {
            acts.push(DialogAct::request(&d.name, slot));
            if kind == SlotKind::Informable {
                acts.push(DialogAct::confirm(&d.name, slot, ""));
            }
        }
        for slot in d.requestable.keys() {
            acts.push(DialogAct::inform(&d.name, slot, ""));
        }
        if d.bookable {
            acts.push(DialogAct::book(&d.name, "", ""));
        }
    }
    acts.push(DialogAct::goodbye());
    acts
}

/// Turns a template into concrete acts. Acts that already carry a value
/// pass through unchanged. Informs of requestable slots take the
/// ontology's reported value, confirms the belief value, and a domain
/// booking expands to one act per booking slot.
pub fn realize(act: &DialogAct, belief: &BeliefState, ontology: &Ontology) -> Vec<DialogAct> {
    if !act.value.is_empty() {
        return vec![act.clone()];
    }
    match act.act {
        ActType::Inform => {
            let value = ontology
                .domain(&act.domain)
                .and_then(|d| d.values(&act.slot).first().cloned())
                .unwrap_or_default();
            vec![DialogAct::inform(&act.domain, &act.slot, &value)]
        }
        ActType::Confirm => vec![DialogAct::confirm(
            &act.domain,
            &act.slot,
            belief.value(&act.domain, &act.slot),
        )],
        ActType::Book if act.slot.is_empty() => {
            let slots: Vec<&String> = ontology
                .domain(&act.domain)
                .map(|d| d.book.keys().collect())
                .unwrap_or_default();
            if slots.is_empty() {
                vec![act.clone()]
            } else {
                slots
                    .into_iter()
                    .map(|s| DialogAct::book(&act.domain, s, belief.value(&act.domain, s)))
                    .collect()
            }
        }
        ActType::Book => vec![DialogAct::book(
            &act.domain,
            &act.slot,
            belief.value(&act.domain, &act.slot),
        )],
        ActType::Request | ActType::Goodbye => vec![act.clone()],
    }
}

pub fn realize_all(acts: &[DialogAct], belief: &BeliefState, ontology: &Ontology) -> Vec<DialogAct> {
    acts.iter().flat_map(|a| realize(a, belief, ontology)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<ReasoningPath>);

    impl DeliberativePolicy for Fixed {
        fn identity(&self) -> String {
            "fixed".into()
        }

        fn propose(&mut self, _: &S2Request) -> Result<Vec<ReasoningPath>> {
            Ok(self.0.clone())
        }
    }

    fn path(id: u32, acts: &[DialogAct], p: f64) -> ReasoningPath {
        ReasoningPath {
            sequence_id: id,
            action_sequence: acts.to_vec(),
            estimated_success_probability: p,
        }
    }

    fn restaurant() -> Ontology {
        Ontology::builtin().subset(&["restaurant"]).unwrap()
    }

    #[test]
    fn picks_highest_fill_ratio() {
        let o = restaurant();
        let b = BeliefState::empty(&o);
        let avail = available_actions(&o);
        let area = DialogAct::request("restaurant", "area");
        let food = DialogAct::request("restaurant", "food");
        let price = DialogAct::request("restaurant", "pricerange");
        let mut backend = Fixed(vec![
            path(1, &[area.clone()], 0.5),
            path(2, &[food.clone(), area.clone()], 0.6),
            path(3, &[price.clone(), food.clone(), area.clone()], 0.95),
        ]);
        let d = s2_deliberate(&mut backend, &o, &b, &avail, &CognitiveState::default(), TriggerReason::None)
            .unwrap();
        // brute-force ratios: 1/3, 2/3, 3/3
        let expected: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|k| k / 3.0).collect();
        assert_eq!(d.scores, expected);
        assert_eq!(d.chosen, vec![price]);
        assert_eq!(d.p_self, 0.95);
        assert!(d.scores.iter().all(|s| *s <= d.scores[2]));
    }

    #[test]
    fn ties_go_to_lowest_sequence_id() {
        let o = restaurant();
        let b = BeliefState::empty(&o);
        let avail = available_actions(&o);
        let seq = [DialogAct::request("restaurant", "area")];
        let mut backend = Fixed(vec![path(3, &seq, 0.1), path(1, &seq, 0.2), path(2, &seq, 0.3)]);
        let d = s2_deliberate(&mut backend, &o, &b, &avail, &CognitiveState::default(), TriggerReason::None)
            .unwrap();
        assert_eq!(d.chosen_id, 1);
        assert_eq!(d.p_self, 0.2);
    }

    #[test]
    fn invalid_paths_score_zero() {
        let o = restaurant();
        let b = BeliefState::empty(&o);
        let avail = available_actions(&o);
        let bad = [DialogAct::request("hotel", "area"), DialogAct::request("restaurant", "area")];
        assert_eq!(fill_ratio(&o, &b, &bad, &avail), 0.0);
        let mut backend = Fixed(vec![]);
        assert!(matches!(
            s2_deliberate(&mut backend, &o, &b, &avail, &CognitiveState::default(), TriggerReason::None),
            Err(Error::Backend { .. })
        ));
    }

    #[test]
    fn available_actions_are_valid_templates() {
        let o = Ontology::builtin();
        let acts = available_actions(&o);
        for a in &acts {
            a.validate(&o).unwrap();
            assert!(a.value.is_empty());
        }
        let r = available_actions(&restaurant());
        // 6 requests, 3 confirms, 3 informs, book, goodbye
        assert_eq!(r.len(), 14);
    }

    #[test]
    fn booking_template_expands_per_slot() {
        let o = restaurant();
        let mut b = BeliefState::empty(&o);
        b.slot_mut("restaurant", "day").unwrap().value = "friday".into();
        let acts = realize(&DialogAct::book("restaurant", "", ""), &b, &o);
        assert_eq!(acts.len(), 3);
        assert!(acts.contains(&DialogAct::book("restaurant", "day", "friday")));
        let taxi = Ontology::builtin().subset(&["taxi"]).unwrap();
        let bt = BeliefState::empty(&taxi);
        assert_eq!(realize(&DialogAct::book("taxi", "", ""), &bt, &taxi).len(), 1);
    }
}
