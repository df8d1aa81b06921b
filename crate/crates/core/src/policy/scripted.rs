use std::sync::Arc;

use super::{active_domains, FastPolicy, PolicyAction, S1Request};
use crate::dialog::{BeliefState, DialogAct, SlotStatus};
use crate::error::Result;
use crate::ontology::Ontology;

/// Hand-written task policy, one act per turn in priority order:
/// answer pending user requests, book domains whose booking values are
/// known, ask for missing booking values, ask for missing key slots, and
/// finally say goodbye. Each rule carries a fixed confidence.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    ontology: Arc<Ontology>,
}

impl ScriptedPolicy {
    pub const INFORM_CONFIDENCE: f64 = 0.95;
    pub const BOOK_CONFIDENCE: f64 = 0.9;
    pub const REQUEST_BOOK_CONFIDENCE: f64 = 0.85;
    pub const REQUEST_KEY_CONFIDENCE: f64 = 0.8;
    pub const GOODBYE_CONFIDENCE: f64 = 0.5;

    pub fn new(ontology: Arc<Ontology>) -> Self {
        ScriptedPolicy { ontology }
    }

    pub fn decide(&self, belief: &BeliefState) -> PolicyAction {
        let domains = active_domains(&self.ontology, belief);
        let pick = |act: DialogAct, confidence: f64| PolicyAction {
            acts: vec![act],
            confidence,
        };
        for d in &domains {
            if let Some(b) = belief.domains.get(*d) {
                if let Some((slot, _)) = b
                    .requests
                    .iter()
                    .find(|(_, e)| e.status == SlotStatus::Requested)
                {
                    return pick(DialogAct::inform(d, slot, ""), Self::INFORM_CONFIDENCE);
                }
            }
        }
        for d in &domains {
            let (Some(dom), Some(b)) = (self.ontology.domain(d), belief.domains.get(*d)) else {
                continue;
            };
            if !dom.bookable || b.booked {
                continue;
            }
            let pending: Vec<&String> = dom
                .book
                .keys()
                .filter(|s| b.slots.get(*s).is_some_and(|e| e.status != SlotStatus::Booked))
                .collect();
            if dom.book.is_empty() {
                return pick(DialogAct::book(d, "", ""), Self::BOOK_CONFIDENCE);
            }
            if pending.is_empty() {
                continue;
            }
            if let Some(s) = pending.iter().find(|s| belief.value(d, s).is_empty()) {
                return pick(DialogAct::request(d, s), Self::REQUEST_BOOK_CONFIDENCE);
            }
            return pick(DialogAct::book(d, "", ""), Self::BOOK_CONFIDENCE);
        }
        for d in &domains {
            if let Some(dom) = self.ontology.domain(d) {
                if let Some(s) = dom.key_slots.iter().find(|s| belief.value(d, s).is_empty()) {
                    return pick(DialogAct::request(d, s), Self::REQUEST_KEY_CONFIDENCE);
                }
            }
        }
        pick(DialogAct::goodbye(), Self::GOODBYE_CONFIDENCE)
    }
}

impl FastPolicy for ScriptedPolicy {
    fn identity(&self) -> String {
        "scripted".into()
    }

    fn infer(&mut self, request: &S1Request) -> Result<PolicyAction> {
        Ok(self.decide(&request.belief_state))
    }
}
