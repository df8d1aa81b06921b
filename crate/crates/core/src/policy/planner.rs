use std::sync::Arc;

use super::{
    active_domains, conflicts, fill_ratio, DeliberativePolicy, ReasoningPath, S2Request,
};
use crate::dialog::{BeliefState, DialogAct, SlotStatus};
use crate::error::Result;
use crate::ontology::Ontology;

/// Built-in deliberative policy. It proposes three plans over the same
/// building blocks in different orders:
///
/// 1. conservative: resolve conflicts and confirm unconfirmed key slots,
///    then gather, book and answer;
/// 2. proactive: request every missing slot first;
/// 3. hybrid: answer pending user requests first, then gather.
///
/// Plans are cut to `horizon` acts. The self-estimate of success rises with
/// the plan's key-slot coverage and drops for conflicts it leaves open.
#[derive(Debug, Clone)]
pub struct Planner {
    ontology: Arc<Ontology>,
    horizon: usize,
}

struct Blocks {
    conflicts: Vec<DialogAct>,
    confirms: Vec<DialogAct>,
    request_keys: Vec<DialogAct>,
    request_book: Vec<DialogAct>,
    books: Vec<DialogAct>,
    informs: Vec<DialogAct>,
}

impl Planner {
    pub const DEFAULT_HORIZON: usize = 3;

    pub fn new(ontology: Arc<Ontology>) -> Self {
        Planner {
            ontology,
            horizon: Self::DEFAULT_HORIZON,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon.max(1);
        self
    }

    fn blocks(&self, belief: &BeliefState) -> Blocks {
        let o = &*self.ontology;
        let domains = active_domains(o, belief);
        let mut b = Blocks {
            conflicts: Vec::new(),
            confirms: Vec::new(),
            request_keys: Vec::new(),
            request_book: Vec::new(),
            books: Vec::new(),
            informs: Vec::new(),
        };
        for pair in conflicts(o, belief) {
            for (d, s) in pair {
                let act = DialogAct::confirm(&d, &s, "");
                if !belief.status(&d, &s).is_settled() && !b.conflicts.contains(&act) {
                    b.conflicts.push(act);
                }
            }
        }
        for d in &domains {
            let (Some(dom), Some(db)) = (o.domain(d), belief.domains.get(*d)) else {
                continue;
            };
            for s in &dom.key_slots {
                match belief.status(d, s) {
                    SlotStatus::Empty => b.request_keys.push(DialogAct::request(d, s)),
                    SlotStatus::Mentioned => {
                        let act = DialogAct::confirm(d, s, "");
                        if !b.conflicts.contains(&act) {
                            b.confirms.push(act);
                        }
                    }
                    _ => {}
                }
            }
            if dom.bookable && !db.booked {
                let unbooked: Vec<&String> = dom
                    .book
                    .keys()
                    .filter(|s| belief.status(d, s) != SlotStatus::Booked)
                    .collect();
                for s in &unbooked {
                    if belief.value(d, s).is_empty() {
                        b.request_book.push(DialogAct::request(d, s));
                    }
                }
                if dom.book.is_empty() || !unbooked.is_empty() {
                    b.books.push(DialogAct::book(d, "", ""));
                }
            }
            for (s, e) in &db.requests {
                if e.status == SlotStatus::Requested {
                    b.informs.push(DialogAct::inform(d, s, ""));
                }
            }
        }
        b
    }

    fn finish(&self, id: u32, mut seq: Vec<DialogAct>, belief: &BeliefState, available: &[DialogAct]) -> ReasoningPath {
        seq.truncate(self.horizon);
        if seq.is_empty() {
            seq.push(DialogAct::goodbye());
        }
        let coverage = fill_ratio(&self.ontology, belief, &seq, available);
        let open = conflicts(&self.ontology, belief)
            .iter()
            .filter(|pair| {
                !pair.iter().all(|(d, s)| {
                    seq.iter().any(|a| a.domain == *d && a.slot == *s)
                })
            })
            .count();
        let p = (0.55 + 0.45 * coverage - 0.15 * open as f64).clamp(0.05, 0.99);
        ReasoningPath {
            sequence_id: id,
            action_sequence: seq,
            estimated_success_probability: p,
        }
    }

    pub fn plan(&self, belief: &BeliefState, available: &[DialogAct]) -> Vec<ReasoningPath> {
        let b = self.blocks(belief);
        let chain = |parts: &[&Vec<DialogAct>]| -> Vec<DialogAct> {
            parts.iter().flat_map(|p| p.iter().cloned()).collect()
        };
        // Booking before all values are known only makes the user repeat
        // them, so plans book once nothing is left to request.
        let book_now = if b.request_book.is_empty() { b.books.clone() } else { Vec::new() };
        let conservative = chain(&[
            &b.conflicts,
            &b.confirms,
            &b.request_keys,
            &b.request_book,
            &book_now,
            &b.informs,
        ]);
        let proactive = chain(&[
            &b.request_keys,
            &b.request_book,
            &b.informs,
            &book_now,
            &b.conflicts,
        ]);
        let hybrid = chain(&[
            &b.informs,
            &b.request_keys,
            &b.conflicts,
            &b.request_book,
            &book_now,
        ]);
        vec![
            self.finish(1, conservative, belief, available),
            self.finish(2, proactive, belief, available),
            self.finish(3, hybrid, belief, available),
        ]
    }
}

impl DeliberativePolicy for Planner {
    fn identity(&self) -> String {
        "planner".into()
    }

    fn propose(&mut self, request: &S2Request) -> Result<Vec<ReasoningPath>> {
        Ok(self.plan(&request.belief_state, &request.available_actions))
    }
}
