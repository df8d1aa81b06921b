use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Ontology, SlotKind};
use crate::error::{Error, Result};

/// What the simulated user wants from one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainGoal {
    pub domain: String,
    /// Informable constraints with their target values.
    pub constraints: BTreeMap<String, String>,
    /// Requestable slots the user will ask about (R_d).
    pub requests: BTreeSet<String>,
    /// Booking constraints (B_d). Empty for bookable domains without
    /// booking slots, such as taxi.
    pub book: BTreeMap<String, String>,
    pub wants_booking: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGoal {
    pub domains: Vec<DomainGoal>,
}

impl UserGoal {
    pub fn domain(&self, name: &str) -> Option<&DomainGoal> {
        self.domains.iter().find(|g| g.domain == name)
    }

    pub fn domain_names(&self) -> Vec<&str> {
        self.domains.iter().map(|g| g.domain.as_str()).collect()
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        let mut problems = Vec::new();
        if self.domains.is_empty() {
            problems.push("goal has no active domain".to_string());
        }
        for g in &self.domains {
            let Some(d) = ontology.domain(&g.domain) else {
                problems.push(format!("unknown domain '{}'", g.domain));
                continue;
            };
            for slot in g.constraints.keys() {
                if d.slot_kind(slot) != Some(SlotKind::Informable) {
                    problems.push(format!("constraint '{}.{}' is not informable", g.domain, slot));
                }
            }
            for slot in &g.requests {
                if d.slot_kind(slot) != Some(SlotKind::Requestable) {
                    problems.push(format!("request '{}.{}' is not requestable", g.domain, slot));
                }
            }
            for slot in g.book.keys() {
                if d.slot_kind(slot) != Some(SlotKind::Book) {
                    problems.push(format!("booking slot '{}.{}' is unknown", g.domain, slot));
                }
            }
            if g.wants_booking && !d.bookable {
                problems.push(format!("domain '{}' is not bookable", g.domain));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Samples a user goal over `domain_count` distinct domains.
///
/// Key slots are always constrained and other informable slots are included
/// with probability one half. Each domain asks for one to three requestable
/// slots, and bookable domains carry every booking slot. The result depends
/// only on the arguments.
pub fn generate_goal(ontology: &Ontology, seed: u64, domain_count: usize) -> Result<UserGoal> {
    let n = ontology.domains().len();
    if domain_count == 0 || domain_count > n {
        return Err(Error::Argument(format!(
            "domain_count must be in 1..={n}, got {domain_count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, domain_count).into_vec();
    picked.sort_unstable();

    let mut domains = Vec::with_capacity(domain_count);
    for i in picked {
        let d = &ontology.domains()[i];
        let mut constraints = BTreeMap::new();
        for (slot, values) in &d.informable {
            let is_key = d.key_slots.iter().any(|k| k == slot);
            let include = is_key || rng.random_bool(0.5);
            if include {
                if let Some(v) = values.choose(&mut rng) {
                    constraints.insert(slot.clone(), v.clone());
                }
            }
        }
        let requestable: Vec<&String> = d.requestable.keys().collect();
        let mut requests = BTreeSet::new();
        if !requestable.is_empty() {
            let k = rng.random_range(1..=requestable.len().min(3));
            for j in index::sample(&mut rng, requestable.len(), k) {
                requests.insert(requestable[j].clone());
            }
        }
        let mut book = BTreeMap::new();
        if d.bookable {
            for (slot, values) in &d.book {
                if let Some(v) = values.choose(&mut rng) {
                    book.insert(slot.clone(), v.clone());
                }
            }
        }
        domains.push(DomainGoal {
            domain: d.name.clone(),
            constraints,
            requests,
            book,
            wants_booking: d.bookable,
        });
    }
    Ok(UserGoal { domains })
}
