use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DialogAct;
use crate::ontology::{slot_id, Ontology, SlotKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotStatus {
    #[default]
    Empty,
    Mentioned,
    Requested,
    Confirmed,
    Booked,
}

impl SlotStatus {
    fn code(self) -> char {
        match self {
            SlotStatus::Empty => '-',
            SlotStatus::Mentioned => 'm',
            SlotStatus::Requested => 'r',
            SlotStatus::Confirmed => 'c',
            SlotStatus::Booked => 'b',
        }
    }

    pub fn is_settled(self) -> bool {
        matches!(self, SlotStatus::Confirmed | SlotStatus::Booked)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotEntry {
    pub value: String,
    pub status: SlotStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DomainBelief {
    /// Informable and booking slots.
    pub slots: BTreeMap<String, SlotEntry>,
    /// Requestable slots: `requested` once the user asks, `mentioned` once
    /// the system has supplied a value.
    pub requests: BTreeMap<String, SlotEntry>,
    /// Domain-level booking flag for domains without booking slots.
    pub booked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Exchange {
    pub system: Vec<DialogAct>,
    pub user: Vec<DialogAct>,
}

/// The tracked dialog state `s_t`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BeliefState {
    pub turn: usize,
    pub domains: BTreeMap<String, DomainBelief>,
    #[serde(default)]
    pub history: Vec<Exchange>,
}

impl BeliefState {
    /// An all-empty belief over every domain of the ontology.
    pub fn empty(ontology: &Ontology) -> Self {
        let domains = ontology
            .domains()
            .iter()
            .map(|d| {
                let slots = d
                    .belief_slots()
                    .map(|(s, _)| (s.to_string(), SlotEntry::default()))
                    .collect();
                let requests = d
                    .requestable
                    .keys()
                    .map(|s| (s.clone(), SlotEntry::default()))
                    .collect();
                (
                    d.name.clone(),
                    DomainBelief {
                        slots,
                        requests,
                        booked: false,
                    },
                )
            })
            .collect();
        BeliefState {
            turn: 0,
            domains,
            history: Vec::new(),
        }
    }

    pub fn slot(&self, domain: &str, slot: &str) -> Option<&SlotEntry> {
        self.domains.get(domain)?.slots.get(slot)
    }

    pub fn slot_mut(&mut self, domain: &str, slot: &str) -> Option<&mut SlotEntry> {
        self.domains.get_mut(domain)?.slots.get_mut(slot)
    }

    pub fn request(&self, domain: &str, slot: &str) -> Option<&SlotEntry> {
        self.domains.get(domain)?.requests.get(slot)
    }

    pub fn request_mut(&mut self, domain: &str, slot: &str) -> Option<&mut SlotEntry> {
        self.domains.get_mut(domain)?.requests.get_mut(slot)
    }

    pub fn status(&self, domain: &str, slot: &str) -> SlotStatus {
        self.slot(domain, slot).map(|e| e.status).unwrap_or_default()
    }

    pub fn value(&self, domain: &str, slot: &str) -> &str {
        self.slot(domain, slot).map(|e| e.value.as_str()).unwrap_or("")
    }

    /// Global identifiers of slots holding a non-empty value (`A_t`).
    pub fn active_slot_ids(&self) -> Vec<String> {
        self.domains
            .iter()
            .flat_map(|(d, b)| {
                b.slots
                    .iter()
                    .filter(|(_, e)| !e.value.is_empty())
                    .map(move |(s, _)| slot_id(d, s))
            })
            .collect()
    }

    /// Identifiers of informable slots in the given domains (`S_relevant`).
    pub fn relevant_slots<'a>(
        &'a self,
        ontology: &'a Ontology,
        domains: &'a [&'a str],
    ) -> impl Iterator<Item = (&'a str, &'a str, &'a SlotEntry)> + 'a {
        domains.iter().flat_map(move |d| {
            self.domains.get(*d).into_iter().flat_map(move |b| {
                b.slots
                    .iter()
                    .filter(move |(s, _)| {
                        ontology.slot_kind(d, s) == Some(SlotKind::Informable)
                    })
                    .map(move |(s, e)| (*d, s.as_str(), e))
            })
        })
    }

    /// Compact status signature used as the tabular policy's state key.
    /// Values are deliberately left out; two beliefs with the same statuses
    /// share one key.
    pub fn status_key(&self) -> String {
        let mut key = String::new();
        for (d, b) in &self.domains {
            if !key.is_empty() {
                key.push(';');
            }
            key.push_str(d);
            key.push(':');
            key.extend(b.slots.values().map(|e| e.status.code()));
            key.push('/');
            key.extend(b.requests.values().map(|e| e.status.code()));
            if b.booked {
                key.push('!');
            }
        }
        key
    }

    /// Stable 64-bit FNV-1a digest of the serialized belief, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("belief serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_belief_covers_ontology() {
        let o = Ontology::builtin().subset(&["restaurant", "taxi"]).unwrap();
        let b = BeliefState::empty(&o);
        assert_eq!(b.turn, 0);
        assert_eq!(b.domains.len(), 2);
        assert_eq!(b.domains["restaurant"].slots.len(), 6);
        assert_eq!(b.domains["taxi"].requests.len(), 2);
        assert!(b.active_slot_ids().is_empty());
        assert_eq!(b.status_key(), "restaurant:------/---;taxi:----/--");
    }

    #[test]
    fn digest_tracks_content() {
        let o = Ontology::builtin().subset(&["restaurant"]).unwrap();
        let a = BeliefState::empty(&o);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.slot_mut("restaurant", "area").unwrap().value = "north".into();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(b.active_slot_ids(), vec!["restaurant.area"]);
    }
}
