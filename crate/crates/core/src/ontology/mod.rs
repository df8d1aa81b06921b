//! Domain and slot universe shared by every other module.
//!
//! An ontology lists, per domain, the informable slots (user constraints),
//! requestable slots (information the user asks for), booking slots, the key
//! slots used to score deliberative plans, and candidate values for each.
//! Global slot identifiers have the form `domain.slot`.

mod corpus;
mod goal;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{build_cooccurrence, load_corpus, parse_corpus, CooccurrenceMatrix, CorpusTurn};
pub use goal::{generate_goal, DomainGoal, UserGoal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Informable,
    Requestable,
    Book,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    #[serde(default)]
    pub bookable: bool,
    #[serde(default)]
    pub key_slots: Vec<String>,
    #[serde(default)]
    pub informable: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub requestable: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub book: BTreeMap<String, Vec<String>>,
}

impl Domain {
    pub fn slot_kind(&self, slot: &str) -> Option<SlotKind> {
        if self.informable.contains_key(slot) {
            Some(SlotKind::Informable)
        } else if self.book.contains_key(slot) {
            Some(SlotKind::Book)
        } else if self.requestable.contains_key(slot) {
            Some(SlotKind::Requestable)
        } else {
            None
        }
    }

    /// Slots tracked in the belief state: informable first, then booking.
    pub fn belief_slots(&self) -> impl Iterator<Item = (&str, SlotKind)> {
        self.informable
            .keys()
            .map(|s| (s.as_str(), SlotKind::Informable))
            .chain(self.book.keys().map(|s| (s.as_str(), SlotKind::Book)))
    }

    pub fn values(&self, slot: &str) -> &[String] {
        self.informable
            .get(slot)
            .or_else(|| self.book.get(slot))
            .or_else(|| self.requestable.get(slot))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    #[serde(rename = "domain")]
    domains: Vec<Domain>,
}

impl Ontology {
    pub fn new(domains: Vec<Domain>) -> Result<Self> {
        let ontology = Ontology { domains };
        ontology.validate()?;
        Ok(ontology)
    }

    /// Loads a TOML (default) or JSON (`.json`) ontology document.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let ontology: Ontology = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        ontology.validate()?;
        Ok(ontology)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ontology: Ontology = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        ontology.validate()?;
        Ok(ontology)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ontology is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.domains.is_empty() {
            problems.push("ontology has no domains".to_string());
        }
        let mut seen_domains = BTreeSet::new();
        for d in &self.domains {
            if !seen_domains.insert(d.name.as_str()) {
                problems.push(format!("duplicate domain '{}'", d.name));
            }
            if d.name.contains('.') {
                problems.push(format!("domain name '{}' must not contain '.'", d.name));
            }
            let mut seen = BTreeSet::new();
            for slot in d
                .informable
                .keys()
                .chain(d.requestable.keys())
                .chain(d.book.keys())
            {
                if !seen.insert(slot.as_str()) {
                    problems.push(format!("slot '{}.{}' declared twice", d.name, slot));
                }
            }
            for key in &d.key_slots {
                if !d.informable.contains_key(key) {
                    problems.push(format!(
                        "key slot '{}.{}' is not an informable slot",
                        d.name, key
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Extra check applied when booking metrics are in use.
    pub fn validate_for_booking(&self) -> Result<()> {
        if self.domains.iter().any(|d| d.bookable) {
            Ok(())
        } else {
            Err(Error::Validation(vec![
                "booking metrics enabled but no domain is bookable".into(),
            ]))
        }
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, name: &str) -> Option<&Domain> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_names(&self) -> impl Iterator<Item = &str> {
        self.domains.iter().map(|d| d.name.as_str())
    }

    pub fn slot_kind(&self, domain: &str, slot: &str) -> Option<SlotKind> {
        self.domain(domain)?.slot_kind(slot)
    }

    /// Global identifiers of every belief-state slot, in ontology order.
    pub fn slot_ids(&self) -> Vec<String> {
        self.domains
            .iter()
            .flat_map(|d| d.belief_slots().map(move |(s, _)| slot_id(&d.name, s)))
            .collect()
    }

    pub fn resolves(&self, id: &str) -> bool {
        split_slot_id(id).is_some_and(|(d, s)| {
            matches!(
                self.slot_kind(d, s),
                Some(SlotKind::Informable | SlotKind::Book)
            )
        })
    }

    /// Restrict to the named domains, keeping ontology order.
    pub fn subset(&self, names: &[&str]) -> Result<Ontology> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| self.domain(n).is_none())
            .map(|n| format!("unknown domain '{n}'"))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(missing));
        }
        Ontology::new(
            self.domains
                .iter()
                .filter(|d| names.contains(&d.name.as_str()))
                .cloned()
                .collect(),
        )
    }

    /// Built-in fixture ontology covering restaurant, movie, taxi, hotel and train.
    pub fn builtin() -> Ontology {
        let data = include_str!("../../fixtures/ontology.toml");
        Ontology::from_toml(data).expect("built-in ontology is valid")
    }
}

pub fn slot_id(domain: &str, slot: &str) -> String {
    format!("{domain}.{slot}")
}

pub fn split_slot_id(id: &str) -> Option<(&str, &str)> {
    let (d, s) = id.split_once('.')?;
    (!d.is_empty() && !s.is_empty()).then_some((d, s))
}
