use std::fmt;
use std::str::FromStr;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ontology::Ontology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActType {
    Inform,
    Request,
    Confirm,
    Book,
    Goodbye,
}

impl ActType {
    pub const ALL: [ActType; 5] = [
        ActType::Inform,
        ActType::Request,
        ActType::Confirm,
        ActType::Book,
        ActType::Goodbye,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActType::Inform => "inform",
            ActType::Request => "request",
            ActType::Confirm => "confirm",
            ActType::Book => "book",
            ActType::Goodbye => "goodbye",
        }
    }
}

impl fmt::Display for ActType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActType::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Validation(vec![format!("unknown act type '{s}'")]))
    }
}

/// `(act_type, domain, slot, value)`. On the wire this is a JSON array of
/// three strings when the value is empty and four otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DialogAct {
    pub act: ActType,
    pub domain: String,
    pub slot: String,
    pub value: String,
}

impl DialogAct {
    pub fn new(
        act: ActType,
        domain: impl Into<String>,
        slot: impl Into<String>,
        value: impl Into<String>,
    ) -> Self {
        DialogAct {
            act,
            domain: domain.into(),
            slot: slot.into(),
            value: value.into(),
        }
    }

    pub fn inform(domain: &str, slot: &str, value: &str) -> Self {
        Self::new(ActType::Inform, domain, slot, value)
    }

    pub fn request(domain: &str, slot: &str) -> Self {
        Self::new(ActType::Request, domain, slot, "")
    }

    pub fn confirm(domain: &str, slot: &str, value: &str) -> Self {
        Self::new(ActType::Confirm, domain, slot, value)
    }

    pub fn book(domain: &str, slot: &str, value: &str) -> Self {
        Self::new(ActType::Book, domain, slot, value)
    }

    pub fn goodbye() -> Self {
        Self::new(ActType::Goodbye, "", "", "")
    }

    /// The same act with its value dropped.
    pub fn template(&self) -> DialogAct {
        DialogAct {
            value: String::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        if self.act == ActType::Goodbye {
            return Ok(());
        }
        let Some(domain) = ontology.domain(&self.domain) else {
            return Err(Error::Validation(vec![format!(
                "act {self}: unknown domain '{}'",
                self.domain
            )]));
        };
        if self.slot.is_empty() {
            if self.act == ActType::Book {
                return Ok(());
            }
            return Err(Error::Validation(vec![format!("act {self}: missing slot")]));
        }
        if domain.slot_kind(&self.slot).is_none() {
            return Err(Error::Validation(vec![format!(
                "act {self}: unknown slot '{}.{}'",
                self.domain, self.slot
            )]));
        }
        Ok(())
    }
}

impl fmt::Display for DialogAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}", self.act, self.domain)?;
        if !self.slot.is_empty() {
            write!(f, ", {}", self.slot)?;
        }
        if !self.value.is_empty() {
            write!(f, ", \"{}\"", self.value)?;
        }
        f.write_str(")")
    }
}

impl Serialize for DialogAct {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let len = if self.value.is_empty() { 3 } else { 4 };
        let mut seq = serializer.serialize_seq(Some(len))?;
        seq.serialize_element(self.act.as_str())?;
        seq.serialize_element(&self.domain)?;
        seq.serialize_element(&self.slot)?;
        if len == 4 {
            seq.serialize_element(&self.value)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for DialogAct {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ActVisitor;

        impl<'de> Visitor<'de> for ActVisitor {
            type Value = DialogAct;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array [act_type, domain, slot] or [act_type, domain, slot, value]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<DialogAct, A::Error> {
                let act: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let act = act.parse::<ActType>().map_err(de::Error::custom)?;
                let domain: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let slot: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(2, &self))?;
                let value: String = seq.next_element()?.unwrap_or_default();
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(5, &self));
                }
                Ok(DialogAct {
                    act,
                    domain: domain.to_lowercase(),
                    slot: slot.to_lowercase(),
                    value,
                })
            }
        }

        deserializer.deserialize_seq(ActVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_form_drops_empty_value() {
        let a = DialogAct::request("restaurant", "area");
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            r#"["request","restaurant","area"]"#
        );
        let b = DialogAct::inform("restaurant", "phone", "01223 000001");
        assert_eq!(
            serde_json::to_string(&b).unwrap(),
            r#"["inform","restaurant","phone","01223 000001"]"#
        );
    }

    #[test]
    fn parses_capitalised_act_types() {
        let a: DialogAct = serde_json::from_str(r#"["Inform","Hotel","Area","east"]"#).unwrap();
        assert_eq!(a, DialogAct::inform("hotel", "area", "east"));
    }

    #[test]
    fn rejects_wrong_arity_and_unknown_acts() {
        assert!(serde_json::from_str::<DialogAct>(r#"["inform","hotel"]"#).is_err());
        assert!(serde_json::from_str::<DialogAct>(r#"["a","b","c","d","e"]"#).is_err());
        assert!(serde_json::from_str::<DialogAct>(r#"["shout","hotel","area"]"#).is_err());
    }

    #[test]
    fn validation_against_ontology() {
        let o = Ontology::builtin();
        DialogAct::goodbye().validate(&o).unwrap();
        DialogAct::book("taxi", "", "").validate(&o).unwrap();
        DialogAct::inform("restaurant", "phone", "1").validate(&o).unwrap();
        assert!(DialogAct::request("restaurant", "stars").validate(&o).is_err());
        assert!(DialogAct::request("spa", "area").validate(&o).is_err());
        assert!(DialogAct::request("restaurant", "").validate(&o).is_err());
    }
}
