use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Ontology;
use crate::error::{Error, Result};

/// Active slot identifiers of one annotated dialog turn.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusTurn {
    pub slots: BTreeSet<String>,
}

impl CorpusTurn {
    pub fn new<I, S>(slots: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CorpusTurn {
            slots: slots.into_iter().map(Into::into).collect(),
        }
    }

    /// One corpus line: a JSON array of slot identifiers.
    pub fn to_line(&self) -> String {
        serde_json::to_string(&self.slots).expect("string set serializes")
    }
}

pub fn load_corpus(path: impl AsRef<Path>, ontology: &Ontology) -> Result<Vec<CorpusTurn>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, ontology)
}

/// Parses line-delimited records. Blank lines are skipped; every unknown
/// identifier is reported together in one validation error.
pub fn parse_corpus(text: &str, ontology: &Ontology) -> Result<Vec<CorpusTurn>> {
    let mut turns = Vec::new();
    let mut unknown = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let slots: Vec<String> = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        for s in &slots {
            if !ontology.resolves(s) {
                unknown.push(format!("line {line_no}: unknown slot '{s}'"));
            }
        }
        turns.push(CorpusTurn::new(slots));
    }
    if unknown.is_empty() {
        Ok(turns)
    } else {
        Err(Error::Validation(unknown))
    }
}

/// Empirical conditional probabilities `M[i][j] = P(slot_j | slot_i)` over
/// corpus turns. Rows of never-seen slots are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    joint: Vec<u64>,
    values: Vec<f64>,
}

impl CooccurrenceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn joint_count(&self, i: usize, j: usize) -> u64 {
        self.joint[i * self.ids.len() + j]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    /// Entry by identifier; unknown identifiers read as 0.
    pub fn get(&self, from: &str, to: &str) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.at(i, j),
            _ => 0.0,
        }
    }

    /// Tab-separated dump: header row of identifiers, then one row per slot.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("slot");
        for id in &self.ids {
            out.push('\t');
            out.push_str(id);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.ids.len() {
                let _ = write!(out, "\t{}", self.at(i, j));
            }
            out.push('\n');
        }
        out
    }
}

pub fn build_cooccurrence(turns: &[CorpusTurn], ontology: &Ontology) -> CooccurrenceMatrix {
    let ids = ontology.slot_ids();
    let n = ids.len();
    let index: HashMap<String, usize> = ids.iter().cloned().zip(0..).collect();
    let mut counts = vec![0u64; n];
    let mut joint = vec![0u64; n * n];
    let mut active = Vec::new();
    for turn in turns {
        active.clear();
        active.extend(turn.slots.iter().filter_map(|s| index.get(s).copied()));
        for &i in &active {
            counts[i] += 1;
            for &j in &active {
                joint[i * n + j] += 1;
            }
        }
    }
    let values = (0..n * n)
        .map(|k| {
            let c = counts[k / n];
            if c == 0 {
                0.0
            } else {
                joint[k] as f64 / c as f64
            }
        })
        .collect();
    CooccurrenceMatrix {
        ids,
        index,
        counts,
        joint,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: &str = "restaurant.area";
    const B: &str = "restaurant.food";

    fn ontology() -> Ontology {
        Ontology::builtin().subset(&["restaurant"]).unwrap()
    }

    #[test]
    fn parses_three_records() {
        let text = format!("[\"{A}\",\"{B}\"]\n[\"{A}\"]\n[\"{A}\",\"{B}\"]\n");
        let turns = parse_corpus(&text, &ontology()).unwrap();
        assert_eq!(turns.len(), 3);
        assert_eq!(turns[1], CorpusTurn::new([A]));
    }

    #[test]
    fn empty_text_is_empty_corpus() {
        assert!(parse_corpus("", &ontology()).unwrap().is_empty());
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = format!("[\"{A}\"]\n[\"{A}\"\n");
        match parse_corpus(&text, &ontology()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_slots_are_listed() {
        let text = "[\"restaurant.area\",\"hotel.stars\"]\n[\"x.y\"]\n";
        match parse_corpus(text, &ontology()) {
            Err(Error::Validation(list)) => {
                assert_eq!(list.len(), 2);
                assert!(list[0].contains("hotel.stars"));
                assert!(list[1].contains("line 2"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn conditional_probabilities_from_counts() {
        let turns = vec![
            CorpusTurn::new([A, B]),
            CorpusTurn::new([A]),
            CorpusTurn::new([A, B]),
        ];
        let m = build_cooccurrence(&turns, &ontology());
        assert_eq!(m.get(A, B), 2.0 / 3.0);
        assert_eq!(m.get(B, A), 1.0);
        assert_eq!(m.get(A, A), 1.0);
    }

    #[test]
    fn single_slot_turn() {
        let m = build_cooccurrence(&[CorpusTurn::new([A])], &ontology());
        assert_eq!(m.get(A, A), 1.0);
        assert_eq!(m.get(A, B), 0.0);
        assert_eq!(m.get(B, B), 0.0);
    }

    #[test]
    fn empty_corpus_is_all_zero() {
        let m = build_cooccurrence(&[], &ontology());
        let n = m.len();
        assert!((0..n * n).all(|k| m.at(k / n, k % n) == 0.0));
    }

    proptest! {
        #[test]
        fn entries_are_conditional_frequencies(
            raw in prop::collection::vec(prop::collection::vec(0usize..6, 0..5), 0..40),
            shift in 0usize..40,
        ) {
            let o = ontology();
            let ids = o.slot_ids();
            let turns: Vec<CorpusTurn> = raw
                .iter()
                .map(|t| CorpusTurn::new(t.iter().map(|&k| ids[k].clone())))
                .collect();
            let m = build_cooccurrence(&turns, &o);
            for i in 0..m.len() {
                if m.count(i) > 0 {
                    prop_assert_eq!(m.at(i, i), 1.0);
                }
                for j in 0..m.len() {
                    let v = m.at(i, j);
                    prop_assert!((0.0..=1.0).contains(&v));
                    let back = v * m.count(i) as f64;
                    prop_assert!((back - m.joint_count(i, j) as f64).abs() < 1e-9);
                }
            }
            let mut rotated = turns.clone();
            if !rotated.is_empty() {
                let k = shift % rotated.len();
                rotated.rotate_left(k);
                rotated.reverse();
            }
            prop_assert_eq!(build_cooccurrence(&rotated, &o), m);
        }
    }
}
