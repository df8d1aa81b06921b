//! MultiWOZ-style task metrics over a system act log.
//!
//! All rates are existential over the log, so act order never matters.
//! Vacuous goals count as satisfied: no requested slots gives `inform = 1`
//! and no booking domain gives `book = 1`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dialog::{ActType, DialogAct};
use crate::ontology::UserGoal;

/// Values that do not count as information.
pub const NULL_VALUES: [&str; 3] = ["", "dont care", "not mentioned"];

pub fn is_null(value: &str) -> bool {
    NULL_VALUES.contains(&value)
}

#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub goal: &'a UserGoal,
    pub acts: &'a [DialogAct],
}

impl<'a> EvalInput<'a> {
    pub fn new(goal: &'a UserGoal, acts: &'a [DialogAct]) -> Self {
        EvalInput { goal, acts }
    }

    fn informed_non_null(&self, domain: &str, slot: &str) -> bool {
        self.acts.iter().any(|a| {
            a.act == ActType::Inform && a.domain == domain && a.slot == slot && !is_null(&a.value)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InformCounts {
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
}

impl InformCounts {
    pub fn rate(&self) -> f64 {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            f64::from(self.tp) / f64::from(denom)
        }
    }
}

pub fn inform_counts(input: &EvalInput) -> InformCounts {
    let mut counts = InformCounts::default();
    for g in &input.goal.domains {
        for slot in &g.requests {
            if input.informed_non_null(&g.domain, slot) {
                counts.tp += 1;
            } else {
                counts.fn_ += 1;
            }
        }
        // I_d: the goal's constraint slots are exempt from false positives.
        let extra: BTreeSet<&str> = input
            .acts
            .iter()
            .filter(|a| {
                a.act == ActType::Inform
                    && a.domain == g.domain
                    && !is_null(&a.value)
                    && !g.requests.contains(&a.slot)
                    && !g.constraints.contains_key(&a.slot)
            })
            .map(|a| a.slot.as_str())
            .collect();
        counts.fp += extra.len() as u32;
    }
    counts
}

/// Booking rate of one goal domain, or `None` when the domain does not
/// require booking.
pub fn book_rate_for(input: &EvalInput, domain: &str) -> Option<f64> {
    let g = input.goal.domain(domain)?;
    if !g.wants_booking {
        return None;
    }
    let books = || {
        input
            .acts
            .iter()
            .filter(move |a| a.act == ActType::Book && a.domain == domain)
    };
    if g.book.is_empty() {
        // Taxi-style domain without booking constraints.
        return Some(if books().next().is_some() { 1.0 } else { 0.0 });
    }
    let matched = g
        .book
        .iter()
        .filter(|(slot, value)| books().any(|a| &a.slot == *slot && &a.value == *value))
        .count();
    Some(matched as f64 / g.book.len() as f64)
}

pub fn book_rate(input: &EvalInput) -> f64 {
    let rates: Vec<f64> = input
        .goal
        .domains
        .iter()
        .filter_map(|g| book_rate_for(input, &g.domain))
        .collect();
    if rates.is_empty() {
        1.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

pub fn success(input: &EvalInput) -> u8 {
    u8::from(inform_counts(input).rate() == 1.0 && book_rate(input) == 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
    pub inform: f64,
    pub book: f64,
    pub success: u8,
}

pub fn evaluate(input: &EvalInput) -> EvalReport {
    let c = inform_counts(input);
    let inform = c.rate();
    let book = book_rate(input);
    EvalReport {
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        inform,
        book,
        success: u8::from(inform == 1.0 && book == 1.0),
    }
}

/// Averages over evaluated episodes, reported in percent like the usual
/// benchmark tables (turns stay in turns).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    pub episodes: usize,
    pub inform: f64,
    pub success: f64,
    pub book: f64,
    pub avg_turns: f64,
}

impl AggregateReport {
    pub fn from_episodes<'a>(items: impl IntoIterator<Item = (&'a EvalReport, usize)>) -> Self {
        let mut r = AggregateReport::default();
        for (e, turns) in items {
            r.episodes += 1;
            r.inform += e.inform;
            r.book += e.book;
            r.success += f64::from(e.success);
            r.avg_turns += turns as f64;
        }
        if r.episodes > 0 {
            let n = r.episodes as f64;
            r.inform *= 100.0 / n;
            r.book *= 100.0 / n;
            r.success *= 100.0 / n;
            r.avg_turns /= n;
        }
        r
    }

    pub fn to_table(&self, label: &str) -> String {
        let mut s = String::from("agent\tInform\tSuccess\tBook\tAvg. Turns\n");
        let _ = writeln!(
            s,
            "{label}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            self.inform, self.success, self.book, self.avg_turns
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::DomainGoal;
    use std::collections::BTreeMap;

    fn goal(requests: &[&str], book: &[(&str, &str)], wants_booking: bool) -> UserGoal {
        UserGoal {
            domains: vec![DomainGoal {
                domain: "hotel".into(),
                constraints: [("area".to_string(), "east".to_string())].into(),
                requests: requests.iter().map(|s| s.to_string()).collect(),
                book: book
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect::<BTreeMap<_, _>>(),
                wants_booking,
            }],
        }
    }

    #[test]
    fn partial_inform() {
        let g = goal(&["phone", "address"], &[], false);
        let acts = [DialogAct::inform("hotel", "phone", "01223 000777")];
        let input = EvalInput::new(&g, &acts);
        let c = inform_counts(&input);
        assert_eq!((c.tp, c.fp, c.fn_), (1, 0, 1));
        assert_eq!(c.rate(), 0.5);
    }

    #[test]
    fn dont_care_is_not_information() {
        let g = goal(&["phone"], &[], false);
        let acts = [DialogAct::inform("hotel", "phone", "dont care")];
        let c = inform_counts(&EvalInput::new(&g, &acts));
        assert_eq!((c.tp, c.fn_), (0, 1));
    }

    #[test]
    fn vacuous_goal() {
        let g = goal(&[], &[], false);
        let input = EvalInput::new(&g, &[]);
        let c = inform_counts(&input);
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 0));
        assert_eq!(c.rate(), 1.0);
        assert_eq!(book_rate(&input), 1.0);
        assert_eq!(success(&input), 1);
    }

    #[test]
    fn constraint_informs_are_not_false_positives() {
        let g = goal(&["phone"], &[], false);
        let acts = [
            DialogAct::inform("hotel", "area", "east"),
            DialogAct::inform("hotel", "stars", "4"),
            DialogAct::inform("hotel", "stars", "5"),
        ];
        assert_eq!(inform_counts(&EvalInput::new(&g, &acts)).fp, 1);
    }

    #[test]
    fn partial_booking() {
        let g = goal(&[], &[("people", "2"), ("day", "today")], true);
        let acts = [DialogAct::book("hotel", "people", "2")];
        assert_eq!(book_rate(&EvalInput::new(&g, &acts)), 0.5);
        let wrong = [DialogAct::book("hotel", "people", "3")];
        assert_eq!(book_rate(&EvalInput::new(&g, &wrong)), 0.0);
    }

    #[test]
    fn taxi_booking_is_any_book_act() {
        let g = UserGoal {
            domains: vec![DomainGoal {
                domain: "taxi".into(),
                constraints: BTreeMap::new(),
                requests: Default::default(),
                book: BTreeMap::new(),
                wants_booking: true,
            }],
        };
        assert_eq!(book_rate(&EvalInput::new(&g, &[])), 0.0);
        let acts = [DialogAct::book("taxi", "", "")];
        assert_eq!(book_rate(&EvalInput::new(&g, &acts)), 1.0);
    }

    #[test]
    fn aggregate_in_percent() {
        let ok = EvalReport {
            tp: 1,
            fp: 0,
            fn_: 0,
            inform: 1.0,
            book: 1.0,
            success: 1,
        };
        let half = EvalReport {
            inform: 0.5,
            success: 0,
            ..ok.clone()
        };
        let agg = AggregateReport::from_episodes([(&ok, 10), (&half, 20)]);
        assert_eq!(agg.success, 50.0);
        assert_eq!(agg.inform, 75.0);
        assert_eq!(agg.avg_turns, 15.0);
    }
}
