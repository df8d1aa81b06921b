//! The three-dimensional cognitive state `[d, u, rho]`, its discretization
//! into a bin grid, and visitation counts over that grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dialog::BeliefState;
use crate::error::{Error, Result};
use crate::ontology::{slot_id, CooccurrenceMatrix, Ontology};

pub const DEFAULT_BINS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CognitiveState {
    pub d: f64,
    pub u: f64,
    pub rho: f64,
}

impl CognitiveState {
    /// Components are clamped into `[0, 1]`; NaN maps to 0.
    pub fn new(d: f64, u: f64, rho: f64) -> Self {
        let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        CognitiveState {
            d: clamp(d),
            u: clamp(u),
            rho: clamp(rho),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.d, self.u, self.rho]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct BinnedState {
    pub d: u32,
    pub u: u32,
    pub rho: u32,
}

impl BinnedState {
    pub fn new(d: u32, u: u32, rho: u32) -> Self {
        BinnedState { d, u, rho }
    }
}

impl std::fmt::Display for BinnedState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.d, self.u, self.rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyVariant {
    /// Mean of `M[i][j]` over ordered pairs of distinct active slots.
    #[default]
    AvgPairwise,
    /// Strongest mean pull of any unfilled slot toward the filled ones.
    MaxUnfilled,
}

impl FromStr for DependencyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "avg_pairwise" => Ok(DependencyVariant::AvgPairwise),
            "max_unfilled" => Ok(DependencyVariant::MaxUnfilled),
            other => Err(Error::Config(format!("unknown dependency variant '{other}'"))),
        }
    }
}

/// `t / L`, clamped to `[0, 1]`.
pub fn compute_progress(t: usize, max_turns: usize) -> f64 {
    if max_turns == 0 {
        return 1.0;
    }
    (t as f64 / max_turns as f64).min(1.0)
}

/// Share of the goal domains' informable slots that are not yet confirmed or
/// booked. No relevant slots gives 0.
pub fn compute_uncertainty(belief: &BeliefState, ontology: &Ontology, goal_domains: &[&str]) -> f64 {
    let mut relevant = 0usize;
    let mut unsettled = 0usize;
    for (_, _, entry) in belief.relevant_slots(ontology, goal_domains) {
        relevant += 1;
        if !entry.status.is_settled() {
            unsettled += 1;
        }
    }
    if relevant == 0 {
        0.0
    } else {
        unsettled as f64 / relevant as f64
    }
}

pub fn compute_dependency(
    belief: &BeliefState,
    m: &CooccurrenceMatrix,
    variant: DependencyVariant,
) -> f64 {
    let filled: Vec<usize> = belief
        .active_slot_ids()
        .iter()
        .filter_map(|id| m.index_of(id))
        .collect();
    match variant {
        DependencyVariant::AvgPairwise => avg_pairwise(m, &filled),
        DependencyVariant::MaxUnfilled => {
            let filled_set: BTreeSet<usize> = filled.iter().copied().collect();
            let unfilled: Vec<usize> = belief
                .domains
                .iter()
                .flat_map(|(d, b)| b.slots.keys().map(move |s| slot_id(d, s)))
                .filter_map(|id| m.index_of(&id))
                .filter(|i| !filled_set.contains(i))
                .collect();
            max_unfilled(m, &unfilled, &filled)
        }
    }
}

/// Average over ordered pairs `i != j` of `M[i][j]`; fewer than two slots
/// gives 0.
pub fn avg_pairwise(m: &CooccurrenceMatrix, active: &[usize]) -> f64 {
    let n = active.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for &i in active {
        for &j in active {
            if i != j {
                sum += m.at(i, j);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

pub fn max_unfilled(m: &CooccurrenceMatrix, unfilled: &[usize], filled: &[usize]) -> f64 {
    if unfilled.is_empty() || filled.is_empty() {
        return 0.0;
    }
    unfilled
        .iter()
        .map(|&u| filled.iter().map(|&f| m.at(u, f)).sum::<f64>() / filled.len() as f64)
        .fold(0.0, f64::max)
}

/// Uniform bins, half-open except the last, which also takes 1.0.
pub fn bin_of(value: f64, bins: u32) -> u32 {
    let bins = bins.max(1);
    let v = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
    ((v * f64::from(bins)).floor() as u32).min(bins - 1)
}

pub fn discretize(c: &CognitiveState, bins: u32) -> BinnedState {
    BinnedState {
        d: bin_of(c.d, bins),
        u: bin_of(c.u, bins),
        rho: bin_of(c.rho, bins),
    }
}

/// Everything needed to turn a belief into a cognitive state.
#[derive(Debug, Clone)]
pub struct CognitiveModel<'a> {
    pub ontology: &'a Ontology,
    pub cooccurrence: &'a CooccurrenceMatrix,
    pub variant: DependencyVariant,
    pub max_turns: usize,
}

impl CognitiveModel<'_> {
    pub fn observe(&self, belief: &BeliefState, goal_domains: &[&str]) -> CognitiveState {
        CognitiveState::new(
            compute_progress(belief.turn, self.max_turns),
            compute_uncertainty(belief, self.ontology, goal_domains),
            compute_dependency(belief, self.cooccurrence, self.variant),
        )
    }
}

/// Visit counts per cell plus the global step clock.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VisitationTable {
    counts: BTreeMap<BinnedState, u64>,
    total: u64,
}

impl VisitationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one visit and returns the cell's new count.
    pub fn visit(&mut self, cell: BinnedState) -> u64 {
        self.total += 1;
        let c = self.counts.entry(cell).or_insert(0);
        *c += 1;
        *c
    }

    pub fn count(&self, cell: &BinnedState) -> u64 {
        self.counts.get(cell).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cells(&self) -> impl Iterator<Item = (&BinnedState, &u64)> {
        self.counts.iter()
    }

    /// Adds another worker's counts into this table.
    pub fn merge(&mut self, other: &VisitationTable) {
        for (cell, n) in &other.counts {
            *self.counts.entry(*cell).or_insert(0) += n;
        }
        self.total += other.total;
    }

    /// Reads the format written by [`VisitationTable::to_tsv`]. The step
    /// clock is restored as the sum of the counts.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut table = VisitationTable::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parsed: Option<Vec<u64>> = (fields.len() == 4)
                .then(|| fields.iter().map(|f| f.trim().parse().ok()).collect())
                .flatten();
            let Some(v) = parsed else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected four unsigned integers, got {line:?}"),
                });
            };
            let to_bin = |x: u64| u32::try_from(x).map_err(|_| Error::Parse { line: i + 1, message: format!("bin {x} out of range") });
            let cell = BinnedState::new(to_bin(v[0])?, to_bin(v[1])?, to_bin(v[2])?);
            *table.counts.entry(cell).or_insert(0) += v[3];
            table.total += v[3];
        }
        Ok(table)
    }

    /// `d_bin`, `u_bin`, `rho_bin`, `count` rows for visited cells.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("d_bin\tu_bin\trho_bin\tcount\n");
        for (c, n) in &self.counts {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", c.d, c.u, c.rho, n);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::SlotStatus;
    use crate::ontology::{build_cooccurrence, CorpusTurn};
    use proptest::prelude::*;

    const A: &str = "restaurant.area";

    #[test]
    fn visitation_tsv_round_trip() {
        let mut t = VisitationTable::new();
        for cell in [BinnedState::new(0, 1, 2), BinnedState::new(4, 4, 4), BinnedState::new(0, 1, 2)] {
            t.visit(cell);
        }
        assert_eq!(VisitationTable::from_tsv(&t.to_tsv()).unwrap(), t);
        let bad = "d_bin\tu_bin\trho_bin\tcount\n1\t2\tx\t3\n";
        assert!(matches!(VisitationTable::from_tsv(bad), Err(Error::Parse { line: 2, .. })));
    }

    const B: &str = "restaurant.food";

    #[test]
    fn progress() {
        assert_eq!(compute_progress(6, 40), 0.15);
        assert_eq!(compute_progress(0, 30), 0.0);
        assert_eq!(compute_progress(30, 30), 1.0);
    }

    #[test]
    fn uncertainty_counts_unsettled_relevant_slots() {
        let o = Ontology::builtin().subset(&["restaurant", "taxi"]).unwrap();
        let mut b = BeliefState::empty(&o);
        // restaurant has 3 informable slots, taxi 4
        assert_eq!(compute_uncertainty(&b, &o, &["restaurant"]), 1.0);
        for s in ["area", "food", "pricerange"] {
            b.slot_mut("restaurant", s).unwrap().status = SlotStatus::Confirmed;
        }
        assert_eq!(compute_uncertainty(&b, &o, &["restaurant"]), 0.0);
        b.slot_mut("restaurant", "food").unwrap().status = SlotStatus::Mentioned;
        let u = compute_uncertainty(&b, &o, &["restaurant", "taxi"]);
        assert_eq!(u, 5.0 / 7.0);
        assert_eq!(compute_uncertainty(&b, &o, &[]), 0.0);
    }

    fn matrix() -> (Ontology, CooccurrenceMatrix) {
        let o = Ontology::builtin().subset(&["restaurant"]).unwrap();
        let turns = [CorpusTurn::new([A, B]), CorpusTurn::new([A]), CorpusTurn::new([A, B])];
        let m = build_cooccurrence(&turns, &o);
        (o, m)
    }

    #[test]
    fn avg_pairwise_two_slots() {
        let (o, m) = matrix();
        let mut b = BeliefState::empty(&o);
        b.slot_mut("restaurant", "area").unwrap().value = "north".into();
        assert_eq!(compute_dependency(&b, &m, DependencyVariant::AvgPairwise), 0.0);
        b.slot_mut("restaurant", "food").unwrap().value = "thai".into();
        // (2/3 + 1) / 2
        let expected = (2.0 / 3.0 + 1.0) / 2.0;
        assert!((compute_dependency(&b, &m, DependencyVariant::AvgPairwise) - expected).abs() < 1e-12);
        assert!((expected - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn max_unfilled_single_term() {
        let o = Ontology::builtin().subset(&["restaurant"]).unwrap();
        // 10 turns: B appears 10 times, A with B 9 times, so M[B][A] = 0.9
        let mut turns = vec![CorpusTurn::new([A, B]); 9];
        turns.push(CorpusTurn::new([B]));
        let m = build_cooccurrence(&turns, &o);
        let (ia, ib) = (m.index_of(A).unwrap(), m.index_of(B).unwrap());
        assert_eq!(max_unfilled(&m, &[ib], &[ia]), 0.9);
        assert_eq!(max_unfilled(&m, &[], &[ia]), 0.0);
        assert_eq!(max_unfilled(&m, &[ib], &[]), 0.0);
        let mut b = BeliefState::empty(&o);
        b.slot_mut("restaurant", "area").unwrap().value = "north".into();
        assert_eq!(compute_dependency(&b, &m, DependencyVariant::MaxUnfilled), 0.9);
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(&CognitiveState::new(0.15, 0.8, 0.6), 5), BinnedState::new(0, 4, 3));
        assert_eq!(discretize(&CognitiveState::new(0.0, 0.0, 0.0), 5), BinnedState::new(0, 0, 0));
        assert_eq!(discretize(&CognitiveState::new(1.0, 1.0, 1.0), 5), BinnedState::new(4, 4, 4));
    }

    #[test]
    fn visits() {
        let mut t = VisitationTable::new();
        let a = BinnedState::new(0, 1, 2);
        assert_eq!(t.visit(a), 1);
        t.visit(a);
        assert_eq!(t.visit(a), 3);
        assert_eq!(t.total(), 3);
        assert_eq!(t.visit(BinnedState::new(4, 4, 4)), 1);
        assert_eq!(t.to_tsv().lines().count(), 3);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("max-unfilled".parse::<DependencyVariant>().unwrap(), DependencyVariant::MaxUnfilled);
        assert!("median".parse::<DependencyVariant>().is_err());
    }

    proptest! {
        #[test]
        fn components_stay_in_unit_interval(d in -2.0f64..3.0, u in -2.0f64..3.0, r in -2.0f64..3.0) {
            let c = CognitiveState::new(d, u, r);
            for v in c.as_array() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let b = discretize(&c, 5);
            prop_assert!(b.d < 5 && b.u < 5 && b.rho < 5);
        }

        #[test]
        fn avg_pairwise_is_relabeling_invariant(
            raw in prop::collection::vec(prop::collection::vec(0usize..6, 1..5), 1..30),
            active in prop::collection::btree_set(0usize..6, 0..6),
        ) {
            let o = Ontology::builtin().subset(&["restaurant"]).unwrap();
            let ids = o.slot_ids();
            let turns: Vec<CorpusTurn> = raw
                .iter()
                .map(|t| CorpusTurn::new(t.iter().map(|&k| ids[k].clone())))
                .collect();
            let m = build_cooccurrence(&turns, &o);
            let idx: Vec<usize> = active.iter().map(|&k| m.index_of(&ids[k]).unwrap()).collect();
            let mut rev = idx.clone();
            rev.reverse();
            let a = avg_pairwise(&m, &idx);
            prop_assert!((a - avg_pairwise(&m, &rev)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
