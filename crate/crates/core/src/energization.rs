//! Reachability sets and the energization cascade.
//!
//! Everything here is a pure function of the system and a bus-status
//! vector, so the builder, the oracle and the session executor share it.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::system_model::DistributionSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BusStatus {
    #[serde(rename = "U")]
    Unknown,
    #[serde(rename = "D")]
    Damaged,
    #[serde(rename = "E")]
    Energized,
}

impl BusStatus {
    pub fn letter(self) -> char {
        match self {
            BusStatus::Unknown => 'U',
            BusStatus::Damaged => 'D',
            BusStatus::Energized => 'E',
        }
    }
}

/// A set of buses, one bit per 0-based bus index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct BusSet(u64);

impl BusSet {
    pub const EMPTY: BusSet = BusSet(0);

    pub fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(bus: usize) -> Self {
        Self(1u64 << bus)
    }

    #[inline]
    pub fn contains(self, bus: usize) -> bool {
        bus < 64 && self.0 & (1u64 << bus) != 0
    }

    pub fn insert(&mut self, bus: usize) {
        self.0 |= 1u64 << bus;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: BusSet) -> BusSet {
        BusSet(self.0 | other.0)
    }

    pub fn intersection(self, other: BusSet) -> BusSet {
        BusSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: BusSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Buses in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(b)
            }
        })
    }

    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }
}

impl FromIterator<usize> for BusSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut set = BusSet::EMPTY;
        for b in iter {
            set.insert(b);
        }
        set
    }
}

/// Per-bus knowledge of the grid, packed as two bitmasks.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BusStatusVector {
    energized: u64,
    damaged: u64,
    len: u8,
}

impl BusStatusVector {
    pub fn all_unknown(len: usize) -> Self {
        assert!(len <= 64, "status vectors hold at most 64 buses");
        Self {
            energized: 0,
            damaged: 0,
            len: len as u8,
        }
    }

    pub fn from_statuses(statuses: &[BusStatus]) -> Self {
        let mut v = Self::all_unknown(statuses.len());
        for (i, &s) in statuses.iter().enumerate() {
            v = v.with(i, s);
        }
        v
    }

    /// Parses the compact `"EUUEDU"` form used in tests and fixtures.
    pub fn from_letters(text: &str) -> Option<Self> {
        let statuses = text
            .chars()
            .filter(|c| !matches!(c, ',' | ' ' | '[' | ']'))
            .map(|c| match c {
                'U' => Some(BusStatus::Unknown),
                'D' => Some(BusStatus::Damaged),
                'E' => Some(BusStatus::Energized),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        (statuses.len() <= 64).then(|| Self::from_statuses(&statuses))
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, bus: usize) -> BusStatus {
        let bit = 1u64 << bus;
        if self.energized & bit != 0 {
            BusStatus::Energized
        } else if self.damaged & bit != 0 {
            BusStatus::Damaged
        } else {
            BusStatus::Unknown
        }
    }

    #[must_use]
    pub fn with(self, bus: usize, status: BusStatus) -> Self {
        assert!(bus < self.len(), "bus {bus} out of range");
        let bit = 1u64 << bus;
        let mut next = self;
        next.energized &= !bit;
        next.damaged &= !bit;
        match status {
            BusStatus::Energized => next.energized |= bit,
            BusStatus::Damaged => next.damaged |= bit,
            BusStatus::Unknown => {}
        }
        next
    }

    pub fn energized(&self) -> BusSet {
        BusSet(self.energized)
    }

    pub fn damaged(&self) -> BusSet {
        BusSet(self.damaged)
    }

    pub fn unknown(&self) -> BusSet {
        BusSet(self.full_mask() & !(self.energized | self.damaged))
    }

    fn full_mask(&self) -> u64 {
        if self.len == 64 {
            u64::MAX
        } else {
            (1u64 << self.len) - 1
        }
    }

    pub fn statuses(&self) -> Vec<BusStatus> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    /// Buses whose status differs, with the status in `other`.
    pub fn changes_to(&self, other: &BusStatusVector) -> Vec<(usize, BusStatus)> {
        let diff = (self.energized ^ other.energized) | (self.damaged ^ other.damaged);
        BusSet(diff).iter().map(|b| (b, other.get(b))).collect()
    }
}

impl fmt::Display for BusStatusVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for i in 0..self.len() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", self.get(i).letter())?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for BusStatusVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for BusStatusVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.statuses().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BusStatusVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let statuses = Vec::<BusStatus>::deserialize(deserializer)?;
        if statuses.len() > 64 {
            return Err(serde::de::Error::custom("status vectors hold at most 64 buses"));
        }
        Ok(Self::from_statuses(&statuses))
    }
}

/// Unknown buses that can be attempted right now: fed by a source or by an
/// energized neighbor.
pub fn beta1(system: &DistributionSystem, s: &BusStatusVector) -> BusSet {
    let mut fed = system.source_mask();
    for e in s.energized().iter() {
        fed |= system.neighbor_mask(e);
    }
    BusSet(fed).intersection(s.unknown())
}

/// Unknown buses reachable after some sequence of successful attempts: the
/// closure of [`beta1`] through unknown neighbors.
pub fn beta(system: &DistributionSystem, s: &BusStatusVector) -> BusSet {
    let unknown = s.unknown().bits();
    let mut reached = beta1(system, s).bits();
    let mut frontier = reached;
    while frontier != 0 {
        let mut next = 0u64;
        for b in BusSet(frontier).iter() {
            next |= system.neighbor_mask(b);
        }
        next &= unknown & !reached;
        reached |= next;
        frontier = next;
    }
    BusSet(reached)
}

/// Attemptable buses given the positions of teams standing at buses.
pub fn alpha(system: &DistributionSystem, s: &BusStatusVector, positions: BusSet) -> BusSet {
    beta1(system, s).intersection(positions)
}

/// Number of buses that are not energized.
pub fn cost(s: &BusStatusVector) -> u32 {
    (s.len() - s.energized().len()) as u32
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub status: BusStatusVector,
    pub probability: f64,
}

/// Distribution over the status vectors at which no further attempt is
/// possible for a fixed set of team positions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutcomeSet {
    outcomes: Vec<Outcome>,
}

impl OutcomeSet {
    pub fn certain(status: BusStatusVector) -> Self {
        Self {
            outcomes: vec![Outcome {
                status,
                probability: 1.0,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Outcome> {
        self.outcomes.iter()
    }

    pub fn probability_of(&self, status: &BusStatusVector) -> f64 {
        self.outcomes
            .iter()
            .find(|o| &o.status == status)
            .map_or(0.0, |o| o.probability)
    }

    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    fn add(&mut self, status: BusStatusVector, probability: f64) {
        match self.outcomes.iter_mut().find(|o| o.status == status) {
            Some(o) => o.probability += probability,
            None => self.outcomes.push(Outcome { status, probability }),
        }
    }
}

impl IntoIterator for OutcomeSet {
    type Item = Outcome;
    type IntoIter = std::vec::IntoIter<Outcome>;
    fn into_iter(self) -> Self::IntoIter {
        self.outcomes.into_iter()
    }
}

impl<'a> IntoIterator for &'a OutcomeSet {
    type Item = &'a Outcome;
    type IntoIter = std::slice::Iter<'a, Outcome>;
    fn into_iter(self) -> Self::IntoIter {
        self.outcomes.iter()
    }
}

/// Runs the attempt cascade at fixed team positions.
///
/// Attemptable buses are resolved one at a time in ascending id order; a
/// success can make further buses at the same positions attemptable. Leaves
/// where nothing more can be attempted are returned with the product of the
/// per-bus outcome probabilities. Zero-probability branches are pruned and
/// leaves reached through different orders are merged.
pub fn enumerate_outcomes(
    system: &DistributionSystem,
    s: &BusStatusVector,
    positions: BusSet,
) -> OutcomeSet {
    let mut out = OutcomeSet::default();
    let mut stack = vec![(*s, 1.0f64)];
    while let Some((state, prob)) = stack.pop() {
        match alpha(system, &state, positions).first() {
            None => out.add(state, prob),
            Some(bus) => {
                let pf = system.pf(bus);
                // Pushed in reverse so the energized branch is explored first.
                if pf > 0.0 {
                    stack.push((state.with(bus, BusStatus::Damaged), prob * pf));
                }
                if pf < 1.0 {
                    stack.push((state.with(bus, BusStatus::Energized), prob * (1.0 - pf)));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system_model::{DistributionSystem, TeamStart, TravelTimeMatrix};

    fn example() -> DistributionSystem {
        let rows = (0..6)
            .map(|i| (0..6).map(|j| u32::from(i != j)).collect())
            .collect();
        DistributionSystem::new(
            6,
            [(0, 1), (1, 2), (3, 4), (4, 5)],
            [0, 3],
            vec![0.5, 0.5, 0.25, 0.25, 0.25, 0.25],
            TravelTimeMatrix::from_rows(rows).unwrap(),
            vec![TeamStart::at(0)],
        )
        .unwrap()
    }

    fn v(text: &str) -> BusStatusVector {
        BusStatusVector::from_letters(text).unwrap()
    }

    fn set(ids: &[usize]) -> BusSet {
        ids.iter().map(|i| i - 1).collect()
    }

    #[test]
    fn beta1_examples() {
        let sys = example();
        assert_eq!(beta1(&sys, &v("UUUUUU")), set(&[1, 4]));
        assert_eq!(beta1(&sys, &v("EUUEDU")), set(&[2]));
        assert_eq!(beta1(&sys, &v("EEEEEE")), BusSet::EMPTY);
    }

    #[test]
    fn beta_examples() {
        let sys = example();
        assert_eq!(beta(&sys, &v("UUUUUU")), set(&[1, 2, 3, 4, 5, 6]));
        assert_eq!(beta(&sys, &v("EUUEDU")), set(&[2, 3]));
        assert_eq!(beta(&sys, &v("DDDDDD")), BusSet::EMPTY);
    }

    #[test]
    fn alpha_examples() {
        let sys = example();
        assert_eq!(alpha(&sys, &v("EUUEDU"), set(&[2, 3])), set(&[2]));
        assert_eq!(alpha(&sys, &v("EUUEDU"), BusSet::EMPTY), BusSet::EMPTY);
        assert_eq!(alpha(&sys, &v("UUUUUU"), set(&[1, 2])), set(&[1]));
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cost(&v("EUUEDU")), 4);
        assert_eq!(cost(&v("EEEEEE")), 0);
        assert_eq!(cost(&v("UUUUUU")), 6);
    }

    #[test]
    fn cascade_from_midway_state() {
        let sys = example();
        let out = enumerate_outcomes(&sys, &v("EUUEDU"), set(&[2, 3]));
        assert_eq!(out.len(), 3);
        assert!((out.probability_of(&v("EDUEDU")) - 0.5).abs() < 1e-12);
        assert!((out.probability_of(&v("EEEEDU")) - 0.375).abs() < 1e-12);
        assert!((out.probability_of(&v("EEDEDU")) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn no_attempt_means_certain_outcome() {
        let sys = example();
        let s = v("EUUEDU");
        assert_eq!(enumerate_outcomes(&sys, &s, set(&[3, 6])), OutcomeSet::certain(s));
    }

    #[test]
    fn single_bus_bernoulli_and_pruning() {
        let rows = vec![vec![0]];
        let make = |p: f64| {
            DistributionSystem::new(
                1,
                [],
                [0],
                vec![p],
                TravelTimeMatrix::from_rows(rows.clone()).unwrap(),
                vec![TeamStart::at(0)],
            )
            .unwrap()
        };
        let out = enumerate_outcomes(&make(0.3), &v("U"), set(&[1]));
        assert!((out.probability_of(&v("E")) - 0.7).abs() < 1e-12);
        assert!((out.probability_of(&v("D")) - 0.3).abs() < 1e-12);
        let certain = enumerate_outcomes(&make(1.0), &v("U"), set(&[1]));
        assert_eq!(certain.len(), 1);
        assert_eq!(certain.probability_of(&v("D")), 1.0);
    }

    #[test]
    fn status_vector_display_and_changes() {
        let a = v("EUUEDU");
        assert_eq!(a.to_string(), "[E,U,U,E,D,U]");
        let b = v("EEDEDU");
        assert_eq!(
            a.changes_to(&b),
            vec![(1, BusStatus::Energized), (2, BusStatus::Damaged)]
        );
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"["E","U","U","E","D","U"]"#);
        assert_eq!(serde_json::from_str::<BusStatusVector>(&json).unwrap(), a);
    }
}
