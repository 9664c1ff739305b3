//! Distribution system description and the on-disk problem format.
//!
//! Bus ids are dense 0-based indices inside the crate. Every external
//! surface (problem documents, error messages, exports) uses 1-based ids.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energization::{BusStatus, BusStatusVector};

/// Largest bus count the MDP layer can represent (one bit per bus).
pub const MAX_MODEL_BUSES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("malformed problem document: {0}")]
    Parse(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("travel matrix must be {expected}x{expected}, found {found}")]
    MatrixShape { expected: usize, found: String },
    #[error("zero-diagonal axiom violated: time({bus},{bus}) = {value}")]
    NonZeroDiagonal { bus: usize, value: u32 },
    #[error("positivity axiom violated: time({from},{to}) = 0 for distinct buses")]
    ZeroTravel { from: usize, to: usize },
    #[error(
        "triangle inequality violated for triple ({i},{j},{k}): \
         time({i},{j}) + time({j},{k}) = {via} < time({i},{k}) = {direct}"
    )]
    Triangle {
        i: usize,
        j: usize,
        k: usize,
        via: u32,
        direct: u32,
    },
    #[error("failure probability of bus {bus} is {value}, outside [0, 1]")]
    ProbabilityRange { bus: usize, value: f64 },
    #[error("unknown bus id {0}")]
    UnknownBus(usize),
    #[error("branch ({0},{0}) connects a bus to itself")]
    SelfLoop(usize),
    #[error("at least one team is required")]
    NoTeams,
    #[error("team {team}: remaining time {remaining} must be below the largest travel time {max}")]
    TeamRemaining { team: usize, remaining: u32, max: u32 },
    #[error("bus {0} is energized but has no energized path to a source")]
    StrandedEnergized(usize),
    #[error("fragility curve: {0}")]
    Fragility(String),
    #[error("travel divisor must be positive, found {0}")]
    Divisor(f64),
}

/// Discrete travel times between every ordered pair of buses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TravelTimeMatrix {
    size: usize,
    entries: Vec<u32>,
}

impl TravelTimeMatrix {
    /// Builds a matrix from rows and checks the three travel-time axioms.
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self, ModelError> {
        let size = rows.len();
        let mut entries = Vec::with_capacity(size * size);
        for row in &rows {
            if row.len() != size {
                return Err(ModelError::MatrixShape {
                    expected: size,
                    found: format!("a row of length {}", row.len()),
                });
            }
            entries.extend_from_slice(row);
        }
        let matrix = Self { size, entries };
        matrix.validate()?;
        Ok(matrix)
    }

    /// Checks zero diagonal, positive off-diagonal entries and the
    /// triangle inequality. The first violation found is reported.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.size;
        for i in 0..n {
            let d = self.get(i, i);
            if d != 0 {
                return Err(ModelError::NonZeroDiagonal {
                    bus: i + 1,
                    value: d,
                });
            }
            for j in 0..n {
                if i != j && self.get(i, j) == 0 {
                    return Err(ModelError::ZeroTravel {
                        from: i + 1,
                        to: j + 1,
                    });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let ij = self.get(i, j);
                for k in 0..n {
                    let via = ij + self.get(j, k);
                    let direct = self.get(i, k);
                    if via < direct {
                        return Err(ModelError::Triangle {
                            i: i + 1,
                            j: j + 1,
                            k: k + 1,
                            via,
                            direct,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> u32 {
        self.entries[from * self.size + to]
    }

    pub fn max_time(&self) -> u32 {
        self.entries.iter().copied().max().unwrap_or(0)
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.entries.chunks(self.size.max(1)).map(<[u32]>::to_vec).collect()
    }

    /// Sub-matrix over the given buses, in the given order.
    pub fn restrict(&self, buses: &[usize]) -> Self {
        let mut entries = Vec::with_capacity(buses.len() * buses.len());
        for &a in buses {
            for &b in buses {
                entries.push(self.get(a, b));
            }
        }
        Self {
            size: buses.len(),
            entries,
        }
    }
}

/// Travel times from planar coordinates: `ceil(euclidean / divisor)` off the
/// diagonal, clamped to at least one so coincident points stay distinct.
pub fn derive_travel_matrix(
    coords: &[[f64; 2]],
    divisor: f64,
) -> Result<TravelTimeMatrix, ModelError> {
    if divisor.is_nan() || divisor <= 0.0 || divisor.is_infinite() {
        return Err(ModelError::Divisor(divisor));
    }
    let n = coords.len();
    let mut rows = vec![vec![0u32; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let units = (dx.hypot(dy) / divisor).ceil();
            rows[i][j] = (units as u32).max(1);
        }
    }
    // Re-validated regardless of origin; ceil is subadditive so this holds.
    TravelTimeMatrix::from_rows(rows)
}

/// Piecewise-linear map from peak ground acceleration to damage probability.
#[derive(Debug, Clone, PartialEq)]
pub struct FragilityCurve {
    points: Vec<(f64, f64)>,
}

impl FragilityCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::Fragility(
                "at least two sample points are required".into(),
            ));
        }
        for (idx, &(pga, p)) in points.iter().enumerate() {
            if pga.is_nan() || pga < 0.0 || pga.is_infinite() {
                return Err(ModelError::Fragility(format!(
                    "point {}: pga {pga} must be a non-negative number",
                    idx + 1
                )));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::Fragility(format!(
                    "point {}: probability {p} outside [0, 1]",
                    idx + 1
                )));
            }
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ModelError::Fragility(
                    "pga values must be strictly increasing".into(),
                ));
            }
            if w[1].1 < w[0].1 {
                return Err(ModelError::Fragility(
                    "probabilities must be non-decreasing in pga".into(),
                ));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Interpolates the damage probability at `pga`, clamping outside the
/// sampled range.
pub fn pf_from_fragility(curve: &FragilityCurve, pga: f64) -> f64 {
    let pts = &curve.points;
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if pga <= first.0 {
        return first.1;
    }
    if pga >= last.0 {
        return last.1;
    }
    let upper = pts.partition_point(|&(x, _)| x <= pga);
    let (x0, y0) = pts[upper - 1];
    let (x1, y1) = pts[upper];
    y0 + (y1 - y0) * (pga - x0) / (x1 - x0)
}

/// Where a team is when planning starts: at `bus` if `remaining == 0`,
/// otherwise travelling towards `bus` with `remaining` units left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TeamStart {
    pub bus: usize,
    pub remaining: u32,
}

impl TeamStart {
    pub fn at(bus: usize) -> Self {
        Self { bus, remaining: 0 }
    }
}

/// Immutable description of a distribution grid and its field teams.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSystem {
    name: Option<String>,
    bus_count: usize,
    branches: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    sources: Vec<usize>,
    pf: Vec<f64>,
    travel: TravelTimeMatrix,
    teams: Vec<TeamStart>,
    initial_status: Vec<BusStatus>,
    labels: Vec<Option<String>>,
    coords: Vec<Option<[f64; 2]>>,
    neighbor_masks: Vec<u64>,
    source_mask: u64,
}

impl DistributionSystem {
    /// Validates and assembles a system from 0-based parts. Duplicate and
    /// reversed branch entries are merged.
    pub fn new(
        bus_count: usize,
        branches: impl IntoIterator<Item = (usize, usize)>,
        sources: impl IntoIterator<Item = usize>,
        pf: Vec<f64>,
        travel: TravelTimeMatrix,
        teams: Vec<TeamStart>,
    ) -> Result<Self, ModelError> {
        if bus_count == 0 {
            return Err(ModelError::Schema("a system needs at least one bus".into()));
        }
        let check_bus = |b: usize| {
            if b < bus_count {
                Ok(b)
            } else {
                Err(ModelError::UnknownBus(b + 1))
            }
        };
        let mut branch_set = BTreeSet::new();
        for (a, b) in branches {
            check_bus(a)?;
            check_bus(b)?;
            if a == b {
                return Err(ModelError::SelfLoop(a + 1));
            }
            branch_set.insert((a.min(b), a.max(b)));
        }
        let mut source_set = BTreeSet::new();
        for s in sources {
            source_set.insert(check_bus(s)?);
        }
        if pf.len() != bus_count {
            return Err(ModelError::Schema(format!(
                "expected {bus_count} failure probabilities, found {}",
                pf.len()
            )));
        }
        for (i, &p) in pf.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::ProbabilityRange { bus: i + 1, value: p });
            }
        }
        if travel.size() != bus_count {
            return Err(ModelError::MatrixShape {
                expected: bus_count,
                found: format!("a {0}x{0} matrix", travel.size()),
            });
        }
        travel.validate()?;
        if teams.is_empty() {
            return Err(ModelError::NoTeams);
        }
        let max_time = travel.max_time();
        for (idx, t) in teams.iter().enumerate() {
            check_bus(t.bus)?;
            if t.remaining > 0 && t.remaining >= max_time {
                return Err(ModelError::TeamRemaining {
                    team: idx + 1,
                    remaining: t.remaining,
                    max: max_time,
                });
            }
        }

        let mut adjacency = vec![Vec::new(); bus_count];
        for &(a, b) in &branch_set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let (neighbor_masks, source_mask) = if bus_count <= MAX_MODEL_BUSES {
            let masks = adjacency
                .iter()
                .map(|list| list.iter().fold(0u64, |m, &j| m | (1u64 << j)))
                .collect();
            let src = source_set.iter().fold(0u64, |m, &s| m | (1u64 << s));
            (masks, src)
        } else {
            (Vec::new(), 0)
        };

        Ok(Self {
            name: None,
            bus_count,
            branches: branch_set.into_iter().collect(),
            adjacency,
            sources: source_set.into_iter().collect(),
            pf,
            travel,
            teams,
            initial_status: vec![BusStatus::Unknown; bus_count],
            labels: vec![None; bus_count],
            coords: vec![None; bus_count],
            neighbor_masks,
            source_mask,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_labels(mut self, labels: Vec<Option<String>>) -> Self {
        assert_eq!(labels.len(), self.bus_count);
        self.labels = labels;
        self
    }

    pub fn with_coords(mut self, coords: Vec<Option<[f64; 2]>>) -> Self {
        assert_eq!(coords.len(), self.bus_count);
        self.coords = coords;
        self
    }

    /// Replaces the all-unknown starting knowledge. Every energized bus must
    /// be fed from a source through energized buses.
    pub fn with_initial_status(mut self, status: Vec<BusStatus>) -> Result<Self, ModelError> {
        if status.len() != self.bus_count {
            return Err(ModelError::Schema(format!(
                "expected {} initial statuses, found {}",
                self.bus_count,
                status.len()
            )));
        }
        let mut fed = vec![false; self.bus_count];
        let mut stack: Vec<usize> = self
            .sources
            .iter()
            .copied()
            .filter(|&s| status[s] == BusStatus::Energized)
            .collect();
        for &s in &stack {
            fed[s] = true;
        }
        while let Some(b) = stack.pop() {
            for &nb in &self.adjacency[b] {
                if !fed[nb] && status[nb] == BusStatus::Energized {
                    fed[nb] = true;
                    stack.push(nb);
                }
            }
        }
        if let Some(b) = (0..self.bus_count).find(|&b| status[b] == BusStatus::Energized && !fed[b]) {
            return Err(ModelError::StrandedEnergized(b + 1));
        }
        self.initial_status = status;
        Ok(self)
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    pub fn team_count(&self) -> usize {
        self.teams.len()
    }

    /// Branches as `(low, high)` pairs, sorted.
    pub fn branches(&self) -> &[(usize, usize)] {
        &self.branches
    }

    pub fn neighbors(&self, bus: usize) -> &[usize] {
        &self.adjacency[bus]
    }

    pub fn has_branch(&self, a: usize, b: usize) -> bool {
        self.branches.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn is_source(&self, bus: usize) -> bool {
        self.sources.binary_search(&bus).is_ok()
    }

    pub fn pf(&self, bus: usize) -> f64 {
        self.pf[bus]
    }

    pub fn pfs(&self) -> &[f64] {
        &self.pf
    }

    pub fn travel(&self) -> &TravelTimeMatrix {
        &self.travel
    }

    #[inline]
    pub fn time(&self, from: usize, to: usize) -> u32 {
        self.travel.get(from, to)
    }

    pub fn teams(&self) -> &[TeamStart] {
        &self.teams
    }

    pub fn initial_status(&self) -> &[BusStatus] {
        &self.initial_status
    }

    pub fn initial_status_vector(&self) -> BusStatusVector {
        BusStatusVector::from_statuses(&self.initial_status)
    }

    pub fn label(&self, bus: usize) -> Option<&str> {
        self.labels[bus].as_deref()
    }

    pub fn coord(&self, bus: usize) -> Option<[f64; 2]> {
        self.coords[bus]
    }

    /// Bitmask of neighbors; only available when the system fits the MDP
    /// representation.
    #[inline]
    pub(crate) fn neighbor_mask(&self, bus: usize) -> u64 {
        self.neighbor_masks[bus]
    }

    #[inline]
    pub(crate) fn source_mask(&self) -> u64 {
        self.source_mask
    }

    pub fn fits_model(&self) -> bool {
        self.bus_count <= MAX_MODEL_BUSES
    }

    /// Copy with different team starts (all at buses).
    pub fn with_team_starts(&self, starts: &[usize]) -> Result<Self, ModelError> {
        self.rebuild(
            self.branches.iter().copied(),
            self.sources.iter().copied(),
            starts.iter().map(|&b| TeamStart::at(b)).collect(),
        )
    }

    /// Copy with extra branches added.
    pub fn with_extra_branches(&self, extra: &[(usize, usize)]) -> Result<Self, ModelError> {
        self.rebuild(
            self.branches.iter().copied().chain(extra.iter().copied()),
            self.sources.iter().copied(),
            self.teams.clone(),
        )
    }

    /// Copy with a different source set.
    pub fn with_sources(&self, sources: &[usize]) -> Result<Self, ModelError> {
        self.rebuild(
            self.branches.iter().copied(),
            sources.iter().copied(),
            self.teams.clone(),
        )
    }

    /// Copy with different failure probabilities.
    pub fn with_pf(&self, pf: Vec<f64>) -> Result<Self, ModelError> {
        let mut next = DistributionSystem::new(
            self.bus_count,
            self.branches.iter().copied(),
            self.sources.iter().copied(),
            pf,
            self.travel.clone(),
            self.teams.clone(),
        )?;
        next.name = self.name.clone();
        next.labels = self.labels.clone();
        next.coords = self.coords.clone();
        next.with_initial_status(self.initial_status.clone())
    }

    fn rebuild(
        &self,
        branches: impl IntoIterator<Item = (usize, usize)>,
        sources: impl IntoIterator<Item = usize>,
        teams: Vec<TeamStart>,
    ) -> Result<Self, ModelError> {
        let mut next = DistributionSystem::new(
            self.bus_count,
            branches,
            sources,
            self.pf.clone(),
            self.travel.clone(),
            teams,
        )?;
        next.name = self.name.clone();
        next.labels = self.labels.clone();
        next.coords = self.coords.clone();
        next.with_initial_status(self.initial_status.clone())
    }

    /// The sub-system induced by `buses` (0-based, any order); buses are
    /// renumbered in the order given.
    pub fn induced(
        &self,
        buses: &[usize],
        teams: Vec<TeamStart>,
    ) -> Result<Self, ModelError> {
        let mut local = vec![usize::MAX; self.bus_count];
        for (new, &old) in buses.iter().enumerate() {
            local[old] = new;
        }
        let branches: Vec<(usize, usize)> = self
            .branches
            .iter()
            .filter(|&&(a, b)| local[a] != usize::MAX && local[b] != usize::MAX)
            .map(|&(a, b)| (local[a], local[b]))
            .collect();
        let sources: Vec<usize> = self
            .sources
            .iter()
            .filter(|&&s| local[s] != usize::MAX)
            .map(|&s| local[s])
            .collect();
        let teams = teams
            .into_iter()
            .map(|t| {
                let bus = local.get(t.bus).copied().unwrap_or(usize::MAX);
                if bus == usize::MAX {
                    Err(ModelError::UnknownBus(t.bus + 1))
                } else {
                    Ok(TeamStart { bus, remaining: t.remaining })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pf = buses.iter().map(|&b| self.pf[b]).collect();
        let mut next = DistributionSystem::new(
            buses.len(),
            branches,
            sources,
            pf,
            self.travel.restrict(buses),
            teams,
        )?;
        next.labels = buses.iter().map(|&b| self.labels[b].clone()).collect();
        next.coords = buses.iter().map(|&b| self.coords[b]).collect();
        next.with_initial_status(buses.iter().map(|&b| self.initial_status[b]).collect())
    }

    /// Serializable form with an explicit travel matrix.
    pub fn to_document(&self) -> ProblemDocument {
        let buses = (0..self.bus_count)
            .map(|i| BusEntry {
                id: i + 1,
                pf: Some(self.pf[i]),
                pga: None,
                coord: self.coords[i],
                name: self.labels[i].clone(),
                status: match self.initial_status[i] {
                    BusStatus::Unknown => None,
                    s => Some(s),
                },
            })
            .collect();
        ProblemDocument {
            name: self.name.clone(),
            buses,
            branches: self.branches.iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
            sources: self.sources.iter().map(|&s| s + 1).collect(),
            teams: self
                .teams
                .iter()
                .map(|t| TeamEntry {
                    start: t.bus + 1,
                    remaining: (t.remaining > 0).then_some(t.remaining),
                })
                .collect(),
            travel: TravelSpec {
                matrix: Some(self.travel.rows()),
                divisor: None,
                rounding: None,
            },
            fragility: None,
            partitions: None,
        }
    }
}

impl fmt::Display for DistributionSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} buses, {} branches, {} sources, {} teams)",
            self.name.as_deref().unwrap_or("unnamed system"),
            self.bus_count,
            self.branches.len(),
            self.sources.len(),
            self.teams.len()
        )
    }
}

// ---------------------------------------------------------------------------
// Problem document (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub buses: Vec<BusEntry>,
    #[serde(default)]
    pub branches: Vec<[usize; 2]>,
    #[serde(default)]
    pub sources: Vec<usize>,
    pub teams: Vec<TeamEntry>,
    pub travel: TravelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragility: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Vec<PartitionEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pga: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Known status at planning time; absent means unknown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<BusStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamEntry {
    pub start: usize,
    /// Travel time left towards `start`; absent or zero means at the bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    Ceil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TravelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divisor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounding: Option<Rounding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionEntry {
    pub name: String,
    pub buses: Vec<usize>,
    pub teams: Vec<usize>,
}

/// Non-fatal observations made while loading a document.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub notes: Vec<String>,
}

impl ProblemDocument {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem documents always serialize")
    }

    /// Validates the document and produces the system it describes.
    pub fn build(&self) -> Result<(DistributionSystem, LoadReport), ModelError> {
        let mut report = LoadReport::default();
        let n = self.buses.len();
        if n == 0 {
            return Err(ModelError::Schema("\"buses\" must not be empty".into()));
        }
        let mut slots: Vec<Option<&BusEntry>> = vec![None; n];
        for entry in &self.buses {
            if entry.id == 0 || entry.id > n {
                return Err(ModelError::Schema(format!(
                    "bus id {} outside 1..={n} (ids must be dense)",
                    entry.id
                )));
            }
            if slots[entry.id - 1].replace(entry).is_some() {
                return Err(ModelError::Schema(format!("duplicate bus id {}", entry.id)));
            }
        }
        let entries: Vec<&BusEntry> = slots.into_iter().map(|e| e.expect("dense ids")).collect();

        let curve = match &self.fragility {
            Some(points) => Some(FragilityCurve::new(
                points.iter().map(|p| (p[0], p[1])).collect(),
            )?),
            None => None,
        };
        let mut pf = Vec::with_capacity(n);
        for e in &entries {
            let p = match (e.pf, e.pga) {
                (Some(p), pga) => {
                    if pga.is_some() {
                        report.notes.push(format!(
                            "bus {}: explicit pf overrides the pga-derived value",
                            e.id
                        ));
                    }
                    p
                }
                (None, Some(pga)) => {
                    let curve = curve.as_ref().ok_or_else(|| {
                        ModelError::Schema(format!(
                            "bus {} uses \"pga\" but no \"fragility\" table is given",
                            e.id
                        ))
                    })?;
                    if pga.is_nan() || pga < 0.0 {
                        return Err(ModelError::Schema(format!(
                            "bus {}: pga must be non-negative",
                            e.id
                        )));
                    }
                    pf_from_fragility(curve, pga)
                }
                (None, None) => {
                    return Err(ModelError::Schema(format!(
                        "bus {} needs either \"pf\" or \"pga\"",
                        e.id
                    )))
                }
            };
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::ProbabilityRange { bus: e.id, value: p });
            }
            pf.push(p);
        }

        let to_index = |id: usize| {
            if id >= 1 && id <= n {
                Ok(id - 1)
            } else {
                Err(ModelError::UnknownBus(id))
            }
        };

        let travel = match (&self.travel.matrix, self.travel.divisor) {
            (Some(_), Some(_)) => {
                return Err(ModelError::Schema(
                    "\"travel\" must give either \"matrix\" or \"divisor\", not both".into(),
                ))
            }
            (None, None) => {
                return Err(ModelError::Schema(
                    "\"travel\" must give either \"matrix\" or \"divisor\"".into(),
                ))
            }
            (Some(rows), None) => {
                if rows.len() != n {
                    return Err(ModelError::MatrixShape {
                        expected: n,
                        found: format!("{} rows", rows.len()),
                    });
                }
                TravelTimeMatrix::from_rows(rows.clone())?
            }
            (None, Some(divisor)) => {
                let coords = entries
                    .iter()
                    .map(|e| {
                        e.coord.ok_or_else(|| {
                            ModelError::Schema(format!(
                                "bus {} has no \"coord\" but travel times are derived from coordinates",
                                e.id
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                derive_travel_matrix(&coords, divisor)?
            }
        };

        let mut seen = BTreeSet::new();
        let mut branches = Vec::with_capacity(self.branches.len());
        for &[a, b] in &self.branches {
            let (a, b) = (to_index(a)?, to_index(b)?);
            if a == b {
                return Err(ModelError::SelfLoop(a + 1));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                report.notes.push(format!(
                    "duplicate branch ({},{}) ignored",
                    a.min(b) + 1,
                    a.max(b) + 1
                ));
                continue;
            }
            branches.push((a, b));
        }
        let sources = self
            .sources
            .iter()
            .map(|&s| to_index(s))
            .collect::<Result<Vec<_>, _>>()?;
        let teams = self
            .teams
            .iter()
            .map(|t| {
                Ok(TeamStart {
                    bus: to_index(t.start)?,
                    remaining: t.remaining.unwrap_or(0),
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;

        let mut system = DistributionSystem::new(n, branches, sources, pf, travel, teams)?;
        system.name = self.name.clone();
        system.labels = entries.iter().map(|e| e.name.clone()).collect();
        system.coords = entries.iter().map(|e| e.coord).collect();
        let status: Vec<BusStatus> = entries
            .iter()
            .map(|e| e.status.unwrap_or(BusStatus::Unknown))
            .collect();
        let system = system.with_initial_status(status)?;
        if !system.fits_model() {
            report.notes.push(format!(
                "{} buses exceed the {MAX_MODEL_BUSES}-bus limit of a single model; solve it through partitions",
                n
            ));
        }
        Ok((system, report))
    }
}

/// Parses and validates a problem document.
pub fn load_problem(text: &str) -> Result<DistributionSystem, ModelError> {
    ProblemDocument::parse(text)?.build().map(|(system, _)| system)
}
