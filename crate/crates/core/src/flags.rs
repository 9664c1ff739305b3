//! Model-reduction switches, spelled with the one-letter codes used in
//! benchmark reports: V, P, W, O, S.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct OptFlags {
    /// V: fuse deterministic travel into duration-weighted transitions.
    pub fuse_travel: bool,
    /// P: drop dominated team/target permutations and team exchanges.
    pub prune_permutations: bool,
    /// W: teams that arrive without an attempt wait for the next attempt.
    pub wait_for_attempt: bool,
    /// O: drop commands that pass through another target on the way.
    pub prune_on_the_way: bool,
    /// S: merge states that differ only by a permutation of teams.
    pub merge_team_permutations: bool,
}

/// The fifteen combinations reported in the optimization benchmarks.
pub const BENCHMARK_SUBSETS: [&str; 15] = [
    "", "V", "W", "P", "O", "POV", "POW", "S", "SPV", "SPW", "SOV", "SOW", "SPO", "SPOV", "SPOW",
];

impl OptFlags {
    pub const NONE: OptFlags = OptFlags {
        fuse_travel: false,
        prune_permutations: false,
        wait_for_attempt: false,
        prune_on_the_way: false,
        merge_team_permutations: false,
    };

    pub const ALL: OptFlags = OptFlags {
        fuse_travel: true,
        prune_permutations: true,
        wait_for_attempt: true,
        prune_on_the_way: true,
        merge_team_permutations: true,
    };

    /// Parses a string over `{V,P,W,O,S}` (case-insensitive; `-`, `+`,
    /// spaces and the empty string mean "no flag"). `W` implies `V`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut flags = OptFlags::NONE;
        for c in text.chars() {
            match c.to_ascii_uppercase() {
                'V' => flags.fuse_travel = true,
                'P' => flags.prune_permutations = true,
                'W' => flags.wait_for_attempt = true,
                'O' => flags.prune_on_the_way = true,
                'S' => flags.merge_team_permutations = true,
                '+' | '-' | ' ' | ',' => {}
                other => return Err(format!("unknown optimization flag '{other}' (expected V, P, W, O, S)")),
            }
        }
        Ok(flags.normalized())
    }

    /// Applies `W ⇒ V`.
    pub fn normalized(mut self) -> Self {
        if self.wait_for_attempt {
            self.fuse_travel = true;
        }
        self
    }

    /// Whether W was requested without V (the implication was applied).
    pub fn w_implied_v(text: &str) -> bool {
        let upper = text.to_ascii_uppercase();
        upper.contains('W') && !upper.contains('V')
    }

    /// Label in benchmark order, e.g. `S+P+O+W`; V is omitted when W is on.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.merge_team_permutations {
            parts.push("S");
        }
        if self.prune_permutations {
            parts.push("P");
        }
        if self.prune_on_the_way {
            parts.push("O");
        }
        if self.wait_for_attempt {
            parts.push("W");
        } else if self.fuse_travel {
            parts.push("V");
        }
        if parts.is_empty() {
            "-".to_string()
        } else {
            parts.join("+")
        }
    }

    pub fn benchmark_subsets() -> Vec<OptFlags> {
        BENCHMARK_SUBSETS
            .iter()
            .map(|s| OptFlags::parse(s).expect("static flag strings"))
            .collect()
    }

    pub fn count_enabled(&self) -> usize {
        let n = self.normalized();
        [
            n.fuse_travel && !n.wait_for_attempt,
            n.prune_permutations,
            n.wait_for_attempt,
            n.prune_on_the_way,
            n.merge_team_permutations,
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }
}

impl FromStr for OptFlags {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OptFlags::parse(s)
    }
}

impl fmt::Display for OptFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
