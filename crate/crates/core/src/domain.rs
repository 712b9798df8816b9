// Copyright 2026 The SUITE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Contest and stratum data model shared by every test in the crate.
//!
//! Vote counts are exact integers and margins are integer vote differences.
//! Diluted margins and error shares are derived on demand, never stored.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKind {
    /// Ballots with cast vote records; audited by ballot-level comparison.
    Cvr,
    /// Ballots without linkable CVRs; audited by ballot polling.
    NoCvr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub id: String,
    pub kind: StratumKind,
    /// `N_s`, ballots cast in the stratum.
    pub ballots: u64,
    /// Reported votes per candidate. Candidates outside the winner and loser
    /// sets only contribute to the "other" pile.
    pub reported_votes: BTreeMap<String, u64>,
}

impl StratumSpec {
    pub fn votes(&self, candidate: &str) -> u64 {
        self.reported_votes.get(candidate).copied().unwrap_or(0)
    }

    /// `V_{wℓ,s}`; may be negative.
    pub fn margin(&self, winner: &str, loser: &str) -> i64 {
        self.votes(winner) as i64 - self.votes(loser) as i64
    }

    /// Ballots showing neither `winner` nor `loser` as reported, `V_{u,s}`.
    pub fn other_votes(&self, winner: &str, loser: &str) -> i64 {
        self.ballots as i64 - self.votes(winner) as i64 - self.votes(loser) as i64
    }
}

/// A reported winner/loser pair with the overall reported margin `V_{wℓ}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMargin {
    pub winner: String,
    pub loser: String,
    pub margin: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestSpec {
    pub risk_limit: f64,
    pub winners: Vec<String>,
    pub losers: Vec<String>,
    pub strata: Vec<StratumSpec>,
}

impl ContestSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ContestSpec = serde_json::from_str(text)?;
        spec.validated()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Consumes the contest, returning it unchanged if it has no violations.
    pub fn validated(self) -> Result<Self> {
        let violations = validate_contest(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidContest(violations))
        }
    }

    /// All (w, ℓ) pairs in winner-major order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        self.winners
            .iter()
            .flat_map(|w| self.losers.iter().map(move |l| (w.clone(), l.clone())))
            .collect()
    }

    /// `V_{wℓ} = Σ_s V_{wℓ,s}`.
    pub fn margin(&self, winner: &str, loser: &str) -> i64 {
        self.strata.iter().map(|s| s.margin(winner, loser)).sum()
    }

    pub fn pair_margins(&self) -> Vec<PairMargin> {
        self.pairs()
            .into_iter()
            .map(|(w, l)| {
                let margin = self.margin(&w, &l);
                PairMargin { winner: w, loser: l, margin }
            })
            .collect()
    }

    /// `V`, the smallest overall pairwise margin. `None` without pairs.
    pub fn min_margin(&self) -> Option<i64> {
        self.pair_margins().iter().map(|p| p.margin).min()
    }

    pub fn total_ballots(&self) -> u64 {
        self.strata.iter().map(|s| s.ballots).sum()
    }

    pub fn stratum_of_kind(&self, kind: StratumKind) -> Option<&StratumSpec> {
        self.strata.iter().find(|s| s.kind == kind)
    }
}

/// Error allocation between the two strata: stratum 1 carries `λ·V_{wℓ}`,
/// stratum 2 the remaining `(1-λ)·V_{wℓ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaAllocation {
    pub lambda: f64,
}

impl LambdaAllocation {
    /// Fails unless `lower <= lambda <= upper`.
    pub fn within(lambda: f64, (lower, upper): (f64, f64)) -> Result<Self> {
        if !(lower..=upper).contains(&lambda) {
            return Err(Error::domain(format!(
                "lambda {lambda} outside feasible range [{lower}, {upper}]"
            )));
        }
        Ok(LambdaAllocation { lambda })
    }

    pub fn stratum2_share(&self) -> f64 {
        1.0 - self.lambda
    }
}

/// Lists every violated invariant of `spec`; empty iff the contest is consistent.
pub fn validate_contest(spec: &ContestSpec) -> Vec<String> {
    let mut out = Vec::new();
    if !(spec.risk_limit > 0.0 && spec.risk_limit < 1.0) {
        out.push(format!("risk limit {} not in (0, 1)", spec.risk_limit));
    }
    if spec.winners.is_empty() {
        out.push("winner set is empty".to_string());
    }
    if spec.losers.is_empty() {
        out.push("loser set is empty".to_string());
    }
    let winners: BTreeSet<&String> = spec.winners.iter().collect();
    let losers: BTreeSet<&String> = spec.losers.iter().collect();
    if winners.len() != spec.winners.len() || losers.len() != spec.losers.len() {
        out.push("duplicate candidate in winner or loser list".to_string());
    }
    let shared: Vec<&str> = winners.intersection(&losers).map(|s| s.as_str()).collect();
    if !shared.is_empty() {
        out.push(format!(
            "winners and losers are not disjoint: {}",
            shared.join(", ")
        ));
    }
    if spec.strata.is_empty() {
        out.push("contest has no strata".to_string());
    }
    let mut ids = BTreeSet::new();
    for s in &spec.strata {
        if !ids.insert(s.id.as_str()) {
            out.push(format!("duplicate stratum id {:?}", s.id));
        }
        for (cand, &v) in &s.reported_votes {
            if v > s.ballots {
                out.push(format!(
                    "stratum {:?}: {v} votes for {cand:?} exceed {} ballots",
                    s.id, s.ballots
                ));
            }
        }
        for (w, l) in spec.pairs() {
            if w != l && s.votes(&w) + s.votes(&l) > s.ballots {
                out.push(format!(
                    "stratum {:?}: votes for {w:?} and {l:?} exceed {} ballots",
                    s.id, s.ballots
                ));
            }
        }
    }
    if shared.is_empty() {
        for p in spec.pair_margins() {
            if p.margin <= 0 {
                out.push(format!(
                    "overall margin not positive for {:?} over {:?}: {}",
                    p.winner, p.loser, p.margin
                ));
            }
        }
    }
    out
}
