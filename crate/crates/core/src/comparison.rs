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

//! Comparison test of an overstatement quota in the CVR stratum.
//!
//! Each batch `p` has an a priori bound `u_p` on its relative error `e_p`.
//! Batches are drawn with replacement with probability `u_p/U`, so the taints
//! `T_j = e_p/u_p` are IID with mean `E/U`. The stratum overstatement quota
//! `E >= λ` is rejected when the Kaplan-Markov supermartingale
//! `∏_j (1 - λ/U) / (1 - T_j)` is small.
//!
//! For single-ballot batches the bound is inflated by `γ > 1`, giving
//! `u_p = 2γ/V`, which keeps every factor `1 - T_j` strictly positive and
//! collapses the taints to five values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::PairMargin;
use crate::{Error, Result};

/// Error inflation factor used unless configured otherwise.
pub const DEFAULT_GAMMA: f64 = 1.03905;

/// Reported and audited votes for one batch of ballots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRecord {
    /// `n_p`
    pub ballots: u64,
    pub reported: BTreeMap<String, u64>,
    pub audited: BTreeMap<String, u64>,
}

impl BatchRecord {
    pub fn new(
        ballots: u64,
        reported: BTreeMap<String, u64>,
        audited: BTreeMap<String, u64>,
    ) -> Result<Self> {
        for (side, votes) in [("reported", &reported), ("audited", &audited)] {
            if let Some((c, v)) = votes.iter().find(|(_, &v)| v > ballots) {
                return Err(Error::domain(format!(
                    "{side} votes for {c:?} ({v}) exceed batch size {ballots}"
                )));
            }
        }
        Ok(BatchRecord { ballots, reported, audited })
    }

    /// A one-ballot batch. `reported`/`audited` name the candidate voted for, if any.
    pub fn single_ballot(reported: Option<&str>, audited: Option<&str>) -> Self {
        let one = |c: Option<&str>| c.map(|c| (c.to_string(), 1)).into_iter().collect();
        BatchRecord { ballots: 1, reported: one(reported), audited: one(audited) }
    }

    fn reported_votes(&self, c: &str) -> i64 {
        self.reported.get(c).copied().unwrap_or(0) as i64
    }

    fn audited_votes(&self, c: &str) -> i64 {
        self.audited.get(c).copied().unwrap_or(0) as i64
    }

    /// Overstatement of the `w`-over-`ℓ` margin in votes, `v_w - a_w - v_ℓ + a_ℓ`.
    pub fn overstatement(&self, winner: &str, loser: &str) -> i64 {
        self.reported_votes(winner) - self.audited_votes(winner) - self.reported_votes(loser)
            + self.audited_votes(loser)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// `max_{w,ℓ} (v_w - v_ℓ + n_p) / V_{wℓ}`
    Sharp,
    /// `2 n_p / V`
    Simple,
}

/// Per-batch error bounds and their total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub per_batch: Vec<f64>,
    pub total: f64,
}

impl ErrorBound {
    pub fn from_batches(batches: &[BatchRecord], margins: &[PairMargin], mode: BoundMode) -> Result<Self> {
        let per_batch = batches
            .iter()
            .map(|b| batch_bound(b, margins, mode))
            .collect::<Result<Vec<_>>>()?;
        let total = per_batch.iter().sum();
        Ok(ErrorBound { per_batch, total })
    }
}

/// Summary of single-ballot comparison draws, classified by taint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSampleSummary {
    /// Draws (with replacement).
    pub n: u64,
    /// One-vote overstatements, taint `1/(2γ)`.
    pub o1: u64,
    /// Two-vote overstatements, taint `1/γ`.
    pub o2: u64,
    /// One-vote understatements, taint `-1/(2γ)`.
    pub u1: u64,
    /// Two-vote understatements, taint `-1/γ`.
    pub u2: u64,
    pub gamma: f64,
}

impl ComparisonSampleSummary {
    pub fn empty(gamma: f64) -> Self {
        ComparisonSampleSummary { n: 0, o1: 0, o2: 0, u1: 0, u2: 0, gamma }
    }

    /// `n` draws with no discrepancies.
    pub fn clean(n: u64, gamma: f64) -> Self {
        ComparisonSampleSummary { n, ..Self::empty(gamma) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(Error::domain(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        let errors = self.o1 + self.o2 + self.u1 + self.u2;
        if errors > self.n {
            return Err(Error::domain(format!(
                "{errors} discrepancies recorded in only {} draws",
                self.n
            )));
        }
        Ok(())
    }

    /// Records one draw whose overstatement for the closest pair is
    /// `discrepancy` votes (`-2..=2`).
    pub fn record(&mut self, discrepancy: i64) -> Result<()> {
        match discrepancy {
            2 => self.o2 += 1,
            1 => self.o1 += 1,
            0 => {}
            -1 => self.u1 += 1,
            -2 => self.u2 += 1,
            d => return Err(Error::domain(format!("discrepancy {d} outside -2..=2"))),
        }
        self.n += 1;
        Ok(())
    }

    /// Pools two samples drawn under the same `γ`.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        if self.gamma != other.gamma {
            return Err(Error::domain(format!(
                "cannot merge samples with gamma {} and {}",
                self.gamma, other.gamma
            )));
        }
        Ok(ComparisonSampleSummary {
            n: self.n + other.n,
            o1: self.o1 + other.o1,
            o2: self.o2 + other.o2,
            u1: self.u1 + other.u1,
            u2: self.u2 + other.u2,
            gamma: self.gamma,
        })
    }
}

fn check_margins(margins: &[PairMargin]) -> Result<()> {
    if margins.is_empty() {
        return Err(Error::domain("no winner/loser pairs"));
    }
    if let Some(p) = margins.iter().find(|p| p.margin <= 0) {
        return Err(Error::domain(format!(
            "margin of {:?} over {:?} is not positive ({})",
            p.winner, p.loser, p.margin
        )));
    }
    Ok(())
}

fn max_over_pairs(margins: &[PairMargin], f: impl Fn(&PairMargin) -> f64) -> f64 {
    margins.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// `e_p`, the largest relative overstatement of any pairwise margin in the batch.
pub fn batch_error(batch: &BatchRecord, margins: &[PairMargin]) -> Result<f64> {
    check_margins(margins)?;
    Ok(max_over_pairs(margins, |p| {
        batch.overstatement(&p.winner, &p.loser) as f64 / p.margin as f64
    }))
}

/// `u_p`, an a priori bound on `e_p` that uses only the reported votes.
pub fn batch_bound(batch: &BatchRecord, margins: &[PairMargin], mode: BoundMode) -> Result<f64> {
    check_margins(margins)?;
    Ok(match mode {
        BoundMode::Sharp => max_over_pairs(margins, |p| {
            (batch.reported_votes(&p.winner) - batch.reported_votes(&p.loser) + batch.ballots as i64)
                as f64
                / p.margin as f64
        }),
        BoundMode::Simple => {
            let v = margins.iter().map(|p| p.margin).min().unwrap_or(1);
            2.0 * batch.ballots as f64 / v as f64
        }
    })
}

/// Kaplan-Markov P-value for the null that the stratum overstatement is at
/// least `lambda · margin` votes.
///
/// `stratum_ballots` is `N_1`; `margin` is the overall margin the quota is
/// expressed in. The value is valid for every prefix of a with-replacement
/// sample, so samples may grow between evaluations.
pub fn km_pvalue(
    sample: &ComparisonSampleSummary,
    stratum_ballots: u64,
    margin: i64,
    lambda: f64,
) -> Result<f64> {
    sample.validate()?;
    if stratum_ballots == 0 {
        return Err(Error::domain("comparison stratum has no ballots"));
    }
    if margin <= 0 {
        return Err(Error::domain(format!("margin must be positive, got {margin}")));
    }
    if lambda.is_nan() {
        return Err(Error::domain("lambda is NaN"));
    }
    if sample.n == 0 {
        return Ok(1.0);
    }
    let gamma = sample.gamma;
    let total_bound = 2.0 * stratum_ballots as f64 / margin as f64;
    let quota_taint = lambda / (gamma * total_bound);
    if quota_taint >= 1.0 {
        // Every taint is at most 1/γ < 1, so the null mean is unattainable.
        return Ok(0.0);
    }
    let log_p = sample.n as f64 * (-quota_taint).ln_1p()
        - sample.o1 as f64 * (-1.0 / (2.0 * gamma)).ln_1p()
        - sample.o2 as f64 * (-1.0 / gamma).ln_1p()
        - sample.u1 as f64 * (1.0 / (2.0 * gamma)).ln_1p()
        - sample.u2 as f64 * (1.0 / gamma).ln_1p();
    Ok(log_p.exp().clamp(0.0, 1.0))
}

/// Classifies single-ballot draws into a taint summary.
///
/// Each draw is scored by `e_p · V` (votes of overstatement relative to the
/// closest pair) rounded up, so a draw is never placed in a smaller-taint
/// bucket than its error warrants.
pub fn summarize_draws(
    draws: &[BatchRecord],
    margins: &[PairMargin],
    gamma: f64,
) -> Result<ComparisonSampleSummary> {
    check_margins(margins)?;
    let v = margins.iter().map(|p| p.margin).min().unwrap_or(1);
    let mut summary = ComparisonSampleSummary::empty(gamma);
    summary.validate()?;
    for (i, draw) in draws.iter().enumerate() {
        if draw.ballots != 1 {
            return Err(Error::domain(format!(
                "draw {i} is a batch of {} ballots; summaries need single-ballot draws",
                draw.ballots
            )));
        }
        let scaled = margins
            .iter()
            .map(|p| div_ceil(draw.overstatement(&p.winner, &p.loser) * v, p.margin))
            .max()
            .unwrap_or(0);
        summary.record(scaled.clamp(-2, 2))?;
    }
    Ok(summary)
}

fn div_ceil(a: i64, b: i64) -> i64 {
    let q = a.div_euclid(b);
    if a.rem_euclid(b) == 0 { q } else { q + 1 }
}
