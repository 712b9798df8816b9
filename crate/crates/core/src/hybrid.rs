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

//! Evaluation of a stratified audit from cumulative samples.
//!
//! Supported layouts are a single CVR stratum, a single no-CVR stratum, or
//! `[cvr, no_cvr]` in that order, where the CVR stratum is stratum 1 and
//! carries `λ` of the outcome-changing error.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::comparison::{km_pvalue, ComparisonSampleSummary};
use crate::domain::{ContestSpec, StratumKind, StratumSpec};
use crate::fisher::{maximize_combined_pvalue, FisherMaximizationResult, MaximizerControls};
use crate::polling::{sprt_pvalue, Interpretation, PollingNull, PollingSampleTally};
use crate::{Error, Result};

/// Polled ballots grouped by the set of candidates each one shows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PollingObservations {
    /// Sorted candidate list (empty for a blank ballot) → number of draws.
    pub counts: BTreeMap<String, u64>,
}

const SEP: char = '|';

impl PollingObservations {
    pub fn record_votes<'a>(&mut self, candidates: impl IntoIterator<Item = &'a str>) {
        let set: BTreeSet<&str> = candidates.into_iter().collect();
        let key = set.into_iter().collect::<Vec<_>>().join(&SEP.to_string());
        *self.counts.entry(key).or_default() += 1;
    }

    /// Records a `w`/`l`/`u` reading for a contest with a single pair.
    pub fn record_interpretation(&mut self, interp: Interpretation, winner: &str, loser: &str) {
        match interp {
            Interpretation::Winner => self.record_votes([winner]),
            Interpretation::Loser => self.record_votes([loser]),
            Interpretation::Other => self.record_votes([]),
        }
    }

    pub fn n(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn merged(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, v) in &other.counts {
            *out.counts.entry(k.clone()).or_default() += v;
        }
        out
    }

    /// `(W_n, L_n, U_n)` for the pair `(w, ℓ)`.
    pub fn tally_for(&self, winner: &str, loser: &str) -> PollingSampleTally {
        let mut t = PollingSampleTally::default();
        for (key, &count) in &self.counts {
            let has = |c: &str| !key.is_empty() && key.split(SEP).any(|k| k == c);
            match (has(winner), has(loser)) {
                (true, false) => t.w += count,
                (false, true) => t.l += count,
                _ => t.u += count,
            }
        }
        t
    }
}

/// Cumulative audit sample across both strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub cvr: ComparisonSampleSummary,
    pub polling: PollingObservations,
}

impl AuditSample {
    pub fn empty(gamma: f64) -> Self {
        AuditSample { cvr: ComparisonSampleSummary::empty(gamma), polling: PollingObservations::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub winner: String,
    pub loser: String,
    pub result: FisherMaximizationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvaluation {
    pub pairs: Vec<PairResult>,
    /// Largest certified bound over pairs; the audit's stopping P-value.
    pub max_pvalue_upper: f64,
    /// True iff every pair's maximization was decisive.
    pub stop: bool,
}

enum Layout<'a> {
    Comparison(&'a StratumSpec),
    Polling(&'a StratumSpec),
    Hybrid(&'a StratumSpec, &'a StratumSpec),
}

fn layout(contest: &ContestSpec) -> Result<Layout<'_>> {
    use StratumKind::*;
    match contest.strata.as_slice() {
        [s] if s.kind == Cvr => Ok(Layout::Comparison(s)),
        [s] => Ok(Layout::Polling(s)),
        [a, b] if a.kind == Cvr && b.kind == NoCvr => Ok(Layout::Hybrid(a, b)),
        _ => Err(Error::domain(
            "audits need one stratum, or a cvr stratum followed by a no_cvr stratum",
        )),
    }
}

/// Threshold for the polling null when stratum 2 carries `(1-λ)` of `V_{wℓ}`,
/// rounded up: `c = ⌈V_{wℓ,2} - (1-λ) V_{wℓ}⌉`.
pub fn polling_threshold(stratum_margin: i64, overall_margin: i64, lambda: f64) -> i64 {
    let shift = (lambda * overall_margin as f64).ceil();
    let shift = shift.clamp(i64::MIN as f64 / 4.0, i64::MAX as f64 / 4.0) as i64;
    stratum_margin - overall_margin + shift
}

/// Stratum-2 P-value as a function of `λ`, memoized on the integer threshold.
pub struct PollingPvalueFn<'a> {
    stratum: &'a StratumSpec,
    winner: &'a str,
    loser: &'a str,
    overall_margin: i64,
    tally: PollingSampleTally,
    cache: RefCell<HashMap<i64, f64>>,
}

impl<'a> PollingPvalueFn<'a> {
    pub fn new(contest: &'a ContestSpec, stratum: &'a StratumSpec, winner: &'a str, loser: &'a str, tally: PollingSampleTally) -> Self {
        PollingPvalueFn {
            stratum,
            winner,
            loser,
            overall_margin: contest.margin(winner, loser),
            tally,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn at(&self, lambda: f64) -> Result<f64> {
        let c = polling_threshold(self.stratum.margin(self.winner, self.loser), self.overall_margin, lambda);
        if let Some(&p) = self.cache.borrow().get(&c) {
            return Ok(p);
        }
        let null = PollingNull::from_reported(
            self.stratum.ballots,
            c,
            self.stratum.votes(self.winner),
            self.stratum.votes(self.loser),
        )?;
        let t = &self.tally;
        // No population with margin at most c fits the sample: the data
        // refute this allocation outright.
        let null_fits = c >= 2 * t.w as i64 + t.u as i64 - self.stratum.ballots as i64;
        let p = if null_fits || t.n() > self.stratum.ballots { sprt_pvalue(t, &null)? } else { 0.0 };
        self.cache.borrow_mut().insert(c, p);
        Ok(p)
    }
}

/// Evaluates the stopping rule for `pairs` (all pairs when `None`).
pub fn evaluate_audit(
    contest: &ContestSpec,
    sample: &AuditSample,
    pairs: Option<&[(String, String)]>,
    controls: &MaximizerControls,
) -> Result<AuditEvaluation> {
    let layout = layout(contest)?;
    let all_pairs = contest.pairs();
    let pairs = pairs.unwrap_or(&all_pairs);
    if pairs.is_empty() {
        return Err(Error::domain("no winner/loser pairs to evaluate"));
    }
    let min_margin = contest.min_margin().ok_or_else(|| Error::domain("contest has no pairs"))?;
    let alpha = contest.risk_limit;

    let mut results = Vec::with_capacity(pairs.len());
    for (w, l) in pairs {
        if !contest.winners.contains(w) || !contest.losers.contains(l) {
            return Err(Error::domain(format!("{w:?}:{l:?} is not a reported winner/loser pair")));
        }
        let cvr_fn = |s: &StratumSpec, lambda: f64| km_pvalue(&sample.cvr, s.ballots, min_margin, lambda);
        let result = match layout {
            Layout::Comparison(s) => FisherMaximizationResult::single(1.0, cvr_fn(s, 1.0)?, alpha),
            Layout::Polling(s) => {
                let f = PollingPvalueFn::new(contest, s, w, l, sample.polling.tally_for(w, l));
                FisherMaximizationResult::single(0.0, f.at(0.0)?, alpha)
            }
            Layout::Hybrid(s1, s2) => {
                let f = PollingPvalueFn::new(contest, s2, w, l, sample.polling.tally_for(w, l));
                maximize_combined_pvalue(contest, w, l, |lam| cvr_fn(s1, lam), |lam| f.at(lam), controls)?
            }
        };
        results.push(PairResult { winner: w.clone(), loser: l.clone(), result });
    }
    let max_pvalue_upper = results.iter().map(|r| r.result.max_pvalue_upper).fold(0.0, f64::max);
    let stop = results.iter().all(|r| r.result.decisive);
    Ok(AuditEvaluation { pairs: results, max_pvalue_upper, stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::DEFAULT_GAMMA;
    use crate::domain::tests::stratum;

    #[test]
    fn observation_tallies() {
        let mut o = PollingObservations::default();
        o.record_votes(["A"]);
        o.record_votes(["A", "B"]);
        o.record_votes(["C"]);
        o.record_votes([]);
        o.record_interpretation(Interpretation::Loser, "A", "B");
        assert_eq!(o.tally_for("A", "B"), PollingSampleTally::new(1, 1, 3));
        assert_eq!(o.tally_for("A", "C"), PollingSampleTally::new(2, 1, 2));
        assert_eq!(o.n(), 5);
        assert_eq!(o.merged(&o).n(), 10);
    }

    #[test]
    fn threshold_rounds_up() {
        assert_eq!(polling_threshold(180, 1980, 1.0), 180);
        assert_eq!(polling_threshold(180, 1980, 0.0), -1800);
        assert_eq!(polling_threshold(10, 100, 0.505), -39);
    }

    #[test]
    fn single_comparison_stratum_reduces_to_km() {
        let contest = ContestSpec {
            risk_limit: 0.1,
            winners: vec!["A".into()],
            losers: vec!["B".into()],
            strata: vec![stratum("c", StratumKind::Cvr, 100_000, &[("A", 50_900), ("B", 49_100)])],
        };
        let mut sample = AuditSample::empty(DEFAULT_GAMMA);
        sample.cvr = ComparisonSampleSummary::clean(265, DEFAULT_GAMMA);
        let e = evaluate_audit(&contest, &sample, None, &Default::default()).unwrap();
        let p = km_pvalue(&sample.cvr, 100_000, 1_800, 1.0).unwrap();
        assert_eq!(e.max_pvalue_upper, p);
        assert!(e.stop);
        sample.cvr.n = 264;
        assert!(!evaluate_audit(&contest, &sample, None, &Default::default()).unwrap().stop);
    }

    #[test]
    fn rejects_unsupported_layouts() {
        let contest = ContestSpec {
            risk_limit: 0.1,
            winners: vec!["A".into()],
            losers: vec!["B".into()],
            strata: vec![
                stratum("p", StratumKind::NoCvr, 100, &[("A", 60), ("B", 30)]),
                stratum("c", StratumKind::Cvr, 100, &[("A", 60), ("B", 30)]),
            ],
        };
        assert!(evaluate_audit(&contest, &AuditSample::empty(DEFAULT_GAMMA), None, &Default::default()).is_err());
    }

    #[test]
    fn empty_samples_give_no_evidence() {
        let contest = ContestSpec {
            risk_limit: 0.05,
            winners: vec!["A".into()],
            losers: vec!["B".into(), "C".into()],
            strata: vec![
                stratum("c", StratumKind::Cvr, 1000, &[("A", 500), ("B", 300), ("C", 100)]),
                stratum("p", StratumKind::NoCvr, 200, &[("A", 100), ("B", 60), ("C", 20)]),
            ],
        };
        let e = evaluate_audit(&contest, &AuditSample::empty(DEFAULT_GAMMA), None, &Default::default()).unwrap();
        assert_eq!(e.pairs.len(), 2);
        assert_eq!(e.max_pvalue_upper, 1.0);
        assert!(!e.stop);
        let bad = [("B".to_string(), "A".to_string())];
        assert!(evaluate_audit(&contest, &AuditSample::empty(DEFAULT_GAMMA), Some(&bad), &Default::default()).is_err());
    }

    #[test]
    fn unreported_blank_ballot_is_no_evidence() {
        // No other votes were reported, so a polled blank ballot rules out
        // the reported alternative.
        let contest = ContestSpec {
            risk_limit: 0.05,
            winners: vec!["A".into()],
            losers: vec!["B".into()],
            strata: vec![
                stratum("c", StratumKind::Cvr, 1_900, &[("A", 1_140), ("B", 760)]),
                stratum("p", StratumKind::NoCvr, 100, &[("A", 60), ("B", 40)]),
            ],
        };
        let s = &contest.strata[1];
        let f = PollingPvalueFn::new(&contest, s, "A", "B", PollingSampleTally::new(55, 0, 1));
        // A margin of at most -80 leaves no room for 55 sampled A votes.
        assert_eq!(f.at(0.0).unwrap(), 0.0);
        assert_eq!(f.at(1.0).unwrap(), 1.0);
        // With 60 A votes the margin is at least 21, refuting even c = 20.
        let f = PollingPvalueFn::new(&contest, s, "A", "B", PollingSampleTally::new(60, 0, 1));
        assert_eq!(f.at(1.0).unwrap(), 0.0);
        let mut sample = AuditSample::empty(DEFAULT_GAMMA);
        sample.polling.record_interpretation(Interpretation::Other, "A", "B");
        let e = evaluate_audit(&contest, &sample, None, &Default::default()).unwrap();
        assert_eq!(e.max_pvalue_upper, 1.0);
    }
}
