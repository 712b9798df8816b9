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

//! Monte Carlo harness: true populations, end-to-end simulated audits,
//! stopping probabilities and sample-size planning.
//!
//! Replicate `i` draws its CVR discrepancies from ChaCha8 stream `2i` and its
//! polling draws from stream `2i+1` of the scenario seed, so results do not
//! depend on scheduling or thread count, and growing a sample plan extends
//! each replicate's draws instead of replacing them.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{km_pvalue, ComparisonSampleSummary, DEFAULT_GAMMA};
use crate::domain::{ContestSpec, StratumKind};
use crate::fisher::MaximizerControls;
use crate::hybrid::{evaluate_audit, AuditSample};
use crate::polling::Interpretation;
use crate::{Error, Result};

/// Upper limit on with-replacement comparison draws per replicate.
pub const MAX_COMPARISON_DRAWS: u64 = 10_000_000;

/// Actual ballots in one stratum for the pair under audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActualTally {
    pub w: u64,
    pub l: u64,
    pub u: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationSpec {
    /// Actual tallies equal the reported ones.
    ReportedCorrect,
    /// Winner and loser tied in every stratum.
    Tied,
    /// Actual tallies per stratum, in contest order.
    Explicit(Vec<ActualTally>),
}

/// Fractions of CVR-stratum ballots with each kind of discrepancy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRates {
    pub o2: f64,
    pub o1: f64,
    pub u1: f64,
    pub u2: f64,
}

impl DiscrepancyRates {
    /// Realizes an overstatement of `omega` votes with as many two-vote
    /// errors as possible.
    fn for_overstatement(omega: i64, ballots: u64) -> Result<Self> {
        let (twos, ones) = (omega.unsigned_abs() / 2, omega.unsigned_abs() % 2);
        if twos + ones > ballots {
            return Err(Error::domain(format!(
                "overstatement of {omega} votes needs more than {ballots} ballots"
            )));
        }
        let n = ballots.max(1) as f64;
        let (a, b) = (twos as f64 / n, ones as f64 / n);
        Ok(if omega >= 0 {
            DiscrepancyRates { o2: a, o1: b, ..Default::default() }
        } else {
            DiscrepancyRates { u2: a, u1: b, ..Default::default() }
        })
    }

    fn sample(&self, rng: &mut impl Rng) -> i64 {
        let r: f64 = rng.random();
        let mut edge = self.o2;
        if r < edge {
            return 2;
        }
        edge += self.o1;
        if r < edge {
            return 1;
        }
        edge += self.u1;
        if r < edge {
            return -1;
        }
        edge += self.u2;
        if r < edge { -2 } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTruth {
    pub id: String,
    pub kind: StratumKind,
    pub ballots: u64,
    pub actual: ActualTally,
    /// `ω_{wℓ,s} = V_{wℓ,s} - A_{wℓ,s}`
    pub overstatement: i64,
    /// Zero outside CVR strata.
    pub rates: DiscrepancyRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePopulation {
    pub winner: String,
    pub loser: String,
    pub strata: Vec<StratumTruth>,
}

impl TruePopulation {
    /// `A_{wℓ}`
    pub fn actual_margin(&self) -> i64 {
        self.strata.iter().map(|s| s.actual.w as i64 - s.actual.l as i64).sum()
    }

    /// `ω_{wℓ}`
    pub fn overstatement(&self) -> i64 {
        self.strata.iter().map(|s| s.overstatement).sum()
    }

    /// The reported outcome stands iff `ω_{wℓ} < V_{wℓ}`.
    pub fn outcome_correct(&self, reported_margin: i64) -> bool {
        self.overstatement() < reported_margin
    }
}

fn single_pair(contest: &ContestSpec) -> Result<(&str, &str)> {
    match (contest.winners.as_slice(), contest.losers.as_slice()) {
        ([w], [l]) => Ok((w, l)),
        _ => Err(Error::domain("simulation supports contests with one winner and one loser")),
    }
}

pub fn build_population(contest: &ContestSpec, spec: &PopulationSpec) -> Result<TruePopulation> {
    let (w, l) = single_pair(contest)?;
    if let PopulationSpec::Explicit(t) = spec {
        if t.len() != contest.strata.len() {
            return Err(Error::domain(format!(
                "{} explicit tallies for {} strata",
                t.len(),
                contest.strata.len()
            )));
        }
    }
    let mut strata = Vec::with_capacity(contest.strata.len());
    for (k, s) in contest.strata.iter().enumerate() {
        let reported_u = s.ballots.checked_sub(s.votes(w) + s.votes(l)).ok_or_else(|| {
            Error::domain(format!("stratum {:?}: reported votes exceed ballots", s.id))
        })?;
        let actual = match spec {
            PopulationSpec::ReportedCorrect => ActualTally { w: s.votes(w), l: s.votes(l), u: reported_u },
            PopulationSpec::Tied => {
                let each = (s.ballots - reported_u) / 2;
                ActualTally { w: each, l: each, u: s.ballots - 2 * each }
            }
            PopulationSpec::Explicit(t) => t[k],
        };
        if actual.w + actual.l + actual.u != s.ballots {
            return Err(Error::domain(format!(
                "stratum {:?}: actual tallies {} + {} + {} do not sum to {} ballots",
                s.id, actual.w, actual.l, actual.u, s.ballots
            )));
        }
        let overstatement = s.margin(w, l) - (actual.w as i64 - actual.l as i64);
        let rates = match s.kind {
            StratumKind::Cvr => DiscrepancyRates::for_overstatement(overstatement, s.ballots)?,
            StratumKind::NoCvr => DiscrepancyRates::default(),
        };
        strata.push(StratumTruth {
            id: s.id.clone(),
            kind: s.kind,
            ballots: s.ballots,
            actual,
            overstatement,
            rates,
        });
    }
    Ok(TruePopulation { winner: w.to_string(), loser: l.to_string(), strata })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Comparison draws (with replacement) from the CVR stratum.
    pub n1: u64,
    /// Polling draws (without replacement) from the no-CVR stratum.
    pub n2: u64,
}

impl SamplePlan {
    pub fn total(&self) -> u64 {
        self.n1 + self.n2
    }
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub contest: ContestSpec,
    pub population: PopulationSpec,
    pub sample_plan: SamplePlan,
    pub replicates: u64,
    pub seed: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub controls: MaximizerControls,
}

impl SimulationScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: SimulationScenario = serde_json::from_str(text)?;
        s.contest.clone().validated()?;
        Ok(s)
    }

    fn check(&self, population: &TruePopulation) -> Result<()> {
        if self.sample_plan.n1 > MAX_COMPARISON_DRAWS {
            return Err(Error::domain(format!(
                "{} comparison draws exceed the cap of {MAX_COMPARISON_DRAWS}",
                self.sample_plan.n1
            )));
        }
        let polling = population.strata.iter().find(|s| s.kind == StratumKind::NoCvr);
        let available = polling.map_or(0, |s| s.ballots);
        if self.sample_plan.n2 > available {
            return Err(Error::domain(format!(
                "{} polling draws from a stratum of {available} ballots",
                self.sample_plan.n2
            )));
        }
        let has_cvr = population.strata.iter().any(|s| s.kind == StratumKind::Cvr);
        if self.sample_plan.n1 > 0 && !has_cvr {
            return Err(Error::domain("comparison draws planned but the contest has no cvr stratum"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub stopped: bool,
    /// Largest combined P-value found over `λ` (pairwise max).
    pub max_pvalue: f64,
    /// Certified bound used for the stopping decision.
    pub max_pvalue_upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvalueSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub replicates: u64,
    pub stop_count: u64,
    pub stop_probability: f64,
    /// Binomial standard error of `stop_probability`.
    pub standard_error: f64,
    pub max_pvalue: PvalueSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_sample(
    scenario: &SimulationScenario,
    population: &TruePopulation,
    replicate: u64,
) -> AuditSample {
    let mut sample = AuditSample::empty(scenario.gamma);
    if let Some(s) = population.strata.iter().find(|s| s.kind == StratumKind::Cvr) {
        let mut rng = stream(scenario.seed, 2 * replicate);
        for _ in 0..scenario.sample_plan.n1 {
            // Discrepancy is always in -2..=2.
            let _ = sample.cvr.record(s.rates.sample(&mut rng));
        }
    }
    if let Some(s) = population.strata.iter().find(|s| s.kind == StratumKind::NoCvr) {
        let mut rng = stream(scenario.seed, 2 * replicate + 1);
        let mut left = [s.actual.w, s.actual.l, s.actual.u];
        let (w, l) = (population.winner.as_str(), population.loser.as_str());
        for _ in 0..scenario.sample_plan.n2 {
            let total: u64 = left.iter().sum();
            let r = rng.random_range(0..total);
            let (k, interp) = if r < left[0] {
                (0, Interpretation::Winner)
            } else if r < left[0] + left[1] {
                (1, Interpretation::Loser)
            } else {
                (2, Interpretation::Other)
            };
            left[k] -= 1;
            sample.polling.record_interpretation(interp, w, l);
        }
    }
    sample
}

fn run_replicate(
    scenario: &SimulationScenario,
    population: &TruePopulation,
    replicate: u64,
) -> Result<ReplicateOutcome> {
    let sample = draw_sample(scenario, population, replicate);
    let eval = evaluate_audit(&scenario.contest, &sample, None, &scenario.controls)?;
    let max_pvalue = eval.pairs.iter().map(|p| p.result.max_pvalue_point).fold(0.0, f64::max);
    Ok(ReplicateOutcome { stopped: eval.stop, max_pvalue, max_pvalue_upper: eval.max_pvalue_upper })
}

/// One simulated audit of the scenario's population at its sample plan.
pub fn simulate_once(scenario: &SimulationScenario, replicate: u64) -> Result<ReplicateOutcome> {
    let population = build_population(&scenario.contest, &scenario.population)?;
    scenario.check(&population)?;
    run_replicate(scenario, &population, replicate)
}

/// Per-replicate outcomes in replicate order.
pub fn simulate_all(scenario: &SimulationScenario, threads: Option<usize>) -> Result<Vec<ReplicateOutcome>> {
    let population = build_population(&scenario.contest, &scenario.population)?;
    scenario.check(&population)?;
    let run = || {
        (0..scenario.replicates)
            .into_par_iter()
            .map(|i| run_replicate(scenario, &population, i))
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

pub fn summarize_outcomes(outcomes: &[ReplicateOutcome]) -> SimulationReport {
    let replicates = outcomes.len() as u64;
    let stop_count = outcomes.iter().filter(|o| o.stopped).count() as u64;
    let stop_probability = if replicates == 0 { 0.0 } else { stop_count as f64 / replicates as f64 };
    let standard_error = if replicates == 0 {
        0.0
    } else {
        (stop_probability * (1.0 - stop_probability) / replicates as f64).sqrt()
    };
    let mut ps: Vec<f64> = outcomes.iter().map(|o| o.max_pvalue).collect();
    ps.sort_by(f64::total_cmp);
    let max_pvalue = match ps.len() {
        0 => PvalueSummary { min: f64::NAN, median: f64::NAN, max: f64::NAN },
        n => PvalueSummary {
            min: ps[0],
            median: if n % 2 == 1 { ps[n / 2] } else { 0.5 * (ps[n / 2 - 1] + ps[n / 2]) },
            max: ps[n - 1],
        },
    };
    SimulationReport { replicates, stop_count, stop_probability, standard_error, max_pvalue, wall_clock_seconds: None }
}

/// Estimates the chance the audit stops at the planned sample sizes.
pub fn stopping_probability(scenario: &SimulationScenario, threads: Option<usize>) -> Result<SimulationReport> {
    if scenario.replicates == 0 {
        return Err(Error::domain("at least one replicate is required"));
    }
    let started = Instant::now();
    let outcomes = simulate_all(scenario, threads)?;
    let mut report = summarize_outcomes(&outcomes);
    report.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
    Ok(report)
}

/// Smallest error-free comparison sample that would confirm the contest if
/// every ballot were in a single CVR stratum.
pub fn single_stratum_comparison_size(contest: &ContestSpec, gamma: f64) -> Result<u64> {
    let v = contest.min_margin().ok_or_else(|| Error::domain("contest has no pairs"))?;
    let ballots = contest.total_ballots();
    let p = |n: u64| km_pvalue(&ComparisonSampleSummary::clean(n, gamma), ballots, v, 1.0);
    let step = (-(v as f64) / (2.0 * gamma * ballots as f64)).ln_1p();
    if !(step < 0.0) {
        return Err(Error::domain("margin too small for a comparison audit"));
    }
    let mut n = (contest.risk_limit.ln() / step).ceil().max(0.0) as u64;
    while n > 0 && p(n - 1)? <= contest.risk_limit {
        n -= 1;
    }
    while p(n)? > contest.risk_limit {
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSettings {
    pub replicates: u64,
    pub seed: u64,
    pub gamma: f64,
    pub max_n1: u64,
    pub max_n2: u64,
    pub controls: MaximizerControls,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl PlanSettings {
    /// Caps default to ten times the single-stratum size for comparison
    /// draws and `min(N_2, 5000)` polling draws.
    pub fn for_contest(contest: &ContestSpec, replicates: u64, seed: u64, gamma: f64) -> Result<Self> {
        let base = single_stratum_comparison_size(contest, gamma)?;
        let n2_pool = contest.stratum_of_kind(StratumKind::NoCvr).map_or(0, |s| s.ballots);
        Ok(PlanSettings {
            replicates,
            seed,
            gamma,
            max_n1: (10 * base).clamp(100, MAX_COMPARISON_DRAWS),
            max_n2: n2_pool.min(5_000),
            controls: MaximizerControls::default(),
            threads: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PlanOutcome {
    Plan {
        n1: u64,
        n2: u64,
        stop_probability: f64,
        single_stratum_comparison_size: u64,
    },
    EscalationRequired {
        max_n1: u64,
        max_n2: u64,
        stop_probability_at_caps: f64,
        single_stratum_comparison_size: u64,
    },
}

/// Smallest `k` in `[start, cap]` with `ok(k)`, assuming `ok` is monotone:
/// doubling to bracket, then bisection until the bracket is within 2%.
fn smallest_passing(start: u64, cap: u64, mut ok: impl FnMut(u64) -> Result<bool>) -> Result<Option<u64>> {
    let mut fail: Option<u64> = None;
    let mut k = start.min(cap);
    loop {
        if ok(k)? {
            break;
        }
        if k >= cap {
            return Ok(None);
        }
        fail = Some(k);
        k = (k.max(1) * 2).min(cap);
    }
    let mut hi = k;
    let mut lo = match fail {
        Some(f) => f,
        None => return Ok(Some(k)),
    };
    while hi - lo > 1 && hi - lo > lo / 50 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? { hi = mid } else { lo = mid }
    }
    Ok(Some(hi))
}

/// Searches for a small `(n1, n2)` whose simulated stopping probability
/// reaches `target`.
pub fn plan_sample_sizes(
    contest: &ContestSpec,
    population: &PopulationSpec,
    target: f64,
    settings: &PlanSettings,
) -> Result<PlanOutcome> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::domain(format!("target stopping probability {target} not in [0, 1)")));
    }
    let base = single_stratum_comparison_size(contest, settings.gamma)?;
    let has_cvr = contest.stratum_of_kind(StratumKind::Cvr).is_some();
    let has_polling = contest.stratum_of_kind(StratumKind::NoCvr).is_some();
    let (max_n1, max_n2) = (
        if has_cvr { settings.max_n1 } else { 0 },
        if has_polling { settings.max_n2 } else { 0 },
    );
    let prob = |n1: u64, n2: u64| -> Result<f64> {
        let scenario = SimulationScenario {
            contest: contest.clone(),
            population: population.clone(),
            sample_plan: SamplePlan { n1, n2 },
            replicates: settings.replicates.max(1),
            seed: settings.seed,
            gamma: settings.gamma,
            controls: settings.controls,
        };
        Ok(summarize_outcomes(&simulate_all(&scenario, settings.threads)?).stop_probability)
    };
    let plan = |n1: u64, n2: u64, p: f64| PlanOutcome::Plan { n1, n2, stop_probability: p, single_stratum_comparison_size: base };

    if target <= 0.0 {
        return Ok(plan(0, 0, prob(0, 0)?));
    }
    let at_caps = prob(max_n1, max_n2)?;
    if at_caps < target {
        return Ok(PlanOutcome::EscalationRequired {
            max_n1,
            max_n2,
            stop_probability_at_caps: at_caps,
            single_stratum_comparison_size: base,
        });
    }
    if !has_polling {
        let n1 = smallest_passing(base, max_n1, |n1| Ok(prob(n1, 0)? >= target))?.unwrap_or(max_n1);
        return Ok(plan(n1, 0, prob(n1, 0)?));
    }
    if !has_cvr {
        let n2 = smallest_passing(8, max_n2, |n2| Ok(prob(0, n2)? >= target))?.unwrap_or(max_n2);
        return Ok(plan(0, n2, prob(0, n2)?));
    }

    let mut best: Option<SamplePlan> = None;
    let mut n1 = base.min(max_n1);
    loop {
        if best.is_some_and(|b| n1 >= b.total()) {
            break;
        }
        if let Some(n2) = smallest_passing(8, max_n2, |n2| Ok(prob(n1, n2)? >= target))? {
            if best.is_none_or(|b| n1 + n2 < b.total()) {
                best = Some(SamplePlan { n1, n2 });
            }
        }
        if n1 >= max_n1 {
            break;
        }
        n1 = ((n1 as f64 * 1.25).ceil() as u64).max(n1 + 1).min(max_n1);
    }
    let b = best.unwrap_or(SamplePlan { n1: max_n1, n2: max_n2 });
    Ok(plan(b.n1, b.n2, prob(b.n1, b.n2)?))
}
