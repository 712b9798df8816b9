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


use std::path::Path;

use serde::{Deserialize, Serialize};
use suite_core::comparison::ComparisonSampleSummary;
use suite_core::domain::{ContestSpec, StratumKind};
use suite_core::fisher::MaximizerControls;
use suite_core::hybrid::{evaluate_audit, AuditSample, PollingObservations};
use suite_core::polling::{Interpretation, PollingSampleTally};
use suite_core::simulation::{
    plan_sample_sizes, simulate_all, summarize_outcomes, PlanOutcome, PlanSettings, PopulationSpec,
    SimulationScenario,
};

use crate::error::{CliError, CliResult};
use crate::samples::{read_cvr_sample, read_polling_sample};
use crate::session::{AuditSession, SessionStatus};
use crate::{EscalateArgs, MaximizerArgs, PlanArgs, Population, PvalueArgs, SimulateArgs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub winner: String,
    pub loser: String,
    pub max_pvalue_upper: f64,
    pub max_pvalue_point: f64,
    pub lambda_at_max: f64,
    pub decisive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Stop,
    Continue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvalueReport {
    pub risk_limit: f64,
    pub cvr_draws: u64,
    pub polling_draws: u64,
    pub pairs: Vec<PairReport>,
    pub max_pvalue_upper: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationReport {
    pub round: u32,
    pub status: SessionStatus,
    pub report: PvalueReport,
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))
}

fn load_contest(path: &Path) -> CliResult<ContestSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ContestSpec::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn controls(args: &MaximizerArgs) -> CliResult<MaximizerControls> {
    if args.grid_points < 2 {
        return Err(CliError::Input(format!("--grid-points must be at least 2, got {}", args.grid_points)));
    }
    Ok(MaximizerControls {
        initial_grid_points: args.grid_points,
        max_refinements: args.max_refinements,
        ..MaximizerControls::default()
    })
}

fn parse_pairs(contest: &ContestSpec, raw: &[String]) -> CliResult<Option<Vec<(String, String)>>> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.iter()
        .map(|p| {
            let (w, l) = p
                .split_once(':')
                .ok_or_else(|| CliError::Input(format!("--pair {p:?} is not of the form winner:loser")))?;
            if !contest.winners.iter().any(|c| c == w) || !contest.losers.iter().any(|c| c == l) {
                return Err(CliError::Input(format!("--pair {p:?} is not a reported winner/loser pair")));
            }
            Ok((w.to_string(), l.to_string()))
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

/// Checks that samples target strata the contest has, and that `w`/`l`/`u`
/// readings are unambiguous.
fn check_samples(contest: &ContestSpec, cvr: &ComparisonSampleSummary, polling: &PollingSampleTally) -> CliResult<()> {
    if cvr.n > 0 && contest.stratum_of_kind(StratumKind::Cvr).is_none() {
        return Err(CliError::Input("comparison draws supplied but the contest has no cvr stratum".into()));
    }
    if polling.n() > 0 {
        if contest.stratum_of_kind(StratumKind::NoCvr).is_none() {
            return Err(CliError::Input("polling draws supplied but the contest has no no_cvr stratum".into()));
        }
        if contest.pairs().len() != 1 {
            return Err(CliError::Input(
                "w/l/u polling readings need a contest with exactly one winner and one loser".into(),
            ));
        }
        if let Some(s) = contest.stratum_of_kind(StratumKind::NoCvr) {
            if polling.n() > s.ballots {
                return Err(CliError::Input(format!(
                    "{} polling draws from a stratum of {} ballots",
                    polling.n(),
                    s.ballots
                )));
            }
        }
    }
    Ok(())
}

fn evaluate(
    contest: &ContestSpec,
    cvr: ComparisonSampleSummary,
    polling: PollingSampleTally,
    pairs: Option<&[(String, String)]>,
    controls: &MaximizerControls,
) -> CliResult<PvalueReport> {
    check_samples(contest, &cvr, &polling)?;
    let mut observations = PollingObservations::default();
    if let Some((w, l)) = contest.pairs().first() {
        for (count, interp) in [
            (polling.w, Interpretation::Winner),
            (polling.l, Interpretation::Loser),
            (polling.u, Interpretation::Other),
        ] {
            for _ in 0..count {
                observations.record_interpretation(interp, w, l);
            }
        }
    }
    let sample = AuditSample { cvr, polling: observations };
    let eval = evaluate_audit(contest, &sample, pairs, controls)?;
    Ok(PvalueReport {
        risk_limit: contest.risk_limit,
        cvr_draws: cvr.n,
        polling_draws: polling.n(),
        pairs: eval
            .pairs
            .iter()
            .map(|p| PairReport {
                winner: p.winner.clone(),
                loser: p.loser.clone(),
                max_pvalue_upper: p.result.max_pvalue_upper,
                max_pvalue_point: p.result.max_pvalue_point,
                lambda_at_max: p.result.lambda_at_max,
                decisive: p.result.decisive,
            })
            .collect(),
        max_pvalue_upper: eval.max_pvalue_upper,
        decision: if eval.stop { Decision::Stop } else { Decision::Continue },
    })
}

fn read_samples(
    cvr: Option<&Path>,
    polling: Option<&Path>,
    gamma: f64,
) -> CliResult<(ComparisonSampleSummary, PollingSampleTally)> {
    let cvr = match cvr {
        Some(p) => read_cvr_sample(p, gamma)?,
        None => {
            let s = ComparisonSampleSummary::empty(gamma);
            s.validate()?;
            s
        }
    };
    let polling = match polling {
        Some(p) => read_polling_sample(p)?,
        None => PollingSampleTally::default(),
    };
    Ok((cvr, polling))
}

pub fn pvalue(args: PvalueArgs) -> CliResult<String> {
    let contest = load_contest(&args.contest)?;
    let pairs = parse_pairs(&contest, &args.pairs)?;
    let controls = controls(&args.maximizer)?;
    let (cvr, polling) = read_samples(args.cvr_sample.as_deref(), args.polling_sample.as_deref(), args.gamma)?;
    to_json(&evaluate(&contest, cvr, polling, pairs.as_deref(), &controls)?)
}

fn check_threads(threads: Option<usize>) -> CliResult<()> {
    match threads {
        Some(0) => Err(CliError::Input("--threads must be at least 1".into())),
        _ => Ok(()),
    }
}

pub fn simulate(args: SimulateArgs) -> CliResult<String> {
    check_threads(args.threads)?;
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| CliError::io(&args.scenario, e))?;
    let mut scenario = SimulationScenario::from_json(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.scenario.display())))?;
    if let Some(reps) = args.reps {
        scenario.replicates = reps;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if scenario.replicates == 0 {
        return Err(CliError::Input("at least one replicate is required".into()));
    }
    let started = std::time::Instant::now();
    let outcomes = simulate_all(&scenario, args.threads)?;
    let mut report = summarize_outcomes(&outcomes);
    if args.timing {
        report.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
    }
    to_json(&report)
}

pub fn plan(args: PlanArgs) -> CliResult<String> {
    check_threads(args.threads)?;
    let contest = load_contest(&args.contest)?;
    let mut settings = PlanSettings::for_contest(&contest, args.reps, args.seed, args.gamma)?;
    settings.threads = args.threads;
    if let Some(n1) = args.max_n1 {
        settings.max_n1 = n1;
    }
    if let Some(n2) = args.max_n2 {
        settings.max_n2 = n2;
    }
    let population = match args.population {
        Population::ReportedCorrect => PopulationSpec::ReportedCorrect,
        Population::Tied => PopulationSpec::Tied,
    };
    let outcome = plan_sample_sizes(&contest, &population, args.target_prob, &settings)?;
    let report = to_json(&outcome)?;
    match outcome {
        PlanOutcome::Plan { .. } => Ok(report),
        PlanOutcome::EscalationRequired { .. } => Err(CliError::Unreachable { report }),
    }
}

pub fn escalate(args: EscalateArgs) -> CliResult<String> {
    let controls = controls(&args.maximizer)?;
    let mut session = if args.session.exists() {
        let session = AuditSession::load(&args.session)?;
        if let Some(path) = &args.contest {
            if load_contest(path)? != session.contest {
                return Err(CliError::Input(format!(
                    "{} describes a different contest than session {}",
                    path.display(),
                    args.session.display()
                )));
            }
        }
        if let Some(g) = args.gamma {
            if g != session.cvr.gamma {
                return Err(CliError::Input(format!(
                    "--gamma {g} differs from the session's gamma {}",
                    session.cvr.gamma
                )));
            }
        }
        if session.status != SessionStatus::InProgress {
            return Err(CliError::Input(format!(
                "session {} is closed ({})",
                args.session.display(),
                serde_json::to_string(&session.status).unwrap_or_default()
            )));
        }
        session
    } else {
        let path = args.contest.as_ref().ok_or_else(|| {
            CliError::Input(format!("{} does not exist; pass --contest to start a session", args.session.display()))
        })?;
        AuditSession::new(load_contest(path)?, args.gamma.unwrap_or(suite_core::comparison::DEFAULT_GAMMA))
    };

    let (cvr, polling) =
        read_samples(args.cvr_sample.as_deref(), args.polling_sample.as_deref(), session.cvr.gamma)?;
    let cumulative_cvr = session.cvr.merged(&cvr)?;
    let cumulative_polling = session.polling + polling;
    let report = evaluate(&session.contest, cumulative_cvr, cumulative_polling, None, &controls)?;

    session.cvr = cumulative_cvr;
    session.polling = cumulative_polling;
    session.push_round(cvr, polling, report.max_pvalue_upper, report.decision == Decision::Stop);
    session.save(&args.session)?;
    to_json(&EscalationReport { round: session.rounds.len() as u32, status: session.status, report })
}
