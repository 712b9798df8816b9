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


//! Persistent state for an audit that escalates in rounds.
//!
//! Both stratum tests are sequentially valid, so each round simply re-tests
//! the cumulative sample; no multiplicity adjustment is needed.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use suite_core::comparison::ComparisonSampleSummary;
use suite_core::domain::{ContestSpec, StratumKind};
use suite_core::polling::PollingSampleTally;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    InProgress,
    Stopped,
    /// Sampling has exhausted a stratum without confirming the outcome.
    FullHandCountRecommended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub round: u32,
    pub cvr: ComparisonSampleSummary,
    pub polling: PollingSampleTally,
    /// Certified P-value bound on the cumulative sample after this round.
    pub max_pvalue_upper: f64,
    pub decisive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSession {
    pub schema_version: u32,
    pub contest: ContestSpec,
    pub cvr: ComparisonSampleSummary,
    pub polling: PollingSampleTally,
    pub rounds: Vec<Round>,
    pub status: SessionStatus,
}

impl AuditSession {
    pub fn new(contest: ContestSpec, gamma: f64) -> Self {
        AuditSession {
            schema_version: SCHEMA_VERSION,
            contest,
            cvr: ComparisonSampleSummary::empty(gamma),
            polling: PollingSampleTally::default(),
            rounds: Vec::new(),
            status: SessionStatus::InProgress,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let session: AuditSession = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), e.line())))?;
        session.check().map_err(|msg| CliError::Input(format!("{}: {msg}", path.display())))?;
        Ok(session)
    }

    /// Schema version, contest validity and round totals.
    pub fn check(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "session schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.contest.clone().validated().map_err(|e| e.to_string())?;
        let mut cvr = ComparisonSampleSummary::empty(self.cvr.gamma);
        let mut polling = PollingSampleTally::default();
        for (i, r) in self.rounds.iter().enumerate() {
            if r.round as usize != i + 1 {
                return Err(format!("round {} recorded in position {}", r.round, i + 1));
            }
            cvr = cvr.merged(&r.cvr).map_err(|e| e.to_string())?;
            polling = polling + r.polling;
        }
        if cvr != self.cvr || polling != self.polling {
            return Err("cumulative samples differ from the sum of the rounds".into());
        }
        if self.status == SessionStatus::Stopped && !self.rounds.last().is_some_and(|r| r.decisive) {
            return Err("status is stopped but the latest round was not decisive".into());
        }
        Ok(())
    }

    /// Adds one round's increments and records the cumulative result.
    pub fn push_round(
        &mut self,
        cvr: ComparisonSampleSummary,
        polling: PollingSampleTally,
        max_pvalue_upper: f64,
        decisive: bool,
    ) {
        self.rounds.push(Round {
            round: self.rounds.len() as u32 + 1,
            cvr,
            polling,
            max_pvalue_upper,
            decisive,
        });
        self.status = if decisive {
            SessionStatus::Stopped
        } else if self.sampling_exhausted() {
            SessionStatus::FullHandCountRecommended
        } else {
            SessionStatus::InProgress
        };
    }

    /// A stratum whose draws reach its ballot count is cheaper to count by hand.
    fn sampling_exhausted(&self) -> bool {
        let reached = |kind, draws: u64| self.contest.stratum_of_kind(kind).is_some_and(|s| draws >= s.ballots);
        reached(StratumKind::Cvr, self.cvr.n) || reached(StratumKind::NoCvr, self.polling.n())
    }

    /// Writes to a sibling temporary file, then renames it over `path`.
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let io = |e: std::io::Error| CliError::io(path, e);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Input(e.to_string()))?;
        tmp.write_all(text.as_bytes()).map_err(io)?;
        tmp.write_all(b"\n").map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }
}
