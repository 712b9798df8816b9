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

//! Risk-limiting audits of contests whose ballots are split into independently
//! sampled strata.
//!
//! A contest is audited by testing, for every winner/loser pair and every
//! allocation `λ` of outcome-changing error between a ballot-level comparison
//! stratum (CVR) and a ballot-polling stratum (no-CVR), whether the stratum
//! overstatements could be that large. Stratum P-values are combined with
//! Fisher's function and the combined P-value is maximized over `λ`; the audit
//! stops when that maximum is at most the risk limit.
//!
//! Module map:
//! * [`domain`]: contest and stratum data model, validation.
//! * [`comparison`]: Kaplan-Markov test for an overstatement quota in the CVR stratum.
//! * [`polling`]: SPRT with the nuisance parameter profiled out by branch and bound.
//! * [`fisher`]: chi-square tail, λ bounds, interval bracketing and maximization.
//! * [`hybrid`]: glue that evaluates a two-stratum audit for every pair.
//! * [`simulation`]: populations, Monte Carlo stopping probabilities, sample-size planning.

pub mod comparison;
pub mod domain;
mod error;
pub mod fisher;
pub mod hybrid;
pub(crate) mod logprod;
pub mod polling;
pub mod simulation;

pub use error::{Error, Result};
