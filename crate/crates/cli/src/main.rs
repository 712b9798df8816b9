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


//! `suite`: plan, evaluate, simulate and escalate stratified hybrid audits.
//!
//! Exit status: 0 when a result was computed (whatever the decision),
//! 2 for bad input, 3 when a P-value function breaks its monotonicity
//! contract, 4 when a sampling target cannot be reached.

mod commands;
mod error;
mod samples;
mod session;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use suite_core::comparison::DEFAULT_GAMMA;

#[derive(Parser)]
#[command(name = "suite", version, about = "Stratified risk-limiting audits for hybrid CVR / no-CVR contests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose sample sizes for both strata by simulation.
    Plan(PlanArgs),
    /// Compute the maximized combined P-value for audited samples.
    Pvalue(PvalueArgs),
    /// Estimate the stopping probability of a sample plan.
    Simulate(SimulateArgs),
    /// Add a round of draws to a persistent audit session.
    Escalate(EscalateArgs),
}

#[derive(Args)]
struct MaximizerArgs {
    /// Initial grid points over the allocation range.
    #[arg(long, default_value_t = 26)]
    grid_points: usize,
    /// Bisection passes for undecided intervals.
    #[arg(long, default_value_t = 20)]
    max_refinements: usize,
}

#[derive(Args)]
struct PvalueArgs {
    #[arg(long)]
    contest: PathBuf,
    /// CSV with columns draw_index,discrepancy.
    #[arg(long)]
    cvr_sample: Option<PathBuf>,
    /// CSV with columns draw_index,interpretation.
    #[arg(long)]
    polling_sample: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[command(flatten)]
    maximizer: MaximizerArgs,
    /// Restrict to one pair, written winner:loser (repeatable).
    #[arg(long = "pair", value_name = "W:L")]
    pairs: Vec<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's replicate count.
    #[arg(long)]
    reps: Option<u64>,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "SUITE_THREADS")]
    threads: Option<usize>,
    /// Include wall-clock time (makes output run-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Population {
    ReportedCorrect,
    Tied,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    contest: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    target_prob: f64,
    #[arg(long, default_value_t = 2000)]
    reps: u64,
    /// Population the plan must perform well against.
    #[arg(long, value_enum, default_value_t = Population::ReportedCorrect)]
    population: Population,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Largest CVR-stratum sample considered.
    #[arg(long)]
    max_n1: Option<u64>,
    /// Largest no-CVR-stratum sample considered.
    #[arg(long)]
    max_n2: Option<u64>,
    #[arg(long, env = "SUITE_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct EscalateArgs {
    /// Session file; created when absent (requires --contest).
    #[arg(long)]
    session: PathBuf,
    /// Contest JSON; checked against the session when it already exists.
    #[arg(long)]
    contest: Option<PathBuf>,
    #[arg(long)]
    cvr_sample: Option<PathBuf>,
    #[arg(long)]
    polling_sample: Option<PathBuf>,
    /// Error-bound inflation for a new session (default 1.03905).
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    maximizer: MaximizerArgs,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => commands::plan(a),
        Command::Pvalue(a) => commands::pvalue(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Escalate(a) => commands::escalate(a),
    };
    match result {
        Ok(output) => {
            println!("{output}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let error::CliError::Unreachable { report } = &e {
                println!("{report}");
            }
            eprintln!("suite: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
