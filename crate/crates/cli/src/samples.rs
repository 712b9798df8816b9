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


//! Readers for audited-sample CSV files.
//!
//! Both formats carry a `draw_index` column plus one value column; a header
//! row is required and every diagnostic names the file and line.

use std::collections::HashSet;
use std::path::Path;

use suite_core::comparison::ComparisonSampleSummary;
use suite_core::polling::{Interpretation, PollingSampleTally};

use crate::error::{CliError, CliResult};

fn read_column<T>(
    path: &Path,
    column: &str,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> CliResult<Vec<T>> {
    let at = |line: u64, msg: &str| CliError::Input(format!("{}:{line}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| at(1, &e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| at(1, &format!("missing `{name}` column in header {:?}", headers.iter().collect::<Vec<_>>())))
    };
    let (index_col, value_col) = (find("draw_index")?, find(column)?);

    let mut seen = HashSet::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            at(line, &e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let index: u64 = record[index_col]
            .parse()
            .map_err(|_| at(line, &format!("draw_index {:?} is not a non-negative integer", &record[index_col])))?;
        if !seen.insert(index) {
            return Err(at(line, &format!("duplicate draw_index {index}")));
        }
        values.push(parse(&record[value_col]).map_err(|msg| at(line, &msg))?);
    }
    Ok(values)
}

/// Reads `draw_index,discrepancy` rows into a comparison summary.
pub fn read_cvr_sample(path: &Path, gamma: f64) -> CliResult<ComparisonSampleSummary> {
    let discrepancies = read_column(path, "discrepancy", |s| match s.parse::<i64>() {
        Ok(d) if (-2..=2).contains(&d) => Ok(d),
        _ => Err(format!("discrepancy {s:?} is not one of -2, -1, 0, 1, 2")),
    })?;
    let mut summary = ComparisonSampleSummary::empty(gamma);
    summary.validate()?;
    for d in discrepancies {
        summary.record(d)?;
    }
    Ok(summary)
}

/// Reads `draw_index,interpretation` rows (`w`, `l` or `u`) into a tally.
pub fn read_polling_sample(path: &Path) -> CliResult<PollingSampleTally> {
    let readings = read_column(path, "interpretation", |s| match s {
        "w" => Ok(Interpretation::Winner),
        "l" => Ok(Interpretation::Loser),
        "u" => Ok(Interpretation::Other),
        _ => Err(format!("interpretation {s:?} is not one of w, l, u")),
    })?;
    let mut tally = PollingSampleTally::default();
    for r in readings {
        tally.record(r);
    }
    Ok(tally)
}
