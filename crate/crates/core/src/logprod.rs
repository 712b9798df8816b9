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

//! Logarithms of long integer products without overflow.

const CHUNK_LIMIT: f64 = 1e280;

/// `ln(top · (top-1) · … · (top-count+1))`, the log of a falling factorial.
///
/// Returns `-inf` when some factor is `<= 0`. Factors are multiplied in
/// floating point until the running product nears overflow, then folded into
/// the log sum, so long products cost one `ln` per few dozen factors.
pub(crate) fn ln_falling(top: i64, count: u64) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let last = top - (count as i64 - 1);
    if last <= 0 {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    let mut acc = 1.0f64;
    let mut factor = top;
    while factor >= last {
        let f = factor as f64;
        if acc > CHUNK_LIMIT / f {
            sum += acc.ln();
            acc = 1.0;
        }
        acc *= f;
        factor -= 1;
    }
    sum + acc.ln()
}
