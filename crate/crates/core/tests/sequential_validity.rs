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


//! Monte Carlo checks that each stratum test, watched continuously, rejects a
//! true null no more often than the risk limit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use suite_core::comparison::{km_pvalue, ComparisonSampleSummary, DEFAULT_GAMMA};
use suite_core::fisher::fisher_combined;
use suite_core::polling::{sprt_pvalue, PollingNull, PollingSampleTally};

fn cap(alpha: f64, reps: usize) -> f64 {
    alpha + 3.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt()
}

#[test]
fn comparison_test_is_sequentially_valid_at_a_tie() {
    // Reported margin 200 of 10,000 ballots; 100 two-vote overstatements
    // make the true margin zero.
    let (ballots, margin, alpha, reps) = (10_000u64, 200i64, 0.1, 2_000);
    let o2_rate = 100.0 / ballots as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rejections = 0;
    for _ in 0..reps {
        let mut s = ComparisonSampleSummary::empty(DEFAULT_GAMMA);
        for _ in 0..3_000 {
            s.record(if rng.random::<f64>() < o2_rate { 2 } else { 0 }).unwrap();
            if km_pvalue(&s, ballots, margin, 1.0).unwrap() <= alpha {
                rejections += 1;
                break;
            }
        }
    }
    let rate = rejections as f64 / reps as f64;
    assert!(rate <= cap(alpha, reps), "rejection rate {rate}");
}

#[test]
fn polling_test_is_sequentially_valid_on_the_null_boundary() {
    // Reported 1,100 to 900 of 2,000; the truth is a 1,000 to 1,000 tie.
    let (ballots, alpha, reps) = (2_000u64, 0.1, 500);
    let null = PollingNull::from_reported(ballots, 0, 1_100, 900).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut rejections = 0;
    for _ in 0..reps {
        let mut left = [1_000u64, 1_000];
        let mut t = PollingSampleTally::default();
        for k in 1..=1_000 {
            if rng.random_range(0..left[0] + left[1]) < left[0] {
                left[0] -= 1;
                t.w += 1;
            } else {
                left[1] -= 1;
                t.l += 1;
            }
            if k % 5 == 0 && sprt_pvalue(&t, &null).unwrap() <= alpha {
                rejections += 1;
                break;
            }
        }
    }
    let rate = rejections as f64 / reps as f64;
    assert!(rate <= cap(alpha, reps), "rejection rate {rate}");
}

#[test]
fn polling_test_is_valid_with_other_votes() {
    // Null population with margin exactly c = 10 and a third of ballots for others.
    let (ballots, alpha, reps) = (900u64, 0.05, 500);
    let null = PollingNull::from_reported(ballots, 10, 400, 200).unwrap();
    let truth = [305u64, 295, 300];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut rejections = 0;
    for _ in 0..reps {
        let mut left = truth;
        let mut t = PollingSampleTally::default();
        for k in 1..=600 {
            let r = rng.random_range(0..left.iter().sum::<u64>());
            let i = if r < left[0] { 0 } else if r < left[0] + left[1] { 1 } else { 2 };
            left[i] -= 1;
            match i {
                0 => t.w += 1,
                1 => t.l += 1,
                _ => t.u += 1,
            }
            if k % 5 == 0 && sprt_pvalue(&t, &null).unwrap() <= alpha {
                rejections += 1;
                break;
            }
        }
    }
    let rate = rejections as f64 / reps as f64;
    assert!(rate <= cap(alpha, reps), "rejection rate {rate}");
}

#[test]
fn fisher_combination_of_uniform_pvalues_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let reps = 20_000;
    for alpha in [0.01, 0.05, 0.1] {
        let hits = (0..reps)
            .filter(|_| {
                let (a, b): (f64, f64) = (rng.random_range(f64::EPSILON..1.0), rng.random_range(f64::EPSILON..1.0));
                fisher_combined(&[a, b]).unwrap() <= alpha
            })
            .count();
        let rate = hits as f64 / reps as f64;
        assert!(rate <= cap(alpha, reps), "alpha {alpha}: {rate}");
        assert!(rate >= alpha - 3.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt(), "alpha {alpha}: {rate}");
    }
}
