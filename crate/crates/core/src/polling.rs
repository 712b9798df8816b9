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

//! Ballot-polling SPRT of the null `N_w - N_ℓ <= c` in one stratum.
//!
//! The number of ballots showing neither candidate is a nuisance parameter.
//! Under the null the likelihood of the observed counts is maximized on the
//! boundary `N_ℓ = N_w - c`, leaving a one-dimensional integer problem in
//! `x = N_w` that is solved by branch and bound on the concave profile
//! log-likelihood
//!
//! ```text
//! f(x) = Σ_{i<W} ln(x-i) + Σ_{i<L} ln(x-c-i) + Σ_{i<U} ln(N-2x+c-i)
//!      = f⁺(x) + f⁻(x)
//! ```
//!
//! where `f⁺` increases and `f⁻` decreases in `x`, so `f⁺(z) + f⁻(y)` bounds
//! `f` on `y <= x <= z`.

use serde::{Deserialize, Serialize};

use crate::logprod::ln_falling;
use crate::{Error, Result};

/// What a polled ballot shows for the pair under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretation {
    /// A vote for `w` and not `ℓ`.
    #[serde(rename = "w")]
    Winner,
    /// A vote for `ℓ` and not `w`.
    #[serde(rename = "l")]
    Loser,
    /// Both, neither, or invalid.
    #[serde(rename = "u")]
    Other,
}

/// Counts `(W_n, L_n, U_n)` of a polling sample drawn without replacement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PollingSampleTally {
    pub w: u64,
    pub l: u64,
    pub u: u64,
}

impl PollingSampleTally {
    pub fn new(w: u64, l: u64, u: u64) -> Self {
        PollingSampleTally { w, l, u }
    }

    pub fn n(&self) -> u64 {
        self.w + self.l + self.u
    }

    pub fn record(&mut self, interp: Interpretation) {
        match interp {
            Interpretation::Winner => self.w += 1,
            Interpretation::Loser => self.l += 1,
            Interpretation::Other => self.u += 1,
        }
    }
}

impl std::ops::Add for PollingSampleTally {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        PollingSampleTally { w: self.w + o.w, l: self.l + o.l, u: self.u + o.u }
    }
}

/// The null `N_w - N_ℓ <= c` and the reported-tally alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PollingNull {
    /// `N_s`
    pub ballots: u64,
    /// Margin threshold in votes.
    pub c: i64,
    pub reported_w: u64,
    pub reported_l: u64,
    pub reported_u: u64,
}

impl PollingNull {
    pub fn new(ballots: u64, c: i64, reported_w: u64, reported_l: u64, reported_u: u64) -> Result<Self> {
        let null = PollingNull { ballots, c, reported_w, reported_l, reported_u };
        null.validate()?;
        Ok(null)
    }

    /// Builds the null from reported stratum votes; everything not for `w` or
    /// `ℓ` is "other".
    pub fn from_reported(ballots: u64, c: i64, reported_w: u64, reported_l: u64) -> Result<Self> {
        let rest = ballots.checked_sub(reported_w + reported_l).ok_or_else(|| {
            Error::domain(format!(
                "reported votes {reported_w} + {reported_l} exceed {ballots} ballots"
            ))
        })?;
        Self::new(ballots, c, reported_w, reported_l, rest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reported_w + self.reported_l + self.reported_u != self.ballots {
            return Err(Error::domain(format!(
                "alternative tallies {} + {} + {} do not sum to {} ballots",
                self.reported_w, self.reported_l, self.reported_u, self.ballots
            )));
        }
        Ok(())
    }

    /// True when the alternative itself satisfies the null.
    pub fn is_vacuous(&self) -> bool {
        self.reported_w as i64 - self.reported_l as i64 <= self.c
    }

    /// Feasible `x = N_w` on the null boundary: `max(W, L+c) ..= ⌊(N-U+c)/2⌋`.
    pub fn feasible_range(&self, tally: &PollingSampleTally) -> (i64, i64) {
        let lo = (tally.w as i64).max(tally.l as i64 + self.c);
        let hi = (self.ballots as i64 - tally.u as i64 + self.c).div_euclid(2);
        (lo, hi)
    }
}

/// Global maximizer of the profile log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMaximizer {
    pub x_star: i64,
    pub f_at_x_star: f64,
    /// Points at which `f` was evaluated.
    pub evaluations: usize,
}

struct Profile<'a> {
    tally: &'a PollingSampleTally,
    null: &'a PollingNull,
}

impl Profile<'_> {
    fn f_plus(&self, x: i64) -> f64 {
        ln_falling(x, self.tally.w) + ln_falling(x - self.null.c, self.tally.l)
    }

    fn f_minus(&self, x: i64) -> f64 {
        ln_falling(self.null.ballots as i64 - 2 * x + self.null.c, self.tally.u)
    }
}

/// Profile log-likelihood `f(x)` of the null boundary at `N_w = x`.
pub fn profile_log_likelihood(tally: &PollingSampleTally, null: &PollingNull, x: i64) -> f64 {
    let p = Profile { tally, null };
    p.f_plus(x) + p.f_minus(x)
}

#[derive(Clone, Copy)]
struct Point {
    x: i64,
    plus: f64,
    minus: f64,
}

impl Point {
    fn f(&self) -> f64 {
        self.plus + self.minus
    }
}

/// Maximizes the profile log-likelihood over feasible integers by branch and bound.
///
/// Evaluated points are kept sorted; the range between neighbours `y < z` is
/// bounded by `f⁺(z) + f⁻(y)`. The range with the largest bound is split at
/// its integer midpoint until the best evaluated point dominates every bound.
/// Ties go to the smallest `x`.
pub fn profile_max(tally: &PollingSampleTally, null: &PollingNull) -> Result<ProfileMaximizer> {
    null.validate()?;
    let (lo, hi) = null.feasible_range(tally);
    if lo > hi {
        return Err(Error::domain(format!(
            "null unsatisfiable with observed counts (feasible range {lo}..={hi} is empty)"
        )));
    }
    let profile = Profile { tally, null };
    let eval = |x: i64| Point { x, plus: profile.f_plus(x), minus: profile.f_minus(x) };

    let mut points: Vec<Point> = vec![eval(lo)];
    if hi > lo {
        let mid = lo + (hi - lo) / 2;
        if mid > lo {
            points.push(eval(mid));
        }
        points.push(eval(hi));
    }

    // Guards against bounds that agree with the best value only up to rounding.
    let slack = |best: f64| 1e-12 * best.abs().max(1.0);
    loop {
        let (best_x, best_f) = points
            .iter()
            .fold((points[0].x, f64::NEG_INFINITY), |(bx, bf), p| {
                if p.f() > bf { (p.x, p.f()) } else { (bx, bf) }
            });
        let mut split: Option<(usize, f64)> = None;
        for (m, w) in points.windows(2).enumerate() {
            if w[1].x - w[0].x < 2 {
                continue;
            }
            let bound = w[1].plus + w[0].minus;
            if bound > best_f - slack(best_f) && split.is_none_or(|(_, b)| bound > b) {
                split = Some((m, bound));
            }
        }
        match split {
            None => {
                return Ok(ProfileMaximizer { x_star: best_x, f_at_x_star: best_f, evaluations: points.len() });
            }
            Some((m, _)) => {
                let (y, z) = (points[m].x, points[m + 1].x);
                points.insert(m + 1, eval(y + (z - y) / 2));
            }
        }
    }
}

/// Sequentially valid P-value for `N_w - N_ℓ <= c` after a without-replacement sample.
///
/// The null likelihood is profiled over the margins `c` and `c - 1`, whose
/// maximum equals the maximum over the whole null.
///
/// Returns 1 when the sample points the wrong way (`L >= W - c·n/N`), when the
/// alternative satisfies the null, or when the observed counts are impossible
/// under the alternative but not under the null.
pub fn sprt_pvalue(tally: &PollingSampleTally, null: &PollingNull) -> Result<f64> {
    null.validate()?;
    let n = tally.n();
    if n > null.ballots {
        return Err(Error::domain(format!(
            "{n} draws without replacement from {} ballots",
            null.ballots
        )));
    }
    if n == 0 || null.is_vacuous() {
        return Ok(1.0);
    }
    let (w, l, u, big_n, c) =
        (tally.w as i128, tally.l as i128, tally.u as i128, null.ballots as i128, null.c as i128);
    // L >= W - c n / N, cleared of the division.
    if (l - w) * big_n + c * n as i128 >= 0 {
        return Ok(1.0);
    }

    let alt_possible = tally.w <= null.reported_w && tally.l <= null.reported_l && tally.u <= null.reported_u;
    // Some N_w - N_ℓ <= c fits the data iff c >= 2W + U - N.
    let null_possible = c >= 2 * w + u - big_n;
    match (null_possible, alt_possible) {
        (false, false) => {
            return Err(Error::domain("tally impossible under both hypotheses"));
        }
        (false, true) => return Ok(0.0),
        (true, false) => return Ok(1.0),
        (true, true) => {}
    }
    // N_u = N - 2x + c ties the boundary to a parity, so the best null point
    // can sit one vote inside it; checking margins c and c-1 covers both.
    let mut best_f = f64::NEG_INFINITY;
    for boundary in [null.c, null.c - 1] {
        let b = PollingNull { c: boundary, ..*null };
        let (lo, hi) = b.feasible_range(tally);
        if lo <= hi {
            best_f = best_f.max(profile_max(tally, &b)?.f_at_x_star);
        }
    }
    if best_f == f64::NEG_INFINITY {
        // Only null points deeper inside fit the data.
        return Ok(1.0);
    }
    let alt = ln_falling(null.reported_w as i64, tally.w)
        + ln_falling(null.reported_l as i64, tally.l)
        + ln_falling(null.reported_u as i64, tally.u);
    let p = (best_f - alt).exp();
    Ok(if p.is_nan() { 1.0 } else { p.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_max(tally: &PollingSampleTally, null: &PollingNull) -> Option<(i64, f64)> {
        let (lo, hi) = null.feasible_range(tally);
        (lo..=hi)
            .map(|x| {
                let f: f64 = (0..tally.w as i64).map(|i| ((x - i) as f64).ln()).sum::<f64>()
                    + (0..tally.l as i64).map(|i| ((x - null.c - i) as f64).ln()).sum::<f64>()
                    + (0..tally.u as i64)
                        .map(|i| ((null.ballots as i64 - 2 * x + null.c - i) as f64).ln())
                        .sum::<f64>();
                (x, f)
            })
            .fold(None, |acc: Option<(i64, f64)>, (x, f)| match acc {
                Some((_, bf)) if bf >= f => acc,
                _ => Some((x, f)),
            })
    }

    // Likelihood ratio with the null maximized by brute force over every
    // population (N_w, N_ℓ) with N_w - N_ℓ <= c, not just the boundary.
    fn full_null_pvalue(tally: &PollingSampleTally, null: &PollingNull) -> f64 {
        let n = null.ballots as i64;
        let ln_fall = |top: i64, k: u64| -> f64 {
            (0..k as i64).map(|i| if top - i > 0 { ((top - i) as f64).ln() } else { f64::NEG_INFINITY }).sum()
        };
        let mut best = f64::NEG_INFINITY;
        for nw in 0..=n {
            for nl in 0..=(n - nw) {
                if nw - nl > null.c {
                    continue;
                }
                let f = ln_fall(nw, tally.w) + ln_fall(nl, tally.l) + ln_fall(n - nw - nl, tally.u);
                best = best.max(f);
            }
        }
        let alt = ln_fall(null.reported_w as i64, tally.w)
            + ln_fall(null.reported_l as i64, tally.l)
            + ln_fall(null.reported_u as i64, tally.u);
        if alt == f64::NEG_INFINITY {
            return 1.0;
        }
        (best - alt).exp().min(1.0)
    }

    // Exhaustive maximum of the library's own objective.
    fn scan_max(tally: &PollingSampleTally, null: &PollingNull) -> f64 {
        let (lo, hi) = null.feasible_range(tally);
        (lo..=hi).map(|x| profile_log_likelihood(tally, null, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn toy_instance() {
        let null = PollingNull::new(10, 1, 6, 4, 0).unwrap();
        let tally = PollingSampleTally::new(3, 1, 0);
        assert_eq!(null.feasible_range(&tally), (3, 5));
        let best = profile_max(&tally, &null).unwrap();
        assert_eq!(best.x_star, 5);
        assert!((best.f_at_x_star - 240f64.ln()).abs() < 1e-12);
        // The boundary alone gives 240/480, but the null also contains
        // N_w = N_ℓ = 5, whose likelihood is 5·4·3·5 = 300.
        let p = sprt_pvalue(&tally, &null).unwrap();
        assert!((p - 0.625).abs() < 1e-12, "{p}");
        assert!((p - full_null_pvalue(&tally, &null)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_range() {
        let null = PollingNull::new(10, 0, 6, 4, 0).unwrap();
        let tally = PollingSampleTally::new(5, 5, 0);
        assert_eq!(null.feasible_range(&tally), (5, 5));
        assert_eq!(profile_max(&tally, &null).unwrap().x_star, 5);
    }

    #[test]
    fn empty_range_is_domain_error() {
        let null = PollingNull::new(10, 0, 6, 4, 0).unwrap();
        let tally = PollingSampleTally::new(7, 2, 0);
        assert!(matches!(profile_max(&tally, &null), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_sample_and_wrong_direction() {
        let null = PollingNull::new(10, 1, 6, 4, 0).unwrap();
        assert_eq!(sprt_pvalue(&PollingSampleTally::default(), &null).unwrap(), 1.0);
        assert_eq!(sprt_pvalue(&PollingSampleTally::new(1, 2, 0), &null).unwrap(), 1.0);
    }

    #[test]
    fn vacuous_alternative() {
        let null = PollingNull::new(10, 2, 6, 4, 0).unwrap();
        assert_eq!(sprt_pvalue(&PollingSampleTally::new(5, 0, 0), &null).unwrap(), 1.0);
    }

    #[test]
    fn impossible_tallies() {
        // 2W + U - N = 4 > c: the null cannot produce this sample.
        let null = PollingNull::new(10, 1, 8, 2, 0).unwrap();
        assert_eq!(sprt_pvalue(&PollingSampleTally::new(7, 0, 0), &null).unwrap(), 0.0);
        // Alternative has 8 w-ballots but 9 were seen, and the null cannot hold either.
        assert!(sprt_pvalue(&PollingSampleTally::new(9, 0, 0), &null).is_err());
        // Alternative has no "other" ballots; the null can explain one.
        let null = PollingNull::new(10, 0, 6, 4, 0).unwrap();
        assert_eq!(sprt_pvalue(&PollingSampleTally::new(3, 0, 1), &null).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PollingNull::new(10, 0, 6, 4, 1).is_err());
        assert!(PollingNull::from_reported(10, 0, 8, 4).is_err());
        let null = PollingNull::new(10, 0, 6, 4, 0).unwrap();
        assert!(sprt_pvalue(&PollingSampleTally::new(6, 4, 1), &null).is_err());
    }

    #[test]
    fn negative_threshold() {
        let null = PollingNull::from_reported(1000, -50, 520, 430).unwrap();
        let tally = PollingSampleTally::new(60, 35, 5);
        let (x, f) = brute_max(&tally, &null).unwrap();
        let best = profile_max(&tally, &null).unwrap();
        assert_eq!(best.f_at_x_star, scan_max(&tally, &null));
        assert!((best.f_at_x_star - f).abs() < 1e-10);
        assert_eq!(best.x_star, x);
        let p = sprt_pvalue(&tally, &null).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    fn instance() -> impl Strategy<Value = (PollingSampleTally, PollingNull)> {
        (2u64..=200)
            .prop_flat_map(|n| (Just(n), 0..=n, 0..=n, -(n as i64)..(n as i64)))
            .prop_flat_map(|(n, vw, vl, c)| {
                let vl = vl.min(n - vw);
                (Just(n), Just(vw), Just(vl), Just(c), 0..=n, 0..=n, 0..=n)
            })
            .prop_filter_map("sample larger than stratum", |(n, vw, vl, c, w, l, u)| {
                if w + l + u > n {
                    return None;
                }
                Some((PollingSampleTally::new(w, l, u), PollingNull::from_reported(n, c, vw, vl).ok()?))
            })
    }

    fn small_instance() -> impl Strategy<Value = (PollingSampleTally, PollingNull)> {
        instance().prop_filter("small stratum", |(_, null)| null.ballots <= 40)
    }

    proptest! {
        #[test]
        fn branch_and_bound_matches_scan((tally, null) in instance()) {
            match brute_max(&tally, &null) {
                None => prop_assert!(profile_max(&tally, &null).is_err()),
                Some((_, f)) => {
                    let best = profile_max(&tally, &null).unwrap();
                    prop_assert_eq!(best.f_at_x_star, scan_max(&tally, &null));
                    prop_assert!((best.f_at_x_star - f).abs() <= 1e-12 * f.abs().max(1.0));
                }
            }
        }

        #[test]
        fn pvalue_matches_full_null((tally, null) in small_instance()) {
            let early = (tally.l as i64 - tally.w as i64) * null.ballots as i64 + null.c * tally.n() as i64 >= 0;
            if let Ok(p) = sprt_pvalue(&tally, &null) {
                if !early && !null.is_vacuous() {
                    let q = full_null_pvalue(&tally, &null);
                    prop_assert!(p >= q * (1.0 - 1e-9), "p={} full={}", p, q);
                    if p < 1.0 {
                        prop_assert!((p - q).abs() <= 1e-9 * q.max(1e-300), "p={} full={}", p, q);
                    }
                }
            }
        }

        #[test]
        fn pvalue_nondecreasing_in_c((tally, null) in instance()) {
            let mut prev = 0.0f64;
            for c in (null.c - 20)..=(null.c + 20) {
                if let Ok(p) = sprt_pvalue(&tally, &PollingNull { c, ..null }) {
                    prop_assert!(p.ln() >= prev.ln() - 1e-12, "c={}: {} < {}", c, p, prev);
                    prev = p;
                }
            }
        }

        #[test]
        fn pvalue_in_unit_interval((tally, null) in instance()) {
            if let Ok(p) = sprt_pvalue(&tally, &null) {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
