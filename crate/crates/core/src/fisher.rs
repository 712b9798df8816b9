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

//! Fisher combination of stratum P-values and its maximization over the
//! allocation `λ` of outcome-changing error between two strata.
//!
//! For fixed `λ`, `χ(λ) = -2 (ln p₁(λ) + ln p₂(λ))` is compared with the
//! chi-square distribution on 4 degrees of freedom. The audit may stop only if
//! `χ` exceeds the `1-α` quantile for every feasible `λ`. Stratum 1's P-value
//! falls as `λ` grows and stratum 2's rises, so on `[a, b]`
//!
//! ```text
//! -2 (ln p₁(a) + ln p₂(b)) <= χ(λ) <= -2 (ln p₁(b) + ln p₂(a)),
//! ```
//!
//! which turns a grid of evaluations into certified piecewise-constant bounds.

use serde::{Deserialize, Serialize};

use crate::domain::{ContestSpec, StratumSpec};
use crate::{Error, Result};

/// Upper tail of the chi-square distribution with an even number of degrees
/// of freedom: `exp(-x/2) Σ_{k<dof/2} (x/2)^k / k!`.
pub fn chi2_sf_even(x: f64, dof: u32) -> Result<f64> {
    if dof == 0 || !dof.is_multiple_of(2) {
        return Err(Error::domain(format!("chi-square tail needs positive even dof, got {dof}")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("chi-square statistic must be >= 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..dof / 2 {
        term *= half / k as f64;
        sum += term;
    }
    Ok((sum.ln() - half).exp().clamp(0.0, 1.0))
}

/// `x` with `chi2_sf_even(x, dof) = upper_tail`, by bisection to 1e-12.
pub fn chi2_isf_even(upper_tail: f64, dof: u32) -> Result<f64> {
    if !(upper_tail > 0.0 && upper_tail < 1.0) {
        return Err(Error::domain(format!("tail probability {upper_tail} not in (0, 1)")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while chi2_sf_even(hi, dof)? > upper_tail {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if chi2_sf_even(mid, dof)? > upper_tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_pvalue(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("P-value {p} not in [0, 1]")));
    }
    Ok(())
}

/// Fisher's statistic `-2 Σ ln p_s`; infinite when any `p_s` is 0.
pub fn fisher_statistic(pvalues: &[f64]) -> Result<f64> {
    let mut chi = 0.0;
    for &p in pvalues {
        check_pvalue(p)?;
        chi -= 2.0 * p.ln();
    }
    Ok(chi)
}

/// Combined P-value of independent stratum P-values at a fixed allocation.
pub fn fisher_combined(pvalues: &[f64]) -> Result<f64> {
    if pvalues.is_empty() {
        return Err(Error::domain("no P-values to combine"));
    }
    let chi = fisher_statistic(pvalues)?;
    if chi.is_infinite() {
        log::debug!("stratum P-value of 0; combined P-value is 0");
    }
    chi2_sf_even(chi, 2 * pvalues.len() as u32)
}

pub fn combine_at_lambda(p1: f64, p2: f64) -> Result<f64> {
    fisher_combined(&[p1, p2])
}

/// Range of `λ` not ruled out a priori: no stratum can overstate its margin
/// by more than `V_{wℓ,s} + N_s` votes.
pub fn lambda_bounds_for(margin: i64, stratum1: (i64, u64), stratum2: (i64, u64)) -> Result<(f64, f64)> {
    if margin <= 0 {
        return Err(Error::domain(format!("overall margin must be positive, got {margin}")));
    }
    let v = margin as f64;
    let lower = 1.0 - (stratum2.0 as f64 + stratum2.1 as f64) / v;
    let upper = (stratum1.0 as f64 + stratum1.1 as f64) / v;
    Ok((lower, upper))
}

/// `(λ_-, λ_+)` for a two-stratum contest; stratum 1 is the first listed.
pub fn lambda_bounds(contest: &ContestSpec, winner: &str, loser: &str) -> Result<(f64, f64)> {
    let [s1, s2] = two_strata(contest)?;
    let side = |s: &StratumSpec| (s.margin(winner, loser), s.ballots);
    lambda_bounds_for(contest.margin(winner, loser), side(s1), side(s2))
}

fn two_strata(contest: &ContestSpec) -> Result<[&StratumSpec; 2]> {
    match contest.strata.as_slice() {
        [a, b] => Ok([a, b]),
        s => Err(Error::domain(format!("expected two strata, found {}", s.len()))),
    }
}

/// Certified bounds on `χ(λ)` over an interval of allocations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiBounds {
    pub a: f64,
    pub b: f64,
    pub chi_lower: f64,
    pub chi_upper: f64,
}

impl ChiBounds {
    /// Bounds from stratum P-values at the interval ends. Fails unless
    /// `p1(a) >= p1(b)` and `p2(a) <= p2(b)`.
    pub fn from_endpoints(a: f64, b: f64, p1: (f64, f64), p2: (f64, f64)) -> Result<Self> {
        let tol = 1e-12;
        if p1.0 < p1.1 * (1.0 - tol) {
            return Err(Error::Monotonicity(format!(
                "stratum-1 P-value rises from {} at λ={a} to {} at λ={b}",
                p1.0, p1.1
            )));
        }
        if p2.0 > p2.1 * (1.0 + tol) {
            return Err(Error::Monotonicity(format!(
                "stratum-2 P-value falls from {} at λ={a} to {} at λ={b}",
                p2.0, p2.1
            )));
        }
        Ok(ChiBounds {
            a,
            b,
            chi_lower: -2.0 * (p1.0.ln() + p2.1.ln()),
            chi_upper: -2.0 * (p1.1.ln() + p2.0.ln()),
        })
    }
}

/// Bounds on `χ` valid for every `λ ∈ [a, b)`.
pub fn interval_chi_bounds(
    a: f64,
    b: f64,
    p1_fn: impl Fn(f64) -> Result<f64>,
    p2_fn: impl Fn(f64) -> Result<f64>,
) -> Result<ChiBounds> {
    if !(a < b) {
        return Err(Error::domain(format!("empty interval [{a}, {b})")));
    }
    ChiBounds::from_endpoints(a, b, (p1_fn(a)?, p1_fn(b)?), (p2_fn(a)?, p2_fn(b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximizerControls {
    /// Equally spaced points over the core range `[max(λ_-, -3), min(λ_+, 4)]`.
    pub initial_grid_points: usize,
    /// Once the audit is known not to stop, intervals whose certified P-value
    /// bound exceeds the best grid P-value by more than this are still bisected
    /// to sharpen the reported maximum. `1.0` or more turns this off.
    pub refine_threshold: f64,
    /// Bisection passes.
    pub max_refinements: usize,
}

impl Default for MaximizerControls {
    fn default() -> Self {
        MaximizerControls { initial_grid_points: 26, refine_threshold: 0.01, max_refinements: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub p1: f64,
    pub p2: f64,
    pub chi: f64,
    pub pvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMaximizationResult {
    /// Certified upper bound on the supremum over `λ` of the combined P-value.
    pub max_pvalue_upper: f64,
    /// Largest combined P-value among evaluated grid points.
    pub max_pvalue_point: f64,
    pub lambda_at_max: f64,
    /// True iff `max_pvalue_upper <= α`.
    pub decisive: bool,
    pub lambda_bounds: (f64, f64),
    pub refinements: usize,
    pub grid: Vec<GridPoint>,
    pub intervals: Vec<ChiBounds>,
}

impl FisherMaximizationResult {
    /// Result for a single stratum, whose P-value needs no combination.
    pub fn single(lambda: f64, p: f64, alpha: f64) -> Self {
        FisherMaximizationResult {
            max_pvalue_upper: p,
            max_pvalue_point: p,
            lambda_at_max: lambda,
            decisive: p <= alpha,
            lambda_bounds: (lambda, lambda),
            refinements: 0,
            grid: vec![GridPoint { lambda, p1: p, p2: 1.0, chi: -2.0 * p.ln(), pvalue: p }],
            intervals: Vec::new(),
        }
    }
}

/// Maximizes the combined P-value for one winner/loser pair of a two-stratum contest.
pub fn maximize_combined_pvalue(
    contest: &ContestSpec,
    winner: &str,
    loser: &str,
    p1_fn: impl Fn(f64) -> Result<f64>,
    p2_fn: impl Fn(f64) -> Result<f64>,
    controls: &MaximizerControls,
) -> Result<FisherMaximizationResult> {
    let bounds = lambda_bounds(contest, winner, loser)?;
    maximize_over_range(bounds, contest.risk_limit, p1_fn, p2_fn, controls)
}

fn initial_grid((lo, hi): (f64, f64), points: usize) -> Vec<f64> {
    let core_lo = lo.max(-3.0);
    let core_hi = hi.min(4.0);
    let mut grid = vec![lo, hi];
    if core_lo < core_hi && points >= 2 {
        let step = (core_hi - core_lo) / (points - 1) as f64;
        grid.extend((0..points).map(|k| if k + 1 == points { core_hi } else { core_lo + step * k as f64 }));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn sf4(chi: f64) -> f64 {
    chi2_sf_even(chi.max(0.0), 4).unwrap_or(1.0)
}

/// Grid search with certified interval bounds over `[λ_-, λ_+]`.
///
/// The grid always contains both ends of the range, so the interval bounds
/// cover every feasible `λ`. Undecided intervals (lower bound at or below the
/// quantile while every grid point is above it) are bisected up to
/// `max_refinements` times.
pub fn maximize_over_range(
    (lo, hi): (f64, f64),
    alpha: f64,
    p1_fn: impl Fn(f64) -> Result<f64>,
    p2_fn: impl Fn(f64) -> Result<f64>,
    controls: &MaximizerControls,
) -> Result<FisherMaximizationResult> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::domain(format!("empty allocation range [{lo}, {hi}]")));
    }
    let quantile = chi2_isf_even(alpha, 4)?;
    let eval = |lambda: f64| -> Result<GridPoint> {
        let (p1, p2) = (p1_fn(lambda)?, p2_fn(lambda)?);
        let chi = fisher_statistic(&[p1, p2])?;
        Ok(GridPoint { lambda, p1, p2, chi, pvalue: sf4(chi) })
    };
    let bounds_between = |a: &GridPoint, b: &GridPoint| {
        ChiBounds::from_endpoints(a.lambda, b.lambda, (a.p1, b.p1), (a.p2, b.p2))
    };

    let mut grid = initial_grid((lo, hi), controls.initial_grid_points)
        .into_iter()
        .map(eval)
        .collect::<Result<Vec<_>>>()?;
    let mut intervals = grid
        .windows(2)
        .map(|w| bounds_between(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;

    let mut refinements = 0;
    let mut stopping_ruled_out = false;
    loop {
        let undecided = |iv: &ChiBounds| iv.chi_lower <= quantile;
        if !stopping_ruled_out {
            stopping_ruled_out = grid.iter().any(|g| g.chi <= quantile)
                || intervals.iter().any(|iv| iv.chi_upper < quantile);
        }
        if !stopping_ruled_out && !intervals.iter().any(undecided) {
            break;
        }
        if refinements >= controls.max_refinements {
            break;
        }
        let targets: Vec<bool> = if stopping_ruled_out {
            let best = grid.iter().map(|g| g.pvalue).fold(0.0, f64::max);
            intervals
                .iter()
                .map(|iv| sf4(iv.chi_lower) > best + controls.refine_threshold)
                .collect()
        } else {
            intervals.iter().map(undecided).collect()
        };
        if !targets.iter().any(|&t| t) {
            break;
        }
        let mut new_grid = Vec::with_capacity(grid.len() * 2);
        let mut new_intervals = Vec::with_capacity(intervals.len() * 2);
        for (k, iv) in intervals.iter().enumerate() {
            new_grid.push(grid[k]);
            let mid = 0.5 * (iv.a + iv.b);
            if targets[k] && mid > iv.a && mid < iv.b {
                let m = eval(mid)?;
                new_intervals.push(bounds_between(&grid[k], &m)?);
                new_intervals.push(bounds_between(&m, &grid[k + 1])?);
                new_grid.push(m);
            } else {
                new_intervals.push(*iv);
            }
        }
        new_grid.push(*grid.last().expect("grid has at least one point"));
        grid = new_grid;
        intervals = new_intervals;
        refinements += 1;
    }

    let at_max = grid
        .iter()
        .fold(grid[0], |best, g| if g.pvalue > best.pvalue { *g } else { best });
    let max_pvalue_upper = intervals
        .iter()
        .map(|iv| sf4(iv.chi_lower))
        .fold(at_max.pvalue, f64::max);
    let decisive = intervals.iter().all(|iv| iv.chi_lower > quantile)
        && grid.iter().all(|g| g.chi > quantile)
        && max_pvalue_upper <= alpha;
    Ok(FisherMaximizationResult {
        max_pvalue_upper,
        max_pvalue_point: at_max.pvalue,
        lambda_at_max: at_max.lambda,
        decisive,
        lambda_bounds: (lo, hi),
        refinements,
        grid,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StratumKind;

    // Regularized upper incomplete gamma Q(k, x) by series/continued fraction,
    // independent of the closed form.
    pub(crate) fn gamma_q(k: f64, x: f64) -> f64 {
        fn ln_gamma(z: f64) -> f64 {
            // Lanczos, g = 7.
            const C: [f64; 9] = [
                0.999_999_999_999_809_9, 676.520_368_121_885_1, -1_259.139_216_722_402_8,
                771.323_428_777_653_1, -176.615_029_162_140_6, 12.507_343_278_686_905,
                -0.138_571_095_265_720_12, 9.984_369_578_019_572e-6, 1.505_632_735_149_311_6e-7,
            ];
            let z = z - 1.0;
            let t = z + 7.5;
            let s: f64 = C[0] + (1..9).map(|i| C[i] / (z + i as f64)).sum::<f64>();
            0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + s.ln()
        }
        if x == 0.0 {
            return 1.0;
        }
        let lead = k * x.ln() - x - ln_gamma(k);
        if x < k + 1.0 {
            let (mut sum, mut term, mut a) = (1.0 / k, 1.0 / k, k);
            for _ in 0..10_000 {
                a += 1.0;
                term *= x / a;
                sum += term;
                if term.abs() < sum.abs() * 1e-17 {
                    break;
                }
            }
            1.0 - sum * lead.exp()
        } else {
            // Lentz continued fraction.
            let tiny = 1e-300;
            let mut b = x + 1.0 - k;
            let mut c = 1.0 / tiny;
            let mut d = 1.0 / b;
            let mut h = d;
            for i in 1..10_000 {
                let an = -(i as f64) * (i as f64 - k);
                b += 2.0;
                d = an * d + b;
                if d.abs() < tiny { d = tiny; }
                c = b + an / c;
                if c.abs() < tiny { c = tiny; }
                d = 1.0 / d;
                let delta = d * c;
                h *= delta;
                if (delta - 1.0).abs() < 1e-17 {
                    break;
                }
            }
            lead.exp() * h
        }
    }

    #[test]
    fn chi2_examples() {
        assert_eq!(chi2_sf_even(0.0, 4).unwrap(), 1.0);
        let p = chi2_sf_even(-2.0 * 0.05f64.ln(), 2).unwrap();
        assert!((p - 0.05).abs() < 1e-15);
        let p = chi2_sf_even(11.98293, 4).unwrap();
        assert!((p - 0.017_478_654_584_055).abs() < 1e-9, "{p}");
        assert!((p - gamma_q(2.0, 11.98293 / 2.0)).abs() < 1e-12);
        assert_eq!(chi2_sf_even(f64::INFINITY, 4).unwrap(), 0.0);
    }

    #[test]
    fn chi2_rejects_odd_dof() {
        assert!(chi2_sf_even(1.0, 3).is_err());
        assert!(chi2_sf_even(1.0, 0).is_err());
        assert!(chi2_sf_even(-1.0, 2).is_err());
    }

    #[test]
    fn quantile_inverts_tail() {
        for &a in &[0.01, 0.05, 0.1, 0.5] {
            let q = chi2_isf_even(a, 4).unwrap();
            assert!((chi2_sf_even(q, 4).unwrap() - a).abs() < 1e-12);
        }
        assert!((chi2_isf_even(0.05, 4).unwrap() - 9.487_729_036_781_154).abs() < 1e-10);
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_at_lambda(1.0, 1.0).unwrap(), 1.0);
        let p = combine_at_lambda(0.05, 0.05).unwrap();
        assert!((p - 0.017_478_6).abs() < 1e-7, "{p}");
        assert!((p - gamma_q(2.0, -(0.05f64.ln()) * 2.0)).abs() < 1e-12);
        let p = combine_at_lambda(0.01, 1.0).unwrap();
        assert!((p - 0.056_051_701_859_880_91).abs() < 1e-12, "{p}");
        assert_eq!(combine_at_lambda(0.0, 0.3).unwrap(), 0.0);
        assert!(combine_at_lambda(1.5, 0.3).is_err());
    }

    fn contest(v1: (u64, u64, u64), v2: (u64, u64, u64)) -> ContestSpec {
        let s = |id: &str, kind, (n, w, l): (u64, u64, u64)| StratumSpec {
            id: id.into(),
            kind,
            ballots: n,
            reported_votes: [("w".to_string(), w), ("l".to_string(), l)].into_iter().collect(),
        };
        ContestSpec {
            risk_limit: 0.05,
            winners: vec!["w".into()],
            losers: vec!["l".into()],
            strata: vec![s("1", StratumKind::Cvr, v1), s("2", StratumKind::NoCvr, v2)],
        }
    }

    #[test]
    fn lambda_bounds_examples() {
        assert_eq!(lambda_bounds_for(100, (90, 200), (10, 50)).unwrap(), (0.4, 2.9));
        assert_eq!(lambda_bounds_for(100, (50, 50), (50, 50)).unwrap(), (0.0, 1.0));
        assert_eq!(lambda_bounds_for(100, (100, 300), (0, 0)).unwrap().0, 1.0);
        let c = contest((200, 140, 50), (50, 30, 20));
        assert_eq!(lambda_bounds(&c, "w", "l").unwrap(), (0.4, 2.9));
    }

    #[test]
    fn constant_functions_bracket_exactly() {
        let b = interval_chi_bounds(0.1, 0.2, |_| Ok(0.5), |_| Ok(0.5)).unwrap();
        assert_eq!(b.chi_lower, -4.0 * 0.5f64.ln());
        assert_eq!(b.chi_upper, b.chi_lower);
    }

    #[test]
    fn shrinking_interval_converges() {
        let p1 = |l: f64| Ok((-l).exp());
        let p2 = |l: f64| Ok((0.5 * (l - 3.0)).exp());
        let chi_a = -2.0 * (p1(1.0).unwrap().ln() + p2(1.0).unwrap().ln());
        for eps in [1e-2, 1e-4, 1e-6] {
            let b = interval_chi_bounds(1.0, 1.0 + eps, p1, p2).unwrap();
            assert!((b.chi_lower - chi_a).abs() <= 4.0 * eps);
            assert!((b.chi_upper - chi_a).abs() <= 4.0 * eps);
        }
    }

    #[test]
    fn wrong_direction_is_contract_violation() {
        let r = interval_chi_bounds(0.0, 1.0, |l| Ok(0.1 + 0.5 * l), |_| Ok(0.5));
        assert!(matches!(r, Err(Error::Monotonicity(_))));
        let r = interval_chi_bounds(0.0, 1.0, |_| Ok(0.5), |l| Ok(0.9 - 0.5 * l));
        assert!(matches!(r, Err(Error::Monotonicity(_))));
    }

    #[test]
    fn no_evidence_never_stops() {
        let c = contest((200, 140, 50), (50, 30, 20));
        let r = maximize_combined_pvalue(&c, "w", "l", |_| Ok(1.0), |_| Ok(1.0), &Default::default())
            .unwrap();
        assert_eq!(r.max_pvalue_upper, 1.0);
        assert!(!r.decisive);
    }

    #[test]
    fn overwhelming_evidence_stops() {
        let c = contest((200, 140, 50), (50, 30, 20));
        let r = maximize_combined_pvalue(&c, "w", "l", |_| Ok(1e-7), |_| Ok(1e-7), &Default::default())
            .unwrap();
        assert!(r.decisive);
        assert!(r.max_pvalue_upper <= 0.05);
        assert!(r.max_pvalue_point <= r.max_pvalue_upper);
    }

    #[test]
    fn grid_covers_full_range() {
        let g = initial_grid((-10.0, 50.0), 26);
        assert_eq!(g.first(), Some(&-10.0));
        assert_eq!(g.last(), Some(&50.0));
        assert_eq!(g.len(), 28);
        assert_eq!(initial_grid((1.0, 1.0), 26), vec![1.0]);
        assert_eq!(initial_grid((5.0, 9.0), 26), vec![5.0, 9.0]);
    }

    #[test]
    fn refinement_tightens_bounds() {
        // p1 steep, p2 shallow: the minimum of χ sits near the quantile and needs bisection.
        let p1 = |l: f64| Ok((-3.0 * l).exp().min(1.0));
        let p2 = |l: f64| Ok((3.0 * (l - 1.0)).exp().min(1.0));
        let coarse = MaximizerControls { max_refinements: 0, ..Default::default() };
        let r0 = maximize_over_range((0.0, 1.0), 0.2, p1, p2, &coarse).unwrap();
        let r = maximize_over_range((0.0, 1.0), 0.2, p1, p2, &Default::default()).unwrap();
        assert!(r.max_pvalue_upper <= r0.max_pvalue_upper);
        assert!(r.max_pvalue_point <= r.max_pvalue_upper);
        // χ(λ) = 6 exactly for every λ here.
        assert!((r.max_pvalue_point - sf4(6.0)).abs() < 1e-12);
    }

    #[test]
    fn single_stratum_result() {
        let r = FisherMaximizationResult::single(1.0, 0.03, 0.05);
        assert!(r.decisive);
        assert_eq!(r.max_pvalue_upper, 0.03);
    }
}
