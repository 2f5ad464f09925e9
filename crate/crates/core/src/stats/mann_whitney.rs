use serde::{Deserialize, Serialize};

use super::ranks::{doubled_ranks, midranks, tie_blocks, tie_correction};
use super::{
    check_finite, exact_two_sided, normal_two_sided, MethodChoice, StatsError, TestMethod, TestOptions,
};

/// Largest pooled sample for which the exact null distribution is computed.
pub const EXACT_MAX_N: usize = 60;

/// Pooled size up to which `Auto` uses the exact distribution for tie-free data.
const AUTO_EXACT_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    pub n_a: usize,
    pub n_b: usize,
    /// Pairs where A exceeds B, ties counted as one half.
    pub u_a: f64,
    pub u_b: f64,
    pub u_min: f64,
    /// Standardized `u_a`, reported for either method.
    pub z: f64,
    pub p_two_sided: f64,
    pub r_rank_biserial: f64,
    pub method: TestMethod,
}

/// Rank-biserial correlation `2 u_a / (n_a n_b) − 1`.
pub fn rank_biserial(u_a: f64, n_a: usize, n_b: usize) -> Result<f64, StatsError> {
    if n_a == 0 {
        return Err(StatsError::EmptySample("a"));
    }
    if n_b == 0 {
        return Err(StatsError::EmptySample("b"));
    }
    let max = (n_a * n_b) as f64;
    if !(0.0..=max).contains(&u_a) {
        return Err(StatsError::UOutOfRange { u_a, max });
    }
    Ok(2.0 * u_a / max - 1.0)
}

/// Range of `U_min` compatible with a rank-biserial `r` reported to within
/// `half_width` (0.005 for two decimals).
pub fn u_min_interval(r: f64, half_width: f64, n_a: usize, n_b: usize) -> (f64, f64) {
    let half_pairs = (n_a * n_b) as f64 / 2.0;
    let lo = (1.0 - (r.abs() + half_width)).max(0.0) * half_pairs;
    let hi = (1.0 - (r.abs() - half_width).max(0.0)) * half_pairs;
    (lo, hi)
}

/// Two-sided Mann-Whitney U test with default options.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult, StatsError> {
    mann_whitney_u_with(a, b, TestOptions::default())
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], options: TestOptions) -> Result<UTestResult, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    check_finite(a)?;
    check_finite(b)?;
    let (n_a, n_b) = (a.len(), b.len());
    let n = n_a + n_b;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n_a].iter().sum();
    let pairs = (n_a * n_b) as f64;
    let u_a = rank_sum_a - (n_a * (n_a + 1)) as f64 / 2.0;
    let u_b = pairs - u_a;
    let r = rank_biserial(u_a, n_a, n_b)?;

    let has_ties = !tie_blocks(&pooled).is_empty();
    let method = match options.method {
        MethodChoice::Exact => TestMethod::Exact,
        MethodChoice::Approx => TestMethod::NormalApprox,
        MethodChoice::Auto if n <= AUTO_EXACT_N && !has_ties => TestMethod::Exact,
        MethodChoice::Auto => TestMethod::NormalApprox,
    };
    if method == TestMethod::Exact && n > EXACT_MAX_N {
        return Err(StatsError::ExactTooLarge {
            n,
            limit: EXACT_MAX_N,
        });
    }

    let nf = n as f64;
    let variance = pairs / 12.0 * ((nf + 1.0) - tie_correction(&pooled) / (nf * (nf - 1.0)));
    let mean = pairs / 2.0;
    let degenerate = variance.is_nan() || variance <= 0.0;
    let (z, approx_p) = if degenerate {
        (0.0, 1.0)
    } else {
        normal_two_sided(u_a, mean, variance.sqrt(), options.continuity)
    };
    let p = match method {
        TestMethod::NormalApprox => approx_p,
        TestMethod::Exact => {
            let doubled = doubled_ranks(&pooled);
            let observed: u64 = doubled[..n_a].iter().sum();
            let (le, ge, total) = rank_sum_tails(&doubled, n_a, observed);
            exact_two_sided(le, ge, total)
        }
    };
    Ok(UTestResult {
        n_a,
        n_b,
        u_a,
        u_b,
        u_min: u_a.min(u_b),
        z,
        p_two_sided: p,
        r_rank_biserial: if degenerate { 0.0 } else { r },
        method,
    })
}

/// Counts of size-`k` subsets of `scores` whose sum is `<= observed`,
/// `>= observed`, and in total.
fn rank_sum_tails(scores: &[u64], k: usize, observed: u64) -> (u128, u128, u128) {
    let max_sum: u64 = scores.iter().sum();
    let width = max_sum as usize + 1;
    // ways[j * width + s]: subsets of size j with score sum s
    let mut ways = vec![0u128; (k + 1) * width];
    ways[0] = 1;
    let mut reach = 0usize;
    for &score in scores {
        let score = score as usize;
        reach += score;
        for j in (1..=k).rev() {
            for s in (score..=reach.min(max_sum as usize)).rev() {
                let add = ways[(j - 1) * width + s - score];
                if add != 0 {
                    ways[j * width + s] += add;
                }
            }
        }
    }
    let row = &ways[k * width..(k + 1) * width];
    let observed = observed as usize;
    let le = row[..=observed.min(width - 1)].iter().sum();
    let ge = row.get(observed..).map_or(0, |tail| tail.iter().sum());
    let total = row.iter().sum();
    (le, ge, total)
}
