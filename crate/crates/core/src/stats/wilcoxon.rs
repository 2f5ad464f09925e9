use serde::{Deserialize, Serialize};

use super::ranks::{doubled_ranks, midranks, tie_blocks, tie_correction};
use super::{
    check_finite, exact_two_sided, normal_two_sided, MethodChoice, StatsError, TestMethod, TestOptions,
};

/// Largest number of non-zero differences `Auto` handles exactly.
const AUTO_EXACT_N: usize = 12;
/// Upper bound for an explicitly requested exact distribution.
const EXACT_MAX_N: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WTestResult {
    /// Pairs with a non-zero difference.
    pub n_effective: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Positive when post tends to exceed pre.
    pub z: f64,
    pub p_two_sided: f64,
    pub method: TestMethod,
}

/// Two-sided Wilcoxon signed-rank test on `post − pre`, default options.
pub fn wilcoxon_signed_rank(pre: &[f64], post: &[f64]) -> Result<WTestResult, StatsError> {
    wilcoxon_signed_rank_with(pre, post, TestOptions::default())
}

pub fn wilcoxon_signed_rank_with(
    pre: &[f64],
    post: &[f64],
    options: TestOptions,
) -> Result<WTestResult, StatsError> {
    if pre.len() != post.len() {
        return Err(StatsError::LengthMismatch {
            pre: pre.len(),
            post: post.len(),
        });
    }
    if pre.is_empty() {
        return Err(StatsError::EmptySample("pre"));
    }
    check_finite(pre)?;
    check_finite(post)?;
    let diffs: Vec<f64> = post
        .iter()
        .zip(pre)
        .map(|(b, a)| b - a)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let n = diffs.len();
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let nf = n as f64;
    let w_minus = nf * (nf + 1.0) / 2.0 - w_plus;

    let method = match options.method {
        MethodChoice::Exact => TestMethod::Exact,
        MethodChoice::Approx => TestMethod::NormalApprox,
        MethodChoice::Auto if n <= AUTO_EXACT_N && tie_blocks(&magnitudes).is_empty() => TestMethod::Exact,
        MethodChoice::Auto => TestMethod::NormalApprox,
    };
    if method == TestMethod::Exact && n > EXACT_MAX_N {
        return Err(StatsError::ExactTooLarge {
            n,
            limit: EXACT_MAX_N,
        });
    }

    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction(&magnitudes) / 48.0;
    let (z, approx_p) = normal_two_sided(w_plus, nf * (nf + 1.0) / 4.0, variance.sqrt(), options.continuity);
    let p = match method {
        TestMethod::NormalApprox => approx_p,
        TestMethod::Exact => {
            let doubled = doubled_ranks(&magnitudes);
            let observed: u64 = doubled
                .iter()
                .zip(&diffs)
                .filter(|(_, d)| **d > 0.0)
                .map(|(r, _)| r)
                .sum();
            let (le, ge, total) = signed_rank_tails(&doubled, observed);
            exact_two_sided(le, ge, total)
        }
    };
    Ok(WTestResult {
        n_effective: n,
        w_plus,
        w_minus,
        z,
        p_two_sided: p,
        method,
    })
}

/// Over all `2^n` sign assignments: counts with positive-rank sum `<= observed`,
/// `>= observed`, and in total.
fn signed_rank_tails(scores: &[u64], observed: u64) -> (u128, u128, u128) {
    let max_sum: u64 = scores.iter().sum();
    let mut ways = vec![0u128; max_sum as usize + 1];
    ways[0] = 1;
    for &score in scores {
        let score = score as usize;
        for s in (score..ways.len()).rev() {
            ways[s] += ways[s - score];
        }
    }
    let observed = observed as usize;
    let le = ways[..=observed].iter().sum();
    let ge = ways[observed..].iter().sum();
    (le, ge, ways.iter().sum())
}
