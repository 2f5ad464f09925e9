//! Nonparametric tests, effect sizes, descriptives and the study results report.
//!
//! Group A in every between-group contrast is the MANY_LIKES condition, so a
//! negative rank-biserial `r` means the many-likes group ranks lower.

mod descriptives;
mod format;
mod mann_whitney;
mod ranks;
mod report;
mod wilcoxon;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub use descriptives::{descriptives, Descriptives};
pub use format::{format_m_sd, format_p, format_r, format_stat, format_u};
pub use mann_whitney::{
    mann_whitney_u, mann_whitney_u_with, rank_biserial, u_min_interval, UTestResult, EXACT_MAX_N,
};
pub use ranks::{midranks, tie_correction};
pub use report::{
    build_results_report, BetweenRow, Participant, ReportFormat, ResultsReport, StudyDataset, WithinResult,
};
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_with, WTestResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample `{0}` is empty")]
    EmptySample(&'static str),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("paired samples differ in length ({pre} vs {post})")]
    LengthMismatch { pre: usize, post: usize },
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("u_a = {u_a} lies outside [0, {max}]")]
    UOutOfRange { u_a: f64, max: f64 },
    #[error("exact distribution requested for {n} observations (limit {limit})")]
    ExactTooLarge { n: usize, limit: usize },
    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

/// Which null distribution to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MethodChoice {
    /// Exact for small tie-free samples, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestOptions {
    pub method: MethodChoice,
    /// Shrink |statistic − mean| by one half before standardizing.
    pub continuity: bool,
}

impl TestOptions {
    pub fn exact() -> Self {
        Self {
            method: MethodChoice::Exact,
            continuity: false,
        }
    }

    pub fn approx(continuity: bool) -> Self {
        Self {
            method: MethodChoice::Approx,
            continuity,
        }
    }
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Standardized statistic and two-sided normal p-value.
fn normal_two_sided(stat: f64, mean: f64, sd: f64, continuity: bool) -> (f64, f64) {
    let mut diff = stat - mean;
    if continuity {
        diff = diff.signum() * (diff.abs() - 0.5).max(0.0);
    }
    let z = diff / sd;
    let tail = Normal::standard().sf(z.abs());
    (z, clamp_p(2.0 * tail))
}

/// Two-sided p from integer-valued tail counts of a discrete null distribution.
fn exact_two_sided(le: u128, ge: u128, total: u128) -> f64 {
    clamp_p(2.0 * le.min(ge) as f64 / total as f64)
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0)
}
