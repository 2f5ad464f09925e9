use serde::{Deserialize, Serialize};

use super::{check_finite, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single observation.
    pub sd: Option<f64>,
    pub median: f64,
}

pub fn descriptives(values: &[f64]) -> Result<Descriptives, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample("values"));
    }
    check_finite(values)?;
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(Descriptives { n, mean, sd, median })
}
