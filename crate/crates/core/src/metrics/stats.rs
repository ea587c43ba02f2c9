use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    /// Two-sided p-value.
    pub p: f64,
    /// All differences are equal. Then `t` is 0 (with `p` = 1) when they
    /// are zero and infinite (with `p` = 0) otherwise.
    pub zero_variance: bool,
}

fn student(df: f64) -> Result<StudentsT> {
    StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Stats(e.to_string()))
}

/// Paired t-test of `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Stats(format!("samples of lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Stats(format!("need at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 || d.iter().all(|&v| v == d[0]) {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        };
        return Ok(TTestResult {
            t,
            df,
            p,
            zero_variance: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let p = 2.0 * student(df as f64)?.sf(t.abs());
    Ok(TTestResult {
        t,
        df,
        p,
        zero_variance: false,
    })
}

/// Half-width of the two-sided `level` confidence interval of the mean,
/// from the t distribution. Zero for fewer than two samples.
pub fn confidence_half_width(samples: &[f64], level: f64) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(0.0);
    }
    let q = student((n - 1) as f64)?.inverse_cdf(0.5 + level / 2.0);
    Ok(q * (var / n as f64).sqrt())
}
