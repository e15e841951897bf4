//! Sample statistics over ensemble members.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{domain, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = CompensatedSum::default();
    for v in values {
        s.add(v);
    }
    s.value()
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Deviations from the mean, computed on data shifted by the first value.
fn centred(values: &[f64]) -> Vec<f64> {
    let shift = values[0];
    let m = compensated_sum(values.iter().map(|v| v - shift)) / values.len() as f64;
    values.iter().map(|v| (v - shift) - m).collect()
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    compensated_sum(centred(values).iter().map(|d| d * d)) / (values.len() as f64 - 1.0)
}

/// Pearson correlation, `None` when either sample has zero variance.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "correlation needs paired samples");
    if a.is_empty() {
        return None;
    }
    let (da, db) = (centred(a), centred(b));
    let saa = compensated_sum(da.iter().map(|x| x * x));
    let sbb = compensated_sum(db.iter().map(|y| y * y));
    if !(saa > 0.0 && sbb > 0.0) {
        return None;
    }
    let sab = compensated_sum(da.iter().zip(&db).map(|(x, y)| x * y));
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Percentile bootstrap interval for the correlation of paired samples.
pub fn bootstrap_interval(a: &[f64], b: &[f64], resamples: usize, level: f64, rng: &mut impl Rng) -> Option<(f64, f64)> {
    let n = a.len();
    if resamples == 0 || n < 2 {
        return None;
    }
    let mut stats = Vec::with_capacity(resamples);
    let (mut ra, mut rb) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..resamples {
        for i in 0..n {
            let j = rng.random_range(0..n);
            ra[i] = a[j];
            rb[i] = b[j];
        }
        if let Some(r) = correlation(&ra, &rb) {
            stats.push(r);
        }
    }
    if stats.is_empty() {
        return None;
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| stats[((q * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    Some((pick(tail), pick(1.0 - tail)))
}

/// Above this dimension only means and variances are kept.
pub const COVARIANCE_MAX_DIM: usize = 128;

/// Sample moments of a set of equally long vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub covariance: Option<DMatrix<f64>>,
}

impl Moments {
    pub fn from_samples(samples: &[&DVector<f64>]) -> Result<Self> {
        let count = samples.len();
        if count < 2 {
            return Err(domain("moments need at least two samples"));
        }
        let n = samples[0].len();
        if samples.iter().any(|s| s.len() != n) {
            return Err(domain("samples differ in length"));
        }
        // shifted by the first sample so identical members give exactly zero spread
        let shift = samples[0];
        let offsets: Vec<DVector<f64>> = samples.iter().map(|s| *s - shift).collect();
        let offset_mean = DVector::from_fn(n, |i, _| compensated_sum(offsets.iter().map(|d| d[i])) / count as f64);
        let mean = shift + &offset_mean;
        let centred: Vec<DVector<f64>> = offsets.iter().map(|d| d - &offset_mean).collect();
        let denom = count as f64 - 1.0;
        let variance = DVector::from_fn(n, |i, _| compensated_sum(centred.iter().map(|c| c[i] * c[i])) / denom);
        let covariance = (n <= COVARIANCE_MAX_DIM).then(|| {
            let mut cov = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = compensated_sum(centred.iter().map(|c| c[i] * c[j])) / denom;
                    cov[(i, j)] = v;
                    cov[(j, i)] = v;
                }
            }
            cov
        });
        Ok(Self {
            count,
            mean,
            variance,
            covariance,
        })
    }

    /// Correlation matrix; entries with a zero-variance factor are NaN.
    pub fn correlation(&self) -> Option<DMatrix<f64>> {
        let cov = self.covariance.as_ref()?;
        let n = cov.nrows();
        Some(DMatrix::from_fn(n, n, |i, j| {
            let d = (cov[(i, i)] * cov[(j, j)]).sqrt();
            if d > 0.0 {
                (cov[(i, j)] / d).clamp(-1.0, 1.0)
            } else {
                f64::NAN
            }
        }))
    }
}
