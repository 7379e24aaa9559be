//! Monte Carlo estimators with error bars, and the statistical checks built
//! on them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{domain, Error, Result};
use crate::paths::PathSet;
use crate::summation::CompensatedSum;

/// An estimate across `replicas` independent samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replicas: usize,
    /// Moment order, or 2 for covariances and correlations.
    pub order: u32,
}

impl MomentEstimate {
    /// `|value - reference| / std_error`; infinite if the error bar is zero
    /// and the values differ.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.value - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl TestReport {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64, passed: bool) -> Self {
        Self { name: name.into(), statistic, threshold, passed, metadata: serde_json::Value::Null }
    }

    pub fn with_metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = metadata;
        self
    }

    /// One line of JSON, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports contain only finite-or-null numbers and strings")
    }
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 {
        return domain(format!("need at least 2 replicas, got {n}"));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64
}

/// Sample mean of `x^order` with standard error `sd / sqrt(R)`.
pub fn moment_of(samples: &[f64], order: u32) -> Result<MomentEstimate> {
    check_len(samples.len())?;
    let vals: Vec<f64> = samples.iter().map(|x| x.powi(order as i32)).collect();
    let m = mean(&vals);
    let var = vals.iter().map(|v| (v - m).powi(2)).collect::<CompensatedSum>().value() / (vals.len() - 1) as f64;
    Ok(MomentEstimate { value: m, std_error: (var / vals.len() as f64).sqrt(), replicas: vals.len(), order })
}

/// Moment of one coordinate at one grid time.
pub fn estimate_moment(paths: &PathSet, coord: usize, t: f64, order: u32) -> Result<MomentEstimate> {
    moment_of(&paths.samples(coord, t)?, order)
}

/// Sample covariance with a delete-one jackknife standard error.
pub fn sample_cov(x: &[f64], y: &[f64]) -> Result<MomentEstimate> {
    if x.len() != y.len() {
        return domain(format!("samples have different lengths {} and {}", x.len(), y.len()));
    }
    let r = x.len();
    if r < 3 {
        return domain(format!("jackknife covariance needs at least 3 replicas, got {r}"));
    }
    let (mx, my) = (mean(x), mean(y));
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let rf = r as f64;
    let sxy = dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<CompensatedSum>().value();
    let sx = dx.iter().copied().collect::<CompensatedSum>().value();
    let sy = dy.iter().copied().collect::<CompensatedSum>().value();
    let full = (sxy - sx * sy / rf) / (rf - 1.0);
    // leave-one-out covariances from the running sums
    let loo: Vec<f64> = dx
        .iter()
        .zip(&dy)
        .map(|(a, b)| ((sxy - a * b) - (sx - a) * (sy - b) / (rf - 1.0)) / (rf - 2.0))
        .collect();
    let loo_mean = mean(&loo);
    let ss = loo.iter().map(|v| (v - loo_mean).powi(2)).collect::<CompensatedSum>().value();
    Ok(MomentEstimate { value: full, std_error: ((rf - 1.0) / rf * ss).sqrt(), replicas: r, order: 2 })
}

/// Pearson correlation with a delete-one jackknife standard error.
pub fn sample_corr(x: &[f64], y: &[f64]) -> Result<MomentEstimate> {
    let c = sample_cov(x, y)?;
    let r = c.replicas;
    let rf = r as f64;
    let (mx, my) = (mean(x), mean(y));
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let sums = |d: &[f64]| {
        let s = d.iter().copied().collect::<CompensatedSum>().value();
        let s2 = d.iter().map(|v| v * v).collect::<CompensatedSum>().value();
        (s, s2)
    };
    let (sx, sxx) = sums(&dx);
    let (sy, syy) = sums(&dy);
    let sxy = dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<CompensatedSum>().value();
    let corr = |sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64, m: f64| {
        let cxy = sxy - sx * sy / m;
        let cxx = sxx - sx * sx / m;
        let cyy = syy - sy * sy / m;
        cxy / (cxx * cyy).sqrt()
    };
    let full = corr(sx, sy, sxx, syy, sxy, rf);
    if !full.is_finite() {
        return Err(Error::Numerical("correlation of a constant sample".into()));
    }
    let loo: Vec<f64> = dx
        .iter()
        .zip(&dy)
        .map(|(a, b)| corr(sx - a, sy - b, sxx - a * a, syy - b * b, sxy - a * b, rf - 1.0))
        .collect();
    let loo_mean = mean(&loo);
    let ss = loo.iter().map(|v| (v - loo_mean).powi(2)).collect::<CompensatedSum>().value();
    Ok(MomentEstimate { value: full, std_error: ((rf - 1.0) / rf * ss).sqrt(), replicas: r, order: 2 })
}

/// `Cov(V(s), V(t))` of one coordinate across replicas.
pub fn estimate_cov(paths: &PathSet, coord: usize, s: f64, t: f64) -> Result<MomentEstimate> {
    sample_cov(&paths.samples(coord, s)?, &paths.samples(coord, t)?)
}

/// `Cov(V^a(t), V^b(t))` across replicas.
pub fn cross_cov(paths: &PathSet, coord_a: usize, coord_b: usize, t: f64) -> Result<MomentEstimate> {
    sample_cov(&paths.samples(coord_a, t)?, &paths.samples(coord_b, t)?)
}

/// `Corr(V^a(t), V^b(t))` across replicas.
pub fn cross_corr(paths: &PathSet, coord_a: usize, coord_b: usize, t: f64) -> Result<MomentEstimate> {
    sample_corr(&paths.samples(coord_a, t)?, &paths.samples(coord_b, t)?)
}

/// Smallest p-value at which [`ks_gaussian`] still passes.
pub const KS_MIN_P_VALUE: f64 = 1e-3;

/// `P(sup |B| > x)` for a Brownian bridge `B`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // the alternating series converges slowly here and the value is 1 to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov distance between the sample and `N(0, variance)`, with
/// the asymptotic p-value; passes iff `p >= 1e-3`.
pub fn ks_gaussian(samples: &[f64], variance: f64) -> Result<TestReport> {
    check_len(samples.len())?;
    if !(variance > 0.0 && variance.is_finite()) {
        return domain(format!("reference variance must be positive, got {variance}"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite sample passed to the KS test".into()));
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let root = n.sqrt();
    let p = kolmogorov_survival((root + 0.12 + 0.11 / root) * d);
    Ok(TestReport::new("ks_gaussian", p, KS_MIN_P_VALUE, p >= KS_MIN_P_VALUE).with_metadata(serde_json::json!({
        "ks_distance": d,
        "samples": samples.len(),
        "variance": variance,
    })))
}

/// Empirical and theoretical covariance of two increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementCorrelation {
    pub empirical: MomentEstimate,
    pub theoretical: f64,
}

/// `Cov[V(t2) - V(t1), V(t4) - V(t3)]` for `t1 <= t2 <= t3 <= t4`; the
/// theoretical value comes from the covariance kernel by bilinearity.
pub fn increment_correlation(
    paths: &PathSet,
    coord: usize,
    times: [f64; 4],
    kernel: impl Fn(f64, f64) -> Result<f64>,
) -> Result<IncrementCorrelation> {
    let [t1, t2, t3, t4] = times;
    if !(t1 <= t2 && t2 <= t3 && t3 <= t4) {
        return domain(format!("increments need t1 <= t2 <= t3 <= t4, got {times:?}"));
    }
    let theoretical = kernel(t2, t4)? - kernel(t2, t3)? - kernel(t1, t4)? + kernel(t1, t3)?;
    let diff = |a: f64, b: f64| -> Result<Vec<f64>> {
        let (xa, xb) = (paths.samples(coord, a)?, paths.samples(coord, b)?);
        Ok(xb.iter().zip(&xa).map(|(u, v)| u - v).collect())
    };
    let empirical = sample_cov(&diff(t1, t2)?, &diff(t3, t4)?)?;
    Ok(IncrementCorrelation { empirical, theoretical })
}

/// Least-squares slope of `log(variance)` against time over the points with
/// `window.0 <= t <= window.1`.
pub fn growth_slope(times: &[f64], variances: &[f64], window: (f64, f64)) -> Result<f64> {
    if times.len() != variances.len() {
        return domain("times and variances must have the same length");
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(variances)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 2 {
        return domain(format!("window {window:?} holds fewer than 2 points"));
    }
    if pts.iter().any(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return domain("variances in the window must be positive and finite");
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, v)| (t - mt) * (v.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    if sxx == 0.0 {
        return domain("window holds a single distinct time");
    }
    Ok(sxy / sxx)
}
