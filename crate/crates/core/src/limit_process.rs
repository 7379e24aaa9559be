//! Closed-form covariances of the mean-field limit and exact-in-law samplers
//! on a time grid.
//!
//! The limit of one coordinate is
//! `V(t) = exp(-lambda t) [V0 + gamma int_0^t exp(lambda s) dB(s) + Z(t) + gamma A(t)]`
//! with `V0`, `B`, `Z`, `A` mutually independent and `Z`, `A` centered
//! Gaussian. `Z` is sampled from its series in i.i.d. standard Gaussians; the
//! Ornstein-Uhlenbeck integral and `A` are sampled from a factorisation of
//! their grid covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::finite_network::ModelParams;
use crate::paths::PathSet;
use crate::quadrature::{adaptive_simpson, QuadratureTolerance};
use crate::randomness::{sample_initial_coordinate, InitialLaw, MomentTable, SeedSpec, StreamRole};
use crate::special_fn::{bessel_series, SeriesTolerance};

/// Parameters of the limit process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub lambda: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// Second moment of the initial law.
    pub phi0: f64,
    /// Mean of the initial law.
    pub mu0: f64,
}

impl LimitParams {
    pub fn new(lambda: f64, sigma: f64, gamma: f64, initial: &InitialLaw) -> Self {
        Self { lambda, sigma, gamma, phi0: initial.second_moment(), mu0: initial.mean() }
    }

    pub fn from_model(model: &ModelParams) -> Self {
        Self::new(model.lambda, model.entry_law.sigma(), model.gamma, &model.initial_law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return domain(format!("sigma must be positive, got {}", self.sigma));
        }
        if !self.lambda.is_finite() {
            return domain("lambda must be finite");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return domain(format!("gamma must be >= 0, got {}", self.gamma));
        }
        // phi0 >= mu0^2 up to rounding in the moment tables
        if !(self.phi0.is_finite() && self.phi0 >= self.mu0 * self.mu0 * (1.0 - 1e-12)) {
            return domain(format!("phi0 = {} must be >= mu0^2 = {}", self.phi0, self.mu0 * self.mu0));
        }
        Ok(())
    }
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if !(s >= 0.0 && t >= 0.0 && s.is_finite() && t.is_finite()) {
        return domain(format!("times must be finite and nonnegative, got ({s}, {t})"));
    }
    Ok(())
}

/// `sum_{l>=1} q^l/(l!)^2`, i.e. `I0(2 sqrt(q)) - 1`.
fn i0_tilde_q(q: f64) -> Result<f64> {
    bessel_series(q, 1, SeriesTolerance::default()).map(|s| s.value)
}

/// `E[Z(s) Z(t)] = phi0 (I0(2 sigma sqrt(st)) - 1)`.
pub fn cov_z(s: f64, t: f64, p: &LimitParams) -> Result<f64> {
    check_times(s, t)?;
    Ok(p.phi0 * i0_tilde_q(p.sigma * p.sigma * s * t)?)
}

/// Covariance of the noise-free limit,
/// `phi0 e^{-lambda(s+t)} I0(2 sigma sqrt(st)) - e^{-lambda(s+t)} mu0^2`.
pub fn cov_v_infinity(s: f64, t: f64, p: &LimitParams) -> Result<f64> {
    check_times(s, t)?;
    let decay = (-p.lambda * (s + t)).exp();
    // phi0 I0 - mu0^2 written as Var(V0) + phi0 (I0 - 1)
    Ok(decay * ((p.phi0 - p.mu0 * p.mu0) + cov_z(s, t, p)?))
}

/// `E[H(s) H(t)] = phi0 sigma^2 I0(2 sigma sqrt(st))` for the drift process `H`.
pub fn cov_h(s: f64, t: f64, p: &LimitParams) -> Result<f64> {
    check_times(s, t)?;
    let q = p.sigma * p.sigma * s * t;
    Ok(p.phi0 * p.sigma * p.sigma * bessel_series(q, 0, SeriesTolerance::default())?.value)
}

/// `e^{lambda s} (t - s)^l / l!` for `0 <= s <= t`, `l >= 1`.
pub fn lambda_l(t: f64, s: f64, lambda: f64, l: u32) -> Result<f64> {
    if !(0.0 <= s && s <= t && t.is_finite()) {
        return domain(format!("lambda_l needs 0 <= s <= t, got s = {s}, t = {t}"));
    }
    if l == 0 {
        return domain("lambda_l needs l >= 1");
    }
    Ok((lambda * s).exp() * power_over_factorial(t - s, l))
}

/// `x^l / l!` as a running product.
fn power_over_factorial(x: f64, l: u32) -> f64 {
    (1..=l).fold(1.0, |acc, k| acc * x / k as f64)
}

/// `phi_l(t) = int_0^t e^{2 lambda s} (t - s)^{2l} / (l!)^2 ds`.
pub fn phi_l(t: f64, lambda: f64, l: u32, tol: QuadratureTolerance) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!("phi_l needs t >= 0, got {t}"));
    }
    if l == 0 {
        return domain("phi_l needs l >= 1");
    }
    adaptive_simpson(
        |s| {
            let w = power_over_factorial(t - s, l);
            (2.0 * lambda * s).exp() * w * w
        },
        0.0,
        t,
        tol,
    )
}

/// Integrand of the `A` covariance; `q = sigma^2 (t-u)(s-u)` avoids the
/// square root in the Bessel argument.
fn a_integrand(u: f64, s: f64, t: f64, p: &LimitParams) -> f64 {
    let q = p.sigma * p.sigma * (t - u).max(0.0) * (s - u).max(0.0);
    (2.0 * p.lambda * u).exp() * i0_tilde_q(q).unwrap_or(f64::NAN)
}

/// `E[A(s) A(t)] = int_0^{min(s,t)} e^{2 lambda u} (I0(2 sigma sqrt((t-u)(s-u))) - 1) du`.
pub fn cov_a(s: f64, t: f64, p: &LimitParams, tol: QuadratureTolerance) -> Result<f64> {
    check_times(s, t)?;
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    adaptive_simpson(|u| a_integrand(u, lo, hi, p), 0.0, lo, tol)
}

/// `Lambda^2(t) = int_0^t e^{2 lambda u} (I0(2 sigma (t-u)) - 1) du`, the variance of `A(t)`.
pub fn lambda_sq(t: f64, p: &LimitParams, tol: QuadratureTolerance) -> Result<f64> {
    cov_a(t, t, p, tol)
}

/// Covariance `gamma^2 (e^{2 lambda min(s,t)} - 1) / (2 lambda)` of
/// `gamma int_0^t e^{lambda u} dB(u)`.
pub fn ou_cov(s: f64, t: f64, lambda: f64, gamma: f64) -> f64 {
    let m = s.min(t).max(0.0);
    let x = 2.0 * lambda * m;
    let base = if lambda.abs() * m < 1e-8 { m * (1.0 + 0.5 * x) } else { x.exp_m1() / (2.0 * lambda) };
    gamma * gamma * base
}

/// Covariance of the full limit `V(s), V(t)` for any `gamma`.
pub fn cov_v_limit(s: f64, t: f64, p: &LimitParams, tol: QuadratureTolerance) -> Result<f64> {
    let base = cov_v_infinity(s, t, p)?;
    if p.gamma == 0.0 {
        return Ok(base);
    }
    let decay = (-p.lambda * (s + t)).exp();
    Ok(base + decay * (ou_cov(s, t, p.lambda, p.gamma) + p.gamma * p.gamma * cov_a(s, t, p, tol)?))
}

/// A covariance kernel evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceGrid {
    times: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl CovarianceGrid {
    pub fn build(times: &[f64], mut kernel: impl FnMut(f64, f64) -> Result<f64>) -> Result<Self> {
        let n = times.len();
        let mut matrix = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = kernel(times[j], times[i])?;
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        Ok(Self { times: times.to_vec(), matrix })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix == self.matrix.transpose()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.matrix.is_empty() {
            return 0.0;
        }
        SymmetricEigen::new(self.matrix.clone()).eigenvalues.min()
    }

    /// Positive semidefinite up to `1e-10 * trace`.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -1e-10 * self.trace().abs()
    }

    /// A factor `L` with `L L^T ~ C`.
    ///
    /// Rows with exactly zero variance (for instance `t = 0` for a process
    /// started at 0) are left identically zero. The rest is Cholesky
    /// factored, adding diagonal jitter up to `1e-10 * trace` if needed,
    /// and falls back to a clipped eigendecomposition.
    pub fn factor(&self) -> Result<GridFactor> {
        let n = self.times.len();
        let active: Vec<usize> = (0..n).filter(|&i| self.matrix[(i, i)] != 0.0).collect();
        let mut lower = DMatrix::zeros(n, n);
        if active.is_empty() {
            return Ok(GridFactor { lower });
        }
        let sub = DMatrix::from_fn(active.len(), active.len(), |i, j| self.matrix[(active[i], active[j])]);
        let trace = sub.trace();
        let sub_factor = cholesky_with_jitter(&sub, trace).map_or_else(|| eigen_factor(&sub, trace), Ok)?;
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                lower[(i, j)] = sub_factor[(a, b)];
            }
        }
        Ok(GridFactor { lower })
    }
}

fn cholesky_with_jitter(m: &DMatrix<f64>, trace: f64) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    for jitter in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter * trace;
        }
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.l());
        }
    }
    None
}

fn eigen_factor(m: &DMatrix<f64>, trace: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if min < -1e-10 * trace {
        return Err(Error::Numerical(format!(
            "covariance grid is not positive semidefinite: most negative eigenvalue {min:.6e} (trace {trace:.6e})"
        )));
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

/// Factor of a [`CovarianceGrid`], shared read-only between samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFactor {
    lower: DMatrix<f64>,
}

impl GridFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `out = L g`.
    pub fn apply(&self, g: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n).map(|j| self.lower[(i, j)] * g[j]).sum();
        }
    }
}

/// Number of series terms `L` such that the omitted variance
/// `phi0 sum_{l>L} (sigma T)^{2l}/(l!)^2` is at most `var_tol`.
pub fn z_series_terms(horizon: f64, p: &LimitParams, var_tol: f64) -> Result<usize> {
    if !(var_tol > 0.0) {
        return domain(format!("variance tolerance must be positive, got {var_tol}"));
    }
    if p.phi0 == 0.0 || horizon == 0.0 {
        return Ok(0);
    }
    let x = (p.sigma * horizon).powi(2);
    let budget = var_tol / p.phi0;
    // term_l = x^l / (l!)^2
    let mut term = 1.0;
    let mut l = 0usize;
    loop {
        let next = term * x / ((l + 1) as f64).powi(2);
        let ratio = x / ((l + 2) as f64).powi(2);
        if ratio < 1.0 && next / (1.0 - ratio) <= budget {
            return Ok(l);
        }
        term = next;
        l += 1;
        if l > 100_000 || !term.is_finite() {
            return Err(Error::Numerical(format!("Z series does not truncate for sigma T = {}", p.sigma * horizon)));
        }
    }
}

fn check_sampling_inputs(times: &[f64], coords: &[usize], replicas: usize) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return domain("sampling grid must be nonempty with finite nonnegative times");
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return domain("sampling grid must be strictly increasing");
    }
    if coords.is_empty() || coords.contains(&0) {
        return domain("coordinates are 1-based and at least one is required");
    }
    if replicas == 0 {
        return domain("replica count must be at least 1");
    }
    Ok(())
}

/// Coefficients `sqrt(phi0) (sigma t)^l / l!`, `l = 1..=terms`, for every grid time.
fn z_coefficients(times: &[f64], p: &LimitParams, terms: usize) -> Vec<Vec<f64>> {
    let root = p.phi0.sqrt();
    times
        .iter()
        .map(|&t| {
            let mut c = Vec::with_capacity(terms);
            let mut acc = root;
            for l in 1..=terms {
                acc *= p.sigma * t / l as f64;
                c.push(acc);
            }
            c
        })
        .collect()
}

fn draw_normals(seed: &SeedSpec, role: StreamRole, replica: u64, coordinate: u64, count: usize) -> Vec<f64> {
    let mut rng = seed.stream(role, replica, coordinate);
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Paths of `Z` on the grid from the truncated series
/// `sqrt(phi0) sum_l (sigma t)^l / l! G_l`, the same `G_l` for every time.
pub fn sample_z(
    times: &[f64],
    p: &LimitParams,
    var_tol: f64,
    seed: SeedSpec,
    coords: &[usize],
    replicas: usize,
) -> Result<PathSet> {
    p.validate()?;
    check_sampling_inputs(times, coords, replicas)?;
    let horizon = *times.last().expect("checked nonempty");
    let terms = z_series_terms(horizon, p, var_tol)?;
    let coeffs = z_coefficients(times, p, terms);
    let blocks: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut out = Vec::with_capacity(coords.len() * times.len());
            for &k in coords {
                let g = draw_normals(&seed, StreamRole::LimitSeries, r as u64, (k - 1) as u64, terms);
                out.extend(coeffs.iter().map(|c| c.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()));
            }
            out
        })
        .collect();
    PathSet::new(times.to_vec(), coords.to_vec(), replicas, blocks.concat())
}

/// Settings of the full limit sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitSamplerConfig {
    pub var_tol: f64,
    pub quadrature: QuadratureTolerance,
}

impl LimitSamplerConfig {
    pub fn for_params(p: &LimitParams) -> Self {
        Self { var_tol: 1e-12 * p.phi0.max(f64::MIN_POSITIVE), quadrature: QuadratureTolerance::default() }
    }
}

/// Paths of the limit `V(t)` for each requested coordinate.
///
/// `V0`, the `Z` series, the Ornstein-Uhlenbeck integral and `A` each use
/// their own stream role, so the four pieces are independent, and distinct
/// coordinates never share a stream.
pub fn sample_limit_paths(
    times: &[f64],
    p: &LimitParams,
    initial: &InitialLaw,
    seed: SeedSpec,
    coords: &[usize],
    replicas: usize,
    config: LimitSamplerConfig,
) -> Result<PathSet> {
    p.validate()?;
    initial.validate()?;
    check_sampling_inputs(times, coords, replicas)?;
    let nt = times.len();
    let horizon = times[nt - 1];
    let terms = z_series_terms(horizon, p, config.var_tol)?;
    let coeffs = z_coefficients(times, p, terms);
    let noise_factors = if p.gamma > 0.0 {
        let ou = CovarianceGrid::build(times, |s, t| Ok(ou_cov(s, t, p.lambda, p.gamma)))?.factor()?;
        let a = CovarianceGrid::build(times, |s, t| cov_a(s, t, p, config.quadrature))?.factor()?;
        Some((ou, a))
    } else {
        None
    };
    let decay: Vec<f64> = times.iter().map(|t| (-p.lambda * t).exp()).collect();

    let blocks: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let r = r as u64;
            let mut out = Vec::with_capacity(coords.len() * nt);
            let mut ou_path = vec![0.0; nt];
            let mut a_path = vec![0.0; nt];
            for &k in coords {
                let coord = (k - 1) as u64;
                let v0 = sample_initial_coordinate(initial, &seed, r, coord);
                let g = draw_normals(&seed, StreamRole::LimitSeries, r, coord, terms);
                if let Some((ou, a)) = &noise_factors {
                    ou.apply(&draw_normals(&seed, StreamRole::LimitOu, r, coord, nt), &mut ou_path);
                    a.apply(&draw_normals(&seed, StreamRole::LimitA, r, coord, nt), &mut a_path);
                }
                for i in 0..nt {
                    let z: f64 = coeffs[i].iter().zip(&g).map(|(c, x)| c * x).sum();
                    out.push(decay[i] * (v0 + z + ou_path[i] + p.gamma * a_path[i]));
                }
            }
            out
        })
        .collect();
    PathSet::new(times.to_vec(), coords.to_vec(), replicas, blocks.concat())
}
