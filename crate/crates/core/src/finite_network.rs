//! Finite-N network simulation from the explicit solution of the linear
//! system `dV = (-lambda V + J V / sqrt(N)) dt + gamma dB`.
//!
//! The deterministic flow is never time-stepped: every grid interval is
//! crossed by applying `exp(tau J / sqrt(N))` through its Taylor series,
//! truncated adaptively. The only discretisation is in the stochastic
//! integral, see [`evolve_noise`].

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{norm, CouplingMatrix};
use crate::error::{domain, Error, Result};
use crate::paths::PathSet;
use crate::randomness::{sample_initial, sample_matrix, EntryLaw, InitialLaw, SeedSpec, StreamRole};

/// Default relative tolerance of the series matrix action.
pub const DEFAULT_ACTION_TOL: f64 = 1e-12;

/// Largest number of stored ensemble values.
pub const MAX_ENSEMBLE_VALUES: usize = 1 << 28;

/// Observation times plus the refinement used for the stochastic integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    times: Vec<f64>,
    #[serde(default = "default_substeps")]
    substeps: usize,
}

fn default_substeps() -> usize {
    16
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, substeps: usize) -> Result<Self> {
        let grid = Self { times, substeps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        match self.times.first() {
            Some(0.0) => {}
            _ => return domain("time grid must start at 0"),
        }
        if self.times.iter().any(|t| !t.is_finite()) {
            return domain("time grid must be finite");
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return domain("time grid must be strictly increasing");
        }
        if self.substeps == 0 {
            return domain("substeps must be at least 1");
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("validated grid is nonempty")
    }
}

/// Full configuration of a finite-N experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n: usize,
    pub lambda: f64,
    #[serde(default)]
    pub gamma: f64,
    pub entry_law: EntryLaw,
    pub initial_law: InitialLaw,
    pub grid: TimeGrid,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return domain("network size N must be at least 1");
        }
        if !self.lambda.is_finite() {
            return domain("lambda must be finite");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return domain(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        self.entry_law.validate()?;
        self.initial_law.validate()?;
        self.grid.validate()
    }
}

/// Result of a series matrix action with its truncation index.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesAction {
    pub value: Vec<f64>,
    /// Index `L` of the last summed term.
    pub terms: usize,
}

/// `exp((tau / sqrt(N)) J) v` by adaptive Taylor truncation.
pub fn matrix_action_exp(j: &CouplingMatrix, tau: f64, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    matrix_action_exp_terms(j, tau, v, tol).map(|a| a.value)
}

/// As [`matrix_action_exp`], also reporting the truncation index.
///
/// Terms follow `w_{l+1} = tau / ((l+1) sqrt(N)) J w_l`. Summation stops at
/// the first `L` with `|w_{L+1}| <= tol |S_L|` and `|w_{L+1}| <= |w_L| / 2`.
pub fn matrix_action_exp_terms(j: &CouplingMatrix, tau: f64, v: &[f64], tol: f64) -> Result<SeriesAction> {
    if !(tol > 0.0 && tol < 1.0) {
        return domain(format!("action tolerance must lie in (0, 1), got {tol}"));
    }
    if !tau.is_finite() {
        return domain(format!("tau must be finite, got {tau}"));
    }
    let n = j.dim();
    if v.len() != n {
        return domain(format!("vector of length {} does not conform to {n}x{n} matrix", v.len()));
    }
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut sum = v.to_vec();
    let mut term = v.to_vec();
    let mut next = vec![0.0; n];
    let mut term_norm = norm(&term);
    if tau == 0.0 || term_norm == 0.0 {
        return Ok(SeriesAction { value: sum, terms: 0 });
    }
    let cap = 10.0 * (1.0 + tau.abs() * j.norm_estimate() * inv_sqrt_n) + 64.0;
    let max_terms = cap.min(1e6) as usize;
    let mut l = 0usize;
    loop {
        j.matvec_scaled(&term, tau * inv_sqrt_n / (l + 1) as f64, &mut next);
        let next_norm = norm(&next);
        if next_norm <= tol * norm(&sum) && next_norm <= 0.5 * term_norm {
            return Ok(SeriesAction { value: sum, terms: l });
        }
        if !next_norm.is_finite() {
            return Err(Error::Numerical(format!(
                "series matrix action overflowed at term {} (tau = {tau})",
                l + 1
            )));
        }
        for (s, x) in sum.iter_mut().zip(&next) {
            *s += x;
        }
        std::mem::swap(&mut term, &mut next);
        term_norm = next_norm;
        l += 1;
        if l >= max_terms {
            return Err(Error::Numerical(format!(
                "series matrix action did not converge within {max_terms} terms \
                 (tau = {tau}, norm estimate = {:.4e}, last term norm = {term_norm:.4e}, \
                 partial sum norm = {:.4e})",
                j.norm_estimate(),
                norm(&sum)
            )));
        }
    }
}

/// States `V(t)` at every grid time for `gamma = 0`.
///
/// Consecutive grid times are bridged with the semigroup property, so
/// `V(t_k) = exp(-lambda t_k) W_k` with `W_{k+1} = exp((t_{k+1} - t_k) J / sqrt(N)) W_k`.
pub fn evolve_gamma0(j: &CouplingMatrix, v0: &[f64], params: &ModelParams, tol: f64) -> Result<Vec<Vec<f64>>> {
    if params.gamma != 0.0 {
        return domain("evolve_gamma0 requires gamma = 0");
    }
    check_conformance(j, v0, params)?;
    let times = params.grid.times();
    let mut out = Vec::with_capacity(times.len());
    let mut w = v0.to_vec();
    let mut prev_t = 0.0;
    for &t in times {
        if t > prev_t {
            w = matrix_action_exp(j, t - prev_t, &w, tol)?;
        }
        let leak = (-params.lambda * t).exp();
        out.push(w.iter().map(|x| leak * x).collect());
        prev_t = t;
    }
    Ok(out)
}

fn check_conformance(j: &CouplingMatrix, v0: &[f64], params: &ModelParams) -> Result<()> {
    if j.dim() != params.n || v0.len() != params.n {
        return domain(format!(
            "matrix ({0}x{0}) and initial vector ({1}) must match N = {2}",
            j.dim(),
            v0.len(),
            params.n
        ));
    }
    params.grid.validate()
}

/// Per-neuron Brownian streams `(brownian, replica, i)`.
pub struct NoiseStreams {
    rngs: Vec<ChaCha8Rng>,
}

impl NoiseStreams {
    pub fn new(seed: &SeedSpec, replica: u64, n: usize) -> Self {
        Self {
            rngs: (0..n)
                .map(|i| seed.stream(StreamRole::Brownian, replica, i as u64))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rngs.len()
    }

    /// Fills `out[i]` with the next standard normal of neuron `i`.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for (o, rng) in out.iter_mut().zip(self.rngs.iter_mut()) {
            *o = StandardNormal.sample(rng);
        }
    }
}

/// Standard deviation of `int_0^h exp(lambda u) dB(u)`.
fn leaky_increment_sd(lambda: f64, h: f64) -> f64 {
    let x = 2.0 * lambda * h;
    let var = if x.abs() < 1e-8 { h * (1.0 + 0.5 * x) } else { x.exp_m1() / (2.0 * lambda) };
    var.sqrt()
}

/// States `V(t)` at every grid time for `gamma >= 0`.
///
/// Each grid interval is split into `substeps` pieces of length `h`. On a
/// piece `[s, s + h]` the integrand `exp(lambda u) exp(-J u / sqrt(N))` has
/// its matrix factor frozen at the left endpoint `s` while the scalar factor
/// is integrated exactly, which gives the recursion
/// `X(s + h) = exp(-lambda h) exp(h J / sqrt(N)) [X(s) + gamma xi]` with
/// `xi ~ N(0, (exp(2 lambda h) - 1) / (2 lambda))` per coordinate. This is
/// the left-endpoint sum for the stochastic integral written in step form;
/// for `J = 0` it is exact in law.
pub fn evolve_noise(
    j: &CouplingMatrix,
    v0: &[f64],
    params: &ModelParams,
    tol: f64,
    noise: &mut NoiseStreams,
) -> Result<Vec<Vec<f64>>> {
    if params.gamma == 0.0 {
        return evolve_gamma0(j, v0, params, tol);
    }
    check_conformance(j, v0, params)?;
    if noise.dim() != params.n {
        return domain("noise streams must match N");
    }
    let times = params.grid.times();
    let m = params.grid.substeps();
    let mut out = Vec::with_capacity(times.len());
    let mut x = v0.to_vec();
    let mut xi = vec![0.0; params.n];
    out.push(x.clone());
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / m as f64;
        let scale = params.gamma * leaky_increment_sd(params.lambda, h);
        let leak = (-params.lambda * h).exp();
        for _ in 0..m {
            noise.fill_standard_normal(&mut xi);
            for (xv, z) in x.iter_mut().zip(&xi) {
                *xv += scale * z;
            }
            x = matrix_action_exp(j, h, &x, tol)?;
            x.iter_mut().for_each(|v| *v *= leak);
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Replicated trajectories of a few tracked coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub params: ModelParams,
    pub seed: SeedSpec,
    pub tol: f64,
    pub paths: PathSet,
}

/// Simulates `replicas` independent networks (fresh `J`, `V0`, Brownian
/// paths each) and keeps the 1-based coordinates in `coords`.
///
/// Replica `r` only reads streams indexed by `r`, so the result does not
/// depend on the number of worker threads.
pub fn run_ensemble(
    params: &ModelParams,
    coords: &[usize],
    replicas: usize,
    seed: SeedSpec,
    tol: f64,
) -> Result<TrajectoryEnsemble> {
    params.validate()?;
    if replicas == 0 {
        return domain("replica count must be at least 1");
    }
    if coords.is_empty() {
        return domain("at least one coordinate must be tracked");
    }
    if let Some(&c) = coords.iter().find(|&&c| c == 0 || c > params.n) {
        return domain(format!("coordinate {c} outside 1..={}", params.n));
    }
    let nt = params.grid.times().len();
    let total = replicas
        .checked_mul(coords.len())
        .and_then(|x| x.checked_mul(nt))
        .filter(|&x| x <= MAX_ENSEMBLE_VALUES)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "ensemble of {replicas} replicas x {} coords x {nt} times exceeds {MAX_ENSEMBLE_VALUES} values",
                coords.len()
            ))
        })?;

    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| simulate_replica(params, coords, &seed, r as u64, tol))
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(total);
    for block in per_replica {
        values.extend(block);
    }
    let paths = PathSet::new(params.grid.times().to_vec(), coords.to_vec(), replicas, values)?;
    Ok(TrajectoryEnsemble { params: params.clone(), seed, tol, paths })
}

fn simulate_replica(params: &ModelParams, coords: &[usize], seed: &SeedSpec, replica: u64, tol: f64) -> Result<Vec<f64>> {
    let j = sample_matrix(params.n, &params.entry_law, seed, replica)?;
    let v0 = sample_initial(params.n, &params.initial_law, seed, replica)?;
    let states = if params.gamma == 0.0 {
        evolve_gamma0(&j, &v0, params, tol)?
    } else {
        let mut noise = NoiseStreams::new(seed, replica, params.n);
        evolve_noise(&j, &v0, params, tol, &mut noise)?
    };
    let mut out = Vec::with_capacity(coords.len() * states.len());
    for &c in coords {
        out.extend(states.iter().map(|state| state[c - 1]));
    }
    Ok(out)
}
