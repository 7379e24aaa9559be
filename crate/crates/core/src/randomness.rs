//! Coupling and initial-condition laws with exact moment tables, and the
//! seeding discipline that makes every random draw addressable.
//!
//! Each random stream is a ChaCha8 generator keyed by the SHA-256 digest of
//! `(root seed, role, replica, coordinate)`. A stream therefore depends only
//! on that tuple, never on scheduling or on how many other streams were
//! consumed before it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::CouplingMatrix;
use crate::error::{domain, Error, Result};

/// Largest coupling matrix we are willing to allocate (entries).
pub const MAX_MATRIX_ENTRIES: usize = 1 << 28;

/// Raw moments `E[X^k]`.
pub trait MomentTable {
    fn moment(&self, k: u32) -> f64;

    fn mean(&self) -> f64 {
        self.moment(1)
    }

    fn second_moment(&self) -> f64 {
        self.moment(2)
    }
}

/// Centered, bounded law of a single coupling entry with variance `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntryLaw {
    /// `+sigma` or `-sigma` with equal probability.
    Rademacher { sigma: f64 },
    /// Uniform on `[-sqrt(3) sigma, sqrt(3) sigma]`.
    Uniform { sigma: f64 },
    /// `a > 0` with probability `p`, `-b < 0` otherwise, with `p a = (1-p) b`
    /// and variance `sigma^2`. Odd moments do not vanish unless `p = 1/2`.
    TwoPointAsymmetric {
        sigma: f64,
        #[serde(default = "default_asymmetric_p")]
        p: f64,
    },
}

fn default_asymmetric_p() -> f64 {
    0.25
}

impl EntryLaw {
    pub fn rademacher(sigma: f64) -> Self {
        EntryLaw::Rademacher { sigma }
    }

    pub fn uniform(sigma: f64) -> Self {
        EntryLaw::Uniform { sigma }
    }

    pub fn two_point_asymmetric(sigma: f64, p: f64) -> Self {
        EntryLaw::TwoPointAsymmetric { sigma, p }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            EntryLaw::Rademacher { sigma }
            | EntryLaw::Uniform { sigma }
            | EntryLaw::TwoPointAsymmetric { sigma, .. } => sigma,
        }
    }

    /// True when the law is invariant under `x -> -x`.
    pub fn is_symmetric(&self) -> bool {
        match *self {
            EntryLaw::Rademacher { .. } | EntryLaw::Uniform { .. } => true,
            EntryLaw::TwoPointAsymmetric { p, .. } => p == 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigma = self.sigma();
        if !(sigma.is_finite() && sigma >= 0.0) {
            return domain(format!("entry law sigma must be finite and >= 0, got {sigma}"));
        }
        if let EntryLaw::TwoPointAsymmetric { p, .. } = *self {
            if !(p > 0.0 && p < 1.0) {
                return domain(format!("two-point probability must lie in (0, 1), got {p}"));
            }
        }
        Ok(())
    }

    /// `(a, b)` such that the law puts mass `p` on `a` and `1 - p` on `-b`.
    fn two_point_atoms(sigma: f64, p: f64) -> (f64, f64) {
        let q = 1.0 - p;
        (sigma * (q / p).sqrt(), sigma * (p / q).sqrt())
    }

    /// Largest absolute value in the support.
    pub fn bound(&self) -> f64 {
        match *self {
            EntryLaw::Rademacher { sigma } => sigma,
            EntryLaw::Uniform { sigma } => 3f64.sqrt() * sigma,
            EntryLaw::TwoPointAsymmetric { sigma, p } => {
                let (a, b) = Self::two_point_atoms(sigma, p);
                a.max(b)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EntryLaw::Rademacher { sigma } => {
                if rng.random::<bool>() {
                    sigma
                } else {
                    -sigma
                }
            }
            EntryLaw::Uniform { sigma } => {
                let a = 3f64.sqrt() * sigma;
                a * (2.0 * rng.random::<f64>() - 1.0)
            }
            EntryLaw::TwoPointAsymmetric { sigma, p } => {
                let (a, b) = Self::two_point_atoms(sigma, p);
                if rng.random::<f64>() < p {
                    a
                } else {
                    -b
                }
            }
        }
    }
}

impl MomentTable for EntryLaw {
    fn moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        match *self {
            EntryLaw::Rademacher { sigma } => {
                if k.is_multiple_of(2) {
                    sigma.powi(k as i32)
                } else {
                    0.0
                }
            }
            EntryLaw::Uniform { sigma } => {
                if k.is_multiple_of(2) {
                    (3f64.sqrt() * sigma).powi(k as i32) / (k as f64 + 1.0)
                } else {
                    0.0
                }
            }
            EntryLaw::TwoPointAsymmetric { sigma, p } => match k {
                1 => 0.0,
                2 => sigma * sigma,
                _ => {
                    let (a, b) = Self::two_point_atoms(sigma, p);
                    p * a.powi(k as i32) + (1.0 - p) * (-b).powi(k as i32)
                }
            },
        }
    }
}

/// Compactly supported law of one initial coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    PointMass { c: f64 },
    Uniform { a: f64, b: f64 },
    /// `+c` or `-c` with equal probability.
    TwoPoint { c: f64 },
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialLaw::PointMass { c } | InitialLaw::TwoPoint { c } if !c.is_finite() => {
                domain(format!("initial law atom must be finite, got {c}"))
            }
            InitialLaw::Uniform { a, b } if !(a.is_finite() && b.is_finite() && a < b) => {
                domain(format!("uniform initial law needs finite a < b, got [{a}, {b}]"))
            }
            _ => Ok(()),
        }
    }

    /// Largest absolute value in the support.
    pub fn bound(&self) -> f64 {
        match *self {
            InitialLaw::PointMass { c } | InitialLaw::TwoPoint { c } => c.abs(),
            InitialLaw::Uniform { a, b } => a.abs().max(b.abs()),
        }
    }

    pub fn variance(&self) -> f64 {
        self.moment(2) - self.moment(1).powi(2)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::PointMass { c } => c,
            InitialLaw::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            InitialLaw::TwoPoint { c } => {
                if rng.random::<bool>() {
                    c
                } else {
                    -c
                }
            }
        }
    }
}

impl MomentTable for InitialLaw {
    fn moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        match *self {
            InitialLaw::PointMass { c } => c.powi(k as i32),
            InitialLaw::Uniform { a, b } => {
                let k1 = k as i32 + 1;
                (b.powi(k1) - a.powi(k1)) / (k1 as f64 * (b - a))
            }
            InitialLaw::TwoPoint { c } => {
                if k.is_multiple_of(2) {
                    c.powi(k as i32)
                } else {
                    0.0
                }
            }
        }
    }
}

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRole {
    Couplings,
    Initial,
    Brownian,
    /// Standard Gaussians of the limit series for `Z`.
    LimitSeries,
    /// Gaussian vector for the `A` process on a grid.
    LimitA,
    /// Gaussian vector for the Ornstein-Uhlenbeck integral on a grid.
    LimitOu,
}

impl StreamRole {
    fn tag(self) -> u8 {
        match self {
            StreamRole::Couplings => 1,
            StreamRole::Initial => 2,
            StreamRole::Brownian => 3,
            StreamRole::LimitSeries => 4,
            StreamRole::LimitA => 5,
            StreamRole::LimitOu => 6,
        }
    }
}

/// Root seed from which every stream is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub root: u64,
}

impl SeedSpec {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    /// The generator for `(role, replica, coordinate)`.
    pub fn stream(&self, role: StreamRole, replica: u64, coordinate: u64) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"linhop/stream/v1");
        hasher.update(self.root.to_le_bytes());
        hasher.update([role.tag()]);
        hasher.update(replica.to_le_bytes());
        hasher.update(coordinate.to_le_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}

/// `n x n` matrix of i.i.d. entries; row `i` comes from stream
/// `(couplings, replica, i)`.
pub fn sample_matrix(n: usize, law: &EntryLaw, seed: &SeedSpec, replica: u64) -> Result<CouplingMatrix> {
    law.validate()?;
    if n == 0 {
        return domain("matrix size must be at least 1");
    }
    let entries = n
        .checked_mul(n)
        .filter(|&e| e <= MAX_MATRIX_ENTRIES)
        .ok_or_else(|| {
            Error::Capacity(format!("{n}x{n} coupling matrix exceeds {MAX_MATRIX_ENTRIES} entries"))
        })?;
    let mut data = Vec::with_capacity(entries);
    for i in 0..n {
        let mut rng = seed.stream(StreamRole::Couplings, replica, i as u64);
        data.extend((0..n).map(|_| law.sample(&mut rng)));
    }
    CouplingMatrix::from_row_major(n, data)
}

/// Initial vector with i.i.d. coordinates; coordinate `i` comes from stream
/// `(initial, replica, i)`.
pub fn sample_initial(n: usize, law: &InitialLaw, seed: &SeedSpec, replica: u64) -> Result<Vec<f64>> {
    law.validate()?;
    if n == 0 {
        return domain("state dimension must be at least 1");
    }
    if n > MAX_MATRIX_ENTRIES {
        return Err(Error::Capacity(format!("initial vector of length {n} too large")));
    }
    Ok((0..n)
        .map(|i| sample_initial_coordinate(law, seed, replica, i as u64))
        .collect())
}

pub(crate) fn sample_initial_coordinate(law: &InitialLaw, seed: &SeedSpec, replica: u64, coordinate: u64) -> f64 {
    let mut rng = seed.stream(StreamRole::Initial, replica, coordinate);
    law.sample(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laws() -> Vec<EntryLaw> {
        vec![
            EntryLaw::rademacher(0.7),
            EntryLaw::uniform(0.7),
            EntryLaw::two_point_asymmetric(0.7, 0.25),
        ]
    }

    #[test]
    fn first_two_moments_are_exact() {
        for law in laws() {
            assert_eq!(law.moment(1), 0.0, "{law:?}");
            assert!((law.moment(2) - 0.49).abs() < 1e-15, "{law:?}");
        }
        assert_eq!(EntryLaw::rademacher(0.5).moment(2), 0.25);
        assert_eq!(EntryLaw::rademacher(0.5).moment(3), 0.0);
        let s: f64 = 0.8;
        assert!((EntryLaw::uniform(s).moment(4) - 1.8 * s.powi(4)).abs() < 1e-14);
        assert!(EntryLaw::two_point_asymmetric(1.0, 0.25).moment(3).abs() > 0.1);
    }

    #[test]
    fn initial_moments() {
        let u = InitialLaw::Uniform { a: 0.0, b: 1.0 };
        assert!((u.moment(2) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(InitialLaw::PointMass { c: 2.0 }.moment(3), 8.0);
        assert_eq!(InitialLaw::TwoPoint { c: 2.0 }.moment(3), 0.0);
        assert_eq!(InitialLaw::TwoPoint { c: 2.0 }.moment(2), 4.0);
        assert!(u.moment(2) >= u.moment(1).powi(2));
    }

    #[test]
    fn moment_tables_match_monte_carlo() {
        let seed = SeedSpec::new(11);
        let n = 1_000_000;
        for (idx, law) in laws().into_iter().enumerate() {
            let mut rng = seed.stream(StreamRole::Couplings, 900 + idx as u64, 0);
            let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            for k in 1..=6u32 {
                let vals: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
                let mean = vals.iter().copied().collect::<crate::summation::CompensatedSum>().value() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                let se = (var / n as f64).sqrt();
                let diff = (mean - law.moment(k)).abs();
                assert!(diff <= 5.0 * se + 1e-14, "{law:?} k={k}: diff {diff} se {se}");
            }
        }
    }

    #[test]
    fn matrix_support_and_determinism() {
        let seed = SeedSpec::new(5);
        let law = EntryLaw::rademacher(1.0);
        let j = sample_matrix(2, &law, &seed, 0).unwrap();
        assert!(j.as_slice().iter().all(|&x| x == 1.0 || x == -1.0));
        let again = sample_matrix(2, &law, &seed, 0).unwrap();
        assert_eq!(j, again);
        let other = sample_matrix(50, &law, &seed, 1).unwrap();
        assert_ne!(sample_matrix(50, &law, &seed, 0).unwrap(), other);
    }

    #[test]
    fn matrix_entries_are_centered() {
        let n = 500;
        let sigma = 0.5;
        let j = sample_matrix(n, &EntryLaw::rademacher(sigma), &SeedSpec::new(3), 0).unwrap();
        let mean = j.as_slice().iter().sum::<f64>() / (n * n) as f64;
        // 4-sigma CLT band: false-failure probability about 6e-5
        assert!(mean.abs() <= 4.0 * sigma / (n as f64));
    }

    #[test]
    fn initial_vectors() {
        let seed = SeedSpec::new(8);
        let ones = sample_initial(5, &InitialLaw::PointMass { c: 1.0 }, &seed, 0).unwrap();
        assert_eq!(ones, vec![1.0; 5]);
        let u = InitialLaw::Uniform { a: 0.0, b: 1.0 };
        let v = sample_initial(100_000, &u, &seed, 0).unwrap();
        let m2 = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        assert!((m2 - 1.0 / 3.0).abs() < 0.01);
        assert_eq!(v, sample_initial(100_000, &u, &seed, 0).unwrap());
    }

    #[test]
    fn role_separation_passes_correlation_null() {
        let seed = SeedSpec::new(21);
        let n = 200_000;
        let mut a = seed.stream(StreamRole::Couplings, 0, 0);
        let mut b = seed.stream(StreamRole::Initial, 0, 0);
        let xs: Vec<f64> = (0..n).map(|_| a.random::<f64>() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.random::<f64>() - 0.5).collect();
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        let rho = cov / (1.0 / 12.0);
        assert!(rho.abs() <= 4.0 / (n as f64).sqrt(), "rho = {rho}");
    }

    #[test]
    fn validation_and_capacity() {
        assert!(EntryLaw::two_point_asymmetric(1.0, 1.0).validate().is_err());
        assert!(EntryLaw::rademacher(-1.0).validate().is_err());
        assert!(InitialLaw::Uniform { a: 1.0, b: 0.0 }.validate().is_err());
        let err = sample_matrix(1 << 20, &EntryLaw::rademacher(1.0), &SeedSpec::new(0), 0).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn serde_shape() {
        let law: EntryLaw = serde_json::from_str(r#"{"kind":"rademacher","sigma":0.5}"#).unwrap();
        assert_eq!(law, EntryLaw::rademacher(0.5));
        let asym: EntryLaw = serde_json::from_str(r#"{"kind":"two_point_asymmetric","sigma":1.0}"#).unwrap();
        assert_eq!(asym, EntryLaw::two_point_asymmetric(1.0, 0.25));
        assert!(serde_json::from_str::<EntryLaw>(r#"{"kind":"rademacher","sigma":0.5,"x":1}"#).is_err());
        let init: InitialLaw = serde_json::from_str(r#"{"kind":"point_mass","c":1.0}"#).unwrap();
        assert_eq!(init, InitialLaw::PointMass { c: 1.0 });
    }
}
