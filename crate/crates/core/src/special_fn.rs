//! Modified Bessel function `I0`, its shifted variant `I0 - 1`, and the
//! double factorial.
//!
//! Both Bessel routines sum the power series
//! `sum_l (z/2)^(2l) / (l!)^2` with the term recurrence
//! `t_{l+1} = t_l * (z/2)^2 / (l+1)^2` and stop once a geometric bound on
//! the omitted tail is below the requested relative tolerance. There is no
//! asymptotic branch: the arguments used in this crate stay well inside
//! the range where the series is accurate in double precision.

use crate::error::{domain, Error, Result};

/// Relative truncation tolerance for the Bessel series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTolerance(f64);

impl SeriesTolerance {
    pub fn new(rel_tol: f64) -> Result<Self> {
        if rel_tol > 0.0 && rel_tol < 1.0 {
            Ok(Self(rel_tol))
        } else {
            domain(format!("series tolerance must lie in (0, 1), got {rel_tol}"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for SeriesTolerance {
    fn default() -> Self {
        Self(1e-16)
    }
}

/// A truncated series value together with the index of the last summed term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesEval {
    pub value: f64,
    pub last_index: usize,
}

const MAX_TERMS: usize = 100_000;

/// Sums `sum_{l >= start} q^l / (l!)^2` for `q >= 0`, `start` in {0, 1}.
///
/// `q` is `(z/2)^2`; callers that know `q` directly (for instance a product
/// of two time differences) avoid a square root this way.
pub(crate) fn bessel_series(q: f64, start: usize, tol: SeriesTolerance) -> Result<SeriesEval> {
    debug_assert!(start <= 1);
    if q == 0.0 {
        let value = if start == 0 { 1.0 } else { 0.0 };
        return Ok(SeriesEval { value, last_index: start });
    }
    let mut term = if start == 0 { 1.0 } else { q };
    let mut sum = term;
    let mut l = start;
    loop {
        let ratio_next = q / ((l + 1) as f64).powi(2);
        let next = term * ratio_next;
        let ratio_after = q / ((l + 2) as f64).powi(2);
        if ratio_after < 1.0 && next / (1.0 - ratio_after) <= tol.get() * sum {
            break;
        }
        term = next;
        sum += term;
        l += 1;
        if !sum.is_finite() {
            return Err(Error::Numerical(format!(
                "Bessel series overflowed at q = {q}"
            )));
        }
        if l > MAX_TERMS {
            return Err(Error::Numerical(format!(
                "Bessel series did not converge within {MAX_TERMS} terms (q = {q})"
            )));
        }
    }
    Ok(SeriesEval { value: sum, last_index: l })
}

fn check_argument(z: f64) -> Result<()> {
    if !z.is_finite() {
        return domain(format!("Bessel argument must be finite, got {z}"));
    }
    if z < 0.0 {
        return domain(format!("Bessel argument must be nonnegative, got {z}"));
    }
    Ok(())
}

/// `I0(z)` with the truncation index of the summed series.
pub fn i0_series(z: f64, tol: SeriesTolerance) -> Result<SeriesEval> {
    check_argument(z)?;
    bessel_series(0.25 * z * z, 0, tol)
}

/// `I0(z) - 1`, summed directly from `l = 1` so small arguments keep full
/// relative precision.
pub fn i0_tilde_series(z: f64, tol: SeriesTolerance) -> Result<SeriesEval> {
    check_argument(z)?;
    bessel_series(0.25 * z * z, 1, tol)
}

/// Modified Bessel function of the first kind of order zero, `z >= 0`.
pub fn i0(z: f64) -> Result<f64> {
    i0_series(z, SeriesTolerance::default()).map(|s| s.value)
}

/// `I0(z) - 1` for `z >= 0`.
pub fn i0_tilde(z: f64) -> Result<f64> {
    i0_tilde_series(z, SeriesTolerance::default()).map(|s| s.value)
}

/// `1 * 3 * 5 * ... * n` for odd `n >= 1`.
pub fn double_factorial(n: u64) -> Result<u64> {
    if n == 0 || n.is_multiple_of(2) {
        return domain(format!("double factorial needs an odd positive integer, got {n}"));
    }
    (1..=n).step_by(2).try_fold(1u64, |acc, k| {
        acc.checked_mul(k)
            .ok_or_else(|| Error::Capacity(format!("{n}!! overflows u64")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_argument() {
        assert_eq!(i0(0.0).unwrap(), 1.0);
        assert_eq!(i0_tilde(0.0).unwrap(), 0.0);
    }

    #[test]
    fn small_argument_keeps_relative_precision() {
        let z: f64 = 0.2;
        let two_terms = z * z / 4.0 + z.powi(4) / 64.0;
        let v = i0_tilde(z).unwrap();
        assert_relative_eq!(v, two_terms, max_relative = 1e-5);
        assert_relative_eq!(v, 0.010_025_027_795_145_84, max_relative = 1e-13);
        let tiny = i0_tilde(1e-9).unwrap();
        assert_relative_eq!(tiny, 2.5e-19, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(i0(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(i0(f64::INFINITY), Err(Error::Domain(_))));
        assert!(matches!(i0_tilde(-1.0), Err(Error::Domain(_))));
        assert!(SeriesTolerance::new(0.0).is_err());
        assert!(SeriesTolerance::new(1.0).is_err());
    }

    #[test]
    fn large_argument_asymptotics() {
        let z: f64 = 10.0;
        assert!(i0(z).unwrap() > z.exp() / (2.0 * std::f64::consts::PI * z).sqrt());
        for z in [20.0f64, 40.0] {
            let r = i0(z).unwrap() * (2.0 * std::f64::consts::PI * z).sqrt() / z.exp();
            assert!(r > 0.9 && r < 1.1, "z = {z}: ratio {r}");
        }
    }

    #[test]
    fn tail_certificate_holds() {
        let tol = SeriesTolerance::default();
        for k in 0..=50 {
            let z = k as f64;
            let s = i0_series(z, tol).unwrap();
            let q = (z / 2.0).powi(2);
            let l = s.last_index as f64;
            let ratio = q / (l + 2.0).powi(2);
            if ratio < 1.0 {
                // (z/2)^{2(l+1)} / ((l+1)!)^2 computed in log space
                let ln_term = (l + 1.0) * q.max(f64::MIN_POSITIVE).ln()
                    - 2.0 * ln_factorial(s.last_index + 1);
                let bound = ln_term.exp() / (1.0 - ratio);
                assert!(bound <= tol.get() * s.value * (1.0 + 1e-12), "z = {z}");
            }
        }
    }

    fn ln_factorial(n: usize) -> f64 {
        (1..=n).map(|k| (k as f64).ln()).sum()
    }

    #[test]
    fn double_factorials() {
        assert_eq!(double_factorial(1).unwrap(), 1);
        assert_eq!(double_factorial(3).unwrap(), 3);
        assert_eq!(double_factorial(5).unwrap(), 15);
        assert_eq!(double_factorial(7).unwrap(), 105);
        assert!(double_factorial(0).is_err());
        assert!(double_factorial(4).is_err());
        assert!(matches!(double_factorial(101), Err(Error::Capacity(_))));
    }
}
