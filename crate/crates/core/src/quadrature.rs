//! Adaptive Simpson quadrature for smooth integrands on bounded intervals.

use crate::error::{domain, Error, Result};

/// Absolute-plus-relative accuracy target and recursion cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureTolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_depth: u32,
}

impl QuadratureTolerance {
    /// Same value for the absolute and relative targets.
    pub fn uniform(tol: f64) -> Self {
        Self { abs: tol, rel: tol, ..Self::default() }
    }
}

impl Default for QuadratureTolerance {
    fn default() -> Self {
        Self { abs: 1e-10, rel: 1e-10, max_depth: 60 }
    }
}

const INITIAL_PANELS: usize = 8;

/// `int_a^b f(x) dx` for `a <= b`.
///
/// The interval is first cut into a few panels so that integrands vanishing
/// at the coarse Simpson nodes cannot fake convergence; each panel is then
/// bisected until the Richardson error estimate meets its share of
/// `max(abs, rel * |I|)`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: QuadratureTolerance) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return domain(format!("integration bounds must be finite, got [{a}, {b}]"));
    }
    if b < a {
        return domain(format!("integration bounds must satisfy a <= b, got [{a}, {b}]"));
    }
    if !(tol.abs > 0.0 && tol.rel >= 0.0) {
        return domain("quadrature tolerances must be positive");
    }
    if a == b {
        return Ok(0.0);
    }
    let width = (b - a) / INITIAL_PANELS as f64;
    let panels: Vec<Panel> = (0..INITIAL_PANELS)
        .map(|k| {
            let lo = a + k as f64 * width;
            let hi = if k + 1 == INITIAL_PANELS { b } else { lo + width };
            Panel::new(&f, lo, hi)
        })
        .collect();
    let rough: f64 = panels.iter().map(|p| p.whole).sum();
    let eps = tol.abs.max(tol.rel * rough.abs()) / INITIAL_PANELS as f64;
    let mut total = 0.0;
    for p in panels {
        total += refine(&f, p, eps, 0, tol.max_depth)?;
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!("integral over [{a}, {b}] is not finite")));
    }
    Ok(total)
}

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

impl Panel {
    fn new<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Self {
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        Self::from_values(a, b, fa, fm, fb)
    }

    fn from_values(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> Self {
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        Self { a, b, fa, fm, fb, whole }
    }
}

fn refine<F: Fn(f64) -> f64>(f: &F, p: Panel, eps: f64, depth: u32, max_depth: u32) -> Result<f64> {
    let m = 0.5 * (p.a + p.b);
    let left = Panel::from_values(p.a, m, p.fa, f(0.5 * (p.a + m)), p.fm);
    let right = Panel::from_values(m, p.b, p.fm, f(0.5 * (m + p.b)), p.fb);
    let delta = left.whole + right.whole - p.whole;
    if !delta.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite integrand on [{}, {}]",
            p.a, p.b
        )));
    }
    if delta.abs() <= 15.0 * eps {
        return Ok(left.whole + right.whole + delta / 15.0);
    }
    if depth + 1 >= max_depth {
        return Err(Error::Numerical(format!(
            "adaptive Simpson reached depth {max_depth} on [{}, {}] (error estimate {:.3e})",
            p.a,
            p.b,
            delta.abs() / 15.0
        )));
    }
    Ok(refine(f, left, 0.5 * eps, depth + 1, max_depth)?
        + refine(f, right, 0.5 * eps, depth + 1, max_depth)?)
}
