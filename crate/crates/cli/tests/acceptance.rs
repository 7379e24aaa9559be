//! Acceptance suite. Runs every criterion in turn, prints one line each and
//! exits with status 1 if any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use linhop_core::finite_network::{run_ensemble, ModelParams, TimeGrid};
use linhop_core::limit_process::{
    cov_v_infinity, lambda_sq, ou_cov, phi_l, sample_limit_paths, LimitParams, LimitSamplerConfig,
};
use linhop_core::quadrature::QuadratureTolerance;
use linhop_core::randomness::{EntryLaw, InitialLaw, MomentTable, SeedSpec};
use linhop_core::special_fn::{i0, i0_tilde};
use linhop_core::stats::{cross_corr, growth_slope, increment_correlation, ks_gaussian, sample_cov};
use linhop_core::word_combinatorics::{
    check_odd_bound, exact_moment, exact_moment_via_classes, limit_moment, EnumerationBudget, YLaw,
};
use linhop_core::PathSet;
use num::{BigInt, BigRational, ToPrimitive};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// Collects sub-checks and the lines describing the failing ones.
#[derive(Default)]
struct Checks {
    total: usize,
    failed: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.total += 1;
        if !ok {
            self.failed.push(what());
        }
    }

    fn outcome(self, summary: &str) -> Outcome {
        if self.failed.is_empty() {
            Outcome::new(true, format!("{summary}; {} checks", self.total))
        } else {
            let shown: Vec<&str> = self.failed.iter().take(6).map(String::as_str).collect();
            Outcome::new(
                false,
                format!(
                    "{summary}; {} of {} checks failed: {}{}",
                    self.failed.len(),
                    self.total,
                    shown.join("; "),
                    if self.failed.len() > shown.len() { "; ..." } else { "" }
                ),
            )
        }
    }
}

fn entry_laws(sigma: f64) -> [EntryLaw; 3] {
    [EntryLaw::rademacher(sigma), EntryLaw::uniform(sigma), EntryLaw::two_point_asymmetric(sigma, 0.25)]
}

fn y_laws() -> [InitialLaw; 2] {
    [InitialLaw::PointMass { c: 1.0 }, InitialLaw::Uniform { a: 0.0, b: 1.0 }]
}

/// Direct summation when it fits the budget, the class sum otherwise.
fn exact(l: usize, n: usize, big_n: usize, law: &EntryLaw, y: &InitialLaw) -> (f64, &'static str) {
    let budget = EnumerationBudget::default();
    match exact_moment(l, n, big_n, law, &YLaw::Iid { law: *y }, &budget) {
        Ok(v) => (v, "direct"),
        Err(linhop_core::Error::Capacity(_)) => {
            (exact_moment_via_classes(l, n, big_n, law, y, &budget).unwrap(), "classes")
        }
        Err(e) => panic!("{e}"),
    }
}

// 1. special functions

fn criterion_1() -> Outcome {
    // sum_{k <= 60} 1 / (k!)^2 in exact rational arithmetic
    let mut sum = BigRational::from_integer(BigInt::from(0));
    let mut fact = BigInt::from(1);
    for k in 0..=60u32 {
        if k > 0 {
            fact *= BigInt::from(k);
        }
        sum += BigRational::new(BigInt::from(1), &fact * &fact);
    }
    let oracle = sum.to_f64().unwrap();
    let value = i0(2.0).unwrap();
    let rel = (value - oracle).abs() / oracle;
    let mut checks = Checks::default();
    checks.check(rel <= 1e-12, || format!("i0(2) relative error {rel:.3e}"));
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let z = 20.0 * k as f64 / 99.0;
        let a = i0(z).unwrap();
        let err = ((a - 1.0) - i0_tilde(z).unwrap()).abs() / a;
        worst = worst.max(err);
        checks.check(err <= 1e-12, || format!("identity at z = {z}: {err:.3e}"));
    }
    checks.outcome(&format!("i0(2) = {value} (rel err {rel:.2e}); identity max rel err {worst:.2e}"))
}

// 2. direct summation against the class sum

fn criterion_2() -> Outcome {
    let budget = EnumerationBudget::default();
    let mut checks = Checks::default();
    let mut worst: f64 = 0.0;
    for l in 1..=6usize {
        for n in 1..=6 / l {
            for big_n in [4usize, 6, 8] {
                for law in entry_laws(1.0) {
                    for y in y_laws() {
                        let d = exact_moment(l, n, big_n, &law, &YLaw::Iid { law: y }, &budget).unwrap();
                        let c = exact_moment_via_classes(l, n, big_n, &law, &y, &budget).unwrap();
                        let err = (d - c).abs() / d.abs().max(1.0);
                        worst = worst.max(err);
                        checks.check(err <= 1e-12, || format!("l={l} n={n} N={big_n} {law:?} {y:?}: {d} vs {c}"));
                    }
                }
            }
        }
    }
    checks.outcome(&format!("max relative gap {worst:.2e}"))
}

// 3. convergence of the moments to the Gaussian limit

fn criterion_3() -> Outcome {
    let ones = InitialLaw::PointMass { c: 1.0 };
    let mut checks = Checks::default();
    let mut worst_ratio: f64 = 0.0;
    for &(l, n) in &[(1usize, 2usize), (2, 2), (3, 2), (1, 4)] {
        for big_n in [4usize, 8, 16] {
            for law in entry_laws(1.0) {
                let (m, _) = exact(l, n, big_n, &law, &ones);
                let lim = limit_moment(l, n, 1.0, 1.0).unwrap();
                let gap = (m / lim - 1.0).abs();
                let bound = 3.0 / big_n as f64;
                worst_ratio = worst_ratio.max(gap / bound);
                checks.check(gap <= bound, || format!("l={l} n={n} N={big_n} {law:?}: gap {gap:.4} > {bound:.4}"));
                if (l, n) == (1, 2) {
                    checks.check(gap <= 1e-14, || format!("(1,2) not exact at N={big_n} for {law:?}"));
                }
                if (l, n) == (2, 2) {
                    // sigma^4 (1 + (kappa - 1) / N^2), kappa = E[J^4] / sigma^4; exact iff kappa = 1
                    let kappa = law.moment(4);
                    let want = 1.0 + (kappa - 1.0) / (big_n * big_n) as f64;
                    checks.check((m - want).abs() <= 1e-13, || format!("(2,2) N={big_n} {law:?}: {m} vs {want}"));
                    if kappa == 1.0 {
                        checks.check(gap <= 1e-14, || format!("(2,2) not exact at N={big_n} for {law:?}"));
                    }
                }
            }
        }
    }
    checks.outcome(&format!("max gap / (3/N) = {worst_ratio:.3}"))
}

// 4. odd moments

fn criterion_4() -> Outcome {
    let mut checks = Checks::default();
    let mut symmetric_nonzero = Vec::new();
    let mut asymmetric_over = Vec::new();
    for n in (1..=9usize).step_by(2) {
        for l in 1..=9 / n {
            for big_n in [4usize, 8, 16] {
                for y in y_laws() {
                    for law in [EntryLaw::rademacher(1.0), EntryLaw::uniform(1.0)] {
                        let (v, _) = exact(l, n, big_n, &law, &y);
                        if v != 0.0 {
                            symmetric_nonzero.push((l, n));
                        }
                        checks.check(v == 0.0, || format!("symmetric l={l} n={n} N={big_n}: {v:.3e}"));
                    }
                    let law = EntryLaw::two_point_asymmetric(1.0, 0.25);
                    let (v, _) = exact(l, n, big_n, &law, &y);
                    let bound = 0.5 / (big_n as f64).sqrt() * y.bound().powi(n as i32);
                    if v.abs() > bound {
                        asymmetric_over.push((l, n));
                    }
                    checks.check(v.abs() <= bound, || {
                        format!("asymmetric l={l} n={n} N={big_n} y={y:?}: |{v:.3e}| > {bound:.3e}")
                    });
                }
            }
        }
    }
    symmetric_nonzero.dedup();
    asymmetric_over.sort_unstable();
    asymmetric_over.dedup();
    checks.outcome(&format!(
        "symmetric laws nonzero at (l,n) = {symmetric_nonzero:?}; asymmetric bound exceeded at (l,n) = {asymmetric_over:?}"
    ))
}

// 5. weights of odd sentences

fn criterion_5() -> Outcome {
    let budget = EnumerationBudget::default();
    let mut checks = Checks::default();
    let mut scanned = Vec::new();
    for n in (1..=11usize).step_by(2) {
        for l in (2..=12usize).step_by(2) {
            if n * l > 12 {
                continue;
            }
            let r = check_odd_bound(l, n, &budget).unwrap();
            scanned.push(format!("({l},{n}):{}/{}", r.max_weight_found.unwrap_or(0), r.bound));
            checks.check(r.within_bound(), || format!("l={l} n={n}: witnesses {:?}", r.witnesses));
        }
    }
    let witness = check_odd_bound(1, 3, &budget).unwrap();
    println!(
        "    note: (l=1, n=3) reaches weight {:?} above the bound {} with {:?} (reported, not graded)",
        witness.max_weight_found, witness.bound, witness.witnesses
    );
    checks.outcome(&format!("max weight/bound {}", scanned.join(" ")))
}

// 6-8. finite-N Monte Carlo

fn gamma0_ensemble() -> &'static PathSet {
    static CELL: OnceLock<PathSet> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = ModelParams {
            n: 200,
            lambda: 1.0,
            gamma: 0.0,
            entry_law: EntryLaw::rademacher(0.5),
            initial_law: InitialLaw::PointMass { c: 1.0 },
            grid: TimeGrid::new(vec![0.0, 0.5, 1.0, 2.0], 16).unwrap(),
        };
        run_ensemble(&p, &[1, 2], 10_000, SeedSpec::new(6), 1e-12).unwrap().paths
    })
}

fn noisy_ensemble() -> &'static PathSet {
    static CELL: OnceLock<PathSet> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = ModelParams {
            n: 200,
            lambda: 1.0,
            gamma: 1.0,
            entry_law: EntryLaw::rademacher(0.5),
            initial_law: InitialLaw::PointMass { c: 0.0 },
            grid: TimeGrid::new(vec![0.0, 0.5, 1.0], 16).unwrap(),
        };
        run_ensemble(&p, &[1, 2], 10_000, SeedSpec::new(7), 1e-12).unwrap().paths
    })
}

fn criterion_6() -> Outcome {
    let paths = gamma0_ensemble();
    let (lambda, sigma, phi0) = (1.0f64, 0.5f64, 1.0f64);
    let centered = |t: f64| -> Vec<f64> {
        paths.samples(1, t).unwrap().iter().map(|v| (lambda * t).exp() * v - 1.0).collect()
    };
    let mut checks = Checks::default();
    let mut parts = Vec::new();
    for t in [0.5, 1.0, 2.0] {
        let x = centered(t);
        let theory = phi0 * i0_tilde(2.0 * sigma * t).unwrap();
        let est = sample_cov(&x, &x).unwrap();
        let budget = 3.0 * est.std_error + 0.05 * theory;
        let diff = (est.value - theory).abs();
        checks.check(diff <= budget, || format!("Var at t={t}: {} vs {theory} (budget {budget:.4})", est.value));
        let ks = ks_gaussian(&x, theory).unwrap();
        checks.check(ks.passed, || format!("KS at t={t}: p = {:.2e}", ks.statistic));
        parts.push(format!("t={t}: var {:.4}±{:.4} vs {theory:.4}, KS p {:.3}", est.value, est.std_error, ks.statistic));
    }
    let (s, t) = (0.5, 1.0);
    let est = sample_cov(&centered(s), &centered(t)).unwrap();
    let theory = phi0 * i0_tilde(2.0 * sigma * (s * t).sqrt()).unwrap();
    let budget = 3.0 * est.std_error + 0.05 * theory;
    checks.check((est.value - theory).abs() <= budget, || format!("Cov(0.5, 1): {} vs {theory}", est.value));
    parts.push(format!("cov(0.5,1) {:.4}±{:.4} vs {theory:.4}", est.value, est.std_error));
    checks.outcome(&parts.join("; "))
}

fn criterion_7() -> Outcome {
    let paths = noisy_ensemble();
    let p = LimitParams { lambda: 1.0, sigma: 0.5, gamma: 1.0, phi0: 0.0, mu0: 0.0 };
    let quad = QuadratureTolerance::default();
    let mut checks = Checks::default();
    let mut parts = Vec::new();
    for t in [0.5, 1.0] {
        let x = paths.samples(1, t).unwrap();
        let theory = (-2.0 * p.lambda * t).exp() * (ou_cov(t, t, p.lambda, 1.0) + lambda_sq(t, &p, quad).unwrap());
        let est = sample_cov(&x, &x).unwrap();
        let budget = 3.0 * est.std_error + 0.05 * theory;
        checks.check((est.value - theory).abs() <= budget, || format!("Var at t={t}: {} vs {theory}", est.value));
        parts.push(format!("t={t}: var {:.4}±{:.4} vs {theory:.4}", est.value, est.std_error));
    }
    let mut worst: f64 = 0.0;
    for t in [0.5, 1.0, 2.0] {
        let series: f64 = (1..=60u32).map(|l| p.sigma.powi(2 * l as i32) * phi_l(t, p.lambda, l, quad).unwrap()).sum();
        let direct = lambda_sq(t, &p, quad).unwrap();
        worst = worst.max((series - direct).abs());
        checks.check((series - direct).abs() <= 1e-8, || format!("quadrature identity at t={t}: {series} vs {direct}"));
    }
    parts.push(format!("series identity max gap {worst:.2e}"));
    checks.outcome(&parts.join("; "))
}

fn criterion_8() -> Outcome {
    let mut checks = Checks::default();
    let mut parts = Vec::new();
    for (name, paths) in [("gamma=0", gamma0_ensemble()), ("gamma=1", noisy_ensemble())] {
        let r = cross_corr(paths, 1, 2, 1.0).unwrap();
        let budget = 3.0 * r.std_error + 0.05;
        checks.check(r.value.abs() <= budget, || format!("{name}: |rho| = {:.4} > {budget:.4}", r.value.abs()));
        parts.push(format!("{name}: rho {:.4}±{:.4}", r.value, r.std_error));
    }
    checks.outcome(&parts.join("; "))
}

// 9. long-time behaviour

fn criterion_9() -> Outcome {
    let mut checks = Checks::default();
    let mut parts = Vec::new();
    for (sigma, lambda) in [(0.5f64, 0.25f64), (0.25, 0.5)] {
        let reference = 2.0 * (sigma - lambda);
        let p = LimitParams { lambda, sigma, gamma: 0.0, phi0: 1.0, mu0: 0.0 };
        let fine: Vec<f64> = (0..=20).map(|k| 10.0 + 0.5 * k as f64).collect();
        let var: Vec<f64> = fine.iter().map(|&t| cov_v_infinity(t, t, &p).unwrap()).collect();
        let theory = growth_slope(&fine, &var, (10.0, 20.0)).unwrap();
        checks.check((theory - reference).abs() <= 0.1 * reference.abs(), || {
            format!("theoretical slope {theory} vs {reference}")
        });

        let n = 400;
        let times: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let model = ModelParams {
            n,
            lambda,
            gamma: 0.0,
            entry_law: EntryLaw::rademacher(sigma),
            initial_law: InitialLaw::TwoPoint { c: 1.0 },
            grid: TimeGrid::new(times.clone(), 1).unwrap(),
        };
        let coords: Vec<usize> = (1..=n).collect();
        let paths = run_ensemble(&model, &coords, 2000, SeedSpec::new(9), 1e-12).unwrap().paths;
        // coordinates are exchangeable; pool their sample variances
        let mc_var: Vec<f64> = times
            .iter()
            .map(|&t| coords.iter().map(|&c| { let x = paths.samples(c, t).unwrap(); sample_cov(&x, &x).unwrap().value }).sum::<f64>() / n as f64)
            .collect();
        let mc = growth_slope(&times, &mc_var, (10.0, 20.0)).unwrap();
        checks.check(mc.signum() == reference.signum() && (mc - reference).abs() <= 0.25 * reference.abs(), || {
            format!("Monte Carlo slope {mc} vs {reference}")
        });
        parts.push(format!("(sigma,lambda)=({sigma},{lambda}): reference {reference:.3}, theory {theory:.4}, MC {mc:.4}"));
    }
    checks.outcome(&parts.join("; "))
}

// 10. correlated increments of the limit

fn criterion_10() -> Outcome {
    let p = LimitParams { lambda: 1.0, sigma: 1.0, gamma: 0.0, phi0: 1.0, mu0: 0.0 };
    let init = InitialLaw::TwoPoint { c: 1.0 };
    let times = [0.0, 0.5, 1.0];
    let paths =
        sample_limit_paths(&times, &p, &init, SeedSpec::new(10), &[1], 100_000, LimitSamplerConfig::for_params(&p))
            .unwrap();
    let inc = increment_correlation(&paths, 1, [0.0, 0.5, 0.5, 1.0], |s, t| cov_v_infinity(s, t, &p)).unwrap();
    let e = inc.empirical;
    let mut checks = Checks::default();
    checks.check(e.z_score(inc.theoretical) <= 3.0, || format!("{} vs {} ({} SE)", e.value, inc.theoretical, e.z_score(inc.theoretical)));
    checks.check(e.value.abs() >= 5.0 * e.std_error, || format!("only {:.2} SE from zero", e.value.abs() / e.std_error));
    checks.outcome(&format!(
        "empirical {:.5}±{:.5}, theoretical {:.5}, {:.1} SE from zero",
        e.value,
        e.std_error,
        inc.theoretical,
        e.value.abs() / e.std_error
    ))
}

// 11. determinism of the command line

const DETERMINISM_CONFIG: &str = r#"{
  "seed": 1234,
  "replicas": 64,
  "coords": [1, 2],
  "model": {
    "n": 30, "lambda": 0.7, "gamma": 0.5,
    "entry_law": {"kind": "uniform", "sigma": 0.8},
    "initial_law": {"kind": "uniform", "a": -1.0, "b": 2.0},
    "grid": {"times": [0.0, 0.3, 0.9], "substeps": 4}
  },
  "compare_cov": {"source": "limit", "coord": 2}
}"#;

fn run_cli(args: &[&str], config: &Path, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_linhop"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success(), "linhop {args:?} failed: {status}");
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let mut checks = Checks::default();
    for cmd in ["simulate", "limit-sample", "compare-cov"] {
        let csv = if cmd == "compare-cov" { "covariance.csv" } else { "trajectories.csv" };
        let a = dir.path().join(format!("{cmd}-1"));
        let b = dir.path().join(format!("{cmd}-3"));
        let c = dir.path().join(format!("{cmd}-manifest"));
        run_cli(&[cmd, "--threads", "1"], &config, &a);
        run_cli(&[cmd, "--threads", "3"], &config, &b);
        run_cli(&[cmd, "--threads", "2"], &a.join("manifest.json"), &c);
        let read = |d: &Path| std::fs::read(d.join(csv)).unwrap();
        let (ra, rb, rc) = (read(&a), read(&b), read(&c));
        checks.check(ra.len() > 100, || format!("{cmd}: {csv} suspiciously short"));
        checks.check(ra == rb, || format!("{cmd}: {csv} differs between 1 and 3 threads"));
        checks.check(ra == rc, || format!("{cmd}: {csv} differs when re-run from the manifest"));
    }
    checks.outcome("simulate, limit-sample and compare-cov byte-identical across --threads 1/3 and manifest re-runs")
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("special-function fidelity", criterion_1),
        ("direct sum equals class sum", criterion_2),
        ("moment-limit convergence", criterion_3),
        ("odd-moment vanishing", criterion_4),
        ("odd-sentence weight scan", criterion_5),
        ("noise-free covariance at N=200", criterion_6),
        ("noisy covariance at N=200", criterion_7),
        ("propagation of chaos", criterion_8),
        ("long-time criticality", criterion_9),
        ("increment correlation", criterion_10),
        ("determinism", criterion_11),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failures += (!outcome.passed) as usize;
        println!(
            "criterion {:>2} {} {name} ({:.1}s): {}",
            k + 1,
            if outcome.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
