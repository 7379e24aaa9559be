//! One function per subcommand. Each reads a validated config and writes its
//! artifacts into the output directory.

use linhop_core::finite_network::run_ensemble;
use linhop_core::limit_process::{cov_v_limit, sample_limit_paths};
use linhop_core::randomness::{EntryLaw, InitialLaw, MomentTable};
use linhop_core::stats::{cross_corr, cross_cov, estimate_cov, growth_slope, moment_of, TestReport};
use linhop_core::word_combinatorics::{
    check_odd_bound, class_table, exact_moment, exact_moment_via_classes, limit_moment, YLaw,
};
use linhop_core::{PathSet, SeedSpec};
use serde_json::json;

use crate::config::{ExperimentConfig, PathSource};
use crate::output::{fmt_f64, OutputDir};
use crate::CliError;

fn finite_paths(cfg: &ExperimentConfig, coords: &[usize]) -> Result<PathSet, CliError> {
    let ens = run_ensemble(&cfg.model, coords, cfg.replicas, SeedSpec::new(cfg.seed), cfg.tolerances.action)?;
    Ok(ens.paths)
}

fn limit_paths(cfg: &ExperimentConfig, coords: &[usize]) -> Result<PathSet, CliError> {
    let p = cfg.limit_params();
    Ok(sample_limit_paths(
        cfg.model.grid.times(),
        &p,
        &cfg.model.initial_law,
        SeedSpec::new(cfg.seed),
        coords,
        cfg.replicas,
        cfg.tolerances.limit_sampler(&p),
    )?)
}

pub fn simulate(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let paths = finite_paths(cfg, &cfg.coords)?;
    out.write_paths(&paths)?;
    out.write_manifest("simulate", cfg)
}

pub fn limit_sample(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let paths = limit_paths(cfg, &cfg.coords)?;
    out.write_paths(&paths)?;
    out.write_manifest("limit-sample", cfg)
}

/// `covariance.csv`: empirical against theoretical covariance for every pair
/// of grid times `s <= t`.
pub fn compare_cov(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let coord = cfg.compare_cov.coord;
    if coord == 0 || coord > cfg.model.n {
        return Err(CliError::Config(format!("compare_cov.coord {coord} outside 1..={}", cfg.model.n)));
    }
    let paths = match cfg.compare_cov.source {
        PathSource::Finite => finite_paths(cfg, &[coord])?,
        PathSource::Limit => limit_paths(cfg, &[coord])?,
    };
    let p = cfg.limit_params();
    let quad = cfg.tolerances.quadrature();
    let times = cfg.model.grid.times();
    let mut table = out.csv("covariance.csv", &["s", "t", "empirical", "theoretical", "std_error", "z_score"])?;
    for (i, &s) in times.iter().enumerate() {
        for &t in &times[i..] {
            let emp = estimate_cov(&paths, coord, s, t)?;
            let theory = cov_v_limit(s, t, &p, quad)?;
            table.row(&[
                fmt_f64(s),
                fmt_f64(t),
                fmt_f64(emp.value),
                fmt_f64(theory),
                fmt_f64(emp.std_error),
                fmt_f64(emp.z_score(theory)),
            ])?;
        }
    }
    table.finish()?;
    out.write_manifest("compare-cov", cfg)
}

pub fn describe_entry_law(law: &EntryLaw) -> String {
    match *law {
        EntryLaw::Rademacher { sigma } => format!("rademacher(sigma={})", fmt_f64(sigma)),
        EntryLaw::Uniform { sigma } => format!("uniform(sigma={})", fmt_f64(sigma)),
        EntryLaw::TwoPointAsymmetric { sigma, p } => {
            format!("two_point_asymmetric(sigma={},p={})", fmt_f64(sigma), fmt_f64(p))
        }
    }
}

pub fn describe_y_law(law: &InitialLaw) -> String {
    match *law {
        InitialLaw::PointMass { c } => format!("point_mass(c={})", fmt_f64(c)),
        InitialLaw::Uniform { a, b } => format!("uniform(a={},b={})", fmt_f64(a), fmt_f64(b)),
        InitialLaw::TwoPoint { c } => format!("two_point(c={})", fmt_f64(c)),
    }
}

/// `moments.csv` and `classes.csv`: exact finite-N moments of `U_l` next to
/// their large-N limit, and the class-by-class decomposition.
pub fn moments_verify(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let m = &cfg.moments;
    let mut moments = out.csv(
        "moments.csv",
        &["l", "n", "N", "entry_law", "y_law", "exact_moment", "method", "limit_moment", "gap"],
    )?;
    let mut classes = out.csv(
        "classes.csv",
        &[
            "l",
            "n",
            "t",
            "class_id",
            "canonical_sentence",
            "member_count_at_N",
            "term_value",
            "N",
            "entry_law",
            "y_law",
        ],
    )?;
    for case in &m.cases {
        for &big_n in &m.sizes {
            for law in cfg.entry_laws() {
                for y in &m.y_laws {
                    let within = (big_n as f64).powi((case.n * case.l) as i32) <= m.budget.max_terms as f64;
                    let (value, method) = if within {
                        (exact_moment(case.l, case.n, big_n, &law, &YLaw::Iid { law: *y }, &m.budget)?, "direct")
                    } else {
                        (exact_moment_via_classes(case.l, case.n, big_n, &law, y, &m.budget)?, "classes")
                    };
                    let limit = limit_moment(case.l, case.n, law.sigma(), y.second_moment())?;
                    let (law_s, y_s) = (describe_entry_law(&law), describe_y_law(y));
                    moments.row(&[
                        case.l.to_string(),
                        case.n.to_string(),
                        big_n.to_string(),
                        law_s.clone(),
                        y_s.clone(),
                        fmt_f64(value),
                        method.to_string(),
                        fmt_f64(limit),
                        fmt_f64(value - limit),
                    ])?;
                    for row in class_table(case.l, case.n, big_n, &law, y, &m.budget)? {
                        classes.row(&[
                            row.l.to_string(),
                            row.n.to_string(),
                            row.t.to_string(),
                            row.class_id.to_string(),
                            row.canonical_sentence,
                            row.member_count_at_n.to_string(),
                            fmt_f64(row.term_value),
                            big_n.to_string(),
                            law_s.clone(),
                            y_s.clone(),
                        ])?;
                    }
                }
            }
        }
    }
    moments.finish()?;
    classes.finish()?;
    out.write_manifest("moments-verify", cfg)
}

/// One report per odd `n`: the heaviest class found against `floor(n l / 2)`.
pub fn lemma_scan(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let scan = &cfg.lemma_scan;
    let mut reports = Vec::new();
    for case in scan.resolved_cases() {
        let r = check_odd_bound(case.l, case.n, &scan.budget)?;
        let max = r.max_weight_found.unwrap_or(0);
        reports.push(
            TestReport::new("lemma_scan", max as f64, r.bound as f64, r.within_bound()).with_metadata(json!({
                "l": r.l,
                "n": r.n,
                "bound": r.bound,
                "max_weight_found": r.max_weight_found,
                "classes_per_weight": r.classes_per_weight,
                "witnesses": r.witnesses,
            })),
        );
    }
    out.write_reports(&reports)?;
    out.write_manifest("lemma-scan", cfg)
}

/// Cross-correlation between distinct coordinates of the finite network.
pub fn chaos(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let c = &cfg.chaos;
    let mut coords: Vec<usize> = c.pairs.iter().flatten().copied().collect();
    coords.sort_unstable();
    coords.dedup();
    if coords.is_empty() {
        return Err(CliError::Config("chaos.pairs must not be empty".into()));
    }
    if let Some(&[a, b]) = c.pairs.iter().find(|[a, b]| a == b) {
        return Err(CliError::Config(format!("chaos pair [{a}, {b}] repeats a coordinate")));
    }
    let t = c.time.unwrap_or_else(|| cfg.model.grid.horizon());
    let paths = finite_paths(cfg, &coords)?;
    let mut reports = Vec::new();
    for &[a, b] in &c.pairs {
        let corr = cross_corr(&paths, a, b, t)?;
        let cov = cross_cov(&paths, a, b, t)?;
        let threshold = 3.0 * corr.std_error + c.budget;
        reports.push(
            TestReport::new("chaos_cross_corr", corr.value.abs(), threshold, corr.value.abs() <= threshold).with_metadata(
                json!({
                    "coord_a": a,
                    "coord_b": b,
                    "time": t,
                    "corr": corr.value,
                    "corr_std_error": corr.std_error,
                    "cov": cov.value,
                    "cov_std_error": cov.std_error,
                    "replicas": cfg.replicas,
                    "n": cfg.model.n,
                    "gamma": cfg.model.gamma,
                    "seed": cfg.seed,
                }),
            ),
        );
    }
    out.write_reports(&reports)?;
    out.write_manifest("chaos", cfg)
}

/// Growth rate of `log Var V(t)` over a window, from simulation and from the
/// limit covariance, against `2 (sigma - lambda)`.
pub fn longtime(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let lt = &cfg.longtime;
    let window = (lt.window[0], lt.window[1]);
    let paths = finite_paths(cfg, &cfg.coords)?;
    let p = cfg.limit_params();
    let quad = cfg.tolerances.quadrature();
    let times = cfg.model.grid.times();
    let mut empirical = Vec::with_capacity(times.len());
    let mut theoretical = Vec::with_capacity(times.len());
    for &t in times {
        // coordinates are exchangeable, so their variances are pooled
        let mut acc = 0.0;
        for &c in &cfg.coords {
            let xs = paths.samples(c, t)?;
            let m1 = moment_of(&xs, 1)?.value;
            let m2 = moment_of(&xs, 2)?.value;
            acc += (m2 - m1 * m1) * xs.len() as f64 / (xs.len() - 1) as f64;
        }
        empirical.push(acc / cfg.coords.len() as f64);
        theoretical.push(cov_v_limit(t, t, &p, quad)?);
    }
    let mc = growth_slope(times, &empirical, window)?;
    let th = growth_slope(times, &theoretical, window)?;
    let reference = 2.0 * (p.sigma - p.lambda);
    let close = |x: f64, tol: f64| {
        if reference == 0.0 {
            x.abs() <= 0.05
        } else {
            x.signum() == reference.signum() && (x - reference).abs() <= tol * reference.abs()
        }
    };
    let meta = json!({
        "sigma": p.sigma,
        "lambda": p.lambda,
        "window": lt.window,
        "reference_slope": reference,
        "theoretical_slope": th,
        "empirical_slope": mc,
        "times": times,
        "empirical_variance": empirical,
        "theoretical_variance": theoretical,
        "replicas": cfg.replicas,
        "n": cfg.model.n,
        "seed": cfg.seed,
    });
    let reports = vec![
        TestReport::new("longtime_theoretical_slope", th, reference, close(th, 0.1)).with_metadata(meta.clone()),
        TestReport::new("longtime_empirical_slope", mc, reference, close(mc, lt.relative_tolerance)).with_metadata(meta),
    ];
    out.write_reports(&reports)?;
    out.write_manifest("longtime", cfg)
}
