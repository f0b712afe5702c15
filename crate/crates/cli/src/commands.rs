//! The six commands. Each fills a [`RunReport`]; errors carry their exit
//! code through [`CliError`].

use carnot_core::algebra::{check_group_law, validate_grading};
use carnot_core::blowup::{blowup_check, graph_area_levelset, surface_measure};
use carnot_core::factor::{rotational_sweep, spherical_factor, FactorReport};
use carnot_core::metrics::{check_axioms, check_convexity, Worst};
use carnot_core::Group;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::report::{num, RunReport};

pub const DEFAULT_LAW_SAMPLES: usize = 10_000;
pub const DEFAULT_AXIOM_SAMPLES: usize = 100_000;
pub const DEFAULT_CONVEXITY_SAMPLES: usize = 20_000;

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

pub fn check_group(cfg: &ExperimentConfig, report: &mut RunReport, verbose: bool) -> Result<(), CliError> {
    let sc = cfg.structure_constants()?;
    report.header(&["check", "value", "tolerance", "passed"]);
    let structure = validate_grading(&sc);
    let count = structure.violations.len();
    report.row(vec!["structure".into(), count.to_string(), "0".into(), structure.is_ok().to_string()]);
    report.verdict("structure", structure.is_ok(), count as f64, "0 violations (antisymmetry, grading, Jacobi)");
    if !structure.is_ok() {
        report.info("violations", &structure);
        return Ok(());
    }
    let g = Group::new(sc).map_err(|e| CliError::Config(e.to_string()))?;
    report.info("dimension", g.dimension());
    report.info("step", g.step());
    report.info("layer_dims", format!("{:?}", g.layer_dims()));
    report.info("homogeneous_dimension", g.hausdorff_dimension());
    let samples = cfg.samples_or(DEFAULT_LAW_SAMPLES);
    let tol = cfg.group_law.tolerance;
    report.info("samples", samples);
    let laws = check_group_law(&g, samples, cfg.seed, tol);
    for c in &laws.checks {
        if verbose {
            eprintln!("{}: worst error {:e}, ratio {:e}", c.name, c.worst_error, c.worst_ratio);
        }
        report.row(vec![c.name.into(), num(c.worst_error), num(tol), c.passed().to_string()]);
        report.verdict(c.name, c.passed(), c.worst_error, format!("{tol:e} times a norm scale"));
    }
    Ok(())
}

fn witness(w: &Worst) -> String {
    w.witness.iter().map(|p| join(p)).collect::<Vec<_>>().join("; ")
}

pub fn check_distance(cfg: &ExperimentConfig, report: &mut RunReport, _verbose: bool) -> Result<(), CliError> {
    let g = cfg.group()?;
    let d = cfg.distance(&g)?;
    let samples = cfg.samples_or(DEFAULT_AXIOM_SAMPLES);
    report.info("distance", d.name());
    report.info("samples", samples);
    let axioms = check_axioms(&d, samples, cfg.seed);
    report.header(&["axiom", "excess", "passed", "witness"]);
    for (name, w) in axioms.axioms() {
        report.row(vec![name.into(), num(w.excess), (!w.failed()).to_string(), witness(w)]);
        report.verdict(name, !w.failed(), w.excess, "1e-9*(1+scale)");
    }
    if d.convex_ball {
        let n = cfg.convexity_samples.unwrap_or(DEFAULT_CONVEXITY_SAMPLES);
        let c = check_convexity(&d, n, cfg.seed);
        report.row(vec!["convexity".into(), num(c.excess), (!c.failed()).to_string(), witness(&c)]);
        report.verdict("convexity", !c.failed(), c.excess, "1e-9");
    }
    report.info("axioms", axioms.summary());
    Ok(())
}

fn factor_header(report: &mut RunReport, q: usize) {
    let mut cols: Vec<String> = ["case_id", "signature", "beta", "std_error", "gap"].iter().map(|s| s.to_string()).collect();
    cols.extend((0..q).map(|i| format!("argmax_{i}")));
    cols.extend(["seed".to_string(), "n_mc".to_string()]);
    report.header = cols;
}

fn factor_row(report: &mut RunReport, case: usize, signature: &[usize], f: &FactorReport) {
    let sig = signature.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";");
    let mut row = vec![case.to_string(), sig, num(f.beta), num(f.beta_error), num(f.center_gap)];
    row.extend(f.argmax_center.iter().map(|&x| num(x)));
    row.extend([f.seed.to_string(), f.n_mc.to_string()]);
    report.row(row);
}

pub fn beta(cfg: &ExperimentConfig, report: &mut RunReport, verbose: bool) -> Result<(), CliError> {
    let g = cfg.group()?;
    let d = cfg.distance(&g)?;
    let v = cfg.subspace(&g)?;
    let opts = cfg.factor_options();
    let f = spherical_factor(&d, &v, &opts)?;
    if verbose {
        for t in &f.trace {
            eprintln!("start {:?} -> {:?}: {} after {} evaluations", t.start, t.end, t.value, t.evaluations);
        }
    }
    factor_header(report, g.dimension());
    factor_row(report, 0, &v.signature(), &f);
    report.info("distance", d.name());
    report.info("method", f.method.as_str());
    report.info("beta", num(f.beta));
    report.info("beta_error", num(f.beta_error));
    report.info("volume_at_origin", num(f.volume_at_origin));
    report.info("center_gap", num(f.center_gap));
    report.info("gap_error", num(f.gap_error));
    report.info("boundary_argmax", f.boundary_argmax);
    // the maximum sits at the origin for multiradial distances, and for
    // convex balls on normal subgroups
    let predicted = d.is_multiradial() || (d.convex_ball && v.is_subgroup() && v.is_normal());
    if predicted {
        report.verdict("center_gap", f.gap_within(3.0), f.center_gap, format!("3*{}", num(f.gap_error)));
    }
    Ok(())
}

pub fn sweep(cfg: &ExperimentConfig, report: &mut RunReport, verbose: bool) -> Result<(), CliError> {
    let g = cfg.group()?;
    let d = cfg.distance(&g)?;
    let (sig, k) = cfg.signature(&g)?;
    let opts = cfg.factor_options();
    let s = rotational_sweep(&d, &sig, k, &opts)?;
    factor_header(report, g.dimension());
    for (i, c) in s.cases.iter().enumerate() {
        if verbose {
            eprintln!("case {i}: basis {:?}, beta {}", c.basis, c.report.beta);
        }
        factor_row(report, i, sig.dims(), &c.report);
    }
    report.info("distance", d.name());
    report.info("signature", &sig);
    report.info("k", k);
    report.info("mean_beta", num(s.mean));
    report.info("spread", num(s.spread));
    report.info("error_budget", num(s.error_budget()));
    report.verdict("pairwise_spread", s.passed, s.worst_pair_excess, "|beta_a-beta_b| <= 3*(sigma_a+sigma_b)");
    Ok(())
}

pub fn blowup(cfg: &ExperimentConfig, report: &mut RunReport, verbose: bool) -> Result<(), CliError> {
    let g = cfg.group()?;
    let d = cfg.distance(&g)?;
    let patch = cfg.surface(&g)?;
    let (u, opts) = cfg.blowup_options()?;
    let b = blowup_check(&patch, &d, u, &opts)?;
    report.header(&["r", "ratio", "err"]);
    for ((r, ratio), err) in b.curve.radii.iter().zip(&b.curve.ratios).zip(&b.curve.errors) {
        if verbose {
            eprintln!("r = {r}: ratio {ratio} +- {err}");
        }
        report.row(vec![num(*r), num(*ratio), num(*err)]);
    }
    report.info("distance", d.name());
    report.info("point", join(&b.tangent.point));
    report.info("degree", b.tangent.degree);
    report.info("density", num(b.tangent.density));
    if let Some(t) = &b.tangent.tangent {
        let basis: Vec<String> = t.basis_vectors().iter().map(|v| join(v)).collect();
        report.info("tangent_basis", basis.join("; "));
    }
    report.info("limit", num(b.curve.limit));
    report.info("limit_error", num(b.curve.limit_error));
    report.info("beta", num(b.factor.beta));
    report.info("beta_error", num(b.factor.beta_error));
    report.verdict("blowup_density", b.passed, b.gap, num(b.allowed));
    Ok(())
}

pub fn graph_area(cfg: &ExperimentConfig, report: &mut RunReport, _verbose: bool) -> Result<(), CliError> {
    let g = cfg.group()?;
    let d = cfg.distance(&g)?;
    let patch = cfg.surface(&g)?;
    let ga = &cfg.graph_area;
    let area = graph_area_levelset(&patch, &d, ga.n_grid)?;
    let measure = surface_measure(&patch, ga.panels)?;
    let rel = (area - measure).abs() / measure.abs().max(f64::MIN_POSITIVE);
    report.header(&["graph_area", "surface_measure", "rel_diff"]);
    report.row(vec![num(area), num(measure), num(rel)]);
    report.info("distance", d.name());
    report.info("n_grid", ga.n_grid);
    report.info("panels", ga.panels);
    report.info("graph_area", num(area));
    report.verdict("area_cross_check", rel <= ga.rel_tol, rel, ga.rel_tol);
    Ok(())
}
