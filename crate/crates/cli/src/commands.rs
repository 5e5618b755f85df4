use crate::config::{
    default_trials, Coefficients, Command, CostParams, CurveCheckParams, CurveEstimateParams, EstimateParams, GenParams,
    KreissParams, RunConfig, SweepGridParams, SweepRadialParams, VerifyParams,
};
use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use resolvex::estimator::{
    cost_product, estimate, resolve_parameters, EstimateOptions, EstimationConfig, Mode, ParameterRequest,
};
use resolvex::kreiss::kreiss_generated;
use resolvex::matgen::{generate, input_state, GeneratedMatrix, JordanSpec, Problem};
use resolvex::numkit::ComplexVector;
use resolvex::paramcurve::{check_conditions_on, generalized_estimate, radial_search, ConformanceRequest, CurveFamily, FamilySpec};
use resolvex::suites::{mass_sweep, CheckRow};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::Path;

/// What a command produced: the JSON result, long-format rows when the
/// command has a tabular form, and the one-line summary.
pub struct Outcome {
    pub result: Value,
    pub rows: Option<Vec<CheckRow>>,
    pub summary: String,
    /// Set when a verification suite recorded a violated bound.
    pub violations: bool,
}

impl Outcome {
    fn json<T: Serialize>(result: &T, summary: String) -> Result<Self> {
        Ok(Self {
            result: serde_json::to_value(result)?,
            rows: None,
            summary,
            violations: false,
        })
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    match &cfg.command {
        Command::Gen(p) => gen(p, cfg.seed),
        Command::Estimate(p) => estimate_cmd(p, cfg.seed),
        Command::Verify(p) => verify(p, cfg.seed),
        Command::Kreiss(p) => kreiss(p),
        Command::CurveCheck(p) => curve_check(p),
        Command::CurveEstimate(p) => curve_estimate(p, cfg.seed),
        Command::SweepGrid(p) => sweep_grid(p),
        Command::SweepRadial(p) => sweep_radial(p, cfg.seed),
        Command::Cost(p) => cost(p),
    }
}

/// Reads a matrix file: a `gen` report, a bare generated matrix, or a
/// Jordan spec to generate from.
pub fn load_matrix(path: &Path) -> Result<GeneratedMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(inner) = value.get_mut("result") {
        value = inner.take();
    }
    if value.get("matrix").is_some() {
        return serde_json::from_value(value).with_context(|| format!("{} is not a generated matrix", path.display()));
    }
    let spec: JordanSpec = serde_json::from_value(value).with_context(|| {
        format!(
            "{} is neither a generated matrix nor a Jordan spec {{\"blocks\": [[[re,im],d],...], \"transform_cond\": c, \"seed\": s}}",
            path.display()
        )
    })?;
    Ok(generate(&spec)?)
}

fn designated_for(gm: GeneratedMatrix, problem: Problem) -> Result<GeneratedMatrix> {
    if gm.spec.on_curve.is_some() {
        Ok(gm)
    } else {
        Ok(gm.designate_for(problem)?)
    }
}

fn psi_for(gm: &GeneratedMatrix, betas: Option<&Coefficients>) -> Result<ComplexVector> {
    let betas = match betas {
        Some(b) => b.0.clone(),
        None => vec![Complex64::new(1.0, 0.0); gm.designated.len()],
    };
    Ok(input_state(gm, &betas)?.0)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn gen(p: &GenParams, seed: u64) -> Result<Outcome> {
    let mut spec = JordanSpec::new(p.blocks.0.clone(), p.cond, seed);
    if p.identity {
        spec = spec.with_identity_transform();
    }
    if let Some(on) = &p.on_curve {
        spec = spec.with_on_curve(on.clone());
    }
    let gm = generate(&spec)?;
    let summary = format!(
        "gen: dim={} blocks={} cond(T)={:.4} kappa_S={:.4} alpha={}",
        gm.dim(),
        gm.spec.blocks.len(),
        gm.kappa_bar_witness,
        gm.kappa_s,
        gm.alpha
    );
    Outcome::json(&gm, summary)
}

fn estimate_cmd(p: &EstimateParams, seed: u64) -> Result<Outcome> {
    let gm = designated_for(load_matrix(&p.matrix)?, p.problem)?;
    let psi = psi_for(&gm, p.betas.as_ref())?;
    let cfg = resolve_parameters(&ParameterRequest {
        problem: p.problem,
        eps_eig: p.eps_eig,
        eps_st: p.eps_st,
        kappa_s: gm.kappa_s,
        alpha_a: gm.alpha,
        mode: p.mode,
        delta: p.delta,
        a: p.a,
    })?;
    let opts = EstimateOptions {
        samples: p.samples,
        seed,
        solve_mode: p.solve_mode,
        perturb_seed: p.perturb.then(|| seed.wrapping_add(1)),
    };
    let report = estimate(&gm, &psi, &cfg, &opts)?;
    let errors: Vec<String> = report
        .readout
        .iter()
        .flat_map(|r| &r.per_eigen)
        .map(|e| fmt_opt(e.modal_value_error))
        .collect();
    let summary = format!(
        "estimate {}: a={} delta={} modal_errors=[{}] failure_rate={} lemmas={}",
        report.curve,
        cfg.a,
        cfg.delta,
        errors.join(","),
        fmt_opt(report.readout.as_ref().map(|r| r.failure_rate)),
        match (cfg.hypotheses_met(), report.success.all_lemmas_hold) {
            (false, _) => "unchecked (hypotheses unmet)",
            (true, true) => "hold",
            (true, false) => "violated",
        }
    );
    Outcome::json(&report, summary)
}

fn verify(p: &VerifyParams, seed: u64) -> Result<Outcome> {
    let mut reports = Vec::new();
    for s in p.suite.suites() {
        reports.push(s.run(p.trials.unwrap_or_else(|| default_trials(s)), seed)?);
    }
    let checks: usize = reports.iter().map(|r| r.checks).sum();
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    let min_slack = reports
        .iter()
        .flat_map(|r| &r.rows)
        .map(|r| r.slack)
        .fold(f64::INFINITY, f64::min);
    let summary = format!(
        "verify {}: {} checks, {} violations, min slack {:.3e}",
        p.suite, checks, violations, min_slack
    );
    let rows = reports.iter().flat_map(|r| r.rows.clone()).collect();
    Ok(Outcome {
        result: serde_json::to_value(&reports)?,
        rows: Some(rows),
        summary,
        violations: violations > 0,
    })
}

fn kreiss(p: &KreissParams) -> Result<Outcome> {
    let gm = load_matrix(&p.matrix)?;
    let est = kreiss_generated(&gm, p.contour, p.delta)?;
    let summary = format!(
        "kreiss {:?}: delta={} value={:.6} jordan_bound={} samples={}",
        p.contour,
        p.delta,
        est.value,
        fmt_opt(est.analytic_bound),
        est.samples
    )
    .to_lowercase();
    Outcome::json(&est, summary)
}

fn conformance_request(deltas: Vec<f64>, epsilons: Vec<f64>, probes: usize, domain: Option<(f64, f64)>) -> ConformanceRequest {
    ConformanceRequest {
        deltas,
        epsilons,
        t_probes: probes,
        domain,
    }
}

fn curve_check(p: &CurveCheckParams) -> Result<Outcome> {
    let fam = CurveFamily::from_spec(&p.family)?;
    let req = conformance_request(p.deltas.0.clone(), p.epsilons.0.clone(), p.probes, p.domain);
    let report = check_conditions_on(&fam, &req)?;
    let failed = report.failed_conditions();
    let summary = format!(
        "curve check {}: {} (cond1 dev {:.3e}, cond2 R2 {:.3}, cond3 exponent {:.3})",
        report.family,
        if failed.is_empty() { "pass".to_string() } else { format!("fails {}", failed.join(",")) },
        report.cond1_max_rel_deviation,
        report.cond2_r_squared,
        report.cond3_fitted_poly_degree
    );
    Outcome::json(&report, summary)
}

fn curve_estimate(p: &CurveEstimateParams, seed: u64) -> Result<Outcome> {
    let fam = CurveFamily::from_spec(&p.family)?;
    let problem = match p.family {
        FamilySpec::Segment { .. } => Problem::Qere,
        _ => Problem::Qeue,
    };
    let mut gm = load_matrix(&p.matrix)?;
    if fam.is_builtin() {
        gm = designated_for(gm, problem)?;
    }
    let psi = psi_for(&gm, p.betas.as_ref())?;
    let cfg = resolve_parameters(&ParameterRequest {
        problem,
        eps_eig: p.eps_eig,
        eps_st: p.eps_st,
        kappa_s: gm.kappa_s,
        alpha_a: gm.alpha,
        mode: Mode::Feasible,
        delta: Some(p.delta),
        a: Some(p.a),
    })?;
    let conformance = check_conditions_on(&fam, &conformance_request(vec![p.delta], p.epsilons.0.clone(), p.probes, None))?;
    let opts = EstimateOptions {
        samples: p.samples,
        seed,
        ..Default::default()
    };
    let report = match generalized_estimate(&fam, &gm, &psi, &cfg, &opts, Some(&conformance)) {
        Ok(r) => r,
        Err(e) => {
            return Err(anyhow::Error::new(e).context(format!(
                "conformance for {}: {}",
                conformance.family,
                serde_json::to_string(&conformance.failed_conditions())?
            )))
        }
    };
    let errors: Vec<String> = report
        .readout
        .iter()
        .flat_map(|r| &r.per_eigen)
        .map(|e| fmt_opt(e.modal_value_error))
        .collect();
    let summary = format!(
        "curve estimate {}: a={} delta={} modal_errors=[{}]",
        fam.name,
        cfg.a,
        cfg.delta,
        errors.join(",")
    );
    Outcome::json(&json!({ "conformance": conformance, "estimate": report }), summary)
}

fn sweep_grid(p: &SweepGridParams) -> Result<Outcome> {
    let base = load_matrix(&p.matrix)?.spec;
    let rows = mass_sweep(p.problem, &base, &p.conds.0, &p.deltas.0, &p.eps_eigs.0)?;
    let violations = rows.iter().filter(|r| !r.pass).count();
    let summary = format!("sweep grid: {} rows, {} outside their bound", rows.len(), violations);
    Ok(Outcome {
        result: serde_json::to_value(&rows)?,
        rows: Some(rows),
        summary,
        violations: false,
    })
}

fn sweep_radial(p: &SweepRadialParams, seed: u64) -> Result<Outcome> {
    let gm = load_matrix(&p.matrix)?;
    let cfg: EstimationConfig = resolve_parameters(&ParameterRequest {
        problem: Problem::Qeue,
        eps_eig: p.eps_eig,
        eps_st: p.eps_st,
        kappa_s: gm.kappa_s,
        alpha_a: gm.alpha,
        mode: Mode::Feasible,
        delta: Some(p.delta),
        a: Some(p.a),
    })?;
    let opts = EstimateOptions {
        samples: p.samples,
        seed,
        ..Default::default()
    };
    let search = radial_search(&gm, p.r_min, p.r_max, p.k_delta, &cfg, &opts)?;
    if search.entries.is_empty() {
        bail!("no radius k * {} lies in [{}, {}]", p.k_delta, p.r_min, p.r_max);
    }
    let best = search.best.map(|b| &search.entries[b]);
    let summary = format!(
        "sweep radial: {} radii, best r={} mass={} phase={} detected={}",
        search.entries.len(),
        fmt_opt(search.best_radius),
        fmt_opt(best.and_then(|e| e.peak_mass)),
        fmt_opt(best.and_then(|e| e.phase_estimate)),
        search.detected
    );
    Outcome::json(&search, summary)
}

fn cost(p: &CostParams) -> Result<Outcome> {
    let score = cost_product(p.alpha, p.kappa_s, p.kreiss, p.eps_eig, p.eps_st);
    let summary = format!(
        "cost: score={:.3}{}",
        score.score,
        if score.degenerate { " (degenerate: eps_st near 1)" } else { "" }
    );
    Outcome::json(&score, summary)
}
