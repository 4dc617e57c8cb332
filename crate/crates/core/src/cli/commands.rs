use std::path::Path;

use serde::Serialize;

use super::config::{Curve, Format, Preset, RunConfig};
use super::output::{emit, ensure_dir, fmt_num, to_json, Table, SCHEMA_VERSION};
use super::validate::run_checks;
use super::{CliError, CliResult};
use crate::dynamics::{compare_gad_with_master_equation, n12_from_beta, GadComparison, QubitModel};
use crate::metrology::{
    classify_region, cramer_rao_report, maximize_qfi_over_time, optimize_initial_state, qfi_trace, QfiTrace, Scenario,
};
use crate::spectrum::{Bath, Spectrum};

const TRACE_COLUMNS: [&str; 8] = ["t", "F", "F_norm", "p2", "abs_rho12", "dbeta_p2", "alpha", "delta"];

#[derive(Debug, Serialize)]
struct Parameters {
    omega12: f64,
    beta: f64,
    n12: f64,
    gamma: f64,
    pi2: f64,
    lambda: f64,
}

impl Parameters {
    fn new(spectrum: &Spectrum, bath: &Bath) -> CliResult<Self> {
        let model = QubitModel::new(spectrum, bath)?;
        Ok(Self {
            omega12: spectrum.omega12(),
            beta: bath.beta(),
            n12: n12_from_beta(bath.beta(), spectrum.omega12())?,
            gamma: bath.gamma(),
            pi2: model.pi2,
            lambda: model.lambda,
        })
    }
}

#[derive(Debug, Serialize)]
struct InitialState {
    a: f64,
    theta: f64,
    r: f64,
    phi: f64,
    region: &'static str,
}

impl InitialState {
    fn new(sc: &Scenario) -> CliResult<Self> {
        let init = &sc.init;
        Ok(Self {
            a: init.a(),
            theta: init.theta(),
            r: init.r(),
            phi: init.phi(),
            region: classify_region(init.a(), sc.model().pi2)?.code(),
        })
    }
}

#[derive(Debug, Serialize)]
#[allow(non_snake_case)]
struct TraceRow {
    t: f64,
    F: f64,
    F_norm: f64,
    p2: f64,
    abs_rho12: f64,
    dbeta_p2: f64,
    alpha: f64,
    delta: f64,
}

#[derive(Debug, Serialize)]
struct TraceDoc {
    schema_version: &'static str,
    kind: &'static str,
    label: String,
    parameters: Parameters,
    initial_state: InitialState,
    t_max: f64,
    points: usize,
    asymptote: f64,
    trace: Vec<TraceRow>,
}

fn render_trace(label: &str, sc: &Scenario, trace: &QfiTrace, format: Format) -> CliResult<String> {
    let f_inf = trace.asymptote;
    match format {
        Format::Csv => {
            let mut t = Table::new(TRACE_COLUMNS.to_vec());
            for p in &trace.points {
                t.push(
                    [p.t, p.qfi, p.qfi / f_inf, p.p2, p.abs_rho12, p.dbeta_p2, p.alpha, p.delta]
                        .iter()
                        .map(|x| fmt_num(*x))
                        .collect(),
                );
            }
            Ok(t.to_csv())
        }
        Format::Json => {
            let doc = TraceDoc {
                schema_version: SCHEMA_VERSION,
                kind: "trace",
                label: label.to_string(),
                parameters: Parameters::new(&sc.spectrum, &sc.bath)?,
                initial_state: InitialState::new(sc)?,
                t_max: trace.points.last().map_or(0.0, |p| p.t),
                points: trace.points.len(),
                asymptote: f_inf,
                trace: trace
                    .points
                    .iter()
                    .map(|p| TraceRow {
                        t: p.t,
                        F: p.qfi,
                        F_norm: p.qfi / f_inf,
                        p2: p.p2,
                        abs_rho12: p.abs_rho12,
                        dbeta_p2: p.dbeta_p2,
                        alpha: p.alpha,
                        delta: p.delta,
                    })
                    .collect(),
            };
            Ok(to_json(&doc))
        }
    }
}

fn require_dir<'a>(c: &'a RunConfig, why: &str) -> CliResult<&'a Path> {
    let dir = c
        .out()
        .ok_or_else(|| CliError::Config(format!("{why}; give --out <directory>")))?;
    ensure_dir(dir)?;
    Ok(dir)
}

fn write_curves(dir: &Path, prefix: &str, curves: &[Curve], base: &Scenario, c: &RunConfig) -> CliResult<()> {
    let t_max = c.t_max(&base.model());
    for curve in curves {
        let sc = base.with_init(curve.init);
        let trace = qfi_trace(&sc, t_max, c.points())?;
        let name = format!("{prefix}{}.{}", curve.label, c.format().extension());
        emit(Some(&dir.join(name)), &render_trace(&curve.label, &sc, &trace, c.format())?)?;
    }
    Ok(())
}

pub fn trace(c: &RunConfig) -> CliResult<()> {
    let spectrum = c.qubit_spectrum()?;
    let bath = c.bath(&spectrum)?;
    let curves = c.curves()?;
    let base = Scenario::new(spectrum, bath, curves[0].init)?;
    if c.raw.preset.is_some() {
        let dir = require_dir(c, "a preset writes one file per curve")?;
        return write_curves(dir, "", &curves, &base, c);
    }
    let trace = qfi_trace(&base, c.t_max(&base.model()), c.points())?;
    emit(c.out(), &render_trace(&curves[0].label, &base, &trace, c.format())?)
}

#[derive(Debug, Serialize)]
struct OptimizeRow {
    rank: usize,
    a: f64,
    r: f64,
    region: &'static str,
    t_star: f64,
    f_star: f64,
    f_norm: f64,
    asymptotic: bool,
}

#[derive(Debug, Serialize)]
struct OptimizeDoc {
    schema_version: &'static str,
    kind: &'static str,
    parameters: Parameters,
    t_max: f64,
    a_steps: usize,
    r_steps: usize,
    asymptote: f64,
    rows: Vec<OptimizeRow>,
}

pub fn optimize(c: &RunConfig) -> CliResult<()> {
    let spectrum = c.qubit_spectrum()?;
    let bath = c.bath(&spectrum)?;
    let model = QubitModel::new(&spectrum, &bath)?;
    let t_max = c.t_max(&model);
    let (a_steps, r_steps) = c.grid_steps();
    let ranked = optimize_initial_state(&spectrum, &bath, t_max, a_steps, r_steps)?;
    let f_inf = model.thermal_variance();
    let rows = ranked
        .iter()
        .enumerate()
        .map(|(i, o)| {
            Ok(OptimizeRow {
                rank: i + 1,
                a: o.a,
                r: o.r,
                region: classify_region(o.a, model.pi2)?.code(),
                t_star: o.t_star,
                f_star: o.f_star,
                f_norm: o.f_star / f_inf,
                asymptotic: o.asymptotic,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let text = match c.format() {
        Format::Json => to_json(&OptimizeDoc {
            schema_version: SCHEMA_VERSION,
            kind: "optimize",
            parameters: Parameters::new(&spectrum, &bath)?,
            t_max,
            a_steps,
            r_steps,
            asymptote: f_inf,
            rows,
        }),
        Format::Csv => {
            let mut t = Table::new(vec!["rank", "a", "r", "region", "t_star", "f_star", "f_norm", "asymptotic"]);
            for row in rows {
                t.push(vec![
                    row.rank.to_string(),
                    fmt_num(row.a),
                    fmt_num(row.r),
                    row.region.to_string(),
                    fmt_num(row.t_star),
                    fmt_num(row.f_star),
                    fmt_num(row.f_norm),
                    row.asymptotic.to_string(),
                ]);
            }
            t.to_csv()
        }
    };
    emit(c.out(), &text)
}

#[derive(Debug, Serialize)]
struct GadRow {
    n12: f64,
    tau_tilde: f64,
    beta: f64,
    gamma: f64,
    elapsed_time: f64,
    gad_ground: f64,
    gad_excited: f64,
    master_ground: f64,
    master_excited: f64,
    rel_diff_ground: f64,
    rel_diff_excited: f64,
    channel_p1: f64,
    textbook_ground: f64,
}

impl GadRow {
    fn new(g: &GadComparison) -> CliResult<Self> {
        let ch = crate::dynamics::gad_params(g.n12, g.tau_tilde)?;
        Ok(Self {
            n12: g.n12,
            tau_tilde: g.tau_tilde,
            beta: g.beta,
            gamma: g.gamma,
            elapsed_time: g.elapsed_time,
            gad_ground: g.gad[0],
            gad_excited: g.gad[1],
            master_ground: g.master[0],
            master_excited: g.master[1],
            rel_diff_ground: g.relative_difference[0],
            rel_diff_excited: g.relative_difference[1],
            channel_p1: ch.p1,
            textbook_ground: ch.textbook_ground_population(),
        })
    }

    const HEADER: [&'static str; 13] = [
        "n12",
        "tau_tilde",
        "beta",
        "gamma",
        "elapsed_time",
        "gad_ground",
        "gad_excited",
        "master_ground",
        "master_excited",
        "rel_diff_ground",
        "rel_diff_excited",
        "channel_p1",
        "textbook_ground",
    ];

    fn cells(&self) -> Vec<String> {
        [
            self.n12,
            self.tau_tilde,
            self.beta,
            self.gamma,
            self.elapsed_time,
            self.gad_ground,
            self.gad_excited,
            self.master_ground,
            self.master_excited,
            self.rel_diff_ground,
            self.rel_diff_excited,
            self.channel_p1,
            self.textbook_ground,
        ]
        .iter()
        .map(|x| fmt_num(*x))
        .collect()
    }
}

#[derive(Debug, Serialize)]
struct BathSummary {
    label: &'static str,
    parameters: Parameters,
    asymptote: f64,
}

#[derive(Debug, Serialize)]
struct CurveSummary {
    bath: &'static str,
    label: String,
    a: f64,
    theta: f64,
    r: f64,
    t_star: f64,
    f_star: f64,
    f_norm: f64,
    asymptotic: bool,
}

#[derive(Debug, Serialize)]
struct ExperimentDoc {
    schema_version: &'static str,
    kind: &'static str,
    omega12: f64,
    gamma: f64,
    tau_tilde: f64,
    baths: Vec<BathSummary>,
    curves: Vec<CurveSummary>,
    gad_comparison: Vec<GadRow>,
}

pub fn experiment(c: &RunConfig) -> CliResult<()> {
    let user_init = c.raw.a.is_some() || c.raw.theta.is_some();
    let mut raw = c.raw.clone();
    raw.a = None;
    raw.theta = None;
    raw.preset = Some(Preset::CoherentAngles);
    let filled = RunConfig::resolve(raw)?;
    let curves = if user_init { vec![Curve { label: "state".into(), init: c.init()? }] } else { filled.curves()? };

    let spectrum = filled.qubit_spectrum()?;
    let omega12 = spectrum.omega12();
    let gamma = filled.gamma(&spectrum)?;
    let tau_tilde = 2.0 * gamma / omega12;
    let cold = Bath::new(filled.beta(&spectrum)?, gamma)?;
    let n12_hot = filled.raw.n12_hot.unwrap_or(9.5);
    let hot = Bath::new(crate::dynamics::beta_from_n12(n12_hot, omega12)?, gamma)?;

    let dir = require_dir(c, "experiment writes several tables")?;
    let mut summaries = Vec::new();
    let mut baths = Vec::new();
    for (label, bath) in [("cold", cold), ("hot", hot)] {
        let base = Scenario::new(spectrum.clone(), bath, curves[0].init)?;
        write_curves(dir, &format!("{label}_"), &curves, &base, &filled)?;
        let model = base.model();
        let t_max = filled.t_max(&model).max(model.settle_time());
        for curve in &curves {
            let opt = maximize_qfi_over_time(&base.with_init(curve.init), t_max)?;
            summaries.push(CurveSummary {
                bath: label,
                label: curve.label.clone(),
                a: curve.init.a(),
                theta: curve.init.theta(),
                r: curve.init.r(),
                t_star: opt.t_star,
                f_star: opt.f_star,
                f_norm: opt.f_star / model.thermal_variance(),
                asymptotic: opt.asymptotic,
            });
        }
        baths.push(BathSummary {
            label,
            parameters: Parameters::new(&spectrum, &bath)?,
            asymptote: model.thermal_variance(),
        });
    }

    let mut taus = vec![0.01, 0.02, 0.03, 0.04, 0.05, tau_tilde];
    taus.sort_by(f64::total_cmp);
    taus.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut gad = Vec::new();
    for bath in &baths {
        for &tau in &taus {
            let cmp = compare_gad_with_master_equation(bath.parameters.n12, omega12, tau)?;
            gad.push(GadRow::new(&cmp)?);
        }
    }
    let gad_text = match c.format() {
        Format::Csv => {
            let mut t = Table::new(GadRow::HEADER.to_vec());
            for row in &gad {
                t.push(row.cells());
            }
            t.to_csv()
        }
        Format::Json => to_json(&serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "gad_comparison",
            "rows": &gad,
        })),
    };
    emit(Some(&dir.join(format!("gad.{}", c.format().extension()))), &gad_text)?;

    for b in &baths {
        println!(
            "{} bath: n12 = {}, beta = {:.6}, gamma = {}, F_inf = {}",
            b.label,
            fmt_num(b.parameters.n12),
            b.parameters.beta,
            fmt_num(b.parameters.gamma),
            fmt_num(b.asymptote)
        );
    }
    let doc = ExperimentDoc {
        schema_version: SCHEMA_VERSION,
        kind: "experiment",
        omega12,
        gamma,
        tau_tilde,
        baths,
        curves: summaries,
        gad_comparison: gad,
    };
    emit(Some(&dir.join("metadata.json")), &to_json(&doc))
}

#[derive(Debug, Serialize)]
struct EstimateDoc {
    schema_version: &'static str,
    kind: &'static str,
    parameters: Parameters,
    initial_state: InitialState,
    measurement_time: f64,
    m_experiments: u64,
    replicas: usize,
    seed: u64,
    qfi: f64,
    classical_fi: f64,
    bound: f64,
    qfi_bound: f64,
    empirical_variance: Option<f64>,
    ratio: Option<f64>,
    ratio_std_error: Option<f64>,
    rmse: Option<f64>,
    clamped: Option<usize>,
    bound_only: bool,
    no_information: bool,
}

pub fn estimate(c: &RunConfig) -> CliResult<()> {
    let spectrum = c.qubit_spectrum()?;
    let bath = c.bath(&spectrum)?;
    let sc = Scenario::new(spectrum.clone(), bath, c.init()?)?;
    let t = match c.raw.time {
        Some(t) => t,
        None => {
            let model = sc.model();
            maximize_qfi_over_time(&sc, c.t_max(&model).max(model.settle_time()))?.t_star
        }
    };
    let (m, replicas, seed) = (c.m_experiments(), c.replicas(), c.seed());
    let report = cramer_rao_report(&sc, t, m, replicas, seed)?;
    let run = report.run.as_ref();
    let doc = EstimateDoc {
        schema_version: SCHEMA_VERSION,
        kind: "estimate",
        parameters: Parameters::new(&spectrum, &bath)?,
        initial_state: InitialState::new(&sc)?,
        measurement_time: t,
        m_experiments: m,
        replicas,
        seed,
        qfi: report.qfi,
        classical_fi: report.classical_fi,
        bound: report.bound,
        qfi_bound: report.qfi_bound,
        empirical_variance: run.map(|r| r.variance),
        ratio: report.ratio,
        ratio_std_error: report.ratio_std_error,
        rmse: run.map(|r| r.rmse),
        clamped: run.map(|r| r.clamped),
        bound_only: report.bound_only,
        no_information: report.no_information,
    };
    let text = match c.format() {
        Format::Json => to_json(&doc),
        Format::Csv => {
            let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
            let mut t = Table::new(vec![
                "measurement_time",
                "m_experiments",
                "replicas",
                "seed",
                "qfi",
                "classical_fi",
                "bound",
                "qfi_bound",
                "empirical_variance",
                "ratio",
                "ratio_std_error",
                "bound_only",
                "no_information",
            ]);
            t.push(vec![
                fmt_num(doc.measurement_time),
                m.to_string(),
                replicas.to_string(),
                seed.to_string(),
                fmt_num(doc.qfi),
                fmt_num(doc.classical_fi),
                fmt_num(doc.bound),
                fmt_num(doc.qfi_bound),
                opt(doc.empirical_variance),
                opt(doc.ratio),
                opt(doc.ratio_std_error),
                doc.bound_only.to_string(),
                doc.no_information.to_string(),
            ]);
            t.to_csv()
        }
    };
    emit(c.out(), &text)
}

pub fn validate(c: &RunConfig) -> CliResult<()> {
    let outcomes = run_checks(c.seed(), c.raw.inject_fault);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    let mut text = String::new();
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        text.push_str(&format!("{status}  {:width$}  {}\n", o.name, o.detail));
    }
    emit(c.out(), &text)?;
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| match &o.failure {
            Some(f) => format!("{} ({f})", o.name),
            None => o.name.to_string(),
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}
