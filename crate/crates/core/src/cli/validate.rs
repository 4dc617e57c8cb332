//! Runtime invariant suite behind `thermometry validate`.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    beta_from_n12, evolve_state, gad_apply, gad_params, n12_from_beta, state_beta_derivative, DensityMatrix,
    QubitInit,
};
use crate::metrology::{locate_dip, maximize_qfi_over_time, qfi_trace, Scenario};
use crate::qfi::{beta_derivative_qubit, finite_difference_state_derivative, qfi_decomposition, qubit_qfi, thermal_state_derivative};
use crate::spectrum::{
    detailed_balance_residual, rate_matrix, spectral_report, stationary_distribution, thermal_distribution,
    transition_matrix, Bath, Spectrum, TransitionMatrix,
};
use crate::{MaxAbs, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Name of the violated invariant, when more specific than the check.
    pub failure: Option<String>,
}

struct Failure {
    name: String,
    detail: String,
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        let name = match &e {
            crate::Error::ModelIntegrity { check, .. } => check.to_string(),
            crate::Error::Domain(_) => "domain".into(),
            crate::Error::NoStationaryState { .. } => "no-stationary-state".into(),
            crate::Error::KrausCompleteness(_) => "kraus-completeness".into(),
            crate::Error::EstimatorUndefined { .. } => "estimator-undefined".into(),
        };
        Failure { name, detail: e.to_string() }
    }
}

type Check = std::result::Result<String, Failure>;

fn ensure(cond: bool, name: &str, detail: impl FnOnce() -> String) -> std::result::Result<(), Failure> {
    if cond {
        Ok(())
    } else {
        Err(Failure {
            name: name.to_string(),
            detail: detail(),
        })
    }
}

pub(crate) fn random_spectrum(rng: &mut ChaCha8Rng, n: usize) -> Spectrum {
    let mut e = vec![rng.random_range(-1.0..1.0)];
    for _ in 1..n {
        let last = *e.last().expect("non-empty");
        e.push(last + rng.random_range(0.1..2.0));
    }
    Spectrum::new(e).expect("increasing levels")
}

pub(crate) fn random_bath(rng: &mut ChaCha8Rng) -> Bath {
    Bath::new(rng.random_range(0.1..3.0), rng.random_range(0.1..2.0)).expect("positive parameters")
}

pub(crate) fn random_qubit(rng: &mut ChaCha8Rng) -> Scenario {
    let spectrum = Spectrum::qubit(rng.random_range(0.2..3.0)).expect("positive gap");
    let bath = random_bath(rng);
    let init = QubitInit::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..2.0 * PI))
        .expect("valid ranges");
    Scenario::new(spectrum, bath, init).expect("qubit")
}

fn corrupt(a: &TransitionMatrix) -> TransitionMatrix {
    let mut m = a.matrix().clone();
    m[(0, 0)] -= 0.5 * (1.0 + m[(0, 0)].abs());
    TransitionMatrix::from_raw(m).expect("finite square matrix")
}

fn spectral(rng: &mut ChaCha8Rng, inject_fault: bool) -> Check {
    for k in 0..100 {
        let n = 2 + k % 7;
        let s = random_spectrum(rng, n);
        let mut a = transition_matrix(&rate_matrix(&s, &random_bath(rng)));
        if inject_fault {
            a = corrupt(&a);
        }
        let report = spectral_report(&a)?;
        ensure(report.eigenvalues.iter().all(|z| report.in_gershgorin_union(*z, 1e-9)), "gershgorin", || {
            format!("eigenvalue outside the Gershgorin discs for N = {n}")
        })?;
    }
    Ok("100 spectra, N = 2..8: one null eigenvalue, N-1 negative".into())
}

fn stationary(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let s = random_spectrum(rng, 2 + k % 7);
        let b = random_bath(rng);
        let a = transition_matrix(&rate_matrix(&s, &b));
        let pi = thermal_distribution(&s, b.beta())?.pi;
        let kernel = (a.matrix() * &pi).amax();
        worst = worst.max(kernel);
        ensure(kernel <= 1e-12, "stationary-state", || format!("|A pi| = {kernel:e}"))?;
        let null = stationary_distribution(&a)?;
        let gap = (null - &pi).amax();
        ensure(gap <= 1e-10, "stationary-state", || format!("null vector differs from Gibbs by {gap:e}"))?;
    }
    Ok(format!("max |A pi| = {worst:.1e}"))
}

fn detailed_balance(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let s = random_spectrum(rng, 2 + k % 7);
        let b = random_bath(rng);
        let a = transition_matrix(&rate_matrix(&s, &b));
        let res = detailed_balance_residual(&a, &thermal_distribution(&s, b.beta())?.pi);
        worst = worst.max(res);
        ensure(res <= 1e-12, "detailed-balance", || format!("relative violation {res:e}"))?;
    }
    Ok(format!("max relative violation {worst:.1e}"))
}

fn decomposition(rng: &mut ChaCha8Rng) -> Check {
    for _ in 0..100 {
        let sc = random_qubit(rng);
        let t = rng.random_range(0.01..5.0);
        let rho = evolve_state(&sc.spectrum, &sc.bath, &sc.init.density_matrix(), t)?;
        let d = state_beta_derivative(&sc.spectrum, &sc.bath, &sc.init.density_matrix(), t)?;
        qfi_decomposition(&rho, &d)?;
    }
    for _ in 0..20 {
        let s = random_spectrum(rng, 3);
        let b = random_bath(rng);
        let rho0 = random_state3(rng);
        let t = rng.random_range(0.01..5.0);
        let rho = evolve_state(&s, &b, &rho0, t)?;
        let d = state_beta_derivative(&s, &b, &rho0, t)?;
        qfi_decomposition(&rho, &d)?;
    }
    Ok("100 qubit and 20 three-level states: F = F_d + Tr[rho L~^2], gain >= 0".into())
}

/// Random full-rank three-level state `M M† / Tr`.
pub(crate) fn random_state3(rng: &mut ChaCha8Rng) -> DensityMatrix {
    let m = nalgebra::DMatrix::from_fn(3, 3, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let mut p = &m * m.adjoint();
    p /= p.trace();
    let p = (&p + p.adjoint()) * C64::new(0.5, 0.0);
    DensityMatrix::new(p).expect("positive matrix with unit trace")
}

fn derivative_oracle(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let sc = random_qubit(rng);
        let t = rng.random_range(0.0..5.0);
        let an = beta_derivative_qubit(&sc.init, &sc.spectrum, &sc.bath, t)?;
        let fd = finite_difference_state_derivative(&sc, t, 1e-6)?;
        let diff = (an.matrix() - fd.matrix()).max_abs().max((an.alpha - fd.alpha).abs());
        worst = worst.max(diff);
        ensure(diff <= 1e-6, "derivative-oracle", || format!("analytic vs finite difference {diff:e} at t = {t}"))?;
    }
    Ok(format!("100 scenarios, max deviation {worst:.1e}"))
}

fn zero_time(rng: &mut ChaCha8Rng) -> Check {
    for _ in 0..100 {
        let sc = random_qubit(rng);
        let f = qubit_qfi(&sc.init, &sc.spectrum, &sc.bath, 0.0)?.total;
        ensure(f.abs() <= 1e-14, "zero-time-information", || format!("F(0) = {f:e}"))?;
    }
    Ok("F(0) = 0 for 100 scenarios".into())
}

fn quarter(a: f64, r: f64) -> std::result::Result<Scenario, Failure> {
    Ok(Scenario::new(Spectrum::qubit(1.0)?, Bath::new(3f64.ln(), 1.0)?, QubitInit::new(a, r, 0.0)?)?)
}

fn asymptote() -> Check {
    for (a, r) in [(0.0, 0.0), (0.1, 1.0), (0.8, 0.5)] {
        let sc = quarter(a, r)?;
        let t = sc.settle_time();
        let f = qubit_qfi(&sc.init, &sc.spectrum, &sc.bath, t)?.total;
        let rel = (f / 0.1875 - 1.0).abs();
        ensure(rel <= 1e-6, "thermal-asymptote", || format!("F(20/|lambda|) off by {rel:e}"))?;
    }
    Ok("F(20/|lambda|) = omega^2 pi2 (1 - pi2) within 1e-6".into())
}

fn phenotypes() -> Check {
    let cold = quarter(0.1, 0.0)?;
    let t_max = cold.settle_time();
    let opt = maximize_qfi_over_time(&cold, t_max)?;
    ensure(!opt.asymptotic && opt.f_star > cold.asymptote(), "region-phenotypes", || {
        "cold start lacks an interior maximum above the asymptote".into()
    })?;

    let hot = qfi_trace(&quarter(0.35, 0.0)?, t_max, 2048)?;
    let n = hot.normalized();
    ensure(
        n.windows(2).all(|w| w[1] >= w[0] - 1e-10) && n.iter().all(|v| *v <= 1.0 + 1e-10),
        "region-phenotypes",
        || "hot start is not monotone below the asymptote".into(),
    )?;

    let inv = quarter(0.8, 0.0)?;
    let trace = qfi_trace(&inv, t_max, 2048)?;
    let (_, dip) = locate_dip(&inv, &trace).ok_or_else(|| Failure {
        name: "region-phenotypes".into(),
        detail: "inverted start has no dip".into(),
    })?;
    let tail = *trace.normalized().last().expect("non-empty");
    ensure(dip <= 1e-8 * trace.asymptote && (tail - 1.0).abs() <= 1e-6, "region-phenotypes", || {
        format!("inverted dip {dip:e}, tail {tail}")
    })?;
    Ok(format!("cold peak {:.4} F_inf, hot monotone, inverted dip {dip:.1e}", opt.f_star / cold.asymptote()))
}

fn coherence_dominance() -> Check {
    for a in [0.0, 0.1, 0.35, 0.8] {
        let cl = qfi_trace(&quarter(a, 0.0)?, 10.0, 2048)?;
        let qu = qfi_trace(&quarter(a, 1.0)?, 10.0, 2048)?;
        for (x, y) in cl.values().iter().zip(qu.values()) {
            ensure(y >= x - 1e-12, "coherence-dominance", || format!("F(r=1) < F(r=0) at a = {a}"))?;
        }
    }
    Ok("F(r=1) >= F(r=0) on 2048-point grids".into())
}

fn phase_invariance(rng: &mut ChaCha8Rng) -> Check {
    for _ in 0..50 {
        let sc = random_qubit(rng);
        let t = rng.random_range(0.0..5.0);
        let f = |phi: f64| -> std::result::Result<f64, Failure> {
            Ok(qubit_qfi(&sc.init.with_phi(phi)?, &sc.spectrum, &sc.bath, t)?.total)
        };
        let base = f(0.0)?;
        for phi in [PI / 4.0, PI / 2.0, PI] {
            let v = f(phi)?;
            ensure((v - base).abs() <= 1e-12 * base.max(1.0), "phase-invariance", || {
                format!("F changes by {:e} with phi", v - base)
            })?;
        }
    }
    Ok("F independent of phi".into())
}

fn gad() -> Check {
    for n12 in [5.5, 9.5] {
        for tau in [0.01, 0.05, 0.5] {
            let ch = gad_params(n12, tau)?;
            let fp = DensityMatrix::from_populations(&DVector::from_vec(ch.fixed_point().to_vec()))?;
            let out = gad_apply(&ch, &fp)?;
            let drift = (out.matrix() - fp.matrix()).max_abs();
            ensure(drift <= 1e-12, "gad-fixed-point", || format!("fixed point moves by {drift:e}"))?;
        }
    }
    Ok("diag(p1, 1 - p1) invariant, Kraus sets complete".into())
}

fn partial_vs_total() -> Check {
    let s = Spectrum::qubit(1.0)?;
    let b = Bath::new(3f64.ln(), 1.0)?;
    let d_pi2 = thermal_state_derivative(&s, b.beta())?[(1, 1)].re;
    let init = QubitInit::diagonal(0.25)?;
    for t in [0.1, 0.5, 2.0] {
        let d = beta_derivative_qubit(&init, &s, &b, t)?.d_populations[1];
        let expected = (1.0 - (-2.0 * t).exp()) * d_pi2;
        ensure((d - expected).abs() <= 1e-10, "partial-vs-total", || {
            format!("d p2 = {d}, expected {expected} at t = {t}")
        })?;
    }
    Ok("thermal start: d p = (1 - e^{lambda t}) d pi".into())
}

fn unit_round_trip() -> Check {
    for n12 in [0.1, 1.0, 5.5, 9.5, 1e3] {
        let back = n12_from_beta(beta_from_n12(n12, 5.0)?, 5.0)?;
        ensure(((back - n12) / n12).abs() <= 1e-12, "unit-round-trip", || format!("{n12} -> {back}"))?;
    }
    Ok("n12 -> beta -> n12 within 1e-12".into())
}

/// Runs every check with generators seeded from `seed`.
pub fn run_checks(seed: u64, inject_fault: bool) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results: Vec<(&'static str, Check)> = vec![
        ("spectral-report", spectral(&mut rng, inject_fault)),
        ("stationary-state", stationary(&mut rng)),
        ("detailed-balance", detailed_balance(&mut rng)),
        ("decomposition-identity", decomposition(&mut rng)),
        ("derivative-oracle", derivative_oracle(&mut rng)),
        ("zero-time-information", zero_time(&mut rng)),
        ("thermal-asymptote", asymptote()),
        ("region-phenotypes", phenotypes()),
        ("coherence-dominance", coherence_dominance()),
        ("phase-invariance", phase_invariance(&mut rng)),
        ("gad-fixed-point", gad()),
        ("partial-vs-total", partial_vs_total()),
        ("unit-round-trip", unit_round_trip()),
    ];
    results
        .into_iter()
        .map(|(name, r)| match r {
            Ok(detail) => CheckOutcome {
                name,
                passed: true,
                detail,
                failure: None,
            },
            Err(f) => CheckOutcome {
                name,
                passed: false,
                detail: format!("{}: {}", f.name, f.detail),
                failure: Some(f.name),
            },
        })
        .collect()
}
