//! Thermometry on top of the QFI: time traces, optimal measurement times,
//! initial-state scans, region classification and a Monte Carlo
//! Cramér–Rao harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::dynamics::{QubitInit, QubitModel};
use crate::error::{domain, Error, Result};
use crate::qfi::QubitSnapshot;
use crate::spectrum::{Bath, Spectrum};

/// Number of grid points scanned before golden-section refinement.
pub const SCAN_POINTS: usize = 1024;

/// A qubit thermometer in contact with a bath.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spectrum: Spectrum,
    pub bath: Bath,
    pub init: QubitInit,
}

impl Scenario {
    pub fn new(spectrum: Spectrum, bath: Bath, init: QubitInit) -> Result<Self> {
        if spectrum.dim() != 2 {
            return domain(format!("scenario needs a qubit, got N = {}", spectrum.dim()));
        }
        Ok(Self { spectrum, bath, init })
    }

    pub fn model(&self) -> QubitModel {
        QubitModel::new(&self.spectrum, &self.bath).expect("scenario holds a qubit")
    }

    pub fn with_init(&self, init: QubitInit) -> Self {
        Self { init, ..self.clone() }
    }

    pub fn with_bath(&self, bath: Bath) -> Self {
        Self { bath, ..self.clone() }
    }

    /// `F_∞ = ω12² π2 (1 - π2)`.
    pub fn asymptote(&self) -> f64 {
        self.model().thermal_variance()
    }

    /// `20 / |λ|`.
    pub fn settle_time(&self) -> f64 {
        self.model().settle_time()
    }

    pub(crate) fn snapshot(&self, t: f64) -> QubitSnapshot {
        QubitSnapshot::at(&self.model(), &self.init, t)
    }

    fn qfi_at(&self, model: &QubitModel, t: f64) -> f64 {
        QubitSnapshot::at(model, &self.init, t).qfi()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub qfi: f64,
    pub p2: f64,
    pub abs_rho12: f64,
    pub dbeta_p2: f64,
    pub alpha: f64,
    pub delta: f64,
}

/// QFI on a uniform time grid starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QfiTrace {
    pub points: Vec<TracePoint>,
    pub asymptote: f64,
}

impl QfiTrace {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.qfi).collect()
    }

    /// `F / F_∞`.
    pub fn normalized(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.qfi / self.asymptote).collect()
    }

    /// Index and value of the largest sample.
    pub fn argmax(&self) -> (usize, f64) {
        self.points
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p.qfi > best.1 { (i, p.qfi) } else { best })
    }
}

fn uniform_grid(t_max: f64, n_points: usize) -> Vec<f64> {
    let step = t_max / (n_points - 1) as f64;
    (0..n_points)
        .map(|k| if k + 1 == n_points { t_max } else { k as f64 * step })
        .collect()
}

fn check_grid(t_max: f64, n_points: usize) -> Result<()> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return domain(format!("t_max must be positive, got {t_max}"));
    }
    if n_points < 2 {
        return domain(format!("a trace needs at least 2 points, got {n_points}"));
    }
    Ok(())
}

pub fn qfi_trace(scenario: &Scenario, t_max: f64, n_points: usize) -> Result<QfiTrace> {
    check_grid(t_max, n_points)?;
    let model = scenario.model();
    let points = uniform_grid(t_max, n_points)
        .into_iter()
        .map(|t| {
            let s = QubitSnapshot::at(&model, &scenario.init, t);
            TracePoint {
                t,
                qfi: s.qfi(),
                p2: s.rho22,
                abs_rho12: s.rho12.norm(),
                dbeta_p2: s.bundle.d_populations[1],
                alpha: s.bundle.alpha,
                delta: s.bundle.delta,
            }
        })
        .collect();
    Ok(QfiTrace {
        points,
        asymptote: model.thermal_variance(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Colder than the bath, `a < π2`.
    Cold,
    /// Hotter than the bath without inversion, `π2 < a ≤ 1/2`.
    Hot,
    /// Population inversion, `a > 1/2`.
    Inverted,
}

impl Region {
    pub fn code(&self) -> &'static str {
        match self {
            Region::Cold => "C",
            Region::Hot => "H",
            Region::Inverted => "I",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionLabel {
    /// `None` exactly at the thermal population `a = π2`.
    pub region: Option<Region>,
    pub at_thermal: bool,
    pub at_half: bool,
}

impl RegionLabel {
    pub fn code(&self) -> &'static str {
        match self.region {
            Some(r) => r.code(),
            None => "thermal",
        }
    }
}

const BOUNDARY_TOL: f64 = 1e-12;

pub fn classify_region(a: f64, pi2: f64) -> Result<RegionLabel> {
    if !(0.0..=1.0).contains(&a) {
        return domain(format!("a must lie in [0, 1], got {a}"));
    }
    if !(pi2 > 0.0 && pi2 <= 0.5) {
        return domain(format!("pi2 must lie in (0, 1/2], got {pi2}"));
    }
    let at_thermal = (a - pi2).abs() <= BOUNDARY_TOL;
    let at_half = (a - 0.5).abs() <= BOUNDARY_TOL;
    let region = if at_thermal {
        None
    } else if a < pi2 {
        Some(Region::Cold)
    } else if a <= 0.5 || at_half {
        Some(Region::Hot)
    } else {
        Some(Region::Inverted)
    };
    Ok(RegionLabel { region, at_thermal, at_half })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeOptimum {
    pub t_star: f64,
    pub f_star: f64,
    /// The supremum is only approached as `t → ∞`; `t_star` is then `t_max`.
    pub asymptotic: bool,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

/// Grid scan followed by golden-section refinement to `1e-8 t_max`.
pub fn maximize_qfi_over_time(scenario: &Scenario, t_max: f64) -> Result<TimeOptimum> {
    let settle = scenario.settle_time();
    if !(t_max.is_finite() && t_max >= settle * (1.0 - 1e-12)) {
        return domain(format!("t_max = {t_max} is below the settling time 20/|λ| = {settle}"));
    }
    let model = scenario.model();
    let f = |t: f64| scenario.qfi_at(&model, t);
    let grid = uniform_grid(t_max, SCAN_POINTS);
    let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let (best, f_best) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let tail = *values.last().expect("grid is non-empty");
    if f_best - tail <= 1e-6 * model.thermal_variance() {
        return Ok(TimeOptimum {
            t_star: t_max,
            f_star: tail,
            asymptotic: true,
        });
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (t, v) = golden_max(f, lo, hi, 1e-8 * t_max);
    let (t_star, f_star) = if v >= f_best { (t, v) } else { (grid[best], f_best) };
    Ok(TimeOptimum {
        t_star,
        f_star,
        asymptotic: false,
    })
}

/// Smallest QFI between the first interior maximum and the end of the
/// trace, refined by golden-section search.
pub fn locate_dip(scenario: &Scenario, trace: &QfiTrace) -> Option<(f64, f64)> {
    let v = trace.values();
    let t = trace.times();
    let n = v.len();
    let first_max = (1..n.saturating_sub(1)).find(|&i| v[i] >= v[i - 1] && v[i] > v[i + 1])?;
    let (k, _) = v
        .iter()
        .enumerate()
        .skip(first_max + 1)
        .take(n - first_max - 2)
        .fold((0, f64::INFINITY), |b, (i, &x)| if x < b.1 { (i, x) } else { b });
    if k == 0 || k + 1 >= n {
        return None;
    }
    let model = scenario.model();
    let tol = 1e-8 * t[n - 1];
    Some(golden_max(|s| -scenario.qfi_at(&model, s), t[k - 1], t[k + 1], tol)).map(|(s, f)| (s, -f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateOptimum {
    pub a: f64,
    pub r: f64,
    pub t_star: f64,
    pub f_star: f64,
    pub asymptotic: bool,
}

fn linspace01(steps: usize) -> Vec<f64> {
    (0..steps).map(|k| k as f64 / (steps - 1) as f64).collect()
}

/// Exhaustive `(a, r)` scan at `φ = 0`, ranked by the best QFI over time.
pub fn optimize_initial_state(
    spectrum: &Spectrum,
    bath: &Bath,
    t_max: f64,
    a_steps: usize,
    r_steps: usize,
) -> Result<Vec<StateOptimum>> {
    if a_steps < 2 || r_steps < 2 {
        return domain(format!("grid sizes must be at least 2, got ({a_steps}, {r_steps})"));
    }
    let base = Scenario::new(spectrum.clone(), *bath, QubitInit::diagonal(0.0)?)?;
    let pairs: Vec<(f64, f64)> = linspace01(a_steps)
        .into_iter()
        .flat_map(|a| linspace01(r_steps).into_iter().map(move |r| (a, r)))
        .collect();
    let mut rows = pairs
        .into_par_iter()
        .map(|(a, r)| {
            let sc = base.with_init(QubitInit::new(a, r, 0.0)?);
            let opt = maximize_qfi_over_time(&sc, t_max)?;
            Ok(StateOptimum {
                a,
                r,
                t_star: opt.t_star,
                f_star: opt.f_star,
                asymptotic: opt.asymptotic,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|x, y| {
        y.f_star
            .total_cmp(&x.f_star)
            .then(x.a.total_cmp(&y.a))
            .then(x.r.total_cmp(&y.r))
    });
    Ok(rows)
}

/// Fisher information of a projective energy measurement.
pub fn classical_fisher_information(scenario: &Scenario, t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return domain(format!("time must be finite and non-negative, got {t}"));
    }
    Ok(scenario.snapshot(t).diagonal_qfi())
}

fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

fn draw_excited(p2: f64, m: u64, rng: &mut ChaCha8Rng) -> Result<u64> {
    let dist = Binomial::new(m, p2.clamp(0.0, 1.0))
        .map_err(|e| Error::Domain(format!("binomial sampling failed: {e}")))?;
    Ok(dist.sample(rng))
}

/// Number of excited outcomes among `m` energy measurements at time `t`.
pub fn simulate_measurements(scenario: &Scenario, t: f64, m: u64, seed: u64) -> Result<u64> {
    if m == 0 {
        return domain("at least one experiment is required");
    }
    draw_excited(scenario.snapshot(t).rho22, m, &mut replica_rng(seed, 0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleEstimate {
    pub beta_hat: f64,
    /// `k/M` fell outside the range attainable on the bracket.
    pub clamped: bool,
}

const MONOTONICITY_SAMPLES: usize = 65;

/// Inverts `p2(t, β̂) = k/M` by bisection on the bracket. The bath's β in
/// `scenario` is ignored.
pub fn mle_beta(k: u64, m: u64, scenario: &Scenario, t: f64, bracket: (f64, f64)) -> Result<MleEstimate> {
    let (lo, hi) = bracket;
    if m == 0 || k > m {
        return domain(format!("invalid counts k = {k} of M = {m}"));
    }
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return domain(format!("invalid bracket ({lo}, {hi})"));
    }
    let p2 = |beta: f64| -> Result<f64> {
        let sc = scenario.with_bath(scenario.bath.with_beta(beta)?);
        Ok(sc.snapshot(t).rho22)
    };
    let samples = (0..MONOTONICITY_SAMPLES)
        .map(|i| p2(lo + (hi - lo) * i as f64 / (MONOTONICITY_SAMPLES - 1) as f64))
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = samples.windows(2).map(|w| w[1] - w[0]).collect();
    let increasing = diffs.iter().all(|d| *d > 0.0);
    if !increasing && !diffs.iter().all(|d| *d < 0.0) {
        return Err(Error::EstimatorUndefined {
            t,
            reason: format!("p2 is not strictly monotone in beta on [{lo}, {hi}]"),
        });
    }
    let target = k as f64 / m as f64;
    let (p_lo, p_hi) = (samples[0], samples[MONOTONICITY_SAMPLES - 1]);
    let (p_min, p_max) = if increasing { (p_lo, p_hi) } else { (p_hi, p_lo) };
    if target <= p_min || target >= p_max {
        let low_end = (target <= p_min) == increasing;
        return Ok(MleEstimate {
            beta_hat: if low_end { lo } else { hi },
            clamped: true,
        });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-10 {
        let mid = 0.5 * (a + b);
        if (p2(mid)? < target) == increasing {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(MleEstimate {
        beta_hat: 0.5 * (a + b),
        clamped: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRun {
    pub m_experiments: u64,
    pub measurement_time: f64,
    pub seed: u64,
    pub beta_hat: Vec<f64>,
    pub clamped: usize,
    pub variance: f64,
    pub rmse: f64,
}

/// Seeded replicas of the MLE, merged in replica order.
pub fn run_estimation(
    scenario: &Scenario,
    t: f64,
    m: u64,
    replicas: usize,
    seed: u64,
    bracket: (f64, f64),
) -> Result<EstimationRun> {
    if replicas < 2 {
        return domain(format!("at least two replicas are needed, got {replicas}"));
    }
    if m == 0 {
        return domain("at least one experiment is required");
    }
    let p2 = scenario.snapshot(t).rho22;
    let estimates = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let k = draw_excited(p2, m, &mut replica_rng(seed, i))?;
            mle_beta(k, m, scenario, t, bracket)
        })
        .collect::<Result<Vec<_>>>()?;
    let beta_hat: Vec<f64> = estimates.iter().map(|e| e.beta_hat).collect();
    let n = beta_hat.len() as f64;
    let mean = beta_hat.iter().sum::<f64>() / n;
    let variance = beta_hat.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let truth = scenario.bath.beta();
    let rmse = (beta_hat.iter().map(|b| (b - truth).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EstimationRun {
        m_experiments: m,
        measurement_time: t,
        seed,
        clamped: estimates.iter().filter(|e| e.clamped).count(),
        beta_hat,
        variance,
        rmse,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CramerRaoReport {
    pub qfi: f64,
    pub classical_fi: f64,
    /// `1 / (M F_classical)`; infinite when the measurement carries no information.
    pub bound: f64,
    pub qfi_bound: f64,
    /// Absent in bound-only mode or without information.
    pub run: Option<EstimationRun>,
    /// Empirical variance over the bound.
    pub ratio: Option<f64>,
    /// Monte Carlo standard error of the ratio.
    pub ratio_std_error: Option<f64>,
    pub no_information: bool,
    /// Coherent initial state: no estimator saturating the QFI is run.
    pub bound_only: bool,
}

/// Bracket `[β/2, 2β]` searched by the estimator.
pub fn default_bracket(beta: f64) -> (f64, f64) {
    (0.5 * beta, 2.0 * beta)
}

pub fn cramer_rao_report(scenario: &Scenario, t: f64, m: u64, replicas: usize, seed: u64) -> Result<CramerRaoReport> {
    if m == 0 {
        return domain("at least one experiment is required");
    }
    let snap = {
        if !(t.is_finite() && t >= 0.0) {
            return domain(format!("time must be finite and non-negative, got {t}"));
        }
        scenario.snapshot(t)
    };
    let qfi = snap.qfi();
    let classical_fi = snap.diagonal_qfi();
    let mf = m as f64;
    let no_information = !(classical_fi > 1e-300);
    let bound = if no_information { f64::INFINITY } else { 1.0 / (mf * classical_fi) };
    let qfi_bound = if qfi > 1e-300 { 1.0 / (mf * qfi) } else { f64::INFINITY };
    let bound_only = scenario.init.r() > 0.0;
    let mut report = CramerRaoReport {
        qfi,
        classical_fi,
        bound,
        qfi_bound,
        run: None,
        ratio: None,
        ratio_std_error: None,
        no_information,
        bound_only,
    };
    if bound_only || no_information {
        return Ok(report);
    }
    let run = run_estimation(scenario, t, m, replicas, seed, default_bracket(scenario.bath.beta()))?;
    let ratio = run.variance / bound;
    report.ratio_std_error = Some(ratio * (2.0 / (replicas as f64 - 1.0)).sqrt());
    report.ratio = Some(ratio);
    report.run = Some(run);
    Ok(report)
}
