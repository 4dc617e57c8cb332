//! β-derivatives of the evolved state, symmetric logarithmic derivatives (SLD)
//! and quantum Fisher information (QFI).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dynamics::{evolve_state, coherence_decay_rate, DensityMatrix, QubitInit, QubitModel};
use crate::error::{domain, Error, Result};
use crate::metrology::Scenario;
use crate::spectrum::{rate_matrix, thermal_distribution, Bath, Spectrum};
use crate::{MaxAbs, C64};

/// Eigenvalue pairs (and populations) at or below this weight carry no SLD component.
pub const SUPPORT_GUARD: f64 = 1e-12;

/// `∂_β ρ(t)` of a qubit at fixed initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBundle {
    /// `[∂_β ρ11, ∂_β ρ22]`.
    pub d_populations: [f64; 2],
    pub d_rho12: C64,
    /// Logarithmic derivative of the coherence, `∂_β ρ12 = α ρ12`.
    pub alpha: f64,
    /// Population shape factor, `∂_β ρ22 = ∂_β π2 · δ`.
    pub delta: f64,
}

impl DerivativeBundle {
    pub fn zero() -> Self {
        Self {
            d_populations: [0.0; 2],
            d_rho12: C64::new(0.0, 0.0),
            alpha: 0.0,
            delta: 0.0,
        }
    }

    /// Full `2×2` derivative matrix.
    pub fn matrix(&self) -> DMatrix<C64> {
        let [d1, d2] = self.d_populations;
        DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(d1, 0.0), self.d_rho12, self.d_rho12.conj(), C64::new(d2, 0.0)],
        )
    }
}

/// Closed-form qubit state and derivative at one time.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QubitSnapshot {
    pub rho22: f64,
    pub rho12: C64,
    pub bundle: DerivativeBundle,
}

impl QubitSnapshot {
    pub(crate) fn at(model: &QubitModel, init: &QubitInit, t: f64) -> Self {
        let (lambda, gamma, pi2) = (model.lambda, model.gamma, model.pi2);
        let decay = (lambda * t).exp();
        let rho22 = pi2 - decay * (pi2 - init.a());
        let rho12 = model.coherence(init.rho12(), t);
        let d_pi2 = model.d_pi2();
        let delta = 1.0 - decay + 2.0 * t * lambda * lambda * decay * (pi2 - init.a()) / gamma;
        let alpha = -d_pi2 * lambda * lambda * t / gamma;
        let d22 = d_pi2 * delta;
        Self {
            rho22,
            rho12,
            bundle: DerivativeBundle {
                d_populations: [-d22, d22],
                d_rho12: rho12 * alpha,
                alpha,
                delta,
            },
        }
    }

    /// `D = (1 - ρ22) ρ22 - |ρ12|²`, the determinant of the state.
    pub(crate) fn determinant(&self) -> f64 {
        (1.0 - self.rho22) * self.rho22 - self.rho12.norm_sqr()
    }

    pub(crate) fn state_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0 - self.rho22, 0.0),
                self.rho12,
                self.rho12.conj(),
                C64::new(self.rho22, 0.0),
            ],
        )
    }

    /// Closed-form QFI; zero at a pure state, where it is the continuous limit.
    pub(crate) fn qfi(&self) -> f64 {
        let den = self.determinant();
        if den.abs() < SUPPORT_GUARD {
            return 0.0;
        }
        let x = self.rho22;
        let q = self.rho12.norm_sqr();
        let d = self.bundle.d_populations[1];
        let al = self.bundle.alpha;
        (d * d * (1.0 - 4.0 * q) + 4.0 * al * al * x * (1.0 - x) * q - 4.0 * al * (1.0 - 2.0 * x) * d * q)
            / den
    }

    /// Fisher information of the energy measurement.
    pub(crate) fn diagonal_qfi(&self) -> f64 {
        let d = self.bundle.d_populations[1];
        binary_fisher(self.rho22, d)
    }
}

/// `dp² / (p (1 - p))` with the support convention of [`diagonal_qfi`].
fn binary_fisher(p: f64, dp: f64) -> f64 {
    let var = p * (1.0 - p);
    if p <= SUPPORT_GUARD || 1.0 - p <= SUPPORT_GUARD {
        if dp.abs() > SUPPORT_GUARD {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        dp * dp / var
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return domain(format!("time must be finite and non-negative, got {t}"));
    }
    Ok(())
}

/// Analytic qubit derivative bundle.
pub fn beta_derivative_qubit(init: &QubitInit, spectrum: &Spectrum, bath: &Bath, t: f64) -> Result<DerivativeBundle> {
    check_time(t)?;
    let model = QubitModel::new(spectrum, bath)?;
    Ok(QubitSnapshot::at(&model, init, t).bundle)
}

/// Central-difference derivative of the propagated state in β with the initial
/// state held fixed.
pub fn finite_difference_state_derivative(scenario: &Scenario, t: f64, h: f64) -> Result<DerivativeBundle> {
    if !(1e-8..=1e-3).contains(&h) {
        return domain(format!("finite-difference step must lie in [1e-8, 1e-3], got {h}"));
    }
    check_time(t)?;
    let (spectrum, bath) = (&scenario.spectrum, &scenario.bath);
    if spectrum.dim() != 2 {
        return domain(format!("qubit operation needs N = 2, got N = {}", spectrum.dim()));
    }
    let beta = bath.beta();
    if beta <= h {
        return domain(format!("step {h} does not fit below beta = {beta}"));
    }
    let plus = bath.with_beta(beta + h)?;
    let minus = bath.with_beta(beta - h)?;
    let rho0 = scenario.init.density_matrix();
    let hi = evolve_state(spectrum, &plus, &rho0, t)?;
    let lo = evolve_state(spectrum, &minus, &rho0, t)?;
    let d = (hi.matrix() - lo.matrix()) / C64::new(2.0 * h, 0.0);

    // α and δ from unit reference quantities, so they exist even without coherence
    let decay_rate = |b: &Bath| coherence_decay_rate(&rate_matrix(spectrum, b), 0, 1);
    let alpha = -t * (decay_rate(&plus)? - decay_rate(&minus)?) / (2.0 * h);
    let pi2 = |b: f64| thermal_distribution(spectrum, b).map(|th| th.pi[1]);
    let d_pi2 = (pi2(beta + h)? - pi2(beta - h)?) / (2.0 * h);
    let d22 = d[(1, 1)].re;
    Ok(DerivativeBundle {
        d_populations: [d[(0, 0)].re, d22],
        d_rho12: d[(0, 1)],
        alpha,
        delta: d22 / d_pi2,
    })
}

/// QFI of the thermal state, the energy variance `Σ_j (⟨H⟩ - ε_j)² π_j`.
pub fn thermal_qfi(spectrum: &Spectrum, beta: f64) -> Result<f64> {
    let th = thermal_distribution(spectrum, beta)?;
    let mean = th.mean_energy(spectrum);
    Ok(spectrum
        .energies()
        .iter()
        .zip(th.pi.iter())
        .map(|(e, p)| (mean - e).powi(2) * p)
        .sum())
}

/// `∂_β π_j = (⟨H⟩ - ε_j) π_j` as a diagonal matrix.
pub fn thermal_state_derivative(spectrum: &Spectrum, beta: f64) -> Result<DMatrix<C64>> {
    let th = thermal_distribution(spectrum, beta)?;
    let mean = th.mean_energy(spectrum);
    let d = DVector::from_iterator(
        spectrum.dim(),
        spectrum
            .energies()
            .iter()
            .zip(th.pi.iter())
            .map(|(e, p)| C64::new((mean - e) * p, 0.0)),
    );
    Ok(DMatrix::from_diagonal(&d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalQfi {
    /// `+∞` when divergent.
    pub value: f64,
    /// Some empty level carries a non-zero derivative.
    pub divergent: bool,
}

/// `F_d = Σ_k dp_k² / p_k` over the populated levels.
pub fn diagonal_qfi(p: &DVector<f64>, dp: &DVector<f64>) -> Result<DiagonalQfi> {
    if p.len() != dp.len() {
        return domain(format!("{} populations but {} derivatives", p.len(), dp.len()));
    }
    if p.iter().chain(dp.iter()).any(|x| !x.is_finite()) {
        return domain("populations and derivatives must be finite");
    }
    if p.iter().any(|x| *x < -SUPPORT_GUARD) || (p.sum() - 1.0).abs() > 1e-10 {
        return domain("populations must be non-negative and sum to 1");
    }
    if dp.sum().abs() > 1e-10 * (1.0 + dp.amax()) {
        return domain(format!("derivatives sum to {}, expected 0", dp.sum()));
    }
    let mut value = 0.0;
    let mut divergent = false;
    for (pk, dk) in p.iter().zip(dp.iter()) {
        if *pk > SUPPORT_GUARD {
            value += dk * dk / pk;
        } else if dk.abs() > SUPPORT_GUARD {
            divergent = true;
        }
    }
    Ok(DiagonalQfi {
        value: if divergent { f64::INFINITY } else { value },
        divergent,
    })
}

/// Hermitian solution `L` of `∂_β ρ = (Lρ + ρL)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SldMatrix {
    pub elements: DMatrix<C64>,
    /// The closed-form qubit solution was singular and the eigenbasis solve was used.
    pub fallback: bool,
}

impl SldMatrix {
    pub fn l11(&self) -> f64 {
        self.elements[(0, 0)].re
    }

    pub fn l22(&self) -> f64 {
        self.elements[(1, 1)].re
    }

    pub fn l12(&self) -> C64 {
        self.elements[(0, 1)]
    }

    /// Frobenius norm of `∂_β ρ - (Lρ + ρL)/2`.
    pub fn lyapunov_residual(&self, rho: &DensityMatrix, drho: &DMatrix<C64>) -> f64 {
        let l = &self.elements;
        let anti = (l * rho.matrix() + rho.matrix() * l) * C64::new(0.5, 0.0);
        (drho - anti).norm()
    }

    /// `Tr[∂_β ρ · L]`.
    pub fn qfi(&self, drho: &DMatrix<C64>) -> f64 {
        (drho * &self.elements).trace().re
    }
}

fn check_derivative(rho: &DensityMatrix, drho: &DMatrix<C64>) -> Result<()> {
    if drho.nrows() != rho.dim() || drho.ncols() != rho.dim() {
        return domain(format!(
            "derivative is {}x{}, state has dimension {}",
            drho.nrows(),
            drho.ncols(),
            rho.dim()
        ));
    }
    let scale = 1.0 + drho.max_abs();
    let herm = (drho - drho.adjoint()).max_abs();
    if herm > 1e-12 * scale {
        return domain(format!("state derivative is not Hermitian (defect {herm:e})"));
    }
    if drho.trace().norm() > 1e-10 * scale {
        return domain(format!("state derivative has trace {}, expected 0", drho.trace()));
    }
    Ok(())
}

/// Eigenbasis solution `L_mn = 2 (∂_β ρ)_mn / (p_m + p_n)`.
pub fn sld_general(rho: &DensityMatrix, drho: &DMatrix<C64>) -> Result<SldMatrix> {
    check_derivative(rho, drho)?;
    let eig = SymmetricEigen::new(rho.hermitian_part());
    let u = &eig.eigenvectors;
    let p = &eig.eigenvalues;
    let mut l = u.adjoint() * drho * u;
    let n = rho.dim();
    for m in 0..n {
        for k in 0..n {
            let w = p[m] + p[k];
            l[(m, k)] = if w > SUPPORT_GUARD {
                l[(m, k)] * (2.0 / w)
            } else {
                C64::new(0.0, 0.0)
            };
        }
    }
    let l = u * l * u.adjoint();
    Ok(SldMatrix {
        elements: (&l + l.adjoint()) * C64::new(0.5, 0.0),
        fallback: false,
    })
}

/// Closed-form qubit SLD with common denominator `D = (1 - ρ22) ρ22 - |ρ12|²`.
pub fn qubit_sld(init: &QubitInit, spectrum: &Spectrum, bath: &Bath, t: f64) -> Result<SldMatrix> {
    check_time(t)?;
    let model = QubitModel::new(spectrum, bath)?;
    Ok(sld_from_snapshot(&QubitSnapshot::at(&model, init, t)))
}

fn sld_from_snapshot(s: &QubitSnapshot) -> SldMatrix {
    let den = s.determinant();
    if den.abs() < SUPPORT_GUARD {
        let rho = DensityMatrix::new(s.state_matrix())
            .and_then(|rho| sld_general(&rho, &s.bundle.matrix()));
        let mut sld = match rho {
            Ok(sld) => sld,
            // a pure state produced by the closed form is always valid
            Err(_) => SldMatrix {
                elements: DMatrix::zeros(2, 2),
                fallback: true,
            },
        };
        sld.fallback = true;
        return sld;
    }
    let x = s.rho22;
    let q = s.rho12.norm_sqr();
    let d = s.bundle.d_populations[1];
    let al = s.bundle.alpha;
    let l11 = (2.0 * d * q - 2.0 * al * x * q - x * d) / den;
    let l22 = (-2.0 * d * q - 2.0 * al * (1.0 - x) * q + (1.0 - x) * d) / den;
    let l12 = s.rho12 * ((2.0 * al * x * (1.0 - x) - (1.0 - 2.0 * x) * d) / den);
    SldMatrix {
        elements: DMatrix::from_row_slice(2, 2, &[C64::new(l11, 0.0), l12, l12.conj(), C64::new(l22, 0.0)]),
        fallback: false,
    }
}

/// QFI split into its diagonal part and the coherence gain `Tr[ρ L̃²]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QfiResult {
    pub total: f64,
    pub diagonal_part: f64,
    pub coherence_gain: f64,
    pub sld: SldMatrix,
    /// The state is pure and the QFI was taken as its continuous limit.
    pub pure: bool,
}

/// Closed-form qubit QFI.
pub fn qubit_qfi(init: &QubitInit, spectrum: &Spectrum, bath: &Bath, t: f64) -> Result<QfiResult> {
    check_time(t)?;
    let model = QubitModel::new(spectrum, bath)?;
    let s = QubitSnapshot::at(&model, init, t);
    let pure = s.determinant().abs() < SUPPORT_GUARD;
    let total = s.qfi();
    let diagonal_part = if pure { 0.0 } else { s.diagonal_qfi() };
    let coherence_gain = total - diagonal_part;
    if coherence_gain < -1e-12 * total.abs().max(1.0) {
        return Err(Error::ModelIntegrity {
            check: "coherence-gain",
            detail: format!("negative coherence gain {coherence_gain:e} at t = {t}"),
        });
    }
    Ok(QfiResult {
        total,
        diagonal_part,
        coherence_gain,
        sld: sld_from_snapshot(&s),
        pure,
    })
}

/// General decomposition `F = F_d + Tr[ρ L̃²]` with `L̃ = L - L_d`.
pub fn qfi_decomposition(rho: &DensityMatrix, drho: &DMatrix<C64>) -> Result<QfiResult> {
    let sld = sld_general(rho, drho)?;
    let n = rho.dim();
    let p = rho.populations();
    let dp = drho.diagonal().map(|z| z.re);
    let ld = DVector::from_iterator(
        n,
        p.iter()
            .zip(dp.iter())
            .map(|(pk, dk)| if *pk > SUPPORT_GUARD { dk / pk } else { 0.0 }),
    );
    let diagonal_part: f64 = p.iter().zip(ld.iter()).map(|(pk, lk)| pk * lk * lk).sum();
    let l_tilde = &sld.elements - DMatrix::from_diagonal(&ld.map(|x| C64::new(x, 0.0)));
    let coherence_gain = (rho.matrix() * &l_tilde * &l_tilde).trace().re;
    let total = sld.qfi(drho);
    let defect = (total - diagonal_part - coherence_gain).abs();
    if defect > 1e-9 * total.abs().max(1e-5) {
        return Err(Error::ModelIntegrity {
            check: "qfi-decomposition",
            detail: format!("F = {total:e} but F_d + gain = {:e}", diagonal_part + coherence_gain),
        });
    }
    if coherence_gain < -1e-12 {
        return Err(Error::ModelIntegrity {
            check: "coherence-gain",
            detail: format!("negative coherence gain {coherence_gain:e}"),
        });
    }
    Ok(QfiResult {
        total,
        diagonal_part,
        coherence_gain,
        sld,
        pure: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{qubit_state, thermal_state};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quarter() -> (Spectrum, Bath) {
        (Spectrum::qubit(1.0).unwrap(), Bath::new(3f64.ln(), 1.0).unwrap())
    }

    fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
        let omega = rng.random_range(0.2..3.0);
        let beta = rng.random_range(0.1..3.0);
        let gamma = rng.random_range(0.1..2.0);
        let init = QubitInit::new(
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..6.0),
        )
        .unwrap();
        Scenario::new(Spectrum::qubit(omega).unwrap(), Bath::new(beta, gamma).unwrap(), init).unwrap()
    }

    #[test]
    fn derivative_bundle_examples() {
        let (s, b) = quarter();
        let zero = beta_derivative_qubit(&QubitInit::new(0.3, 1.0, 0.4).unwrap(), &s, &b, 0.0).unwrap();
        assert_eq!(zero.alpha, 0.0);
        assert_eq!(zero.delta, 0.0);
        assert_eq!(zero.d_populations, [0.0, 0.0]);
        assert_eq!(zero.d_rho12.norm(), 0.0);

        let late = beta_derivative_qubit(&QubitInit::new(0.3, 1.0, 0.4).unwrap(), &s, &b, 40.0).unwrap();
        assert!((late.delta - 1.0).abs() < 1e-12);
        assert!(late.d_rho12.norm() < 1e-12);
        assert_relative_eq!(late.d_populations[1], -0.1875, max_relative = 1e-10);

        let one = beta_derivative_qubit(&QubitInit::diagonal(0.0).unwrap(), &s, &b, 1.0).unwrap();
        let e2 = (-2.0f64).exp();
        assert_relative_eq!(one.delta, 1.0 + e2, max_relative = 1e-13);
        assert_relative_eq!(one.d_populations[1].abs(), 0.21288, max_relative = 1e-4);
        assert_eq!(one.d_populations[0], -one.d_populations[1]);

        // oracle: central differences of the population propagation
        let h = 1e-6;
        let p2 = |beta: f64| {
            let a = crate::spectrum::transition_matrix(&rate_matrix(&s, &b.with_beta(beta).unwrap()));
            crate::dynamics::propagate_populations(&a, &DVector::from_vec(vec![1.0, 0.0]), 1.0)
                .unwrap()
                .populations[1]
        };
        let fd = (p2(b.beta() + h) - p2(b.beta() - h)) / (2.0 * h);
        assert!((fd - one.d_populations[1]).abs() < 1e-8);
    }

    #[test]
    fn analytic_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let sc = random_scenario(&mut rng);
            let t = rng.random_range(0.0..5.0);
            let an = beta_derivative_qubit(&sc.init, &sc.spectrum, &sc.bath, t).unwrap();
            let fd = finite_difference_state_derivative(&sc, t, 1e-5).unwrap();
            let tol = 1e-6 * (1.0 + an.d_populations[1].abs() + an.alpha.abs());
            assert!((an.d_populations[1] - fd.d_populations[1]).abs() < tol);
            assert!((an.d_populations[0] - fd.d_populations[0]).abs() < tol);
            assert!((an.d_rho12 - fd.d_rho12).norm() < tol);
            assert!((an.alpha - fd.alpha).abs() < tol);
            if t > 0.1 {
                assert!((an.delta - fd.delta).abs() < 1e-5 * (1.0 + an.delta.abs()));
            }
        }
    }

    #[test]
    fn finite_difference_holds_initial_state_fixed() {
        let (s, b) = quarter();
        let sc = Scenario::new(s.clone(), b, QubitInit::diagonal(0.25).unwrap()).unwrap();
        let th = thermal_state_derivative(&s, b.beta()).unwrap();
        let d_pi2 = th[(1, 1)].re;
        for t in [0.2, 1.0, 3.0] {
            let fd = finite_difference_state_derivative(&sc, t, 1e-6).unwrap();
            let factor = 1.0 - (-2.0 * t).exp();
            assert!((fd.d_populations[1] - factor * d_pi2).abs() < 1e-8);
            assert!((fd.d_populations[1] / d_pi2 - factor).abs() < 1e-6);
            assert!(factor < 1.0 - 1e-3);
        }
        assert!(finite_difference_state_derivative(&sc, 0.0, 1e-6).unwrap().d_rho12.norm() == 0.0);
        assert_eq!(finite_difference_state_derivative(&sc, 0.0, 1e-6).unwrap().d_populations, [0.0, 0.0]);
        assert!(finite_difference_state_derivative(&sc, 1.0, 1e-2).is_err());
        assert!(finite_difference_state_derivative(&sc, 1.0, 1e-9).is_err());
    }

    #[test]
    fn thermal_qfi_examples() {
        let (s, b) = quarter();
        assert_relative_eq!(thermal_qfi(&s, b.beta()).unwrap(), 0.1875, max_relative = 1e-14);
        assert!(thermal_qfi(&s, 800.0).unwrap() < 1e-300);

        let s3 = Spectrum::new(vec![0.0, 1.0, 2.0]).unwrap();
        let w: Vec<f64> = (0..3).map(|k| (-(k as f64)).exp()).collect();
        let z: f64 = w.iter().sum();
        let m1: f64 = (0..3).map(|k| k as f64 * w[k] / z).sum();
        let m2: f64 = (0..3).map(|k| (k * k) as f64 * w[k] / z).sum();
        assert_relative_eq!(thermal_qfi(&s3, 1.0).unwrap(), m2 - m1 * m1, max_relative = 1e-13);
    }

    #[test]
    fn diagonal_qfi_examples() {
        let p = DVector::from_vec(vec![0.7, 0.3]);
        assert_eq!(diagonal_qfi(&p, &DVector::zeros(2)).unwrap().value, 0.0);
        let dp = DVector::from_vec(vec![-0.2, 0.2]);
        assert_relative_eq!(diagonal_qfi(&p, &dp).unwrap().value, 0.04 / 0.21, max_relative = 1e-14);

        let s3 = Spectrum::new(vec![0.0, 0.7, 1.9]).unwrap();
        let th = thermal_distribution(&s3, 1.3).unwrap();
        let dth = thermal_state_derivative(&s3, 1.3).unwrap().diagonal().map(|z| z.re);
        let f = diagonal_qfi(&th.pi, &dth).unwrap().value;
        assert!((f - thermal_qfi(&s3, 1.3).unwrap()).abs() < 1e-12);

        let edge = diagonal_qfi(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![-0.1, 0.1])).unwrap();
        assert!(edge.divergent && edge.value.is_infinite());
        assert!(diagonal_qfi(&p, &DVector::from_vec(vec![0.1, 0.2])).is_err());
    }

    #[test]
    fn sld_general_examples() {
        let rho = DensityMatrix::from_populations(&DVector::from_vec(vec![0.6, 0.3, 0.1])).unwrap();
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(-0.2, 0.0), C64::new(0.15, 0.0), C64::new(0.05, 0.0)]));
        let l = sld_general(&rho, &d).unwrap();
        for (k, (dk, pk)) in [(-0.2, 0.6), (0.15, 0.3), (0.05, 0.1)].iter().enumerate() {
            assert_relative_eq!(l.elements[(k, k)].re, dk / pk, max_relative = 1e-12);
        }
        assert!(l.lyapunov_residual(&rho, &d) < 1e-12);

        // thermal SLD is diagonal with entries ⟨H⟩ - ε_j
        let s3 = Spectrum::new(vec![0.0, 1.0, 2.5]).unwrap();
        let th = thermal_state(&s3, 0.8).unwrap();
        let dth = thermal_state_derivative(&s3, 0.8).unwrap();
        let l = sld_general(&th, &dth).unwrap();
        let mean = thermal_distribution(&s3, 0.8).unwrap().mean_energy(&s3);
        let expected = DMatrix::from_diagonal(&DVector::from_iterator(3, s3.energies().iter().map(|e| C64::new(mean - e, 0.0))));
        assert!((l.elements - expected).max_abs() < 1e-10);

        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(0.1, 0.0), C64::new(0.1, 0.0), C64::new(0.0, 0.0)]));
        assert!(sld_general(&rho, &bad).is_err());
    }

    #[test]
    fn qubit_sld_examples() {
        let (s, b) = quarter();
        let init = QubitInit::new(0.1, 1.0, 0.0).unwrap();
        let t = 0.5;
        let sld = qubit_sld(&init, &s, &b, t).unwrap();
        assert!(!sld.fallback);
        let rho = qubit_state(&init, &s, &b, t).unwrap();
        let d = beta_derivative_qubit(&init, &s, &b, t).unwrap().matrix();
        assert!(sld.lyapunov_residual(&rho, &d) < 1e-10);

        let diag = QubitInit::diagonal(0.1).unwrap();
        let sld = qubit_sld(&diag, &s, &b, t).unwrap();
        let st = qubit_state(&diag, &s, &b, t).unwrap();
        let d22 = beta_derivative_qubit(&diag, &s, &b, t).unwrap().d_populations[1];
        assert_eq!(sld.l12().norm(), 0.0);
        assert_relative_eq!(sld.l22(), d22 / st.get(1, 1).re, max_relative = 1e-12);
        assert_relative_eq!(sld.l11(), -d22 / st.get(0, 0).re, max_relative = 1e-12);

        let pure = qubit_sld(&QubitInit::new(0.4, 1.0, 0.0).unwrap(), &s, &b, 0.0).unwrap();
        assert!(pure.fallback);
        assert_eq!(pure.elements.max_abs(), 0.0);
    }

    #[test]
    fn qubit_qfi_limits() {
        let (s, b) = quarter();
        for (a, r, phi) in [(0.0, 0.0, 0.0), (0.4, 1.0, 1.0), (0.8, 0.3, 2.0), (1.0, 0.0, 0.0)] {
            let init = QubitInit::new(a, r, phi).unwrap();
            let f0 = qubit_qfi(&init, &s, &b, 0.0).unwrap();
            assert_eq!(f0.total, 0.0);
            let late = qubit_qfi(&init, &s, &b, 40.0).unwrap();
            assert!((late.total - 0.1875).abs() < 1e-10);
        }
        assert!(qubit_qfi(&QubitInit::new(0.4, 1.0, 0.0).unwrap(), &s, &b, 0.0).unwrap().pure);
    }

    #[test]
    fn coherence_never_hurts() {
        let (s, b) = quarter();
        for a in [0.05, 0.2, 0.35, 0.5, 0.8, 0.95] {
            let cl = QubitInit::diagonal(a).unwrap();
            let qu = QubitInit::new(a, 1.0, 0.0).unwrap();
            for k in 0..200 {
                let t = k as f64 * 0.05;
                let fc = qubit_qfi(&cl, &s, &b, t).unwrap();
                let fq = qubit_qfi(&qu, &s, &b, t).unwrap();
                assert!(fq.total >= fc.total - 1e-12);
                assert!((fq.diagonal_part - fc.total).abs() < 1e-12 * (1.0 + fc.total));
            }
        }
    }

    #[test]
    fn phase_does_not_matter() {
        let (s, b) = quarter();
        for t in [0.1, 0.7, 2.0] {
            let f = |phi| qubit_qfi(&QubitInit::new(0.3, 0.8, phi).unwrap(), &s, &b, t).unwrap().total;
            let base = f(0.0);
            for phi in [0.5, 1.7, 3.0, 5.9] {
                assert!((f(phi) - base).abs() <= 1e-12 * base.max(1.0));
            }
        }
    }

    #[test]
    fn closed_form_qfi_agrees_with_both_solvers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let sc = random_scenario(&mut rng);
            let t = rng.random_range(0.01..4.0);
            let closed = qubit_qfi(&sc.init, &sc.spectrum, &sc.bath, t).unwrap();
            let rho = qubit_state(&sc.init, &sc.spectrum, &sc.bath, t).unwrap();
            let d = beta_derivative_qubit(&sc.init, &sc.spectrum, &sc.bath, t).unwrap().matrix();
            let general = sld_general(&rho, &d).unwrap();
            let via_qubit_sld = closed.sld.qfi(&d);
            let tol = 1e-9 * closed.total.max(1e-12);
            assert!((general.qfi(&d) - closed.total).abs() <= tol, "{} vs {}", general.qfi(&d), closed.total);
            assert!((via_qubit_sld - closed.total).abs() <= tol);
            assert!(general.lyapunov_residual(&rho, &d) <= 1e-9 * (1.0 + d.norm()));
            assert!(closed.sld.lyapunov_residual(&rho, &d) <= 1e-9 * (1.0 + d.norm()));
        }
    }

    #[test]
    fn decomposition_identity_on_random_qubits() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let sc = random_scenario(&mut rng);
            let t = rng.random_range(0.01..4.0);
            let rho = qubit_state(&sc.init, &sc.spectrum, &sc.bath, t).unwrap();
            let d = beta_derivative_qubit(&sc.init, &sc.spectrum, &sc.bath, t).unwrap().matrix();
            let res = qfi_decomposition(&rho, &d).unwrap();
            assert!((res.total - res.diagonal_part - res.coherence_gain).abs() <= 1e-9 * res.total.max(1e-12));
            assert!(res.coherence_gain >= -1e-12);
            let closed = qubit_qfi(&sc.init, &sc.spectrum, &sc.bath, t).unwrap();
            assert!((closed.coherence_gain - res.coherence_gain).abs() <= 1e-9 * closed.total.max(1e-12));
        }
    }

    #[test]
    fn decomposition_without_coherence_has_no_gain() {
        let rho = DensityMatrix::from_populations(&DVector::from_vec(vec![0.5, 0.3, 0.2])).unwrap();
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(0.1, 0.0), C64::new(-0.04, 0.0), C64::new(-0.06, 0.0)]));
        let res = qfi_decomposition(&rho, &d).unwrap();
        assert!(res.coherence_gain.abs() < 1e-14);
    }

    #[test]
    fn three_level_coherent_state_gains() {
        let s = Spectrum::new(vec![0.0, 0.9, 2.1]).unwrap();
        let b = Bath::new(0.8, 0.6).unwrap();
        let mut m = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.3, 0.0), C64::new(0.2, 0.0)]));
        for (i, j, z) in [(0, 1, C64::new(0.2, 0.1)), (0, 2, C64::new(-0.1, 0.15)), (1, 2, C64::new(0.05, 0.1))] {
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
        let rho0 = DensityMatrix::new(m).unwrap();
        for t in [0.2, 0.9, 2.5] {
            let rho = evolve_state(&s, &b, &rho0, t).unwrap();
            let d = crate::dynamics::state_beta_derivative(&s, &b, &rho0, t).unwrap();
            let res = qfi_decomposition(&rho, &d).unwrap();
            assert!(res.coherence_gain > 0.0);
            let direct = (rho.matrix() * &res.sld.elements * &res.sld.elements).trace().re;
            assert!((direct - res.total).abs() < 1e-9 * res.total);
        }
    }

    #[test]
    fn coherent_part_sld_differs_from_excess_sld() {
        // L̃ = L - L_d against the SLD of ρ_coh alone, solved on the support of ρ_coh
        let (s, b) = quarter();
        let init = QubitInit::new(0.3, 1.0, 0.0).unwrap();
        let t = 0.6;
        let rho = qubit_state(&init, &s, &b, t).unwrap();
        let d = beta_derivative_qubit(&init, &s, &b, t).unwrap().matrix();
        let res = qfi_decomposition(&rho, &d).unwrap();
        let l_d = DMatrix::from_diagonal(&rho.populations().zip_map(&d.diagonal().map(|z| z.re), |p, dp| C64::new(dp / p, 0.0)));
        let l_tilde = &res.sld.elements - l_d;

        let coh = rho.coherent_part();
        let mut dcoh = d.clone();
        dcoh.fill_diagonal(C64::new(0.0, 0.0));
        let eig = SymmetricEigen::new(coh.clone());
        let u = &eig.eigenvectors;
        let mut l = u.adjoint() * &dcoh * u;
        for m in 0..2 {
            for k in 0..2 {
                let w = eig.eigenvalues[m] + eig.eigenvalues[k];
                l[(m, k)] = if w.abs() > SUPPORT_GUARD { l[(m, k)] * (2.0 / w) } else { C64::new(0.0, 0.0) };
            }
        }
        let l_coh = u * l * u.adjoint();
        assert!((l_tilde - l_coh).max_abs() > 1e-3);
    }
}
