use std::f64::consts::PI;

use nalgebra::DVector;
use proptest::prelude::*;
use thermometry::dynamics::{propagate_populations, qubit_state, QubitInit};
use thermometry::metrology::Scenario;
use thermometry::qfi::{beta_derivative_qubit, qfi_decomposition, qubit_qfi};
use thermometry::spectrum::{rate_matrix, transition_matrix, Bath, Spectrum};

fn scenario(w: f64, beta: f64, gamma: f64, a: f64, r: f64, phi: f64) -> Scenario {
    Scenario::new(
        Spectrum::qubit(w).unwrap(),
        Bath::new(beta, gamma).unwrap(),
        QubitInit::new(a, r, phi).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decomposition_holds_and_gain_is_nonnegative(
        w in 0.2f64..3.0, beta in 0.1f64..3.0, gamma in 0.1f64..2.0,
        a in 0.0f64..1.0, r in 0.0f64..0.99, phi in 0.0f64..(2.0 * PI), t in 0.01f64..5.0,
    ) {
        let sc = scenario(w, beta, gamma, a, r, phi);
        let rho = qubit_state(&sc.init, &sc.spectrum, &sc.bath, t).unwrap();
        let d = beta_derivative_qubit(&sc.init, &sc.spectrum, &sc.bath, t).unwrap().matrix();
        let res = qfi_decomposition(&rho, &d).unwrap();
        prop_assert!(res.coherence_gain >= -1e-12);
        prop_assert!((res.total - res.diagonal_part - res.coherence_gain).abs() <= 1e-9 * res.total.max(1e-300));
    }

    #[test]
    fn qfi_ignores_initial_phase(
        beta in 0.1f64..3.0, a in 0.0f64..1.0, r in 0.0f64..1.0,
        phi in 0.0f64..(2.0 * PI), t in 0.0f64..5.0,
    ) {
        let f = |p: f64| qubit_qfi(&QubitInit::new(a, r, p).unwrap(), &Spectrum::qubit(1.0).unwrap(), &Bath::new(beta, 1.0).unwrap(), t).unwrap().total;
        prop_assert!((f(phi) - f(0.0)).abs() <= 1e-12 * f(0.0).max(1.0));
    }

    #[test]
    fn propagation_conserves_probability(
        gaps in proptest::collection::vec(0.05f64..2.0, 1..7), beta in 0.1f64..3.0,
        gamma in 0.1f64..2.0, t in 0.0f64..10.0, seed in proptest::collection::vec(0.01f64..1.0, 8),
    ) {
        let mut levels = vec![0.0];
        for g in &gaps {
            levels.push(levels.last().unwrap() + g);
        }
        let n = levels.len();
        let a = transition_matrix(&rate_matrix(&Spectrum::new(levels).unwrap(), &Bath::new(beta, gamma).unwrap()));
        let raw = DVector::from_iterator(n, seed.iter().take(n).copied());
        let p0 = &raw / raw.sum();
        let p = propagate_populations(&a, &p0, t).unwrap().populations;
        prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|x| *x >= -1e-12));
    }
}
