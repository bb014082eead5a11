use proptest::prelude::*;
use sbscv::envmodel::{
    annihilation, branch_state, characteristic_function, check_truncation, gibbs_weights, make_oscillator_env, EnvModel,
    OscillatorKind,
};
use sbscv::numkit::{c, eigvalsh, max_abs_diff, CMatrix, DensityMatrix, C64};
use sbscv::Error;

#[test]
fn characteristic_function_at_zero() {
    for env in [
        EnvModel::qubit(1.0).unwrap(),
        make_oscillator_env(10, OscillatorKind::Momentum, 0.3).unwrap(),
        make_oscillator_env(10, OscillatorKind::Number, 0.0).unwrap(),
    ] {
        assert_eq!(characteristic_function(&env, 0.0), c(1.0, 0.0));
    }
}

#[test]
fn qubit_closed_form() {
    let q = EnvModel::qubit(1.0).unwrap();
    for s in [-2.0, -0.3, 0.5, 1.7, 4.0] {
        let want = (c(1.0, 0.0) + C64::from_polar(1.0, -s)) / c(2.0, 0.0);
        assert!((characteristic_function(&q, s) - want).norm() < 1e-14);
    }
}

#[test]
fn position_ground_state_against_large_truncation() {
    let small = make_oscillator_env(40, OscillatorKind::Position, 0.0).unwrap();
    let big = make_oscillator_env(120, OscillatorKind::Position, 0.0).unwrap();
    for k in 0..=60 {
        let s = -3.0 + 0.1 * k as f64;
        let a = characteristic_function(&small, s);
        let b = characteristic_function(&big, s);
        assert!((a - b).norm() < 1e-6, "s = {s}");
        // Ground-state position variance is 1/2.
        assert!((b - c((-s * s / 4.0).exp(), 0.0)).norm() < 1e-6, "s = {s}");
    }
}

#[test]
fn number_ground_state_is_eigenstate() {
    let env = make_oscillator_env(12, OscillatorKind::Number, 0.0).unwrap();
    for s in [0.3, 1.0, 5.0, -7.0] {
        assert!((characteristic_function(&env, s) - c(1.0, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn position_ground_state_has_zero_mean() {
    let env = make_oscillator_env(16, OscillatorKind::Position, 0.0).unwrap();
    let m = (env.generator() * env.rho0().mat()).trace();
    assert!(m.norm() < 1e-10);
}

#[test]
fn thermal_weights_are_geometric() {
    let occ = 0.5;
    let env = make_oscillator_env(40, OscillatorKind::Position, occ).unwrap();
    assert!((env.rho0().trace() - 1.0).abs() < 1e-12);
    let mut vals = eigvalsh(env.rho0().mat());
    vals.sort_by(|a, b| b.total_cmp(a));
    let ratio = occ / (1.0 + occ);
    for k in 0..10 {
        assert!((vals[k + 1] / vals[k] - ratio).abs() < 1e-8);
    }
    let mean: f64 = gibbs_weights(40, occ).iter().enumerate().map(|(k, w)| k as f64 * w).sum();
    assert!((mean - occ).abs() < 1e-8);
}

#[test]
fn negative_occupation_rejected() {
    assert!(make_oscillator_env(8, OscillatorKind::Position, -0.1).is_err());
    assert!(make_oscillator_env(2, OscillatorKind::Position, 0.0).is_err());
}

#[test]
fn generators_are_built_from_ladder() {
    let a = annihilation(6);
    let x = make_oscillator_env(6, OscillatorKind::Position, 0.0).unwrap();
    let p = make_oscillator_env(6, OscillatorKind::Momentum, 0.0).unwrap();
    let n = make_oscillator_env(6, OscillatorKind::Number, 0.0).unwrap();
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    assert!(max_abs_diff(x.generator(), &((&a + a.adjoint()) * c(s2, 0.0))) < 1e-15);
    assert!(max_abs_diff(p.generator(), &((a.adjoint() - &a) * c(0.0, s2))) < 1e-15);
    for k in 0..6 {
        assert!((n.generator()[(k, k)] - c(k as f64, 0.0)).norm() < 1e-14);
    }
}

#[test]
fn branch_state_trivial_points() {
    let env = make_oscillator_env(8, OscillatorKind::Position, 0.2).unwrap();
    assert!(max_abs_diff(branch_state(&env, 0.0, 2.0).mat(), env.rho0().mat()) < 1e-14);
    assert!(max_abs_diff(branch_state(&env, 3.0, 0.0).mat(), env.rho0().mat()) < 1e-14);
}

#[test]
fn branch_state_is_conjugation() {
    let q = EnvModel::qubit(0.7).unwrap();
    let psi = sbscv::numkit::CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
    let env = EnvModel::new(q.generator().clone(), 0.7, DensityMatrix::pure(&psi).unwrap()).unwrap();
    let s = 1.3 * 0.4 * 0.7;
    let u = CMatrix::from_diagonal(&sbscv::numkit::CVector::from_vec(vec![c(1.0, 0.0), C64::from_polar(1.0, -s)]));
    let want = &u * env.rho0().mat() * u.adjoint();
    assert!(max_abs_diff(branch_state(&env, 1.3, 0.4).mat(), &want) < 1e-14);
}

#[test]
fn mismatched_generator_rejected() {
    let b = CMatrix::identity(3, 3);
    assert!(matches!(EnvModel::new(b, 1.0, DensityMatrix::maximally_mixed(2)), Err(Error::Dimension(_))));
    let mut nh = CMatrix::identity(2, 2);
    nh[(0, 1)] = c(1.0, 0.0);
    assert!(matches!(EnvModel::new(nh, 1.0, DensityMatrix::maximally_mixed(2)), Err(Error::NotHermitian { .. })));
}

#[test]
fn truncation_check_flags_small_dimension() {
    let env = make_oscillator_env(6, OscillatorKind::Position, 0.0).unwrap();
    let wide: Vec<f64> = (0..=40).map(|k| -8.0 + 0.4 * k as f64).collect();
    assert!(matches!(check_truncation(&env, &wide), Err(Error::Truncation { .. })));
    let narrow: Vec<f64> = (0..=10).map(|k| -0.01 + 0.002 * k as f64).collect();
    assert!(check_truncation(&env, &narrow).is_ok());
    assert!(check_truncation(&EnvModel::qubit(1.0).unwrap(), &wide).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_state_preserves_purity(t in 0.0f64..4.0, x in -5.0f64..5.0, occ in 0.0f64..1.0) {
        let env = make_oscillator_env(10, OscillatorKind::Position, occ).unwrap();
        let r = branch_state(&env, t, x);
        prop_assert!((r.purity() - env.rho0().purity()).abs() < 1e-10);
        prop_assert!((r.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn characteristic_function_is_bounded_and_hermitian(s in -6.0f64..6.0, occ in 0.0f64..2.0) {
        let env = make_oscillator_env(12, OscillatorKind::Momentum, occ).unwrap();
        let g = characteristic_function(&env, s);
        prop_assert!(g.norm() <= 1.0 + 1e-12);
        prop_assert!((characteristic_function(&env, -s) - g.conj()).norm() < 1e-12);
    }
}
