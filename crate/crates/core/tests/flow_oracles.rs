mod oracles;

use ensemble_control::flow::{forward_flow_step, inverse_flow_trajectory};
use ensemble_control::model::RandomCoefficients;
use ensemble_control::{
    build_flow_table, harmonic_oscillator_system, random_timevarying_system, IntegratorConfig,
    LinearEnsembleSystem, ParameterBox, ParameterGrid, TimeGrid,
};
use nalgebra::DMatrix;
use oracles::{expm, max_abs, rotation, simpson};

fn constant_system(a: DMatrix<f64>) -> LinearEnsembleSystem {
    let n = a.nrows();
    LinearEnsembleSystem::from_fns(
        "constant",
        n,
        1,
        1,
        move |_, _| a.clone(),
        move |_, _| DMatrix::zeros(n, 1),
    )
    .unwrap()
}

#[test]
fn oscillator_table_matches_rotation_on_20_by_50_grid() {
    let sys = harmonic_oscillator_system();
    let pgrid = ParameterGrid::new(ParameterBox::interval(-10.0, 10.0).unwrap(), vec![20]).unwrap();
    let tgrid = TimeGrid::new(1.0, 49).unwrap();
    let table = build_flow_table(&sys, &pgrid, &tgrid, &IntegratorConfig::default()).unwrap();
    let mut worst = 0.0f64;
    for j in 0..20 {
        let w = pgrid.point(j)[0];
        for k in 0..=49 {
            let exact = rotation(-w * tgrid.node(k));
            worst = worst.max(max_abs(&(table.inverse_flow(j, k) - exact)));
        }
    }
    assert!(worst <= 1e-6, "max entry error {worst:e}");
}

#[test]
fn constant_flows_match_matrix_exponential() {
    let tgrid = TimeGrid::new(1.0, 20).unwrap();
    for seed in 0..20 {
        let a = RandomCoefficients::from_seed(seed).a0;
        let sys = constant_system(a.clone());
        let psi =
            inverse_flow_trajectory(&sys, &[0.0], &tgrid, &IntegratorConfig::default()).unwrap();
        for (k, p) in psi.iter().enumerate() {
            let exact = expm(&(-&a * tgrid.node(k)));
            let rel = max_abs(&(p - &exact)) / max_abs(&exact);
            assert!(rel <= 1e-6, "seed {seed}, node {k}: relative error {rel:e}");
        }
    }
}

#[test]
fn expm_oracle_reproduces_rotation() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 3.0, 0.0]);
    assert!(max_abs(&(expm(&(a * 0.7)) - rotation(2.1))) < 1e-13);
}

#[test]
fn inverse_flow_undoes_forward_flow() {
    let cfg = IntegratorConfig::default();
    let tgrid = TimeGrid::new(1.0, 10).unwrap();
    for seed in 0..5 {
        let sys = random_timevarying_system(seed);
        for beta in [[0.0, 0.0], [0.01, -0.1], [-0.007, 0.05]] {
            let psi = inverse_flow_trajectory(&sys, &beta, &tgrid, &cfg).unwrap();
            let phi =
                forward_flow_step(&sys, &beta, 0.0, 1.0, &DMatrix::identity(4, 4), &cfg).unwrap();
            let err = max_abs(&(&psi[10] * phi - DMatrix::<f64>::identity(4, 4)));
            assert!(err <= 10.0 * cfg.rel_tol, "seed {seed}: {err:e}");
        }
    }
}

#[test]
fn forward_flows_compose() {
    let cfg = IntegratorConfig::default();
    let sys = random_timevarying_system(3);
    let beta = [0.004, -0.03];
    let id = DMatrix::<f64>::identity(4, 4);
    for (ta, tb, tc) in [(0.0, 0.3, 1.0), (0.1, 0.55, 0.8), (0.25, 0.5, 0.75)] {
        let direct = forward_flow_step(&sys, &beta, ta, tc, &id, &cfg).unwrap();
        let first = forward_flow_step(&sys, &beta, ta, tb, &id, &cfg).unwrap();
        let second = forward_flow_step(&sys, &beta, tb, tc, &id, &cfg).unwrap();
        let rel = max_abs(&(&second * &first - &direct)) / max_abs(&direct);
        assert!(rel <= 1e-5, "({ta}, {tb}, {tc}): {rel:e}");
    }
}

#[test]
fn oscillator_forward_flow_rotates_forward() {
    let sys = harmonic_oscillator_system();
    let id = DMatrix::<f64>::identity(2, 2);
    let phi = forward_flow_step(&sys, &[4.0], 0.0, 0.8, &id, &IntegratorConfig::default()).unwrap();
    assert!(max_abs(&(phi - rotation(3.2))) <= 1e-6);
}

#[test]
fn determinant_follows_liouville() {
    let cfg = IntegratorConfig::default();
    let pgrid = ParameterGrid::new(
        ParameterBox::new(vec![-0.01, -0.1], vec![0.01, 0.1]).unwrap(),
        vec![3, 2],
    )
    .unwrap();
    let tgrid = TimeGrid::new(1.0, 8).unwrap();
    for seed in [0, 7] {
        let sys = random_timevarying_system(seed);
        let table = build_flow_table(&sys, &pgrid, &tgrid, &cfg).unwrap();
        for j in 0..pgrid.len() {
            let beta = pgrid.point(j).to_vec();
            for k in 0..=8 {
                let t = tgrid.node(k);
                let trace_integral = if t == 0.0 {
                    0.0
                } else {
                    simpson(|s| sys.eval_a(s, &beta).trace(), 0.0, t, 2000)
                };
                let expected = (-trace_integral).exp();
                let det = table.inverse_flow(j, k).into_owned().determinant();
                assert!(
                    ((det - expected) / expected).abs() <= 1e-5,
                    "seed {seed}, j {j}, k {k}: det {det} vs {expected}"
                );
            }
        }
    }
}

#[test]
fn tightening_tolerance_moves_entries_little() {
    let sys = harmonic_oscillator_system();
    let pgrid = ParameterGrid::new(ParameterBox::interval(-10.0, 10.0).unwrap(), vec![20]).unwrap();
    let tgrid = TimeGrid::new(1.0, 200).unwrap();
    let loose =
        build_flow_table(&sys, &pgrid, &tgrid, &IntegratorConfig::with_rel_tol(1e-6)).unwrap();
    let tight =
        build_flow_table(&sys, &pgrid, &tgrid, &IntegratorConfig::with_rel_tol(1e-9)).unwrap();
    let diff = loose
        .raw()
        .iter()
        .zip(tight.raw())
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    assert!(diff < 1e-5, "{diff:e}");
}

#[test]
fn tables_are_deterministic() {
    let sys = random_timevarying_system(11);
    let pgrid = ParameterGrid::new(
        ParameterBox::new(vec![-0.01, -0.1], vec![0.01, 0.1]).unwrap(),
        vec![4, 3],
    )
    .unwrap();
    let tgrid = TimeGrid::new(1.0, 100).unwrap();
    let cfg = IntegratorConfig::default();
    let a = build_flow_table(&sys, &pgrid, &tgrid, &cfg).unwrap();
    let b = build_flow_table(&sys, &pgrid, &tgrid, &cfg).unwrap();
    assert_eq!(a, b);
}
