//! Library output against independent reference computations.

mod common;

use std::f64::consts::PI;

use num_complex::Complex64;
use qsvm_core::kernels::{
    feature_hash, normalize, normalize_test, quantum_kernel, read_qkmx, self_kernel, sidecar_path,
    write_qkmx, KernelKind, KernelMatrix, KernelSidecar, Normalization,
};
use qsvm_core::metrics::{auc, evaluate, paired_bootstrap, summarize_deltas};
use qsvm_core::numerics::{Matrix, Rng};
use qsvm_core::statevec::{bsp_state, fidelity, pauli_z_expectations, CircuitConfig, Dof};
use qsvm_core::svc::{decision_scores, predict, train, SvcModel, SvcParams};

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn states_match_dense_circuit_products() {
    let mut rng = Rng::new(11);
    for q in 2..=5 {
        for reps in 1..=3 {
            for three in [false, true] {
                let dof = if three { Dof::Three } else { Dof::One };
                let cfg = CircuitConfig::new(q, reps, dof).unwrap();
                for _ in 0..5 {
                    let u: Vec<f64> = (0..q).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
                    let got = bsp_state(&u, &cfg).unwrap();
                    let want = common::first_column(&common::bsp_unitary(&u, reps, three));
                    assert!(
                        max_diff(got.amplitudes(), &want) < 1e-12,
                        "q={q} reps={reps} dof={dof:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn half_turn_on_first_qubit_lands_on_basis_state_two() {
    // Ry(π) flips qubit 0; the ring CNOTs then carry it to qubit 1 and back
    let cfg = CircuitConfig::simple(2).unwrap();
    let s = bsp_state(&[PI, 0.0], &cfg).unwrap();
    let amps = s.amplitudes();
    assert!((amps[2].norm() - 1.0).abs() < 1e-12);
    for i in [0, 1, 3] {
        assert!(amps[i].norm() < 1e-12);
    }
    let z = pauli_z_expectations(&s);
    assert!((z[0] - 1.0).abs() < 1e-12 && (z[1] + 1.0).abs() < 1e-12);
}

#[test]
fn kernel_entries_match_compute_uncompute() {
    let mut rng = Rng::new(5);
    let x = Matrix::from_fn(6, 3, |_, _| 2.0 * rng.next_f64() - 1.0);
    let y = Matrix::from_fn(4, 3, |_, _| 2.0 * rng.next_f64() - 1.0);
    for (reps, three) in [(1, false), (2, true)] {
        let cfg = CircuitConfig::new(3, reps, if three { Dof::Three } else { Dof::One }).unwrap();
        let k = quantum_kernel(&y, &x, &cfg).unwrap().values;
        for i in 0..4 {
            for j in 0..6 {
                let want = common::compute_uncompute(y.row(i), x.row(j), reps, three);
                assert!((k[(i, j)] - want).abs() < 1e-12);
                let direct = fidelity(
                    &bsp_state(y.row(i), &cfg).unwrap(),
                    &bsp_state(x.row(j), &cfg).unwrap(),
                );
                assert_eq!(k[(i, j)], direct.unwrap());
            }
        }
    }
}

#[test]
fn svc_matches_projected_gradient_dual() {
    for seed in 0..6 {
        let inst = common::svc_instance(60, 25, seed);
        for c in [0.1, 1.0, 10.0] {
            let params = SvcParams {
                tol: 1e-9,
                ..SvcParams::with_c(c)
            };
            let model = train(&inst.k_train, &inst.labels, &params).unwrap();
            assert!(model.converged);
            let oracle = common::qp_oracle(&inst.k_train, &inst.labels, c, 200_000);
            let rel = (model.objective - oracle.objective).abs() / oracle.objective.abs().max(1.0);
            assert!(
                rel < 1e-6,
                "seed {seed} C={c}: {} vs {}",
                model.objective,
                oracle.objective
            );

            let ours = decision_scores(&model, &inst.k_test).unwrap();
            let theirs = common::oracle_scores(&inst.k_test, &inst.labels, &oracle);
            let preds = predict(&model, &inst.k_test).unwrap();
            for ((s, t), p) in ours.iter().zip(&theirs).zip(&preds) {
                assert!(
                    (s - t).abs() < 1e-3 * t.abs().max(1.0),
                    "seed {seed} C={c}: {s} vs {t}"
                );
                assert_eq!(*p, (*s > 0.0) as u8);
            }
        }
    }
}

#[test]
fn single_class_training_gives_constant_model() {
    let k = Matrix::identity(12);
    let model = train(&k, &[1; 12], &SvcParams::default()).unwrap();
    assert_eq!(model.degenerate, Some(1));
    let cross = Matrix::from_fn(3, 12, |i, j| (i + j) as f64);
    assert_eq!(predict(&model, &cross).unwrap(), vec![1, 1, 1]);
}

#[test]
fn svc_model_survives_json() {
    let inst = common::svc_instance(30, 10, 3);
    let model = train(&inst.k_train, &inst.labels, &SvcParams::with_c(2.0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save_json(&path).unwrap();
    let back = SvcModel::load_json(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(
        decision_scores(&back, &inst.k_test).unwrap(),
        decision_scores(&model, &inst.k_test).unwrap()
    );
}

#[test]
fn kernel_files_round_trip_with_sidecar() {
    let mut rng = Rng::new(9);
    let x = Matrix::from_fn(7, 4, |_, _| rng.next_f64());
    let cfg = CircuitConfig::new(4, 2, Dof::Three).unwrap();
    let raw = quantum_kernel(&x, &x, &cfg).unwrap();
    let (k, _) = normalize(&raw, Normalization::Trace).unwrap();
    let side = KernelSidecar {
        kind: k.kind,
        normalization: k.normalization,
        train_trace: k.train_trace,
        circuit: Some(cfg),
        gamma: None,
        feature_hash: feature_hash(&x),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.qkmx");
    write_qkmx(&path, &k, &side).unwrap();
    assert!(sidecar_path(&path).is_file());
    let (back, side_back) = read_qkmx(&path).unwrap();
    assert_eq!(back, k);
    assert_eq!(side_back, Some(side));

    std::fs::remove_file(sidecar_path(&path)).unwrap();
    assert_eq!(read_qkmx(&path).unwrap().1, None);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_qkmx(&path).is_err());
}

#[test]
fn test_blocks_use_training_scale() {
    let mut rng = Rng::new(2);
    let x = Matrix::from_fn(8, 3, |_, _| rng.normal());
    let t = Matrix::from_fn(5, 3, |_, _| rng.normal());
    let train_k = KernelMatrix::raw(x.matmul_transposed(&x).unwrap(), KernelKind::Linear);
    let test_k = KernelMatrix::raw(t.matmul_transposed(&x).unwrap(), KernelKind::Linear);
    let tr = train_k.values.trace();
    let fro = train_k.values.frobenius_norm();
    for (mode, scale) in [(Normalization::Trace, tr), (Normalization::Frobenius, fro)] {
        let (_, stats) = normalize(&train_k, mode).unwrap();
        let k = normalize_test(&test_k, &stats, None).unwrap().values;
        for i in 0..5 {
            for j in 0..8 {
                assert!((k[(i, j)] - test_k.values[(i, j)] / scale).abs() < 1e-15);
            }
        }
    }
    let (_, stats) = normalize(&train_k, Normalization::Cosine).unwrap();
    let t_self = self_kernel(KernelKind::Linear, &t);
    let k = normalize_test(&test_k, &stats, Some(&t_self)).unwrap().values;
    for i in 0..5 {
        for j in 0..8 {
            let want = test_k.values[(i, j)] / (t_self[i] * train_k.values[(j, j)]).sqrt();
            assert!((k[(i, j)] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn metrics_match_counting_oracles() {
    let mut rng = Rng::new(21);
    for _ in 0..200 {
        let n = 2 + rng.below(40);
        let y: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.below(7) as f64).collect();
        let p: Vec<u8> = s.iter().map(|&v| (v > 3.0) as u8).collect();
        assert_eq!(auc(&y, &s).unwrap(), common::auc_pairs(&y, &s));
        let report = evaluate(&y, &p, &s).unwrap();
        assert!((report.f1_minority - common::f1(&y, &p)).abs() < 1e-15);
    }
}

#[test]
fn bootstrap_matches_sequential_replay() {
    let mut rng = Rng::new(4);
    let n = 90;
    let y: Vec<u8> = (0..n).map(|_| (rng.next_f64() < 0.3) as u8).collect();
    let a: Vec<u8> = y
        .iter()
        .map(|&l| if rng.next_f64() < 0.8 { l } else { 1 - l })
        .collect();
    let b: Vec<u8> = y
        .iter()
        .map(|&l| if rng.next_f64() < 0.6 { l } else { 1 - l })
        .collect();
    let r = paired_bootstrap(&y, &a, &b, 2000, 42).unwrap();
    let deltas = common::bootstrap_replay(&y, &a, &b, 2000, 42);
    let observed = common::f1(&y, &a) - common::f1(&y, &b);
    assert_eq!(r, summarize_deltas(observed, &deltas, 42));
    assert_eq!(r.delta_observed, observed);
    let below = deltas.iter().filter(|&&d| d <= 0.0).count();
    assert_eq!(r.p_value, (1 + below) as f64 / 2001.0);
    assert!((r.ci_lo - common::percentile(&deltas, 2.5)).abs() < 1e-12);
    assert!((r.ci_hi - common::percentile(&deltas, 97.5)).abs() < 1e-12);
}
