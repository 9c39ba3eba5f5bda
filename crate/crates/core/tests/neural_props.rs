#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;
use neural_rld::error::RldError;
use neural_rld::neural::{
    forward, init_params, layer_widths, load_params, params_from_json, params_to_json, project_rows, save_params, vjp,
    MlpParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_x(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn five_bus_shapes() {
    let sizes = layer_widths(5, &[5, 5, 5], 5);
    assert_eq!(sizes, vec![5, 5, 5, 5, 5]);
    let p = init_params(&sizes, 1.0, 0).unwrap();
    assert_eq!(p.n_layers(), 4);
    for (k, w) in p.weights.iter().enumerate() {
        assert_eq!(w.shape(), (sizes[k + 1], sizes[k]));
    }
    assert_eq!(p.n_params(), 100);
    let p = init_params(&layer_widths(7, &[4, 6], 3), 1.0, 0).unwrap();
    assert_eq!(p.weights.iter().map(|w| w.shape()).collect::<Vec<_>>(), vec![(4, 7), (6, 4), (3, 6)]);
}

#[test]
fn init_is_deterministic_and_projected() {
    let sizes = layer_widths(3, &[8, 8], 2);
    assert_eq!(init_params(&sizes, 1.0, 42).unwrap(), init_params(&sizes, 1.0, 42).unwrap());
    assert_ne!(init_params(&sizes, 1.0, 42).unwrap(), init_params(&sizes, 1.0, 43).unwrap());
    let tiny = init_params(&sizes, 1e-6, 1).unwrap();
    assert!(tiny.max_row_norm() <= 1e-6 * (1.0 + 1e-12));
    assert!(init_params(&[3], 1.0, 0).is_err());
    assert!(init_params(&[3, 0, 2], 1.0, 0).is_err());
    assert!(init_params(&[3, 2], 0.0, 0).is_err());
}

#[test]
fn forward_examples() {
    let mut p = MlpParams::zeros(&[2, 2, 2], 10.0).unwrap();
    p.weights[0] = DMatrix::identity(2, 2);
    p.weights[1] = DMatrix::identity(2, 2);
    assert_eq!(forward(&p, &[1.0, -1.0]).unwrap().0, vec![1.0, 0.0]);
    let z = MlpParams::zeros(&[3, 4, 2], 1.0).unwrap();
    assert_eq!(z.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    assert!(matches!(forward(&p, &[1.0]), Err(RldError::Dimension(_))));
    assert!(matches!(p.predict(&[1.0, 2.0, 3.0]), Err(RldError::Dimension(_))));
}

#[test]
fn trace_matches_relu_and_predict() {
    let p = init_params(&layer_widths(4, &[6, 6], 3), 2.0, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let x = random_x(&mut rng, 4);
        let (u, tr) = forward(&p, &x).unwrap();
        for k in 0..p.n_layers() - 1 {
            for (a, z) in tr.post[k].iter().zip(tr.pre[k].iter()) {
                assert_eq!(*a, z.max(0.0));
            }
        }
        assert_eq!(tr.post.last().unwrap(), tr.pre.last().unwrap());
        assert_eq!(u, p.predict(&x).unwrap());
    }
}

#[test]
fn positive_homogeneity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for seed in 0..50 {
        // Positive hidden weights and inputs keep every hidden unit active.
        let mut p = init_params(&layer_widths(3, &[4, 4], 2), 3.0, seed).unwrap();
        for w in p.weights.iter_mut().take(2) {
            w.apply(|v| *v = v.abs());
        }
        let x: Vec<f64> = random_x(&mut rng, 3).iter().map(|v| v.abs() + 0.01).collect();
        let (u, tr) = forward(&p, &x).unwrap();
        if tr.pre.iter().take(p.n_layers() - 1).flat_map(|v| v.iter()).any(|z| *z <= 0.0) {
            continue;
        }
        checked += 1;
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let u2 = p.predict(&x2).unwrap();
        for (a, b) in u.iter().zip(&u2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
    assert!(checked == 50, "only {checked} draws with all pre-activations positive");
    // Holds for any scale a >= 0 and any x once ReLU masks are accounted for.
    let p = init_params(&layer_widths(3, &[5, 5], 2), 1.0, 9).unwrap();
    for _ in 0..50 {
        let x = random_x(&mut rng, 3);
        let a = rng.random_range(0.0..5.0);
        let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
        for (u, v) in p.predict(&x).unwrap().iter().zip(p.predict(&ax).unwrap()) {
            assert!((a * u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}

#[test]
fn vjp_examples() {
    let p = init_params(&layer_widths(3, &[4], 2), 1.0, 0).unwrap();
    let (_, tr) = forward(&p, &[0.3, -0.2, 0.5]).unwrap();
    for g in vjp(&p, &tr, &[0.0, 0.0]).unwrap() {
        assert!(g.iter().all(|v| *v == 0.0));
    }
    assert!(matches!(vjp(&p, &tr, &[1.0]), Err(RldError::Dimension(_))));

    let lin = init_params(&[3, 2], 1.0, 4).unwrap();
    let x = [0.5, -1.0, 2.0];
    let (_, tr) = forward(&lin, &x).unwrap();
    let g = &vjp(&lin, &tr, &[2.0, -3.0]).unwrap()[0];
    for (j, up) in [2.0, -3.0].iter().enumerate() {
        for i in 0..3 {
            assert_eq!(g[(j, i)], up * x[i]);
        }
    }
}

#[test]
fn vjp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-6;
    let mut entries = 0;
    for seed in 0..10 {
        let p = init_params(&layer_widths(4, &[6], 3), 2.0, seed).unwrap();
        let x = random_x(&mut rng, 4);
        let up = random_x(&mut rng, 3);
        let (_, tr) = forward(&p, &x).unwrap();
        // Skip draws with a hidden unit close to its kink.
        if tr.pre[0].iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let grads = vjp(&p, &tr, &up).unwrap();
        for k in 0..p.n_layers() {
            for idx in 0..p.weights[k].len() {
                let mut plus = p.clone();
                plus.weights[k][idx] += h;
                let mut minus = p.clone();
                minus.weights[k][idx] -= h;
                let fd = (dot(&up, &plus.predict(&x).unwrap()) - dot(&up, &minus.predict(&x).unwrap())) / (2.0 * h);
                let an = grads[k][idx];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "layer {k} entry {idx}: {fd} vs {an}");
                entries += 1;
            }
        }
    }
    assert!(entries > 100);
}

#[test]
fn lipschitz_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w_max = 1.5;
    let sizes = layer_widths(4, &[7, 5], 3);
    let j_max = *sizes.iter().max().unwrap() as f64;
    for seed in 0..20 {
        let p = init_params(&sizes, w_max, seed).unwrap();
        let bound = (w_max * j_max.sqrt()).powi(p.n_layers() as i32);
        for _ in 0..20 {
            let x1 = random_x(&mut rng, 4);
            let x2 = random_x(&mut rng, 4);
            let du: f64 = p.predict(&x1).unwrap().iter().zip(p.predict(&x2).unwrap()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dx: f64 = x1.iter().zip(&x2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(du <= bound * dx + 1e-12);
        }
    }
}

#[test]
fn projection_examples() {
    let mut p = MlpParams::zeros(&[2, 2], 1.0).unwrap();
    p.weights[0] = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.1, 0.0]);
    let q = project_rows(&p);
    assert!((q.weights[0][(0, 0)] - 0.6).abs() < 1e-15 && (q.weights[0][(0, 1)] - 0.8).abs() < 1e-15);
    assert_eq!(q.weights[0][(1, 0)], 0.1);
    assert_eq!(q.weights[0][(1, 1)], 0.0);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = init_params(&layer_widths(5, &[5, 5, 5], 5), 2.0, 11).unwrap();
    let path = dir.path().join("ck.json");
    save_params(&p, &path).unwrap();
    let q = load_params(&path).unwrap();
    assert_eq!(p, q);
    for (a, b) in p.weights.iter().zip(&q.weights) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    let x = [0.1, 0.2, 0.3, 0.4, 0.5];
    assert_eq!(p.predict(&x).unwrap(), q.predict(&x).unwrap());
}

#[test]
fn checkpoint_shape_mismatch_is_version_error() {
    let p = init_params(&layer_widths(3, &[4], 2), 1.0, 0).unwrap();
    let text = params_to_json(&p).replacen("\"layer_sizes\": [\n    3,", "\"layer_sizes\": [\n    2,", 1);
    assert_ne!(text, params_to_json(&p), "edit did not apply");
    assert!(matches!(params_from_json(&text), Err(RldError::Version(_))));
    let text = params_to_json(&p).replace("\"version\": 1", "\"version\": 9");
    assert!(matches!(params_from_json(&text), Err(RldError::Version(_))));
    assert!(matches!(params_from_json("{"), Err(RldError::Parse(_))));
    assert!(matches!(load_params("/nonexistent/ck.json"), Err(RldError::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vjp_is_linear_in_upstream(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let p = init_params(&layer_widths(4, &[5, 5], 3), 2.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = random_x(&mut rng, 4);
        let v1 = random_x(&mut rng, 3);
        let v2 = random_x(&mut rng, 3);
        let mix: Vec<f64> = v1.iter().zip(&v2).map(|(p, q)| a * p + b * q).collect();
        let (_, tr) = forward(&p, &x).unwrap();
        let g1 = vjp(&p, &tr, &v1).unwrap();
        let g2 = vjp(&p, &tr, &v2).unwrap();
        let gm = vjp(&p, &tr, &mix).unwrap();
        for k in 0..g1.len() {
            let expect = &g1[k] * a + &g2[k] * b;
            prop_assert!((&gm[k] - expect).amax() <= 1e-12 * (1.0 + gm[k].amax()));
        }
    }

    #[test]
    fn projection_caps_and_is_idempotent(seed in any::<u64>(), w_max in 0.01f64..5.0, scale in 0.1f64..20.0) {
        let mut p = init_params(&layer_widths(3, &[6, 4], 2), 1e6, seed).unwrap();
        for w in &mut p.weights {
            *w *= scale;
        }
        p.w_max = w_max;
        let q = project_rows(&p);
        prop_assert!(q.max_row_norm() <= w_max * (1.0 + 1e-9));
        prop_assert_eq!(project_rows(&q), q.clone());
        for (wp, wq) in p.weights.iter().zip(&q.weights) {
            for (rp, rq) in wp.row_iter().zip(wq.row_iter()) {
                if rp.norm() <= w_max {
                    prop_assert_eq!(rp, rq);
                } else {
                    prop_assert!((rq.norm() - w_max).abs() <= 1e-12 * w_max);
                }
            }
        }
    }
}
