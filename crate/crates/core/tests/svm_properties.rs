use cogscreen::svm::{train_multiclass, KernelConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Three Gaussian clusters in 2-D, class c centred at 4 * e_c (c < 2) or
/// at (4, 4).
fn clusters(seed: u64, per_class: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = [[4.0, 0.0], [0.0, 4.0], [4.0, 4.0]];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, m) in centres.iter().enumerate() {
        for _ in 0..per_class {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            x.push(vec![m[0] + a, m[1] + b]);
            y.push(c as u8);
        }
    }
    (x, y)
}

fn grid() -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..9 {
        for j in 0..9 {
            out.push(vec![-1.0 + 0.77 * i as f64, -1.0 + 0.77 * j as f64]);
        }
    }
    out
}

fn kernel_strategy() -> impl Strategy<Value = KernelConfig> {
    prop_oneof![Just(KernelConfig::Linear), Just(KernelConfig::Rbf { gamma: 0.1 })]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_ignore_training_order(seed in 0u64..1000, shuffle in any::<u64>(), kernel in kernel_strategy()) {
        let (x, y) = clusters(seed, 15);
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
        let a = train_multiclass(&x, &y, 1.0, kernel).unwrap();
        let b = train_multiclass(&xs, &ys, 1.0, kernel).unwrap();
        prop_assert_eq!(a.predict_all(&grid()).unwrap(), b.predict_all(&grid()).unwrap());
    }

    #[test]
    fn predictions_ignore_affine_rescaling(seed in 0u64..1000, dim in 0usize..2, scale in 0.01f64..100.0, shift in -50.0f64..50.0, kernel in kernel_strategy()) {
        let (x, y) = clusters(seed, 15);
        let rescale = |v: &[f64]| {
            let mut v = v.to_vec();
            v[dim] = v[dim] * scale + shift;
            v
        };
        let xr: Vec<Vec<f64>> = x.iter().map(|v| rescale(v)).collect();
        let g = grid();
        let gr: Vec<Vec<f64>> = g.iter().map(|v| rescale(v)).collect();
        let a = train_multiclass(&x, &y, 10.0, kernel).unwrap();
        let b = train_multiclass(&xr, &y, 10.0, kernel).unwrap();
        prop_assert_eq!(a.predict_all(&g).unwrap(), b.predict_all(&gr).unwrap());
    }
}

#[test]
fn separated_clusters_are_learned_exactly() {
    let (x, y) = clusters(3, 30);
    for kernel in [KernelConfig::Linear, KernelConfig::Rbf { gamma: 0.1 }] {
        let m = train_multiclass(&x, &y, 10.0, kernel).unwrap();
        let centres = [vec![4.0, 0.0], vec![0.0, 4.0], vec![4.0, 4.0]];
        assert_eq!(m.predict_all(&centres).unwrap(), vec![0, 1, 2]);
    }
}

#[test]
fn large_c_linear_on_noise_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(119);
    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..16).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let y: Vec<u8> = (0..60).map(|i| (i % 3) as u8).collect();
    let m = train_multiclass(&x, &y, 1000.0, KernelConfig::Linear).unwrap();
    for b in &m.binary_models {
        assert!(b.kkt_violation < 1e-6);
        assert!(b.updates < 1_000_000);
    }
}
