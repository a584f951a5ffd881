use mvtflow::flow::{soft_clamp_value, FlowConfig, MvtFlow};
use mvtflow::train::loss_and_grads;
use mvtflow::Tensor;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(seed: u64, t: usize, s: usize, n_blocks: usize, amp: f64) -> MvtFlow<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = FlowConfig {
        n_blocks,
        ..FlowConfig::default()
    };
    let mut m = MvtFlow::new((t, s), cfg, seed).unwrap();
    for p in m.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-amp..amp));
    }
    m
}

fn input(seed: u64, t: usize, s: usize, amp: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    Tensor::from_fn(vec![t, s], |_| rng.random_range(-amp..amp))
}

fn numeric_jacobian(m: &MvtFlow<f64>, x: &Tensor<f64>) -> DMatrix<f64> {
    let d = x.len();
    let h = 1e-5;
    let mut j = DMatrix::zeros(d, d);
    for c in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.data_mut()[c] += h;
        xm.data_mut()[c] -= h;
        let zp = m.forward(&xp).unwrap().0;
        let zm = m.forward(&xm).unwrap().0;
        for r in 0..d {
            j[(r, c)] = (zp.data()[r] - zm.data()[r]) / (2.0 * h);
        }
    }
    j
}

#[test]
fn logdet_matches_numerical_jacobian() {
    for (seed, t, s, blocks) in [(1, 6, 2, 1), (2, 3, 4, 4), (3, 4, 6, 2), (4, 12, 2, 4)] {
        let m = random_model(seed, t, s, blocks, 0.4);
        let x = input(seed, t, s, 2.0);
        let (_, ld) = m.forward(&x).unwrap();
        let det = numeric_jacobian(&m, &x).determinant().abs();
        assert!((ld - det.ln()).abs() <= 1e-6 * ld.abs().max(1.0), "{ld} vs {}", det.ln());
    }
}

#[test]
fn loss_is_change_of_variables_density() {
    let (t, s) = (4, 4);
    let m = random_model(9, t, s, 3, 0.4);
    let x = input(9, t, s, 1.0);
    let (z, _) = m.forward(&x).unwrap();
    let log_pz: f64 = z
        .data()
        .iter()
        .map(|v| -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln())
        .sum();
    let log_px = log_pz + numeric_jacobian(&m, &x).determinant().abs().ln();
    let (loss, _) = loss_and_grads(&m, &x).unwrap();
    let d = (t * s) as f64;
    let lhs = loss + 0.5 * d * (2.0 * std::f64::consts::PI).ln();
    assert!((lhs + log_px).abs() <= 1e-7 * log_px.abs());
}

#[test]
fn total_logdet_is_sum_over_blocks() {
    let m = random_model(11, 20, 6, 4, 0.3);
    let mut h = input(11, 20, 6, 2.0);
    let mut sum = 0.0;
    for b in &m.blocks {
        let (y, ld) = b.forward(&h).unwrap();
        sum += ld;
        h = y;
    }
    let (z, total) = m.forward(&input(11, 20, 6, 2.0)).unwrap();
    assert!((sum - total).abs() <= 1e-12 * total.abs().max(1.0));
    assert!(z.max_abs_diff(&h).unwrap() <= 1e-12);
}

#[test]
fn identity_at_initialisation() {
    let m = MvtFlow::<f64>::new((64, 10), FlowConfig::default(), 3).unwrap();
    let x = input(3, 64, 10, 3.0);
    let (z, ld) = m.forward(&x).unwrap();
    assert_eq!(ld, 0.0);
    // Only the signal permutations remain: every time step keeps its values.
    for t in 0..64 {
        let mut a = x.data()[t * 10..(t + 1) * 10].to_vec();
        let mut b = z.data()[t * 10..(t + 1) * 10].to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn inverse_undoes_forward(
        seed in any::<u64>(),
        half in 1usize..6,
        t in 1usize..48,
        blocks in 1usize..5,
    ) {
        let s = 2 * half;
        let m = random_model(seed, t, s, blocks, 0.3);
        let x = input(seed, t, s, 3.0);
        let (z, _) = m.forward(&x).unwrap();
        prop_assert!(m.inverse(&z).unwrap().max_abs_diff(&x).unwrap() <= 1e-10);
    }

    #[test]
    fn each_block_is_invertible(seed in any::<u64>(), half in 1usize..5, t in 1usize..32) {
        let m = random_model(seed, t, 2 * half, 1, 0.5);
        let b = &m.blocks[0];
        let x = input(seed, t, 2 * half, 3.0);
        let (y, _) = b.forward(&x).unwrap();
        prop_assert!(b.inverse(&y).unwrap().max_abs_diff(&x).unwrap() <= 1e-10);
    }

    #[test]
    fn logdet_is_bounded_by_clamp(seed in any::<u64>(), t in 1usize..32) {
        let m = random_model(seed, t, 4, 2, 2.0);
        let (_, ld) = m.forward(&input(seed, t, 4, 5.0)).unwrap();
        let bound = m.config.alpha * (2 * t * 4) as f64;
        prop_assert!(ld.abs() < bound);
    }

    #[test]
    fn soft_clamp_is_odd_monotone_and_bounded(a in -1e6f64..1e6, b in -1e6f64..1e6, alpha in 0.1f64..10.0) {
        let (fa, fb) = (soft_clamp_value(a, alpha), soft_clamp_value(b, alpha));
        prop_assert!(fa.abs() < alpha || (fa.abs() - alpha).abs() < 1e-12);
        prop_assert!((soft_clamp_value(-a, alpha) + fa).abs() <= 1e-12);
        if a < b {
            prop_assert!(fa <= fb);
        }
    }
}
