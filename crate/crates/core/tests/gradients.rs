use mvtflow::flow::{BoundParams, FlowConfig, MvtFlow};
use mvtflow::tensor::gradcheck;
use mvtflow::train::nll_loss;
use mvtflow::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, amp: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-amp..amp))
}

#[test]
fn relu_of_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for dilation in [1, 2, 3] {
        let inputs = vec![
            rand_tensor(&mut rng, vec![3, 20], 1.0),
            rand_tensor(&mut rng, vec![4, 3, 5], 0.5),
            rand_tensor(&mut rng, vec![4], 0.5),
        ];
        let report = gradcheck(
            |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.conv1d(v[0], v[1], v[2], dilation)?;
                let r = g.relu(y);
                Ok(g.sum_squares(r))
            },
            &inputs,
            1e-6,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "dilation {dilation}: {:?}", report.rel_err);
    }
}

#[test]
fn soft_clamped_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = vec![rand_tensor(&mut rng, vec![2, 9], 8.0)];
    let report = gradcheck(
        |g: &mut Graph<f64>, v: &[Var]| {
            let s = mvtflow::flow::soft_clamp(g, v[0], 3.0)?;
            let e = g.exp(s);
            Ok(g.sum(e))
        },
        &inputs,
        1e-6,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.rel_err);
}

fn random_model(rng: &mut ChaCha8Rng, t: usize, s: usize, n_blocks: usize) -> MvtFlow<f64> {
    let cfg = FlowConfig {
        n_blocks,
        ..FlowConfig::default()
    };
    let mut m = MvtFlow::new((t, s), cfg, rng.random()).unwrap();
    for p in m.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
    }
    m
}

fn check_loss(model: &MvtFlow<f64>, x: Tensor<f64>) {
    let mut inputs = vec![x];
    inputs.extend(model.params().cloned());
    let report = gradcheck(
        |g: &mut Graph<f64>, v: &[Var]| {
            let params = BoundParams(v[1..].to_vec());
            let (z, ld) = model.forward_graph(g, &params, v[0])?;
            nll_loss(g, z, ld)
        },
        &inputs,
        1e-6,
        1e-5,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_err());
}

#[test]
fn single_coupling_block_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in [2, 4, 6] {
        let m = random_model(&mut rng, 12, s, 1);
        let x = rand_tensor(&mut rng, vec![12, s], 2.0);
        check_loss(&m, x);
    }
}

#[test]
fn full_flow_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_model(&mut rng, 16, 4, 4);
    let x = rand_tensor(&mut rng, vec![16, 4], 2.0);
    check_loss(&m, x);
}

#[test]
fn odd_length_and_short_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_model(&mut rng, 5, 4, 2);
    let x = rand_tensor(&mut rng, vec![5, 4], 2.0);
    check_loss(&m, x);
}
