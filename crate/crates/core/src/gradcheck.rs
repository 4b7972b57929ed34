//! Finite-difference verification of backpropagation, per layer kind.
//!
//! For each kind a batch of tiny random networks is built; every parameter
//! and every input coordinate is perturbed by +-1e-5 and the central
//! difference of the MSE loss is compared against the analytic gradient.
//! This path is intentionally independent of `Network::backward`'s internals:
//! it only calls `forward` and the loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::Result;
use crate::layer::{Activation, LayerSpec};
use crate::network::{InitScheme, Network, NetworkSpec};
use crate::tensor::{mse_grad, mse_loss, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub kind: String,
    pub configs: usize,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.max_rel_err < REL_TOL
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Max relative error between analytic and finite-difference gradients over
/// all parameters and input coordinates of one network on one input.
fn check_network(net: &mut Network, x: &Tensor, target: &Tensor) -> Result<f64> {
    let (y, cache) = net.forward(x)?;
    let dy = mse_grad(target, &y, 1)?;
    let (grads, dx) = net.backward(&cache, &dy)?;

    let mut worst: f64 = 0.0;

    // parameters
    for li in 0..net.params.len() {
        if net.params[li].is_none() {
            continue;
        }
        for field in 0..2 {
            let len = {
                let p = net.params[li].as_ref().unwrap();
                if field == 0 { p.weight.numel() } else { p.bias.numel() }
            };
            for i in 0..len {
                let get = |net: &Network| {
                    let p = net.params[li].as_ref().unwrap();
                    if field == 0 { p.weight.data()[i] } else { p.bias.data()[i] }
                };
                let set = |net: &mut Network, v: f64| {
                    let p = net.params[li].as_mut().unwrap();
                    if field == 0 {
                        p.weight.data_mut()[i] = v;
                    } else {
                        p.bias.data_mut()[i] = v;
                    }
                };
                let orig = get(net);
                set(net, orig + FD_STEP);
                let lp = mse_loss(target, &net.forward(x)?.0)?;
                set(net, orig - FD_STEP);
                let lm = mse_loss(target, &net.forward(x)?.0)?;
                set(net, orig);
                let numeric = (lp - lm) / (2.0 * FD_STEP);
                let analytic = {
                    let g = grads.layers[li].as_ref().unwrap();
                    if field == 0 { g.weight.data()[i] } else { g.bias.data()[i] }
                };
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
    }

    // input coordinates
    let mut xp = x.clone();
    for i in 0..x.numel() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + FD_STEP;
        let lp = mse_loss(target, &net.forward(&xp)?.0)?;
        xp.data_mut()[i] = orig - FD_STEP;
        let lm = mse_loss(target, &net.forward(&xp)?.0)?;
        xp.data_mut()[i] = orig;
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(dx.data()[i], numeric));
    }
    Ok(worst)
}

fn random_tensor(rng: &mut ChaCha20Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
}

/// Small network exercising one layer kind, with random structural choices.
fn net_for_kind(kind: &str, rng: &mut ChaCha20Rng) -> NetworkSpec {
    match kind {
        "dense" => {
            let i = 2 + rng.random_range(0..4);
            let o = 1 + rng.random_range(0..4);
            NetworkSpec::new(vec![i], vec![LayerSpec::Dense { in_units: i, out_units: o }]).unwrap()
        }
        "conv2d" => {
            let c = 1 + rng.random_range(0..2);
            let o = 1 + rng.random_range(0..2);
            let k = 2 + rng.random_range(0..2);
            let s = 1 + rng.random_range(0..2);
            let p = rng.random_range(0..2);
            NetworkSpec::new(
                vec![c, 4, 4],
                vec![LayerSpec::Conv2d {
                    in_channels: c,
                    out_channels: o,
                    kernel: k,
                    stride: s,
                    padding: p,
                }],
            )
            .unwrap()
        }
        "maxpool2x2" => {
            let c = 1 + rng.random_range(0..2);
            NetworkSpec::new(vec![c, 4, 4], vec![LayerSpec::MaxPool2x2]).unwrap()
        }
        "upsample2x2" => {
            let c = 1 + rng.random_range(0..2);
            NetworkSpec::new(vec![c, 2, 2], vec![LayerSpec::Upsample2x2]).unwrap()
        }
        "activation" => {
            let act = match rng.random_range(0..3) {
                0 => Activation::Relu,
                1 => Activation::LeakyRelu { alpha: 0.1 },
                _ => Activation::Sigmoid,
            };
            let n = 2 + rng.random_range(0..5);
            NetworkSpec::new(vec![n], vec![LayerSpec::Activation { act }]).unwrap()
        }
        "reshape" => NetworkSpec::new(
            vec![2, 2, 2],
            vec![
                LayerSpec::Reshape { shape: vec![8] },
                LayerSpec::Dense { in_units: 8, out_units: 2 },
            ],
        )
        .unwrap(),
        // a mixed stack to catch chaining bugs
        "composite" => NetworkSpec::new(
            vec![1, 4, 4],
            vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::MaxPool2x2,
                LayerSpec::Activation { act: Activation::LeakyRelu { alpha: 0.1 } },
                LayerSpec::Dense { in_units: 8, out_units: 3 },
                LayerSpec::Activation { act: Activation::Sigmoid },
            ],
        )
        .unwrap(),
        other => panic!("unknown gradcheck kind {other}"),
    }
}

pub const KINDS: &[&str] = &[
    "dense",
    "conv2d",
    "maxpool2x2",
    "upsample2x2",
    "activation",
    "reshape",
    "composite",
];

/// Runs `configs` random checks per layer kind.
pub fn run_gradcheck(seed: u64, configs: usize) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &kind in KINDS {
        let mut worst: f64 = 0.0;
        for _ in 0..configs {
            let spec = net_for_kind(kind, &mut rng);
            let mut net = Network::init(spec.clone(), InitScheme::Scaled, rng.random::<u64>())?;
            let x = random_tensor(&mut rng, &spec.input_shape);
            let target = random_tensor(&mut rng, &spec.output_shape()?);
            worst = worst.max(check_network(&mut net, &x, &target)?);
        }
        out.push(GradCheckReport {
            kind: kind.to_string(),
            configs,
            max_rel_err: worst,
        });
    }
    Ok(out)
}
