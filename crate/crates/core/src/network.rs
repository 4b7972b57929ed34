//! Network construction, initialization, forward and backward passes.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{self, LayerSpec};
use crate::tensor::Tensor;

/// Ordered layer list plus the expected input shape. Shape-checked at
/// construction; the per-layer shapes are cached for reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { input_shape, layers };
        spec.layer_shapes()?;
        Ok(spec)
    }

    /// Shapes flowing into each layer, plus the final output shape.
    /// Errors name the offending layer pair.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input_shape.clone();
        if cur.is_empty() || cur.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "input shape {cur:?} has zero dimension"
            )));
        }
        shapes.push(cur.clone());
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            cur = l
                .output_shape(&cur)
                .map_err(|reason| Error::InconsistentSpec {
                    layer: i,
                    kind: l.kind_name().to_string(),
                    input: cur.clone(),
                    reason,
                })?;
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.layer_shapes()?.last().unwrap().clone())
    }
}

/// Weight initialization schemes. `PaperNormal` draws every weight from the
/// standard normal; `Scaled` uses N(0, 2/fan_in) (He), which is stabler for
/// deeper stacks. Biases are zero in both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    PaperNormal,
    Scaled,
}

/// Weight and bias tensors for one parameterized layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// First/second Adam moments for one parameterized layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMoments {
    pub m_weight: Tensor,
    pub v_weight: Tensor,
    pub m_bias: Tensor,
    pub v_bias: Tensor,
}

/// An instantiated network: spec, parameters and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    /// Aligned with `spec.layers`; `None` for parameterless layers.
    pub params: Vec<Option<LayerParams>>,
    pub moments: Vec<Option<LayerMoments>>,
    /// Adam step counter.
    pub step: u64,
}

impl Network {
    /// Deterministic initialization from (spec, scheme, seed).
    pub fn init(spec: NetworkSpec, scheme: InitScheme, seed: u64) -> Result<Self> {
        spec.layer_shapes()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let std_normal = Normal::new(0.0, 1.0).unwrap();

        let mut params = Vec::with_capacity(spec.layers.len());
        let mut moments = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            match *l {
                LayerSpec::Dense { in_units, out_units } => {
                    let w = draw_weights(&mut rng, &std_normal, &[out_units, in_units], in_units, scheme);
                    params.push(Some(LayerParams {
                        weight: w,
                        bias: Tensor::zeros(&[out_units]),
                    }));
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    let fan_in = in_channels * kernel * kernel;
                    let w = draw_weights(
                        &mut rng,
                        &std_normal,
                        &[out_channels, in_channels, kernel, kernel],
                        fan_in,
                        scheme,
                    );
                    params.push(Some(LayerParams {
                        weight: w,
                        bias: Tensor::zeros(&[out_channels]),
                    }));
                }
                _ => params.push(None),
            }
            moments.push(params.last().unwrap().as_ref().map(|p| LayerMoments {
                m_weight: Tensor::zeros(p.weight.shape()),
                v_weight: Tensor::zeros(p.weight.shape()),
                m_bias: Tensor::zeros(p.bias.shape()),
                v_bias: Tensor::zeros(p.bias.shape()),
            }));
        }
        Ok(Network {
            spec,
            params,
            moments,
            step: 0,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        if x.shape() != self.spec.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.spec.input_shape.clone(),
                actual: x.shape().to_vec(),
                context: "network input".into(),
            });
        }
        let mut cur = x.clone();
        let mut layers = Vec::with_capacity(self.spec.layers.len());
        for (i, l) in self.spec.layers.iter().enumerate() {
            let input = cur;
            let mut argmax = None;
            cur = match l {
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    let flat = input.reshape(&[input.numel()])?;
                    layer::dense_forward(&flat, &p.weight, &p.bias)
                }
                LayerSpec::Conv2d { stride, padding, .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    layer::conv2d_forward(&input, &p.weight, &p.bias, *stride, *padding)?
                }
                LayerSpec::MaxPool2x2 => {
                    let (y, arg) = layer::maxpool2x2_forward(&input);
                    argmax = Some(arg);
                    y
                }
                LayerSpec::Upsample2x2 => layer::upsample2x2_forward(&input),
                LayerSpec::Activation { act } => layer::activation_forward(*act, &input),
                LayerSpec::Reshape { shape } => input.reshape(shape)?,
            };
            cur.debug_assert_finite(l.kind_name());
            layers.push(LayerCache { input, argmax });
        }
        Ok((cur, ForwardCache { layers }))
    }

    /// Backpropagates `grad_out` through the network using the cache of the
    /// matching forward pass. Returns per-layer parameter gradients and the
    /// gradient with respect to the network input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<(Gradients, Tensor)> {
        if cache.layers.len() != self.spec.layers.len() {
            return Err(Error::InvalidArgument(
                "forward cache does not match network depth".into(),
            ));
        }
        let mut grads: Vec<Option<LayerParams>> = vec![None; self.spec.layers.len()];
        let mut g = grad_out.clone();
        for (i, l) in self.spec.layers.iter().enumerate().rev() {
            let lc = &cache.layers[i];
            g = match l {
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    let flat = lc.input.reshape(&[lc.input.numel()])?;
                    let (dw, db, dx) = layer::dense_backward(&flat, &p.weight, &g);
                    grads[i] = Some(LayerParams { weight: dw, bias: db });
                    dx.reshape(lc.input.shape())?
                }
                LayerSpec::Conv2d { stride, padding, .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    if g.shape() != l.output_shape(lc.input.shape()).unwrap().as_slice() {
                        return Err(Error::InvalidArgument(
                            "stale cache: gradient shape does not match layer output".into(),
                        ));
                    }
                    let (dw, db, dx) = layer::conv2d_backward(&lc.input, &p.weight, *stride, *padding, &g);
                    grads[i] = Some(LayerParams { weight: dw, bias: db });
                    dx
                }
                LayerSpec::MaxPool2x2 => {
                    layer::maxpool2x2_backward(lc.input.shape(), lc.argmax.as_ref().unwrap(), &g)
                }
                LayerSpec::Upsample2x2 => layer::upsample2x2_backward(lc.input.shape(), &g),
                LayerSpec::Activation { act } => layer::activation_backward(*act, &lc.input, &g),
                LayerSpec::Reshape { .. } => g.reshape(lc.input.shape())?,
            };
            g.debug_assert_finite("gradient");
        }
        Ok((Gradients { layers: grads }, g))
    }
}

fn draw_weights(
    rng: &mut ChaCha20Rng,
    std_normal: &Normal<f64>,
    shape: &[usize],
    fan_in: usize,
    scheme: InitScheme,
) -> Tensor {
    let scale = match scheme {
        InitScheme::PaperNormal => 1.0,
        InitScheme::Scaled => (2.0 / fan_in as f64).sqrt(),
    };
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| scale * std_normal.sample(rng)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Per-layer intermediates retained for backward.
#[derive(Debug)]
pub struct LayerCache {
    pub input: Tensor,
    pub argmax: Option<Vec<usize>>,
}

#[derive(Debug)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
}

/// Parameter gradients shaped exactly like `Network::params`.
pub struct Gradients {
    pub layers: Vec<Option<LayerParams>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| LayerParams {
                        weight: Tensor::zeros(p.weight.shape()),
                        bias: Tensor::zeros(p.bias.shape()),
                    })
                })
                .collect(),
        }
    }

    /// Accumulate `other` into `self`.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                    *x += y;
                }
                for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                    *x += y;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::Activation;

    fn dense_spec() -> NetworkSpec {
        NetworkSpec::new(
            vec![3],
            vec![
                LayerSpec::Dense { in_units: 3, out_units: 2 },
                LayerSpec::Activation { act: Activation::Sigmoid },
            ],
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::init(dense_spec(), InitScheme::PaperNormal, 42).unwrap();
        let b = Network::init(dense_spec(), InitScheme::PaperNormal, 42).unwrap();
        assert_eq!(a.params, b.params);
        let c = Network::init(dense_spec(), InitScheme::PaperNormal, 43).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn dense_param_shapes() {
        let net = Network::init(dense_spec(), InitScheme::PaperNormal, 0).unwrap();
        let p = net.params[0].as_ref().unwrap();
        assert_eq!(p.weight.shape(), &[2, 3]);
        assert_eq!(p.bias.shape(), &[2]);
        assert!(p.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn paper_normal_moments() {
        // 10^5 weights: sample mean close to 0, variance close to 1
        let spec = NetworkSpec::new(
            vec![500],
            vec![LayerSpec::Dense { in_units: 500, out_units: 200 }],
        )
        .unwrap();
        let net = Network::init(spec, InitScheme::PaperNormal, 7).unwrap();
        let w = net.params[0].as_ref().unwrap().weight.data();
        let n = w.len() as f64;
        assert_eq!(w.len(), 100_000);
        let mean: f64 = w.iter().sum::<f64>() / n;
        let var: f64 = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 3e-2, "mean {mean}");
        assert!((var - 1.0).abs() < 3e-2, "var {var}");
    }

    #[test]
    fn scaled_init_variance() {
        let spec = NetworkSpec::new(
            vec![200],
            vec![LayerSpec::Dense { in_units: 200, out_units: 500 }],
        )
        .unwrap();
        let net = Network::init(spec, InitScheme::Scaled, 7).unwrap();
        let w = net.params[0].as_ref().unwrap().weight.data();
        let n = w.len() as f64;
        let var: f64 = w.iter().map(|v| v * v).sum::<f64>() / n;
        let expected = 2.0 / 200.0;
        assert!((var - expected).abs() < 0.1 * expected, "var {var}");
    }

    #[test]
    fn inconsistent_spec_names_layer() {
        let err = NetworkSpec::new(
            vec![3],
            vec![
                LayerSpec::Dense { in_units: 3, out_units: 2 },
                LayerSpec::Dense { in_units: 5, out_units: 2 },
            ],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 1"), "{msg}");
    }

    #[test]
    fn cifar_paper_encoder_shape() {
        // Conv2D(3,8,4,2,1)-Conv2D(8,16,4,2,1)-Conv2D(16,16,4,2,1): 3x32x32 -> 16x4x4
        let spec = NetworkSpec::new(
            vec![3, 32, 32],
            vec![
                LayerSpec::Conv2d { in_channels: 3, out_channels: 8, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Activation { act: Activation::Relu },
                LayerSpec::Conv2d { in_channels: 8, out_channels: 16, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Activation { act: Activation::Relu },
                LayerSpec::Conv2d { in_channels: 16, out_channels: 16, kernel: 4, stride: 2, padding: 1 },
            ],
        )
        .unwrap();
        assert_eq!(spec.output_shape().unwrap(), vec![16, 4, 4]);
    }

    #[test]
    fn fmnist_paper_encoder_shape() {
        // Conv2D(1,2,4,2,1)-Conv2D(2,4,4,2,1)-Conv2D(4,8,3,2,1)-Conv2D(8,8,4,2,1): 1x28x28 -> 8x2x2
        let spec = NetworkSpec::new(
            vec![1, 28, 28],
            vec![
                LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Conv2d { in_channels: 2, out_channels: 4, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Conv2d { in_channels: 4, out_channels: 8, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Conv2d { in_channels: 8, out_channels: 8, kernel: 4, stride: 2, padding: 1 },
            ],
        )
        .unwrap();
        assert_eq!(spec.output_shape().unwrap(), vec![8, 2, 2]);
    }

    #[test]
    fn forward_shape_mismatch_errors() {
        let net = Network::init(dense_spec(), InitScheme::PaperNormal, 0).unwrap();
        let err = net.forward(&Tensor::vector(&[1.0, 2.0])).unwrap_err();
        assert!(err.to_string().contains("expected [3]"), "{err}");
    }

    #[test]
    fn zero_loss_grad_gives_zero_param_grads() {
        let net = Network::init(dense_spec(), InitScheme::PaperNormal, 3).unwrap();
        let (y, cache) = net.forward(&Tensor::vector(&[0.1, 0.2, 0.3])).unwrap();
        let (grads, _) = net.backward(&cache, &Tensor::zeros(y.shape())).unwrap();
        for g in grads.layers.iter().flatten() {
            assert!(g.weight.data().iter().all(|&v| v == 0.0));
            assert!(g.bias.data().iter().all(|&v| v == 0.0));
        }
    }
}
