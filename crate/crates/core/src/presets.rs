//! Named encoder/decoder architecture presets. Hidden layers use ReLU
//! (leaky 0.1 for the LeNet-style and dense anomaly/clustering nets), the
//! final decoder layer uses sigmoid to match [0,1]-normalized inputs, and
//! decoders mirror their encoders with max-pooling replaced by upsampling.

use crate::error::{Error, Result};
use crate::layer::{Activation, LayerSpec};
use crate::network::NetworkSpec;

const LEAKY: Activation = Activation::LeakyRelu { alpha: 0.1 };

fn conv(i: usize, o: usize, k: usize, s: usize, p: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: k,
        stride: s,
        padding: p,
    }
}

fn dense(i: usize, o: usize) -> LayerSpec {
    LayerSpec::Dense {
        in_units: i,
        out_units: o,
    }
}

fn act(a: Activation) -> LayerSpec {
    LayerSpec::Activation { act: a }
}

pub const PRESET_NAMES: &[&str] = &[
    "cifar-conv-paper",
    "fmnist-conv-paper",
    "cifar-lenet-anomaly",
    "fmnist-dense-paper",
    "mnist-cluster-lenet",
    "toy-dense",
];

/// Resolves a preset name into (encoder, decoder) specs.
pub fn preset(name: &str) -> Result<(NetworkSpec, NetworkSpec)> {
    match name {
        // Conv2D(3,8,4,2,1)-Conv2D(8,16,4,2,1)-Conv2D(16,16,4,2,1),
        // 3x32x32 -> 16x4x4
        "cifar-conv-paper" => {
            let enc = NetworkSpec::new(
                vec![3, 32, 32],
                vec![
                    conv(3, 8, 4, 2, 1),
                    act(Activation::Relu),
                    conv(8, 16, 4, 2, 1),
                    act(Activation::Relu),
                    conv(16, 16, 4, 2, 1),
                    act(Activation::Relu),
                ],
            )?;
            let dec = NetworkSpec::new(
                vec![16, 4, 4],
                vec![
                    LayerSpec::Upsample2x2,
                    conv(16, 16, 3, 1, 1),
                    act(Activation::Relu),
                    LayerSpec::Upsample2x2,
                    conv(16, 8, 3, 1, 1),
                    act(Activation::Relu),
                    LayerSpec::Upsample2x2,
                    conv(8, 3, 3, 1, 1),
                    act(Activation::Sigmoid),
                ],
            )?;
            Ok((enc, dec))
        }
        // Conv2D(1,2,4,2,1)-Conv2D(2,4,4,2,1)-Conv2D(4,8,3,2,1)-
        // Conv2D(8,8,4,2,1), 1x28x28 -> 8x2x2
        "fmnist-conv-paper" => {
            let enc = NetworkSpec::new(
                vec![1, 28, 28],
                vec![
                    conv(1, 2, 4, 2, 1),
                    act(Activation::Relu),
                    conv(2, 4, 4, 2, 1),
                    act(Activation::Relu),
                    conv(4, 8, 3, 2, 1),
                    act(Activation::Relu),
                    conv(8, 8, 4, 2, 1),
                    act(Activation::Relu),
                ],
            )?;
            let dec = NetworkSpec::new(
                vec![8, 2, 2],
                vec![
                    LayerSpec::Upsample2x2,
                    conv(8, 8, 3, 1, 1),
                    act(Activation::Relu),
                    LayerSpec::Upsample2x2,
                    conv(8, 4, 3, 1, 1),
                    act(Activation::Relu),
                    LayerSpec::Upsample2x2,
                    conv(4, 2, 3, 1, 0), // 16 -> 14
                    act(Activation::Relu),
                    LayerSpec::Upsample2x2,
                    conv(2, 1, 3, 1, 1),
                    act(Activation::Sigmoid),
                ],
            )?;
            Ok((enc, dec))
        }
        // LeNet-style: Conv2D(3,32,3,1,1)-Conv2D(32,64,3,1,1)-
        // Conv2D(64,64,3,1,1), each followed by 2x2 max-pool and leaky ReLU
        // (alpha 0.1), then a 256-unit dense layer
        "cifar-lenet-anomaly" => {
            let enc = NetworkSpec::new(
                vec![3, 32, 32],
                vec![
                    conv(3, 32, 3, 1, 1),
                    LayerSpec::MaxPool2x2,
                    act(LEAKY),
                    conv(32, 64, 3, 1, 1),
                    LayerSpec::MaxPool2x2,
                    act(LEAKY),
                    conv(64, 64, 3, 1, 1),
                    LayerSpec::MaxPool2x2,
                    act(LEAKY),
                    dense(64 * 4 * 4, 256),
                    act(LEAKY),
                ],
            )?;
            let dec = NetworkSpec::new(
                vec![256],
                vec![
                    dense(256, 64 * 4 * 4),
                    act(LEAKY),
                    LayerSpec::Reshape { shape: vec![64, 4, 4] },
                    LayerSpec::Upsample2x2,
                    conv(64, 64, 3, 1, 1),
                    act(LEAKY),
                    LayerSpec::Upsample2x2,
                    conv(64, 32, 3, 1, 1),
                    act(LEAKY),
                    LayerSpec::Upsample2x2,
                    conv(32, 3, 3, 1, 1),
                    act(Activation::Sigmoid),
                ],
            )?;
            Ok((enc, dec))
        }
        // fully connected 512-256-128-50 on 28x28 inputs
        "fmnist-dense-paper" => {
            let enc = NetworkSpec::new(
                vec![1, 28, 28],
                vec![
                    dense(784, 512),
                    act(LEAKY),
                    dense(512, 256),
                    act(LEAKY),
                    dense(256, 128),
                    act(LEAKY),
                    dense(128, 50),
                    act(LEAKY),
                ],
            )?;
            let dec = NetworkSpec::new(
                vec![50],
                vec![
                    dense(50, 128),
                    act(LEAKY),
                    dense(128, 256),
                    act(LEAKY),
                    dense(256, 512),
                    act(LEAKY),
                    dense(512, 784),
                    act(Activation::Sigmoid),
                    LayerSpec::Reshape { shape: vec![1, 28, 28] },
                ],
            )?;
            Ok((enc, dec))
        }
        // Conv2D(1,8,5,1,0)-Conv2D(8,4,5,1,0) with pool+leaky after each,
        // then a 10-unit dense layer
        "mnist-cluster-lenet" => {
            let enc = NetworkSpec::new(
                vec![1, 28, 28],
                vec![
                    conv(1, 8, 5, 1, 0),
                    LayerSpec::MaxPool2x2,
                    act(LEAKY),
                    conv(8, 4, 5, 1, 0),
                    LayerSpec::MaxPool2x2,
                    act(LEAKY),
                    dense(4 * 4 * 4, 10),
                    act(LEAKY),
                ],
            )?;
            let dec = NetworkSpec::new(
                vec![10],
                vec![
                    dense(10, 4 * 4 * 4),
                    act(LEAKY),
                    LayerSpec::Reshape { shape: vec![4, 4, 4] },
                    LayerSpec::Upsample2x2,
                    conv(4, 8, 5, 1, 4), // 8 -> 12
                    act(LEAKY),
                    LayerSpec::Upsample2x2,
                    conv(8, 1, 5, 1, 4), // 24 -> 28
                    act(Activation::Sigmoid),
                ],
            )?;
            Ok((enc, dec))
        }
        // desk-scale dense autoencoder for synthetic data
        "toy-dense" => Ok(toy_dense(64, 16)?),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; known presets: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// Small dense AE with one hidden bottleneck, used by desk-scale runs.
pub fn toy_dense(input_dim: usize, latent_dim: usize) -> Result<(NetworkSpec, NetworkSpec)> {
    let enc = NetworkSpec::new(
        vec![input_dim],
        vec![dense(input_dim, latent_dim), act(Activation::Relu)],
    )?;
    let dec = NetworkSpec::new(
        vec![latent_dim],
        vec![dense(latent_dim, input_dim), act(Activation::Sigmoid)],
    )?;
    Ok((enc, dec))
}

/// Dense AE for image tensors: flattens [c,h,w] through two hidden layers.
pub fn image_dense(input_shape: &[usize], hidden: usize, latent: usize) -> Result<(NetworkSpec, NetworkSpec)> {
    let d: usize = input_shape.iter().product();
    let enc = NetworkSpec::new(
        input_shape.to_vec(),
        vec![
            dense(d, hidden),
            act(Activation::Relu),
            dense(hidden, latent),
            act(Activation::Relu),
        ],
    )?;
    let dec = NetworkSpec::new(
        vec![latent],
        vec![
            dense(latent, hidden),
            act(Activation::Relu),
            dense(hidden, d),
            act(Activation::Sigmoid),
            LayerSpec::Reshape { shape: input_shape.to_vec() },
        ],
    )?;
    Ok((enc, dec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_are_shape_consistent_and_symmetric() {
        for name in PRESET_NAMES {
            let (enc, dec) = preset(name).unwrap();
            let latent = enc.output_shape().unwrap();
            assert_eq!(latent, dec.input_shape, "{name}: latent vs decoder input");
            assert_eq!(
                dec.output_shape().unwrap(),
                enc.input_shape,
                "{name}: reconstruction shape"
            );
        }
    }

    #[test]
    fn paper_latent_sizes() {
        let (enc, _) = preset("cifar-conv-paper").unwrap();
        assert_eq!(enc.output_shape().unwrap(), vec![16, 4, 4]);
        let (enc, _) = preset("fmnist-conv-paper").unwrap();
        assert_eq!(enc.output_shape().unwrap(), vec![8, 2, 2]);
        let (enc, _) = preset("fmnist-dense-paper").unwrap();
        assert_eq!(enc.output_shape().unwrap(), vec![50]);
        let (enc, _) = preset("cifar-lenet-anomaly").unwrap();
        assert_eq!(enc.output_shape().unwrap(), vec![256]);
        let (enc, _) = preset("mnist-cluster-lenet").unwrap();
        assert_eq!(enc.output_shape().unwrap(), vec![10]);
    }

    #[test]
    fn fmnist_dense_layer_sizes() {
        let (enc, _) = preset("fmnist-dense-paper").unwrap();
        let sizes: Vec<usize> = enc
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { out_units, .. } => Some(*out_units),
                _ => None,
            })
            .collect();
        assert_eq!(sizes, vec![512, 256, 128, 50]);
    }

    #[test]
    fn unknown_preset_errors() {
        assert!(preset("nope").is_err());
    }
}
