//! Layer descriptions and the per-layer forward/backward kernels.
//!
//! Convolution is cross-correlation (no kernel flip). Max-pool is 2x2 with
//! stride 2, ties broken by first row-major occurrence; upsampling is 2x2
//! nearest-neighbour and acts as the pooling mirror in decoders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f64 },
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense {
        in_units: usize,
        out_units: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2x2,
    Upsample2x2,
    Activation {
        act: Activation,
    },
    /// Pure view change, used when a dense bottleneck feeds a convolutional
    /// decoder stack.
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2x2 => "maxpool2x2",
            LayerSpec::Upsample2x2 => "upsample2x2",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    /// Structural validity of the layer's own fields.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidArgument(reason));
        match *self {
            LayerSpec::Dense {
                in_units,
                out_units,
            } => {
                if in_units == 0 || out_units == 0 {
                    return bad(format!("dense({in_units},{out_units}): units must be >= 1"));
                }
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return bad("conv2d: channels, kernel and stride must be >= 1".into());
                }
            }
            LayerSpec::Activation {
                act: Activation::LeakyRelu { alpha },
            } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return bad(format!("leaky_relu alpha {alpha} outside (0,1)"));
                }
            }
            LayerSpec::Reshape { ref shape } => {
                if shape.is_empty() || shape.iter().any(|&d| d == 0) {
                    return bad(format!("reshape target {shape:?} has zero dimension"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape, or why the pairing is invalid.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { in_units, out_units } => {
                let n: usize = input.iter().product();
                if n != in_units {
                    return Err(format!(
                        "dense expects {in_units} input units, shape {input:?} has {n}"
                    ));
                }
                Ok(vec![out_units])
            }
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                stride,
                padding,
                out_channels,
            } => {
                let [c, h, w] = three_d(input)?;
                if c != in_channels {
                    return Err(format!("conv2d expects {in_channels} channels, got {c}"));
                }
                let oh = conv_out(h, kernel, stride, padding)?;
                let ow = conv_out(w, kernel, stride, padding)?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerSpec::MaxPool2x2 => {
                let [c, h, w] = three_d(input)?;
                if h < 2 || w < 2 {
                    return Err(format!("maxpool2x2 needs spatial dims >= 2, got {h}x{w}"));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            LayerSpec::Upsample2x2 => {
                let [c, h, w] = three_d(input)?;
                Ok(vec![c, h * 2, w * 2])
            }
            LayerSpec::Activation { .. } => Ok(input.to_vec()),
            LayerSpec::Reshape { ref shape } => {
                let n: usize = input.iter().product();
                let m: usize = shape.iter().product();
                if n != m {
                    return Err(format!(
                        "reshape to {shape:?} ({m} elements) from {input:?} ({n} elements)"
                    ));
                }
                Ok(shape.clone())
            }
        }
    }
}

fn three_d(shape: &[usize]) -> std::result::Result<[usize; 3], String> {
    match shape {
        [c, h, w] => Ok([*c, *h, *w]),
        other => Err(format!("expected CxHxW shape, got {other:?}")),
    }
}

fn conv_out(size: usize, kernel: usize, stride: usize, padding: usize) -> std::result::Result<usize, String> {
    let padded = size + 2 * padding;
    if padded < kernel {
        return Err(format!(
            "kernel {kernel} larger than padded input {padded}"
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

// ---------------------------------------------------------------------------
// dense

/// y = W x + b, with W shaped [out, in].
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let out = w.shape()[0];
    let inn = w.shape()[1];
    debug_assert_eq!(x.numel(), inn);
    let xd = x.data();
    let wd = w.data();
    let mut y = vec![0.0; out];
    for o in 0..out {
        let row = &wd[o * inn..(o + 1) * inn];
        let mut acc = b.data()[o];
        for i in 0..inn {
            acc += row[i] * xd[i];
        }
        y[o] = acc;
    }
    Tensor::from_vec(&[out], y).unwrap()
}

/// Returns (dW, db, dx). dW = grad_out ⊗ x.
pub fn dense_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let out = w.shape()[0];
    let inn = w.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let gd = grad_out.data();
    let mut dw = vec![0.0; out * inn];
    let mut dx = vec![0.0; inn];
    for o in 0..out {
        let g = gd[o];
        for i in 0..inn {
            dw[o * inn + i] = g * xd[i];
            dx[i] += g * wd[o * inn + i];
        }
    }
    (
        Tensor::from_vec(&[out, inn], dw).unwrap(),
        Tensor::from_vec(&[out], gd.to_vec()).unwrap(),
        Tensor::from_vec(x.shape(), dx).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// conv2d

/// Cross-correlation of a CxHxW input with weights [O, C, K, K] plus bias.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let [c, h, wd_] = match x.shape() {
        [c, h, w] => [*c, *h, *w],
        other => {
            return Err(Error::ShapeMismatch {
                expected: vec![0, 0, 0],
                actual: other.to_vec(),
                context: "conv2d input must be CxHxW".into(),
            })
        }
    };
    let o = w.shape()[0];
    let k = w.shape()[2];
    debug_assert_eq!(w.shape()[1], c);
    let oh = conv_out(h, k, stride, padding).map_err(Error::InvalidArgument)?;
    let ow = conv_out(wd_, k, stride, padding).map_err(Error::InvalidArgument)?;

    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bd[oc];
                for ic in 0..c {
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= wd_ as isize {
                                continue;
                            }
                            acc += xd[(ic * h + iy as usize) * wd_ + ix as usize]
                                * wd[((oc * c + ic) * k + ky) * k + kx];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Tensor::from_vec(&[o, oh, ow], out)
}

/// Returns (dW, db, dx) for the cross-correlation above.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (c, h, iw) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);

    let xd = x.data();
    let wd = w.data();
    let gd = grad_out.data();
    let mut dw = vec![0.0; o * c * k * k];
    let mut db = vec![0.0; o];
    let mut dx = vec![0.0; c * h * iw];

    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gd[(oc * oh + oy) * ow + ox];
                db[oc] += g;
                for ic in 0..c {
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= iw as isize {
                                continue;
                            }
                            let xi = (ic * h + iy as usize) * iw + ix as usize;
                            let wi = ((oc * c + ic) * k + ky) * k + kx;
                            dw[wi] += g * xd[xi];
                            dx[xi] += g * wd[wi];
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::from_vec(w.shape(), dw).unwrap(),
        Tensor::from_vec(&[o], db).unwrap(),
        Tensor::from_vec(x.shape(), dx).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// max-pool / upsample

/// 2x2 max-pool with stride 2. Returns the pooled tensor and, per output
/// element, the flat input index of its argmax (first occurrence wins).
pub fn maxpool2x2_forward(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![0.0; c * oh * ow];
    let mut arg = vec![0usize; c * oh * ow];
    for ic in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (ic * h + oy * 2 + dy) * w + ox * 2 + dx;
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                }
                let oi = (ic * oh + oy) * ow + ox;
                out[oi] = best;
                arg[oi] = best_idx;
            }
        }
    }
    (Tensor::from_vec(&[c, oh, ow], out).unwrap(), arg)
}

/// Routes each output gradient back to its argmax position only.
pub fn maxpool2x2_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (oi, g) in grad_out.data().iter().enumerate() {
        dxd[argmax[oi]] += g;
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2x2_forward(x: &Tensor) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let xd = x.data();
    let mut out = vec![0.0; c * h * 2 * w * 2];
    for ic in 0..c {
        for y in 0..h {
            for xj in 0..w {
                let v = xd[(ic * h + y) * w + xj];
                for dy in 0..2 {
                    for dx in 0..2 {
                        out[(ic * h * 2 + y * 2 + dy) * w * 2 + xj * 2 + dx] = v;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[c, h * 2, w * 2], out).unwrap()
}

/// Each input position collects the sum over its 2x2 replicated block.
pub fn upsample2x2_backward(input_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let gd = grad_out.data();
    let mut dx = vec![0.0; c * h * w];
    for ic in 0..c {
        for y in 0..h {
            for xj in 0..w {
                let mut acc = 0.0;
                for dy in 0..2 {
                    for dx_ in 0..2 {
                        acc += gd[(ic * h * 2 + y * 2 + dy) * w * 2 + xj * 2 + dx_];
                    }
                }
                dx[(ic * h + y) * w + xj] = acc;
            }
        }
    }
    Tensor::from_vec(input_shape, dx).unwrap()
}

// ---------------------------------------------------------------------------
// activations

pub fn activation_forward(act: Activation, x: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .map(|&v| match act {
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu { alpha } => {
                if v > 0.0 {
                    v
                } else {
                    alpha * v
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        })
        .collect();
    Tensor::from_vec(x.shape(), data).unwrap()
}

pub fn activation_backward(act: Activation, input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| match act {
            Activation::Relu => {
                if v > 0.0 {
                    g
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { alpha } => {
                if v > 0.0 {
                    g
                } else {
                    alpha * g
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-v).exp());
                g * s * (1.0 - s)
            }
        })
        .collect();
    Tensor::from_vec(input.shape(), data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shape_formula() {
        let spec = LayerSpec::Conv2d {
            in_channels: 3,
            out_channels: 8,
            kernel: 4,
            stride: 2,
            padding: 1,
        };
        assert_eq!(spec.output_shape(&[3, 32, 32]).unwrap(), vec![8, 16, 16]);
    }

    #[test]
    fn conv_hand_cross_correlation() {
        // 2x2 input [[1,2],[3,4]], 2x2 kernel of ones, s=1, p=0, bias=0 -> [[10]]
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0; 4]).unwrap();
        let b = Tensor::vector(&[0.0]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn conv_zero_input_broadcasts_bias() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let w = Tensor::from_vec(&[3, 2, 3, 3], vec![0.5; 54]).unwrap();
        let b = Tensor::vector(&[1.0, -2.0, 0.25]);
        let y = conv2d_forward(&x, &w, &b, 1, 1).unwrap();
        assert_eq!(y.shape(), &[3, 4, 4]);
        for oc in 0..3 {
            for i in 0..16 {
                assert_eq!(y.data()[oc * 16 + i], b.data()[oc]);
            }
        }
    }

    #[test]
    fn conv_kernel_too_large_errors() {
        let spec = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 5,
            stride: 1,
            padding: 0,
        };
        assert!(spec.output_shape(&[1, 3, 3]).is_err());
    }

    #[test]
    fn identity_1x1_conv() {
        let x = Tensor::from_vec(&[1, 3, 3], (1..=9).map(|i| i as f64).collect()).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::vector(&[0.0]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn activations() {
        let x = Tensor::vector(&[-5.0, -1.0, 0.0, 5.0]);
        let r = activation_forward(Activation::Relu, &x);
        assert_eq!(r.data(), &[0.0, 0.0, 0.0, 5.0]);
        let l = activation_forward(Activation::LeakyRelu { alpha: 0.1 }, &x);
        assert!((l.data()[1] - (-0.1)).abs() < 1e-15);
        let s = activation_forward(Activation::Sigmoid, &Tensor::vector(&[0.0]));
        assert_eq!(s.data(), &[0.5]);
    }

    #[test]
    fn maxpool_first_occurrence_tie_break() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![3.0, 3.0, 3.0, 3.0]).unwrap();
        let (y, arg) = maxpool2x2_forward(&x);
        assert_eq!(y.data(), &[3.0]);
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn maxpool_backward_routes_to_argmax_only() {
        let x = Tensor::from_vec(&[1, 2, 4], vec![1.0, 9.0, 2.0, 3.0, 4.0, 5.0, 8.0, 7.0]).unwrap();
        let (_, arg) = maxpool2x2_forward(&x);
        let g = Tensor::from_vec(&[1, 1, 2], vec![10.0, 20.0]).unwrap();
        let dx = maxpool2x2_backward(x.shape(), &arg, &g);
        let total: f64 = dx.data().iter().sum();
        assert_eq!(total, 30.0);
        assert_eq!(dx.data()[1], 10.0); // value 9.0
        assert_eq!(dx.data()[6], 20.0); // value 8.0
        assert_eq!(dx.data().iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn upsample_round_trip_shapes() {
        let x = Tensor::from_vec(&[2, 2, 2], (0..8).map(|i| i as f64).collect()).unwrap();
        let y = upsample2x2_forward(&x);
        assert_eq!(y.shape(), &[2, 4, 4]);
        let g = Tensor::from_vec(&[2, 4, 4], vec![1.0; 32]).unwrap();
        let dx = upsample2x2_backward(x.shape(), &g);
        assert!(dx.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn dense_hand_outer_product() {
        let x = Tensor::vector(&[2.0, 3.0]);
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let g = Tensor::vector(&[5.0, 7.0]);
        let (dw, db, dx) = dense_backward(&x, &w, &g);
        assert_eq!(dw.data(), &[10.0, 15.0, 14.0, 21.0]);
        assert_eq!(db.data(), &[5.0, 7.0]);
        assert_eq!(dx.data(), &[5.0, 7.0]);
    }
}
