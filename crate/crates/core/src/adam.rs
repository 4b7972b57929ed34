//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Gradients, Network};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must be in (0,1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update over all network parameters. Increments the step counter.
pub fn adam_step(net: &mut Network, grads: &Gradients, config: &AdamConfig) -> Result<()> {
    if grads.layers.len() != net.params.len() {
        return Err(Error::InvalidArgument(
            "gradient layout does not match network".into(),
        ));
    }
    net.step += 1;
    let t = net.step as f64;
    let bc1 = 1.0 - config.beta1.powf(t);
    let bc2 = 1.0 - config.beta2.powf(t);

    for i in 0..net.params.len() {
        let (Some(p), Some(m), Some(g)) = (
            net.params[i].as_mut(),
            net.moments[i].as_mut(),
            grads.layers[i].as_ref(),
        ) else {
            continue;
        };
        if g.weight.shape() != p.weight.shape() || g.bias.shape() != p.bias.shape() {
            return Err(Error::ShapeMismatch {
                expected: p.weight.shape().to_vec(),
                actual: g.weight.shape().to_vec(),
                context: format!("adam_step layer {i}"),
            });
        }
        update(&mut p.weight, &mut m.m_weight, &mut m.v_weight, &g.weight, config, bc1, bc2);
        update(&mut p.bias, &mut m.m_bias, &mut m.v_bias, &g.bias, config, bc1, bc2);
    }
    Ok(())
}

fn update(
    param: &mut Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    grad: &Tensor,
    c: &AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    let pd = param.data_mut();
    let md = m.data_mut();
    let vd = v.data_mut();
    let gd = grad.data();
    for i in 0..pd.len() {
        md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gd[i];
        vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gd[i] * gd[i];
        let m_hat = md[i] / bc1;
        let v_hat = vd[i] / bc2;
        pd[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
}
