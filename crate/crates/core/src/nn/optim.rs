//! Stochastic gradient descent with momentum and decoupled-on-gradient
//! weight decay: `v = mu*v + (g + wd*theta)`, `theta -= lr*v`.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub struct SgdMomentum {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor>,
}

impl SgdMomentum {
    pub fn new(params: &[&Tensor], momentum: f64, weight_decay: f64) -> Self {
        SgdMomentum {
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(Error::Contract(
                "optimizer state does not match parameter structure".to_string(),
            ));
        }
        for ((p, g), v) in params.iter_mut().zip(grads.iter()).zip(self.velocity.iter_mut()) {
            let pd = p.data_mut();
            let gd = g.data();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                vd[i] = self.momentum * vd[i] + (gd[i] + self.weight_decay * pd[i]);
                pd[i] -= lr * vd[i];
            }
        }
        Ok(())
    }
}
