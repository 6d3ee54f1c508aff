use std::collections::HashMap;

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One bias-corrected Adam update of a flat parameter slice. `t` counts
/// from 1.
pub fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    hp: &AdamHyper,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("Adam step index starts at 1"));
    }
    let n = param.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(Error::invalid("gradient and moments must match the parameter"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..n {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grad[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}

/// Adam moments for every model parameter, in [`ModelParams::named`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub step: u64,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl Adam {
    pub fn new(params: &ModelParams, hyper: AdamHyper) -> Self {
        let zeros: Vec<Array> = params
            .named()
            .iter()
            .map(|(_, a)| Array::zeros(a.shape()))
            .collect();
        Self {
            hyper,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one step to all parameters. Nothing is modified if any
    /// gradient is missing, misshapen or non-finite.
    pub fn update(&mut self, params: &mut ModelParams, grads: &HashMap<String, Array>) -> Result<()> {
        let mut named = params.named_mut();
        if named.len() != self.m.len() {
            return Err(Error::invalid("optimizer state belongs to another model"));
        }
        for (name, p) in &named {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::invalid(format!("no gradient for `{name}`")))?;
            if g.shape() != p.shape() {
                return Err(Error::invalid(format!("gradient for `{name}` is misshapen")));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        self.step += 1;
        for (i, (name, p)) in named.iter_mut().enumerate() {
            adam_step(
                p.data_mut(),
                grads[name.as_str()].data(),
                self.m[i].data_mut(),
                self.v[i].data_mut(),
                &self.hyper,
                self.step,
            )?;
        }
        Ok(())
    }
}
