use serde::{Deserialize, Serialize};

use super::{Grads, Matrix, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

/// First-order optimizer state for one [`ParamSet`].
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<Matrix>,
        v: Vec<Matrix>,
    },
    Rmsprop {
        decay: f64,
        eps: f64,
        ms: Vec<Matrix>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|(_, _, t)| Matrix::zeros(t.rows, t.cols))
            .collect();
        match kind {
            OptimizerKind::Adam => Optimizer::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                t: 0,
                m: zeros.clone(),
                v: zeros,
            },
            OptimizerKind::Rmsprop => Optimizer::Rmsprop {
                decay: 0.9,
                eps: 1e-8,
                ms: zeros,
            },
        }
    }

    /// One update with learning rate `lr`. Parameters without a gradient are
    /// left alone (their moments do not decay).
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads, lr: f64) {
        match self {
            Optimizer::Adam {
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for (id, g) in grads.iter() {
                    let p = params.get_mut(id);
                    let (m, v) = (&mut m[id.0], &mut v[id.0]);
                    for k in 0..g.data.len() {
                        let gk = g.data[k];
                        m.data[k] = *beta1 * m.data[k] + (1.0 - *beta1) * gk;
                        v.data[k] = *beta2 * v.data[k] + (1.0 - *beta2) * gk * gk;
                        let mhat = m.data[k] / bc1;
                        let vhat = v.data[k] / bc2;
                        p.data[k] -= lr * mhat / (vhat.sqrt() + *eps);
                    }
                }
            }
            Optimizer::Rmsprop { decay, eps, ms } => {
                for (id, g) in grads.iter() {
                    let p = params.get_mut(id);
                    let s = &mut ms[id.0];
                    for k in 0..g.data.len() {
                        let gk = g.data[k];
                        s.data[k] = *decay * s.data[k] + (1.0 - *decay) * gk * gk;
                        p.data[k] -= lr * gk / (s.data[k].sqrt() + *eps);
                    }
                }
            }
        }
    }
}
