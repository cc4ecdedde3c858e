//! Supervised-training optimizers.

use serde::{Deserialize, Serialize};

use crate::models::params::{Grads, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Descent step on a loss: `θ ← θ − lr·update(g)`.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd,
    Adam {
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        t: i32,
    },
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
                v: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads, lr: f64) {
        match self {
            Optimizer::Sgd => params.apply(grads, -lr),
            Optimizer::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t);
                let c2 = 1.0 - BETA2.powi(*t);
                for slot in 0..params.len() {
                    let Some(g) = grads.get(slot) else { continue };
                    let p = params.get_mut(slot);
                    let (ms, vs) = (&mut m[slot], &mut v[slot]);
                    for i in 0..p.data.len() {
                        let gi = g.data[i];
                        ms[i] = BETA1 * ms[i] + (1.0 - BETA1) * gi;
                        vs[i] = BETA2 * vs[i] + (1.0 - BETA2) * gi * gi;
                        let upd = (ms[i] / c1) / ((vs[i] / c2).sqrt() + EPS);
                        p.data[i] = (p.data[i] as f64 - lr * upd) as f32;
                    }
                }
            }
        }
    }
}
