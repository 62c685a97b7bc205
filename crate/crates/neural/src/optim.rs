use crate::params::{Grads, ParamStore};
use crate::tensor::Mat;

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates applied so far.
    pub t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, _, p)| Mat::zeros(p.rows(), p.cols())).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Restores saved moments; shapes must line up with `params`.
    pub fn from_state(
        params: &ParamStore,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<Mat>,
        v: Vec<Mat>,
    ) -> Option<Self> {
        let fits = |ms: &[Mat]| {
            ms.len() == params.len()
                && ms
                    .iter()
                    .zip(params.iter())
                    .all(|(a, (_, _, p))| a.shape() == p.shape())
        };
        (fits(&m) && fits(&v)).then_some(Adam {
            beta1,
            beta2,
            eps,
            t,
            m,
            v,
        })
    }

    pub fn first_moments(&self) -> &[Mat] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Mat] {
        &self.v
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (id, g) in grads.iter() {
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = params.get_mut(id);
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}
