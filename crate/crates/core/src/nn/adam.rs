use super::{flatten, Params, Real};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<R> {
    pub lr: R,
    pub beta1: R,
    pub beta2: R,
    pub eps: R,
    step: i32,
    m: Vec<R>,
    v: Vec<R>,
}

impl<R: Real> Adam<R> {
    pub fn new(lr: R) -> Self {
        Adam {
            lr,
            beta1: super::r(0.9),
            beta2: super::r(0.999),
            eps: super::r(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step<P: Params<R>>(&mut self, params: &mut P, grads: &P) {
        let g = flatten(grads);
        if self.m.is_empty() {
            self.m = vec![R::zero(); g.len()];
            self.v = vec![R::zero(); g.len()];
        }
        assert_eq!(g.len(), self.m.len(), "parameter count changed between steps");
        self.step += 1;
        let one = R::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut off = 0;
        params.visit_mut("", &mut |_, mut a| {
            for (i, p) in a.iter_mut().enumerate() {
                let k = off + i;
                m[k] = b1 * m[k] + (one - b1) * g[k];
                v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
            off += a.len();
        });
    }
}
