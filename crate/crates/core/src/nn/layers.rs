use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::{join, r, uniform_fan_in, Params, Real};

/// Affine map on row vectors: `y = x W + b`, `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<R> {
    pub w: Array2<R>,
    pub b: Array1<R>,
}

impl<R: Real> Linear<R> {
    pub fn new(rng: &mut impl Rng, input: usize, output: usize) -> Self {
        let w = Array2::from_shape_vec((input, output), uniform_fan_in(rng, input, input * output))
            .unwrap();
        let b = Array1::from(uniform_fan_in(rng, input, output));
        Linear { w, b }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<R>) -> Array2<R> {
        let mut y = Array2::zeros((x.nrows(), self.output_dim()));
        y.rows_mut().into_iter().for_each(|mut row| row.assign(&self.b));
        general_mat_mul(R::one(), &x, &self.w, R::one(), &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<R>, dy: ArrayView2<R>, grad: &mut Linear<R>) -> Array2<R> {
        general_mat_mul(R::one(), &x.t(), &dy, R::one(), &mut grad.w);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

impl<R: Real> Params<R> for Linear<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        f(join(prefix, "weight"), self.w.view().into_dyn());
        f(join(prefix, "bias"), self.b.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        f(join(prefix, "weight"), self.w.view_mut().into_dyn());
        f(join(prefix, "bias"), self.b.view_mut().into_dyn());
    }
}

/// Normalization over the last axis of each row, with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<R> {
    pub gamma: Array1<R>,
    pub beta: Array1<R>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<R> {
    pub xhat: Array2<R>,
    pub inv_std: Array1<R>,
}

const LN_EPS: f64 = 1e-5;

impl<R: Real> LayerNorm<R> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: ArrayView2<R>) -> (Array2<R>, LayerNormCache<R>) {
        let d = x.ncols();
        let inv_d = r::<R>(1.0) / r::<R>(d as f64);
        let eps = r::<R>(LN_EPS);
        let mut xhat = x.to_owned();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() * inv_d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().fold(R::zero(), |acc, &v| acc + v * v) * inv_d;
            *is = R::one() / (var + eps).sqrt();
            let s = *is;
            row.mapv_inplace(|v| v * s);
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, dy: ArrayView2<R>, cache: &LayerNormCache<R>, grad: &mut LayerNorm<R>) -> Array2<R> {
        grad.gamma += &(&dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let d = dy.ncols();
        let inv_d = r::<R>(1.0) / r::<R>(d as f64);
        let mut dx = &dy * &self.gamma;
        for ((mut row, xh), &is) in dx
            .rows_mut()
            .into_iter()
            .zip(cache.xhat.rows())
            .zip(cache.inv_std.iter())
        {
            let mean_g = row.sum() * inv_d;
            let mean_gx = row.iter().zip(xh.iter()).fold(R::zero(), |a, (&g, &x)| a + g * x) * inv_d;
            for (g, &x) in row.iter_mut().zip(xh.iter()) {
                *g = is * (*g - mean_g - x * mean_gx);
            }
        }
        dx
    }
}

impl<R: Real> Params<R> for LayerNorm<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        f(join(prefix, "gamma"), self.gamma.view().into_dyn());
        f(join(prefix, "beta"), self.beta.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        f(join(prefix, "gamma"), self.gamma.view_mut().into_dyn());
        f(join(prefix, "beta"), self.beta.view_mut().into_dyn());
    }
}

// tanh approximation
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu<R: Real>(x: R) -> R {
    let c = r::<R>(GELU_C);
    let a = r::<R>(GELU_A);
    let half = r::<R>(0.5);
    half * x * (R::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<R: Real>(x: R) -> R {
    let c = r::<R>(GELU_C);
    let a = r::<R>(GELU_A);
    let half = r::<R>(0.5);
    let three = r::<R>(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (R::one() + t) + half * x * (R::one() - t * t) * c * (R::one() + three * a * x * x)
}
