//! Small dense-layer toolkit with hand-written backward passes. Every model
//! in the crate is generic over [`Real`] so training runs in `f32` while
//! gradient checks run the very same code in `f64`.

mod adam;
pub mod gradcheck;
mod layers;

use ndarray::{ArrayViewD, ArrayViewMutD, NdFloat};
use num_traits::FromPrimitive;
use rand::Rng;

pub use adam::Adam;
pub use layers::{gelu, gelu_grad, LayerNorm, LayerNormCache, Linear};

pub trait Real: NdFloat + FromPrimitive + Default {}

impl<T: NdFloat + FromPrimitive + Default> Real for T {}

#[inline]
pub fn r<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("representable constant")
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Named parameter tensors in a fixed traversal order. A gradient buffer
/// is a value of the same type, so both sides visit identically.
pub trait Params<R: Real> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>));
}

pub fn num_params<R: Real, P: Params<R>>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, a| n += a.len());
    n
}

pub fn flatten<R: Real, P: Params<R>>(p: &P) -> Vec<R> {
    let mut out = Vec::new();
    p.visit("", &mut |_, a| out.extend(a.iter().copied()));
    out
}

pub fn assign_flat<R: Real, P: Params<R>>(p: &mut P, values: &[R]) {
    let mut off = 0;
    p.visit_mut("", &mut |_, mut a| {
        for (dst, src) in a.iter_mut().zip(&values[off..]) {
            *dst = *src;
        }
        off += a.len();
    });
    assert_eq!(off, values.len(), "flat parameter length mismatch");
}

pub fn fill<R: Real, P: Params<R>>(p: &mut P, value: R) {
    p.visit_mut("", &mut |_, mut a| a.fill(value));
}

/// A zeroed buffer shaped like `p`.
pub fn zeros_like<R: Real, P: Params<R> + Clone>(p: &P) -> P {
    let mut z = p.clone();
    fill(&mut z, R::zero());
    z
}

pub fn scale<R: Real, P: Params<R>>(p: &mut P, alpha: R) {
    p.visit_mut("", &mut |_, mut a| a.mapv_inplace(|v| v * alpha));
}

pub fn all_finite<R: Real, P: Params<R>>(p: &P) -> bool {
    let mut ok = true;
    p.visit("", &mut |_, a| ok &= a.iter().all(|v| v.is_finite()));
    ok
}

/// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_fan_in<R: Real>(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<R> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| r(rng.random_range(-bound..bound))).collect()
}
