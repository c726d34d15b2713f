use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{assign_flat, flatten, Params};

/// Relative errors between the analytic directional derivative `grad . d`
/// and the central difference `(L(p + h d) - L(p - h d)) / 2h`, for
/// `n_dirs` random unit directions `d`.
pub fn directional_errors<P, F>(params: &P, grad: &P, loss: F, n_dirs: usize, h: f64, rng: &mut impl Rng) -> Vec<f64>
where
    P: Params<f64> + Clone,
    F: Fn(&P) -> f64,
{
    let base = flatten(params);
    let g = flatten(grad);
    let mut probe = params.clone();
    (0..n_dirs)
        .map(|_| {
            let mut d: Vec<f64> = (0..base.len()).map(|_| StandardNormal.sample(rng)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.iter_mut().for_each(|v| *v /= norm);
            let analytic: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let shifted = |sign: f64| -> Vec<f64> { base.iter().zip(&d).map(|(p, v)| p + sign * h * v).collect() };
            assign_flat(&mut probe, &shifted(1.0));
            let up = loss(&probe);
            assign_flat(&mut probe, &shifted(-1.0));
            let down = loss(&probe);
            let numeric = (up - down) / (2.0 * h);
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
        })
        .collect()
}
