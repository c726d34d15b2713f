use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::skeleton_graph;
use crate::error::{Error, Result};
use crate::nn::{join, r, uniform_fan_in, LayerNorm, LayerNormCache, Linear, Params, Real};
use crate::preprocess::{PoseSequence, N_KEYPOINTS};

pub const INPUT_CHANNELS: usize = 2;

/// How the per-block temporal convolution mixes channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemporalMixing {
    /// Dense `width x width` kernel at every tap.
    Full,
    /// One kernel per channel; channels are mixed only by the spatial step.
    Depthwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoEncoderConfig {
    pub blocks: usize,
    pub width: usize,
    pub kernel: usize,
    pub mixing: TemporalMixing,
}

impl Default for VideoEncoderConfig {
    fn default() -> Self {
        VideoEncoderConfig {
            blocks: 6,
            width: 64,
            kernel: 9,
            mixing: TemporalMixing::Full,
        }
    }
}

impl VideoEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.width == 0 {
            return Err(Error::Config("video encoder needs at least one block of non-zero width".into()));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("temporal kernel must be odd, got {}", self.kernel)));
        }
        Ok(())
    }

    /// Frames on each side of `t` that can influence output frame `t`.
    pub fn receptive_radius(&self) -> usize {
        self.blocks * (self.kernel - 1) / 2
    }
}

/// Spatial graph convolution, temporal convolution with edge-replicated
/// padding, layer normalization over channels, residual, ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnBlock<R> {
    pub spatial: Linear<R>,
    /// `[kernel, width, width]` for full mixing, `[kernel, 1, width]` for depthwise.
    pub temporal_w: Array3<R>,
    pub temporal_b: Array1<R>,
    pub norm: LayerNorm<R>,
    pub residual: Option<Linear<R>>,
}

struct BlockCache<R> {
    aggregated: Array2<R>,
    spatial_out: Array2<R>,
    norm: LayerNormCache<R>,
    out: Array2<R>,
}

/// Rows are `(frame, node)` pairs, frame-major.
fn aggregate<R: Real>(x: ArrayView2<R>, frames: usize) -> Array2<R> {
    let graph = skeleton_graph();
    let v = N_KEYPOINTS;
    let c = x.ncols();
    let weights: Vec<Vec<(usize, R)>> = graph
        .neighbors
        .iter()
        .map(|n| n.iter().map(|&(u, w)| (u, r::<R>(w))).collect())
        .collect();
    let mut out = Array2::<R>::zeros((frames * v, c));
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    for t in 0..frames {
        let base = t * v * c;
        for (node, nbrs) in weights.iter().enumerate() {
            let dst = base + node * c;
            for &(u, w) in nbrs {
                let src = base + u * c;
                for k in 0..c {
                    os[dst + k] += w * xs[src + k];
                }
            }
        }
    }
    out
}

impl<R: Real> GcnBlock<R> {
    pub fn new(rng: &mut impl Rng, input: usize, width: usize, kernel: usize, mixing: TemporalMixing) -> Self {
        let spatial = Linear::new(rng, input, width);
        let (rows, fan_in) = match mixing {
            TemporalMixing::Full => (width, kernel * width),
            TemporalMixing::Depthwise => (1, kernel),
        };
        let temporal_w = Array3::from_shape_vec(
            (kernel, rows, width),
            uniform_fan_in(rng, fan_in, kernel * rows * width),
        )
        .unwrap();
        let temporal_b = Array1::from(uniform_fan_in(rng, fan_in, width));
        let residual = (input != width).then(|| Linear::new(rng, input, width));
        GcnBlock {
            spatial,
            temporal_w,
            temporal_b,
            norm: LayerNorm::new(width),
            residual,
        }
    }

    pub fn width(&self) -> usize {
        self.temporal_b.len()
    }

    pub fn kernel(&self) -> usize {
        self.temporal_w.shape()[0]
    }

    fn depthwise(&self) -> bool {
        self.temporal_w.shape()[1] == 1
    }

    fn temporal_forward(&self, g: &Array2<R>, frames: usize) -> Array2<R> {
        let v = N_KEYPOINTS;
        let c = self.width();
        let k = self.kernel();
        let pad = (k - 1) / 2;
        let mut z = Array2::<R>::zeros((frames * v, c));
        z.rows_mut().into_iter().for_each(|mut row| row.assign(&self.temporal_b));
        if self.depthwise() {
            let gs = g.as_slice().unwrap();
            let zs = z.as_slice_mut().unwrap();
            let block = v * c;
            for t in 0..frames {
                for j in 0..k {
                    let src = (t + j).saturating_sub(pad).min(frames - 1);
                    let w = self.temporal_w.slice(s![j, 0, ..]);
                    let w = w.as_slice().unwrap();
                    let zb = &mut zs[t * block..(t + 1) * block];
                    let gb = &gs[src * block..(src + 1) * block];
                    for (zr, gr) in zb.chunks_exact_mut(c).zip(gb.chunks_exact(c)) {
                        for ch in 0..c {
                            zr[ch] += gr[ch] * w[ch];
                        }
                    }
                }
            }
            return z;
        }
        for j in 0..k {
            let w = self.temporal_w.slice(s![j, .., ..]);
            let d = j as isize - pad as isize;
            // interior: source frame t + d lies inside the clip
            let t0 = (-d).max(0) as usize;
            let t1 = (frames as isize - d).min(frames as isize).max(0) as usize;
            if t0 < t1 {
                let src = g.slice(s![((t0 as isize + d) as usize) * v..((t1 as isize + d) as usize) * v, ..]);
                let mut dst = z.slice_mut(s![t0 * v..t1 * v, ..]);
                ndarray::linalg::general_mat_mul(R::one(), &src, &w, R::one(), &mut dst);
            }
            // replicated edges
            let edges = [(0..t0.min(frames), 0usize), (t1.max(t0)..frames, frames - 1)];
            for (range, src_frame) in edges {
                if range.is_empty() {
                    continue;
                }
                let contrib = g.slice(s![src_frame * v..(src_frame + 1) * v, ..]).dot(&w);
                for t in range {
                    let mut dst = z.slice_mut(s![t * v..(t + 1) * v, ..]);
                    dst += &contrib;
                }
            }
        }
        z
    }

    /// Accumulates kernel/bias gradients; returns `dL/dg`.
    fn temporal_backward(&self, g: &Array2<R>, dz: &Array2<R>, frames: usize, grad: &mut GcnBlock<R>) -> Array2<R> {
        let v = N_KEYPOINTS;
        let c = self.width();
        let k = self.kernel();
        let pad = (k - 1) / 2;
        grad.temporal_b += &dz.sum_axis(Axis(0));
        let mut dg = Array2::<R>::zeros((frames * v, c));
        if self.depthwise() {
            let gs = g.as_slice().unwrap();
            let dzs = dz.as_slice().unwrap();
            let dgs = dg.as_slice_mut().unwrap();
            let block = v * c;
            for t in 0..frames {
                for j in 0..k {
                    let src = (t + j).saturating_sub(pad).min(frames - 1);
                    let w = self.temporal_w.slice(s![j, 0, ..]);
                    let w = w.as_slice().unwrap();
                    let mut gw = grad.temporal_w.slice_mut(s![j, 0, ..]);
                    let gw = gw.as_slice_mut().unwrap();
                    let dzb = &dzs[t * block..(t + 1) * block];
                    let gb = &gs[src * block..(src + 1) * block];
                    let dgb = &mut dgs[src * block..(src + 1) * block];
                    for ((dzr, gr), dgr) in dzb.chunks_exact(c).zip(gb.chunks_exact(c)).zip(dgb.chunks_exact_mut(c)) {
                        for ch in 0..c {
                            dgr[ch] += dzr[ch] * w[ch];
                            gw[ch] += dzr[ch] * gr[ch];
                        }
                    }
                }
            }
            return dg;
        }
        for j in 0..k {
            let w = self.temporal_w.slice(s![j, .., ..]);
            let d = j as isize - pad as isize;
            let t0 = (-d).max(0) as usize;
            let t1 = (frames as isize - d).min(frames as isize).max(0) as usize;
            if t0 < t1 {
                let s0 = ((t0 as isize + d) as usize) * v;
                let s1 = ((t1 as isize + d) as usize) * v;
                let src = g.slice(s![s0..s1, ..]);
                let dzs = dz.slice(s![t0 * v..t1 * v, ..]);
                let mut gw = grad.temporal_w.slice_mut(s![j, .., ..]);
                ndarray::linalg::general_mat_mul(R::one(), &src.t(), &dzs, R::one(), &mut gw);
                let mut dsrc = dg.slice_mut(s![s0..s1, ..]);
                ndarray::linalg::general_mat_mul(R::one(), &dzs, &w.t(), R::one(), &mut dsrc);
            }
            let edges = [(0..t0.min(frames), 0usize), (t1.max(t0)..frames, frames - 1)];
            for (range, src_frame) in edges {
                if range.is_empty() {
                    continue;
                }
                let mut acc = Array2::<R>::zeros((v, c));
                for t in range {
                    acc += &dz.slice(s![t * v..(t + 1) * v, ..]);
                }
                let src = g.slice(s![src_frame * v..(src_frame + 1) * v, ..]);
                let mut gw = grad.temporal_w.slice_mut(s![j, .., ..]);
                ndarray::linalg::general_mat_mul(R::one(), &src.t(), &acc, R::one(), &mut gw);
                let mut dsrc = dg.slice_mut(s![src_frame * v..(src_frame + 1) * v, ..]);
                ndarray::linalg::general_mat_mul(R::one(), &acc, &w.t(), R::one(), &mut dsrc);
            }
        }
        dg
    }

    fn forward(&self, h: ArrayView2<R>, frames: usize, keep: bool) -> (Array2<R>, Option<BlockCache<R>>) {
        let aggregated = aggregate(h, frames);
        let spatial_out = self.spatial.forward(aggregated.view());
        let z = self.temporal_forward(&spatial_out, frames);
        let (mut out, norm) = self.norm.forward(z.view());
        match &self.residual {
            Some(proj) => out += &proj.forward(h),
            None => out += &h,
        }
        out.mapv_inplace(|x| if x > R::zero() { x } else { R::zero() });
        let cache = keep.then(|| BlockCache {
            aggregated,
            spatial_out,
            norm,
            out: out.clone(),
        });
        (out, cache)
    }

    fn backward(
        &self,
        h: ArrayView2<R>,
        cache: &BlockCache<R>,
        dout: &Array2<R>,
        frames: usize,
        grad: &mut GcnBlock<R>,
    ) -> Array2<R> {
        let mut dpre = dout.clone();
        ndarray::Zip::from(&mut dpre)
            .and(&cache.out)
            .for_each(|d, &o| {
                if o <= R::zero() {
                    *d = R::zero();
                }
            });
        let mut dh = match (&self.residual, &mut grad.residual) {
            (Some(proj), Some(gproj)) => proj.backward(h, dpre.view(), gproj),
            _ => dpre.clone(),
        };
        let dz = self.norm.backward(dpre.view(), &cache.norm, &mut grad.norm);
        let dg = self.temporal_backward(&cache.spatial_out, &dz, frames, grad);
        let dagg = self.spatial.backward(cache.aggregated.view(), dg.view(), &mut grad.spatial);
        // the normalized adjacency is symmetric, so aggregation is self-adjoint
        dh += &aggregate(dagg.view(), frames);
        dh
    }
}

impl<R: Real> Params<R> for GcnBlock<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        self.spatial.visit(&join(prefix, "spatial"), f);
        f(join(prefix, "temporal.weight"), self.temporal_w.view().into_dyn());
        f(join(prefix, "temporal.bias"), self.temporal_b.view().into_dyn());
        self.norm.visit(&join(prefix, "norm"), f);
        if let Some(res) = &self.residual {
            res.visit(&join(prefix, "residual"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        self.spatial.visit_mut(&join(prefix, "spatial"), f);
        f(join(prefix, "temporal.weight"), self.temporal_w.view_mut().into_dyn());
        f(join(prefix, "temporal.bias"), self.temporal_b.view_mut().into_dyn());
        self.norm.visit_mut(&join(prefix, "norm"), f);
        if let Some(res) = &mut self.residual {
            res.visit_mut(&join(prefix, "residual"), f);
        }
    }
}

/// Learnable per-keypoint, per-channel affine on raw coordinates:
/// `x' = (x - shift) * scale`. Starts as the identity; [`InputNorm::fit`]
/// sets it to standardize a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNorm<R> {
    pub shift: Array2<R>,
    pub scale: Array2<R>,
}

// Keypoints that never move (e.g. always missing) would otherwise get an
// unbounded scale.
const MIN_STD: f64 = 1e-3;

impl<R: Real> InputNorm<R> {
    pub fn identity() -> Self {
        InputNorm {
            shift: Array2::zeros((N_KEYPOINTS, INPUT_CHANNELS)),
            scale: Array2::ones((N_KEYPOINTS, INPUT_CHANNELS)),
        }
    }

    /// Mean and inverse standard deviation over the valid frames of `videos`.
    /// Leaves the layer unchanged when there are no valid frames.
    pub fn fit(&mut self, videos: &[PoseSequence]) {
        let mut sum = Array2::<f64>::zeros((N_KEYPOINTS, INPUT_CHANNELS));
        let mut sq = sum.clone();
        let mut n = 0usize;
        for v in videos {
            for (frame, _) in v.frames.axis_iter(Axis(0)).zip(&v.mask).filter(|(_, &m)| m) {
                let f = frame.mapv(|x| x as f64);
                sq += &(&f * &f);
                sum += &f;
                n += 1;
            }
        }
        if n == 0 {
            return;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - &mean * &mean;
        self.shift = mean.mapv(r::<R>);
        self.scale = var.mapv(|v| r::<R>(1.0 / v.max(0.0).sqrt().max(MIN_STD)));
    }

    /// Rows are (frame, keypoint), frame-major.
    fn forward(&self, x: &mut Array2<R>) {
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let k = i % N_KEYPOINTS;
            for c in 0..INPUT_CHANNELS {
                row[c] = (row[c] - self.shift[[k, c]]) * self.scale[[k, c]];
            }
        }
    }

    fn backward(&self, raw: &Array2<R>, d: &Array2<R>, grad: &mut InputNorm<R>) {
        for (i, (x, dy)) in raw.rows().into_iter().zip(d.rows()).enumerate() {
            let k = i % N_KEYPOINTS;
            for c in 0..INPUT_CHANNELS {
                grad.scale[[k, c]] += dy[c] * (x[c] - self.shift[[k, c]]);
                grad.shift[[k, c]] -= dy[c] * self.scale[[k, c]];
            }
        }
    }
}

impl<R: Real> Params<R> for InputNorm<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        f(join(prefix, "shift"), self.shift.view().into_dyn());
        f(join(prefix, "scale"), self.scale.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        f(join(prefix, "shift"), self.shift.view_mut().into_dyn());
        f(join(prefix, "scale"), self.scale.view_mut().into_dyn());
    }
}

/// Input normalization, a stack of [`GcnBlock`]s, then a mean over the 75
/// nodes, giving one feature vector per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEncoder<R> {
    pub input_norm: InputNorm<R>,
    pub blocks: Vec<GcnBlock<R>>,
}

/// Activations retained by [`VideoEncoder::forward_train`].
pub struct VideoCache<R> {
    frames: usize,
    raw: Array2<R>,
    inputs: Vec<Array2<R>>,
    blocks: Vec<BlockCache<R>>,
}

impl<R: Real> VideoEncoder<R> {
    pub fn new(rng: &mut impl Rng, cfg: &VideoEncoderConfig) -> Self {
        let mut input = INPUT_CHANNELS;
        let blocks = (0..cfg.blocks)
            .map(|_| {
                let b = GcnBlock::new(rng, input, cfg.width, cfg.kernel, cfg.mixing);
                input = cfg.width;
                b
            })
            .collect();
        VideoEncoder {
            input_norm: InputNorm::identity(),
            blocks,
        }
    }

    /// Fits [`InputNorm`] to the valid frames of `videos`.
    pub fn fit_input_norm(&mut self, videos: &[PoseSequence]) {
        self.input_norm.fit(videos);
    }

    pub fn width(&self) -> usize {
        self.blocks.last().map(|b| b.width()).unwrap_or(INPUT_CHANNELS)
    }

    pub fn config(&self) -> VideoEncoderConfig {
        let first = &self.blocks[0];
        VideoEncoderConfig {
            blocks: self.blocks.len(),
            width: self.width(),
            kernel: first.kernel(),
            mixing: if first.depthwise() && first.width() > 1 {
                TemporalMixing::Depthwise
            } else {
                TemporalMixing::Full
            },
        }
    }

    fn input_rows(seq: &PoseSequence) -> Result<Array2<R>> {
        seq.check_finite()?;
        let n = seq.n_frames();
        let flat: Vec<R> = seq.frames.iter().map(|&v| r::<R>(v as f64)).collect();
        Ok(Array2::from_shape_vec((n * N_KEYPOINTS, INPUT_CHANNELS), flat).unwrap())
    }

    fn pool(out: &Array2<R>, frames: usize) -> Array2<R> {
        let c = out.ncols();
        let inv = r::<R>(1.0 / N_KEYPOINTS as f64);
        out.to_shape((frames, N_KEYPOINTS, c))
            .unwrap()
            .sum_axis(Axis(1))
            .mapv(|x| x * inv)
    }

    /// Per-frame features `[n_frames, width]`.
    pub fn forward(&self, seq: &PoseSequence) -> Result<Array2<R>> {
        let frames = seq.n_frames();
        let mut h = Self::input_rows(seq)?;
        self.input_norm.forward(&mut h);
        for b in &self.blocks {
            h = b.forward(h.view(), frames, false).0;
        }
        Ok(Self::pool(&h, frames))
    }

    pub fn forward_train(&self, seq: &PoseSequence) -> Result<(Array2<R>, VideoCache<R>)> {
        let frames = seq.n_frames();
        let raw = Self::input_rows(seq)?;
        let mut h = raw.clone();
        self.input_norm.forward(&mut h);
        let mut inputs = vec![h];
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, cache) = b.forward(inputs.last().unwrap().view(), frames, true);
            inputs.push(out);
            caches.push(cache.unwrap());
        }
        let last = inputs.pop().unwrap();
        let pooled = Self::pool(&last, frames);
        Ok((
            pooled,
            VideoCache {
                frames,
                raw,
                inputs,
                blocks: caches,
            },
        ))
    }

    /// Backpropagates `dL/d(per-frame features)` into `grad`.
    pub fn backward(&self, cache: &VideoCache<R>, dpooled: ArrayView2<R>, grad: &mut VideoEncoder<R>) {
        let frames = cache.frames;
        let c = self.width();
        let inv = r::<R>(1.0 / N_KEYPOINTS as f64);
        let mut d = Array2::<R>::zeros((frames * N_KEYPOINTS, c));
        for t in 0..frames {
            let row = dpooled.row(t).mapv(|x| x * inv);
            d.slice_mut(s![t * N_KEYPOINTS..(t + 1) * N_KEYPOINTS, ..])
                .rows_mut()
                .into_iter()
                .for_each(|mut r| r.assign(&row));
        }
        for (i, b) in self.blocks.iter().enumerate().rev() {
            d = b.backward(cache.inputs[i].view(), &cache.blocks[i], &d, frames, &mut grad.blocks[i]);
        }
        self.input_norm.backward(&cache.raw, &d, &mut grad.input_norm);
    }
}

impl<R: Real> Params<R> for VideoEncoder<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        self.input_norm.visit(&join(prefix, "input_norm"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        self.input_norm.visit_mut(&join(prefix, "input_norm"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{i}")), f);
        }
    }
}

/// Convenience wrapper matching the encoder's inference contract.
pub fn video_encode<R: Real>(seq: &PoseSequence, params: &VideoEncoder<R>) -> Result<Array2<R>> {
    params.forward(seq)
}
