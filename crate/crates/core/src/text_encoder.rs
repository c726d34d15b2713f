//! Character-level transformer over hashed Unicode code points.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gelu, gelu_grad, join, r, uniform_fan_in, LayerNorm, LayerNormCache, Linear, Params, Real};
use crate::preprocess::{PaddedText, DEFAULT_TEXT_CHARS};

pub const DEFAULT_BUCKETS: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    pub ffn_width: usize,
    /// Longest input, in code points (size of the position table).
    pub max_len: usize,
    pub buckets: usize,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        TextEncoderConfig {
            layers: 12,
            heads: 12,
            width: 768,
            ffn_width: 3072,
            max_len: DEFAULT_TEXT_CHARS,
            buckets: DEFAULT_BUCKETS,
        }
    }
}

impl TextEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "text width {} must be a positive multiple of the head count {}",
                self.width, self.heads
            )));
        }
        if self.max_len == 0 || self.buckets == 0 || self.ffn_width == 0 {
            return Err(Error::Config("text encoder sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Embedding row for a code point.
pub fn bucket(code_point: u32, buckets: usize) -> usize {
    (code_point.wrapping_mul(0x9E37_79B1) as usize) % buckets
}

/// Pre-norm transformer layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayer<R> {
    pub norm1: LayerNorm<R>,
    pub qkv: Linear<R>,
    pub proj: Linear<R>,
    pub norm2: LayerNorm<R>,
    pub ff1: Linear<R>,
    pub ff2: Linear<R>,
}

struct LayerCache<R> {
    n1: LayerNormCache<R>,
    y1: Array2<R>,
    qkv: Array2<R>,
    probs: Vec<Array2<R>>,
    attn: Array2<R>,
    n2: LayerNormCache<R>,
    y2: Array2<R>,
    hidden: Array2<R>,
    activated: Array2<R>,
}

impl<R: Real> TransformerLayer<R> {
    fn new(rng: &mut impl Rng, width: usize, ffn: usize) -> Self {
        TransformerLayer {
            norm1: LayerNorm::new(width),
            qkv: Linear::new(rng, width, 3 * width),
            proj: Linear::new(rng, width, width),
            norm2: LayerNorm::new(width),
            ff1: Linear::new(rng, width, ffn),
            ff2: Linear::new(rng, ffn, width),
        }
    }

    fn forward(&self, x: Array2<R>, heads: usize) -> (Array2<R>, LayerCache<R>) {
        let d = x.ncols();
        let dh = d / heads;
        let scale = r::<R>(1.0 / (dh as f64).sqrt());
        let (y1, n1) = self.norm1.forward(x.view());
        let qkv = self.qkv.forward(y1.view());
        let mut attn = Array2::<R>::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
            let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
            let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let mut p = q.dot(&k.t());
            for mut row in p.rows_mut() {
                let m = row.fold(R::neg_infinity(), |a, &b| a.max(b));
                row.mapv_inplace(|s| ((s - m) * scale).exp());
                let z = row.sum();
                row.mapv_inplace(|e| e / z);
            }
            attn.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&p.dot(&v));
            probs.push(p);
        }
        let mid = &x + &self.proj.forward(attn.view());
        let (y2, n2) = self.norm2.forward(mid.view());
        let hidden = self.ff1.forward(y2.view());
        let activated = hidden.mapv(gelu);
        let out = &mid + &self.ff2.forward(activated.view());
        let cache = LayerCache {
            n1,
            y1,
            qkv,
            probs,
            attn,
            n2,
            y2,
            hidden,
            activated,
        };
        (out, cache)
    }

    fn backward(&self, c: &LayerCache<R>, dout: Array2<R>, heads: usize, g: &mut TransformerLayer<R>) -> Array2<R> {
        let d = dout.ncols();
        let dh = d / heads;
        let scale = r::<R>(1.0 / (dh as f64).sqrt());

        let dact = self.ff2.backward(c.activated.view(), dout.view(), &mut g.ff2);
        let mut dhidden = dact;
        ndarray::Zip::from(&mut dhidden)
            .and(&c.hidden)
            .for_each(|dv, &hv| *dv *= gelu_grad(hv));
        let dy2 = self.ff1.backward(c.y2.view(), dhidden.view(), &mut g.ff1);
        let mut dmid = self.norm2.backward(dy2.view(), &c.n2, &mut g.norm2);
        dmid += &dout;

        let dattn = self.proj.backward(c.attn.view(), dmid.view(), &mut g.proj);
        let mut dqkv = Array2::<R>::zeros(c.qkv.raw_dim());
        for h in 0..heads {
            let q = c.qkv.slice(s![.., h * dh..(h + 1) * dh]);
            let k = c.qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
            let v = c.qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let p = &c.probs[h];
            let dho = dattn.slice(s![.., h * dh..(h + 1) * dh]);
            let dp = dho.dot(&v.t());
            let dv = p.t().dot(&dho);
            let mut ds = &dp * p;
            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let total = row.sum();
                for (dsv, &pv) in row.iter_mut().zip(prow.iter()) {
                    *dsv = (*dsv - pv * total) * scale;
                }
            }
            let dq = ds.dot(&k);
            let dk = ds.t().dot(&q);
            dqkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&dq);
            dqkv.slice_mut(s![.., d + h * dh..d + (h + 1) * dh]).assign(&dk);
            dqkv.slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]).assign(&dv);
        }
        let dy1 = self.qkv.backward(c.y1.view(), dqkv.view(), &mut g.qkv);
        let mut dx = self.norm1.backward(dy1.view(), &c.n1, &mut g.norm1);
        dx += &dmid;
        dx
    }
}

impl<R: Real> Params<R> for TransformerLayer<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.qkv.visit(&join(prefix, "qkv"), f);
        self.proj.visit(&join(prefix, "proj"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
        self.ff1.visit(&join(prefix, "ff1"), f);
        self.ff2.visit(&join(prefix, "ff2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.qkv.visit_mut(&join(prefix, "qkv"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
        self.ff1.visit_mut(&join(prefix, "ff1"), f);
        self.ff2.visit_mut(&join(prefix, "ff2"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder<R> {
    pub embed: Array2<R>,
    pub position: Array2<R>,
    pub layers: Vec<TransformerLayer<R>>,
    pub final_norm: LayerNorm<R>,
    pub heads: usize,
}

pub struct TextCache<R> {
    buckets: Vec<usize>,
    layers: Vec<LayerCache<R>>,
    final_norm: LayerNormCache<R>,
}

/// Per-character features (`[target, width]`, zero rows at pad positions)
/// and the masked-mean sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoding<R> {
    pub per_char: Array2<R>,
    pub pooled: Array1<R>,
}

impl<R: Real> TextEncoder<R> {
    pub fn new(rng: &mut impl Rng, cfg: &TextEncoderConfig) -> Self {
        let d = cfg.width;
        let embed = Array2::from_shape_vec((cfg.buckets, d), uniform_fan_in(rng, d, cfg.buckets * d)).unwrap();
        let position = Array2::from_shape_vec((cfg.max_len, d), uniform_fan_in::<R>(rng, d, cfg.max_len * d))
            .unwrap()
            .mapv(|v| v * r::<R>(0.1));
        let layers = (0..cfg.layers)
            .map(|_| TransformerLayer::new(rng, d, cfg.ffn_width))
            .collect();
        TextEncoder {
            embed,
            position,
            layers,
            final_norm: LayerNorm::new(d),
            heads: cfg.heads,
        }
    }

    pub fn width(&self) -> usize {
        self.embed.ncols()
    }

    pub fn max_len(&self) -> usize {
        self.position.nrows()
    }

    pub fn config(&self) -> TextEncoderConfig {
        TextEncoderConfig {
            layers: self.layers.len(),
            heads: self.heads,
            width: self.width(),
            ffn_width: self.layers.first().map(|l| l.ff1.output_dim()).unwrap_or(self.width()),
            max_len: self.max_len(),
            buckets: self.embed.nrows(),
        }
    }

    fn check_len(&self, text: &PaddedText) -> Result<()> {
        if text.target() > self.max_len() {
            return Err(Error::Validation(format!(
                "text of {} positions exceeds the encoder's {}",
                text.target(),
                self.max_len()
            )));
        }
        Ok(())
    }

    /// Runs the stack over the non-pad prefix only. With pad keys masked out
    /// of attention this is exactly the padded computation restricted to
    /// real positions, which is all the pooled vector depends on.
    fn run(&self, content: &[u32], keep: bool) -> (Array2<R>, Option<TextCache<R>>) {
        let n_buckets = self.embed.nrows();
        let buckets: Vec<usize> = content.iter().map(|&c| bucket(c, n_buckets)).collect();
        let mut x = Array2::<R>::zeros((content.len(), self.width()));
        for (i, &b) in buckets.iter().enumerate() {
            let row = &self.embed.row(b) + &self.position.row(i);
            x.row_mut(i).assign(&row);
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(x, self.heads);
            x = out;
            if keep {
                caches.push(cache);
            }
        }
        let (y, fcache) = self.final_norm.forward(x.view());
        let cache = keep.then_some(TextCache {
            buckets,
            layers: caches,
            final_norm: fcache,
        });
        (y, cache)
    }

    pub fn encode(&self, text: &PaddedText) -> Result<TextEncoding<R>> {
        self.check_len(text)?;
        let mut per_char = Array2::zeros((text.target(), self.width()));
        if text.len == 0 {
            return Ok(TextEncoding {
                per_char,
                pooled: Array1::zeros(self.width()),
            });
        }
        let (y, _) = self.run(text.content(), false);
        let pooled = y.mean_axis(Axis(0)).unwrap();
        per_char.slice_mut(s![..text.len, ..]).assign(&y);
        if !pooled.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("text encoder produced non-finite features".into()));
        }
        Ok(TextEncoding { per_char, pooled })
    }

    /// Pooled vector only, keeping activations for [`Self::backward`].
    /// `None` cache means the input was all padding.
    pub fn pooled_train(&self, text: &PaddedText) -> Result<(Array1<R>, Option<TextCache<R>>)> {
        self.check_len(text)?;
        if text.len == 0 {
            return Ok((Array1::zeros(self.width()), None));
        }
        let (y, cache) = self.run(text.content(), true);
        Ok((y.mean_axis(Axis(0)).unwrap(), cache))
    }

    pub fn backward(&self, cache: &TextCache<R>, dpooled: ArrayView1<R>, grad: &mut TextEncoder<R>) {
        let n = cache.buckets.len();
        let inv = r::<R>(1.0 / n as f64);
        let dy = Array2::from_shape_fn((n, self.width()), |(_, j)| dpooled[j] * inv);
        let mut dx = self.final_norm.backward(dy.view(), &cache.final_norm, &mut grad.final_norm);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            dx = layer.backward(&cache.layers[i], dx, self.heads, &mut grad.layers[i]);
        }
        for (i, &b) in cache.buckets.iter().enumerate() {
            let row = dx.row(i);
            let mut e = grad.embed.row_mut(b);
            e += &row;
            let mut p = grad.position.row_mut(i);
            p += &row;
        }
    }
}

impl<R: Real> Params<R> for TextEncoder<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        f(join(prefix, "embed"), self.embed.view().into_dyn());
        f(join(prefix, "position"), self.position.view().into_dyn());
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layer{i}")), f);
        }
        self.final_norm.visit(&join(prefix, "final_norm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        f(join(prefix, "embed"), self.embed.view_mut().into_dyn());
        f(join(prefix, "position"), self.position.view_mut().into_dyn());
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layer{i}")), f);
        }
        self.final_norm.visit_mut(&join(prefix, "final_norm"), f);
    }
}

pub fn text_encode<R: Real>(text: &PaddedText, params: &TextEncoder<R>) -> Result<TextEncoding<R>> {
    params.encode(text)
}
