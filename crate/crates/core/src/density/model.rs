use std::ops::Range;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::kernels::{layer_norm, layer_norm_backward, linear, linear_backward, NormCache};
use super::mixture::{head_nll_and_grad, MixtureParams};
use crate::data::ModelSpace;
use crate::error::{invalid, Error, Result};
use crate::rng::{substream, Rng};

/// Sin/cos encoding of a feature's column index.
pub fn positional_encoding(d_hidden: usize, position: usize) -> Result<Vec<f64>> {
    if d_hidden % 2 != 0 {
        return Err(invalid(format!("positional encoding needs an even width, got {d_hidden}")));
    }
    let mut out = vec![0.0; d_hidden];
    for j in 0..d_hidden / 2 {
        let angle = position as f64 / 10000f64.powf(2.0 * j as f64 / d_hidden as f64);
        out[2 * j] = angle.sin();
        out[2 * j + 1] = angle.cos();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Zero,
    One,
    /// Normal truncated at two standard deviations.
    TruncNormal(f64),
    /// Means of the output head: evenly spread over [-2, 2].
    HeadMeans,
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    range: Range<usize>,
    init: Init,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerLayout {
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    wq: Range<usize>,
    bq: Range<usize>,
    wk: Range<usize>,
    wv: Range<usize>,
    bv: Range<usize>,
    wo: Range<usize>,
    bo: Range<usize>,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

/// Offsets of every parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    entries: Vec<Entry>,
    total: usize,
    embed_w: Range<usize>,
    embed_b: Range<usize>,
    mask_token: Range<usize>,
    layers: Vec<LayerLayout>,
    lnf_g: Range<usize>,
    lnf_b: Range<usize>,
    head_w: Range<usize>,
    head_b: Range<usize>,
}

impl Layout {
    fn new(config: &ModelConfig, d: usize) -> Layout {
        let h = config.d_hidden;
        let f = config.d_ff();
        let k = config.n_components;
        let mut entries = Vec::new();
        let mut total = 0usize;
        let mut add = |name: String, shape: Vec<usize>, init: Init| {
            let len: usize = shape.iter().product();
            let range = total..total + len;
            total += len;
            entries.push(Entry { name, shape, range: range.clone(), init });
            range
        };
        let embed_w = add("embed.weight".into(), vec![d, h], Init::TruncNormal(1.0));
        let embed_b = add("embed.bias".into(), vec![d, h], Init::Zero);
        let mask_token = add("mask_token".into(), vec![h], Init::TruncNormal(0.02));
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = |s: &str| format!("layers.{l}.{s}");
            layers.push(LayerLayout {
                ln1_g: add(p("ln1.gain"), vec![h], Init::One),
                ln1_b: add(p("ln1.bias"), vec![h], Init::Zero),
                wq: add(p("attn.query.weight"), vec![h, h], Init::TruncNormal(0.02)),
                bq: add(p("attn.query.bias"), vec![h], Init::Zero),
                wk: add(p("attn.key.weight"), vec![h, h], Init::TruncNormal(0.02)),
                wv: add(p("attn.value.weight"), vec![h, h], Init::TruncNormal(0.02)),
                bv: add(p("attn.value.bias"), vec![h], Init::Zero),
                wo: add(p("attn.output.weight"), vec![h, h], Init::TruncNormal(0.02)),
                bo: add(p("attn.output.bias"), vec![h], Init::Zero),
                ln2_g: add(p("ln2.gain"), vec![h], Init::One),
                ln2_b: add(p("ln2.bias"), vec![h], Init::Zero),
                w1: add(p("ff.in.weight"), vec![h, f], Init::TruncNormal(0.02)),
                b1: add(p("ff.in.bias"), vec![f], Init::Zero),
                w2: add(p("ff.out.weight"), vec![f, h], Init::TruncNormal(0.02)),
                b2: add(p("ff.out.bias"), vec![h], Init::Zero),
            });
        }
        let lnf_g = add("final_norm.gain".into(), vec![h], Init::One);
        let lnf_b = add("final_norm.bias".into(), vec![h], Init::Zero);
        let head_w = add("head.weight".into(), vec![h, 3 * k], Init::Zero);
        let head_b = add("head.bias".into(), vec![3 * k], Init::HeadMeans);
        Layout { entries, total, embed_w, embed_b, mask_token, layers, lnf_g, lnf_b, head_w, head_b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean log conditional density over validation rows and all features.
    pub val_pseudolikelihood: f64,
}

/// Self-attention pseudolikelihood model: one forward pass with feature `i`
/// masked yields the mixture for `p(x^i | x^{-i})`.
#[derive(Debug, Clone)]
pub struct DensityModel {
    config: ModelConfig,
    d: usize,
    space: ModelSpace,
    schema_fingerprint: String,
    params: Vec<f64>,
    layout: Layout,
    pos_enc: Vec<f64>,
    pub(crate) history: Vec<EpochLog>,
}

impl PartialEq for DensityModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.d == other.d
            && self.space == other.space
            && self.schema_fingerprint == other.schema_fingerprint
            && self.params == other.params
            && self.history == other.history
    }
}

/// Per-layer activations kept for the backward pass.
struct LayerCache {
    norm1: NormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    attn_mask: Option<Vec<f64>>,
    norm2: NormCache,
    c: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    ff_mask: Option<Vec<f64>>,
}

struct RowPass {
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    z: Vec<f64>,
    head: Vec<f64>,
}

fn dropout_mask(len: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

impl DensityModel {
    pub fn new(config: ModelConfig, space: ModelSpace, schema_fingerprint: String, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = space.dim();
        if d == 0 {
            return Err(invalid("density model needs at least one feature"));
        }
        let layout = Layout::new(&config, d);
        let mut params = vec![0.0; layout.total];
        let mut rng = substream(seed, &[0x1_417]);
        let k = config.n_components;
        for e in &layout.entries {
            let slot = &mut params[e.range.clone()];
            match e.init {
                Init::Zero => slot.fill(0.0),
                Init::One => slot.fill(1.0),
                Init::TruncNormal(scale) => {
                    for v in slot.iter_mut() {
                        *v = loop {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            if z.abs() <= 2.0 {
                                break z * scale;
                            }
                        };
                    }
                }
                Init::HeadMeans => {
                    slot.fill(0.0);
                    for c in 0..k {
                        slot[k + c] = if k == 1 { 0.0 } else { -2.0 + 4.0 * c as f64 / (k - 1) as f64 };
                    }
                }
            }
        }
        let pos_enc = Self::build_pos_enc(config.d_hidden, d);
        Ok(DensityModel { config, d, space, schema_fingerprint, params, layout, pos_enc, history: Vec::new() })
    }

    fn build_pos_enc(h: usize, d: usize) -> Vec<f64> {
        (0..d).flat_map(|p| positional_encoding(h, p).expect("validated even width")).collect()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    pub fn history(&self) -> &[EpochLog] {
        &self.history
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Named views of every parameter tensor, in layout order.
    pub fn tensors(&self) -> Vec<NamedTensor> {
        self.layout
            .entries
            .iter()
            .map(|e| NamedTensor { name: e.name.clone(), shape: e.shape.clone(), data: self.params[e.range.clone()].to_vec() })
            .collect()
    }

    pub fn tensor_range(&self, name: &str) -> Option<Range<usize>> {
        self.layout.entries.iter().find(|e| e.name == name).map(|e| e.range.clone())
    }

    pub fn tensor_names(&self) -> Vec<String> {
        self.layout.entries.iter().map(|e| e.name.clone()).collect()
    }

    /// Add `N(0, scale^2)` noise to every parameter. Used to move away from
    /// the symmetric initialization in tests and gradient checks.
    pub fn jitter(&mut self, seed: u64, scale: f64) {
        let mut rng = substream(seed, &[0x717]);
        for p in &mut self.params {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p += scale * z;
        }
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        space: ModelSpace,
        schema_fingerprint: String,
        tensors: Vec<NamedTensor>,
        history: Vec<EpochLog>,
    ) -> Result<Self> {
        let mut model = DensityModel::new(config, space, schema_fingerprint, 0)?;
        if tensors.len() != model.layout.entries.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                model.layout.entries.len()
            )));
        }
        for (t, e) in tensors.into_iter().zip(&model.layout.entries) {
            if t.name != e.name || t.shape != e.shape || t.data.len() != e.range.len() {
                return Err(Error::Shape(format!("tensor {:?} {:?} does not match {:?} {:?}", t.name, t.shape, e.name, e.shape)));
            }
            model.params[e.range.clone()].copy_from_slice(&t.data);
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("checkpoint contains non-finite parameters".into()));
        }
        model.history = history;
        Ok(model)
    }

    fn check_inputs(&self, rows: &[Vec<f64>], i: usize) -> Result<()> {
        if i >= self.d {
            return Err(invalid(format!("masked feature {i} out of range for {} features", self.d)));
        }
        for r in rows {
            if r.len() != self.d {
                return Err(Error::Shape(format!("row has {} values, model expects {}", r.len(), self.d)));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite input to density model".into()));
            }
        }
        Ok(())
    }

    fn p(&self, r: &Range<usize>) -> &[f64] {
        &self.params[r.clone()]
    }

    /// Forward pass for one row with feature `i` masked. With `dropout`
    /// set, sub-block outputs are dropped using the supplied stream.
    fn forward_row(&self, x: &[f64], i: usize, mut dropout: Option<&mut Rng>) -> RowPass {
        let cfg = &self.config;
        let d = self.d;
        let h = cfg.d_hidden;
        let f = cfg.d_ff();
        let n_heads = cfg.n_heads;
        let dh = h / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let lay = &self.layout;
        let drop_p = if dropout.is_some() { cfg.dropout } else { 0.0 };

        let embed_w = self.p(&lay.embed_w);
        let embed_b = self.p(&lay.embed_b);
        let mask = self.p(&lay.mask_token);
        let mut hid = vec![0.0; d * h];
        for p in 0..d {
            let row = &mut hid[p * h..(p + 1) * h];
            let pe = &self.pos_enc[p * h..(p + 1) * h];
            if p == i {
                for c in 0..h {
                    row[c] = mask[c] + pe[c];
                }
            } else {
                for c in 0..h {
                    row[c] = x[p] * embed_w[p * h + c] + embed_b[p * h + c] + pe[c];
                }
            }
        }

        let zeros = vec![0.0; h];
        let mut caches = Vec::with_capacity(lay.layers.len());
        for ll in &lay.layers {
            let input = hid;
            let (a, norm1) = layer_norm(&input, d, h, self.p(&ll.ln1_g), self.p(&ll.ln1_b));
            let q = linear(&a, d, self.p(&ll.wq), self.p(&ll.bq), h, h);
            // no key bias: softmax is invariant to a per-query constant shift
            let k = linear(&a, d, self.p(&ll.wk), &zeros, h, h);
            let v = linear(&a, d, self.p(&ll.wv), self.p(&ll.bv), h, h);
            // probs[t][p][r]; column r = i stays zero (masked key/value)
            let mut probs = vec![0.0; n_heads * d * d];
            let mut ctx = vec![0.0; d * h];
            for t in 0..n_heads {
                let off = t * dh;
                for p in 0..d {
                    let pr = &mut probs[(t * d + p) * d..(t * d + p + 1) * d];
                    let mut max = f64::NEG_INFINITY;
                    for r in (0..d).filter(|&r| r != i) {
                        let s: f64 = (0..dh).map(|c| q[p * h + off + c] * k[r * h + off + c]).sum::<f64>() * scale;
                        pr[r] = s;
                        max = max.max(s);
                    }
                    if max == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut z = 0.0;
                    for r in (0..d).filter(|&r| r != i) {
                        pr[r] = (pr[r] - max).exp();
                        z += pr[r];
                    }
                    for r in (0..d).filter(|&r| r != i) {
                        pr[r] /= z;
                        let w = pr[r];
                        for c in 0..dh {
                            ctx[p * h + off + c] += w * v[r * h + off + c];
                        }
                    }
                }
            }
            let mut attn_out = linear(&ctx, d, self.p(&ll.wo), self.p(&ll.bo), h, h);
            let attn_mask = match dropout.as_deref_mut() {
                Some(rng) if drop_p > 0.0 => {
                    let m = dropout_mask(d * h, drop_p, rng);
                    attn_out.iter_mut().zip(&m).for_each(|(o, s)| *o *= s);
                    Some(m)
                }
                _ => None,
            };
            let h1: Vec<f64> = input.iter().zip(&attn_out).map(|(a, b)| a + b).collect();
            let (c, norm2) = layer_norm(&h1, d, h, self.p(&ll.ln2_g), self.p(&ll.ln2_b));
            let pre = linear(&c, d, self.p(&ll.w1), self.p(&ll.b1), h, f);
            let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
            let mut ff = linear(&act, d, self.p(&ll.w2), self.p(&ll.b2), f, h);
            let ff_mask = match dropout.as_deref_mut() {
                Some(rng) if drop_p > 0.0 => {
                    let m = dropout_mask(d * h, drop_p, rng);
                    ff.iter_mut().zip(&m).for_each(|(o, s)| *o *= s);
                    Some(m)
                }
                _ => None,
            };
            hid = h1.iter().zip(&ff).map(|(a, b)| a + b).collect();
            caches.push(LayerCache { norm1, a, q, k, v, probs, ctx, attn_mask, norm2, c, pre, act, ff_mask });
        }

        let hi = &hid[i * h..(i + 1) * h];
        let (z, final_norm) = layer_norm(hi, 1, h, self.p(&lay.lnf_g), self.p(&lay.lnf_b));
        let k3 = 3 * cfg.n_components;
        let head = linear(&z, 1, self.p(&lay.head_w), self.p(&lay.head_b), h, k3);
        RowPass { layers: caches, final_norm, z, head }
    }

    /// Accumulates parameter gradients of `loss = sum(dhead * head)` into `grad`.
    fn backward_row(&self, x: &[f64], i: usize, pass: &RowPass, dhead: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let d = self.d;
        let h = cfg.d_hidden;
        let f = cfg.d_ff();
        let n_heads = cfg.n_heads;
        let dh = h / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let lay = &self.layout;
        let k3 = 3 * cfg.n_components;

        let (gw, gb) = split_two(grad, &lay.head_w, &lay.head_b);
        let dz = linear_backward(&pass.z, dhead, 1, self.p(&lay.head_w), h, k3, gw, gb);
        let (gg, gbias) = split_two(grad, &lay.lnf_g, &lay.lnf_b);
        let dhi = layer_norm_backward(&dz, &pass.final_norm, 1, h, self.p(&lay.lnf_g), gg, gbias);
        let mut dhid = vec![0.0; d * h];
        dhid[i * h..(i + 1) * h].copy_from_slice(&dhi);

        for (ll, cache) in lay.layers.iter().zip(&pass.layers).rev() {
            // h2 = h1 + drop(ff(ln2(h1)))
            let mut dff = dhid.clone();
            if let Some(m) = &cache.ff_mask {
                dff.iter_mut().zip(m).for_each(|(g, s)| *g *= s);
            }
            let (gw2, gb2) = split_two(grad, &ll.w2, &ll.b2);
            let mut dact = linear_backward(&cache.act, &dff, d, self.p(&ll.w2), f, h, gw2, gb2);
            dact.iter_mut().zip(&cache.pre).for_each(|(g, p)| {
                if *p <= 0.0 {
                    *g = 0.0
                }
            });
            let (gw1, gb1) = split_two(grad, &ll.w1, &ll.b1);
            let dc = linear_backward(&cache.c, &dact, d, self.p(&ll.w1), h, f, gw1, gb1);
            let (g2g, g2b) = split_two(grad, &ll.ln2_g, &ll.ln2_b);
            let dh1_norm = layer_norm_backward(&dc, &cache.norm2, d, h, self.p(&ll.ln2_g), g2g, g2b);
            let dh1: Vec<f64> = dhid.iter().zip(&dh1_norm).map(|(a, b)| a + b).collect();

            // h1 = input + drop(attn(ln1(input)))
            let mut dattn = dh1.clone();
            if let Some(m) = &cache.attn_mask {
                dattn.iter_mut().zip(m).for_each(|(g, s)| *g *= s);
            }
            let (gwo, gbo) = split_two(grad, &ll.wo, &ll.bo);
            let dctx = linear_backward(&cache.ctx, &dattn, d, self.p(&ll.wo), h, h, gwo, gbo);
            let mut dq = vec![0.0; d * h];
            let mut dk = vec![0.0; d * h];
            let mut dv = vec![0.0; d * h];
            for t in 0..n_heads {
                let off = t * dh;
                for p in 0..d {
                    let pr = &cache.probs[(t * d + p) * d..(t * d + p + 1) * d];
                    let mut dp = vec![0.0; d];
                    let mut dot = 0.0;
                    for r in (0..d).filter(|&r| r != i) {
                        let mut s = 0.0;
                        for c in 0..dh {
                            s += dctx[p * h + off + c] * cache.v[r * h + off + c];
                            dv[r * h + off + c] += pr[r] * dctx[p * h + off + c];
                        }
                        dp[r] = s;
                        dot += pr[r] * s;
                    }
                    for r in (0..d).filter(|&r| r != i) {
                        let ds = pr[r] * (dp[r] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for c in 0..dh {
                            dq[p * h + off + c] += ds * cache.k[r * h + off + c];
                            dk[r * h + off + c] += ds * cache.q[p * h + off + c];
                        }
                    }
                }
            }
            let mut da = vec![0.0; d * h];
            for (w, b, dy) in [(&ll.wq, &ll.bq, &dq), (&ll.wv, &ll.bv, &dv)] {
                let (gwx, gbx) = split_two(grad, w, b);
                let part = linear_backward(&cache.a, dy, d, self.p(w), h, h, gwx, gbx);
                da.iter_mut().zip(&part).for_each(|(acc, v)| *acc += v);
            }
            let mut scratch_bias = vec![0.0; h];
            let part = linear_backward(&cache.a, &dk, d, self.p(&ll.wk), h, h, &mut grad[ll.wk.clone()], &mut scratch_bias);
            da.iter_mut().zip(&part).for_each(|(acc, v)| *acc += v);
            let (g1g, g1b) = split_two(grad, &ll.ln1_g, &ll.ln1_b);
            let din = layer_norm_backward(&da, &cache.norm1, d, h, self.p(&ll.ln1_g), g1g, g1b);
            dhid = dh1.iter().zip(&din).map(|(a, b)| a + b).collect();
        }

        // embedding
        for p in 0..d {
            let g = &dhid[p * h..(p + 1) * h];
            if p == i {
                let gm = &mut grad[lay.mask_token.clone()];
                gm.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            } else {
                let start_w = lay.embed_w.start + p * h;
                let start_b = lay.embed_b.start + p * h;
                for c in 0..h {
                    grad[start_w + c] += g[c] * x[p];
                    grad[start_b + c] += g[c];
                }
            }
        }
    }

    /// Mixture parameters of `p(x^i | x^{-i})` for every row of `batch`.
    pub fn forward_conditionals(&self, batch: &[Vec<f64>], i: usize) -> Result<Vec<MixtureParams>> {
        self.check_inputs(batch, i)?;
        Ok(batch.par_iter().map(|x| MixtureParams::from_head(&self.forward_row(x, i, None).head)).collect())
    }

    /// Single-row variant without allocation of a batch.
    pub fn conditional(&self, x: &[f64], i: usize) -> Result<MixtureParams> {
        if i >= self.d || x.len() != self.d {
            return Err(invalid("conditional: feature index or row width out of range"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite input to density model".into()));
        }
        Ok(MixtureParams::from_head(&self.forward_row(x, i, None).head))
    }

    /// Mean negative log conditional of feature `i` over the batch.
    pub fn pl_loss(&self, batch: &[Vec<f64>], i: usize) -> Result<f64> {
        let conds = self.forward_conditionals(batch, i)?;
        let total: f64 = conds.iter().zip(batch).map(|(m, x)| -m.logpdf(x[i])).sum();
        Ok(total / batch.len().max(1) as f64)
    }

    /// Loss and gradient of [`Self::pl_loss`] with dropout disabled.
    pub fn backward(&self, batch: &[Vec<f64>], i: usize) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad(batch, i, None)
    }

    /// Rows are processed in fixed-size chunks whose partial sums are reduced
    /// in order, so the result does not depend on the thread count.
    pub(crate) fn loss_and_grad(&self, batch: &[Vec<f64>], i: usize, dropout: Option<(u64, &[u64])>) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(batch, i)?;
        if batch.is_empty() {
            return Err(invalid("empty batch"));
        }
        const CHUNK: usize = 4;
        let partials: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, rows)| {
                let mut grad = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                for (ri, x) in rows.iter().enumerate() {
                    let mut rng = dropout.map(|(seed, tags)| {
                        let mut t = tags.to_vec();
                        t.push((ci * CHUNK + ri) as u64);
                        substream(seed, &t)
                    });
                    let pass = self.forward_row(x, i, rng.as_mut());
                    let (nll, dhead) = head_nll_and_grad(&pass.head, x[i]);
                    loss += nll;
                    self.backward_row(x, i, &pass, &dhead, &mut grad);
                }
                (loss, grad)
            })
            .collect();
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        grad.iter_mut().for_each(|g| *g /= n);
        if grad.iter().any(|g| !g.is_finite()) || !loss.is_finite() {
            return Err(Error::Numerical("non-finite loss or gradient".into()));
        }
        Ok((loss / n, grad))
    }

    /// Mean log conditional density averaged over all features and rows.
    pub fn pseudolikelihood(&self, rows: &[Vec<f64>]) -> Result<f64> {
        if rows.is_empty() {
            return Err(invalid("pseudolikelihood of an empty set"));
        }
        let mut total = 0.0;
        for i in 0..self.d {
            total -= self.pl_loss(rows, i)?;
        }
        Ok(total / self.d as f64)
    }
}

fn split_two<'a>(grad: &'a mut [f64], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = grad.split_at_mut(b.start);
    (&mut left[a.clone()], &mut right[..b.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SpaceKind;
    use approx::assert_abs_diff_eq;

    pub(crate) fn tiny(d: usize, k: usize) -> DensityModel {
        let cfg = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_hidden: 8,
            ff_multiplier: 2,
            n_components: k,
            dropout: 0.0,
            ..ModelConfig::small()
        };
        let space = ModelSpace::new(vec![SpaceKind::Numeric { mean: 0.0, std: 1.0 }; d]);
        let mut m = DensityModel::new(cfg, space, "test".into(), 3).unwrap();
        m.jitter(5, 0.3);
        m
    }

    #[test]
    fn positional_encoding_values() {
        let pe0 = positional_encoding(6, 0).unwrap();
        assert_eq!(pe0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let pe1 = positional_encoding(4, 1).unwrap();
        assert_abs_diff_eq!(pe1[0], 1f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(pe1[1], 1f64.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(pe1[0], 0.84147, epsilon = 1e-5);
        assert_abs_diff_eq!(pe1[1], 0.54030, epsilon = 1e-5);
        assert!(pe0.iter().zip(&positional_encoding(6, 1).unwrap()).any(|(a, b)| (a - b).abs() > 0.1));
        assert!(positional_encoding(5, 0).is_err());
    }

    #[test]
    fn fresh_head_gives_uniform_weights() {
        let cfg = ModelConfig { n_layers: 1, n_heads: 2, d_hidden: 8, n_components: 5, ..ModelConfig::small() };
        let space = ModelSpace::new(vec![SpaceKind::Numeric { mean: 0.0, std: 1.0 }; 3]);
        let m = DensityModel::new(cfg, space, "t".into(), 0).unwrap();
        let mix = m.conditional(&[0.1, -0.4, 2.0], 1).unwrap();
        for w in &mix.weights {
            assert_abs_diff_eq!(*w, 0.2, epsilon = 1e-15);
        }
        for s in &mix.stds {
            assert_abs_diff_eq!(*s, 2f64.ln() + 1e-3, epsilon = 1e-15);
        }
    }

    #[test]
    fn masked_value_is_never_read() {
        let m = tiny(4, 3);
        for i in 0..4 {
            let mut a = vec![0.3, -1.2, 0.8, 2.2];
            let mut b = a.clone();
            a[i] = -7.0;
            b[i] = 123.0;
            assert_eq!(m.conditional(&a, i).unwrap(), m.conditional(&b, i).unwrap());
        }
    }

    #[test]
    fn single_feature_model_is_a_marginal() {
        let m = tiny(1, 2);
        let a = m.conditional(&[0.5], 0).unwrap();
        let b = m.conditional(&[-9.0], 0).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn input_errors() {
        let m = tiny(3, 2);
        assert!(m.forward_conditionals(&[vec![0.0, 0.0, 0.0]], 3).is_err());
        assert!(m.forward_conditionals(&[vec![0.0, f64::NAN, 0.0]], 0).is_err());
        assert!(m.forward_conditionals(&[vec![0.0, 0.0]], 0).is_err());
    }

    #[test]
    fn singleton_loss_is_negative_logpdf() {
        let m = tiny(3, 2);
        let row = vec![0.4, -0.1, 1.3];
        let loss = m.pl_loss(std::slice::from_ref(&row), 2).unwrap();
        let mix = m.conditional(&row, 2).unwrap();
        assert_eq!(loss, -mix.logpdf(1.3));
    }

    #[test]
    fn masked_embedding_gradient_is_exactly_zero() {
        let m = tiny(3, 3);
        let batch = vec![vec![0.2, -0.5, 1.0], vec![1.1, 0.3, -0.7]];
        let (_, g) = m.backward(&batch, 1).unwrap();
        let h = m.config().d_hidden;
        let w = m.tensor_range("embed.weight").unwrap();
        let b = m.tensor_range("embed.bias").unwrap();
        assert!(g[w.start + h..w.start + 2 * h].iter().all(|&v| v == 0.0));
        assert!(g[b.start + h..b.start + 2 * h].iter().all(|&v| v == 0.0));
        assert!(g[w.start..w.start + h].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn duplicating_the_batch_keeps_the_gradient() {
        let m = tiny(3, 3);
        let batch = vec![vec![0.2, -0.5, 1.0], vec![1.1, 0.3, -0.7], vec![-0.9, 0.0, 0.4]];
        let doubled: Vec<Vec<f64>> = batch.iter().chain(&batch).cloned().collect();
        let (l1, g1) = m.backward(&batch, 0).unwrap();
        let (l2, g2) = m.backward(&doubled, 0).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
