//! Conditional noise predictor with a negative-prompt head.
//!
//! ```text
//! g_t ──grasp MLP──┐
//! text ────────────+── u ──┐
//! t ──sinusoid── time proj ┴─ concat ─ fusion ─ q ─┬─ cross-attn(tokens) ─ + ─ noise MLP ─ eps
//!                                                  └───────────────────────┘
//! mean(tokens) - text ── negative MLP ── t~
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::encoder::{time_embedding, SceneGroups};
use super::scaling::{GraspScaling, PointScaling};
use super::layers::{dot, silu, silu_grad, LayoutBuilder, Linear, Mlp, MlpTrace, Slot};
use super::text::{TextToken, Vocabulary};
use crate::error::{Error, Result};
use crate::scene::SceneCloud;
use crate::se3::{GraspVector, GRASP_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub time_dim: usize,
    pub tokens: usize,
    pub heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { embed_dim: 64, time_dim: 64, tokens: 16, heads: 4 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.tokens == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::invalid("embed_dim must be divisible by heads"));
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(Error::invalid("time_dim must be positive and even"));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vec: Vec<f64>,
}

impl Embedding {
    pub fn zeros(dim: usize) -> Self {
        Self { vec: vec![0.0; dim] }
    }
}

/// `n x d` conditioning tokens, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTokens {
    pub count: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SceneTokens {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    pub eps_pred: GraspVector,
    pub neg_embedding: Embedding,
}

#[derive(Debug, Clone)]
struct Layers {
    grasp: Mlp,
    point: Mlp,
    text_table: usize,
    time_proj: Linear,
    fusion: Linear,
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    noise_head: Mlp,
    negative_head: Mlp,
}

impl Layers {
    fn build(cfg: &ModelConfig, text_rows: usize) -> (Self, Vec<Slot>, usize) {
        let d = cfg.embed_dim;
        let mut b = LayoutBuilder::default();
        let layers = Layers {
            grasp: b.mlp("grasp_encoder", GRASP_DIM, d, d),
            point: b.mlp("point_encoder", 3, d, d),
            text_table: b.alloc("text_table.weight".into(), vec![text_rows, d]),
            time_proj: b.linear("time_proj", cfg.time_dim, d),
            fusion: b.linear("fusion", 2 * d, d),
            query: b.linear("attention.query", d, d),
            key: b.linear("attention.key", d, d),
            value: b.linear("attention.value", d, d),
            output: b.linear("attention.output", d, d),
            noise_head: b.mlp("noise_head", d, d, GRASP_DIM),
            negative_head: b.mlp("negative_head", d, d, d),
        };
        let total = b.total();
        (layers, b.slots, total)
    }
}

/// All learnable arrays of the denoiser, stored in one flat vector.
#[derive(Debug, Clone)]
pub struct DenoiserParams {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub theta: Vec<f64>,
    /// Maps ground-truth grasps into the space the diffusion runs in.
    pub scaling: GraspScaling,
    /// Applied to scene points before grouping and encoding.
    pub point_scaling: PointScaling,
    slots: Vec<Slot>,
    layers: Layers,
}

/// Keys and values of the scene tokens; independent of the query.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionKv {
    pub keys: Vec<f64>,
    pub values: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SceneTrace {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    pub(crate) argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct NoiseTrace {
    g_t: GraspVector,
    grasp: MlpTrace,
    time_emb: Vec<f64>,
    time_pre: Vec<f64>,
    fused_in: Vec<f64>,
    query_in: Vec<f64>,
    query: Vec<f64>,
    /// heads x tokens softmax weights
    pub(crate) attention: Vec<f64>,
    mixed: Vec<f64>,
    residual: Vec<f64>,
    head: MlpTrace,
}

#[derive(Debug, Clone)]
pub(crate) struct NegativeTrace {
    input: Vec<f64>,
    head: MlpTrace,
}

impl DenoiserParams {
    /// Deterministic initialisation from `seed`.
    pub fn init(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::invalid("vocabulary is empty"));
        }
        let (layers, slots, total) = Layers::build(&config, vocab.rows());
        let mut theta = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for mlp in [layers.grasp, layers.point] {
            mlp.init(&mut theta, &mut rng);
        }
        let table = layers.text_table..layers.text_table + vocab.rows() * config.embed_dim;
        for v in &mut theta[table] {
            *v = StandardNormal.sample(&mut rng);
        }
        for lin in [layers.time_proj, layers.fusion, layers.query, layers.key, layers.value, layers.output] {
            lin.init(&mut theta, &mut rng);
        }
        for mlp in [layers.noise_head, layers.negative_head] {
            mlp.init(&mut theta, &mut rng);
        }
        Ok(Self { config, vocab, theta, scaling: GraspScaling::identity(), point_scaling: PointScaling::identity(), slots, layers })
    }

    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, theta: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let (layers, slots, total) = Layers::build(&config, vocab.rows());
        if theta.len() != total {
            return Err(Error::Schema(format!("expected {total} parameters, found {}", theta.len())));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("checkpoint contains non-finite parameters".into()));
        }
        Ok(Self { config, vocab, theta, scaling: GraspScaling::identity(), point_scaling: PointScaling::identity(), slots, layers })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Parameter ranges sharing a group name, in layout order.
    pub fn groups(&self) -> Vec<(String, Vec<std::ops::Range<usize>>)> {
        let mut out: Vec<(String, Vec<std::ops::Range<usize>>)> = Vec::new();
        for s in &self.slots {
            match out.iter_mut().find(|(g, _)| g == s.group()) {
                Some((_, ranges)) => ranges.push(s.range()),
                None => out.push((s.group().to_string(), vec![s.range()])),
            }
        }
        out
    }

    pub fn text_table_range(&self) -> std::ops::Range<usize> {
        let d = self.config.embed_dim;
        self.layers.text_table..self.layers.text_table + self.vocab.rows() * d
    }

    pub fn scene_encoder_range(&self) -> std::ops::Range<usize> {
        let p = self.layers.point;
        p.l1.w..p.l2.b + p.l2.out
    }

    pub fn text_row(&self, row: usize) -> &[f64] {
        let d = self.config.embed_dim;
        let start = self.layers.text_table + row * d;
        &self.theta[start..start + d]
    }

    pub fn embed_token(&self, token: TextToken) -> Embedding {
        Embedding { vec: self.text_row(self.vocab.row(token)).to_vec() }
    }

    pub fn null_embedding(&self) -> Embedding {
        self.embed_token(TextToken::Null)
    }

    pub fn encode_text(&self, prompt: &str) -> Result<Embedding> {
        Ok(self.embed_token(self.vocab.parse(prompt)?))
    }

    pub fn encode_scene(&self, cloud: &SceneCloud) -> Result<SceneTokens> {
        Ok(self.encode_groups(&self.scene_groups(&cloud.points)?))
    }

    /// Scales the points and groups them for the encoder.
    pub fn scene_groups(&self, points: &[[f64; 3]]) -> Result<SceneGroups> {
        let scaled: Vec<[f64; 3]> = points.iter().map(|p| self.point_scaling.apply(p)).collect();
        SceneGroups::new(&scaled, self.config.tokens)
    }

    pub fn encode_groups(&self, groups: &SceneGroups) -> SceneTokens {
        self.encode_groups_traced(groups).0
    }

    pub(crate) fn encode_groups_traced(&self, groups: &SceneGroups) -> (SceneTokens, SceneTrace) {
        let d = self.config.embed_dim;
        let n = groups.points.len();
        let mlp = self.layers.point;
        let mut pre = vec![0.0; n * d];
        let mut hidden = vec![0.0; n * d];
        let mut feat = vec![0.0; n * d];
        for (i, p) in groups.points.iter().enumerate() {
            let (pr, hi, fe) = (
                &mut pre[i * d..(i + 1) * d],
                &mut hidden[i * d..(i + 1) * d],
                &mut feat[i * d..(i + 1) * d],
            );
            mlp.l1.forward_into(&self.theta, p, pr);
            for (h, &v) in hi.iter_mut().zip(pr.iter()) {
                *h = silu(v);
            }
            mlp.l2.forward_into(&self.theta, hi, fe);
        }
        let count = groups.groups.len();
        let mut data = vec![f64::NEG_INFINITY; count * d];
        let mut argmax = vec![0usize; count * d];
        for (g, members) in groups.groups.iter().enumerate() {
            let tok = &mut data[g * d..(g + 1) * d];
            let arg = &mut argmax[g * d..(g + 1) * d];
            for &m in members {
                for c in 0..d {
                    let v = feat[m * d + c];
                    if v > tok[c] {
                        tok[c] = v;
                        arg[c] = m;
                    }
                }
            }
        }
        (SceneTokens { count, dim: d, data }, SceneTrace { pre, hidden, argmax })
    }

    pub(crate) fn scene_backward(&self, groups: &SceneGroups, trace: &SceneTrace, d_tokens: &[f64], grad: &mut [f64]) {
        let d = self.config.embed_dim;
        let mlp = self.layers.point;
        let n = groups.points.len();
        let mut d_feat = vec![0.0; n * d];
        let mut touched = vec![false; n];
        for (slot, &p) in trace.argmax.iter().enumerate() {
            let c = slot % d;
            d_feat[p * d + c] += d_tokens[slot];
            touched[p] = true;
        }
        let mut d_hidden = vec![0.0; d];
        for i in (0..n).filter(|&i| touched[i]) {
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            let hidden = &trace.hidden[i * d..(i + 1) * d];
            mlp.l2.backward(&self.theta, hidden, &d_feat[i * d..(i + 1) * d], grad, Some(&mut d_hidden));
            for (dh, &p) in d_hidden.iter_mut().zip(&trace.pre[i * d..(i + 1) * d]) {
                *dh *= silu_grad(p);
            }
            mlp.l1.backward(&self.theta, &groups.points[i], &d_hidden, grad, None);
        }
    }

    pub fn attention_kv(&self, tokens: &SceneTokens) -> Result<AttentionKv> {
        let d = self.config.embed_dim;
        if tokens.dim != d || tokens.count == 0 || tokens.data.len() != tokens.count * d {
            return Err(Error::invalid(format!(
                "scene tokens have shape {}x{}, model expects nx{d}",
                tokens.count, tokens.dim
            )));
        }
        let mut keys = vec![0.0; tokens.count * d];
        let mut values = vec![0.0; tokens.count * d];
        for i in 0..tokens.count {
            self.layers.key.forward_into(&self.theta, tokens.row(i), &mut keys[i * d..(i + 1) * d]);
            self.layers.value.forward_into(&self.theta, tokens.row(i), &mut values[i * d..(i + 1) * d]);
        }
        Ok(AttentionKv { keys, values, count: tokens.count })
    }

    fn check_text(&self, text: &Embedding) -> Result<()> {
        if text.vec.len() != self.config.embed_dim {
            return Err(Error::invalid(format!(
                "text embedding has width {}, model expects {}",
                text.vec.len(),
                self.config.embed_dim
            )));
        }
        Ok(())
    }

    /// Noise prediction and negative embedding for one noisy grasp.
    pub fn forward(&self, g_t: &GraspVector, tokens: &SceneTokens, text: &Embedding, t: usize) -> Result<DenoiserOutput> {
        let kv = self.attention_kv(tokens)?;
        let eps_pred = self.predict_noise(g_t, &kv, text, t)?;
        let neg_embedding = self.negative_embedding(tokens, text)?;
        Ok(DenoiserOutput { eps_pred, neg_embedding })
    }

    /// Noise branch only, with precomputed keys and values.
    pub fn predict_noise(&self, g_t: &GraspVector, kv: &AttentionKv, text: &Embedding, t: usize) -> Result<GraspVector> {
        self.check_text(text)?;
        Ok(self.noise_traced(g_t, kv, &text.vec, t).0)
    }

    pub(crate) fn noise_traced(&self, g_t: &GraspVector, kv: &AttentionKv, text: &[f64], t: usize) -> (GraspVector, NoiseTrace) {
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let l = &self.layers;
        let (grasp_emb, grasp) = l.grasp.forward(&self.theta, g_t);
        let time_emb = time_embedding(t, cfg.time_dim);
        let time_pre = l.time_proj.forward(&self.theta, &time_emb);
        let mut fused_in = Vec::with_capacity(2 * d);
        fused_in.extend(time_pre.iter().map(|&v| silu(v)));
        fused_in.extend(grasp_emb.iter().zip(text).map(|(a, b)| a + b));
        let query_in = l.fusion.forward(&self.theta, &fused_in);
        let query = l.query.forward(&self.theta, &query_in);

        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let n = kv.count;
        let mut attention = vec![0.0; cfg.heads * n];
        let mut mixed = vec![0.0; d];
        for h in 0..cfg.heads {
            let qh = &query[h * hd..(h + 1) * hd];
            let weights = &mut attention[h * n..(h + 1) * n];
            for (i, w) in weights.iter_mut().enumerate() {
                *w = scale * dot(qh, &kv.keys[i * d + h * hd..i * d + (h + 1) * hd]);
            }
            softmax_in_place(weights);
            let out = &mut mixed[h * hd..(h + 1) * hd];
            for (i, &w) in weights.iter().enumerate() {
                for (o, v) in out.iter_mut().zip(&kv.values[i * d + h * hd..i * d + (h + 1) * hd]) {
                    *o += w * v;
                }
            }
        }
        let attn_out = l.output.forward(&self.theta, &mixed);
        let residual: Vec<f64> = query_in.iter().zip(&attn_out).map(|(a, b)| a + b).collect();
        let (eps, head) = l.noise_head.forward(&self.theta, &residual);
        let eps: GraspVector = std::array::from_fn(|i| eps[i]);
        let trace = NoiseTrace {
            g_t: *g_t,
            grasp,
            time_emb,
            time_pre,
            fused_in,
            query_in,
            query,
            attention,
            mixed,
            residual,
            head,
        };
        (eps, trace)
    }

    /// Backward through the noise branch. Accumulates into `grad`, the token
    /// gradient (`n x d`) and the text gradient.
    pub(crate) fn noise_backward(
        &self,
        kv: &AttentionKv,
        tokens: &SceneTokens,
        trace: &NoiseTrace,
        d_eps: &GraspVector,
        grad: &mut [f64],
        d_tokens: Option<&mut [f64]>,
        d_text: &mut [f64],
    ) {
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let hd = cfg.head_dim();
        let n = kv.count;
        let scale = 1.0 / (hd as f64).sqrt();
        let l = &self.layers;

        let mut d_residual = vec![0.0; d];
        l.noise_head.backward(&self.theta, &trace.residual, &trace.head, d_eps, grad, Some(&mut d_residual));
        let mut d_query_in = d_residual.clone();
        let mut d_mixed = vec![0.0; d];
        l.output.backward(&self.theta, &trace.mixed, &d_residual, grad, Some(&mut d_mixed));

        let mut d_query = vec![0.0; d];
        let mut d_keys = vec![0.0; n * d];
        let mut d_values = vec![0.0; n * d];
        let mut d_logits = vec![0.0; n];
        for h in 0..cfg.heads {
            let weights = &trace.attention[h * n..(h + 1) * n];
            let dm = &d_mixed[h * hd..(h + 1) * hd];
            for i in 0..n {
                let vi = &kv.values[i * d + h * hd..i * d + (h + 1) * hd];
                d_logits[i] = dot(dm, vi);
                for (dv, g) in d_values[i * d + h * hd..i * d + (h + 1) * hd].iter_mut().zip(dm) {
                    *dv += weights[i] * g;
                }
            }
            let mean: f64 = weights.iter().zip(&d_logits).map(|(w, g)| w * g).sum();
            let qh = &trace.query[h * hd..(h + 1) * hd];
            for i in 0..n {
                let ds = weights[i] * (d_logits[i] - mean) * scale;
                let ki = &kv.keys[i * d + h * hd..i * d + (h + 1) * hd];
                for (dq, k) in d_query[h * hd..(h + 1) * hd].iter_mut().zip(ki) {
                    *dq += ds * k;
                }
                for (dk, q) in d_keys[i * d + h * hd..i * d + (h + 1) * hd].iter_mut().zip(qh) {
                    *dk += ds * q;
                }
            }
        }
        l.query.backward(&self.theta, &trace.query_in, &d_query, grad, Some(&mut d_query_in));
        match d_tokens {
            Some(dt) => {
                for i in 0..n {
                    let row = tokens.row(i);
                    let dti = &mut dt[i * d..(i + 1) * d];
                    l.key.backward(&self.theta, row, &d_keys[i * d..(i + 1) * d], grad, Some(&mut *dti));
                    l.value.backward(&self.theta, row, &d_values[i * d..(i + 1) * d], grad, Some(dti));
                }
            }
            None => {
                for i in 0..n {
                    let row = tokens.row(i);
                    l.key.backward(&self.theta, row, &d_keys[i * d..(i + 1) * d], grad, None);
                    l.value.backward(&self.theta, row, &d_values[i * d..(i + 1) * d], grad, None);
                }
            }
        }

        let mut d_fused = vec![0.0; 2 * d];
        l.fusion.backward(&self.theta, &trace.fused_in, &d_query_in, grad, Some(&mut d_fused));
        let (d_time, d_sum) = d_fused.split_at_mut(d);
        for (g, &p) in d_time.iter_mut().zip(&trace.time_pre) {
            *g *= silu_grad(p);
        }
        l.time_proj.backward(&self.theta, &trace.time_emb, d_time, grad, None);
        for (a, b) in d_text.iter_mut().zip(d_sum.iter()) {
            *a += b;
        }
        l.grasp.backward(&self.theta, &trace.g_t, &trace.grasp, d_sum, grad, None);
    }

    /// Negative-prompt embedding: MLP of the mean of `token_i - text`.
    /// Independent of the noisy grasp and the step.
    pub fn negative_embedding(&self, tokens: &SceneTokens, text: &Embedding) -> Result<Embedding> {
        self.check_text(text)?;
        if tokens.dim != self.config.embed_dim || tokens.count == 0 {
            return Err(Error::invalid("scene tokens do not match the model width"));
        }
        Ok(Embedding { vec: self.negative_traced(tokens, &text.vec).0 })
    }

    pub(crate) fn negative_traced(&self, tokens: &SceneTokens, text: &[f64]) -> (Vec<f64>, NegativeTrace) {
        let d = self.config.embed_dim;
        let mut input = vec![0.0; d];
        for i in 0..tokens.count {
            for (m, v) in input.iter_mut().zip(tokens.row(i)) {
                *m += v;
            }
        }
        for (m, t) in input.iter_mut().zip(text) {
            *m = *m / tokens.count as f64 - t;
        }
        let (out, head) = self.layers.negative_head.forward(&self.theta, &input);
        (out, NegativeTrace { input, head })
    }

    pub(crate) fn negative_backward(
        &self,
        tokens: &SceneTokens,
        trace: &NegativeTrace,
        d_out: &[f64],
        grad: &mut [f64],
        d_tokens: Option<&mut [f64]>,
        d_text: &mut [f64],
    ) {
        let d = self.config.embed_dim;
        let mut d_in = vec![0.0; d];
        self.layers.negative_head.backward(&self.theta, &trace.input, &trace.head, d_out, grad, Some(&mut d_in));
        for (a, b) in d_text.iter_mut().zip(&d_in) {
            *a -= b;
        }
        if let Some(dt) = d_tokens {
            let inv = 1.0 / tokens.count as f64;
            for i in 0..tokens.count {
                for (a, b) in dt[i * d..(i + 1) * d].iter_mut().zip(&d_in) {
                    *a += b * inv;
                }
            }
        }
    }

    /// Adds `d_text` to the gradient of text-table row `row`.
    pub(crate) fn accumulate_text(&self, row: usize, d_text: &[f64], grad: &mut [f64]) {
        let d = self.config.embed_dim;
        let start = self.layers.text_table + row * d;
        for (g, v) in grad[start..start + d].iter_mut().zip(d_text) {
            *g += v;
        }
    }
}

fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}
