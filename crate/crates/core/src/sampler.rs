//! Reverse diffusion with negative-prompt guidance.

use std::str::FromStr;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{AttentionKv, DenoiserParams, Embedding, SceneTokens};
use crate::rng::stream;
use crate::scene::SceneCloud;
use crate::schedule::NoiseSchedule;
use crate::se3::{GraspPose, GraspVector, MAX_GRIPPER_WIDTH};

/// Guidance scales shipped as a sweep preset.
pub const GUIDANCE_PRESET: [f64; 5] = [0.1, 0.2, 0.5, 1.0, 2.0];
/// Step counts shipped as a sweep preset.
pub const STEPS_PRESET: [usize; 5] = [10, 20, 50, 100, 200];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ddpm" => Ok(Self::Ddpm),
            "ddim" => Ok(Self::Ddim),
            _ => Err(Error::invalid(format!("unknown sampler {s:?}; expected ddpm or ddim"))),
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ddpm => "ddpm",
            Self::Ddim => "ddim",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub w: f64,
    pub steps: usize,
    pub sampler: SamplerKind,
    pub num_grasps: usize,
    pub seed: u64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { w: 0.2, steps: 200, sampler: SamplerKind::Ddpm, num_grasps: 64, seed: 0 }
    }
}

impl GuidanceConfig {
    pub fn validate(&self, sched: &NoiseSchedule) -> Result<()> {
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::invalid(format!("guidance scale {} must be finite and non-negative", self.w)));
        }
        let t = sched.steps();
        if self.steps == 0 || self.steps > t {
            return Err(Error::invalid(format!("steps {} outside 1..={t}", self.steps)));
        }
        if self.sampler == SamplerKind::Ddpm && self.steps != t {
            return Err(Error::invalid(format!("the DDPM sampler runs all {t} steps; use ddim for {}", self.steps)));
        }
        Ok(())
    }
}

/// Evenly spaced descending sub-sequence of `1..=total` that starts at
/// `total`.
pub fn ddim_timesteps(total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > total {
        return Err(Error::invalid(format!("steps {steps} outside 1..={total}")));
    }
    Ok((1..=steps).rev().map(|i| ((i * total) as f64 / steps as f64).round() as usize).collect())
}

/// Per-scene, per-prompt conditioning computed once before sampling.
#[derive(Debug, Clone)]
pub struct ConditioningCache {
    pub tokens: SceneTokens,
    pub kv: AttentionKv,
    pub text: Embedding,
    pub neg: Embedding,
    pub null: Embedding,
}

pub fn precompute(params: &DenoiserParams, cloud: &SceneCloud, prompt: &str) -> Result<ConditioningCache> {
    let text = params.encode_text(prompt)?;
    let tokens = params.encode_scene(cloud)?;
    precompute_with_tokens(params, tokens, text)
}

pub fn precompute_with_tokens(params: &DenoiserParams, tokens: SceneTokens, text: Embedding) -> Result<ConditioningCache> {
    let kv = params.attention_kv(&tokens)?;
    let neg = params.negative_embedding(&tokens, &text)?;
    // The negative head must not see the grasp or the step.
    let t_max = 200;
    let mut e1 = [0.0; 7];
    e1[0] = 1.0;
    let a = params.forward(&[0.0; 7], &tokens, &text, 1)?.neg_embedding;
    let b = params.forward(&e1, &tokens, &text, t_max)?.neg_embedding;
    if a != b || a != neg {
        return Err(Error::Degenerate("negative embedding depends on the grasp or the step".into()));
    }
    Ok(ConditioningCache { tokens, kv, text, neg, null: params.null_embedding() })
}

/// `e_null + w (e_text - e_neg)`.
pub fn compose(e_null: &GraspVector, e_text: &GraspVector, e_neg: &GraspVector, w: f64) -> GraspVector {
    std::array::from_fn(|i| e_null[i] + w * (e_text[i] - e_neg[i]))
}

/// Guided noise estimate from three denoiser passes sharing the scene
/// tokens. Returns the unconditional estimate untouched when `w = 0` or
/// when the text and negative embeddings coincide.
pub fn composed_epsilon(
    g_t: &GraspVector,
    t: usize,
    cache: &ConditioningCache,
    params: &DenoiserParams,
    w: f64,
) -> Result<GraspVector> {
    let e_null = params.predict_noise(g_t, &cache.kv, &cache.null, t)?;
    if w == 0.0 || cache.text == cache.neg {
        return Ok(e_null);
    }
    let e_text = params.predict_noise(g_t, &cache.kv, &cache.text, t)?;
    let e_neg = params.predict_noise(g_t, &cache.kv, &cache.neg, t)?;
    Ok(compose(&e_null, &e_text, &e_neg, w))
}

/// Ancestral step `t -> t - 1`. `z` must be zero at `t = 1`.
pub fn ddpm_step(
    g_t: &GraspVector,
    t: usize,
    eps: &GraspVector,
    z: &GraspVector,
    sched: &NoiseSchedule,
) -> Result<GraspVector> {
    if t == 0 || t > sched.steps() {
        return Err(Error::invalid(format!("step {t} outside 1..={}", sched.steps())));
    }
    if t == 1 && z.iter().any(|v| *v != 0.0) {
        return Err(Error::invalid("noise must be zero on the final step"));
    }
    let a = sched.alpha(t);
    let coef = (1.0 - a) / (1.0 - sched.alpha_bar(t)).sqrt();
    let root = a.sqrt();
    let sigma = sched.beta(t).sqrt();
    Ok(std::array::from_fn(|i| (g_t[i] - coef * eps[i]) / root + sigma * z[i]))
}

/// Clean-sample estimate implied by `eps` at step `t`.
pub fn predict_g0(g_t: &GraspVector, t: usize, eps: &GraspVector, sched: &NoiseSchedule) -> GraspVector {
    let ab = sched.alpha_bar(t);
    let s = (1.0 - ab).sqrt();
    let r = ab.sqrt();
    std::array::from_fn(|i| (g_t[i] - s * eps[i]) / r)
}

/// Deterministic implicit step `t -> t_prev`.
pub fn ddim_step(
    g_t: &GraspVector,
    t: usize,
    t_prev: usize,
    eps: &GraspVector,
    sched: &NoiseSchedule,
) -> Result<GraspVector> {
    if t == 0 || t > sched.steps() {
        return Err(Error::invalid(format!("step {t} outside 1..={}", sched.steps())));
    }
    if t_prev >= t {
        return Err(Error::invalid(format!("t_prev {t_prev} must precede t {t}")));
    }
    let g0 = predict_g0(g_t, t, eps, sched);
    let ab = sched.alpha_bar(t_prev);
    if ab == 1.0 {
        return Ok(g0);
    }
    let a = ab.sqrt();
    let s = (1.0 - ab).sqrt();
    Ok(std::array::from_fn(|i| a * g0[i] + s * eps[i]))
}

/// Maps a final 7-vector onto the valid pose domain. Returns the pose and
/// whether the width had to be clamped.
pub fn finalize(v: &GraspVector) -> Result<(GraspPose, bool)> {
    let mut pose = GraspPose::from_vector(v);
    let clamped = !(0.0..=MAX_GRIPPER_WIDTH).contains(&pose.width);
    pose.width = pose.width.clamp(0.0, MAX_GRIPPER_WIDTH);
    Ok((pose.canonicalize()?, clamped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub seed: u64,
    pub w: f64,
    pub steps: usize,
    pub sampler: SamplerKind,
    pub num_grasps: usize,
    pub clamped: usize,
    pub seconds: f64,
}

/// Runs one reverse chain from its own noise stream.
pub fn run_chain(
    params: &DenoiserParams,
    sched: &NoiseSchedule,
    cache: &ConditioningCache,
    config: &GuidanceConfig,
    chain: usize,
) -> Result<GraspVector> {
    let mut rng = stream(config.seed, &[4, chain as u64]);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> GraspVector { std::array::from_fn(|_| StandardNormal.sample(rng)) };
    let mut g = draw(&mut rng);
    match config.sampler {
        SamplerKind::Ddpm => {
            for t in (1..=sched.steps()).rev() {
                let eps = composed_epsilon(&g, t, cache, params, config.w)?;
                let z = if t > 1 { draw(&mut rng) } else { [0.0; 7] };
                g = ddpm_step(&g, t, &eps, &z, sched)?;
            }
        }
        SamplerKind::Ddim => {
            let ts = ddim_timesteps(sched.steps(), config.steps)?;
            for (k, &t) in ts.iter().enumerate() {
                let t_prev = ts.get(k + 1).copied().unwrap_or(0);
                let eps = composed_epsilon(&g, t, cache, params, config.w)?;
                g = ddim_step(&g, t, t_prev, &eps, sched)?;
            }
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure { batch_index: chain });
    }
    Ok(g)
}

/// `num_grasps` independent chains, ordered by chain index.
pub fn sample_grasps(
    params: &DenoiserParams,
    sched: &NoiseSchedule,
    cache: &ConditioningCache,
    config: &GuidanceConfig,
) -> Result<(Vec<GraspPose>, SampleReport)> {
    config.validate(sched)?;
    let start = Instant::now();
    let raw: Vec<Result<GraspVector>> =
        (0..config.num_grasps).into_par_iter().map(|c| run_chain(params, sched, cache, config, c)).collect();
    let mut grasps = Vec::with_capacity(raw.len());
    let mut clamped = 0;
    for v in raw {
        let (pose, c) = finalize(&params.scaling.denormalize(&v?))?;
        clamped += c as usize;
        grasps.push(pose);
    }
    let report = SampleReport {
        seed: config.seed,
        w: config.w,
        steps: config.steps,
        sampler: config.sampler,
        num_grasps: config.num_grasps,
        clamped,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((grasps, report))
}
