//! Batch loss and its exact gradient with respect to every parameter.

use rayon::prelude::*;

use super::denoiser::{DenoiserParams, SceneTokens};
use super::encoder::SceneGroups;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::se3::GraspVector;
use crate::train::{negative_loss_argmin, noise_loss};

/// Scene conditioning of a training item. Cached tokens carry no gradient,
/// which is how a frozen scene encoder is expressed.
#[derive(Debug, Clone, Copy)]
pub enum SceneInput<'a> {
    Encode(&'a SceneGroups),
    Frozen(&'a SceneTokens),
}

/// One fully-specified training example: noise and masking already drawn.
#[derive(Debug, Clone)]
pub struct TrainItem<'a> {
    pub scene: SceneInput<'a>,
    /// Text-table row of the target prompt.
    pub target: usize,
    /// Replace the text fed to the noise branch by the null row.
    pub masked: bool,
    /// Text-table rows of the other objects in the scene.
    pub negatives: Vec<usize>,
    pub g0: GraspVector,
    pub t: usize,
    pub eps: GraspVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub noise: f64,
    pub negative: f64,
}

impl LossWeights {
    /// `(1 - zeta) L_noise + zeta L_negative`.
    pub fn from_zeta(zeta: f64) -> Self {
        Self { noise: 1.0 - zeta, negative: zeta }
    }
}

/// Batch-mean losses.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub noise: f64,
    pub negative: f64,
    pub total: f64,
    pub items: usize,
    /// Items without any negative prompt (single-object scenes).
    pub without_negatives: usize,
}

struct ItemResult {
    noise: f64,
    negative: f64,
    has_negatives: bool,
}

fn item_pass(
    params: &DenoiserParams,
    item: &TrainItem<'_>,
    sched: &NoiseSchedule,
    weights: LossWeights,
    grad: Option<&mut [f64]>,
) -> Result<ItemResult> {
    let d = params.config.embed_dim;
    let g_t = sched.q_sample(&item.g0, item.t, &item.eps)?;
    let (tokens, scene_trace) = match item.scene {
        SceneInput::Encode(groups) => {
            let (tok, tr) = params.encode_groups_traced(groups);
            (std::borrow::Cow::Owned(tok), Some((groups, tr)))
        }
        SceneInput::Frozen(tok) => (std::borrow::Cow::Borrowed(tok), None),
    };
    let kv = params.attention_kv(&tokens)?;
    let noise_row = if item.masked { params.vocab.null_row() } else { item.target };
    let (eps_pred, noise_trace) = params.noise_traced(&g_t, &kv, params.text_row(noise_row), item.t);
    let noise = noise_loss(&eps_pred, &item.eps);

    let (neg, neg_trace) = params.negative_traced(&tokens, params.text_row(item.target));
    let targets: Vec<&[f64]> = item.negatives.iter().map(|&r| params.text_row(r)).collect();
    let (negative, nearest) = negative_loss_argmin(&neg, &targets);

    let Some(grad) = grad else {
        return Ok(ItemResult { noise, negative, has_negatives: nearest.is_some() });
    };

    let mut d_tokens = scene_trace.as_ref().map(|_| vec![0.0; tokens.count * d]);
    if weights.noise != 0.0 {
        let d_eps: GraspVector = std::array::from_fn(|i| weights.noise * 2.0 * (eps_pred[i] - item.eps[i]));
        let mut d_text = vec![0.0; d];
        params.noise_backward(&kv, &tokens, &noise_trace, &d_eps, grad, d_tokens.as_deref_mut(), &mut d_text);
        params.accumulate_text(noise_row, &d_text, grad);
    }
    if let (Some(i), true) = (nearest, weights.negative != 0.0) {
        let row = item.negatives[i];
        let diff: Vec<f64> = neg.iter().zip(params.text_row(row)).map(|(a, b)| weights.negative * 2.0 * (a - b)).collect();
        let mut d_text = vec![0.0; d];
        params.negative_backward(&tokens, &neg_trace, &diff, grad, d_tokens.as_deref_mut(), &mut d_text);
        params.accumulate_text(item.target, &d_text, grad);
        let pulled: Vec<f64> = diff.iter().map(|v| -v).collect();
        params.accumulate_text(row, &pulled, grad);
    }
    if let (Some((groups, trace)), Some(dt)) = (scene_trace, d_tokens) {
        params.scene_backward(groups, &trace, &dt, grad);
    }
    Ok(ItemResult { noise, negative, has_negatives: nearest.is_some() })
}

fn check_batch(items: &[TrainItem<'_>]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    Ok(())
}

fn report(results: &[ItemResult], weights: LossWeights) -> LossReport {
    let n = results.len() as f64;
    let noise = results.iter().map(|r| r.noise).sum::<f64>() / n;
    let negative = results.iter().map(|r| r.negative).sum::<f64>() / n;
    LossReport {
        noise,
        negative,
        total: weights.noise * noise + weights.negative * negative,
        items: results.len(),
        without_negatives: results.iter().filter(|r| !r.has_negatives).count(),
    }
}

/// Mean loss over the batch without gradients.
pub fn batch_loss(
    params: &DenoiserParams,
    items: &[TrainItem<'_>],
    sched: &NoiseSchedule,
    weights: LossWeights,
) -> Result<LossReport> {
    check_batch(items)?;
    let results = items
        .iter()
        .map(|it| item_pass(params, it, sched, weights, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(report(&results, weights))
}

/// Exact gradient of the batch-mean total loss. Items are evaluated in
/// parallel and reduced in batch order, so the result does not depend on
/// the thread count.
pub fn param_gradients(
    params: &DenoiserParams,
    items: &[TrainItem<'_>],
    sched: &NoiseSchedule,
    weights: LossWeights,
) -> Result<(Vec<f64>, LossReport)> {
    check_batch(items)?;
    let per_item: Vec<Result<(Vec<f64>, ItemResult)>> = items
        .par_iter()
        .map(|it| {
            let mut g = vec![0.0; params.len()];
            let r = item_pass(params, it, sched, weights, Some(&mut g))?;
            Ok((g, r))
        })
        .collect();
    let mut grad = vec![0.0; params.len()];
    let mut results = Vec::with_capacity(items.len());
    for (index, entry) in per_item.into_iter().enumerate() {
        let (g, r) = entry?;
        if !(r.noise.is_finite() && r.negative.is_finite()) || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure { batch_index: index });
        }
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        results.push(r);
    }
    let inv = 1.0 / items.len() as f64;
    grad.iter_mut().for_each(|v| *v *= inv);
    Ok((grad, report(&results, weights)))
}
