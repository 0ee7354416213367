//! Joint training of the noise predictor and the negative-prompt head.

use std::io::Write;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::GraspScene;
use crate::error::{Error, Result};
use crate::net::{
    GraspScaling, PointScaling,
    param_gradients, DenoiserParams, Embedding, LossReport, LossWeights, ModelConfig, SceneGroups, SceneInput,
    SceneTokens, TrainItem, Vocabulary,
};
use crate::rng::stream;
use crate::schedule::{NoiseSchedule, ScheduleConfig};
use crate::se3::GraspVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the negative-prompt loss; the noise loss gets `1 - zeta`.
    pub loss_ratio_zeta: f64,
    pub p_mask: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epoch after which the scene encoder stops training; `None` means
    /// half of `epochs`.
    pub freeze_scene_after: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_ratio_zeta: 0.1,
            p_mask: 0.1,
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            freeze_scene_after: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_ratio_zeta > 0.0 && self.loss_ratio_zeta < 1.0) {
            return Err(Error::invalid("loss_ratio_zeta must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.p_mask) {
            return Err(Error::invalid("p_mask must lie in [0, 1]"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || self.weight_decay < 0.0 {
            return Err(Error::invalid("lr and weight_decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }

    pub fn freeze_epoch(&self) -> usize {
        self.freeze_scene_after.unwrap_or(self.epochs / 2)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights::from_zeta(self.loss_ratio_zeta)
    }
}

/// Contents of the run config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub schedule: ScheduleConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Text embeddings of the other objects in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSet {
    pub embeddings: Vec<Embedding>,
}

/// Squared L2 distance between predicted and true noise.
pub fn noise_loss(eps_pred: &GraspVector, eps_true: &GraspVector) -> f64 {
    eps_pred.iter().zip(eps_true).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `min_i |neg - target_i|^2` and the minimising index; `(0, None)` when
/// there are no targets.
pub fn negative_loss_argmin(neg: &[f64], targets: &[&[f64]]) -> (f64, Option<usize>) {
    let mut best: (f64, Option<usize>) = (0.0, None);
    for (i, t) in targets.iter().enumerate() {
        let d: f64 = neg.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.1.is_none() || d < best.0 {
            best = (d, Some(i));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeLoss {
    pub value: f64,
    /// Set when the negative set is empty (single-object scene).
    pub flagged: bool,
}

pub fn negative_loss(neg: &Embedding, negatives: &NegativeSet) -> NegativeLoss {
    let targets: Vec<&[f64]> = negatives.embeddings.iter().map(|e| e.vec.as_slice()).collect();
    let (value, idx) = negative_loss_argmin(&neg.vec, &targets);
    NegativeLoss { value, flagged: idx.is_none() }
}

pub fn total_loss(noise: f64, negative: f64, zeta: f64) -> f64 {
    (1.0 - zeta) * noise + zeta * negative
}

/// Returns the null embedding when `u < p_mask`.
pub fn mask_text(text: &Embedding, null: &Embedding, u: f64, p_mask: f64) -> Embedding {
    if u < p_mask {
        null.clone()
    } else {
        text.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// Adam with decoupled weight decay. Coordinates inside `frozen` are
    /// left untouched, moments included.
    pub fn update(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig, frozen: &[Range<usize>]) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        let mut skip = vec![false; theta.len()];
        for r in frozen {
            skip[r.clone()].iter_mut().for_each(|s| *s = true);
        }
        for i in 0..theta.len() {
            if skip[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.adam_eps) + cfg.weight_decay * theta[i]);
        }
    }
}

/// One gradient step on fully specified items.
pub fn train_step(
    params: &mut DenoiserParams,
    adam: &mut AdamState,
    items: &[TrainItem<'_>],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    frozen: &[Range<usize>],
) -> Result<LossReport> {
    let (grad, report) = param_gradients(params, items, sched, cfg.loss_weights())?;
    adam.update(&mut params.theta, &grad, cfg, frozen);
    Ok(report)
}

/// A (scene, target object, ground-truth grasp) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub scene: usize,
    pub target: usize,
    pub negatives: Vec<usize>,
    pub g0: GraspVector,
}

#[derive(Debug, Clone)]
struct PreparedScene {
    groups: SceneGroups,
    frozen: Option<SceneTokens>,
}

/// Draws for one sample, keyed by `(seed, epoch, sample index)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDraw {
    pub t: usize,
    pub eps: GraspVector,
    pub mask_u: f64,
}

pub fn draw_sample(seed: u64, epoch: usize, index: usize, steps: usize) -> SampleDraw {
    let mut rng = stream(seed, &[1, epoch as u64, index as u64]);
    let t = rng.random_range(1..=steps);
    let eps = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
    let mask_u = rng.random::<f64>();
    SampleDraw { t, eps, mask_u }
}

/// Collects the vocabulary of a set of scenes.
pub fn vocabulary_of(scenes: &[GraspScene]) -> Vocabulary {
    Vocabulary::new(scenes.iter().flat_map(|s| s.objects.iter().map(|o| o.name.clone())))
}

pub struct Trainer {
    pub params: DenoiserParams,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub schedule: NoiseSchedule,
    pub epochs_done: usize,
    pub steps_done: u64,
    scenes: Vec<PreparedScene>,
    samples: Vec<Sample>,
}

impl Trainer {
    pub fn new(
        mut params: DenoiserParams,
        adam: Option<AdamState>,
        config: TrainConfig,
        schedule: NoiseSchedule,
        data: &[GraspScene],
        epochs_done: usize,
    ) -> Result<Self> {
        config.validate()?;
        if adam.is_none() {
            let raw = data.iter().flat_map(|s| s.objects.iter().flat_map(|o| o.grasps.iter().map(|g| g.to_vector())));
            params.scaling = GraspScaling::fit(&raw.collect::<Vec<_>>());
            params.point_scaling = PointScaling::fit(data.iter().flat_map(|s| s.cloud.points.iter()));
        }
        let mut scenes = Vec::with_capacity(data.len());
        let mut samples = Vec::new();
        for (si, scene) in data.iter().enumerate() {
            scenes.push(PreparedScene { groups: params.scene_groups(&scene.cloud.points)?, frozen: None });
            let rows = scene
                .objects
                .iter()
                .map(|o| params.vocab.noun_index(&o.name))
                .collect::<Result<Vec<_>>>()?;
            for (oi, obj) in scene.objects.iter().enumerate() {
                let negatives: Vec<usize> = rows.iter().enumerate().filter(|(j, _)| *j != oi).map(|(_, r)| *r).collect();
                for g in &obj.grasps {
                    samples.push(Sample { scene: si, target: rows[oi], negatives: negatives.clone(), g0: params.scaling.normalize(&g.to_vector()) });
                }
            }
        }
        if samples.is_empty() {
            return Err(Error::invalid("training data contains no grasps"));
        }
        let adam = adam.unwrap_or_else(|| AdamState::new(params.len()));
        if adam.m.len() != params.len() {
            return Err(Error::Schema("optimizer state does not match the parameters".into()));
        }
        let steps_done = adam.step;
        Ok(Self { params, adam, config, schedule, epochs_done, steps_done, scenes, samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    fn scene_frozen(&self) -> bool {
        self.epochs_done >= self.config.freeze_epoch()
    }

    fn frozen_ranges(&self) -> Vec<Range<usize>> {
        if self.scene_frozen() {
            vec![self.params.scene_encoder_range()]
        } else {
            Vec::new()
        }
    }

    /// Sample order of an epoch.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        let mut rng: ChaCha8Rng = stream(self.config.seed, &[2, epoch as u64]);
        order.shuffle(&mut rng);
        order
    }

    fn item(&self, epoch: usize, index: usize) -> TrainItem<'_> {
        let s = &self.samples[index];
        let draw = draw_sample(self.config.seed, epoch, index, self.schedule.steps());
        let scene = &self.scenes[s.scene];
        TrainItem {
            scene: match &scene.frozen {
                Some(tok) => SceneInput::Frozen(tok),
                None => SceneInput::Encode(&scene.groups),
            },
            target: s.target,
            masked: draw.mask_u < self.config.p_mask,
            negatives: s.negatives.clone(),
            g0: s.g0,
            t: draw.t,
            eps: draw.eps,
        }
    }

    fn refresh_frozen_tokens(&mut self) {
        let frozen = self.scene_frozen();
        for scene in &mut self.scenes {
            if frozen && scene.frozen.is_none() {
                scene.frozen = Some(self.params.encode_groups(&scene.groups));
            } else if !frozen {
                scene.frozen = None;
            }
        }
    }

    /// Runs one epoch and returns its mean losses. Writes one
    /// `step  epoch  L_noise  L_negative  L` line per step to `log`.
    pub fn run_epoch(&mut self, log: &mut dyn Write) -> Result<LossReport> {
        self.refresh_frozen_tokens();
        let epoch = self.epochs_done;
        let order = self.epoch_order(epoch);
        let frozen = self.frozen_ranges();
        let mut sum = LossReport::default();
        let mut batches = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            let items: Vec<TrainItem<'_>> = chunk.iter().map(|&i| self.item(epoch, i)).collect();
            let (grad, report) = param_gradients(&self.params, &items, &self.schedule, self.config.loss_weights())?;
            drop(items);
            self.adam.update(&mut self.params.theta, &grad, &self.config, &frozen);
            self.steps_done += 1;
            writeln!(
                log,
                "{}\t{}\t{:.9e}\t{:.9e}\t{:.9e}",
                self.steps_done, epoch, report.noise, report.negative, report.total
            )
            .map_err(|e| Error::io("<metrics log>", e))?;
            sum.noise += report.noise;
            sum.negative += report.negative;
            sum.total += report.total;
            sum.items += report.items;
            sum.without_negatives += report.without_negatives;
            batches += 1;
        }
        let b = batches.max(1) as f64;
        sum.noise /= b;
        sum.negative /= b;
        sum.total /= b;
        self.epochs_done += 1;
        Ok(sum)
    }

    /// Trains until `config.epochs` epochs are done.
    pub fn run(&mut self, log: &mut dyn Write) -> Result<Vec<LossReport>> {
        let mut out = Vec::new();
        while self.epochs_done < self.config.epochs {
            out.push(self.run_epoch(log)?);
        }
        Ok(out)
    }
}

pub const METRICS_HEADER: &str = "step\tepoch\tL_noise\tL_negative\tL";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_loss_examples() {
        let z = [0.0; 7];
        assert_eq!(noise_loss(&z, &z), 0.0);
        let mut e1 = z;
        e1[0] = 1.0;
        assert_eq!(noise_loss(&e1, &z), 1.0);
        let mut e2 = z;
        e2[1] = 1.0;
        assert_eq!(noise_loss(&e1, &e2), 2.0);
    }

    #[test]
    fn negative_loss_examples() {
        let emb = |v: Vec<f64>| Embedding { vec: v };
        let zero = emb(vec![0.0, 0.0]);
        let set = NegativeSet { embeddings: vec![emb(vec![1.0, 0.0]), emb(vec![2.0, 0.0])] };
        assert_eq!(negative_loss(&zero, &set), NegativeLoss { value: 1.0, flagged: false });
        let same = NegativeSet { embeddings: vec![emb(vec![3.0, 1.0]), emb(vec![0.0, 0.0])] };
        assert_eq!(negative_loss(&zero, &same).value, 0.0);
        let one = NegativeSet { embeddings: vec![emb(vec![1.0, 2.0])] };
        assert_eq!(negative_loss(&zero, &one).value, 5.0);
        let empty = NegativeSet { embeddings: vec![] };
        assert_eq!(negative_loss(&zero, &empty), NegativeLoss { value: 0.0, flagged: true });
    }

    #[test]
    fn total_loss_mix() {
        assert!((total_loss(1.0, 0.0, 0.1) - 0.9).abs() < 1e-15);
        assert!((total_loss(0.0, 1.0, 0.1) - 0.1).abs() < 1e-15);
        assert!((total_loss(1.0, 1.0, 0.2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn masking() {
        let text = Embedding { vec: vec![1.0, 2.0] };
        let null = Embedding { vec: vec![0.0, 0.0] };
        assert_eq!(mask_text(&text, &null, 0.05, 0.1), null);
        assert_eq!(mask_text(&text, &null, 0.95, 0.1), text);
        for u in [0.0, 0.3, 0.999] {
            assert_eq!(mask_text(&text, &null, u, 0.0), text);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { loss_ratio_zeta: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { p_mask: 1.5, ..Default::default() }.validate().is_err());
        assert_eq!(TrainConfig { epochs: 200, ..Default::default() }.freeze_epoch(), 100);
    }

    #[test]
    fn draws_are_keyed() {
        let a = draw_sample(1, 2, 3, 200);
        assert_eq!(a, draw_sample(1, 2, 3, 200));
        assert_ne!(a, draw_sample(1, 2, 4, 200));
        assert!((1..=200).contains(&a.t));
    }

    #[test]
    fn zero_lr_keeps_params() {
        let cfg = TrainConfig { lr: 0.0, ..Default::default() };
        let mut theta = vec![0.5, -1.0, 2.0];
        let before = theta.clone();
        let mut adam = AdamState::new(3);
        adam.update(&mut theta, &[1.0, 2.0, 3.0], &cfg, &[]);
        assert_eq!(theta, before);
    }

    #[test]
    fn frozen_ranges_untouched() {
        let cfg = TrainConfig::default();
        let mut theta = vec![1.0; 4];
        let mut adam = AdamState::new(4);
        adam.update(&mut theta, &[1.0; 4], &cfg, &[1..3]);
        assert_eq!(&theta[1..3], &[1.0, 1.0]);
        assert!(theta[0] < 1.0 && theta[3] < 1.0);
        assert_eq!(adam.m[1], 0.0);
    }
}
