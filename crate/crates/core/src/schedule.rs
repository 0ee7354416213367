//! Linear variance schedule and the forward noising process.
//!
//! Steps are 1-based (`1..=T`); `alpha_bar(0)` is defined as 1 so that the
//! deterministic sampler can land exactly on the clean sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{GraspVector, GRASP_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 200, beta_start: 1e-4, beta_end: 0.02 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let beta: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            let span = (beta_end - beta_start) / (steps - 1) as f64;
            (0..steps).map(|i| beta_start + i as f64 * span).collect()
        };
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self { beta, alpha, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// Cumulative product up to `t`; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Closed-form marginal: `sqrt(abar_t) g0 + sqrt(1 - abar_t) eps`.
    pub fn q_sample(&self, g0: &GraspVector, t: usize, eps: &GraspVector) -> Result<GraspVector> {
        let ab = self.alpha_bar[self.index(t)?];
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(std::array::from_fn(|i| a * g0[i] + b * eps[i]))
    }

    /// One Markov noising step: `sqrt(1 - beta_t) g + sqrt(beta_t) z`.
    pub fn single_step_noising(&self, g_prev: &GraspVector, t: usize, z: &GraspVector) -> Result<GraspVector> {
        let beta = self.beta[self.index(t)?];
        let (a, b) = ((1.0 - beta).sqrt(), beta.sqrt());
        Ok(std::array::from_fn(|i| a * g_prev[i] + b * z[i]))
    }
}

pub fn zero_vector() -> GraspVector {
    [0.0; GRASP_DIM]
}
