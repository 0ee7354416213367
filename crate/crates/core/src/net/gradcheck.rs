//! Central finite-difference check of the analytic gradients.

use rand::seq::SliceRandom;
use serde::Serialize;

use super::denoiser::DenoiserParams;
use super::grad::{batch_loss, param_gradients, LossWeights, SceneInput, TrainItem};
use crate::error::Result;
use crate::rng::stream;
use crate::schedule::NoiseSchedule;

/// Magnitude below which gradients are compared absolutely rather than
/// relatively.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCheck {
    pub group: String,
    pub coords: usize,
    pub max_rel_error: f64,
    /// Coordinate with the largest error and its analytic and numeric values.
    pub worst: (usize, f64, f64),
    /// Drawn coordinates passed over because a max-pool winner changed
    /// within the difference interval.
    pub skipped: usize,
}

/// `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn pool_winners(params: &DenoiserParams, items: &[TrainItem<'_>]) -> Vec<Vec<usize>> {
    items
        .iter()
        .filter_map(|it| match it.scene {
            SceneInput::Encode(groups) => Some(params.encode_groups_traced(groups).1.argmax),
            SceneInput::Frozen(_) => None,
        })
        .collect()
}

/// Compares the analytic gradient with `(L(x+h) - L(x-h)) / 2h` on up to
/// `per_group` seeded coordinates of every parameter group.
///
/// The scene encoder max-pools, so the loss has kinks. A coordinate whose
/// perturbation changes any pooled winner is not differentiable within the
/// interval; it is skipped and the next seeded coordinate is used.
pub fn check_gradients(
    params: &DenoiserParams,
    items: &[TrainItem<'_>],
    sched: &NoiseSchedule,
    weights: LossWeights,
    per_group: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<GroupCheck>> {
    let (grad, _) = param_gradients(params, items, sched, weights)?;
    let mut probe = params.clone();
    let mut out = Vec::new();
    let base = pool_winners(params, items);
    for (gi, (group, ranges)) in params.groups().into_iter().enumerate() {
        let mut coords: Vec<usize> = ranges.iter().flat_map(|r| r.clone()).collect();
        let mut rng = stream(seed, &[8, gi as u64]);
        coords.shuffle(&mut rng);
        let mut check = GroupCheck { group, coords: 0, max_rel_error: 0.0, worst: (0, 0.0, 0.0), skipped: 0 };
        for &i in &coords {
            if check.coords == per_group {
                break;
            }
            let x = probe.theta[i];
            probe.theta[i] = x + h;
            let up = batch_loss(&probe, items, sched, weights)?.total;
            let kink_up = pool_winners(&probe, items) != base;
            probe.theta[i] = x - h;
            let down = batch_loss(&probe, items, sched, weights)?.total;
            let kink_down = pool_winners(&probe, items) != base;
            probe.theta[i] = x;
            if kink_up || kink_down {
                check.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(grad[i], numeric);
            if err > check.max_rel_error || check.coords == 0 {
                check.max_rel_error = check.max_rel_error.max(err);
                check.worst = (i, grad[i], numeric);
            }
            check.coords += 1;
        }
        out.push(check);
    }
    Ok(out)
}
