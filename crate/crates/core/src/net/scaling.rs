//! Per-coordinate affine scaling of grasp vectors and scene points.
//!
//! Raw grasp coordinates mix metres (offsets of a few centimetres) with
//! radians and scene points sit far from the camera origin, so the network
//! sees standardized inputs instead. Both scalings are fitted once on the
//! training scenes and stored with the parameters; the identity scaling
//! leaves inputs untouched.

use serde::{Deserialize, Serialize};

use crate::se3::{GraspVector, GRASP_DIM};

/// Smallest per-coordinate spread used when fitting, so constant
/// coordinates are not blown up.
pub const MIN_SPREAD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspScaling {
    pub mean: GraspVector,
    pub std: GraspVector,
}

impl Default for GraspScaling {
    fn default() -> Self {
        Self::identity()
    }
}

impl GraspScaling {
    pub fn identity() -> Self {
        Self { mean: [0.0; GRASP_DIM], std: [1.0; GRASP_DIM] }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Mean and standard deviation of each coordinate, spread floored at
    /// [`MIN_SPREAD`]. Returns the identity for an empty set.
    pub fn fit<'a>(vectors: impl IntoIterator<Item = &'a GraspVector>) -> Self {
        match moments(vectors) {
            Some((mean, std)) => Self { mean, std },
            None => Self::identity(),
        }
    }

    pub fn normalize(&self, v: &GraspVector) -> GraspVector {
        std::array::from_fn(|i| (v[i] - self.mean[i]) / self.std[i])
    }

    pub fn denormalize(&self, v: &GraspVector) -> GraspVector {
        std::array::from_fn(|i| v[i] * self.std[i] + self.mean[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointScaling {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for PointScaling {
    fn default() -> Self {
        Self::identity()
    }
}

impl PointScaling {
    pub fn identity() -> Self {
        Self { mean: [0.0; 3], std: [1.0; 3] }
    }

    /// Per-axis mean and spread of all points, floored like [`GraspScaling::fit`].
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a [f64; 3]>) -> Self {
        match moments(points) {
            Some((mean, std)) => Self { mean, std },
            None => Self::identity(),
        }
    }

    pub fn apply(&self, p: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (p[i] - self.mean[i]) / self.std[i])
    }
}

fn moments<'a, const N: usize>(items: impl IntoIterator<Item = &'a [f64; N]>) -> Option<([f64; N], [f64; N])> {
    let mut n = 0usize;
    let mut sum = [0.0; N];
    let mut sq = [0.0; N];
    for v in items {
        n += 1;
        for i in 0..N {
            sum[i] += v[i];
            sq[i] += v[i] * v[i];
        }
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let mean: [f64; N] = std::array::from_fn(|i| sum[i] / nf);
    let std = std::array::from_fn(|i| (sq[i] / nf - mean[i] * mean[i]).max(0.0).sqrt().max(MIN_SPREAD));
    Some((mean, std))
}
