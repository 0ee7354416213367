//! Mini point-set encoder: farthest-point grouping and max-pooled per-point
//! features, plus the sinusoidal step embedding.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Points in canonical (lexicographically sorted) order, grouped around
/// farthest-point-sampled centroids. Depends only on the geometry, so it is
/// computed once per scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGroups {
    pub points: Vec<[f64; 3]>,
    pub centroids: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
}

fn lex(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2]))
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Farthest point sampling seeded at the first canonical point; ties go to
/// the lowest canonical index.
pub fn farthest_point_sample(points: &[[f64; 3]], count: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(count);
    if points.is_empty() || count == 0 {
        return chosen;
    }
    let mut taken = vec![false; points.len()];
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut next = 0;
    for _ in 0..count.min(points.len()) {
        chosen.push(next);
        taken[next] = true;
        let c = points[next];
        let mut best = None::<(usize, f64)>;
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, &c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if !taken[i] && best.is_none_or(|(_, bd)| min_d[i] > bd) {
                best = Some((i, min_d[i]));
            }
        }
        match best {
            Some((i, _)) => next = i,
            None => break,
        }
    }
    chosen
}

impl SceneGroups {
    pub fn new(points: &[[f64; 3]], n_tokens: usize) -> Result<Self> {
        if points.len() < n_tokens {
            return Err(Error::invalid(format!(
                "scene has {} points, encoder needs at least {n_tokens}",
                points.len()
            )));
        }
        let mut sorted = points.to_vec();
        sorted.sort_by(lex);
        let centroids = farthest_point_sample(&sorted, n_tokens);
        let mut groups = vec![Vec::new(); n_tokens];
        let mut owner = vec![usize::MAX; sorted.len()];
        for (g, &c) in centroids.iter().enumerate() {
            owner[c] = g;
        }
        for (i, p) in sorted.iter().enumerate() {
            if owner[i] == usize::MAX {
                let mut best = (0, f64::INFINITY);
                for (g, &c) in centroids.iter().enumerate() {
                    let d = dist2(p, &sorted[c]);
                    if d < best.1 {
                        best = (g, d);
                    }
                }
                owner[i] = best.0;
            }
            groups[owner[i]].push(i);
        }
        Ok(Self { points: sorted, centroids, groups })
    }

    pub fn n_tokens(&self) -> usize {
        self.groups.len()
    }
}

/// Sinusoidal embedding: pairs `(sin(t / 10000^(2k/d)), cos(..))`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for k in 0..dim / 2 {
        let arg = t as f64 / 10000f64.powf(2.0 * k as f64 / dim as f64);
        out[2 * k] = arg.sin();
        out[2 * k + 1] = arg.cos();
    }
    out
}
