//! Grasp-set metrics: coverage rate, earth mover's distance, collision-free
//! rate, target assignment and an inference timer.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::GraspScene;
use crate::error::{Error, Result};
use crate::scene::SceneCloud;
use crate::se3::{collides, pose_distance_with, GraspPose, GripperModel, PoseMetric};

pub const DEFAULT_DELTA: f64 = 0.02;

fn cost_matrix(a: &[GraspPose], b: &[GraspPose], metric: &PoseMetric) -> Result<Vec<Vec<f64>>> {
    a.iter().map(|x| b.iter().map(|y| pose_distance_with(x, y, metric)).collect()).collect()
}

/// Fraction of `truth` with some detected grasp within `delta`.
pub fn coverage_rate(detected: &[GraspPose], truth: &[GraspPose], delta: f64) -> Result<f64> {
    coverage_rate_with(detected, truth, delta, &PoseMetric::default())
}

pub fn coverage_rate_with(detected: &[GraspPose], truth: &[GraspPose], delta: f64, metric: &PoseMetric) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::invalid("coverage needs at least one ground-truth grasp"));
    }
    let mut covered = 0usize;
    for g in truth {
        let mut hit = false;
        for d in detected {
            if pose_distance_with(g, d, metric)? <= delta {
                hit = true;
                break;
            }
        }
        covered += hit as usize;
    }
    Ok(covered as f64 / truth.len() as f64)
}

/// Minimum-cost perfect matching on a square cost matrix. Returns the
/// column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Potentials formulation with 1-based sentinel column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Transportation problem with integer supplies and demands of equal
/// totals, solved by successive shortest paths. Returns the optimal
/// flow matrix.
pub fn transport(cost: &[Vec<f64>], supply: &[u64], demand: &[u64]) -> Result<Vec<Vec<u64>>> {
    let n = supply.len();
    let m = demand.len();
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("cost matrix does not match supplies and demands"));
    }
    if supply.iter().sum::<u64>() != demand.iter().sum::<u64>() {
        return Err(Error::invalid("supply and demand totals differ"));
    }
    let mut flow = vec![vec![0u64; m]; n];
    let mut rem_s = supply.to_vec();
    let mut rem_d = demand.to_vec();
    // Node potentials for reduced costs: rows 0..n, columns n..n+m.
    let mut pot = vec![0.0; n + m];
    let col_min: Vec<f64> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).fold(f64::INFINITY, f64::min)).collect();
    pot[n..].copy_from_slice(&col_min);
    loop {
        if rem_s.iter().all(|&s| s == 0) {
            break;
        }
        // Dijkstra from all rows with remaining supply. Forward edges row->col
        // always exist; backward edges col->row exist where flow > 0.
        let total = n + m;
        let mut dist = vec![f64::INFINITY; total];
        let mut prev = vec![usize::MAX; total];
        let mut done = vec![false; total];
        for i in 0..n {
            if rem_s[i] > 0 {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for k in 0..total {
                if !done[k] && dist[k] < bd {
                    bd = dist[k];
                    best = k;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < n {
                let i = best;
                for j in 0..m {
                    let c = n + j;
                    let rc = cost[i][j] + pot[i] - pot[c];
                    let nd = bd + rc.max(0.0);
                    if nd < dist[c] {
                        dist[c] = nd;
                        prev[c] = i;
                    }
                }
            } else {
                let j = best - n;
                for i in 0..n {
                    if flow[i][j] > 0 {
                        let rc = -cost[i][j] + pot[best] - pot[i];
                        let nd = bd + rc.max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = best;
                        }
                    }
                }
            }
        }
        // Cheapest reachable column with remaining demand.
        let mut target = usize::MAX;
        let mut td = f64::INFINITY;
        for j in 0..m {
            if rem_d[j] > 0 && dist[n + j] < td {
                td = dist[n + j];
                target = n + j;
            }
        }
        if target == usize::MAX {
            return Err(Error::Degenerate("transportation problem has no augmenting path".into()));
        }
        for k in 0..total {
            if dist[k].is_finite() {
                pot[k] += dist[k];
            }
        }
        // Bottleneck along the path.
        let mut amount = rem_d[target - n];
        let mut node = target;
        while prev[node] != usize::MAX {
            let from = prev[node];
            if from >= n {
                amount = amount.min(flow[node][from - n]);
            }
            node = from;
        }
        amount = amount.min(rem_s[node]);
        let source = node;
        let mut node = target;
        while prev[node] != usize::MAX {
            let from = prev[node];
            if from < n {
                flow[from][node - n] += amount;
            } else {
                flow[node][from - n] -= amount;
            }
            node = from;
        }
        rem_s[source] -= amount;
        rem_d[target - n] -= amount;
    }
    Ok(flow)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Optimal-transport cost between uniform distributions over the two sets.
pub fn emd(detected: &[GraspPose], truth: &[GraspPose]) -> Result<f64> {
    emd_with(detected, truth, &PoseMetric::default())
}

pub fn emd_with(detected: &[GraspPose], truth: &[GraspPose], metric: &PoseMetric) -> Result<f64> {
    if detected.is_empty() || truth.is_empty() {
        return Err(Error::invalid("earth mover's distance needs two non-empty sets"));
    }
    let cost = cost_matrix(detected, truth, metric)?;
    let n = detected.len();
    let m = truth.len();
    if n == m {
        let a = hungarian(&cost);
        return Ok(a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / n as f64);
    }
    let g = gcd(n as u64, m as u64);
    let s = m as u64 / g;
    let d = n as u64 / g;
    let flow = transport(&cost, &vec![s; n], &vec![d; m])?;
    let total = (n as u64 * s) as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..m {
            if flow[i][j] > 0 {
                sum += flow[i][j] as f64 * cost[i][j];
            }
        }
    }
    Ok(sum / total)
}

/// Fraction of detected grasps whose gripper proxy is free of scene points.
pub fn collision_free_rate(detected: &[GraspPose], cloud: &SceneCloud, model: &GripperModel) -> Result<f64> {
    if detected.is_empty() {
        return Err(Error::invalid("collision-free rate needs at least one grasp"));
    }
    let mut free = 0usize;
    for g in detected {
        free += !collides(g, model, cloud)? as usize;
    }
    Ok(free as f64 / detected.len() as f64)
}

fn centroid(grasps: &[GraspPose]) -> Result<[f64; 3]> {
    let mut c = [0.0; 3];
    for g in grasps {
        let t = g.translation()?;
        for k in 0..3 {
            c[k] += t[k];
        }
    }
    Ok(c.map(|v| v / grasps.len() as f64))
}

/// Fraction of grasps whose position is nearer the target object's
/// ground-truth grasp centroid than any other object's.
pub fn target_assignment_rate(grasps: &[GraspPose], scene: &GraspScene, target: &str) -> Result<f64> {
    if grasps.is_empty() {
        return Err(Error::invalid("assignment rate needs at least one grasp"));
    }
    let ti = scene
        .objects
        .iter()
        .position(|o| o.name == target.to_lowercase())
        .ok_or_else(|| Error::invalid(format!("scene has no object {target:?}")))?;
    let centroids = scene
        .objects
        .iter()
        .filter(|o| !o.grasps.is_empty())
        .map(|o| Ok((o.name.clone(), centroid(&o.grasps)?)))
        .collect::<Result<Vec<_>>>()?;
    let target_name = &scene.objects[ti].name;
    let mut hits = 0usize;
    for g in grasps {
        let p = g.translation()?;
        let d2 = |c: &[f64; 3]| (0..3).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>();
        let nearest = centroids
            .iter()
            .min_by(|a, b| d2(&a.1).total_cmp(&d2(&b.1)))
            .map(|(n, _)| n);
        hits += (nearest == Some(target_name)) as usize;
    }
    Ok(hits as f64 / grasps.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub pairs: usize,
    pub grasps_per_pair: usize,
    pub total_seconds: f64,
    /// Wall-clock time scaled to 1000 grasps.
    pub seconds_per_1000: f64,
}

/// Times `sampler(pair, grasps_per_pair)` over `pairs` scene-prompt pairs
/// after one untimed warm-up call.
pub fn inference_timer<F>(mut sampler: F, pairs: usize, grasps_per_pair: usize) -> Result<TimingReport>
where
    F: FnMut(usize, usize) -> Result<()>,
{
    if pairs == 0 || grasps_per_pair == 0 {
        return Err(Error::invalid("timing needs at least one pair and one grasp"));
    }
    sampler(0, grasps_per_pair)?;
    let start = Instant::now();
    for p in 0..pairs {
        sampler(p, grasps_per_pair)?;
    }
    let total = start.elapsed().as_secs_f64();
    let grasps = (pairs * grasps_per_pair) as f64;
    Ok(TimingReport { pairs, grasps_per_pair, total_seconds: total, seconds_per_1000: total * 1000.0 / grasps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub scene: String,
    pub prompt: String,
    pub detected: usize,
    pub truth: usize,
    pub cr: f64,
    pub emd: f64,
    pub cfr: f64,
}

/// Scores one scene-prompt pair.
pub fn evaluate_pair(
    scene_id: &str,
    scene: &GraspScene,
    object: &str,
    detected: &[GraspPose],
    delta: f64,
    model: &GripperModel,
) -> Result<PairScore> {
    let obj = scene.object(object).ok_or_else(|| Error::invalid(format!("scene {scene_id} has no object {object:?}")))?;
    Ok(PairScore {
        scene: scene_id.to_string(),
        prompt: obj.prompt(),
        detected: detected.len(),
        truth: obj.grasps.len(),
        cr: coverage_rate(detected, &obj.grasps, delta)?,
        emd: emd(detected, &obj.grasps)?,
        cfr: collision_free_rate(detected, &scene.cloud, model)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// How the metrics were parameterised.
    pub delta: f64,
    pub metric: PoseMetric,
    pub gripper: GripperModel,
    pub cr: f64,
    pub emd: f64,
    pub cfr: f64,
    pub it_seconds: Option<f64>,
    pub pairs: Vec<PairScore>,
}

impl EvalReport {
    /// Means over scene-prompt pairs, folded in the given order.
    pub fn aggregate(pairs: Vec<PairScore>, delta: f64, gripper: GripperModel) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("nothing to evaluate"));
        }
        let n = pairs.len() as f64;
        let mean = |f: fn(&PairScore) -> f64| pairs.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            delta,
            metric: PoseMetric::default(),
            gripper,
            cr: mean(|p| p.cr),
            emd: mean(|p| p.emd),
            cfr: mean(|p| p.cfr),
            it_seconds: None,
            pairs,
        })
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("scene,prompt,detected,truth,cr,emd,cfr\n");
        for p in &self.pairs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.scene, p.prompt, p.detected, p.truth, p.cr, p.emd, p.cfr
            ));
        }
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(json_path, e))?;
        std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.csv()).map_err(|e| Error::io(csv_path, e))
    }
}
