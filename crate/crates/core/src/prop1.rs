//! Exhaustive check of the negative-prompt factorisation on discrete toys.
//!
//! The target is `p(g | S, t, not t~)`, with `not t~` the complement event of
//! the negative prompt. The direct value comes from the joint table; the
//! factorised value is `p(g|S) p(g|t,S) / p(g|t~,S)` renormalised over `g`.
//! Each line of the derivation between the two is also replayed: a line
//! marked "=" must agree pointwise and a line marked "proportional" must
//! differ from its predecessor by a `g`-independent factor.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::stream;

/// Joint table `p(g, S, t, t~)` with `t~` binary (index 1 = present).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteToy {
    pub n_g: usize,
    pub n_s: usize,
    pub n_t: usize,
    pub joint: Vec<f64>,
}

fn normalize(v: &mut [f64]) {
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
}

fn random_dist(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    normalize(&mut v);
    v
}

impl DiscreteToy {
    fn idx(&self, g: usize, s: usize, t: usize, n: usize) -> usize {
        ((g * self.n_s + s) * self.n_t + t) * 2 + n
    }

    pub fn p(&self, g: usize, s: usize, t: usize, n: usize) -> f64 {
        self.joint[self.idx(g, s, t, n)]
    }

    /// `p(g) p(S|g) p(t|g) p(t~|g)`: scene, prompt and negative prompt are
    /// conditionally independent given the grasp.
    pub fn from_factors(prior: &[f64], s_given_g: &[Vec<f64>], t_given_g: &[Vec<f64>], neg_given_g: &[f64]) -> Result<Self> {
        let n_g = prior.len();
        if s_given_g.len() != n_g || t_given_g.len() != n_g || neg_given_g.len() != n_g || n_g == 0 {
            return Err(Error::invalid("factor tables disagree on the number of grasps"));
        }
        let n_s = s_given_g[0].len();
        let n_t = t_given_g[0].len();
        let mut toy = Self { n_g, n_s, n_t, joint: vec![0.0; n_g * n_s * n_t * 2] };
        for g in 0..n_g {
            for s in 0..n_s {
                for t in 0..n_t {
                    let base = prior[g] * s_given_g[g][s] * t_given_g[g][t];
                    let i0 = toy.idx(g, s, t, 0);
                    toy.joint[i0] = base * (1.0 - neg_given_g[g]);
                    toy.joint[i0 + 1] = base * neg_given_g[g];
                }
            }
        }
        toy.validate()?;
        Ok(toy)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        let u = vec![1.0 / n as f64; n];
        Self::from_factors(&u, &vec![u.clone(); n], &vec![u.clone(); n], &vec![0.5; n])
    }

    /// Random positive conditionally independent toy.
    pub fn random_independent(seed: u64) -> Result<Self> {
        let mut rng = stream(seed, &[5]);
        let n_g = rng.random_range(2..=6);
        let n_s = rng.random_range(2..=4);
        let n_t = rng.random_range(2..=4);
        let prior = random_dist(&mut rng, n_g);
        let s: Vec<_> = (0..n_g).map(|_| random_dist(&mut rng, n_s)).collect();
        let t: Vec<_> = (0..n_g).map(|_| random_dist(&mut rng, n_t)).collect();
        let neg: Vec<f64> = (0..n_g).map(|_| rng.random_range(0.05..0.95)).collect();
        Self::from_factors(&prior, &s, &t, &neg)
    }

    /// Like [`Self::random_independent`] but `p(t~|g)` does not vary with `g`.
    pub fn random_constant_negative(seed: u64) -> Result<Self> {
        let mut rng = stream(seed, &[6]);
        let n_g = rng.random_range(2..=6);
        let prior = random_dist(&mut rng, n_g);
        let s: Vec<_> = (0..n_g).map(|_| random_dist(&mut rng, 3)).collect();
        let t: Vec<_> = (0..n_g).map(|_| random_dist(&mut rng, 3)).collect();
        let c = rng.random_range(0.05..0.95);
        Self::from_factors(&prior, &s, &t, &vec![c; n_g])
    }

    /// Negative prompt that depends on the scene as well as the grasp.
    pub fn planted_dependence(seed: u64) -> Result<Self> {
        let mut rng = stream(seed, &[7]);
        let (n_g, n_s, n_t) = (3, 3, 2);
        let prior = random_dist(&mut rng, n_g);
        let s: Vec<_> = (0..n_g).map(|_| random_dist(&mut rng, n_s)).collect();
        let t: Vec<_> = (0..n_g).map(|_| random_dist(&mut rng, n_t)).collect();
        let mut toy = Self { n_g, n_s, n_t, joint: vec![0.0; n_g * n_s * n_t * 2] };
        for g in 0..n_g {
            for si in 0..n_s {
                let q = 0.1 + 0.8 * ((g + 2 * si) % 5) as f64 / 4.0;
                for ti in 0..n_t {
                    let base = prior[g] * s[g][si] * t[g][ti];
                    let i0 = toy.idx(g, si, ti, 0);
                    toy.joint[i0] = base * (1.0 - q);
                    toy.joint[i0 + 1] = base * q;
                }
            }
        }
        toy.validate()?;
        Ok(toy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint.len() != self.n_g * self.n_s * self.n_t * 2 {
            return Err(Error::invalid("joint table has the wrong size"));
        }
        if let Some(i) = self.joint.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Degenerate(format!("joint entry {i} is not a positive probability")));
        }
        let z: f64 = self.joint.iter().sum();
        if (z - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("joint sums to {z}")));
        }
        Ok(())
    }

    fn sum(&self, g: Option<usize>, s: Option<usize>, t: Option<usize>, n: Option<usize>) -> f64 {
        let mut acc = 0.0;
        for gi in 0..self.n_g {
            if g.is_some_and(|x| x != gi) {
                continue;
            }
            for si in 0..self.n_s {
                if s.is_some_and(|x| x != si) {
                    continue;
                }
                for ti in 0..self.n_t {
                    if t.is_some_and(|x| x != ti) {
                        continue;
                    }
                    for ni in 0..2 {
                        if n.is_some_and(|x| x != ni) {
                            continue;
                        }
                        acc += self.p(gi, si, ti, ni);
                    }
                }
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Equal,
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineCheck {
    pub line: usize,
    pub relation: Relation,
    pub justification: &'static str,
    /// Largest relative departure of the line ratio from a constant (or
    /// from 1 for an equality).
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop1Report {
    /// Largest relative error between the normalised direct and factorised
    /// distributions over all `(S, t)` queries.
    pub max_rel_error: f64,
    pub lines: Vec<LineCheck>,
}

impl Prop1Report {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    /// First replayed line whose deviation exceeds `tol`.
    pub fn first_broken_line(&self, tol: f64) -> Option<&LineCheck> {
        self.lines.iter().find(|l| l.deviation > tol)
    }
}

const STEPS: [(Relation, &str); 6] = [
    (Relation::Proportional, "divide out p(S, t, not t~)"),
    (Relation::Equal, "negative prompt independent of (t, S) given g"),
    (Relation::Proportional, "Bayes on p(g, t, S), drop p(S)"),
    (Relation::Proportional, "replace p(not t~ | g) by 1 / p(t~ | g)"),
    (Relation::Equal, "S independent of t~ given g"),
    (Relation::Proportional, "Bayes, drop p(t, S) and p(t~, S)"),
];

fn rel_spread(ratios: &[f64], relation: Relation) -> f64 {
    let reference = match relation {
        Relation::Equal => 1.0,
        Relation::Proportional => ratios[0],
    };
    ratios.iter().map(|r| (r / reference - 1.0).abs()).fold(0.0, f64::max)
}

/// Compares the direct posterior with the factorised form for every
/// `(S, t)` and replays the derivation.
pub fn verify_proposition1(toy: &DiscreteToy) -> Result<Prop1Report> {
    toy.validate()?;
    let ng = toy.n_g;
    let mut max_rel_error: f64 = 0.0;
    let mut deviations = [0.0f64; STEPS.len()];
    for s in 0..toy.n_s {
        for t in 0..toy.n_t {
            let p_s = toy.sum(None, Some(s), None, None);
            let p_ts = toy.sum(None, Some(s), Some(t), None);
            let p_ns = toy.sum(None, Some(s), None, Some(1));
            let mut lines: Vec<Vec<f64>> = vec![Vec::with_capacity(ng); STEPS.len() + 1];
            let mut direct = Vec::with_capacity(ng);
            let mut factored = Vec::with_capacity(ng);
            for g in 0..ng {
                let p_g = toy.sum(Some(g), None, None, None);
                let p_gs = toy.sum(Some(g), Some(s), None, None);
                let p_gts = toy.sum(Some(g), Some(s), Some(t), None);
                let p_gtsn = toy.p(g, s, t, 0);
                let p_gn = toy.sum(Some(g), None, None, Some(1));
                let p_gsn = toy.sum(Some(g), Some(s), None, Some(1));
                let p_not_n_g = toy.sum(Some(g), None, None, Some(0)) / p_g;
                let p_n_g = p_gn / p_g;
                let p_g_given_s = p_gs / p_s;
                let p_ts_given_g = p_gts / p_g;
                let p_s_given_g = p_gs / p_g;
                let p_s_given_gn = p_gsn / p_gn;
                let p_g_given_ts = p_gts / p_ts;
                let p_g_given_ns = p_gsn / p_ns;

                let posterior = p_gtsn / toy.sum(None, Some(s), Some(t), Some(0));
                lines[0].push(posterior);
                lines[1].push(p_gtsn);
                lines[2].push(p_not_n_g * p_gts);
                lines[3].push(p_g_given_s * p_ts_given_g * p_not_n_g / p_s_given_g);
                lines[4].push(p_g_given_s * p_ts_given_g / (p_s_given_g * p_n_g));
                lines[5].push(p_g_given_s * p_ts_given_g * p_g / (p_s_given_gn * p_gn));
                lines[6].push(p_g_given_s * p_g_given_ts / p_g_given_ns);
                direct.push(posterior);
                factored.push(p_g_given_s * p_g_given_ts / p_g_given_ns);
            }
            normalize(&mut factored);
            for g in 0..ng {
                max_rel_error = max_rel_error.max((factored[g] - direct[g]).abs() / direct[g]);
            }
            for (k, (relation, _)) in STEPS.iter().enumerate() {
                let ratios: Vec<f64> = (0..ng).map(|g| lines[k + 1][g] / lines[k][g]).collect();
                deviations[k] = deviations[k].max(rel_spread(&ratios, *relation));
            }
        }
    }
    let lines = STEPS
        .iter()
        .enumerate()
        .map(|(k, (relation, justification))| LineCheck {
            line: k + 1,
            relation: *relation,
            justification,
            deviation: deviations[k],
        })
        .collect();
    Ok(Prop1Report { max_rel_error, lines })
}

/// Runs [`verify_proposition1`] on `count` seeded random toys and returns
/// the worst report.
pub fn random_suite(seed: u64, count: usize) -> Result<Prop1Report> {
    let mut worst: Option<Prop1Report> = None;
    for k in 0..count {
        let r = verify_proposition1(&DiscreteToy::random_independent(seed.wrapping_add(k as u64))?)?;
        if worst.as_ref().is_none_or(|w| r.max_rel_error > w.max_rel_error) {
            worst = Some(r);
        }
    }
    worst.ok_or_else(|| Error::invalid("suite needs at least one toy"))
}
