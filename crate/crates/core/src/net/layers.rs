//! Dense layers over a flat parameter vector, with hand-written backward
//! passes. Weights are stored row-major as `out x in`.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Named region of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Parameter group, i.e. the name up to the first dot.
    pub fn group(&self) -> &str {
        self.name.split('.').next().unwrap_or(&self.name)
    }
}

#[derive(Debug, Default, Clone)]
pub struct LayoutBuilder {
    pub slots: Vec<Slot>,
    next: usize,
}

impl LayoutBuilder {
    pub fn alloc(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.next;
        let slot = Slot { name, shape, offset };
        self.next += slot.len();
        self.slots.push(slot);
        offset
    }

    pub fn linear(&mut self, name: &str, inp: usize, out: usize) -> Linear {
        let w = self.alloc(format!("{name}.weight"), vec![out, inp]);
        let b = self.alloc(format!("{name}.bias"), vec![out]);
        Linear { w, b, inp, out }
    }

    pub fn mlp(&mut self, name: &str, inp: usize, hidden: usize, out: usize) -> Mlp {
        Mlp { l1: self.linear(&format!("{name}.0"), inp, hidden), l2: self.linear(&format!("{name}.1"), hidden, out) }
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub fn init<R: Rng>(&self, theta: &mut [f64], rng: &mut R) {
        let bound = 1.0 / (self.inp as f64).sqrt();
        for v in &mut theta[self.w..self.w + self.inp * self.out] {
            *v = rng.random_range(-bound..bound);
        }
        for v in &mut theta[self.b..self.b + self.out] {
            *v = rng.random_range(-bound..bound);
        }
    }

    pub fn forward_into(&self, theta: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inp);
        let w = &theta[self.w..self.w + self.inp * self.out];
        let b = &theta[self.b..self.b + self.out];
        for (o, (row, yo)) in w.chunks_exact(self.inp).zip(y.iter_mut()).enumerate() {
            *yo = b[o] + dot(row, x);
        }
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.out];
        self.forward_into(theta, x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and input gradients into
    /// `dx` when given.
    pub fn backward(&self, theta: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        // weights are allocated before their bias
        let (head, tail) = grad.split_at_mut(self.b);
        let gw = &mut head[self.w..self.w + self.inp * self.out];
        let gb = &mut tail[..self.out];
        for (o, &d) in dy.iter().enumerate() {
            gb[o] += d;
            if d != 0.0 {
                let row = &mut gw[o * self.inp..(o + 1) * self.inp];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
        if let Some(dx) = dx {
            let w = &theta[self.w..self.w + self.inp * self.out];
            for (row, &d) in w.chunks_exact(self.inp).zip(dy) {
                if d != 0.0 {
                    for (g, wi) in dx.iter_mut().zip(row) {
                        *g += d * wi;
                    }
                }
            }
        }
    }
}

/// Two linear layers with a SiLU in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpTrace {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl Mlp {
    pub fn init<R: Rng>(&self, theta: &mut [f64], rng: &mut R) {
        self.l1.init(theta, rng);
        self.l2.init(theta, rng);
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> (Vec<f64>, MlpTrace) {
        let pre = self.l1.forward(theta, x);
        let hidden: Vec<f64> = pre.iter().map(|&v| silu(v)).collect();
        let y = self.l2.forward(theta, &hidden);
        (y, MlpTrace { pre, hidden })
    }

    pub fn backward(
        &self,
        theta: &[f64],
        x: &[f64],
        trace: &MlpTrace,
        dy: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let mut dh = vec![0.0; self.l1.out];
        self.l2.backward(theta, &trace.hidden, dy, grad, Some(&mut dh));
        for (d, &p) in dh.iter_mut().zip(&trace.pre) {
            *d *= silu_grad(p);
        }
        self.l1.backward(theta, x, &dh, grad, dx);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silu_derivative_matches_central_difference() {
        for x in [-4.0, -1.0, -0.1, 0.0, 0.3, 2.5] {
            let h = 1e-6;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_grad(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_backward_matches_definition() {
        let mut b = LayoutBuilder::default();
        let lin = b.linear("l", 3, 2);
        let theta: Vec<f64> = (0..b.total()).map(|i| 0.1 * i as f64 - 0.3).collect();
        let x = [0.5, -1.0, 2.0];
        let y = lin.forward(&theta, &x);
        assert!((y[0] - (theta[6] + theta[0] * 0.5 - theta[1] + 2.0 * theta[2])).abs() < 1e-15);
        let mut grad = vec![0.0; b.total()];
        let mut dx = vec![0.0; 3];
        lin.backward(&theta, &x, &[1.0, 0.0], &mut grad, Some(&mut dx));
        assert_eq!(&grad[0..3], &x);
        assert_eq!(&dx, &theta[0..3]);
        assert_eq!(grad[6], 1.0);
    }
}
