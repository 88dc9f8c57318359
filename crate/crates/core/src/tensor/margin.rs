//! Where a forward pass sits relative to its non-differentiable points.
//!
//! Finite differences are only meaningful when no perturbation crosses a
//! kink. [`Kinks`] records, for every ReLU, clamp and max-selection, the
//! distance to its switch point and which side of it the pass is on.

use super::Tensor;

/// Window marker for pools whose winner does not matter.
const IGNORED: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct Kinks {
    /// Smallest distance of any recorded quantity from its switch point.
    pub margin: f64,
    /// Branch taken at each kink, in recording order. Two passes through the
    /// same network that agree here are on the same smooth piece.
    pub pattern: Vec<u32>,
}

impl Default for Kinks {
    fn default() -> Self {
        Self { margin: f64::INFINITY, pattern: Vec::new() }
    }
}

impl Kinks {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, margin: f64, branch: u32) {
        self.margin = self.margin.min(margin);
        self.pattern.push(branch);
    }

    /// A value compared against `at`, as in a ReLU or a floor.
    pub fn threshold(&mut self, v: f64, at: f64) {
        self.push((v - at).abs(), u32::from(v > at));
    }

    /// ReLU pre-activations.
    pub fn relu(&mut self, z: &Tensor) -> &mut Self {
        z.data().iter().for_each(|&v| self.threshold(v, 0.0));
        self
    }

    /// BReLU pre-activations, clipped at 0 and 1.
    pub fn brelu(&mut self, z: &Tensor) -> &mut Self {
        for &v in z.data() {
            self.push(v.abs().min((v - 1.0).abs()), u32::from(v > 0.0) + u32::from(v > 1.0));
        }
        self
    }

    /// A max over `values`: gap between the two largest and the winner's
    /// position. With `skip_nonpositive`, windows whose max is not positive
    /// are ignored (they hold ReLU zeros, which stay put while the ReLU
    /// margin holds).
    fn max(&mut self, values: impl Iterator<Item = f64>, skip_nonpositive: bool) {
        let (mut a, mut b, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
        for (i, v) in values.enumerate() {
            if v > a {
                (b, a, arg) = (a, v, i as u32);
            } else if v > b {
                b = v;
            }
        }
        if skip_nonpositive && a <= 0.0 {
            self.pattern.push(IGNORED);
        } else {
            self.push(a - b, arg);
        }
    }

    /// Maxout over consecutive channel groups.
    pub fn maxout(&mut self, x: &Tensor, group: usize) -> &mut Self {
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let plane = h * w;
        for o in 0..c / group {
            for p in 0..plane {
                self.max((o * group..(o + 1) * group).map(|ch| x.data()[ch * plane + p]), false);
            }
        }
        self
    }

    /// 2×2 stride-2 max pooling of post-ReLU activations.
    pub fn maxpool2(&mut self, x: &Tensor) -> &mut Self {
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        for ch in 0..c {
            for y in (0..h).step_by(2) {
                for xx in (0..w).step_by(2) {
                    let vals = [(y, xx), (y, xx + 1), (y + 1, xx), (y + 1, xx + 1)].map(|(a, b)| x.at3(ch, a, b));
                    self.max(vals.into_iter(), true);
                }
            }
        }
        self
    }

    /// Same-size `k×k` max pooling over the distinct pixels of each window.
    pub fn maxpool_same(&mut self, x: &Tensor, k: usize) -> &mut Self {
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let r = k / 2;
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let ys = y.saturating_sub(r)..(y + r + 1).min(h);
                    let vals = ys.flat_map(|sy| (xx.saturating_sub(r)..(xx + r + 1).min(w)).map(move |sx| (sy, sx)));
                    self.max(vals.map(|(sy, sx)| x.at3(ch, sy, sx)), false);
                }
            }
        }
        self
    }

    /// A top-`n` selection from `scores`: the gap between the `n`th and
    /// `n+1`th largest, and the selected positions.
    pub fn top_n(&mut self, scores: &[f64], n: usize) -> &mut Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let gap = if n < scores.len() { scores[order[n - 1]] - scores[order[n]] } else { f64::INFINITY };
        self.margin = self.margin.min(gap);
        let mut chosen: Vec<u32> = order[..n.min(scores.len())].iter().map(|&i| i as u32).collect();
        chosen.sort_unstable();
        self.pattern.extend(chosen);
        self
    }
}
