use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Sum tree over `n` nonnegative leaf weights.
///
/// Nodes live in a flat array of `2 * capacity` slots with the root at 1 and
/// the children of node `k` at `2k` and `2k + 1`; leaves occupy
/// `capacity..2 * capacity`. Capacity is the next power of two at or above
/// `n`, and padding leaves stay at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingTree {
    capacity: usize,
    n: usize,
    nodes: Vec<f64>,
}

impl SamplingTree {
    /// Builds the tree bottom-up in O(n).
    pub fn build(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("sampling tree needs at least one weight"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("sampling weights must be finite and nonnegative"));
        }
        let n = weights.len();
        let capacity = n.next_power_of_two();
        let mut tree = Self { capacity, n, nodes: vec![0.0; 2 * capacity] };
        tree.nodes[capacity..capacity + n].copy_from_slice(weights);
        tree.rebuild_internal();
        if !(tree.total() > 0.0) {
            return Err(Error::EmptyDistribution(tree.total()));
        }
        Ok(tree)
    }

    /// Replaces every leaf weight at once, O(n).
    pub fn assign(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("sampling weights must be finite and nonnegative"));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::EmptyDistribution(0.0));
        }
        self.nodes[self.capacity..self.capacity + self.n].copy_from_slice(weights);
        self.rebuild_internal();
        Ok(())
    }

    fn rebuild_internal(&mut self) {
        for k in (1..self.capacity).rev() {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Raw node array, root at index 1.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.nodes[self.capacity + i]
    }

    /// Sets leaf `i` to `w` and refreshes its ancestors in O(log n).
    pub fn update(&mut self, i: usize, w: f64) -> Result<()> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, len: self.n });
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidArgument("sampling weights must be finite and nonnegative"));
        }
        let mut k = self.capacity + i;
        self.nodes[k] = w;
        while k > 1 {
            k /= 2;
            // Recompute from children rather than adding a delta, so no
            // rounding drift accumulates.
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
        Ok(())
    }

    /// Draws leaf `i` with probability `weight(i) / total()`.
    pub fn sample(&self, rng: &mut Rng) -> Result<usize> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::EmptyDistribution(total));
        }
        Ok(self.descend(rng.uniform() * total))
    }

    /// Walks from the root with mass `u ∈ [0, total)`: left when `u` is
    /// strictly below the left sum, otherwise right after subtracting it.
    pub fn sample_at(&self, u: f64) -> Result<usize> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::EmptyDistribution(total));
        }
        Ok(self.descend(u))
    }

    fn descend(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.capacity {
            let left = self.nodes[2 * k];
            // A right subtree of zero mass is only reachable through rounding.
            if u < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.capacity
    }
}
