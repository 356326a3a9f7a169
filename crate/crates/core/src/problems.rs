//! Objectives: online centroid learning and L2-regularised logistic
//! regression (binary and softmax), with analytic per-example gradients.
//!
//! Binary labels are stored as `{0, 1}` and mapped to `{-1, +1}` inside the
//! loss. The L2 penalty covers every parameter; there is no separate bias, so
//! a constant feature column must be supplied if one is wanted. Multiclass
//! parameters are flattened row-major: row `k` holds the weights of class `k`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vector::{DenseVector, SparseVector};

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(DenseVector),
    Sparse(SparseVector),
}

impl Features {
    pub fn dim(&self) -> usize {
        match self {
            Features::Dense(x) => x.len(),
            Features::Sparse(x) => x.dim(),
        }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        match self {
            Features::Dense(x) => x.iter().zip(weights).map(|(a, b)| a * b).sum(),
            Features::Sparse(x) => x.iter().map(|(i, v)| v * weights[i]).sum(),
        }
    }

    /// `out += scale * x`
    pub fn add_scaled_to(&self, scale: f64, out: &mut [f64]) {
        match self {
            Features::Dense(x) => {
                for (o, v) in out.iter_mut().zip(x.iter()) {
                    *o += scale * v;
                }
            }
            Features::Sparse(x) => {
                for (i, v) in x.iter() {
                    out[i] += scale * v;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DenseVector {
        match self {
            Features::Dense(x) => x.clone(),
            Features::Sparse(x) => x.to_dense(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            Features::Dense(x) => x.iter().filter(|v| **v != 0.0).count(),
            Features::Sparse(x) => x.nnz(),
        }
    }
}

/// One training record `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Features,
    pub label: usize,
}

impl Example {
    pub fn dense(values: impl Into<DenseVector>, label: usize) -> Self {
        Self { features: Features::Dense(values.into()), label }
    }

    pub fn sparse(values: SparseVector, label: usize) -> Self {
        Self { features: Features::Sparse(values), label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Centroid,
    BinaryLogistic,
    MulticlassLogistic,
}

impl ProblemKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, ProblemKind::Centroid)
    }
}

/// A finite-sum objective `F(θ) = (1/n) Σ_i f_i(θ)`. Immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct Problem {
    examples: Vec<Example>,
    kind: ProblemKind,
    l2_lambda: f64,
    num_classes: usize,
    dim: usize,
}

impl Problem {
    pub fn new(
        kind: ProblemKind,
        examples: Vec<Example>,
        l2_lambda: f64,
        num_classes: usize,
    ) -> Result<Self> {
        let first = examples.first().ok_or(Error::InvalidArgument("problem needs at least one example"))?;
        let dim = first.features.dim();
        if !(l2_lambda >= 0.0 && l2_lambda.is_finite()) {
            return Err(Error::InvalidArgument("l2_lambda must be finite and nonnegative"));
        }
        let num_classes = match kind {
            ProblemKind::Centroid => {
                if l2_lambda != 0.0 {
                    return Err(Error::InvalidArgument("centroid problem takes no regularization"));
                }
                1
            }
            ProblemKind::BinaryLogistic => {
                if num_classes != 2 {
                    return Err(Error::InvalidArgument("binary logistic needs exactly 2 classes"));
                }
                2
            }
            ProblemKind::MulticlassLogistic => {
                if num_classes < 2 {
                    return Err(Error::InvalidArgument("multiclass logistic needs at least 2 classes"));
                }
                num_classes
            }
        };
        for ex in &examples {
            if ex.features.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: ex.features.dim() });
            }
            if kind.is_classification() && ex.label >= num_classes {
                return Err(Error::IndexOutOfRange { index: ex.label, len: num_classes });
            }
        }
        Ok(Self { examples, kind, l2_lambda, num_classes, dim })
    }

    pub fn centroid(points: Vec<DenseVector>) -> Result<Self> {
        let examples = points.into_iter().map(|x| Example::dense(x, 0)).collect();
        Self::new(ProblemKind::Centroid, examples, 0.0, 1)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn l2_lambda(&self) -> f64 {
        self.l2_lambda
    }

    /// `d` for centroid and binary logistic, `K·d` for multiclass.
    pub fn param_dim(&self) -> usize {
        match self.kind {
            ProblemKind::MulticlassLogistic => self.num_classes * self.dim,
            _ => self.dim,
        }
    }

    /// Number of training examples carrying each label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    fn check(&self, i: usize, theta: &DenseVector) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() });
        }
        theta.check_dim(self.param_dim())
    }

    /// Class scores `Θx` for a classification problem (one score for binary).
    pub fn class_scores(&self, features: &Features, theta: &[f64]) -> Vec<f64> {
        match self.kind {
            ProblemKind::MulticlassLogistic => {
                theta.chunks_exact(self.dim).map(|row| features.dot(row)).collect()
            }
            _ => vec![features.dot(theta)],
        }
    }

    /// `f_i(θ)`.
    pub fn example_loss(&self, i: usize, theta: &DenseVector) -> Result<f64> {
        self.check(i, theta)?;
        Ok(self.loss_unchecked(i, theta.as_slice()))
    }

    /// `∇f_i(θ)`.
    pub fn example_gradient(&self, i: usize, theta: &DenseVector) -> Result<DenseVector> {
        self.check(i, theta)?;
        let mut out = DenseVector::zeros(self.param_dim());
        self.add_gradient_unchecked(i, theta.as_slice(), 1.0, out.as_mut_slice());
        Ok(out)
    }

    /// `out += scale * ∇f_i(θ)`.
    pub fn add_example_gradient(
        &self,
        i: usize,
        theta: &DenseVector,
        scale: f64,
        out: &mut DenseVector,
    ) -> Result<()> {
        self.check(i, theta)?;
        out.check_dim(self.param_dim())?;
        self.add_gradient_unchecked(i, theta.as_slice(), scale, out.as_mut_slice());
        Ok(())
    }

    /// `(1/n) Σ_i f_i(θ)`.
    pub fn full_objective(&self, theta: &DenseVector) -> Result<f64> {
        theta.check_dim(self.param_dim())?;
        let theta = theta.as_slice();
        let sum: f64 = (0..self.len()).map(|i| self.loss_unchecked(i, theta)).sum();
        Ok(sum / self.len() as f64)
    }

    /// `(1/n) Σ_i ∇f_i(θ)`.
    pub fn full_gradient(&self, theta: &DenseVector) -> Result<DenseVector> {
        theta.check_dim(self.param_dim())?;
        let mut out = DenseVector::zeros(self.param_dim());
        for i in 0..self.len() {
            self.add_gradient_unchecked(i, theta.as_slice(), 1.0, out.as_mut_slice());
        }
        out.scale(1.0 / self.len() as f64);
        Ok(out)
    }

    /// Largest coordinatewise relative error `|a-b| / max(1, |a|, |b|)`
    /// between `full_gradient` and central differences of `full_objective`
    /// with step `h`.
    pub fn finite_difference_check(&self, theta: &DenseVector, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("finite-difference step must be positive"));
        }
        let analytic = self.full_gradient(theta)?;
        let mut probe = theta.clone();
        let mut worst: f64 = 0.0;
        for j in 0..theta.len() {
            let orig = probe[j];
            probe[j] = orig + h;
            let up = self.full_objective(&probe)?;
            probe[j] = orig - h;
            let down = self.full_objective(&probe)?;
            probe[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[j];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    fn l2_penalty(&self, theta: &[f64]) -> f64 {
        if self.l2_lambda == 0.0 {
            return 0.0;
        }
        0.5 * self.l2_lambda * theta.iter().map(|v| v * v).sum::<f64>()
    }

    fn loss_unchecked(&self, i: usize, theta: &[f64]) -> f64 {
        let ex = &self.examples[i];
        match self.kind {
            ProblemKind::Centroid => {
                let dist_sq: f64 = match &ex.features {
                    Features::Dense(x) => x.iter().zip(theta).map(|(a, b)| (b - a) * (b - a)).sum(),
                    Features::Sparse(x) => {
                        let mut total: f64 = theta.iter().map(|b| b * b).sum();
                        for (j, v) in x.iter() {
                            total += (theta[j] - v) * (theta[j] - v) - theta[j] * theta[j];
                        }
                        total
                    }
                };
                0.5 * dist_sq
            }
            ProblemKind::BinaryLogistic => {
                let margin = signed_label(ex.label) * ex.features.dot(theta);
                softplus(-margin) + self.l2_penalty(theta)
            }
            ProblemKind::MulticlassLogistic => {
                let scores = self.class_scores(&ex.features, theta);
                log_sum_exp(&scores) - scores[ex.label] + self.l2_penalty(theta)
            }
        }
    }

    fn add_gradient_unchecked(&self, i: usize, theta: &[f64], scale: f64, out: &mut [f64]) {
        let ex = &self.examples[i];
        match self.kind {
            ProblemKind::Centroid => {
                for (o, t) in out.iter_mut().zip(theta) {
                    *o += scale * t;
                }
                ex.features.add_scaled_to(-scale, out);
            }
            ProblemKind::BinaryLogistic => {
                let y = signed_label(ex.label);
                let margin = y * ex.features.dot(theta);
                ex.features.add_scaled_to(-scale * y * sigmoid(-margin), out);
                self.add_l2_gradient(theta, scale, out);
            }
            ProblemKind::MulticlassLogistic => {
                let mut probs = self.class_scores(&ex.features, theta);
                softmax_in_place(&mut probs);
                probs[ex.label] -= 1.0;
                for (k, row) in out.chunks_exact_mut(self.dim).enumerate() {
                    ex.features.add_scaled_to(scale * probs[k], row);
                }
                self.add_l2_gradient(theta, scale, out);
            }
        }
    }

    fn add_l2_gradient(&self, theta: &[f64], scale: f64, out: &mut [f64]) {
        if self.l2_lambda != 0.0 {
            let s = scale * self.l2_lambda;
            for (o, t) in out.iter_mut().zip(theta) {
                *o += s * t;
            }
        }
    }
}

fn signed_label(label: usize) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln Σ e^{z_k}` with the max shift.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(z.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_problem(kind: ProblemKind, rng: &mut Rng, n: usize, d: usize, k: usize) -> Problem {
        let examples = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
                let label = if kind == ProblemKind::Centroid { 0 } else { rng.index(k) };
                Example::dense(x, label)
            })
            .collect();
        let lambda = if kind == ProblemKind::Centroid { 0.0 } else { 0.1 };
        Problem::new(kind, examples, lambda, k).unwrap()
    }

    fn random_theta(rng: &mut Rng, dim: usize) -> DenseVector {
        (0..dim).map(|_| rng.gaussian()).collect::<Vec<_>>().into()
    }

    #[test]
    fn centroid_loss_examples() {
        let p = Problem::centroid(vec![[3.0, 4.0].into()]).unwrap();
        assert_eq!(p.example_loss(0, &[0.0, 0.0].into()).unwrap(), 12.5);
        assert_eq!(p.example_loss(0, &[3.0, 4.0].into()).unwrap(), 0.0);
    }

    #[test]
    fn centroid_gradient_example() {
        let p = Problem::centroid(vec![[3.0, 4.0].into()]).unwrap();
        let g = p.example_gradient(0, &[1.0, 1.0].into()).unwrap();
        assert_eq!(g.as_slice(), &[-2.0, -3.0]);
    }

    #[test]
    fn binary_logistic_at_zero() {
        let p = Problem::new(
            ProblemKind::BinaryLogistic,
            vec![Example::dense([1.0, 0.0], 1), Example::dense([0.3, -2.0], 0)],
            0.0,
            2,
        )
        .unwrap();
        let zero = DenseVector::zeros(2);
        assert!((p.example_loss(0, &zero).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((p.example_loss(1, &zero).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(p.example_gradient(0, &zero).unwrap().as_slice(), &[-0.5, 0.0]);
    }

    #[test]
    fn full_objective_small_cases() {
        let p = Problem::centroid(vec![[0.0].into(), [2.0].into()]).unwrap();
        assert_eq!(p.full_objective(&[1.0].into()).unwrap(), 0.5);
        let p = Problem::centroid(vec![[0.0].into(), [4.0].into()]).unwrap();
        assert_eq!(p.full_gradient(&[1.0].into()).unwrap().as_slice(), &[-1.0]);
    }

    #[test]
    fn single_example_objective_is_example_loss() {
        let mut rng = Rng::new(3);
        for kind in [ProblemKind::Centroid, ProblemKind::BinaryLogistic, ProblemKind::MulticlassLogistic] {
            let k = if kind == ProblemKind::MulticlassLogistic { 3 } else { 2 };
            let p = random_problem(kind, &mut rng, 1, 4, k);
            let theta = random_theta(&mut rng, p.param_dim());
            assert_eq!(p.full_objective(&theta).unwrap(), p.example_loss(0, &theta).unwrap());
        }
    }

    #[test]
    fn full_oracles_match_direct_summation() {
        let mut rng = Rng::new(11);
        for kind in [ProblemKind::Centroid, ProblemKind::BinaryLogistic, ProblemKind::MulticlassLogistic] {
            let k = if kind == ProblemKind::MulticlassLogistic { 4 } else { 2 };
            let p = random_problem(kind, &mut rng, 37, 6, k);
            let theta = random_theta(&mut rng, p.param_dim());
            let direct: f64 =
                (0..p.len()).map(|i| p.example_loss(i, &theta).unwrap()).sum::<f64>() / p.len() as f64;
            assert!((p.full_objective(&theta).unwrap() - direct).abs() < 1e-12);
            let full = p.full_gradient(&theta).unwrap();
            for j in 0..p.param_dim() {
                let mean: f64 = (0..p.len()).map(|i| p.example_gradient(i, &theta).unwrap()[j]).sum::<f64>()
                    / p.len() as f64;
                assert!((full[j] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centroid_gradient_vanishes_at_mean() {
        let mut rng = Rng::new(5);
        let p = random_problem(ProblemKind::Centroid, &mut rng, 500, 3, 1);
        let mut mean = DenseVector::zeros(3);
        for ex in p.examples() {
            ex.features.add_scaled_to(1.0 / 500.0, mean.as_mut_slice());
        }
        for g in p.full_gradient(&mean).unwrap().iter() {
            assert!(g.abs() < 1e-10);
        }
    }

    #[test]
    fn finite_differences_agree() {
        let mut rng = Rng::new(17);
        let p = random_problem(ProblemKind::Centroid, &mut rng, 10, 5, 1);
        let theta = random_theta(&mut rng, 5);
        assert!(p.finite_difference_check(&theta, 1e-4).unwrap() < 1e-9);
        for kind in [ProblemKind::BinaryLogistic, ProblemKind::MulticlassLogistic] {
            let p = random_problem(kind, &mut rng, 20, 5, if kind == ProblemKind::BinaryLogistic { 2 } else { 3 });
            let theta = random_theta(&mut rng, p.param_dim());
            assert!(p.finite_difference_check(&theta, 1e-6).unwrap() < 1e-5);
        }
    }

    #[test]
    fn sparse_features_match_dense() {
        let dense = [0.0, 1.5, 0.0, -2.0];
        let sparse = SparseVector::from_dense(&dense);
        for kind in [ProblemKind::Centroid, ProblemKind::BinaryLogistic, ProblemKind::MulticlassLogistic] {
            let k = if kind == ProblemKind::MulticlassLogistic { 3 } else { 2 };
            let label = if kind == ProblemKind::Centroid { 0 } else { 1 };
            let lambda = if kind == ProblemKind::Centroid { 0.0 } else { 0.2 };
            let pd = Problem::new(kind, vec![Example::dense(dense, label)], lambda, k).unwrap();
            let ps = Problem::new(kind, vec![Example::sparse(sparse.clone(), label)], lambda, k).unwrap();
            let theta: DenseVector = (0..pd.param_dim()).map(|j| 0.1 * j as f64 - 0.3).collect::<Vec<_>>().into();
            assert!((pd.example_loss(0, &theta).unwrap() - ps.example_loss(0, &theta).unwrap()).abs() < 1e-14);
            let gd = pd.example_gradient(0, &theta).unwrap();
            let gs = ps.example_gradient(0, &theta).unwrap();
            for (a, b) in gd.iter().zip(gs.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn softmax_is_overflow_safe() {
        let p = Problem::new(
            ProblemKind::MulticlassLogistic,
            vec![Example::dense([1000.0], 0)],
            0.0,
            2,
        )
        .unwrap();
        let theta: DenseVector = [1.0, -1.0].into();
        assert!(p.example_loss(0, &theta).unwrap().abs() < 1e-12);
        let theta: DenseVector = [-1.0, 1.0].into();
        assert!((p.example_loss(0, &theta).unwrap() - 2000.0).abs() < 1e-9);
        assert!(p.example_gradient(0, &theta).unwrap().is_finite());
    }

    #[test]
    fn precondition_errors() {
        let p = Problem::centroid(vec![[1.0, 2.0].into()]).unwrap();
        assert!(matches!(p.example_loss(1, &[0.0, 0.0].into()), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(p.example_gradient(0, &[0.0].into()), Err(Error::DimensionMismatch { .. })));
        assert!(Problem::new(ProblemKind::Centroid, vec![], 0.0, 1).is_err());
        assert!(Problem::new(
            ProblemKind::BinaryLogistic,
            vec![Example::dense([1.0], 0), Example::dense([1.0, 2.0], 1)],
            0.0,
            2
        )
        .is_err());
        assert!(Problem::new(ProblemKind::MulticlassLogistic, vec![Example::dense([1.0], 5)], 0.0, 3).is_err());
    }
}
