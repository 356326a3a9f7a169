use crate::error::{Error, Result};
use crate::vector::DenseVector;

/// Exponential-average state of the AMSGrad recursion, plus the running sum
/// of squared gradients used by ADAGrad.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub m: DenseVector,
    pub v: DenseVector,
    /// Running coordinatewise maximum of `v` (equal to `v` when the max
    /// correction is off).
    pub v_hat: DenseVector,
    pub t: usize,
    pub adagrad_sum: DenseVector,
}

impl MomentState {
    /// All moments start at zero.
    pub fn new(dim: usize) -> Self {
        Self {
            m: DenseVector::zeros(dim),
            v: DenseVector::zeros(dim),
            v_hat: DenseVector::zeros(dim),
            t: 0,
            adagrad_sum: DenseVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// One step of `m ← β₁ₜ m + (1-β₁ₜ) g`, `v ← β₂ v + (1-β₂) g²`, then
/// `v̂ ← max(v̂, v)` when `use_max`, else `v̂ ← v`.
pub fn moment_update(
    state: &mut MomentState,
    g: &DenseVector,
    beta1_t: f64,
    beta2: f64,
    use_max: bool,
) -> Result<()> {
    g.check_dim(state.dim())?;
    if !(0.0..1.0).contains(&beta1_t) || !(0.0..1.0).contains(&beta2) {
        return Err(Error::InvalidArgument("moment decay rates must lie in [0, 1)"));
    }
    let MomentState { m, v, v_hat, .. } = state;
    for h in 0..g.len() {
        let gh = g[h];
        m[h] = beta1_t * m[h] + (1.0 - beta1_t) * gh;
        v[h] = beta2 * v[h] + (1.0 - beta2) * gh * gh;
        v_hat[h] = if use_max { v_hat[h].max(v[h]) } else { v[h] };
    }
    state.t += 1;
    Ok(())
}

/// `Σ g² += g²`, the ADAGrad accumulator.
pub fn adagrad_update(state: &mut MomentState, g: &DenseVector) -> Result<()> {
    g.check_dim(state.dim())?;
    for (s, gh) in state.adagrad_sum.as_mut_slice().iter_mut().zip(g.iter()) {
        *s += gh * gh;
    }
    state.t += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_correction_keeps_peak() {
        let mut s = MomentState::new(1);
        moment_update(&mut s, &[1.0].into(), 0.0, 0.9, true).unwrap();
        assert_eq!(s.m[0], 1.0);
        assert!((s.v[0] - 0.1).abs() < 1e-15);
        assert!((s.v_hat[0] - 0.1).abs() < 1e-15);
        moment_update(&mut s, &[0.0].into(), 0.0, 0.9, true).unwrap();
        assert!((s.v[0] - 0.09).abs() < 1e-15);
        assert!((s.v_hat[0] - 0.1).abs() < 1e-15);
        assert_eq!(s.t, 2);
    }

    #[test]
    fn without_max_v_hat_tracks_v() {
        let mut s = MomentState::new(1);
        moment_update(&mut s, &[1.0].into(), 0.0, 0.9, false).unwrap();
        moment_update(&mut s, &[0.0].into(), 0.0, 0.9, false).unwrap();
        assert_eq!(s.v_hat, s.v);
    }

    #[test]
    fn memoryless_case() {
        let mut s = MomentState::new(3);
        let g: DenseVector = [2.0, -3.0, 0.5].into();
        moment_update(&mut s, &[9.0, 9.0, 9.0].into(), 0.0, 0.0, false).unwrap();
        moment_update(&mut s, &g, 0.0, 0.0, false).unwrap();
        assert_eq!(s.m, g);
        assert_eq!(s.v.as_slice(), &[4.0, 9.0, 0.25]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut s = MomentState::new(2);
        assert!(moment_update(&mut s, &[1.0].into(), 0.0, 0.9, true).is_err());
        assert!(moment_update(&mut s, &[1.0, 1.0].into(), 1.0, 0.9, true).is_err());
        assert!(adagrad_update(&mut s, &[1.0].into()).is_err());
    }

    #[test]
    fn adagrad_accumulates_squares() {
        let mut s = MomentState::new(2);
        adagrad_update(&mut s, &[1.0, -2.0].into()).unwrap();
        adagrad_update(&mut s, &[3.0, 0.0].into()).unwrap();
        assert_eq!(s.adagrad_sum.as_slice(), &[10.0, 4.0]);
        assert_eq!(s.t, 2);
    }
}
