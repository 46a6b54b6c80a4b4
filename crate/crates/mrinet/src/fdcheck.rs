//! Central finite-difference verification of reverse-mode gradients.
//!
//! Runs at `f64` only: the `h^2` truncation error of central differences is
//! already near the noise floor of `f32` arithmetic.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, ValueId};
use crate::error::Result;
use crate::tensor::Tensor;

/// Settings for [`finite_difference_check_with`].
#[derive(Debug, Clone)]
pub struct FdOptions {
    /// Step is `step_scale * max(1, |x_i|)` per element.
    pub step_scale: f64,
    /// Probe at most this many elements, chosen by seeded sampling. `None`
    /// probes every element.
    pub max_probes: Option<usize>,
    pub probe_seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions { step_scale: 1e-6, max_probes: None, probe_seed: 0 }
    }
}

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Max over probed elements of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    pub probes: usize,
    /// Set when any forward evaluation produced NaN or infinity.
    pub non_finite: bool,
    pub tolerance: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        !self.non_finite && self.max_rel_error < self.tolerance
    }
}

/// Compare the tape gradient of a scalar-valued computation `f` against
/// central finite differences at `point`, probing every element.
pub fn finite_difference_check<F>(f: F, point: &Tensor<f64>, tolerance: f64) -> Result<FdReport>
where
    F: Fn(&mut Tape<f64>, ValueId) -> Result<ValueId>,
{
    finite_difference_check_with(f, point, tolerance, &FdOptions::default())
}

pub fn finite_difference_check_with<F>(
    f: F,
    point: &Tensor<f64>,
    tolerance: f64,
    opts: &FdOptions,
) -> Result<FdReport>
where
    F: Fn(&mut Tape<f64>, ValueId) -> Result<ValueId>,
{
    let eval = |x: &Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let id = tape.leaf(x.clone());
        let out = f(&mut tape, id)?;
        Ok(tape.value(out)?.scalar_value())
    };

    // analytic gradient via the tape
    let mut tape = Tape::new();
    let id = tape.leaf(point.clone());
    let out = f(&mut tape, id)?;
    let grads = tape.backward_scalar(out)?;
    let analytic = grads.get(id)?;
    let mut non_finite = analytic.has_non_finite();

    let mut probe_indices: Vec<usize> = (0..point.len()).collect();
    if let Some(max) = opts.max_probes {
        if max < probe_indices.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.probe_seed);
            probe_indices.shuffle(&mut rng);
            probe_indices.truncate(max);
        }
    }

    let mut max_rel_error: f64 = 0.0;
    for &i in &probe_indices {
        let x_i = point.data()[i];
        let h = opts.step_scale * x_i.abs().max(1.0);
        let mut plus = point.clone();
        plus.data_mut()[i] = x_i + h;
        let mut minus = point.clone();
        minus.data_mut()[i] = x_i - h;
        let (fp, fm) = (eval(&plus)?, eval(&minus)?);
        if !fp.is_finite() || !fm.is_finite() {
            non_finite = true;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
        if rel > max_rel_error {
            max_rel_error = rel;
        }
    }
    Ok(FdReport { max_rel_error, probes: probe_indices.len(), non_finite, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sum_of_squares_gradient_is_2x() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let point = Tensor::from_fn(&[8], |_| rng.gen_range(-2.0..2.0));
        let report = finite_difference_check(
            |tape, x| {
                let sq = tape.mul(x, x)?;
                tape.sum(sq)
            },
            &point,
            1e-8,
        )
        .unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn corrupted_backward_rule_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let point = Tensor::from_fn(&[6], |_| rng.gen_range(0.5..2.0));
        let report = finite_difference_check(
            |tape, x| {
                let scaled = tape.grad_scale(x, 1.01)?;
                let sq = tape.mul(scaled, scaled)?;
                tape.sum(sq)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(!report.passed(), "negative control must fail, got {}", report.max_rel_error);
        assert!(report.max_rel_error > 1e-5);
    }

    #[test]
    fn probe_subsampling_limits_work() {
        let point = Tensor::filled(&[100], 1.5);
        let report = finite_difference_check_with(
            |tape, x| tape.sum(x),
            &point,
            1e-8,
            &FdOptions { max_probes: Some(10), ..FdOptions::default() },
        )
        .unwrap();
        assert_eq!(report.probes, 10);
        assert!(report.passed());
    }
}
