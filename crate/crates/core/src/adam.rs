//! Adam with per-group dense moments.
//!
//! Moments are kept per parameter group in the canonical group order, so the
//! optimizer state is as addressable as the model itself. A group whose
//! gradient stays exactly zero keeps zero moments and is left bitwise
//! untouched, which is what keeps warm-up epochs from disturbing the
//! sustainability parameters.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    /// Completed steps; bias correction uses the current step index.
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, group_sizes: &[usize]) -> Adam<T> {
        Adam {
            lr: T::from_f64_lossy(lr),
            beta1: T::from_f64_lossy(BETA1),
            beta2: T::from_f64_lossy(BETA2),
            eps: T::from_f64_lossy(EPS),
            t: 0,
            m: group_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: group_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    /// Advance the step counter; call once before updating the groups of a
    /// batch.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Apply one Adam update to a single group.
    pub fn update_group(&mut self, group: usize, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m[group].len() {
            return Err(Error::MismatchedLengths {
                left: params.len(),
                right: self.m[group].len(),
            });
        }
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.t);
        let bc2 = one - self.beta2.powi(self.t);
        let m = &mut self.m[group];
        let v = &mut self.v[group];
        for j in 0..params.len() {
            let g = grads[j];
            m[j] = self.beta1 * m[j] + (one - self.beta1) * g;
            v[j] = self.beta2 * v[j] + (one - self.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            params[j] = params[j] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Textbook reference: scalar Adam unrolled step by step.
    fn reference_steps(theta0: f64, grads: &[f64], lr: f64) -> f64 {
        let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = BETA1 * m + (1.0 - BETA1) * g;
            v = BETA2 * v + (1.0 - BETA2) * g * g;
            let m_hat = m / (1.0 - BETA1.powi(t));
            let v_hat = v / (1.0 - BETA2.powi(t));
            theta -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
        theta
    }

    #[test]
    fn first_step_moves_by_roughly_the_learning_rate() {
        let mut adam: Adam<f64> = Adam::new(0.1, &[1]);
        let mut p = vec![1.0];
        adam.begin_step();
        adam.update_group(0, &mut p, &[0.5]).unwrap();
        // Bias-corrected first step: lr * g / (|g| + eps), close to lr.
        assert_relative_eq!(p[0], 1.0 - 0.1 * 0.5 / (0.5 + EPS), epsilon = 1e-15);
    }

    #[test]
    fn matches_scalar_reference_over_many_steps() {
        let grads = [0.5, -0.2, 0.1, 0.9, -0.4, 0.0, 0.3];
        let mut adam: Adam<f64> = Adam::new(0.05, &[2]);
        let mut p = vec![1.0, -2.0];
        for &g in &grads {
            adam.begin_step();
            adam.update_group(0, &mut p, &[g, -g]).unwrap();
        }
        let want0 = reference_steps(1.0, &grads, 0.05);
        let neg: Vec<f64> = grads.iter().map(|g| -g).collect();
        let want1 = reference_steps(-2.0, &neg, 0.05);
        assert_relative_eq!(p[0], want0, epsilon = 1e-14);
        assert_relative_eq!(p[1], want1, epsilon = 1e-14);
    }

    #[test]
    fn zero_gradient_groups_stay_bitwise_untouched() {
        let mut adam: Adam<f64> = Adam::new(0.1, &[3, 2]);
        let mut a = vec![0.25, -0.5, 0.75];
        let mut b = vec![1.0, 1.0];
        let before = a.clone();
        for _ in 0..4 {
            adam.begin_step();
            adam.update_group(0, &mut a, &[0.0, 0.0, 0.0]).unwrap();
            adam.update_group(1, &mut b, &[0.1, -0.1]).unwrap();
        }
        assert_eq!(a, before);
        assert_ne!(b, vec![1.0, 1.0]);
    }

    #[test]
    fn groups_keep_independent_moments() {
        let mut adam: Adam<f64> = Adam::new(0.1, &[1, 1]);
        let mut a = vec![0.0];
        let mut b = vec![0.0];
        adam.begin_step();
        adam.update_group(0, &mut a, &[1.0]).unwrap();
        adam.update_group(1, &mut b, &[-1.0]).unwrap();
        assert_relative_eq!(a[0], -b[0], epsilon = 1e-15);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut adam: Adam<f64> = Adam::new(0.1, &[2]);
        let mut p = vec![0.0];
        adam.begin_step();
        assert!(adam.update_group(0, &mut p, &[0.1]).is_err());
    }
}
