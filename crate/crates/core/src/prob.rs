//! Probability vectors on the class simplex.
//!
//! [`ProbDist`] is the currency every other module trades in: model outputs,
//! memory units, and consistency targets are all length-`K` probability
//! vectors validated against the simplex.

use crate::error::{Error, Result};

/// Absolute tolerance on `sum(p) == 1` for a valid distribution.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Default floor applied to probabilities before logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A probability distribution over `K >= 2` classes.
///
/// Invariants: every entry is non-negative and the entries sum to 1 within
/// [`SIMPLEX_TOL`]. Constructed values are validated; arithmetic that could
/// drift (long convex-combination chains) renormalizes through
/// [`ProbDist::renormalize_if_drifted`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist {
    values: Vec<f64>,
}

impl ProbDist {
    /// Validates `values` as a distribution and wraps it.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Validation(format!(
                "distribution needs at least 2 classes, got {}",
                values.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "entry {i} = {v} is negative or non-finite"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Validation(format!(
                "entries sum to {sum}, expected 1 within {SIMPLEX_TOL:e}"
            )));
        }
        Ok(Self { values })
    }

    /// Divides by the sum, then validates. Accepts any non-negative vector
    /// with positive mass.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::Validation(format!(
                "cannot normalize a vector with mass {sum}"
            )));
        }
        for v in values.iter_mut() {
            *v /= sum;
        }
        Self::new(values)
    }

    /// The uniform distribution on `k` classes.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 2, "need at least 2 classes");
        Self {
            values: vec![1.0 / k as f64; k],
        }
    }

    /// Point mass on `class`.
    pub fn one_hot(k: usize, class: usize) -> Result<Self> {
        if class >= k {
            return Err(Error::Domain(format!("class {class} out of range 0..{k}")));
        }
        let mut values = vec![0.0; k];
        values[class] = 1.0;
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, class: usize) -> Result<f64> {
        self.values
            .get(class)
            .copied()
            .ok_or_else(|| Error::Domain(format!("class {class} out of range 0..{}", self.len())))
    }

    /// Index of the largest entry; ties break toward the lowest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Largest absolute entry difference against `other` (sup-norm distance).
    pub fn sup_distance(&self, other: &ProbDist) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Renormalizes in place when the sum has drifted beyond [`SIMPLEX_TOL`].
    pub fn renormalize_if_drifted(&mut self) {
        let sum: f64 = self.values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            for v in self.values.iter_mut() {
                *v /= sum;
            }
        }
    }

    pub(crate) fn from_raw_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Numerically stable softmax. Returns a valid [`ProbDist`].
pub fn softmax(logits: &[f64]) -> Result<ProbDist> {
    if logits.len() < 2 {
        return Err(Error::Domain(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("softmax over non-finite logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    ProbDist::normalized(exps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_off_simplex() {
        assert!(ProbDist::new(vec![0.5, -0.5, 1.0]).is_err());
        assert!(ProbDist::new(vec![0.6, 0.6]).is_err());
        assert!(ProbDist::new(vec![1.0]).is_err());
        assert!(ProbDist::new(vec![0.2, 0.8]).is_ok());
    }

    #[test]
    fn argmax_ties_break_low() {
        let p = ProbDist::uniform(4);
        assert_eq!(p.argmax(), 0);
        let p = ProbDist::new(vec![0.1, 0.45, 0.45]).unwrap();
        assert_eq!(p.argmax(), 1);
    }

    #[test]
    fn softmax_on_simplex() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for &v in p.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1000.0, -1000.0]).unwrap();
        assert!((p.values()[0] - 1.0).abs() < 1e-15);
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
    }
}
