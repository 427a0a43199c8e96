use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries in `[-NEGATIVE_TOL, 0)` are treated as LP noise and clamped.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Allowed deviation of the entry sum from 1.
pub const SUM_TOL: f64 = 1e-9;

/// A point of the probability simplex over `k` states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Posterior(Vec<f64>);

impl Posterior {
    /// Validates and stores a probability vector. Tiny negative entries are
    /// clamped to zero and the vector renormalized.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPosterior("empty probability vector".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidPosterior(format!(
                "entry {i} is not finite ({})",
                weights[i]
            )));
        }
        if let Some(i) = weights.iter().position(|&w| w < -NEGATIVE_TOL) {
            return Err(Error::InvalidPosterior(format!(
                "entry {i} is negative ({})",
                weights[i]
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidPosterior(format!(
                "entries sum to {sum}, not 1"
            )));
        }
        let mut weights = weights;
        if weights.iter().any(|&w| w < 0.0) {
            for w in weights.iter_mut() {
                *w = w.max(0.0);
            }
            let s: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= s;
            }
        }
        Ok(Self(weights))
    }

    /// Builds a posterior without validation. Callers guarantee the simplex
    /// invariants (e.g. convex combinations of valid posteriors).
    pub(crate) fn from_vec_unchecked(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    /// The uniform distribution, i.e. the simplex center.
    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// The point mass on state `i`.
    pub fn vertex(k: usize, i: usize) -> Self {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, lambda: f64, other: &Posterior) -> Posterior {
        Posterior(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (lambda * a + (1.0 - lambda) * b).max(0.0))
                .collect(),
        )
    }

    pub fn linf_distance(&self, other: &Posterior) -> f64 {
        linf(&self.0, &other.0)
    }

    pub fn l1_distance(&self, other: &Posterior) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl std::ops::Index<usize> for Posterior {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Posterior {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Posterior::new(v)
    }
}

impl From<Posterior> for Vec<f64> {
    fn from(p: Posterior) -> Vec<f64> {
        p.0
    }
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
