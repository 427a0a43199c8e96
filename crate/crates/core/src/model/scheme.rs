use serde::{Deserialize, Serialize};

use super::posterior::{linf, Posterior, NEGATIVE_TOL, SUM_TOL};
use crate::error::{Error, Result};

/// Support points closer than this in the sup norm are merged.
pub const MERGE_TOL: f64 = 1e-12;
/// Default tolerance for Bayes plausibility.
pub const PLAUSIBILITY_TOL: f64 = 1e-9;

/// A finitely supported distribution over posteriors.
///
/// Signal labels are not modeled; the scheme is identified with the
/// distribution of posteriors it induces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct SignalingScheme {
    support: Vec<Posterior>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    support: Vec<Posterior>,
    probs: Vec<f64>,
}

impl TryFrom<RawScheme> for SignalingScheme {
    type Error = Error;

    fn try_from(raw: RawScheme) -> Result<Self> {
        SignalingScheme::new(raw.support, raw.probs)
    }
}

impl From<SignalingScheme> for RawScheme {
    fn from(s: SignalingScheme) -> Self {
        RawScheme {
            support: s.support,
            probs: s.probs,
        }
    }
}

impl SignalingScheme {
    /// Validates the weights, drops zero-probability points and merges
    /// near-duplicate support points (their weights are summed).
    pub fn new(support: Vec<Posterior>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::InvalidScheme(format!(
                "{} support points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::InvalidScheme("empty support".into()));
        }
        let k = support[0].dim();
        if let Some(p) = support.iter().find(|p| p.dim() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: p.dim(),
            });
        }
        if let Some(i) = probs
            .iter()
            .position(|p| !p.is_finite() || *p < -NEGATIVE_TOL)
        {
            return Err(Error::InvalidScheme(format!(
                "probability {i} is invalid ({})",
                probs[i]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidScheme(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mut merged_support: Vec<Posterior> = Vec::with_capacity(support.len());
        let mut merged_probs: Vec<f64> = Vec::with_capacity(support.len());
        for (point, prob) in support.into_iter().zip(probs) {
            let prob = prob.max(0.0);
            if prob == 0.0 {
                continue;
            }
            match merged_support
                .iter()
                .position(|q| linf(q.as_slice(), point.as_slice()) <= MERGE_TOL)
            {
                Some(j) => merged_probs[j] += prob,
                None => {
                    merged_support.push(point);
                    merged_probs.push(prob);
                }
            }
        }
        if merged_support.is_empty() {
            return Err(Error::InvalidScheme("all probabilities are zero".into()));
        }
        Ok(Self {
            support: merged_support,
            probs: merged_probs,
        })
    }

    /// Point masses on the unit vectors, weighted by the prior.
    pub fn full_revelation(prior: &Posterior) -> Self {
        let k = prior.dim();
        let (support, probs) = (0..k)
            .filter(|&i| prior[i] > 0.0)
            .map(|i| (Posterior::vertex(k, i), prior[i]))
            .unzip();
        Self { support, probs }
    }

    /// The single posterior equal to the prior.
    pub fn no_revelation(prior: &Posterior) -> Self {
        Self {
            support: vec![prior.clone()],
            probs: vec![1.0],
        }
    }

    /// The probability mixture `lambda * a + (1 - lambda) * b`.
    pub fn mixture(a: &SignalingScheme, b: &SignalingScheme, lambda: f64) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                found: b.dim(),
            });
        }
        let support = a.support.iter().chain(&b.support).cloned().collect();
        let probs = a
            .probs
            .iter()
            .map(|p| lambda * p)
            .chain(b.probs.iter().map(|p| (1.0 - lambda) * p))
            .collect();
        Self::new(support, probs)
    }

    pub fn support(&self) -> &[Posterior] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Posterior, f64)> {
        self.support.iter().zip(self.probs.iter().copied())
    }

    /// `sum_i probs_i * support_i`.
    pub fn barycenter(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (q, w) in self.iter() {
            for (o, x) in out.iter_mut().zip(q.as_slice()) {
                *o += w * x;
            }
        }
        out
    }
}

/// Outcome of a Bayes-plausibility check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plausibility {
    pub plausible: bool,
    /// Sup-norm distance between the scheme's barycenter and the prior.
    pub deviation: f64,
}

/// Checks that the scheme's barycenter equals the prior (sup-norm, 1e-9).
pub fn check_bayes_plausible(scheme: &SignalingScheme, prior: &Posterior) -> Result<Plausibility> {
    if scheme.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            found: scheme.dim(),
        });
    }
    let deviation = linf(&scheme.barycenter(), prior.as_slice());
    Ok(Plausibility {
        plausible: deviation <= PLAUSIBILITY_TOL,
        deviation,
    })
}

/// `E[scheme, f]`, the expectation of `f` over the posterior distribution.
pub fn scheme_expectation<F>(scheme: &SignalingScheme, mut f: F) -> f64
where
    F: FnMut(&Posterior) -> f64,
{
    scheme.iter().map(|(q, w)| w * f(q)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(v: &[f64]) -> Posterior {
        Posterior::new(v.to_vec()).unwrap()
    }

    fn linf_norm(q: &Posterior) -> f64 {
        q.as_slice().iter().cloned().fold(0.0, f64::max)
    }

    #[test]
    fn plausibility_examples() {
        let prior = Posterior::uniform(2);
        let full = SignalingScheme::new(vec![post(&[1.0, 0.0]), post(&[0.0, 1.0])], vec![0.5, 0.5])
            .unwrap();
        let r = check_bayes_plausible(&full, &prior).unwrap();
        assert!(r.plausible);
        assert_eq!(r.deviation, 0.0);

        let none = SignalingScheme::no_revelation(&prior);
        assert!(check_bayes_plausible(&none, &prior).unwrap().plausible);

        let off = SignalingScheme::new(vec![post(&[0.9, 0.1]), post(&[0.3, 0.7])], vec![0.5, 0.5])
            .unwrap();
        let r = check_bayes_plausible(&off, &prior).unwrap();
        assert!(!r.plausible);
        assert!((r.deviation - 0.1).abs() < 1e-12);

        assert!(matches!(
            check_bayes_plausible(&off, &Posterior::uniform(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn expectation_examples() {
        let prior = Posterior::uniform(2);
        let full = SignalingScheme::full_revelation(&prior);
        assert!((scheme_expectation(&full, linf_norm) - 1.0).abs() < 1e-15);
        let none = SignalingScheme::no_revelation(&prior);
        assert!((scheme_expectation(&none, linf_norm) - 0.5).abs() < 1e-15);
        let s = SignalingScheme::new(
            vec![post(&[1.0, 0.0]), post(&[1.0 / 3.0, 2.0 / 3.0])],
            vec![0.25, 0.75],
        )
        .unwrap();
        assert!((scheme_expectation(&s, |q| q[0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn merges_near_duplicates() {
        let s = SignalingScheme::new(
            vec![
                post(&[0.5, 0.5]),
                post(&[0.5 + 1e-13, 0.5 - 1e-13]),
                post(&[1.0, 0.0]),
            ],
            vec![0.25, 0.25, 0.5],
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.probs()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(SignalingScheme::new(vec![post(&[1.0, 0.0])], vec![0.9]).is_err());
        assert!(SignalingScheme::new(vec![post(&[1.0, 0.0])], vec![]).is_err());
        assert!(
            SignalingScheme::new(vec![post(&[1.0, 0.0]), post(&[0.0, 1.0])], vec![1.5, -0.5])
                .is_err()
        );
    }
}
