//! Lipschitz under-approximations of constraint functions.
//!
//! Linear, norm and weighted-min constraints are already Lipschitz and pass
//! through. Entropy and grouped KL have unbounded gradients at the simplex
//! boundary, so they are composed with the projection onto a slightly
//! contracted simplex and shifted down by `eps / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{contraction_floor, project_to_contraction_slice};
use crate::model::{ConstraintKind, ConstraintSpec};

const MIN_CONTRACTION: f64 = 1e-150;

/// `g <= f <= g + eps`, with `g` Lipschitz in the l1 norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothedConstraint {
    pub source: ConstraintSpec,
    pub eps: f64,
    /// Contraction parameter of the projection, when one is used.
    pub contraction: Option<f64>,
    pub lipschitz_constant: f64,
    /// Certified bound on `|f - f o proj|` (zero for pass-through kinds).
    pub drift_bound: f64,
}

impl SmoothedConstraint {
    pub fn eval(&self, q: &[f64], prior: &[f64]) -> f64 {
        match self.contraction {
            None => self.source.eval(q, prior),
            Some(e) => {
                let p = project_to_contraction_slice(q, e);
                self.source.eval(&p, prior) - self.eps / 2.0
            }
        }
    }

    pub fn bound(&self) -> f64 {
        self.source.bound
    }
}

/// Grouped-KL data: cells of states, scale `b` and references `b_j`.
/// Entropy is the singleton partition with `b = 1` and all `b_j = 1`.
fn kl_parts(kind: &ConstraintKind, k: usize) -> Option<(usize, f64, f64, f64)> {
    match kind {
        ConstraintKind::Entropy => Some((k, 1.0, 0.0, 0.0)),
        ConstraintKind::GroupedKl {
            partition,
            scale,
            references,
        } => {
            let max_abs_ln = references.iter().map(|b| b.ln().abs()).fold(0.0, f64::max);
            let lmax = references.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lmin = references.iter().cloned().fold(f64::INFINITY, f64::min);
            Some((partition.len(), *scale, max_abs_ln, (lmax / lmin).ln()))
        }
        _ => None,
    }
}

/// Bound on `|f(q) - f(proj q)|` for a grouped KL with `cells` cells.
///
/// `proj` moves `q` by at most `D = 2 e^2 / (1 + e^2)` in l1. Each cell
/// mass moves by `t_j` with `sum t_j <= D`; `|x ln x - y ln y| <= -t ln t`
/// for `|x - y| = t <= 1/e`, and by concavity `sum -t_j ln t_j <=
/// D ln(cells / D)`. The `-Q_j ln b_j` part moves by at most `D max|ln b_j|`.
pub fn kl_drift_bound(cells: usize, scale: f64, max_abs_ln_ref: f64, e: f64) -> Option<f64> {
    let e2 = e * e;
    let d = 2.0 * e2 / (1.0 + e2);
    if d > (-1.0f64).exp() || d <= 0.0 {
        return None;
    }
    Some(scale.abs() * (d * (cells as f64 / d).ln() + max_abs_ln_ref * d))
}

/// l1 Lipschitz constant of `f o proj` on the simplex.
///
/// On the contracted simplex every cell mass is at least the per-state
/// floor `l`, so the gradient entries `b (ln(Q_j / b_j) + 1)` spread by at
/// most `|b| (|ln l| + ln(b_max / b_min))`; along zero-sum directions that
/// is twice the Lipschitz constant. The projection itself does not expand
/// l1 distances between points of the simplex.
pub fn kl_lipschitz(cells: usize, scale: f64, log_ref_ratio: f64, floor: f64) -> f64 {
    if cells <= 1 {
        return 0.0;
    }
    scale.abs() / 2.0 * (floor.ln().abs() + log_ref_ratio)
}

/// Smooths `spec` so that `0 <= f - g <= eps` everywhere on the simplex.
pub fn smooth_constraint(spec: &ConstraintSpec, k: usize, eps: f64) -> Result<SmoothedConstraint> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if let Some(l) = spec.kind.lipschitz_l1() {
        return Ok(SmoothedConstraint {
            source: spec.clone(),
            eps,
            contraction: None,
            lipschitz_constant: l,
            drift_bound: 0.0,
        });
    }
    let (cells, scale, max_abs_ln, log_ratio) =
        kl_parts(&spec.kind, k).ok_or_else(|| Error::Unsupported(spec.kind.name().into()))?;
    let mut e = eps;
    loop {
        if let Some(drift) = kl_drift_bound(cells, scale, max_abs_ln, e) {
            if drift <= eps / 2.0 {
                let floor = contraction_floor(k, e);
                if floor <= 0.0 || !floor.is_finite() {
                    return Err(Error::PrecisionUnderflow { required: e });
                }
                return Ok(SmoothedConstraint {
                    source: spec.clone(),
                    eps,
                    contraction: Some(e),
                    lipschitz_constant: kl_lipschitz(cells, scale, log_ratio, floor),
                    drift_bound: drift,
                });
            }
        }
        e /= 2.0;
        if e < MIN_CONTRACTION || contraction_floor(k, e) <= 0.0 {
            return Err(Error::PrecisionUnderflow { required: e });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kl_half() -> ConstraintSpec {
        ConstraintSpec::ex_ante(
            ConstraintKind::GroupedKl {
                partition: vec![vec![0], vec![1]],
                scale: 1.0,
                references: vec![0.5, 0.5],
            },
            0.1,
        )
    }

    #[test]
    fn linear_passes_through() {
        let spec = ConstraintSpec::ex_ante(
            ConstraintKind::Linear {
                coefficients: vec![1.0, 0.0],
            },
            0.5,
        );
        let g = smooth_constraint(&spec, 2, 0.1).unwrap();
        assert_eq!(g.contraction, None);
        assert_eq!(g.lipschitz_constant, 1.0);
        assert_eq!(g.eval(&[0.3, 0.7], &[0.5, 0.5]), 0.3);
    }

    #[test]
    fn center_is_shifted_only() {
        let g = smooth_constraint(&kl_half(), 2, 0.1).unwrap();
        let prior = [0.5, 0.5];
        assert!((g.eval(&prior, &prior) - (kl_half().eval(&prior, &prior) - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn vertex_sandwich() {
        let g = smooth_constraint(&kl_half(), 2, 0.1).unwrap();
        let prior = [0.5, 0.5];
        let q = [1.0, 0.0];
        let f = kl_half().eval(&q, &prior);
        let gv = g.eval(&q, &prior);
        assert!(f - gv >= 0.0 && f - gv <= 0.1, "f = {f}, g = {gv}");
    }

    #[test]
    fn tiny_eps_underflows() {
        assert!(matches!(
            smooth_constraint(&kl_half(), 2, 1e-320),
            Err(Error::PrecisionUnderflow { .. })
        ));
    }
}
