use serde::{Deserialize, Serialize};

use super::constraint::{ConstraintSpec, Mode};
use super::posterior::Posterior;
use super::scheme::{check_bayes_plausible, SignalingScheme};
use super::utility::UtilitySpec;
use crate::error::{field_err, Error, Result};

/// A persuasion problem: prior over `k` states, Sender utility, constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct ProblemInstance {
    k: usize,
    prior: Posterior,
    utility: UtilitySpec,
    constraints: Vec<ConstraintSpec>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    k: usize,
    prior: Vec<f64>,
    utility: UtilitySpec,
    #[serde(default)]
    constraints: Vec<ConstraintSpec>,
}

impl TryFrom<RawInstance> for ProblemInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let prior = Posterior::new(raw.prior).map_err(|e| field_err("prior", e.to_string()))?;
        ProblemInstance::new(raw.k, prior, raw.utility, raw.constraints)
    }
}

impl From<ProblemInstance> for RawInstance {
    fn from(p: ProblemInstance) -> Self {
        RawInstance {
            k: p.k,
            prior: p.prior.into_vec(),
            utility: p.utility,
            constraints: p.constraints,
        }
    }
}

impl ProblemInstance {
    pub fn new(
        k: usize,
        prior: Posterior,
        utility: UtilitySpec,
        constraints: Vec<ConstraintSpec>,
    ) -> Result<Self> {
        if k < 2 {
            return Err(field_err("k", "need at least 2 states"));
        }
        if prior.dim() != k {
            return Err(field_err(
                "prior",
                format!("expected {k} entries, found {}", prior.dim()),
            ));
        }
        utility.validate(k, "utility")?;
        for (i, c) in constraints.iter().enumerate() {
            c.validate(k, &format!("constraints[{i}]"))?;
        }
        Ok(Self {
            k,
            prior,
            utility,
            constraints,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn prior(&self) -> &Posterior {
        &self.prior
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn with_constraints(&self, constraints: Vec<ConstraintSpec>) -> Result<Self> {
        Self::new(
            self.k,
            self.prior.clone(),
            self.utility.clone(),
            constraints,
        )
    }

    pub fn with_utility(&self, utility: UtilitySpec) -> Result<Self> {
        Self::new(
            self.k,
            self.prior.clone(),
            utility,
            self.constraints.clone(),
        )
    }

    pub fn with_prior(&self, prior: Posterior) -> Result<Self> {
        Self::new(
            self.k,
            prior,
            self.utility.clone(),
            self.constraints.clone(),
        )
    }

    /// The same instance with every constraint switched to `mode`.
    pub fn with_mode(&self, mode: Mode) -> Self {
        let mut out = self.clone();
        for c in &mut out.constraints {
            c.mode = mode;
        }
        out
    }
}

/// `f(q)` for one constraint.
pub fn eval_constraint(spec: &ConstraintSpec, q: &Posterior, prior: &Posterior) -> Result<f64> {
    if q.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            found: q.dim(),
        });
    }
    spec.kind.validate(q.dim(), "constraint")?;
    Ok(spec.eval(q.as_slice(), prior.as_slice()))
}

/// `u_s(q)`.
pub fn eval_utility(spec: &UtilitySpec, q: &Posterior) -> Result<f64> {
    spec.validate(q.dim(), "utility")?;
    spec.eval(q.as_slice())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub index: usize,
    pub kind: String,
    pub mode: Mode,
    /// Expectation (ex ante) or maximum over the support (ex post).
    pub value: f64,
    pub bound: f64,
    pub violation: f64,
    /// Support index attaining the maximum, for ex post constraints.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_point: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub plausibility_deviation: f64,
    pub constraints: Vec<ConstraintReport>,
    pub utility: f64,
    pub tol: f64,
    pub valid: bool,
}

impl VerificationReport {
    pub fn max_violation(&self) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation)
            .fold(0.0, f64::max)
    }
}

/// Measures plausibility, every constraint and the achieved utility.
pub fn verify_scheme(
    instance: &ProblemInstance,
    scheme: &SignalingScheme,
    tol: f64,
) -> Result<VerificationReport> {
    let plaus = check_bayes_plausible(scheme, instance.prior())?;
    let prior = instance.prior().as_slice();
    let constraints = instance
        .constraints()
        .iter()
        .enumerate()
        .map(|(index, c)| {
            let (value, worst_point) = match c.mode {
                Mode::ExAnte => (
                    scheme
                        .iter()
                        .map(|(q, w)| w * c.eval(q.as_slice(), prior))
                        .sum(),
                    None,
                ),
                Mode::ExPost => {
                    let (i, v) = scheme
                        .support()
                        .iter()
                        .map(|q| c.eval(q.as_slice(), prior))
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                            if v > best.1 {
                                (i, v)
                            } else {
                                best
                            }
                        });
                    (v, Some(i))
                }
            };
            ConstraintReport {
                index,
                kind: c.kind.name().to_string(),
                mode: c.mode,
                value,
                bound: c.bound,
                violation: (value - c.bound).max(0.0),
                worst_point,
            }
        })
        .collect::<Vec<_>>();
    let mut utility = 0.0;
    for (q, w) in scheme.iter() {
        utility += w * instance.utility().eval(q.as_slice())?;
    }
    let valid = plaus.deviation <= tol && constraints.iter().all(|c| c.violation <= tol);
    Ok(VerificationReport {
        plausibility_deviation: plaus.deviation,
        constraints,
        utility,
        tol,
        valid,
    })
}
