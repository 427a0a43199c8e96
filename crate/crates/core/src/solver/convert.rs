//! Pooling conversion of an ex ante valid scheme into an ex post valid one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_bayes_plausible, ConstraintSpec, Posterior, SignalingScheme, PLAUSIBILITY_TOL,
};

/// Slack on ex ante feasibility of the input and on `f(q_c) <= c`.
pub const CONVERT_TOL: f64 = 1e-9;
const MAX_BISECTIONS: usize = 200;
/// Masses left by a pooling step at or below this count as exhausted.
const RESIDUAL_CUTOFF: f64 = 1e-14;

/// Chooses which strictly satisfying posterior (`s`) and violating
/// posterior (`t`) to pool next. Both slices are nonempty positions into
/// `support`; return one element of each.
pub trait PairSelector {
    fn select(
        &mut self,
        constraint: usize,
        support: &[Posterior],
        values: &[f64],
        s: &[usize],
        t: &[usize],
    ) -> Result<(usize, usize)>;
}

/// Largest violation against smallest value; ties go to the lower position.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExtremePairs;

impl PairSelector for ExtremePairs {
    fn select(
        &mut self,
        _constraint: usize,
        _support: &[Posterior],
        values: &[f64],
        s: &[usize],
        t: &[usize],
    ) -> Result<(usize, usize)> {
        let pick = |set: &[usize], better: fn(f64, f64) -> bool| {
            set.iter()
                .copied()
                .reduce(|a, b| if better(values[b], values[a]) { b } else { a })
                .expect("nonempty")
        };
        Ok((pick(s, |x, y| x < y), pick(t, |x, y| x > y)))
    }
}

/// On states `{0,1}^m` (state `w` has bit `i` equal to `(w >> i) & 1`),
/// pools each violating posterior with its mirror image under flipping
/// bit `first_bit + constraint`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MirrorPairs {
    pub first_bit: usize,
}

impl PairSelector for MirrorPairs {
    fn select(
        &mut self,
        constraint: usize,
        support: &[Posterior],
        _values: &[f64],
        s: &[usize],
        t: &[usize],
    ) -> Result<(usize, usize)> {
        let ti = t[0];
        let q = &support[ti];
        let k = q.dim();
        let bit = self.first_bit + constraint;
        if !k.is_power_of_two() || bit >= k.trailing_zeros() as usize {
            return Err(Error::InvalidArgument(format!(
                "bit {bit} does not index a state bit for k = {k}"
            )));
        }
        let flip = 1usize << bit;
        let mirror = Posterior::new((0..k).map(|w| q[w ^ flip]).collect())?;
        let si = s
            .iter()
            .copied()
            .find(|&i| support[i].linf_distance(&mirror) <= 1e-12)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "mirror of support point {ti} under bit {bit} is not a satisfying support point"
                ))
            })?;
        Ok((si, ti))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolStep {
    pub constraint: usize,
    /// Weight of the satisfying posterior in the pooled point.
    pub lambda: f64,
    /// Distance of the barycenter from the prior after the step (l-inf).
    pub plausibility_deviation: f64,
    /// `E[f_j]` for every constraint after the step.
    pub expectations: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversionTrace {
    pub initial_expectations: Vec<f64>,
    pub steps: Vec<PoolStep>,
    /// Pooling steps spent on each constraint.
    pub steps_per_constraint: Vec<usize>,
    /// Support size when each constraint's run began.
    pub support_at_start: Vec<usize>,
}

/// Converts with [`ExtremePairs`].
pub fn ex_ante_to_ex_post(
    scheme: &SignalingScheme,
    constraints: &[ConstraintSpec],
    prior: &Posterior,
) -> Result<SignalingScheme> {
    convert_traced(scheme, constraints, prior, &mut ExtremePairs).map(|(s, _)| s)
}

/// Runs the pooling loop once per constraint, in order, and records every
/// step. Constraint modes are ignored: each one is enforced ex post.
pub fn convert_traced(
    scheme: &SignalingScheme,
    constraints: &[ConstraintSpec],
    prior: &Posterior,
    selector: &mut dyn PairSelector,
) -> Result<(SignalingScheme, ConversionTrace)> {
    if scheme.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            found: scheme.dim(),
        });
    }
    let p = prior.as_slice();
    for (index, c) in constraints.iter().enumerate() {
        c.kind
            .validate(prior.dim(), &format!("constraints[{index}]"))?;
        c.kind
            .check_convex()
            .map_err(|reason| Error::NonConvex { index, reason })?;
    }
    let plaus = check_bayes_plausible(scheme, prior)?;
    if !plaus.plausible {
        return Err(Error::InvalidScheme(format!(
            "not Bayes plausible (deviation {:e})",
            plaus.deviation
        )));
    }
    let expectations = |support: &[Posterior], probs: &[f64]| -> Vec<f64> {
        constraints
            .iter()
            .map(|c| {
                support
                    .iter()
                    .zip(probs)
                    .map(|(q, w)| w * c.eval(q.as_slice(), p))
                    .sum()
            })
            .collect()
    };
    let initial = expectations(scheme.support(), scheme.probs());
    for (index, (c, &value)) in constraints.iter().zip(&initial).enumerate() {
        if value > c.bound + CONVERT_TOL {
            return Err(Error::ExAnteViolated {
                index,
                value,
                bound: c.bound,
            });
        }
    }
    let mut trace = ConversionTrace {
        initial_expectations: initial,
        ..Default::default()
    };
    let mut current = scheme.clone();
    for (j, c) in constraints.iter().enumerate() {
        let mut support = current.support().to_vec();
        let mut probs = current.probs().to_vec();
        let mut values: Vec<f64> = support.iter().map(|q| c.eval(q.as_slice(), p)).collect();
        let mut s: Vec<usize> = (0..support.len())
            .filter(|&i| values[i] < c.bound)
            .collect();
        let mut t: Vec<usize> = (0..support.len())
            .filter(|&i| values[i] > c.bound)
            .collect();
        trace.support_at_start.push(support.len());
        let mut steps = 0;
        while !t.is_empty() {
            if s.is_empty() {
                let worst = t
                    .iter()
                    .map(|&i| values[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                if worst <= c.bound + CONVERT_TOL {
                    break;
                }
                return Err(Error::Numeric(format!(
                    "constraint {j}: violating posteriors remain (f = {worst}) with no satisfying partner"
                )));
            }
            let (si, ti) = selector.select(j, &support, &values, &s, &t)?;
            if !s.contains(&si) || !t.contains(&ti) {
                return Err(Error::InvalidArgument(
                    "pair selector returned a position outside S or T".into(),
                ));
            }
            let lambda = crossing(c, p, &support[si], &support[ti]).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("constraint {j}: {m}")),
                other => other,
            })?;
            let qc = pool_point(&support[si], &support[ti], lambda);
            let (rs, rt) = (probs[si], probs[ti]);
            let (mut new_s, mut new_t, rc);
            if lambda * rt >= (1.0 - lambda) * rs {
                new_s = 0.0;
                new_t = rt - (1.0 - lambda) * rs / lambda;
                rc = rs / lambda;
            } else {
                new_s = rs - lambda * rt / (1.0 - lambda);
                new_t = 0.0;
                rc = rt / (1.0 - lambda);
            }
            if new_s <= RESIDUAL_CUTOFF {
                new_s = 0.0;
            }
            if new_t <= RESIDUAL_CUTOFF {
                new_t = 0.0;
            }
            probs[si] = new_s;
            probs[ti] = new_t;
            if new_s == 0.0 {
                s.retain(|&i| i != si);
            }
            if new_t == 0.0 {
                t.retain(|&i| i != ti);
            }
            values.push(c.eval(qc.as_slice(), p));
            support.push(qc);
            probs.push(rc);
            steps += 1;
            trace.steps.push(PoolStep {
                constraint: j,
                lambda,
                plausibility_deviation: barycenter_deviation(&support, &probs, p),
                expectations: expectations(&support, &probs),
            });
        }
        trace.steps_per_constraint.push(steps);
        let (support, probs): (Vec<_>, Vec<_>) = support
            .into_iter()
            .zip(probs)
            .filter(|(_, w)| *w > 0.0)
            .unzip();
        let total: f64 = probs.iter().sum();
        let probs = probs.into_iter().map(|w| w / total).collect();
        current = SignalingScheme::new(support, probs)?;
    }
    let plaus = check_bayes_plausible(&current, prior)?;
    if plaus.deviation > PLAUSIBILITY_TOL {
        return Err(Error::Numeric(format!(
            "pooling drifted from the prior by {:e}",
            plaus.deviation
        )));
    }
    Ok((current, trace))
}

/// `lambda q_s + (1 - lambda) q_t` without renormalization.
fn pool_point(qs: &Posterior, qt: &Posterior, lambda: f64) -> Posterior {
    qs.mix(lambda, qt)
}

/// Smallest weight on `qs` found by bisection with `f <= c` at the mixed
/// point, stopping once `f` is within [`CONVERT_TOL`] below `c`.
fn crossing(c: &ConstraintSpec, prior: &[f64], qs: &Posterior, qt: &Posterior) -> Result<f64> {
    let f = |l: f64| c.eval(pool_point(qs, qt, l).as_slice(), prior);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut f_hi = f(hi);
    for _ in 0..MAX_BISECTIONS {
        if f_hi >= c.bound - CONVERT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v <= c.bound {
            hi = mid;
            f_hi = v;
        } else {
            lo = mid;
        }
    }
    if f_hi < c.bound - CONVERT_TOL {
        return Err(Error::Numeric(format!(
            "f does not cross the bound on the pooling segment (stuck at {f_hi} < {})",
            c.bound
        )));
    }
    Ok(hi)
}

fn barycenter_deviation(support: &[Posterior], probs: &[f64], prior: &[f64]) -> f64 {
    let mut bary = vec![0.0; prior.len()];
    for (q, w) in support.iter().zip(probs) {
        for (b, x) in bary.iter_mut().zip(q.as_slice()) {
            *b += w * x;
        }
    }
    bary.iter()
        .zip(prior)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}
