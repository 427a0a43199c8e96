//! Small explicit instances with known optima and gaps.
//!
//! Every fixture instance carries its constraints in ex ante mode; the
//! ex post counterparts are obtained with [`ProblemInstance::with_mode`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::sample_simplex;
use crate::error::{Error, Result};
use crate::model::{
    verify_scheme, ConstraintKind, ConstraintSpec, MaxLinear, Mode, Piece, PiecewiseConstant,
    Posterior, ProblemInstance, SignalingScheme, UtilitySpec,
};
use crate::solver::{convert_traced, oracle_solve_points, MirrorPairs};

/// Hypercube fixtures stop at `k = 2^4`.
pub const MAX_HYPERCUBE_BITS: usize = 4;
pub const MAX_PRIOR_GAP_CONSTRAINTS: usize = 20;
const VALUE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fixture", rename_all = "snake_case")]
pub enum FixtureId {
    /// Two states, uniform prior, `f = q[1] <= 1/2 + eps0`.
    TwoState { eps0: f64 },
    /// Point-supported utility whose unique optimum has support `k + m`.
    SupportBound { k: usize, m: usize },
    /// States `{0,1}^m`, infinity-norm utility, `f_i` = mass of bit `i`.
    Hypercube { m: usize },
    /// Two states with a utility of relaxed Jensen factor `big_m`.
    JensenGap { big_m: f64 },
    /// `k = m + 1` states, `f_i = q[i] <= 1/k`.
    PriorGap { m: usize },
}

impl FixtureId {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match *self {
            FixtureId::TwoState { eps0 } if !(eps0 > 0.0 && eps0 < 0.5) => {
                bad(format!("example1 needs eps0 in (0, 1/2), got {eps0}"))
            }
            FixtureId::SupportBound { k, m } if k < 2 || m < 1 => bad(format!(
                "prop3 needs k >= 2 and m >= 1, got k = {k}, m = {m}"
            )),
            FixtureId::Hypercube { m } if !(1..=MAX_HYPERCUBE_BITS).contains(&m) => bad(format!(
                "appE1 needs 1 <= m <= {MAX_HYPERCUBE_BITS}, got {m}"
            )),
            FixtureId::JensenGap { big_m } if !(big_m.is_finite() && big_m >= 1.0) => {
                bad(format!("appE2 needs M >= 1, got {big_m}"))
            }
            FixtureId::PriorGap { m } if !(1..=MAX_PRIOR_GAP_CONSTRAINTS).contains(&m) => bad(
                format!("appE3 needs 1 <= m <= {MAX_PRIOR_GAP_CONSTRAINTS}, got {m}"),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for FixtureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixtureId::TwoState { eps0 } => write!(f, "example1:{eps0}"),
            FixtureId::SupportBound { k, m } => write!(f, "prop3:{k},{m}"),
            FixtureId::Hypercube { m } => write!(f, "appE1:{m}"),
            FixtureId::JensenGap { big_m } => write!(f, "appE2:{big_m}"),
            FixtureId::PriorGap { m } => write!(f, "appE3:{m}"),
        }
    }
}

fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad_number(s))?;
            let b: f64 = b.trim().parse().map_err(|_| bad_number(s))?;
            a / b
        }
        None => s.parse().map_err(|_| bad_number(s))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad_number(s))
    }
}

fn parse_count(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| bad_number(s))
}

fn bad_number(s: &str) -> Error {
    Error::InvalidArgument(format!("cannot parse `{s}` as a fixture parameter"))
}

/// Accepts `example1:<eps0>`, `prop3:<k>,<m>`, `appE1:<m>`, `appE2:<M>` and
/// `appE3:<m>`. Reals may be written as fractions (`1/6`).
impl FromStr for FixtureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("fixture id `{s}` has no parameters")))?;
        let id = match name.trim().to_ascii_lowercase().as_str() {
            "example1" => FixtureId::TwoState {
                eps0: parse_real(args)?,
            },
            "prop3" => {
                let (k, m) = args.split_once(',').ok_or_else(|| {
                    Error::InvalidArgument(format!("prop3 expects `k,m`, got `{args}`"))
                })?;
                FixtureId::SupportBound {
                    k: parse_count(k)?,
                    m: parse_count(m)?,
                }
            }
            "appe1" => FixtureId::Hypercube {
                m: parse_count(args)?,
            },
            "appe2" => FixtureId::JensenGap {
                big_m: parse_real(args)?,
            },
            "appe3" => FixtureId::PriorGap {
                m: parse_count(args)?,
            },
            other => {
                return Err(Error::InvalidArgument(format!("unknown fixture `{other}`")));
            }
        };
        id.validate()?;
        Ok(id)
    }
}

/// Known values for a fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    /// Optimal (or, for the hypercube, starting) value under the ex ante constraints.
    pub ex_ante_value: f64,
    /// Optimal value with every constraint ex post (for the hypercube, the value
    /// after mirror pooling).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ex_post_value: Option<f64>,
    /// Scheme attaining `ex_ante_value`.
    pub scheme: SignalingScheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub id: FixtureId,
    pub instance: ProblemInstance,
    pub reference: Reference,
}

pub fn build_fixture(id: FixtureId) -> Result<Fixture> {
    id.validate()?;
    let (instance, reference) = match id {
        FixtureId::TwoState { eps0 } => two_state(eps0)?,
        FixtureId::SupportBound { k, m } => support_bound(k, m)?,
        FixtureId::Hypercube { m } => hypercube(m)?,
        FixtureId::JensenGap { big_m } => jensen_gap(big_m)?,
        FixtureId::PriorGap { m } => prior_gap(m)?,
    };
    Ok(Fixture {
        id,
        instance,
        reference,
    })
}

fn linear(coefficients: Vec<f64>, bound: f64) -> ConstraintSpec {
    ConstraintSpec::ex_ante(ConstraintKind::Linear { coefficients }, bound)
}

fn binary(p1: f64) -> Posterior {
    Posterior::new(vec![1.0 - p1, p1]).expect("valid two-state posterior")
}

fn two_state(eps0: f64) -> Result<(ProblemInstance, Reference)> {
    let prior = Posterior::uniform(2);
    let utility = UtilitySpec::MaxLinear(MaxLinear::new(1, vec![vec![0.0, 0.0], vec![-1.0, 1.0]]));
    let instance = ProblemInstance::new(
        2,
        prior.clone(),
        utility,
        vec![linear(vec![0.0, 1.0], 0.5 + eps0)],
    )?;
    Ok((
        instance,
        Reference {
            ex_ante_value: 0.5,
            ex_post_value: Some(2.0 * eps0 / (1.0 + 2.0 * eps0)),
            scheme: SignalingScheme::full_revelation(&prior),
            support_size: None,
        },
    ))
}

/// Interior points `q_i` averaging to the center, and the bump radius.
pub fn support_bound_points(k: usize, m: usize) -> (Vec<Vec<f64>>, f64) {
    let center = 1.0 / k as f64;
    let rho = 1.0 / (2.0 * k as f64);
    let mid = (m as f64 - 1.0) / 2.0;
    let points: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let t = rho * (i as f64 - mid) / m as f64;
            let mut q = vec![center; k];
            q[0] += t;
            q[1] -= t;
            q
        })
        .collect();
    let mut all = points.clone();
    all.extend((0..k).map(|j| Posterior::vertex(k, j).into_vec()));
    let mut min_dist = f64::INFINITY;
    for a in 0..all.len() {
        for b in a + 1..all.len() {
            let d: f64 = all[a].iter().zip(&all[b]).map(|(x, y)| (x - y).abs()).sum();
            min_dist = min_dist.min(d);
        }
    }
    (points, min_dist / 2.0)
}

fn support_bound(k: usize, m: usize) -> Result<(ProblemInstance, Reference)> {
    let (points, radius) = support_bound_points(k, m);
    let mut pieces: Vec<Piece> = points
        .iter()
        .map(|q| Piece {
            vertices: vec![q.clone()],
            value: 1.0,
        })
        .collect();
    pieces.extend((0..k).map(|j| Piece {
        vertices: vec![Posterior::vertex(k, j).into_vec()],
        value: 0.5,
    }));
    pieces.push(Piece {
        vertices: (0..k).map(|j| Posterior::vertex(k, j).into_vec()).collect(),
        value: 0.0,
    });
    let constraints = points
        .iter()
        .map(|q| {
            ConstraintSpec::ex_ante(
                ConstraintKind::L1Bump {
                    center: q.clone(),
                    radius,
                },
                1.0 / (2.0 * m as f64),
            )
        })
        .collect();
    let prior = Posterior::uniform(k);
    let instance = ProblemInstance::new(
        k,
        prior,
        UtilitySpec::PiecewiseConstant(PiecewiseConstant::new(pieces)),
        constraints,
    )?;
    let mut support: Vec<Posterior> = points
        .into_iter()
        .map(Posterior::new)
        .collect::<Result<_>>()?;
    support.extend((0..k).map(|j| Posterior::vertex(k, j)));
    let mut probs = vec![1.0 / (2.0 * m as f64); m];
    probs.extend(std::iter::repeat_n(1.0 / (2.0 * k as f64), k));
    Ok((
        instance,
        Reference {
            ex_ante_value: 0.75,
            ex_post_value: None,
            scheme: SignalingScheme::new(support, probs)?,
            support_size: Some(k + m),
        },
    ))
}

/// Indicator of bit `i` over the states `{0,1}^m`.
fn bit_indicator(k: usize, i: usize) -> Vec<f64> {
    (0..k).map(|w| ((w >> i) & 1) as f64).collect()
}

fn hypercube(m: usize) -> Result<(ProblemInstance, Reference)> {
    let k = 1usize << m;
    let prior = Posterior::uniform(k);
    let constraints = (0..m).map(|i| linear(bit_indicator(k, i), 0.5)).collect();
    let instance = ProblemInstance::new(
        k,
        prior.clone(),
        UtilitySpec::MaxLinear(MaxLinear::linf(k)),
        constraints,
    )?;
    Ok((
        instance,
        Reference {
            ex_ante_value: 1.0,
            ex_post_value: Some(1.0 / k as f64),
            scheme: SignalingScheme::full_revelation(&prior),
            support_size: None,
        },
    ))
}

fn jensen_gap(big_m: f64) -> Result<(ProblemInstance, Reference)> {
    let a = (2.0 - big_m) / big_m;
    let prior = Posterior::uniform(2);
    let instance = ProblemInstance::new(
        2,
        prior.clone(),
        UtilitySpec::MaxLinear(MaxLinear::new(1, vec![vec![a, 1.0], vec![1.0, a]])),
        vec![linear(vec![0.0, 1.0], 0.5)],
    )?;
    Ok((
        instance,
        Reference {
            ex_ante_value: 1.0,
            ex_post_value: Some(1.0 / big_m),
            scheme: SignalingScheme::full_revelation(&prior),
            support_size: None,
        },
    ))
}

fn prior_gap(m: usize) -> Result<(ProblemInstance, Reference)> {
    let k = m + 1;
    let prior = Posterior::uniform(k);
    let constraints = (0..m)
        .map(|i| linear(Posterior::vertex(k, i).into_vec(), 1.0 / k as f64))
        .collect();
    let instance = ProblemInstance::new(
        k,
        prior.clone(),
        UtilitySpec::MaxLinear(MaxLinear::linf(k)),
        constraints,
    )?;
    Ok((
        instance,
        Reference {
            ex_ante_value: 1.0,
            ex_post_value: Some(1.0 / k as f64),
            scheme: SignalingScheme::full_revelation(&prior),
            support_size: None,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub measured: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn close(name: impl Into<String>, expected: f64, measured: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            expected,
            measured,
            tol,
            pass: (expected - measured).abs() <= tol,
        }
    }

    fn at_most(name: impl Into<String>, bound: f64, measured: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            expected: bound,
            measured,
            tol,
            pass: measured <= bound + tol,
        }
    }

    fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            expected: 1.0,
            measured: if ok { 1.0 } else { 0.0 },
            tol: 0.0,
            pass: ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    pub id: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Final scheme of the conversion run, for the hypercube fixture.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converted: Option<SignalingScheme>,
}

impl FixtureReport {
    fn new(id: FixtureId, checks: Vec<Check>, converted: Option<SignalingScheme>) -> Self {
        Self {
            id: id.to_string(),
            pass: checks.iter().all(|c| c.pass),
            checks,
            converted,
        }
    }

    /// First failing check, formatted with both values.
    pub fn failure(&self) -> Option<String> {
        self.checks.iter().find(|c| !c.pass).map(|c| {
            format!(
                "{}: expected {} (tol {:e}), measured {}",
                c.name, c.expected, c.tol, c.measured
            )
        })
    }
}

/// Random valid schemes sampled for the three-quarters upper-bound check.
pub const SUPPORT_SAMPLES: usize = 1000;

/// Checks a fixture against its reference values.
pub fn verify_fixture(id: FixtureId) -> Result<FixtureReport> {
    let fx = build_fixture(id)?;
    let inst = &fx.instance;
    let reference = &fx.reference;
    let mut checks = Vec::new();
    let mut converted = None;
    match id {
        FixtureId::TwoState { eps0 } => {
            let points = [0.0, 0.5, 0.5 + eps0, 1.0].map(binary).to_vec();
            oracle_pair(inst, points, reference, &mut checks)?;
        }
        FixtureId::JensenGap { big_m } => {
            let points = [0.0, 0.5, 1.0].map(binary).to_vec();
            let (ante, post) = oracle_pair(inst, points, reference, &mut checks)?;
            checks.push(Check::close("gap", big_m, ante / post, VALUE_TOL));
        }
        FixtureId::PriorGap { m } => {
            let k = m + 1;
            let mut points: Vec<Posterior> = (0..k).map(|j| Posterior::vertex(k, j)).collect();
            points.push(inst.prior().clone());
            let (ante, post) = oracle_pair(inst, points, reference, &mut checks)?;
            checks.push(Check::close("gap", k as f64, ante / post, VALUE_TOL));
        }
        FixtureId::SupportBound { k, m } => {
            let report = verify_scheme(inst, &reference.scheme, VALUE_TOL)?;
            checks.push(Check::flag("reference scheme is valid", report.valid));
            checks.push(Check::close("reference value", 0.75, report.utility, 1e-12));
            checks.push(Check::close(
                "support size",
                (k + m) as f64,
                reference.scheme.len() as f64,
                0.0,
            ));
            checks.push(Check::flag(
                "single-weight perturbations invalidate or lose value",
                perturbations_hurt(inst, &reference.scheme)?,
            ));
            let best = sample_valid_schemes(inst, SUPPORT_SAMPLES, 0x5eed)?
                .iter()
                .map(|s| verify_scheme(inst, s, VALUE_TOL).map(|r| r.utility))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            checks.push(Check::at_most(
                "random valid schemes",
                0.75,
                best,
                VALUE_TOL,
            ));
        }
        FixtureId::Hypercube { m } => {
            let k = 1usize << m;
            let prior = inst.prior();
            let start = verify_scheme(inst, &reference.scheme, VALUE_TOL)?;
            checks.push(Check::close(
                "full revelation value",
                1.0,
                start.utility,
                VALUE_TOL,
            ));
            let mut scheme = reference.scheme.clone();
            for i in 0..m {
                let (next, _) = convert_traced(
                    &scheme,
                    &inst.constraints()[i..=i],
                    prior,
                    &mut MirrorPairs { first_bit: i },
                )?;
                scheme = next;
                let f = bit_indicator(k, i);
                let worst = scheme
                    .support()
                    .iter()
                    .map(|q| (crate::linalg::dot(&f, q.as_slice()) - 0.5).abs())
                    .fold(0.0, f64::max);
                checks.push(Check::close(
                    format!("run {i}: f_{i} = 1/2 on the support"),
                    0.0,
                    worst,
                    VALUE_TOL,
                ));
            }
            let end = verify_scheme(&inst.with_mode(Mode::ExPost), &scheme, VALUE_TOL)?;
            checks.push(Check::flag("output is ex post valid", end.valid));
            checks.push(Check::close("support size", 1.0, scheme.len() as f64, 0.0));
            checks.push(Check::close(
                "distance to no revelation",
                0.0,
                scheme.support()[0].linf_distance(prior),
                VALUE_TOL,
            ));
            checks.push(Check::close(
                "pooled value",
                1.0 / k as f64,
                end.utility,
                VALUE_TOL,
            ));
            converted = Some(scheme);
        }
    }
    Ok(FixtureReport::new(id, checks, converted))
}

/// Oracle optima on `points` with ex ante and ex post constraints.
fn oracle_pair(
    inst: &ProblemInstance,
    points: Vec<Posterior>,
    reference: &Reference,
    checks: &mut Vec<Check>,
) -> Result<(f64, f64)> {
    let ante = oracle_solve_points(inst, points.clone())?.value;
    let post = oracle_solve_points(&inst.with_mode(Mode::ExPost), points)?.value;
    checks.push(Check::close(
        "ex ante optimum",
        reference.ex_ante_value,
        ante,
        VALUE_TOL,
    ));
    if let Some(v) = reference.ex_post_value {
        checks.push(Check::close("ex post optimum", v, post, VALUE_TOL));
    }
    Ok((ante, post))
}

/// Moving `1e-3` of mass onto or off any single support point (then
/// renormalizing) breaks validity or lowers the value.
fn perturbations_hurt(inst: &ProblemInstance, scheme: &SignalingScheme) -> Result<bool> {
    let base = verify_scheme(inst, scheme, VALUE_TOL)?.utility;
    for i in 0..scheme.len() {
        for delta in [1e-3, -1e-3] {
            let mut probs = scheme.probs().to_vec();
            probs[i] = (probs[i] + delta).max(0.0);
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            let perturbed = SignalingScheme::new(scheme.support().to_vec(), probs)?;
            let r = verify_scheme(inst, &perturbed, VALUE_TOL)?;
            if r.valid && r.utility >= base - 1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Draws Bayes-plausible schemes valid for `instance` by rejection.
///
/// Each draw picks a few support points (utility piece vertices with
/// probability one half, uniform points otherwise), random weights, and a
/// mixing share `a`; one extra point restores the prior exactly. Draws
/// violating a constraint are discarded.
pub fn sample_valid_schemes(
    instance: &ProblemInstance,
    count: usize,
    seed: u64,
) -> Result<Vec<SignalingScheme>> {
    let k = instance.k();
    let prior = instance.prior().as_slice();
    let special: Vec<Vec<f64>> = match instance.utility() {
        UtilitySpec::PiecewiseConstant(pc) => {
            pc.pieces.iter().flat_map(|p| p.vertices.clone()).collect()
        }
        _ => (0..k).map(|j| Posterior::vertex(k, j).into_vec()).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > count * 1000 {
            return Err(Error::Numeric(format!(
                "only {} valid schemes after {attempts} draws",
                out.len()
            )));
        }
        let r = rng.random_range(1..=k + 3);
        let points: Vec<Vec<f64>> = (0..r)
            .map(|_| {
                if rng.random_bool(0.5) {
                    special[rng.random_range(0..special.len())].clone()
                } else {
                    sample_simplex(&mut rng, k)
                }
            })
            .collect();
        let mut weights: Vec<f64> = (0..r).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let bary: Vec<f64> = (0..k)
            .map(|w| points.iter().zip(&weights).map(|(q, a)| a * q[w]).sum())
            .collect();
        let a_max = bary
            .iter()
            .zip(prior)
            .filter(|(b, _)| **b > 0.0)
            .map(|(b, p)| p / b)
            .fold(1.0f64, f64::min);
        let a = if rng.random_bool(0.5) {
            a_max
        } else {
            a_max * rng.random::<f64>()
        };
        let mut support = Vec::with_capacity(r + 1);
        let mut probs = Vec::with_capacity(r + 1);
        for (q, w) in points.into_iter().zip(&weights) {
            support.push(Posterior::new(q)?);
            probs.push(a * w);
        }
        if a < 1.0 - 1e-12 {
            let fix: Vec<f64> = prior
                .iter()
                .zip(&bary)
                .map(|(p, b)| ((p - a * b) / (1.0 - a)).max(0.0))
                .collect();
            let Ok(fix) = Posterior::new(fix) else {
                continue;
            };
            support.push(fix);
            probs.push(1.0 - a);
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let scheme = SignalingScheme::new(support, probs)?;
        if verify_scheme(instance, &scheme, VALUE_TOL)?.valid {
            out.push(scheme);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for s in [
            "example1:0.25",
            "prop3:3,2",
            "appE1:2",
            "appE2:1.5",
            "appE3:2",
        ] {
            let id: FixtureId = s.parse().unwrap();
            assert_eq!(id.to_string(), s);
        }
        assert_eq!(
            "example1:1/6".parse::<FixtureId>().unwrap(),
            FixtureId::TwoState { eps0: 1.0 / 6.0 }
        );
        assert!("bogus".parse::<FixtureId>().is_err());
        assert!("example1:0.7".parse::<FixtureId>().is_err());
        assert!("appE1:5".parse::<FixtureId>().is_err());
    }

    #[test]
    fn support_points_average_to_center() {
        let (q, r) = support_bound_points(3, 4);
        for w in 0..3 {
            let mean: f64 = q.iter().map(|p| p[w]).sum::<f64>() / 4.0;
            assert!((mean - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(r > 0.0);
    }
}
