//! Second-price auctions as Sender utilities.
//!
//! Each bidder's value is linear in the posterior: under the targeted model
//! the state is a bit vector and bidder `i` only cares about bit `i`; under
//! the general model each type carries a full value-per-state vector.
//! Welfare is the expected highest value, revenue the expected second
//! highest, over independent discrete bidder types.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{field_err, Error, Result};
use crate::model::constraint::spread;
use crate::model::{
    ConstraintKind, MaxLinear, Mode, Posterior, ProblemInstance, SignalingScheme, UtilitySpec,
    WeightedMaxLinear, WeightedTerm,
};

pub const DEFAULT_PROFILE_CAP: usize = 1_000_000;
pub const DEFAULT_SAMPLES: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuctionObjective {
    Welfare,
    Revenue,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateModel {
    /// States are `{0,1}^n`; a type lists `[v(0,t), v(1,t)]`.
    #[default]
    Targeted,
    /// A type lists one value per state.
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidderType {
    pub weight: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bidder {
    pub types: Vec<BidderType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionSpec {
    pub objective: AuctionObjective,
    pub bidders: Vec<Bidder>,
    #[serde(default)]
    pub states: StateModel,
    #[serde(default = "default_cap")]
    pub profile_cap: usize,
    /// Required once the profile count exceeds the cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_cap() -> usize {
    DEFAULT_PROFILE_CAP
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

/// A utility value with its Monte Carlo standard error (zero when exact).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub exact: bool,
}

impl AuctionSpec {
    pub fn new(objective: AuctionObjective, bidders: Vec<Bidder>) -> Self {
        Self {
            objective,
            bidders,
            states: StateModel::Targeted,
            profile_cap: DEFAULT_PROFILE_CAP,
            seed: None,
            samples: DEFAULT_SAMPLES,
        }
    }

    /// Bidders with a single type each.
    pub fn deterministic(objective: AuctionObjective, values: Vec<Vec<f64>>) -> Self {
        Self::new(
            objective,
            values
                .into_iter()
                .map(|v| Bidder {
                    types: vec![BidderType {
                        weight: 1.0,
                        values: v,
                    }],
                })
                .collect(),
        )
    }

    pub fn general(mut self) -> Self {
        self.states = StateModel::General;
        self
    }

    pub fn num_bidders(&self) -> usize {
        self.bidders.len()
    }

    /// Number of states the spec lives on.
    pub fn num_states(&self) -> Option<usize> {
        match self.states {
            StateModel::Targeted => u32::try_from(self.bidders.len())
                .ok()
                .and_then(|n| 1usize.checked_shl(n)),
            StateModel::General => self
                .bidders
                .first()
                .and_then(|b| b.types.first())
                .map(|t| t.values.len()),
        }
    }

    /// Number of type profiles, saturating.
    pub fn profile_count(&self) -> u128 {
        self.bidders
            .iter()
            .fold(1u128, |acc, b| acc.saturating_mul(b.types.len() as u128))
    }

    fn rank(&self) -> usize {
        match self.objective {
            AuctionObjective::Welfare => 1,
            AuctionObjective::Revenue => 2,
        }
    }

    /// Linear functional (over states) of each bidder's value per type.
    pub fn functionals(&self, k: usize) -> Vec<Vec<Vec<f64>>> {
        self.bidders
            .iter()
            .enumerate()
            .map(|(i, b)| {
                b.types
                    .iter()
                    .map(|t| match self.states {
                        StateModel::Targeted => (0..k).map(|w| t.values[(w >> i) & 1]).collect(),
                        StateModel::General => t.values.clone(),
                    })
                    .collect()
            })
            .collect()
    }

    pub fn lipschitz_l1(&self) -> f64 {
        self.bidders
            .iter()
            .flat_map(|b| &b.types)
            .map(|t| spread(&t.values))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, k: usize, path: &str) -> Result<()> {
        if self.bidders.is_empty() {
            return Err(field_err(format!("{path}.bidders"), "must be nonempty"));
        }
        let width = match self.states {
            StateModel::Targeted => 2,
            StateModel::General => k,
        };
        if self.num_states() != Some(k) {
            return Err(field_err(
                format!("{path}.bidders"),
                format!(
                    "auction lives on {} states but the instance has k = {k}",
                    self.num_states()
                        .map_or_else(|| "too many".to_string(), |s| s.to_string())
                ),
            ));
        }
        for (i, b) in self.bidders.iter().enumerate() {
            let p = format!("{path}.bidders[{i}].types");
            if b.types.is_empty() {
                return Err(field_err(p, "must be nonempty"));
            }
            let mut total = 0.0;
            for (t, ty) in b.types.iter().enumerate() {
                if !ty.weight.is_finite() || ty.weight < 0.0 {
                    return Err(field_err(format!("{p}[{t}].weight"), "must be nonnegative"));
                }
                total += ty.weight;
                if ty.values.len() != width {
                    return Err(field_err(
                        format!("{p}[{t}].values"),
                        format!("expected {width} values, found {}", ty.values.len()),
                    ));
                }
                if ty.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(field_err(format!("{p}[{t}].values"), "must be nonnegative"));
                }
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(field_err(p, format!("type weights sum to {total}, not 1")));
            }
        }
        if self.profile_count() > self.profile_cap as u128 && self.seed.is_none() {
            return Err(field_err(
                format!("{path}.seed"),
                format!(
                    "{} type profiles exceed the cap of {}; a seed is required for sampling",
                    self.profile_count(),
                    self.profile_cap
                ),
            ));
        }
        Ok(())
    }
}

/// `j`-th largest of `vals` (`j = 1` or `2`), zero when there are fewer.
fn order_stat(vals: &[f64], j: usize) -> f64 {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in vals {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    let out = if j == 1 { first } else { second };
    if out.is_finite() {
        out
    } else {
        0.0
    }
}

/// Expected welfare or revenue at posterior `q`.
pub fn auction_utility(spec: &AuctionSpec, q: &[f64]) -> Result<f64> {
    auction_estimate(spec, q).map(|e| e.value)
}

/// Like [`auction_utility`] but also reports the sampling error.
pub fn auction_estimate(spec: &AuctionSpec, q: &[f64]) -> Result<Estimate> {
    let k = q.len();
    let n = spec.num_bidders();
    let rank = spec.rank();
    let bids: Vec<Vec<f64>> = spec
        .functionals(k)
        .iter()
        .map(|types| {
            types
                .iter()
                .map(|a| a.iter().zip(q).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    if rank > n {
        return Ok(Estimate {
            value: 0.0,
            std_error: 0.0,
            exact: true,
        });
    }
    if spec.profile_count() <= spec.profile_cap as u128 {
        let mut total = 0.0;
        let mut idx = vec![0usize; n];
        let mut current = vec![0.0; n];
        loop {
            let mut w = 1.0;
            for i in 0..n {
                w *= spec.bidders[i].types[idx[i]].weight;
                current[i] = bids[i][idx[i]];
            }
            if w > 0.0 {
                total += w * order_stat(&current, rank);
            }
            let mut i = 0;
            loop {
                if i == n {
                    return Ok(Estimate {
                        value: total,
                        std_error: 0.0,
                        exact: true,
                    });
                }
                idx[i] += 1;
                if idx[i] < spec.bidders[i].types.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }
    let seed = spec.seed.ok_or_else(|| {
        Error::SizeGuard(format!(
            "{} type profiles exceed the cap of {} and no seed was given",
            spec.profile_count(),
            spec.profile_cap
        ))
    })?;
    let samplers: Vec<WeightedIndex<f64>> = spec
        .bidders
        .iter()
        .map(|b| WeightedIndex::new(b.types.iter().map(|t| t.weight)))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("type weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = spec.samples.max(2);
    let mut current = vec![0.0; n];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        for (i, s) in samplers.iter().enumerate() {
            current[i] = bids[i][s.sample(&mut rng)];
        }
        let v = order_stat(&current, rank);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / samples as f64;
    let var =
        ((sum_sq / samples as f64) - mean * mean).max(0.0) * samples as f64 / (samples - 1) as f64;
    Ok(Estimate {
        value: mean,
        std_error: (var / samples as f64).sqrt(),
        exact: false,
    })
}

/// Expands the expectation over type profiles into a weighted sum of
/// max-of-linear terms.
pub fn to_max_linear(spec: &AuctionSpec, k: usize) -> Result<UtilitySpec> {
    if spec.profile_count() > spec.profile_cap as u128 {
        return Err(Error::SizeGuard(format!(
            "{} type profiles exceed the cap of {}",
            spec.profile_count(),
            spec.profile_cap
        )));
    }
    let n = spec.num_bidders();
    let rank = spec.rank();
    let functionals = spec.functionals(k);
    let mut terms = Vec::new();
    if rank <= n {
        let mut idx = vec![0usize; n];
        'outer: loop {
            let w: f64 = (0..n)
                .map(|i| spec.bidders[i].types[idx[i]].weight)
                .product();
            if w > 0.0 {
                terms.push(WeightedTerm {
                    weight: w,
                    term: MaxLinear::new(
                        rank,
                        (0..n).map(|i| functionals[i][idx[i]].clone()).collect(),
                    ),
                });
            }
            let mut i = 0;
            loop {
                if i == n {
                    break 'outer;
                }
                idx[i] += 1;
                if idx[i] < spec.bidders[i].types.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }
    Ok(UtilitySpec::WeightedMaxLinear(WeightedMaxLinear { terms }))
}

/// Outcome of sampling the relaxed Jensen inequality
/// `l u(a) + (1 - l) u(b) <= M u(l a + (1 - l) b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JensenReport {
    pub trials: usize,
    /// Trials skipped because the right-hand side was below 1e-12.
    pub skipped: usize,
    pub max_ratio: f64,
    pub factor: f64,
    pub pass: bool,
}

/// The factor every max of nonnegative linear functionals satisfies.
pub const JENSEN_FACTOR: f64 = 2.0;

/// `(l u(a) + (1 - l) u(b)) / u(l a + (1 - l) b)`, or `None` when the
/// denominator is below 1e-12.
pub fn jensen_ratio(
    utility: &UtilitySpec,
    lambda: f64,
    a: &[f64],
    b: &[f64],
) -> Result<Option<f64>> {
    let mid: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    let rhs = utility.eval(&mid)?;
    if rhs < 1e-12 {
        return Ok(None);
    }
    let lhs = lambda * utility.eval(a)? + (1.0 - lambda) * utility.eval(b)?;
    Ok(Some(lhs / rhs))
}

/// Uniform sample from the simplex (normalized exponentials).
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Samples `trials` triples `(l, a, b)` uniformly and reports the largest
/// observed ratio against [`JENSEN_FACTOR`].
pub fn verify_jensen_factor(
    utility: &UtilitySpec,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<JensenReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut skipped = 0;
    for _ in 0..trials {
        let lambda: f64 = rng.random();
        let a = sample_simplex(&mut rng, k);
        let b = sample_simplex(&mut rng, k);
        match jensen_ratio(utility, lambda, &a, &b)? {
            Some(r) => max_ratio = max_ratio.max(r),
            None => skipped += 1,
        }
    }
    Ok(JensenReport {
        trials,
        skipped,
        max_ratio,
        factor: JENSEN_FACTOR,
        pass: max_ratio <= JENSEN_FACTOR + 1e-9,
    })
}

/// The Bayes-plausible scheme supported on the vertices of
/// `{q : b_w q[w] >= -c for all w}`, for an instance whose only constraint
/// is an ex post `neg_min_weighted` one.
pub fn half_value_scheme(instance: &ProblemInstance) -> Result<SignalingScheme> {
    let [c] = instance.constraints() else {
        return Err(Error::InvalidArgument(
            "expected exactly one constraint".into(),
        ));
    };
    let ConstraintKind::NegMinWeighted { weights } = &c.kind else {
        return Err(Error::InvalidArgument(
            "the constraint must be neg_min_weighted".into(),
        ));
    };
    if c.mode != Mode::ExPost {
        return Err(Error::InvalidArgument(
            "the constraint must be ex post".into(),
        ));
    }
    let k = instance.k();
    let prior = instance.prior();
    let floor: Vec<f64> = weights.iter().map(|b| (-c.bound / b).max(0.0)).collect();
    let used: f64 = floor.iter().sum();
    let free = 1.0 - used;
    if free < -1e-12 {
        return Err(Error::Infeasible("the restricted simplex is empty".into()));
    }
    if free <= 1e-12 {
        let dev = floor
            .iter()
            .zip(prior.as_slice())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if dev <= 1e-9 {
            return Ok(SignalingScheme::no_revelation(prior));
        }
        return Err(Error::Infeasible(
            "the restricted simplex is a single point other than the prior".into(),
        ));
    }
    let mut support = Vec::with_capacity(k);
    let mut probs = Vec::with_capacity(k);
    for w in 0..k {
        let weight = (prior[w] - floor[w]) / free;
        if weight < -1e-12 {
            return Err(Error::Infeasible(format!(
                "the prior lies outside the restricted simplex (state {w})"
            )));
        }
        let mut v = floor.clone();
        v[w] += free;
        support.push(Posterior::new(v)?);
        probs.push(weight.max(0.0));
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    SignalingScheme::new(support, probs)
}
