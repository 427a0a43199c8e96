use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{field_err, Result};

/// `0 ln 0 := 0`.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Which norm a `NormDistance` constraint measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormOrder {
    L1,
    L2,
    Linf,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OrderRepr {
    Num(u32),
    Name(String),
}

impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormOrder::L1 => OrderRepr::Num(1),
            NormOrder::L2 => OrderRepr::Num(2),
            NormOrder::Linf => OrderRepr::Name("inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match OrderRepr::deserialize(d)? {
            OrderRepr::Num(1) => Ok(NormOrder::L1),
            OrderRepr::Num(2) => Ok(NormOrder::L2),
            OrderRepr::Name(s) if s == "inf" || s == "linf" => Ok(NormOrder::Linf),
            OrderRepr::Name(s) if s == "l1" => Ok(NormOrder::L1),
            OrderRepr::Name(s) if s == "l2" => Ok(NormOrder::L2),
            _ => Err(serde::de::Error::custom(
                "norm order must be 1, 2 or \"inf\"",
            )),
        }
    }
}

/// The constraint function `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `f(q) = a . q`
    Linear { coefficients: Vec<f64> },
    /// `f(q) = ||q - prior||`
    NormDistance { order: NormOrder },
    /// `f(q) = sum q ln q`
    Entropy,
    /// `f(q) = b * sum_j Q_j ln(Q_j / b_j)` with `Q_j` the mass of cell `j`.
    GroupedKl {
        partition: Vec<Vec<usize>>,
        scale: f64,
        references: Vec<f64>,
    },
    /// `f(q) = -min_w b_w q[w]`
    NegMinWeighted { weights: Vec<f64> },
    /// `f(q) = max(0, 1 - ||q - center||_1 / radius)`, a continuous bump.
    L1Bump { center: Vec<f64>, radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ExAnte,
    ExPost,
}

/// A constraint `f <= bound`, either in expectation or on every posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    #[serde(flatten)]
    pub kind: ConstraintKind,
    pub bound: f64,
    pub mode: Mode,
}

impl ConstraintSpec {
    pub fn new(kind: ConstraintKind, bound: f64, mode: Mode) -> Self {
        Self { kind, bound, mode }
    }

    pub fn ex_ante(kind: ConstraintKind, bound: f64) -> Self {
        Self::new(kind, bound, Mode::ExAnte)
    }

    pub fn ex_post(kind: ConstraintKind, bound: f64) -> Self {
        Self::new(kind, bound, Mode::ExPost)
    }

    pub fn eval(&self, q: &[f64], prior: &[f64]) -> f64 {
        self.kind.eval(q, prior)
    }

    pub fn validate(&self, k: usize, path: &str) -> Result<()> {
        if !self.bound.is_finite() {
            return Err(field_err(format!("{path}.bound"), "must be finite"));
        }
        self.kind.validate(k, &format!("{path}.params"))
    }
}

impl ConstraintKind {
    pub fn eval(&self, q: &[f64], prior: &[f64]) -> f64 {
        match self {
            ConstraintKind::Linear { coefficients } => {
                coefficients.iter().zip(q).map(|(a, x)| a * x).sum()
            }
            ConstraintKind::NormDistance { order } => {
                let diffs = q.iter().zip(prior).map(|(a, b)| (a - b).abs());
                match order {
                    NormOrder::L1 => diffs.sum(),
                    NormOrder::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
                    NormOrder::Linf => diffs.fold(0.0, f64::max),
                }
            }
            ConstraintKind::Entropy => q.iter().map(|&x| xlogx(x)).sum(),
            ConstraintKind::GroupedKl {
                partition,
                scale,
                references,
            } => {
                let mut acc = 0.0;
                for (cell, &b_j) in partition.iter().zip(references) {
                    let mass: f64 = cell.iter().map(|&w| q[w]).sum();
                    if mass > 0.0 {
                        acc += mass * (mass / b_j).ln();
                    }
                }
                scale * acc
            }
            ConstraintKind::NegMinWeighted { weights } => -weights
                .iter()
                .zip(q)
                .map(|(b, x)| b * x)
                .fold(f64::INFINITY, f64::min),
            ConstraintKind::L1Bump { center, radius } => {
                let d: f64 = q.iter().zip(center).map(|(a, b)| (a - b).abs()).sum();
                (1.0 - d / radius).max(0.0)
            }
        }
    }

    /// Lipschitz constant with respect to the l1 norm on the simplex, or
    /// `None` for kinds that blow up at the boundary and need smoothing.
    pub fn lipschitz_l1(&self) -> Option<f64> {
        match self {
            ConstraintKind::Linear { coefficients } => Some(spread(coefficients)),
            ConstraintKind::NormDistance { .. } => Some(1.0),
            ConstraintKind::NegMinWeighted { weights } => {
                Some(weights.iter().cloned().fold(0.0, f64::max))
            }
            ConstraintKind::L1Bump { radius, .. } => Some(1.0 / radius),
            ConstraintKind::Entropy => None,
            ConstraintKind::GroupedKl { partition, .. } if partition.len() == 1 => Some(0.0),
            ConstraintKind::GroupedKl { .. } => None,
        }
    }

    /// `Err(reason)` when the function is not convex on the simplex.
    pub fn check_convex(&self) -> std::result::Result<(), String> {
        match self {
            ConstraintKind::GroupedKl { scale, .. } if *scale < 0.0 => {
                Err("grouped_kl with negative scale is concave".into())
            }
            ConstraintKind::L1Bump { .. } => Err("l1_bump is not convex".into()),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::Linear { .. } => "linear",
            ConstraintKind::NormDistance { .. } => "norm_distance",
            ConstraintKind::Entropy => "entropy",
            ConstraintKind::GroupedKl { .. } => "grouped_kl",
            ConstraintKind::NegMinWeighted { .. } => "neg_min_weighted",
            ConstraintKind::L1Bump { .. } => "l1_bump",
        }
    }

    pub fn validate(&self, k: usize, path: &str) -> Result<()> {
        let finite = |v: &[f64], name: &str| -> Result<()> {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(field_err(format!("{path}.{name}[{i}]"), "must be finite"));
            }
            Ok(())
        };
        let length = |v: &[f64], name: &str| -> Result<()> {
            if v.len() != k {
                return Err(field_err(
                    format!("{path}.{name}"),
                    format!("expected {k} entries, found {}", v.len()),
                ));
            }
            Ok(())
        };
        match self {
            ConstraintKind::Linear { coefficients } => {
                length(coefficients, "coefficients")?;
                finite(coefficients, "coefficients")
            }
            ConstraintKind::NormDistance { .. } | ConstraintKind::Entropy => Ok(()),
            ConstraintKind::GroupedKl {
                partition,
                scale,
                references,
            } => {
                if !scale.is_finite() {
                    return Err(field_err(format!("{path}.scale"), "must be finite"));
                }
                if partition.is_empty() {
                    return Err(field_err(format!("{path}.partition"), "must be nonempty"));
                }
                let mut seen = vec![false; k];
                for (j, cell) in partition.iter().enumerate() {
                    if cell.is_empty() {
                        return Err(field_err(
                            format!("{path}.partition[{j}]"),
                            "cell must be nonempty",
                        ));
                    }
                    for &w in cell {
                        if w >= k {
                            return Err(field_err(
                                format!("{path}.partition[{j}]"),
                                format!("state {w} out of range for k = {k}"),
                            ));
                        }
                        if seen[w] {
                            return Err(field_err(
                                format!("{path}.partition[{j}]"),
                                format!("state {w} appears in more than one cell"),
                            ));
                        }
                        seen[w] = true;
                    }
                }
                if let Some(w) = seen.iter().position(|s| !s) {
                    return Err(field_err(
                        format!("{path}.partition"),
                        format!("state {w} is not covered"),
                    ));
                }
                if references.len() != partition.len() {
                    return Err(field_err(
                        format!("{path}.references"),
                        format!(
                            "expected {} entries (one per cell), found {}",
                            partition.len(),
                            references.len()
                        ),
                    ));
                }
                if let Some(j) = references.iter().position(|b| !b.is_finite() || *b <= 0.0) {
                    return Err(field_err(
                        format!("{path}.references[{j}]"),
                        "must be positive",
                    ));
                }
                Ok(())
            }
            ConstraintKind::NegMinWeighted { weights } => {
                length(weights, "weights")?;
                finite(weights, "weights")?;
                if let Some(i) = weights.iter().position(|b| *b <= 0.0) {
                    return Err(field_err(
                        format!("{path}.weights[{i}]"),
                        "must be positive",
                    ));
                }
                Ok(())
            }
            ConstraintKind::L1Bump { center, radius } => {
                length(center, "center")?;
                finite(center, "center")?;
                if !radius.is_finite() || *radius <= 0.0 {
                    return Err(field_err(format!("{path}.radius"), "must be positive"));
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if v.is_empty() {
        0.0
    } else {
        max - min
    }
}
