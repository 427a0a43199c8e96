use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::constraint::spread;
use super::posterior::Posterior;
use crate::auction::{self, AuctionSpec};
use crate::error::{field_err, Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::polytope::{self, common_inradius, simplex_volume, Polytope};

/// Points within this distance of a closed piece count as inside it.
pub const PIECE_TOL: f64 = 1e-9;

/// Sender utility as a function of the posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    MaxLinear(MaxLinear),
    WeightedMaxLinear(WeightedMaxLinear),
    PiecewiseConstant(PiecewiseConstant),
    Auction(AuctionSpec),
}

/// The `rank`-th largest of the linear functionals `a_i . q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxLinear {
    pub rank: usize,
    pub functionals: Vec<Vec<f64>>,
}

/// A nonnegative combination of [`MaxLinear`] terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedMaxLinear {
    pub terms: Vec<WeightedTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub weight: f64,
    #[serde(flatten)]
    pub term: MaxLinear,
}

/// Constant on each closed polytope; the maximum applies where pieces meet.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    pub pieces: Vec<Piece>,
    #[serde(skip)]
    geometry: OnceLock<Vec<Polytope>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    /// Posteriors whose convex hull is the piece.
    pub vertices: Vec<Vec<f64>>,
    pub value: f64,
}

impl PartialEq for PiecewiseConstant {
    fn eq(&self, other: &Self) -> bool {
        self.pieces == other.pieces
    }
}

impl MaxLinear {
    pub fn new(rank: usize, functionals: Vec<Vec<f64>>) -> Self {
        Self { rank, functionals }
    }

    /// `u(q) = max_i q[i]`.
    pub fn linf(k: usize) -> Self {
        Self::new(1, (0..k).map(|i| unit(k, i)).collect())
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        let dot = |a: &Vec<f64>| a.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
        if self.rank == 1 {
            return self
                .functionals
                .iter()
                .map(dot)
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let mut vals: Vec<f64> = self.functionals.iter().map(dot).collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        vals[self.rank - 1]
    }

    pub fn lipschitz_l1(&self) -> f64 {
        self.functionals
            .iter()
            .map(|a| spread(a))
            .fold(0.0, f64::max)
    }

    fn validate(&self, k: usize, path: &str) -> Result<()> {
        if self.functionals.is_empty() {
            return Err(field_err(format!("{path}.functionals"), "must be nonempty"));
        }
        if self.rank == 0 || self.rank > self.functionals.len() {
            return Err(field_err(
                format!("{path}.rank"),
                format!("must lie in 1..={}", self.functionals.len()),
            ));
        }
        for (i, a) in self.functionals.iter().enumerate() {
            if a.len() != k {
                return Err(field_err(
                    format!("{path}.functionals[{i}]"),
                    format!("expected {k} coefficients, found {}", a.len()),
                ));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(field_err(
                    format!("{path}.functionals[{i}]"),
                    "must be finite",
                ));
            }
        }
        let nonnegative = self
            .functionals
            .iter()
            .filter(|a| a.iter().all(|&x| x >= 0.0))
            .count();
        if nonnegative >= self.rank {
            return Ok(());
        }
        if self.rank == 1 {
            let min = min_of_max_over_simplex(&self.functionals)?;
            if min >= -PIECE_TOL {
                return Ok(());
            }
            return Err(field_err(
                format!("{path}.functionals"),
                format!("utility takes the negative value {min} on the simplex"),
            ));
        }
        Err(field_err(
            format!("{path}.functionals"),
            format!(
                "need at least {} functionals with nonnegative coefficients",
                self.rank
            ),
        ))
    }
}

/// `min_{q in simplex} max_i a_i . q`, by LP over `(q, t+, t-)`.
fn min_of_max_over_simplex(functionals: &[Vec<f64>]) -> Result<f64> {
    let k = functionals[0].len();
    let mut objective = vec![0.0; k];
    objective.extend([-1.0, 1.0]);
    let mut lp = LinearProgram::new(objective);
    for a in functionals {
        let mut row = a.clone();
        row.extend([-1.0, 1.0]);
        lp.add_le(row, 0.0);
    }
    let mut norm = vec![1.0; k];
    norm.extend([0.0, 0.0]);
    lp.add_eq(norm, 1.0);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(-sol.value),
        _ => Err(Error::Numeric("min-max LP did not solve".into())),
    }
}

impl WeightedMaxLinear {
    pub fn eval(&self, q: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.weight * t.term.eval(q)).sum()
    }

    pub fn lipschitz_l1(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight.abs() * t.term.lipschitz_l1())
            .sum()
    }

    fn validate(&self, k: usize, path: &str) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if !t.weight.is_finite() || t.weight < 0.0 {
                return Err(field_err(
                    format!("{path}.terms[{i}].weight"),
                    "must be nonnegative",
                ));
            }
            t.term.validate(k, &format!("{path}.terms[{i}]"))?;
        }
        Ok(())
    }
}

impl PiecewiseConstant {
    pub fn new(pieces: Vec<Piece>) -> Self {
        Self {
            pieces,
            geometry: OnceLock::new(),
        }
    }

    pub(crate) fn polytopes(&self) -> &[Polytope] {
        self.geometry.get_or_init(|| {
            self.pieces
                .iter()
                .map(|p| Polytope::from_posteriors(&p.vertices))
                .collect()
        })
    }

    pub fn eval(&self, q: &[f64]) -> Result<f64> {
        let y = polytope::reduce(q);
        let mut best: Option<f64> = None;
        for (piece, poly) in self.pieces.iter().zip(self.polytopes()) {
            if best.is_some_and(|b| b >= piece.value) {
                continue;
            }
            if poly.contains(&y, PIECE_TOL)? {
                best = Some(piece.value);
            }
        }
        best.ok_or_else(|| Error::Uncovered { point: q.to_vec() })
    }

    pub fn max_value(&self) -> f64 {
        self.pieces.iter().map(|p| p.value).fold(0.0, f64::max)
    }

    fn validate(&self, k: usize, path: &str) -> Result<()> {
        if self.pieces.is_empty() {
            return Err(field_err(format!("{path}.pieces"), "must be nonempty"));
        }
        for (i, piece) in self.pieces.iter().enumerate() {
            if !piece.value.is_finite() || piece.value < 0.0 {
                return Err(field_err(
                    format!("{path}.pieces[{i}].value"),
                    "must be a nonnegative number",
                ));
            }
            if piece.vertices.is_empty() {
                return Err(field_err(
                    format!("{path}.pieces[{i}].vertices"),
                    "must be nonempty",
                ));
            }
            for (j, v) in piece.vertices.iter().enumerate() {
                if v.len() != k {
                    return Err(field_err(
                        format!("{path}.pieces[{i}].vertices[{j}]"),
                        format!("expected {k} entries, found {}", v.len()),
                    ));
                }
                Posterior::new(v.clone()).map_err(|e| {
                    field_err(format!("{path}.pieces[{i}].vertices[{j}]"), e.to_string())
                })?;
            }
        }
        let polys = self.polytopes();
        let full: Vec<usize> = (0..polys.len()).filter(|&i| polys[i].is_full()).collect();
        for (a, &i) in full.iter().enumerate() {
            for &j in &full[a + 1..] {
                let hi = polys[i].halfspaces.as_ref().expect("full piece");
                let hj = polys[j].halfspaces.as_ref().expect("full piece");
                if common_inradius(hi, hj)? > PIECE_TOL {
                    return Err(field_err(
                        format!("{path}.pieces"),
                        format!("pieces {i} and {j} have overlapping interiors"),
                    ));
                }
            }
        }
        let covered: f64 = full.iter().map(|&i| polys[i].volume()).sum();
        let total = simplex_volume(k - 1);
        if (covered - total).abs() > 1e-9 * total {
            return Err(field_err(
                format!("{path}.pieces"),
                format!("pieces cover volume {covered} of the simplex's {total}"),
            ));
        }
        Ok(())
    }
}

impl UtilitySpec {
    pub fn eval(&self, q: &[f64]) -> Result<f64> {
        match self {
            UtilitySpec::MaxLinear(u) => Ok(u.eval(q)),
            UtilitySpec::WeightedMaxLinear(u) => Ok(u.eval(q)),
            UtilitySpec::PiecewiseConstant(u) => u.eval(q),
            UtilitySpec::Auction(a) => auction::auction_utility(a, q),
        }
    }

    /// l1 Lipschitz constant, when the utility is Lipschitz.
    pub fn lipschitz_l1(&self) -> Option<f64> {
        match self {
            UtilitySpec::MaxLinear(u) => Some(u.lipschitz_l1()),
            UtilitySpec::WeightedMaxLinear(u) => Some(u.lipschitz_l1()),
            UtilitySpec::PiecewiseConstant(_) => None,
            UtilitySpec::Auction(a) => Some(a.lipschitz_l1()),
        }
    }

    pub fn validate(&self, k: usize, path: &str) -> Result<()> {
        match self {
            UtilitySpec::MaxLinear(u) => u.validate(k, path),
            UtilitySpec::WeightedMaxLinear(u) => u.validate(k, path),
            UtilitySpec::PiecewiseConstant(u) => u.validate(k, path),
            UtilitySpec::Auction(a) => a.validate(k, path),
        }
    }
}

fn unit(k: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[i] = 1.0;
    v
}
