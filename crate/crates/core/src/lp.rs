//! Dense two-phase primal simplex.
//!
//! Solves `max c.x` subject to `A_eq x = b_eq`, `A_le x <= b_le`, `x >= 0`.
//! The tableau is kept in full; rows are few (states plus constraints) and
//! columns are grid points.

#![allow(clippy::needless_range_loop)]

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Posterior;

/// Reduced-cost and feasibility tolerance.
pub const LP_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const DEGENERATE_STEP: f64 = 1e-12;
const REFACTOR_EVERY: usize = 100;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_le: Vec<Vec<f64>>,
    pub b_le: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variables; empty unless optimal.
    pub x: Vec<f64>,
    pub value: f64,
    /// Basic columns at the optimum. Indices `>= objective.len()` are slacks
    /// of the `<=` rows in order.
    pub basis: Vec<usize>,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        let value = match status {
            LpStatus::Unbounded => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        Self {
            status,
            x: Vec::new(),
            value,
            basis: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_le.push(row);
        self.b_le.push(rhs);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.a_eq.len() != self.b_eq.len() || self.a_le.len() != self.b_le.len() {
            return Err(Error::InvalidArgument(
                "row count differs from right-hand side length".into(),
            ));
        }
        let rows = self.a_eq.iter().chain(&self.a_le);
        for (i, row) in rows.enumerate() {
            if row.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
        }
        let all = self
            .objective
            .iter()
            .chain(self.a_eq.iter().flatten())
            .chain(self.a_le.iter().flatten())
            .chain(&self.b_eq)
            .chain(&self.b_le);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("LP data contains NaN or inf".into()));
        }
        Ok(())
    }

    /// Plain-text listing of the program, one row per line.
    pub fn dump(&self) -> String {
        fn terms(row: &[f64]) -> String {
            let parts: Vec<String> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| format!("{v} x{j}"))
                .collect();
            if parts.is_empty() {
                "0".into()
            } else {
                parts.join(" + ")
            }
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "vars {} eq {} le {}",
            self.num_vars(),
            self.a_eq.len(),
            self.a_le.len()
        );
        let _ = writeln!(out, "max: {}", terms(&self.objective));
        for (i, (row, b)) in self.a_eq.iter().zip(&self.b_eq).enumerate() {
            let _ = writeln!(out, "eq{i}: {} = {b}", terms(row));
        }
        for (i, (row, b)) in self.a_le.iter().zip(&self.b_le).enumerate() {
            let _ = writeln!(out, "le{i}: {} <= {b}", terms(row));
        }
        out
    }
}

/// Solves the program. Numeric breakdown is reported as `Error::Numeric`,
/// never as infeasibility.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let mut t = Tableau::new(lp);
    if t.m == 0 {
        if lp.objective.iter().any(|&c| c > LP_TOL) {
            return Ok(LpSolution::without_point(LpStatus::Unbounded));
        }
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            x: vec![0.0; t.n],
            value: 0.0,
            basis: Vec::new(),
        });
    }

    if t.art_start < t.w {
        t.set_phase_one_costs();
        t.refactor()?;
        match t.run()? {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                return Err(Error::Numeric("phase one reported unbounded".into()));
            }
        }
        let infeasibility: f64 = (0..t.m)
            .filter(|&r| t.basis[r] >= t.art_start)
            .map(|r| t.rhs(r).max(0.0))
            .sum();
        if infeasibility > LP_TOL * t.rhs_scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible));
        }
        t.drive_out_artificials()?;
    }

    t.phase_two = true;
    t.set_phase_two_costs(&lp.objective);
    t.refactor()?;
    match t.run()? {
        Outcome::Optimal => {}
        Outcome::Unbounded => return Ok(LpSolution::without_point(LpStatus::Unbounded)),
    }
    t.extract(lp)
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    n: usize,
    /// Columns before artificials: structural then slack.
    art_start: usize,
    /// Total columns; row stride is `w + 1` with the right-hand side last.
    w: usize,
    a: Vec<f64>,
    orig: Vec<f64>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    d: Vec<f64>,
    phase_two: bool,
    bland: bool,
    degenerate: usize,
    rhs_scale: f64,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let n_eq = lp.a_eq.len();
        let n_le = lp.a_le.len();
        let m = n_eq + n_le;
        let needs_art: Vec<bool> = lp
            .b_eq
            .iter()
            .map(|_| true)
            .chain(lp.b_le.iter().map(|&b| b < 0.0))
            .collect();
        let n_art = needs_art.iter().filter(|&&x| x).count();
        let art_start = n + n_le;
        let w = art_start + n_art;
        let stride = w + 1;
        let mut orig = vec![0.0; m * stride];
        let mut basis = vec![0; m];
        let mut next_art = art_start;
        for r in 0..m {
            let (row, b, slack) = if r < n_eq {
                (&lp.a_eq[r], lp.b_eq[r], None)
            } else {
                (&lp.a_le[r - n_eq], lp.b_le[r - n_eq], Some(n + r - n_eq))
            };
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let base = r * stride;
            for (j, v) in row.iter().enumerate() {
                orig[base + j] = sign * v;
            }
            if let Some(s) = slack {
                orig[base + s] = sign;
            }
            orig[base + w] = sign * b;
            if needs_art[r] {
                orig[base + next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            } else {
                basis[r] = slack.expect("rows without artificials are slack rows");
            }
        }
        let rhs_scale = lp
            .b_eq
            .iter()
            .chain(&lp.b_le)
            .fold(1.0f64, |acc, b| acc.max(b.abs()));
        Self {
            m,
            n,
            art_start,
            w,
            a: orig.clone(),
            orig,
            basis,
            cost: vec![0.0; w],
            d: vec![0.0; w],
            phase_two: false,
            bland: false,
            degenerate: 0,
            rhs_scale,
        }
    }

    fn stride(&self) -> usize {
        self.w + 1
    }

    fn at(&self, r: usize, j: usize) -> f64 {
        self.a[r * self.stride() + j]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.a[r * self.stride() + self.w]
    }

    fn set_phase_one_costs(&mut self) {
        for (j, c) in self.cost.iter_mut().enumerate() {
            *c = if j >= self.art_start { -1.0 } else { 0.0 };
        }
    }

    fn set_phase_two_costs(&mut self, objective: &[f64]) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        self.cost[..self.n].copy_from_slice(objective);
    }

    fn allowed(&self, j: usize) -> bool {
        !self.phase_two || j < self.art_start
    }

    fn compute_reduced_costs(&mut self) {
        let stride = self.stride();
        self.d.copy_from_slice(&self.cost);
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.a[r * stride..r * stride + self.w];
                for (dj, v) in self.d.iter_mut().zip(row) {
                    *dj -= cb * v;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    /// Rebuilds the tableau as `B^-1 * original` to shed accumulated error.
    fn refactor(&mut self) -> Result<()> {
        let stride = self.stride();
        let bmat: Vec<Vec<f64>> = (0..self.m)
            .map(|r| {
                self.basis
                    .iter()
                    .map(|&j| self.orig[r * stride + j])
                    .collect()
            })
            .collect();
        let inv = linalg::invert(&bmat)
            .ok_or_else(|| Error::Numeric("basis matrix became singular".into()))?;
        for r in 0..self.m {
            let out = &mut self.a[r * stride..(r + 1) * stride];
            out.iter_mut().for_each(|v| *v = 0.0);
            for (s, &coef) in inv[r].iter().enumerate() {
                if coef != 0.0 {
                    let src = &self.orig[s * stride..(s + 1) * stride];
                    for (o, v) in out.iter_mut().zip(src) {
                        *o += coef * v;
                    }
                }
            }
        }
        for (r, &b) in self.basis.iter().enumerate() {
            for s in 0..self.m {
                self.a[s * stride + b] = if s == r { 1.0 } else { 0.0 };
            }
        }
        self.compute_reduced_costs();
        Ok(())
    }

    fn entering(&self) -> Option<usize> {
        if self.bland {
            (0..self.w).find(|&j| self.allowed(j) && self.d[j] > LP_TOL)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.w {
                if self.allowed(j) && self.d[j] > LP_TOL {
                    match best {
                        Some((_, v)) if v >= self.d[j] => {}
                        _ => best = Some((j, self.d[j])),
                    }
                }
            }
            best.map(|(j, _)| j)
        }
    }

    fn leaving(&self, j: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let v = self.at(r, j);
            if v > PIVOT_TOL {
                let ratio = self.rhs(r).max(0.0) / v;
                best = match best {
                    None => Some((r, ratio)),
                    Some((br, bv)) => {
                        let tie = (ratio - bv).abs() <= 1e-12 * bv.abs().max(1.0);
                        if (tie && self.basis[r] < self.basis[br]) || (!tie && ratio < bv) {
                            Some((r, ratio))
                        } else {
                            Some((br, bv))
                        }
                    }
                };
            }
        }
        best
    }

    fn pivot(&mut self, pr: usize, j: usize) {
        let stride = self.stride();
        let p = self.at(pr, j);
        {
            let row = &mut self.a[pr * stride..(pr + 1) * stride];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[j] = 1.0;
        }
        let pivot_row: Vec<f64> = self.a[pr * stride..(pr + 1) * stride].to_vec();
        for r in 0..self.m {
            if r == pr {
                continue;
            }
            let f = self.a[r * stride + j];
            if f != 0.0 {
                let row = &mut self.a[r * stride..(r + 1) * stride];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (dv, pv) in self.d.iter_mut().zip(&pivot_row[..self.w]) {
                *dv -= f * pv;
            }
            self.d[j] = 0.0;
        }
        self.basis[pr] = j;
    }

    fn run(&mut self) -> Result<Outcome> {
        let limit = 50_000 + 20 * (self.m + self.w);
        let mut since_refactor = 0;
        for _ in 0..limit {
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            let j = match self.entering() {
                Some(j) => j,
                None => {
                    if since_refactor == 0 {
                        return Ok(Outcome::Optimal);
                    }
                    self.refactor()?;
                    since_refactor = 0;
                    match self.entering() {
                        Some(j) => j,
                        None => return Ok(Outcome::Optimal),
                    }
                }
            };
            let Some((r, step)) = self.leaving(j) else {
                return Ok(Outcome::Unbounded);
            };
            if step <= DEGENERATE_STEP {
                self.degenerate += 1;
                if self.degenerate > 50 * self.m {
                    self.bland = true;
                }
            }
            self.pivot(r, j);
            since_refactor += 1;
        }
        Err(Error::Numeric(format!(
            "simplex did not terminate within {limit} pivots"
        )))
    }

    /// Pivots basic artificials (at zero level) out of the basis, dropping
    /// rows that turn out to be linear combinations of the others.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let mut r = 0;
        while r < self.m {
            if self.basis[r] < self.art_start {
                r += 1;
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.art_start {
                let v = self.at(r, j).abs();
                if v > LP_TOL && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, _)) => {
                    self.pivot(r, j);
                    r += 1;
                }
                None => self.remove_row(r),
            }
        }
        Ok(())
    }

    fn remove_row(&mut self, r: usize) {
        let stride = self.stride();
        self.a.drain(r * stride..(r + 1) * stride);
        self.orig.drain(r * stride..(r + 1) * stride);
        self.basis.remove(r);
        self.m -= 1;
    }

    fn extract(&self, lp: &LinearProgram) -> Result<LpSolution> {
        let mut x = vec![0.0; self.n];
        for r in 0..self.m {
            let b = self.basis[r];
            let v = self.rhs(r);
            if v < -LP_TOL * self.rhs_scale {
                return Err(Error::Numeric(format!("basic variable {b} ended at {v}")));
            }
            if b < self.n {
                x[b] = v.max(0.0);
            }
        }
        let tol = 10.0 * LP_TOL * self.rhs_scale;
        for (row, b) in lp.a_eq.iter().zip(&lp.b_eq) {
            let lhs = linalg::dot(row, &x);
            if (lhs - b).abs() > tol {
                return Err(Error::Numeric(format!(
                    "equality residual {} after solve",
                    lhs - b
                )));
            }
        }
        for (row, b) in lp.a_le.iter().zip(&lp.b_le) {
            let lhs = linalg::dot(row, &x);
            if lhs - b > tol {
                return Err(Error::Numeric(format!(
                    "inequality residual {} after solve",
                    lhs - b
                )));
            }
        }
        let mut basis: Vec<usize> = self.basis.clone();
        basis.sort_unstable();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            value: linalg::dot(&lp.objective, &x),
            x,
            basis,
        })
    }
}

/// An ex ante row of the persuasion LP: per-point constraint values and the
/// (relaxed) right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationRow {
    pub values: Vec<f64>,
    pub bound: f64,
}

/// The LP over probability masses on `points`: maximize the expected
/// `objective` subject to the barycenter equalling `prior` and each
/// expectation row staying below its bound.
///
/// Plausibility uses `k - 1` coordinate rows plus the normalization row;
/// the last coordinate row is implied by the other two.
pub fn build_persuasion_lp(
    points: &[Posterior],
    objective: &[f64],
    rows: &[ExpectationRow],
    prior: &Posterior,
) -> Result<LinearProgram> {
    let k = prior.dim();
    if objective.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: objective.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| p.dim() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: p.dim(),
        });
    }
    let mut lp = LinearProgram::new(objective.to_vec());
    for w in 0..k - 1 {
        lp.add_eq(points.iter().map(|p| p[w]).collect(), prior[w]);
    }
    lp.add_eq(vec![1.0; points.len()], 1.0);
    for row in rows {
        if row.values.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: row.values.len(),
            });
        }
        lp.add_le(row.values.clone(), row.bound);
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(obj: &[f64]) -> LinearProgram {
        LinearProgram::new(obj.to_vec())
    }

    #[test]
    fn equality_only() {
        let mut p = lp(&[1.0, 0.0]);
        p.add_eq(vec![1.0, 1.0], 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn with_upper_bound() {
        let mut p = lp(&[1.0, 0.0]);
        p.add_eq(vec![1.0, 1.0], 1.0);
        p.add_le(vec![1.0, 0.0], 0.3);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 0.3).abs() < 1e-12);
    }

    #[test]
    fn contradictory_row() {
        let mut p = lp(&[1.0, 0.0]);
        p.add_eq(vec![0.0, 0.0], 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = lp(&[1.0, 1.0]);
        p.add_le(vec![1.0, -1.0], 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn negative_rhs_and_redundant_rows() {
        // max -x0 - x1 s.t. x0 + x1 >= 2 (as -x0 - x1 <= -2), duplicate equality
        let mut p = lp(&[-1.0, -2.0]);
        p.add_le(vec![-1.0, -1.0], -2.0);
        p.add_eq(vec![1.0, 1.0], 3.0);
        p.add_eq(vec![2.0, 2.0], 6.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value + 3.0).abs() < 1e-12);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dump_lists_rows() {
        let mut p = lp(&[1.0, 0.0]);
        p.add_eq(vec![1.0, 1.0], 1.0);
        p.add_le(vec![1.0, 0.0], 0.3);
        let d = p.dump();
        assert!(d.contains("eq0: 1 x0 + 1 x1 = 1"));
        assert!(d.contains("le0: 1 x0 <= 0.3"));
    }
}
