//! Reference optimum by enumerating every basis of the persuasion LP.

use super::{ex_post_feasible, GridStats, SolveMode, SolveReport, MASS_CUTOFF};
use crate::error::{Error, Result};
use crate::geometry::SimplexGrid;
use crate::linalg::{binomial, for_each_combination, row_echelon, solve};
use crate::model::{
    verify_scheme, Mode, Posterior, ProblemInstance, SignalingScheme, PLAUSIBILITY_TOL,
};

pub const ORACLE_POINT_CAP: usize = 25;
pub const ORACLE_COMBINATION_CAP: u128 = 2_000_000;
const ECHELON_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-10;

/// Best valid scheme supported on the vertices of `grid`, with exact
/// (unrelaxed, unsmoothed) constraints.
pub fn oracle_solve(instance: &ProblemInstance, grid: &SimplexGrid) -> Result<SolveReport> {
    if grid.num_vertices() > ORACLE_POINT_CAP {
        return Err(Error::SizeGuard(format!(
            "oracle grid has {} vertices, cap is {ORACLE_POINT_CAP}",
            grid.num_vertices()
        )));
    }
    let mut report = oracle_solve_points(instance, grid.vertices().collect())?;
    report.grid.denominator = grid.denominator();
    report.grid.max_cell_diameter = grid.measured_max_diameter();
    Ok(report)
}

/// Best valid scheme supported on `points`.
///
/// Every basic solution of the equality-form LP is computed by direct
/// elimination; the best feasible one is optimal.
pub fn oracle_solve_points(
    instance: &ProblemInstance,
    points: Vec<Posterior>,
) -> Result<SolveReport> {
    if points.len() > ORACLE_POINT_CAP {
        return Err(Error::SizeGuard(format!(
            "oracle got {} points, cap is {ORACLE_POINT_CAP}",
            points.len()
        )));
    }
    let vertices = points.len();
    let points = ex_post_feasible(instance, points);
    if points.is_empty() {
        return Err(Error::Infeasible(
            "no candidate posterior satisfies the ex post constraints".into(),
        ));
    }
    let k = instance.k();
    let n = points.len();
    let prior = instance.prior().as_slice();
    let ex_ante: Vec<_> = instance
        .constraints()
        .iter()
        .filter(|c| c.mode == Mode::ExAnte)
        .collect();
    let slacks = ex_ante.len();
    let cols = n + slacks;

    // Rows: k - 1 coordinates, normalization, one per ex ante constraint
    // (with its slack column). Last entry is the right-hand side.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k + slacks);
    for w in 0..k - 1 {
        let mut r: Vec<f64> = points.iter().map(|q| q[w]).collect();
        r.extend(std::iter::repeat_n(0.0, slacks));
        r.push(prior[w]);
        rows.push(r);
    }
    let mut r = vec![1.0; n];
    r.extend(std::iter::repeat_n(0.0, slacks));
    r.push(1.0);
    rows.push(r);
    for (j, c) in ex_ante.iter().enumerate() {
        let mut r: Vec<f64> = points.iter().map(|q| c.eval(q.as_slice(), prior)).collect();
        r.extend((0..slacks).map(|i| if i == j { 1.0 } else { 0.0 }));
        r.push(c.bound);
        rows.push(r);
    }
    let reduced = row_echelon(rows, ECHELON_TOL);
    if reduced
        .iter()
        .any(|r| r[..cols].iter().all(|v| v.abs() <= ECHELON_TOL))
    {
        return Err(Error::Infeasible(
            "the plausibility equations are inconsistent".into(),
        ));
    }
    let rank = reduced.len();
    let combos = binomial(cols as u128, rank as u128);
    if combos > ORACLE_COMBINATION_CAP {
        return Err(Error::SizeGuard(format!(
            "{combos} candidate bases exceed the cap of {ORACLE_COMBINATION_CAP}"
        )));
    }
    let objective: Vec<f64> = points
        .iter()
        .map(|q| instance.utility().eval(q.as_slice()))
        .collect::<Result<_>>()?;
    let rhs: Vec<f64> = reduced.iter().map(|r| r[cols]).collect();

    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    for_each_combination(cols, rank, |basis| {
        let a: Vec<Vec<f64>> = reduced
            .iter()
            .map(|r| basis.iter().map(|&c| r[c]).collect())
            .collect();
        let Some(x) = solve(&a, &rhs) else {
            return true;
        };
        if x.iter().any(|&v| v < -FEAS_TOL) {
            return true;
        }
        let value: f64 = basis
            .iter()
            .zip(&x)
            .filter(|(&c, _)| c < n)
            .map(|(&c, &v)| objective[c] * v)
            .sum();
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            let masses = basis
                .iter()
                .zip(&x)
                .filter(|(&c, _)| c < n)
                .map(|(&c, &v)| (c, v))
                .collect();
            best = Some((value, masses));
        }
        true
    });
    let Some((lp_value, masses)) = best else {
        return Err(Error::Infeasible("no basic feasible solution".into()));
    };
    let mut support = Vec::new();
    let mut probs = Vec::new();
    for (c, v) in masses {
        if v > MASS_CUTOFF {
            support.push(points[c].clone());
            probs.push(v);
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let scheme = SignalingScheme::new(support, probs)?;
    let verified = verify_scheme(instance, &scheme, PLAUSIBILITY_TOL)?;
    Ok(SolveReport {
        value: verified.utility,
        lp_value,
        constraints: verified.constraints,
        plausibility_deviation: verified.plausibility_deviation,
        scheme,
        grid: GridStats {
            denominator: 0,
            vertices,
            candidates: n,
            max_cell_diameter: 0.0,
        },
        mode: SolveMode::Oracle,
        eps: 0.0,
        lipschitz_bound: 0.0,
    })
}
