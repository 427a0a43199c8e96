//! Grid-LP solvers, ex ante to ex post conversion and a brute-force oracle.

mod convert;
mod oracle;

pub use convert::{
    convert_traced, ex_ante_to_ex_post, ConversionTrace, ExtremePairs, MirrorPairs, PairSelector,
    PoolStep, CONVERT_TOL,
};
pub use oracle::{oracle_solve, oracle_solve_points, ORACLE_COMBINATION_CAP, ORACLE_POINT_CAP};

use serde::{Deserialize, Serialize};

use crate::constraints::{smooth_constraint, SmoothedConstraint};
use crate::error::{Error, Result};
use crate::geometry::GridOptions;
use crate::lp::{build_persuasion_lp, solve_lp, ExpectationRow, LinearProgram, LpStatus};
use crate::model::{
    verify_scheme, ConstraintReport, ConstraintSpec, Mode, Posterior, ProblemInstance,
    SignalingScheme, PLAUSIBILITY_TOL,
};
use crate::objectives::{build_upper_approx_with, GriddedUtility};

/// LP masses at or below this are dropped from returned schemes.
pub const MASS_CUTOFF: f64 = 1e-12;
/// Slack allowed when filtering candidates by ex post constraints.
pub const EX_POST_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    BiCriteria,
    SingleCriteria,
    /// Every constraint is ex post; the LP has no expectation rows.
    ExPostRestricted,
    Oracle,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub grid: GridOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    /// Lattice denominator, 0 when no lattice was used.
    pub denominator: u32,
    pub vertices: usize,
    /// Points offered to the LP after ex post filtering.
    pub candidates: usize,
    pub max_cell_diameter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: SignalingScheme,
    /// Expected Sender utility of `scheme`.
    pub value: f64,
    pub lp_value: f64,
    pub constraints: Vec<ConstraintReport>,
    pub plausibility_deviation: f64,
    pub grid: GridStats,
    pub mode: SolveMode,
    pub eps: f64,
    /// Largest Lipschitz constant among the smoothed ex ante constraints.
    pub lipschitz_bound: f64,
}

impl SolveReport {
    pub fn max_violation(&self) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation)
            .fold(0.0, f64::max)
    }
}

fn mode_of(instance: &ProblemInstance) -> SolveMode {
    if instance
        .constraints()
        .iter()
        .all(|c| c.mode == Mode::ExPost)
    {
        SolveMode::ExPostRestricted
    } else {
        SolveMode::BiCriteria
    }
}

/// Additively `eps`-optimal scheme violating each ex ante constraint by at
/// most `eps`. Ex post constraints are enforced exactly on the support.
pub fn bi_criteria_solve(instance: &ProblemInstance, eps: f64) -> Result<SolveReport> {
    bi_criteria_solve_with(instance, eps, &SolveOptions::default())
}

pub fn bi_criteria_solve_with(
    instance: &ProblemInstance,
    eps: f64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let prep = prepare(instance, eps, opts)?;
    let stats = GridStats {
        denominator: prep.gridded.grid().denominator(),
        vertices: prep.gridded.grid().num_vertices(),
        candidates: prep.points.len(),
        max_cell_diameter: prep.gridded.grid().measured_max_diameter(),
    };
    let report = solve_smoothed(instance, prep.points, &prep.smoothed, eps / 2.0)?;
    Ok(SolveReport {
        grid: stats,
        lipschitz_bound: prep.lipschitz_bound,
        mode: mode_of(instance),
        eps,
        ..report
    })
}

/// Runs the LP over a caller-supplied candidate set, with every ex ante
/// row relaxed to `E[g] <= c + relax` where `g` is the constraint smoothed at
/// `relax` (exact for Lipschitz kinds).
pub fn solve_on_points(
    instance: &ProblemInstance,
    points: Vec<Posterior>,
    relax: f64,
) -> Result<SolveReport> {
    let smoothed = if relax > 0.0 {
        smooth_ex_ante(instance, relax)?
    } else {
        exact_ex_ante(instance)?
    };
    let m = smoothed
        .iter()
        .map(|g| g.lipschitz_constant)
        .fold(0.0, f64::max);
    let vertices = points.len();
    let points = ex_post_feasible(instance, points);
    let candidates = points.len();
    let report = solve_smoothed(instance, points, &smoothed, relax)?;
    Ok(SolveReport {
        grid: GridStats {
            denominator: 0,
            vertices,
            candidates,
            max_cell_diameter: 0.0,
        },
        lipschitz_bound: m,
        mode: mode_of(instance),
        eps: 2.0 * relax,
        ..report
    })
}

/// Exact feasibility at `eps` accuracy, given that some scheme satisfies
/// every ex ante constraint with slack at least `slater_margin`.
pub fn single_criteria_solve(
    instance: &ProblemInstance,
    eps: f64,
    slater_margin: f64,
) -> Result<SolveReport> {
    single_criteria_solve_with(instance, eps, slater_margin, &SolveOptions::default())
}

pub fn single_criteria_solve_with(
    instance: &ProblemInstance,
    eps: f64,
    slater_margin: f64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    check_eps(eps)?;
    if !(slater_margin.is_finite() && slater_margin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Slater margin must be positive, got {slater_margin}"
        )));
    }
    if eps > 2.0 * slater_margin {
        return Err(Error::InvalidArgument(format!(
            "eps = {eps} exceeds twice the Slater margin {slater_margin}"
        )));
    }
    let strengthened: Vec<ConstraintSpec> = instance
        .constraints()
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if c.mode == Mode::ExAnte {
                c.bound -= eps / 2.0;
            }
            c
        })
        .collect();
    let inner = instance.with_constraints(strengthened)?;
    let report = match bi_criteria_solve_with(&inner, eps / 2.0, opts) {
        Err(Error::Infeasible(_)) => {
            return Err(Error::SlaterMarginTooSmall {
                eps,
                margin: slater_margin,
            })
        }
        other => other?,
    };
    let verified = verify_scheme(instance, &report.scheme, PLAUSIBILITY_TOL)?;
    Ok(SolveReport {
        constraints: verified.constraints,
        mode: SolveMode::SingleCriteria,
        eps,
        ..report
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )))
    }
}

fn smooth_ex_ante(instance: &ProblemInstance, eps: f64) -> Result<Vec<SmoothedConstraint>> {
    instance
        .constraints()
        .iter()
        .filter(|c| c.mode == Mode::ExAnte)
        .map(|c| smooth_constraint(c, instance.k(), eps))
        .collect()
}

fn exact_ex_ante(instance: &ProblemInstance) -> Result<Vec<SmoothedConstraint>> {
    Ok(instance
        .constraints()
        .iter()
        .filter(|c| c.mode == Mode::ExAnte)
        .map(|c| SmoothedConstraint {
            source: c.clone(),
            eps: 0.0,
            contraction: None,
            lipschitz_constant: c.kind.lipschitz_l1().unwrap_or(f64::INFINITY),
            drift_bound: 0.0,
        })
        .collect())
}

/// Points satisfying every ex post constraint of `instance` up to
/// [`EX_POST_TOL`].
pub fn ex_post_feasible(instance: &ProblemInstance, points: Vec<Posterior>) -> Vec<Posterior> {
    let prior = instance.prior().as_slice();
    let ex_post: Vec<&ConstraintSpec> = instance
        .constraints()
        .iter()
        .filter(|c| c.mode == Mode::ExPost)
        .collect();
    points
        .into_iter()
        .filter(|q| {
            ex_post
                .iter()
                .all(|c| c.eval(q.as_slice(), prior) <= c.bound + EX_POST_TOL)
        })
        .collect()
}

struct Prepared {
    gridded: GriddedUtility,
    smoothed: Vec<SmoothedConstraint>,
    lipschitz_bound: f64,
    /// Grid vertices, split-region vertices and the prior, filtered to the
    /// ex post feasible region.
    points: Vec<Posterior>,
}

fn prepare(instance: &ProblemInstance, eps: f64, opts: &SolveOptions) -> Result<Prepared> {
    check_eps(eps)?;
    let smoothed = smooth_ex_ante(instance, eps / 2.0)?;
    let lipschitz_bound = smoothed
        .iter()
        .map(|g| g.lipschitz_constant)
        .fold(0.0, f64::max);
    let gridded =
        build_upper_approx_with(instance.utility(), eps / 2.0, lipschitz_bound, opts.grid)?;
    let mut points: Vec<Posterior> = gridded.grid().vertices().collect();
    for v in gridded.region_vertices()? {
        points.push(Posterior::new(v)?);
    }
    points.push(instance.prior().clone());
    Ok(Prepared {
        points: ex_post_feasible(instance, points),
        gridded,
        smoothed,
        lipschitz_bound,
    })
}

fn lp_on(
    instance: &ProblemInstance,
    points: &[Posterior],
    smoothed: &[SmoothedConstraint],
    relax: f64,
) -> Result<LinearProgram> {
    let objective: Vec<f64> = points
        .iter()
        .map(|q| instance.utility().eval(q.as_slice()))
        .collect::<Result<_>>()?;
    let prior = instance.prior();
    let rows: Vec<ExpectationRow> = smoothed
        .iter()
        .map(|g| ExpectationRow {
            values: points
                .iter()
                .map(|q| g.eval(q.as_slice(), prior.as_slice()))
                .collect(),
            bound: g.bound() + relax,
        })
        .collect();
    build_persuasion_lp(points, &objective, &rows, prior)
}

/// Solves the LP over already-filtered `points`. Mode, eps and grid
/// statistics are left for the caller to fill in.
fn solve_smoothed(
    instance: &ProblemInstance,
    points: Vec<Posterior>,
    smoothed: &[SmoothedConstraint],
    relax: f64,
) -> Result<SolveReport> {
    if points.is_empty() {
        return Err(Error::Infeasible(
            "no candidate posterior satisfies the ex post constraints".into(),
        ));
    }
    let lp = lp_on(instance, &points, smoothed, relax)?;
    let (scheme, lp_value) = solve_to_scheme(&lp, &points)?;
    let verified = verify_scheme(instance, &scheme, PLAUSIBILITY_TOL)?;
    Ok(SolveReport {
        value: verified.utility,
        lp_value,
        constraints: verified.constraints,
        plausibility_deviation: verified.plausibility_deviation,
        scheme,
        grid: GridStats {
            denominator: 0,
            vertices: 0,
            candidates: points.len(),
            max_cell_diameter: 0.0,
        },
        mode: SolveMode::BiCriteria,
        eps: 2.0 * relax,
        lipschitz_bound: 0.0,
    })
}

fn solve_to_scheme(lp: &LinearProgram, points: &[Posterior]) -> Result<(SignalingScheme, f64)> {
    let sol = solve_lp(lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible(
                "the relaxed persuasion LP has no feasible point".into(),
            ))
        }
        LpStatus::Unbounded => return Err(Error::Numeric("persuasion LP is unbounded".into())),
    }
    let mut support = Vec::new();
    let mut probs = Vec::new();
    for (q, &x) in points.iter().zip(&sol.x) {
        if x > MASS_CUTOFF {
            support.push(q.clone());
            probs.push(x);
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok((SignalingScheme::new(support, probs)?, sol.value))
}

/// Upper approximation used by [`bi_criteria_solve`] for `instance` at
/// `eps`, exposed for inspection and CSV export.
pub fn gridded_utility(
    instance: &ProblemInstance,
    eps: f64,
    opts: &SolveOptions,
) -> Result<GriddedUtility> {
    prepare(instance, eps, opts).map(|p| p.gridded)
}

/// The LP [`bi_criteria_solve`] would hand to the simplex solver.
pub fn persuasion_lp(
    instance: &ProblemInstance,
    eps: f64,
    opts: &SolveOptions,
) -> Result<LinearProgram> {
    let prep = prepare(instance, eps, opts)?;
    lp_on(instance, &prep.points, &prep.smoothed, eps / 2.0)
}
