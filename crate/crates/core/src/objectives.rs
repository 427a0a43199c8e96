//! Piecewise-constant upper approximations of the Sender utility on a grid.

use std::collections::HashMap;

use crate::auction;
use crate::error::{Error, Result};
use crate::geometry::{build_grid_with, GridOptions, SimplexGrid};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::model::{PiecewiseConstant, UtilitySpec};
use crate::polytope::{self, common_inradius, facets, Halfspaces, Polytope};

const TOUCH_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
enum Source {
    Lipschitz { utility: UtilitySpec, constant: f64 },
    Pieces(PiecewiseConstant),
}

/// The pieces meeting a cell, for cells where more than one does.
#[derive(Clone, Debug)]
struct CellPieces {
    halfspaces: Halfspaces,
    pieces: Vec<usize>,
}

/// Cell-wise constant function `U` with `u <= U <= u + eps`.
#[derive(Clone, Debug)]
pub struct GriddedUtility {
    grid: SimplexGrid,
    cell_values: Vec<f64>,
    vertex_utility: Vec<f64>,
    source: Source,
    eps: f64,
    lipschitz_bound: f64,
    /// Piecewise-constant sources only: cells met by several pieces.
    shared: HashMap<usize, CellPieces>,
}

/// Cell diameter needed for an `eps`-upper approximation when constraints
/// have Lipschitz constant at most `m`.
pub fn grid_diameter(utility: &UtilitySpec, eps: f64, m: f64) -> f64 {
    let base = eps / m.max(1.0);
    match utility.lipschitz_l1() {
        Some(l) if l > 0.0 => base.min(eps / (2.0 * l)),
        _ => base,
    }
}

pub fn build_upper_approx(utility: &UtilitySpec, eps: f64, m: f64) -> Result<GriddedUtility> {
    build_upper_approx_with(utility, eps, m, GridOptions::default())
}

pub fn build_upper_approx_with(
    utility: &UtilitySpec,
    eps: f64,
    m: f64,
    opts: GridOptions,
) -> Result<GriddedUtility> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz bound must be nonnegative, got {m}"
        )));
    }
    let k = utility_dim(utility)?;
    let delta = grid_diameter(utility, eps, m);
    let grid = build_grid_with(k, delta, opts)?;
    GriddedUtility::on_grid(utility, grid, eps, m)
}

fn utility_dim(utility: &UtilitySpec) -> Result<usize> {
    let k = match utility {
        UtilitySpec::MaxLinear(u) => u.functionals.first().map(|a| a.len()),
        UtilitySpec::WeightedMaxLinear(u) => u
            .terms
            .first()
            .and_then(|t| t.term.functionals.first())
            .map(|a| a.len()),
        UtilitySpec::PiecewiseConstant(u) => u
            .pieces
            .first()
            .and_then(|p| p.vertices.first())
            .map(|v| v.len()),
        UtilitySpec::Auction(a) => a.num_states(),
    };
    k.filter(|&k| k >= 2)
        .ok_or_else(|| Error::InvalidArgument("cannot infer the state count of the utility".into()))
}

impl GriddedUtility {
    /// Builds the approximation on a given grid. The sandwich bound holds
    /// when the grid's cells are fine enough for `eps` (see
    /// [`grid_diameter`]).
    pub fn on_grid(utility: &UtilitySpec, grid: SimplexGrid, eps: f64, m: f64) -> Result<Self> {
        let source = match utility {
            UtilitySpec::PiecewiseConstant(p) => Source::Pieces(p.clone()),
            UtilitySpec::Auction(a) => {
                let expanded = auction::to_max_linear(a, grid.k())
                    .map_err(|e| Error::Unsupported(format!("auction utility: {e}")))?;
                let constant = expanded.lipschitz_l1().unwrap_or(0.0);
                Source::Lipschitz {
                    utility: expanded,
                    constant,
                }
            }
            other => Source::Lipschitz {
                utility: other.clone(),
                constant: other.lipschitz_l1().unwrap_or(0.0),
            },
        };
        let mut out = Self {
            vertex_utility: Vec::new(),
            cell_values: Vec::new(),
            grid,
            source,
            eps,
            lipschitz_bound: m,
            shared: HashMap::new(),
        };
        match out.source.clone() {
            Source::Lipschitz { utility, constant } => out.fill_lipschitz(&utility, constant)?,
            Source::Pieces(p) => out.fill_pieces(&p)?,
        }
        Ok(out)
    }

    fn fill_lipschitz(&mut self, utility: &UtilitySpec, constant: f64) -> Result<()> {
        let g = &self.grid;
        self.vertex_utility = (0..g.num_vertices())
            .map(|i| utility.eval(&g.vertex_coords(i)))
            .collect::<Result<_>>()?;
        let slack = constant * g.measured_max_diameter();
        self.cell_values = (0..g.num_cells())
            .map(|c| {
                g.cell(c)
                    .iter()
                    .map(|&v| self.vertex_utility[v as usize])
                    .fold(f64::NEG_INFINITY, f64::max)
                    + slack
            })
            .collect();
        Ok(())
    }

    fn fill_pieces(&mut self, pc: &PiecewiseConstant) -> Result<()> {
        let polys = pc.polytopes();
        let g = &self.grid;
        let d = g.k() - 1;
        self.vertex_utility = (0..g.num_vertices())
            .map(|i| pc.eval(&g.vertex_coords(i)))
            .collect::<Result<_>>()?;
        let boxes: Vec<(Vec<f64>, Vec<f64>)> = polys.iter().map(bounding_box).collect();
        let mut cell_values = Vec::with_capacity(g.num_cells());
        for c in 0..g.num_cells() {
            let verts: Vec<Vec<f64>> = g
                .cell(c)
                .iter()
                .map(|&v| polytope::reduce(&g.vertex_coords(v as usize)))
                .collect();
            let cell_box = bounding_box_of(&verts);
            let hs = facets(&verts, d);
            let mut touching = Vec::new();
            for (i, poly) in polys.iter().enumerate() {
                if !boxes_overlap(&cell_box, &boxes[i]) {
                    continue;
                }
                if meets(poly, &verts, &hs)? {
                    touching.push(i);
                }
            }
            if touching.is_empty() {
                return Err(Error::Numeric(format!("cell {c} meets no utility piece")));
            }
            let value = touching
                .iter()
                .map(|&i| pc.pieces[i].value)
                .fold(f64::NEG_INFINITY, f64::max);
            cell_values.push(value);
            if touching.len() > 1 {
                self.shared.insert(
                    c,
                    CellPieces {
                        halfspaces: hs,
                        pieces: touching,
                    },
                );
            }
        }
        self.cell_values = cell_values;
        Ok(())
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    pub fn cell_values(&self) -> &[f64] {
        &self.cell_values
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// Exact utility at each grid vertex.
    pub fn vertex_utility(&self) -> &[f64] {
        &self.vertex_utility
    }

    /// Largest cell value among cells incident to vertex `i`.
    pub fn vertex_value(&self, i: usize) -> f64 {
        let q = self.grid.vertex_coords(i);
        self.grid
            .cells_containing(&q)
            .into_iter()
            .map(|c| self.cell_values[c])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Guaranteed bound on `U - u`.
    pub fn certified_gap(&self) -> f64 {
        match &self.source {
            Source::Lipschitz { constant, .. } => {
                2.0 * constant * self.grid.measured_max_diameter()
            }
            Source::Pieces(_) => 0.0,
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self.source, Source::Pieces(_))
    }

    /// Upper envelope over the closed cells containing `q`. Cells met by
    /// several utility pieces are split along the piece boundaries first.
    pub fn eval(&self, q: &[f64]) -> Result<f64> {
        let cells = self.grid.cells_containing(q);
        if cells.is_empty() {
            return Err(Error::Uncovered { point: q.to_vec() });
        }
        let Source::Pieces(pc) = &self.source else {
            return Ok(cells
                .iter()
                .map(|&c| self.cell_values[c])
                .fold(f64::NEG_INFINITY, f64::max));
        };
        let y = polytope::reduce(q);
        let polys = pc.polytopes();
        let mut best = f64::NEG_INFINITY;
        for c in cells {
            match self.shared.get(&c) {
                None => best = best.max(self.cell_values[c]),
                Some(shared) => {
                    for &i in &shared.pieces {
                        if pc.pieces[i].value > best && polys[i].contains(&y, TOUCH_TOL)? {
                            best = pc.pieces[i].value;
                        }
                    }
                }
            }
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::Uncovered { point: q.to_vec() })
        }
    }

    /// Vertices of the split regions (cell intersected with piece) in cells
    /// met by several pieces, as full posteriors. Empty for Lipschitz
    /// sources.
    pub fn region_vertices(&self) -> Result<Vec<Vec<f64>>> {
        let Source::Pieces(pc) = &self.source else {
            return Ok(Vec::new());
        };
        let polys = pc.polytopes();
        let d = self.grid.k() - 1;
        let mut out = Vec::new();
        let mut keys: Vec<&usize> = self.shared.keys().collect();
        keys.sort_unstable();
        for c in keys {
            let shared = &self.shared[c];
            for &i in &shared.pieces {
                let poly = &polys[i];
                match &poly.halfspaces {
                    Some(h) => {
                        let mut both = shared.halfspaces.clone();
                        both.extend(h);
                        out.extend(both.vertices(d).iter().map(|y| polytope::lift(y)));
                    }
                    None if poly.affine_dim == 0 => out.push(polytope::lift(&poly.vertices[0])),
                    None => {
                        return Err(Error::Unsupported(
                            "lower-dimensional utility pieces other than points".into(),
                        ))
                    }
                }
            }
        }
        Ok(out)
    }
}

fn bounding_box(p: &Polytope) -> (Vec<f64>, Vec<f64>) {
    bounding_box_of(&p.vertices)
}

fn bounding_box_of(vs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = vs[0].len();
    let lo = (0..d)
        .map(|i| vs.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi = (0..d)
        .map(|i| vs.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    (lo, hi)
}

fn boxes_overlap(a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)) -> bool {
    (0..a.0.len()).all(|i| a.0[i] <= b.1[i] + TOUCH_TOL && b.0[i] <= a.1[i] + TOUCH_TOL)
}

/// Whether the closed piece meets the closed cell.
fn meets(piece: &Polytope, cell_vertices: &[Vec<f64>], cell_hs: &Halfspaces) -> Result<bool> {
    match &piece.halfspaces {
        Some(h) => {
            // A facet of either side with the other entirely beyond it
            // separates them.
            let beyond = |hs: &Halfspaces, pts: &[Vec<f64>]| {
                hs.normals
                    .iter()
                    .zip(&hs.offsets)
                    .any(|(n, o)| pts.iter().all(|p| crate::linalg::dot(n, p) > o + TOUCH_TOL))
            };
            if beyond(h, cell_vertices) || beyond(cell_hs, &piece.vertices) {
                return Ok(false);
            }
            if cell_vertices.iter().all(|v| h.contains(v, TOUCH_TOL)) {
                return Ok(true);
            }
            Ok(common_inradius(cell_hs, h)? >= 0.0)
        }
        None => hull_meets(&piece.vertices, cell_hs),
    }
}

/// Whether some convex combination of `vertices` satisfies `hs`.
fn hull_meets(vertices: &[Vec<f64>], hs: &Halfspaces) -> Result<bool> {
    let nv = vertices.len();
    let mut lp = LinearProgram::new(vec![0.0; nv]);
    for (n, o) in hs.normals.iter().zip(&hs.offsets) {
        lp.add_le(
            vertices.iter().map(|v| crate::linalg::dot(n, v)).collect(),
            o + TOUCH_TOL,
        );
    }
    lp.add_eq(vec![1.0; nv], 1.0);
    Ok(solve_lp(&lp)?.status == LpStatus::Optimal)
}
