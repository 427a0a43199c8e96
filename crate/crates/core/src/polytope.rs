//! Convex polytopes inside the simplex, in reduced coordinates.
//!
//! A posterior `q` over `k` states is represented by its first `d = k - 1`
//! entries; the last entry is implied.

use crate::error::{Error, Result};
use crate::linalg::{self, dot, for_each_combination};
use crate::lp::{solve_lp, LinearProgram, LpStatus};

const SIDE_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-10;

pub(crate) fn reduce(q: &[f64]) -> Vec<f64> {
    q[..q.len() - 1].to_vec()
}

pub(crate) fn lift(y: &[f64]) -> Vec<f64> {
    let mut q = y.to_vec();
    q.push(1.0 - y.iter().sum::<f64>());
    q
}

/// `normals[i] . y <= offsets[i]`, with unit normals.
#[derive(Clone, Debug, Default)]
pub(crate) struct Halfspaces {
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl Halfspaces {
    pub fn push(&mut self, normal: Vec<f64>, offset: f64) {
        let dup = self
            .normals
            .iter()
            .zip(&self.offsets)
            .any(|(n, o)| (o - offset).abs() <= SIDE_TOL && linalg_close(n, &normal, SIDE_TOL));
        if !dup {
            self.normals.push(normal);
            self.offsets.push(offset);
        }
    }

    pub fn extend(&mut self, other: &Halfspaces) {
        for (n, o) in other.normals.iter().zip(&other.offsets) {
            self.push(n.clone(), *o);
        }
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.normals
            .iter()
            .zip(&self.offsets)
            .all(|(n, o)| dot(n, y) <= o + tol)
    }

    /// Vertices of the bounded region, found by intersecting every `d`-subset
    /// of the bounding hyperplanes.
    pub fn vertices(&self, d: usize) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for_each_combination(self.normals.len(), d, |idx| {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| self.normals[i].clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| self.offsets[i]).collect();
            if let Some(y) = linalg::solve(&a, &b) {
                if self.contains(&y, SIDE_TOL)
                    && !out.iter().any(|v| linalg_close(v, &y, DEDUP_TOL))
                {
                    out.push(y);
                }
            }
            true
        });
        out
    }
}

fn linalg_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[derive(Clone, Debug)]
pub(crate) struct Polytope {
    pub vertices: Vec<Vec<f64>>,
    pub affine_dim: usize,
    /// Present when the polytope is full-dimensional.
    pub halfspaces: Option<Halfspaces>,
}

impl Polytope {
    /// The convex hull of the given posteriors (full coordinates).
    pub fn from_posteriors(points: &[Vec<f64>]) -> Self {
        let reduced: Vec<Vec<f64>> = points.iter().map(|p| reduce(p)).collect();
        Self::from_reduced(reduced)
    }

    pub fn from_reduced(points: Vec<Vec<f64>>) -> Self {
        let d = points.first().map_or(0, |p| p.len());
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        for p in points {
            if !vertices.iter().any(|v| linalg_close(v, &p, 1e-12)) {
                vertices.push(p);
            }
        }
        let affine_dim = affine_dim(&vertices);
        let halfspaces = (affine_dim == d && d > 0).then(|| facets(&vertices, d));
        Self {
            vertices,
            affine_dim,
            halfspaces,
        }
    }

    pub fn dim(&self) -> usize {
        self.vertices.first().map_or(0, |v| v.len())
    }

    pub fn is_full(&self) -> bool {
        self.halfspaces.is_some()
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> Result<bool> {
        if let Some(h) = &self.halfspaces {
            return Ok(h.contains(y, tol));
        }
        if self.affine_dim == 0 {
            return Ok(linalg_close(&self.vertices[0], y, tol));
        }
        hull_contains(&self.vertices, y, tol)
    }

    /// `d`-dimensional volume (zero unless full-dimensional).
    pub fn volume(&self) -> f64 {
        if self.is_full() {
            volume_of(&self.vertices, self.dim())
        } else {
            0.0
        }
    }
}

pub(crate) fn affine_dim(vertices: &[Vec<f64>]) -> usize {
    if vertices.len() <= 1 {
        return 0;
    }
    let base = &vertices[0];
    let diffs: Vec<Vec<f64>> = vertices[1..]
        .iter()
        .map(|v| v.iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    linalg::rank(&diffs, 1e-10)
}

/// Facet halfspaces of a full-dimensional point set in `R^d`.
pub(crate) fn facets(vertices: &[Vec<f64>], d: usize) -> Halfspaces {
    let mut hs = Halfspaces::default();
    if d == 1 {
        let max = vertices
            .iter()
            .map(|v| v[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let min = vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
        hs.push(vec![1.0], max);
        hs.push(vec![-1.0], -min);
        return hs;
    }
    for_each_combination(vertices.len(), d, |idx| {
        let v0 = &vertices[idx[0]];
        let diffs: Vec<Vec<f64>> = idx[1..]
            .iter()
            .map(|&i| vertices[i].iter().zip(v0).map(|(a, b)| a - b).collect())
            .collect();
        let Some(n) = linalg::normal_vector(&diffs, d) else {
            return true;
        };
        let o = dot(&n, v0);
        let sides: Vec<f64> = vertices.iter().map(|v| dot(&n, v) - o).collect();
        let max = sides.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = sides.iter().cloned().fold(f64::INFINITY, f64::min);
        if max <= SIDE_TOL {
            hs.push(n, o);
        } else if min >= -SIDE_TOL {
            hs.push(n.iter().map(|x| -x).collect(), -o);
        }
        true
    });
    hs
}

/// Volume of the convex hull of a full-dimensional point set, by summing
/// pyramids over the facets.
pub(crate) fn volume_of(vertices: &[Vec<f64>], d: usize) -> f64 {
    if d == 1 {
        let max = vertices
            .iter()
            .map(|v| v[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let min = vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
        return max - min;
    }
    let hs = facets(vertices, d);
    let centroid: Vec<f64> = (0..d)
        .map(|i| vertices.iter().map(|v| v[i]).sum::<f64>() / vertices.len() as f64)
        .collect();
    let mut total = 0.0;
    for (n, o) in hs.normals.iter().zip(&hs.offsets) {
        let on: Vec<&Vec<f64>> = vertices
            .iter()
            .filter(|v| (dot(n, v) - o).abs() <= SIDE_TOL)
            .collect();
        let basis = orthonormal_complement(n);
        let projected: Vec<Vec<f64>> = on
            .iter()
            .map(|v| basis.iter().map(|b| dot(b, v)).collect())
            .collect();
        if affine_dim(&projected) < d - 1 {
            continue;
        }
        let height = o - dot(n, &centroid);
        total += height * volume_of(&projected, d - 1) / d as f64;
    }
    total
}

/// `d - 1` orthonormal vectors spanning the complement of unit vector `n`.
fn orthonormal_complement(n: &[f64]) -> Vec<Vec<f64>> {
    let d = n.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    for i in 0..d {
        if basis.len() == d - 1 {
            break;
        }
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        let proj = dot(&v, n);
        for (x, ni) in v.iter_mut().zip(n) {
            *x -= proj * ni;
        }
        for b in &basis {
            let p = dot(&v, b);
            for (x, bi) in v.iter_mut().zip(b) {
                *x -= p * bi;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Whether `y` is a convex combination of `vertices` (LP feasibility).
pub(crate) fn hull_contains(vertices: &[Vec<f64>], y: &[f64], tol: f64) -> Result<bool> {
    let d = y.len();
    let nv = vertices.len();
    // Variables: weights, then a pair of deviation variables per coordinate;
    // minimize total deviation.
    let mut objective = vec![0.0; nv];
    objective.extend(std::iter::repeat_n(-1.0, 2 * d));
    let mut lp = LinearProgram::new(objective);
    for i in 0..d {
        let mut row: Vec<f64> = vertices.iter().map(|v| v[i]).collect();
        row.extend((0..2 * d).map(|j| {
            if j == 2 * i {
                1.0
            } else if j == 2 * i + 1 {
                -1.0
            } else {
                0.0
            }
        }));
        lp.add_eq(row, y[i]);
    }
    let mut norm = vec![1.0; nv];
    norm.extend(std::iter::repeat_n(0.0, 2 * d));
    lp.add_eq(norm, 1.0);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(-sol.value <= tol),
        _ => Err(Error::Numeric("hull membership LP failed".into())),
    }
}

/// Largest ball radius fitting in the intersection of two halfspace systems
/// (zero or negative when the interiors are disjoint).
pub(crate) fn common_inradius(a: &Halfspaces, b: &Halfspaces) -> Result<f64> {
    let d = a
        .normals
        .first()
        .or(b.normals.first())
        .map_or(0, |n| n.len());
    // Reduced coordinates are nonnegative on the simplex, so the LP's
    // implicit `y >= 0` loses nothing.
    let mut objective = vec![0.0; d];
    objective.push(1.0);
    let mut lp = LinearProgram::new(objective);
    for (n, o) in a
        .normals
        .iter()
        .zip(&a.offsets)
        .chain(b.normals.iter().zip(&b.offsets))
    {
        let mut row = n.clone();
        row.push(1.0);
        lp.add_le(row, *o);
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value),
        LpStatus::Infeasible => Ok(-1.0),
        LpStatus::Unbounded => Err(Error::Numeric("inradius LP unbounded".into())),
    }
}

/// Volume of the reduced standard simplex `{y >= 0, sum y <= 1}`.
pub(crate) fn simplex_volume(d: usize) -> f64 {
    1.0 / (1..=d).map(|i| i as f64).product::<f64>()
}
