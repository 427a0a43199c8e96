//! Lattice grids on the simplex and projection onto a contracted simplex.
//!
//! A lattice point with counts `c` (summing to `N`) is handled through its
//! cumulative coordinates `s_j = c_0 + ... + c_{j-1}`, `j = 1..k-1`, which
//! are nondecreasing in `[0, N]`. The region of such `s` is a union of
//! Kuhn simplices of the unit cube lattice, so the Kuhn triangulation
//! restricted to it triangulates the simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Posterior;

pub const DEFAULT_VERTEX_CAP: usize = 5_000_000;
/// Barycentric slack for closed-cell membership.
pub const CELL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub vertex_cap: usize,
    /// Round the denominator up to a multiple of this (so coarser grids
    /// nest inside the finer one).
    pub denominator_multiple: u32,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            vertex_cap: DEFAULT_VERTEX_CAP,
            denominator_multiple: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexGrid {
    k: usize,
    n: u32,
    /// Lattice counts, `k` per vertex.
    counts: Vec<u32>,
    /// Vertex indices, `k` per cell, in Kuhn path order.
    cells: Vec<u32>,
    /// Sorted `(base vertex index) * (k-1)! + permutation rank`.
    cell_keys: Vec<u64>,
    requested_diameter: f64,
    measured_max_diameter: f64,
    binom: Vec<Vec<u64>>,
}

/// Denominator that keeps every cell's l1 diameter at most `delta`.
///
/// A Kuhn edge changes a set of cumulative coordinates by one; each
/// maximal run of that set moves two entries of `q` by `1/N`, and there
/// are at most `floor(k/2)` runs.
pub fn denominator_for(k: usize, delta: f64) -> u32 {
    let runs = (k / 2).max(1) as f64;
    let raw = 2.0 * runs / delta;
    (raw * (1.0 - 1e-12)).ceil().max(1.0) as u32
}

/// `C(N + k - 1, k - 1)`, saturating.
pub fn vertex_count(k: usize, n: u32) -> u128 {
    linalg::binomial(n as u128 + k as u128 - 1, k as u128 - 1)
}

/// Grid with cells of l1 diameter at most `delta`.
pub fn build_grid(k: usize, delta: f64) -> Result<SimplexGrid> {
    build_grid_with(k, delta, GridOptions::default())
}

pub fn build_grid_with(k: usize, delta: f64, opts: GridOptions) -> Result<SimplexGrid> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cell diameter must be positive, got {delta}"
        )));
    }
    let mut n = denominator_for(k, delta);
    let mult = opts.denominator_multiple.max(1);
    n = n.div_ceil(mult) * mult;
    let mut g = SimplexGrid::with_denominator(k, n, opts.vertex_cap)?;
    g.requested_diameter = delta;
    if g.measured_max_diameter > delta * (1.0 + 1e-9) {
        return Err(Error::Numeric(format!(
            "cell diameter {} exceeds the requested {delta}",
            g.measured_max_diameter
        )));
    }
    Ok(g)
}

impl SimplexGrid {
    /// Grid with denominator `n` (vertex coordinates in `{0, 1/n, ..., 1}`).
    pub fn with_denominator(k: usize, n: u32, vertex_cap: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument("grid needs k >= 2".into()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument(
                "denominator must be positive".into(),
            ));
        }
        let count = vertex_count(k, n);
        if count > vertex_cap as u128 {
            return Err(Error::GridTooLarge {
                vertices: count,
                cap: vertex_cap,
            });
        }
        let d = k - 1;
        let top = n as usize + d;
        let binom: Vec<Vec<u64>> = (0..=d)
            .map(|i| {
                (0..=top)
                    .map(|t| linalg::binomial(t as u128, i as u128).min(u64::MAX as u128) as u64)
                    .collect()
            })
            .collect();
        let mut g = Self {
            k,
            n,
            counts: vec![0; count as usize * k],
            cells: Vec::new(),
            cell_keys: Vec::new(),
            requested_diameter: f64::INFINITY,
            measured_max_diameter: 0.0,
            binom,
        };
        let mut s = vec![0u32; d];
        loop {
            let idx = g.rank_cumulative(&s);
            let c = cumulative_to_counts(&s, n);
            g.counts[idx * k..(idx + 1) * k].copy_from_slice(&c);
            if !next_nondecreasing(&mut s, n) {
                break;
            }
        }
        g.build_cells();
        Ok(g)
    }

    fn build_cells(&mut self) {
        let d = self.k - 1;
        let n = self.n;
        let perms = permutations(d);
        let nperm = perms.len() as u64;
        let mut diam_by_perm = vec![None; perms.len()];
        let mut tagged: Vec<(u64, Vec<u32>)> = Vec::new();
        let mut b = vec![0u32; d];
        let mut v = vec![0u32; d];
        loop {
            let base_idx = self.rank_cumulative(&b) as u64;
            for (pi, perm) in perms.iter().enumerate() {
                v.copy_from_slice(&b);
                let mut ids = Vec::with_capacity(self.k);
                ids.push(base_idx as u32);
                let mut ok = true;
                for &axis in perm {
                    v[axis] += 1;
                    if !is_nondecreasing(&v) {
                        ok = false;
                        break;
                    }
                    ids.push(self.rank_cumulative(&v) as u32);
                }
                if ok {
                    if diam_by_perm[pi].is_none() {
                        diam_by_perm[pi] = Some(path_diameter(perm, d));
                    }
                    tagged.push((base_idx * nperm + pi as u64, ids));
                }
            }
            if !next_nondecreasing(&mut b, n - 1) {
                break;
            }
        }
        tagged.sort_unstable_by_key(|(key, _)| *key);
        self.cell_keys = tagged.iter().map(|(key, _)| *key).collect();
        self.cells = tagged.into_iter().flat_map(|(_, ids)| ids).collect();
        let runs = diam_by_perm.iter().flatten().cloned().max().unwrap_or(0);
        self.measured_max_diameter = 2.0 * runs as f64 / n as f64;
    }

    fn rank_cumulative(&self, s: &[u32]) -> usize {
        s.iter()
            .enumerate()
            .map(|(i, &x)| self.binom[i + 1][x as usize + i] as usize)
            .sum()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn denominator(&self) -> u32 {
        self.n
    }

    pub fn num_vertices(&self) -> usize {
        self.counts.len() / self.k
    }

    pub fn num_cells(&self) -> usize {
        self.cell_keys.len()
    }

    pub fn measured_max_diameter(&self) -> f64 {
        self.measured_max_diameter
    }

    pub fn requested_diameter(&self) -> f64 {
        self.requested_diameter
    }

    /// Lattice counts of vertex `i` (its coordinates times `N`).
    pub fn vertex_counts(&self, i: usize) -> &[u32] {
        &self.counts[i * self.k..(i + 1) * self.k]
    }

    pub fn vertex_coords(&self, i: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.vertex_counts(i)
            .iter()
            .map(|&c| c as f64 / n)
            .collect()
    }

    pub fn vertex(&self, i: usize) -> Posterior {
        Posterior::from_vec_unchecked(self.vertex_coords(i))
    }

    pub fn vertices(&self) -> impl Iterator<Item = Posterior> + '_ {
        (0..self.num_vertices()).map(|i| self.vertex(i))
    }

    /// Index of the vertex with the given lattice counts.
    pub fn vertex_index(&self, counts: &[u32]) -> Option<usize> {
        if counts.len() != self.k || counts.iter().map(|&c| c as u64).sum::<u64>() != self.n as u64
        {
            return None;
        }
        let mut s = Vec::with_capacity(self.k - 1);
        let mut acc = 0;
        for &c in &counts[..self.k - 1] {
            acc += c;
            s.push(acc);
        }
        Some(self.rank_cumulative(&s))
    }

    pub fn cell(&self, c: usize) -> &[u32] {
        &self.cells[c * self.k..(c + 1) * self.k]
    }

    /// Volume of cell `c` in reduced coordinates (first `k-1` entries).
    pub fn cell_volume(&self, c: usize) -> f64 {
        let ids = self.cell(c);
        let v0 = self.vertex_coords(ids[0] as usize);
        let rows: Vec<Vec<f64>> = ids[1..]
            .iter()
            .map(|&i| {
                let v = self.vertex_coords(i as usize);
                (0..self.k - 1).map(|j| v[j] - v0[j]).collect()
            })
            .collect();
        let fact: f64 = (1..self.k).map(|i| i as f64).product();
        linalg::det(&rows).abs() / fact
    }

    fn cumulative(&self, q: &[f64]) -> Vec<f64> {
        let n = self.n as f64;
        let mut acc = 0.0;
        q[..self.k - 1]
            .iter()
            .map(|x| {
                acc += x;
                acc * n
            })
            .collect()
    }

    fn cell_index(&self, base: &[u32], perm_rank: usize) -> Option<usize> {
        if !is_nondecreasing(base) || base.last().is_some_and(|&x| x >= self.n) {
            return None;
        }
        let nperm = factorial(self.k - 1) as u64;
        let key = self.rank_cumulative(base) as u64 * nperm + perm_rank as u64;
        self.cell_keys.binary_search(&key).ok()
    }

    /// Every cell whose closure contains `q` (barycentric slack
    /// [`CELL_TOL`]).
    pub fn cells_containing(&self, q: &[f64]) -> Vec<usize> {
        let d = self.k - 1;
        let s = self.cumulative(q);
        let base: Vec<i64> = s
            .iter()
            .map(|&x| (x.floor() as i64).clamp(0, self.n as i64 - 1))
            .collect();
        let perms = permutations(d);
        let mut out = Vec::new();
        let mut offset = vec![-1i64; d];
        let mut b = vec![0u32; d];
        let mut f = vec![0.0; d];
        'offsets: loop {
            let mut valid = true;
            for j in 0..d {
                let bj = base[j] + offset[j];
                if bj < 0 || bj >= self.n as i64 {
                    valid = false;
                    break;
                }
                b[j] = bj as u32;
                f[j] = s[j] - bj as f64;
            }
            if valid {
                for (pi, perm) in perms.iter().enumerate() {
                    if barycentric_ok(&f, perm) {
                        if let Some(c) = self.cell_index(&b, pi) {
                            out.push(c);
                        }
                    }
                }
            }
            for o in offset.iter_mut() {
                *o += 1;
                if *o <= 1 {
                    continue 'offsets;
                }
                *o = -1;
            }
            break;
        }
        out.sort_unstable();
        out
    }

    /// One cell containing `q`, if any.
    pub fn locate(&self, q: &[f64]) -> Option<usize> {
        let d = self.k - 1;
        let s = self.cumulative(q);
        let mut b = vec![0u32; d];
        let mut f = vec![0.0; d];
        for j in 0..d {
            let bj = (s[j].floor() as i64).clamp(0, self.n as i64 - 1);
            b[j] = bj as u32;
            f[j] = s[j] - bj as f64;
        }
        // Largest fractional part moves first; ties go to the larger axis
        // so equal bases stay ordered.
        let mut perm: Vec<usize> = (0..d).collect();
        perm.sort_by(|&x, &y| f[y].total_cmp(&f[x]).then(y.cmp(&x)));
        let c = self.cell_index(&b, permutation_rank(&perm));
        match c {
            Some(c) if barycentric_ok(&f, &perm) => Some(c),
            _ => self.cells_containing(q).first().copied(),
        }
    }
}

fn barycentric_ok(f: &[f64], perm: &[usize]) -> bool {
    let d = perm.len();
    if 1.0 - f[perm[0]] < -CELL_TOL {
        return false;
    }
    for t in 0..d {
        let next = if t + 1 < d { f[perm[t + 1]] } else { 0.0 };
        if f[perm[t]] - next < -CELL_TOL {
            return false;
        }
    }
    true
}

fn cumulative_to_counts(s: &[u32], n: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(s.len() + 1);
    let mut prev = 0;
    for &x in s {
        out.push(x - prev);
        prev = x;
    }
    out.push(n - prev);
    out
}

fn is_nondecreasing(v: &[u32]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

/// Advances `s` to the next nondecreasing sequence with entries in
/// `[0, max]` (odometer order). Returns `false` after the last one.
fn next_nondecreasing(s: &mut [u32], max: u32) -> bool {
    let d = s.len();
    for i in (0..d).rev() {
        if s[i] < max {
            s[i] += 1;
            for j in i + 1..d {
                s[j] = s[i];
            }
            return true;
        }
    }
    false
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// All permutations of `0..d` in lexicographic order.
fn permutations(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(factorial(d));
    let mut p: Vec<usize> = (0..d).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (1..d).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..d)
            .rev()
            .find(|&j| p[j] > p[i - 1])
            .expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

/// Lexicographic rank of a permutation of `0..d`.
fn permutation_rank(p: &[usize]) -> usize {
    let d = p.len();
    let mut rank = 0;
    for i in 0..d {
        let smaller = p[i + 1..].iter().filter(|&&x| x < p[i]).count();
        rank += smaller * factorial(d - 1 - i);
    }
    rank
}

/// Max number of maximal runs among the axis sets changed along a Kuhn
/// path; the l1 diameter is `2 * runs / N`.
fn path_diameter(perm: &[usize], d: usize) -> usize {
    let mut best = 0;
    for i in 0..perm.len() {
        let mut member = vec![false; d];
        for j in i..perm.len() {
            member[perm[j]] = true;
            let runs = (0..d)
                .filter(|&a| member[a] && (a == 0 || !member[a - 1]))
                .count();
            best = best.max(runs);
        }
    }
    best
}

/// Euclidean projection of `v` onto `{y >= 0, sum y = total}` (sort based).
pub fn project_to_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in u.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - total) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Coefficient of the homothety toward the center: `1 / (1 + eps^2)`.
pub fn contraction_scale(eps: f64) -> f64 {
    1.0 / (1.0 + eps * eps)
}

/// Smallest coordinate on the contracted simplex.
pub fn contraction_floor(k: usize, eps: f64) -> f64 {
    let e2 = eps * eps;
    e2 / (1.0 + e2) / k as f64
}

/// Projection onto `{x : sum x = 1, x >= floor}`.
pub fn project_to_contraction_slice(q: &[f64], eps: f64) -> Vec<f64> {
    let k = q.len();
    let floor = contraction_floor(k, eps);
    if q.iter().all(|&x| x >= floor) {
        return q.to_vec();
    }
    let scale = contraction_scale(eps);
    let shifted: Vec<f64> = q.iter().map(|x| x - floor).collect();
    project_to_simplex(&shifted, scale)
        .into_iter()
        .map(|y| y + floor)
        .collect()
}

/// Euclidean projection onto the contraction of the simplex toward its
/// center with coefficient `1 / (1 + eps^2)`.
pub fn project_to_contraction(q: &Posterior, eps: f64) -> Posterior {
    Posterior::from_vec_unchecked(project_to_contraction_slice(q.as_slice(), eps))
}
