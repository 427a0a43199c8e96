//! Small dense linear algebra used by the geometry and LP code. Matrices are
//! row-major `Vec<Vec<f64>>`; sizes are tiny (a handful of rows).

#![allow(clippy::needless_range_loop)]

const PIVOT_TOL: f64 = 1e-13;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when `a` is (numerically) singular.
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    debug_assert_eq!(b.len(), n);
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= PIVOT_TOL * scale {
            return None;
        }
        m.swap(col, piv);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor != 0.0 {
                for c in col..=n {
                    m[row][c] -= factor * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Inverse of a square matrix by Gauss-Jordan elimination.
pub(crate) fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= PIVOT_TOL * scale {
            return None;
        }
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = m[row][col];
                if factor != 0.0 {
                    for c in 0..2 * n {
                        m[row][c] -= factor * m[col][c];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Rank of a matrix (rows of equal length) at relative tolerance `tol`.
pub(crate) fn rank(rows: &[Vec<f64>], tol: f64) -> usize {
    row_echelon(rows.to_vec(), tol).len()
}

/// Row-reduces and returns the nonzero rows of the echelon form.
pub(crate) fn row_echelon(mut m: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    if m.is_empty() {
        return m;
    }
    let cols = m[0].len();
    let mut lead = 0;
    let mut r = 0;
    while r < m.len() && lead < cols {
        let piv = (r..m.len()).max_by(|&i, &j| m[i][lead].abs().total_cmp(&m[j][lead].abs()));
        let piv = match piv {
            Some(p) if m[p][lead].abs() > tol => p,
            _ => {
                lead += 1;
                continue;
            }
        };
        m.swap(r, piv);
        for row in r + 1..m.len() {
            let factor = m[row][lead] / m[r][lead];
            if factor != 0.0 {
                for c in lead..cols {
                    m[row][c] -= factor * m[r][c];
                }
            }
        }
        r += 1;
        lead += 1;
    }
    m.truncate(r);
    m
}

/// A unit vector orthogonal to the `d - 1` given vectors in `R^d`, or `None`
/// when they are linearly dependent.
pub(crate) fn normal_vector(vectors: &[Vec<f64>], d: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(vectors.len() + 1, d);
    if d == 1 {
        return Some(vec![1.0]);
    }
    // Generalized cross product: the i-th component is the signed minor
    // obtained by deleting column i.
    let mut n = vec![0.0; d];
    for (i, slot) in n.iter_mut().enumerate() {
        let minor: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &x)| x)
                    .collect()
            })
            .collect();
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        *slot = sign * det(&minor);
    }
    let norm = n.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-14 {
        return None;
    }
    Some(n.into_iter().map(|v| v / norm).collect())
}

/// Determinant by elimination with partial pivoting.
pub(crate) fn det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let mut m = a.to_vec();
    let mut sign = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap_or(col);
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(col, piv);
            sign = -sign;
        }
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for c in col..n {
                m[row][c] -= factor * m[col][c];
            }
        }
    }
    sign * (0..n).map(|i| m[i][i]).product::<f64>()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Calls `f` with every increasing `r`-subset of `0..n` in lexicographic
/// order. Stops early when `f` returns `false`.
pub(crate) fn for_each_combination<F>(n: usize, r: usize, mut f: F)
where
    F: FnMut(&[usize]) -> bool,
{
    if r > n {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        if !f(&idx) {
            return;
        }
        let mut i = r;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - r {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `n choose r`, saturating.
pub(crate) fn binomial(n: u128, r: u128) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}
