//! Real dense least squares with rank detection, used to solve the affine
//! constraint system. Householder QR with column pivoting; deterministic
//! pivot choice (largest remaining column norm, lowest index on ties).

/// Row-major real matrix.
#[derive(Debug, Clone)]
pub(crate) struct RealMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RealMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub(crate) struct LeastSquares {
    /// Minimum-norm solution of `min ||A x - b||`.
    pub solution: Vec<f64>,
    /// Orthonormal basis of the nullspace of A.
    pub nullspace: Vec<Vec<f64>>,
    /// Two-norm of the residual `A x - b`.
    pub residual: f64,
}

/// Solve `min ||A x - b||` and extract the nullspace of A.
///
/// `rank_tol` is relative to the largest R diagonal: diagonal entries below
/// `rank_tol * |R[0,0]|` terminate the factorization.
pub(crate) fn solve_least_squares(a: &RealMat, b: &[f64], rank_tol: f64) -> LeastSquares {
    let m = a.rows;
    let n = a.cols;
    assert_eq!(b.len(), m);

    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();

    let kmax = m.min(n);
    let mut rank = 0;
    let mut first_diag = 0.0f64;

    for k in 0..kmax {
        // pivot: column with the largest remaining norm (recomputed exactly)
        let mut best = k;
        let mut best_norm = 0.0f64;
        for j in k..n {
            let nrm: f64 = (k..m).map(|i| r.get(i, j) * r.get(i, j)).sum();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        if best != k {
            for i in 0..m {
                let t = r.get(i, k);
                r.set(i, k, r.get(i, best));
                r.set(i, best, t);
            }
            perm.swap(k, best);
        }

        let col_norm = best_norm.sqrt();
        if k == 0 {
            first_diag = col_norm;
        }
        if col_norm <= rank_tol * first_diag.max(f64::MIN_POSITIVE) {
            break;
        }
        rank = k + 1;

        // Householder reflector annihilating r[k+1.., k]
        let x0 = r.get(k, k);
        let alpha = if x0 >= 0.0 { -col_norm } else { col_norm };
        let mut v: Vec<f64> = (k..m).map(|i| r.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            let beta = 2.0 / vnorm2;
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i - k] * r.get(i, j)).sum();
                let f = beta * dot;
                for i in k..m {
                    let t = r.get(i, j) - f * v[i - k];
                    r.set(i, j, t);
                }
            }
            let dot: f64 = (k..m).map(|i| v[i - k] * qtb[i]).sum();
            let f = beta * dot;
            for i in k..m {
                qtb[i] -= f * v[i - k];
            }
        }
        r.set(k, k, alpha);
        for i in (k + 1)..m {
            r.set(i, k, 0.0);
        }
    }

    // back substitution on the leading rank x rank triangle
    #[allow(clippy::needless_range_loop)]
    let back_solve = |rhs: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; rank];
        for i in (0..rank).rev() {
            let mut acc = rhs[i];
            for j in (i + 1)..rank {
                acc -= r.get(i, j) * y[j];
            }
            y[i] = acc / r.get(i, i);
        }
        y
    };

    let y = back_solve(&qtb[..rank]);
    let mut basic = vec![0.0; n];
    for (j, &val) in y.iter().enumerate() {
        basic[perm[j]] = val;
    }

    // nullspace directions from the free columns, orthonormalized
    let mut nullspace: Vec<Vec<f64>> = Vec::new();
    for f in rank..n {
        let col: Vec<f64> = (0..rank).map(|i| -r.get(i, f)).collect();
        let w = back_solve(&col);
        let mut dir = vec![0.0; n];
        for (j, &val) in w.iter().enumerate() {
            dir[perm[j]] = val;
        }
        dir[perm[f]] = 1.0;
        // modified Gram-Schmidt against accepted directions
        for _ in 0..2 {
            for u in &nullspace {
                let overlap: f64 = u.iter().zip(&dir).map(|(a, b)| a * b).sum();
                for (d, &uk) in dir.iter_mut().zip(u) {
                    *d -= overlap * uk;
                }
            }
        }
        let nrm: f64 = dir.iter().map(|t| t * t).sum::<f64>().sqrt();
        if nrm > 1e-12 {
            for d in &mut dir {
                *d /= nrm;
            }
            nullspace.push(dir);
        }
    }

    // minimum-norm solution: remove the nullspace component of the basic one
    let mut solution = basic;
    for u in &nullspace {
        let overlap: f64 = u.iter().zip(&solution).map(|(a, b)| a * b).sum();
        for (s, &uk) in solution.iter_mut().zip(u) {
            *s -= overlap * uk;
        }
    }

    let ax = a.mul_vec(&solution);
    let residual = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();

    LeastSquares {
        solution,
        nullspace,
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, entries: &[f64]) -> RealMat {
        assert_eq!(entries.len(), rows * cols);
        RealMat {
            rows,
            cols,
            data: entries.to_vec(),
        }
    }

    #[test]
    fn exact_square_system() {
        let a = mat(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let out = solve_least_squares(&a, &[2.0, 8.0], 1e-12);
        assert!((out.solution[0] - 1.0).abs() < 1e-13);
        assert!((out.solution[1] - 2.0).abs() < 1e-13);
        assert!(out.nullspace.is_empty());
        assert!(out.residual < 1e-13);
    }

    #[test]
    fn rank_deficient_nullspace() {
        // x + y = 2 has a one-dimensional nullspace along (1, -1)
        let a = mat(1, 2, &[1.0, 1.0]);
        let out = solve_least_squares(&a, &[2.0], 1e-12);
        assert_eq!(out.nullspace.len(), 1);
        let n = &out.nullspace[0];
        assert!((n[0] + n[1]).abs() < 1e-13);
        assert!((n[0] * n[0] + n[1] * n[1] - 1.0).abs() < 1e-13);
        // min-norm solution is (1, 1)
        assert!((out.solution[0] - 1.0).abs() < 1e-13);
        assert!((out.solution[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn overdetermined_residual() {
        // x = 1 and x = 3 -> least squares x = 2 with residual sqrt(2)
        let a = mat(2, 1, &[1.0, 1.0]);
        let out = solve_least_squares(&a, &[1.0, 3.0], 1e-12);
        assert!((out.solution[0] - 2.0).abs() < 1e-13);
        assert!((out.residual - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn wide_system_min_norm() {
        // one equation, five unknowns: min-norm solution is along the row
        let a = mat(1, 5, &[1.0, 2.0, 0.0, -1.0, 3.0]);
        let out = solve_least_squares(&a, &[15.0], 1e-12);
        assert_eq!(out.nullspace.len(), 4);
        let row_norm2 = 1.0 + 4.0 + 0.0 + 1.0 + 9.0;
        let expect: Vec<f64> = [1.0, 2.0, 0.0, -1.0, 3.0]
            .iter()
            .map(|v| v * 15.0 / row_norm2)
            .collect();
        for (got, want) in out.solution.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12);
        }
        // nullspace orthonormal and orthogonal to the row
        for u in &out.nullspace {
            let dot: f64 = u
                .iter()
                .zip([1.0, 2.0, 0.0, -1.0, 3.0].iter())
                .map(|(a, b)| a * b)
                .sum();
            assert!(dot.abs() < 1e-12);
        }
    }
}
