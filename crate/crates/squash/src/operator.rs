//! Dense complex operators and the small-matrix linear algebra the solver
//! needs: vectorization, reshuffling, a deterministic Hermitian eigensolver,
//! PSD tests and projection, and Gram-Schmidt orthonormalization.
//!
//! Everything here works on owned dense storage. Problem sizes stay below
//! ~20x20, so no attempt is made at sparsity or blocking.

use num_complex::Complex64;
use thiserror::Error;

/// Tolerance used to decide whether an operator counts as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator is not hermitian (max |H - H^dag| = {0:.3e})")]
    NotHermitian(f64),
    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("bipartite factor dimensions required but not set")]
    MissingFactorDims,
    #[error("empty or zero-length input")]
    EmptyInput,
}

/// Dense complex matrix in row-major storage.
///
/// Square operators may carry `factor_dims = (d_m, d_q)` marking them as
/// bipartite on `M (x) Q'` with the composite row index `p * d_q + i`
/// (`p` on M, `i` on Q'). Rectangular shapes appear as transfer matrices and
/// Kraus operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
    factor_dims: Option<(usize, usize)>,
}

impl Operator {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Operator {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
            factor_dims: None,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for k in 0..dim {
            m.data[k * dim + k] = Complex64::ONE;
        }
        m
    }

    /// Build from nested rows; panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Operator {
            rows: r,
            cols: c,
            data,
            factor_dims: None,
        }
    }

    /// Real diagonal matrix.
    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (k, &v) in entries.iter().enumerate() {
            m.data[k * entries.len() + k] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Rank-1 projector |v><v| (no normalization applied).
    pub fn projector(v: &[Complex64]) -> Self {
        let d = v.len();
        let mut m = Self::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                m.data[r * d + c] = v[r] * v[c].conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Dimension of a square operator; panics on rectangular input.
    pub fn dim(&self) -> usize {
        assert!(self.is_square(), "dim() on a rectangular matrix");
        self.rows
    }

    pub fn factor_dims(&self) -> Option<(usize, usize)> {
        self.factor_dims
    }

    /// Tag a square operator as bipartite with the given factor dimensions.
    pub fn with_factor_dims(mut self, d_m: usize, d_q: usize) -> Self {
        assert_eq!(d_m * d_q, self.rows, "factor dims must multiply to dim");
        assert!(self.is_square());
        self.factor_dims = Some((d_m, d_q));
        self
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Operator {
        let mut out = Operator::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.get(r, c).conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Operator {
        let mut out = Operator::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.get(r, c);
            }
        }
        out
    }

    pub fn conj(&self) -> Operator {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = v.conj();
        }
        out
    }

    pub fn add(&self, other: &Operator) -> Operator {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Operator) -> Operator {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Operator {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn scale_re(&self, s: f64) -> Operator {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn mul(&self, other: &Operator) -> Operator {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Operator::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == Complex64::ZERO {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        let mut out = Operator::zeros(self.rows * other.rows, self.cols * other.cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.get(r1, c1);
                if a == Complex64::ZERO {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out.set(
                            r1 * other.rows + r2,
                            c1 * other.cols + c2,
                            a * other.get(r2, c2),
                        );
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square());
        (0..self.rows).map(|k| self.get(k, k)).sum()
    }

    /// Entrywise max absolute value.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hilbert-Schmidt inner product Tr[A^dag B].
    pub fn frobenius_inner(&self, other: &Operator) -> Complex64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Max-norm deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_defect() < tol
    }

    /// Symmetrized copy (H + H^dag)/2, keeping factor dims.
    pub fn hermitized(&self) -> Operator {
        let mut out = self.add(&self.adjoint()).scale_re(0.5);
        out.factor_dims = self.factor_dims;
        out
    }

    /// Partial trace over the second factor of a bipartite operator.
    pub fn partial_trace_second(&self) -> Result<Operator, OperatorError> {
        let (d_m, d_q) = self.factor_dims.ok_or(OperatorError::MissingFactorDims)?;
        let mut out = Operator::zeros(d_m, d_m);
        for p in 0..d_m {
            for q in 0..d_m {
                let mut acc = Complex64::ZERO;
                for i in 0..d_q {
                    acc += self.get(p * d_q + i, q * d_q + i);
                }
                out.set(p, q, acc);
            }
        }
        Ok(out)
    }
}

/// Column-stacked vectorization of an operator, |O>>.
///
/// Entry `j * rows + i` holds `O[i, j]`, so `<<A|B>> = Tr[A^dag B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorVector {
    pub entries: Vec<Complex64>,
    pub source_dim: usize,
}

impl OperatorVector {
    /// Conjugated dot product `<<self|other>>`.
    pub fn inner(&self, other: &OperatorVector) -> Complex64 {
        assert_eq!(self.entries.len(), other.entries.len());
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Column-stack a square operator into |O>>.
pub fn vectorize(op: &Operator) -> OperatorVector {
    assert!(op.is_square(), "vectorize expects a square operator");
    let d = op.dim();
    let mut entries = vec![Complex64::ZERO; d * d];
    for c in 0..d {
        for r in 0..d {
            entries[c * d + r] = op.get(r, c);
        }
    }
    OperatorVector {
        entries,
        source_dim: d,
    }
}

/// Inverse of [`vectorize`], generalized to rectangular shapes.
///
/// Column-stacking convention: entry `(i, j)` of the result is `v[j * rows + i]`.
pub fn unvectorize(v: &[Complex64], rows: usize, cols: usize) -> Result<Operator, OperatorError> {
    if rows * cols != v.len() {
        return Err(OperatorError::DimensionMismatch(format!(
            "cannot reshape length-{} vector into {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    let mut out = Operator::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out.set(i, j, v[j * rows + i]);
        }
    }
    Ok(out)
}

/// Reshuffle a bipartite operator tau on `M (x) Q'` into its transfer matrix.
///
/// Index rule: `R[(k, k'), (l, l')] = tau[(k, l), (k', l')]` with composite
/// indices `k*d_m + k'` on rows and `l*d_q + l'` on columns, so reshuffling
/// twice is the identity on matched factor dimensions. For a Hermitian Choi
/// operator, `R` maps the column-stacked vector of a Hermitian operator on
/// the target space to the column-stacked image under the adjoint map.
pub fn reshuffle(tau: &Operator) -> Result<Operator, OperatorError> {
    let (d_m, d_q) = tau.factor_dims().ok_or(OperatorError::MissingFactorDims)?;
    let mut out = Operator::zeros(d_m * d_m, d_q * d_q);
    for k in 0..d_m {
        for kp in 0..d_m {
            for l in 0..d_q {
                for lp in 0..d_q {
                    out.set(k * d_m + kp, l * d_q + lp, tau.get(k * d_q + l, kp * d_q + lp));
                }
            }
        }
    }
    Ok(out)
}

/// Unnormalized (or normalized) maximally entangled vector on d (x) d.
pub fn maximally_entangled(d: usize, normalized: bool) -> OperatorVector {
    let mut entries = vec![Complex64::ZERO; d * d];
    let amp = if normalized {
        Complex64::new(1.0 / (d as f64).sqrt(), 0.0)
    } else {
        Complex64::ONE
    };
    for k in 0..d {
        entries[k * d + k] = amp;
    }
    OperatorVector {
        entries,
        source_dim: d,
    }
}

/// Eigendecomposition of a Hermitian operator.
///
/// Eigenvalues sorted ascending; eigenvector k is the k-th column of
/// `eigenvectors`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Operator,
}

impl EigenDecomposition {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        (0..self.eigenvectors.rows())
            .map(|r| self.eigenvectors.get(r, k))
            .collect()
    }

    /// Reassemble sum_k lambda_k |v_k><v_k|.
    pub fn reassemble(&self) -> Operator {
        let d = self.eigenvectors.rows();
        let mut out = Operator::zeros(d, d);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            for r in 0..d {
                for c in 0..d {
                    let term = self.eigenvectors.get(r, k)
                        * self.eigenvectors.get(c, k).conj()
                        * lam;
                    let cur = out.get(r, c);
                    out.set(r, c, cur + term);
                }
            }
        }
        out
    }
}

/// Hermitian eigendecomposition by cyclic Jacobi sweeps.
///
/// Deterministic pivot order (row-cyclic), so repeated runs on the same input
/// produce identical output. Rejects inputs with hermiticity defect above
/// [`HERMITICITY_TOL`].
pub fn hermitian_eig(h: &Operator) -> Result<EigenDecomposition, OperatorError> {
    let defect = h.hermiticity_defect();
    if defect >= HERMITICITY_TOL {
        return Err(OperatorError::NotHermitian(defect));
    }
    let d = h.dim();
    let mut a = h.hermitized();
    let mut w = Operator::identity(d);

    let scale: f64 = a.max_abs().max(1.0);
    let stop = 1e-15 * scale;
    const MAX_SWEEPS: usize = 60;

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off = off.max(a.get(p, q).norm());
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                let b = apq.norm();
                if b <= stop {
                    continue;
                }
                // phase factor: apq = b * e^{i phi}
                let phase = apq / b;
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                // real Jacobi angle on the phase-adjusted 2x2 block
                let tau = (aqq - app) / (2.0 * b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // plane rotation V: V[p][p]=c, V[p][q]=s, V[q][p]=-s*conj(phase),
                // V[q][q]=c*conj(phase); A <- V^dag A V, W <- W V
                let vqp = -phase.conj() * s;
                let vqq = phase.conj() * c;
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, akp * c + akq * vqp);
                    a.set(k, q, akp * s + akq * vqq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, apk * c + aqk * vqp.conj());
                    a.set(q, k, apk * s + aqk * vqq.conj());
                }
                let new_app = app - t * b;
                let new_aqq = aqq + t * b;
                a.set(p, p, Complex64::new(new_app, 0.0));
                a.set(q, q, Complex64::new(new_aqq, 0.0));
                a.set(p, q, Complex64::ZERO);
                a.set(q, p, Complex64::ZERO);
                for k in 0..d {
                    let wkp = w.get(k, p);
                    let wkq = w.get(k, q);
                    w.set(k, p, wkp * c + wkq * vqp);
                    w.set(k, q, wkp * s + wkq * vqq);
                }
            }
        }
    }

    // sort ascending, stable in the original index for ties
    let mut order: Vec<usize> = (0..d).collect();
    let diag: Vec<f64> = (0..d).map(|k| a.get(k, k).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap().then(i.cmp(&j)));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| diag[k]).collect();
    let mut vectors = Operator::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        for r in 0..d {
            vectors.set(r, col, w.get(r, k));
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// PSD test with a relative tolerance on the smallest eigenvalue.
pub fn is_psd(h: &Operator, tol: f64) -> Result<bool, OperatorError> {
    let eig = hermitian_eig(h)?;
    let scale = h.max_abs().max(1.0);
    Ok(eig.min_eigenvalue() >= -tol * scale)
}

/// Nearest PSD operator in Frobenius norm (negative eigenvalues clipped).
pub fn project_psd(h: &Operator) -> Result<Operator, OperatorError> {
    let eig = hermitian_eig(h)?;
    let d = h.dim();
    let mut out = Operator::zeros(d, d);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        for r in 0..d {
            for c in 0..d {
                let term = eig.eigenvectors.get(r, k) * eig.eigenvectors.get(c, k).conj() * lam;
                let cur = out.get(r, c);
                out.set(r, c, cur + term);
            }
        }
    }
    out.factor_dims = h.factor_dims();
    Ok(out)
}

/// Modified Gram-Schmidt with rank detection: vectors whose residual norm
/// falls below `rank_tol` are dropped.
pub fn gram_schmidt(
    vectors: &[Vec<Complex64>],
    rank_tol: f64,
) -> Result<Vec<Vec<Complex64>>, OperatorError> {
    if vectors.is_empty() || vectors.iter().any(|v| v.is_empty()) {
        return Err(OperatorError::EmptyInput);
    }
    let len = vectors[0].len();
    if vectors.iter().any(|v| v.len() != len) {
        return Err(OperatorError::DimensionMismatch(
            "gram_schmidt inputs must share a length".into(),
        ));
    }
    let mut out: Vec<Vec<Complex64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        // two passes of re-orthogonalization for numerical safety
        for _ in 0..2 {
            for u in &out {
                let overlap: Complex64 = u.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                for (wk, uk) in w.iter_mut().zip(u) {
                    *wk -= overlap * uk;
                }
            }
        }
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > rank_tol {
            for z in &mut w {
                *z /= Complex64::new(norm, 0.0);
            }
            out.push(w);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(d: usize, seed: u64) -> Operator {
        // tiny deterministic LCG, enough for test fixtures
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = Operator::zeros(d, d);
        for r in 0..d {
            for cc in 0..d {
                m.set(r, cc, c(next(), next()));
            }
        }
        m
    }

    fn random_hermitian(d: usize, seed: u64) -> Operator {
        random_matrix(d, seed).hermitized()
    }

    #[test]
    fn vectorize_identity() {
        let v = vectorize(&Operator::identity(2));
        assert_eq!(v.entries, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn vectorize_qubit_povm_element() {
        let f = Operator::diag(&[0.5, 0.0]);
        let v = vectorize(&f);
        assert_eq!(v.entries[0], c(0.5, 0.0));
        assert!(v.entries[1..].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn inner_product_is_trace() {
        let a = random_matrix(3, 7);
        let b = random_matrix(3, 8);
        let direct = a.adjoint().mul(&b).trace();
        let viavec = vectorize(&a).inner(&vectorize(&b));
        assert!((direct - viavec).norm() < 1e-12);
    }

    #[test]
    fn unvectorize_round_trip() {
        let a = random_matrix(4, 3);
        let back = unvectorize(&vectorize(&a).entries, 4, 4).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn unvectorize_rectangular_indexing() {
        let v: Vec<Complex64> = (0..8).map(|k| c(k as f64, 0.0)).collect();
        let m = unvectorize(&v, 4, 2).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert_eq!(m.get(i, j), v[j * 4 + i]);
            }
        }
    }

    #[test]
    fn unvectorize_rejects_bad_shape() {
        let v = vec![Complex64::ZERO; 7];
        assert!(unvectorize(&v, 2, 3).is_err());
    }

    #[test]
    fn reshuffle_of_entangled_projector_is_identity() {
        let omega = maximally_entangled(2, false);
        let mut tau = Operator::zeros(4, 4);
        for r in 0..4 {
            for cc in 0..4 {
                tau.set(r, cc, omega.entries[r] * omega.entries[cc].conj());
            }
        }
        let tau = tau.with_factor_dims(2, 2);
        let r = reshuffle(&tau).unwrap();
        assert!(r.sub(&Operator::identity(4)).max_abs() < 1e-15);
    }

    #[test]
    fn reshuffle_requires_factor_dims() {
        let tau = Operator::identity(4);
        assert!(matches!(
            reshuffle(&tau),
            Err(OperatorError::MissingFactorDims)
        ));
    }

    #[test]
    fn eig_diagonal() {
        let eig = hermitian_eig(&Operator::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 2.0).abs() < 1e-14);
        assert!((eig.eigenvalues[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eig_x_basis_povm_element() {
        // 1/4 [[1,1],[1,1]] has eigenvalues 0 and 1/2
        let h = Operator::from_rows(&[
            vec![c(0.25, 0.0), c(0.25, 0.0)],
            vec![c(0.25, 0.0), c(0.25, 0.0)],
        ]);
        let eig = hermitian_eig(&h).unwrap();
        assert!(eig.eigenvalues[0].abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn eig_reassembly_and_orthonormality() {
        let h = random_hermitian(8, 42);
        let eig = hermitian_eig(&h).unwrap();
        assert!(eig.reassemble().sub(&h).max_abs() < 1e-10);
        let gram = eig.eigenvectors.adjoint().mul(&eig.eigenvectors);
        assert!(gram.sub(&Operator::identity(8)).max_abs() < 1e-10);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut m = Operator::identity(2);
        m.set(0, 1, c(0.5, 0.0));
        assert!(matches!(
            hermitian_eig(&m),
            Err(OperatorError::NotHermitian(_))
        ));
    }

    #[test]
    fn psd_identity_true() {
        assert!(is_psd(&Operator::identity(3), 1e-9).unwrap());
    }

    #[test]
    fn project_psd_clips_negative() {
        let p = project_psd(&Operator::diag(&[1.0, -1.0])).unwrap();
        assert!(p.sub(&Operator::diag(&[1.0, 0.0])).max_abs() < 1e-14);
    }

    #[test]
    fn project_psd_fixed_point_and_idempotent() {
        let h = random_hermitian(5, 9);
        let g = h.mul(&h); // PSD by construction
        let p = project_psd(&g).unwrap();
        assert!(p.sub(&g).max_abs() < 1e-12);
        let q = project_psd(&p).unwrap();
        assert!(q.sub(&p).max_abs() < 1e-12);
    }

    #[test]
    fn project_psd_is_nearest_among_samples() {
        let h = random_hermitian(4, 77);
        let p = project_psd(&h).unwrap();
        let base = p.sub(&h).frobenius_norm();
        for seed in 0..100u64 {
            let m = random_matrix(4, 1000 + seed);
            let cand = m.mul(&m.adjoint()); // random PSD
            let dist = cand.sub(&h).frobenius_norm();
            assert!(base <= dist + 1e-12, "seed {seed}: {base} > {dist}");
        }
    }

    #[test]
    fn gram_schmidt_basic() {
        let vs = vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(1.0, 0.0), c(1.0, 0.0)]];
        let out = gram_schmidt(&vs, 1e-10).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out[0][0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((out[1][1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gram_schmidt_drops_dependent() {
        let vs = vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(2.0, 0.0), c(0.0, 0.0)]];
        let out = gram_schmidt(&vs, 1e-10).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn gram_schmidt_rejects_empty() {
        assert!(gram_schmidt(&[], 1e-10).is_err());
        assert!(gram_schmidt(&[vec![]], 1e-10).is_err());
    }

    #[test]
    fn maximally_entangled_cases() {
        let un = maximally_entangled(2, false);
        assert_eq!(un.entries, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let no = maximally_entangled(2, true);
        assert!((no.entries[0].re - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        // projector of the unnormalized d=2 vector has trace 2
        let tr: f64 = un.entries.iter().map(|z| z.norm_sqr()).sum();
        assert!((tr - 2.0).abs() < 1e-15);
    }

    #[test]
    fn partial_trace_second_of_entangled_projector() {
        let omega = maximally_entangled(3, false);
        let mut tau = Operator::zeros(9, 9);
        for r in 0..9 {
            for cc in 0..9 {
                tau.set(r, cc, omega.entries[r] * omega.entries[cc].conj());
            }
        }
        let tau = tau.with_factor_dims(3, 3);
        let pt = tau.partial_trace_second().unwrap();
        assert!(pt.sub(&Operator::identity(3)).max_abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn prop_vec_unvec_round_trip(d in 1usize..7, seed in 0u64..500) {
            let a = random_matrix(d, seed);
            let back = unvectorize(&vectorize(&a).entries, d, d).unwrap();
            prop_assert!(a.sub(&back).max_abs() == 0.0);
        }

        #[test]
        fn prop_inner_is_trace(d in 1usize..10, seed in 0u64..200) {
            let a = random_matrix(d, seed);
            let b = random_matrix(d, seed.wrapping_add(1));
            let direct = a.adjoint().mul(&b).trace();
            let viavec = vectorize(&a).inner(&vectorize(&b));
            prop_assert!((direct - viavec).norm() < 1e-12);
        }

        #[test]
        fn prop_reshuffle_involution(d in 1usize..4, seed in 0u64..200) {
            let tau = random_matrix(d * d, seed).with_factor_dims(d, d);
            let once = reshuffle(&tau).unwrap().with_factor_dims(d, d);
            let twice = reshuffle(&once).unwrap();
            prop_assert!(twice.sub(&tau).max_abs() < 1e-15);
        }

        #[test]
        fn prop_eig_reassembles(d in 1usize..9, seed in 0u64..100) {
            let h = random_hermitian(d, seed);
            let eig = hermitian_eig(&h).unwrap();
            prop_assert!(eig.reassemble().sub(&h).max_abs() < 1e-10);
            let gram = eig.eigenvectors.adjoint().mul(&eig.eigenvectors);
            prop_assert!(gram.sub(&Operator::identity(d)).max_abs() < 1e-10);
        }

        #[test]
        fn prop_project_psd_invariants(d in 1usize..8, seed in 0u64..100) {
            let h = random_hermitian(d, seed);
            let p = project_psd(&h).unwrap();
            let eig = hermitian_eig(&p).unwrap();
            prop_assert!(eig.min_eigenvalue() >= -1e-12);
            let again = project_psd(&p).unwrap();
            prop_assert!(again.sub(&p).max_abs() < 1e-12);
        }
    }
}
