//! Two-mode bosonic Fock-space bookkeeping.
//!
//! The n-photon subspace of two polarization modes (H and V) is spanned by
//! the states `|n-j, j>` with `j` photons in the V mode. All coefficient
//! vectors in this module use that ordering, with `j` ascending, so the
//! H-extremal state of the computational basis is always the first canonical
//! basis vector.
//!
//! A polarizing beamsplitter oriented along basis `alpha` sorts photons into
//! two output modes. The first-mode creation operator is
//! `(a_H^dag + c a_V^dag)/sqrt(2)` with `c = +1` for `x` and `c = +i` for `y`;
//! the second mode is the orthogonal partner `(a_H^dag - c a_V^dag)/sqrt(2)`.
//! `z` is the computational H/V basis itself.

use num_complex::Complex64;

use crate::operator::{gram_schmidt, Operator, OperatorError};

/// Polarization basis selected by the beamsplitter orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolarizationBasis {
    /// Horizontal/vertical (computational) basis.
    Z,
    /// +45/-45 degree linear basis.
    X,
    /// Circular basis.
    Y,
}

impl PolarizationBasis {
    pub fn label(&self) -> &'static str {
        match self {
            PolarizationBasis::Z => "z",
            PolarizationBasis::X => "x",
            PolarizationBasis::Y => "y",
        }
    }
}

/// Output port of the polarizing beamsplitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    First,
    Second,
}

/// The n-photon two-mode basis `|n-j, j>`, j = 0..n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoModeFockBasis {
    pub n: usize,
}

impl TwoModeFockBasis {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    /// Index of `|n-j, j>` in the coefficient vector.
    pub fn index(&self, second_mode_photons: usize) -> usize {
        assert!(second_mode_photons <= self.n);
        second_mode_photons
    }
}

/// Coefficients of the extremal state with all `n` photons in one output
/// mode of the basis-`alpha` beamsplitter, expressed in the z-ordered basis.
///
/// For `alpha = x`, first mode, the coefficient of `|n-j, j>` is
/// `2^{-n/2} sqrt(C(n, j))`; the second mode carries an extra `(-1)^j`, and
/// `y` replaces that sign by `(+-i)^j`.
pub fn extremal_state(alpha: PolarizationBasis, n: usize, mode: Mode) -> Vec<Complex64> {
    let dim = n + 1;
    let mut v = vec![Complex64::ZERO; dim];
    match alpha {
        PolarizationBasis::Z => {
            match mode {
                Mode::First => v[0] = Complex64::ONE,
                Mode::Second => v[n] = Complex64::ONE,
            }
            v
        }
        PolarizationBasis::X | PolarizationBasis::Y => {
            let c = match alpha {
                PolarizationBasis::X => Complex64::new(1.0, 0.0),
                PolarizationBasis::Y => Complex64::new(0.0, 1.0),
                PolarizationBasis::Z => unreachable!(),
            };
            // second mode uses the orthogonal partner (a_H - c a_V)/sqrt(2)
            let factor = match mode {
                Mode::First => c,
                Mode::Second => -c,
            };
            let amp = 0.5f64.powf(n as f64 / 2.0);
            let mut phase = Complex64::ONE;
            for (j, item) in v.iter_mut().enumerate() {
                *item = phase * amp * binomial(n, j).sqrt();
                phase *= factor;
            }
            v
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    // exact in f64 for the n <= ~30 used here
    let mut acc = 1.0f64;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Orthogonal split of the n-photon space into the extremal-state span P and
/// its complement.
#[derive(Debug, Clone)]
pub struct SubspaceDecomposition {
    pub n: usize,
    pub p_basis: Vec<Vec<Complex64>>,
    pub p_perp_basis: Vec<Vec<Complex64>>,
}

impl SubspaceDecomposition {
    pub fn p_dim(&self) -> usize {
        self.p_basis.len()
    }

    pub fn space_dim(&self) -> usize {
        self.n + 1
    }
}

/// Rank tolerance for detecting the dimension of P. Overlaps between
/// extremal states are powers of 2^{-1/2}, far from this threshold for all
/// photon numbers this crate handles.
const P_RANK_TOL: f64 = 1e-9;

/// Span of the beamsplitter-extremal states within the n-photon space.
///
/// Bases are processed in the fixed order z, x, y (first mode then second),
/// so the first two basis vectors of P are always `|n,0>_z` and `|0,n>_z`
/// when z is requested. For odd `n >= 3` with bases `{z, x}` the analytic
/// four-vector basis is returned:
///
/// ```text
/// phi_1 = |n,0>_z
/// phi_2 = |0,n>_z
/// phi_3 = (sqrt(2^{n-2}) (|n,0>_x + |0,n>_x) - |n,0>_z) / C_1
/// phi_4 = (sqrt(2^{n-2}) (|n,0>_x - |0,n>_x) - |0,n>_z) / C_1
/// ```
///
/// with `C_1 = sqrt(2^{n-1} - 1)`; otherwise a Gram-Schmidt basis with rank
/// detection is used. The complement is completed from canonical basis
/// vectors.
pub fn p_subspace(
    n: usize,
    bases: &[PolarizationBasis],
) -> Result<SubspaceDecomposition, OperatorError> {
    if n == 0 {
        return Err(OperatorError::EmptyInput);
    }
    let mut sorted: Vec<PolarizationBasis> = bases.to_vec();
    sorted.sort();
    sorted.dedup();

    let zx_only = sorted == [PolarizationBasis::Z, PolarizationBasis::X];
    let p_basis = if n >= 3 && n % 2 == 1 && zx_only {
        analytic_odd_basis(n)
    } else {
        let mut span = Vec::new();
        // deterministic z, x, y order regardless of input order
        for b in [PolarizationBasis::Z, PolarizationBasis::X, PolarizationBasis::Y] {
            if sorted.contains(&b) {
                span.push(extremal_state(b, n, Mode::First));
                span.push(extremal_state(b, n, Mode::Second));
            }
        }
        gram_schmidt(&span, P_RANK_TOL)?
    };

    // extend to the full space with canonical vectors
    let dim = n + 1;
    let mut all = p_basis.clone();
    for k in 0..dim {
        let mut e = vec![Complex64::ZERO; dim];
        e[k] = Complex64::ONE;
        all.push(e);
    }
    let completed = gram_schmidt(&all, P_RANK_TOL)?;
    let p_perp_basis = completed[p_basis.len()..].to_vec();

    Ok(SubspaceDecomposition {
        n,
        p_basis,
        p_perp_basis,
    })
}

fn analytic_odd_basis(n: usize) -> Vec<Vec<Complex64>> {
    let c1 = ((2.0f64).powi(n as i32 - 1) - 1.0).sqrt();
    let w = (2.0f64).powi(n as i32 - 2).sqrt();
    let z0 = extremal_state(PolarizationBasis::Z, n, Mode::First);
    let z1 = extremal_state(PolarizationBasis::Z, n, Mode::Second);
    let x0 = extremal_state(PolarizationBasis::X, n, Mode::First);
    let x1 = extremal_state(PolarizationBasis::X, n, Mode::Second);
    let dim = n + 1;
    let mut phi3 = vec![Complex64::ZERO; dim];
    let mut phi4 = vec![Complex64::ZERO; dim];
    for k in 0..dim {
        phi3[k] = (w * (x0[k] + x1[k]) - z0[k]) / c1;
        phi4[k] = (w * (x0[k] - x1[k]) - z1[k]) / c1;
    }
    vec![z0, z1, phi3, phi4]
}

/// Compress an operator to the block spanned by `basis_vectors`:
/// entry `(i, j)` of the result is `<v_i| O |v_j>`.
pub fn restrict_operator(
    op: &Operator,
    basis_vectors: &[Vec<Complex64>],
) -> Result<Operator, OperatorError> {
    let d = op.dim();
    if basis_vectors.iter().any(|v| v.len() != d) {
        return Err(OperatorError::DimensionMismatch(
            "basis vectors must match operator dimension".into(),
        ));
    }
    let k = basis_vectors.len();
    let mut out = Operator::zeros(k, k);
    for (i, vi) in basis_vectors.iter().enumerate() {
        for (j, vj) in basis_vectors.iter().enumerate() {
            let col = op.mul_vec(vj);
            let val: Complex64 = vi.iter().zip(&col).map(|(a, b)| a.conj() * b).sum();
            out.set(i, j, val);
        }
    }
    Ok(out)
}
