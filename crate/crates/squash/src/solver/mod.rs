//! Squashing-map existence solver.
//!
//! The question "does the full measurement reduce to the target measurement
//! through some channel" is decided on the channel's Choi operator tau: the
//! adjoint-map constraints are linear in tau, complete positivity is
//! `tau >= 0`, and trace preservation of the channel is implied by POVM
//! completeness on both sides. The pipeline is
//!
//! 1. [`assemble_constraints`] - linear system over Re/Im of tau's entries,
//! 2. [`solve_affine`] - particular solution plus nullspace directions,
//! 3. [`zero_diagonal_propagation`] - PSD-forced parameter elimination,
//! 4. [`psd_feasibility`] - eigen-test of unique solutions, or alternating
//!    projections with Dykstra correction when parameters remain.
//!
//! Choi operators here pair the map with the *unnormalized* maximally
//! entangled operator, so the transfer matrix acts on vectorized operators
//! with no scale factor and a trace-preserving channel has
//! `Tr_{Q'} tau = 1_M` exactly. Dividing by the target dimension converts to
//! the normalized-pairing convention used for reported witness expectations.

mod composite;
mod constraints;
mod feasibility;
mod linsys;

pub use composite::{
    check_protocol, random_density_matrix, statistical_deviation_block,
    verify_statistical_equivalence, BlockCheck, CompositeSquasher, ProtocolCheck, SquashBlock,
    SquashedState,
};
pub use constraints::{
    assemble_constraints, solve_affine, zero_diagonal_propagation, ConstraintSystem,
    ParameterizedChoi,
};
pub use feasibility::{psd_feasibility, uniqueness_probe, DEFAULT_MAX_ITER, DEFAULT_TOL};

use num_complex::Complex64;
use thiserror::Error;

use crate::detector::{build_full_povm, OutcomeLabel, Protocol};
use crate::fock::PolarizationBasis;
use crate::operator::{hermitian_eig, Operator, OperatorError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("affine-infeasible: no operator satisfies the linear constraints (residual {0:.3e})")]
    AffineInfeasible(f64),
    #[error("zero-diagonal propagation contradiction: {0}")]
    PropagationContradiction(String),
    #[error("POVM pairing failed: {0}")]
    LabelMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Outcome of a feasibility decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictStatus {
    Exists,
    NotExists,
    Inconclusive,
}

impl VerdictStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictStatus::Exists => "EXISTS",
            VerdictStatus::NotExists => "NOT_EXISTS",
            VerdictStatus::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// Why a NOT_EXISTS verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotExistsReason {
    /// The unique constraint-satisfying tau has a negative eigenvalue.
    NegativeEigenvalue,
    /// The linear system itself has no solution.
    AffineInfeasible,
    /// Zero-diagonal propagation produced unsolvable forced equations.
    PropagationContradiction,
}

impl NotExistsReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            NotExistsReason::NegativeEigenvalue => "negative-eigenvalue",
            NotExistsReason::AffineInfeasible => "affine-infeasible",
            NotExistsReason::PropagationContradiction => "propagation-contradiction",
        }
    }
}

/// Negativity certificate: a state vector with negative expectation on the
/// unique constraint-satisfying tau.
#[derive(Debug, Clone)]
pub struct Witness {
    pub eigenvalue: f64,
    pub vector: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// Two-norm residual of the constraint system at the returned tau.
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub iterations: usize,
    /// Nullspace dimension of the parameterization the verdict was run on.
    pub nullspace_dim: usize,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub choi: Option<Operator>,
    pub witness: Option<Witness>,
    pub reason: Option<NotExistsReason>,
    pub diagnostics: Diagnostics,
}

/// Closed-form Choi operator of the odd-photon-number squashing block for
/// the two-basis protocol, on P (x) Q' with the parameter assignment that
/// makes it PSD:
/// `a1 = s, a2 = 0, a3 = t, a4 = 0, a5 = 0, a6 = 1/2 - s`,
/// where `s = 2^{1-n}`, `t = s sqrt(2^{n-1} - 1)`, `u = 1 - s`.
pub fn bb84_odd_closed_form(n: usize) -> Result<Operator, SolverError> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(SolverError::InvalidInput(format!(
            "closed form defined for odd n >= 3, got {n}"
        )));
    }
    let s = (2.0f64).powi(1 - n as i32);
    let t = s * ((2.0f64).powi(n as i32 - 1) - 1.0).sqrt();
    let u = 1.0 - s;
    let (a1, a2, a3, a4, a5, a6) = (s, 0.0, t, 0.0, 0.0, 0.5 - s);
    let rows = [
        [1.0, 0.0, 0.0, a1, 0.0, a2, 0.0, a3],
        [0.0, 0.0, s - a1, 0.0, -a2, 0.0, t - a3, 0.0],
        [0.0, s - a1, 0.0, 0.0, 0.0, a4, 0.0, a5],
        [a1, 0.0, 0.0, 1.0, t - a4, 0.0, -a5, 0.0],
        [0.0, -a2, 0.0, t - a4, 0.5, 0.0, 0.0, a6],
        [a2, 0.0, a4, 0.0, 0.0, 0.5, u - a6, 0.0],
        [0.0, t - a3, 0.0, -a5, 0.0, u - a6, 0.5, 0.0],
        [a3, 0.0, a5, 0.0, a6, 0.0, 0.0, 0.5],
    ];
    let mut tau = Operator::zeros(8, 8);
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            tau.set(r, c, Complex64::new(v, 0.0));
        }
    }
    Ok(tau.with_factor_dims(4, 2))
}

/// Choi operator of the adjoint six-state squashing map on the n-photon
/// block, built from the Pauli expansion of the entangled pairing with the
/// substitution of full-measurement elements for target elements:
///
/// `tau = 1/2 [ 1_M (x) 1_Q' + 3 sum_alpha (F^{(0,alpha)} - F^{(1,alpha)}) (x) sigma_alpha^T ]`.
///
/// The 1/2 makes tau satisfy the unnormalized-pairing constraint system
/// exactly; its sign pattern (and hence any witness) is scale invariant.
pub fn six_state_choi(n: usize) -> Result<Operator, SolverError> {
    if n < 1 {
        return Err(SolverError::InvalidInput(
            "six-state Choi needs n >= 1".into(),
        ));
    }
    let dim = n + 1;
    let povm = build_full_povm(Protocol::SixState, n);
    let find = |b: u8, alpha: PolarizationBasis| -> &Operator {
        povm.elements
            .iter()
            .find(|(l, _)| matches!(l, OutcomeLabel::Bit { b: bb, basis } if *bb == b && *basis == alpha))
            .map(|(_, e)| e)
            .expect("six-state POVM carries every bit outcome")
    };
    let mut tau = Operator::identity(dim).kron(&Operator::identity(2));
    for alpha in [PolarizationBasis::Z, PolarizationBasis::X, PolarizationBasis::Y] {
        let diff = find(0, alpha).sub(find(1, alpha));
        let sigma_t = pauli(alpha).transpose();
        tau = tau.add(&diff.kron(&sigma_t).scale_re(3.0));
    }
    Ok(tau.scale_re(0.5).with_factor_dims(dim, 2))
}

/// The negativity test vector `(|n,0>_z (x) |1> - |0,n>_z (x) |0>)/sqrt(2)`
/// on the n-photon block tensored with the output qubit.
pub fn six_state_witness_vector(n: usize) -> Vec<Complex64> {
    let dim = n + 1;
    let mut v = vec![Complex64::ZERO; dim * 2];
    let amp = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
    // |n,0>_z is index 0 on the block, |0,n>_z is index n
    v[1] = amp; // (0, qubit 1)
    v[n * 2] = -amp; // (n, qubit 0)
    v
}

/// Expectation `<v| tau |v>` rescaled to the normalized-pairing convention
/// (division by the target dimension read from tau's factor dims).
pub fn normalized_expectation(tau: &Operator, v: &[Complex64]) -> Result<f64, SolverError> {
    let (_, d_q) = tau
        .factor_dims()
        .ok_or(OperatorError::MissingFactorDims)?;
    Ok(raw_expectation(tau, v) / d_q as f64)
}

/// Expectation `<v| tau |v>` in tau's own scale.
pub fn raw_expectation(tau: &Operator, v: &[Complex64]) -> f64 {
    let tv = tau.mul_vec(v);
    v.iter()
        .zip(&tv)
        .map(|(a, b)| (a.conj() * b).re)
        .sum()
}

fn pauli(alpha: PolarizationBasis) -> Operator {
    let c = Complex64::new;
    match alpha {
        PolarizationBasis::Z => Operator::from_rows(&[
            vec![c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(-1.0, 0.0)],
        ]),
        PolarizationBasis::X => Operator::from_rows(&[
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        ]),
        PolarizationBasis::Y => Operator::from_rows(&[
            vec![c(0.0, 0.0), c(0.0, -1.0)],
            vec![c(0.0, 1.0), c(0.0, 0.0)],
        ]),
    }
}

/// Kraus representation of the adjoint map extracted from a PSD Choi
/// operator. `adjoint_ops[k]` is the `d_m x d_q` matrix `A_k^dag`; the
/// channel itself acts as `rho -> sum_k A_k rho A_k^dag` with
/// `A_k = adjoint_ops[k]^dag`.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub adjoint_ops: Vec<Operator>,
    pub d_m: usize,
    pub d_q: usize,
}

impl KrausSet {
    /// Max-norm defect of `sum_k A_k^dag A_k = 1_M`.
    pub fn completeness_defect(&self) -> f64 {
        let mut sum = Operator::zeros(self.d_m, self.d_m);
        for b in &self.adjoint_ops {
            sum = sum.add(&b.mul(&b.adjoint()));
        }
        sum.sub(&Operator::identity(self.d_m)).max_abs()
    }

    /// Heisenberg action: `O_Q -> sum_k A_k^dag O A_k` (a `d_m x d_m` result).
    pub fn apply_adjoint(&self, op: &Operator) -> Operator {
        let mut out = Operator::zeros(self.d_m, self.d_m);
        for b in &self.adjoint_ops {
            out = out.add(&b.mul(op).mul(&b.adjoint()));
        }
        out
    }

    /// Schroedinger action: `rho_M -> sum_k A_k rho A_k^dag` (a `d_q x d_q`
    /// result).
    pub fn apply_channel(&self, rho: &Operator) -> Operator {
        let mut out = Operator::zeros(self.d_q, self.d_q);
        for b in &self.adjoint_ops {
            out = out.add(&b.adjoint().mul(rho).mul(b));
        }
        out
    }
}

/// Eigenvalue threshold below which a Choi eigenpair is dropped from the
/// Kraus set.
const KRAUS_EIG_CUT: f64 = 1e-10;
/// Relative tolerance on negative Choi eigenvalues accepted as rounding.
const KRAUS_PSD_TOL: f64 = 1e-9;

/// Extract the adjoint Kraus operators of a PSD Choi operator.
///
/// Each eigenpair `(lambda > 1e-10, v)` contributes
/// `A_k^dag[p, i] = sqrt(lambda) v[p d_q + i]`.
pub fn extract_kraus(choi: &Operator) -> Result<KrausSet, SolverError> {
    let (d_m, d_q) = choi
        .factor_dims()
        .ok_or(OperatorError::MissingFactorDims)?;
    let eig = hermitian_eig(choi)?;
    let scale = choi.max_abs().max(1.0);
    if eig.min_eigenvalue() < -KRAUS_PSD_TOL * scale {
        return Err(SolverError::Operator(OperatorError::NotPsd(
            eig.min_eigenvalue(),
        )));
    }
    let mut adjoint_ops = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= KRAUS_EIG_CUT {
            continue;
        }
        let v = eig.eigenvector(k);
        let mut b = Operator::zeros(d_m, d_q);
        let root = lam.sqrt();
        for p in 0..d_m {
            for i in 0..d_q {
                b.set(p, i, v[p * d_q + i] * root);
            }
        }
        adjoint_ops.push(b);
    }
    Ok(KrausSet {
        adjoint_ops,
        d_m,
        d_q,
    })
}

/// Apply the adjoint map encoded by a Choi operator to an operator on the
/// target space.
///
/// This is the linear extension of `E_ij -> Choi block (i, j)`:
/// `map(O)[p, q] = sum_ij O[i, j] tau[p d_q + i, q d_q + j]`, which agrees
/// with the transfer-matrix action `unvectorize(tau^R |O>>)` on Hermitian
/// operators.
pub fn apply_adjoint(choi: &Operator, op: &Operator) -> Result<Operator, SolverError> {
    let (d_m, d_q) = choi
        .factor_dims()
        .ok_or(OperatorError::MissingFactorDims)?;
    if op.rows() != d_q || op.cols() != d_q {
        return Err(SolverError::InvalidInput(format!(
            "operator dimension {} does not match target dimension {}",
            op.rows(),
            d_q
        )));
    }
    let mut out = Operator::zeros(d_m, d_m);
    for p in 0..d_m {
        for q in 0..d_m {
            let mut acc = Complex64::ZERO;
            for i in 0..d_q {
                for j in 0..d_q {
                    acc += op.get(i, j) * choi.get(p * d_q + i, q * d_q + j);
                }
            }
            out.set(p, q, acc);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::build_target_povm;
    use crate::fock::restrict_operator;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn entangled_choi(d: usize) -> Operator {
        let omega = crate::operator::maximally_entangled(d, false);
        let mut tau = Operator::zeros(d * d, d * d);
        for r in 0..d * d {
            for cc in 0..d * d {
                tau.set(r, cc, omega.entries[r] * omega.entries[cc].conj());
            }
        }
        tau.with_factor_dims(d, d)
    }

    #[test]
    fn closed_form_fixed_entries_n3() {
        let tau = bb84_odd_closed_form(3).unwrap();
        let s = 0.25;
        let t = 3f64.sqrt() / 4.0;
        assert!((tau.get(0, 0) - c(1.0, 0.0)).norm() < 1e-15);
        assert!((tau.get(4, 4) - c(0.5, 0.0)).norm() < 1e-15);
        assert!((tau.get(0, 3) - c(s, 0.0)).norm() < 1e-15);
        assert!((tau.get(0, 7) - c(t, 0.0)).norm() < 1e-15);
        assert!((tau.get(4, 7) - c(0.25, 0.0)).norm() < 1e-15);
        assert!((tau.get(5, 6) - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn closed_form_rejects_even_and_small() {
        assert!(bb84_odd_closed_form(1).is_err());
        assert!(bb84_odd_closed_form(4).is_err());
    }

    #[test]
    fn closed_form_hermitian_and_unital() {
        for n in [3usize, 5, 7] {
            let tau = bb84_odd_closed_form(n).unwrap();
            assert!(tau.is_hermitian(1e-12));
            let pt = tau.partial_trace_second().unwrap();
            assert!(pt.sub(&Operator::identity(4)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_psd() {
        for n in [3usize, 5, 7] {
            let tau = bb84_odd_closed_form(n).unwrap();
            let eig = hermitian_eig(&tau).unwrap();
            assert!(eig.min_eigenvalue() >= -1e-10, "n={n}");
        }
    }

    #[test]
    fn six_state_choi_hermitian_and_psd_onset() {
        for n in 1..=8 {
            let tau = six_state_choi(n).unwrap();
            assert!(tau.is_hermitian(1e-12), "n={n}");
        }
        for n in [1usize, 2] {
            let tau = six_state_choi(n).unwrap();
            assert!(hermitian_eig(&tau).unwrap().min_eigenvalue() >= -1e-10);
        }
        let tau3 = six_state_choi(3).unwrap();
        assert!(hermitian_eig(&tau3).unwrap().min_eigenvalue() < -1e-3);
    }

    #[test]
    fn psd_test_on_paper_operators() {
        use crate::operator::is_psd;
        assert!(is_psd(&bb84_odd_closed_form(3).unwrap(), 1e-9).unwrap());
        assert!(!is_psd(&six_state_choi(3).unwrap(), 1e-9).unwrap());
    }

    #[test]
    fn closed_form_kraus_complete_for_odd_blocks() {
        for n in [3usize, 5, 7] {
            let kraus = extract_kraus(&bb84_odd_closed_form(n).unwrap()).unwrap();
            assert!(kraus.completeness_defect() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn six_state_witness_is_one_eighth() {
        let tau = six_state_choi(3).unwrap();
        let theta = six_state_witness_vector(3);
        let val = normalized_expectation(&tau, &theta).unwrap();
        assert!((val + 0.125).abs() < 1e-12);
    }

    #[test]
    fn six_state_rejects_vacuum_block() {
        assert!(six_state_choi(0).is_err());
    }

    #[test]
    fn kraus_of_entangled_choi_is_identity() {
        let kraus = extract_kraus(&entangled_choi(2)).unwrap();
        assert_eq!(kraus.adjoint_ops.len(), 1);
        assert!(kraus.adjoint_ops[0]
            .sub(&Operator::identity(2))
            .max_abs()
            < 1e-12);
        assert!(kraus.completeness_defect() < 1e-12);
    }

    #[test]
    fn kraus_of_closed_form_complete_and_reproduces_povm() {
        use crate::detector::{build_full_povm, Protocol};
        use crate::fock::{p_subspace, PolarizationBasis};
        let n = 3;
        let tau = bb84_odd_closed_form(n).unwrap();
        let kraus = extract_kraus(&tau).unwrap();
        assert!(kraus.adjoint_ops.len() <= 8);
        assert!(kraus.completeness_defect() < 1e-10);

        let dec = p_subspace(n, &[PolarizationBasis::Z, PolarizationBasis::X]).unwrap();
        let full = build_full_povm(Protocol::Bb84, n);
        let target = build_target_povm(Protocol::Bb84);
        for ((_, fm), (_, fq)) in full.elements.iter().zip(&target.elements) {
            let fm_p = restrict_operator(fm, &dec.p_basis).unwrap();
            let via_kraus = kraus.apply_adjoint(fq);
            assert!(via_kraus.sub(&fm_p).max_abs() < 1e-10);
            // same action through the direct Choi formula
            let direct = apply_adjoint(&tau, fq).unwrap();
            assert!(direct.sub(&fm_p).max_abs() < 1e-12);
            // and through the transfer matrix on vectorized operators
            let transfer = crate::operator::reshuffle(&tau).unwrap();
            let image = transfer.mul_vec(&crate::operator::vectorize(fq).entries);
            let via_transfer = crate::operator::unvectorize(&image, 4, 4).unwrap();
            assert!(via_transfer.sub(&fm_p).max_abs() < 1e-12);
        }
    }

    #[test]
    fn kraus_rejects_negative_choi() {
        let tau = Operator::diag(&[1.0, -0.5, 1.0, 1.0]).with_factor_dims(2, 2);
        assert!(extract_kraus(&tau).is_err());
    }

    #[test]
    fn adjoint_action_unital_and_linear() {
        let tau = bb84_odd_closed_form(3).unwrap();
        let unital = apply_adjoint(&tau, &Operator::identity(2)).unwrap();
        assert!(unital.sub(&Operator::identity(4)).max_abs() < 1e-12);

        // linearity on a fixed pair
        let a = Operator::from_rows(&[
            vec![c(0.3, 0.1), c(-0.2, 0.4)],
            vec![c(0.0, -0.7), c(1.1, 0.0)],
        ]);
        let b = Operator::from_rows(&[
            vec![c(-1.0, 0.2), c(0.5, 0.0)],
            vec![c(0.25, 0.25), c(0.0, 1.0)],
        ]);
        let lhs = apply_adjoint(&tau, &a.add(&b.scale(c(2.0, -1.0)))).unwrap();
        let rhs = apply_adjoint(&tau, &a)
            .unwrap()
            .add(&apply_adjoint(&tau, &b).unwrap().scale(c(2.0, -1.0)));
        assert!(lhs.sub(&rhs).max_abs() < 1e-12);
    }

    #[test]
    fn adjoint_rejects_mismatched_dimension() {
        let tau = bb84_odd_closed_form(3).unwrap();
        assert!(apply_adjoint(&tau, &Operator::identity(3)).is_err());
        assert!(apply_adjoint(&Operator::identity(8), &Operator::identity(2)).is_err());
    }

    #[test]
    fn adjoint_reproduces_paper_z_element() {
        let tau = bb84_odd_closed_form(3).unwrap();
        let fq = Operator::diag(&[0.5, 0.0]);
        let fm = apply_adjoint(&tau, &fq).unwrap();
        let expect = Operator::diag(&[0.5, 0.0, 0.25, 0.25]);
        assert!(fm.sub(&expect).max_abs() < 1e-12);
    }

    #[test]
    fn witness_vector_layout() {
        let v = six_state_witness_vector(3);
        assert_eq!(v.len(), 8);
        assert!((v[1].re - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((v[6].re + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-15);
    }
}
