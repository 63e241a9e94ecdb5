//! Linear-constraint assembly and the affine solution set of the adjoint-map
//! equations.

use num_complex::Complex64;

use crate::detector::Povm;
use crate::operator::{vectorize, Operator};

use super::linsys::{solve_least_squares, RealMat};
use super::SolverError;

/// Residual above which the linear system counts as having no solution.
const AFFINE_FEASIBLE_TOL: f64 = 1e-8;
/// Relative rank tolerance of the QR factorization.
const RANK_TOL: f64 = 1e-10;
/// Absolute threshold below which a diagonal entry counts as identically
/// zero during propagation.
const ZERO_DIAG_TOL: f64 = 1e-11;
/// Max imaginary part for the working basis to count as real.
const REALNESS_TOL: f64 = 1e-12;

/// The adjoint-map equations as a real linear system.
///
/// Unknowns are `[Re vec(tau); Im vec(tau)]` with column-stacked `vec`, so
/// `x[c*d + r]` is entry `(r, c)` of tau and `d = d_m * d_q`. Rows comprise,
/// per outcome, the real and imaginary parts of
/// `tau^R |F_Q^{(i)}>> - |F_M^{(i)}>> = 0`, followed by hermiticity rows.
/// Unitality is not imposed; POVM completeness on both sides already implies
/// it.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub d_m: usize,
    pub d_q: usize,
    matrix: RealMat,
    rhs: Vec<f64>,
    /// True when every paired element is entrywise real, enabling the
    /// restriction to real tau.
    pub all_real: bool,
}

impl ConstraintSystem {
    pub fn rows(&self) -> usize {
        self.matrix.rows
    }

    pub fn unknowns(&self) -> usize {
        self.matrix.cols
    }

    /// Two-norm constraint residual of a candidate tau.
    pub fn residual_of(&self, tau: &Operator) -> f64 {
        let x = tau_to_unknowns(tau);
        let ax = self.matrix.mul_vec(&x);
        ax.iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn tau_to_unknowns(tau: &Operator) -> Vec<f64> {
    let d = tau.dim();
    let n = d * d;
    let mut x = vec![0.0; 2 * n];
    for c in 0..d {
        for r in 0..d {
            let v = tau.get(r, c);
            x[c * d + r] = v.re;
            x[n + c * d + r] = v.im;
        }
    }
    x
}

fn unknowns_to_tau(x: &[f64], d: usize) -> Operator {
    let n = d * d;
    let mut tau = Operator::zeros(d, d);
    for c in 0..d {
        for r in 0..d {
            tau.set(r, c, Complex64::new(x[c * d + r], x[n + c * d + r]));
        }
    }
    tau
}

/// Build the constraint system for a full/target POVM pair.
///
/// Elements are paired by outcome label; the outcome counts must agree and
/// every full-side label must appear exactly once on the target side.
pub fn assemble_constraints(full: &Povm, target: &Povm) -> Result<ConstraintSystem, SolverError> {
    if full.outcome_count() != target.outcome_count() {
        return Err(SolverError::LabelMismatch(format!(
            "outcome counts differ: {} vs {}",
            full.outcome_count(),
            target.outcome_count()
        )));
    }
    let mut pairs = Vec::with_capacity(full.outcome_count());
    for (label, fm) in &full.elements {
        let matches: Vec<&Operator> = target
            .elements
            .iter()
            .filter(|(l, _)| l == label)
            .map(|(_, e)| e)
            .collect();
        if matches.len() != 1 {
            return Err(SolverError::LabelMismatch(format!(
                "label {label} appears {} times in the target POVM",
                matches.len()
            )));
        }
        pairs.push((fm, matches[0]));
    }

    let d_m = full.dim;
    let d_q = target.dim;
    let d = d_m * d_q;
    let n = d * d;

    let all_real = pairs.iter().all(|(fm, fq)| {
        fm.entries().iter().all(|z| z.im.abs() < REALNESS_TOL)
            && fq.entries().iter().all(|z| z.im.abs() < REALNESS_TOL)
    });

    let constraint_rows = pairs.len() * d_m * d_m * 2;
    let herm_rows = d * d;
    let mut matrix = RealMat::zeros(constraint_rows + herm_rows, 2 * n);
    let mut rhs = vec![0.0; constraint_rows + herm_rows];

    let mut row = 0;
    for (fm, fq) in &pairs {
        let v = vectorize(fq).entries;
        let target_vec = vectorize(fm).entries;
        for q in 0..d_m {
            for p in 0..d_m {
                // complex row: sum_{ij} v[j d_q + i] * tau[p d_q + i, q d_q + j]
                // split into Re and Im rows over [Re x; Im x]
                for i in 0..d_q {
                    for j in 0..d_q {
                        let coeff = v[j * d_q + i];
                        let col = (q * d_q + j) * d + (p * d_q + i);
                        // Re row
                        let cur = matrix.get(row, col);
                        matrix.set(row, col, cur + coeff.re);
                        let cur = matrix.get(row, n + col);
                        matrix.set(row, n + col, cur - coeff.im);
                        // Im row
                        let cur = matrix.get(row + 1, col);
                        matrix.set(row + 1, col, cur + coeff.im);
                        let cur = matrix.get(row + 1, n + col);
                        matrix.set(row + 1, n + col, cur + coeff.re);
                    }
                }
                let b = target_vec[q * d_m + p];
                rhs[row] = b.re;
                rhs[row + 1] = b.im;
                row += 2;
            }
        }
    }

    // hermiticity: tau[r,c] = conj(tau[c,r])
    for r in 0..d {
        for c in 0..d {
            if r < c {
                // Re x_rc - Re x_cr = 0
                matrix.set(row, c * d + r, 1.0);
                matrix.set(row, r * d + c, -1.0);
            } else if r == c {
                // Im x_rr = 0
                matrix.set(row, n + c * d + r, 1.0);
            } else {
                // Im x_rc + Im x_cr = 0
                matrix.set(row, n + c * d + r, 1.0);
                matrix.set(row, n + r * d + c, 1.0);
            }
            row += 1;
        }
    }
    debug_assert_eq!(row, matrix.rows);

    Ok(ConstraintSystem {
        d_m,
        d_q,
        matrix,
        rhs,
        all_real,
    })
}

/// The affine solution set of a constraint system: a Hermitian particular
/// solution, orthonormal Hermitian nullspace directions, and a parameter
/// assignment selecting a member.
#[derive(Debug, Clone)]
pub struct ParameterizedChoi {
    pub particular: Operator,
    pub directions: Vec<Operator>,
    pub parameters: Vec<f64>,
    /// Constraint residual of the particular solution.
    pub base_residual: f64,
}

impl ParameterizedChoi {
    pub fn nullspace_dim(&self) -> usize {
        self.directions.len()
    }

    /// Member of the affine set at the stored parameter assignment.
    pub fn current(&self) -> Operator {
        self.at(&self.parameters)
    }

    /// Member of the affine set at an explicit parameter assignment.
    pub fn at(&self, params: &[f64]) -> Operator {
        assert_eq!(params.len(), self.directions.len());
        let mut tau = self.particular.clone();
        for (a, dir) in params.iter().zip(&self.directions) {
            tau = tau.add(&dir.scale_re(*a));
        }
        tau
    }

    /// Coordinates of (the affine projection of) an operator.
    pub fn coordinates_of(&self, tau: &Operator) -> Vec<f64> {
        let delta = tau.sub(&self.particular);
        self.directions
            .iter()
            .map(|dir| dir.frobenius_inner(&delta).re)
            .collect()
    }

    /// Orthogonal projection onto the affine set.
    pub fn project(&self, tau: &Operator) -> Operator {
        self.at(&self.coordinates_of(tau))
    }
}

/// Solve the affine system: minimum-norm Hermitian particular solution plus
/// an orthonormal basis of nullspace directions.
///
/// When the system was assembled from entrywise-real POVMs, the solution set
/// is restricted to real tau first (the conjugate of any solution is again a
/// solution, so the restriction loses nothing).
///
/// An inconsistent system (least-squares residual above 1e-8) means no
/// operator at all performs the mapping and yields
/// [`SolverError::AffineInfeasible`].
pub fn solve_affine(system: &ConstraintSystem) -> Result<ParameterizedChoi, SolverError> {
    let d = system.d_m * system.d_q;
    let n = d * d;

    let (matrix, rhs) = if system.all_real {
        // append rows pinning Im tau = 0
        let extra = n;
        let mut m = RealMat::zeros(system.matrix.rows + extra, system.matrix.cols);
        m.data[..system.matrix.data.len()].copy_from_slice(&system.matrix.data);
        for k in 0..extra {
            m.set(system.matrix.rows + k, n + k, 1.0);
        }
        let mut b = system.rhs.clone();
        b.extend(std::iter::repeat_n(0.0, extra));
        (m, b)
    } else {
        (system.matrix.clone(), system.rhs.clone())
    };

    let ls = solve_least_squares(&matrix, &rhs, RANK_TOL);
    if ls.residual > AFFINE_FEASIBLE_TOL {
        return Err(SolverError::AffineInfeasible(ls.residual));
    }

    let particular = unknowns_to_tau(&ls.solution, d)
        .hermitized()
        .with_factor_dims(system.d_m, system.d_q);
    let directions: Vec<Operator> = ls
        .nullspace
        .iter()
        .map(|v| {
            unknowns_to_tau(v, d)
                .hermitized()
                .with_factor_dims(system.d_m, system.d_q)
        })
        .collect();
    let parameters = vec![0.0; directions.len()];

    Ok(ParameterizedChoi {
        particular,
        directions,
        parameters,
        base_residual: ls.residual,
    })
}

/// Eliminate parameters forced by PSD structure: a diagonal entry that is
/// zero for every parameter assignment forces its whole row and column to
/// zero in any PSD member (a nonzero off-diagonal entry against a zero
/// diagonal makes a negative 2x2 principal minor). The forced linear
/// equations on the parameters are solved and substituted, repeatedly, until
/// no new identically-zero diagonal appears.
///
/// Unsolvable forced equations certify that no PSD member exists at all and
/// surface as [`SolverError::PropagationContradiction`].
pub fn zero_diagonal_propagation(
    pc: &ParameterizedChoi,
) -> Result<ParameterizedChoi, SolverError> {
    if pc.directions.is_empty() {
        // nothing to eliminate; a determined non-PSD point is left for the
        // eigen-test, which produces an explicit witness
        return Ok(pc.clone());
    }
    let mut particular = pc.particular.clone();
    let mut directions = pc.directions.clone();
    let d = particular.dim();
    let mut processed = vec![false; d];

    loop {
        let zero_diags: Vec<usize> = (0..d)
            .filter(|&r| {
                !processed[r]
                    && particular.get(r, r).norm() < ZERO_DIAG_TOL
                    && directions.iter().all(|dir| dir.get(r, r).norm() < ZERO_DIAG_TOL)
            })
            .collect();
        if zero_diags.is_empty() {
            let parameters = vec![0.0; directions.len()];
            let base_residual = pc.base_residual;
            return Ok(ParameterizedChoi {
                particular,
                directions,
                parameters,
                base_residual,
            });
        }

        // forced equations: row r of tau must vanish identically
        let mut eq_rows = Vec::new();
        let mut eq_rhs = Vec::new();
        for &r in &zero_diags {
            processed[r] = true;
            for c in 0..d {
                if c == r {
                    continue;
                }
                let coeffs: Vec<Complex64> =
                    directions.iter().map(|dir| dir.get(r, c)).collect();
                let target = -particular.get(r, c);
                eq_rows.push(coeffs.iter().map(|z| z.re).collect::<Vec<f64>>());
                eq_rhs.push(target.re);
                eq_rows.push(coeffs.iter().map(|z| z.im).collect::<Vec<f64>>());
                eq_rhs.push(target.im);
            }
        }

        if directions.is_empty() {
            let worst = eq_rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if worst > 1e-9 {
                return Err(SolverError::PropagationContradiction(format!(
                    "fixed row against a zero diagonal has entry of size {worst:.3e}"
                )));
            }
            continue;
        }

        let k = directions.len();
        let mut eqs = RealMat::zeros(eq_rows.len(), k);
        for (i, row) in eq_rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                eqs.set(i, j, v);
            }
        }
        let ls = solve_least_squares(&eqs, &eq_rhs, RANK_TOL);
        if ls.residual > 1e-9 {
            return Err(SolverError::PropagationContradiction(format!(
                "forced equations on {} parameters are inconsistent (residual {:.3e})",
                k, ls.residual
            )));
        }

        // substitute the forced assignment
        for (j, &a) in ls.solution.iter().enumerate() {
            particular = particular.add(&directions[j].scale_re(a));
        }
        // remaining freedom: parameter-space nullspace combinations,
        // re-orthonormalized in the Frobenius inner product
        let mut reduced: Vec<Operator> = Vec::new();
        for combo in &ls.nullspace {
            let mut dir = Operator::zeros(d, d);
            for (j, &w) in combo.iter().enumerate() {
                dir = dir.add(&directions[j].scale_re(w));
            }
            for _ in 0..2 {
                for u in &reduced {
                    let overlap = u.frobenius_inner(&dir);
                    dir = dir.sub(&u.scale(overlap));
                }
            }
            let nrm = dir.frobenius_norm();
            if nrm > 1e-10 {
                reduced.push(dir.scale_re(1.0 / nrm));
            }
        }
        let (d_m, d_q) = pc
            .particular
            .factor_dims()
            .expect("parameterized choi carries factor dims");
        directions = reduced
            .into_iter()
            .map(|m| m.with_factor_dims(d_m, d_q))
            .collect();
        particular = particular.with_factor_dims(d_m, d_q);
    }
}
