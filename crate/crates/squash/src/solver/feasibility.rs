//! PSD feasibility over the affine solution set.

use super::constraints::ParameterizedChoi;
use super::{Diagnostics, NotExistsReason, Verdict, VerdictStatus, Witness};
use crate::operator::{hermitian_eig, project_psd, Operator};

/// Default iteration cap for the alternating-projection search.
pub const DEFAULT_MAX_ITER: usize = 50_000;
/// Default feasibility tolerance (relative, against max |tau| and 1).
pub const DEFAULT_TOL: f64 = 1e-9;

/// Decide PSD feasibility of the affine family.
///
/// A zero-dimensional family is decided exactly by one eigendecomposition:
/// the unique constraint-satisfying tau either is PSD (EXISTS) or its minimal
/// eigenvector is a negativity witness (NOT_EXISTS).
///
/// Otherwise the affine set and the PSD cone are alternately projected with
/// Dykstra's correction on the cone step. Convergence to a point that is
/// affine-exact and PSD within tolerance yields EXISTS; hitting the
/// iteration cap yields INCONCLUSIVE, never NOT_EXISTS, because alternating
/// projections cannot certify an empty intersection.
pub fn psd_feasibility(pc: &ParameterizedChoi, max_iter: usize, tol: f64) -> Verdict {
    let nullspace_dim = pc.nullspace_dim();
    if nullspace_dim == 0 {
        let tau = pc.current();
        let eig = hermitian_eig(&tau).expect("affine members are hermitian");
        let scale = tau.max_abs().max(1.0);
        let min_eig = eig.min_eigenvalue();
        let diagnostics = Diagnostics {
            residual: pc.base_residual,
            min_eigenvalue: min_eig,
            iterations: 0,
            nullspace_dim,
        };
        if min_eig >= -tol * scale {
            return Verdict {
                status: VerdictStatus::Exists,
                choi: Some(tau),
                witness: None,
                reason: None,
                diagnostics,
            };
        }
        return Verdict {
            status: VerdictStatus::NotExists,
            choi: Some(tau),
            witness: Some(Witness {
                eigenvalue: min_eig,
                vector: eig.eigenvector(0),
            }),
            reason: Some(NotExistsReason::NegativeEigenvalue),
            diagnostics,
        };
    }

    // Dykstra-corrected alternating projections; the affine projection is
    // exact, so the correction is carried on the cone step only. Once the
    // decision threshold is met the iteration keeps polishing toward a much
    // smaller residual negativity, so downstream Kraus extraction and
    // statistics inherit the extra accuracy.
    let mut x = pc.current();
    let mut correction = Operator::zeros(x.rows(), x.cols());
    let mut best: Option<(f64, Operator)> = None;
    let mut decided_at: Option<usize> = None;
    for iter in 1..=max_iter {
        let shifted = x.add(&correction);
        let cone_point =
            project_psd(&shifted.hermitized()).expect("dykstra iterates stay hermitian");
        correction = shifted.sub(&cone_point);
        x = pc.project(&cone_point);

        let eig = hermitian_eig(&x).expect("affine members are hermitian");
        let min_eig = eig.min_eigenvalue();
        let scale = x.max_abs().max(1.0);
        if best.as_ref().is_none_or(|(b, _)| min_eig > *b) {
            best = Some((min_eig, x.clone()));
        }
        if min_eig >= -tol * scale && decided_at.is_none() {
            decided_at = Some(iter);
        }
        if let Some(decided) = decided_at {
            let polished = min_eig >= -POLISH_TOL * scale;
            if polished || iter >= decided + POLISH_EXTRA_ITERS {
                let (best_eig, best_point) = best.expect("a decided run has an iterate");
                return Verdict {
                    status: VerdictStatus::Exists,
                    choi: Some(best_point),
                    witness: None,
                    reason: None,
                    diagnostics: Diagnostics {
                        residual: pc.base_residual,
                        min_eigenvalue: best_eig,
                        iterations: iter,
                        nullspace_dim,
                    },
                };
            }
        }
    }

    Verdict {
        status: VerdictStatus::Inconclusive,
        choi: None,
        witness: None,
        reason: None,
        diagnostics: Diagnostics {
            residual: pc.base_residual,
            min_eigenvalue: best.map_or(f64::NEG_INFINITY, |(b, _)| b),
            iterations: max_iter,
            nullspace_dim,
        },
    }
}

/// Negativity level the polish phase aims for after the decision threshold
/// is met.
const POLISH_TOL: f64 = 1e-13;
/// Extra iterations granted to the polish phase.
const POLISH_EXTRA_ITERS: usize = 2000;

/// Magnitude below which a perturbed minimum eigenvalue counts as breaking
/// positivity.
const PROBE_BREAK_TOL: f64 = -1e-6;

/// Numerical uniqueness evidence: perturb the found solution along every
/// remaining free direction and require positivity to break both ways.
///
/// `grid` magnitudes are spaced geometrically in [0.01, 0.1]. Returns false
/// as soon as some perturbed point stays (near-)PSD, i.e. some genuine
/// freedom remains. This is evidence, not proof.
pub fn uniqueness_probe(pc: &ParameterizedChoi, verdict: &Verdict, grid: usize) -> bool {
    let Some(choi) = &verdict.choi else {
        return false;
    };
    if verdict.status != VerdictStatus::Exists {
        return false;
    }
    let magnitudes: Vec<f64> = if grid <= 1 {
        vec![0.01]
    } else {
        (0..grid)
            .map(|k| 0.01 * 10f64.powf(k as f64 / (grid as f64 - 1.0)))
            .collect()
    };
    for dir in &pc.directions {
        for &mag in &magnitudes {
            for sign in [1.0, -1.0] {
                let perturbed = choi.add(&dir.scale_re(sign * mag));
                let eig = hermitian_eig(&perturbed).expect("perturbed tau stays hermitian");
                if eig.min_eigenvalue() >= PROBE_BREAK_TOL {
                    return false;
                }
            }
        }
    }
    true
}
