//! Command implementations behind the `squash` binary.
//!
//! Exit codes: 0 a squasher exists (or generic success), 1 none exists,
//! 2 inconclusive / not applicable, 64 usage error, 65 unreadable or invalid
//! data.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::{Povm, Protocol};
use crate::report::{BlockReport, PovmFile, Report, WitnessReport, FORMAT_VERSION};
use crate::solver::{
    assemble_constraints, check_protocol, extract_kraus, psd_feasibility, random_density_matrix,
    solve_affine, verify_statistical_equivalence, zero_diagonal_propagation, NotExistsReason,
    SolverError, Verdict, VerdictStatus,
};

pub const EXIT_EXISTS: u8 = 0;
pub const EXIT_NOT_EXISTS: u8 = 1;
pub const EXIT_INCONCLUSIVE: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;

fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

fn status_exit(status: VerdictStatus) -> u8 {
    match status {
        VerdictStatus::Exists => EXIT_EXISTS,
        VerdictStatus::NotExists => EXIT_NOT_EXISTS,
        VerdictStatus::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn load_povm(path: &Path) -> Result<Povm, u8> {
    match PovmFile::read(path).and_then(PovmFile::into_povm) {
        Ok(p) => Ok(p),
        Err(e) => {
            eprintln!("squash: {}: {e}", path.display());
            Err(EXIT_DATA)
        }
    }
}

/// `squash build-povm`: write the protocol POVM of one photon-number block.
pub fn cmd_build_povm(protocol: Protocol, photons: usize, out: &Path) -> u8 {
    let povm = crate::detector::build_full_povm(protocol, photons);
    let file = PovmFile::from_povm(&povm);
    if let Err(e) = file.write(out) {
        eprintln!("squash: cannot write {}: {e}", out.display());
        return EXIT_DATA;
    }
    println!(
        "wrote {} ({} outcomes, dim {})",
        out.display(),
        povm.outcome_count(),
        povm.dim
    );
    EXIT_EXISTS
}

fn witness_report(verdict: &Verdict, d_q: usize, block: Option<usize>) -> Option<WitnessReport> {
    verdict.witness.as_ref().map(|w| {
        let expectation = w.eigenvalue;
        WitnessReport {
            block,
            eigenvalue: w.eigenvalue,
            expectation,
            expectation_normalized: expectation / d_q as f64,
            vector: w
                .vector
                .iter()
                .map(|z| [z.re, z.im])
                .collect(),
        }
    })
}

fn block_report(n: Option<usize>, verdict: &Verdict) -> BlockReport {
    let finite = |v: f64| v.is_finite().then_some(v);
    BlockReport {
        n,
        status: verdict.status.as_str().to_string(),
        min_eigenvalue: finite(verdict.diagnostics.min_eigenvalue),
        residual: finite(verdict.diagnostics.residual),
        nullspace_dim: verdict.diagnostics.nullspace_dim,
        iterations: verdict.diagnostics.iterations,
        reason: verdict.reason.map(|r| r.as_str().to_string()),
    }
}

fn solver_error_verdict(e: &SolverError) -> Option<Verdict> {
    let (reason, residual) = match e {
        SolverError::AffineInfeasible(r) => (NotExistsReason::AffineInfeasible, *r),
        SolverError::PropagationContradiction(_) => {
            (NotExistsReason::PropagationContradiction, f64::NAN)
        }
        _ => return None,
    };
    Some(Verdict {
        status: VerdictStatus::NotExists,
        choi: None,
        witness: None,
        reason: Some(reason),
        diagnostics: crate::solver::Diagnostics {
            residual,
            min_eigenvalue: f64::NAN,
            iterations: 0,
            nullspace_dim: 0,
        },
    })
}

/// Samples drawn for the statistical spot check of `squash check`.
const CHECK_SAMPLES: usize = 50;

/// `squash check`: decide a single full/target POVM pair, no block reduction.
pub fn cmd_check(full_path: &Path, target_path: &Path, report_path: Option<&Path>, seed: u64) -> u8 {
    let full = match load_povm(full_path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let target = match load_povm(target_path) {
        Ok(p) => p,
        Err(code) => return code,
    };

    let run = || -> Result<(Verdict, Option<f64>), SolverError> {
        let system = assemble_constraints(&full, &target)?;
        let pc = solve_affine(&system)?;
        let raw_dim = pc.nullspace_dim();
        let reduced = zero_diagonal_propagation(&pc)?;
        let mut verdict = psd_feasibility(
            &reduced,
            crate::solver::DEFAULT_MAX_ITER,
            crate::solver::DEFAULT_TOL,
        );
        verdict.diagnostics.nullspace_dim = raw_dim;
        let deviation = match (&verdict.status, &verdict.choi) {
            (VerdictStatus::Exists, Some(choi)) => {
                let kraus = extract_kraus(choi)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut worst = 0.0f64;
                for _ in 0..CHECK_SAMPLES {
                    let rho = random_density_matrix(full.dim, &mut rng);
                    let mapped = kraus.apply_channel(&rho);
                    for ((label, fm), (_, fq)) in full.elements.iter().zip(&target.elements) {
                        let _ = label;
                        let p_full = fm.mul(&rho).trace().re;
                        let p_mapped = fq.mul(&mapped).trace().re;
                        worst = worst.max((p_full - p_mapped).abs());
                    }
                }
                Some(worst)
            }
            _ => None,
        };
        Ok((verdict, deviation))
    };

    let (verdict, deviation) = match run() {
        Ok(v) => v,
        Err(e) => match solver_error_verdict(&e) {
            Some(v) => (v, None),
            None => {
                eprintln!("squash: {e}");
                return EXIT_DATA;
            }
        },
    };

    let report = Report {
        format_version: FORMAT_VERSION.into(),
        tool_version: tool_version(),
        command: "check".into(),
        protocol: None,
        seed: Some(seed),
        overall_status: verdict.status.as_str().to_string(),
        blocks: vec![block_report(None, &verdict)],
        max_statistical_deviation: deviation,
        witness: witness_report(&verdict, target.dim, None),
    };
    if let Some(path) = report_path {
        if let Err(e) = report.write(path) {
            eprintln!("squash: cannot write {}: {e}", path.display());
            return EXIT_DATA;
        }
    }
    println!(
        "{} (residual {:.3e}, min eigenvalue {:.3e}, {} free parameters)",
        verdict.status.as_str(),
        verdict.diagnostics.residual,
        verdict.diagnostics.min_eigenvalue,
        verdict.diagnostics.nullspace_dim,
    );
    status_exit(verdict.status)
}

/// Samples per block for the equivalence suite of `squash verify`.
const VERIFY_SAMPLES: usize = 200;

/// `squash verify`: blockwise protocol decision with the QND reduction, plus
/// a statistical-equivalence run on success.
pub fn cmd_verify(
    protocol: Protocol,
    max_photons: usize,
    report_path: Option<&Path>,
    seed: u64,
) -> u8 {
    if max_photons < 1 {
        eprintln!("squash: --max-photons must be at least 1");
        return EXIT_USAGE;
    }
    let check = check_protocol(protocol, max_photons);

    let mut witness = None;
    for block in &check.blocks {
        if block.verdict.status == VerdictStatus::NotExists && witness.is_none() {
            witness = witness_report(&block.verdict, 2, Some(block.n));
        }
    }

    let deviation = match &check.squasher {
        Some(squasher) => {
            match verify_statistical_equivalence(protocol, squasher, VERIFY_SAMPLES, seed) {
                Ok(d) => Some(d),
                Err(e) => {
                    eprintln!("squash: equivalence check failed: {e}");
                    return EXIT_DATA;
                }
            }
        }
        None => None,
    };

    let report = Report {
        format_version: FORMAT_VERSION.into(),
        tool_version: tool_version(),
        command: "verify".into(),
        protocol: Some(protocol.name().to_string()),
        seed: Some(seed),
        overall_status: check.overall.as_str().to_string(),
        blocks: check
            .blocks
            .iter()
            .map(|b| block_report(Some(b.n), &b.verdict))
            .collect(),
        max_statistical_deviation: deviation,
        witness,
    };
    if let Some(path) = report_path {
        if let Err(e) = report.write(path) {
            eprintln!("squash: cannot write {}: {e}", path.display());
            return EXIT_DATA;
        }
    }

    for block in &check.blocks {
        println!(
            "block n={}: {} (min eigenvalue {:.3e}, residual {:.3e}, {} free parameters, {} iterations)",
            block.n,
            block.verdict.status.as_str(),
            block.verdict.diagnostics.min_eigenvalue,
            block.verdict.diagnostics.residual,
            block.nullspace_dim,
            block.verdict.diagnostics.iterations,
        );
    }
    if let Some(dev) = deviation {
        println!("max statistical deviation over {VERIFY_SAMPLES} samples/block: {dev:.3e}");
    }
    println!("{}: {}", protocol.name(), check.overall.as_str());
    status_exit(check.overall)
}

/// `squash witness`: extract a negativity witness from a fully determined
/// pair, or explain why none can be certified.
pub fn cmd_witness(full_path: &Path, target_path: &Path, out: &Path) -> u8 {
    let full = match load_povm(full_path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let target = match load_povm(target_path) {
        Ok(p) => p,
        Err(code) => return code,
    };

    let system = match assemble_constraints(&full, &target) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("squash: {e}");
            return EXIT_DATA;
        }
    };
    let pc = match solve_affine(&system) {
        Ok(pc) => pc,
        Err(e @ SolverError::AffineInfeasible(_)) => {
            println!("NOT_EXISTS: {e}");
            let verdict = solver_error_verdict(&e).expect("affine-infeasible maps to a verdict");
            let report = Report {
                format_version: FORMAT_VERSION.into(),
                tool_version: tool_version(),
                command: "witness".into(),
                protocol: None,
                seed: None,
                overall_status: verdict.status.as_str().to_string(),
                blocks: vec![block_report(None, &verdict)],
                max_statistical_deviation: None,
                witness: None,
            };
            if let Err(e) = report.write(out) {
                eprintln!("squash: cannot write {}: {e}", out.display());
                return EXIT_DATA;
            }
            return EXIT_NOT_EXISTS;
        }
        Err(e) => {
            eprintln!("squash: {e}");
            return EXIT_DATA;
        }
    };

    if pc.nullspace_dim() > 0 {
        println!(
            "underdetermined: {} free parameters; a witness needs a unique solution",
            pc.nullspace_dim()
        );
        return EXIT_INCONCLUSIVE;
    }

    let verdict = psd_feasibility(&pc, crate::solver::DEFAULT_MAX_ITER, crate::solver::DEFAULT_TOL);
    let witness = witness_report(&verdict, target.dim, None);
    let report = Report {
        format_version: FORMAT_VERSION.into(),
        tool_version: tool_version(),
        command: "witness".into(),
        protocol: None,
        seed: None,
        overall_status: verdict.status.as_str().to_string(),
        blocks: vec![block_report(None, &verdict)],
        max_statistical_deviation: None,
        witness: witness.clone(),
    };

    match verdict.status {
        VerdictStatus::NotExists => {
            let w = witness.expect("negative verdicts carry a witness");
            // the expectation must really be negative before the file is
            // trusted as a certificate
            if w.expectation >= 0.0 {
                eprintln!("squash: internal witness sign check failed");
                return EXIT_DATA;
            }
            if let Err(e) = report.write(out) {
                eprintln!("squash: cannot write {}: {e}", out.display());
                return EXIT_DATA;
            }
            println!(
                "NOT_EXISTS: witness eigenvalue {:.6} (normalized expectation {:.6})",
                w.eigenvalue, w.expectation_normalized
            );
            EXIT_NOT_EXISTS
        }
        VerdictStatus::Exists => {
            if let Err(e) = report.write(out) {
                eprintln!("squash: cannot write {}: {e}", out.display());
                return EXIT_DATA;
            }
            println!("PSD - no witness (the unique solution is a valid squasher)");
            EXIT_EXISTS
        }
        VerdictStatus::Inconclusive => {
            println!("INCONCLUSIVE");
            EXIT_INCONCLUSIVE
        }
    }
}

/// Parse the protocol names used across the CLI.
pub fn parse_protocol(name: &str) -> Option<Protocol> {
    match name {
        "bb84" => Some(Protocol::Bb84),
        "six-state" => Some(Protocol::SixState),
        _ => None,
    }
}
