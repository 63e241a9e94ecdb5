//! On-disk schemas: POVM files and machine-readable verdict reports.
//!
//! Both formats are JSON with complex entries stored as `[re, im]` pairs.
//! Serialization uses shortest round-trip float text, so write/read cycles
//! reproduce every double bit-exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{OutcomeLabel, Povm};
use crate::fock::PolarizationBasis;
use crate::operator::Operator;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum FileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    Version(String),
    #[error("invalid povm: {0}")]
    InvalidPovm(String),
}

/// Serialized POVM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovmFile {
    pub format_version: String,
    pub dim: usize,
    pub elements: Vec<PovmFileElement>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovmFileElement {
    pub label: LabelSpec,
    /// Row-major matrix of `[re, im]` pairs.
    pub matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSpec {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<String>,
}

fn basis_name(basis: PolarizationBasis) -> String {
    basis.label().to_string()
}

fn parse_basis(name: &str) -> Result<PolarizationBasis, FileError> {
    match name {
        "z" => Ok(PolarizationBasis::Z),
        "x" => Ok(PolarizationBasis::X),
        "y" => Ok(PolarizationBasis::Y),
        other => Err(FileError::InvalidPovm(format!("unknown basis {other:?}"))),
    }
}

impl LabelSpec {
    fn from_label(label: &OutcomeLabel) -> LabelSpec {
        match label {
            OutcomeLabel::Bit { b, basis } => LabelSpec {
                kind: "bit".into(),
                b: Some(*b),
                alpha: Some(basis_name(*basis)),
            },
            OutcomeLabel::VacuumFlag => LabelSpec {
                kind: "vacuum_flag".into(),
                b: None,
                alpha: None,
            },
            OutcomeLabel::RawSingle { detector, basis } => LabelSpec {
                kind: "raw_single".into(),
                b: Some(*detector),
                alpha: Some(basis_name(*basis)),
            },
            OutcomeLabel::RawDouble { basis } => LabelSpec {
                kind: "raw_double".into(),
                b: None,
                alpha: Some(basis_name(*basis)),
            },
            OutcomeLabel::RawNone { basis } => LabelSpec {
                kind: "raw_none".into(),
                b: None,
                alpha: Some(basis_name(*basis)),
            },
        }
    }

    fn to_label(&self) -> Result<OutcomeLabel, FileError> {
        let need_alpha = || {
            self.alpha
                .as_deref()
                .ok_or_else(|| FileError::InvalidPovm(format!("label {:?} needs alpha", self.kind)))
        };
        let need_b = || {
            self.b
                .ok_or_else(|| FileError::InvalidPovm(format!("label {:?} needs b", self.kind)))
        };
        match self.kind.as_str() {
            "bit" => Ok(OutcomeLabel::Bit {
                b: need_b()?,
                basis: parse_basis(need_alpha()?)?,
            }),
            "vacuum_flag" => Ok(OutcomeLabel::VacuumFlag),
            "raw_single" => Ok(OutcomeLabel::RawSingle {
                detector: need_b()?,
                basis: parse_basis(need_alpha()?)?,
            }),
            "raw_double" => Ok(OutcomeLabel::RawDouble {
                basis: parse_basis(need_alpha()?)?,
            }),
            "raw_none" => Ok(OutcomeLabel::RawNone {
                basis: parse_basis(need_alpha()?)?,
            }),
            other => Err(FileError::InvalidPovm(format!("unknown label kind {other:?}"))),
        }
    }
}

pub fn matrix_to_pairs(op: &Operator) -> Vec<Vec<[f64; 2]>> {
    (0..op.rows())
        .map(|r| {
            (0..op.cols())
                .map(|c| {
                    let v = op.get(r, c);
                    [v.re, v.im]
                })
                .collect()
        })
        .collect()
}

fn pairs_to_matrix(rows: &[Vec<[f64; 2]>], dim: usize) -> Result<Operator, FileError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(FileError::InvalidPovm(format!(
            "matrix is not {dim}x{dim}"
        )));
    }
    let mut op = Operator::zeros(dim, dim);
    for (r, row) in rows.iter().enumerate() {
        for (c, pair) in row.iter().enumerate() {
            op.set(r, c, Complex64::new(pair[0], pair[1]));
        }
    }
    Ok(op)
}

impl PovmFile {
    pub fn from_povm(povm: &Povm) -> PovmFile {
        PovmFile {
            format_version: FORMAT_VERSION.into(),
            dim: povm.dim,
            elements: povm
                .elements
                .iter()
                .map(|(label, op)| PovmFileElement {
                    label: LabelSpec::from_label(label),
                    matrix: matrix_to_pairs(op),
                })
                .collect(),
        }
    }

    /// Decode and validate the POVM invariants.
    pub fn into_povm(self) -> Result<Povm, FileError> {
        if self.format_version != FORMAT_VERSION {
            return Err(FileError::Version(self.format_version));
        }
        let mut elements = Vec::with_capacity(self.elements.len());
        for el in &self.elements {
            elements.push((el.label.to_label()?, pairs_to_matrix(&el.matrix, self.dim)?));
        }
        let povm = Povm {
            dim: self.dim,
            elements,
        };
        povm.validate()
            .map_err(|e| FileError::InvalidPovm(e.to_string()))?;
        Ok(povm)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<(), FileError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<PovmFile, FileError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Machine-readable verdict report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub format_version: String,
    pub tool_version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub protocol: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub overall_status: String,
    pub blocks: Vec<BlockReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_statistical_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<WitnessReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockReport {
    /// Photon number, absent for single-pair checks.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<usize>,
    pub status: String,
    /// Absent when the verdict was reached before any eigenvalue test ran
    /// (affine infeasibility or a propagation contradiction).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual: Option<f64>,
    pub nullspace_dim: usize,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub block: Option<usize>,
    /// Minimal eigenvalue of the unique constraint-satisfying tau.
    pub eigenvalue: f64,
    /// Expectation of the witness vector in the solver's scale.
    pub expectation: f64,
    /// Expectation rescaled to the normalized entangled-pairing convention.
    pub expectation_normalized: f64,
    /// The witness state vector as `[re, im]` pairs.
    pub vector: Vec<[f64; 2]>,
}

impl Report {
    pub fn write(&self, path: &std::path::Path) -> Result<(), FileError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{build_full_povm, Protocol};

    #[test]
    fn povm_round_trip_bit_exact() {
        for protocol in [Protocol::Bb84, Protocol::SixState] {
            for n in 0..=8 {
                let povm = build_full_povm(protocol, n);
                let file = PovmFile::from_povm(&povm);
                let text = serde_json::to_string(&file).unwrap();
                let parsed: PovmFile = serde_json::from_str(&text).unwrap();
                let back = parsed.into_povm().unwrap();
                assert_eq!(back.dim, povm.dim);
                for ((l1, e1), (l2, e2)) in povm.elements.iter().zip(&back.elements) {
                    assert_eq!(l1, l2);
                    assert!(e1.sub(e2).max_abs() == 0.0, "{protocol:?} n={n}");
                }
            }
        }
    }

    #[test]
    fn version_rejected() {
        let povm = build_full_povm(Protocol::Bb84, 1);
        let mut file = PovmFile::from_povm(&povm);
        file.format_version = "2".into();
        assert!(matches!(file.into_povm(), Err(FileError::Version(_))));
    }

    #[test]
    fn invalid_matrix_shape_rejected() {
        let povm = build_full_povm(Protocol::Bb84, 1);
        let mut file = PovmFile::from_povm(&povm);
        file.elements[0].matrix[0].pop();
        assert!(matches!(file.into_povm(), Err(FileError::InvalidPovm(_))));
    }

    #[test]
    fn incomplete_povm_rejected() {
        let povm = build_full_povm(Protocol::Bb84, 1);
        let mut file = PovmFile::from_povm(&povm);
        file.elements.pop();
        assert!(matches!(file.into_povm(), Err(FileError::InvalidPovm(_))));
    }
}
