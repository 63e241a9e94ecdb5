//! Full and target POVMs for BB84 and six-state threshold-detector
//! measurements.
//!
//! A threshold detector behind a polarizing beamsplitter produces four raw
//! click patterns per basis choice: no click, a single click on either
//! detector, or a double click. The protocol-level POVM folds in the uniform
//! basis-choice probability and reassigns double clicks to a uniformly random
//! bit, which yields the n-photon elements
//!
//! ```text
//! F^{(b, alpha)} = (-1)^b / (2k) (|n,0><n,0|_alpha - |0,n><0,n|_alpha) + 1/(2k)
//! ```
//!
//! with `k` the number of bases (2 for BB84, 3 for six-state). The zero-photon
//! block is a dedicated vacuum flag.

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{extremal_state, Mode, PolarizationBasis};
use crate::operator::{gram_schmidt, hermitian_eig, vectorize, Operator, HERMITICITY_TOL};

#[derive(Debug, Error)]
pub enum PovmError {
    #[error("element {0} is not hermitian")]
    NotHermitian(String),
    #[error("element {0} has negative eigenvalue {1:.3e}")]
    NotPsd(String, f64),
    #[error("elements do not sum to identity (max deviation {0:.3e})")]
    Incomplete(f64),
    #[error("element dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("missing raw POVM for basis {0}")]
    MissingBasis(String),
    #[error("outcome labels do not match: {0}")]
    LabelMismatch(String),
}

/// Measurement outcome identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeLabel {
    /// Post-processed bit value in a basis.
    Bit { b: u8, basis: PolarizationBasis },
    /// Zero input photons.
    VacuumFlag,
    /// Raw single click on one detector.
    RawSingle { detector: u8, basis: PolarizationBasis },
    /// Raw simultaneous click of both detectors.
    RawDouble { basis: PolarizationBasis },
    /// Raw absence of any click.
    RawNone { basis: PolarizationBasis },
}

impl std::fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutcomeLabel::Bit { b, basis } => write!(f, "bit({b},{})", basis.label()),
            OutcomeLabel::VacuumFlag => write!(f, "vacuum_flag"),
            OutcomeLabel::RawSingle { detector, basis } => {
                write!(f, "raw_single({detector},{})", basis.label())
            }
            OutcomeLabel::RawDouble { basis } => write!(f, "raw_double({})", basis.label()),
            OutcomeLabel::RawNone { basis } => write!(f, "raw_none({})", basis.label()),
        }
    }
}

/// An ordered POVM: labelled Hermitian PSD elements summing to identity.
#[derive(Debug, Clone)]
pub struct Povm {
    pub dim: usize,
    pub elements: Vec<(OutcomeLabel, Operator)>,
}

/// Relative PSD tolerance for POVM element validation.
const ELEMENT_PSD_TOL: f64 = 1e-9;
/// Max-norm tolerance for the completeness sum.
const COMPLETENESS_TOL: f64 = 1e-10;

impl Povm {
    pub fn outcome_count(&self) -> usize {
        self.elements.len()
    }

    pub fn labels(&self) -> Vec<OutcomeLabel> {
        self.elements.iter().map(|(l, _)| *l).collect()
    }

    /// Check hermiticity, positivity, and completeness of every element.
    pub fn validate(&self) -> Result<(), PovmError> {
        let mut sum = Operator::zeros(self.dim, self.dim);
        for (label, el) in &self.elements {
            if el.rows() != self.dim || el.cols() != self.dim {
                return Err(PovmError::DimensionMismatch {
                    expected: self.dim,
                    got: el.rows(),
                });
            }
            if !el.is_hermitian(HERMITICITY_TOL) {
                return Err(PovmError::NotHermitian(label.to_string()));
            }
            let eig = hermitian_eig(el).map_err(|_| PovmError::NotHermitian(label.to_string()))?;
            let scale = el.max_abs().max(1.0);
            if eig.min_eigenvalue() < -ELEMENT_PSD_TOL * scale {
                return Err(PovmError::NotPsd(label.to_string(), eig.min_eigenvalue()));
            }
            sum = sum.add(el);
        }
        let defect = sum.sub(&Operator::identity(self.dim)).max_abs();
        if defect > COMPLETENESS_TOL {
            return Err(PovmError::Incomplete(defect));
        }
        Ok(())
    }

    /// Outcome probabilities for a state.
    pub fn probabilities(&self, rho: &Operator) -> Vec<f64> {
        self.elements
            .iter()
            .map(|(_, el)| el.mul(rho).trace().re)
            .collect()
    }
}

/// Protocol selector: which polarization bases are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Bb84,
    SixState,
}

impl Protocol {
    pub fn bases(&self) -> &'static [PolarizationBasis] {
        match self {
            Protocol::Bb84 => &[PolarizationBasis::Z, PolarizationBasis::X],
            Protocol::SixState => &[
                PolarizationBasis::Z,
                PolarizationBasis::X,
                PolarizationBasis::Y,
            ],
        }
    }

    pub fn basis_probability(&self) -> f64 {
        1.0 / self.bases().len() as f64
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Bb84 => "bb84",
            Protocol::SixState => "six-state",
        }
    }
}

/// Raw click-pattern POVM of one basis choice on the n-photon space.
///
/// For `n = 0` the only outcome is "no click" (identity on the 1-dim vacuum
/// block). For `n >= 1` the no-click element is the zero operator and is
/// omitted; a single photon cannot double-click, so that element is the zero
/// matrix at `n = 1` but kept for uniform shape.
pub fn raw_threshold_povm(alpha: PolarizationBasis, n: usize) -> Povm {
    if n == 0 {
        return Povm {
            dim: 1,
            elements: vec![(OutcomeLabel::RawNone { basis: alpha }, Operator::identity(1))],
        };
    }
    let dim = n + 1;
    let p0 = Operator::projector(&extremal_state(alpha, n, Mode::First));
    let p1 = Operator::projector(&extremal_state(alpha, n, Mode::Second));
    let double = Operator::identity(dim).sub(&p0).sub(&p1);
    Povm {
        dim,
        elements: vec![
            (OutcomeLabel::RawSingle { detector: 0, basis: alpha }, p0),
            (OutcomeLabel::RawSingle { detector: 1, basis: alpha }, p1),
            (OutcomeLabel::RawDouble { basis: alpha }, double),
        ],
    }
}

/// Fold raw per-basis POVMs into the protocol POVM: double clicks are split
/// evenly between the two bit values and the uniform basis-choice probability
/// is absorbed into the elements.
pub fn postprocess_double_clicks(raws: &[Povm], protocol: Protocol) -> Result<Povm, PovmError> {
    let prob = protocol.basis_probability();
    let mut elements = Vec::new();
    let mut dim = None;
    for alpha in protocol.bases() {
        let raw = raws
            .iter()
            .find(|p| {
                p.elements
                    .iter()
                    .any(|(l, _)| matches!(l, OutcomeLabel::RawSingle { basis, .. } if basis == alpha))
            })
            .ok_or_else(|| PovmError::MissingBasis(alpha.label().into()))?;
        let single = |det: u8| {
            raw.elements
                .iter()
                .find(|(l, _)| {
                    matches!(l, OutcomeLabel::RawSingle { detector, basis }
                        if *detector == det && basis == alpha)
                })
                .map(|(_, e)| e.clone())
        };
        let double = raw
            .elements
            .iter()
            .find(|(l, _)| matches!(l, OutcomeLabel::RawDouble { basis } if basis == alpha))
            .map(|(_, e)| e.clone())
            .ok_or_else(|| PovmError::MissingBasis(alpha.label().into()))?;
        dim.get_or_insert(raw.dim);
        for b in 0..2u8 {
            let s = single(b).ok_or_else(|| PovmError::MissingBasis(alpha.label().into()))?;
            let el = s.add(&double.scale_re(0.5)).scale_re(prob);
            elements.push((OutcomeLabel::Bit { b, basis: *alpha }, el));
        }
    }
    Ok(Povm {
        dim: dim.unwrap_or(0),
        elements,
    })
}

/// Protocol POVM on the n-photon block: the vacuum flag at `n = 0`, otherwise
/// the post-processed bit outcomes for every basis.
pub fn build_full_povm(protocol: Protocol, n: usize) -> Povm {
    if n == 0 {
        return Povm {
            dim: 1,
            elements: vec![(OutcomeLabel::VacuumFlag, Operator::identity(1))],
        };
    }
    let raws: Vec<Povm> = protocol
        .bases()
        .iter()
        .map(|&alpha| raw_threshold_povm(alpha, n))
        .collect();
    postprocess_double_clicks(&raws, protocol)
        .expect("raw POVMs constructed for every protocol basis")
}

/// The qubit-level target measurement: the same construction at one photon.
pub fn build_target_povm(protocol: Protocol) -> Povm {
    build_full_povm(protocol, 1)
}

/// Dimension of the operator span of the POVM elements.
pub fn operator_span_dimension(povm: &Povm) -> usize {
    let vecs: Vec<Vec<Complex64>> = povm
        .elements
        .iter()
        .map(|(_, el)| vectorize(el).entries)
        .collect();
    match gram_schmidt(&vecs, 1e-9) {
        Ok(basis) => basis.len(),
        Err(_) => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Direct evaluation of the n-photon element formula, used as the second
    /// route against the post-processing construction.
    fn formula_element(
        protocol: Protocol,
        b: u8,
        alpha: PolarizationBasis,
        n: usize,
    ) -> Operator {
        let k = protocol.bases().len() as f64;
        let p0 = Operator::projector(&extremal_state(alpha, n, Mode::First));
        let p1 = Operator::projector(&extremal_state(alpha, n, Mode::Second));
        let sign = if b == 0 { 1.0 } else { -1.0 };
        p0.sub(&p1)
            .scale_re(sign / (2.0 * k))
            .add(&Operator::identity(n + 1).scale_re(1.0 / (2.0 * k)))
    }

    #[test]
    fn raw_single_photon_z() {
        let povm = raw_threshold_povm(PolarizationBasis::Z, 1);
        assert_eq!(povm.elements.len(), 3);
        assert!(povm.elements[0].1.sub(&Operator::diag(&[1.0, 0.0])).max_abs() < 1e-15);
        assert!(povm.elements[1].1.sub(&Operator::diag(&[0.0, 1.0])).max_abs() < 1e-15);
        // one photon cannot double-click
        assert!(povm.elements[2].1.max_abs() < 1e-15);
    }

    #[test]
    fn raw_two_photon_double_click_is_11_projector() {
        let povm = raw_threshold_povm(PolarizationBasis::Z, 2);
        let double = &povm.elements[2].1;
        // 1_3 minus the two rank-1 projectors leaves |1,1><1,1|
        let mut expected = Operator::zeros(3, 3);
        expected.set(1, 1, Complex64::ONE);
        assert!(double.sub(&expected).max_abs() < 1e-14);
    }

    #[test]
    fn raw_three_photon_x_projector() {
        let povm = raw_threshold_povm(PolarizationBasis::X, 3);
        let expected = Operator::projector(&extremal_state(PolarizationBasis::X, 3, Mode::First));
        assert!(povm.elements[0].1.sub(&expected).max_abs() < 1e-14);
    }

    #[test]
    fn postprocessed_single_photon_z_element() {
        let povm = build_full_povm(Protocol::Bb84, 1);
        let (label, el) = &povm.elements[0];
        assert_eq!(
            *label,
            OutcomeLabel::Bit { b: 0, basis: PolarizationBasis::Z }
        );
        assert!(el.sub(&Operator::diag(&[0.5, 0.0])).max_abs() < 1e-15);
    }

    #[test]
    fn bb84_n3_completeness() {
        let povm = build_full_povm(Protocol::Bb84, 3);
        assert_eq!(povm.elements.len(), 4);
        povm.validate().unwrap();
    }

    #[test]
    fn six_state_n3_z_element_formula() {
        let povm = build_full_povm(Protocol::SixState, 3);
        let el = &povm.elements[0].1;
        let p0 = Operator::projector(&extremal_state(PolarizationBasis::Z, 3, Mode::First));
        let p1 = Operator::projector(&extremal_state(PolarizationBasis::Z, 3, Mode::Second));
        let expected = Operator::identity(4).add(&p0).sub(&p1).scale_re(1.0 / 6.0);
        assert!(el.sub(&expected).max_abs() < 1e-14);
    }

    #[test]
    fn six_state_n2_validates() {
        let povm = build_full_povm(Protocol::SixState, 2);
        assert_eq!(povm.elements.len(), 6);
        povm.validate().unwrap();
    }

    #[test]
    fn vacuum_block() {
        let povm = build_full_povm(Protocol::Bb84, 0);
        assert_eq!(povm.dim, 1);
        assert_eq!(povm.elements.len(), 1);
        assert_eq!(povm.elements[0].0, OutcomeLabel::VacuumFlag);
    }

    #[test]
    fn target_povm_matches_qubit_matrices() {
        let povm = build_target_povm(Protocol::Bb84);
        let expected = [
            Operator::diag(&[0.5, 0.0]),
            Operator::diag(&[0.0, 0.5]),
            Operator::from_rows(&[
                vec![c(0.25, 0.0), c(0.25, 0.0)],
                vec![c(0.25, 0.0), c(0.25, 0.0)],
            ]),
            Operator::from_rows(&[
                vec![c(0.25, 0.0), c(-0.25, 0.0)],
                vec![c(-0.25, 0.0), c(0.25, 0.0)],
            ]),
        ];
        assert_eq!(povm.elements.len(), 4);
        for ((_, got), want) in povm.elements.iter().zip(&expected) {
            assert!(got.sub(want).max_abs() < 1e-15);
        }
    }

    #[test]
    fn six_state_target_pauli_differences() {
        let povm = build_target_povm(Protocol::SixState);
        povm.validate().unwrap();
        let paulis = [
            // sigma_z, sigma_x, sigma_y in the H/V basis
            Operator::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]]),
            Operator::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]),
            Operator::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]),
        ];
        for (alpha, sigma) in [PolarizationBasis::Z, PolarizationBasis::X, PolarizationBasis::Y]
            .iter()
            .zip(&paulis)
        {
            let find = |b: u8| {
                povm.elements
                    .iter()
                    .find(|(l, _)| {
                        matches!(l, OutcomeLabel::Bit { b: bb, basis } if *bb == b && basis == alpha)
                    })
                    .map(|(_, e)| e.clone())
                    .unwrap()
            };
            let diff = find(0).sub(&find(1));
            assert!(diff.sub(&sigma.scale_re(1.0 / 3.0)).max_abs() < 1e-14);
        }
    }

    #[test]
    fn formula_route_matches_postprocessing_route() {
        for protocol in [Protocol::Bb84, Protocol::SixState] {
            for n in 1..=8 {
                let povm = build_full_povm(protocol, n);
                for (label, el) in &povm.elements {
                    let OutcomeLabel::Bit { b, basis } = label else {
                        panic!("unexpected label {label}")
                    };
                    let direct = formula_element(protocol, *b, *basis, n);
                    assert!(
                        el.sub(&direct).max_abs() < 1e-12,
                        "{protocol:?} n={n} {label}"
                    );
                }
            }
        }
    }

    /// The n=3 elements compressed to the four-vector extremal basis must
    /// reproduce the fixed matrices with s = 2^{1-n}, t = s sqrt(2^{n-1}-1),
    /// u = 1 - s.
    #[test]
    fn bb84_n3_restricted_matrix_display() {
        use crate::fock::{p_subspace, restrict_operator};
        let n = 3;
        let s = 0.25;
        let t = 3f64.sqrt() / 4.0;
        let u = 0.75;
        let dec = p_subspace(n, Protocol::Bb84.bases()).unwrap();
        let povm = build_full_povm(Protocol::Bb84, n);
        for (label, el) in &povm.elements {
            let OutcomeLabel::Bit { b, basis } = label else {
                panic!("unexpected label")
            };
            let got = restrict_operator(el, &dec.p_basis).unwrap();
            let expected = match basis {
                PolarizationBasis::Z => {
                    let hi = if *b == 0 { 0.5 } else { 0.0 };
                    Operator::diag(&[hi, 0.5 - hi, 0.25, 0.25])
                }
                PolarizationBasis::X => {
                    let sign = if *b == 0 { 1.0 } else { -1.0 };
                    let mut m = Operator::identity(4).scale_re(0.25);
                    for (r, cc, v) in [
                        (0usize, 1usize, s),
                        (0, 3, t),
                        (1, 2, t),
                        (2, 3, u),
                    ] {
                        let w = Complex64::new(sign * v / 4.0, 0.0);
                        m.set(r, cc, m.get(r, cc) + w);
                        m.set(cc, r, m.get(cc, r) + w);
                    }
                    m
                }
                PolarizationBasis::Y => panic!("no y outcomes in bb84"),
            };
            assert!(
                got.sub(&expected).max_abs() < 1e-14,
                "{label}: {:.3e}",
                got.sub(&expected).max_abs()
            );
        }
    }

    /// Restricted to the complement of the extremal span, every element is
    /// the same multiple of the identity; the constant is found by a trace
    /// ratio and equals 1/4 for two bases.
    #[test]
    fn bb84_perp_restriction_proportional_to_identity() {
        use crate::fock::{p_subspace, restrict_operator};
        for n in [4usize, 5, 6, 8] {
            let dec = p_subspace(n, Protocol::Bb84.bases()).unwrap();
            assert!(!dec.p_perp_basis.is_empty(), "n={n}");
            let povm = build_full_povm(Protocol::Bb84, n);
            let k = dec.p_perp_basis.len();
            for (label, el) in &povm.elements {
                let restricted = restrict_operator(el, &dec.p_perp_basis).unwrap();
                let c = restricted.trace().re / k as f64;
                assert!((c - 0.25).abs() < 1e-12, "n={n} {label}: c = {c}");
                let defect = restricted
                    .sub(&Operator::identity(k).scale_re(c))
                    .max_abs();
                assert!(defect < 1e-12, "n={n} {label}: defect {defect:.3e}");
            }
        }
    }

    #[test]
    fn probabilities_nonnegative_and_normalized() {
        for protocol in [Protocol::Bb84, Protocol::SixState] {
            for n in 1..=5 {
                let povm = build_full_povm(protocol, n);
                // a deterministic mixed state: normalized diag(1..=dim)
                let dim = n + 1;
                let total: f64 = (1..=dim).map(|k| k as f64).sum();
                let weights: Vec<f64> = (1..=dim).map(|k| k as f64 / total).collect();
                let rho = Operator::diag(&weights);
                let probs = povm.probabilities(&rho);
                assert!(probs.iter().all(|&p| p >= -1e-12));
                let sum: f64 = probs.iter().sum();
                assert!((sum - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn span_dimensions() {
        assert_eq!(operator_span_dimension(&build_target_povm(Protocol::Bb84)), 3);
        assert_eq!(
            operator_span_dimension(&build_target_povm(Protocol::SixState)),
            4
        );
        let trivial = Povm {
            dim: 2,
            elements: vec![(OutcomeLabel::VacuumFlag, Operator::identity(2))],
        };
        assert_eq!(operator_span_dimension(&trivial), 1);
    }

    #[test]
    fn postprocess_rejects_missing_basis() {
        let raws = vec![raw_threshold_povm(PolarizationBasis::Z, 2)];
        assert!(matches!(
            postprocess_double_clicks(&raws, Protocol::Bb84),
            Err(PovmError::MissingBasis(_))
        ));
    }

    #[test]
    fn validate_rejects_incomplete() {
        let povm = Povm {
            dim: 2,
            elements: vec![(
                OutcomeLabel::Bit { b: 0, basis: PolarizationBasis::Z },
                Operator::diag(&[0.5, 0.0]),
            )],
        };
        assert!(matches!(povm.validate(), Err(PovmError::Incomplete(_))));
    }

    #[test]
    fn validate_rejects_negative_element() {
        let povm = Povm {
            dim: 2,
            elements: vec![
                (
                    OutcomeLabel::Bit { b: 0, basis: PolarizationBasis::Z },
                    Operator::diag(&[1.5, 0.5]),
                ),
                (
                    OutcomeLabel::Bit { b: 1, basis: PolarizationBasis::Z },
                    Operator::diag(&[-0.5, 0.5]),
                ),
            ],
        };
        assert!(matches!(povm.validate(), Err(PovmError::NotPsd(_, _))));
    }
}
