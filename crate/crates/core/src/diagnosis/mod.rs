//! Diagnostic confidence from a pair of binary logits.
//!
//! Every candidate disease is scored in isolation: the backend sees the
//! evidence and one disease at a time and answers with the logits of a
//! True/False verdict. A temperature-scaled two-way softmax turns those
//! logits into a confidence in (0, 1).

mod adapter;
mod calibration;
mod reference;

pub use adapter::Adapter;
pub use calibration::{
    build_calibration_set, calibrate, calibration_groups, calibration_objective, evaluate_calibration, kl_loss,
    target_distribution, CalibrationConfig, CalibrationOutcome, CalibrationReport, SubTrajectory,
};
pub use reference::{reference_logits, ReferenceScorer, DEFAULT_SMOOTHING};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::types::{DiseaseId, Evidence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogits {
    #[serde(rename = "logit_T")]
    pub logit_true: f64,
    #[serde(rename = "logit_F")]
    pub logit_false: f64,
}

impl BinaryLogits {
    pub fn new(logit_true: f64, logit_false: f64) -> Self {
        Self {
            logit_true,
            logit_false,
        }
    }

    pub fn margin(&self) -> f64 {
        self.logit_true - self.logit_false
    }

    pub fn is_finite(&self) -> bool {
        self.logit_true.is_finite() && self.logit_false.is_finite()
    }
}

/// Anything that can answer "is `disease` plausible given `evidence`?" with
/// a pair of logits. Implementations must be deterministic and must not let
/// one disease's query influence another's.
pub trait ScoringBackend: Send + Sync {
    fn score(&self, evidence: &Evidence, disease: DiseaseId, kb: &KnowledgeBase)
        -> Result<BinaryLogits>;
}

impl<T: ScoringBackend + ?Sized> ScoringBackend for &T {
    fn score(&self, evidence: &Evidence, disease: DiseaseId, kb: &KnowledgeBase) -> Result<BinaryLogits> {
        (**self).score(evidence, disease, kb)
    }
}

impl<T: ScoringBackend + ?Sized> ScoringBackend for Box<T> {
    fn score(&self, evidence: &Evidence, disease: DiseaseId, kb: &KnowledgeBase) -> Result<BinaryLogits> {
        (**self).score(evidence, disease, kb)
    }
}

impl<T: ScoringBackend + ?Sized> ScoringBackend for std::sync::Arc<T> {
    fn score(&self, evidence: &Evidence, disease: DiseaseId, kb: &KnowledgeBase) -> Result<BinaryLogits> {
        (**self).score(evidence, disease, kb)
    }
}

/// Temperature-scaled softmax probability of the True logit.
pub fn confidence(logits: BinaryLogits, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTemperature(tau));
    }
    let a = logits.logit_true / tau;
    let b = logits.logit_false / tau;
    let top = a.max(b);
    let ea = (a - top).exp();
    let eb = (b - top).exp();
    Ok(ea / (ea + eb))
}

/// Confidence for every candidate disease, each queried independently.
pub fn diagnose<B: ScoringBackend + ?Sized>(
    evidence: &Evidence,
    kb: &KnowledgeBase,
    backend: &B,
    tau: f64,
) -> Result<Vec<f64>> {
    (0..kb.disease_count())
        .map(|d| confidence(backend.score(evidence, DiseaseId(d), kb)?, tau))
        .collect()
}

/// Index of the highest confidence; the first maximum wins ties.
pub fn final_diagnosis(c: &[f64]) -> Result<DiseaseId> {
    if c.is_empty() {
        return Err(Error::EmptyVector);
    }
    let mut best = 0;
    for (i, &v) in c.iter().enumerate().skip(1) {
        if v > c[best] {
            best = i;
        }
    }
    Ok(DiseaseId(best))
}

/// Rank of `d` under `c`: one plus the number of diseases with strictly
/// higher confidence, with earlier indices winning ties.
pub fn confidence_rank(c: &[f64], d: DiseaseId) -> usize {
    let target = c[d.0];
    1 + c
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v > target || (v == target && i < d.0))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confidence_examples() {
        for tau in [0.1, 1.0, 7.5] {
            let c = confidence(BinaryLogits::new(1.3, 1.3), tau).unwrap();
            assert_eq!(c, 0.5);
        }
        let tau = 2.0;
        let c = confidence(BinaryLogits::new(tau * 3f64.ln(), 0.0), tau).unwrap();
        assert!((c - 0.75).abs() < 1e-12);
        let c = confidence(BinaryLogits::new(10.0, 0.0), 0.1).unwrap();
        assert!(c > 0.999);
        assert!(matches!(
            confidence(BinaryLogits::new(0.0, 0.0), 0.0),
            Err(Error::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn confidence_is_overflow_safe() {
        let c = confidence(BinaryLogits::new(5000.0, 0.0), 1.0).unwrap();
        assert_eq!(c, 1.0);
        let c = confidence(BinaryLogits::new(-5000.0, 0.0), 1.0).unwrap();
        assert!(c >= 0.0 && c.is_finite());
    }

    #[test]
    fn final_diagnosis_examples() {
        assert_eq!(final_diagnosis(&[0.2, 0.9, 0.9]).unwrap(), DiseaseId(1));
        assert_eq!(final_diagnosis(&[0.5]).unwrap(), DiseaseId(0));
        assert!(matches!(final_diagnosis(&[]), Err(Error::EmptyVector)));
    }

    #[test]
    fn rank_breaks_ties_by_index() {
        let c = [0.4, 0.9, 0.4, 0.1];
        assert_eq!(confidence_rank(&c, DiseaseId(1)), 1);
        assert_eq!(confidence_rank(&c, DiseaseId(0)), 2);
        assert_eq!(confidence_rank(&c, DiseaseId(2)), 3);
        assert_eq!(confidence_rank(&c, DiseaseId(3)), 4);
    }

    proptest! {
        #[test]
        fn confidence_monotone_and_shift_invariant(
            a in -50.0f64..50.0, b in -50.0f64..50.0, shift in -100.0f64..100.0, tau in 0.05f64..10.0
        ) {
            let c1 = confidence(BinaryLogits::new(a, 0.0), tau).unwrap();
            let c2 = confidence(BinaryLogits::new(a + shift, shift), tau).unwrap();
            prop_assert!((c1 - c2).abs() < 1e-9);
            if a < b {
                let cb = confidence(BinaryLogits::new(b, 0.0), tau).unwrap();
                prop_assert!(c1 <= cb);
            }
        }

        #[test]
        fn argmax_equivariant_and_monotone_invariant(
            c in proptest::collection::vec(0.0f64..1.0, 1..12), rot in 0usize..12
        ) {
            let d = final_diagnosis(&c).unwrap();
            let transformed: Vec<f64> = c.iter().map(|x| (3.0 * x).exp() - 2.0).collect();
            prop_assert_eq!(final_diagnosis(&transformed).unwrap(), d);
            let k = rot % c.len();
            let mut rotated = c.clone();
            rotated.rotate_left(k);
            let dr = final_diagnosis(&rotated).unwrap();
            prop_assert_eq!(c[(dr.0 + k) % c.len()], c[d.0]);
        }
    }
}
