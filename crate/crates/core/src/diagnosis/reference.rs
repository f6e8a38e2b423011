use super::{Adapter, BinaryLogits, ScoringBackend};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::types::{DiseaseId, Evidence, SymptomId};

/// Laplace smoothing used in the log frequency ratio.
pub const DEFAULT_SMOOTHING: f64 = 0.01;

pub(crate) fn log_ratio(kb: &KnowledgeBase, d: DiseaseId, s: SymptomId, alpha: f64) -> f64 {
    ((kb.freq(d, s) + alpha) / (kb.background(s) + alpha)).ln()
}

pub(crate) fn check_adapter(kb: &KnowledgeBase, adapter: &Adapter) -> Result<()> {
    if adapter.disease_count() != kb.disease_count() || adapter.symptom_count() != kb.symptom_count() {
        return Err(Error::ComponentShapeMismatch(format!(
            "adapter is {}x{}, knowledge base is {}x{}",
            adapter.disease_count(),
            adapter.symptom_count(),
            kb.disease_count(),
            kb.symptom_count()
        )));
    }
    Ok(())
}

fn margin(
    evidence: &Evidence,
    d: DiseaseId,
    kb: &KnowledgeBase,
    adapter: Option<&Adapter>,
    alpha: f64,
) -> Result<f64> {
    kb.check_disease(d)?;
    evidence.check_range(kb.symptom_count())?;
    let mut total = adapter.map_or(0.0, |a| a.bias()[d.0]);
    for &(s, status) in evidence.entries() {
        let correction = adapter.map_or(0.0, |a| a.delta(d, s));
        total += status.sign() * (log_ratio(kb, d, s, alpha) + correction);
    }
    Ok(total)
}

/// Frequency-ratio scorer: the True logit is the signed sum of
/// `ln((freq[d][s] + a) / (bg[s] + a))` over the evidence, plus the adapter
/// correction. The False logit is pinned at zero.
pub fn reference_logits(
    evidence: &Evidence,
    disease: DiseaseId,
    kb: &KnowledgeBase,
    adapter: Option<&Adapter>,
) -> Result<BinaryLogits> {
    if let Some(a) = adapter {
        check_adapter(kb, a)?;
    }
    let t = margin(evidence, disease, kb, adapter, DEFAULT_SMOOTHING)?;
    Ok(BinaryLogits::new(t, 0.0))
}

/// Reference backend with an optional adapter and optional fixed per-disease
/// logit offsets (used to simulate a miscalibrated scorer).
#[derive(Debug, Clone)]
pub struct ReferenceScorer {
    alpha: f64,
    offsets: Option<Vec<f64>>,
    adapter: Option<Adapter>,
}

impl Default for ReferenceScorer {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceScorer {
    pub fn new() -> Self {
        Self {
            alpha: DEFAULT_SMOOTHING,
            offsets: None,
            adapter: None,
        }
    }

    pub fn with_adapter(mut self, adapter: Adapter) -> Self {
        self.adapter = Some(adapter);
        self
    }

    pub fn with_offsets(mut self, offsets: Vec<f64>) -> Self {
        self.offsets = Some(offsets);
        self
    }

    pub fn with_smoothing(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn adapter(&self) -> Option<&Adapter> {
        self.adapter.as_ref()
    }

    pub fn set_adapter(&mut self, adapter: Option<Adapter>) {
        self.adapter = adapter;
    }

    pub fn without_adapter(&self) -> Self {
        Self {
            adapter: None,
            ..self.clone()
        }
    }

    pub fn smoothing(&self) -> f64 {
        self.alpha
    }

    pub(crate) fn offset(&self, d: DiseaseId) -> f64 {
        self.offsets
            .as_ref()
            .and_then(|o| o.get(d.0).copied())
            .unwrap_or(0.0)
    }

    /// Margin computed with an explicit adapter in place of the stored one.
    pub(crate) fn margin_with(
        &self,
        evidence: &Evidence,
        d: DiseaseId,
        kb: &KnowledgeBase,
        adapter: Option<&Adapter>,
    ) -> Result<f64> {
        Ok(self.offset(d) + margin(evidence, d, kb, adapter, self.alpha)?)
    }

    /// Fixed part of the margin (offset plus log ratios), excluding the adapter.
    pub(crate) fn base_margin(&self, evidence: &Evidence, d: DiseaseId, kb: &KnowledgeBase) -> Result<f64> {
        self.margin_with(evidence, d, kb, None)
    }
}

impl ScoringBackend for ReferenceScorer {
    fn score(&self, evidence: &Evidence, disease: DiseaseId, kb: &KnowledgeBase) -> Result<BinaryLogits> {
        if let Some(a) = &self.adapter {
            check_adapter(kb, a)?;
        }
        let t = self.margin_with(evidence, disease, kb, self.adapter.as_ref())?;
        Ok(BinaryLogits::new(t, 0.0))
    }
}
