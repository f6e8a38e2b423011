//! Rule-based selector over the policy's candidate actions.
//!
//! When the leading diagnosis is clearly ahead, the selector confirms it by
//! asking its most frequent symptom. Otherwise it asks the candidate that
//! co-occurs most with the symptoms already reported present, and may ask
//! the policy for a fresh candidate set when nothing looks relevant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{top_w_diseases, KnowledgeBase};
use crate::types::{DiseaseId, Evidence, PatientRecord, SymptomId, SymptomStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "symptom")]
pub enum InquiryDecision {
    Ask(SymptomId),
    Retry,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Termination,
    Confirm,
    Relevance,
    Retry,
    Fallback,
}

/// What the selector looked at when deciding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub strategy: Strategy,
    pub margin: f64,
    /// `(action, score)` per inquiry candidate under the strategy used.
    pub scores: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub margin: f64,
    pub relevance_floor: f64,
    pub max_retries: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            relevance_floor: 0.0,
            max_retries: 3,
        }
    }
}

/// Symmetric symptom co-occurrence rates over Present findings.
#[derive(Debug, Clone, PartialEq)]
pub struct Cooccurrence {
    m: usize,
    rate: Vec<f64>,
}

impl Cooccurrence {
    pub fn zeros(m: usize) -> Self {
        Self { m, rate: vec![0.0; m * m] }
    }

    pub fn symptom_count(&self) -> usize {
        self.m
    }

    pub fn get(&self, a: SymptomId, b: SymptomId) -> f64 {
        self.rate[a.0 * self.m + b.0]
    }
}

/// `cooc[a][b] = P(a and b Present | a or b Present)` across records.
pub fn cooccurrence(records: &[PatientRecord], m: usize) -> Result<Cooccurrence> {
    let mut single = vec![0usize; m];
    let mut both = vec![0usize; m * m];
    for r in records {
        let mut present: Vec<usize> = Vec::new();
        for &(s, st) in r.findings() {
            if s.0 >= m {
                return Err(Error::IdOutOfRange {
                    kind: "symptom",
                    id: s.0,
                    size: m,
                });
            }
            if st == SymptomStatus::Present && !present.contains(&s.0) {
                present.push(s.0);
            }
        }
        for &a in &present {
            single[a] += 1;
            for &b in &present {
                both[a * m + b] += 1;
            }
        }
    }
    let mut rate = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            let joint = both[a * m + b];
            let either = single[a] + single[b] - joint;
            if either > 0 {
                rate[a * m + b] = joint as f64 / either as f64;
            }
        }
    }
    Ok(Cooccurrence { m, rate })
}

/// Index of the maximum score; ties go to the earliest entry.
fn best(scores: &[(usize, f64)]) -> (usize, f64) {
    let mut out = scores[0];
    for &(a, v) in &scores[1..] {
        if v > out.1 {
            out = (a, v);
        }
    }
    out
}

/// Chooses among `candidates` (action indices, `m` meaning termination).
/// `retries_left` is how many more Retry answers the caller will honour.
#[allow(clippy::too_many_arguments)]
pub fn select(
    candidates: &[usize],
    c: &[f64],
    kb: &KnowledgeBase,
    evidence: &Evidence,
    cooc: &Cooccurrence,
    retries_left: usize,
    cfg: &SelectorConfig,
) -> Result<(InquiryDecision, Rationale)> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let m = kb.symptom_count();
    if c.len() != kb.disease_count() {
        return Err(Error::LengthMismatch(c.len(), kb.disease_count()));
    }
    if cooc.symptom_count() != m {
        return Err(Error::ComponentShapeMismatch(format!(
            "co-occurrence table covers {} symptoms, knowledge base has {m}",
            cooc.symptom_count()
        )));
    }
    let mut inquiries: Vec<usize> = Vec::with_capacity(candidates.len());
    for &a in candidates {
        if a > m {
            return Err(Error::IdOutOfRange {
                kind: "action",
                id: a,
                size: m + 1,
            });
        }
        if a < m && !inquiries.contains(&a) {
            inquiries.push(a);
        }
    }
    inquiries.sort_unstable();

    let top = top_w_diseases(c, 2);
    let top1: DiseaseId = top[0];
    let margin = c[top1.0] - top.get(1).map_or(0.0, |d| c[d.0]);

    if candidates.contains(&m) {
        let rationale = Rationale {
            strategy: Strategy::Termination,
            margin,
            scores: Vec::new(),
        };
        return Ok((InquiryDecision::Terminate, rationale));
    }

    let freq_scores: Vec<(usize, f64)> = inquiries.iter().map(|&a| (a, kb.freq(top1, SymptomId(a)))).collect();
    let (confirm_best, confirm_score) = best(&freq_scores);
    if margin > cfg.margin && confirm_score > 0.0 {
        let rationale = Rationale {
            strategy: Strategy::Confirm,
            margin,
            scores: freq_scores,
        };
        return Ok((InquiryDecision::Ask(SymptomId(confirm_best)), rationale));
    }

    let rel_scores: Vec<(usize, f64)> = inquiries
        .iter()
        .map(|&a| {
            let r: f64 = evidence.present().map(|p| cooc.get(SymptomId(a), p)).sum();
            (a, r)
        })
        .collect();
    let (rel_best, rel_score) = best(&rel_scores);
    if rel_score > cfg.relevance_floor {
        let rationale = Rationale {
            strategy: Strategy::Relevance,
            margin,
            scores: rel_scores,
        };
        return Ok((InquiryDecision::Ask(SymptomId(rel_best)), rationale));
    }
    if retries_left > 0 {
        let rationale = Rationale {
            strategy: Strategy::Retry,
            margin,
            scores: rel_scores,
        };
        return Ok((InquiryDecision::Retry, rationale));
    }
    let rationale = Rationale {
        strategy: Strategy::Fallback,
        margin,
        scores: freq_scores,
    };
    Ok((InquiryDecision::Ask(SymptomId(confirm_best)), rationale))
}
