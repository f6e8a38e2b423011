//! Disease–symptom knowledge base estimated from training records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DiseaseId, PatientRecord, SymptomId, SymptomStatus};

/// String names for symptom and disease indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub symptoms: Vec<String>,
    pub diseases: Vec<String>,
}

impl Vocab {
    pub fn numbered(m: usize, n: usize) -> Self {
        Self {
            symptoms: (0..m).map(|i| format!("symptom_{i}")).collect(),
            diseases: (0..n).map(|i| format!("disease_{i}")).collect(),
        }
    }

    pub fn symptom_index(&self, name: &str) -> Option<usize> {
        self.symptoms.iter().position(|s| s == name)
    }

    pub fn disease_index(&self, name: &str) -> Option<usize> {
        self.diseases.iter().position(|s| s == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    m: usize,
    n: usize,
    /// Row-major `n x m` presence frequencies.
    freq: Vec<f64>,
    prior: Vec<f64>,
    /// Per-symptom mean frequency over diseases.
    background: Vec<f64>,
    relevant: Vec<Vec<(SymptomId, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vocab>,
}

impl KnowledgeBase {
    /// Builds a knowledge base directly from a frequency matrix and prior.
    pub fn from_parts(m: usize, n: usize, freq: Vec<f64>, prior: Vec<f64>) -> Result<Self> {
        if freq.len() != n * m {
            return Err(Error::LengthMismatch(freq.len(), n * m));
        }
        if prior.len() != n {
            return Err(Error::LengthMismatch(prior.len(), n));
        }
        if freq.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("frequencies must lie in [0, 1]".into()));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("prior sums to {total}")));
        }
        let background = (0..m)
            .map(|s| (0..n).map(|d| freq[d * m + s]).sum::<f64>() / n as f64)
            .collect();
        let relevant = (0..n)
            .map(|d| {
                let mut rel: Vec<(SymptomId, f64)> = (0..m)
                    .filter(|&s| freq[d * m + s] > 0.0)
                    .map(|s| (SymptomId(s), freq[d * m + s]))
                    .collect();
                rel.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                rel
            })
            .collect();
        Ok(Self {
            m,
            n,
            freq,
            prior,
            background,
            relevant,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vocab) -> Self {
        self.names = Some(names);
        self
    }

    pub fn symptom_count(&self) -> usize {
        self.m
    }

    pub fn disease_count(&self) -> usize {
        self.n
    }

    pub fn freq(&self, d: DiseaseId, s: SymptomId) -> f64 {
        self.freq[d.0 * self.m + s.0]
    }

    pub fn freq_row(&self, d: DiseaseId) -> &[f64] {
        &self.freq[d.0 * self.m..(d.0 + 1) * self.m]
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn background(&self, s: SymptomId) -> f64 {
        self.background[s.0]
    }

    /// Symptoms with positive frequency under `d`, most frequent first.
    pub fn relevant(&self, d: DiseaseId) -> &[(SymptomId, f64)] {
        &self.relevant[d.0]
    }

    pub fn is_relevant(&self, d: DiseaseId, s: SymptomId) -> bool {
        self.freq(d, s) > 0.0
    }

    pub fn names(&self) -> Option<&Vocab> {
        self.names.as_ref()
    }

    pub fn check_disease(&self, d: DiseaseId) -> Result<()> {
        if d.0 >= self.n {
            return Err(Error::IdOutOfRange {
                kind: "disease",
                id: d.0,
                size: self.n,
            });
        }
        Ok(())
    }
}

/// Estimates presence frequencies and the disease prior from `records`.
///
/// Explicit and implicit findings both count; a symptom is "present" for a
/// record when it carries a `Present` status anywhere in the record.
pub fn build_kb(records: &[PatientRecord], m: usize, n: usize) -> Result<KnowledgeBase> {
    if records.is_empty() || n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![0usize; n * m];
    let mut per_disease = vec![0usize; n];
    for r in records {
        r.validate(m, n)?;
        let d = r.label.0;
        per_disease[d] += 1;
        for &(s, st) in r.findings() {
            if st == SymptomStatus::Present {
                counts[d * m + s.0] += 1;
            }
        }
    }
    if let Some(d) = per_disease.iter().position(|&c| c == 0) {
        return Err(Error::MissingDisease(d));
    }
    let freq = (0..n * m)
        .map(|i| counts[i] as f64 / per_disease[i / m] as f64)
        .collect();
    let total = records.len() as f64;
    let prior = per_disease.iter().map(|&c| c as f64 / total).collect();
    KnowledgeBase::from_parts(m, n, freq, prior)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `k` diseases other than `d` whose frequency rows are closest to `d`'s
/// by cosine similarity. Ties go to the lower index.
pub fn similar_diseases(kb: &KnowledgeBase, d: DiseaseId, k: usize) -> Result<Vec<DiseaseId>> {
    kb.check_disease(d)?;
    if k >= kb.n {
        return Err(Error::KTooLarge { k, n: kb.n });
    }
    let row = kb.freq_row(d);
    let mut scored: Vec<(usize, f64)> = (0..kb.n)
        .filter(|&o| o != d.0)
        .map(|o| (o, cosine(row, kb.freq_row(DiseaseId(o)))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(o, _)| DiseaseId(o)).collect())
}

/// Indices of the `w` largest confidences in rank order. `w` is clamped to
/// the vector length.
pub fn top_w_diseases(c: &[f64], w: usize) -> Vec<DiseaseId> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
    idx.into_iter().take(w.min(c.len())).map(DiseaseId).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SymptomStatus::{Absent, Present};

    fn r(d: usize, ex: &[(usize, SymptomStatus)], im: &[(usize, SymptomStatus)]) -> PatientRecord {
        PatientRecord::new(
            ex.iter().map(|&(s, st)| (SymptomId(s), st)).collect(),
            im.iter().map(|&(s, st)| (SymptomId(s), st)).collect(),
            DiseaseId(d),
        )
    }

    #[test]
    fn frequency_is_count_ratio() {
        let records = vec![
            r(0, &[(3, Present)], &[]),
            r(0, &[(1, Present)], &[(3, Present)]),
            r(1, &[(5, Present)], &[]),
            r(1, &[(0, Present)], &[(5, Absent)]),
            r(1, &[(0, Present)], &[]),
            r(1, &[(2, Present)], &[]),
        ];
        let kb = build_kb(&records, 6, 2).unwrap();
        assert_eq!(kb.freq(DiseaseId(0), SymptomId(3)), 1.0);
        assert_eq!(kb.freq(DiseaseId(1), SymptomId(5)), 0.25);
        assert_eq!(kb.freq(DiseaseId(1), SymptomId(0)), 0.5);
        assert_eq!(kb.prior(), &[2.0 / 6.0, 4.0 / 6.0]);
        let rel: Vec<usize> = kb.relevant(DiseaseId(1)).iter().map(|(s, _)| s.0).collect();
        assert_eq!(rel, vec![0, 2, 5]);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(build_kb(&[], 3, 2), Err(Error::EmptyDataset)));
        let records = vec![r(0, &[(0, Present)], &[])];
        assert!(matches!(build_kb(&records, 3, 2), Err(Error::MissingDisease(1))));
        let records = vec![r(0, &[(7, Present)], &[])];
        assert!(matches!(
            build_kb(&records, 3, 1),
            Err(Error::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn similarity_ranking() {
        let freq = vec![
            1.0, 0.5, 0.0, //
            0.0, 0.0, 1.0, // orthogonal to 0
            1.0, 0.5, 0.0, // identical to 0
            0.5, 0.5, 0.5,
        ];
        let kb = KnowledgeBase::from_parts(3, 4, freq, vec![0.25; 4]).unwrap();
        let sim = similar_diseases(&kb, DiseaseId(0), 3).unwrap();
        assert_eq!(sim, vec![DiseaseId(2), DiseaseId(3), DiseaseId(1)]);
        assert!(matches!(
            similar_diseases(&kb, DiseaseId(0), 4),
            Err(Error::KTooLarge { .. })
        ));
    }

    #[test]
    fn top_w() {
        assert_eq!(top_w_diseases(&[0.9, 0.1, 0.5], 2), vec![DiseaseId(0), DiseaseId(2)]);
        assert_eq!(top_w_diseases(&[0.9, 0.1, 0.5], 3).len(), 3);
        assert_eq!(top_w_diseases(&[0.5, 0.5, 0.5], 2), vec![DiseaseId(0), DiseaseId(1)]);
    }
}
