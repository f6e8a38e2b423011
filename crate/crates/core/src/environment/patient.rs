use crate::error::Result;
use crate::kb::KnowledgeBase;
use crate::types::{PatientRecord, SymptomId, SymptomStatus};

/// Answers symptom queries during a consultation.
pub trait Patient {
    fn respond(&mut self, record: &PatientRecord, kb: &KnowledgeBase, symptom: SymptomId) -> Result<SymptomStatus>;
}

/// Recorded status when the record has one; otherwise `Present` if the
/// symptom is among the `typicality_k` most frequent symptoms of the
/// record's disease, else `Absent`.
pub fn respond(record: &PatientRecord, kb: &KnowledgeBase, symptom: SymptomId, typicality_k: usize) -> SymptomStatus {
    if let Some(st) = record.status_of(symptom) {
        return st;
    }
    let typical = kb
        .relevant(record.label)
        .iter()
        .take(typicality_k)
        .any(|(s, _)| *s == symptom);
    if typical {
        SymptomStatus::Present
    } else {
        SymptomStatus::Absent
    }
}

/// Record-backed simulated patient.
#[derive(Debug, Clone, Copy)]
pub struct SimulatedPatient {
    pub typicality_k: usize,
}

impl Default for SimulatedPatient {
    fn default() -> Self {
        Self { typicality_k: 5 }
    }
}

impl Patient for SimulatedPatient {
    fn respond(&mut self, record: &PatientRecord, kb: &KnowledgeBase, symptom: SymptomId) -> Result<SymptomStatus> {
        Ok(respond(record, kb, symptom, self.typicality_k))
    }
}
