//! Domain vocabulary shared by every module: symptom and disease ids,
//! ternary symptom status, patient records and the evidence list that grows
//! during a consultation.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymptomId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiseaseId(pub usize);

impl SymptomId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl DiseaseId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for SymptomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for DiseaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

/// Ternary status of a symptom, coded +1 / -1 / 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymptomStatus {
    Present,
    Absent,
    Unknown,
}

impl SymptomStatus {
    pub fn value(self) -> i8 {
        match self {
            SymptomStatus::Present => 1,
            SymptomStatus::Absent => -1,
            SymptomStatus::Unknown => 0,
        }
    }

    pub fn sign(self) -> f64 {
        f64::from(self.value())
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(SymptomStatus::Present),
            -1 => Some(SymptomStatus::Absent),
            0 => Some(SymptomStatus::Unknown),
            _ => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != SymptomStatus::Unknown
    }
}

impl Serialize for SymptomStatus {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for SymptomStatus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        SymptomStatus::from_value(v)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid symptom status {v}")))
    }
}

pub type Finding = (SymptomId, SymptomStatus);

/// One consultation record: self-reported symptoms, symptoms elicited by
/// the doctor, and the ground-truth disease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub explicit: Vec<Finding>,
    pub implicit: Vec<Finding>,
    pub label: DiseaseId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<serde_json::Value>,
}

impl PatientRecord {
    pub fn new(explicit: Vec<Finding>, implicit: Vec<Finding>, label: DiseaseId) -> Self {
        Self {
            explicit,
            implicit,
            label,
            names: None,
        }
    }

    /// Checks the record invariants against vocabulary sizes `m` and `n`.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.explicit.is_empty() {
            return Err(Error::InvalidRecord("no explicit symptoms".into()));
        }
        if self.label.0 >= n {
            return Err(Error::IdOutOfRange {
                kind: "disease",
                id: self.label.0,
                size: n,
            });
        }
        let mut seen = HashSet::new();
        for &(s, status) in self.findings() {
            if s.0 >= m {
                return Err(Error::IdOutOfRange {
                    kind: "symptom",
                    id: s.0,
                    size: m,
                });
            }
            if !status.is_known() {
                return Err(Error::InvalidRecord(format!("{s} has unknown status")));
            }
            if !seen.insert(s) {
                return Err(Error::InvalidRecord(format!("{s} appears twice")));
            }
        }
        Ok(())
    }

    /// Explicit findings followed by implicit findings, in record order.
    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.explicit.iter().chain(self.implicit.iter())
    }

    /// Total recorded symptom count `k`.
    pub fn len(&self) -> usize {
        self.explicit.len() + self.implicit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of self-reported symptoms.
    pub fn l_self(&self) -> usize {
        self.explicit.len()
    }

    pub fn status_of(&self, s: SymptomId) -> Option<SymptomStatus> {
        self.findings().find(|(id, _)| *id == s).map(|(_, st)| *st)
    }
}

/// Ordered, duplicate-free list of observed findings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    entries: Vec<Finding>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_findings<I: IntoIterator<Item = Finding>>(findings: I) -> Result<Self> {
        let mut e = Evidence::new();
        for (s, st) in findings {
            e.push(s, st)?;
        }
        Ok(e)
    }

    pub fn push(&mut self, s: SymptomId, status: SymptomStatus) -> Result<()> {
        if self.contains(s) {
            return Err(Error::DuplicateQuery(s.0));
        }
        self.entries.push((s, status));
        Ok(())
    }

    pub fn contains(&self, s: SymptomId) -> bool {
        self.entries.iter().any(|(id, _)| *id == s)
    }

    pub fn entries(&self) -> &[Finding] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn present(&self) -> impl Iterator<Item = SymptomId> + '_ {
        self.entries
            .iter()
            .filter(|(_, st)| *st == SymptomStatus::Present)
            .map(|(s, _)| *s)
    }

    pub fn check_range(&self, m: usize) -> Result<()> {
        match self.entries.iter().find(|(s, _)| s.0 >= m) {
            Some((s, _)) => Err(Error::IdOutOfRange {
                kind: "symptom",
                id: s.0,
                size: m,
            }),
            None => Ok(()),
        }
    }
}
