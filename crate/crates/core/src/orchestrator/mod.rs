//! The consultation loop: diagnose, propose candidates, select, ask.

mod train;

pub use train::{collect_episode, train_policy, TrainConfig, TrainReport};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnosis::ScoringBackend;
use crate::environment::{unmasked, EnvConfig, Environment, Patient, RewardBreakdown, SimulatedPatient};
use crate::error::{Error, Result};
use crate::inquiry::{select, Cooccurrence, InquiryDecision, Rationale, SelectorConfig};
use crate::kb::KnowledgeBase;
use crate::policy::PolicyNet;
use crate::types::{DiseaseId, PatientRecord};

/// Component switches. At most one of `use_policy` and `use_decision`
/// may be off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub use_adapter: bool,
    pub use_policy: bool,
    pub use_masking: bool,
    pub use_retry: bool,
    pub use_decision: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl AblationConfig {
    pub fn full() -> Self {
        Self {
            use_adapter: true,
            use_policy: true,
            use_masking: true,
            use_retry: true,
            use_decision: true,
        }
    }

    /// Full system with one component removed; names follow the CLI
    /// (`adapter`, `policy`, `masking`, `retry`, `decision`).
    pub fn without(component: &str) -> Result<Self> {
        let mut a = Self::full();
        match component {
            "adapter" => a.use_adapter = false,
            "policy" => a.use_policy = false,
            "masking" => a.use_masking = false,
            "retry" => a.use_retry = false,
            "decision" => a.use_decision = false,
            other => return Err(Error::Config(format!("unknown component `{other}`"))),
        }
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.use_policy && !self.use_decision {
            return Err(Error::Config(
                "policy and decision agents cannot both be removed".into(),
            ));
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match (self.use_adapter, self.use_policy, self.use_masking, self.use_retry, self.use_decision) {
            (true, true, true, true, true) => "full",
            (false, _, _, _, _) => "w/o adapter",
            (_, false, _, _, _) => "w/o policy",
            (_, _, false, _, _) => "w/o masking",
            (_, _, _, false, _) => "w/o retry",
            _ => "w/o decision",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsultConfig {
    pub env: EnvConfig,
    /// Policy draws per turn.
    pub samples: usize,
    pub selector: SelectorConfig,
    /// Sampling the termination action ends the consultation without
    /// consulting the selector.
    pub terminate_on_sample: bool,
}

impl Default for ConsultConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            samples: 6,
            selector: SelectorConfig::default(),
            terminate_on_sample: true,
        }
    }
}

/// Shared read-only pieces of a consultation.
#[derive(Clone, Copy)]
pub struct Components<'a> {
    pub kb: &'a KnowledgeBase,
    pub backend: &'a dyn ScoringBackend,
    /// Scorer with the adapter removed, used when `use_adapter` is off.
    pub plain_backend: &'a dyn ScoringBackend,
    pub policy: &'a PolicyNet,
    pub cooc: &'a Cooccurrence,
}

impl<'a> Components<'a> {
    pub fn new(
        kb: &'a KnowledgeBase,
        backend: &'a dyn ScoringBackend,
        plain_backend: &'a dyn ScoringBackend,
        policy: &'a PolicyNet,
        cooc: &'a Cooccurrence,
    ) -> Self {
        Self {
            kb,
            backend,
            plain_backend,
            policy,
            cooc,
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (m, n) = (self.kb.symptom_count(), self.kb.disease_count());
        if self.policy.symptom_count() != m || self.policy.disease_count() != n {
            return Err(Error::ComponentShapeMismatch(format!(
                "policy is for m={}, n={}; knowledge base has m={m}, n={n}",
                self.policy.symptom_count(),
                self.policy.disease_count()
            )));
        }
        if self.cooc.symptom_count() != m {
            return Err(Error::ComponentShapeMismatch(format!(
                "co-occurrence table covers {} symptoms, knowledge base has {m}",
                self.cooc.symptom_count()
            )));
        }
        Ok(())
    }
}

/// One executed turn, as written to trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub action: usize,
    pub terminated: bool,
    pub response: Option<i8>,
    pub candidates: Vec<usize>,
    pub retries: usize,
    pub rationale: Option<Rationale>,
    pub mask_size: usize,
    pub reward: RewardBreakdown,
    pub confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultationResult {
    pub label: DiseaseId,
    pub prediction: DiseaseId,
    pub initial_prediction: DiseaseId,
    pub turns_used: usize,
    pub correct: bool,
    pub trace: Vec<TurnRecord>,
}

impl ConsultationResult {
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.trace {
            out.push_str(&serde_json::to_string(t).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

fn finish(record: &PatientRecord, initial: DiseaseId, prediction: DiseaseId, trace: Vec<TurnRecord>) -> ConsultationResult {
    let turns_used = trace.iter().filter(|t| !t.terminated).count();
    ConsultationResult {
        label: record.label,
        prediction,
        initial_prediction: initial,
        turns_used,
        correct: prediction == record.label,
        trace,
    }
}

/// Runs one consultation to completion.
pub fn run_consultation<P: Patient + ?Sized, R: Rng + ?Sized>(
    record: &PatientRecord,
    parts: &Components<'_>,
    patient: &mut P,
    cfg: &ConsultConfig,
    ablation: &AblationConfig,
    rng: &mut R,
) -> Result<ConsultationResult> {
    ablation.validate()?;
    parts.check_shapes()?;
    let backend = if ablation.use_adapter {
        parts.backend
    } else {
        parts.plain_backend
    };
    let env = Environment::new(parts.kb, backend, cfg.env.clone());
    let term = env.termination_action();
    let mut state = env.reset(record)?;
    let initial = state.prediction()?;
    let mut trace = Vec::new();

    while !state.done {
        let mask = if ablation.use_masking && ablation.use_policy {
            env.mask(&state)
        } else {
            unmasked(&state, parts.kb)
        };
        let mut retries_left = if ablation.use_retry && ablation.use_policy {
            cfg.selector.max_retries
        } else {
            0
        };
        let mut retries = 0;
        let (action, candidates, rationale) = loop {
            let candidates: Vec<usize> = if ablation.use_policy {
                parts
                    .policy
                    .sample_candidates(&state.obs, &mask, cfg.samples, rng)?
                    .draws
            } else {
                mask.enabled().filter(|&a| a != term).collect()
            };
            if candidates.is_empty() {
                break (term, candidates, None);
            }
            if ablation.use_policy && cfg.terminate_on_sample && candidates.contains(&term) {
                break (term, candidates, None);
            }
            if !ablation.use_decision {
                break (candidates[0], candidates, None);
            }
            let (decision, rationale) = select(
                &candidates,
                &state.obs.c,
                parts.kb,
                &state.evidence,
                parts.cooc,
                retries_left,
                &cfg.selector,
            )?;
            match decision {
                InquiryDecision::Ask(s) => break (s.0, candidates, Some(rationale)),
                InquiryDecision::Terminate => break (term, candidates, Some(rationale)),
                InquiryDecision::Retry => {
                    retries_left -= 1;
                    retries += 1;
                }
            }
        };
        let out = env.step(&mut state, action, &mask, patient)?;
        trace.push(TurnRecord {
            turn: trace.len(),
            action,
            terminated: action == term,
            response: out.response.map(|r| r.value()),
            candidates,
            retries,
            rationale,
            mask_size: mask.enabled_count(),
            reward: out.reward,
            confidences: state.obs.c.clone(),
        });
    }
    let prediction = state.prediction()?;
    Ok(finish(record, initial, prediction, trace))
}

/// Baseline that asks uniformly random unasked symptoms for the full
/// turn budget.
pub fn run_random_consultation<P: Patient + ?Sized, R: Rng + ?Sized>(
    record: &PatientRecord,
    kb: &KnowledgeBase,
    backend: &dyn ScoringBackend,
    patient: &mut P,
    env_cfg: &EnvConfig,
    rng: &mut R,
) -> Result<ConsultationResult> {
    let env = Environment::new(kb, backend, env_cfg.clone());
    let term = env.termination_action();
    let mut state = env.reset(record)?;
    let initial = state.prediction()?;
    let mut trace = Vec::new();
    while !state.done {
        let mask = unmasked(&state, kb);
        let options: Vec<usize> = mask.enabled().filter(|&a| a != term).collect();
        let action = *options.choose(rng).unwrap_or(&term);
        let out = env.step(&mut state, action, &mask, patient)?;
        trace.push(TurnRecord {
            turn: trace.len(),
            action,
            terminated: action == term,
            response: out.response.map(|r| r.value()),
            candidates: vec![action],
            retries: 0,
            rationale: None,
            mask_size: mask.enabled_count(),
            reward: out.reward,
            confidences: state.obs.c.clone(),
        });
    }
    let prediction = state.prediction()?;
    Ok(finish(record, initial, prediction, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseAccuracy {
    pub disease: DiseaseId,
    pub cases: usize,
    pub correct: usize,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub acc: f64,
    pub acc_init: f64,
    /// Inquiry turns per record, termination excluded.
    pub avg_n: f64,
    pub records: usize,
    pub per_disease: Vec<DiseaseAccuracy>,
}

/// Aggregates finished consultations.
pub fn summarize(results: &[ConsultationResult], n: usize) -> Result<SuiteMetrics> {
    if results.is_empty() {
        return Err(Error::EmptySuite);
    }
    let count = results.len() as f64;
    let mut per = vec![(0usize, 0usize); n];
    for r in results {
        if let Some(slot) = per.get_mut(r.label.0) {
            slot.0 += 1;
            slot.1 += r.correct as usize;
        }
    }
    let per_disease = per
        .into_iter()
        .enumerate()
        .filter(|(_, (cases, _))| *cases > 0)
        .map(|(d, (cases, correct))| DiseaseAccuracy {
            disease: DiseaseId(d),
            cases,
            correct,
            acc: correct as f64 / cases as f64,
        })
        .collect();
    Ok(SuiteMetrics {
        acc: results.iter().filter(|r| r.correct).count() as f64 / count,
        acc_init: results.iter().filter(|r| r.initial_prediction == r.label).count() as f64 / count,
        avg_n: results.iter().map(|r| r.turns_used).sum::<usize>() as f64 / count,
        records: results.len(),
        per_disease,
    })
}

/// Independent generator for record `index` of a run seeded with `seed`.
pub fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Evaluates `f` on every record in parallel with per-record generators.
pub fn run_suite_with<F>(records: &[PatientRecord], seed: u64, f: F) -> Result<Vec<ConsultationResult>>
where
    F: Fn(&PatientRecord, &mut ChaCha8Rng) -> Result<ConsultationResult> + Sync,
{
    if records.is_empty() {
        return Err(Error::EmptySuite);
    }
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| f(r, &mut record_rng(seed, i)))
        .collect()
}

/// Runs the full workflow on every record with the simulated patient.
pub fn run_suite(
    records: &[PatientRecord],
    parts: &Components<'_>,
    cfg: &ConsultConfig,
    ablation: &AblationConfig,
    seed: u64,
) -> Result<(SuiteMetrics, Vec<ConsultationResult>)> {
    ablation.validate()?;
    parts.check_shapes()?;
    let results = run_suite_with(records, seed, |r, rng| {
        let mut patient = SimulatedPatient {
            typicality_k: cfg.env.typicality_k,
        };
        run_consultation(r, parts, &mut patient, cfg, ablation, rng)
    })?;
    Ok((summarize(&results, parts.kb.disease_count())?, results))
}

/// Uniform-random-inquiry baseline over `records`.
pub fn run_random_suite(
    records: &[PatientRecord],
    kb: &KnowledgeBase,
    backend: &dyn ScoringBackend,
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<(SuiteMetrics, Vec<ConsultationResult>)> {
    let results = run_suite_with(records, seed, |r, rng| {
        let mut patient = SimulatedPatient {
            typicality_k: env_cfg.typicality_k,
        };
        run_random_consultation(r, kb, backend, &mut patient, env_cfg, rng)
    })?;
    Ok((summarize(&results, kb.disease_count())?, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(label: usize, pred: usize, init: usize, turns: usize) -> ConsultationResult {
        let trace = (0..turns)
            .map(|t| TurnRecord {
                turn: t,
                action: t,
                terminated: false,
                response: Some(1),
                candidates: vec![t],
                retries: 0,
                rationale: None,
                mask_size: 1,
                reward: RewardBreakdown::default(),
                confidences: vec![],
            })
            .collect::<Vec<_>>();
        finish(
            &PatientRecord::new(vec![], vec![], DiseaseId(label)),
            DiseaseId(init),
            DiseaseId(pred),
            trace,
        )
    }

    #[test]
    fn avg_n_is_mean_inquiry_count() {
        let rs = vec![result(0, 0, 1, 10), result(1, 1, 1, 9), result(1, 0, 0, 8)];
        let m = summarize(&rs, 2).unwrap();
        assert_eq!(m.avg_n, 9.0);
        assert!((m.acc - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.acc_init - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.per_disease.len(), 2);
        assert_eq!(m.per_disease[1].cases, 2);
    }

    #[test]
    fn perfect_suite() {
        let rs = vec![result(0, 0, 0, 1), result(1, 1, 0, 2)];
        assert_eq!(summarize(&rs, 2).unwrap().acc, 1.0);
        assert!(matches!(summarize(&[], 2), Err(Error::EmptySuite)));
    }

    #[test]
    fn ablation_rules() {
        assert!(AblationConfig::without("masking").unwrap().validate().is_ok());
        assert!(AblationConfig::without("bogus").is_err());
        let mut a = AblationConfig::without("policy").unwrap();
        a.use_decision = false;
        assert!(a.validate().is_err());
        assert_eq!(AblationConfig::without("retry").unwrap().label(), "w/o retry");
    }
}
