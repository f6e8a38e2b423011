//! The consultation MDP.
//!
//! State is the ternary symptom vector plus the confidence vector. Actions
//! `0..m` ask about one symptom; action `m` ends the consultation. Every
//! inquiry is rewarded with a frequency term, a hit term and a rank-change
//! term; ending the episode adds a diagnosis term.

mod patient;

pub use patient::{respond, Patient, SimulatedPatient};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::diagnosis::{confidence_rank, diagnose, final_diagnosis, ScoringBackend};
use crate::error::{Error, Result};
use crate::kb::{top_w_diseases, KnowledgeBase};
use crate::policy::{ActionMask, ObservationState};
use crate::types::{DiseaseId, Evidence, PatientRecord, SymptomId, SymptomStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConstants {
    pub hit: f64,
    pub rank: f64,
    pub freq_penalty: f64,
    pub diagnosis: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self {
            hit: 0.5,
            rank: 0.5,
            freq_penalty: 0.2,
            diagnosis: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub freq_term: f64,
    pub hit_term: f64,
    pub rank_term: f64,
    /// Terminal diagnosis reward, zero on non-final steps.
    pub diagnosis_term: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(freq_term: f64, hit_term: f64, rank_term: f64, diagnosis_term: f64) -> Self {
        Self {
            freq_term,
            hit_term,
            rank_term,
            diagnosis_term,
            total: freq_term + hit_term + rank_term + diagnosis_term,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Maximum number of inquiry turns.
    pub max_turns: usize,
    /// Masking window: symptoms of the top-`w` diseases stay enabled.
    pub window: usize,
    pub tau: f64,
    pub typicality_k: usize,
    pub rewards: RewardConstants,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_turns: 10,
            window: 3,
            tau: 1.0,
            typicality_k: 5,
            rewards: RewardConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub obs: ObservationState,
    pub asked: BTreeSet<SymptomId>,
    pub evidence: Evidence,
    pub record: PatientRecord,
    pub turn: usize,
    pub done: bool,
}

impl EpisodeState {
    pub fn confidences(&self) -> &[f64] {
        &self.obs.c
    }

    pub fn prediction(&self) -> Result<DiseaseId> {
        final_diagnosis(&self.obs.c)
    }
}

/// Result of one [`Environment::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub response: Option<SymptomStatus>,
    pub done: bool,
}

/// Inquiry bit `i` is set iff symptom `i` is relevant to one of the top-`w`
/// diseases and has not been asked; the termination bit is always set.
pub fn build_mask(state: &EpisodeState, kb: &KnowledgeBase, window: usize) -> ActionMask {
    let m = kb.symptom_count();
    let mut mask = ActionMask::none(m + 1);
    for d in top_w_diseases(&state.obs.c, window.max(1)) {
        for &(s, _) in kb.relevant(d) {
            if !state.asked.contains(&s) {
                mask.bits[s.0] = true;
            }
        }
    }
    mask.bits[m] = true;
    mask
}

/// Every unasked symptom plus termination.
pub fn unmasked(state: &EpisodeState, kb: &KnowledgeBase) -> ActionMask {
    let m = kb.symptom_count();
    let mut mask = ActionMask::all(m + 1);
    for s in &state.asked {
        mask.bits[s.0] = false;
    }
    mask
}

/// Inquiry reward for asking `action` and moving from confidences
/// `before` to `after`.
pub fn short_reward(
    before: &[f64],
    action: usize,
    after: &[f64],
    record: &PatientRecord,
    kb: &KnowledgeBase,
    constants: &RewardConstants,
) -> Result<RewardBreakdown> {
    let m = kb.symptom_count();
    if action == m {
        return Err(Error::TerminationNotScoredHere);
    }
    if action > m {
        return Err(Error::IdOutOfRange {
            kind: "action",
            id: action,
            size: m + 1,
        });
    }
    let s = SymptomId(action);
    let label = record.label;
    let freq_term = if kb.is_relevant(label, s) {
        kb.freq(label, s)
    } else {
        -constants.freq_penalty
    };
    let hit_term = if record.status_of(s).is_some() {
        constants.hit
    } else {
        -constants.hit
    };
    let rank_before = confidence_rank(before, label);
    let rank_after = confidence_rank(after, label);
    let rank_term = match rank_after.cmp(&rank_before) {
        std::cmp::Ordering::Less => constants.rank,
        std::cmp::Ordering::Greater => -constants.rank,
        std::cmp::Ordering::Equal => 0.0,
    };
    Ok(RewardBreakdown::new(freq_term, hit_term, rank_term, 0.0))
}

/// `+constant` for a correct diagnosis, `-constant` otherwise.
pub fn long_reward(predicted: DiseaseId, label: DiseaseId, constant: f64) -> f64 {
    if predicted == label {
        constant
    } else {
        -constant
    }
}

/// Consultation environment over a shared knowledge base and scorer.
pub struct Environment<'a, B: ScoringBackend + ?Sized> {
    pub kb: &'a KnowledgeBase,
    pub backend: &'a B,
    pub cfg: EnvConfig,
}

impl<'a, B: ScoringBackend + ?Sized> Environment<'a, B> {
    pub fn new(kb: &'a KnowledgeBase, backend: &'a B, cfg: EnvConfig) -> Self {
        Self { kb, backend, cfg }
    }

    pub fn action_count(&self) -> usize {
        self.kb.symptom_count() + 1
    }

    pub fn termination_action(&self) -> usize {
        self.kb.symptom_count()
    }

    /// Initial state from the record's self-reported symptoms.
    pub fn reset(&self, record: &PatientRecord) -> Result<EpisodeState> {
        let (m, n) = (self.kb.symptom_count(), self.kb.disease_count());
        record.validate(m, n)?;
        let mut obs = ObservationState::new(m, n);
        let mut evidence = Evidence::new();
        let mut asked = BTreeSet::new();
        for &(s, st) in &record.explicit {
            evidence.push(s, st)?;
            obs.p[s.0] = st.value();
            asked.insert(s);
        }
        obs.c = diagnose(&evidence, self.kb, self.backend, self.cfg.tau)?;
        Ok(EpisodeState {
            obs,
            asked,
            evidence,
            record: record.clone(),
            turn: 0,
            done: self.cfg.max_turns == 0,
        })
    }

    pub fn mask(&self, state: &EpisodeState) -> ActionMask {
        build_mask(state, self.kb, self.cfg.window)
    }

    /// Applies `action`, which must be enabled in `mask`.
    pub fn step<P: Patient + ?Sized>(
        &self,
        state: &mut EpisodeState,
        action: usize,
        mask: &ActionMask,
        patient: &mut P,
    ) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::EpisodeDone);
        }
        if !mask.is_enabled(action) {
            return Err(Error::DisabledAction(action));
        }
        let rewards = &self.cfg.rewards;
        if action == self.termination_action() {
            state.done = true;
            let d = long_reward(state.prediction()?, state.record.label, rewards.diagnosis);
            return Ok(StepOutcome {
                reward: RewardBreakdown::new(0.0, 0.0, 0.0, d),
                response: None,
                done: true,
            });
        }
        let s = SymptomId(action);
        if state.evidence.contains(s) || state.asked.contains(&s) {
            return Err(Error::DuplicateQuery(action));
        }
        let response = patient.respond(&state.record, self.kb, s)?;
        let before = state.obs.c.clone();
        state.evidence.push(s, response)?;
        state.asked.insert(s);
        state.obs.p[action] = response.value();
        state.obs.c = diagnose(&state.evidence, self.kb, self.backend, self.cfg.tau)?;
        state.turn += 1;
        let mut reward = short_reward(&before, action, &state.obs.c, &state.record, self.kb, rewards)?;
        if state.turn >= self.cfg.max_turns {
            state.done = true;
            let d = long_reward(state.prediction()?, state.record.label, rewards.diagnosis);
            reward = RewardBreakdown::new(reward.freq_term, reward.hit_term, reward.rank_term, d);
        }
        Ok(StepOutcome {
            reward,
            response: Some(response),
            done: state.done,
        })
    }
}
