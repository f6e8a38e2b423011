use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnosis::ScoringBackend;
use crate::environment::{unmasked, EnvConfig, Environment, SimulatedPatient};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::policy::{PolicyNet, Ppo, PpoConfig, Transition, UpdateStats};
use crate::types::PatientRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps_per_update: usize,
    pub total_steps: usize,
    pub use_masking: bool,
    pub seed: u64,
    pub ppo: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps_per_update: 1024,
            total_steps: 51200,
            use_masking: true,
            seed: 0,
            ppo: PpoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub updates: Vec<UpdateStats>,
}

impl TrainReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", UpdateStats::CSV_HEADER);
        for (i, s) in self.updates.iter().enumerate() {
            out.push_str(&s.csv_row(i));
            out.push('\n');
        }
        out
    }
}

/// Plays one episode with actions sampled from `net`.
pub fn collect_episode<B: ScoringBackend + ?Sized, R: Rng + ?Sized>(
    net: &PolicyNet,
    env: &Environment<'_, B>,
    record: &PatientRecord,
    use_masking: bool,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    let mut patient = SimulatedPatient {
        typicality_k: env.cfg.typicality_k,
    };
    let mut state = env.reset(record)?;
    let mut out = Vec::new();
    while !state.done {
        let mask = if use_masking {
            env.mask(&state)
        } else {
            unmasked(&state, env.kb)
        };
        let (action, log_prob, value) = net.act(&state.obs, &mask, rng)?;
        let obs = state.obs.clone();
        let step = env.step(&mut state, action, &mask, &mut patient)?;
        out.push(Transition {
            state: obs,
            mask,
            action,
            log_prob,
            reward: step.reward.total,
            value,
            done: step.done,
        });
    }
    Ok(out)
}

/// Trains `net` with PPO on episodes drawn from `records`, calling
/// `on_update` after every update.
pub fn train_policy<F: FnMut(usize, &UpdateStats)>(
    net: &mut PolicyNet,
    records: &[PatientRecord],
    kb: &KnowledgeBase,
    backend: &dyn ScoringBackend,
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
    mut on_update: F,
) -> Result<TrainReport> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if net.symptom_count() != kb.symptom_count() || net.disease_count() != kb.disease_count() {
        return Err(Error::ComponentShapeMismatch(format!(
            "policy is for m={}, n={}; knowledge base has m={}, n={}",
            net.symptom_count(),
            net.disease_count(),
            kb.symptom_count(),
            kb.disease_count()
        )));
    }
    if env_cfg.max_turns == 0 {
        return Err(Error::Config("training needs at least one turn per episode".into()));
    }
    let env = Environment::new(kb, backend, env_cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ppo = Ppo::new(
        net,
        PpoConfig {
            seed: cfg.seed,
            ..cfg.ppo.clone()
        },
    );
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut report = TrainReport::default();
    let per_update = cfg.steps_per_update.max(1);
    while report.steps < cfg.total_steps {
        let mut rollout = Vec::with_capacity(per_update + env_cfg.max_turns + 1);
        while rollout.len() < per_update {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let record = &records[order[cursor]];
            cursor += 1;
            rollout.extend(collect_episode(net, &env, record, cfg.use_masking, &mut rng)?);
        }
        let stats = ppo.update(net, &rollout)?;
        report.steps += rollout.len();
        on_update(report.updates.len(), &stats);
        report.updates.push(stats);
    }
    Ok(report)
}
