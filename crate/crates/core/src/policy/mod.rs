//! Actor-critic policy over the observation `[p, c]` with a masked action
//! space of `m` inquiry actions plus one termination action.

mod mlp;
mod ppo;

pub use mlp::{Activations, Mlp};
pub use ppo::{gae, ppo_loss_and_grad, Ppo, PpoConfig, Transition, UpdateStats};

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ternary symptom vector `p` and confidence vector `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationState {
    pub p: Vec<i8>,
    pub c: Vec<f64>,
}

impl ObservationState {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            p: vec![0; m],
            c: vec![0.0; n],
        }
    }

    /// Flattened network input of length `m + n`.
    pub fn to_input(&self) -> Vec<f64> {
        self.p
            .iter()
            .map(|&v| f64::from(v))
            .chain(self.c.iter().copied())
            .collect()
    }
}

/// Binary mask over `m + 1` actions; the last bit is termination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask {
    pub bits: Vec<bool>,
}

impl ActionMask {
    pub fn all(actions: usize) -> Self {
        Self {
            bits: vec![true; actions],
        }
    }

    pub fn none(actions: usize) -> Self {
        Self {
            bits: vec![false; actions],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn termination(&self) -> usize {
        self.bits.len() - 1
    }

    pub fn is_enabled(&self, a: usize) -> bool {
        self.bits.get(a).copied().unwrap_or(false)
    }

    pub fn enabled_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn enabled(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

/// Softmax of `logits` restricted to enabled actions; disabled entries are
/// exactly zero.
pub fn masked_distribution(logits: &[f64], mask: &ActionMask) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::LengthMismatch(logits.len(), mask.len()));
    }
    let top = logits
        .iter()
        .zip(&mask.bits)
        .filter(|(_, &b)| b)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(&mask.bits)
        .map(|(&l, &b)| if b { (l - top).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Log-probabilities matching [`masked_distribution`]; disabled entries are
/// negative infinity.
pub fn masked_log_distribution(logits: &[f64], mask: &ActionMask) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::LengthMismatch(logits.len(), mask.len()));
    }
    let top = logits
        .iter()
        .zip(&mask.bits)
        .filter(|(_, &b)| b)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    let lse = top
        + logits
            .iter()
            .zip(&mask.bits)
            .filter(|(_, &b)| b)
            .map(|(&l, _)| (l - top).exp())
            .sum::<f64>()
            .ln();
    Ok(logits
        .iter()
        .zip(&mask.bits)
        .map(|(&l, &b)| if b { l - lse } else { f64::NEG_INFINITY })
        .collect())
}

/// Draws one index from `probs`; zero-probability entries are never drawn.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Outcome of `N` masked draws: the raw draws in order and their set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidates {
    pub draws: Vec<usize>,
}

impl Candidates {
    /// Distinct actions in ascending order.
    pub fn set(&self) -> BTreeSet<usize> {
        self.draws.iter().copied().collect()
    }

    pub fn contains(&self, a: usize) -> bool {
        self.draws.contains(&a)
    }

    pub fn first(&self) -> usize {
        self.draws[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 128, 128],
            critic_hidden: vec![64],
        }
    }
}

/// Separate actor and critic networks over the flattened observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    m: usize,
    n: usize,
    pub actor: Mlp,
    pub critic: Mlp,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(m: usize, n: usize, cfg: &NetConfig, rng: &mut R) -> Self {
        let input = m + n;
        let mut actor_sizes = vec![input];
        actor_sizes.extend(&cfg.actor_hidden);
        actor_sizes.push(m + 1);
        let mut critic_sizes = vec![input];
        critic_sizes.extend(&cfg.critic_hidden);
        critic_sizes.push(1);
        let gain = std::f64::consts::SQRT_2;
        Self {
            m,
            n,
            actor: Mlp::new(&actor_sizes, gain, 0.01, rng),
            critic: Mlp::new(&critic_sizes, gain, 1.0, rng),
        }
    }

    pub fn from_parts(m: usize, n: usize, actor: Mlp, critic: Mlp) -> Result<Self> {
        if actor.input_dim() != m + n || critic.input_dim() != m + n {
            return Err(Error::ComponentShapeMismatch(format!(
                "network input must be {} (m={m}, n={n})",
                m + n
            )));
        }
        if actor.output_dim() != m + 1 || critic.output_dim() != 1 {
            return Err(Error::ComponentShapeMismatch(
                "actor must emit m+1 logits and critic one value".into(),
            ));
        }
        Ok(Self { m, n, actor, critic })
    }

    pub fn symptom_count(&self) -> usize {
        self.m
    }

    pub fn disease_count(&self) -> usize {
        self.n
    }

    pub fn action_count(&self) -> usize {
        self.m + 1
    }

    fn check_state(&self, state: &ObservationState, mask: &ActionMask) -> Result<()> {
        if state.p.len() != self.m || state.c.len() != self.n {
            return Err(Error::ComponentShapeMismatch(format!(
                "state is {}+{}, network expects {}+{}",
                state.p.len(),
                state.c.len(),
                self.m,
                self.n
            )));
        }
        if mask.len() != self.m + 1 {
            return Err(Error::LengthMismatch(mask.len(), self.m + 1));
        }
        Ok(())
    }

    pub fn logits(&self, state: &ObservationState) -> Vec<f64> {
        self.actor.forward(&state.to_input()).output().to_vec()
    }

    pub fn value(&self, state: &ObservationState) -> f64 {
        self.critic.forward(&state.to_input()).output()[0]
    }

    pub fn distribution(&self, state: &ObservationState, mask: &ActionMask) -> Result<Vec<f64>> {
        self.check_state(state, mask)?;
        masked_distribution(&self.logits(state), mask)
    }

    /// Samples one action and returns `(action, log_prob, value)`.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &ObservationState,
        mask: &ActionMask,
        rng: &mut R,
    ) -> Result<(usize, f64, f64)> {
        self.check_state(state, mask)?;
        let logp = masked_log_distribution(&self.logits(state), mask)?;
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let a = sample_index(&probs, rng);
        Ok((a, logp[a], self.value(state)))
    }

    /// Greedy action under the mask.
    pub fn act_greedy(&self, state: &ObservationState, mask: &ActionMask) -> Result<usize> {
        let probs = self.distribution(state, mask)?;
        Ok(crate::diagnosis::final_diagnosis(&probs)?.0)
    }

    /// `count` independent masked draws.
    pub fn sample_candidates<R: Rng + ?Sized>(
        &self,
        state: &ObservationState,
        mask: &ActionMask,
        count: usize,
        rng: &mut R,
    ) -> Result<Candidates> {
        let probs = self.distribution(state, mask)?;
        let draws = (0..count.max(1)).map(|_| sample_index(&probs, rng)).collect();
        Ok(Candidates { draws })
    }

    /// Checkpoint with a layer-size header followed by the flat weights.
    pub fn to_text(&self) -> String {
        let sizes = |s: &[usize]| s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        format!(
            "policy {} {}\nactor {}\ncritic {}\n{}\n{}\n",
            self.m,
            self.n,
            sizes(self.actor.sizes()),
            sizes(self.critic.sizes()),
            self.actor.to_text(),
            self.critic.to_text()
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_string(),
        };
        if lines.len() < 5 {
            return Err(err(lines.len(), "truncated policy checkpoint"));
        }
        let nums = |line: usize, s: &str, tag: &str| -> Result<Vec<usize>> {
            let mut it = s.split_whitespace();
            if it.next() != Some(tag) {
                return Err(err(line, &format!("expected `{tag}` header")));
            }
            it.map(|t| t.parse().map_err(|_| err(line, "bad integer"))).collect()
        };
        let head = nums(1, lines[0], "policy")?;
        if head.len() != 2 {
            return Err(err(1, "expected `policy m n`"));
        }
        let actor_sizes = nums(2, lines[1], "actor")?;
        let critic_sizes = nums(3, lines[2], "critic")?;
        let floats = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse().map_err(|_| err(line, "bad float")))
                .collect()
        };
        let actor = Mlp::from_params(&actor_sizes, floats(4, lines[3])?)?;
        let critic = Mlp::from_params(&critic_sizes, floats(5, lines[4])?)?;
        Self::from_parts(head[0], head[1], actor, critic)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
