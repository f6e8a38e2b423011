use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dualconsult::policy::{
    masked_distribution, ActionMask, NetConfig, ObservationState, PolicyNet, Ppo, PpoConfig, Transition,
};

fn small_net(seed: u64) -> PolicyNet {
    let cfg = NetConfig {
        actor_hidden: vec![16],
        critic_hidden: vec![8],
    };
    PolicyNet::new(2, 1, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One-step episodes in a fixed state; action 0 pays 1, everything else 0.
fn bandit_rollout(net: &PolicyNet, rng: &mut ChaCha8Rng, steps: usize) -> Vec<Transition> {
    let state = ObservationState::new(2, 1);
    let mask = ActionMask::all(net.action_count());
    (0..steps)
        .map(|_| {
            let (action, log_prob, value) = net.act(&state, &mask, rng).unwrap();
            Transition {
                state: state.clone(),
                mask: mask.clone(),
                action,
                log_prob,
                reward: if action == 0 { 1.0 } else { 0.0 },
                value,
                done: true,
            }
        })
        .collect()
}

#[test]
fn ppo_learns_a_bandit() {
    let mut net = small_net(3);
    let mut ppo = Ppo::new(
        &net,
        PpoConfig {
            lr: 3e-3,
            ..PpoConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let state = ObservationState::new(2, 1);
    let mask = ActionMask::all(net.action_count());
    let start = net.distribution(&state, &mask).unwrap()[0];
    for _ in 0..200 {
        let batch = bandit_rollout(&net, &mut rng, 64);
        ppo.update(&mut net, &batch).unwrap();
    }
    let end = net.distribution(&state, &mask).unwrap()[0];
    assert!(end > 0.9, "P(action 0) {start:.3} -> {end:.3}");
}

#[test]
fn long_training_stays_finite() {
    let mut net = small_net(5);
    let mut ppo = Ppo::new(&net, PpoConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2000 {
        let batch = bandit_rollout(&net, &mut rng, 8);
        let stats = ppo.update(&mut net, &batch).unwrap();
        assert!(stats.policy_loss.is_finite() && stats.value_loss.is_finite());
    }
    assert!(net.actor.params().iter().chain(net.critic.params()).all(|p| p.is_finite()));
}

#[test]
fn incomplete_rollout_rejected() {
    let net = small_net(1);
    let mut ppo = Ppo::new(&net, PpoConfig::default());
    let mut batch = bandit_rollout(&net, &mut ChaCha8Rng::seed_from_u64(2), 4);
    batch.last_mut().unwrap().done = false;
    let mut net = net;
    assert!(ppo.update(&mut net, &batch).is_err());
    assert!(ppo.update(&mut net, &[]).is_err());
}

proptest! {
    #[test]
    fn masked_distribution_is_normalised_on_enabled(
        logits in prop::collection::vec(-30.0f64..30.0, 2..12),
        bits in prop::collection::vec(any::<bool>(), 12),
    ) {
        let n = logits.len();
        let mut mask = ActionMask::none(n);
        mask.bits[..n - 1].copy_from_slice(&bits[..n - 1]);
        mask.bits[n - 1] = true;
        let p = masked_distribution(&logits, &mask).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..n {
            if !mask.bits[i] {
                prop_assert_eq!(p[i], 0.0);
            }
        }
        // restricted softmax computed directly
        let enabled: Vec<usize> = (0..n).filter(|&i| mask.bits[i]).collect();
        let top = enabled.iter().map(|&i| logits[i]).fold(f64::MIN, f64::max);
        let z: f64 = enabled.iter().map(|&i| (logits[i] - top).exp()).sum();
        for &i in &enabled {
            prop_assert!((p[i] - (logits[i] - top).exp() / z).abs() < 1e-12);
        }
    }
}
