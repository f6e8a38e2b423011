//! Adapter calibration by in-batch contrastive KL minimisation.
//!
//! Each training unit is a prefix of a consultation record paired with its
//! label. The label is grouped with its most similar diseases, the group's
//! confidences are normalised by their sum, and the adapter is trained to
//! pull that distribution towards a label-smoothed one-hot target.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reference::check_adapter;
use super::{Adapter, ReferenceScorer};
use crate::error::{Error, Result};
use crate::kb::{similar_diseases, KnowledgeBase};
use crate::optim::Adam;
use crate::types::{DiseaseId, Evidence, PatientRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SubTrajectory {
    pub evidence: Evidence,
    pub label: DiseaseId,
}

/// Every prefix of every record from the self-reported length up to the full
/// length, explicit findings first.
pub fn build_calibration_set(records: &[PatientRecord]) -> Vec<SubTrajectory> {
    let mut out = Vec::new();
    for r in records {
        let findings: Vec<_> = r.findings().copied().collect();
        let start = r.l_self().max(1);
        for len in start..=findings.len() {
            let mut evidence = Evidence::new();
            for &(s, st) in &findings[..len] {
                // duplicates only occur in records that fail validation
                let _ = evidence.push(s, st);
            }
            out.push(SubTrajectory {
                evidence,
                label: r.label,
            });
        }
    }
    out
}

/// Label-smoothed one-hot target `[e, .., 1 - e, .., e]`, renormalised to
/// sum to one.
pub fn target_distribution(group_size: usize, label_pos: usize, epsilon: f64) -> Result<Vec<f64>> {
    if group_size == 0 || label_pos >= group_size {
        return Err(Error::IdOutOfRange {
            kind: "label position",
            id: label_pos,
            size: group_size,
        });
    }
    if !(epsilon >= 0.0) || epsilon >= 1.0 / group_size as f64 {
        return Err(Error::InvalidEpsilon {
            epsilon,
            group: group_size,
        });
    }
    let mut t = vec![epsilon; group_size];
    t[label_pos] = 1.0 - epsilon;
    let total: f64 = t.iter().sum();
    t.iter_mut().for_each(|x| *x /= total);
    Ok(t)
}

/// `sum_i t_i ln(t_i / q_i)` with `0 ln 0 = 0`.
pub fn kl_loss(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::LengthMismatch(target.len(), predicted.len()));
    }
    if let Some(i) = predicted.iter().position(|&q| !(q > 0.0)) {
        return Err(Error::ZeroPrediction(i));
    }
    Ok(target
        .iter()
        .zip(predicted)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &q)| t * (t / q).ln())
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub epsilon: f64,
    pub tau: f64,
    /// Group length including the label.
    pub group_len: usize,
    pub rank: usize,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            epochs: 5,
            batch: 8,
            epsilon: 0.01,
            tau: 1.0,
            group_len: 5,
            rank: Adapter::DEFAULT_RANK,
            seed: 0,
        }
    }
}

/// Contrastive group for every disease: the disease itself first, then its
/// most similar diseases. Groups shrink to `n` when fewer diseases exist.
pub fn calibration_groups(kb: &KnowledgeBase, group_len: usize) -> Result<Vec<Vec<DiseaseId>>> {
    let n = kb.disease_count();
    let k = group_len.max(1).min(n) - 1;
    (0..n)
        .map(|d| {
            let mut g = vec![DiseaseId(d)];
            g.extend(similar_diseases(kb, DiseaseId(d), k)?);
            Ok(g)
        })
        .collect()
}

/// Pre-computed, adapter-independent view of one training unit.
struct Prepared<'a> {
    sub: &'a SubTrajectory,
    group: &'a [DiseaseId],
    base: Vec<f64>,
}

fn prepare<'a>(
    subs: &'a [SubTrajectory],
    groups: &'a [Vec<DiseaseId>],
    kb: &KnowledgeBase,
    scorer: &ReferenceScorer,
) -> Result<Vec<Prepared<'a>>> {
    subs.iter()
        .map(|sub| {
            kb.check_disease(sub.label)?;
            let group = groups[sub.label.0].as_slice();
            let base = group
                .iter()
                .map(|&d| scorer.base_margin(&sub.evidence, d, kb))
                .collect::<Result<Vec<_>>>()?;
            Ok(Prepared { sub, group, base })
        })
        .collect()
}

struct Layout {
    n: usize,
    rank: usize,
}

impl Layout {
    fn bias(&self, d: usize) -> usize {
        d
    }
    fn u(&self, d: usize, k: usize) -> usize {
        self.n + d * self.rank + k
    }
    fn v(&self, s: usize, k: usize) -> usize {
        self.n + self.n * self.rank + s * self.rank + k
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss of one unit; accumulates `scale * dLoss/dparams` into `grad` when given.
fn unit_loss(
    p: &Prepared<'_>,
    params: &[f64],
    layout: &Layout,
    target: &[f64],
    tau: f64,
    grad: Option<(&mut [f64], f64)>,
) -> Result<(f64, bool)> {
    let g = p.group.len();
    let entries = p.sub.evidence.entries();
    let mut conf = vec![0.0; g];
    for (j, &d) in p.group.iter().enumerate() {
        let mut margin = p.base[j] + params[layout.bias(d.0)];
        for &(s, st) in entries {
            let mut delta = 0.0;
            for k in 0..layout.rank {
                delta += params[layout.u(d.0, k)] * params[layout.v(s.0, k)];
            }
            margin += st.sign() * delta;
        }
        conf[j] = sigmoid(margin / tau).max(f64::MIN_POSITIVE);
    }
    let total: f64 = conf.iter().sum();
    let dist: Vec<f64> = conf.iter().map(|c| c / total).collect();
    let loss = kl_loss(target, &dist)?;
    let hit = (1..g).all(|j| conf[0] > conf[j]);

    if let Some((grad, scale)) = grad {
        for (j, &d) in p.group.iter().enumerate() {
            // d loss / d margin_j
            let dconf = (1.0 - target[j] / dist[j]) / total;
            let gm = scale * dconf * conf[j] * (1.0 - conf[j]) / tau;
            if gm == 0.0 {
                continue;
            }
            grad[layout.bias(d.0)] += gm;
            for &(s, st) in entries {
                let sg = st.sign() * gm;
                for k in 0..layout.rank {
                    grad[layout.u(d.0, k)] += sg * params[layout.v(s.0, k)];
                    grad[layout.v(s.0, k)] += sg * params[layout.u(d.0, k)];
                }
            }
        }
    }
    Ok((loss, hit))
}

fn check_config(cfg: &CalibrationConfig) -> Result<()> {
    if !(cfg.tau > 0.0) {
        return Err(Error::NonPositiveTemperature(cfg.tau));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("calibration batch must be positive".into()));
    }
    Ok(())
}

/// Mean KL over `subs` and its analytic gradient with respect to the
/// adapter's flat parameters (order: bias, U, V).
pub fn calibration_objective(
    adapter: &Adapter,
    subs: &[SubTrajectory],
    kb: &KnowledgeBase,
    scorer: &ReferenceScorer,
    cfg: &CalibrationConfig,
) -> Result<(f64, Vec<f64>)> {
    check_config(cfg)?;
    check_adapter(kb, adapter)?;
    if subs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let groups = calibration_groups(kb, cfg.group_len)?;
    let prepared = prepare(subs, &groups, kb, scorer)?;
    let layout = Layout {
        n: adapter.disease_count(),
        rank: adapter.rank(),
    };
    let params = adapter.to_flat();
    let mut grad = vec![0.0; params.len()];
    let scale = 1.0 / subs.len() as f64;
    let mut total = 0.0;
    for p in &prepared {
        let target = target_distribution(p.group.len(), 0, cfg.epsilon)?;
        total += unit_loss(p, &params, &layout, &target, cfg.tau, Some((&mut grad, scale)))?.0;
    }
    Ok((total * scale, grad))
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub adapter: Adapter,
    /// Mean KL over the training set at the end of each epoch.
    pub loss_trace: Vec<f64>,
}

impl CalibrationOutcome {
    pub fn loss_trace_csv(&self) -> String {
        let mut out = String::from("epoch,mean_kl\n");
        for (i, l) in self.loss_trace.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mean_kl: f64,
    /// Share of units where the label strictly out-scores the rest of its group.
    pub group_accuracy: f64,
}

/// Mean KL and group top-1 accuracy of `scorer` (with its own adapter, if any).
pub fn evaluate_calibration(
    scorer: &ReferenceScorer,
    subs: &[SubTrajectory],
    kb: &KnowledgeBase,
    cfg: &CalibrationConfig,
) -> Result<CalibrationReport> {
    check_config(cfg)?;
    if subs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let adapter = match scorer.adapter() {
        Some(a) => a.clone(),
        None => Adapter::zeros(kb.disease_count(), kb.symptom_count(), 1),
    };
    check_adapter(kb, &adapter)?;
    let groups = calibration_groups(kb, cfg.group_len)?;
    let base_scorer = scorer.without_adapter();
    let prepared = prepare(subs, &groups, kb, &base_scorer)?;
    let layout = Layout {
        n: adapter.disease_count(),
        rank: adapter.rank(),
    };
    let params = adapter.to_flat();
    let mut total = 0.0;
    let mut hits = 0usize;
    for p in &prepared {
        let target = target_distribution(p.group.len(), 0, cfg.epsilon)?;
        let (l, hit) = unit_loss(p, &params, &layout, &target, cfg.tau, None)?;
        total += l;
        hits += usize::from(hit);
    }
    Ok(CalibrationReport {
        mean_kl: total / subs.len() as f64,
        group_accuracy: hits as f64 / subs.len() as f64,
    })
}

/// Trains `adapter` with Adam over shuffled mini-batches. The scorer's own
/// adapter is ignored; its offsets and smoothing are kept fixed.
pub fn calibrate(
    adapter: Adapter,
    subs: &[SubTrajectory],
    kb: &KnowledgeBase,
    scorer: &ReferenceScorer,
    cfg: &CalibrationConfig,
) -> Result<CalibrationOutcome> {
    check_config(cfg)?;
    check_adapter(kb, &adapter)?;
    if subs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let groups = calibration_groups(kb, cfg.group_len)?;
    let base_scorer = scorer.without_adapter();
    let prepared = prepare(subs, &groups, kb, &base_scorer)?;
    let targets = (0..=groups.iter().map(Vec::len).max().unwrap_or(1))
        .map(|g| if g == 0 { Ok(Vec::new()) } else { target_distribution(g, 0, cfg.epsilon) })
        .collect::<Result<Vec<_>>>()?;
    let layout = Layout {
        n: adapter.disease_count(),
        rank: adapter.rank(),
    };
    let mut params = adapter.to_flat();
    let mut adam = Adam::new(params.len(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut grad = vec![0.0; params.len()];
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let p = &prepared[i];
                unit_loss(p, &params, &layout, &targets[p.group.len()], cfg.tau, Some((&mut grad, scale)))?;
            }
            adam.step(&mut params, &grad);
        }
        let mut total = 0.0;
        for p in &prepared {
            total += unit_loss(p, &params, &layout, &targets[p.group.len()], cfg.tau, None)?.0;
        }
        trace.push(total / prepared.len() as f64);
    }

    let mut trained = adapter;
    trained.set_flat(&params)?;
    Ok(CalibrationOutcome {
        adapter: trained,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SymptomId;
    use crate::types::SymptomStatus::{Absent, Present};
    use proptest::prelude::*;

    fn rec(ex: usize, im: usize, d: usize) -> PatientRecord {
        PatientRecord::new(
            (0..ex).map(|s| (SymptomId(s), Present)).collect(),
            (ex..ex + im).map(|s| (SymptomId(s), Absent)).collect(),
            DiseaseId(d),
        )
    }

    #[test]
    fn prefix_counts() {
        let subs = build_calibration_set(&[rec(2, 3, 0)]);
        let lens: Vec<usize> = subs.iter().map(|s| s.evidence.len()).collect();
        assert_eq!(lens, vec![2, 3, 4, 5]);
        assert_eq!(build_calibration_set(&[rec(3, 0, 1)]).len(), 1);
        // prefixes keep record order, explicit first
        assert_eq!(subs[1].evidence.entries()[2], (SymptomId(2), Absent));
    }

    #[test]
    fn target_examples() {
        assert_eq!(target_distribution(2, 1, 0.0).unwrap(), vec![0.0, 1.0]);
        let t = target_distribution(5, 2, 0.01).unwrap();
        let expect: Vec<f64> = [0.01, 0.01, 0.99, 0.01, 0.01].iter().map(|x| x / 1.03).collect();
        for (a, b) in t.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(target_distribution(5, 0, 0.2), Err(Error::InvalidEpsilon { .. })));
        assert!(matches!(target_distribution(5, 0, -0.1), Err(Error::InvalidEpsilon { .. })));
        assert!(target_distribution(3, 3, 0.01).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let l = kl_loss(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(kl_loss(&[1.0], &[0.5, 0.5]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(kl_loss(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::ZeroPrediction(1))));
    }

    proptest! {
        #[test]
        fn target_sums_to_one(g in 2usize..10, pos in 0usize..10, frac in 0.0f64..0.999) {
            let pos = pos % g;
            let eps = frac / g as f64;
            let t = target_distribution(g, pos, eps).unwrap();
            prop_assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gibbs_inequality(raw in proptest::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..10)) {
            let ts: f64 = raw.iter().map(|r| r.0).sum::<f64>().max(1e-9);
            let qs: f64 = raw.iter().map(|r| r.1).sum();
            let t: Vec<f64> = raw.iter().map(|r| r.0 / ts).collect();
            let q: Vec<f64> = raw.iter().map(|r| r.1 / qs).collect();
            if t.iter().sum::<f64>() > 0.5 {
                prop_assert!(kl_loss(&t, &q).unwrap() >= -1e-12);
                prop_assert!(kl_loss(&q, &q).unwrap().abs() < 1e-12);
            }
        }
    }
}
