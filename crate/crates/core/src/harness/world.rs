//! Seeded synthetic diagnosis worlds with a closed-form posterior.
//!
//! Diseases come in clusters of up to three. Members of a cluster share a
//! few symptoms and each disease also owns one signature symptom; every
//! other symptom has probability zero under that disease. Records list the
//! symptoms that appeared plus, as ruled-out findings, some of the
//! siblings' signatures. A record's self-report
//! is a single shared symptom, so telling cluster members apart requires
//! asking about signatures.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{build_kb, KnowledgeBase};
use crate::types::{DiseaseId, Evidence, Finding, PatientRecord, SymptomId, SymptomStatus};

const CLUSTER_SIZE: usize = 3;
const SHARED_PER_CLUSTER: usize = 3;
/// Chance that a sibling's signature symptom is recorded as absent.
const SIBLING_ABSENT_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub sharpness: f64,
    pub prior: Vec<f64>,
    /// `n x m` Bernoulli parameters, row-major by disease.
    pub theta: Vec<f64>,
    /// Cluster index of each disease.
    pub cluster: Vec<usize>,
    /// Signature symptom of each disease.
    pub signature: Vec<SymptomId>,
    pub records: Vec<PatientRecord>,
}

impl SyntheticWorld {
    pub fn theta(&self, d: DiseaseId, s: SymptomId) -> f64 {
        self.theta[d.0 * self.m + s.0]
    }

    fn siblings(&self, d: DiseaseId) -> impl Iterator<Item = DiseaseId> + '_ {
        (0..self.n)
            .filter(move |&o| o != d.0 && self.cluster[o] == self.cluster[d.0])
            .map(DiseaseId)
    }

    /// Draws one record of disease `d`.
    pub fn sample_record<R: Rng + ?Sized>(&self, d: DiseaseId, rng: &mut R) -> PatientRecord {
        loop {
            let mut present = Vec::new();
            let mut absent = Vec::new();
            for s in 0..self.m {
                let t = self.theta(d, SymptomId(s));
                if t <= 0.0 {
                    continue;
                }
                if rng.random::<f64>() < t {
                    present.push(SymptomId(s));
                }
            }
            let shared: Vec<SymptomId> = present
                .iter()
                .copied()
                .filter(|&s| s != self.signature[d.0])
                .collect();
            let explicit = match shared.choose(rng).or_else(|| present.choose(rng)) {
                Some(&s) => s,
                None => continue,
            };
            for sib in self.siblings(d) {
                let sig = self.signature[sib.0];
                if !present.contains(&sig) && rng.random::<f64>() < SIBLING_ABSENT_RATE {
                    absent.push(sig);
                }
            }
            let mut implicit: Vec<Finding> = present
                .iter()
                .filter(|&&s| s != explicit)
                .map(|&s| (s, SymptomStatus::Present))
                .chain(absent.iter().map(|&s| (s, SymptomStatus::Absent)))
                .collect();
            implicit.shuffle(rng);
            return PatientRecord::new(vec![(explicit, SymptomStatus::Present)], implicit, d);
        }
    }

    /// `count` records with labels drawn from the prior.
    pub fn sample_records<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<PatientRecord> {
        (0..count)
            .map(|_| {
                let mut u = rng.random::<f64>();
                let mut d = self.n - 1;
                for (i, p) in self.prior.iter().enumerate() {
                    if u < *p {
                        d = i;
                        break;
                    }
                    u -= p;
                }
                self.sample_record(DiseaseId(d), rng)
            })
            .collect()
    }

    /// Empirical knowledge base of the world's own records.
    pub fn knowledge_base(&self) -> Result<KnowledgeBase> {
        build_kb(&self.records, self.m, self.n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidRecord(e.to_string()))
    }
}

/// Generates a world with `n` diseases over `m` symptoms and `records`
/// sampled records. Signature and shared symptoms occur with probability
/// `sharpness` and the rest never, so
/// `sharpness = 1` makes every disease a deterministic signature.
pub fn gen_world(n: usize, m: usize, seed: u64, sharpness: f64, records: usize) -> Result<SyntheticWorld> {
    if n < 2 || m < n {
        return Err(Error::Config(format!("a world needs n >= 2 and m >= n (got n={n}, m={m})")));
    }
    if !(sharpness > 0.0 && sharpness <= 1.0) {
        return Err(Error::Config(format!("sharpness must be in (0, 1], got {sharpness}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = n.div_ceil(CLUSTER_SIZE);
    let shared = SHARED_PER_CLUSTER.min((m - n) / clusters);

    let mut symptoms: Vec<usize> = (0..m).collect();
    symptoms.shuffle(&mut rng);
    let mut diseases: Vec<usize> = (0..n).collect();
    diseases.shuffle(&mut rng);

    let mut theta = vec![0.0; n * m];
    let mut cluster = vec![0; n];
    let mut signature = vec![SymptomId(0); n];
    let mut next = 0;
    for (i, &d) in diseases.iter().enumerate() {
        cluster[d] = i / CLUSTER_SIZE;
        signature[d] = SymptomId(symptoms[next]);
        theta[d * m + symptoms[next]] = sharpness;
        next += 1;
    }
    for c in 0..clusters {
        for _ in 0..shared {
            let s = symptoms[next];
            next += 1;
            for d in (0..n).filter(|&d| cluster[d] == c) {
                theta[d * m + s] = sharpness;
            }
        }
    }

    let mut world = SyntheticWorld {
        n,
        m,
        seed,
        sharpness,
        prior: vec![1.0 / n as f64; n],
        theta,
        cluster,
        signature,
        records: Vec::new(),
    };
    world.records = world.sample_records(records, &mut rng);
    Ok(world)
}

/// `P(d | evidence)` under the world's generator. Evidence that is
/// impossible under every disease yields the prior.
pub fn exact_posterior(world: &SyntheticWorld, evidence: &Evidence) -> Result<Vec<f64>> {
    evidence.check_range(world.m)?;
    let logp: Vec<f64> = (0..world.n)
        .map(|d| {
            let mut lp = world.prior[d].ln();
            for &(s, st) in evidence.entries() {
                let t = world.theta(DiseaseId(d), s);
                lp += match st {
                    SymptomStatus::Present => t.ln(),
                    SymptomStatus::Absent => (1.0 - t).ln(),
                    SymptomStatus::Unknown => 0.0,
                };
            }
            lp
        })
        .collect();
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let z: f64 = world.prior.iter().sum();
        return Ok(world.prior.iter().map(|p| p / z).collect());
    }
    let w: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}
