//! Python bindings.
//!
//! Evidence is passed as a list of `(symptom, status)` pairs with status
//! `1` (present) or `-1` (absent). Records cross the boundary as JSON lines
//! in the canonical dataset layout.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dualconsult::diagnosis::{self, BinaryLogits, ReferenceScorer};
use dualconsult::environment::{EnvConfig, SimulatedPatient};
use dualconsult::harness::dataset::{parse_jsonl, to_jsonl};
use dualconsult::harness::world;
use dualconsult::inquiry::cooccurrence;
use dualconsult::kb;
use dualconsult::orchestrator::{self, AblationConfig, Components, ConsultConfig, TrainConfig};
use dualconsult::policy::{self, ActionMask, NetConfig, PolicyNet};
use dualconsult::types::{DiseaseId, Evidence, SymptomId, SymptomStatus};

fn py_err(e: dualconsult::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn evidence(pairs: Vec<(usize, i64)>) -> PyResult<Evidence> {
    let mut e = Evidence::new();
    for (s, v) in pairs {
        let st = SymptomStatus::from_value(v).ok_or_else(|| PyValueError::new_err(format!("bad status {v}")))?;
        e.push(SymptomId(s), st).map_err(py_err)?;
    }
    Ok(e)
}

#[pyclass(name = "KnowledgeBase", frozen)]
struct PyKnowledgeBase {
    inner: kb::KnowledgeBase,
}

#[pymethods]
impl PyKnowledgeBase {
    /// Builds the frequency table from JSON-lines records.
    #[staticmethod]
    fn from_jsonl(text: &str, symptoms: usize, diseases: usize) -> PyResult<Self> {
        let records = parse_jsonl(text).map_err(py_err)?;
        let inner = kb::build_kb(&records, symptoms, diseases).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn symptoms(&self) -> usize {
        self.inner.symptom_count()
    }

    #[getter]
    fn diseases(&self) -> usize {
        self.inner.disease_count()
    }

    fn freq(&self, disease: usize, symptom: usize) -> PyResult<f64> {
        self.inner.check_disease(DiseaseId(disease)).map_err(py_err)?;
        if symptom >= self.inner.symptom_count() {
            return Err(PyValueError::new_err(format!("symptom {symptom} out of range")));
        }
        Ok(self.inner.freq(DiseaseId(disease), SymptomId(symptom)))
    }

    fn prior(&self) -> Vec<f64> {
        self.inner.prior().to_vec()
    }

    /// `(symptom, frequency)` pairs with nonzero frequency, most frequent first.
    fn relevant(&self, disease: usize) -> PyResult<Vec<(usize, f64)>> {
        self.inner.check_disease(DiseaseId(disease)).map_err(py_err)?;
        Ok(self.inner.relevant(DiseaseId(disease)).iter().map(|&(s, f)| (s.0, f)).collect())
    }

    fn similar(&self, disease: usize, k: usize) -> PyResult<Vec<usize>> {
        let out = kb::similar_diseases(&self.inner, DiseaseId(disease), k).map_err(py_err)?;
        Ok(out.into_iter().map(|d| d.0).collect())
    }

    /// Reference-scorer confidence for every disease.
    #[pyo3(signature = (evidence_pairs, tau = 1.0))]
    fn diagnose(&self, evidence_pairs: Vec<(usize, i64)>, tau: f64) -> PyResult<Vec<f64>> {
        let e = evidence(evidence_pairs)?;
        diagnosis::diagnose(&e, &self.inner, &ReferenceScorer::new(), tau).map_err(py_err)
    }
}

#[pyclass(name = "World", frozen)]
struct PyWorld {
    inner: world::SyntheticWorld,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (diseases = 6, symptoms = 20, seed = 0, sharpness = 0.9, records = 500))]
    fn new(diseases: usize, symptoms: usize, seed: u64, sharpness: f64, records: usize) -> PyResult<Self> {
        let inner = world::gen_world(diseases, symptoms, seed, sharpness, records).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: world::SyntheticWorld::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn symptoms(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn diseases(&self) -> usize {
        self.inner.n
    }

    fn theta(&self, disease: usize, symptom: usize) -> PyResult<f64> {
        if disease >= self.inner.n || symptom >= self.inner.m {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.theta(DiseaseId(disease), SymptomId(symptom)))
    }

    fn records_jsonl(&self) -> String {
        to_jsonl(&self.inner.records)
    }

    /// `count` fresh records drawn with `seed`, as JSON lines.
    fn sample_jsonl(&self, count: usize, seed: u64) -> String {
        to_jsonl(&self.inner.sample_records(count, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    fn knowledge_base(&self) -> PyResult<PyKnowledgeBase> {
        Ok(PyKnowledgeBase {
            inner: self.inner.knowledge_base().map_err(py_err)?,
        })
    }

    /// Exact posterior over diseases given the evidence.
    fn posterior(&self, evidence_pairs: Vec<(usize, i64)>) -> PyResult<Vec<f64>> {
        world::exact_posterior(&self.inner, &evidence(evidence_pairs)?).map_err(py_err)
    }
}

#[pyclass(name = "Policy")]
struct PyPolicy {
    inner: PolicyNet,
}

#[pymethods]
impl PyPolicy {
    /// Untrained network with the default layer sizes.
    #[new]
    #[pyo3(signature = (symptoms, diseases, seed = 0))]
    fn new(symptoms: usize, diseases: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            inner: PolicyNet::new(symptoms, diseases, &NetConfig::default(), &mut rng),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: PolicyNet::load(path.as_ref()).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(py_err)
    }

    #[getter]
    fn actions(&self) -> usize {
        self.inner.action_count()
    }

    /// Trains on `world`'s records; returns the number of updates.
    #[pyo3(signature = (world, total_steps = 51200, steps_per_update = 1024, seed = 0))]
    fn train(&mut self, world: &PyWorld, total_steps: usize, steps_per_update: usize, seed: u64) -> PyResult<usize> {
        let kb = world.inner.knowledge_base().map_err(py_err)?;
        let cfg = TrainConfig {
            total_steps,
            steps_per_update,
            seed,
            ..TrainConfig::default()
        };
        let scorer = ReferenceScorer::new();
        let report = orchestrator::train_policy(
            &mut self.inner,
            &world.inner.records,
            &kb,
            &scorer,
            &EnvConfig::default(),
            &cfg,
            |_, _| {},
        )
        .map_err(py_err)?;
        Ok(report.updates.len())
    }
}

/// Temperature-scaled confidence of a logit pair.
#[pyfunction]
#[pyo3(signature = (logit_true, logit_false, tau = 1.0))]
fn confidence(logit_true: f64, logit_false: f64, tau: f64) -> PyResult<f64> {
    diagnosis::confidence(BinaryLogits::new(logit_true, logit_false), tau).map_err(py_err)
}

/// Softmax restricted to the enabled actions; disabled entries are zero.
#[pyfunction]
fn masked_distribution(logits: Vec<f64>, mask: Vec<bool>) -> PyResult<Vec<f64>> {
    policy::masked_distribution(&logits, &ActionMask { bits: mask }).map_err(py_err)
}

fn parts_for(world: &PyWorld) -> PyResult<(kb::KnowledgeBase, dualconsult::inquiry::Cooccurrence)> {
    let kb = world.inner.knowledge_base().map_err(py_err)?;
    let cooc = cooccurrence(&world.inner.records, world.inner.m).map_err(py_err)?;
    Ok((kb, cooc))
}

/// Runs the consultation workflow over JSON-lines `records` and returns
/// `acc`, `acc_init`, `avg_n` and, when requested, the random baseline's
/// accuracy.
#[pyfunction]
#[pyo3(name = "bench", signature = (world, policy, records, max_turns = 10, seed = 0, without = None, random_baseline = false))]
fn run_bench(
    world: &PyWorld,
    policy: &PyPolicy,
    records: &str,
    max_turns: usize,
    seed: u64,
    without: Option<&str>,
    random_baseline: bool,
) -> PyResult<Vec<(String, f64)>> {
    let records = parse_jsonl(records).map_err(py_err)?;
    let (kb, cooc) = parts_for(world)?;
    let scorer = ReferenceScorer::new();
    let parts = Components::new(&kb, &scorer, &scorer, &policy.inner, &cooc);
    let ablation = match without {
        Some(name) => AblationConfig::without(name).map_err(py_err)?,
        None => AblationConfig::full(),
    };
    let mut cfg = ConsultConfig::default();
    cfg.env.max_turns = max_turns;
    let (m, _) = orchestrator::run_suite(&records, &parts, &cfg, &ablation, seed).map_err(py_err)?;
    let mut out = vec![("acc".into(), m.acc), ("acc_init".into(), m.acc_init), ("avg_n".into(), m.avg_n)];
    if random_baseline {
        let (r, _) = orchestrator::run_random_suite(&records, &kb, &scorer, &cfg.env, seed).map_err(py_err)?;
        out.push(("random_acc".into(), r.acc));
    }
    Ok(out)
}

/// One consultation on a JSON record; returns the trace as JSON lines.
#[pyfunction]
#[pyo3(signature = (world, policy, record, max_turns = 10, seed = 0))]
fn consult(world: &PyWorld, policy: &PyPolicy, record: &str, max_turns: usize, seed: u64) -> PyResult<String> {
    let record = parse_jsonl(record)
        .map_err(py_err)?
        .into_iter()
        .next()
        .ok_or_else(|| PyValueError::new_err("no record given"))?;
    let (kb, cooc) = parts_for(world)?;
    let scorer = ReferenceScorer::new();
    let parts = Components::new(&kb, &scorer, &scorer, &policy.inner, &cooc);
    let mut cfg = ConsultConfig::default();
    cfg.env.max_turns = max_turns;
    let mut patient = SimulatedPatient {
        typicality_k: cfg.env.typicality_k,
    };
    let mut rng = orchestrator::record_rng(seed, 0);
    let result = orchestrator::run_consultation(&record, &parts, &mut patient, &cfg, &AblationConfig::full(), &mut rng)
        .map_err(py_err)?;
    Ok(result.trace_jsonl())
}

#[pymodule]
fn dualconsult_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKnowledgeBase>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(confidence, m)?)?;
    m.add_function(wrap_pyfunction!(masked_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add_function(wrap_pyfunction!(consult, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
