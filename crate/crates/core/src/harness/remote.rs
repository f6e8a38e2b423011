//! HTTP scoring backend.
//!
//! Each query is a `POST {endpoint}/score` with the evidence, the disease
//! index and that disease's knowledge snippet; the server answers with a
//! `logit_T`/`logit_F` pair. Answers are cached per (evidence, disease) for
//! the lifetime of the client.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::diagnosis::{BinaryLogits, ScoringBackend};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::types::{DiseaseId, Evidence};

pub const PROTOCOL_VERSION: u32 = 1;
/// Overrides the configured endpoint when set.
pub const ENDPOINT_ENV: &str = "DUALCONSULT_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub v: u32,
    pub evidence: Vec<(usize, i8)>,
    pub disease: usize,
    pub knowledge: Vec<(usize, f64)>,
}

impl ScoreRequest {
    pub fn new(evidence: &Evidence, disease: DiseaseId, kb: &KnowledgeBase) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            evidence: evidence.entries().iter().map(|&(s, st)| (s.0, st.value())).collect(),
            disease: disease.0,
            knowledge: kb.relevant(disease).iter().map(|&(s, f)| (s.0, f)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_secs: 5.0,
            max_in_flight: 4,
        }
    }
}

impl RemoteConfig {
    /// Endpoint from the environment, falling back to the configured one.
    pub fn resolved_endpoint(&self) -> Option<String> {
        std::env::var(ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .or_else(|| self.endpoint.clone())
    }
}

type CacheKey = (Vec<(usize, i8)>, usize);

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

pub struct RemoteScorer {
    url: String,
    agent: ureq::Agent,
    cache: Mutex<HashMap<CacheKey, BinaryLogits>>,
    calls: AtomicUsize,
    slots: Slots,
}

impl RemoteScorer {
    pub fn new(endpoint: &str, cfg: &RemoteConfig) -> Self {
        let timeout = Duration::from_secs_f64(cfg.timeout_secs.max(0.001));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/score", endpoint.trim_end_matches('/')),
            agent,
            cache: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
            slots: Slots {
                free: Mutex::new(cfg.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    /// Network round-trips made so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn post(&self, req: &ScoreRequest) -> Result<BinaryLogits> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.slots.acquire();
        let res = self.agent.post(&self.url).send_json(req);
        self.slots.release();
        let mut resp = res.map_err(map_transport)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(map_transport)?;
        if !(200..300).contains(&status) {
            return Err(Error::ServerError(format!("status {status}: {body}")));
        }
        let logits: BinaryLogits = serde_json::from_str(&body).map_err(|e| Error::BadResponse(e.to_string()))?;
        if !logits.is_finite() {
            return Err(Error::BadResponse("non-finite logits".into()));
        }
        Ok(logits)
    }
}

fn map_transport(e: ureq::Error) -> Error {
    match e {
        ureq::Error::Timeout(_) => Error::Timeout,
        ureq::Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
            Error::Timeout
        }
        other => Error::ServerError(other.to_string()),
    }
}

impl ScoringBackend for RemoteScorer {
    fn score(&self, evidence: &Evidence, disease: DiseaseId, kb: &KnowledgeBase) -> Result<BinaryLogits> {
        kb.check_disease(disease)?;
        evidence.check_range(kb.symptom_count())?;
        let req = ScoreRequest::new(evidence, disease, kb);
        let key = (req.evidence.clone(), disease.0);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let logits = self.post(&req)?;
        self.cache.lock().unwrap().insert(key, logits);
        Ok(logits)
    }
}
