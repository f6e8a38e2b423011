//! Dataset ingestion, splitting, statistics and augmentation.
//!
//! The canonical layout is a directory holding `train.jsonl`, `test.jsonl`,
//! an optional `dev.jsonl` and an optional `vocab.json`. Public corpora
//! distributed as goal sets (a JSON object of splits whose entries carry
//! `disease_tag` and `goal.explicit_inform_slots` /
//! `goal.implicit_inform_slots`) are read by [`read_goal_set`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, Vocab};
use crate::types::{DiseaseId, Finding, PatientRecord, SymptomId, SymptomStatus};

/// Share of the training split moved to dev when a corpus has none.
pub const DEFAULT_DEV_FRACTION: f64 = 1.0 / 9.0;
/// Augmented symptoms drawn with a frequency below this are kept as Absent.
pub const ABSENT_FREQ_THRESHOLD: f64 = 0.05;
const DRAW_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Canonical,
    GoalSet,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Format::Canonical),
            "goal-set" | "goalset" => Ok(Format::GoalSet),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub diseases: usize,
    pub symptoms: usize,
    pub records: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub avg_symptoms: f64,
    pub avg_explicit: f64,
    pub avg_implicit: f64,
}

/// Records removed or repaired during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub dropped_empty_explicit: usize,
    pub duplicate_findings_removed: usize,
    pub dev_split_created: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<PatientRecord>,
    pub dev: Vec<PatientRecord>,
    pub test: Vec<PatientRecord>,
    pub vocab: Vocab,
    pub stats: DatasetStats,
    pub filter: FilterReport,
}

impl DatasetBundle {
    pub fn symptom_count(&self) -> usize {
        self.vocab.symptoms.len()
    }

    pub fn disease_count(&self) -> usize {
        self.vocab.diseases.len()
    }

    /// Writes the canonical layout into `dir`.
    pub fn write_canonical(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, recs) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            fs::write(dir.join(format!("{name}.jsonl")), to_jsonl(recs))?;
        }
        let vocab = serde_json::to_string_pretty(&self.vocab).expect("vocab serializes");
        fs::write(dir.join("vocab.json"), vocab)?;
        Ok(())
    }
}

pub fn compute_stats(train: &[PatientRecord], dev: &[PatientRecord], test: &[PatientRecord], vocab: &Vocab) -> DatasetStats {
    let all = || train.iter().chain(dev).chain(test);
    let records = train.len() + dev.len() + test.len();
    let denom = records.max(1) as f64;
    DatasetStats {
        diseases: vocab.diseases.len(),
        symptoms: vocab.symptoms.len(),
        records,
        train: train.len(),
        dev: dev.len(),
        test: test.len(),
        avg_symptoms: all().map(|r| r.len()).sum::<usize>() as f64 / denom,
        avg_explicit: all().map(|r| r.explicit.len()).sum::<usize>() as f64 / denom,
        avg_implicit: all().map(|r| r.implicit.len()).sum::<usize>() as f64 / denom,
    }
}

pub fn to_jsonl(records: &[PatientRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Parses line-delimited records; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<PatientRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PatientRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Removes repeated symptom ids (first occurrence wins); returns how many
/// findings were dropped.
fn dedupe(record: &mut PatientRecord) -> usize {
    let mut seen = HashSet::new();
    let before = record.len();
    record.explicit.retain(|f| seen.insert(f.0));
    record.implicit.retain(|f| seen.insert(f.0));
    before - record.len()
}

fn clean(records: Vec<PatientRecord>, report: &mut FilterReport) -> Vec<PatientRecord> {
    records
        .into_iter()
        .filter_map(|mut r| {
            report.duplicate_findings_removed += dedupe(&mut r);
            if r.explicit.is_empty() {
                report.dropped_empty_explicit += 1;
                None
            } else {
                Some(r)
            }
        })
        .collect()
}

/// Moves a label-stratified `fraction` of `train` into a new dev split.
/// Per-label quotas use largest-remainder rounding so the dev size is
/// `round(fraction * len)`.
pub fn stratified_split(train: Vec<PatientRecord>, fraction: f64, seed: u64) -> (Vec<PatientRecord>, Vec<PatientRecord>) {
    let mut by_label: BTreeMap<usize, Vec<PatientRecord>> = BTreeMap::new();
    for r in train {
        by_label.entry(r.label.0).or_default().push(r);
    }
    let total: usize = by_label.values().map(Vec::len).sum();
    let target = (fraction * total as f64).round() as usize;
    let mut quotas: Vec<(usize, usize, f64)> = by_label
        .iter()
        .map(|(&l, v)| {
            let exact = fraction * v.len() as f64;
            (l, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        quotas[i].1 += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut keep, mut dev) = (Vec::new(), Vec::new());
    for (label, quota, _) in quotas {
        let mut group = by_label.remove(&label).unwrap_or_default();
        group.shuffle(&mut rng);
        let rest = group.split_off(quota.min(group.len()));
        dev.extend(group);
        keep.extend(rest);
    }
    (keep, dev)
}

fn read_vocab(path: &Path) -> Result<Option<Vocab>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })
}

fn read_split(path: &Path) -> Result<Vec<PatientRecord>> {
    let text = fs::read_to_string(path)?;
    parse_jsonl(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Loads a canonical dataset directory.
pub fn read_canonical(dir: &Path, dev_fraction: f64, seed: u64) -> Result<DatasetBundle> {
    let mut report = FilterReport::default();
    let train = clean(read_split(&dir.join("train.jsonl"))?, &mut report);
    let test = clean(read_split(&dir.join("test.jsonl"))?, &mut report);
    let dev_path = dir.join("dev.jsonl");
    let (train, dev) = if dev_path.exists() {
        (train, clean(read_split(&dev_path)?, &mut report))
    } else {
        report.dev_split_created = true;
        stratified_split(train, dev_fraction, seed)
    };
    let vocab = match read_vocab(&dir.join("vocab.json"))? {
        Some(v) => v,
        None => {
            let all = train.iter().chain(&dev).chain(&test);
            let m = all.clone().flat_map(|r| r.findings().map(|f| f.0 .0 + 1)).max().unwrap_or(0);
            let n = all.map(|r| r.label.0 + 1).max().unwrap_or(0);
            Vocab::numbered(m, n)
        }
    };
    finish(train, dev, test, vocab, report)
}

fn finish(
    train: Vec<PatientRecord>,
    dev: Vec<PatientRecord>,
    test: Vec<PatientRecord>,
    vocab: Vocab,
    filter: FilterReport,
) -> Result<DatasetBundle> {
    let (m, n) = (vocab.symptoms.len(), vocab.diseases.len());
    for r in train.iter().chain(&dev).chain(&test) {
        r.validate(m, n)?;
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let stats = compute_stats(&train, &dev, &test, &vocab);
    Ok(DatasetBundle {
        train,
        dev,
        test,
        vocab,
        stats,
        filter,
    })
}

fn slot_status(v: &Value) -> Option<SymptomStatus> {
    match v {
        Value::Bool(true) => Some(SymptomStatus::Present),
        Value::Bool(false) => Some(SymptomStatus::Absent),
        Value::Number(x) => match x.as_i64() {
            Some(1) => Some(SymptomStatus::Present),
            Some(0) | Some(-1) => Some(SymptomStatus::Absent),
            _ => None,
        },
        Value::String(s) => match s.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => Some(SymptomStatus::Present),
            "false" | "0" | "-1" | "no" => Some(SymptomStatus::Absent),
            _ => None,
        },
        _ => None,
    }
}

struct RawGoal {
    disease: String,
    explicit: Vec<(String, SymptomStatus)>,
    implicit: Vec<(String, SymptomStatus)>,
}

fn raw_goals(split: &Value, name: &str) -> Result<Vec<RawGoal>> {
    let items = split
        .as_array()
        .ok_or_else(|| Error::InvalidRecord(format!("split `{name}` is not a list")))?;
    let slots = |goal: &Value, key: &str, idx: usize| -> Result<Vec<(String, SymptomStatus)>> {
        let Some(obj) = goal.get(key).and_then(Value::as_object) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for (sym, v) in obj {
            let st = slot_status(v).ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("split `{name}`: bad status {v} for `{sym}`"),
            })?;
            out.push((sym.clone(), st));
        }
        Ok(out)
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let disease = item
                .get("disease_tag")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: format!("split `{name}`: missing disease_tag"),
                })?
                .to_string();
            let goal = item.get("goal").unwrap_or(item);
            Ok(RawGoal {
                disease,
                explicit: slots(goal, "explicit_inform_slots", i)?,
                implicit: slots(goal, "implicit_inform_slots", i)?,
            })
        })
        .collect()
}

/// Reads a goal-set JSON file. Names are resolved against `vocab.json`
/// next to the file when present, otherwise a sorted vocabulary is built
/// from the data.
pub fn read_goal_set(path: &Path, dev_fraction: f64, seed: u64) -> Result<DatasetBundle> {
    let text = fs::read_to_string(path)?;
    let root: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut splits: BTreeMap<&str, Vec<RawGoal>> = BTreeMap::new();
    for name in ["train", "dev", "test"] {
        if let Some(v) = root.get(name) {
            splits.insert(name, raw_goals(v, name)?);
        }
    }
    if !splits.contains_key("train") || !splits.contains_key("test") {
        return Err(Error::InvalidRecord("goal set needs `train` and `test` splits".into()));
    }
    let sibling = path.with_file_name("vocab.json");
    let vocab = match read_vocab(&sibling)? {
        Some(v) => v,
        None => {
            let mut syms = BTreeSet::new();
            let mut dis = BTreeSet::new();
            for g in splits.values().flatten() {
                dis.insert(g.disease.clone());
                syms.extend(g.explicit.iter().chain(&g.implicit).map(|(s, _)| s.clone()));
            }
            Vocab {
                symptoms: syms.into_iter().collect(),
                diseases: dis.into_iter().collect(),
            }
        }
    };
    let resolve = |g: &RawGoal| -> Result<PatientRecord> {
        let label = vocab
            .disease_index(&g.disease)
            .ok_or_else(|| Error::UnknownSymbol(g.disease.clone()))?;
        let conv = |list: &[(String, SymptomStatus)]| -> Result<Vec<Finding>> {
            list.iter()
                .map(|(s, st)| {
                    vocab
                        .symptom_index(s)
                        .map(|i| (SymptomId(i), *st))
                        .ok_or_else(|| Error::UnknownSymbol(s.clone()))
                })
                .collect()
        };
        Ok(PatientRecord::new(conv(&g.explicit)?, conv(&g.implicit)?, DiseaseId(label)))
    };
    let mut report = FilterReport::default();
    let mut convert = |name: &str| -> Result<Option<Vec<PatientRecord>>> {
        match splits.get(name) {
            None => Ok(None),
            Some(gs) => {
                let recs = gs.iter().map(&resolve).collect::<Result<Vec<_>>>()?;
                Ok(Some(clean(recs, &mut report)))
            }
        }
    };
    let train = convert("train")?.unwrap_or_default();
    let test = convert("test")?.unwrap_or_default();
    let dev = convert("dev")?;
    let (train, dev) = match dev {
        Some(d) => (train, d),
        None => {
            report.dev_split_created = true;
            stratified_split(train, dev_fraction, seed)
        }
    };
    finish(train, dev, test, vocab, report)
}

pub fn ingest(path: &Path, format: Format, dev_fraction: f64, seed: u64) -> Result<DatasetBundle> {
    match format {
        Format::Canonical => read_canonical(path, dev_fraction, seed),
        Format::GoalSet => read_goal_set(path, dev_fraction, seed),
    }
}

/// Pads short records with symptoms sampled from their disease's
/// knowledge-base row. Draws are weighted by frequency; a draw is appended
/// as Present with probability equal to its frequency, as Absent when the
/// frequency is below [`ABSENT_FREQ_THRESHOLD`], and discarded otherwise.
pub fn augment(records: &[PatientRecord], kb: &KnowledgeBase, min_len: usize, seed: u64) -> Vec<PatientRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if r.len() >= min_len {
                return r;
            }
            let have: HashSet<SymptomId> = r.findings().map(|f| f.0).collect();
            let mut pool: Vec<(SymptomId, f64)> = (0..kb.symptom_count())
                .map(SymptomId)
                .filter(|s| !have.contains(s))
                .map(|s| (s, kb.freq(r.label, s)))
                .collect();
            while r.len() < min_len && !pool.is_empty() {
                let total: f64 = pool.iter().map(|p| p.1 + DRAW_FLOOR).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = pool.len() - 1;
                for (i, p) in pool.iter().enumerate() {
                    let w = p.1 + DRAW_FLOOR;
                    if u < w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                let (s, f) = pool.swap_remove(pick);
                if rng.random::<f64>() < f {
                    r.implicit.push((s, SymptomStatus::Present));
                } else if f < ABSENT_FREQ_THRESHOLD {
                    r.implicit.push((s, SymptomStatus::Absent));
                }
            }
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SymptomStatus::{Absent, Present};

    fn rec(ex: &[usize], im: &[(usize, i64)], label: usize) -> PatientRecord {
        PatientRecord::new(
            ex.iter().map(|&s| (SymptomId(s), Present)).collect(),
            im.iter()
                .map(|&(s, v)| (SymptomId(s), SymptomStatus::from_value(v).unwrap()))
                .collect(),
            DiseaseId(label),
        )
    }

    #[test]
    fn empty_explicit_records_are_dropped() {
        let mut report = FilterReport::default();
        let out = clean(vec![rec(&[0], &[], 0), rec(&[], &[(1, 1)], 1)], &mut report);
        assert_eq!(out.len(), 1);
        assert_eq!(report.dropped_empty_explicit, 1);
    }

    #[test]
    fn split_is_stratified_and_sized() {
        let train: Vec<_> = (0..90).map(|i| rec(&[0], &[], i % 3)).collect();
        let (keep, dev) = stratified_split(train, 1.0 / 9.0, 4);
        assert_eq!(dev.len(), 10);
        assert_eq!(keep.len(), 80);
        for l in 0..3 {
            let c = dev.iter().filter(|r| r.label.0 == l).count();
            assert!((3..=4).contains(&c));
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "{\"explicit\":[[0,1]],\"implicit\":[],\"label\":0}\n\nnot json\n";
        match parse_jsonl(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn augmentation_pads_without_duplicates() {
        let records = vec![rec(&[0], &[], 0), rec(&[1], &[], 1), rec(&[0], &[(1, 1), (2, -1), (3, 1)], 0)];
        let kb = crate::kb::build_kb(&records, 6, 2).unwrap();
        let out = augment(&records, &kb, 4, 7);
        assert_eq!(out[2], records[2]);
        for r in &out {
            r.validate(6, 2).unwrap();
            assert!(r.len() <= 6);
        }
        assert_eq!(out, augment(&records, &kb, 4, 7));
        // zero-frequency draws land as Absent
        assert!(out[1].implicit.iter().all(|f| f.1 == Absent || kb.freq(DiseaseId(1), f.0) > 0.0));
    }
}
