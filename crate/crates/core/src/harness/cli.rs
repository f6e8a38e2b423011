//! Command-line front end.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::Config;
use super::dataset::{augment, ingest, DatasetBundle, Format};
use super::remote::RemoteScorer;
use super::world::gen_world;
use crate::diagnosis::{build_calibration_set, calibrate, evaluate_calibration, Adapter, ReferenceScorer, ScoringBackend};
use crate::environment::Patient;
use crate::error::Error;
use crate::inquiry::{cooccurrence, Cooccurrence};
use crate::kb::{build_kb, KnowledgeBase};
use crate::orchestrator::{
    record_rng, run_consultation, run_random_suite, run_suite, train_policy, AblationConfig, Components,
    ConsultationResult, SuiteMetrics,
};
use crate::policy::PolicyNet;
use crate::types::{PatientRecord, SymptomId, SymptomStatus};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "dualconsult", version, about = "Consultation simulator: symptom inquiry policy plus calibrated diagnosis")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world and write it as a dataset directory
    GenWorld(GenWorldArgs),
    /// Read a corpus, filter it and write the canonical layout
    Ingest(IngestArgs),
    /// Build the knowledge base from a training split
    BuildKb(BuildKbArgs),
    /// Train the diagnostic adapter
    Calibrate(CalibrateArgs),
    /// Train the inquiry policy with PPO
    TrainPolicy(TrainArgs),
    /// Run one consultation
    Consult(ConsultArgs),
    /// Evaluate on a test split
    Bench(BenchArgs),
    /// Evaluate with one component removed
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory (canonical) or goal-set JSON file
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset name under the configured data root
    #[arg(long)]
    dataset: Option<String>,
    /// canonical | goal-set
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Policy checkpoint; an untrained seeded network is used when omitted
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Adapter checkpoint for the reference scorer
    #[arg(long)]
    adapter: Option<PathBuf>,
    /// Remote scoring endpoint (overrides config and environment)
    #[arg(long)]
    remote: Option<String>,
    /// Maximum inquiry turns
    #[arg(long = "L", alias = "max-turns")]
    max_turns: Option<usize>,
}

#[derive(Debug, Args)]
struct GenWorldArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    diseases: Option<usize>,
    #[arg(long)]
    symptoms: Option<usize>,
    #[arg(long)]
    sharpness: Option<f64>,
    #[arg(long)]
    records: Option<usize>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildKbArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// CSV of mean KL per epoch
    #[arg(long)]
    loss_trace: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
    /// CSV of per-update statistics
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    steps_per_update: Option<usize>,
}

#[derive(Debug, Args)]
struct ConsultArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Test record index
    #[arg(long, default_value_t = 0)]
    record: usize,
    /// Answer symptom questions from stdin
    #[arg(long)]
    interactive: bool,
    /// Write the turn trace as JSON lines
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for per-case traces
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Also run the uniform-random-inquiry baseline
    #[arg(long)]
    random_baseline: bool,
    /// Write metrics as JSON
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// adapter | policy | masking | retry | decision
    #[arg(long)]
    without: String,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    match execute(cli, input, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(out, "error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::ComponentShapeMismatch(_)) => 3,
                _ => 1,
            }
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenWorld(a) => {
            apply_world(&mut cfg, a);
            header(out, &cfg)?;
            gen_world_cmd(&cfg, &a.out, out)
        }
        Command::Ingest(a) => {
            header(out, &cfg)?;
            let data = load_data(&a.data, &cfg)?;
            print_stats(out, &data)?;
            if let Some(dir) = &a.out {
                data.write_canonical(dir)?;
                writeln!(out, "wrote {}", dir.display())?;
            }
            Ok(())
        }
        Command::BuildKb(a) => {
            header(out, &cfg)?;
            let data = load_data(&a.data, &cfg)?;
            let kb = train_kb(&data)?;
            writeln!(out, "diseases={} symptoms={}", kb.disease_count(), kb.symptom_count())?;
            for d in 0..kb.disease_count() {
                let name = &data.vocab.diseases[d];
                let top: Vec<String> = kb
                    .relevant(crate::types::DiseaseId(d))
                    .iter()
                    .take(5)
                    .map(|(s, f)| format!("{}:{f:.3}", data.vocab.symptoms[s.0]))
                    .collect();
                writeln!(out, "{name}\t{}", top.join(" "))?;
            }
            if let Some(p) = &a.out {
                std::fs::write(p, serde_json::to_string_pretty(&kb)?)?;
                writeln!(out, "wrote {}", p.display())?;
            }
            Ok(())
        }
        Command::Calibrate(a) => {
            if let Some(e) = a.epochs {
                cfg.calibration.epochs = e;
            }
            if let Some(lr) = a.lr {
                cfg.calibration.lr = lr;
            }
            cfg.calibration.seed = cfg.seed;
            header(out, &cfg)?;
            calibrate_cmd(&cfg, a, out)
        }
        Command::TrainPolicy(a) => {
            apply_model(&mut cfg, &a.model);
            if let Some(t) = a.total_steps {
                cfg.training.total_steps = t;
            }
            if let Some(s) = a.steps_per_update {
                cfg.training.steps_per_update = s;
            }
            cfg.training.seed = cfg.seed;
            header(out, &cfg)?;
            train_cmd(&cfg, a, out)
        }
        Command::Consult(a) => {
            apply_model(&mut cfg, &a.model);
            header(out, &cfg)?;
            consult_cmd(&cfg, a, input, out)
        }
        Command::Bench(a) => {
            apply_model(&mut cfg, &a.model);
            header(out, &cfg)?;
            bench_cmd(&cfg, a, out)
        }
        Command::Ablate(a) => {
            apply_model(&mut cfg, &a.model);
            let ablation = AblationConfig::without(&a.without)?;
            header(out, &cfg)?;
            ablate_cmd(&cfg, a, ablation, out)
        }
    }
}

fn header(out: &mut dyn Write, cfg: &Config) -> std::io::Result<()> {
    writeln!(out, "# dualconsult {VERSION} seed={} config={}", cfg.seed, cfg.hash())
}

fn apply_world(cfg: &mut Config, a: &GenWorldArgs) {
    let w = &mut cfg.world;
    w.diseases = a.diseases.unwrap_or(w.diseases);
    w.symptoms = a.symptoms.unwrap_or(w.symptoms);
    w.sharpness = a.sharpness.unwrap_or(w.sharpness);
    w.records = a.records.unwrap_or(w.records);
}

fn apply_model(cfg: &mut Config, a: &ModelArgs) {
    if let Some(l) = a.max_turns {
        cfg.consult.env.max_turns = l;
    }
    if let Some(r) = &a.remote {
        cfg.remote.endpoint = Some(r.clone());
    }
}

fn gen_world_cmd(cfg: &Config, dir: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let w = &cfg.world;
    let world = gen_world(w.diseases, w.symptoms, cfg.seed, w.sharpness, w.records)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let dev = world.sample_records(w.eval_records, &mut rng);
    let test = world.sample_records(w.eval_records, &mut rng);
    let vocab = crate::kb::Vocab::numbered(world.m, world.n);
    let stats = super::dataset::compute_stats(&world.records, &dev, &test, &vocab);
    let bundle = DatasetBundle {
        train: world.records.clone(),
        dev,
        test,
        vocab,
        stats,
        filter: Default::default(),
    };
    bundle.write_canonical(dir)?;
    std::fs::write(dir.join("world.json"), world.to_json())?;
    print_stats(out, &bundle)?;
    writeln!(out, "wrote {}", dir.display())?;
    Ok(())
}

fn load_data(a: &DataArgs, cfg: &Config) -> anyhow::Result<DatasetBundle> {
    let path = match (&a.data, &a.dataset) {
        (Some(p), None) => p.clone(),
        (None, Some(name)) => Path::new(&cfg.data.root).join(name),
        (Some(_), Some(_)) => bail!("give either --data or --dataset, not both"),
        (None, None) => bail!("one of --data or --dataset is required"),
    };
    let format = match &a.format {
        Some(f) => f.parse::<Format>()?,
        None if path.is_dir() => Format::Canonical,
        None => Format::GoalSet,
    };
    ingest(&path, format, cfg.data.dev_fraction, cfg.seed).with_context(|| format!("loading {}", path.display()))
}

fn print_stats(out: &mut dyn Write, d: &DatasetBundle) -> std::io::Result<()> {
    let s = &d.stats;
    writeln!(
        out,
        "diseases={} symptoms={} train={} dev={} test={} avg_symptoms={:.2} avg_explicit={:.2} avg_implicit={:.2}",
        s.diseases, s.symptoms, s.train, s.dev, s.test, s.avg_symptoms, s.avg_explicit, s.avg_implicit
    )?;
    writeln!(
        out,
        "filtered: empty_explicit={} duplicate_findings={} dev_split_created={}",
        d.filter.dropped_empty_explicit, d.filter.duplicate_findings_removed, d.filter.dev_split_created
    )
}

fn train_kb(data: &DatasetBundle) -> anyhow::Result<KnowledgeBase> {
    Ok(build_kb(&data.train, data.symptom_count(), data.disease_count())?.with_names(data.vocab.clone()))
}

fn calibrate_cmd(cfg: &Config, a: &CalibrateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let data = load_data(&a.data, cfg)?;
    let kb = train_kb(&data)?;
    let train = if cfg.data.augment_min_len > 0 {
        augment(&data.train, &kb, cfg.data.augment_min_len, cfg.seed)
    } else {
        data.train.clone()
    };
    let subs = build_calibration_set(&train);
    let dev_subs = build_calibration_set(if data.dev.is_empty() { &data.train } else { &data.dev });
    let scorer = ReferenceScorer::new();
    let c = &cfg.calibration;
    let before = evaluate_calibration(&scorer, &dev_subs, &kb, c)?;
    writeln!(out, "calibration units={} dev_units={}", subs.len(), dev_subs.len())?;
    writeln!(out, "before: mean_kl={:.6} group_acc={:.4}", before.mean_kl, before.group_accuracy)?;
    let adapter = Adapter::init(kb.disease_count(), kb.symptom_count(), c.rank, c.seed);
    let outcome = calibrate(adapter, &subs, &kb, &scorer, c)?;
    let tuned = scorer.with_adapter(outcome.adapter.clone());
    let after = evaluate_calibration(&tuned, &dev_subs, &kb, c)?;
    writeln!(out, "after: mean_kl={:.6} group_acc={:.4}", after.mean_kl, after.group_accuracy)?;
    outcome.adapter.save(&a.out)?;
    writeln!(out, "wrote {}", a.out.display())?;
    if let Some(p) = &a.loss_trace {
        std::fs::write(p, outcome.loss_trace_csv())?;
    }
    Ok(())
}

/// Loaded pieces shared by the evaluation commands.
struct Setup {
    data: DatasetBundle,
    kb: KnowledgeBase,
    cooc: Cooccurrence,
    policy: PolicyNet,
    backend: Box<dyn ScoringBackend>,
    plain: Box<dyn ScoringBackend>,
}

fn setup(cfg: &Config, data_args: &DataArgs, model: &ModelArgs, out: &mut dyn Write) -> anyhow::Result<Setup> {
    let data = load_data(data_args, cfg)?;
    let kb = train_kb(&data)?;
    let cooc = cooccurrence(&data.train, kb.symptom_count())?;
    let policy = match &model.policy {
        Some(p) => PolicyNet::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            writeln!(out, "# policy: untrained (seed {})", cfg.seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            PolicyNet::new(kb.symptom_count(), kb.disease_count(), &cfg.network, &mut rng)
        }
    };
    let (backend, plain): (Box<dyn ScoringBackend>, Box<dyn ScoringBackend>) = match cfg.remote.resolved_endpoint() {
        Some(url) => {
            writeln!(out, "# scorer: remote {url}")?;
            (
                Box::new(RemoteScorer::new(&url, &cfg.remote)),
                Box::new(RemoteScorer::new(&url, &cfg.remote)),
            )
        }
        None => {
            let base = ReferenceScorer::new();
            let tuned = match &model.adapter {
                Some(p) => {
                    let adapter = Adapter::load(p).with_context(|| format!("loading {}", p.display()))?;
                    if adapter.disease_count() != kb.disease_count() || adapter.symptom_count() != kb.symptom_count() {
                        return Err(Error::ComponentShapeMismatch(format!(
                            "adapter is {}x{}, knowledge base is {}x{}",
                            adapter.disease_count(),
                            adapter.symptom_count(),
                            kb.disease_count(),
                            kb.symptom_count()
                        ))
                        .into());
                    }
                    base.clone().with_adapter(adapter)
                }
                None => base.clone(),
            };
            (Box::new(tuned), Box::new(base))
        }
    };
    Ok(Setup {
        data,
        kb,
        cooc,
        policy,
        backend,
        plain,
    })
}

fn train_cmd(cfg: &Config, a: &TrainArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut s = setup(cfg, &a.data, &a.model, out)?;
    let mut log = String::from(crate::policy::UpdateStats::CSV_HEADER);
    log.push('\n');
    let report = train_policy(
        &mut s.policy,
        &s.data.train,
        &s.kb,
        s.backend.as_ref(),
        &cfg.consult.env,
        &cfg.training,
        |i, st| {
            log.push_str(&st.csv_row(i));
            log.push('\n');
        },
    )?;
    if let Some(last) = report.updates.last() {
        writeln!(
            out,
            "updates={} steps={} final_mean_reward={:.4} entropy={:.4}",
            report.updates.len(),
            report.steps,
            last.mean_reward,
            last.entropy
        )?;
    }
    s.policy.save(&a.out)?;
    writeln!(out, "wrote {}", a.out.display())?;
    if let Some(p) = &a.log {
        std::fs::write(p, log)?;
    }
    Ok(())
}

/// Asks a person at the terminal.
struct InteractivePatient<'a> {
    input: &'a mut dyn BufRead,
    out: &'a mut dyn Write,
}

impl Patient for InteractivePatient<'_> {
    fn respond(&mut self, _record: &PatientRecord, kb: &KnowledgeBase, symptom: SymptomId) -> crate::Result<SymptomStatus> {
        let name = kb
            .names()
            .and_then(|v| v.symptoms.get(symptom.0).cloned())
            .unwrap_or_else(|| symptom.to_string());
        loop {
            write!(self.out, "Do you have {name}? [y/n] ")?;
            self.out.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "no answer on stdin",
                )));
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" | "present" | "+" | "1" => return Ok(SymptomStatus::Present),
                "n" | "no" | "absent" | "-" | "-1" => return Ok(SymptomStatus::Absent),
                _ => writeln!(self.out, "please answer y or n")?,
            }
        }
    }
}

fn consult_cmd(cfg: &Config, a: &ConsultArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = setup(cfg, &a.data, &a.model, out)?;
    let Some(record) = s.data.test.get(a.record) else {
        bail!("test split has {} records, asked for #{}", s.data.test.len(), a.record);
    };
    let parts = Components::new(&s.kb, s.backend.as_ref(), s.plain.as_ref(), &s.policy, &s.cooc);
    let ablation = AblationConfig::full();
    let mut rng = record_rng(cfg.seed, a.record);
    let result = if a.interactive {
        let mut buf: Vec<u8> = Vec::new();
        let res = {
            let mut patient = InteractivePatient { input, out: &mut buf };
            run_consultation(record, &parts, &mut patient, &cfg.consult, &ablation, &mut rng)
        };
        out.write_all(&buf)?;
        res?
    } else {
        let mut patient = crate::environment::SimulatedPatient {
            typicality_k: cfg.consult.env.typicality_k,
        };
        run_consultation(record, &parts, &mut patient, &cfg.consult, &ablation, &mut rng)?
    };
    let names = &s.data.vocab;
    for t in &result.trace {
        if t.terminated {
            writeln!(out, "turn {}: terminate", t.turn)?;
        } else {
            let st = match t.response {
                Some(1) => "present",
                Some(-1) => "absent",
                _ => "unknown",
            };
            writeln!(out, "turn {}: ask {} -> {st} (reward {:.3})", t.turn, names.symptoms[t.action], t.reward.total)?;
        }
    }
    writeln!(
        out,
        "prediction={} label={} initial={} turns={} correct={}",
        names.diseases[result.prediction.0],
        names.diseases[result.label.0],
        names.diseases[result.initial_prediction.0],
        result.turns_used,
        result.correct
    )?;
    if let Some(p) = &a.trace {
        std::fs::write(p, result.trace_jsonl())?;
    }
    Ok(())
}

fn print_metrics(out: &mut dyn Write, label: &str, m: &SuiteMetrics, names: &[String]) -> std::io::Result<()> {
    writeln!(out, "[{label}] acc={:.4} acc_init={:.4} avg_n={:.3} records={}", m.acc, m.acc_init, m.avg_n, m.records)?;
    for d in &m.per_disease {
        writeln!(out, "  {}\t{}/{}\t{:.4}", names[d.disease.0], d.correct, d.cases, d.acc)?;
    }
    Ok(())
}

fn write_traces(dir: &Path, results: &[ConsultationResult]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, r) in results.iter().enumerate() {
        std::fs::write(dir.join(format!("case_{i:05}.jsonl")), r.trace_jsonl())?;
    }
    Ok(())
}

fn bench_cmd(cfg: &Config, a: &BenchArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = setup(cfg, &a.data, &a.model, out)?;
    let parts = Components::new(&s.kb, s.backend.as_ref(), s.plain.as_ref(), &s.policy, &s.cooc);
    let (metrics, results) = run_suite(&s.data.test, &parts, &cfg.consult, &AblationConfig::full(), cfg.seed)?;
    writeln!(out, "L={}", cfg.consult.env.max_turns)?;
    print_metrics(out, "full", &metrics, &s.data.vocab.diseases)?;
    let mut summary = serde_json::json!({ "full": metrics });
    if a.random_baseline {
        let (rm, _) = run_random_suite(&s.data.test, &s.kb, s.backend.as_ref(), &cfg.consult.env, cfg.seed)?;
        print_metrics(out, "random", &rm, &s.data.vocab.diseases)?;
        summary["random"] = serde_json::to_value(&rm)?;
    }
    if let Some(dir) = &a.trace_dir {
        write_traces(dir, &results)?;
    }
    if let Some(p) = &a.summary {
        std::fs::write(p, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(())
}

fn ablate_cmd(cfg: &Config, a: &AblateArgs, ablation: AblationConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = setup(cfg, &a.data, &a.model, out)?;
    let parts = Components::new(&s.kb, s.backend.as_ref(), s.plain.as_ref(), &s.policy, &s.cooc);
    let (metrics, results) = run_suite(&s.data.test, &parts, &cfg.consult, &ablation, cfg.seed)?;
    writeln!(out, "| variant | acc | acc_init | avg_n |")?;
    writeln!(
        out,
        "| {} | {:.4} | {:.4} | {:.3} |",
        ablation.label(),
        metrics.acc,
        metrics.acc_init,
        metrics.avg_n
    )?;
    if let Some(dir) = &a.trace_dir {
        write_traces(dir, &results)?;
    }
    Ok(())
}
