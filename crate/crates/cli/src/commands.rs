use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fts_core::cohort::{clinic_v1, read_truth, sample_cohort, write_truth, GroundTruthProcess, TruthOracle};
use fts_core::eval::{
    evaluate_inference, group_by_method, overall_score, read_metrics_csv, score_markdown, write_calibration_csv,
    write_metrics_csv, write_score_csv,
};
use fts_core::federation::run_fts;
use fts_core::model::{train_local_with_report, LoadOptions};
use fts_core::pht::{
    read_event_stream, tokenize_cohort, write_event_stream, CodeScheme, IntervalLadder, Pht, TokenCorpus,
    TokenizationConfig,
};
use fts_core::zeroshot::{
    build_task_instances, cut_at_anchor, read_inference_csv, run_inference, write_inference_csv, CohortLabels, Label,
    TaskInstance,
};
use fts_core::{FederationScenario, GeneratorParams, InferenceTask, TrainConfig, Vocabulary};
use serde::Deserialize;

use crate::{EvaluateArgs, FederateArgs, InferArgs, ScoreArgs, SimulateArgs, TokenizeArgs, TrainArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    BadConfig(String),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] fts_core::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::BadConfig(_) => "BadConfig",
            CliError::Io { .. } => "IoFailure",
            CliError::Core(e) => e.category(),
        }
    }
}

fn core(e: impl Into<fts_core::Error>) -> CliError {
    CliError::Core(e.into())
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(io_at(path))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_at(path))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_at(path))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_at(path))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_at(path))
}

fn parent_dir(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn load_process(path: Option<&Path>) -> Result<GroundTruthProcess, CliError> {
    match path {
        None => Ok(clinic_v1()),
        Some(p) => GroundTruthProcess::from_toml(&read_text(p)?).map_err(core),
    }
}

fn load_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    Vocabulary::from_tsv(&read_text(path)?).map_err(core)
}

fn load_corpus(path: &Path) -> Result<TokenCorpus, CliError> {
    TokenCorpus::from_bytes(&read(path)?).map_err(core)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let process = load_process(a.config.as_deref())?;
    let d = process.diagnostics();
    println!("process {}: {} states, terminals {:?}", process.name(), d.states, d.terminals);
    for (state, steps) in &d.expected_steps {
        println!("  {state}: {steps:.3} expected transitions to absorption");
    }
    let cohort = sample_cohort(&process, a.count, a.seed).map_err(core)?;
    ensure_dir(&a.out)?;
    let events = a.out.join("events.jsonl");
    let mut w = create(&events)?;
    write_event_stream(&mut w, &cohort.timelines)?;
    w.flush().map_err(io_at(&events))?;
    write(&a.out.join("process.toml"), process.to_toml())?;
    let truth = a.out.join("truth.jsonl");
    let mut w = create(&truth)?;
    write_truth(&mut w, &process, &cohort).map_err(io_at(&truth))?;
    w.flush().map_err(io_at(&truth))?;
    log::info!("wrote {} patients to {}", cohort.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TokenizerSettings {
    quantiles: usize,
    code_levels: usize,
}

impl Default for TokenizerSettings {
    fn default() -> Self {
        Self { quantiles: 10, code_levels: CodeScheme::default().max_levels }
    }
}

fn write_patients(path: &Path, phts: &[Pht]) -> Result<(), CliError> {
    let text: String = phts.iter().map(|p| format!("{}\n", p.patient_id)).collect();
    write(path, text)
}

pub fn tokenize(a: &TokenizeArgs) -> Result<(), CliError> {
    let settings: TokenizerSettings = match &a.config {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::BadConfig(format!("{}: {e}", p.display())))?,
        None => TokenizerSettings::default(),
    };
    if a.shards == 0 {
        return Err(CliError::BadConfig("--shards must be at least 1".into()));
    }
    let file = fs::File::open(&a.events).map_err(io_at(&a.events))?;
    let timelines = read_event_stream(BufReader::new(file))?;
    let scheme = CodeScheme { max_levels: settings.code_levels };
    let (config, vocab, phts) =
        tokenize_cohort(&timelines, IntervalLadder::default(), scheme, settings.quantiles).map_err(core)?;
    if a.shards > phts.len() {
        return Err(CliError::BadConfig(format!("{} shards for {} patients", a.shards, phts.len())));
    }
    ensure_dir(&a.out)?;
    write(&a.out.join("vocab.tsv"), vocab.to_tsv())?;
    let json = serde_json::to_string_pretty(&config).expect("tokenizer config serializes");
    write(&a.out.join("tokenizer.json"), json + "\n")?;
    write(&a.out.join("corpus.pht1"), TokenCorpus::from_phts(vocab.fingerprint(), &phts).to_bytes())?;
    write_patients(&a.out.join("patients.txt"), &phts)?;
    if a.shards > 1 {
        let n = phts.len();
        for k in 0..a.shards {
            let part = &phts[k * n / a.shards..(k + 1) * n / a.shards];
            write(&a.out.join(format!("shard_{k}.pht1")), TokenCorpus::from_phts(vocab.fingerprint(), part).to_bytes())?;
            write_patients(&a.out.join(format!("shard_{k}.patients.txt")), part)?;
        }
    }
    println!("vocabulary: {} tokens, fingerprint {:016x}", vocab.len(), vocab.fingerprint());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut config: TrainConfig = match &a.config {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::BadConfig(format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let vocab = load_vocab(&a.vocab)?;
    let corpus = load_corpus(&a.corpus)?;
    if corpus.fingerprint != vocab.fingerprint() {
        return Err(CliError::BadConfig(format!(
            "corpus fingerprint {:016x} does not match vocabulary {:016x}",
            corpus.fingerprint,
            vocab.fingerprint()
        )));
    }
    let (params, report) = train_local_with_report(&corpus.sequences, &vocab, &config).map_err(core)?;
    if let Some(step) = report.selected_step {
        log::info!("selected parameters from step {step}");
    }
    parent_dir(&a.out)?;
    write(&a.out, params.to_bytes())
}

pub fn federate(a: &FederateArgs) -> Result<(), CliError> {
    let base = a.config.parent().unwrap_or(Path::new("."));
    let mut scenario = FederationScenario::from_toml(&read_text(&a.config)?, base).map_err(core)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    let artifacts = run_fts(&scenario)?;
    let dir = artifacts.write(&a.out)?;
    println!("{}", dir.display());
    print!("{}", artifacts.manifest.to_text());
    Ok(())
}

fn read_ids(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(read_text(path)?.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
}

pub fn infer(a: &InferArgs) -> Result<(), CliError> {
    let vocab = load_vocab(&a.vocab)?;
    let options = LoadOptions { allow_fingerprint_mismatch: a.allow_fingerprint_mismatch };
    let params = GeneratorParams::load(&read(&a.checkpoint)?, &vocab, options).map_err(core)?;
    let tokenizer: Option<TokenizationConfig> = match &a.tokenizer {
        Some(p) => Some(
            serde_json::from_str(&read_text(p)?).map_err(|e| CliError::BadConfig(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let task = InferenceTask::from_toml(&read_text(&a.config)?).map_err(core)?;
    let resolved = task.resolve(&vocab, tokenizer.as_ref()).map_err(core)?;
    let ids = a.patients.as_deref().map(read_ids).transpose()?;
    let phts = load_corpus(&a.corpus)?.to_phts(&vocab, ids.as_deref()).map_err(core)?;

    let rows = match &a.truth {
        Some(truth_path) => {
            let process = load_process(a.process.as_deref())?;
            let file = fs::File::open(truth_path).map_err(io_at(truth_path))?;
            let truth = read_truth(BufReader::new(file), &process)?;
            let paths = phts
                .iter()
                .map(|p| {
                    truth.get(&p.patient_id).cloned().ok_or_else(|| {
                        CliError::BadConfig(format!("patient `{}` is missing from the truth sidecar", p.patient_id))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let oracle = CohortLabels { oracle: TruthOracle::new(&process, a.label_seed), paths: &paths };
            let built = build_task_instances(&phts, &vocab, &resolved, &oracle).map_err(core)?;
            log::info!(
                "{} instances, {} without anchor, {} unlabeled",
                built.instances.len(),
                built.without_anchor,
                built.unlabeled
            );
            run_inference(&params, &built.instances, &resolved, a.seed).map_err(core)?
        }
        None => {
            // The label slot is a placeholder and is cleared below.
            let instances: Vec<TaskInstance> = phts
                .iter()
                .filter_map(|p| {
                    cut_at_anchor(&p.tokens, resolved.anchor, &vocab).map(|(prefix, _)| TaskInstance {
                        patient_id: p.patient_id.clone(),
                        prefix,
                        label: Label::Binary(false),
                    })
                })
                .collect();
            if instances.is_empty() {
                return Err(CliError::BadConfig(format!("no patient reaches anchor `{}`", task.anchor)));
            }
            let mut rows = run_inference(&params, &instances, &resolved, a.seed).map_err(core)?;
            for r in &mut rows {
                r.label = None;
            }
            rows
        }
    };
    parent_dir(&a.out)?;
    let mut w = create(&a.out)?;
    write_inference_csv(&mut w, &task.kind, &rows).map_err(core)?;
    w.flush().map_err(io_at(&a.out))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    ensure_dir(&a.out)?;
    let mut metric_rows = Vec::new();
    let mut seen = BTreeMap::new();
    for (method, path) in &a.estimates {
        if seen.insert(method.clone(), ()).is_some() {
            return Err(CliError::BadConfig(format!("method `{method}` given twice")));
        }
        let file = fs::File::open(path).map_err(io_at(path))?;
        let (kind, rows) = read_inference_csv(BufReader::new(file)).map_err(core)?;
        let evaluation = evaluate_inference(kind, &rows, a.seed).map_err(core)?;
        if evaluation.skipped > 0 {
            log::warn!("{method}: {} rows without a usable estimate or label", evaluation.skipped);
        }
        if let Some(cal) = &evaluation.calibration {
            let p = a.out.join(format!("calibration_{method}.csv"));
            let mut w = create(&p)?;
            write_calibration_csv(&mut w, cal).map_err(core)?;
            w.flush().map_err(io_at(&p))?;
        }
        metric_rows.extend(evaluation.metrics.into_iter().map(|m| (method.clone(), m)));
    }
    let p = a.out.join("metrics.csv");
    let mut w = create(&p)?;
    write_metrics_csv(&mut w, &metric_rows).map_err(core)?;
    w.flush().map_err(io_at(&p))
}

pub fn score(a: &ScoreArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in &a.metrics {
        let file = fs::File::open(path).map_err(io_at(path))?;
        rows.extend(read_metrics_csv(BufReader::new(file)).map_err(core)?);
    }
    let report = overall_score(&group_by_method(rows)).map_err(core)?;
    ensure_dir(&a.out)?;
    let p = a.out.join("score.csv");
    let mut w = create(&p)?;
    write_score_csv(&mut w, &report).map_err(core)?;
    w.flush().map_err(io_at(&p))?;
    let md = score_markdown(&report);
    write(&a.out.join("score.md"), &md)?;
    print!("{md}");
    Ok(())
}
