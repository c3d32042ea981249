//! Pipeline driver: each stage is a subcommand reading and writing files,
//! so any stage can be rerun from persisted artifacts alone.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use solcot::chem::{compute_descriptors, parse_smiles};
use solcot::cot::{
    build_llm_cot, build_ml_llm_cot, predict_unknown, read_corpus, recompute_stats,
    split_checksum, write_corpus, CotConfig, CotError, TargetPrediction,
};
use solcot::dataset::{load_esol, select_splits, ColumnConfig, DatasetSplit, SeedSelector};
use solcot::llm::{Backend, BackendConfig, BackendKind, ExchangeLog, LlmError};
use solcot::report::{emit_report, evaluate, EvaluationSummary};
use solcot::surrogate::{train_gp, GpModel, TrainOptions};

#[derive(Parser, Serialize)]
#[command(
    name = "solcot",
    about = "Solubility prediction pipelines: descriptors, GP surrogate, \
             and deviation-gated LLM chain-of-thought loops",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Load a solubility CSV and write the 30/20/20 split manifest.
    Ingest(IngestArgs),
    /// Train the GP surrogate on the 30 seed molecules.
    Train(TrainArgs),
    /// Build a chain-of-thought corpus over the seed split.
    Build(BuildArgs),
    /// Predict the similar/dissimilar targets (or a custom file).
    Predict(PredictArgs),
    /// Evaluate prediction files and emit the report tables.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Serialize)]
struct IngestArgs {
    /// Solubility CSV (ESOL layout by default).
    #[arg(long)]
    dataset: PathBuf,
    /// Seed selection: `first30` or `@ids.txt` (one id per line).
    #[arg(long, default_value = "first30")]
    seeds: String,
    /// Column holding the compound id.
    #[arg(long, default_value = "Compound ID")]
    id_col: String,
    /// Column holding measured log solubility.
    #[arg(long, default_value = "measured log solubility in mols per litre")]
    logs_col: String,
    /// Column holding SMILES.
    #[arg(long, default_value = "smiles")]
    smiles_col: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Split manifest from `ingest`.
    #[arg(long)]
    split: PathBuf,
    /// Optimizer seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multi-start restarts.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct BackendArgs {
    /// Backend kind for both roles: `mock` or `ollama`.
    #[arg(long, default_value = "mock")]
    backend: String,
    /// Ollama base URL (SOLCOT_BACKEND_URL overrides).
    #[arg(long, default_value = "http://localhost:11434")]
    backend_url: String,
    /// Model for the predictor role.
    #[arg(long, default_value = "deepseek-r1:14b")]
    predictor_model: String,
    /// Model for the analyzer role.
    #[arg(long, default_value = "qwen2:7b")]
    analyzer_model: String,
    /// Sampling temperature.
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Sampling / mock seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Request timeout, seconds.
    #[arg(long, default_value_t = 120.0)]
    timeout: f64,
    /// Transport retries per request.
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
}

impl BackendArgs {
    fn kind(&self) -> Result<BackendKind, String> {
        match self.backend.as_str() {
            "mock" => Ok(BackendKind::Mock),
            "ollama" => Ok(BackendKind::Ollama),
            other => Err(format!("unknown backend `{other}` (mock|ollama)")),
        }
    }

    fn build(&self, model: &str, seed_offset: u64) -> Result<Backend, LlmError> {
        let kind = self.kind().map_err(LlmError::TransportError)?;
        Backend::new(BackendConfig {
            kind,
            base_url: self.backend_url.clone(),
            model_name: model.to_string(),
            temperature: self.temperature,
            seed: self.seed.wrapping_add(seed_offset),
            timeout_secs: self.timeout,
            max_retries: self.max_retries,
        })
    }
}

#[derive(Args, Serialize, Clone)]
struct GateArgs {
    /// LLM-CoT rethink gate, percent.
    #[arg(long, default_value_t = 100.0)]
    rethink_threshold: f64,
    /// ML-LLM-CoT refinement gate, percent.
    #[arg(long, default_value_t = 30.0)]
    refine_threshold: f64,
    /// Attempt cap per molecule.
    #[arg(long, default_value_t = 25)]
    max_rethinks: u32,
    /// Seed molecules used as in-prompt examples only.
    #[arg(long, default_value_t = 10)]
    basis_size: usize,
    /// Inference uncertainty gate in logS std units (default σf/2).
    #[arg(long)]
    uncertainty_gate: Option<f64>,
}

impl GateArgs {
    fn cot_config(&self) -> CotConfig {
        CotConfig {
            rethink_threshold_pct: self.rethink_threshold,
            refine_threshold_pct: self.refine_threshold,
            max_rethinks_per_molecule: self.max_rethinks,
            basis_size: self.basis_size,
            uncertainty_gate_std: self.uncertainty_gate,
            ..CotConfig::default()
        }
    }
}

#[derive(Args, Serialize)]
struct BuildArgs {
    /// `llm-cot` or `ml-llm-cot`.
    #[arg(long)]
    mode: String,
    #[arg(long)]
    split: PathBuf,
    /// Trained model (required for ml-llm-cot).
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    gates: GateArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    /// `llm-cot` or `ml-llm-cot`.
    #[arg(long)]
    mode: String,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// `similar`, `dissimilar`, or `@targets.csv`.
    #[arg(long)]
    targets: String,
    /// Row label used in reports.
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    gates: GateArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Prediction files from `predict` (repeatable; one summary row each).
    #[arg(long, required = true)]
    predictions: Vec<PathBuf>,
    #[arg(long)]
    split: PathBuf,
    /// Corpus files contributing rethink-statistics rows (repeatable).
    #[arg(long)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Prediction artifact written by `predict` and read by `evaluate`.
#[derive(Serialize, serde::Deserialize)]
struct PredictionsFile {
    mode: String,
    label: String,
    targets: String,
    predictions: Vec<TargetPrediction>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, result) = match &cli.command {
        Command::Ingest(args) => ("ingest", cmd_ingest(args)),
        Command::Train(args) => ("train", cmd_train(args)),
        Command::Build(args) => ("build", cmd_build(args)),
        Command::Predict(args) => ("predict", cmd_predict(args)),
        Command::Evaluate(args) => ("evaluate", cmd_evaluate(args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "error: stage={stage} kind={} msg={:?}",
                err.kind,
                err.message
            );
            ExitCode::FAILURE
        }
    }
}

struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> CliError {
        CliError {
            kind,
            message: message.into(),
        }
    }
}

impl From<solcot::dataset::DatasetError> for CliError {
    fn from(err: solcot::dataset::DatasetError) -> Self {
        use solcot::dataset::DatasetError::*;
        let kind = match err {
            FileNotFound(_) => "FileNotFound",
            MissingColumn(_) => "MissingColumn",
            EmptyDataset => "EmptyDataset",
            DuplicateSeedId(_) => "DuplicateSeedId",
            InsufficientRecords { .. } => "InsufficientRecords",
            UnknownSeedId(_) => "UnknownSeedId",
            Csv(_) => "CsvError",
        };
        CliError::new(kind, err.to_string())
    }
}

impl From<solcot::surrogate::SurrogateError> for CliError {
    fn from(err: solcot::surrogate::SurrogateError) -> Self {
        use solcot::surrogate::SurrogateError::*;
        let kind = match err {
            NonFiniteInput => "NonFiniteInput",
            FactorizationFailure => "FactorizationFailure",
            TooFewPoints(_) => "TooFewPoints",
            DimensionMismatch { .. } => "DimensionMismatch",
            Io(_) => "IoError",
            Format(_) => "ModelFormatError",
            UnsupportedVersion(_) => "UnsupportedVersion",
        };
        CliError::new(kind, err.to_string())
    }
}

fn llm_kind(err: &LlmError) -> &'static str {
    match err {
        LlmError::TransportError(_) => "TransportError",
        LlmError::Timeout(_) => "Timeout",
        LlmError::MalformedBackendResponse(_) => "MalformedBackendResponse",
        LlmError::ScriptExhausted => "ScriptExhausted",
        LlmError::NoNumericValue => "NoNumericValue",
        LlmError::ImplausibleValue(_) => "ImplausibleValue",
        LlmError::EmptyPrompt => "EmptyPrompt",
        LlmError::Io(_) => "IoError",
    }
}

impl From<LlmError> for CliError {
    fn from(err: LlmError) -> Self {
        CliError::new(llm_kind(&err), err.to_string())
    }
}

impl From<CotError> for CliError {
    fn from(err: CotError) -> Self {
        let kind = match &err {
            CotError::NonFiniteInput => "NonFiniteInput",
            CotError::BackendFailure(inner) => llm_kind(inner),
            CotError::Surrogate(_) => "SurrogateError",
            CotError::Chem(_) => "ChemError",
            CotError::InvalidConfig(_) => "InvalidConfig",
            CotError::Io(_) => "IoError",
            CotError::CorpusFormat(_) => "CorpusFormatError",
        };
        CliError::new(kind, err.to_string())
    }
}

impl From<solcot::report::ReportError> for CliError {
    fn from(err: solcot::report::ReportError) -> Self {
        use solcot::report::ReportError::*;
        let kind = match err {
            LengthMismatch { .. } => "LengthMismatch",
            IdMismatch { .. } => "IdMismatch",
            Metric(_) => "MetricError",
            Io(_) => "IoError",
        };
        CliError::new(kind, err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::new("IoError", err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::new("JsonError", err.to_string())
    }
}

fn write_run_config<T: Serialize>(out: &Path, stage: &str, args: &T) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let config = serde_json::json!({ "stage": stage, "args": args });
    std::fs::write(
        out.join("run-config.json"),
        serde_json::to_string_pretty(&config)?,
    )?;
    Ok(())
}

fn read_split(path: &Path) -> Result<DatasetSplit, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("FileNotFound", format!("{}: {e}", path.display())))?;
    let split: DatasetSplit = serde_json::from_str(&text)?;
    split.validate().map_err(CliError::from)?;
    Ok(split)
}

fn descriptor_matrix(
    records: &[solcot::dataset::SolubilityRecord],
) -> Result<(Vec<Vec<f64>>, Vec<f64>), CliError> {
    let mut x = Vec::with_capacity(records.len());
    for record in records {
        let mol = parse_smiles(&record.smiles)
            .map_err(|e| CliError::new("ChemError", e.to_string()))?;
        x.push(compute_descriptors(&mol).as_array().to_vec());
    }
    let y = records.iter().map(|r| r.log_s).collect();
    Ok((x, y))
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let columns = ColumnConfig {
        id: args.id_col.clone(),
        log_s: args.logs_col.clone(),
        smiles: args.smiles_col.clone(),
    };
    let outcome = load_esol(&args.dataset, &columns)?;
    for skipped in &outcome.skipped {
        eprintln!(
            "warning: skipped line {} ({}): {}",
            skipped.line, skipped.id, skipped.reason
        );
    }

    let selector = if args.seeds == "first30" {
        SeedSelector::First30
    } else if let Some(path) = args.seeds.strip_prefix('@') {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("FileNotFound", format!("{path}: {e}")))?;
        SeedSelector::Ids(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    } else {
        return Err(CliError::new(
            "InvalidConfig",
            format!("--seeds must be `first30` or `@ids.txt`, got `{}`", args.seeds),
        ));
    };

    let split = select_splits(&outcome.records, &selector)?;
    write_run_config(&args.out, "ingest", args)?;
    std::fs::write(
        args.out.join("split.json"),
        serde_json::to_string_pretty(&split)?,
    )?;
    println!(
        "ingest: {} records ({} skipped) -> split {}/{}/{} at {}",
        outcome.records.len(),
        outcome.skipped.len(),
        split.seed.len(),
        split.similar.len(),
        split.dissimilar.len(),
        args.out.join("split.json").display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let split = read_split(&args.split)?;
    let (x, y) = descriptor_matrix(&split.seed)?;
    let options = TrainOptions {
        restarts: args.restarts,
        seed: args.seed,
        ..TrainOptions::default()
    };
    let outcome = train_gp(&x, &y, &options)?;
    write_run_config(&args.out, "train", args)?;
    let model_path = args.out.join("model.json");
    outcome.model.save(&model_path)?;
    let h = outcome.model.hyperparameters();
    println!(
        "train: LML {:.4} over {} starts; σf²={:.4} ℓ={:.4} σn²={:.6} -> {}",
        outcome.final_lml,
        outcome.restarts.len(),
        h.signal_variance(),
        h.lengthscale(),
        h.noise_variance(),
        model_path.display()
    );
    Ok(())
}

fn cmd_build(args: &BuildArgs) -> Result<(), CliError> {
    let split = read_split(&args.split)?;
    let config = args.gates.cot_config();
    let predictor = args.backend.build(&args.backend.predictor_model, 0)?;
    let analyzer = args.backend.build(&args.backend.analyzer_model, 1)?;
    write_run_config(&args.out, "build", args)?;
    let log = ExchangeLog::create(&args.out.join("exchanges.jsonl"))?;

    let outcome = match args.mode.as_str() {
        "llm-cot" => build_llm_cot(&split.seed, &predictor, &analyzer, &config, Some(&log))?,
        "ml-llm-cot" => {
            let model_path = args.model.as_ref().ok_or_else(|| {
                CliError::new("InvalidConfig", "--model is required for ml-llm-cot")
            })?;
            let model = GpModel::load(model_path)?;
            build_ml_llm_cot(&model, &split.seed, &predictor, &analyzer, &config, Some(&log))?
        }
        other => {
            return Err(CliError::new(
                "InvalidConfig",
                format!("unknown mode `{other}` (llm-cot|ml-llm-cot)"),
            ))
        }
    };

    let corpus_path = args.out.join("corpus.jsonl");
    write_corpus(
        &corpus_path,
        &args.mode,
        &config,
        &split_checksum(&split),
        &outcome.corpus,
    )?;
    println!(
        "build: {} corpus entries, {} points required rethink, {} total rethinks -> {}",
        outcome.corpus.len(),
        outcome.stats.points_requiring_rethink,
        outcome.stats.total_rethinks,
        corpus_path.display()
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let split = read_split(&args.split)?;
    let (_, corpus) = read_corpus(&args.corpus)?;
    let config = args.gates.cot_config();
    let predictor = args.backend.build(&args.backend.predictor_model, 0)?;

    let model = match args.mode.as_str() {
        "llm-cot" => None,
        "ml-llm-cot" => {
            let model_path = args.model.as_ref().ok_or_else(|| {
                CliError::new("InvalidConfig", "--model is required for ml-llm-cot")
            })?;
            Some(GpModel::load(model_path)?)
        }
        other => {
            return Err(CliError::new(
                "InvalidConfig",
                format!("unknown mode `{other}` (llm-cot|ml-llm-cot)"),
            ))
        }
    };

    let targets = match args.targets.as_str() {
        "similar" => split.similar.iter().map(|s| s.record.clone()).collect(),
        "dissimilar" => split.dissimilar.iter().map(|s| s.record.clone()).collect(),
        spec => {
            let path = spec.strip_prefix('@').ok_or_else(|| {
                CliError::new(
                    "InvalidConfig",
                    format!("--targets must be similar|dissimilar|@file.csv, got `{spec}`"),
                )
            })?;
            load_esol(Path::new(path), &ColumnConfig::default())?.records
        }
    };

    write_run_config(&args.out, "predict", args)?;
    let log = ExchangeLog::create(&args.out.join("exchanges.jsonl"))?;
    let predictions = predict_unknown(
        &corpus,
        model.as_ref(),
        &predictor,
        &split.seed,
        &targets,
        &config,
        Some(&log),
    )?;

    let label = args.label.clone().unwrap_or_else(|| {
        let mode = if args.mode == "llm-cot" {
            "LLM-CoT"
        } else {
            "ML-LLM-CoT"
        };
        format!("{mode}/{}", args.targets)
    });
    let file = PredictionsFile {
        mode: args.mode.clone(),
        label,
        targets: args.targets.clone(),
        predictions,
    };
    let path = args.out.join("predictions.json");
    std::fs::write(&path, serde_json::to_string_pretty(&file)?)?;
    println!(
        "predict: {} predictions ({}) -> {}",
        file.predictions.len(),
        file.label,
        path.display()
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let split = read_split(&args.split)?;
    let mut actual_by_id: std::collections::BTreeMap<String, f64> = Default::default();
    for record in split
        .seed
        .iter()
        .chain(split.similar.iter().map(|s| &s.record))
        .chain(split.dissimilar.iter().map(|s| &s.record))
    {
        actual_by_id.insert(record.id.clone(), record.log_s);
    }

    let mut summaries: Vec<EvaluationSummary> = Vec::new();
    for path in &args.predictions {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("FileNotFound", format!("{}: {e}", path.display())))?;
        let file: PredictionsFile = serde_json::from_str(&text)?;
        let mut pairs = Vec::with_capacity(file.predictions.len());
        let mut actuals = Vec::with_capacity(file.predictions.len());
        for p in &file.predictions {
            let actual = actual_by_id.get(&p.molecule_id).ok_or_else(|| {
                CliError::new(
                    "IdMismatch",
                    format!("target `{}` not present in split", p.molecule_id),
                )
            })?;
            pairs.push((p.molecule_id.clone(), p.prediction.mean));
            actuals.push((p.molecule_id.clone(), *actual));
        }
        summaries.push(evaluate(&file.label, &pairs, &actuals)?);
    }

    let mut stats = Vec::new();
    for path in &args.corpus {
        let (header, corpus) = read_corpus(path)?;
        stats.push((header.mode.clone(), recompute_stats(&corpus)));
    }

    write_run_config(&args.out, "evaluate", args)?;
    let files = emit_report(&summaries, &stats, &args.out)?;
    println!(
        "evaluate: {} summaries, {} rethink rows -> {} files under {}",
        summaries.len(),
        stats.len(),
        files.len(),
        args.out.display()
    );
    Ok(())
}
