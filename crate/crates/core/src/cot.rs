//! The two corpus-building loops and the inference procedure.
//!
//! `build_llm_cot`: the predictor LLM estimates each non-basis seed
//! molecule; deviations above the rethink gate (default 100 %) trigger
//! another attempt, and the analyzer LLM writes an error analysis for the
//! final entry of every molecule.
//!
//! `build_ml_llm_cot`: the GP surrogate predicts first; only molecules it
//! misses by more than the refine gate (default 30 %) are routed through
//! analyzer-guided LLM refinement.
//!
//! Both loops append to a corpus whose accumulated digest feeds every
//! later prompt, and both terminate within a fixed attempt cap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{
    compute_descriptors, morgan_fingerprint, parse_smiles, tanimoto, ChemError, DescriptorVector,
    Fingerprint,
};
use crate::dataset::{DatasetSplit, SolubilityRecord};
use crate::llm::{
    build_error_analysis_prompt, build_prediction_prompt, condense_corpus,
    extract_numeric_prediction, Backend, DigestItem, ExchangeLog, LlmError,
};
use crate::surrogate::{GpModel, Prediction, PredictionSource, SurrogateError};

#[derive(Debug, Error)]
pub enum CotError {
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("backend failure: {0}")]
    BackendFailure(#[from] LlmError),
    #[error("surrogate failure: {0}")]
    Surrogate(#[from] SurrogateError),
    #[error("chemistry failure: {0}")]
    Chem(#[from] ChemError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus file format error: {0}")]
    CorpusFormat(String),
}

/// Gates and sizes for the two loops.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CotConfig {
    /// LLM-CoT rethink gate, percent deviation.
    pub rethink_threshold_pct: f64,
    /// ML-LLM-CoT refinement gate, percent deviation.
    pub refine_threshold_pct: f64,
    pub max_rethinks_per_molecule: u32,
    /// Leading seed molecules used as in-prompt examples only.
    pub basis_size: usize,
    /// Inference-time uncertainty gate; None means σf/2 of the model.
    pub uncertainty_gate_std: Option<f64>,
    /// Character budget for the condensed corpus digest.
    pub digest_budget: usize,
}

impl Default for CotConfig {
    fn default() -> Self {
        CotConfig {
            rethink_threshold_pct: 100.0,
            refine_threshold_pct: 30.0,
            max_rethinks_per_molecule: 25,
            basis_size: 10,
            uncertainty_gate_std: None,
            digest_budget: 4096,
        }
    }
}

impl CotConfig {
    pub fn validate(&self, seed_size: usize) -> Result<(), CotError> {
        if self.rethink_threshold_pct <= 0.0 || self.refine_threshold_pct <= 0.0 {
            return Err(CotError::InvalidConfig("thresholds must be > 0".into()));
        }
        if self.max_rethinks_per_molecule < 1 {
            return Err(CotError::InvalidConfig("max rethinks must be >= 1".into()));
        }
        if self.basis_size >= seed_size {
            return Err(CotError::InvalidConfig(format!(
                "basis size {} must be smaller than seed size {seed_size}",
                self.basis_size
            )));
        }
        if self.digest_budget < 256 {
            return Err(CotError::InvalidConfig(
                "digest budget must be at least 256".into(),
            ));
        }
        Ok(())
    }
}

/// Annotation kinds mirroring the thinking-record styles: agreement with a
/// minor revision, structure-based judgment, or correcting the ML model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    AgreeMinorRevision,
    StructureBased,
    MlCorrection,
    None,
}

/// Keyword rules over the analyzer text; deterministic by construction.
pub fn classify_annotation(analysis: &str) -> Annotation {
    let text = analysis.to_lowercase();
    const AGREE: [&str; 5] = ["agree", "close to", "minor revision", "small correction", "consistent with"];
    const ML: [&str; 6] = [
        "ml model",
        "gaussian",
        "surrogate",
        "underestimat",
        "overestimat",
        "model's error",
    ];
    const STRUCTURE: [&str; 7] = [
        "structure",
        "ring",
        "aromatic",
        "functional group",
        "heterocycl",
        "carboxylic",
        "hydrogen bond",
    ];
    if AGREE.iter().any(|k| text.contains(k)) {
        Annotation::AgreeMinorRevision
    } else if ML.iter().any(|k| text.contains(k)) {
        Annotation::MlCorrection
    } else if STRUCTURE.iter().any(|k| text.contains(k)) {
        Annotation::StructureBased
    } else {
        Annotation::None
    }
}

/// One prediction attempt in the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub molecule_id: String,
    /// 1-based attempt counter within the molecule.
    pub attempt_index: u32,
    pub prompt: String,
    pub raw_response: String,
    /// None when no numeric value could be extracted.
    pub parsed_value: Option<f64>,
    pub deviation_pct: Option<f64>,
    /// Set when the measured value was too close to zero for a relative
    /// deviation and the absolute fallback was used.
    pub near_zero_reference: bool,
    pub error_analysis: String,
    pub source: PredictionSource,
    pub annotation: Annotation,
    /// Final entry for its molecule (success or cap reached).
    pub is_final: bool,
    /// The attempt cap ran out; the best attempt was kept.
    pub cap_exhausted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RethinkStats {
    /// Molecules that needed at least a second attempt.
    pub points_requiring_rethink: u32,
    /// Sum over molecules of (attempts − 1).
    pub total_rethinks: u32,
}

#[derive(Debug)]
pub struct CotOutcome {
    pub corpus: Vec<CorpusEntry>,
    pub stats: RethinkStats,
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

const NEAR_ZERO_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub pct: f64,
    pub near_zero_reference: bool,
}

/// Percent deviation 100·|pred − actual| / |actual|. When |actual| < 1e-6
/// the relative form explodes, so the absolute deviation (unit scale) is
/// used instead and flagged.
pub fn percent_deviation(pred: f64, actual: f64) -> Result<Deviation, CotError> {
    if !pred.is_finite() || !actual.is_finite() {
        return Err(CotError::NonFiniteInput);
    }
    if actual.abs() >= NEAR_ZERO_EPS {
        Ok(Deviation {
            pct: 100.0 * (pred - actual).abs() / actual.abs(),
            near_zero_reference: false,
        })
    } else {
        Ok(Deviation {
            pct: 100.0 * (pred - actual).abs(),
            near_zero_reference: true,
        })
    }
}

/// True when both values share a sign class; zero agrees only with zero.
pub fn sign_agreement(pred: f64, actual: f64) -> bool {
    fn class(v: f64) -> i8 {
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    }
    class(pred) == class(actual)
}

// ---------------------------------------------------------------------------
// Shared loop plumbing
// ---------------------------------------------------------------------------

struct SeedContext {
    descriptors: Vec<DescriptorVector>,
    fingerprints: Vec<Fingerprint>,
}

impl SeedContext {
    fn build(seed: &[SolubilityRecord]) -> Result<SeedContext, CotError> {
        let mut descriptors = Vec::with_capacity(seed.len());
        let mut fingerprints = Vec::with_capacity(seed.len());
        for record in seed {
            let mol = parse_smiles(&record.smiles)?;
            descriptors.push(compute_descriptors(&mol));
            fingerprints.push(morgan_fingerprint(&mol, 2, 2048));
        }
        Ok(SeedContext {
            descriptors,
            fingerprints,
        })
    }

    /// Top-3 basis molecules by Tanimoto to the target, with scores.
    fn nearest_basis<'a>(
        &self,
        seed: &'a [SolubilityRecord],
        basis_size: usize,
        target: usize,
    ) -> Vec<(&'a SolubilityRecord, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..basis_size)
            .map(|i| {
                let s = tanimoto(&self.fingerprints[i], &self.fingerprints[target])
                    .expect("equal widths");
                (i, s)
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(3)
            .map(|(i, s)| (&seed[i], s))
            .collect()
    }
}

fn digest_items(corpus: &[CorpusEntry]) -> Vec<DigestItem> {
    corpus
        .iter()
        .filter(|e| e.is_final)
        .map(|e| DigestItem {
            molecule_id: e.molecule_id.clone(),
            deviation_pct: e.deviation_pct,
            analysis: e.error_analysis.clone(),
        })
        .collect()
}

fn log_exchange(log: Option<&ExchangeLog>, exchange: &crate::llm::LlmExchange) {
    if let Some(log) = log {
        // Logging failures must not abort a long LLM run.
        let _ = log.append(exchange);
    }
}

/// Best attempt seen so far for the keep-best-on-cap rule.
#[derive(Clone)]
struct BestAttempt {
    prompt: String,
    response: String,
    value: f64,
    deviation: Deviation,
}

// ---------------------------------------------------------------------------
// LLM-CoT construction
// ---------------------------------------------------------------------------

/// Build the LLM-only chain-of-thought corpus over the seed split.
pub fn build_llm_cot(
    seed: &[SolubilityRecord],
    predictor: &Backend,
    analyzer: &Backend,
    config: &CotConfig,
    log: Option<&ExchangeLog>,
) -> Result<CotOutcome, CotError> {
    config.validate(seed.len())?;
    let ctx = SeedContext::build(seed)?;
    let known: Vec<(&SolubilityRecord, &DescriptorVector)> = seed[..config.basis_size]
        .iter()
        .zip(&ctx.descriptors[..config.basis_size])
        .collect();

    let mut corpus: Vec<CorpusEntry> = Vec::new();
    let cap = config.max_rethinks_per_molecule;

    for target in config.basis_size..seed.len() {
        let record = &seed[target];
        let neighbors = ctx.nearest_basis(seed, config.basis_size, target);
        let mut best: Option<BestAttempt> = None;

        for attempt in 1..=cap {
            let digest = condense_corpus(&digest_items(&corpus), config.digest_budget);
            let prompt =
                build_prediction_prompt(&known, &neighbors, &digest, &ctx.descriptors[target]);
            let exchange = predictor.generate(&prompt)?;
            log_exchange(log, &exchange);

            match extract_numeric_prediction(&exchange.response) {
                Ok(value) => {
                    let deviation = percent_deviation(value, record.log_s)?;
                    let better = best
                        .as_ref()
                        .is_none_or(|b| deviation.pct < b.deviation.pct);
                    if better {
                        best = Some(BestAttempt {
                            prompt: prompt.clone(),
                            response: exchange.response.clone(),
                            value,
                            deviation,
                        });
                    }
                    if deviation.pct > config.rethink_threshold_pct && attempt < cap {
                        corpus.push(CorpusEntry {
                            molecule_id: record.id.clone(),
                            attempt_index: attempt,
                            prompt,
                            raw_response: exchange.response,
                            parsed_value: Some(value),
                            deviation_pct: Some(deviation.pct),
                            near_zero_reference: deviation.near_zero_reference,
                            error_analysis: String::new(),
                            source: PredictionSource::Llm,
                            annotation: Annotation::None,
                            is_final: false,
                            cap_exhausted: false,
                        });
                        continue;
                    }
                    // Success, or cap reached: keep the best attempt.
                    let cap_exhausted = deviation.pct > config.rethink_threshold_pct;
                    let kept = best.clone().expect("at least this attempt");
                    let analysis_prompt = build_error_analysis_prompt(
                        &record.name,
                        kept.value,
                        record.log_s,
                        kept.deviation.pct,
                        &ctx.descriptors[target],
                    );
                    let analysis = analyzer.generate(&analysis_prompt)?;
                    log_exchange(log, &analysis);
                    corpus.push(CorpusEntry {
                        molecule_id: record.id.clone(),
                        attempt_index: attempt,
                        prompt: kept.prompt,
                        raw_response: kept.response,
                        parsed_value: Some(kept.value),
                        deviation_pct: Some(kept.deviation.pct),
                        near_zero_reference: kept.deviation.near_zero_reference,
                        annotation: classify_annotation(&analysis.response),
                        error_analysis: analysis.response,
                        source: PredictionSource::Llm,
                        is_final: true,
                        cap_exhausted,
                    });
                    break;
                }
                Err(LlmError::NoNumericValue) | Err(LlmError::ImplausibleValue(_)) => {
                    // A parse failure counts as a rethink.
                    let reason = match extract_numeric_prediction(&exchange.response) {
                        Err(e) => e.to_string(),
                        Ok(_) => unreachable!("extraction verdict is deterministic"),
                    };
                    let is_final = attempt == cap && best.is_none();
                    corpus.push(CorpusEntry {
                        molecule_id: record.id.clone(),
                        attempt_index: attempt,
                        prompt,
                        raw_response: exchange.response,
                        parsed_value: None,
                        deviation_pct: None,
                        near_zero_reference: false,
                        error_analysis: reason,
                        source: PredictionSource::Llm,
                        annotation: Annotation::None,
                        is_final,
                        cap_exhausted: is_final,
                    });
                    if attempt == cap {
                        if let Some(kept) = best.clone() {
                            // A parsed attempt exists: keep it as final.
                            corpus.push(final_from_best(record, kept, attempt));
                        }
                        break;
                    }
                }
                Err(other) => return Err(other.into()),
            }
        }
    }

    let stats = recompute_stats(&corpus);
    Ok(CotOutcome { corpus, stats })
}

fn final_from_best(record: &SolubilityRecord, kept: BestAttempt, attempt: u32) -> CorpusEntry {
    CorpusEntry {
        molecule_id: record.id.clone(),
        attempt_index: attempt,
        prompt: kept.prompt,
        raw_response: kept.response,
        parsed_value: Some(kept.value),
        deviation_pct: Some(kept.deviation.pct),
        near_zero_reference: kept.deviation.near_zero_reference,
        error_analysis: "best parsed attempt kept after the cap ran out".into(),
        source: PredictionSource::Llm,
        annotation: Annotation::None,
        is_final: true,
        cap_exhausted: true,
    }
}

// ---------------------------------------------------------------------------
// ML-LLM-CoT construction
// ---------------------------------------------------------------------------

/// Build the ML-embedded corpus: the GP predicts, and only deviations
/// above the refine gate go through analyzer-guided LLM refinement.
pub fn build_ml_llm_cot(
    model: &GpModel,
    seed: &[SolubilityRecord],
    predictor: &Backend,
    analyzer: &Backend,
    config: &CotConfig,
    log: Option<&ExchangeLog>,
) -> Result<CotOutcome, CotError> {
    config.validate(seed.len())?;
    let ctx = SeedContext::build(seed)?;
    let known: Vec<(&SolubilityRecord, &DescriptorVector)> = seed[..config.basis_size]
        .iter()
        .zip(&ctx.descriptors[..config.basis_size])
        .collect();

    let mut corpus: Vec<CorpusEntry> = Vec::new();
    let cap = config.max_rethinks_per_molecule;

    for target in config.basis_size..seed.len() {
        let record = &seed[target];
        let descriptors = &ctx.descriptors[target];
        let gp = model.predict(&descriptors.as_array())?;
        let gp_deviation = percent_deviation(gp.mean, record.log_s)?;
        let gp_ok = gp_deviation.pct <= config.refine_threshold_pct;

        corpus.push(CorpusEntry {
            molecule_id: record.id.clone(),
            attempt_index: 1,
            prompt: String::new(),
            raw_response: String::new(),
            parsed_value: Some(gp.mean),
            deviation_pct: Some(gp_deviation.pct),
            near_zero_reference: gp_deviation.near_zero_reference,
            error_analysis: String::new(),
            source: PredictionSource::Gp,
            annotation: Annotation::None,
            is_final: gp_ok,
            cap_exhausted: false,
        });
        if gp_ok {
            continue;
        }

        let neighbors = ctx.nearest_basis(seed, config.basis_size, target);
        let mut previous_value = gp.mean;
        let mut previous_deviation = gp_deviation;
        let mut best = Some(BestAttempt {
            prompt: String::new(),
            response: String::new(),
            value: gp.mean,
            deviation: gp_deviation,
        });

        for attempt in 2..=cap {
            let analysis_prompt = build_error_analysis_prompt(
                &record.name,
                previous_value,
                record.log_s,
                previous_deviation.pct,
                descriptors,
            );
            let analysis = analyzer.generate(&analysis_prompt)?;
            log_exchange(log, &analysis);

            let digest = condense_corpus(&digest_items(&corpus), config.digest_budget);
            let base = build_prediction_prompt(&known, &neighbors, &digest, descriptors);
            let prompt = format!(
                "{base}\nSurrogate model estimate: mean {:?}, std {:?}\n\
                 Error analysis of the previous attempt:\n{}\n\
                 Refine the estimate and answer with the same PREDICTION line.\n",
                gp.mean, gp.std, analysis.response
            );
            let exchange = predictor.generate(&prompt)?;
            log_exchange(log, &exchange);

            match extract_numeric_prediction(&exchange.response) {
                Ok(value) => {
                    let deviation = percent_deviation(value, record.log_s)?;
                    let better = best
                        .as_ref()
                        .is_none_or(|b| deviation.pct < b.deviation.pct);
                    if better {
                        best = Some(BestAttempt {
                            prompt: prompt.clone(),
                            response: exchange.response.clone(),
                            value,
                            deviation,
                        });
                    }
                    let done = deviation.pct <= config.refine_threshold_pct || attempt == cap;
                    let keep_best = attempt == cap && deviation.pct > config.refine_threshold_pct;
                    let (entry_value, entry_dev, entry_prompt, entry_response) = if keep_best {
                        let b = best.clone().expect("set above");
                        (b.value, b.deviation, b.prompt, b.response)
                    } else {
                        (value, deviation, prompt, exchange.response)
                    };
                    corpus.push(CorpusEntry {
                        molecule_id: record.id.clone(),
                        attempt_index: attempt,
                        prompt: entry_prompt,
                        raw_response: entry_response,
                        parsed_value: Some(entry_value),
                        deviation_pct: Some(entry_dev.pct),
                        near_zero_reference: entry_dev.near_zero_reference,
                        annotation: classify_annotation(&analysis.response),
                        error_analysis: analysis.response,
                        source: PredictionSource::LlmRefined,
                        is_final: done,
                        cap_exhausted: keep_best,
                    });
                    if done {
                        break;
                    }
                    previous_value = value;
                    previous_deviation = deviation;
                }
                Err(LlmError::NoNumericValue) | Err(LlmError::ImplausibleValue(_)) => {
                    let reason = extract_numeric_prediction(&exchange.response)
                        .err()
                        .map(|e| e.to_string())
                        .unwrap_or_default();
                    corpus.push(CorpusEntry {
                        molecule_id: record.id.clone(),
                        attempt_index: attempt,
                        prompt,
                        raw_response: exchange.response,
                        parsed_value: None,
                        deviation_pct: None,
                        near_zero_reference: false,
                        annotation: classify_annotation(&analysis.response),
                        error_analysis: format!("{reason}; {}", analysis.response),
                        source: PredictionSource::LlmRefined,
                        is_final: false,
                        cap_exhausted: false,
                    });
                    if attempt == cap {
                        // The GP attempt always parsed, so a best exists.
                        let kept = best.clone().expect("GP attempt recorded");
                        let source = if kept.prompt.is_empty() {
                            PredictionSource::Gp
                        } else {
                            PredictionSource::LlmRefined
                        };
                        corpus.push(CorpusEntry {
                            molecule_id: record.id.clone(),
                            attempt_index: attempt,
                            prompt: kept.prompt,
                            raw_response: kept.response,
                            parsed_value: Some(kept.value),
                            deviation_pct: Some(kept.deviation.pct),
                            near_zero_reference: kept.deviation.near_zero_reference,
                            error_analysis: "best attempt kept after the cap ran out".into(),
                            source,
                            annotation: Annotation::None,
                            is_final: true,
                            cap_exhausted: true,
                        });
                        break;
                    }
                }
                Err(other) => return Err(other.into()),
            }
        }
    }

    let stats = recompute_stats(&corpus);
    Ok(CotOutcome { corpus, stats })
}

// ---------------------------------------------------------------------------
// Inference on unknown molecules
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetPrediction {
    pub molecule_id: String,
    #[serde(flatten)]
    pub prediction: Prediction,
}

/// Predict targets whose measured values are unknown.
///
/// Pure-LLM mode (`model` = None): one prompt per target carrying the
/// corpus digest. ML mode: the GP predicts; targets whose predictive std
/// exceeds the uncertainty gate (default σf/2) are refined by the LLM.
pub fn predict_unknown(
    corpus: &[CorpusEntry],
    model: Option<&GpModel>,
    predictor: &Backend,
    seeds: &[SolubilityRecord],
    targets: &[SolubilityRecord],
    config: &CotConfig,
    log: Option<&ExchangeLog>,
) -> Result<Vec<TargetPrediction>, CotError> {
    if model.is_none() && corpus.is_empty() {
        return Err(CotError::InvalidConfig(
            "pure-LLM inference needs a non-empty corpus".into(),
        ));
    }
    let seed_ctx = SeedContext::build(seeds)?;
    let known: Vec<(&SolubilityRecord, &DescriptorVector)> =
        seeds.iter().zip(&seed_ctx.descriptors).collect();
    let digest = condense_corpus(&digest_items(corpus), config.digest_budget);

    let mut out = Vec::with_capacity(targets.len());
    for record in targets {
        let mol = parse_smiles(&record.smiles)?;
        let descriptors = compute_descriptors(&mol);
        let fp = morgan_fingerprint(&mol, 2, 2048);
        let mut scored: Vec<(usize, f64)> = seed_ctx
            .fingerprints
            .iter()
            .enumerate()
            .map(|(i, sf)| (i, tanimoto(sf, &fp).expect("equal widths")))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let neighbors: Vec<(&SolubilityRecord, f64)> = scored
            .into_iter()
            .take(3)
            .map(|(i, s)| (&seeds[i], s))
            .collect();

        let prediction = match model {
            None => {
                let prompt =
                    build_prediction_prompt(&known, &neighbors, &digest, &descriptors);
                let value = ask_with_one_retry(predictor, &prompt, log)?;
                // No uncertainty estimate exists in pure-LLM mode.
                Prediction {
                    mean: value,
                    std: 0.0,
                    source: PredictionSource::Llm,
                }
            }
            Some(gp_model) => {
                let gp = gp_model.predict(&descriptors.as_array())?;
                let gate = config.uncertainty_gate_std.unwrap_or_else(|| {
                    gp_model.hyperparameters().signal_variance().sqrt() / 2.0
                });
                if gp.std > gate {
                    let base =
                        build_prediction_prompt(&known, &neighbors, &digest, &descriptors);
                    let prompt = format!(
                        "{base}\nSurrogate model estimate: mean {:?}, std {:?} \
                         (high uncertainty; refine it).\n",
                        gp.mean, gp.std
                    );
                    match ask_with_one_retry(predictor, &prompt, log) {
                        Ok(value) => Prediction {
                            mean: value,
                            std: gp.std,
                            source: PredictionSource::LlmRefined,
                        },
                        // No usable number: fall back to the GP estimate.
                        Err(CotError::BackendFailure(LlmError::NoNumericValue))
                        | Err(CotError::BackendFailure(LlmError::ImplausibleValue(_))) => gp,
                        Err(other) => return Err(other),
                    }
                } else {
                    gp
                }
            }
        };
        out.push(TargetPrediction {
            molecule_id: record.id.clone(),
            prediction,
        });
    }
    Ok(out)
}

fn ask_with_one_retry(
    predictor: &Backend,
    prompt: &str,
    log: Option<&ExchangeLog>,
) -> Result<f64, CotError> {
    let exchange = predictor.generate(prompt)?;
    log_exchange(log, &exchange);
    match extract_numeric_prediction(&exchange.response) {
        Ok(v) => Ok(v),
        Err(LlmError::NoNumericValue) | Err(LlmError::ImplausibleValue(_)) => {
            let retry_prompt = format!(
                "{prompt}\nYour previous answer had no usable number. \
                 End with exactly one line `PREDICTION: <number>`.\n"
            );
            let retry = predictor.generate(&retry_prompt)?;
            log_exchange(log, &retry);
            extract_numeric_prediction(&retry.response).map_err(CotError::from)
        }
        Err(other) => Err(other.into()),
    }
}

// ---------------------------------------------------------------------------
// Corpus persistence and stats
// ---------------------------------------------------------------------------

/// First line of every corpus file: configuration and split provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub kind: String,
    pub mode: String,
    pub config: CotConfig,
    pub split_checksum: String,
}

pub const CORPUS_HEADER_KIND: &str = "corpus_header";

/// FNV-1a checksum of the split manifest, hex-encoded.
pub fn split_checksum(split: &DatasetSplit) -> String {
    let json = serde_json::to_string(split).expect("split serializes");
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in json.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

pub fn write_corpus(
    path: &std::path::Path,
    mode: &str,
    config: &CotConfig,
    split_checksum: &str,
    corpus: &[CorpusEntry],
) -> Result<(), CotError> {
    let header = CorpusHeader {
        kind: CORPUS_HEADER_KIND.into(),
        mode: mode.into(),
        config: config.clone(),
        split_checksum: split_checksum.into(),
    };
    let mut lines = Vec::with_capacity(corpus.len() + 1);
    lines.push(serde_json::to_string(&header).map_err(|e| CotError::CorpusFormat(e.to_string()))?);
    for entry in corpus {
        lines.push(
            serde_json::to_string(entry).map_err(|e| CotError::CorpusFormat(e.to_string()))?,
        );
    }
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_corpus(
    path: &std::path::Path,
) -> Result<(CorpusHeader, Vec<CorpusEntry>), CotError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CotError::CorpusFormat("empty corpus file".into()))?;
    let header: CorpusHeader = serde_json::from_str(header_line)
        .map_err(|e| CotError::CorpusFormat(format!("bad header: {e}")))?;
    if header.kind != CORPUS_HEADER_KIND {
        return Err(CotError::CorpusFormat(format!(
            "unexpected header kind `{}`",
            header.kind
        )));
    }
    let mut corpus = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CorpusEntry = serde_json::from_str(line)
            .map_err(|e| CotError::CorpusFormat(format!("line {}: {e}", i + 2)))?;
        corpus.push(entry);
    }
    Ok((header, corpus))
}

/// Recompute loop statistics from corpus entries: a molecule's rethink
/// count is its highest attempt index minus one (the corpus is the source
/// of truth; the loops return exactly this). The best-kept final entry
/// written when the cap runs out shares the last attempt's index, so
/// entry counting would overstate rethinks there.
pub fn recompute_stats(corpus: &[CorpusEntry]) -> RethinkStats {
    let mut attempts: std::collections::BTreeMap<&str, u32> = Default::default();
    for entry in corpus {
        let slot = attempts.entry(entry.molecule_id.as_str()).or_insert(0);
        *slot = (*slot).max(entry.attempt_index);
    }
    let points = attempts.values().filter(|&&c| c >= 2).count() as u32;
    let total = attempts.values().map(|&c| c - 1).sum();
    RethinkStats {
        points_requiring_rethink: points,
        total_rethinks: total,
    }
}
