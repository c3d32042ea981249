//! ESOL-style dataset ingestion and the 30-seed / 20-most-similar /
//! 20-most-dissimilar splits used by the pipelines.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{morgan_fingerprint, parse_smiles, tanimoto, Fingerprint};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file not found: {0}")]
    FileNotFound(String),
    #[error("missing column `{0}` in dataset header")]
    MissingColumn(String),
    #[error("dataset contains no usable records")]
    EmptyDataset,
    #[error("duplicate seed id `{0}`")]
    DuplicateSeedId(String),
    #[error("need at least {needed} records, got {got}")]
    InsufficientRecords { needed: usize, got: usize },
    #[error("seed id `{0}` not present in dataset")]
    UnknownSeedId(String),
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
}

/// One measured solubility data point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolubilityRecord {
    pub id: String,
    pub name: String,
    pub smiles: String,
    /// Measured log10 aqueous solubility, mol/L.
    pub log_s: f64,
}

/// Column names to look up in the CSV header. Defaults match the canonical
/// ESOL (`delaney-processed.csv`) header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnConfig {
    pub id: String,
    pub log_s: String,
    pub smiles: String,
}

impl Default for ColumnConfig {
    fn default() -> Self {
        ColumnConfig {
            id: "Compound ID".into(),
            log_s: "measured log solubility in mols per litre".into(),
            smiles: "smiles".into(),
        }
    }
}

/// A row skipped during loading, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedRow {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub records: Vec<SolubilityRecord>,
    pub skipped: Vec<SkippedRow>,
}

/// Load solubility records from a CSV file. Rows whose SMILES does not
/// parse (or whose solubility is not a finite number) are skipped and
/// reported in the outcome.
pub fn load_esol(path: &Path, columns: &ColumnConfig) -> Result<LoadOutcome, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize, DatasetError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let id_col = find(&columns.id)?;
    let log_s_col = find(&columns.log_s)?;
    let smiles_col = find(&columns.smiles)?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (row_idx, result) in reader.records().enumerate() {
        let line = row_idx + 2; // header is line 1
        let row = result?;
        let id = row.get(id_col).unwrap_or("").trim().to_string();
        let smiles = row.get(smiles_col).unwrap_or("").trim().to_string();
        let log_s: f64 = match row.get(log_s_col).unwrap_or("").trim().parse() {
            Ok(v) => v,
            Err(_) => {
                skipped.push(SkippedRow {
                    line,
                    id,
                    reason: "unparseable solubility value".into(),
                });
                continue;
            }
        };
        if !log_s.is_finite() {
            skipped.push(SkippedRow {
                line,
                id,
                reason: "non-finite solubility value".into(),
            });
            continue;
        }
        if let Err(err) = parse_smiles(&smiles) {
            skipped.push(SkippedRow {
                line,
                id,
                reason: format!("unparseable SMILES: {err}"),
            });
            continue;
        }
        records.push(SolubilityRecord {
            name: id.clone(),
            id,
            smiles,
            log_s,
        });
    }

    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(LoadOutcome { records, skipped })
}

/// How the 30 seed molecules are chosen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SeedSelector {
    /// The first 30 records in dataset order.
    First30,
    /// An explicit id list (must name exactly 30 distinct records).
    Ids(Vec<String>),
}

pub const SEED_SIZE: usize = 30;
pub const SPLIT_SIZE: usize = 20;

/// A record plus its maximum Tanimoto similarity to the seed set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredRecord {
    #[serde(flatten)]
    pub record: SolubilityRecord,
    pub similarity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: Vec<SolubilityRecord>,
    pub similar: Vec<ScoredRecord>,
    pub dissimilar: Vec<ScoredRecord>,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.seed.len() != SEED_SIZE
            || self.similar.len() != SPLIT_SIZE
            || self.dissimilar.len() != SPLIT_SIZE
        {
            return Err(DatasetError::InsufficientRecords {
                needed: SEED_SIZE + 2 * SPLIT_SIZE,
                got: self.seed.len() + self.similar.len() + self.dissimilar.len(),
            });
        }
        let mut ids: Vec<&str> = self
            .seed
            .iter()
            .map(|r| r.id.as_str())
            .chain(self.similar.iter().map(|r| r.record.id.as_str()))
            .chain(self.dissimilar.iter().map(|r| r.record.id.as_str()))
            .collect();
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before {
            return Err(DatasetError::DuplicateSeedId("split overlap".into()));
        }
        Ok(())
    }
}

const FP_RADIUS: u32 = 2;
const FP_BITS: usize = 2048;

/// Select the 30/20/20 split. For every non-seed record the similarity
/// score is the maximum Tanimoto against any seed molecule; the 20 highest
/// scores become the similar split and, from the remainder, the 20 lowest
/// become the dissimilar split. Ties resolve to earlier dataset order.
pub fn select_splits(
    records: &[SolubilityRecord],
    selector: &SeedSelector,
) -> Result<DatasetSplit, DatasetError> {
    let needed = SEED_SIZE + 2 * SPLIT_SIZE;
    if records.len() < needed {
        return Err(DatasetError::InsufficientRecords {
            needed,
            got: records.len(),
        });
    }

    let seed_indices: Vec<usize> = match selector {
        SeedSelector::First30 => (0..SEED_SIZE).collect(),
        SeedSelector::Ids(ids) => {
            if ids.len() != SEED_SIZE {
                return Err(DatasetError::InsufficientRecords {
                    needed: SEED_SIZE,
                    got: ids.len(),
                });
            }
            let mut seen = std::collections::HashSet::new();
            let mut indices = Vec::with_capacity(SEED_SIZE);
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(DatasetError::DuplicateSeedId(id.clone()));
                }
                let idx = records
                    .iter()
                    .position(|r| &r.id == id)
                    .ok_or_else(|| DatasetError::UnknownSeedId(id.clone()))?;
                indices.push(idx);
            }
            indices
        }
    };
    let seed_set: std::collections::HashSet<usize> = seed_indices.iter().copied().collect();

    let fingerprint = |smiles: &str| -> Fingerprint {
        let mol = parse_smiles(smiles).expect("records hold pre-validated SMILES");
        morgan_fingerprint(&mol, FP_RADIUS, FP_BITS)
    };
    let seed_fps: Vec<Fingerprint> = seed_indices
        .iter()
        .map(|&i| fingerprint(&records[i].smiles))
        .collect();

    // (dataset index, max similarity to seed set)
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for (i, record) in records.iter().enumerate() {
        if seed_set.contains(&i) {
            continue;
        }
        let fp = fingerprint(&record.smiles);
        let s = seed_fps
            .iter()
            .map(|sf| tanimoto(sf, &fp).expect("equal widths"))
            .fold(0.0f64, f64::max);
        scored.push((i, s));
    }

    // Similar: top-20 by score, earlier dataset order wins ties.
    let mut by_desc = scored.clone();
    by_desc.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let similar_idx: Vec<(usize, f64)> = by_desc[..SPLIT_SIZE].to_vec();
    let similar_set: std::collections::HashSet<usize> =
        similar_idx.iter().map(|&(i, _)| i).collect();

    // Dissimilar: bottom-20 of the remainder, earlier dataset order wins.
    let mut by_asc: Vec<(usize, f64)> = scored
        .iter()
        .copied()
        .filter(|(i, _)| !similar_set.contains(i))
        .collect();
    by_asc.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let dissimilar_idx: Vec<(usize, f64)> = by_asc[..SPLIT_SIZE].to_vec();

    let to_scored = |pairs: &[(usize, f64)]| -> Vec<ScoredRecord> {
        let mut indexed: Vec<(usize, f64)> = pairs.to_vec();
        indexed.sort_by_key(|&(i, _)| i); // dataset order inside each split
        indexed
            .into_iter()
            .map(|(i, s)| ScoredRecord {
                record: records[i].clone(),
                similarity: s,
            })
            .collect()
    };

    let split = DatasetSplit {
        seed: seed_indices.iter().map(|&i| records[i].clone()).collect(),
        similar: to_scored(&similar_idx),
        dissimilar: to_scored(&dissimilar_idx),
    };
    split.validate()?;
    Ok(split)
}
