//! Evaluation metrics and report emission.
//!
//! `evaluate` decomposes prediction quality the way the result tables do:
//! sign-agreement success count, how many molecules deviate by more than
//! 100 %, and the mean deviation inside each bucket. `emit_report` writes
//! the CSV/markdown artifacts for a set of summaries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cot::{percent_deviation, sign_agreement, CotError, RethinkStats};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("prediction and actual lists differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("molecule id mismatch at position {index}: `{left}` vs `{right}`")]
    IdMismatch {
        index: usize,
        left: String,
        right: String,
    },
    #[error("metric failure: {0}")]
    Metric(#[from] CotError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerMolecule {
    pub id: String,
    pub deviation_pct: f64,
    pub sign_ok: bool,
    /// Deviation used the absolute fallback because the measured value was
    /// nearly zero.
    pub near_zero_reference: bool,
}

/// One row of the results tables: a model × split evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub label: String,
    pub n: usize,
    /// Molecules whose predicted and measured logS share a sign.
    pub success_count: u32,
    /// Molecules with deviation strictly greater than 100 %.
    pub n_over_100: u32,
    /// Mean deviation over molecules at or under 100 % (0 when none).
    pub mean_dev_under_100: f64,
    /// Mean deviation over molecules above 100 % (0 when none).
    pub mean_dev_over_100: f64,
    pub per_molecule: Vec<PerMolecule>,
}

/// Evaluate aligned (id, predicted) against (id, measured) pairs.
/// Exactly-100 % deviations land in the under bucket.
pub fn evaluate(
    label: &str,
    predictions: &[(String, f64)],
    actuals: &[(String, f64)],
) -> Result<EvaluationSummary, ReportError> {
    if predictions.len() != actuals.len() {
        return Err(ReportError::LengthMismatch {
            left: predictions.len(),
            right: actuals.len(),
        });
    }
    let mut per_molecule = Vec::with_capacity(predictions.len());
    for (index, ((pid, pred), (aid, actual))) in
        predictions.iter().zip(actuals.iter()).enumerate()
    {
        if pid != aid {
            return Err(ReportError::IdMismatch {
                index,
                left: pid.clone(),
                right: aid.clone(),
            });
        }
        let deviation = percent_deviation(*pred, *actual)?;
        per_molecule.push(PerMolecule {
            id: pid.clone(),
            deviation_pct: deviation.pct,
            sign_ok: sign_agreement(*pred, *actual),
            near_zero_reference: deviation.near_zero_reference,
        });
    }
    // Aggregate over the id-sorted list so results are exactly invariant
    // under permutation of the input pairs.
    per_molecule.sort_by(|a, b| a.id.cmp(&b.id));

    let success_count = per_molecule.iter().filter(|m| m.sign_ok).count() as u32;
    let over: Vec<f64> = per_molecule
        .iter()
        .filter(|m| m.deviation_pct > 100.0)
        .map(|m| m.deviation_pct)
        .collect();
    let under: Vec<f64> = per_molecule
        .iter()
        .filter(|m| m.deviation_pct <= 100.0)
        .map(|m| m.deviation_pct)
        .collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(EvaluationSummary {
        label: label.to_string(),
        n: per_molecule.len(),
        success_count,
        n_over_100: over.len() as u32,
        mean_dev_under_100: mean(&under),
        mean_dev_over_100: mean(&over),
        per_molecule,
    })
}

// ---------------------------------------------------------------------------
// File emission
// ---------------------------------------------------------------------------

fn fmt_pct(v: f64) -> String {
    format!("{v:.2}")
}

/// RFC-4180-style quoting: wrap fields containing commas or quotes.
fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Write the report files and return their paths:
/// `summary.csv`, `rethink.csv`, per-summary `deviation_<label>.csv` and
/// `consistency_<label>.csv`, and `report.md`. Emission is byte-stable
/// for identical inputs.
pub fn emit_report(
    summaries: &[EvaluationSummary],
    corpus_stats: &[(String, RethinkStats)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    // (a) summary.csv: the five-column results schema.
    let mut summary_csv = String::from(
        "Model,Solubility Judgment Success Count,\
         Number with Deviation higher than 100%,\
         Deviation less than 100%,Deviation greater than 100%\n",
    );
    for s in summaries {
        summary_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(&s.label),
            s.success_count,
            s.n_over_100,
            fmt_pct(s.mean_dev_under_100),
            fmt_pct(s.mean_dev_over_100),
        ));
    }
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, &summary_csv)?;
    written.push(summary_path);

    // (b) rethink.csv: the three-column construction-cost schema.
    let mut rethink_csv =
        String::from("Model,Number of Points Requiring Rethink,Total Rethink Times\n");
    for (label, stats) in corpus_stats {
        rethink_csv.push_str(&format!(
            "{},{},{}\n",
            csv_field(label),
            stats.points_requiring_rethink,
            stats.total_rethinks
        ));
    }
    let rethink_path = out_dir.join("rethink.csv");
    std::fs::write(&rethink_path, &rethink_csv)?;
    written.push(rethink_path);

    for s in summaries {
        // (c) per-molecule deviations with bucket tags (bar-chart data).
        let mut dev_csv = String::from("id,deviation_pct,bucket,near_zero_reference\n");
        for m in &s.per_molecule {
            dev_csv.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&m.id),
                fmt_pct(m.deviation_pct),
                if m.deviation_pct > 100.0 { "over" } else { "under" },
                m.near_zero_reference
            ));
        }
        let dev_path = out_dir.join(format!("deviation_{}.csv", file_label(&s.label)));
        std::fs::write(&dev_path, &dev_csv)?;
        written.push(dev_path);

        // (d) consistency fractions (pie-chart data).
        let success_fraction = if s.n == 0 {
            0.0
        } else {
            f64::from(s.success_count) / s.n as f64
        };
        let consistency_csv = format!(
            "success_fraction,failure_fraction\n{:.4},{:.4}\n",
            success_fraction,
            1.0 - success_fraction
        );
        let cons_path = out_dir.join(format!("consistency_{}.csv", file_label(&s.label)));
        std::fs::write(&cons_path, &consistency_csv)?;
        written.push(cons_path);
    }

    // (e) report.md rendering everything above.
    let mut md = String::from("# Solubility Prediction Report\n\n## Summary\n\n");
    md.push_str(
        "| Model | Solubility Judgment | Deviation > 100% (count) \
         | Mean deviation ≤ 100% | Mean deviation > 100% |\n",
    );
    md.push_str("|---|---|---|---|---|\n");
    for s in summaries {
        md.push_str(&format!(
            "| {} | Success count: {} | {} | {} | {} |\n",
            s.label,
            s.success_count,
            s.n_over_100,
            fmt_pct(s.mean_dev_under_100),
            fmt_pct(s.mean_dev_over_100),
        ));
    }
    md.push_str("\n## Rethink Comparison\n\n");
    md.push_str("| Model | Points Requiring Rethink | Total Rethink Times |\n|---|---|---|\n");
    for (label, stats) in corpus_stats {
        md.push_str(&format!(
            "| {label} | {} | {} |\n",
            stats.points_requiring_rethink, stats.total_rethinks
        ));
    }
    for s in summaries {
        md.push_str(&format!("\n## Per-molecule deviations: {}\n\n", s.label));
        md.push_str("| Molecule | Deviation % | Bucket | Sign OK |\n|---|---|---|---|\n");
        for m in &s.per_molecule {
            md.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                m.id,
                fmt_pct(m.deviation_pct),
                if m.deviation_pct > 100.0 { "over" } else { "under" },
                if m.sign_ok { "yes" } else { "no" }
            ));
        }
    }
    let md_path = out_dir.join("report.md");
    std::fs::write(&md_path, &md)?;
    written.push(md_path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(values: &[(&str, f64)]) -> Vec<(String, f64)> {
        values
            .iter()
            .map(|(id, v)| (id.to_string(), *v))
            .collect()
    }

    #[test]
    fn identity_predictions_are_perfect() {
        let actuals = pairs(&[("a", -1.5), ("b", -3.0), ("c", 0.5)]);
        let summary = evaluate("Exact", &actuals, &actuals).unwrap();
        assert_eq!(summary.success_count, 3);
        assert_eq!(summary.n_over_100, 0);
        assert_eq!(summary.mean_dev_under_100, 0.0);
        assert_eq!(summary.mean_dev_over_100, 0.0);
    }

    #[test]
    fn constructed_four_molecule_case() {
        // deviations {50, 150, 0, 200}, signs {ok, ok, ok, bad}
        let predictions = pairs(&[("m1", -1.0), ("m2", -5.0), ("m3", -2.0), ("m4", 1.0)]);
        let actuals = pairs(&[("m1", -2.0), ("m2", -2.0), ("m3", -2.0), ("m4", -1.0)]);
        let summary = evaluate("Constructed", &predictions, &actuals).unwrap();
        assert_eq!(summary.success_count, 3);
        assert_eq!(summary.n_over_100, 2);
        assert_eq!(summary.mean_dev_under_100, 25.0);
        assert_eq!(summary.mean_dev_over_100, 175.0);
    }

    #[test]
    fn exactly_100_percent_goes_to_the_under_bucket() {
        let predictions = pairs(&[("m", -4.0)]);
        let actuals = pairs(&[("m", -2.0)]);
        let summary = evaluate("Edge", &predictions, &actuals).unwrap();
        assert_eq!(summary.n_over_100, 0);
        assert_eq!(summary.mean_dev_under_100, 100.0);
    }

    #[test]
    fn permutation_of_pairs_changes_nothing() {
        let predictions = pairs(&[("a", -1.0), ("b", -3.5), ("c", 2.0), ("d", -0.2)]);
        let actuals = pairs(&[("a", -2.0), ("b", -3.0), ("c", -1.0), ("d", -0.25)]);
        let forward = evaluate("P", &predictions, &actuals).unwrap();
        let perm = [2usize, 0, 3, 1];
        let pred_perm: Vec<_> = perm.iter().map(|&i| predictions[i].clone()).collect();
        let act_perm: Vec<_> = perm.iter().map(|&i| actuals[i].clone()).collect();
        let shuffled = evaluate("P", &pred_perm, &act_perm).unwrap();
        assert_eq!(forward.success_count, shuffled.success_count);
        assert_eq!(forward.n_over_100, shuffled.n_over_100);
        assert_eq!(
            forward.mean_dev_under_100.to_bits(),
            shuffled.mean_dev_under_100.to_bits()
        );
        assert_eq!(
            forward.mean_dev_over_100.to_bits(),
            shuffled.mean_dev_over_100.to_bits()
        );
        let ids: Vec<_> = forward.per_molecule.iter().map(|m| &m.id).collect();
        let ids2: Vec<_> = shuffled.per_molecule.iter().map(|m| &m.id).collect();
        assert_eq!(ids, ids2);
    }

    #[test]
    fn mismatches_are_rejected() {
        let predictions = pairs(&[("a", -1.0)]);
        let actuals = pairs(&[("a", -1.0), ("b", -2.0)]);
        assert!(matches!(
            evaluate("X", &predictions, &actuals),
            Err(ReportError::LengthMismatch { .. })
        ));
        let actuals = pairs(&[("z", -1.0)]);
        assert!(matches!(
            evaluate("X", &predictions, &actuals),
            Err(ReportError::IdMismatch { .. })
        ));
    }

    fn fixture_summary(
        label: &str,
        success: u32,
        over: u32,
        under_mean: f64,
        over_mean: f64,
    ) -> EvaluationSummary {
        EvaluationSummary {
            label: label.into(),
            n: 20,
            success_count: success,
            n_over_100: over,
            mean_dev_under_100: under_mean,
            mean_dev_over_100: over_mean,
            per_molecule: vec![],
        }
    }

    #[test]
    fn published_rows_render_verbatim() {
        let summaries = vec![
            fixture_summary("Gaussian", 15, 7, 30.49, 1253.88),
            fixture_summary("LLM-CoT", 16, 6, 66.43, 1011.20),
            fixture_summary("ML-LLM-CoT", 18, 4, 37.54125, 424.96),
        ];
        let dir = tempfile::tempdir().unwrap();
        emit_report(&summaries, &[], dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(csv.contains("Gaussian,15,7,30.49,1253.88"));
        assert!(csv.contains("LLM-CoT,16,6,66.43,1011.20"));
        // 37.54125 is normalized to two decimals.
        assert!(csv.contains("ML-LLM-CoT,18,4,37.54,424.96"));
    }

    #[test]
    fn empty_summaries_emit_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let written = emit_report(&[], &[], dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(md.starts_with("# Solubility Prediction Report"));
        assert_eq!(written.len(), 3); // summary.csv, rethink.csv, report.md
    }

    #[test]
    fn rethink_rows_match_inputs() {
        let stats = vec![
            (
                "LLM-CoT".to_string(),
                RethinkStats {
                    points_requiring_rethink: 5,
                    total_rethinks: 34,
                },
            ),
            (
                "ML-LLM-CoT".to_string(),
                RethinkStats {
                    points_requiring_rethink: 2,
                    total_rethinks: 4,
                },
            ),
        ];
        let dir = tempfile::tempdir().unwrap();
        emit_report(&[], &stats, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("rethink.csv")).unwrap();
        assert!(csv.contains("LLM-CoT,5,34"));
        assert!(csv.contains("ML-LLM-CoT,2,4"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn emission_is_byte_identical_across_runs() {
        let predictions = pairs(&[("a", -1.0), ("b", -3.5), ("c", 2.0)]);
        let actuals = pairs(&[("a", -2.0), ("b", -3.0), ("c", -1.0)]);
        let summary = evaluate("Run", &predictions, &actuals).unwrap();
        let stats = vec![(
            "Run".to_string(),
            RethinkStats {
                points_requiring_rethink: 1,
                total_rethinks: 2,
            },
        )];
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let files_a = emit_report(std::slice::from_ref(&summary), &stats, dir_a.path()).unwrap();
        let files_b = emit_report(std::slice::from_ref(&summary), &stats, dir_b.path()).unwrap();
        assert_eq!(files_a.len(), files_b.len());
        for (fa, fb) in files_a.iter().zip(&files_b) {
            assert_eq!(
                std::fs::read(fa).unwrap(),
                std::fs::read(fb).unwrap(),
                "{} differs",
                fa.display()
            );
        }
    }

    #[test]
    fn brute_force_equivalence_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1000;
        let mut predictions = Vec::with_capacity(n);
        let mut actuals = Vec::with_capacity(n);
        for i in 0..n {
            predictions.push((format!("m{i:04}"), rng.gen_range(-12.0..4.0)));
            actuals.push((format!("m{i:04}"), rng.gen_range(-12.0..4.0)));
        }
        let summary = evaluate("Rand", &predictions, &actuals).unwrap();

        // Straight-line oracle, written independently of evaluate().
        let mut success = 0u32;
        let mut over = Vec::new();
        let mut under = Vec::new();
        for ((_, p), (_, a)) in predictions.iter().zip(&actuals) {
            let dev = if a.abs() >= 1e-6 {
                100.0 * (p - a).abs() / a.abs()
            } else {
                100.0 * (p - a).abs()
            };
            let sp = if *p > 0.0 { 1 } else if *p < 0.0 { -1 } else { 0 };
            let sa = if *a > 0.0 { 1 } else if *a < 0.0 { -1 } else { 0 };
            if sp == sa {
                success += 1;
            }
            if dev > 100.0 {
                over.push(dev);
            } else {
                under.push(dev);
            }
        }
        assert_eq!(summary.success_count, success);
        assert_eq!(summary.n_over_100 as usize, over.len());
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        assert!((summary.mean_dev_under_100 - mean(&under)).abs() < 1e-9);
        assert!((summary.mean_dev_over_100 - mean(&over)).abs() < 1e-9);
    }
}
