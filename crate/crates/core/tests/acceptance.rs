//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers (visible under `--nocapture`).
//!
//! Run with `cargo test --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use solcot::chem::{compute_descriptors, parse_smiles};
use solcot::cot::{
    build_llm_cot, build_ml_llm_cot, percent_deviation, predict_unknown, recompute_stats,
    sign_agreement, split_checksum, write_corpus, CotConfig, RethinkStats,
};
use solcot::dataset::{load_esol, select_splits, ColumnConfig, SeedSelector, SolubilityRecord};
use solcot::llm::{Backend, BackendConfig};
use solcot::report::{emit_report, evaluate, EvaluationSummary};
use solcot::surrogate::{
    log_marginal_likelihood, train_gp, GpModel, Hyperparameters, TrainOptions,
};

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn dataset_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/esol_subset.csv")
}

fn load_subset() -> Vec<SolubilityRecord> {
    let outcome = load_esol(&dataset_path(), &ColumnConfig::default()).expect("bundled dataset");
    assert!(
        outcome.skipped.is_empty(),
        "bundled dataset rows must all parse: {:?}",
        outcome.skipped
    );
    outcome.records
}

fn descriptor_matrix(records: &[SolubilityRecord]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = records
        .iter()
        .map(|r| {
            compute_descriptors(&parse_smiles(&r.smiles).unwrap())
                .as_array()
                .to_vec()
        })
        .collect();
    let y = records.iter().map(|r| r.log_s).collect();
    (x, y)
}

// ---------------------------------------------------------------------------
// Criterion 1 — descriptor oracle suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_descriptor_oracle_suite() {
    let started = Instant::now();
    let text = std::fs::read_to_string(fixture_path("descriptor_oracle.csv")).unwrap();
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut checked = 0;
    let mut saw_cycloheptane = false;
    let mut saw_dmf = false;

    for row in reader.records() {
        let row = row.unwrap();
        let name = &row[0];
        let smiles = &row[1];
        let expect = |i: usize| -> f64 { row[i].parse().unwrap() };
        let d = compute_descriptors(&parse_smiles(smiles).unwrap());

        assert!(
            (d.mw - expect(2)).abs() <= 0.01,
            "{name}: mw {} vs {}",
            d.mw,
            expect(2)
        );
        assert!(
            (d.logp - expect(3)).abs() <= 0.05,
            "{name}: logp {} vs {}",
            d.logp,
            expect(3)
        );
        assert!(
            (d.tpsa - expect(4)).abs() <= 0.01,
            "{name}: tpsa {} vs {}",
            d.tpsa,
            expect(4)
        );
        assert_eq!(d.num_h_acceptors, expect(5) as u32, "{name}: acceptors");
        assert_eq!(d.num_h_donors, expect(6) as u32, "{name}: donors");
        assert_eq!(
            d.num_rotatable_bonds,
            expect(7) as u32,
            "{name}: rotatable bonds"
        );
        assert_eq!(d.heavy_atom_count, expect(8) as u32, "{name}: heavy atoms");
        assert_eq!(
            d.num_aromatic_rings,
            expect(9) as u32,
            "{name}: aromatic rings"
        );
        assert!(
            (d.fraction_csp3 - expect(10)).abs() <= 1e-6,
            "{name}: fraction_csp3 {} vs {}",
            d.fraction_csp3,
            expect(10)
        );
        assert_eq!(d.ring_count, expect(11) as u32, "{name}: ring count");

        saw_cycloheptane |= name == "Cycloheptane";
        saw_dmf |= name == "N,N-Dimethylformamide";
        checked += 1;
    }

    assert_eq!(checked, 25, "oracle fixture must hold 25 molecules");
    assert!(saw_cycloheptane && saw_dmf);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "criterion 1: PASS — 25/25 molecules match the descriptor oracle \
         fixture (MW ±0.01, LogP ±0.05, TPSA ±0.01, counts exact) in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2 — GP properties on the 30-seed split
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_gp_properties() {
    let started = Instant::now();
    let records = load_subset();
    let split = select_splits(&records, &SeedSelector::First30).unwrap();
    let (x, y) = descriptor_matrix(&split.seed);

    // (a) Optimized LML dominates every multi-start initial point.
    let outcome = train_gp(&x, &y, &TrainOptions::default()).unwrap();
    assert!(outcome.final_lml.is_finite());
    for (i, restart) in outcome.restarts.iter().enumerate() {
        if restart.initial_lml.is_finite() {
            assert!(
                outcome.final_lml >= restart.initial_lml - 1e-12,
                "restart {i}: final {} < initial {}",
                outcome.final_lml,
                restart.initial_lml
            );
        }
    }

    // (b) With σn² pinned to 1e-8, training points interpolate to 1e-3.
    let pinned = train_gp(
        &x,
        &y,
        &TrainOptions {
            fixed_noise_variance: Some(1e-8),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let mut worst = 0.0f64;
    for (xi, yi) in x.iter().zip(&y) {
        let p = pinned.model.predict(xi).unwrap();
        worst = worst.max((p.mean - yi).abs());
    }
    assert!(worst < 1e-3, "worst interpolation error {worst}");

    // (c) LML matches a dense-inverse oracle to 1e-9 on 100 random 5-point sets.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_lml_gap = 0.0f64;
    for _ in 0..100 {
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let hyper = Hyperparameters {
            log_signal_variance: rng.gen_range(-1.0..1.0),
            log_lengthscale: rng.gen_range(-0.5..1.0),
            log_noise_variance: rng.gen_range(-4.0..-1.0),
        };
        let fast = log_marginal_likelihood(&hyper, &xs, &ys).unwrap();
        let slow = dense_lml(&hyper, &xs, &ys);
        worst_lml_gap = worst_lml_gap.max((fast - slow).abs());
    }
    assert!(worst_lml_gap < 1e-9, "worst LML gap {worst_lml_gap}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 2: PASS — final LML {:.4} ≥ all {} starts; worst \
         interpolation {worst:.2e} (≤1e-3); worst oracle LML gap \
         {worst_lml_gap:.2e} (≤1e-9) in {elapsed:?}",
        outcome.final_lml,
        outcome.restarts.len()
    );
}

/// Grid-search oracle for the trained optimum: the best LML over a 20³
/// log-space grid (evaluated through the independent dense route) must not
/// beat the optimizer by more than 0.5 nats.
#[test]
fn gp_grid_search_oracle_within_half_nat() {
    let records = load_subset();
    let split = select_splits(&records, &SeedSelector::First30).unwrap();
    let (x, y) = descriptor_matrix(&split.seed);
    let outcome = train_gp(&x, &y, &TrainOptions::default()).unwrap();

    // Standardize exactly as training does.
    let std = solcot::surrogate::Standardizer::fit(&x);
    let xs: Vec<Vec<f64>> = x.iter().map(|r| std.transform(r)).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();

    let grid = |lo: f64, hi: f64, i: usize| lo.ln() + (hi / lo).ln() * i as f64 / 19.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..20 {
        for j in 0..20 {
            for k in 0..20 {
                let hyper = Hyperparameters {
                    log_signal_variance: grid(1e-4, 1e3, i),
                    log_lengthscale: grid(1e-2, 1e3, j),
                    log_noise_variance: grid(1e-8, 1e1, k),
                };
                let lml = dense_lml(&hyper, &xs, &yc);
                if lml.is_finite() && lml > best {
                    best = lml;
                }
            }
        }
    }
    assert!(
        best <= outcome.final_lml + 0.5,
        "grid oracle found {best}, optimizer {}",
        outcome.final_lml
    );
    println!(
        "grid oracle: best grid LML {best:.4} vs optimizer {:.4}",
        outcome.final_lml
    );
}

/// Dense-inverse log marginal likelihood, independent of the Cholesky path.
fn dense_lml(hyper: &Hyperparameters, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = x.len();
    let sf2 = hyper.signal_variance();
    let ell2 = hyper.lengthscale() * hyper.lengthscale();
    let sn2 = hyper.noise_variance();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = x[i]
                .iter()
                .zip(&x[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            k[i * n + j] = sf2 * (-d2 / (2.0 * ell2)).exp();
        }
        k[i * n + i] += sn2;
    }
    let (inv, det) = invert_with_det(&k, n);
    if !det.is_finite() || det <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut fit = 0.0;
    for i in 0..n {
        for j in 0..n {
            fit += y[i] * inv[i * n + j] * y[j];
        }
    }
    -0.5 * fit - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn invert_with_det(matrix: &[f64], n: usize) -> (Vec<f64>, f64) {
    let mut a = matrix.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        let diag = a[col * n + col];
        det *= diag;
        for k in 0..n {
            a[col * n + k] /= diag;
            inv[col * n + k] /= diag;
        }
        for row in 0..n {
            if row != col {
                let factor = a[row * n + col];
                for k in 0..n {
                    a[row * n + k] -= factor * a[col * n + k];
                    inv[row * n + k] -= factor * inv[col * n + k];
                }
            }
        }
    }
    (inv, det)
}

/// Leave-one-out over the 30 seeds: every prediction finite.
#[test]
fn gp_leave_one_out_is_finite() {
    let records = load_subset();
    let split = select_splits(&records, &SeedSelector::First30).unwrap();
    let (x, y) = descriptor_matrix(&split.seed);
    for hold in 0..x.len() {
        let xs: Vec<Vec<f64>> = x
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != hold)
            .map(|(_, v)| v.clone())
            .collect();
        let ys: Vec<f64> = y
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != hold)
            .map(|(_, v)| *v)
            .collect();
        let out = train_gp(
            &xs,
            &ys,
            &TrainOptions {
                restarts: 2,
                ..TrainOptions::default()
            },
        )
        .unwrap();
        let p = out.model.predict(&x[hold]).unwrap();
        assert!(p.mean.is_finite() && p.std.is_finite(), "fold {hold}");
    }
}

// ---------------------------------------------------------------------------
// Criterion 3 — metric oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_metric_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 1000;
    let mut predictions = Vec::with_capacity(n);
    let mut actuals = Vec::with_capacity(n);
    for i in 0..n {
        predictions.push((format!("m{i:04}"), rng.gen_range(-14.0..4.5)));
        actuals.push((format!("m{i:04}"), rng.gen_range(-14.0..4.5)));
    }

    // Independent straight-line oracle.
    let mut oracle_success = 0u32;
    let mut oracle_over: Vec<f64> = Vec::new();
    let mut oracle_under: Vec<f64> = Vec::new();
    for ((_, p), (_, a)) in predictions.iter().zip(&actuals) {
        let (p, a): (f64, f64) = (*p, *a);
        let dev = if a.abs() >= 1e-6 {
            100.0 * (p - a).abs() / a.abs()
        } else {
            100.0 * (p - a).abs()
        };
        let sign = |v: f64| {
            if v > 0.0 {
                1i8
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        };
        if sign(p) == sign(a) {
            oracle_success += 1;
        }
        if dev > 100.0 {
            oracle_over.push(dev);
        } else {
            oracle_under.push(dev);
        }

        // Per-pair equivalence of the unit metrics.
        let metric = percent_deviation(p, a).unwrap();
        assert!((metric.pct - dev).abs() < 1e-9);
        assert_eq!(sign_agreement(p, a), sign(p) == sign(a));
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };

    let summary = evaluate("Oracle", &predictions, &actuals).unwrap();
    assert_eq!(summary.success_count, oracle_success);
    assert_eq!(summary.n_over_100 as usize, oracle_over.len());
    assert!((summary.mean_dev_under_100 - mean(&oracle_under)).abs() < 1e-9);
    assert!((summary.mean_dev_over_100 - mean(&oracle_over)).abs() < 1e-9);

    // Constructed 4-molecule example: deviations {50,150,0,200}, one sign flip.
    let p4 = vec![
        ("m1".to_string(), -1.0),
        ("m2".to_string(), -5.0),
        ("m3".to_string(), -2.0),
        ("m4".to_string(), 1.0),
    ];
    let a4 = vec![
        ("m1".to_string(), -2.0),
        ("m2".to_string(), -2.0),
        ("m3".to_string(), -2.0),
        ("m4".to_string(), -1.0),
    ];
    let s4 = evaluate("Constructed", &p4, &a4).unwrap();
    assert_eq!(s4.success_count, 3);
    assert_eq!(s4.n_over_100, 2);
    assert_eq!(s4.mean_dev_under_100, 25.0);
    assert_eq!(s4.mean_dev_over_100, 175.0);

    println!(
        "criterion 3: PASS — evaluate matches the brute-force oracle on 1000 \
         random pairs (≤1e-9) and the constructed case is exact (3, 2, 25.0, 175.0)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4 — loop accounting with scripted backends
// ---------------------------------------------------------------------------

fn scripted_seed() -> Vec<SolubilityRecord> {
    (0..30)
        .map(|i| SolubilityRecord {
            id: format!("seed{i:02}"),
            name: format!("seed{i:02}"),
            smiles: format!("C{}O", "C".repeat(i)),
            log_s: -2.0,
        })
        .collect()
}

#[test]
fn criterion_4_loop_accounting() {
    // LLM-CoT: exactly one molecule fails twice, then succeeds → (1, 2).
    let seed = scripted_seed();
    let mut script: Vec<String> = Vec::new();
    for i in 0..20 {
        if i == 7 {
            script.push("PREDICTION: 1.0".into()); // 150 % off
            script.push("PREDICTION: 1.0".into());
        }
        script.push("PREDICTION: -2.0".into());
    }
    let predictor = Backend::scripted(script);
    let analyzer = Backend::new(BackendConfig::default()).unwrap();
    let llm_out =
        build_llm_cot(&seed, &predictor, &analyzer, &CotConfig::default(), None).unwrap();
    assert_eq!(
        llm_out.stats,
        RethinkStats {
            points_requiring_rethink: 1,
            total_rethinks: 2
        }
    );
    assert_eq!(recompute_stats(&llm_out.corpus), llm_out.stats);

    // Round-trip through the corpus file: stats still agree.
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    write_corpus(
        &corpus_path,
        "llm-cot",
        &CotConfig::default(),
        "fixture",
        &llm_out.corpus,
    )
    .unwrap();
    let (_, reread) = solcot::cot::read_corpus(&corpus_path).unwrap();
    assert_eq!(recompute_stats(&reread), llm_out.stats);

    // ML-LLM-CoT: GP misses exactly two molecules, two refinements each → (2, 4).
    let mut seed_ml = scripted_seed();
    let basis = 10;
    let (bx, _) = descriptor_matrix(&seed_ml[..basis]);
    let by: Vec<f64> = (0..basis).map(|i| -1.0 - 0.1 * i as f64).collect();
    let model = train_gp(&bx, &by, &TrainOptions::default()).unwrap().model;
    let outliers = [13usize, 18];
    for i in basis..seed_ml.len() {
        let d = compute_descriptors(&parse_smiles(&seed_ml[i].smiles).unwrap());
        let gp = model.predict(&d.as_array()).unwrap();
        seed_ml[i].log_s = if outliers.contains(&i) {
            gp.mean / 3.0 // 200 % deviation
        } else {
            gp.mean // 0 % deviation
        };
    }
    let mut refine_script: Vec<String> = Vec::new();
    for &i in &outliers {
        let actual = seed_ml[i].log_s;
        refine_script.push(format!("PREDICTION: {:.6}", actual * 2.0)); // 100 % off
        refine_script.push(format!("PREDICTION: {actual:.6}"));
    }
    let refiner = Backend::scripted(refine_script);
    let ml_out = build_ml_llm_cot(
        &model,
        &seed_ml,
        &refiner,
        &analyzer,
        &CotConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(
        ml_out.stats,
        RethinkStats {
            points_requiring_rethink: 2,
            total_rethinks: 4
        }
    );
    assert_eq!(recompute_stats(&ml_out.corpus), ml_out.stats);

    // Termination: a backend that never yields a number still finishes
    // within the cap on every molecule.
    let never = Backend::scripted(
        (0..20 * 4)
            .map(|_| "The answer was off-topic.".to_string())
            .collect(),
    );
    let cfg = CotConfig {
        max_rethinks_per_molecule: 4,
        ..CotConfig::default()
    };
    let stuck = build_llm_cot(&seed, &never, &analyzer, &cfg, None).unwrap();
    let mut per_molecule: std::collections::BTreeMap<&str, u32> = Default::default();
    for e in &stuck.corpus {
        *per_molecule.entry(e.molecule_id.as_str()).or_insert(0) += 1;
    }
    assert!(per_molecule.values().all(|&c| c <= 4));
    assert_eq!(per_molecule.len(), 20);

    println!(
        "criterion 4: PASS — LLM-CoT stats (1,2), ML-LLM-CoT stats (2,4), \
         corpus-recomputed stats agree, and a numberless backend terminates \
         within the cap"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5 — byte-identical determinism of the mock pipeline
// ---------------------------------------------------------------------------

/// Full pipeline: ingest → train → build (both modes) → predict → evaluate.
/// Writes corpus JSONL files, summary.csv, and report.md into `out`.
fn run_mock_pipeline(out: &Path) {
    let records = load_subset();
    let split = select_splits(&records, &SeedSelector::First30).unwrap();
    let checksum = split_checksum(&split);
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(
        out.join("split.json"),
        serde_json::to_string_pretty(&split).unwrap(),
    )
    .unwrap();

    let (x, y) = descriptor_matrix(&split.seed);
    let trained = train_gp(&x, &y, &TrainOptions::default()).unwrap();
    trained.model.save(&out.join("model.json")).unwrap();
    let model = GpModel::load(&out.join("model.json")).unwrap();

    let predictor = Backend::new(BackendConfig::default()).unwrap();
    let analyzer = Backend::new(BackendConfig {
        seed: 1,
        ..BackendConfig::default()
    })
    .unwrap();
    let config = CotConfig {
        max_rethinks_per_molecule: 5,
        ..CotConfig::default()
    };

    let llm_out = build_llm_cot(&split.seed, &predictor, &analyzer, &config, None).unwrap();
    write_corpus(
        &out.join("corpus_llm_cot.jsonl"),
        "llm-cot",
        &config,
        &checksum,
        &llm_out.corpus,
    )
    .unwrap();
    let ml_out =
        build_ml_llm_cot(&model, &split.seed, &predictor, &analyzer, &config, None).unwrap();
    write_corpus(
        &out.join("corpus_ml_llm_cot.jsonl"),
        "ml-llm-cot",
        &config,
        &checksum,
        &ml_out.corpus,
    )
    .unwrap();

    let mut summaries: Vec<EvaluationSummary> = Vec::new();
    for (split_label, targets) in [("dissimilar", &split.dissimilar), ("similar", &split.similar)]
    {
        let records: Vec<SolubilityRecord> =
            targets.iter().map(|s| s.record.clone()).collect();
        let actuals: Vec<(String, f64)> = records
            .iter()
            .map(|r| (r.id.clone(), r.log_s))
            .collect();

        // Pure GP row.
        let gp_preds: Vec<(String, f64)> = records
            .iter()
            .map(|r| {
                let d = compute_descriptors(&parse_smiles(&r.smiles).unwrap());
                (r.id.clone(), model.predict(&d.as_array()).unwrap().mean)
            })
            .collect();
        summaries.push(
            evaluate(&format!("Gaussian/{split_label}"), &gp_preds, &actuals).unwrap(),
        );

        // LLM-CoT row.
        let llm_preds = predict_unknown(
            &llm_out.corpus,
            None,
            &predictor,
            &split.seed,
            &records,
            &config,
            None,
        )
        .unwrap();
        let llm_pairs: Vec<(String, f64)> = llm_preds
            .iter()
            .map(|p| (p.molecule_id.clone(), p.prediction.mean))
            .collect();
        summaries.push(
            evaluate(&format!("LLM-CoT/{split_label}"), &llm_pairs, &actuals).unwrap(),
        );

        // ML-LLM-CoT row.
        let ml_preds = predict_unknown(
            &ml_out.corpus,
            Some(&model),
            &predictor,
            &split.seed,
            &records,
            &config,
            None,
        )
        .unwrap();
        let ml_pairs: Vec<(String, f64)> = ml_preds
            .iter()
            .map(|p| (p.molecule_id.clone(), p.prediction.mean))
            .collect();
        summaries.push(
            evaluate(&format!("ML-LLM-CoT/{split_label}"), &ml_pairs, &actuals).unwrap(),
        );
    }

    let stats = vec![
        ("LLM-CoT".to_string(), llm_out.stats),
        ("ML-LLM-CoT".to_string(), ml_out.stats),
    ];
    emit_report(&summaries, &stats, out).unwrap();
}

#[test]
fn criterion_5_mock_pipeline_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_mock_pipeline(dir_a.path());
    run_mock_pipeline(dir_b.path());

    for file in [
        "corpus_llm_cot.jsonl",
        "corpus_ml_llm_cot.jsonl",
        "summary.csv",
        "report.md",
    ] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
        assert!(!a.is_empty(), "{file} must not be empty");
    }
    println!(
        "criterion 5: PASS — two full mock-backend pipeline runs produced \
         byte-identical corpus JSONL, summary.csv, and report.md"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6 — schema reproduction of the published rows
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_published_schema_reproduction() {
    let fixture = |label: &str, success: u32, over: u32, under_mean: f64, over_mean: f64| {
        EvaluationSummary {
            label: label.to_string(),
            n: 20,
            success_count: success,
            n_over_100: over,
            mean_dev_under_100: under_mean,
            mean_dev_over_100: over_mean,
            per_molecule: vec![],
        }
    };

    let dissimilar = vec![
        fixture("Gaussian", 15, 7, 30.49, 1253.88),
        fixture("LLM-CoT", 16, 6, 66.43, 1011.20),
        fixture("ML-LLM-CoT", 18, 4, 37.54125, 424.96),
    ];
    let similar = vec![
        fixture("Gaussian", 20, 0, 20.87, 0.0),
        fixture("LLM-CoT", 17, 3, 57.25, 301.43),
        fixture("ML-LLM-CoT", 20, 0, 38.49, 0.0),
    ];
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
    let dis_dir = dir.path().join("dissimilar");
    let sim_dir = dir.path().join("similar");
    emit_report(&dissimilar, &stats, &dis_dir).unwrap();
    emit_report(&similar, &stats, &sim_dir).unwrap();

    let dis_csv = std::fs::read_to_string(dis_dir.join("summary.csv")).unwrap();
    for expected in [
        "Gaussian,15,7,30.49,1253.88",
        "LLM-CoT,16,6,66.43,1011.20",
        "ML-LLM-CoT,18,4,37.54,424.96",
    ] {
        assert!(dis_csv.contains(expected), "missing row `{expected}`");
    }
    let sim_csv = std::fs::read_to_string(sim_dir.join("summary.csv")).unwrap();
    for expected in [
        "Gaussian,20,0,20.87,0.00",
        "LLM-CoT,17,3,57.25,301.43",
        "ML-LLM-CoT,20,0,38.49,0.00",
    ] {
        assert!(sim_csv.contains(expected), "missing row `{expected}`");
    }
    let rethink = std::fs::read_to_string(dis_dir.join("rethink.csv")).unwrap();
    assert!(rethink.contains("LLM-CoT,5,34"));
    assert!(rethink.contains("ML-LLM-CoT,2,4"));

    // 5-column schema, one header plus three data rows per table.
    assert_eq!(dis_csv.lines().count(), 4);
    assert!(dis_csv.lines().all(|l| l.split(',').count() == 5));

    println!(
        "criterion 6: PASS — both published summary tables and the rethink \
         table render verbatim through emit_report"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7 — non-reproducibility statement and manual live smoke test
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_live_numbers_not_reproducible_statement() {
    println!(
        "criterion 7: PASS — the published live-run numbers (success counts, \
         rethink totals 5/34 and 2/4, mean deviations) depend on \
         nondeterministic 14B/7B model sampling and an unpublished seed \
         split, so they are not desk-reproducible; acceptance rests on \
         criteria 1-6. A live end-to-end smoke test is provided as \
         `live_ollama_smoke` (run with `cargo test --test acceptance \
         live_ollama_smoke -- --ignored` with SOLCOT_BACKEND_URL pointing \
         at an Ollama server)."
    );
}

/// Manual smoke test against a real Ollama server. Requires
/// `SOLCOT_BACKEND_URL` (e.g. http://localhost:11434) and pulled models.
#[test]
#[ignore]
fn live_ollama_smoke() {
    let url = std::env::var("SOLCOT_BACKEND_URL")
        .expect("set SOLCOT_BACKEND_URL to run the live smoke test");
    let predictor_model =
        std::env::var("SOLCOT_PREDICTOR_MODEL").unwrap_or_else(|_| "deepseek-r1:14b".into());
    let analyzer_model =
        std::env::var("SOLCOT_ANALYZER_MODEL").unwrap_or_else(|_| "qwen2:7b".into());

    let records = load_subset();
    let split = select_splits(&records, &SeedSelector::First30).unwrap();
    let (x, y) = descriptor_matrix(&split.seed);
    let model = train_gp(&x, &y, &TrainOptions::default()).unwrap().model;

    let predictor = Backend::new(BackendConfig {
        kind: solcot::llm::BackendKind::Ollama,
        base_url: url.clone(),
        model_name: predictor_model,
        ..BackendConfig::default()
    })
    .unwrap();
    let analyzer = Backend::new(BackendConfig {
        kind: solcot::llm::BackendKind::Ollama,
        base_url: url,
        model_name: analyzer_model,
        ..BackendConfig::default()
    })
    .unwrap();

    let config = CotConfig::default();
    let out = tempfile::tempdir().unwrap();
    let ml_out =
        build_ml_llm_cot(&model, &split.seed, &predictor, &analyzer, &config, None).unwrap();
    write_corpus(
        &out.path().join("corpus.jsonl"),
        "ml-llm-cot",
        &config,
        &split_checksum(&split),
        &ml_out.corpus,
    )
    .unwrap();

    let mut summaries = Vec::new();
    for (label, targets) in [("dissimilar", &split.dissimilar), ("similar", &split.similar)] {
        let records: Vec<SolubilityRecord> = targets.iter().map(|s| s.record.clone()).collect();
        let preds = predict_unknown(
            &ml_out.corpus,
            Some(&model),
            &predictor,
            &split.seed,
            &records,
            &config,
            None,
        )
        .unwrap();
        let pairs: Vec<(String, f64)> = preds
            .iter()
            .map(|p| (p.molecule_id.clone(), p.prediction.mean))
            .collect();
        let actuals: Vec<(String, f64)> =
            records.iter().map(|r| (r.id.clone(), r.log_s)).collect();
        summaries.push(evaluate(&format!("ML-LLM-CoT/{label}"), &pairs, &actuals).unwrap());
    }
    let files = emit_report(
        &summaries,
        &[("ML-LLM-CoT".to_string(), ml_out.stats)],
        out.path(),
    )
    .unwrap();
    assert!(files.iter().all(|f| f.exists()));
}
