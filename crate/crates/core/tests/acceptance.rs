//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use nilm_core::classify::ClassifierKind;
use nilm_core::domain::{make_context, LabeledDataset};
use nilm_core::eval::{
    macro_metrics, run_benchmark, summary_table, write_reports_csv, write_reports_json, EvalReport, ModelKind,
    ModelSpec, SplitSpec,
};
use nilm_core::ingest::{generate_dataset, synthetic_catalogue};
use nilm_core::nn::{blueprint_for, derive_cnn_architecture, Architecture, NetConfig, PRESET_NAMES};
use nilm_core::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn architecture_derivation() -> Outcome {
    let cases = [((16000, 50), vec![5, 2, 2, 2, 2, 2, 2]), ((50000, 50), vec![5, 5, 5, 2, 2, 2])];
    let mut ok = true;
    let mut detail = Vec::new();
    for ((fs, f0), want) in cases {
        let ctx = make_context(fs, f0, 0.5).unwrap();
        let start = Instant::now();
        let got = derive_cnn_architecture(&ctx);
        let elapsed = start.elapsed();
        let n_classes = 5;
        let bp = blueprint_for(&NetConfig::default(), &ctx, n_classes).unwrap();
        let shapes = bp.shapes().unwrap();
        let final_len = shapes[shapes.len() - 2].1;
        ok &= got.factors() == want.as_slice() && final_len == 25 && elapsed < Duration::from_millis(1);
        detail.push(format!("{fs}/{f0} -> {:?}, final length {final_len}, {:?}", got.factors(), elapsed));
    }
    outcome(ok, detail.join("; "))
}

fn preset_coding_widths() -> Outcome {
    let contexts = [make_context(16000, 50, 0.5).unwrap(), make_context(50000, 50, 0.5).unwrap()];
    let mut ok = true;
    let mut widths = Vec::new();
    for name in PRESET_NAMES {
        let cfg = match NetConfig::preset(name) {
            Ok(cfg) => cfg,
            Err(e) => return outcome(false, format!("{name}: {e}")),
        };
        if name.starts_with("desk") {
            let ctx = make_context(2000, 50, 0.5).unwrap();
            ok &= blueprint_for(&cfg, &ctx, 8).is_ok();
            continue;
        }
        let ctx = if name.starts_with("ukdale") { &contexts[0] } else { &contexts[1] };
        match blueprint_for(&cfg, ctx, 5) {
            Ok(bp) => {
                if cfg.architecture != Architecture::Cnn {
                    let w = bp.code_width().unwrap();
                    ok &= w == Some(200);
                    widths.push(format!("{name}={}", w.unwrap_or(0)));
                }
            }
            Err(e) => return outcome(false, format!("{name}: {e}")),
        }
    }
    outcome(ok, format!("{} presets built; coding widths {}", PRESET_NAMES.len(), widths.join(", ")))
}

fn reference_scores() -> Outcome {
    // Reference macro F-scores on the real datasets. Not reproducible here:
    // the real datasets hold more than 50,000 events.
    let reference = [("UK-DALE CNN", 0.75), ("UK-DALE hand-crafted BDT", 0.69), ("BLOND-50 hand-crafted LDA", 0.87), ("BLOND-50 CNN", 0.86)];
    let listed: Vec<String> = reference.iter().map(|(n, f)| format!("{n} {f:.2}")).collect();
    outcome(true, format!("not reproducible without the real datasets ({}); covered by the synthetic criteria", listed.join(", ")))
}

fn benchmark_dataset() -> LabeledDataset {
    let ctx = make_context(2000, 50, 0.5).unwrap();
    generate_dataset(&synthetic_catalogue(8), 100, &ctx, &Rng::new(7)).unwrap()
}

fn run(ds: &LabeledDataset) -> Vec<EvalReport> {
    run_benchmark(ds, &ModelSpec::all(), &SplitSpec { seed: 7, ..SplitSpec::default() }, &Rng::new(7)).unwrap()
}

fn find(reports: &[EvalReport], model: ModelKind, classifier: Option<ClassifierKind>) -> &EvalReport {
    reports.iter().find(|r| r.model == model && r.classifier == classifier).unwrap()
}

fn synthetic_benchmark(reports: &[EvalReport], elapsed: Duration) -> Outcome {
    let knn = Some(ClassifierKind::Knn);
    let hand = find(reports, ModelKind::Handcrafted, knn);
    let sub = find(reports, ModelKind::RandomSubsample, knn);
    let cnn = find(reports, ModelKind::Cnn, None);
    let epochs = cnn.epochs_run.unwrap_or(usize::MAX);
    let ok = hand.macro_f_score >= 0.95
        && cnn.macro_f_score >= 0.90
        && epochs <= 50
        && sub.macro_f_score < hand.macro_f_score
        && elapsed < Duration::from_secs(300);
    outcome(
        ok,
        format!(
            "handcrafted+KNN {:.3}, CNN {:.3} after {epochs} epochs, random_subsample+KNN {:.3}, {} reports in {:.1}s",
            hand.macro_f_score,
            cnn.macro_f_score,
            sub.macro_f_score,
            reports.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    for seed in 0..20 {
        for (name, err) in common::layer_cases(seed) {
            match worst.iter_mut().find(|(n, _)| *n == name) {
                Some(entry) => entry.1 = entry.1.max(err),
                None => worst.push((name, err)),
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = worst.iter().all(|(_, e)| *e < 1e-4) && elapsed < Duration::from_secs(30);
    let list: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(ok, format!("20 seeds, worst relative error: {}; {:.2}s", list.join(", "), elapsed.as_secs_f64()))
}

fn pca_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(21);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (n, d, k) = common::pca_case(&mut rng);
        worst = worst.max(common::pca_oracle_error(&mut rng, n, d, k));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && elapsed < Duration::from_secs(10),
        format!("50 matrices, worst deviation {worst:.1e}; {:.3}s", elapsed.as_secs_f64()),
    )
}

fn metric_oracle() -> Outcome {
    let m = macro_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
    let (_, want) = common::naive_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
    let worked = (m.f_score - want).abs() < 1e-12 && (m.f_score - 0.733).abs() < 5e-4;
    let mut rng = Rng::new(5);
    let worst = (0..100).map(|_| common::metric_oracle_error(&mut rng)).fold(0.0, f64::max);
    outcome(
        worked && worst < 1e-12,
        format!("worked example macro F {:.4}; 100 random vectors, worst deviation {worst:.1e}", m.f_score),
    )
}

fn event_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(13);
    let failures: Vec<String> = (0..1000).filter_map(|_| common::event_properties_hold(&mut rng).err()).collect();
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(10),
        format!(
            "1000 traces, {} violations{}; {:.3}s",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default(),
            elapsed.as_secs_f64()
        ),
    )
}

fn report_bytes(reports: &[EvalReport], dir: &std::path::Path) -> (Vec<u8>, Vec<u8>) {
    std::fs::create_dir_all(dir).unwrap();
    let json = dir.join("reports.json");
    let csv = dir.join("reports.csv");
    write_reports_json(&json, reports).unwrap();
    write_reports_csv(&csv, reports).unwrap();
    (std::fs::read(json).unwrap(), std::fs::read(csv).unwrap())
}

fn determinism(first: &[EvalReport], second: &[EvalReport]) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let a = report_bytes(first, &dir.path().join("a"));
    let b = report_bytes(second, &dir.path().join("b"));
    outcome(a == b, format!("reports.json {} bytes, reports.csv {} bytes, identical: {}", a.0.len(), a.1.len(), a == b))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("architecture derivation", architecture_derivation()));
    results.push(("preset coding widths", preset_coding_widths()));
    results.push(("reference-scale scores", reference_scores()));

    let ds = benchmark_dataset();
    let start = Instant::now();
    let first = run(&ds);
    let elapsed = start.elapsed();
    println!("{}", summary_table(&first));
    results.push(("synthetic benchmark", synthetic_benchmark(&first, elapsed)));

    results.push(("gradient checks", gradient_checks()));
    results.push(("pca oracle", pca_oracle()));
    results.push(("metric oracle", metric_oracle()));
    results.push(("event suite", event_suite()));

    let second = run(&ds);
    results.push(("determinism", determinism(&first, &second)));

    let mut failed = 0;
    for (name, o) in &results {
        let status = if name == &"reference-scale scores" {
            "N/A "
        } else if o.passed {
            "PASS"
        } else {
            failed += 1;
            "FAIL"
        };
        println!("{status} {name}: {}", o.detail);
    }
    println!("acceptance: {} criteria, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
