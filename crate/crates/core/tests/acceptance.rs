//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lend::classifier::ClassifierModel;
use lend::dataset::{inject_noise, make_gaussian_clusters, make_symmetric_spec, ClusterParams, Split};
use lend::dilution::{dilute, init_batch, row_argmax};
use lend::experiment::{run_experiment, ExperimentConfig};
use lend::knn_graph::{find_knn, l2_normalize, DEFAULT_GAMMA};
use lend::metrics::summarize_history;
use lend::trainer::{run, RunOutcome};
use lend::{LabeledDataset, Method, SimilarityGraph, TrainConfig};
use nalgebra::SymmetricEigen;
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Input width of the end-to-end synthetic task.
const DESK_DIM: usize = 128;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
}

fn report(id: u32, name: &'static str, pass: bool, detail: String) -> Verdict {
    println!("{} criterion {id:>2} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
    Verdict { id, name, pass }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn knn_oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = common::rng(11);
    let mut mismatches = 0;
    let mut ties_seen = 0usize;
    for b in 0..100 {
        let n = rng.random_range(2..=512);
        let d = rng.random_range(1..=128);
        let k = rng.random_range(1..=16);
        let x = if b % 3 == 0 { common::tie_heavy_matrix(&mut rng, n, d.min(4)) } else { common::random_matrix(&mut rng, n, d) };
        let got = find_knn(x.view(), k).unwrap();
        let want = common::knn_oracle(x.view(), k);
        for (i, expected) in want.iter().enumerate() {
            let list = got.neighbors(i);
            ties_seen += expected.windows(2).filter(|w| w[0].1 == w[1].1).count();
            let same = list.len() == expected.len()
                && list.iter().zip(expected).all(|(nb, &(j, s))| nb.index == j && nb.similarity.to_bits() == s.to_bits());
            if !same {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "kNN oracle",
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("100 batches, {mismatches} mismatched rows, {ties_seen} exact ties exercised, {:.2}s (limit 10s)", secs(elapsed)),
    )
}

fn dilution_oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = common::rng(12);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=64);
        let c = rng.random_range(1..=10);
        let d = rng.random_range(2..=16);
        let k = rng.random_range(1..n.min(10));
        let x = common::random_matrix(&mut rng, n, d);
        let graph = SimilarityGraph::build(&(0..n).collect::<Vec<_>>(), x.view(), k, DEFAULT_GAMMA).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let z0 = init_batch(&labels, c).unwrap();
        let alpha = rng.random_range(0.0..0.999);
        let t = rng.random_range(1..=12);
        let got = dilute(z0.view(), graph.normalized(), alpha, t, 0.0).unwrap();
        let want = common::dilution_oracle(z0.view(), graph.normalized(), alpha, t);
        worst = worst.max(common::max_abs_diff(&want, got.labels.view()));
    }
    let elapsed = start.elapsed();
    report(
        2,
        "dilution oracle",
        worst <= 1e-10 && elapsed < Duration::from_secs(5),
        format!("50 instances, max-abs error {worst:.3e} (limit 1e-10), {:.2}s (limit 5s)", secs(elapsed)),
    )
}

fn graph_spectra() -> Verdict {
    let mut rng = common::rng(13);
    let (mut asym, mut min_entry, mut lambda_max, mut gram_min_eig) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..50 {
        let n = rng.random_range(2..=64);
        let d = rng.random_range(2..=32);
        let k = rng.random_range(1..n.min(12));
        let x = l2_normalize(common::random_matrix(&mut rng, n, d).view());
        let graph = SimilarityGraph::build(&(0..n).collect::<Vec<_>>(), x.view(), k, DEFAULT_GAMMA).unwrap();
        let w = graph.normalized();
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((w[[i, j]] - w[[j, i]]).abs());
                min_entry = min_entry.min(w[[i, j]]);
            }
        }
        let eig = SymmetricEigen::new(common::to_na(w));
        lambda_max = lambda_max.max(eig.eigenvalues.max());
        let gram_eig = SymmetricEigen::new(common::to_na(graph.gram()));
        gram_min_eig = gram_min_eig.min(gram_eig.eigenvalues.min());
    }
    report(
        3,
        "graph spectra",
        asym <= 1e-10 && min_entry >= 0.0 && lambda_max <= 1.0 + 1e-8,
        format!(
            "50 graphs, asymmetry {asym:.3e} (limit 1e-10), min entry {min_entry:.3e}, largest eigenvalue {lambda_max:.12} (limit 1+1e-8), smallest W' eigenvalue {gram_min_eig:.3e}"
        ),
    )
}

fn gradient_check() -> Verdict {
    let mut rng = common::rng(14);
    let mut worst: f64 = 0.0;
    for b in 0..20 {
        let n = rng.random_range(1..=12);
        let model = ClassifierModel::new(6, 8, 4, 100 + b);
        let x = common::random_matrix(&mut rng, n, 6).mapv(|v| 2.0 * v);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let selected: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        worst = worst.max(common::gradient_check(&model, x.view(), &labels, &selected, 1e-5));
    }
    report(4, "gradient check", worst <= 1e-4, format!("20 batches, worst relative error {worst:.3e} (limit 1e-4)"))
}

fn noise_statistics() -> Verdict {
    let (c, n, rate) = (5usize, 10_000usize, 0.4);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let ds = LabeledDataset::from_clean(Array2::zeros((n, 1)), labels, c, Split::Train).unwrap();
    let spec = make_symmetric_spec(c, rate, 2024).unwrap();
    let noisy = inject_noise(&ds, &spec).unwrap();
    let mut counts = vec![vec![0usize; c]; c];
    for (&clean, &obs) in noisy.clean_labels().iter().zip(noisy.noisy_labels()) {
        counts[clean][obs] += 1;
    }
    let critical = ChiSquared::new((c - 1) as f64).unwrap().inverse_cdf(1.0 - 0.001);
    let mut stats = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        let expected = |j: usize| total as f64 * if i == j { 1.0 - rate } else { rate / (c - 1) as f64 };
        let chi2: f64 = row.iter().enumerate().map(|(j, &o)| (o as f64 - expected(j)).powi(2) / expected(j)).sum();
        stats.push(chi2);
    }
    let worst = stats.iter().copied().fold(0.0, f64::max);
    report(
        5,
        "noise statistics",
        worst < critical,
        format!("per-class chi-square {:?} vs critical {critical:.2} (df 4, alpha 0.001)", stats.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>()),
    )
}

fn dilution_beats_noise() -> Verdict {
    let start = Instant::now();
    let mut diluted = Vec::new();
    let mut raw = Vec::new();
    for seed in SEEDS {
        let params = ClusterParams { num_classes: 4, per_class: 500, dim: DESK_DIM, separation: 10.0, spread: 1.0, seed };
        let clean = make_gaussian_clusters(&params, Split::Train).unwrap();
        let ds = inject_noise(&clean, &make_symmetric_spec(4, 0.4, seed + 1).unwrap()).unwrap();
        let graph = SimilarityGraph::build(ds.ids(), ds.features(), 8, DEFAULT_GAMMA).unwrap();
        let z0 = init_batch(ds.noisy_labels(), 4).unwrap();
        let z = dilute(z0.view(), graph.normalized(), 0.99, 10, 0.0).unwrap().labels;
        let hits = (0..ds.len()).filter(|&i| row_argmax(z.row(i)) == Some(ds.clean_labels()[i])).count();
        diluted.push(hits as f64 / ds.len() as f64);
        raw.push(1.0 - ds.noise_fraction());
    }
    let elapsed = start.elapsed();
    let min = diluted.iter().copied().fold(1.0, f64::min);
    let mean = diluted.iter().sum::<f64>() / diluted.len() as f64;
    report(
        6,
        "dilution beats raw noise",
        min >= 0.85 && elapsed < Duration::from_secs(60),
        format!(
            "diluted accuracy per seed {diluted:.4?} (mean {mean:.4}, target 0.90, pass floor 0.85) vs noisy-label accuracy {raw:.4?}, {:.1}s (limit 60s)",
            secs(elapsed)
        ),
    )
}

struct SeedRuns {
    lend: RunOutcome,
    standard: RunOutcome,
}

fn paired_runs() -> (Vec<SeedRuns>, Duration) {
    let start = Instant::now();
    let runs = SEEDS
        .par_iter()
        .map(|&seed| {
            let (train, test) = common::desk_data(seed, DESK_DIM, 0.4);
            SeedRuns {
                lend: run(&train, &test, &common::desk_config(Method::Lend, seed)).unwrap(),
                standard: run(&train, &test, &common::desk_config(Method::Standard, seed)).unwrap(),
            }
        })
        .collect();
    (runs, start.elapsed())
}

fn last10(outcome: &RunOutcome) -> f64 {
    summarize_history(&outcome.history).unwrap().last
}

fn lend_vs_standard(runs: &[SeedRuns], elapsed: Duration) -> Verdict {
    let gaps: Vec<f64> = runs.iter().map(|r| 100.0 * (last10(&r.lend) - last10(&r.standard))).collect();
    let detail = runs
        .iter()
        .zip(&SEEDS)
        .map(|(r, s)| format!("seed {s}: lend {:.2}% standard {:.2}%", 100.0 * last10(&r.lend), 100.0 * last10(&r.standard)))
        .collect::<Vec<_>>()
        .join("; ");
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    report(
        7,
        "LEND vs Standard",
        min_gap >= 5.0 && elapsed < Duration::from_secs(600),
        format!("last-10 means {detail}; smallest gap {min_gap:.2} points (limit 5), {:.0}s for 10 runs (limit 600s)", secs(elapsed)),
    )
}

fn diluted_over_predicted(runs: &[SeedRuns], warmup: usize) -> Verdict {
    let fractions: Vec<f64> = runs
        .iter()
        .map(|r| {
            let post: Vec<_> = r.lend.history.iter().filter(|m| m.epoch >= warmup).collect();
            let ok = post.iter().filter(|m| m.diluted_label_accuracy >= m.predicted_label_accuracy).count();
            ok as f64 / post.len() as f64
        })
        .collect();
    let min = fractions.iter().copied().fold(1.0, f64::min);
    report(
        8,
        "diluted vs predicted",
        min >= 0.80,
        format!("share of post-warmup epochs with diluted >= predicted, per seed {fractions:.3?} (limit 0.80)"),
    )
}

fn memorization_signature(runs: &[SeedRuns]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (r, s) in runs.iter().zip(&SEEDS) {
        let summary = summarize_history(&r.standard.history).unwrap();
        let final_acc = r.standard.history.last().unwrap().test_accuracy;
        let drop = 100.0 * (summary.best - final_acc);
        ok &= summary.best_epoch < summary.epochs / 2 && drop >= 3.0;
        parts.push(format!("seed {s}: max {:.2}% at epoch {}, final {:.2}% (drop {drop:.2})", 100.0 * summary.best, summary.best_epoch, 100.0 * final_acc));
    }
    report(9, "memorization signature", ok, format!("{}; needs max in first half and drop >= 3 points", parts.join("; ")))
}

fn determinism() -> Verdict {
    let cfg_text = "\
classes = 3
per_class = 80
test_per_class = 40
dim = 12
separation = 8
noise = symmetric
noise_rate = 0.4
epochs = 6
batch_size = 64
k = 6
warmup_epochs = 2
hidden_dim = 16
seed = 5
store_snapshots = true
";
    let cfg = ExperimentConfig::parse(cfg_text, None).unwrap();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let thread_counts = [1usize, 4, 2];
    for (dir, &threads) in dirs.iter().zip(&thread_counts) {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(&cfg, dir.path())).unwrap();
    }
    let mut files: Vec<_> = walk(dirs[0].path());
    files.sort();
    let mut differing = Vec::new();
    for rel in &files {
        let reference = fs::read(dirs[0].path().join(rel)).unwrap();
        for dir in &dirs[1..] {
            if fs::read(dir.path().join(rel)).ok().as_deref() != Some(&reference[..]) {
                differing.push(rel.display().to_string());
            }
        }
    }
    let csvs = files.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")).count();
    report(
        10,
        "determinism",
        differing.is_empty() && csvs >= 2,
        format!("3 reruns (1, 4, 2 threads), {} artifacts including {csvs} CSVs compared byte for byte, differing: {differing:?}", files.len()),
    )
}

fn walk(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}

fn sensitivity(runs: &[SeedRuns]) -> Verdict {
    let variant = |tweak: fn(TrainConfig) -> TrainConfig| -> Vec<f64> {
        SEEDS
            .par_iter()
            .map(|&seed| {
                let (train, test) = common::desk_data(seed, DESK_DIM, 0.4);
                last10(&run(&train, &test, &tweak(common::desk_config(Method::Lend, seed))).unwrap())
            })
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let k8: Vec<f64> = runs.iter().map(|r| last10(&r.lend)).collect();
    let k4 = variant(|c| TrainConfig { k: 4, ..c });
    let k2 = variant(|c| TrainConfig { k: 2, ..c });
    let b32 = variant(|c| TrainConfig { batch_size: 32, ..c });
    let (m8, m4, m2, m32) = (mean(&k8), mean(&k4), mean(&k2), mean(&b32));
    report(
        11,
        "sensitivity trends",
        m8 >= m2 && m8 >= m32,
        format!(
            "mean last-10 accuracy over 5 seeds: k=2 {:.2}%, k=4 {:.2}%, k=8 {:.2}%; batch 32 {:.2}%, batch 256 {:.2}%",
            100.0 * m2,
            100.0 * m4,
            100.0 * m8,
            100.0 * m32,
            100.0 * m8
        ),
    )
}

fn main() -> ExitCode {
    let mut verdicts = vec![
        knn_oracle_equivalence(),
        dilution_oracle_equivalence(),
        graph_spectra(),
        gradient_check(),
        noise_statistics(),
        dilution_beats_noise(),
    ];
    let (runs, elapsed) = paired_runs();
    verdicts.push(lend_vs_standard(&runs, elapsed));
    verdicts.push(diluted_over_predicted(&runs, TrainConfig::default().warmup_epochs));
    verdicts.push(memorization_signature(&runs));
    verdicts.push(determinism());
    verdicts.push(sensitivity(&runs));

    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).map(|v| format!("{} ({})", v.id, v.name)).collect();
    println!("acceptance: {}/{} criteria passed", verdicts.len() - failed.len(), verdicts.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
