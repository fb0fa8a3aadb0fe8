//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use netvol::corrnet::{normalized_adjacency, MarketGraph};
use netvol::gae::{bce_loss, pair_auroc, split_edges, train, GaeHyper, GaeModel, GraphInput, LabelledPair};
use netvol::ingest::log_returns;
use netvol::linalg::lstsq;
use netvol::metrics::{auroc, pearson, r_squared, spearman, ScoredLabels};
use netvol::pipeline::{self, PipelineConfig, RegimeMeans};
use netvol::synthgen::{erdos_renyi, generate, planted_partition};
use netvol::Scenario;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Bootstrap p-value and next-session Spearman for one planted-signal run.
fn signal_run(coupling: f64, seed: u64) -> (f64, Option<f64>) {
    let market = generate(&Scenario::signal(coupling, seed)).expect("scenario generates");
    let returns = log_returns(&market.panel, false).expect("returns");
    let cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    let out = pipeline::run(&returns, &cfg).expect("pipeline runs");
    (out.comparisons[0].bootstrap.p_value, out.pairs().spearman())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn planted_signal(coupled: &[(f64, Option<f64>)], null: &[(f64, Option<f64>)], elapsed: Duration) -> Outcome {
    let p = median(coupled.iter().map(|r| r.0).collect());
    let rejections = null.iter().filter(|r| r.0 < 0.05).count();
    let rate = rejections as f64 / null.len() as f64;
    let minutes = elapsed.as_secs_f64() / 60.0;
    outcome(
        p < 0.05 && rate <= 0.15 && minutes <= 30.0,
        format!(
            "coupled median p {p:.4} (< 0.05), null rejection rate {rate:.2} (<= 0.15), runtime {minutes:.1} min (<= 30)"
        ),
    )
}

fn inverse_relation(coupled: &[(f64, Option<f64>)]) -> Outcome {
    let rhos: Vec<f64> = coupled.iter().map(|r| r.1.unwrap_or(f64::NAN)).collect();
    let hits = rhos.iter().filter(|r| **r < -0.2).count();
    outcome(
        hits >= 16,
        format!("{hits}/{} seeds with Spearman < -0.2 (need 16), median {:.3}", rhos.len(), median(rhos.clone())),
    )
}

fn all_pairs(g: &MarketGraph) -> Vec<LabelledPair> {
    let n = g.n_nodes();
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            out.push(LabelledPair { u, v, label: g.has_edge(u, v) });
        }
    }
    out
}

fn gradient_check() -> Outcome {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let g = erdos_renyi(10, 0.4, 4, seed).expect("graph");
        let model = GaeModel::new(4, GaeHyper { hidden_dim: 8, latent_dim: 4, seed, ..GaeHyper::default() });
        let input = GraphInput::from_graph(&g);
        let batch = all_pairs(&g);
        let loss = |m: &GaeModel| GaeModel::batch_loss(&m.forward(&input).expect("forward"), &batch);
        let grads = model.backward(&input, &model.forward(&input).expect("forward"), &batch);
        for (layer, analytic) in [&grads.w0, &grads.w1].into_iter().enumerate() {
            for ((i, j), a) in analytic.indexed_iter() {
                let (mut plus, mut minus) = (model.clone(), model.clone());
                let (wp, wm) = if layer == 0 { (&mut plus.w0, &mut minus.w0) } else { (&mut plus.w1, &mut minus.w1) };
                wp[[i, j]] += h;
                wm[[i, j]] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
    }
    outcome(worst < 1e-4, format!("worst relative error {worst:.2e} over 10 seeds (< 1e-4)"))
}

fn auroc_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        // few distinct levels so ties are common
        let levels = rng.random_range(1..=10);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 4.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        let fast = auroc(&ScoredLabels::new(scores, labels).expect("valid")).expect("both classes");
        if fast != wins / pairs {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 100 tied instances differ from brute force"))
}

fn planted_structure() -> Outcome {
    let cliques: Vec<f64> = (0..10)
        .into_par_iter()
        .map(|seed| {
            let g = planted_partition(2, 10, 1.0, 0.0, 4, 0.1, seed).expect("graph");
            let hyper = GaeHyper { seed, ..GaeHyper::default() };
            let split = split_edges(&g, hyper.split, seed).expect("split");
            train(&g, &split, &hyper).expect("train").1.best_val_auroc
        })
        .collect();
    let random: Vec<f64> = (0..10)
        .into_par_iter()
        .map(|seed| {
            let g = erdos_renyi(300, 0.05, 16, seed).expect("graph");
            let hyper = GaeHyper { seed, ..GaeHyper::default() };
            let split = split_edges(&g, hyper.split, seed).expect("split");
            let (model, _) = train(&g, &split, &hyper).expect("train");
            let z = model.encode_input(&GraphInput::with_edges(&g, &split.train_pos)).expect("encode").z;
            pair_auroc(&z, &split.test_pos, &split.test_neg).expect("both classes")
        })
        .collect();
    let lo = cliques.iter().copied().fold(f64::INFINITY, f64::min);
    let far = random.iter().map(|a| (a - 0.5).abs()).fold(0.0, f64::max);
    outcome(
        lo >= 0.95 && far <= 0.1,
        format!("two-clique min validation AUROC {lo:.3} (>= 0.95), random-graph max |AUROC - 0.5| {far:.3} (<= 0.1)"),
    )
}

fn regime_gap() -> Outcome {
    let gaps: Vec<f64> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let scenario = Scenario { seed, ..Scenario::default() };
            let market = generate(&scenario).expect("scenario generates");
            let returns = log_returns(&market.panel, false).expect("returns");
            let cfg = PipelineConfig { seed, ..PipelineConfig::default() };
            let (_, series) = pipeline::indicator_run(&returns, &cfg).expect("indicator");
            RegimeMeans::new(&series, &scenario.dates(), &scenario.regimes())
                .gap()
                .unwrap_or(f64::NAN)
        })
        .collect();
    let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        gaps.iter().all(|g| *g >= 0.1),
        format!("smallest stable-minus-shifted gap {lo:.3} over 10 seeds (>= 0.1)"),
    )
}

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on the normal equations.
fn naive_lstsq(x: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
    let p = x.ncols();
    let mut m = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            m[i][j] = (0..x.nrows()).map(|r| x[[r, i]] * x[[r, j]]).sum();
        }
        m[i][p] = (0..x.nrows()).map(|r| x[[r, i]] * y[r]).sum();
    }
    for c in 0..p {
        let pivot = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, pivot);
        for r in c + 1..p {
            let f = m[r][c] / m[c][c];
            let pivot_row = m[c].clone();
            for (a, b) in m[r][c..].iter_mut().zip(&pivot_row[c..]) {
                *a -= f * b;
            }
        }
    }
    let mut beta = vec![0.0; p];
    for c in (0..p).rev() {
        let s: f64 = (c + 1..p).map(|k| m[c][k] * beta[k]).sum();
        beta[c] = (m[c][p] - s) / m[c][c];
    }
    beta
}

fn naive_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = [0.0f64; 6];
    for _ in 0..50 {
        let n = rng.random_range(5..300);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect();
        // coarse copies so the rank correlation sees ties
        let xq: Vec<f64> = x.iter().map(|v| v.round()).collect();
        let yq: Vec<f64> = y.iter().map(|v| (v * 2.0).round()).collect();

        worst[0] = worst[0].max((pearson(&x, &y).unwrap() - naive_pearson(&x, &y)).abs());
        let rho = naive_pearson(&naive_ranks(&xq), &naive_ranks(&yq));
        worst[1] = worst[1].max((spearman(&xq, &yq).unwrap() - rho).abs());

        let my = x.iter().sum::<f64>() / n as f64;
        let ss_res: f64 = x.iter().zip(&y).map(|(a, p)| (a - p) * (a - p)).sum();
        let ss_tot: f64 = x.iter().map(|a| (a - my) * (a - my)).sum();
        worst[2] = worst[2].max((r_squared(&x, &y).unwrap() - (1.0 - ss_res / ss_tot)).abs());

        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let naive_bce = -labels
            .iter()
            .zip(&probs)
            .map(|(&l, &p)| if l { p.ln() } else { (1.0 - p).ln() })
            .sum::<f64>()
            / n as f64;
        worst[3] = worst[3].max((bce_loss(&labels, &probs) - naive_bce).abs());

        let k = rng.random_range(2..40);
        let mut adj = Array2::from_elem((k, k), false);
        for u in 0..k {
            for v in u + 1..k {
                let e = rng.random_bool(0.3);
                adj[[u, v]] = e;
                adj[[v, u]] = e;
            }
        }
        let fast = normalized_adjacency(&adj).to_dense();
        for u in 0..k {
            for v in 0..k {
                let du = 1.0 + (0..k).filter(|&w| adj[[u, w]]).count() as f64;
                let dv = 1.0 + (0..k).filter(|&w| adj[[v, w]]).count() as f64;
                let a = if u == v || adj[[u, v]] { 1.0 } else { 0.0 };
                worst[4] = worst[4].max((fast[[u, v]] - a / (du * dv).sqrt()).abs());
            }
        }

        let p = rng.random_range(1..6);
        let rows = p + rng.random_range(5..200);
        let design = Array2::from_shape_simple_fn((rows, p), || rng.random_range(-2.0..2.0));
        let target = Array1::from_shape_simple_fn(rows, || rng.random_range(-2.0..2.0));
        let beta = lstsq(design.view(), &target, 0.0).expect("full rank").coef;
        for (a, b) in beta.iter().zip(naive_lstsq(&design, &target)) {
            worst[5] = worst[5].max((a - b).abs());
        }
    }
    let names = ["pearson", "spearman", "r2", "bce", "norm-adjacency"];
    let mut pass = worst[5] < 1e-8;
    let mut parts = Vec::new();
    for (name, w) in names.iter().zip(&worst) {
        pass &= *w < 1e-12;
        parts.push(format!("{name} {w:.1e}"));
    }
    outcome(
        pass,
        format!("max abs deviation {} (< 1e-12), lstsq {:.1e} (< 1e-8)", parts.join(", "), worst[5]),
    )
}

fn netvol(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_netvol"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .status()
        .expect("binary runs")
        .success()
}

fn reproducible_cli() -> Outcome {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cli");
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root).unwrap();
    fs::write(root.join("scenario.conf"), Scenario::default().to_kv()).unwrap();
    if !netvol(&root, &["synth", "--config", "scenario.conf", "--out", "data"]) {
        return outcome(false, "synth failed".into());
    }
    let conf = "input = ../data/prices.csv\ntruth = ../data/truth.csv\nworkspace = ws\n";
    let mut summaries = Vec::new();
    for run in ["a", "b"] {
        let dir = root.join(run);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("run.conf"), conf).unwrap();
        if !netvol(&dir, &["report", "--config", "run.conf", "--seed", "7"]) {
            return outcome(false, format!("run {run} failed"));
        }
        summaries.push(fs::read(dir.join("ws/report/summary.json")).unwrap());
    }
    let same = summaries[0] == summaries[1];
    outcome(same, format!("summary.json byte-identical across two --seed 7 runs: {same}"))
}

fn main() {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let signal_start = Instant::now();
    let coupled: Vec<_> = seeds.par_iter().map(|&s| signal_run(1.0, s)).collect();
    let null: Vec<_> = seeds.par_iter().map(|&s| signal_run(0.0, s)).collect();
    let signal_time = signal_start.elapsed();

    let results = [
        ("1 planted-signal forecast gain", planted_signal(&coupled, &null, signal_time)),
        ("2 inverse AUROC / next-session volatility", inverse_relation(&coupled)),
        ("3 analytic vs finite-difference gradients", gradient_check()),
        ("4 AUROC vs brute force with ties", auroc_brute_force()),
        ("5 planted structure vs random graph", planted_structure()),
        ("6 stable vs shifted regime gap", regime_gap()),
        ("7 metrics vs naive implementations", naive_oracles()),
        ("8 reproducible CLI summary", reproducible_cli()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        println!("{} criterion {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed in {:.1?}", results.len() - failed, started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
