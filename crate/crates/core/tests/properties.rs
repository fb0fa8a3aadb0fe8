use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use ndarray::Array2;
use netvol::corrnet::{
    normalized_adjacency, pearson_rows, rolling_correlation, threshold_graph, CorrFrequency, FeatureSpec,
    MarketGraph,
};
use netvol::ingest::{log_returns, realized_volatility, Horizon, IndexWeighting, PricePanel, ReturnMatrix};
use netvol::metrics::{auroc, mid_ranks, pearson, spearman, ScoredLabels};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

/// `sessions` sessions of `bars` one-minute stamps starting 09:31.
fn stamps(sessions: usize, bars: usize) -> Vec<NaiveDateTime> {
    let first = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
    (0..sessions)
        .flat_map(|d| {
            let open = (first + TimeDelta::days(d as i64)).and_hms_opt(9, 30, 0).unwrap();
            (1..=bars).map(move |b| open + TimeDelta::minutes(b as i64))
        })
        .collect()
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("T{i:02}")).collect()
}

fn returns_from(x: Array2<f64>, sessions: usize) -> ReturnMatrix {
    let bars = x.ncols() / sessions;
    ReturnMatrix::new(names(x.nrows()), stamps(sessions, bars), x, TimeDelta::minutes(1)).unwrap()
}

/// Two sector blocks plus noise, so thresholds produce real graphs.
fn block_returns(n: usize, sessions: usize, bars: usize, seed: u64) -> ReturnMatrix {
    let f = normal_matrix(2, sessions * bars, seed);
    let e = normal_matrix(n, sessions * bars, seed + 1);
    let x = Array2::from_shape_fn((n, sessions * bars), |(i, t)| 1e-3 * (f[[i % 2, t]] + 0.8 * e[[i, t]]));
    returns_from(x, sessions)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_a_price_column_keeps_its_returns(scale in 1e-3f64..1e3, ticker in 0usize..3, seed in 0u64..500) {
        let steps = normal_matrix(3, 40, seed);
        let prices = Array2::from_shape_fn((3, 40), |(i, t)| {
            100.0 * (1e-3 * steps.row(i).iter().take(t + 1).sum::<f64>()).exp()
        });
        let mut scaled = prices.clone();
        scaled.row_mut(ticker).mapv_inplace(|p| p * scale);
        let panel = |p| PricePanel::new(names(3), stamps(2, 20), p, TimeDelta::minutes(1)).unwrap();
        let a = log_returns(&panel(prices), false).unwrap();
        let b = log_returns(&panel(scaled), false).unwrap();
        for (x, y) in a.returns().iter().zip(b.returns()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn rv_ignores_bar_order_within_a_window(seed in 0u64..500, perm in Just((0..30).collect::<Vec<usize>>()).prop_shuffle()) {
        let x = normal_matrix(4, 60, seed) * 1e-3;
        let mut shuffled = x.clone();
        for (to, &from) in perm.iter().enumerate() {
            shuffled.column_mut(to).assign(&x.column(from));
        }
        let a = realized_volatility(&returns_from(x, 2), Horizon::Session, &IndexWeighting::Equal).unwrap();
        let b = realized_volatility(&returns_from(shuffled, 2), Horizon::Session, &IndexWeighting::Equal).unwrap();
        for (p, q) in a.rv.iter().zip(&b.rv) {
            prop_assert!(close(*p, *q, 1e-12));
        }
    }

    #[test]
    fn adjacent_windows_add_up(seed in 0u64..500, k in 1usize..8) {
        let x = normal_matrix(5, 3 * 4 * k, seed) * 1e-3;
        let r = returns_from(x, 3);
        let fine = realized_volatility(&r, Horizon::Bars(k), &IndexWeighting::Equal).unwrap();
        let coarse = realized_volatility(&r, Horizon::Bars(2 * k), &IndexWeighting::Equal).unwrap();
        prop_assert_eq!(fine.len(), 2 * coarse.len());
        for (i, rv) in coarse.rv.iter().enumerate() {
            prop_assert!(close(*rv, fine.rv[2 * i] + fine.rv[2 * i + 1], 1e-12));
            prop_assert_eq!(coarse.timestamps[i], fine.timestamps[2 * i + 1]);
        }
    }

    #[test]
    fn cumulated_returns_rebuild_prices(seed in 0u64..500, p0 in 1.0f64..500.0) {
        let steps = normal_matrix(2, 50, seed);
        let prices = Array2::from_shape_fn((2, 50), |(i, t)| {
            p0 * (i + 1) as f64 * (2e-3 * steps.row(i).iter().take(t + 1).sum::<f64>()).exp()
        });
        let panel = PricePanel::new(names(2), stamps(2, 25), prices.clone(), TimeDelta::minutes(1)).unwrap();
        let r = log_returns(&panel, true).unwrap();
        for i in 0..2 {
            let mut p = prices[[i, 0]];
            for t in 0..r.n_bars() {
                p *= r.returns()[[i, t]].exp();
                prop_assert!(close(p, prices[[i, t + 1]], 1e-12));
            }
        }
    }

    #[test]
    fn pearson_matches_two_pass_oracle(n in 2usize..50, t in 3usize..1000, seed in 0u64..500) {
        let x = normal_matrix(n, t, seed);
        let (corr, zero) = pearson_rows(x.view());
        prop_assert!(zero.is_empty());
        let mean: Vec<f64> = x.rows().into_iter().map(|r| r.sum() / t as f64).collect();
        for i in 0..n {
            prop_assert_eq!(corr[[i, i]], 1.0);
            for j in 0..n {
                let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
                for k in 0..t {
                    let a = x[[i, k]] - mean[i];
                    let b = x[[j, k]] - mean[j];
                    sxy += a * b;
                    sxx += a * a;
                    syy += b * b;
                }
                let naive = sxy / (sxx * syy).sqrt();
                prop_assert!((corr[[i, j]] - naive).abs() <= 1e-12);
                prop_assert_eq!(corr[[i, j]], corr[[j, i]]);
            }
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_edges(seed in 0u64..200, lo in 0.05f64..0.9, gap in 0.0f64..0.5) {
        let hi = (lo + gap).min(0.99);
        let r = block_returns(12, 6, 20, seed);
        let end = r.sessions().last().unwrap().0;
        let corr = rolling_correlation(&r, 5, end, CorrFrequency::Bar).unwrap();
        let loose = threshold_graph(&corr, lo, FeatureSpec::DailyReturns, &r).unwrap();
        let tight = threshold_graph(&corr, hi, FeatureSpec::DailyReturns, &r).unwrap();
        for &(u, v) in tight.edges() {
            prop_assert!(loose.has_edge(u, v));
        }
    }

    #[test]
    fn relabelling_tickers_permutes_the_graph(seed in 0u64..200, perm in Just((0..10).collect::<Vec<usize>>()).prop_shuffle()) {
        let r = block_returns(10, 6, 20, seed);
        let mut moved = Array2::zeros(r.returns().dim());
        let mut tickers = vec![String::new(); 10];
        for (u, &pu) in perm.iter().enumerate() {
            moved.row_mut(pu).assign(&r.returns().row(u));
            tickers[pu] = r.tickers()[u].clone();
        }
        let rp = ReturnMatrix::new(tickers, r.timestamps().to_vec(), moved, r.bar_interval()).unwrap();
        let end = r.sessions().last().unwrap().0;
        let build = |r: &ReturnMatrix| {
            let corr = rolling_correlation(r, 5, end, CorrFrequency::Bar).unwrap();
            threshold_graph(&corr, 0.3, FeatureSpec::DailyReturns, r).unwrap()
        };
        let (g, gp) = (build(&r), build(&rp));
        let (a, ap) = (g.norm_adjacency().to_dense(), gp.norm_adjacency().to_dense());
        for u in 0..10 {
            prop_assert_eq!(g.tickers()[u].clone(), gp.tickers()[perm[u]].clone());
            for f in 0..g.features().ncols() {
                prop_assert!((g.features()[[u, f]] - gp.features()[[perm[u], f]]).abs() <= 1e-12);
            }
            for v in 0..10 {
                prop_assert_eq!(g.has_edge(u, v), gp.has_edge(perm[u], perm[v]));
                prop_assert!((a[[u, v]] - ap[[perm[u], perm[v]]]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn normalized_adjacency_is_a_symmetric_contraction(n in 1usize..14, p in 0.0f64..1.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj = Array2::from_elem((n, n), false);
        for u in 0..n {
            for v in u + 1..n {
                let e = rng.random::<f64>() < p;
                adj[[u, v]] = e;
                adj[[v, u]] = e;
            }
        }
        let a = normalized_adjacency(&adj).to_dense();
        for u in 0..n {
            prop_assert!(a.row(u).iter().any(|&x| x != 0.0));
            for v in 0..n {
                prop_assert_eq!(a[[u, v]], a[[v, u]]);
            }
        }
        let eig = jacobi_eigenvalues(&a);
        let dense_radius = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        prop_assert!(dense_radius <= 1.0 + 1e-12);
        prop_assert!((eig.iter().cloned().fold(f64::MIN, f64::max) - 1.0).abs() <= 1e-10);
        let iterated = power_iteration(&a);
        prop_assert!(iterated <= 1.0 + 1e-9);
        prop_assert!((iterated - dense_radius).abs() <= 1e-6);
    }

    #[test]
    fn auroc_ignores_increasing_transforms(raw in prop::collection::vec((0i32..15, any::<bool>()), 2..120)) {
        let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (s / 3.0).exp() + s.powi(3)).collect();
        let a = auroc(&ScoredLabels::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let b = auroc(&ScoredLabels::new(warped, labels.clone()).unwrap()).unwrap();
        prop_assert_eq!(a, b);
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let c = auroc(&ScoredLabels::new(scores, flipped).unwrap()).unwrap();
        prop_assert!((a + c - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn spearman_is_pearson_on_mid_ranks(pairs in prop::collection::vec((-20i32..20, -20i32..20), 3..80)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let s = spearman(&x, &y);
        prop_assume!(s.is_some());
        let s = s.unwrap();
        let on_ranks = pearson(&mid_ranks(&x), &mid_ranks(&y)).unwrap();
        prop_assert!((s - on_ranks).abs() <= 1e-12);
        let ranked = spearman(&mid_ranks(&x), &mid_ranks(&y)).unwrap();
        prop_assert!((s - ranked).abs() <= 1e-12);
        let fx: Vec<f64> = x.iter().map(|v| v.powi(3) + 5.0).collect();
        let gy: Vec<f64> = y.iter().map(|v| (v / 4.0).exp()).collect();
        prop_assert!((spearman(&fx, &gy).unwrap() - s).abs() <= 1e-12);
    }
}

/// Cyclic Jacobi rotations; returns the eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

/// Spectral radius of a symmetric matrix from iterating its square.
fn power_iteration(a: &Array2<f64>) -> f64 {
    let a2 = a.dot(a);
    let n = a.nrows();
    let mut v = ndarray::Array1::from_shape_fn(n, |i| 1.0 + 0.1 * i as f64);
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w = a2.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.dot(&v).sqrt();
        v = w / norm;
    }
    lambda.sqrt()
}

#[test]
fn graphs_from_the_same_window_match_direct_construction() {
    let r = block_returns(8, 4, 15, 3);
    let end = r.sessions().last().unwrap().0;
    let corr = rolling_correlation(&r, 4, end, CorrFrequency::Bar).unwrap();
    let g = threshold_graph(&corr, 0.4, FeatureSpec::DailyReturns, &r).unwrap();
    let rebuilt = MarketGraph::from_edges(8, g.edges(), g.features().clone()).unwrap();
    assert_eq!(g.norm_adjacency().to_dense(), rebuilt.norm_adjacency().to_dense());
    assert_eq!(g.n_edges() * 2, g.adjacency().iter().filter(|&&a| a).count());
}
