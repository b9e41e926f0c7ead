//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use embench::data::{apply_prefix, PairRole, PrefixKind, TaskDataset, TrainingPair};
use embench::embed::stub::{StubConfig, StubServer};
use embench::embed::{
    init_params, tokenize, Embedder, EmbeddingMatrix, Pooling, RemoteConfig, RemoteEmbedder, ToyEmbedder, ToyParams,
    DEFAULT_DIM, DEFAULT_VOCAB,
};
use embench::eval::{eval_retrieval, run_benchmark, ProtocolConfig, SuiteTask};
use embench::filter::co2_estimate;
use embench::merge::slerp;
use embench::metrics::{
    average_precision, best_threshold_metrics, cosine_topk, map_at_k, ndcg_at_k, spearman, v_measure, Gain, Ranking,
};
use embench::mine::{mine_hard_negatives, MiningConfig};
use embench::report::AggregationMode;
use embench::rng::{rng_from, stream_rng};
use embench::synth::{cluster_training_pairs, synthetic_suite, ClusterCorpus, ClusterSpec};
use embench::train::{batch_loss, batch_loss_and_grad, build_batches, infonce_loss, train, LossVariant, TrainConfig};

type Outcome = Result<String, String>;

/// Trained retrieval nDCG@10 on the 8-cluster corpus, from a seeded replay.
const TRAINED_NDCG: f64 = 0.6235728768666658;
/// Emissions reported for the full training run, in kg.
const REPORTED_CO2_KG: f64 = 3660.0;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

// ---------------------------------------------------------------- oracles

/// 1-based position of item `i` in a ranking by descending score, ties by
/// ascending index, counted directly.
fn rank_of(scores: &[f64], i: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
        .count()
}

fn oracle_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] == 1).collect();
    let ranks: Vec<usize> = pos.iter().map(|&i| rank_of(scores, i)).collect();
    ranks
        .iter()
        .map(|&r| ranks.iter().filter(|&&o| o <= r).count() as f64 / r as f64)
        .sum::<f64>()
        / pos.len() as f64
}

fn oracle_best_accuracy(scores: &[f64], labels: &[u8]) -> f64 {
    let mut cuts = vec![f64::NEG_INFINITY];
    cuts.extend_from_slice(scores);
    cuts.iter()
        .map(|&c| {
            let correct = scores
                .iter()
                .zip(labels)
                .filter(|&(&s, &l)| (s > c) == (l == 1))
                .count();
            correct as f64 / scores.len() as f64
        })
        .fold(0.0, f64::max)
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    let avg_rank = |v: &[f64], i: usize| {
        let below = v.iter().filter(|&&o| o < v[i]).count() as f64;
        let equal = v.iter().filter(|&&o| o == v[i]).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let rx: Vec<f64> = (0..x.len()).map(|i| avg_rank(x, i)).collect();
    let ry: Vec<f64> = (0..y.len()).map(|i| avg_rank(y, i)).collect();
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// V-measure through mutual information.
fn oracle_v_measure(gold: &[usize], pred: &[usize]) -> f64 {
    let n = gold.len() as f64;
    let count = |f: &dyn Fn(usize) -> bool| (0..gold.len()).filter(|&i| f(i)).count() as f64;
    let gs: BTreeSet<usize> = gold.iter().copied().collect();
    let ps: BTreeSet<usize> = pred.iter().copied().collect();
    let h = |set: &BTreeSet<usize>, v: &[usize]| -> f64 {
        set.iter()
            .map(|&a| {
                let p = count(&|i| v[i] == a) / n;
                -p * p.ln()
            })
            .sum()
    };
    let (hg, hp) = (h(&gs, gold), h(&ps, pred));
    let mut mi = 0.0;
    for &g in &gs {
        for &p in &ps {
            let pij = count(&|i| gold[i] == g && pred[i] == p) / n;
            if pij > 0.0 {
                let pi = count(&|i| gold[i] == g) / n;
                let pj = count(&|i| pred[i] == p) / n;
                mi += pij * (pij / (pi * pj)).ln();
            }
        }
    }
    let homogeneity = if hg == 0.0 { 1.0 } else { mi / hg };
    let completeness = if hp == 0.0 { 1.0 } else { mi / hp };
    if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    }
}

fn oracle_ap_at_k(scores: &[f64], relevant: &BTreeSet<usize>, k: usize) -> f64 {
    let ranks: Vec<usize> = relevant
        .iter()
        .map(|&i| rank_of(scores, i))
        .filter(|&r| r <= k)
        .collect();
    ranks
        .iter()
        .map(|&r| ranks.iter().filter(|&&o| o <= r).count() as f64 / r as f64)
        .sum::<f64>()
        / relevant.len().min(k) as f64
}

fn oracle_ndcg(scores: &[f64], grades: &[u32], k: usize) -> f64 {
    let dcg: f64 = (0..scores.len())
        .map(|i| (i, rank_of(scores, i)))
        .filter(|&(_, r)| r <= k)
        .map(|(i, r)| grades[i] as f64 / (1.0 + r as f64).log2())
        .sum();
    let mut ideal = grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &g)| g as f64 / (2.0 + r as f64).log2())
        .sum();
    dcg / idcg
}

// ---------------------------------------------------------------- criteria

fn grid_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // A coarse grid forces ties.
    (0..n).map(|_| rng.random_range(0..12) as f64 / 4.0 - 1.0).collect()
}

fn metric_oracles() -> Outcome {
    const INSTANCES: u64 = 120;
    let tol = 1e-9;
    let mut checked = 0;
    for seed in 0..INSTANCES {
        let mut rng = rng_from(seed);
        let n = rng.random_range(5..=50);
        let scores = grid_scores(&mut rng, n);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 1;
        labels[1] = 0;

        let ap = average_precision(&scores, &labels).map_err(|e| e.to_string())?;
        ensure(rel_close(ap, oracle_ap(&scores, &labels), tol), || {
            format!("AP seed {seed}")
        })?;

        let acc = best_threshold_metrics(&scores, &labels)
            .map_err(|e| e.to_string())?
            .accuracy;
        ensure(rel_close(acc, oracle_best_accuracy(&scores, &labels), tol), || {
            format!("best-threshold accuracy seed {seed}")
        })?;

        let other = grid_scores(&mut rng, n);
        if scores.iter().any(|&s| s != scores[0]) && other.iter().any(|&s| s != other[0]) {
            let rho = spearman(&scores, &other).map_err(|e| e.to_string())?;
            ensure(rel_close(rho, oracle_spearman(&scores, &other), tol), || {
                format!("spearman seed {seed}")
            })?;
        }

        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let v = v_measure(&gold, &pred).map_err(|e| e.to_string())?;
        ensure(rel_close(v, oracle_v_measure(&gold, &pred), tol), || {
            format!("v-measure seed {seed}")
        })?;

        let relevant: BTreeSet<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
        let map = map_at_k(&[Ranking::from_scores(&scores)], &[relevant.clone()], 10).map_err(|e| e.to_string())?;
        ensure(rel_close(map, oracle_ap_at_k(&scores, &relevant, 10), tol), || {
            format!("MAP@10 seed {seed}")
        })?;

        let grades: Vec<u32> = (0..n)
            .map(|i| if i == 0 { 2 } else { rng.random_range(0..3) })
            .collect();
        let qrels: BTreeMap<usize, u32> = grades.iter().copied().enumerate().filter(|&(_, g)| g > 0).collect();
        let ndcg = ndcg_at_k(&Ranking::from_scores(&scores), &qrels, 10, Gain::Linear).map_err(|e| e.to_string())?;
        ensure(rel_close(ndcg, oracle_ndcg(&scores, &grades, 10), tol), || {
            format!("nDCG@10 seed {seed}")
        })?;

        let dim = 4;
        let rows = |rng: &mut ChaCha8Rng, m: usize| -> Vec<Vec<f64>> {
            (0..m)
                .map(|_| (0..dim).map(|_| rng.random_range(-2..=2) as f64 + 0.5).collect())
                .collect()
        };
        let (qr, dr) = (rows(&mut rng, 3), rows(&mut rng, n));
        let qm = EmbeddingMatrix::normalize_rows(qr).map_err(|e| e.to_string())?;
        let dm = EmbeddingMatrix::normalize_rows(dr).map_err(|e| e.to_string())?;
        let k = rng.random_range(1..=n);
        let got = cosine_topk(&qm, &dm, k).map_err(|e| e.to_string())?;
        for (q, ranking) in got.iter().enumerate() {
            let sims: Vec<f64> = (0..n)
                .map(|d| qm.row(q).iter().zip(dm.row(d)).map(|(a, b)| a * b).sum())
                .collect();
            let mut want: Vec<(usize, usize)> = (0..n).map(|d| (rank_of(&sims, d), d)).collect();
            want.sort_unstable();
            let want_ids: Vec<usize> = want.iter().take(k).map(|&(_, d)| d).collect();
            let got_ids: Vec<usize> = ranking.ids().collect();
            ensure(got_ids == want_ids, || format!("cosine_topk seed {seed} query {q}"))?;
            for &(d, s) in ranking.items() {
                ensure(rel_close(s, sims[d], tol), || format!("cosine_topk score seed {seed}"))?;
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} instances x 7 metrics"))
}

fn gradient_case_pairs(seed: u64) -> Vec<TrainingPair> {
    let words = [
        "alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "lam", "mu",
    ];
    let mut rng = stream_rng(seed, 0);
    let text = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(1..=5);
        (0..len)
            .map(|_| words[rng.random_range(0..words.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    (0..8)
        .map(|i| {
            let negs: Vec<String> = (0..2).map(|_| text(&mut rng)).collect();
            let (q, p) = (text(&mut rng), format!("{} doc{i}", text(&mut rng)));
            let role = if i % 2 == 0 {
                PairRole::Retrieval
            } else {
                PairRole::Symmetric
            };
            TrainingPair::new("grad", &q, &p, negs, role).expect("valid pair")
        })
        .collect()
}

fn gradient_suite() -> Outcome {
    let h = 1e-5;
    let tol = 1e-4;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for case in 0..10u64 {
        let pairs = gradient_case_pairs(case);
        let mut params: ToyParams = init_params(case, 40, 5);
        let mut rng = stream_rng(case, 1);
        for x in params.table.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        for pooling in [Pooling::Cls, Pooling::Mean] {
            for (margin, doc_penalty) in [(0.0, 0.0), (0.01, 0.0), (0.0, 1.0), (0.01, 1.0)] {
                let cfg = TrainConfig {
                    batch_size: 3,
                    n_hard: 2,
                    pooling,
                    variant: LossVariant { margin, doc_penalty },
                    ..TrainConfig::default()
                };
                let batch = build_batches(&pairs, cfg.batch_options(), case)
                    .map_err(|e| e.to_string())?
                    .next_batch();
                let (_, grad) = batch_loss_and_grad(&params, &batch, &cfg).map_err(|e| e.to_string())?;
                let (v, d) = (params.vocab_size, params.dim);
                let mut ids = BTreeSet::new();
                for (t, p) in batch.queries.iter().chain(&batch.documents) {
                    ids.extend(tokenize(&apply_prefix(*p, t), v, cfg.max_tokens));
                }
                let mut coords: Vec<usize> = ids.into_iter().flat_map(|id| id * d..(id + 1) * d).collect();
                coords.extend(v * d..params.num_params());
                for i in coords {
                    let mut a = params.clone();
                    a.set_flat(i, params.get_flat(i) + h);
                    let mut b = params.clone();
                    b.set_flat(i, params.get_flat(i) - h);
                    let fa = batch_loss(&a, &batch, &cfg).map_err(|e| e.to_string())?;
                    let fb = batch_loss(&b, &batch, &cfg).map_err(|e| e.to_string())?;
                    let fd = (fa - fb) / (2.0 * h);
                    let an = grad.get_flat(i);
                    let scale = fd.abs().max(an.abs()).max(1e-3);
                    let err = (fd - an).abs() / scale;
                    worst = worst.max(err);
                    ensure(err <= tol, || {
                        format!(
                            "case {case} {pooling:?} m={margin} lambda={doc_penalty} coord {i}: fd {fd} analytic {an}"
                        )
                    })?;
                    checked += 1;
                }
            }
        }
    }
    Ok(format!(
        "{checked} coordinates over 10 cases x 4 variants x 2 poolings, worst rel err {worst:.2e}"
    ))
}

fn infonce_closed_forms() -> Outcome {
    let plain = LossVariant::default();
    let (single, _) = infonce_loss(&[0.37], 1, 1, &[0], 0.02, &plain).map_err(|e| e.to_string())?;
    ensure(single == 0.0, || format!("single candidate loss {single}"))?;
    for k in [2usize, 5, 17] {
        let (l, _) = infonce_loss(&vec![0.3; k], 1, k, &[0], 0.02, &plain).map_err(|e| e.to_string())?;
        ensure((l - (k as f64).ln()).abs() <= 1e-12, || {
            format!("equal scores K={k}: {l}")
        })?;
    }
    let mut scores = vec![-1.0; 8];
    scores[3] = 1.0;
    let (l, g) = infonce_loss(&scores, 1, 8, &[3], 0.02, &plain).map_err(|e| e.to_string())?;
    ensure(l.is_finite() && l <= 1e-20 && l >= 0.0, || {
        format!("extreme gap loss {l}")
    })?;
    ensure(g.iter().all(|x| x.is_finite()), || {
        "extreme gap gradient not finite".into()
    })?;
    Ok(format!("single 0, ln K to 1e-12, extreme gap {l:.3e}"))
}

fn slerp_suite() -> Outcome {
    let mut rng = rng_from(11);
    let unit = |rng: &mut ChaCha8Rng, n: usize| {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst_sym = 0.0f64;
    let mut worst_norm = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let (a, b) = (unit(&mut rng, n), unit(&mut rng, n));
        let t: f64 = rng.random_range(0.0..=1.0);
        let s = |x: &[f64], y: &[f64], t: f64| slerp(x, y, t).map_err(|e| e.to_string());
        ensure(s(&a, &b, 0.0)? == a, || "t = 0 is not bitwise w0".into())?;
        ensure(s(&a, &b, 1.0)? == b, || "t = 1 is not bitwise w1".into())?;
        ensure(s(&a, &a, t)? == a, || "self-merge changed the input".into())?;
        let scaled: Vec<f64> = a.iter().map(|x| 3.0 * x).collect();
        ensure(s(&scaled, &scaled, t)? == scaled, || {
            "self-merge of a non-unit tensor changed it".into()
        })?;
        let ab = s(&a, &b, t)?;
        let ba = s(&b, &a, 1.0 - t)?;
        worst_sym = ab.iter().zip(&ba).map(|(x, y)| (x - y).abs()).fold(worst_sym, f64::max);
        worst_norm = worst_norm.max((norm(&ab) - 1.0).abs());
    }
    ensure(worst_sym <= 1e-12, || format!("symmetry error {worst_sym:e}"))?;
    ensure(worst_norm <= 1e-9, || format!("unit norm error {worst_norm:e}"))?;
    let mid = slerp(&[1.0, 0.0], &[0.0, 1.0], 0.5).map_err(|e| e.to_string())?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ensure((mid[0] - h).abs() <= 1e-12 && (mid[1] - h).abs() <= 1e-12, || {
        format!("orthogonal midpoint {mid:?}")
    })?;
    Ok(format!("200 draws, symmetry {worst_sym:.1e}, norm {worst_norm:.1e}"))
}

fn protocol_determinism() -> Outcome {
    let suite: Vec<SuiteTask> = synthetic_suite(0)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|t| SuiteTask {
            name: t.name.to_string(),
            category: t.category.to_string(),
            dataset: t.dataset,
        })
        .collect();
    let embedder =
        ToyEmbedder::new(init_params(7, DEFAULT_VOCAB, DEFAULT_DIM), Pooling::Cls).map_err(|e| e.to_string())?;
    let mut cfg = ProtocolConfig {
        base_seed: 7,
        ..ProtocolConfig::default()
    };
    let run = |cfg: &ProtocolConfig| -> Result<String, String> {
        run_benchmark(&suite, &embedder, cfg, AggregationMode::CategoryMean)
            .and_then(|r| r.to_json())
            .map_err(|e| e.to_string())
    };
    let first = run(&cfg)?;
    for i in 1..3 {
        ensure(run(&cfg)? == first, || format!("sequential run {i} differs"))?;
    }
    cfg.parallel = true;
    ensure(run(&cfg)? == first, || "parallel run differs".into())?;
    cfg.parallel = false;

    ensure(
        cfg.runs == 10 && cfg.samples_per_label == 8 && cfg.knn_k == 5 && cfg.map_k == 10 && cfg.ndcg_k == 10,
        || "protocol defaults changed".into(),
    )?;
    let report = run_benchmark(&suite, &embedder, &cfg, AggregationMode::CategoryMean).map_err(|e| e.to_string())?;
    for (name, entry) in &report.tasks {
        let want = match entry.kind.as_str() {
            "classification" | "multilabel" | "clustering" => 10,
            _ => 0,
        };
        ensure(entry.runs.len() == want, || {
            format!("{name}: {} runs, expected {want}", entry.runs.len())
        })?;
    }
    for task in &suite {
        if let TaskDataset::Reranking { metric, .. } = &task.dataset {
            ensure(metric.to_string() == "map@10", || format!("reranking metric {metric}"))?;
        }
    }
    Ok(format!("{} bytes, 3 sequential + 1 parallel identical", first.len()))
}

fn learning_signal() -> Outcome {
    let start = Instant::now();
    let spec = ClusterSpec::default();
    let corpus = ClusterCorpus::generate(&spec, 0).map_err(|e| e.to_string())?;
    ensure(
        corpus.data.corpus.len() == 256 && corpus.data.queries.len() == 64,
        || "corpus shape".into(),
    )?;
    let init = init_params(0, DEFAULT_VOCAB, DEFAULT_DIM);
    let untrained = ToyEmbedder::new(init.clone(), Pooling::Cls).map_err(|e| e.to_string())?;
    let pcfg = ProtocolConfig::default();
    let before = eval_retrieval(&corpus.data, &untrained, &pcfg)
        .map_err(|e| e.to_string())?
        .score;
    let pairs = cluster_training_pairs(&corpus, &spec, 512, 0, &untrained, &MiningConfig::default())
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig::default();
    let out = train(&pairs, &init, &cfg).map_err(|e| e.to_string())?;
    ensure(out.log.len() == 200, || format!("{} log entries", out.log.len()))?;

    let mut sampler = build_batches(&pairs, cfg.batch_options(), 99).map_err(|e| e.to_string())?;
    let probe: Vec<_> = (0..20).map(|_| sampler.next_batch()).collect();
    let mean_loss = |p: &ToyParams| -> Result<f64, String> {
        let mut total = 0.0;
        for b in &probe {
            total += batch_loss(p, b, &cfg).map_err(|e| e.to_string())?;
        }
        Ok(total / probe.len() as f64)
    };
    let (loss0, loss1) = (mean_loss(&init)?, mean_loss(&out.params)?);
    ensure(loss1 < loss0, || format!("mean loss {loss0} -> {loss1}"))?;

    let trained = ToyEmbedder::new(out.params, Pooling::Cls).map_err(|e| e.to_string())?;
    let after = eval_retrieval(&corpus.data, &trained, &pcfg)
        .map_err(|e| e.to_string())?
        .score;
    ensure(after - before >= 0.2, || {
        format!("nDCG@10 {before} -> {after}, gain below 0.2")
    })?;
    ensure(after == TRAINED_NDCG, || {
        format!("trained nDCG@10 {after:?} differs from the pinned {TRAINED_NDCG:?}")
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "nDCG@10 {before:.4} -> {after:.4}, mean loss {loss0:.3} -> {loss1:.3}, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn mining_correctness() -> Outcome {
    let spec = ClusterSpec::mining_fixture();
    let corpus = ClusterCorpus::generate(&spec, 0).map_err(|e| e.to_string())?;
    ensure(corpus.data.corpus.len() == 120, || "fixture size".into())?;
    let embedder =
        ToyEmbedder::new(init_params(0, DEFAULT_VOCAB, DEFAULT_DIM), Pooling::Cls).map_err(|e| e.to_string())?;
    let cfg = MiningConfig::default();
    let queries = corpus.mining_queries();
    let mined = mine_hard_negatives(&queries, &corpus.data.corpus, &embedder, &cfg).map_err(|e| e.to_string())?;

    let doc_texts: Vec<String> = corpus.data.corpus.iter().map(|d| d.text.clone()).collect();
    let docs = embedder
        .embed(&doc_texts, PrefixKind::SearchDocument)
        .map_err(|e| e.to_string())?;
    let q_texts: Vec<String> = queries.iter().map(|q| q.text.clone()).collect();
    let qs = embedder
        .embed(&q_texts, PrefixKind::SearchQuery)
        .map_err(|e| e.to_string())?;
    let mut total = 0;
    for (qi, (q, m)) in queries.iter().zip(&mined).enumerate() {
        let mut order: Vec<(f64, usize)> = (0..docs.rows())
            .map(|d| (qs.row(qi).iter().zip(docs.row(d)).map(|(a, b)| a * b).sum(), d))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let positives: BTreeSet<&str> = q.positives.iter().map(String::as_str).collect();
        let ranked: Vec<&str> = order
            .iter()
            .map(|&(_, d)| corpus.data.corpus[d].id.as_str())
            .filter(|id| !positives.contains(id))
            .collect();
        let hi = cfg.rank_hi.min(ranked.len());
        let mut rng = stream_rng(cfg.seed, qi as u64);
        let mut ranks: Vec<usize> = sample(&mut rng, hi - cfg.rank_lo + 1, cfg.n_neg)
            .into_iter()
            .map(|i| cfg.rank_lo + i)
            .collect();
        ranks.sort_unstable();
        let ids: Vec<String> = ranks.iter().map(|&r| ranked[r - 1].to_string()).collect();
        ensure(m.ranks == ranks && m.negatives == ids, || {
            format!(
                "query {}: got {:?}/{:?}, oracle {ranks:?}/{ids:?}",
                q.query_id, m.ranks, m.negatives
            )
        })?;
        ensure(m.negatives.iter().all(|id| !positives.contains(id.as_str())), || {
            "positive mined".into()
        })?;
        ensure(m.ranks.iter().all(|r| (cfg.rank_lo..=cfg.rank_hi).contains(r)), || {
            "rank outside window".into()
        })?;
        total += m.negatives.len();
    }
    Ok(format!(
        "{} queries, {total} negatives match the full-sort oracle",
        mined.len()
    ))
}

fn constants_audit() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_embench"))
        .arg("defaults")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || "defaults command failed".into())?;
    let text = String::from_utf8_lossy(&out.stderr);
    let body = text.find('{').map(|i| &text[i..]).ok_or("no configuration printed")?;
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let checks: [(&str, &serde_json::Value, f64); 13] = [
        ("temperature", &v["train"]["temperature"], 0.02),
        ("n_hard", &v["train"]["n_hard"], 7.0),
        ("warmup", &v["train"]["warmup_steps"], 200.0),
        ("weight decay", &v["train"]["weight_decay"], 0.01),
        ("margin ablation", &v["train_presets"]["margin"], 0.01),
        ("merge preset", &v["merge_presets"]["merge"], 0.25),
        ("post-train preset", &v["merge_presets"]["post_train"], 0.1),
        ("length filter", &v["filter"]["max_tokens"], 500.0),
        ("kNN k", &v["eval"]["knn_k"], 5.0),
        ("samples per label", &v["eval"]["samples_per_label"], 8.0),
        ("runs", &v["eval"]["runs"], 10.0),
        ("MAP k", &v["eval"]["map_k"], 10.0),
        ("nDCG k", &v["eval"]["ndcg_k"], 10.0),
    ];
    for (name, got, want) in checks {
        ensure(got.as_f64() == Some(want), || {
            format!("{name}: printed {got}, expected {want}")
        })?;
    }
    ensure(v["mine"]["rank_lo"] == 20 && v["mine"]["rank_hi"] == 100, || {
        format!("mining window {} {}", v["mine"]["rank_lo"], v["mine"]["rank_hi"])
    })?;
    Ok("14 constants read back from the printout".into())
}

fn co2_check() -> Outcome {
    let e = |p, k, i| co2_estimate(p, k, i).map_err(|e| e.to_string());
    for (kwh, intensity, want) in [
        (0.0, 400.0, 0.0),
        (1000.0, 500.0, 650.0),
        (2000.0, 300.0, 780.0),
        (123.0, 456.0, 72.9144),
    ] {
        let got = e(1.3, kwh, intensity)?;
        ensure((got - want).abs() <= 1e-12 * want.max(1.0), || {
            format!("({kwh}, {intensity}) -> {got}, expected {want}")
        })?;
    }
    // The kWh figure behind the reported total is unpublished; only the
    // product kWh x intensity it implies is checked for consistency.
    let implied = REPORTED_CO2_KG * 1000.0 / 1.3;
    let back = e(1.3, implied, 1.0)?;
    ensure((back - REPORTED_CO2_KG).abs() <= 1e-9 * REPORTED_CO2_KG, || {
        format!("consistency {back}")
    })?;
    Ok(format!(
        "hand values to 1e-12; implied kWh x g/kWh = {implied:.1} gives {back} kg"
    ))
}

fn remote_client() -> Outcome {
    let texts: Vec<String> = (0..23).map(|i| format!("text {i}")).collect();
    let cfg = |url: String, retries| RemoteConfig {
        batch_size: 5,
        max_retries: retries,
        base_backoff_ms: 1,
        max_in_flight: 5,
        ..RemoteConfig::new(url)
    };
    let check_order = |m: &EmbeddingMatrix| -> Result<(), String> {
        for i in 0..texts.len() {
            let n = ((i + 1) as f64).hypot(1.0);
            let (a, b) = (m.row(i)[0], m.row(i)[1]);
            ensure(
                (a - (i + 1) as f64 / n).abs() < 1e-12 && (b - 1.0 / n).abs() < 1e-12,
                || format!("row {i} out of order"),
            )?;
        }
        Ok(())
    };

    let server = StubServer::start(StubConfig {
        delays_ms: vec![200, 150, 100, 50, 0],
        ..StubConfig::tagged(4)
    })
    .map_err(|e| e.to_string())?;
    let client = RemoteEmbedder::new(cfg(server.url(), 0)).map_err(|e| e.to_string())?;
    let m = client.embed(&texts, PrefixKind::None).map_err(|e| e.to_string())?;
    check_order(&m)?;
    let expected = texts.len().div_ceil(5);
    ensure(server.requests() == expected, || {
        format!("{} requests, expected {expected}", server.requests())
    })?;

    let server = StubServer::start(StubConfig {
        fail_first: 2,
        ..StubConfig::tagged(4)
    })
    .map_err(|e| e.to_string())?;
    let client = RemoteEmbedder::new(RemoteConfig {
        max_in_flight: 1,
        ..cfg(server.url(), 2)
    })
    .map_err(|e| e.to_string())?;
    let m = client.embed(&texts, PrefixKind::None).map_err(|e| e.to_string())?;
    check_order(&m)?;
    ensure(server.requests() == expected + 2, || {
        format!("{} requests with retries", server.requests())
    })?;

    let server = StubServer::start(StubConfig {
        fail_first: usize::MAX,
        ..StubConfig::tagged(4)
    })
    .map_err(|e| e.to_string())?;
    let client = RemoteEmbedder::new(RemoteConfig {
        max_in_flight: 1,
        ..cfg(server.url(), 3)
    })
    .map_err(|e| e.to_string())?;
    match client.embed(&texts[..1], PrefixKind::None) {
        Err(e) if e.is_transport() => {}
        other => return Err(format!("expected a transport failure, got {other:?}")),
    }
    ensure(server.requests() == 4, || {
        format!("{} attempts, expected 4", server.requests())
    })?;
    Ok(format!(
        "{} texts in {expected} requests, order kept, retry and give-up verified",
        texts.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric oracle suite", metric_oracles),
        ("gradient suite", gradient_suite),
        ("infonce closed forms", infonce_closed_forms),
        ("slerp suite", slerp_suite),
        ("protocol determinism", protocol_determinism),
        ("learning signal", learning_signal),
        ("mining correctness", mining_correctness),
        ("constants audit", constants_audit),
        ("co2 estimate", co2_check),
        ("remote client", remote_client),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<22} {detail} [{secs:.2}s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name:<22} {reason} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
