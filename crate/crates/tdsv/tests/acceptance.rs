//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `--nocapture`). Oracles here are independent
//! re-implementations kept deliberately naive.

use std::time::Instant;
use tdsv::backend::{
    asnorm, asnorm_score, build_cohort, enroll, fuse, score_trials, AsNormConfig,
};
use tdsv::data::{
    read_embeddings_from, read_models_from, read_posteriors_from, read_scores_from,
    read_trials_from, write_embeddings_to, DataError, EmbeddingFormat, EmbeddingStore,
    EnrollmentPolicy, ScoreRecord, StoreError, Trial, TrialLabel,
};
use tdsv::gate::{gate, GateConfig};
use tdsv::loss::{aam_softmax, ClassWeights, LossConfig};
use tdsv::metrics::{det_curve, eer, evaluate, map_labels, min_dcf, MetricConfig, TrialSubset};
use tdsv::pooling::{attentive_pool, tstp, AttentivePoolingParams, FrameFeatures};
use tdsv::synth::rng::KeyedRng;
use tdsv::synth::{generate, verify_labels, SynthConfig, SynthData};

fn pass(name: &str) {
    println!("[PASS] {name}");
}

// ---------------------------------------------------------------------------
// Independent metric oracle: exhaustive threshold sweep with O(n^2) counting.
// ---------------------------------------------------------------------------

fn oracle_eer_mindcf(targets: &[f64], nontargets: &[f64], cfg: &MetricConfig) -> (f64, f64) {
    let mut thresholds: Vec<f64> = targets.iter().chain(nontargets.iter()).cloned().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut points: Vec<(f64, f64)> = Vec::new();
    points.push((0.0, 1.0));
    for &t in &thresholds {
        let pm = targets.iter().filter(|&&s| s < t).count() as f64 / targets.len() as f64;
        let pf = nontargets.iter().filter(|&&s| s >= t).count() as f64 / nontargets.len() as f64;
        points.push((pm, pf));
    }
    points.push((1.0, 0.0));

    let mut oracle_eer = f64::NAN;
    for w in points.windows(2) {
        let (pm0, pf0) = w[0];
        let (pm1, pf1) = w[1];
        let d0 = pm0 - pf0;
        let d1 = pm1 - pf1;
        if d1 >= 0.0 {
            oracle_eer = if d1 == 0.0 {
                pm1
            } else if d0 >= 0.0 {
                pm0.min(pm1)
            } else {
                let t = -d0 / (d1 - d0);
                pm0 + t * (pm1 - pm0)
            };
            break;
        }
    }

    let norm = (cfg.c_miss * cfg.p_target).min(cfg.c_fa * (1.0 - cfg.p_target));
    let oracle_dcf = points
        .iter()
        .map(|&(pm, pf)| (cfg.c_miss * pm * cfg.p_target + cfg.c_fa * pf * (1.0 - cfg.p_target)) / norm)
        .fold(f64::INFINITY, f64::min);
    (oracle_eer, oracle_dcf)
}

#[test]
fn metric_oracle_equivalence() {
    let start = Instant::now();
    let cfg = MetricConfig::default();
    let mut rng = KeyedRng::new(2024, "metric-oracle");
    for case in 0..200 {
        let n_t = 1 + (rng.next_range(50) as usize);
        let n_n = 1 + (rng.next_range(50) as usize);
        let targets: Vec<f64> = (0..n_t).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
        let nontargets: Vec<f64> = (0..n_n).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
        let det = det_curve(&targets, &nontargets).unwrap();
        let fast = (eer(&det), min_dcf(&det, &cfg));
        let slow = oracle_eer_mindcf(&targets, &nontargets, &cfg);
        assert!(
            (fast.0 - slow.0).abs() <= 1e-12,
            "case {case}: eer {} vs oracle {}",
            fast.0,
            slow.0
        );
        assert!(
            (fast.1 - slow.1).abs() <= 1e-12,
            "case {case}: min_dcf {} vs oracle {}",
            fast.1,
            slow.1
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "oracle comparison took {elapsed:.2}s");
    pass(&format!("metric oracle equivalence (200 cases, {elapsed:.2}s)"));
}

#[test]
fn worked_metric_fixture() {
    let cfg = MetricConfig::default();
    assert!((cfg.normalizer() - 0.1).abs() < 1e-15);
    let det = det_curve(&[0.8, 0.6, 0.4], &[0.7, 0.5, 0.3]).unwrap();
    let e = eer(&det);
    let d = min_dcf(&det, &cfg);
    assert!((e - 1.0 / 3.0).abs() <= 1e-12, "eer = {e}");
    assert!((d - 2.0 / 3.0).abs() <= 1e-12, "min_dcf = {d}");
    pass("worked metric fixture (EER 1/3, MinDCF 2/3)");
}

#[test]
fn monotone_transform_invariance() {
    let cfg = MetricConfig::default();
    let mut rng = KeyedRng::new(5150, "monotone");
    for case in 0..50 {
        let n_t = 2 + (rng.next_range(40) as usize);
        let n_n = 2 + (rng.next_range(40) as usize);
        let targets: Vec<f64> = (0..n_t).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let nontargets: Vec<f64> = (0..n_n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let det = det_curve(&targets, &nontargets).unwrap();
        let base = (eer(&det), min_dcf(&det, &cfg));

        let a = 0.1 + rng.next_f64() * 5.0;
        let b = rng.next_f64() * 10.0 - 5.0;
        let affine = |v: f64| a * v + b;
        let cubic = |v: f64| v.powi(3) + 0.25 * v - 2.0;
        for (name, map) in [("affine", &affine as &dyn Fn(f64) -> f64), ("cubic", &cubic)] {
            let t2: Vec<f64> = targets.iter().map(|&v| map(v)).collect();
            let n2: Vec<f64> = nontargets.iter().map(|&v| map(v)).collect();
            let det2 = det_curve(&t2, &n2).unwrap();
            assert!(
                (base.0 - eer(&det2)).abs() <= 1e-12,
                "case {case} ({name}): eer moved"
            );
            assert!(
                (base.1 - min_dcf(&det2, &cfg)).abs() <= 1e-12,
                "case {case} ({name}): min_dcf moved"
            );
        }
    }
    pass("monotone-transform invariance (50 cases, affine + cubic)");
}

// ---------------------------------------------------------------------------
// AS-Norm: brute-force per-trial oracle with its own cosine loop.
// ---------------------------------------------------------------------------

fn oracle_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for i in 0..a.len() {
        dot += a[i] as f64 * b[i] as f64;
        na += a[i] as f64 * a[i] as f64;
        nb += b[i] as f64 * b[i] as f64;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn oracle_side_stats(emb: &[f32], centroids: &[Vec<f32>], top_n: usize) -> (f64, f64) {
    let mut scored: Vec<(f64, usize)> = centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (oracle_cosine(emb, c), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(top_n);
    let n = scored.len() as f64;
    let mean = scored.iter().map(|(s, _)| s).sum::<f64>() / n;
    let var = scored.iter().map(|(s, _)| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn random_unit_f32(rng: &mut KeyedRng, dim: usize) -> Vec<f32> {
    let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / norm) as f32).collect()
}

#[test]
fn asnorm_oracle_equivalence() {
    let dim = 16;
    let mut rng = KeyedRng::new(99, "asnorm-oracle");
    let mut model_vecs = EmbeddingStore::new();
    for i in 0..40 {
        model_vecs
            .insert(format!("m{i}"), random_unit_f32(&mut rng, dim))
            .unwrap();
    }
    let mut tests = EmbeddingStore::new();
    for i in 0..60 {
        tests
            .insert(format!("t{i}"), random_unit_f32(&mut rng, dim))
            .unwrap();
    }
    let mut cohort_store = EmbeddingStore::new();
    let mut speaker_map = Vec::new();
    for i in 0..50 {
        cohort_store
            .insert(format!("c{i}"), random_unit_f32(&mut rng, dim))
            .unwrap();
        speaker_map.push((format!("c{i}"), format!("spk{i}")));
    }
    let cohort = build_cohort(&cohort_store, &speaker_map).unwrap();
    let centroids: Vec<Vec<f32>> = cohort.centroids().map(|c| c.to_vec()).collect();

    let trials: Vec<Trial> = (0..200)
        .map(|_| Trial {
            model_id: format!("m{}", rng.next_range(40)),
            test_utt_id: format!("t{}", rng.next_range(60)),
            label: None,
        })
        .collect();
    let raw = score_trials(&trials, &model_vecs, &tests).unwrap();

    let config = AsNormConfig {
        top_n: 10,
        epsilon_sigma: 1e-9,
    };
    let normalized = asnorm(&raw, &model_vecs, &tests, &cohort, &config).unwrap();

    for (record, norm_rec) in raw.iter().zip(&normalized) {
        let (me, se) = oracle_side_stats(model_vecs.get(&record.model_id).unwrap(), &centroids, 10);
        let (mt, st) = oracle_side_stats(tests.get(&record.test_utt_id).unwrap(), &centroids, 10);
        let expected = 0.5 * ((record.score - me) / se + (record.score - mt) / st);
        assert!(
            (norm_rec.score - expected).abs() <= 1e-9,
            "trial ({}, {}): {} vs oracle {}",
            record.model_id,
            record.test_utt_id,
            norm_rec.score,
            expected
        );
    }

    // Hand fixture: top-2 cohorts {0.1, 0.3} / {0.2, 0.4} around s = 0.5.
    let fixture_cfg = AsNormConfig {
        top_n: 2,
        epsilon_sigma: 1e-9,
    };
    let z = asnorm_score(0.5, &[0.1, 0.3], &[0.2, 0.4], &fixture_cfg).unwrap();
    assert!((z - 2.5).abs() <= 1e-12, "hand fixture gave {z}");

    pass("asnorm oracle equivalence (200 trials, cohort 50, top-10) + hand fixture 2.5");
}

#[test]
fn asnorm_affine_invariance() {
    let mut rng = KeyedRng::new(314, "asnorm-affine");
    let config = AsNormConfig {
        top_n: 10,
        epsilon_sigma: 1e-12,
    };
    for case in 0..100 {
        let raw = rng.next_f64() * 2.0 - 1.0;
        let enroll_scores: Vec<f64> = (0..50).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let test_scores: Vec<f64> = (0..50).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let base = asnorm_score(raw, &enroll_scores, &test_scores, &config).unwrap();

        let a = 0.05 + rng.next_f64() * 10.0;
        let b = rng.next_f64() * 6.0 - 3.0;
        let e2: Vec<f64> = enroll_scores.iter().map(|&v| a * v + b).collect();
        let t2: Vec<f64> = test_scores.iter().map(|&v| a * v + b).collect();
        let mapped = asnorm_score(a * raw + b, &e2, &t2, &config).unwrap();
        assert!(
            (base - mapped).abs() <= 1e-9,
            "case {case}: {base} vs {mapped}"
        );
    }
    pass("asnorm affine invariance (100 cases)");
}

// ---------------------------------------------------------------------------
// Loss gradients vs central finite differences.
// ---------------------------------------------------------------------------

fn loss_instance(rng: &mut KeyedRng) -> (Vec<f64>, ClassWeights, usize, LossConfig) {
    loop {
        let classes = 3 + rng.next_range(4) as usize; // 3..=6
        let dim = 4 + rng.next_range(7) as usize; // 4..=10
        let subcenters = 2 + rng.next_range(2) as usize; // 2..=3
        let top_k = 1 + rng.next_range((classes - 2) as u64) as usize; // 1..classes-1
        let data: Vec<f64> = (0..classes * subcenters * dim)
            .map(|_| rng.next_gaussian())
            .collect();
        let weights = ClassWeights::new(classes, subcenters, dim, data).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.next_gaussian() * 2.0).collect();
        let label = rng.next_range(classes as u64) as usize;
        let config = LossConfig {
            scale: 32.0,
            margin: 0.2,
            subcenters,
            top_k,
            penalty_margin: 0.06,
        };

        // Keep the instance away from the piecewise boundaries so the
        // finite-difference window stays inside one smooth branch: distinct
        // subcenter winners, distinct class ranking, |cos| away from 1.
        let unit: Vec<f64> = {
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter().map(|v| v / n).collect()
        };
        let mut per_class: Vec<f64> = Vec::new();
        let mut ok = true;
        for j in 0..classes {
            let mut subs: Vec<f64> = (0..subcenters)
                .map(|k| {
                    unit.iter()
                        .zip(weights.prototype(j, k))
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            subs.sort_by(f64::total_cmp);
            let best = subs[subcenters - 1];
            if subcenters > 1 && best - subs[subcenters - 2] < 1e-2 {
                ok = false;
            }
            if best.abs() > 0.98 {
                ok = false;
            }
            per_class.push(best);
        }
        let mut sorted = per_class.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[1] - w[0] < 1e-2) {
            ok = false;
        }
        if ok {
            return (x, weights, label, config);
        }
    }
}

#[test]
fn loss_gradient_check() {
    let mut rng = KeyedRng::new(777, "loss-fd");
    let step = 1e-4;
    for case in 0..50 {
        let (x, weights, label, config) = loss_instance(&mut rng);
        let out = aam_softmax(&x, &weights, label, &config).unwrap();
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus[i] += step;
            let mut minus = x.clone();
            minus[i] -= step;
            let lp = aam_softmax(&plus, &weights, label, &config).unwrap().loss;
            let lm = aam_softmax(&minus, &weights, label, &config).unwrap().loss;
            fd[i] = (lp - lm) / (2.0 * step);
        }
        let diff: f64 = out
            .grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = out
            .grad
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
            .max(fd.iter().map(|g| g * g).sum::<f64>().sqrt())
            .max(1e-12);
        let rel = diff / scale;
        assert!(rel < 1e-4, "case {case}: relative gradient error {rel:e}");
    }

    // m = 0, K = 1, s = 1 reduces to softmax cross-entropy over cosines.
    let mut rng = KeyedRng::new(778, "loss-reduction");
    for _ in 0..20 {
        let classes = 3 + rng.next_range(4) as usize;
        let dim = 4 + rng.next_range(7) as usize;
        let data: Vec<f64> = (0..classes * dim).map(|_| rng.next_gaussian()).collect();
        let weights = ClassWeights::new(classes, 1, dim, data).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let label = rng.next_range(classes as u64) as usize;
        let config = LossConfig {
            scale: 1.0,
            margin: 0.0,
            subcenters: 1,
            top_k: 0,
            penalty_margin: 0.0,
        };
        let out = aam_softmax(&x, &weights, label, &config).unwrap();
        let cosines = tdsv::loss::subcenter_cosines(&x, &weights).unwrap();
        let max = cosines.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + cosines.iter().map(|c| (c - max).exp()).sum::<f64>().ln();
        let plain = lse - cosines[label];
        assert!(
            (out.loss - plain).abs() <= 1e-9,
            "reduction mismatch: {} vs {plain}",
            out.loss
        );
    }
    pass("loss gradient check (50 FD cases, rel err < 1e-4) + softmax reduction");
}

// ---------------------------------------------------------------------------
// Pooling properties and the naive re-implementation oracle.
// ---------------------------------------------------------------------------

fn naive_attentive_pool(
    rows: &[Vec<f64>],
    params: &AttentivePoolingParams,
) -> (Vec<f64>, Vec<f64>) {
    // Direct transliteration: scores, unstabilized softmax, weighted sum.
    let scores: Vec<f64> = rows
        .iter()
        .map(|h| {
            let mut e = params.b1;
            for (w, v) in params.w1.iter().zip(h) {
                e += w * v;
            }
            e
        })
        .collect();
    let total: f64 = scores.iter().map(|e| e.exp()).sum();
    let alphas: Vec<f64> = scores.iter().map(|e| e.exp() / total).collect();
    let dout = params.w2.len();
    let mut out = vec![0.0; dout];
    for (t, h) in rows.iter().enumerate() {
        for (o, (w_row, b)) in out.iter_mut().zip(params.w2.iter().zip(&params.b2)) {
            let mut proj = *b;
            for (w, v) in w_row.iter().zip(h) {
                proj += w * v;
            }
            *o += alphas[t] * proj;
        }
    }
    (out, alphas)
}

#[test]
fn pooling_properties() {
    let mut rng = KeyedRng::new(4242, "pooling");
    for case in 0..100 {
        let t = 1 + rng.next_range(12) as usize;
        let f = 1 + rng.next_range(8) as usize;
        let dout = 1 + rng.next_range(6) as usize;
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..f).map(|_| rng.next_gaussian()).collect())
            .collect();
        let params = AttentivePoolingParams {
            w1: (0..f).map(|_| rng.next_gaussian()).collect(),
            b1: rng.next_gaussian(),
            w2: (0..dout)
                .map(|_| (0..f).map(|_| rng.next_gaussian()).collect())
                .collect(),
            b2: (0..dout).map(|_| rng.next_gaussian()).collect(),
        };
        let frames = FrameFeatures::new(rows.clone()).unwrap();
        let pooled = attentive_pool(&frames, &params).unwrap();

        // alpha is a distribution
        let sum: f64 = pooled.weights.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "case {case}: sum(alpha) = {sum}");
        assert!(pooled.weights.iter().all(|&a| a >= 0.0));

        // naive oracle equivalence
        let (oracle_out, oracle_alpha) = naive_attentive_pool(&rows, &params);
        for (a, b) in pooled.weights.iter().zip(&oracle_alpha) {
            assert!((a - b).abs() <= 1e-6, "case {case}: alpha differs");
        }
        for (a, b) in pooled.output.iter().zip(&oracle_out) {
            assert!((a - b).abs() <= 1e-6, "case {case}: output differs");
        }

        // permutation invariance (reverse the frame order)
        let mut reversed = rows.clone();
        reversed.reverse();
        let rev_frames = FrameFeatures::new(reversed).unwrap();
        let rev_pooled = attentive_pool(&rev_frames, &params).unwrap();
        for (a, b) in pooled.output.iter().zip(&rev_pooled.output) {
            assert!((a - b).abs() <= 1e-9, "case {case}: not permutation invariant");
        }
        let stats = tstp(&frames);
        let rev_stats = tstp(&rev_frames);
        for (a, b) in stats.iter().zip(&rev_stats) {
            assert!((a - b).abs() <= 1e-9);
        }

        // zero attention map reduces to the mean of projections
        let uniform = AttentivePoolingParams {
            w1: vec![0.0; f],
            b1: 0.0,
            ..params.clone()
        };
        let mean_pooled = attentive_pool(&frames, &uniform).unwrap();
        let mut mean = vec![0.0; dout];
        for h in &rows {
            for (m, (w_row, b)) in mean.iter_mut().zip(params.w2.iter().zip(&params.b2)) {
                let mut proj = *b;
                for (w, v) in w_row.iter().zip(h) {
                    proj += w * v;
                }
                *m += proj / t as f64;
            }
        }
        for (a, b) in mean_pooled.output.iter().zip(&mean) {
            assert!((a - b).abs() <= 1e-9, "case {case}: uniform reduction failed");
        }
    }
    pass("pooling properties (100 random shapes, naive oracle within 1e-6)");
}

// ---------------------------------------------------------------------------
// End-to-end synthetic pipeline.
// ---------------------------------------------------------------------------

struct PipelineOutcome {
    report: tdsv::metrics::EvalReport,
    tw_all_rejected: bool,
}

fn run_pipeline(noise: f64, confusion: f64, seed: u64) -> PipelineOutcome {
    let config = SynthConfig {
        n_speakers: 50,
        n_phrases: 10,
        utts_per_speaker_phrase: 6,
        dim: 256,
        within_noise: noise,
        posterior_confusion: confusion,
        seed,
        trial_counts: None,
    };
    let data: SynthData = generate(&config).unwrap();
    verify_labels(&data).unwrap();

    let model_vecs = enroll(&data.models, &data.embeddings, EnrollmentPolicy::Strict).unwrap();
    let raw = score_trials(&data.trials, &model_vecs, &data.embeddings).unwrap();
    let cohort = build_cohort(&data.embeddings, &data.speaker_map).unwrap();
    let asnorm_cfg = AsNormConfig {
        top_n: 20,
        epsilon_sigma: 1e-9,
    };
    let normalized = asnorm(&raw, &model_vecs, &data.embeddings, &cohort, &asnorm_cfg).unwrap();
    let (gated, decisions) = gate(
        &data.trials,
        &data.models,
        &data.posteriors,
        &normalized,
        &GateConfig::default(),
    )
    .unwrap();

    let tw_all_rejected = data
        .trials
        .iter()
        .zip(&decisions)
        .filter(|(t, _)| t.label == Some(TrialLabel::Tw))
        .all(|(_, d)| !d.accept);

    let (targets, nontargets) = map_labels(&data.trials, &gated, TrialSubset::All).unwrap();
    let report = evaluate(&targets, &nontargets, &MetricConfig::default()).unwrap();
    PipelineOutcome {
        report,
        tw_all_rejected,
    }
}

#[test]
fn end_to_end_synthetic_pipeline() {
    let start = Instant::now();

    let clean = run_pipeline(0.0, 0.0, 7);
    assert_eq!(clean.report.eer, 0.0, "clean pipeline EER");
    assert_eq!(clean.report.min_dcf, 0.0, "clean pipeline MinDCF");
    assert_eq!(format!("{:.4}", clean.report.min_dcf), "0.0000");
    assert_eq!(format!("{:.2}", clean.report.eer * 100.0), "0.00");
    assert!(clean.tw_all_rejected, "TW trials leaked through the gate");

    let mut last = clean.report.eer;
    for noise in [0.2, 0.6, 1.2] {
        let outcome = run_pipeline(noise, 0.0, 7);
        assert!(outcome.tw_all_rejected);
        assert!(
            outcome.report.eer > last,
            "EER not strictly increasing at noise {noise}: {} !> {last}",
            outcome.report.eer
        );
        last = outcome.report.eer;
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "pipeline sweep took {elapsed:.1}s");
    pass(&format!(
        "end-to-end synthetic pipeline (clean run 0.0000 & 0.00, EER rises with noise, {elapsed:.1}s)"
    ));
}

// ---------------------------------------------------------------------------
// Determinism and throughput at evaluation scale.
// ---------------------------------------------------------------------------

fn pool_of(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

#[test]
fn determinism_and_throughput() {
    let dim = 256;
    let mut rng = KeyedRng::new(60469, "throughput");
    let mut model_vecs = EmbeddingStore::new();
    for i in 0..1000 {
        model_vecs
            .insert(format!("m{i}"), random_unit_f32(&mut rng, dim))
            .unwrap();
    }
    let mut tests = EmbeddingStore::new();
    for i in 0..1000 {
        tests
            .insert(format!("t{i}"), random_unit_f32(&mut rng, dim))
            .unwrap();
    }
    let mut cohort_store = EmbeddingStore::new();
    let mut speaker_map = Vec::new();
    for i in 0..1620 {
        cohort_store
            .insert(format!("c{i}"), random_unit_f32(&mut rng, dim))
            .unwrap();
        speaker_map.push((format!("c{i}"), format!("spk{i}")));
    }
    let cohort = build_cohort(&cohort_store, &speaker_map).unwrap();

    let trials: Vec<Trial> = (0..1000)
        .flat_map(|m| {
            (0..1000).map(move |t| Trial {
                model_id: format!("m{m}"),
                test_utt_id: format!("t{t}"),
                label: None,
            })
        })
        .collect();
    assert_eq!(trials.len(), 1_000_000);

    let config = AsNormConfig {
        top_n: 300,
        epsilon_sigma: 1e-9,
    };

    let start = Instant::now();
    let raw = score_trials(&trials, &model_vecs, &tests).unwrap();
    let normalized = asnorm(&raw, &model_vecs, &tests, &cohort, &config).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 10.0,
        "scoring + AS-Norm of 1M trials took {elapsed:.2}s"
    );

    let serialize = |records: &[ScoreRecord]| {
        let mut buf = Vec::with_capacity(records.len() * 24);
        tdsv::data::write_scores_to(&mut buf, records).unwrap();
        buf
    };
    let bytes_default = serialize(&normalized);
    drop(normalized);
    drop(raw);

    let run_with = |threads: usize| {
        pool_of(threads).install(|| {
            let raw = score_trials(&trials, &model_vecs, &tests).unwrap();
            let normalized = asnorm(&raw, &model_vecs, &tests, &cohort, &config).unwrap();
            serialize(&normalized)
        })
    };
    let bytes_1 = run_with(1);
    assert_eq!(bytes_default, bytes_1, "default pool vs 1 worker differ");
    let bytes_8 = run_with(8);
    assert_eq!(bytes_1, bytes_8, "1 worker vs 8 workers differ");

    pass(&format!(
        "determinism & throughput (1M trials, cohort 1620: {elapsed:.2}s; 1 vs 8 workers byte-identical)"
    ));
}

// ---------------------------------------------------------------------------
// Format round-trips and the malformed-input corpus.
// ---------------------------------------------------------------------------

#[test]
fn format_round_trips_and_rejections() {
    use std::io::Cursor;
    let mem = std::path::PathBuf::from("<mem>");

    // Bit-identical binary round-trip over awkward values.
    let mut store = EmbeddingStore::new();
    let mut rng = KeyedRng::new(1, "roundtrip");
    for i in 0..32 {
        let values: Vec<f32> = (0..24)
            .map(|_| (rng.next_gaussian() * 1e3) as f32)
            .collect();
        store.insert(format!("utt/{i}"), values).unwrap();
    }
    store.insert("tiny", vec![f32::MIN_POSITIVE; 24]).unwrap();
    store.insert("neg0", vec![-0.0f32; 24]).unwrap();
    let mut buf = Vec::new();
    write_embeddings_to(&mut buf, &store, EmbeddingFormat::Binary).unwrap();
    let restored = read_embeddings_from(Cursor::new(&buf), EmbeddingFormat::Binary, &mem).unwrap();
    for (id, values) in store.iter() {
        let got = restored.get(id).unwrap();
        assert!(got.iter().zip(values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    // Malformed corpus: every documented rejection with its error kind.
    let bad_magic = {
        let mut b = buf.clone();
        b[3] ^= 0xff;
        b
    };
    assert!(matches!(
        read_embeddings_from(Cursor::new(&bad_magic), EmbeddingFormat::Binary, &mem),
        Err(DataError::BadMagic { .. })
    ));
    assert!(matches!(
        read_embeddings_from(Cursor::new(&[][..]), EmbeddingFormat::Binary, &mem),
        Err(DataError::MissingHeader { .. })
    ));
    let truncated = &buf[..buf.len() - 2];
    assert!(matches!(
        read_embeddings_from(Cursor::new(truncated), EmbeddingFormat::Binary, &mem),
        Err(DataError::Truncated { .. })
    ));
    assert!(matches!(
        read_embeddings_from(
            Cursor::new(b"a 1 2\nb 1 2 3\n".as_slice()),
            EmbeddingFormat::Text,
            &mem
        ),
        Err(DataError::Store {
            record: 2,
            source: StoreError::DimensionMismatch { .. },
            ..
        })
    ));
    assert!(matches!(
        read_embeddings_from(
            Cursor::new(b"a 1 2\na 3 4\n".as_slice()),
            EmbeddingFormat::Text,
            &mem
        ),
        Err(DataError::Store {
            source: StoreError::DuplicateId { .. },
            ..
        })
    ));
    assert!(matches!(
        read_embeddings_from(
            Cursor::new(b"a 1 inf\n".as_slice()),
            EmbeddingFormat::Text,
            &mem
        ),
        Err(DataError::Store {
            source: StoreError::NonFinite { .. },
            ..
        })
    ));

    assert!(matches!(
        read_trials_from(Cursor::new(b"m1\tu1\tXX\n".as_slice()), &mem),
        Err(DataError::UnknownLabel { line: 1, .. })
    ));
    assert!(matches!(
        read_trials_from(Cursor::new(b"m1\n".as_slice()), &mem),
        Err(DataError::ColumnCount { .. })
    ));
    assert!(matches!(
        read_trials_from(Cursor::new(b"m1\tu1\tTC\textra\n".as_slice()), &mem),
        Err(DataError::ColumnCount { found: 4, .. })
    ));
    assert!(matches!(
        read_trials_from(Cursor::new(b"\tu1\tTC\n".as_slice()), &mem),
        Err(DataError::EmptyField { .. })
    ));

    assert!(matches!(
        read_models_from(
            Cursor::new(b"m1\t11\tu1,u2,u3\n".as_slice()),
            &mem,
            EnrollmentPolicy::Strict
        ),
        Err(DataError::PhraseRange { found: 11, .. })
    ));
    assert!(matches!(
        read_models_from(
            Cursor::new(b"m1\t3\tu1,u2\n".as_slice()),
            &mem,
            EnrollmentPolicy::Strict
        ),
        Err(DataError::EnrollmentCount { found: 2, .. })
    ));

    let short_posterior = b"u1\t0.5 0.5\n";
    assert!(matches!(
        read_posteriors_from(Cursor::new(short_posterior.as_slice()), &mem),
        Err(DataError::ProbCount { found: 2, .. })
    ));
    let low_mass = format!("u1\t{}\n", ["0.0818"; 11].join(" "));
    assert!(matches!(
        read_posteriors_from(Cursor::new(low_mass.as_bytes()), &mem),
        Err(DataError::ProbSum { .. })
    ));
    let negative = format!("u1\t-0.1 1.1 {}\n", ["0.0"; 9].join(" "));
    assert!(matches!(
        read_posteriors_from(Cursor::new(negative.as_bytes()), &mem),
        Err(DataError::NegativeProb { index: 0, .. })
    ));

    assert!(matches!(
        read_scores_from(Cursor::new(b"m1\tu1\tNaN\n".as_slice()), &mem),
        Err(DataError::NonFiniteScore { line: 1, .. })
    ));
    assert!(matches!(
        read_scores_from(Cursor::new(b"m1\tu1\tabc\n".as_slice()), &mem),
        Err(DataError::InvalidNumber { .. })
    ));

    pass("format round-trips bit-identical; malformed corpus rejected with correct kinds");
}

// ---------------------------------------------------------------------------
// Fusion sanity inside the acceptance scope.
// ---------------------------------------------------------------------------

#[test]
fn fusion_is_mean_of_aligned_systems() {
    let s1 = vec![
        ScoreRecord::new("m", "a", 1.0),
        ScoreRecord::new("m", "b", -0.5),
    ];
    let s2 = vec![
        ScoreRecord::new("m", "a", 0.0),
        ScoreRecord::new("m", "b", 0.5),
    ];
    let fused = fuse(&[s1.clone(), s2]).unwrap();
    assert_eq!(fused[0].score, 0.5);
    assert_eq!(fused[1].score, 0.0);
    assert_eq!(fuse(std::slice::from_ref(&s1)).unwrap(), s1);
    pass("fusion is the per-trial mean over aligned systems");
}
