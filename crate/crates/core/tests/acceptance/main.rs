//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#[path = "../common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::Rng;

use dermclass_core::dataset::{kfold_split, split_by_atlas, synth_generate, SynthMode, SynthSpec};
use dermclass_core::heads::{self, apply_threshold, calibrate_threshold, label_accuracy, Head};
use dermclass_core::metrics::{confusion_matrix, label_prf, mean_average_precision, topk_accuracy};
use dermclass_core::nn::{grad_check, Checkpoint, LayerKind, LossFn};
use dermclass_core::retrieval::extract_features;
use dermclass_core::taxonomy::similarity;
use dermclass_core::trainer::{
    self, fine_tune, predict_dataset, train, FINE_TUNE_LEARNING_RATE, SCRATCH_LEARNING_RATE,
};
use dermclass_core::{
    Architecture, Dataset, FeatureIndex, ImageRecord, LabelVector, LayerSpec, Network, Targets,
    Tensor, ThresholdModel, TrainConfig,
};

const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 20;
const METRIC_TOL: f64 = 1e-12;
const METRIC_INSTANCES: usize = 1000;
const LOSS_TOL: f64 = 1e-12;
const OVERFIT_EPOCHS: usize = 200;
const MIN_MACRO_F: f64 = 0.8;
const MIN_MAP: f64 = 0.9;
const TRANSFER_LOSS_TARGET: f64 = 0.05;
const TRANSFER_MAX_EPOCHS: usize = 60;
const CALIBRATION_SEEDS: u64 = 10;
const SIMILARITY_PAIRS: usize = 500;
const SIMILARITY_TOL: f64 = 1e-12;
const RETRIEVAL_INDICES: usize = 100;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: dermclass_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn uniform_tensor(rng: &mut rand_chacha::ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn gradient_nets() -> Vec<Architecture> {
    vec![
        Architecture::new(
            vec![2, 8, 8],
            vec![
                LayerSpec::conv2d(3, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2d(2),
                LayerSpec::flatten(),
                LayerSpec::linear(5),
                LayerSpec::relu(),
                LayerSpec::linear(4),
            ],
        ),
        Architecture::new(
            vec![1, 9, 9],
            vec![
                LayerSpec::new(LayerKind::Conv2d {
                    filters: 2,
                    kernel: [3, 2],
                    stride: 2,
                    padding: 1,
                }),
                LayerSpec::new(LayerKind::MaxPool2d {
                    kernel: [3, 3],
                    stride: 2,
                }),
                LayerSpec::relu(),
                LayerSpec::flatten(),
                LayerSpec::linear(4),
            ],
        ),
    ]
}

fn c1_gradients() -> Outcome {
    let mut checks = 0;
    let mut worst = 0.0f64;
    for seed in 0..GRAD_SEEDS {
        let mut rng = common::rng(1000 + seed);
        for (a, arch) in gradient_nets().into_iter().enumerate() {
            let mut shape = vec![3];
            shape.extend_from_slice(&arch.input_shape);
            let input = uniform_tensor(&mut rng, shape);
            let net = ok(Network::new(arch, seed))?;
            let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
            let targets = Tensor::new(
                vec![3, 4],
                (0..12)
                    .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
                    .collect(),
            )
            .unwrap();
            for loss in [LossFn::Softmax { labels }, LossFn::SigmoidCe { targets }] {
                let report = ok(grad_check(&net, &input, &loss, GRAD_STEP, GRAD_TOL))?;
                worst = worst.max(report.max_relative_error());
                checks += report.checks.len();
                if let Some(bad) = report.checks.iter().find(|c| !c.passed) {
                    return Err(format!(
                        "seed {seed} net {a}: {} layer {:?} rel err {:.3e} {}",
                        bad.name,
                        bad.layer,
                        bad.max_relative_error,
                        bad.failure.clone().unwrap_or_default()
                    ));
                }
            }
        }
    }
    Ok(format!(
        "{checks} tensors over {GRAD_SEEDS} seeds, max rel err {worst:.2e}"
    ))
}

fn c2_metrics() -> Outcome {
    let mut rng = common::rng(2);
    let mut worst = 0.0f64;
    for inst in 0..METRIC_INSTANCES {
        let n = rng.random_range(1..=20);
        let q = rng.random_range(1..=8);
        let confs = common::random_confs(&mut rng, n, q, inst % 2 == 0);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..q)).collect();
        for k in 1..=q {
            let got = ok(topk_accuracy(&confs, &labels, k))?;
            let want = common::topk_oracle(&confs, &labels, k);
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= METRIC_TOL, || {
                format!("instance {inst}: top-{k} {got} vs oracle {want}")
            })?;
        }

        let truths = common::random_nonempty_bits(&mut rng, n, q);
        let lv: Vec<LabelVector> = truths.iter().cloned().map(LabelVector::new).collect();
        let got = ok(mean_average_precision(&confs, &lv))?;
        let want = common::map_oracle(&confs, &truths);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= METRIC_TOL, || {
            format!("instance {inst}: MAP {got} vs oracle {want}")
        })?;

        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..q)).collect();
        let cm = ok(confusion_matrix(&preds, &labels, q))?;
        let want = common::confusion_oracle(&preds, &labels, q);
        for i in 0..q {
            for j in 0..q {
                let d = (cm.values[i][j] - want[i][j]).abs();
                worst = worst.max(d);
                ensure(d <= METRIC_TOL, || {
                    format!("instance {inst}: confusion[{i}][{j}]")
                })?;
            }
        }

        let p_bits = common::random_bits(&mut rng, n, q, 0.4);
        let t_bits = common::random_bits(&mut rng, n, q, 0.4);
        let prf = ok(label_prf(&p_bits, &t_bits))?;
        let (per, macros) = common::prf_oracle(&p_bits, &t_bits);
        for (j, &(p, r, f, counted)) in per.iter().enumerate() {
            let d = (prf.precision[j] - p)
                .abs()
                .max((prf.recall[j] - r).abs())
                .max((prf.f_measure[j] - f).abs());
            worst = worst.max(d);
            ensure(d <= METRIC_TOL && prf.counted[j] == counted, || {
                format!("instance {inst}: label {j} P/R/F")
            })?;
        }
        let d = (prf.macro_precision - macros[0])
            .abs()
            .max((prf.macro_recall - macros[1]).abs())
            .max((prf.macro_f_measure - macros[2]).abs());
        worst = worst.max(d);
        ensure(d <= METRIC_TOL, || {
            format!("instance {inst}: macro averages")
        })?;
    }
    Ok(format!(
        "{METRIC_INSTANCES} instances, max abs diff {worst:.1e}"
    ))
}

fn c3_loss_analytics() -> Outcome {
    let mut worst = 0.0f64;
    for q in 1..=12usize {
        for n in [1usize, 3, 8] {
            for z in [0.0, -3.5, 17.0] {
                let logits = Tensor::new(vec![n, q], vec![z; n * q]).unwrap();
                let labels: Vec<usize> = (0..n).map(|i| i % q).collect();
                let got = ok(heads::softmax_loss(&logits, &labels))?.value;
                let d = (got - (q as f64).ln()).abs();
                worst = worst.max(d);
                ensure(d <= LOSS_TOL, || {
                    format!("softmax Q={q} N={n} z={z}: {got}")
                })?;
            }
            let logits = Tensor::zeros(vec![n, q]);
            for fill in [0.0, 1.0] {
                let targets = Tensor::new(vec![n, q], vec![fill; n * q]).unwrap();
                let got = ok(heads::sigmoid_ce_loss(&logits, &targets))?.value;
                let d = (got - q as f64 * std::f64::consts::LN_2).abs();
                worst = worst.max(d);
                ensure(d <= LOSS_TOL, || format!("sigmoid CE Q={q} N={n}: {got}"))?;
            }
        }
    }
    Ok(format!("max abs diff {worst:.1e}"))
}

fn class_labels(data: &Dataset) -> Vec<usize> {
    match &data.targets {
        Targets::Classes(c) => c.clone(),
        Targets::Tags(_) => unreachable!("multi-class data"),
    }
}

fn tag_labels(data: &Dataset) -> Vec<LabelVector> {
    match &data.targets {
        Targets::Tags(t) => t.clone(),
        Targets::Classes(_) => unreachable!("multi-label data"),
    }
}

fn multiclass_data(spec: &SynthSpec) -> Result<Dataset, String> {
    let d = ok(synth_generate(spec))?;
    ok(Dataset::from_records(
        &d.records,
        Head::MultiClass,
        &d.vocabulary,
    ))
}

fn c4_overfit() -> Outcome {
    let data = multiclass_data(&SynthSpec::new(SynthMode::MultiClass, 4, 8, 1))?;
    ensure(data.len() == 32, || format!("{} images", data.len()))?;
    let mut net = ok(Network::new(Architecture::desk_scale([3, 32, 32], 4), 1))?;
    let config = TrainConfig::new(Head::MultiClass, OVERFIT_EPOCHS, 1)
        .with_learning_rate(SCRATCH_LEARNING_RATE);
    let report = ok(train(&mut net, &data, &config))?;
    let confs = ok(predict_dataset(&net, &data, Head::MultiClass, 64))?;
    let top1 = ok(topk_accuracy(&confs, &class_labels(&data), 1))?;
    ensure(top1 == 1.0, || {
        format!("top-1 {top1} after {OVERFIT_EPOCHS} epochs")
    })?;
    Ok(format!(
        "top-1 1.0 after {OVERFIT_EPOCHS} epochs at lr {SCRATCH_LEARNING_RATE}, final loss {:.4}",
        report.final_loss()
    ))
}

fn c5_multilabel() -> Outcome {
    let d = ok(synth_generate(&SynthSpec::new(
        SynthMode::MultiLabel,
        6,
        50,
        7,
    )))?;
    let all = ok(Dataset::from_records(
        &d.records,
        Head::MultiLabel,
        &d.vocabulary,
    ))?;
    let train_set = all.subset(&(0..200).collect::<Vec<_>>());
    let test_set = all.subset(&(200..250).collect::<Vec<_>>());
    let mut net = ok(Network::new(Architecture::desk_scale([3, 32, 32], 6), 2))?;
    let config =
        TrainConfig::new(Head::MultiLabel, 30, 2).with_learning_rate(FINE_TUNE_LEARNING_RATE);
    ok(train(&mut net, &train_set, &config))?;
    let train_conf = ok(predict_dataset(&net, &train_set, Head::MultiLabel, 64))?;
    let cal = ok(calibrate_threshold(&train_conf, &tag_labels(&train_set)))?;
    let test_conf = ok(predict_dataset(&net, &test_set, Head::MultiLabel, 64))?;
    let test_truth = tag_labels(&test_set);
    let preds: Vec<_> = test_conf
        .iter()
        .map(|c| apply_threshold(c, &cal.model))
        .collect();
    let prf = ok(label_prf(&preds, &test_truth))?;
    let map = ok(mean_average_precision(&test_conf, &test_truth))?;
    ensure(prf.macro_f_measure >= MIN_MACRO_F && map >= MIN_MAP, || {
        format!("macro-F {:.4}, MAP {map:.4}", prf.macro_f_measure)
    })?;
    Ok(format!(
        "macro-F {:.4}, MAP {map:.4} ({:?} threshold)",
        prf.macro_f_measure, cal.method
    ))
}

fn c6_transfer() -> Outcome {
    let source = multiclass_data(&SynthSpec::new(SynthMode::MultiClass, 4, 8, 11))?;
    let mut pre = ok(Network::new(Architecture::desk_scale([3, 32, 32], 4), 11))?;
    ok(train(
        &mut pre,
        &source,
        &TrainConfig::new(Head::MultiClass, 60, 11).with_learning_rate(SCRATCH_LEARNING_RATE),
    ))?;
    let checkpoint = Checkpoint::new(pre, Some(Head::MultiClass), source.labels.clone());

    let mut spec = SynthSpec::new(SynthMode::MultiClass, 4, 8, 12);
    spec.style_offset = 2;
    let target = multiclass_data(&spec)?;

    let mut tuned = ok(fine_tune(
        &checkpoint,
        4,
        trainer::DEFAULT_HEAD_LR_MULTIPLIER,
        13,
    ))?;
    let tuned_report = ok(train(
        &mut tuned,
        &target,
        &TrainConfig::new(Head::MultiClass, TRANSFER_MAX_EPOCHS, 14)
            .with_learning_rate(FINE_TUNE_LEARNING_RATE),
    ))?;
    let mut scratch = ok(Network::new(Architecture::desk_scale([3, 32, 32], 4), 13))?;
    let scratch_report = ok(train(
        &mut scratch,
        &target,
        &TrainConfig::new(Head::MultiClass, TRANSFER_MAX_EPOCHS, 14)
            .with_learning_rate(SCRATCH_LEARNING_RATE),
    ))?;
    let fmt =
        |e: Option<usize>| e.map_or_else(|| format!(">{TRANSFER_MAX_EPOCHS}"), |e| e.to_string());
    let ft = tuned_report.epochs_to_reach(TRANSFER_LOSS_TARGET);
    let sc = scratch_report.epochs_to_reach(TRANSFER_LOSS_TARGET);
    let detail = format!(
        "epochs to loss {TRANSFER_LOSS_TARGET}: fine-tune {} vs scratch {}",
        fmt(ft),
        fmt(sc)
    );
    match (ft, sc) {
        (Some(f), Some(s)) if f < s => Ok(detail),
        (Some(_), None) => Ok(detail),
        _ => Err(detail),
    }
}

/// Confidences whose positives are only separable from negatives after
/// scaling by an instance-level brightness factor.
fn calibration_config(seed: u64) -> (Vec<Vec<f64>>, Vec<LabelVector>) {
    let mut rng = common::rng(7000 + seed);
    let (m, q) = (80, 6);
    let mut confs = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let scale = rng.random_range(0.3..1.0);
        let mut bits: Vec<bool> = (0..q).map(|_| rng.random_bool(0.3)).collect();
        if !bits.iter().any(|&b| b) {
            bits[rng.random_range(0..q)] = true;
        }
        let row = bits
            .iter()
            .map(|&b| {
                let base = if b {
                    rng.random_range(0.55..1.0)
                } else {
                    rng.random_range(0.0..0.5)
                };
                scale * base
            })
            .collect();
        confs.push(row);
        labels.push(LabelVector::new(bits));
    }
    (confs, labels)
}

fn c7_calibration() -> Outcome {
    let mut summary = Vec::new();
    for seed in 0..CALIBRATION_SEEDS {
        let (confs, labels) = calibration_config(seed);
        let cal = ok(calibrate_threshold(&confs, &labels))?;
        let calibrated = label_accuracy(&confs, &labels, &cal.model);
        let fixed = label_accuracy(&confs, &labels, &ThresholdModel::constant(6, 0.5));
        ensure(calibrated >= fixed, || {
            format!("seed {seed}: calibrated {calibrated:.4} < fixed {fixed:.4}")
        })?;
        summary.push(format!("{calibrated:.3}/{fixed:.3}"));
    }
    Ok(format!("calibrated/fixed accuracy: {}", summary.join(" ")))
}

fn c8_similarity() -> Outcome {
    let mut rng = common::rng(8);
    let alphabets: [&[char]; 3] = [
        &['a', 'b'],
        &['a', 'b', 'c', ' '],
        &['e', 'r', 'y', 't', 'h', 'm', 'a', 'o', 's', 'u'],
    ];
    for i in 0..SIMILARITY_PAIRS {
        let alphabet = alphabets[i % alphabets.len()];
        let a = common::random_string(&mut rng, 12, alphabet);
        let b = common::random_string(&mut rng, 12, alphabet);
        let got = similarity(&a, &b);
        let want = common::gestalt_ratio(&a, &b);
        ensure((got - want).abs() <= SIMILARITY_TOL, || {
            format!("S({a:?}, {b:?}) = {got}, brute force {want}")
        })?;
    }
    let nevus = similarity("nevus", "naevus");
    ensure((nevus - 10.0 / 11.0).abs() <= SIMILARITY_TOL, || {
        format!("S(nevus, naevus) = {nevus}")
    })?;
    Ok(format!(
        "{SIMILARITY_PAIRS} pairs agree; S(nevus, naevus) = {nevus:.12}"
    ))
}

fn tiny_record(id: String, atlas: &str) -> ImageRecord {
    ImageRecord {
        id,
        atlas: atlas.into(),
        image: Tensor::zeros(vec![1, 1, 1]),
        diagnosis: Some("x".into()),
        tags: None,
    }
}

fn c9_partitions() -> Outcome {
    let mut cases = 0;
    for n in 5..=120usize {
        for seed in [0u64, 1, 99] {
            let items = vec![(); n];
            let folds = ok(kfold_split(&items, 5, seed))?;
            let again = ok(kfold_split(&items, 5, seed))?;
            ensure(folds == again, || {
                format!("n={n} seed={seed}: not deterministic")
            })?;
            let mut seen = vec![0usize; n];
            for f in 0..5 {
                for i in folds.test_indices(f) {
                    seen[i] += 1;
                }
                let train_n = folds.train_indices(f).len();
                ensure(train_n + folds.test_indices(f).len() == n, || {
                    format!("n={n}: fold {f} sizes")
                })?;
            }
            ensure(seen.iter().all(|&c| c == 1), || {
                format!("n={n} seed={seed}: not a partition")
            })?;
            let sizes = folds.fold_sizes();
            let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
            ensure(spread <= 1, || format!("n={n}: fold sizes {sizes:?}"))?;
            cases += 1;
        }
    }

    let atlases = ["a", "b", "c", "d", "e"];
    let mut rng = common::rng(9);
    for trial in 0..50 {
        let records: Vec<ImageRecord> = (0..40)
            .map(|i| tiny_record(format!("r{i}"), atlases[rng.random_range(0..atlases.len())]))
            .collect();
        let mut train_a = Vec::new();
        let mut test_a = Vec::new();
        for a in atlases {
            match rng.random_range(0..3) {
                0 => train_a.push(a.to_string()),
                1 => test_a.push(a.to_string()),
                _ => {}
            }
        }
        let split = ok(split_by_atlas(&records, &train_a, &test_a))?;
        ensure(
            split == ok(split_by_atlas(&records, &train_a, &test_a))?,
            || format!("atlas trial {trial}: not deterministic"),
        )?;
        let train_atlases: BTreeSet<&str> = split
            .train
            .iter()
            .map(|&i| records[i].atlas.as_str())
            .collect();
        let test_atlases: BTreeSet<&str> = split
            .test
            .iter()
            .map(|&i| records[i].atlas.as_str())
            .collect();
        ensure(train_atlases.is_disjoint(&test_atlases), || {
            format!("atlas trial {trial}: overlap")
        })?;
        let total = split.train.len() + split.test.len() + split.excluded.len();
        ensure(total == records.len(), || {
            format!("atlas trial {trial}: lost records")
        })?;
    }
    Ok(format!("{cases} k-fold cases, 50 atlas splits"))
}

fn c10_retrieval() -> Outcome {
    let mut rng = common::rng(10);
    let mut queries = 0;
    for idx in 0..RETRIEVAL_INDICES {
        let m = rng.random_range(5..60);
        let d = rng.random_range(1..8);
        let coarse = idx % 3 == 0;
        let ids: Vec<String> = (0..m)
            .map(|i| format!("id{:03}", (i * 37) % 1000))
            .collect();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if coarse {
                            f64::from(rng.random_range(0..3u8))
                        } else {
                            rng.random_range(-1.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let index = ok(FeatureIndex::new(ids.clone(), rows.clone()))?;
        let mut probes: Vec<Vec<f64>> = rows.clone();
        probes.extend((0..3).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()));
        for (p, query) in probes.iter().enumerate() {
            let k = rng.random_range(1..=m);
            let got = ok(index.knn(query, k))?;
            let want = common::knn_oracle(&ids, &rows, query, k);
            for (r, (g, (wid, wd))) in got.iter().zip(&want).enumerate() {
                ensure(&g.id == wid && (g.distance - wd).abs() <= 1e-12, || {
                    format!(
                        "index {idx} probe {p} rank {r}: {} {} vs {wid} {wd}",
                        g.id, g.distance
                    )
                })?;
            }
            if !coarse && p < m {
                ensure(got[0].id == ids[p] && got[0].distance == 0.0, || {
                    format!("index {idx}: {} does not retrieve itself first", ids[p])
                })?;
            }
            queries += 1;
        }
    }

    // Real embeddings from the desk-scale network.
    let data = ok(synth_generate(&SynthSpec::new(
        SynthMode::MultiLabel,
        6,
        5,
        21,
    )))?;
    let ds = ok(Dataset::from_records(
        &data.records,
        Head::MultiLabel,
        &data.vocabulary,
    ))?;
    let net = ok(Network::new(Architecture::desk_scale([3, 32, 32], 6), 21))?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let feats = ok(extract_features(&net, &ds.batch(&all)))?;
    let index = ok(FeatureIndex::new(ds.ids.clone(), feats.clone()))?;
    for (i, f) in feats.iter().enumerate() {
        let top = ok(index.knn(f, 1))?;
        ensure(top[0].id == ds.ids[i] && top[0].distance == 0.0, || {
            format!(
                "embedded record {} does not retrieve itself first",
                ds.ids[i]
            )
        })?;
    }
    Ok(format!(
        "{RETRIEVAL_INDICES} random indices, {queries} queries; {} embedded records self-retrieve",
        feats.len()
    ))
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 10] = [
        (
            "1 gradient suite",
            Some(Duration::from_secs(30)),
            c1_gradients,
        ),
        (
            "2 metric oracles",
            Some(Duration::from_secs(10)),
            c2_metrics,
        ),
        ("3 loss analytics", None, c3_loss_analytics),
        ("4 overfit", Some(Duration::from_secs(60)), c4_overfit),
        (
            "5 multi-label end-to-end",
            Some(Duration::from_secs(120)),
            c5_multilabel,
        ),
        ("6 transfer", None, c6_transfer),
        ("7 calibration", None, c7_calibration),
        ("8 similarity oracle", None, c8_similarity),
        ("9 partitions", None, c9_partitions),
        ("10 retrieval", None, c10_retrieval),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, limit) {
            if elapsed > limit {
                outcome = Err(format!("{detail}; took {elapsed:.1?}, limit {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
