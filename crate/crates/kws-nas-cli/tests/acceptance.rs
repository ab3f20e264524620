//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them).
//!
//! Heavy criteria (5d, 6) are full searches on synthetic data and take a few
//! minutes each on one core.
#![allow(clippy::unnecessary_cast)] // Real may be f32 under the feature

use kws_nas::audio::{
    load_examples, make_batches, split_manifest, synth_dataset, Example, SplitSpec, SynthSpec,
};
use kws_nas::model::{
    build_network, build_tc_resnet14, count_madds, count_params, Genotype, SearchSpaceConfig,
};
use kws_nas::search::{
    derive_genotype, noisy_skip_forward, run_search, SearchConfig, SearchMethod, SearchState,
};
use kws_nas::tensor::{Real, Tape, Tensor};
use kws_nas::testkit;
use kws_nas::train::{aggregate_runs, mean_std, train_model, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;

fn pass(id: &str, detail: String) {
    println!("ACCEPTANCE {id} PASS: {detail}");
}

fn synth_splits(clips: usize, speakers: usize, seed: u64) -> (Vec<Example>, Vec<Example>, Vec<Example>) {
    let manifest = synth_dataset(&SynthSpec {
        speakers,
        clips,
        seed,
    })
    .unwrap();
    let splits = split_manifest(&manifest, &SplitSpec::default());
    (
        load_examples(&splits.train).unwrap(),
        load_examples(&splits.valid).unwrap(),
        load_examples(&splits.test).unwrap(),
    )
}

#[test]
fn criterion_1_counter_reproduction() {
    let start = std::time::Instant::now();
    let net = build_tc_resnet14(1.5, 0).unwrap();
    let params = count_params(&net);
    let madds = count_madds(&net, 98);
    assert!(
        (296_000..=314_000).contains(&params),
        "params {params} outside [296K, 314K]"
    );
    assert!(
        (12_700_000..=14_100_000).contains(&madds),
        "madds {madds} outside [12.7M, 14.1M]"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 1, "counter took {elapsed:?}");
    pass(
        "1",
        format!("TC-ResNet-14 x1.5: params {params}, madds {madds} at 40x98 ({elapsed:?})"),
    );
}

#[test]
fn criterion_2_cardinality_reproduction() {
    let six_candidates = SearchSpaceConfig {
        num_layers: 9,
        channels: vec![24; 9],
        strides: vec![1; 9],
        stem_channels: 24,
        candidates: vec![
            "tc3".into(),
            "tc5".into(),
            "tc7".into(),
            "tc9".into(),
            "tc3se".into(),
            "skip".into(),
        ],
        ..SearchSpaceConfig::default()
    };
    let n = kws_nas::search::search_space_cardinality(&six_candidates);
    assert_eq!(n, 10_077_696);
    pass("2", format!("6 candidates x 9 layers = {n}"));
}

#[test]
fn criterion_3_gradient_suite() {
    let start = std::time::Instant::now();
    testkit::run_gradient_suite(20);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "gradient suite took {elapsed:?}");
    pass(
        "3",
        format!("finite-difference checks, all ops, 20 seeds, rel err < 1e-3 ({elapsed:?})"),
    );
}

#[test]
fn criterion_4_equivalence_oracles() {
    // conv1d vs direct nested loops.
    testkit::conv1d_oracle_check(20);

    // Param counter vs enumeration of all trainable tensors.
    for (genotype, space) in [
        (
            kws_nas::model::tc_resnet14_genotype(9, false),
            kws_nas::model::tc_resnet14_space(1.5),
        ),
        (
            kws_nas::model::tc_resnet14_genotype(5, true),
            kws_nas::model::tc_resnet14_space(1.0),
        ),
    ] {
        let net = build_network(&genotype, &space, 3).unwrap();
        assert_eq!(
            count_params(&net),
            net.store().num_trainable_values() as u64
        );
    }

    // ROC vs a brute-force recount on a fixture of 30 scored clips.
    struct Fixed(Vec<Vec<Real>>, usize);
    impl kws_nas::train::Scorer for Fixed {
        fn num_classes(&self) -> usize {
            12
        }
        fn logits(&mut self, batch: &kws_nas::audio::Batch) -> Result<Vec<Real>, kws_nas::train::TrainError> {
            let mut out = Vec::new();
            for _ in 0..batch.labels.len() {
                out.extend_from_slice(&self.0[self.1]);
                self.1 += 1;
            }
            Ok(out)
        }
    }
    let feature = Tensor::zeros(&[40, 98]);
    let mut rows = Vec::new();
    let mut examples = Vec::new();
    for i in 0..30usize {
        let label = if i < 20 { i % 10 } else { 10 + i % 2 };
        let mut row = vec![0.0; 12];
        row[(i * 7) % 12] = 0.17 * i as Real;
        row[label.min(9)] += 0.4;
        rows.push(row);
        examples.push(Example {
            features: feature.clone(),
            label,
        });
    }
    let points =
        kws_nas::train::compute_roc(&mut Fixed(rows.clone(), 0), &examples, None).unwrap();
    // Recount with independent plain loops.
    let softmax = |row: &[Real]| -> Vec<Real> {
        let m = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let e: Vec<Real> = row.iter().map(|v| (v - m).exp()).collect();
        let s: Real = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    };
    for p in &points {
        let mut tp = 0;
        let mut fp = 0;
        let mut pos = 0;
        let mut neg = 0;
        for (row, ex) in rows.iter().zip(&examples) {
            let probs = softmax(row);
            let mut best = 0;
            for k in 1..10 {
                if probs[k] > probs[best] {
                    best = k;
                }
            }
            if ex.label < 10 {
                pos += 1;
                if probs[best] >= p.threshold && best == ex.label {
                    tp += 1;
                }
            } else {
                neg += 1;
                if probs[best] >= p.threshold {
                    fp += 1;
                }
            }
        }
        assert_eq!(p.fpr, fp as Real / neg as Real, "fpr at {}", p.threshold);
        assert_eq!(
            p.fnr,
            (pos - tp) as Real / pos as Real,
            "fnr at {}",
            p.threshold
        );
    }
    pass(
        "4",
        format!(
            "conv oracle |d| < 1e-9; param counter = tensor enumeration; ROC recount exact over {} thresholds",
            points.len()
        ),
    );
}

fn mech_space() -> SearchSpaceConfig {
    SearchSpaceConfig {
        num_layers: 2,
        channels: vec![8, 8],
        strides: vec![2, 1],
        in_channels: 40,
        stem_channels: 8,
        candidates: vec!["tc3".into(), "tc5".into(), "skip".into()],
        ..SearchSpaceConfig::default()
    }
}

fn mech_config(method: SearchMethod, seed: u64) -> SearchConfig {
    SearchConfig {
        method,
        epochs: 2,
        batch_size: 24,
        w_lr: 0.02,
        w_momentum: 0.5,
        alpha_lr: 3e-3,
        seed,
        ..SearchConfig::default()
    }
}

#[test]
fn criterion_5a_gate_sums_and_saturation() {
    // Softmax mixing weights sum to 1 at every step of a 2-epoch search.
    let (train, valid, _) = synth_splits(96, 12, 50);
    let outcome = run_search(
        &mech_space(),
        &mech_config(SearchMethod::Darts, 11),
        &train,
        &valid,
        |_| {},
    )
    .unwrap();
    let mut checked = 0;
    for report in &outcome.reports {
        for s in &report.gate_sums {
            assert!((s - 1.0).abs() < 1e-9, "gate sum {s}");
            checked += 1;
        }
    }

    // One-hot saturation at an alpha gap of 40, relative error < 1e-6
    // against the exact one-hot forward (gap 800 underflows competitors to
    // zero weight in f64).
    let forward = |alpha0: Real| -> Vec<Real> {
        let mut state = SearchState::new(&mech_space(), &mech_config(SearchMethod::Darts, 42)).unwrap();
        let mut row = vec![0.0; 3];
        row[0] = alpha0;
        assert!(state.supernet.alphas_mut().load_values("alpha.l1", &row));
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 2 * 40 * 20;
        let values: Vec<Real> = (0..n).map(|i| ((i % 17) as Real - 8.0) * 0.1).collect();
        let x = tape.constant(vec![2, 40, 20], values).unwrap();
        let y = state
            .supernet
            .forward(&mut tape, x, kws_nas::tensor::BnMode::Train, &mut rng)
            .unwrap();
        tape.values(y).to_vec()
    };
    let mixed = forward(40.0);
    let pure = forward(800.0);
    let norm: Real = pure.iter().map(|v| v * v).sum::<Real>().sqrt();
    let diff: Real = mixed
        .iter()
        .zip(&pure)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<Real>()
        .sqrt();
    let rel = diff / norm;
    assert!(rel < 1e-6, "saturation relative error {rel}");
    pass(
        "5a",
        format!("{checked} gate sums within 1e-9 of 1; saturation rel err {rel:.2e} at gap 40"),
    );
}

#[test]
fn criterion_5b_noise_equivalence_and_statistics() {
    // beta = 0 is bitwise DARTS.
    let (train, valid, _) = synth_splits(96, 12, 51);
    let run = |method: SearchMethod| {
        let cfg = SearchConfig {
            noise_std: 0.0,
            ..mech_config(method, 31)
        };
        let outcome = run_search(&mech_space(), &cfg, &train, &valid, |_| {}).unwrap();
        let last = outcome.trajectory.last().unwrap();
        let bits: Vec<u64> = (0..last.num_layers())
            .flat_map(|l| last.raw(l).iter().map(|v| (*v as f64).to_bits()).collect::<Vec<_>>())
            .collect();
        (bits, outcome.supernet.weights_fingerprint())
    };
    let darts = run(SearchMethod::Darts);
    let noisy = run(SearchMethod::NoisyDarts);
    assert_eq!(darts, noisy, "beta = 0 diverged from DARTS");

    // beta = 0.1: sample statistics of the injected noise.
    let n = 10_000;
    let mut tape = Tape::new();
    let x = tape.constant(vec![n], vec![0.0; n]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let y = noisy_skip_forward(&mut tape, x, 0.0, 0.1, &mut rng).unwrap();
    let out = tape.values(y);
    let mean: Real = out.iter().sum::<Real>() / n as Real;
    let std: Real = (out.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n as Real).sqrt();
    assert!(mean.abs() < 0.005, "noise mean {mean}");
    assert!((std - 0.1).abs() < 0.1 * 0.05, "noise std {std}");
    pass(
        "5b",
        format!("beta=0 bitwise-identical to DARTS; noise stats mean {mean:.2e}, std {std:.4}"),
    );
}

#[test]
fn criterion_5c_optimizer_partitioning() {
    let (train, valid, _) = synth_splits(96, 12, 52);
    for method in [SearchMethod::Darts, SearchMethod::FairDarts, SearchMethod::NoisyDarts] {
        let mut state = SearchState::new(&mech_space(), &mech_config(method, 5)).unwrap();
        let mut data_rng = ChaCha8Rng::seed_from_u64(1);
        let mut steps = 0;
        for _epoch in 0..2 {
            let tb = make_batches(&train, 24, &mut data_rng);
            let vb = make_batches(&valid, 24, &mut data_rng);
            for (i, batch) in tb.iter().enumerate() {
                let w0 = state.supernet.weights_fingerprint();
                state.arch_half_step(&vb[i % vb.len()]).unwrap();
                assert_eq!(
                    state.supernet.weights_fingerprint(),
                    w0,
                    "{method:?}: architecture step mutated network weights"
                );
                let a0 = state.supernet.alphas_fingerprint();
                state.weight_half_step(batch).unwrap();
                assert_eq!(
                    state.supernet.alphas_fingerprint(),
                    a0,
                    "{method:?}: weight step mutated alphas"
                );
                steps += 1;
            }
        }
        assert!(steps > 0);
    }
    pass("5c", "weight/alpha checksums invariant across every half-step of 2-epoch searches, all 3 methods".to_string());
}

#[test]
fn criterion_5d_directional_skip_suppression() {
    let start = std::time::Instant::now();
    let space = SearchSpaceConfig {
        num_layers: 4,
        channels: vec![8; 4],
        strides: vec![2, 1, 1, 1],
        in_channels: 40,
        stem_channels: 8,
        candidates: vec!["tc3".into(), "tc5".into(), "skip".into()],
        ..SearchSpaceConfig::default()
    };
    let (train, valid, _) = synth_splits(240, 24, 1000);
    let mean_skips = |method: SearchMethod| -> f64 {
        let mut total = 0usize;
        for seed in 0..5u64 {
            let cfg = SearchConfig {
                method,
                epochs: 25,
                batch_size: 24,
                w_lr: 0.02,
                w_momentum: 0.5,
                alpha_lr: 3e-3,
                noise_std: 0.3,
                seed: 100 + seed,
                ..SearchConfig::default()
            };
            let outcome = run_search(&space, &cfg, &train, &valid, |_| {}).unwrap();
            let genotype = derive_genotype(outcome.trajectory.last().unwrap(), method, 0.8);
            total += genotype.skip_count();
        }
        total as f64 / 5.0
    };
    let darts = mean_skips(SearchMethod::Darts);
    let noisy = mean_skips(SearchMethod::NoisyDarts);
    let elapsed = start.elapsed();
    assert!(
        noisy <= darts,
        "mean skips: noisydarts {noisy} > darts {darts}"
    );
    assert!(elapsed.as_secs() < 1800, "took {elapsed:?}");
    pass(
        "5d",
        format!("mean derived skips over 5 seeds: darts {darts:.1}, noisydarts {noisy:.1} ({elapsed:?})"),
    );
}

#[test]
fn criterion_6_end_to_end_pipeline() {
    let start = std::time::Instant::now();
    let (train, valid, test) = synth_splits(2000, 50, 2026);

    let space = SearchSpaceConfig {
        num_layers: 4,
        channels: vec![16, 16, 24, 24],
        strides: vec![2, 1, 2, 1],
        in_channels: 40,
        stem_channels: 16,
        candidates: vec!["tc3".into(), "tc5".into(), "skip".into()],
        ..SearchSpaceConfig::default()
    };
    let search_cfg = SearchConfig {
        method: SearchMethod::NoisyDarts,
        epochs: 3,
        batch_size: 64,
        w_lr: 0.02,
        w_momentum: 0.5,
        alpha_lr: 3e-3,
        noise_std: 0.1,
        seed: 7,
        ..SearchConfig::default()
    };
    let outcome = run_search(&space, &search_cfg, &train, &valid, |_| {}).unwrap();
    assert!(
        outcome.valid_top1 >= 0.5,
        "supernet validation top1 {} below the sanity floor",
        outcome.valid_top1
    );
    let genotype = derive_genotype(outcome.trajectory.last().unwrap(), search_cfg.method, 0.8);

    // Serialization round trip is bit-exact.
    let hash = space.config_hash();
    let json = genotype.to_json(&hash);
    let (back, back_hash) = Genotype::from_json(&json).unwrap();
    assert_eq!(back, genotype);
    assert_eq!(back_hash, hash);
    assert_eq!(back.to_json(&back_hash), json, "re-serialization differs");

    let train_cfg = TrainConfig {
        epochs: 20,
        batch_size: 64,
        lr: 0.01,
        momentum: 0.5,
        seed: 3,
        ..TrainConfig::default()
    };
    let trained = train_model(&genotype, &space, &train, &valid, &test, &train_cfg).unwrap();
    let elapsed = start.elapsed();
    assert!(
        trained.metrics.top1 >= 0.90,
        "test top1 {} below 0.90",
        trained.metrics.top1
    );
    assert!(elapsed.as_secs() < 1800, "took {elapsed:?}");
    pass(
        "6",
        format!(
            "search -> derive -> train -> eval: supernet valid {:.4}, test top1 {:.4}, genotype round-trip exact ({elapsed:?})",
            outcome.valid_top1, trained.metrics.top1
        ),
    );
}

#[test]
fn criterion_7_protocol_harness() {
    // Seven-run mean +/- std on a hand-computed fixture.
    let runs = [96.64, 96.44, 96.84, 96.64, 96.24, 97.04, 96.64];
    let ms = mean_std(&runs);
    assert!((ms.mean - 96.64).abs() < 1e-9);
    let hand_var: f64 = runs.iter().map(|v| (v - 96.64) * (v - 96.64)).sum::<f64>() / 6.0;
    assert!((ms.std - hand_var.sqrt()).abs() < 1e-12);
    assert_eq!(ms.n, 7);

    // Eight-model averaging with hand-computed means.
    let models: Vec<kws_nas::train::RunMetrics> = (0..8)
        .map(|i| kws_nas::train::RunMetrics {
            top1: 0.96 + 0.002 * (i % 4) as Real,
            params: 90_000 + 2_000 * i as u64,
            madds: 4_000_000 + 50_000 * i as u64,
            roc: Vec::new(),
        })
        .collect();
    let agg = aggregate_runs(&models);
    assert_eq!(agg.n, 8);
    assert!((agg.top1.mean - 0.963).abs() < 1e-12);
    assert!((agg.params_mean - 97_000.0).abs() < 1e-9);
    assert!((agg.madds_mean - 4_175_000.0).abs() < 1e-9);
    pass(
        "7",
        format!(
            "7-run mean/std and 8-model aggregation match hand computation (std {:.4})",
            ms.std
        ),
    );
}

#[test]
fn criterion_8_reproducibility_of_command_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_kws-nas");
    let config_text = |out: &Path| {
        format!(
            r#"output_dir = "{}"

[space]
num_layers = 2
channels = [8, 8]
strides = [2, 1]
in_channels = 40
stem_channels = 8
candidates = ["tc3", "tc5", "skip"]

[search]
method = "noisydarts"
epochs = 2
batch_size = 24
w_lr = 0.02
w_momentum = 0.5
alpha_lr = 0.003
noise_std = 0.1
seed = 9

[train]
epochs = 2
batch_size = 24
lr = 0.01
momentum = 0.5
seed = 4

[data]
split_seed = 0
synth = {{ speakers = 12, clips = 144, seed = 6 }}
"#,
            out.display()
        )
    };

    let run = |tag: &str| -> Vec<(String, Vec<u8>)> {
        let out_dir = dir.path().join(tag);
        let cfg_path = dir.path().join(format!("{tag}.toml"));
        std::fs::write(&cfg_path, config_text(&out_dir)).unwrap();
        let ok = |o: &std::process::Output| {
            assert!(
                o.status.success(),
                "stderr: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        };
        ok(&Command::new(bin)
            .env_remove("KWS_NAS_OUTPUT_DIR")
            .args(["search", "--config"])
            .arg(&cfg_path)
            .output()
            .unwrap());
        ok(&Command::new(bin)
            .env_remove("KWS_NAS_OUTPUT_DIR")
            .args(["train", "--config"])
            .arg(&cfg_path)
            .arg("--genotype")
            .arg(out_dir.join("genotype.json"))
            .output()
            .unwrap());
        ok(&Command::new(bin)
            .env_remove("KWS_NAS_OUTPUT_DIR")
            .args(["synth", "--speakers", "5", "--clips", "24", "--seed", "3", "--out"])
            .arg(out_dir.join("manifest.csv"))
            .output()
            .unwrap());

        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().to_string(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort_by(|a, b| a.0.cmp(&b.0));
        files
    };

    let a = run("a");
    let b = run("b");
    assert_eq!(a.len(), b.len());
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "alpha_trajectory.csv",
        "checkpoint.ckpt",
        "genotype.json",
        "manifest.csv",
        "metrics.csv",
        "roc.csv",
    ] {
        assert!(names.contains(&expected), "missing artifact {expected}");
    }
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        // The resolved config embeds the output dir, which differs by
        // construction between the two runs; everything else is bitwise.
        if name_a == "resolved_config.toml" {
            continue;
        }
        assert_eq!(
            bytes_a, bytes_b,
            "artifact {name_a} differs between identical (config, seed) runs"
        );
    }
    pass(
        "8",
        format!(
            "search/train/synth artifacts hash-identical across reruns ({} files compared)",
            a.len() - 1
        ),
    );
}
