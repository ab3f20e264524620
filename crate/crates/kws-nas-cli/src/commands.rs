//! Command implementations. Every run is reproducible from (config, seed):
//! artifacts carry no timestamps and land only under the output directory.

use crate::config::{load_data, ExperimentConfig, LoadedData};
use crate::error::{CliError, Result};
use kws_nas::audio::{stable_hash, synth_dataset, SynthSpec};
use kws_nas::model::{
    build_network, build_tc_resnet14, count_madds, count_params, Genotype, SearchSpaceConfig,
};
use kws_nas::search::{
    derive_genotype_with_report, random_genotypes, run_search, trajectory_from_csv,
    trajectory_to_csv, SearchMethod,
};
use kws_nas::train::{
    aggregate_runs, evaluate_top1, load_checkpoint, save_checkpoint, train_model, NetworkScorer,
    RunMetrics,
};
use std::path::{Path, PathBuf};

/// Flag beats environment beats config file; the environment override
/// applies to the output directory only.
fn resolve_output_dir(from_file: &Path, flag: Option<PathBuf>) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    if let Ok(dir) = std::env::var("KWS_NAS_OUTPUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    from_file.to_path_buf()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn read_genotype(path: &Path) -> Result<(Genotype, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Genotype::from_json(&text).map_err(CliError::from)
}

fn split_examples<'a>(data: &'a LoadedData, split: &str) -> Result<&'a [kws_nas::audio::Example]> {
    match split {
        "train" => Ok(&data.train),
        "valid" => Ok(&data.valid),
        "test" => Ok(&data.test),
        other => Err(CliError::usage(format!(
            "unknown split {other:?}; expected train, valid or test"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_search(
    config_path: &Path,
    method: Option<SearchMethod>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    noise_std: Option<f64>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(m) = method {
        cfg.search.method = m;
    }
    if let Some(e) = epochs {
        cfg.search.epochs = e;
    }
    if let Some(b) = batch_size {
        cfg.search.batch_size = b;
    }
    if let Some(n) = noise_std {
        cfg.search.noise_std = n as kws_nas::Real;
    }
    if let Some(s) = seed {
        cfg.search.seed = s;
    }
    cfg.output_dir = resolve_output_dir(&cfg.output_dir, output_dir);
    cfg.search.validate().map_err(CliError::from)?;

    cfg.write_resolved(&cfg.output_dir)?;
    let data = load_data(&cfg.data)?;
    let outcome = run_search(&cfg.space, &cfg.search, &data.train, &data.valid, |log| {
        let skip = log
            .skip_gate_mean
            .map(|g| format!(" skip_gate {g:.4}"))
            .unwrap_or_default();
        println!(
            "epoch {}/{} train_loss {:.4} valid_loss {:.4} gate[min {:.4} mean {:.4} max {:.4}]{skip}",
            log.epoch + 1,
            cfg.search.epochs,
            log.train_loss,
            log.valid_loss,
            log.gate_min,
            log.gate_mean,
            log.gate_max,
        );
    })
    .map_err(CliError::from)?;

    let csv = trajectory_to_csv(&outcome.trajectory);
    write_file(&cfg.output_dir.join("alpha_trajectory.csv"), &csv)?;

    let table = outcome.trajectory.last().expect("trajectory has snapshots");
    let derived = derive_genotype_with_report(table, cfg.search.method, cfg.search.threshold);
    for layer in &derived.fallback_layers {
        eprintln!("warning: layer {layer} had no gate above the threshold; kept its argmax candidate");
    }
    let genotype_json = derived.genotype.to_json(&cfg.space.config_hash());
    write_file(&cfg.output_dir.join("genotype.json"), &genotype_json)?;
    println!(
        "search complete: supernet valid top1 {:.4}, genotype at {}",
        outcome.valid_top1,
        cfg.output_dir.join("genotype.json").display()
    );
    Ok(())
}

pub fn cmd_derive(
    alpha_csv: &Path,
    method: SearchMethod,
    threshold: f64,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let text = std::fs::read_to_string(alpha_csv)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", alpha_csv.display())))?;
    let snapshots = trajectory_from_csv(&text, method).map_err(CliError::from)?;
    let table = snapshots.last().expect("csv parser rejects empty input");
    let derived = derive_genotype_with_report(table, method, threshold as kws_nas::Real);
    for layer in &derived.fallback_layers {
        eprintln!("warning: layer {layer} had no gate above the threshold; kept its argmax candidate");
    }
    let hash = match config_path {
        Some(p) => {
            let cfg = ExperimentConfig::load(p)?;
            cfg.space
                .validate_genotype(&derived.genotype)
                .map_err(CliError::from)?;
            cfg.space.config_hash()
        }
        None => "unspecified".to_string(),
    };
    write_file(out, &derived.genotype.to_json(&hash))?;
    println!("genotype written to {}", out.display());
    Ok(())
}

pub fn cmd_train(
    config_path: &Path,
    genotype_path: &Path,
    epochs: Option<usize>,
    seed: Option<u64>,
    seeds: u64,
    output_dir: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.output_dir = resolve_output_dir(&cfg.output_dir, output_dir);
    cfg.train.validate().map_err(CliError::from)?;
    if seeds == 0 {
        return Err(CliError::usage("--seeds must be at least 1".to_string()));
    }

    let (genotype, _hash) = read_genotype(genotype_path)?;
    cfg.space
        .validate_genotype(&genotype)
        .map_err(CliError::from)?;
    cfg.write_resolved(&cfg.output_dir)?;
    let data = load_data(&cfg.data)?;

    // The run id names the experiment, not its location: hash the config
    // with the output directory blanked so moving a run leaves it stable.
    let mut id_cfg = cfg.clone();
    id_cfg.output_dir = PathBuf::new();
    let run_id = format!("{:08x}", stable_hash(id_cfg.resolved_toml().as_bytes()) as u32);
    let mut metrics_csv = String::from(kws_nas::train::METRICS_CSV_HEADER);
    let mut runs: Vec<RunMetrics> = Vec::new();
    for k in 0..seeds {
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = cfg.train.seed + k;
        let trained = train_model(
            &genotype,
            &cfg.space,
            &data.train,
            &data.valid,
            &data.test,
            &train_cfg,
        )
        .map_err(CliError::from)?;
        for (epoch, loss, valid_top1) in &trained.history {
            println!(
                "seed {} epoch {}/{} train_loss {loss:.4} valid_top1 {valid_top1:.4}",
                train_cfg.seed,
                epoch + 1,
                train_cfg.epochs
            );
        }
        let ckpt_name = if seeds == 1 {
            "checkpoint.ckpt".to_string()
        } else {
            format!("checkpoint_s{}.ckpt", train_cfg.seed)
        };
        save_checkpoint(&cfg.output_dir.join(&ckpt_name), &trained.network)
            .map_err(CliError::from)?;
        write_file(
            &cfg.output_dir.join(if seeds == 1 {
                "roc.csv".to_string()
            } else {
                format!("roc_s{}.csv", train_cfg.seed)
            }),
            &trained.metrics.roc_csv(),
        )?;
        metrics_csv.push_str(&trained.metrics.csv_row(&run_id, train_cfg.seed));
        println!(
            "seed {}: test top1 {:.4} params {} madds {}",
            train_cfg.seed, trained.metrics.top1, trained.metrics.params, trained.metrics.madds
        );
        runs.push(trained.metrics);
    }
    write_file(&cfg.output_dir.join("metrics.csv"), &metrics_csv)?;
    if seeds > 1 {
        println!("aggregate: {}", aggregate_runs(&runs).summary_line());
    }
    Ok(())
}

pub fn cmd_eval(
    config_path: &Path,
    checkpoint: Option<&Path>,
    genotype: Option<&Path>,
    seed: Option<u64>,
    split: &str,
) -> Result<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    let data = load_data(&cfg.data)?;
    let examples = split_examples(&data, split)?;
    let mut net = match (checkpoint, genotype) {
        (Some(path), None) => load_checkpoint(path).map_err(CliError::from)?,
        (None, Some(path)) => {
            let (g, _) = read_genotype(path)?;
            cfg.space.validate_genotype(&g).map_err(CliError::from)?;
            build_network(&g, &cfg.space, seed.unwrap_or(0)).map_err(CliError::from)?
        }
        _ => {
            return Err(CliError::usage(
                "eval needs exactly one of --checkpoint or --genotype".to_string(),
            ))
        }
    };
    let top1 = evaluate_top1(&mut NetworkScorer(&mut net), examples).map_err(CliError::from)?;
    println!("top1 {top1:.4} on {split} ({} clips)", examples.len());
    Ok(())
}

pub fn cmd_count(
    baseline: Option<&str>,
    multiplier: f64,
    genotype: Option<&Path>,
    config_path: Option<&Path>,
    t_frames: usize,
) -> Result<()> {
    let net = match (baseline, genotype) {
        (Some(name), None) => {
            if !name.eq_ignore_ascii_case("tc-resnet-14") {
                return Err(CliError::usage(format!(
                    "unknown baseline {name:?}; available: tc-resnet-14"
                )));
            }
            build_tc_resnet14(multiplier, 0).map_err(CliError::from)?
        }
        (None, Some(path)) => {
            let (g, _) = read_genotype(path)?;
            let space = match config_path {
                Some(p) => ExperimentConfig::load(p)?.space,
                None => SearchSpaceConfig::default(),
            };
            space.validate_genotype(&g).map_err(CliError::from)?;
            build_network(&g, &space, 0).map_err(CliError::from)?
        }
        _ => {
            return Err(CliError::usage(
                "count needs exactly one of --baseline or --genotype".to_string(),
            ))
        }
    };
    println!("params {}", count_params(&net));
    println!("madds {}", count_madds(&net, t_frames));
    Ok(())
}

pub fn cmd_roc(
    config_path: &Path,
    checkpoint: &Path,
    out: Option<&Path>,
    split: &str,
) -> Result<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    let data = load_data(&cfg.data)?;
    let examples = split_examples(&data, split)?;
    let mut net = load_checkpoint(checkpoint).map_err(CliError::from)?;
    let points = kws_nas::train::compute_roc(&mut NetworkScorer(&mut net), examples, None)
        .map_err(CliError::from)?;
    let metrics = RunMetrics {
        top1: 0.0,
        params: 0,
        madds: 0,
        roc: points,
    };
    let default_out = cfg.output_dir.join("roc.csv");
    let out = out.unwrap_or(&default_out);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    write_file(out, &metrics.roc_csv())?;
    println!("roc written to {}", out.display());
    Ok(())
}

pub fn cmd_synth(speakers: usize, clips: usize, seed: u64, out: &Path) -> Result<()> {
    let manifest = synth_dataset(&SynthSpec {
        speakers,
        clips,
        seed,
    })
    .map_err(CliError::from_audio)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    manifest.write(out).map_err(CliError::from_audio)?;
    println!("manifest with {} clips written to {}", clips, out.display());
    Ok(())
}

pub fn cmd_random(
    config_path: Option<&Path>,
    count: usize,
    seed: u64,
    output_dir: &Path,
) -> Result<()> {
    let space = match config_path {
        Some(p) => ExperimentConfig::load(p)?.space,
        None => SearchSpaceConfig::default(),
    };
    std::fs::create_dir_all(output_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", output_dir.display())))?;
    let hash = space.config_hash();
    for (i, g) in random_genotypes(&space, count, seed).iter().enumerate() {
        let path = output_dir.join(format!("random_{i}.json"));
        write_file(&path, &g.to_json(&hash))?;
        println!("{}", path.display());
    }
    Ok(())
}
