use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use ser_core::audio::{AudioClip, IngestConfig};
use ser_core::augment::{expand_rows, AugmentConfig};
use ser_core::corpus::{label_scheme, read_manifest, scan_dataset, write_manifest, AugmentTag, DatasetId, ManifestRow, Split};
use ser_core::dsp::{demo_spectra, dominant_peaks, DspConfig, Spectrum, DEMO_TONES_HZ};
use ser_core::learn::{
    encode_labels, evaluate, predict_proba, split_dataset, train, EpochLog, Sample, TrainConfig,
};
use ser_core::nn::{read_checkpoint, write_checkpoint, AttentionCnn, ModelConfig};

use crate::features::{extract_all, extract_rows, FeatureCache, FeatureSpec, InputMode};
use crate::{AugmentArgs, Cli, Command, FeatureArgs, UserError};

const AUGMENT_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;

/// Independent seed for one consumer of randomness.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stored in the checkpoint so evaluation and prediction rebuild the same
/// inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    labels: Vec<String>,
    features: FeatureSpec,
    augment: AugmentConfig,
    augment_before_split: bool,
    no_augment: bool,
    train: TrainConfig,
    best_epoch: Option<usize>,
}

fn user(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

fn feature_spec(args: &FeatureArgs) -> FeatureSpec {
    FeatureSpec {
        ingest: IngestConfig {
            target_rate: args.sample_rate,
            target_duration: args.duration,
            ..IngestConfig::default()
        },
        dsp: DspConfig {
            n_coeff: args.n_coeff,
            fmax: args.sample_rate as f64 / 2.0,
            ..DspConfig::default()
        },
        no_mfcc: args.no_mfcc,
        input_mode: args.input_mode,
    }
}

fn load_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let rows = read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))?;
    if rows.is_empty() {
        return Err(user(format!("manifest {} has no rows", path.display())));
    }
    Ok(rows)
}

/// The dataset's full label set when the manifest holds one corpus,
/// otherwise the sorted distinct labels.
fn class_labels(rows: &[ManifestRow]) -> Vec<String> {
    let first = rows[0].dataset;
    if rows.iter().all(|r| r.dataset == first) {
        return label_scheme(first).labels.iter().map(|l| l.to_string()).collect();
    }
    let mut labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    labels
}

fn samples(spec: &FeatureSpec, rows: &[ManifestRow], labels: &[String], feats: &[ser_core::dsp::MfccFeatures]) -> Result<Vec<Sample>> {
    let idx = encode_labels(&rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(), labels)?;
    Ok(feats
        .iter()
        .zip(idx)
        .map(|(f, label)| Sample {
            features: spec.model_input(f),
            label,
        })
        .collect())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Scan { dataset, root, manifest } => scan(dataset, &root, &manifest),
        Command::Augment { manifest, out, augment } => augment_cmd(&manifest, &out, &augment, seed),
        Command::Extract {
            manifest,
            features,
            augment,
        } => extract(&manifest, &features, &augment, seed, &cli.cache_dir),
        Command::Train {
            manifest,
            checkpoint,
            log,
            lr,
            epochs,
            batch_size,
            split_ratio,
            no_augment,
            augment_before_split,
            features,
            augment,
        } => {
            let cfg = TrainConfig {
                learning_rate: lr,
                batch_size,
                max_epochs: epochs,
                split_ratio,
                seed: derive_seed(seed, SHUFFLE_STREAM),
                shuffle: true,
            };
            let opts = TrainOptions {
                no_augment,
                augment_before_split,
                spec: feature_spec(&features),
                augment: augment.config(derive_seed(seed, AUGMENT_STREAM)),
                seed,
            };
            let log = log.unwrap_or_else(|| with_suffix(&checkpoint, ".log.jsonl"));
            train_cmd(&manifest, &checkpoint, &log, &cfg, &opts, &cli.cache_dir)
        }
        Command::Eval {
            checkpoint,
            manifest,
            out_dir,
            all_rows,
        } => eval(&checkpoint, &manifest, &out_dir, all_rows, &cli.cache_dir),
        Command::Predict { checkpoint, wav } => predict(&checkpoint, &wav),
        Command::DemoSpectra { out_dir } => demo(&out_dir),
    }
}

fn scan(dataset: DatasetId, root: &Path, out: &Path) -> Result<()> {
    let report = scan_dataset(root, dataset)?;
    if !report.skipped.is_empty() {
        log::warn!("skipped {} files that do not follow the {dataset} naming scheme:", report.skipped.len());
        for p in &report.skipped {
            log::warn!("  {}", p.display());
        }
    }
    if let Some(w) = &report.count_warning {
        log::warn!("{w}");
    }
    write_manifest(&report.rows, out)?;
    println!("wrote {} rows to {}", report.rows.len(), out.display());
    Ok(())
}

fn augment_cmd(manifest: &Path, out: &Path, args: &AugmentArgs, seed: u64) -> Result<()> {
    let rows = load_manifest(manifest)?;
    let cfg = args.config(derive_seed(seed, AUGMENT_STREAM));
    cfg.validate()?;
    let (test, rest): (Vec<ManifestRow>, Vec<ManifestRow>) = rows.into_iter().partition(|r| r.split == Split::Test);
    let mut expanded = expand_rows(&rest, &cfg);
    let added = expanded.len() - rest.len();
    expanded.extend(test);
    write_manifest(&expanded, out)?;
    println!("wrote {} rows ({added} augmented) to {}", expanded.len(), out.display());
    Ok(())
}

fn extract(manifest: &Path, features: &FeatureArgs, augment: &AugmentArgs, seed: u64, cache_dir: &Path) -> Result<()> {
    let rows = load_manifest(manifest)?;
    let spec = feature_spec(features);
    let cache = FeatureCache::open(cache_dir)?;
    let (results, stats) = extract_rows(&rows, &spec, &augment.config(derive_seed(seed, AUGMENT_STREAM)), Some(&cache))?;
    for (row, r) in rows.iter().zip(&results) {
        if let Err(e) = r {
            log::error!("{} ({:?}): {e:#}", row.path, row.augment_tag);
        }
    }
    println!(
        "features in {}: {} extracted, {} cached, {} failed",
        cache.dir().display(),
        stats.computed,
        stats.cached,
        stats.failed
    );
    if stats.failed > 0 {
        return Err(user(format!("{} of {} rows could not be extracted", stats.failed, rows.len())));
    }
    Ok(())
}

struct TrainOptions {
    no_augment: bool,
    augment_before_split: bool,
    spec: FeatureSpec,
    augment: AugmentConfig,
    seed: u64,
}

fn train_cmd(
    manifest: &Path,
    checkpoint: &Path,
    log_path: &Path,
    cfg: &TrainConfig,
    opts: &TrainOptions,
    cache_dir: &Path,
) -> Result<()> {
    cfg.validate()?;
    opts.spec.validate()?;
    opts.augment.validate()?;
    let rows = load_manifest(manifest)?;
    if rows.iter().any(|r| r.augment_tag != AugmentTag::None) {
        return Err(user(
            "train expects a manifest of original clips; augmentation is applied internally (see --no-augment)",
        ));
    }
    let labels = class_labels(&rows);
    encode_labels(&rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(), &labels)?;

    let split_seed = derive_seed(opts.seed, SPLIT_STREAM);
    let (train_rows, test_rows) = if opts.augment_before_split {
        let s = split_dataset(&expand_rows(&rows, &opts.augment), cfg.split_ratio, split_seed)?;
        (s.train, s.test)
    } else {
        let s = split_dataset(&rows, cfg.split_ratio, split_seed)?;
        let train = if opts.no_augment {
            s.train
        } else {
            expand_rows(&s.train, &opts.augment)
        };
        (train, s.test)
    };
    let split_path = with_suffix(checkpoint, ".split.csv");
    let all: Vec<ManifestRow> = train_rows.iter().chain(&test_rows).cloned().collect();
    write_manifest(&all, &split_path)?;
    log::info!(
        "{} training rows, {} test rows; split written to {}",
        train_rows.len(),
        test_rows.len(),
        split_path.display()
    );

    let cache = FeatureCache::open(cache_dir)?;
    let (feats, stats) = extract_all(&all, &opts.spec, &opts.augment, Some(&cache))?;
    log::info!("features: {} extracted, {} cached", stats.computed, stats.cached);
    drop(cache);
    let mut samples_all = samples(&opts.spec, &all, &labels, &feats)?;
    let test_set = samples_all.split_off(train_rows.len());
    let train_set = samples_all;

    let (channels, len) = opts.spec.input_shape();
    let model_cfg = match opts.spec.input_mode {
        InputMode::Pooled => ModelConfig::pooled(len, labels.len()),
        InputMode::Sequence => ModelConfig::sequence(channels, len, labels.len()),
    };
    let model = AttentionCnn::new(model_cfg, derive_seed(opts.seed, INIT_STREAM))?;
    log::info!("model has {} parameters", model.num_parameters());

    let mut log_file = BufWriter::new(File::create(log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut log_err: Option<std::io::Error> = None;
    let epochs = cfg.max_epochs;
    let outcome = train(model, &train_set, &test_set, cfg, |e: &EpochLog| {
        let val = match (e.val_loss, e.val_acc) {
            (Some(l), Some(a)) => format!(", val loss {l:.4}, val acc {:.2}%", 100.0 * a),
            _ => String::new(),
        };
        log::info!(
            "epoch {}/{epochs}: loss {:.4}, acc {:.2}%{val} ({:.1}s)",
            e.epoch,
            e.train_loss,
            100.0 * e.train_acc,
            e.seconds
        );
        let line = serde_json::to_string(e).expect("epoch log serializes");
        if let Err(err) = writeln!(log_file, "{line}").and_then(|_| log_file.flush()) {
            log_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = log_err {
        return Err(anyhow::Error::new(err).context(format!("writing {}", log_path.display())));
    }

    let meta = CheckpointMeta {
        labels,
        features: opts.spec.clone(),
        augment: opts.augment.clone(),
        augment_before_split: opts.augment_before_split,
        no_augment: opts.no_augment,
        train: cfg.clone(),
        best_epoch: outcome.best_epoch,
    };
    let mut w = BufWriter::new(File::create(checkpoint).with_context(|| format!("creating {}", checkpoint.display()))?);
    write_checkpoint(&mut w, &outcome.best, &serde_json::to_value(&meta)?)?;
    w.flush()?;
    match outcome.best_epoch.and_then(|e| outcome.log.get(e - 1)) {
        Some(best) => println!(
            "best epoch {} (val acc {}); checkpoint {}",
            best.epoch,
            best.val_acc.map_or("n/a".to_string(), |a| format!("{:.2}%", 100.0 * a)),
            checkpoint.display()
        ),
        None => println!("no epochs run; wrote initial model to {}", checkpoint.display()),
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(AttentionCnn, CheckpointMeta)> {
    let f = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    let ckpt = read_checkpoint(std::io::BufReader::new(f)).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let meta: CheckpointMeta = serde_json::from_value(ckpt.meta)
        .map_err(|e| user(format!("checkpoint {} lacks feature metadata: {e}", path.display())))?;
    if meta.labels.len() != ckpt.model.num_classes() {
        return Err(user(format!(
            "checkpoint {} lists {} labels for a {}-class model",
            path.display(),
            meta.labels.len(),
            ckpt.model.num_classes()
        )));
    }
    Ok((ckpt.model, meta))
}

fn eval(checkpoint: &Path, manifest: &Path, out_dir: &Path, all_rows: bool, cache_dir: &Path) -> Result<()> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let rows = load_manifest(manifest)?;
    let has_test = rows.iter().any(|r| r.split == Split::Test);
    let rows: Vec<ManifestRow> = if all_rows || !has_test {
        if !all_rows {
            log::info!("no rows marked test; scoring all {} rows", rows.len());
        }
        rows
    } else {
        rows.into_iter().filter(|r| r.split == Split::Test).collect()
    };
    encode_labels(&rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(), &meta.labels)?;
    let cache = FeatureCache::open(cache_dir)?;
    let (feats, _) = extract_all(&rows, &meta.features, &meta.augment, Some(&cache))?;
    drop(cache);
    let set = samples(&meta.features, &rows, &meta.labels, &feats)?;
    let report = evaluate(&model, &set, &meta.labels, meta.train.batch_size)?;
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("confusion.csv");
    let json_path = out_dir.join("summary.json");
    report.write_confusion_csv(BufWriter::new(File::create(&csv_path)?))?;
    let mut w = BufWriter::new(File::create(&json_path)?);
    report.write_json(&mut w)?;
    writeln!(w)?;
    w.flush()?;
    println!(
        "accuracy: {:.2}% ({}/{}); wrote {} and {}",
        100.0 * report.accuracy,
        report.correct,
        report.total,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn predict(checkpoint: &Path, wav: &Path) -> Result<()> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let clip = AudioClip::load(wav)?;
    let features = meta.features.compute(&meta.features.extractor()?, &clip)?;
    let sample = Sample {
        features: meta.features.model_input(&features),
        label: 0,
    };
    let probs = predict_proba(&model, &[sample], 1)?.remove(0);
    let best = (0..probs.len()).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
    println!("prediction: {}", meta.labels[best]);
    for (label, p) in meta.labels.iter().zip(&probs) {
        println!("{label}\t{p:.6}");
    }
    Ok(())
}

fn write_spectrum_csv(path: &Path, spec: &Spectrum) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["bin_index", "frequency_hz", "power"])?;
    for (k, p) in spec.power.iter().enumerate() {
        w.write_record([k.to_string(), spec.frequency(k).to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn demo(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let spectra = demo_spectra();
    for (name, spec) in spectra.named() {
        let path = out_dir.join(format!("{name}.csv"));
        write_spectrum_csv(&path, spec)?;
        let peaks = dominant_peaks(spec, DEMO_TONES_HZ.len());
        let mut tones: Vec<(f64, f64)> = DEMO_TONES_HZ
            .iter()
            .map(|&f| (f, spec.power[(f / spec.bin_hz).round() as usize]))
            .collect();
        tones.sort_by(|a, b| b.1.total_cmp(&a.1));
        let order: Vec<String> = tones.iter().map(|(f, _)| format!("{f} Hz")).collect();
        let peak_list: Vec<String> = peaks.iter().map(|b| b.to_string()).collect();
        println!(
            "{name}: peaks at bins [{}]; power order {} ({})",
            peak_list.join(", "),
            order.join(" > "),
            path.display()
        );
    }
    Ok(())
}
