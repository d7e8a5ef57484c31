//! Feature extraction with an on-disk cache keyed by content hash.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ser_core::audio::{decode_wav, standardize_duration, AudioClip, IngestConfig};
use ser_core::augment::{clip_key, render, AugmentConfig};
use ser_core::corpus::{AugmentTag, ManifestRow};
use ser_core::dsp::{read_features, write_features, DspConfig, MfccExtractor, MfccFeatures};

const KEY_DOMAIN: &[u8] = b"ser-features-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Time-averaged coefficient vector, one input channel.
    Pooled,
    /// Full frame sequence with coefficients as channels.
    Sequence,
}

/// Everything that determines the model input for a decoded file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub ingest: IngestConfig,
    pub dsp: DspConfig,
    pub no_mfcc: bool,
    pub input_mode: InputMode,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        self.dsp.validate(self.ingest.target_rate)?;
        Ok(())
    }

    pub fn extractor(&self) -> Result<MfccExtractor> {
        Ok(MfccExtractor::new(&self.dsp, self.ingest.target_rate)?)
    }

    /// Frames per standardized clip.
    pub fn frames(&self) -> usize {
        let len = self.ingest.target_len();
        if len < self.dsp.frame_len {
            0
        } else {
            1 + (len - self.dsp.frame_len) / self.dsp.hop
        }
    }

    /// `(channels, length)` of one model input.
    pub fn input_shape(&self) -> (usize, usize) {
        match self.input_mode {
            InputMode::Pooled => (1, self.dsp.n_coeff),
            InputMode::Sequence => (self.dsp.n_coeff, self.frames()),
        }
    }

    /// Flattened model input for one clip's features.
    pub fn model_input(&self, f: &MfccFeatures) -> Vec<f64> {
        match self.input_mode {
            InputMode::Pooled => f.pooled.clone().unwrap_or_else(|| f.time_mean()),
            InputMode::Sequence => f.transposed(),
        }
    }

    /// Decoded audio to features, bypassing the cache.
    pub fn compute(&self, extractor: &MfccExtractor, clip: &AudioClip) -> Result<MfccFeatures> {
        let clip = standardize_duration(clip, &self.ingest)?;
        Ok(if self.no_mfcc {
            extractor.extract_frame_energies(&clip)?
        } else {
            extractor.extract(&clip)?
        })
    }
}

/// Removes the lock file when dropped.
#[derive(Debug)]
pub struct FeatureCache {
    dir: PathBuf,
    lock: PathBuf,
}

impl FeatureCache {
    /// Creates the directory if needed and takes the advisory lock.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating feature cache {}", dir.display()))?;
        let lock = dir.join(".lock");
        let mut f = OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                anyhow!(
                    "feature cache {} is in use by another process (remove {} if none is running)",
                    dir.display(),
                    lock.display()
                )
            } else {
                anyhow::Error::new(e).context(format!("locking {}", lock.display()))
            }
        })?;
        writeln!(f, "{}", std::process::id())?;
        Ok(Self {
            dir: dir.to_path_buf(),
            lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.feat"))
    }
}

impl Drop for FeatureCache {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Hex SHA-256 over the file bytes, the feature spec and, for augmented rows,
/// the augmentation settings and clip key.
pub fn cache_key(bytes: &[u8], spec: &FeatureSpec, row: &ManifestRow, augment: &AugmentConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(KEY_DOMAIN);
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
    h.update(serde_json::to_vec(&spec.ingest)?);
    h.update(serde_json::to_vec(&spec.dsp)?);
    h.update([spec.no_mfcc as u8]);
    h.update(serde_json::to_vec(&row.augment_tag)?);
    if row.augment_tag != AugmentTag::None {
        h.update(serde_json::to_vec(augment)?);
        h.update(clip_key(&row.path).to_le_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ExtractStats {
    pub computed: usize,
    pub cached: usize,
    pub failed: usize,
}

fn load_or_compute(
    row: &ManifestRow,
    spec: &FeatureSpec,
    augment: &AugmentConfig,
    extractor: &MfccExtractor,
    cache: Option<&FeatureCache>,
) -> Result<(MfccFeatures, bool)> {
    let bytes = fs::read(&row.path).with_context(|| format!("reading {}", row.path))?;
    let key = match cache {
        Some(_) => Some(cache_key(&bytes, spec, row, augment)?),
        None => None,
    };
    if let (Some(c), Some(k)) = (cache, &key) {
        let path = c.record_path(k);
        if path.is_file() {
            let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            return Ok((read_features(BufReader::new(f))?, true));
        }
    }
    let clip = decode_wav(&bytes)
        .with_context(|| format!("decoding {}", row.path))?
        .with_source(row.path.clone());
    let clip = standardize_duration(&clip, &spec.ingest)?;
    let clip = render(&clip, row.augment_tag, clip_key(&row.path), augment)?;
    let features = spec.compute(extractor, &clip)?;
    if let (Some(c), Some(k)) = (cache, &key) {
        // rows with identical content can race on the same key
        let worker = rayon::current_thread_index().unwrap_or(usize::MAX);
        let tmp = c.dir.join(format!("{k}.tmp{}-{worker}", std::process::id()));
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_features(&mut w, &features)?;
        w.flush()?;
        drop(w);
        fs::rename(&tmp, c.record_path(k))?;
    }
    Ok((features, false))
}

/// Features for every row, in row order, extracted in parallel. Failures
/// are returned per row rather than aborting the batch.
pub fn extract_rows(
    rows: &[ManifestRow],
    spec: &FeatureSpec,
    augment: &AugmentConfig,
    cache: Option<&FeatureCache>,
) -> Result<(Vec<Result<MfccFeatures>>, ExtractStats)> {
    spec.validate()?;
    augment.validate()?;
    let extractor = spec.extractor()?;
    let results: Vec<Result<(MfccFeatures, bool)>> = rows
        .par_iter()
        .map(|row| load_or_compute(row, spec, augment, &extractor, cache))
        .collect();
    let mut stats = ExtractStats::default();
    let features = results
        .into_iter()
        .map(|r| match r {
            Ok((f, hit)) => {
                if hit {
                    stats.cached += 1;
                } else {
                    stats.computed += 1;
                }
                Ok(f)
            }
            Err(e) => {
                stats.failed += 1;
                Err(e)
            }
        })
        .collect();
    Ok((features, stats))
}

/// Like [`extract_rows`] but fails if any row failed, reporting the first
/// failure and the total count.
pub fn extract_all(
    rows: &[ManifestRow],
    spec: &FeatureSpec,
    augment: &AugmentConfig,
    cache: Option<&FeatureCache>,
) -> Result<(Vec<MfccFeatures>, ExtractStats)> {
    let (results, stats) = extract_rows(rows, spec, augment, cache)?;
    let mut ok = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(f) => ok.push(f),
            Err(e) => errors.push(e),
        }
    }
    if let Some(first) = errors.into_iter().next() {
        return Err(first.context(format!("{} of {} rows failed feature extraction", stats.failed, rows.len())));
    }
    Ok((ok, stats))
}
