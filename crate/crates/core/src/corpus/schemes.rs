//! Per-corpus label sets and filename conventions.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "SAVEE")]
    Savee,
    #[serde(rename = "RAVDESS")]
    Ravdess,
    #[serde(rename = "CREMA-D")]
    CremaD,
    #[serde(rename = "TESS")]
    Tess,
    #[serde(rename = "EMO-DB")]
    EmoDb,
    #[serde(rename = "EMOVO")]
    Emovo,
}

impl DatasetId {
    pub const ALL: [DatasetId; 6] = [
        DatasetId::Savee,
        DatasetId::Ravdess,
        DatasetId::CremaD,
        DatasetId::Tess,
        DatasetId::EmoDb,
        DatasetId::Emovo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Savee => "SAVEE",
            DatasetId::Ravdess => "RAVDESS",
            DatasetId::CremaD => "CREMA-D",
            DatasetId::Tess => "TESS",
            DatasetId::EmoDb => "EMO-DB",
            DatasetId::Emovo => "EMOVO",
        }
    }

    /// Clip count of the complete published corpus, where known.
    pub fn expected_count(self) -> Option<usize> {
        match self {
            DatasetId::Ravdess => Some(1440),
            DatasetId::Tess => Some(2800),
            DatasetId::CremaD => Some(7442),
            DatasetId::EmoDb => Some(535),
            DatasetId::Savee | DatasetId::Emovo => None,
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_uppercase())
            .collect();
        Ok(match norm.as_str() {
            "SAVEE" => DatasetId::Savee,
            "RAVDESS" => DatasetId::Ravdess,
            "CREMAD" => DatasetId::CremaD,
            "TESS" => DatasetId::Tess,
            "EMODB" => DatasetId::EmoDb,
            "EMOVO" => DatasetId::Emovo,
            _ => return Err(CorpusError::UnknownDataset(s.to_string())),
        })
    }
}

/// Ordered label list of one corpus; the position of a label is its class
/// index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub dataset: DatasetId,
    pub labels: Vec<String>,
}

impl LabelScheme {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }
}

const RAVDESS_CODES: &[(&str, &str)] = &[
    ("01", "neutral"),
    ("02", "calm"),
    ("03", "happy"),
    ("04", "sad"),
    ("05", "angry"),
    ("06", "fearful"),
    ("07", "disgust"),
    ("08", "surprised"),
];

const SAVEE_CODES: &[(&str, &str)] = &[
    ("a", "anger"),
    ("d", "disgust"),
    ("f", "fear"),
    ("h", "happiness"),
    ("n", "neutral"),
    ("sa", "sadness"),
    ("su", "surprise"),
];

const CREMA_CODES: &[(&str, &str)] = &[
    ("ANG", "anger"),
    ("DIS", "disgust"),
    ("FEA", "fear"),
    ("HAP", "happy"),
    ("NEU", "neutral"),
    ("SAD", "sad"),
];

const TESS_LABELS: &[&str] = &[
    "angry",
    "disgust",
    "fear",
    "happy",
    "neutral",
    "pleasant_surprise",
    "sad",
];

// German initials: Wut, Langeweile, Ekel, Angst, Freude, Trauer, Neutral
const EMODB_CODES: &[(&str, &str)] = &[
    ("W", "anger"),
    ("L", "boredom"),
    ("E", "disgust"),
    ("A", "fear"),
    ("F", "happiness"),
    ("T", "sadness"),
    ("N", "neutral"),
];

// Italian stems: disgusto, gioia, neutro, paura, rabbia, sorpresa, tristezza
const EMOVO_CODES: &[(&str, &str)] = &[
    ("dis", "disgust"),
    ("gio", "joy"),
    ("neu", "neutral"),
    ("pau", "fear"),
    ("rab", "anger"),
    ("sor", "surprise"),
    ("tri", "sadness"),
];

fn code_labels(codes: &[(&str, &str)]) -> Vec<String> {
    codes.iter().map(|(_, l)| l.to_string()).collect()
}

fn lookup(codes: &[(&str, &'static str)], code: &str) -> Option<&'static str> {
    codes.iter().find(|(c, _)| *c == code).map(|(_, l)| *l)
}

pub fn label_scheme(dataset: DatasetId) -> LabelScheme {
    let labels = match dataset {
        DatasetId::Ravdess => code_labels(RAVDESS_CODES),
        DatasetId::Savee => code_labels(SAVEE_CODES),
        DatasetId::CremaD => code_labels(CREMA_CODES),
        DatasetId::Tess => TESS_LABELS.iter().map(|s| s.to_string()).collect(),
        DatasetId::EmoDb => code_labels(EMODB_CODES),
        DatasetId::Emovo => code_labels(EMOVO_CODES),
    };
    LabelScheme { dataset, labels }
}

/// Label scheme by dataset name.
pub fn label_scheme_by_name(name: &str) -> Result<LabelScheme, CorpusError> {
    Ok(label_scheme(name.parse()?))
}

/// Result of applying a corpus naming convention to one file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Labeled { label: String, speaker: String },
    /// The file does not follow the corpus convention at all.
    Unrecognized,
}

fn stem(path: &Path) -> Option<&str> {
    path.file_stem().and_then(|s| s.to_str())
}

fn parent_name(path: &Path) -> Option<&str> {
    path.parent()
        .and_then(|p| p.file_name())
        .and_then(|s| s.to_str())
}

fn ambiguous(path: &Path, why: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        path: path.display().to_string(),
        reason: why.into(),
    }
}

fn labeled(label: &str, speaker: &str) -> Parsed {
    Parsed::Labeled {
        label: label.to_string(),
        speaker: speaker.to_string(),
    }
}

/// Parses label and speaker from a file path following the corpus naming
/// convention. A file that matches the convention's shape but carries an
/// unknown code is an error; a file of a different shape is
/// [`Parsed::Unrecognized`].
pub fn parse_path(dataset: DatasetId, path: &Path) -> Result<Parsed, CorpusError> {
    let Some(stem) = stem(path) else {
        return Ok(Parsed::Unrecognized);
    };
    match dataset {
        DatasetId::Ravdess => {
            // modality-channel-emotion-intensity-statement-repetition-actor
            let fields: Vec<&str> = stem.split('-').collect();
            if fields.len() != 7
                || !fields
                    .iter()
                    .all(|f| f.len() == 2 && f.bytes().all(|b| b.is_ascii_digit()))
            {
                return Ok(Parsed::Unrecognized);
            }
            let label = lookup(RAVDESS_CODES, fields[2])
                .ok_or_else(|| ambiguous(path, format!("unknown emotion code {}", fields[2])))?;
            Ok(labeled(label, fields[6]))
        }
        DatasetId::Savee => {
            // "DC_sa01" or "<speaker dir>/sa01"
            let (speaker, utt) = match stem.split_once('_') {
                Some((s, u)) => (s, u),
                None => (parent_name(path).unwrap_or(""), stem),
            };
            let code: String = utt.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
            let digits = &utt[code.len()..];
            if code.is_empty()
                || digits.is_empty()
                || !digits.bytes().all(|b| b.is_ascii_digit())
                || speaker.is_empty()
            {
                return Ok(Parsed::Unrecognized);
            }
            let label = lookup(SAVEE_CODES, &code)
                .ok_or_else(|| ambiguous(path, format!("unknown emotion code {code}")))?;
            Ok(labeled(label, speaker))
        }
        DatasetId::CremaD => {
            // actor_sentence_emotion_level
            let fields: Vec<&str> = stem.split('_').collect();
            if fields.len() != 4 || !fields[0].bytes().all(|b| b.is_ascii_digit()) {
                return Ok(Parsed::Unrecognized);
            }
            let label = lookup(CREMA_CODES, fields[2])
                .ok_or_else(|| ambiguous(path, format!("unknown emotion code {}", fields[2])))?;
            Ok(labeled(label, fields[0]))
        }
        DatasetId::Tess => {
            let from_dir = parent_name(path).and_then(tess_label);
            let speaker = stem.split('_').next().unwrap_or("");
            let from_name = stem.rsplit('_').next().and_then(tess_label);
            match (from_dir, from_name) {
                (Some(d), Some(n)) if d != n => Err(ambiguous(
                    path,
                    format!("folder says {d}, filename says {n}"),
                )),
                (Some(l), _) | (None, Some(l)) if stem.contains('_') => Ok(labeled(l, speaker)),
                _ => Ok(Parsed::Unrecognized),
            }
        }
        DatasetId::EmoDb => {
            // speaker(2) text(3) emotion(1) version(1+), e.g. 03a01Wa
            let b = stem.as_bytes();
            if b.len() < 7
                || !b[..2].iter().all(u8::is_ascii_digit)
                || !b[3..5].iter().all(u8::is_ascii_digit)
                || !b[2].is_ascii_lowercase()
            {
                return Ok(Parsed::Unrecognized);
            }
            let code = &stem[5..6];
            let label = lookup(EMODB_CODES, code)
                .ok_or_else(|| ambiguous(path, format!("unknown emotion letter {code}")))?;
            Ok(labeled(label, &stem[..2]))
        }
        DatasetId::Emovo => {
            // emotion-speaker-sentence, e.g. dis-f1-b1
            let fields: Vec<&str> = stem.split('-').collect();
            if fields.len() != 3 || fields[0].len() != 3 {
                return Ok(Parsed::Unrecognized);
            }
            let label = lookup(EMOVO_CODES, &fields[0].to_ascii_lowercase())
                .ok_or_else(|| ambiguous(path, format!("unknown emotion code {}", fields[0])))?;
            Ok(labeled(label, fields[1]))
        }
    }
}

/// Maps a TESS folder name ("OAF_angry", "YAF_pleasant_surprised") or
/// filename suffix ("angry", "ps") to a label.
fn tess_label(name: &str) -> Option<&'static str> {
    let lower = name.to_ascii_lowercase();
    let tail = match lower.split_once('_') {
        Some((prefix, rest)) if prefix == "oaf" || prefix == "yaf" => rest.to_string(),
        _ => lower,
    };
    Some(match tail.as_str() {
        "angry" | "anger" => "angry",
        "disgust" | "disgusted" => "disgust",
        "fear" | "fearful" => "fear",
        "happy" | "happiness" => "happy",
        "neutral" => "neutral",
        "ps" | "pleasant_surprise" | "pleasant_surprised" | "pleasant surprise" => {
            "pleasant_surprise"
        }
        "sad" | "sadness" => "sad",
        _ => return None,
    })
}
