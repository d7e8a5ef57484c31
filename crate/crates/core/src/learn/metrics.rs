use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::nn::AttentionCnn;

use super::loss::softmax;
use super::train::{argmax, batch_tensor, Sample};
use super::{LearnError, LearnResult};

/// Maps label strings to class indices, rejecting labels the model does not
/// know.
pub fn encode_labels<S: AsRef<str>>(labels: &[S], classes: &[String]) -> LearnResult<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            classes.iter().position(|c| c == l.as_ref()).ok_or_else(|| LearnError::Label {
                label: l.as_ref().to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub total: usize,
    pub correct: usize,
    /// `correct / total`
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    /// 0 for a class that was never predicted.
    pub precision: Vec<f64>,
    /// 0 for a class with no samples.
    pub recall: Vec<f64>,
}

impl EvalReport {
    pub fn from_predictions(labels: Vec<String>, truth: &[usize], predicted: &[usize]) -> LearnResult<Self> {
        let j = labels.len();
        if truth.len() != predicted.len() {
            return Err(LearnError::Config("truth and prediction counts differ".into()));
        }
        let mut confusion = vec![vec![0u64; j]; j];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= j || p >= j {
                return Err(LearnError::Label {
                    label: t.max(p).to_string(),
                });
            }
            confusion[t][p] += 1;
        }
        let correct = (0..j).map(|c| confusion[c][c]).sum::<u64>() as usize;
        let total = truth.len();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = (0..j)
            .map(|c| ratio(confusion[c][c], (0..j).map(|r| confusion[r][c]).sum()))
            .collect();
        let recall = (0..j).map(|c| ratio(confusion[c][c], confusion[c].iter().sum())).collect();
        Ok(Self {
            labels,
            total,
            correct,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            confusion,
            precision,
            recall,
        })
    }

    /// Header `true\predicted,<labels...>`, then one row per true class.
    pub fn write_confusion_csv<W: Write>(&self, w: W) -> LearnResult<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        out.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|c| c.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> LearnResult<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Inference-mode class probabilities, one row per sample.
pub fn predict_proba(model: &AttentionCnn, samples: &[Sample], batch_size: usize) -> LearnResult<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let logits = model.infer(&batch_tensor(model, &refs)?)?;
        out.extend(logits.data.chunks_exact(model.num_classes()).map(softmax));
    }
    Ok(out)
}

pub fn evaluate(model: &AttentionCnn, samples: &[Sample], labels: &[String], batch_size: usize) -> LearnResult<EvalReport> {
    if labels.len() != model.num_classes() {
        return Err(LearnError::Config(format!(
            "{} labels for a {}-class model",
            labels.len(),
            model.num_classes()
        )));
    }
    let probs = predict_proba(model, samples, batch_size)?;
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    EvalReport::from_predictions(labels.to_vec(), &truth, &predicted)
}
