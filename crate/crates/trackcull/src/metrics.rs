//! Evaluation metrics.
//!
//! Beyond row-level accuracy and the confusion matrix, reports carry four
//! per-event fractions: `a1` (the real track's row was accepted), `af`
//! (its complement), and, within that detected subset, `ac` (events that
//! also accepted at least one fake) and `ah` (events where the real track
//! outranked every fake outright; probability ties count as failures).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::models::Classifier;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("evaluation dataset is empty")]
    EmptyDataset,
    #[error("decision threshold {value} outside [0, 1]")]
    BadThreshold { value: f64 },
    #[error("sample {sample_id} has {n_valid} valid rows, expected exactly 1")]
    SampleIntegrity { sample_id: u64, n_valid: usize },
    #[error("got {predictions} predictions for {truth} truth labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("need at least {min} repetitions, got {got}")]
    TooFewRepetitions { min: usize, got: usize },
}

/// Counts indexed `[actual][predicted]`, with `1` = valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn add(&mut self, actual: bool, predicted: bool) {
        self.counts[actual as usize][predicted as usize] += 1;
    }

    pub fn true_negatives(&self) -> u64 {
        self.counts[0][0]
    }

    pub fn false_positives(&self) -> u64 {
        self.counts[0][1]
    }

    pub fn false_negatives(&self) -> u64 {
        self.counts[1][0]
    }

    pub fn true_positives(&self) -> u64 {
        self.counts[1][1]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_negatives() + self.true_positives()) as f64 / self.total() as f64
    }
}

impl std::fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:>16}  {:>12}  {:>12}", "", "pred invalid", "pred valid")?;
        writeln!(
            f,
            "{:>16}  {:>12}  {:>12}",
            "actual invalid",
            self.true_negatives(),
            self.false_positives()
        )?;
        write!(
            f,
            "{:>16}  {:>12}  {:>12}",
            "actual valid",
            self.false_negatives(),
            self.true_positives()
        )
    }
}

/// Build a confusion matrix from parallel label sequences.
pub fn confusion_matrix(
    predictions: &[bool],
    truth: &[bool],
) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth.iter()) {
        m.add(t, p);
    }
    Ok(m)
}

/// Wall-clock per-row inference cost, microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub p99_us: f64,
}

fn latency_from_nanos(mut nanos: Vec<f64>) -> LatencyStats {
    let mean_us = nanos.iter().sum::<f64>() / nanos.len() as f64 / 1e3;
    nanos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((0.99 * nanos.len() as f64).ceil() as usize).clamp(1, nanos.len());
    LatencyStats {
        mean_us,
        p99_us: nanos[rank - 1] / 1e3,
    }
}

/// Everything `evaluate` measures on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: u64,
    pub n_rows: u64,
    pub accuracy: f64,
    pub a1: f64,
    pub ac: f64,
    pub ah: f64,
    pub af: f64,
    pub confusion: ConfusionMatrix,
    pub latency_per_row: LatencyStats,
}

impl EvalReport {
    /// Human-readable summary table mirroring the report fields. A training
    /// accuracy row is included when the caller knows it.
    pub fn render_table(&self, training_accuracy: Option<f64>) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let pct = |v: f64| format!("{:.2} %", v * 100.0);
        let mut row = |name: &str, value: String| {
            let _ = writeln!(out, "{name:<28}{value:>14}");
        };
        if let Some(acc) = training_accuracy {
            row("Training Accuracy", pct(acc));
        }
        row("Testing Accuracy", pct(self.accuracy));
        row("A1 (valid found)", pct(self.a1));
        row("Ac (fake accepted)", pct(self.ac));
        row("Ah (valid ranked first)", pct(self.ah));
        row("Af (valid missed)", pct(self.af));
        row("Time to Predict/row (mean)", format!("{:.0} µs", self.latency_per_row.mean_us));
        row("Time to Predict/row (p99)", format!("{:.0} µs", self.latency_per_row.p99_us));
        let _ = writeln!(out, "\n{}", self.confusion);
        out
    }
}

/// Score every row of `dataset` and fold the results into an [`EvalReport`].
///
/// A row is predicted valid iff `p_valid >= threshold`. Inference runs
/// single-threaded and each row is timed individually, so the latency
/// fields are measurements while everything else is deterministic.
pub fn evaluate(
    model: &dyn Classifier,
    dataset: &Dataset,
    threshold: f64,
) -> Result<EvalReport, MetricsError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MetricsError::BadThreshold { value: threshold });
    }
    if dataset.samples.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }

    let mut confusion = ConfusionMatrix::default();
    let mut nanos = Vec::with_capacity(dataset.n_rows());
    let mut detected = 0u64;
    let mut detected_with_fp = 0u64;
    let mut detected_top = 0u64;

    for sample in &dataset.samples {
        let n_valid = sample.rows.iter().filter(|r| r.label).count();
        if n_valid != 1 {
            return Err(MetricsError::SampleIntegrity {
                sample_id: sample.sample_id,
                n_valid,
            });
        }

        let mut valid_p = 0.0;
        let mut best_fake_p = f64::NEG_INFINITY;
        let mut any_fake_predicted = false;
        for row in &sample.rows {
            let start = Instant::now();
            let (_, p_valid) = model.predict_proba(&row.features);
            nanos.push(start.elapsed().as_nanos() as f64);
            let predicted = p_valid >= threshold;
            confusion.add(row.label, predicted);
            if row.label {
                valid_p = p_valid;
            } else {
                best_fake_p = best_fake_p.max(p_valid);
                any_fake_predicted |= predicted;
            }
        }

        if valid_p >= threshold {
            detected += 1;
            if any_fake_predicted {
                detected_with_fp += 1;
            }
            if valid_p > best_fake_p {
                detected_top += 1;
            }
        }
    }

    let n_samples = dataset.samples.len() as u64;
    let a1 = detected as f64 / n_samples as f64;
    let (ac, ah) = if detected > 0 {
        (
            detected_with_fp as f64 / detected as f64,
            detected_top as f64 / detected as f64,
        )
    } else {
        (0.0, 0.0)
    };

    Ok(EvalReport {
        n_samples,
        n_rows: confusion.total(),
        accuracy: confusion.accuracy(),
        a1,
        ac,
        ah,
        af: 1.0 - a1,
        confusion,
        latency_per_row: latency_from_nanos(nanos),
    })
}

/// Time per-row inference over several passes of `rows`, after one untimed
/// warm-up pass. Statistics pool every timed row across repetitions.
pub fn latency_benchmark(
    model: &dyn Classifier,
    rows: &[crate::dataset::DatasetRow],
    repetitions: usize,
) -> Result<LatencyStats, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    if repetitions < 3 {
        return Err(MetricsError::TooFewRepetitions {
            min: 3,
            got: repetitions,
        });
    }
    let mut sink = 0.0;
    for row in rows {
        sink += model.predict_proba(&row.features).1;
    }
    std::hint::black_box(sink);

    let mut nanos = Vec::with_capacity(rows.len() * repetitions);
    for _ in 0..repetitions {
        for row in rows {
            let start = Instant::now();
            let p = model.predict_proba(&row.features);
            nanos.push(start.elapsed().as_nanos() as f64);
            std::hint::black_box(p);
        }
    }
    Ok(latency_from_nanos(nanos))
}
