//! Negative-sampling strategy study.
//!
//! Trains one MLP per negative-selection strategy on the first half of an
//! event set, then scores all three on a common closest-neighbor pair set
//! drawn from the second half. Because the shared test set pairs each true
//! track with its nearest fake, it punishes models whose training fakes
//! were too easy: their false-positive counts expose it directly.

use serde::{Deserialize, Serialize};

use crate::core::Event;
use crate::dataset::{extract_dataset, DatasetError, ExtractionMode, NegativeStrategy};
use crate::metrics::{evaluate, ConfusionMatrix, MetricsError};
use crate::models::mlp::{self, MlpHyperparams};
use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("study needs at least 2 events to split, got {got}")]
    TooFewEvents { got: usize },
    #[error("no usable training pairs for strategy {strategy}")]
    NoTrainingData { strategy: NegativeStrategy },
    #[error("no usable evaluation pairs in the held-out half")]
    NoEvaluationData,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Shared by all three models so only the training data differs.
    pub hyperparams: MlpHyperparams,
    /// Decision threshold used for the confusion matrices.
    pub threshold: f64,
    /// Seed for both dataset extractions.
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            hyperparams: MlpHyperparams::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

/// How one strategy's model fared on the shared test pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: NegativeStrategy,
    pub n_train_rows: u64,
    pub training_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub a1: f64,
    pub false_positives: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub n_events: u64,
    pub n_train_events: u64,
    pub n_test_events: u64,
    pub n_eval_samples: u64,
    /// Always three entries: closest-neighbor, random, least-likely.
    pub outcomes: Vec<StrategyOutcome>,
}

pub const STUDY_STRATEGIES: [NegativeStrategy; 3] = [
    NegativeStrategy::ClosestNeighbor,
    NegativeStrategy::Random,
    NegativeStrategy::LeastLikely,
];

/// Run the full three-way comparison on one event set.
pub fn run_study(events: &[Event], config: &StudyConfig) -> Result<StudyReport, StudyError> {
    if events.len() < 2 {
        return Err(StudyError::TooFewEvents { got: events.len() });
    }
    let (train_events, test_events) = events.split_at(events.len() / 2);

    let (eval_set, _) = extract_dataset(
        test_events,
        NegativeStrategy::ClosestNeighbor,
        ExtractionMode::Training,
        config.seed,
    )?;
    if eval_set.samples.is_empty() {
        return Err(StudyError::NoEvaluationData);
    }

    let mut outcomes = Vec::with_capacity(STUDY_STRATEGIES.len());
    for strategy in STUDY_STRATEGIES {
        let (train_set, _) =
            extract_dataset(train_events, strategy, ExtractionMode::Training, config.seed)?;
        if train_set.samples.is_empty() {
            return Err(StudyError::NoTrainingData { strategy });
        }
        let rows: Vec<_> = train_set.iter_rows().cloned().collect();
        let model = mlp::train(&rows, &config.hyperparams)?;
        let report = evaluate(&model, &eval_set, config.threshold)?;
        outcomes.push(StrategyOutcome {
            strategy,
            n_train_rows: rows.len() as u64,
            training_accuracy: model.meta().training_accuracy,
            false_positives: report.confusion.false_positives(),
            confusion: report.confusion,
            accuracy: report.accuracy,
            a1: report.a1,
        });
    }

    Ok(StudyReport {
        n_events: events.len() as u64,
        n_train_events: train_events.len() as u64,
        n_test_events: test_events.len() as u64,
        n_eval_samples: eval_set.n_samples() as u64,
        outcomes,
    })
}

impl StudyReport {
    pub fn render_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} events: {} train / {} test, {} closest-neighbor test pairs\n",
            self.n_events, self.n_train_events, self.n_test_events, self.n_eval_samples
        );
        for o in &self.outcomes {
            let _ = writeln!(out, "training strategy: {}", o.strategy);
            let _ = writeln!(
                out,
                "  train rows {}   training accuracy {:.2} %",
                o.n_train_rows,
                o.training_accuracy * 100.0
            );
            let _ = writeln!(
                out,
                "  test accuracy {:.2} %   A1 {:.2} %   false positives {}",
                o.accuracy * 100.0,
                o.a1 * 100.0,
                o.false_positives
            );
            for line in o.confusion.to_string().lines() {
                let _ = writeln!(out, "  {line}");
            }
            let _ = writeln!(out);
        }
        out
    }
}
