//! Turning labeled events into classifier datasets.
//!
//! Training sets are class-balanced: for every true candidate one fake is
//! picked by a [`NegativeStrategy`]. Evaluation sets keep the true candidate
//! together with *every* fake of its event, so per-event metrics can ask
//! whether the real track wins against the full combinatorial background.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{generate_candidates, CoreError, Event, TrackCandidate, N_SUPERLAYERS};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no negative candidate available")]
    NoNegativeAvailable,
    #[error("test fraction {value} outside [0, 1]")]
    InvalidTestFraction { value: f64 },
    #[error("bad dataset header: expected {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: {message}")]
    ParseRow { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How the one fake row of a training pair is chosen among an event's
/// non-true candidates, ranked by L1 distance to the true features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeStrategy {
    /// Farthest from the true candidate.
    LeastLikely,
    /// Uniformly random fake.
    Random,
    /// Closest to the true candidate: the hardest negative.
    ClosestNeighbor,
}

impl std::fmt::Display for NegativeStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            NegativeStrategy::LeastLikely => "least-likely",
            NegativeStrategy::Random => "random",
            NegativeStrategy::ClosestNeighbor => "closest-neighbor",
        };
        f.write_str(name)
    }
}

/// One classifier input row: normalized wire positions and the label.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub features: [f64; N_SUPERLAYERS],
    /// `true` for the real track's row.
    pub label: bool,
}

/// All rows extracted from one event, keyed by the event id.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: u64,
    pub rows: Vec<DatasetRow>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_rows(&self) -> usize {
        self.samples.iter().map(|s| s.rows.len()).sum()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &DatasetRow> {
        self.samples.iter().flat_map(|s| s.rows.iter())
    }
}

fn l1(a: &[f64; N_SUPERLAYERS], b: &[f64; N_SUPERLAYERS]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Pick one fake from `candidates` relative to the true candidate's
/// features. Distance ties are broken toward the lowest lexicographic
/// source index, so the choice does not depend on input order.
pub fn select_negative<'a>(
    candidates: &'a [TrackCandidate],
    true_features: &[f64; N_SUPERLAYERS],
    strategy: NegativeStrategy,
    rng: &mut impl Rng,
) -> Result<&'a TrackCandidate, DatasetError> {
    let fakes: Vec<&TrackCandidate> = candidates
        .iter()
        .filter(|c| c.features != *true_features)
        .collect();
    if fakes.is_empty() {
        return Err(DatasetError::NoNegativeAvailable);
    }
    let chosen = match strategy {
        NegativeStrategy::Random => fakes[rng.gen_range(0..fakes.len())],
        NegativeStrategy::LeastLikely | NegativeStrategy::ClosestNeighbor => {
            let farthest = strategy == NegativeStrategy::LeastLikely;
            let mut best = fakes[0];
            let mut best_dist = l1(&best.features, true_features);
            for &c in &fakes[1..] {
                let dist = l1(&c.features, true_features);
                let better = if farthest {
                    dist > best_dist
                } else {
                    dist < best_dist
                };
                if better || (dist == best_dist && c.source_indices < best.source_indices) {
                    best = c;
                    best_dist = dist;
                }
            }
            best
        }
    };
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    /// Balanced pairs: one true row plus one selected fake per truth track.
    Training,
    /// One sample per event: the true row plus every fake.
    Evaluation,
}

/// Row and skip accounting for one extraction run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub n_events_used: u64,
    /// Events without generator truth.
    pub n_skipped_no_truth: u64,
    /// Events whose candidate list contains no fake (training mode).
    pub n_skipped_no_negative: u64,
    /// Events with more than one truth track (evaluation mode).
    pub n_skipped_multi_truth: u64,
    pub n_samples: u64,
    pub n_rows: u64,
    pub n_valid_rows: u64,
    pub n_invalid_rows: u64,
}

/// Build a dataset from labeled events. Randomness (the `Random` strategy)
/// is drawn from a per-event stream seeded with `seed ^ event_id`, so the
/// result does not depend on event order or parallelism elsewhere.
pub fn extract_dataset(
    events: &[Event],
    strategy: NegativeStrategy,
    mode: ExtractionMode,
    seed: u64,
) -> Result<(Dataset, ExtractionSummary), DatasetError> {
    let mut dataset = Dataset::default();
    let mut summary = ExtractionSummary::default();

    for event in events {
        if event.truth.is_empty() {
            summary.n_skipped_no_truth += 1;
            continue;
        }
        if mode == ExtractionMode::Evaluation && event.truth.len() != 1 {
            summary.n_skipped_multi_truth += 1;
            continue;
        }
        let candidates = generate_candidates(event)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ event.event_id);

        match mode {
            ExtractionMode::Training => {
                // Fakes exclude every truth track's candidate, so a second
                // real track is never labeled as background.
                let mut rows = Vec::new();
                for truth in &event.truth {
                    let true_candidate = candidates
                        .iter()
                        .find(|c| c.source_indices == truth.cluster_indices)
                        .expect("truth indices validated against clusters");
                    let mut pool: Vec<TrackCandidate> = candidates
                        .iter()
                        .filter(|c| c.is_true == Some(false))
                        .cloned()
                        .collect();
                    if pool.is_empty() {
                        rows.clear();
                        break;
                    }
                    pool.push(true_candidate.clone());
                    let negative =
                        select_negative(&pool, &true_candidate.features, strategy, &mut rng)?;
                    rows.push(DatasetRow {
                        features: true_candidate.features,
                        label: true,
                    });
                    rows.push(DatasetRow {
                        features: negative.features,
                        label: false,
                    });
                }
                if rows.is_empty() {
                    summary.n_skipped_no_negative += 1;
                    continue;
                }
                push_sample(&mut dataset, &mut summary, event.event_id, rows);
            }
            ExtractionMode::Evaluation => {
                let mut rows = Vec::with_capacity(candidates.len());
                for c in &candidates {
                    if c.is_true == Some(true) {
                        rows.push(DatasetRow {
                            features: c.features,
                            label: true,
                        });
                    }
                }
                for c in &candidates {
                    if c.is_true == Some(false) {
                        rows.push(DatasetRow {
                            features: c.features,
                            label: false,
                        });
                    }
                }
                push_sample(&mut dataset, &mut summary, event.event_id, rows);
            }
        }
        summary.n_events_used += 1;
    }
    Ok((dataset, summary))
}

fn push_sample(
    dataset: &mut Dataset,
    summary: &mut ExtractionSummary,
    sample_id: u64,
    rows: Vec<DatasetRow>,
) {
    summary.n_samples += 1;
    summary.n_rows += rows.len() as u64;
    summary.n_valid_rows += rows.iter().filter(|r| r.label).count() as u64;
    summary.n_invalid_rows += rows.iter().filter(|r| !r.label).count() as u64;
    dataset.samples.push(Sample { sample_id, rows });
}

/// Split at sample granularity: all rows of an event land on one side.
/// The test side gets `round(test_fraction * n_samples)` samples, drawn by
/// a seeded shuffle; both sides keep their original relative order.
pub fn split_dataset(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(DatasetError::InvalidTestFraction {
            value: test_fraction,
        });
    }
    let n = dataset.samples.len();
    let n_test = (test_fraction * n as f64).round() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates; the first n_test slots become the test side.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut is_test = vec![false; n];
    for &idx in order.iter().take(n_test) {
        is_test[idx] = true;
    }

    let mut train = Dataset::default();
    let mut test = Dataset::default();
    for (i, sample) in dataset.samples.iter().enumerate() {
        if is_test[i] {
            test.samples.push(sample.clone());
        } else {
            train.samples.push(sample.clone());
        }
    }
    Ok((train, test))
}

const CSV_HEADER: &str = "event_id,f1,f2,f3,f4,f5,f6,label";

/// Write rows as CSV with 9-significant-digit features, grouped by sample.
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{CSV_HEADER}")?;
    for sample in &dataset.samples {
        for row in &sample.rows {
            write!(w, "{}", sample.sample_id)?;
            for f in &row.features {
                write!(w, ",{f:.8e}")?;
            }
            writeln!(w, ",{}", row.label as u8)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset CSV, grouping consecutive rows with the same event id
/// into one sample. Errors carry the 1-based line number.
pub fn read_dataset<R: io::Read>(reader: R) -> Result<Dataset, DatasetError> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| DatasetError::BadHeader {
            expected: CSV_HEADER.to_string(),
            found: String::new(),
        })?;
    if header.trim_end() != CSV_HEADER {
        return Err(DatasetError::BadHeader {
            expected: CSV_HEADER.to_string(),
            found: header,
        });
    }

    let mut dataset = Dataset::default();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(DatasetError::ParseRow {
                line: lineno,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str, value: &str| DatasetError::ParseRow {
            line: lineno,
            message: format!("bad {what}: {value:?}"),
        };
        let sample_id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err("event_id", fields[0]))?;
        let mut features = [0.0; N_SUPERLAYERS];
        for (k, f) in features.iter_mut().enumerate() {
            *f = fields[k + 1]
                .parse()
                .map_err(|_| parse_err("feature", fields[k + 1]))?;
        }
        let label = match fields[7] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err("label", other)),
        };
        let row = DatasetRow { features, label };
        match dataset.samples.last_mut() {
            Some(sample) if sample.sample_id == sample_id => sample.rows.push(row),
            _ => dataset.samples.push(Sample {
                sample_id,
                rows: vec![row],
            }),
        }
    }
    Ok(dataset)
}

pub fn write_dataset_file<P: AsRef<Path>>(path: P, dataset: &Dataset) -> Result<(), DatasetError> {
    write_dataset(File::create(path)?, dataset)
}

pub fn read_dataset_file<P: AsRef<Path>>(path: P) -> Result<Dataset, DatasetError> {
    read_dataset(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate_events, SimConfig};

    fn candidate(features: [f64; 6], source_indices: [usize; 6]) -> TrackCandidate {
        TrackCandidate {
            features,
            source_indices,
            is_true: None,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn closest_and_least_likely_pick_opposite_fakes() {
        let truth = [0.5; 6];
        let near = candidate([0.51, 0.5, 0.5, 0.5, 0.5, 0.5], [1, 0, 0, 0, 0, 0]);
        let far = candidate([0.8; 6], [2, 0, 0, 0, 0, 0]);
        let pool = vec![candidate(truth, [0; 6]), near.clone(), far.clone()];

        let c = select_negative(&pool, &truth, NegativeStrategy::ClosestNeighbor, &mut rng())
            .unwrap();
        assert_eq!(c.source_indices, near.source_indices);

        let l =
            select_negative(&pool, &truth, NegativeStrategy::LeastLikely, &mut rng()).unwrap();
        assert_eq!(l.source_indices, far.source_indices);
    }

    #[test]
    fn distance_ties_break_toward_lowest_source_index() {
        let truth = [0.5; 6];
        let a = candidate([0.6, 0.5, 0.5, 0.5, 0.5, 0.5], [0, 1, 0, 0, 0, 0]);
        let b = candidate([0.4, 0.5, 0.5, 0.5, 0.5, 0.5], [0, 0, 1, 0, 0, 0]);
        // Present the higher index first to prove order independence.
        let pool = vec![candidate(truth, [0; 6]), a, b];
        for strategy in [NegativeStrategy::ClosestNeighbor, NegativeStrategy::LeastLikely] {
            let chosen = select_negative(&pool, &truth, strategy, &mut rng()).unwrap();
            assert_eq!(chosen.source_indices, [0, 0, 1, 0, 0, 0]);
        }
    }

    #[test]
    fn random_strategy_only_ever_picks_fakes() {
        let truth = [0.5; 6];
        let pool = vec![
            candidate(truth, [0; 6]),
            candidate([0.1; 6], [1, 0, 0, 0, 0, 0]),
            candidate([0.9; 6], [2, 0, 0, 0, 0, 0]),
        ];
        let mut rng = rng();
        let mut seen = [false; 2];
        for _ in 0..64 {
            let c = select_negative(&pool, &truth, NegativeStrategy::Random, &mut rng).unwrap();
            assert_ne!(c.features, truth);
            seen[c.source_indices[0] - 1] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn lone_candidate_has_no_negative() {
        let truth = [0.5; 6];
        let pool = vec![candidate(truth, [0; 6])];
        let err =
            select_negative(&pool, &truth, NegativeStrategy::Random, &mut rng()).unwrap_err();
        assert!(matches!(err, DatasetError::NoNegativeAvailable));
    }

    fn sim_events(n: u64, seed: u64) -> Vec<crate::core::Event> {
        let config = SimConfig {
            n_events: n,
            seed,
            ..SimConfig::default()
        };
        generate_events(&config).unwrap()
    }

    #[test]
    fn training_extraction_is_balanced() {
        let events = sim_events(200, 3);
        let (dataset, summary) = extract_dataset(
            &events,
            NegativeStrategy::ClosestNeighbor,
            ExtractionMode::Training,
            5,
        )
        .unwrap();
        assert_eq!(summary.n_valid_rows, summary.n_invalid_rows);
        assert_eq!(summary.n_rows, 2 * summary.n_samples);
        assert_eq!(dataset.n_rows() as u64, summary.n_rows);
        for sample in &dataset.samples {
            assert_eq!(sample.rows.len(), 2);
            assert!(sample.rows[0].label);
            assert!(!sample.rows[1].label);
        }
    }

    #[test]
    fn evaluation_extraction_keeps_every_fake() {
        let events = sim_events(50, 4);
        let (dataset, summary) = extract_dataset(
            &events,
            NegativeStrategy::ClosestNeighbor,
            ExtractionMode::Evaluation,
            5,
        )
        .unwrap();
        assert_eq!(summary.n_samples, 50);
        assert_eq!(summary.n_valid_rows, 50);
        for (event, sample) in events.iter().zip(&dataset.samples) {
            let n_candidates: usize = event.clusters.iter().map(|c| c.len()).product();
            assert_eq!(sample.rows.len(), n_candidates);
            assert_eq!(sample.rows.iter().filter(|r| r.label).count(), 1);
            assert!(sample.rows[0].label);
        }
    }

    #[test]
    fn events_without_truth_are_counted_not_fatal() {
        let mut events = sim_events(10, 9);
        events[3].truth.clear();
        events[7].truth.clear();
        let (dataset, summary) = extract_dataset(
            &events,
            NegativeStrategy::Random,
            ExtractionMode::Training,
            5,
        )
        .unwrap();
        assert_eq!(summary.n_skipped_no_truth, 2);
        assert_eq!(summary.n_events_used, 8);
        assert_eq!(dataset.n_samples(), 8);
    }

    #[test]
    fn noiseless_event_has_no_negative_and_is_skipped() {
        let config = SimConfig {
            n_events: 5,
            noise_mean: 0.0,
            seed: 21,
            ..SimConfig::default()
        };
        let events = generate_events(&config).unwrap();
        let (dataset, summary) = extract_dataset(
            &events,
            NegativeStrategy::ClosestNeighbor,
            ExtractionMode::Training,
            5,
        )
        .unwrap();
        assert_eq!(summary.n_skipped_no_negative, 5);
        assert_eq!(dataset.n_samples(), 0);
    }

    #[test]
    fn extraction_is_deterministic_in_seed() {
        let events = sim_events(60, 31);
        let run = |seed| {
            extract_dataset(&events, NegativeStrategy::Random, ExtractionMode::Training, seed)
                .unwrap()
                .0
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn split_respects_fraction_and_sample_granularity() {
        let events = sim_events(10, 13);
        let (dataset, _) = extract_dataset(
            &events,
            NegativeStrategy::Random,
            ExtractionMode::Evaluation,
            5,
        )
        .unwrap();
        let (train, test) = split_dataset(&dataset, 0.5, 77).unwrap();
        assert_eq!(train.n_samples(), 5);
        assert_eq!(test.n_samples(), 5);
        let mut ids: Vec<u64> = train
            .samples
            .iter()
            .chain(&test.samples)
            .map(|s| s.sample_id)
            .collect();
        ids.sort_unstable();
        let expected: Vec<u64> = dataset.samples.iter().map(|s| s.sample_id).collect();
        assert_eq!(ids, expected);

        let (again_train, again_test) = split_dataset(&dataset, 0.5, 77).unwrap();
        assert_eq!(train, again_train);
        assert_eq!(test, again_test);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let dataset = Dataset::default();
        assert!(split_dataset(&dataset, -0.1, 0).is_err());
        assert!(split_dataset(&dataset, 1.1, 0).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_rows_to_nine_digits() {
        let events = sim_events(20, 41);
        let (dataset, _) = extract_dataset(
            &events,
            NegativeStrategy::ClosestNeighbor,
            ExtractionMode::Evaluation,
            5,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &dataset).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();

        assert_eq!(back.n_samples(), dataset.n_samples());
        for (a, b) in dataset.samples.iter().zip(&back.samples) {
            assert_eq!(a.sample_id, b.sample_id);
            assert_eq!(a.rows.len(), b.rows.len());
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                assert_eq!(ra.label, rb.label);
                for (fa, fb) in ra.features.iter().zip(&rb.features) {
                    assert!((fa - fb).abs() <= 1e-9);
                }
            }
        }

        // A second round trip is byte-stable.
        let mut buf2 = Vec::new();
        write_dataset(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn csv_header_and_field_errors_are_reported() {
        let err = read_dataset("id,f1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::BadHeader { .. }));

        let text = format!("{CSV_HEADER}\n1,0.1,0.2,0.3,0.4,0.5,0.6,2\n");
        let err = read_dataset(text.as_bytes()).unwrap_err();
        match err {
            DatasetError::ParseRow { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }

        let text = format!("{CSV_HEADER}\n1,0.1,0.2,0.3\n");
        assert!(matches!(
            read_dataset(text.as_bytes()).unwrap_err(),
            DatasetError::ParseRow { line: 2, .. }
        ));
    }
}
