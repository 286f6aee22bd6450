//! Reconstruction benchmark: conventional vs classifier-assisted.
//!
//! The conventional path fits every combinatorial candidate in an event and
//! keeps the best accepted one. The assisted path scores candidates first
//! and fits only those the classifier suggests. [`compare`] reduces the two
//! runs to per-momentum-bin efficiency ratios plus speedup and fit-count
//! reduction factors.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::{generate_candidates, CoreError, Event, N_SUPERLAYERS};
use crate::models::Classifier;
use crate::simgen::SimConfig;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("decision threshold {value} outside [0, 1]")]
    BadThreshold { value: f64 },
    #[error("bad momentum bins: {reason}")]
    BadBins { reason: String },
    #[error("reconstruction runs do not line up: {reason}")]
    MismatchedRuns { reason: String },
    #[error("no events to compare")]
    EmptyRun,
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Acceptance cut and momentum conversion for the surrogate fitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Highest mean squared residual still accepted as a track.
    pub chi2_cut: f64,
    /// Same constant the generator uses: curvature = scale / momentum.
    pub curvature_scale: f64,
}

impl FitConfig {
    /// Cut at three times the wire noise variance, matching the generator.
    pub fn from_sim(sim: &SimConfig) -> Self {
        FitConfig {
            chi2_cut: 3.0 * sim.wire_noise_sigma * sim.wire_noise_sigma,
            curvature_scale: sim.curvature_scale,
        }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig::from_sim(&SimConfig::default())
    }
}

/// Outcome of fitting one candidate's six wire positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub accepted: bool,
    /// Mean squared residual of the quadratic fit.
    pub chi2: f64,
    /// `curvature_scale / |curvature|`; absent only for exactly zero
    /// curvature, whose momentum is unbounded in this trajectory model.
    pub momentum_estimate: Option<f64>,
    /// `[intercept, slope, curvature]` of `wire = a + b k + c k^2`.
    pub coefficients: [f64; 3],
}

/// Least-squares quadratic fit of avg-wire positions over super-layer
/// index `k = 0..5`, solved by singular value decomposition.
///
/// Any six finite values fit; degenerate inputs simply fit badly and fail
/// the cut. Deterministic: equal inputs give bit-equal results.
pub fn surrogate_fit(wires: &[f64; N_SUPERLAYERS], config: &FitConfig) -> FitResult {
    let mut design = DMatrix::zeros(N_SUPERLAYERS, 3);
    for k in 0..N_SUPERLAYERS {
        design[(k, 0)] = 1.0;
        design[(k, 1)] = k as f64;
        design[(k, 2)] = (k * k) as f64;
    }
    let rhs = DVector::from_row_slice(wires);
    let svd = design.svd(true, true);
    let sol = svd.solve(&rhs, 0.0).expect("SVD factors were requested");
    let coefficients = [sol[0], sol[1], sol[2]];

    let mut chi2 = 0.0;
    for (k, &w) in wires.iter().enumerate() {
        let k = k as f64;
        let r = w - (coefficients[0] + coefficients[1] * k + coefficients[2] * k * k);
        chi2 += r * r;
    }
    chi2 /= N_SUPERLAYERS as f64;

    let curvature = coefficients[2];
    FitResult {
        accepted: chi2 <= config.chi2_cut,
        chi2,
        momentum_estimate: (curvature != 0.0).then(|| config.curvature_scale / curvature.abs()),
        coefficients,
    }
}

/// The candidate a reconstruction path settled on for one event.
#[derive(Debug, Clone, PartialEq)]
pub struct ChosenTrack {
    pub source_indices: [usize; N_SUPERLAYERS],
    /// Whether the candidate matched a generator truth track, when known.
    pub is_true: Option<bool>,
    pub fit: FitResult,
}

/// Per-event reconstruction outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EventReco {
    pub event_id: u64,
    /// Event had an empty super-layer, so no candidates existed.
    pub skipped: bool,
    pub chosen: Option<ChosenTrack>,
    pub n_candidates: u64,
    pub n_fitted: u64,
}

/// One full pass over an event set by either path.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoOutput {
    pub events: Vec<EventReco>,
    pub n_skipped: u64,
    pub candidates_generated: u64,
    pub candidates_fitted: u64,
    /// Wall time of the whole pass: candidate generation, any scoring,
    /// and fitting. Meaningful for speedups only on a single thread.
    pub wall: Duration,
    pub threads: usize,
}

impl RecoOutput {
    fn collect(events: Vec<EventReco>, wall: Duration) -> Self {
        RecoOutput {
            n_skipped: events.iter().filter(|e| e.skipped).count() as u64,
            candidates_generated: events.iter().map(|e| e.n_candidates).sum(),
            candidates_fitted: events.iter().map(|e| e.n_fitted).sum(),
            threads: rayon::current_num_threads(),
            events,
            wall,
        }
    }

    pub fn n_chose_truth(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| matches!(&e.chosen, Some(t) if t.is_true == Some(true)))
            .count() as u64
    }
}

fn candidate_wires(event: &Event, indices: &[usize; N_SUPERLAYERS]) -> [f64; N_SUPERLAYERS] {
    let mut wires = [0.0; N_SUPERLAYERS];
    for (k, w) in wires.iter_mut().enumerate() {
        *w = event.clusters[k][indices[k]].avg_wire;
    }
    wires
}

fn consider(best: &mut Option<ChosenTrack>, track: ChosenTrack) {
    if track.fit.accepted && best.as_ref().is_none_or(|b| track.fit.chi2 < b.fit.chi2) {
        *best = Some(track);
    }
}

fn reco_event_conventional(event: &Event, fit: &FitConfig) -> Result<EventReco, CoreError> {
    let candidates = match generate_candidates(event) {
        Ok(c) => c,
        Err(CoreError::EmptySuperlayer { .. }) => return Ok(skipped_event(event.event_id)),
        Err(e) => return Err(e),
    };
    let mut best = None;
    for c in &candidates {
        let fitted = surrogate_fit(&candidate_wires(event, &c.source_indices), fit);
        consider(
            &mut best,
            ChosenTrack {
                source_indices: c.source_indices,
                is_true: c.is_true,
                fit: fitted,
            },
        );
    }
    Ok(EventReco {
        event_id: event.event_id,
        skipped: false,
        chosen: best,
        n_candidates: candidates.len() as u64,
        n_fitted: candidates.len() as u64,
    })
}

fn reco_event_assisted(
    event: &Event,
    model: &dyn Classifier,
    threshold: f64,
    fit: &FitConfig,
    fallback: bool,
) -> Result<EventReco, CoreError> {
    let candidates = match generate_candidates(event) {
        Ok(c) => c,
        Err(CoreError::EmptySuperlayer { .. }) => return Ok(skipped_event(event.event_id)),
        Err(e) => return Err(e),
    };
    let mut best = None;
    let mut n_fitted = 0;
    let mut top_score = f64::NEG_INFINITY;
    let mut top_candidate = None;
    for c in &candidates {
        let (_, p_valid) = model.predict_proba(&c.features);
        if p_valid >= threshold {
            let fitted = surrogate_fit(&candidate_wires(event, &c.source_indices), fit);
            n_fitted += 1;
            consider(
                &mut best,
                ChosenTrack {
                    source_indices: c.source_indices,
                    is_true: c.is_true,
                    fit: fitted,
                },
            );
        } else if fallback && p_valid > top_score {
            top_score = p_valid;
            top_candidate = Some(c);
        }
    }
    if n_fitted == 0 && fallback {
        if let Some(c) = top_candidate {
            let fitted = surrogate_fit(&candidate_wires(event, &c.source_indices), fit);
            n_fitted += 1;
            consider(
                &mut best,
                ChosenTrack {
                    source_indices: c.source_indices,
                    is_true: c.is_true,
                    fit: fitted,
                },
            );
        }
    }
    Ok(EventReco {
        event_id: event.event_id,
        skipped: false,
        chosen: best,
        n_candidates: candidates.len() as u64,
        n_fitted,
    })
}

fn skipped_event(event_id: u64) -> EventReco {
    EventReco {
        event_id,
        skipped: true,
        chosen: None,
        n_candidates: 0,
        n_fitted: 0,
    }
}

fn run_timed<F>(events: &[Event], reco: F) -> Result<RecoOutput, PipelineError>
where
    F: Fn(&Event) -> Result<EventReco, CoreError> + Send + Sync,
{
    let start = Instant::now();
    let results: Result<Vec<EventReco>, CoreError> = if rayon::current_num_threads() == 1 {
        events.iter().map(&reco).collect()
    } else {
        events.par_iter().map(&reco).collect()
    };
    let wall = start.elapsed();
    Ok(RecoOutput::collect(results?, wall))
}

/// Fit every candidate of every event; keep the lowest-chi2 accepted one.
pub fn run_conventional(events: &[Event], fit: &FitConfig) -> Result<RecoOutput, PipelineError> {
    run_timed(events, |e| reco_event_conventional(e, fit))
}

/// Fit only candidates the classifier scores at or above `threshold`.
///
/// With `fallback` set, an event where nothing passes gets its single
/// highest-scoring candidate fitted instead of being written off; at a
/// threshold of zero the path degenerates to [`run_conventional`].
pub fn run_ai_assisted(
    events: &[Event],
    model: &dyn Classifier,
    threshold: f64,
    fit: &FitConfig,
    fallback: bool,
) -> Result<RecoOutput, PipelineError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::BadThreshold { value: threshold });
    }
    run_timed(events, |e| {
        reco_event_assisted(e, model, threshold, fit, fallback)
    })
}

/// One momentum bin of the efficiency comparison. `ratio` is absent when
/// the conventional path reconstructed nothing in the bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBin {
    pub low: f64,
    pub high: f64,
    pub n_ai: u64,
    pub n_conv: u64,
    pub ratio: Option<f64>,
}

/// Aggregates of one reconstruction pass, as reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub n_events: u64,
    pub n_skipped: u64,
    pub candidates_generated: u64,
    pub candidates_fitted: u64,
    pub n_chose_truth: u64,
    pub wall_us: f64,
    pub threads: usize,
}

fn path_summary(run: &RecoOutput) -> PathSummary {
    PathSummary {
        n_events: run.events.len() as u64,
        n_skipped: run.n_skipped,
        candidates_generated: run.candidates_generated,
        candidates_fitted: run.candidates_fitted,
        n_chose_truth: run.n_chose_truth(),
        wall_us: run.wall.as_secs_f64() * 1e6,
        threads: run.threads,
    }
}

/// Side-by-side result of the two paths over one event set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub bin_edges: Vec<f64>,
    pub bins: Vec<EfficiencyBin>,
    /// Events without truth or outside the binning range.
    pub n_unbinned: u64,
    /// Conventional wall time over assisted wall time.
    pub speedup: f64,
    /// Conventional fit count over assisted fit count; absent if the
    /// assisted path fitted nothing at all.
    pub candidate_reduction: Option<f64>,
    pub conventional: PathSummary,
    pub ai_assisted: PathSummary,
}

/// Evenly spaced bin edges covering `[low, high]`.
pub fn momentum_bin_edges(low: f64, high: f64, n_bins: usize) -> Result<Vec<f64>, PipelineError> {
    if n_bins == 0 || !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(PipelineError::BadBins {
            reason: format!("need n_bins >= 1 and finite low < high, got {n_bins} over [{low}, {high}]"),
        });
    }
    Ok((0..=n_bins)
        .map(|i| low + (high - low) * i as f64 / n_bins as f64)
        .collect())
}

fn validate_edges(edges: &[f64]) -> Result<(), PipelineError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(PipelineError::BadBins {
            reason: "edges must be at least two finite, strictly increasing values".into(),
        });
    }
    Ok(())
}

fn bin_index(edges: &[f64], value: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if value == edges[last] {
        return Some(last - 1);
    }
    edges
        .windows(2)
        .position(|w| w[0] <= value && value < w[1])
}

/// Reduce matched conventional and assisted runs over the same events to
/// an [`EfficiencyReport`]. Events are binned by the momentum of their
/// first truth track; per bin, the ratio counts events where each path's
/// chosen candidate matched truth.
pub fn compare(
    ai: &RecoOutput,
    conv: &RecoOutput,
    events: &[Event],
    bin_edges: &[f64],
) -> Result<EfficiencyReport, PipelineError> {
    validate_edges(bin_edges)?;
    if events.is_empty() {
        return Err(PipelineError::EmptyRun);
    }
    if ai.events.len() != events.len() || conv.events.len() != events.len() {
        return Err(PipelineError::MismatchedRuns {
            reason: format!(
                "{} events, but assisted covered {} and conventional {}",
                events.len(),
                ai.events.len(),
                conv.events.len()
            ),
        });
    }

    let n_bins = bin_edges.len() - 1;
    let mut bins: Vec<EfficiencyBin> = bin_edges
        .windows(2)
        .map(|w| EfficiencyBin {
            low: w[0],
            high: w[1],
            n_ai: 0,
            n_conv: 0,
            ratio: None,
        })
        .collect();
    let mut n_unbinned = 0u64;

    for (i, event) in events.iter().enumerate() {
        for reco in [&ai.events[i], &conv.events[i]] {
            if reco.event_id != event.event_id {
                return Err(PipelineError::MismatchedRuns {
                    reason: format!(
                        "event {} at position {i} was reconstructed as event {}",
                        event.event_id, reco.event_id
                    ),
                });
            }
        }
        let Some(truth) = event.truth.first() else {
            n_unbinned += 1;
            continue;
        };
        let Some(b) = bin_index(bin_edges, truth.momentum) else {
            n_unbinned += 1;
            continue;
        };
        debug_assert!(b < n_bins);
        let chose_truth =
            |r: &EventReco| matches!(&r.chosen, Some(t) if t.is_true == Some(true)) as u64;
        bins[b].n_ai += chose_truth(&ai.events[i]);
        bins[b].n_conv += chose_truth(&conv.events[i]);
    }
    for bin in &mut bins {
        if bin.n_conv > 0 {
            bin.ratio = Some(bin.n_ai as f64 / bin.n_conv as f64);
        }
    }

    Ok(EfficiencyReport {
        bin_edges: bin_edges.to_vec(),
        bins,
        n_unbinned,
        speedup: conv.wall.as_secs_f64() / ai.wall.as_secs_f64(),
        candidate_reduction: (ai.candidates_fitted > 0)
            .then(|| conv.candidates_fitted as f64 / ai.candidates_fitted as f64),
        conventional: path_summary(conv),
        ai_assisted: path_summary(ai),
    })
}

impl EfficiencyReport {
    /// Plot-ready CSV, one line per momentum bin. A bin without a ratio
    /// leaves the field empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,ratio,n_ai,n_conv\n");
        for b in &self.bins {
            let ratio = b.ratio.map(|r| format!("{r:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{:.6},{:.6},{},{},{}\n",
                b.low, b.high, ratio, b.n_ai, b.n_conv
            ));
        }
        out
    }
}
