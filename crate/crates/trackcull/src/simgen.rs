//! Synthetic event generation.
//!
//! A charged track crossing the chamber leaves one cluster per super-layer.
//! Its average-wire trajectory is modeled as a quadratic in the super-layer
//! index `k`: an intercept, a straight-line slope, and a curvature term
//! proportional to `charge / momentum`. Gaussian wire noise is added per
//! cluster, and uniformly placed fake clusters are sprinkled on top.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::{
    Cluster, CoreError, Event, TruthTrack, N_SUPERLAYERS, WIRES_PER_LAYER,
};

const MAX_PLACEMENT_ATTEMPTS: u32 = 100;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {reason}")]
    InvalidConfig { reason: String },
    #[error(
        "could not place track (momentum {momentum} GeV, charge {charge}) inside the chamber \
         after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )]
    UnplaceableTrack { momentum: f64, charge: i8 },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Knobs for one simulated sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_events: u64,
    /// True tracks per event.
    pub tracks_per_event: u32,
    /// Poisson mean of fake clusters added per super-layer.
    pub noise_mean: f64,
    /// Bounds of the uniform momentum draw, in GeV.
    pub momentum_min: f64,
    pub momentum_max: f64,
    /// Curvature coefficient is `charge * curvature_scale / momentum`
    /// in wire units per super-layer squared.
    pub curvature_scale: f64,
    /// Gaussian smearing of each truth cluster's wire position.
    pub wire_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_events: 0,
            tracks_per_event: 1,
            noise_mean: 2.0,
            momentum_min: 0.5,
            momentum_max: 10.0,
            curvature_scale: 8.0,
            wire_noise_sigma: 0.3,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |reason: &str| {
            Err(SimError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if self.tracks_per_event < 1 {
            return fail("tracks_per_event must be at least 1");
        }
        if !(self.noise_mean >= 0.0) {
            return fail("noise_mean must be non-negative");
        }
        if !(self.momentum_min > 0.0) {
            return fail("momentum_min must be positive");
        }
        if !(self.momentum_max >= self.momentum_min) {
            return fail("momentum_max must be at least momentum_min");
        }
        if !(self.curvature_scale >= 0.0) {
            return fail("curvature_scale must be non-negative");
        }
        if !(self.wire_noise_sigma >= 0.0) {
            return fail("wire_noise_sigma must be non-negative");
        }
        Ok(())
    }
}

/// Kinematics and ideal wire positions of one placed track, before it is
/// spliced into an event's cluster lists.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrack {
    pub momentum: f64,
    pub charge: i8,
    pub wires: [f64; N_SUPERLAYERS],
}

fn wire_trajectory(intercept: f64, slope: f64, curvature: f64) -> [f64; N_SUPERLAYERS] {
    let mut wires = [0.0; N_SUPERLAYERS];
    for (k, w) in wires.iter_mut().enumerate() {
        let k = k as f64;
        *w = intercept + slope * k + curvature * k * k;
    }
    wires
}

/// Draw an intercept/slope pair that keeps the noiseless trajectory inside
/// the chamber, if the curvature leaves any room. The parabola vertex is
/// placed uniformly across the super-layers, with a small extra tilt.
fn propose_geometry(curvature: f64, rng: &mut impl Rng) -> Option<(f64, f64)> {
    let vertex: f64 = rng.gen_range(0.0..=(N_SUPERLAYERS - 1) as f64);
    let tilt: f64 = rng.gen_range(-3.0..=3.0);
    let slope = -2.0 * curvature * vertex + tilt;
    let swing = wire_trajectory(0.0, slope, curvature);
    let lo = swing.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = swing.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let room = WIRES_PER_LAYER as f64 - (hi - lo);
    if room <= 0.0 {
        return None;
    }
    let intercept = -lo + rng.gen_range(0.0..=room);
    Some((intercept, slope))
}

/// Place one track. The given intercept and slope are tried first; if the
/// smeared trajectory leaves the chamber, fresh values are drawn, up to
/// [`MAX_PLACEMENT_ATTEMPTS`] total attempts.
pub fn generate_track(
    config: &SimConfig,
    momentum: f64,
    charge: i8,
    intercept: f64,
    slope: f64,
    rng: &mut impl Rng,
) -> Result<GeneratedTrack, SimError> {
    let curvature = charge as f64 * config.curvature_scale / momentum;
    let noise = if config.wire_noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.wire_noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    let mut intercept = intercept;
    let mut slope = slope;
    for attempt in 0..MAX_PLACEMENT_ATTEMPTS {
        if attempt > 0 {
            match propose_geometry(curvature, rng) {
                Some((i, s)) => {
                    intercept = i;
                    slope = s;
                }
                None => continue,
            }
        }
        let mut wires = wire_trajectory(intercept, slope, curvature);
        if let Some(n) = &noise {
            for w in wires.iter_mut() {
                *w += n.sample(rng);
            }
        }
        if wires
            .iter()
            .all(|w| (0.0..=WIRES_PER_LAYER as f64).contains(w))
        {
            return Ok(GeneratedTrack {
                momentum,
                charge,
                wires,
            });
        }
    }
    Err(SimError::UnplaceableTrack { momentum, charge })
}

/// Build one event: truth tracks first (their cluster indices are recorded),
/// then Poisson-distributed uniform noise clusters per super-layer.
///
/// The event owns an RNG stream seeded with `config.seed ^ event_id`, so
/// events can be generated independently and in any order.
pub fn generate_event(config: &SimConfig, event_id: u64) -> Result<Event, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ event_id);
    let mut clusters: [Vec<Cluster>; N_SUPERLAYERS] = Default::default();
    let mut truth = Vec::with_capacity(config.tracks_per_event as usize);

    for _ in 0..config.tracks_per_event {
        let momentum = if config.momentum_min == config.momentum_max {
            config.momentum_min
        } else {
            rng.gen_range(config.momentum_min..=config.momentum_max)
        };
        let charge = if rng.gen::<bool>() { 1 } else { -1 };
        let curvature = charge as f64 * config.curvature_scale / momentum;
        let (intercept, slope) = propose_geometry(curvature, &mut rng)
            .unwrap_or((WIRES_PER_LAYER as f64 / 2.0, 0.0));
        let track = generate_track(config, momentum, charge, intercept, slope, &mut rng)?;

        let mut indices = [0usize; N_SUPERLAYERS];
        for (k, &wire) in track.wires.iter().enumerate() {
            clusters[k].push(Cluster::new((k + 1) as u8, wire)?);
            indices[k] = clusters[k].len() - 1;
        }
        truth.push(TruthTrack::new(indices, momentum, charge)?);
    }

    if config.noise_mean > 0.0 {
        let poisson = Poisson::new(config.noise_mean).expect("validated mean");
        for (k, list) in clusters.iter_mut().enumerate() {
            let n = poisson.sample(&mut rng) as u64;
            for _ in 0..n {
                let wire: f64 = rng.gen_range(0.0..WIRES_PER_LAYER as f64);
                list.push(Cluster::new((k + 1) as u8, wire)?);
            }
        }
    }

    Ok(Event::new(event_id, clusters, truth)?)
}

/// Generate the whole configured sample set, in event-id order. Events are
/// independent, so generation runs in parallel without affecting content.
pub fn generate_events(config: &SimConfig) -> Result<Vec<Event>, SimError> {
    config.validate()?;
    (0..config.n_events)
        .into_par_iter()
        .map(|event_id| generate_event(config, event_id))
        .collect()
}
