//! Domain types for a six-super-layer drift chamber: clusters, events,
//! truth tracks, and the combinatorial track candidates built from them.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Number of super-layers a track crosses; one cluster per super-layer.
pub const N_SUPERLAYERS: usize = 6;
/// Sense wires per layer; cluster positions live in `[0, 112]`.
pub const WIRES_PER_LAYER: usize = 112;
/// Drift-chamber regions (two super-layers each).
pub const N_REGIONS: usize = 3;
/// Wire layers inside one super-layer.
pub const LAYERS_PER_SUPERLAYER: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("avg_wire {value} outside [0, {max}]", max = WIRES_PER_LAYER)]
    WireOutOfRange { value: f64 },
    #[error("super-layer {value} outside 1..={max}", max = N_SUPERLAYERS)]
    SuperlayerOutOfRange { value: u8 },
    #[error("event {event_id} has no clusters in super-layer {superlayer}")]
    EmptySuperlayer { event_id: u64, superlayer: u8 },
    #[error(
        "event {event_id}: truth index {index} out of range for super-layer {superlayer} \
         ({len} clusters)"
    )]
    TruthIndexOutOfRange {
        event_id: u64,
        superlayer: u8,
        index: usize,
        len: usize,
    },
    #[error("momentum must be positive, got {value}")]
    NonPositiveMomentum { value: f64 },
    #[error("charge must be +1 or -1, got {value}")]
    InvalidCharge { value: i8 },
    #[error("candidate count overflows usize")]
    CandidateCountOverflow,
    #[error("line {line}: {source}")]
    MalformedRecord {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Scale a wire position into `[0, 1]`.
pub fn normalize_wire(avg_wire: f64) -> Result<f64, CoreError> {
    if !(0.0..=WIRES_PER_LAYER as f64).contains(&avg_wire) {
        return Err(CoreError::WireOutOfRange { value: avg_wire });
    }
    Ok(avg_wire / WIRES_PER_LAYER as f64)
}

/// One reconstructed hit cluster: which super-layer it sits in and the
/// average wire position of its hits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub superlayer: u8,
    pub avg_wire: f64,
}

impl Cluster {
    pub fn new(superlayer: u8, avg_wire: f64) -> Result<Self, CoreError> {
        if superlayer < 1 || superlayer as usize > N_SUPERLAYERS {
            return Err(CoreError::SuperlayerOutOfRange { value: superlayer });
        }
        if !(0.0..=WIRES_PER_LAYER as f64).contains(&avg_wire) {
            return Err(CoreError::WireOutOfRange { value: avg_wire });
        }
        Ok(Cluster {
            superlayer,
            avg_wire,
        })
    }
}

/// Generator-level record of a simulated track: which cluster it produced
/// in each super-layer, and the kinematics that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTrack {
    /// Position of this track's cluster within each super-layer list.
    pub cluster_indices: [usize; N_SUPERLAYERS],
    /// Transverse momentum in GeV.
    pub momentum: f64,
    /// +1 or -1.
    pub charge: i8,
}

impl TruthTrack {
    pub fn new(
        cluster_indices: [usize; N_SUPERLAYERS],
        momentum: f64,
        charge: i8,
    ) -> Result<Self, CoreError> {
        if momentum <= 0.0 {
            return Err(CoreError::NonPositiveMomentum { value: momentum });
        }
        if charge != 1 && charge != -1 {
            return Err(CoreError::InvalidCharge { value: charge });
        }
        Ok(TruthTrack {
            cluster_indices,
            momentum,
            charge,
        })
    }
}

/// One triggered readout frame: clusters grouped by super-layer plus any
/// generator truth. `clusters[k]` holds super-layer `k + 1` in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub event_id: u64,
    pub clusters: [Vec<Cluster>; N_SUPERLAYERS],
    pub truth: Vec<TruthTrack>,
}

impl Event {
    pub fn new(
        event_id: u64,
        clusters: [Vec<Cluster>; N_SUPERLAYERS],
        truth: Vec<TruthTrack>,
    ) -> Result<Self, CoreError> {
        let event = Event {
            event_id,
            clusters,
            truth,
        };
        event.validate()?;
        Ok(event)
    }

    /// Check cluster ranges and that truth indices point at real clusters.
    pub fn validate(&self) -> Result<(), CoreError> {
        for (k, list) in self.clusters.iter().enumerate() {
            for c in list {
                if c.superlayer as usize != k + 1 {
                    return Err(CoreError::SuperlayerOutOfRange {
                        value: c.superlayer,
                    });
                }
                if !(0.0..=WIRES_PER_LAYER as f64).contains(&c.avg_wire) {
                    return Err(CoreError::WireOutOfRange { value: c.avg_wire });
                }
            }
        }
        for t in &self.truth {
            if t.momentum <= 0.0 {
                return Err(CoreError::NonPositiveMomentum { value: t.momentum });
            }
            if t.charge != 1 && t.charge != -1 {
                return Err(CoreError::InvalidCharge { value: t.charge });
            }
            for (k, &idx) in t.cluster_indices.iter().enumerate() {
                if idx >= self.clusters[k].len() {
                    return Err(CoreError::TruthIndexOutOfRange {
                        event_id: self.event_id,
                        superlayer: (k + 1) as u8,
                        index: idx,
                        len: self.clusters[k].len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// One entry of the Cartesian product over super-layer clusters.
///
/// `features[k]` is the normalized wire position in super-layer `k + 1`;
/// `source_indices[k]` points back at the cluster that produced it.
/// `is_true` is `Some` only for events that carry generator truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackCandidate {
    pub features: [f64; N_SUPERLAYERS],
    pub source_indices: [usize; N_SUPERLAYERS],
    pub is_true: Option<bool>,
}

/// Enumerate every combination of one cluster per super-layer, in
/// lexicographic order of the source indices.
pub fn generate_candidates(event: &Event) -> Result<Vec<TrackCandidate>, CoreError> {
    let mut total: usize = 1;
    for (k, list) in event.clusters.iter().enumerate() {
        if list.is_empty() {
            return Err(CoreError::EmptySuperlayer {
                event_id: event.event_id,
                superlayer: (k + 1) as u8,
            });
        }
        total = total
            .checked_mul(list.len())
            .ok_or(CoreError::CandidateCountOverflow)?;
    }

    let mut normalized: [Vec<f64>; N_SUPERLAYERS] = Default::default();
    for (k, list) in event.clusters.iter().enumerate() {
        normalized[k] = list
            .iter()
            .map(|c| normalize_wire(c.avg_wire))
            .collect::<Result<_, _>>()?;
    }

    let labeled = !event.truth.is_empty();
    let mut out = Vec::with_capacity(total);
    let mut indices = [0usize; N_SUPERLAYERS];
    loop {
        let mut features = [0.0; N_SUPERLAYERS];
        for k in 0..N_SUPERLAYERS {
            features[k] = normalized[k][indices[k]];
        }
        let is_true = labeled.then(|| {
            event
                .truth
                .iter()
                .any(|t| t.cluster_indices == indices)
        });
        out.push(TrackCandidate {
            features,
            source_indices: indices,
            is_true,
        });

        // Odometer increment: last super-layer varies fastest.
        let mut k = N_SUPERLAYERS;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            indices[k] += 1;
            if indices[k] < event.clusters[k].len() {
                break;
            }
            indices[k] = 0;
        }
    }
}

/// L1 distance between two candidates' normalized feature vectors.
pub fn candidate_distance(a: &TrackCandidate, b: &TrackCandidate) -> f64 {
    a.features
        .iter()
        .zip(b.features.iter())
        .map(|(x, y)| (x - y).abs())
        .sum()
}

#[derive(Serialize, Deserialize)]
struct ClusterRecord {
    sl: u8,
    avg_wire: f64,
}

#[derive(Serialize, Deserialize)]
struct TruthRecord {
    indices: [usize; N_SUPERLAYERS],
    momentum: f64,
    charge: i8,
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    event_id: u64,
    clusters: Vec<ClusterRecord>,
    #[serde(default)]
    truth: Vec<TruthRecord>,
}

impl From<&Event> for EventRecord {
    fn from(event: &Event) -> Self {
        let clusters = event
            .clusters
            .iter()
            .flatten()
            .map(|c| ClusterRecord {
                sl: c.superlayer,
                avg_wire: c.avg_wire,
            })
            .collect();
        let truth = event
            .truth
            .iter()
            .map(|t| TruthRecord {
                indices: t.cluster_indices,
                momentum: t.momentum,
                charge: t.charge,
            })
            .collect();
        EventRecord {
            event_id: event.event_id,
            clusters,
            truth,
        }
    }
}

impl EventRecord {
    fn into_event(self) -> Result<Event, CoreError> {
        let mut clusters: [Vec<Cluster>; N_SUPERLAYERS] = Default::default();
        for rec in self.clusters {
            let c = Cluster::new(rec.sl, rec.avg_wire)?;
            clusters[(rec.sl - 1) as usize].push(c);
        }
        let truth = self
            .truth
            .into_iter()
            .map(|t| TruthTrack::new(t.indices, t.momentum, t.charge))
            .collect::<Result<Vec<_>, _>>()?;
        Event::new(self.event_id, clusters, truth)
    }
}

/// Write events as JSON lines. Clusters are emitted grouped by super-layer
/// so truth indices survive a round trip.
pub fn write_events<W: Write>(writer: W, events: &[Event]) -> Result<(), CoreError> {
    let mut w = BufWriter::new(writer);
    for event in events {
        let record = EventRecord::from(event);
        serde_json::to_writer(&mut w, &record).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a JSON-lines event stream, validating every record. Blank lines are
/// skipped; errors carry the 1-based line number.
pub fn read_events<R: io::Read>(reader: R) -> Result<Vec<Event>, CoreError> {
    let mut events = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord =
            serde_json::from_str(&line).map_err(|source| CoreError::MalformedRecord {
                line: i + 1,
                source,
            })?;
        events.push(record.into_event()?);
    }
    Ok(events)
}

pub fn write_events_file<P: AsRef<Path>>(path: P, events: &[Event]) -> Result<(), CoreError> {
    write_events(File::create(path)?, events)
}

pub fn read_events_file<P: AsRef<Path>>(path: P) -> Result<Vec<Event>, CoreError> {
    read_events(File::open(path)?)
}
