//! Track-candidate triage for a toy drift-chamber reconstruction chain.
//!
//! A simulated chamber produces hit clusters in six super-layers; every
//! combination of one cluster per super-layer is a track candidate, and
//! only one of them is a real track. The crate trains small classifiers
//! (a multilayer perceptron and extremely randomized trees, both written
//! here) to cull fake candidates before the expensive fitting stage, and
//! measures what that buys in reconstruction speed at fixed efficiency.

pub mod core;
pub mod dataset;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod simgen;
pub mod study;

pub use crate::core::{Cluster, Event, TrackCandidate, TruthTrack};
pub use crate::dataset::{Dataset, NegativeStrategy};
pub use crate::models::{Classifier, Model};
pub use crate::simgen::SimConfig;
