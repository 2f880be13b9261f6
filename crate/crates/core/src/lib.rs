//! Spatiotemporal tau statistics for individual-level epidemiological data.
//!
//! The crate computes the odds, prevalence and rate forms of the tau
//! statistic over distance bands, and the inference built on them:
//! bootstrap envelopes, permutation nulls, global envelope tests and
//! clustering-range estimation.

pub mod bands;
pub mod estimators;
pub mod inference;
pub mod interval;
pub mod model;
pub mod pairing;
pub mod synth;

pub use bands::{Axis, Band, BandError, BandSet, BandSpec, BandStyle};
pub use estimators::{
    Estimator, EstimatorError, InapplicablePolicy, PlotConvention, TauCurve, TauValue, UndefinedReason,
};
pub use inference::{
    BundleKind, CurveBundle, Crossing, Envelope, EnvelopeTestResult, InferenceError, LegacyRange, RangeEstimate,
};
pub use model::{
    CaseDataset, Coord, CrsMode, DataError, Episode, EpisodePanel, Individual, PanelOptions, Person,
    RelatednessRule, Status,
};
pub use pairing::{PairCounts, PairMode, PairTally, RateCounts, RateTally, Relatedness};
