//! Bootstrap envelopes, permutation nulls, the global envelope test and
//! clustering-range estimation.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by
//! `(seed, replicate index)`, and replicates are collected by index, so a
//! bundle does not depend on the size of the worker pool.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bands::BandSet;
use crate::estimators::{
    self, Estimator, EstimatorError, InapplicablePolicy, TauCurve, TauValue, UndefinedReason,
};
use crate::model::{CaseDataset, EpisodePanel, RelatednessRule};
use crate::pairing::{Geometry, PairContext, PairTable, RateTable};

/// Generator recorded in output metadata.
pub const RNG_NAME: &str = "chacha8 (rand_chacha 0.9), seed_from_u64(seed), stream = replicate index";

/// Fewest replicates for which percentile envelopes are computed.
pub const MIN_ENVELOPE_REPLICATES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("at least {needed} replicates are needed, got {found}")]
    TooFewReplicates { needed: usize, found: usize },
    #[error("alpha = {alpha} needs at least {needed} null replicates, got {found}")]
    InsufficientReplicates { alpha: f64, needed: usize, found: usize },
    #[error("rule {0} does not use onset times, so permuting them cannot break the space-time link")]
    RuleNotPermutable(String),
    #[error("permutation nulls are not available for the {0} estimator")]
    EstimatorNotPermutable(&'static str),
    #[error("expected a {expected:?} bundle, got {found:?}")]
    WrongBundleKind { expected: BundleKind, found: BundleKind },
    #[error("every one of {replicates} replicates stays above 1 over all bands")]
    AllCensored { replicates: usize },
    #[error("neither legacy criterion triggers")]
    NoCrossing,
    #[error("no band is defined for the observed curve and every null curve")]
    NoUsableBands,
    #[error("curves have {found} bands, expected {expected}")]
    BandMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    Bootstrap,
    PermutationNull,
}

/// A point estimate with `R` replicate curves over the same bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveBundle {
    pub point_estimate: TauCurve,
    /// One row per replicate, one column per band.
    pub replicates: Vec<Vec<TauValue>>,
    pub kind: BundleKind,
    pub seed: u64,
    pub rng: &'static str,
}

impl CurveBundle {
    pub fn replicate_count(&self) -> usize {
        self.replicates.len()
    }

    /// Defined replicate values at one band, in replicate order.
    pub fn column(&self, band: usize) -> Vec<f64> {
        self.replicates.iter().filter_map(|r| r[band].value()).collect()
    }
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Resampling multiplicities: `n` draws with replacement from `n` units.
fn multiplicities(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    let mut w = vec![0u64; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1;
    }
    w
}

fn undefined_row(bands: usize) -> Vec<TauValue> {
    vec![TauValue::Undefined(UndefinedReason::GlobalUndefined); bands]
}

fn require_replicates(r: usize) -> Result<(), InferenceError> {
    if r == 0 {
        return Err(InferenceError::TooFewReplicates { needed: 1, found: 0 });
    }
    Ok(())
}

/// Bootstrap over sampling units: cases for the odds estimator, all
/// individuals for prevalence. A unit drawn `c` times enters every pair with
/// weight `c`; pairs between copies of the same unit are excluded.
pub fn bootstrap_curves(
    dataset: &CaseDataset,
    bands: &BandSet,
    rule: &RelatednessRule,
    estimator: Estimator,
    r: usize,
    seed: u64,
) -> Result<CurveBundle, InferenceError> {
    require_replicates(r)?;
    if estimator == Estimator::Rate {
        return Err(InferenceError::InvalidArgument(
            "use bootstrap_rate_curves for the rate estimator".into(),
        ));
    }
    rule.validate().map_err(|e| InferenceError::InvalidArgument(e.to_string()))?;
    let mode = estimator.pair_mode();
    let policy = InapplicablePolicy::default();
    let table = PairTable::build(PairContext::new(dataset, bands, Geometry::Distance(rule), mode));
    let n = table.n_members();
    let curve = |w: &[u64]| {
        let tally = table.weighted_histogram(w).to_tally(&table.ctx.edges, bands, mode);
        estimators::curve_from_tally(&tally, estimator, policy)
    };
    let point_estimate = curve(&vec![1; n])?;
    let replicates = (0..r)
        .into_par_iter()
        .map(|k| {
            let w = multiplicities(&mut replicate_rng(seed, k), n);
            curve(&w).map_or_else(|_| undefined_row(bands.len()), |c| c.values)
        })
        .collect();
    Ok(CurveBundle {
        point_estimate,
        replicates,
        kind: BundleKind::Bootstrap,
        seed,
        rng: RNG_NAME,
    })
}

/// Bootstrap of the rate estimator: persons are resampled together with
/// their episodes and risk time.
pub fn bootstrap_rate_curves(
    panel: &EpisodePanel,
    bands: &BandSet,
    rule: &RelatednessRule,
    r: usize,
    seed: u64,
) -> Result<CurveBundle, InferenceError> {
    require_replicates(r)?;
    rule.validate().map_err(|e| InferenceError::InvalidArgument(e.to_string()))?;
    let table = RateTable::build(panel, bands, rule);
    let point_estimate = estimators::tau_rate(&table.tally(bands, None))?;
    let n = panel.persons_at_risk();
    let replicates = (0..r)
        .into_par_iter()
        .map(|k| {
            let w = multiplicities(&mut replicate_rng(seed, k), n);
            estimators::tau_rate(&table.tally(bands, Some(&w)))
                .map_or_else(|_| undefined_row(bands.len()), |c| c.values)
        })
        .collect();
    Ok(CurveBundle {
        point_estimate,
        replicates,
        kind: BundleKind::Bootstrap,
        seed,
        rng: RNG_NAME,
    })
}

/// Null curves from onset times permuted uniformly among cases, locations
/// fixed. Noncases keep their (absent) onsets.
pub fn permutation_null_curves(
    dataset: &CaseDataset,
    bands: &BandSet,
    rule: &RelatednessRule,
    estimator: Estimator,
    r: usize,
    seed: u64,
) -> Result<CurveBundle, InferenceError> {
    require_replicates(r)?;
    if estimator == Estimator::Rate {
        return Err(InferenceError::EstimatorNotPermutable(estimator.name()));
    }
    rule.validate().map_err(|e| InferenceError::InvalidArgument(e.to_string()))?;
    if !rule.uses_time() {
        return Err(InferenceError::RuleNotPermutable(rule.describe()));
    }
    let mode = estimator.pair_mode();
    let policy = InapplicablePolicy::default();
    let table = PairTable::build(PairContext::new(dataset, bands, Geometry::Distance(rule), mode));
    let inds = dataset.individuals();
    let onsets: Vec<Option<f64>> = table.ctx.members.iter().map(|&k| inds[k].onset).collect();
    let case_slots: Vec<usize> = table
        .ctx
        .members
        .iter()
        .enumerate()
        .filter(|(_, &k)| inds[k].is_case())
        .map(|(p, _)| p)
        .collect();
    let curve = |t: &[Option<f64>]| {
        let tally = table.relabelled_histogram(t).to_tally(&table.ctx.edges, bands, mode);
        estimators::curve_from_tally(&tally, estimator, policy)
    };
    let point_estimate = curve(&onsets)?;
    let replicates = (0..r)
        .into_par_iter()
        .map(|k| {
            let mut rng = replicate_rng(seed, k);
            let mut pool: Vec<Option<f64>> = case_slots.iter().map(|&p| onsets[p]).collect();
            pool.shuffle(&mut rng);
            let mut t = onsets.clone();
            for (&p, v) in case_slots.iter().zip(pool) {
                t[p] = v;
            }
            curve(&t).map_or_else(|_| undefined_row(bands.len()), |c| c.values)
        })
        .collect();
    Ok(CurveBundle {
        point_estimate,
        replicates,
        kind: BundleKind::PermutationNull,
        seed,
        rng: RNG_NAME,
    })
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn check_level(level: f64) -> Result<(), InferenceError> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(InferenceError::InvalidArgument(format!("level {level} must lie in (0, 1]")));
    }
    Ok(())
}

/// Per-band percentile bounds over defined replicate values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub level: f64,
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
    /// Share of replicates defined at each band.
    pub defined_fraction: Vec<f64>,
    /// More than half of the replicates are undefined at the band.
    pub unreliable: Vec<bool>,
}

pub fn pointwise_envelope(bundle: &CurveBundle, level: f64) -> Result<Envelope, InferenceError> {
    check_level(level)?;
    let r = bundle.replicate_count();
    if r < MIN_ENVELOPE_REPLICATES {
        return Err(InferenceError::TooFewReplicates {
            needed: MIN_ENVELOPE_REPLICATES,
            found: r,
        });
    }
    let tail = (1.0 - level) / 2.0;
    let nb = bundle.point_estimate.bands.len();
    let mut env = Envelope {
        level,
        lo: Vec::with_capacity(nb),
        hi: Vec::with_capacity(nb),
        defined_fraction: Vec::with_capacity(nb),
        unreliable: Vec::with_capacity(nb),
    };
    for b in 0..nb {
        let col = sorted(bundle.column(b));
        let frac = col.len() as f64 / r as f64;
        env.defined_fraction.push(frac);
        env.unreliable.push(frac < 0.5);
        if col.is_empty() {
            env.lo.push(None);
            env.hi.push(None);
        } else {
            env.lo.push(Some(quantile(&col, tail)));
            env.hi.push(Some(quantile(&col, 1.0 - tail)));
        }
    }
    Ok(env)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeTestResult {
    pub p_value: f64,
    /// Significance level the envelope and decision refer to.
    pub reject_at: f64,
    pub reject: bool,
    /// Rank envelope bounds; `None` at bands left out of the test.
    pub global_lo: Vec<Option<f64>>,
    pub global_hi: Vec<Option<f64>>,
    /// Bands where the observed and every null curve are defined.
    pub bands_used: Vec<bool>,
    /// Two-sided extreme rank of the observed curve.
    pub observed_extreme_rank: f64,
    /// Envelope rank: bounds are the `k`-th smallest and largest null values.
    pub k_alpha: usize,
}

/// Two-sided mid-ranks of `values` (ascending mid-rank or its mirror,
/// whichever is smaller).
fn two_sided_ranks(values: &[f64]) -> Vec<f64> {
    let s = values.len();
    let mut idx: Vec<usize> = (0..s).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let two = mid.min(s as f64 + 1.0 - mid);
        for &k in &idx[i..=j] {
            out[k] = two;
        }
        i = j + 1;
    }
    out
}

/// Global extreme-rank envelope test of `observed` against permutation
/// nulls.
///
/// Each curve's pointwise two-sided mid-ranks are sorted ascending and curves
/// are ordered lexicographically on that vector, so the first entry is the
/// extreme rank and later entries break its ties. The p-value counts null
/// curves at least as extreme as the observed one. Bands where any curve is
/// undefined are left out.
pub fn global_envelope_test(
    observed: &TauCurve,
    null_bundle: &CurveBundle,
    alpha: f64,
) -> Result<EnvelopeTestResult, InferenceError> {
    if null_bundle.kind != BundleKind::PermutationNull {
        return Err(InferenceError::WrongBundleKind {
            expected: BundleKind::PermutationNull,
            found: null_bundle.kind,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidArgument(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let r = null_bundle.replicate_count();
    let needed = ((1.0 / alpha).ceil() as usize).saturating_sub(1);
    if r < needed.max(1) {
        return Err(InferenceError::InsufficientReplicates {
            alpha,
            needed: needed.max(1),
            found: r,
        });
    }
    let nb = observed.values.len();
    if let Some(row) = null_bundle.replicates.iter().find(|row| row.len() != nb) {
        return Err(InferenceError::BandMismatch {
            expected: nb,
            found: row.len(),
        });
    }
    let curves: Vec<&[TauValue]> = std::iter::once(observed.values.as_slice())
        .chain(null_bundle.replicates.iter().map(Vec::as_slice))
        .collect();
    let bands_used: Vec<bool> = (0..nb)
        .map(|b| curves.iter().all(|c| c[b].is_defined()))
        .collect();
    let used: Vec<usize> = (0..nb).filter(|&b| bands_used[b]).collect();
    if used.is_empty() {
        return Err(InferenceError::NoUsableBands);
    }

    let s = curves.len();
    let mut ranks = vec![Vec::with_capacity(used.len()); s];
    for &b in &used {
        let column: Vec<f64> = curves.iter().map(|c| c[b].value().expect("used band")).collect();
        for (j, v) in two_sided_ranks(&column).into_iter().enumerate() {
            ranks[j].push(v);
        }
    }
    for row in &mut ranks {
        row.sort_by(f64::total_cmp);
    }
    let lex = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    let as_extreme = ranks[1..].iter().filter(|n| lex(n, &ranks[0]).is_le()).count();
    let p_value = (1 + as_extreme) as f64 / s as f64;

    let null_extreme: Vec<f64> = ranks[1..].iter().map(|v| v[0]).collect();
    let mut k_alpha = 1;
    for k in 1..=r {
        if null_extreme.iter().filter(|&&e| e < k as f64).count() as f64 <= alpha * r as f64 {
            k_alpha = k;
        } else {
            break;
        }
    }
    let mut global_lo = vec![None; nb];
    let mut global_hi = vec![None; nb];
    for &b in &used {
        let col = sorted(null_bundle.column(b));
        global_lo[b] = Some(col[k_alpha - 1]);
        global_hi[b] = Some(col[r - k_alpha]);
    }
    Ok(EnvelopeTestResult {
        p_value,
        reject_at: alpha,
        reject: p_value <= alpha,
        global_lo,
        global_hi,
        bands_used,
        observed_extreme_rank: ranks[0][0],
        k_alpha,
    })
}

/// Which down-crossing of 1 defines a replicate's range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    #[default]
    First,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub crossing: Crossing,
    /// Share of replicates that never cross down to 1.
    pub censored_fraction: f64,
    /// `None` for censored replicates.
    pub per_replicate: Vec<Option<f64>>,
}

/// Distance at which a curve drawn through `(x, v)` falls to 1, or `None`
/// when it stays above 1. A curve that starts at or below 1 gives 0.
/// Undefined points are skipped.
pub fn crossing_distance(xs: &[f64], values: &[TauValue], crossing: Crossing) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(values)
        .filter(|(x, _)| x.is_finite())
        .filter_map(|(&x, v)| v.value().map(|v| (x, v)))
        .collect();
    let &(_, first) = pts.first()?;
    if first <= 1.0 && (crossing == Crossing::First || pts.iter().all(|p| p.1 <= 1.0)) {
        return Some(0.0);
    }
    let mut found = None;
    for w in pts.windows(2) {
        let ((x0, v0), (x1, v1)) = (w[0], w[1]);
        if v0 > 1.0 && v1 <= 1.0 {
            found = Some(x0 + (x1 - x0) * (v0 - 1.0) / (v0 - v1));
            if crossing == Crossing::First {
                break;
            }
        }
    }
    match crossing {
        Crossing::First => found,
        Crossing::Last if pts.last()?.1 > 1.0 => None,
        Crossing::Last => found.or(Some(0.0)),
    }
}

/// Clustering range from the down-crossings of 1 by bootstrap replicate
/// curves (band-end plot points). The point is the median of uncensored
/// crossings and the interval their percentile bounds at `level`.
pub fn clustering_range(
    bundle: &CurveBundle,
    level: f64,
    crossing: Crossing,
) -> Result<RangeEstimate, InferenceError> {
    if bundle.kind != BundleKind::Bootstrap {
        return Err(InferenceError::WrongBundleKind {
            expected: BundleKind::Bootstrap,
            found: bundle.kind,
        });
    }
    check_level(level)?;
    require_replicates(bundle.replicate_count())?;
    let xs: Vec<f64> = bundle.point_estimate.bands.bands().iter().map(|b| b.hi).collect();
    let per_replicate: Vec<Option<f64>> = bundle
        .replicates
        .iter()
        .map(|row| crossing_distance(&xs, row, crossing))
        .collect();
    let d = sorted(per_replicate.iter().flatten().copied().collect());
    if d.is_empty() {
        return Err(InferenceError::AllCensored {
            replicates: per_replicate.len(),
        });
    }
    let tail = (1.0 - level) / 2.0;
    Ok(RangeEstimate {
        point: quantile(&d, 0.5),
        lo: quantile(&d, tail),
        hi: quantile(&d, 1.0 - tail),
        level,
        crossing,
        censored_fraction: 1.0 - d.len() as f64 / per_replicate.len() as f64,
        per_replicate,
    })
}

/// Which legacy criterion fired first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LegacyTrigger {
    /// The lower envelope bound is at or below 1 over two consecutive bands.
    LowerBoundTwoBands,
    /// The replicate median first falls below 1.2.
    MedianBelowThreshold,
}

/// Output of the legacy heuristic. It carries no uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LegacyRange {
    pub distance: f64,
    pub trigger: LegacyTrigger,
}

/// Median threshold of the legacy heuristic.
pub const LEGACY_MEDIAN_THRESHOLD: f64 = 1.2;

/// Legacy range heuristic, kept for comparison with published analyses.
///
/// Criterion A: the lower pointwise bound is at most 1 at bands `k` and
/// `k + 1`, giving the end of band `k`. Criterion B: the median of the
/// replicates first drops below 1.2 at a band, giving that band's plot point.
/// The smaller distance wins.
pub fn legacy_range_azman(
    point: &TauCurve,
    envelope: &Envelope,
    bundle: &CurveBundle,
) -> Result<LegacyRange, InferenceError> {
    let nb = point.bands.len();
    for found in [envelope.lo.len(), bundle.point_estimate.bands.len()] {
        if found != nb {
            return Err(InferenceError::BandMismatch { expected: nb, found });
        }
    }
    let bands = point.bands.bands();
    let by_bound = (0..nb.saturating_sub(1))
        .find(|&k| {
            matches!((envelope.lo[k], envelope.lo[k + 1]), (Some(a), Some(b)) if a <= 1.0 && b <= 1.0)
        })
        .map(|k| LegacyRange {
            distance: bands[k].hi,
            trigger: LegacyTrigger::LowerBoundTwoBands,
        });
    let xs = point.plot_points();
    let by_median = (0..nb)
        .find(|&b| {
            let col = sorted(bundle.column(b));
            !col.is_empty() && quantile(&col, 0.5) < LEGACY_MEDIAN_THRESHOLD
        })
        .map(|b| LegacyRange {
            distance: xs[b],
            trigger: LegacyTrigger::MedianBelowThreshold,
        });
    match (by_bound, by_median) {
        (Some(a), Some(b)) => Ok(if b.distance < a.distance { b } else { a }),
        (a, b) => a.or(b).ok_or(InferenceError::NoCrossing),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{equal_width_bands, Axis, Band, BandStyle};
    use crate::estimators::PlotConvention;
    use crate::model::{CrsMode, Individual};

    fn running_example() -> CaseDataset {
        let inds = [(0.0, 0.0), (1.0, 1.0), (2.0, 50.0), (10.0, 100.0)]
            .iter()
            .enumerate()
            .map(|(k, &(x, t))| Individual::case(format!("c{k}"), x, 0.0, t))
            .collect();
        CaseDataset::new(inds, CrsMode::Planar).unwrap()
    }

    fn bands_0_2_inf() -> BandSet {
        BandSet::new(
            vec![
                Band::new(0.0, 2.0, Axis::Distance).unwrap(),
                Band::new(2.0, f64::INFINITY, Axis::Distance).unwrap(),
            ],
            BandStyle::Custom,
            Axis::Distance,
        )
        .unwrap()
    }

    fn bundle_from(rows: Vec<Vec<f64>>, bands: BandSet, kind: BundleKind) -> CurveBundle {
        let nb = bands.len();
        let point_estimate = TauCurve {
            estimator: Estimator::Odds,
            bands,
            values: vec![TauValue::Defined(1.0); nb],
            support: Vec::new(),
            convention: PlotConvention::BandEnd,
            warnings: Vec::new(),
        };
        CurveBundle {
            point_estimate,
            replicates: rows
                .into_iter()
                .map(|r| r.into_iter().map(TauValue::Defined).collect())
                .collect(),
            kind,
            seed: 0,
            rng: RNG_NAME,
        }
    }

    fn d(v: f64) -> TauValue {
        TauValue::Defined(v)
    }

    #[test]
    fn quantile_interpolates() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile(&v, 0.025) - 3.475).abs() < 1e-12);
        assert!((quantile(&v, 0.975) - 97.525).abs() < 1e-12);
        assert_eq!(quantile(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn bootstrap_is_deterministic_and_plausible() {
        let ds = running_example();
        let rule = RelatednessRule::temporal(0.0, 5.0).unwrap();
        let bands = bands_0_2_inf();
        let a = bootstrap_curves(&ds, &bands, &rule, Estimator::Odds, 500, 7).unwrap();
        let b = bootstrap_curves(&ds, &bands, &rule, Estimator::Odds, 500, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.point_estimate.values[0], d(5.0));
        let col = a.column(0);
        assert!(!col.is_empty());
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!(mean > 5.0 / 3.0 && mean < 15.0, "mean {mean}");
        assert!(col.iter().any(|&v| v != col[0]));
    }

    #[test]
    fn single_replicate_resamples_every_case() {
        let ds = running_example();
        let rule = RelatednessRule::temporal(0.0, 5.0).unwrap();
        let b = bootstrap_curves(&ds, &bands_0_2_inf(), &rule, Estimator::Odds, 1, 3).unwrap();
        assert_eq!(b.replicate_count(), 1);
        let w = multiplicities(&mut replicate_rng(3, 0), 4);
        assert_eq!(w.iter().sum::<u64>(), 4);
    }

    #[test]
    fn permutation_refuses_mark_rules() {
        let ds = running_example();
        let rule = RelatednessRule::MarkEquality { mark: "serotype".into() };
        let e = permutation_null_curves(&ds, &bands_0_2_inf(), &rule, Estimator::Odds, 10, 1);
        assert!(matches!(e, Err(InferenceError::RuleNotPermutable(_))));
    }

    #[test]
    fn two_case_permutation_matches_point() {
        let ds = CaseDataset::new(
            vec![Individual::case("a", 0.0, 0.0, 0.0), Individual::case("b", 1.0, 0.0, 3.0)],
            CrsMode::Planar,
        )
        .unwrap();
        let rule = RelatednessRule::temporal(0.0, 5.0).unwrap();
        let bands = equal_width_bands(2.0, 2).unwrap();
        let out = permutation_null_curves(&ds, &bands, &rule, Estimator::Prev, 1, 1);
        // one related pair and nothing unrelated: the global prevalence is defined
        let out = out.unwrap();
        assert!(out.replicates.iter().all(|r| r == &out.point_estimate.values));
    }

    #[test]
    fn envelope_rules() {
        let bands = equal_width_bands(10.0, 1).unwrap();
        let rows: Vec<Vec<f64>> = (1..=100).map(|k| vec![k as f64]).collect();
        let env = pointwise_envelope(&bundle_from(rows, bands.clone(), BundleKind::Bootstrap), 0.95).unwrap();
        assert!((env.lo[0].unwrap() - 3.475).abs() < 1e-12);
        assert!((env.hi[0].unwrap() - 97.525).abs() < 1e-12);

        let flat = bundle_from(vec![vec![2.5]; 30], bands.clone(), BundleKind::Bootstrap);
        let env = pointwise_envelope(&flat, 0.9).unwrap();
        assert_eq!((env.lo[0], env.hi[0]), (Some(2.5), Some(2.5)));

        let few = bundle_from(vec![vec![1.0]; 5], bands, BundleKind::Bootstrap);
        assert!(matches!(
            pointwise_envelope(&few, 0.95),
            Err(InferenceError::TooFewReplicates { found: 5, .. })
        ));
    }

    #[test]
    fn global_test_extremes() {
        let bands = equal_width_bands(40.0, 4).unwrap();
        let r = 39;
        let template = bundle_from(vec![], bands.clone(), BundleKind::PermutationNull).point_estimate;
        let obs = |v: Vec<f64>| TauCurve {
            values: v.into_iter().map(TauValue::Defined).collect(),
            ..template.clone()
        };

        let same = bundle_from(vec![vec![1.0; 4]; r], bands.clone(), BundleKind::PermutationNull);
        let res = global_envelope_test(&obs(vec![1.0; 4]), &same, 0.05).unwrap();
        assert_eq!(res.p_value, 1.0);

        // null orderings rotate between bands, so no null is extreme everywhere
        let rows: Vec<Vec<f64>> = (0..r)
            .map(|j| (0..4).map(|b| ((j + 7 * b) % r) as f64).collect())
            .collect();
        let nulls = bundle_from(rows, bands.clone(), BundleKind::PermutationNull);
        let res = global_envelope_test(&obs(vec![100.0; 4]), &nulls, 0.05).unwrap();
        assert_eq!(res.p_value, 1.0 / (r as f64 + 1.0));
        assert!(res.reject);

        let short = bundle_from(vec![vec![1.0; 4]; 10], bands, BundleKind::PermutationNull);
        assert!(matches!(
            global_envelope_test(&obs(vec![1.0; 4]), &short, 0.05),
            Err(InferenceError::InsufficientReplicates { needed: 19, .. })
        ));
    }

    #[test]
    fn rank_envelope_is_nested() {
        let bands = equal_width_bands(30.0, 3).unwrap();
        let rows: Vec<Vec<f64>> = (0..99)
            .map(|j| (0..3).map(|b| ((j * 37 + b * 11) % 99) as f64).collect())
            .collect();
        let nulls = bundle_from(rows, bands.clone(), BundleKind::PermutationNull);
        let obs = TauCurve {
            values: vec![d(50.0); 3],
            ..nulls.point_estimate.clone()
        };
        let wide = global_envelope_test(&obs, &nulls, 0.01).unwrap();
        let narrow = global_envelope_test(&obs, &nulls, 0.2).unwrap();
        for b in 0..3 {
            assert!(wide.global_lo[b] <= narrow.global_lo[b]);
            assert!(wide.global_hi[b] >= narrow.global_hi[b]);
        }
    }

    #[test]
    fn crossing_interpolation() {
        let xs = [25.0, 50.0, 75.0];
        let x = crossing_distance(&xs, &[d(4.0), d(0.5), d(2.0)], Crossing::First).unwrap();
        assert!((x - (25.0 + 25.0 * 3.0 / 3.5)).abs() < 1e-12);
        assert_eq!(crossing_distance(&xs, &[d(1.0); 3], Crossing::First), Some(0.0));
        assert_eq!(crossing_distance(&xs, &[d(3.0), d(2.0), d(1.5)], Crossing::First), None);
        assert_eq!(crossing_distance(&xs, &[d(4.0), d(0.5), d(2.0)], Crossing::Last), None);
        let xs4 = [25.0, 50.0, 75.0, 100.0];
        let last = crossing_distance(&xs4, &[d(4.0), d(0.5), d(3.0), d(0.0)], Crossing::Last);
        assert_eq!(last, Some(75.0 + 25.0 * 2.0 / 3.0));
        let gap = [d(3.0), TauValue::Undefined(UndefinedReason::EmptyBand), d(0.0)];
        assert_eq!(crossing_distance(&xs, &gap, Crossing::First), Some(25.0 + 50.0 * 2.0 / 3.0));
    }

    #[test]
    fn range_from_constant_replicates() {
        let bands = equal_width_bands(100.0, 4).unwrap();
        let est = clustering_range(&bundle_from(vec![vec![1.0; 4]; 25], bands.clone(), BundleKind::Bootstrap), 0.95, Crossing::First)
            .unwrap();
        assert_eq!((est.point, est.lo, est.hi), (0.0, 0.0, 0.0));
        let above = bundle_from(vec![vec![2.0; 4]; 25], bands, BundleKind::Bootstrap);
        assert!(matches!(
            clustering_range(&above, 0.95, Crossing::First),
            Err(InferenceError::AllCensored { replicates: 25 })
        ));
    }

    #[test]
    fn legacy_rules() {
        let bands = equal_width_bands(100.0, 4).unwrap();
        let env_with = |lo: [f64; 4]| Envelope {
            level: 0.95,
            lo: lo.iter().copied().map(Some).collect(),
            hi: vec![Some(9.0); 4],
            defined_fraction: vec![1.0; 4],
            unreliable: vec![false; 4],
        };
        let high = bundle_from(vec![vec![3.0; 4]; 21], bands.clone(), BundleKind::Bootstrap);
        let point = high.point_estimate.clone();

        let r = legacy_range_azman(&point, &env_with([2.0, 0.9, 0.8, 2.0]), &high).unwrap();
        assert_eq!(r.distance, 50.0);
        assert_eq!(r.trigger, LegacyTrigger::LowerBoundTwoBands);

        assert_eq!(
            legacy_range_azman(&point, &env_with([2.0, 0.9, 2.0, 0.8]), &high),
            Err(InferenceError::NoCrossing)
        );

        let dips = bundle_from(vec![vec![3.0, 2.0, 1.1, 0.9]; 21], bands, BundleKind::Bootstrap);
        let r = legacy_range_azman(&point, &env_with([2.0; 4]), &dips).unwrap();
        assert_eq!(r.distance, 75.0);
        assert_eq!(r.trigger, LegacyTrigger::MedianBelowThreshold);
    }
}
