//! Tau estimators: odds, prevalence and rate ratios, the time form, the
//! distance x time-lag map, and the Cuzick-Edwards k-NN count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bands::{Axis, Band, BandSet};
use crate::model::{CaseDataset, RelatednessRule};
use crate::pairing::{self, BinEdges, PairMode, PairTally, RateTally};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("global odds undefined: the data hold no related or no unrelated pairs")]
    GlobalOddsUndefined,
    #[error("global prevalence undefined: no related pairs at any distance")]
    GlobalPrevalenceUndefined,
    #[error("global rate undefined: zero total pair-time or no related episode pairs")]
    GlobalRateUndefined,
    #[error("{estimator:?} needs a tally counted in {expected:?} mode")]
    WrongMode {
        estimator: Estimator,
        expected: PairMode,
    },
    #[error("k = {k} must be between 1 and N - 1 = {max}")]
    KTooLarge { k: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Odds,
    Prev,
    Rate,
}

impl Estimator {
    /// Individuals that take part in pair enumeration.
    pub fn pair_mode(self) -> PairMode {
        match self {
            Estimator::Odds => PairMode::CasesOnly,
            Estimator::Prev | Estimator::Rate => PairMode::AllIndividuals,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Odds => "odds",
            Estimator::Prev => "prev",
            Estimator::Rate => "rate",
        }
    }
}

/// Where a band's value is drawn on the horizontal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotConvention {
    #[default]
    BandEnd,
    BandMidpoint,
}

impl PlotConvention {
    /// Unbounded bands are drawn at their lower edge.
    pub fn x(self, band: &Band) -> f64 {
        if band.is_unbounded() {
            return band.lo;
        }
        match self {
            PlotConvention::BandEnd => band.hi,
            PlotConvention::BandMidpoint => band.midpoint(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    /// Related pairs but no unrelated pairs in the band.
    ZeroUnrelatedInBand,
    /// No pairs in the band.
    EmptyBand,
    /// No pair person-time-at-risk in the band.
    ZeroPairTime,
    /// The all-distance reference is itself undefined.
    GlobalUndefined,
}

/// A tau value or the reason it does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauValue {
    Defined(f64),
    Undefined(UndefinedReason),
}

impl TauValue {
    pub fn value(self) -> Option<f64> {
        match self {
            TauValue::Defined(v) => Some(v),
            TauValue::Undefined(_) => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, TauValue::Defined(_))
    }
}

/// Counts behind one band's value: related pairs and the comparison quantity
/// (unrelated pairs for odds, all pairs for prevalence, pair-time for rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSupport {
    pub related: u64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauCurve {
    pub estimator: Estimator,
    pub bands: BandSet,
    pub values: Vec<TauValue>,
    pub support: Vec<BandSupport>,
    pub convention: PlotConvention,
    pub warnings: Vec<String>,
}

impl TauCurve {
    pub fn plot_points(&self) -> Vec<f64> {
        self.bands
            .bands()
            .iter()
            .map(|b| self.convention.x(b))
            .collect()
    }

    pub fn defined_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().filter_map(|v| v.value())
    }

    /// Header for the `reference` column of [`BandSupport`].
    pub fn reference_label(&self) -> &'static str {
        match self.estimator {
            Estimator::Odds => "n_unrelated",
            Estimator::Prev => "n_total",
            Estimator::Rate => "pair_time",
        }
    }
}

/// Treatment of pairs whose relatedness cannot be judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InapplicablePolicy {
    /// Counted as unrelated: odds denominator, prevalence total.
    #[default]
    CountAsUnrelated,
    /// Dropped from every count.
    Exclude,
}

/// `(a / b) / (c / d)` evaluated as `(a * d) / (b * c)`, which is exactly 1
/// whenever the band and the global counts coincide.
fn ratio_of_ratios(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (a * d) / (b * c)
}

fn require_mode(tally: &PairTally, estimator: Estimator) -> Result<(), EstimatorError> {
    let expected = estimator.pair_mode();
    if tally.mode != expected {
        return Err(EstimatorError::WrongMode {
            estimator,
            expected,
        });
    }
    Ok(())
}

/// Odds-ratio estimator with inapplicable pairs counted as unrelated.
pub fn tau_odds(tally: &PairTally) -> Result<TauCurve, EstimatorError> {
    tau_odds_with(tally, InapplicablePolicy::CountAsUnrelated)
}

pub fn tau_odds_with(tally: &PairTally, policy: InapplicablePolicy) -> Result<TauCurve, EstimatorError> {
    require_mode(tally, Estimator::Odds)?;
    odds_curve(tally, policy)
}

fn odds_curve(tally: &PairTally, policy: InapplicablePolicy) -> Result<TauCurve, EstimatorError> {
    let unrelated = |c: &pairing::PairCounts| match policy {
        InapplicablePolicy::CountAsUnrelated => c.unrelated + c.inapplicable,
        InapplicablePolicy::Exclude => c.unrelated,
    };
    let (rel_g, unrel_g) = (tally.global.related, unrelated(&tally.global));
    if rel_g == 0 || unrel_g == 0 {
        return Err(EstimatorError::GlobalOddsUndefined);
    }
    let mut values = Vec::with_capacity(tally.per_band.len());
    let mut support = Vec::with_capacity(tally.per_band.len());
    for c in &tally.per_band {
        let (rel, unrel) = (c.related, unrelated(c));
        values.push(match (rel, unrel) {
            (0, 0) => TauValue::Undefined(UndefinedReason::EmptyBand),
            (_, 0) => TauValue::Undefined(UndefinedReason::ZeroUnrelatedInBand),
            _ => TauValue::Defined(ratio_of_ratios(
                rel as f64,
                unrel as f64,
                rel_g as f64,
                unrel_g as f64,
            )),
        });
        support.push(BandSupport {
            related: rel,
            reference: unrel as f64,
        });
    }
    Ok(TauCurve {
        estimator: Estimator::Odds,
        bands: tally.bands.clone(),
        values,
        support,
        convention: PlotConvention::default(),
        warnings: Vec::new(),
    })
}

/// Relative-prevalence estimator with inapplicable pairs kept in the totals.
pub fn tau_prev(tally: &PairTally) -> Result<TauCurve, EstimatorError> {
    tau_prev_with(tally, InapplicablePolicy::CountAsUnrelated)
}

pub fn tau_prev_with(tally: &PairTally, policy: InapplicablePolicy) -> Result<TauCurve, EstimatorError> {
    require_mode(tally, Estimator::Prev)?;
    let total = |c: &pairing::PairCounts| match policy {
        InapplicablePolicy::CountAsUnrelated => c.total,
        InapplicablePolicy::Exclude => c.total - c.inapplicable,
    };
    let (rel_g, tot_g) = (tally.global.related, total(&tally.global));
    if rel_g == 0 {
        return Err(EstimatorError::GlobalPrevalenceUndefined);
    }
    let mut values = Vec::with_capacity(tally.per_band.len());
    let mut support = Vec::with_capacity(tally.per_band.len());
    for c in &tally.per_band {
        let (rel, tot) = (c.related, total(c));
        values.push(if tot == 0 {
            TauValue::Undefined(UndefinedReason::EmptyBand)
        } else {
            TauValue::Defined(ratio_of_ratios(rel as f64, tot as f64, rel_g as f64, tot_g as f64))
        });
        support.push(BandSupport {
            related: rel,
            reference: tot as f64,
        });
    }
    Ok(TauCurve {
        estimator: Estimator::Prev,
        bands: tally.bands.clone(),
        values,
        support,
        convention: PlotConvention::default(),
        warnings: Vec::new(),
    })
}

/// Rate-ratio estimator: related directed episode pairs per unit of pair
/// person-time-at-risk, relative to all distances.
pub fn tau_rate(tally: &RateTally) -> Result<TauCurve, EstimatorError> {
    let (rel_g, time_g) = (tally.global.related_pairs, tally.global.pair_time);
    if time_g <= 0.0 || rel_g == 0 {
        return Err(EstimatorError::GlobalRateUndefined);
    }
    let mut warnings = tally.warnings.clone();
    let mut values = Vec::with_capacity(tally.per_band.len());
    let mut support = Vec::with_capacity(tally.per_band.len());
    for (c, band) in tally.per_band.iter().zip(tally.bands.bands()) {
        values.push(if c.pair_time <= 0.0 {
            if c.related_pairs > 0 && !warnings.iter().any(|w| w.starts_with(&format!("band {band}"))) {
                warnings.push(format!("band {band}: related episode pairs with zero pair-time"));
            }
            TauValue::Undefined(UndefinedReason::ZeroPairTime)
        } else {
            TauValue::Defined(ratio_of_ratios(
                c.related_pairs as f64,
                c.pair_time,
                rel_g as f64,
                time_g,
            ))
        });
        support.push(BandSupport {
            related: c.related_pairs,
            reference: c.pair_time,
        });
    }
    Ok(TauCurve {
        estimator: Estimator::Rate,
        bands: tally.bands.clone(),
        values,
        support,
        convention: PlotConvention::default(),
        warnings,
    })
}

/// Tallies and evaluates the odds or prevalence estimator in one step.
pub fn estimate(
    dataset: &CaseDataset,
    bands: &BandSet,
    rule: &RelatednessRule,
    estimator: Estimator,
    policy: InapplicablePolicy,
) -> Result<TauCurve, EstimatorError> {
    let tally = pairing::tally_pairs(dataset, bands, rule, estimator.pair_mode());
    match estimator {
        Estimator::Odds => tau_odds_with(&tally, policy),
        Estimator::Prev => tau_prev_with(&tally, policy),
        Estimator::Rate => Err(EstimatorError::InvalidArgument(
            "the rate estimator needs an episode panel".into(),
        )),
    }
}

/// Evaluates the estimator on a precomputed tally (used for replicates).
pub(crate) fn curve_from_tally(
    tally: &PairTally,
    estimator: Estimator,
    policy: InapplicablePolicy,
) -> Result<TauCurve, EstimatorError> {
    match estimator {
        Estimator::Odds => odds_curve(tally, policy),
        Estimator::Prev => tau_prev_with(tally, policy),
        Estimator::Rate => Err(EstimatorError::InvalidArgument(
            "the rate estimator needs an episode panel".into(),
        )),
    }
}

/// Time form: pairs are related when closer than `distance_window` and are
/// banded on their onset lag `|dt|`. Odds estimator over cases.
pub fn tau_time_form(
    dataset: &CaseDataset,
    time_bands: &BandSet,
    distance_window: f64,
) -> Result<TauCurve, EstimatorError> {
    if time_bands.axis() != Axis::Time {
        return Err(EstimatorError::InvalidArgument(
            "time form needs bands on the time axis".into(),
        ));
    }
    if !(distance_window.is_finite() && distance_window > 0.0) {
        return Err(EstimatorError::InvalidArgument(format!(
            "distance window {distance_window} must be positive"
        )));
    }
    let tally = pairing::tally_time_lags(dataset, time_bands, distance_window);
    odds_curve(&tally, InapplicablePolicy::CountAsUnrelated)
}

/// Odds estimates over a distance x time-lag grid; `cells[a][b]` uses distance
/// band `a` and treats a pair as related when its lag lies in lag band `b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauMap {
    pub distance_bands: BandSet,
    pub time_lag_bands: BandSet,
    pub cells: Vec<Vec<TauValue>>,
    /// Pairs in distance band `a` with lag in band `b`.
    pub related: Vec<Vec<u64>>,
    /// Pairs in distance band `a` with lag outside band `b`.
    pub unrelated: Vec<Vec<u64>>,
    /// Cells holding fewer than `min_pairs` related pairs.
    pub low_support: Vec<Vec<bool>>,
    pub min_pairs: u64,
}

pub const DEFAULT_MIN_PAIRS: u64 = 10;

pub fn tau_spacetime_map(
    dataset: &CaseDataset,
    distance_bands: &BandSet,
    time_lag_bands: &BandSet,
    min_pairs: u64,
) -> Result<TauMap, EstimatorError> {
    if distance_bands.is_empty() || time_lag_bands.is_empty() {
        return Err(EstimatorError::InvalidArgument("map needs non-empty band sets".into()));
    }
    let dist = BinEdges::new(distance_bands);
    let lag = BinEdges::new(time_lag_bands);
    let hist = pairing::joint_histogram(dataset, &dist, &lag);
    let lag_bins = lag.n_bins();
    let sum = |d: std::ops::Range<usize>, l: std::ops::Range<usize>| -> u64 {
        d.flat_map(|i| l.clone().map(move |j| (i, j)))
            .map(|(i, j)| hist[i * lag_bins + j])
            .sum()
    };
    let all_d = 0..dist.n_bins();
    let total_g = sum(all_d.clone(), 0..lag_bins);

    let na = distance_bands.len();
    let nb = time_lag_bands.len();
    let mut cells = vec![vec![TauValue::Undefined(UndefinedReason::EmptyBand); nb]; na];
    let mut related = vec![vec![0; nb]; na];
    let mut unrelated = vec![vec![0; nb]; na];
    let mut low_support = vec![vec![true; nb]; na];
    for (b, lb) in time_lag_bands.bands().iter().enumerate() {
        let lr = lag.band_bins(lb);
        let rel_g = sum(all_d.clone(), lr.clone());
        let unrel_g = total_g - rel_g;
        for (a, db) in distance_bands.bands().iter().enumerate() {
            let dr = dist.band_bins(db);
            let rel = sum(dr.clone(), lr.clone());
            let unrel = sum(dr, 0..lag_bins) - rel;
            related[a][b] = rel;
            unrelated[a][b] = unrel;
            low_support[a][b] = rel < min_pairs;
            cells[a][b] = if rel == rel_g && unrel == unrel_g && rel > 0 {
                // band reproduces the global counts
                TauValue::Defined(1.0)
            } else if rel_g == 0 || unrel_g == 0 {
                TauValue::Undefined(UndefinedReason::GlobalUndefined)
            } else if unrel == 0 {
                TauValue::Undefined(if rel == 0 {
                    UndefinedReason::EmptyBand
                } else {
                    UndefinedReason::ZeroUnrelatedInBand
                })
            } else {
                TauValue::Defined(ratio_of_ratios(
                    rel as f64,
                    unrel as f64,
                    rel_g as f64,
                    unrel_g as f64,
                ))
            };
        }
    }
    Ok(TauMap {
        distance_bands: distance_bands.clone(),
        time_lag_bands: time_lag_bands.clone(),
        cells,
        related,
        unrelated,
        low_support,
        min_pairs,
    })
}

/// Cuzick-Edwards `T_k`: over every case, the number of cases among its `k`
/// nearest neighbours (all individuals, self excluded). Equidistant
/// neighbours are ordered by id.
pub fn cuzick_edwards_tk(dataset: &CaseDataset, k: usize) -> Result<u64, EstimatorError> {
    let n = dataset.len();
    if k == 0 || k >= n {
        return Err(EstimatorError::KTooLarge { k, max: n - 1 });
    }
    let inds = dataset.individuals();
    let mut total = 0u64;
    let mut neighbours: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in (0..n).filter(|&i| inds[i].is_case()) {
        neighbours.clear();
        neighbours.extend((0..n).filter(|&j| j != i).map(|j| (dataset.distance(i, j), j)));
        let by_distance_then_id = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0).then_with(|| inds[a.1].id.cmp(&inds[b.1].id))
        };
        neighbours.select_nth_unstable_by(k - 1, by_distance_then_id);
        total += neighbours[..k].iter().filter(|(_, j)| inds[*j].is_case()).count() as u64;
    }
    Ok(total)
}
