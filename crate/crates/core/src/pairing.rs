//! Pair enumeration: relatedness, band binning and pair person-time-at-risk.
//!
//! Every band boundary is merged into one sorted edge list, which splits the
//! axis into elementary bins. Each pair is binned once with a binary search
//! and a band's tally is the sum over the elementary bins it covers, so
//! overlapping band sets cost no more than annuli.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::bands::{Band, BandSet};
use crate::interval::IntervalSet;
use crate::model::{is_flagged, CaseDataset, Coord, EpisodePanel, Individual, RelatednessRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relatedness {
    Related,
    Unrelated,
    /// A field the rule needs is absent.
    Inapplicable,
}

impl Relatedness {
    const fn slot(self) -> usize {
        match self {
            Self::Related => 0,
            Self::Unrelated => 1,
            Self::Inapplicable => 2,
        }
    }

    fn and(self, other: Self) -> Self {
        match (self, other) {
            (Self::Unrelated, _) | (_, Self::Unrelated) => Self::Unrelated,
            (Self::Inapplicable, _) | (_, Self::Inapplicable) => Self::Inapplicable,
            _ => Self::Related,
        }
    }
}

/// Which individuals take part in pair enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Cases only; noncases are ignored entirely.
    #[default]
    CasesOnly,
    /// Cases and noncases; any pair involving a noncase is unrelated.
    AllIndividuals,
}

/// Symmetric relatedness of an unordered pair.
pub fn evaluate_relatedness(rule: &RelatednessRule, i: &Individual, j: &Individual) -> Relatedness {
    relate(rule, i, j, i.onset, j.onset)
}

/// Like [`evaluate_relatedness`] with substituted onset times.
pub(crate) fn relate(
    rule: &RelatednessRule,
    i: &Individual,
    j: &Individual,
    ti: Option<f64>,
    tj: Option<f64>,
) -> Relatedness {
    match rule {
        RelatednessRule::TemporalInterval { min_days, max_days } => match (ti, tj) {
            (Some(a), Some(b)) => {
                let lag = (b - a).abs();
                if *min_days <= lag && lag <= *max_days {
                    Relatedness::Related
                } else {
                    Relatedness::Unrelated
                }
            }
            _ => Relatedness::Inapplicable,
        },
        RelatednessRule::MarkEquality { mark } => match (i.marks.get(mark), j.marks.get(mark)) {
            (Some(a), Some(b)) if a == b => Relatedness::Related,
            (Some(_), Some(_)) => Relatedness::Unrelated,
            _ => Relatedness::Inapplicable,
        },
        RelatednessRule::PrevalentIncident { mark } => match (i.marks.get(mark), j.marks.get(mark)) {
            (Some(a), Some(b)) if is_flagged(a) != is_flagged(b) => Relatedness::Related,
            (Some(_), Some(_)) => Relatedness::Unrelated,
            _ => Relatedness::Inapplicable,
        },
        RelatednessRule::Conjunction(parts) => parts
            .iter()
            .fold(Relatedness::Related, |acc, p| acc.and(relate(p, i, j, ti, tj))),
    }
}

/// Directed relatedness of an episode pair `l -> m`: temporal intervals
/// apply to the signed lag `t_m - t_l`. Episodes carry no marks, so mark
/// rules are inapplicable.
pub(crate) fn relate_directed(rule: &RelatednessRule, from_onset: f64, to_onset: f64) -> Relatedness {
    match rule {
        RelatednessRule::TemporalInterval { min_days, max_days } => {
            let lag = to_onset - from_onset;
            if *min_days <= lag && lag <= *max_days {
                Relatedness::Related
            } else {
                Relatedness::Unrelated
            }
        }
        RelatednessRule::MarkEquality { .. } | RelatednessRule::PrevalentIncident { .. } => {
            Relatedness::Inapplicable
        }
        RelatednessRule::Conjunction(parts) => parts.iter().fold(Relatedness::Related, |acc, p| {
            acc.and(relate_directed(p, from_onset, to_onset))
        }),
    }
}

/// Elementary bins induced by the finite edges of a band set.
#[derive(Debug, Clone)]
pub(crate) struct BinEdges {
    edges: Vec<f64>,
}

impl BinEdges {
    pub(crate) fn new(bands: &BandSet) -> Self {
        let mut edges: Vec<f64> = bands
            .bands()
            .iter()
            .flat_map(|b| [b.lo, b.hi])
            .filter(|v| v.is_finite())
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        Self { edges }
    }

    /// Bin `k` covers `[edges[k-1], edges[k])`.
    #[inline]
    pub(crate) fn bin(&self, v: f64) -> usize {
        self.edges.partition_point(|&e| e <= v)
    }

    pub(crate) fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub(crate) fn band_bins(&self, band: &Band) -> Range<usize> {
        let end = if band.hi.is_finite() {
            self.bin(band.hi)
        } else {
            self.n_bins()
        };
        self.bin(band.lo)..end
    }
}

/// Unordered-pair counts within one band.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PairCounts {
    pub related: u64,
    pub unrelated: u64,
    pub inapplicable: u64,
    pub total: u64,
}

impl PairCounts {
    fn add(&mut self, cell: &[u64; 3]) {
        self.related += cell[0];
        self.unrelated += cell[1];
        self.inapplicable += cell[2];
        self.total += cell[0] + cell[1] + cell[2];
    }
}

/// Sufficient statistics for the odds and prevalence estimators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTally {
    pub bands: BandSet,
    pub mode: PairMode,
    pub per_band: Vec<PairCounts>,
    /// Tallies over every pair (distance `[0, inf)`).
    pub global: PairCounts,
}

/// Per-elementary-bin counts of related / unrelated / inapplicable pairs.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PairHistogram {
    cells: Vec<[u64; 3]>,
}

impl PairHistogram {
    pub(crate) fn new(n_bins: usize) -> Self {
        Self {
            cells: vec![[0; 3]; n_bins],
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, bin: usize, rel: Relatedness, weight: u64) {
        self.cells[bin][rel.slot()] += weight;
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
        self
    }

    pub(crate) fn to_tally(&self, edges: &BinEdges, bands: &BandSet, mode: PairMode) -> PairTally {
        let per_band = bands
            .bands()
            .iter()
            .map(|b| {
                let mut c = PairCounts::default();
                for cell in &self.cells[edges.band_bins(b)] {
                    c.add(cell);
                }
                c
            })
            .collect();
        let mut global = PairCounts::default();
        for cell in &self.cells {
            global.add(cell);
        }
        PairTally {
            bands: bands.clone(),
            mode,
            per_band,
            global,
        }
    }
}

/// Dataset indices taking part under `mode`.
pub(crate) fn participants(dataset: &CaseDataset, mode: PairMode) -> Vec<usize> {
    dataset
        .individuals()
        .iter()
        .enumerate()
        .filter(|(_, i)| mode == PairMode::AllIndividuals || i.is_case())
        .map(|(k, _)| k)
        .collect()
}

/// Distances of every unordered participating pair.
pub fn pair_distances(dataset: &CaseDataset, mode: PairMode) -> Vec<f64> {
    let members = participants(dataset, mode);
    let mut out = Vec::with_capacity(members.len() * members.len().saturating_sub(1) / 2);
    for (p, &a) in members.iter().enumerate() {
        for &b in &members[p + 1..] {
            out.push(dataset.distance(a, b));
        }
    }
    out
}

/// What a pair is binned on and how it is judged related.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Geometry<'r> {
    /// Bin on distance, relate by rule.
    Distance(&'r RelatednessRule),
    /// Bin on `|dt|`, related iff closer than the window.
    TimeLag { window: f64 },
}

/// Row-wise pair evaluation shared by streaming tallies and pair tables.
pub(crate) struct PairContext<'a> {
    pub(crate) dataset: &'a CaseDataset,
    pub(crate) members: Vec<usize>,
    pub(crate) geometry: Geometry<'a>,
    pub(crate) edges: BinEdges,
}

impl<'a> PairContext<'a> {
    pub(crate) fn new(
        dataset: &'a CaseDataset,
        bands: &BandSet,
        geometry: Geometry<'a>,
        mode: PairMode,
    ) -> Self {
        Self {
            dataset,
            members: participants(dataset, mode),
            geometry,
            edges: BinEdges::new(bands),
        }
    }

    /// Bin and relatedness of members `p < q`; `None` when the pair cannot be
    /// placed on the axis.
    #[inline]
    pub(crate) fn evaluate(&self, p: usize, q: usize, onsets: Option<&[Option<f64>]>) -> Option<(usize, Relatedness)> {
        let (a, b) = (self.members[p], self.members[q]);
        let inds = self.dataset.individuals();
        let (ia, ib) = (&inds[a], &inds[b]);
        let (ta, tb) = match onsets {
            Some(t) => (t[p], t[q]),
            None => (ia.onset, ib.onset),
        };
        match self.geometry {
            Geometry::Distance(rule) => {
                let d = self.dataset.distance(a, b);
                let rel = if ia.is_case() && ib.is_case() {
                    relate(rule, ia, ib, ta, tb)
                } else {
                    Relatedness::Unrelated
                };
                Some((self.edges.bin(d), rel))
            }
            Geometry::TimeLag { window } => {
                let lag = (tb? - ta?).abs();
                let rel = if self.dataset.distance(a, b) < window {
                    Relatedness::Related
                } else {
                    Relatedness::Unrelated
                };
                Some((self.edges.bin(lag), rel))
            }
        }
    }

    pub(crate) fn histogram(&self) -> PairHistogram {
        let n = self.members.len();
        let bins = self.edges.n_bins();
        (0..n)
            .into_par_iter()
            .fold(
                || PairHistogram::new(bins),
                |mut h, p| {
                    for q in p + 1..n {
                        if let Some((bin, rel)) = self.evaluate(p, q, None) {
                            h.add(bin, rel, 1);
                        }
                    }
                    h
                },
            )
            .reduce(|| PairHistogram::new(bins), PairHistogram::merge)
    }
}

/// Counts unordered pairs per band by relatedness. Self-pairs never count.
pub fn tally_pairs(
    dataset: &CaseDataset,
    bands: &BandSet,
    rule: &RelatednessRule,
    mode: PairMode,
) -> PairTally {
    let ctx = PairContext::new(dataset, bands, Geometry::Distance(rule), mode);
    ctx.histogram().to_tally(&ctx.edges, bands, mode)
}

/// Like [`tally_pairs`] but binned on `|dt|` with relatedness `d < window`
/// (cases only; pairs lacking an onset are skipped).
pub(crate) fn tally_time_lags(dataset: &CaseDataset, bands: &BandSet, window: f64) -> PairTally {
    let ctx = PairContext::new(dataset, bands, Geometry::TimeLag { window }, PairMode::CasesOnly);
    ctx.histogram().to_tally(&ctx.edges, bands, PairMode::CasesOnly)
}

/// Joint distance x time-lag pair counts among cases with onsets;
/// index `dist_bin * lag_bins + lag_bin`.
pub(crate) fn joint_histogram(dataset: &CaseDataset, dist: &BinEdges, lag: &BinEdges) -> Vec<u64> {
    let members: Vec<usize> = participants(dataset, PairMode::CasesOnly)
        .into_iter()
        .filter(|&k| dataset.individuals()[k].onset.is_some())
        .collect();
    let n = members.len();
    let lag_bins = lag.n_bins();
    let size = dist.n_bins() * lag_bins;
    let inds = dataset.individuals();
    (0..n)
        .into_par_iter()
        .fold(
            || vec![0u64; size],
            |mut h, p| {
                let a = members[p];
                let ta = inds[a].onset.expect("filtered");
                for &b in &members[p + 1..] {
                    let d = dataset.distance(a, b);
                    let l = (inds[b].onset.expect("filtered") - ta).abs();
                    h[dist.bin(d) * lag_bins + lag.bin(l)] += 1;
                }
                h
            },
        )
        .reduce(
            || vec![0u64; size],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Precomputed upper-triangle pair codes (`bin << 2 | relatedness`) for
/// repeated weighted tallies.
pub(crate) struct PairTable<'a> {
    pub(crate) ctx: PairContext<'a>,
    codes: Vec<u32>,
}

const SKIP: u32 = u32::MAX;

impl<'a> PairTable<'a> {
    pub(crate) fn build(ctx: PairContext<'a>) -> Self {
        let n = ctx.members.len();
        let rows: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|p| {
                (p + 1..n)
                    .map(|q| match ctx.evaluate(p, q, None) {
                        Some((bin, rel)) => ((bin as u32) << 2) | rel.slot() as u32,
                        None => SKIP,
                    })
                    .collect()
            })
            .collect();
        Self {
            ctx,
            codes: rows.concat(),
        }
    }

    pub(crate) fn n_members(&self) -> usize {
        self.ctx.members.len()
    }

    /// Histogram where pair `(p, q)` counts `weights[p] * weights[q]` times.
    pub(crate) fn weighted_histogram(&self, weights: &[u64]) -> PairHistogram {
        let n = self.n_members();
        let mut h = PairHistogram::new(self.ctx.edges.n_bins());
        let mut offset = 0;
        for p in 0..n {
            let row = &self.codes[offset..offset + (n - p - 1)];
            offset += n - p - 1;
            let wp = weights[p];
            if wp == 0 {
                continue;
            }
            for (code, &wq) in row.iter().zip(&weights[p + 1..]) {
                if wq != 0 && *code != SKIP {
                    h.cells[(*code >> 2) as usize][(*code & 3) as usize] += wp * wq;
                }
            }
        }
        h
    }

    /// Histogram with relatedness re-evaluated under substituted onsets
    /// (indexed by member position). Bins are reused.
    pub(crate) fn relabelled_histogram(&self, onsets: &[Option<f64>]) -> PairHistogram {
        let n = self.n_members();
        let mut h = PairHistogram::new(self.ctx.edges.n_bins());
        let Geometry::Distance(rule) = self.ctx.geometry else {
            unreachable!("relabelling only applies to distance geometry")
        };
        let inds = self.ctx.dataset.individuals();
        let mut offset = 0;
        for p in 0..n {
            let row = &self.codes[offset..offset + (n - p - 1)];
            offset += n - p - 1;
            let ia = &inds[self.ctx.members[p]];
            for (k, code) in row.iter().enumerate() {
                if *code == SKIP {
                    continue;
                }
                let q = p + 1 + k;
                let ib = &inds[self.ctx.members[q]];
                let rel = if ia.is_case() && ib.is_case() {
                    relate(rule, ia, ib, onsets[p], onsets[q])
                } else {
                    Relatedness::Unrelated
                };
                h.add((*code >> 2) as usize, rel, 1);
            }
        }
        h
    }
}

// ---------------------------------------------------------------------------
// Rate estimator: directed episode pairs and pair person-time-at-risk.

/// Numerator and denominator of the rate estimator within one band.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RateCounts {
    /// Directed episode pairs `l -> m` (different persons) related under the rule.
    pub related_pairs: u64,
    /// Summed directed pair person-time-at-risk.
    pub pair_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTally {
    pub bands: BandSet,
    pub per_band: Vec<RateCounts>,
    pub global: RateCounts,
    pub warnings: Vec<String>,
}

/// Infectious and susceptible time sets per person.
pub(crate) struct RiskSets {
    infectious: Vec<IntervalSet>,
    susceptible: Vec<IntervalSet>,
}

impl RiskSets {
    pub(crate) fn new(panel: &EpisodePanel) -> Self {
        let opts = panel.options();
        let n = panel.persons_at_risk();
        let mut infectious = Vec::with_capacity(n);
        let mut susceptible = Vec::with_capacity(n);
        for (p, person) in panel.persons().iter().enumerate() {
            let enrolled = IntervalSet::single(person.entry, person.exit);
            let eps = panel.episodes_of(p);
            let inf = IntervalSet::from_intervals(eps.iter().map(|e| (e.onset, panel.infectious_end(e))));
            infectious.push(inf.intersect(&enrolled));
            let blocked = if opts.immunizing {
                IntervalSet::from_intervals(eps.first().map(|e| (e.onset, f64::INFINITY)))
            } else {
                IntervalSet::from_intervals(
                    eps.iter()
                        .map(|e| (e.onset, e.recovery + opts.susceptibility_delay)),
                )
            };
            susceptible.push(enrolled.subtract(&blocked));
        }
        Self {
            infectious,
            susceptible,
        }
    }

    /// Calls `f(distance, duration)` for each stretch of time during which `i`
    /// is infectious, `j` is susceptible and neither moves.
    pub(crate) fn for_each_exposure(
        &self,
        panel: &EpisodePanel,
        i: usize,
        j: usize,
        mut f: impl FnMut(f64, f64),
    ) {
        let window = self.infectious[i].intersect(&self.susceptible[j]);
        let (pi, pj) = (&panel.persons()[i], &panel.persons()[j]);
        let crs = panel.crs();
        let mut cuts = Vec::new();
        for &(lo, hi) in window.intervals() {
            cuts.clear();
            cuts.push(lo);
            cuts.extend(pi.moves_within(lo, hi));
            cuts.extend(pj.moves_within(lo, hi));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            cuts.push(hi);
            for w in cuts.windows(2) {
                let d = crs.distance(pi.location_at(w[0]), pj.location_at(w[0]));
                f(d, w[1] - w[0]);
            }
        }
    }
}

/// Time during which `i` is infectious, `j` is susceptible and their
/// separation lies in `band`. Directed: `(i, j)` and `(j, i)` differ in general.
pub fn pair_time_at_risk(panel: &EpisodePanel, i: usize, j: usize, band: &Band) -> f64 {
    if i == j {
        return 0.0;
    }
    let sets = RiskSets::new(panel);
    let mut total = 0.0;
    sets.for_each_exposure(panel, i, j, |d, dt| {
        if band.contains(d) {
            total += dt;
        }
    });
    total
}

/// Precomputed contributions of every ordered person pair, for weighted
/// (bootstrap) recombination.
pub(crate) struct RateTable {
    edges: BinEdges,
    /// `(from person, to person, bin)` per related directed episode pair.
    events: Vec<(u32, u32, u32)>,
    /// `(i, j, bin, time)` per exposure stretch.
    exposure: Vec<(u32, u32, u32, f64)>,
}

impl RateTable {
    pub(crate) fn build(panel: &EpisodePanel, bands: &BandSet, rule: &RelatednessRule) -> Self {
        let edges = BinEdges::new(bands);
        let eps = panel.episodes();
        let crs = panel.crs();
        let locs: Vec<Coord> = eps.iter().map(|e| panel.episode_location(e)).collect();
        let events: Vec<(u32, u32, u32)> = (0..eps.len())
            .into_par_iter()
            .map(|l| {
                let mut row = Vec::new();
                for (m, em) in eps.iter().enumerate() {
                    let el = &eps[l];
                    if el.person == em.person {
                        continue;
                    }
                    if relate_directed(rule, el.onset, em.onset) == Relatedness::Related {
                        let bin = edges.bin(crs.distance(locs[l], locs[m]));
                        row.push((el.person as u32, em.person as u32, bin as u32));
                    }
                }
                row
            })
            .collect::<Vec<_>>()
            .concat();

        let sets = RiskSets::new(panel);
        let n = panel.persons_at_risk();
        let exposure = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = Vec::new();
                for j in (0..n).filter(|&j| j != i) {
                    sets.for_each_exposure(panel, i, j, |d, dt| {
                        row.push((i as u32, j as u32, edges.bin(d) as u32, dt));
                    });
                }
                row
            })
            .collect::<Vec<_>>()
            .concat();
        Self {
            edges,
            events,
            exposure,
        }
    }

    /// Tally with person `p` replicated `weights[p]` times; pairs between
    /// copies of one person never count. Sums run in a fixed order.
    pub(crate) fn tally(&self, bands: &BandSet, weights: Option<&[u64]>) -> RateTally {
        let w = |p: u32| weights.map_or(1, |w| w[p as usize]);
        let bins = self.edges.n_bins();
        let mut events = vec![0u64; bins];
        let mut time = vec![0.0f64; bins];
        for &(a, b, bin) in &self.events {
            events[bin as usize] += w(a) * w(b);
        }
        for &(a, b, bin, dt) in &self.exposure {
            let k = w(a) * w(b);
            if k != 0 {
                time[bin as usize] += k as f64 * dt;
            }
        }
        let mut warnings = Vec::new();
        let per_band: Vec<RateCounts> = bands
            .bands()
            .iter()
            .map(|b| {
                let r = self.edges.band_bins(b);
                let c = RateCounts {
                    related_pairs: events[r.clone()].iter().sum(),
                    pair_time: time[r].iter().sum(),
                };
                if c.related_pairs > 0 && c.pair_time == 0.0 {
                    warnings.push(format!(
                        "band {b}: {} related episode pair(s) but zero pair-time",
                        c.related_pairs
                    ));
                }
                c
            })
            .collect();
        let global = RateCounts {
            related_pairs: events.iter().sum(),
            pair_time: time.iter().sum(),
        };
        RateTally {
            bands: bands.clone(),
            per_band,
            global,
            warnings,
        }
    }
}

/// Directed episode-pair counts and pair person-time-at-risk per band.
///
/// Episode-pair distance uses each person's location at their own episode
/// onset. Related pairs in a band with zero pair-time are counted and
/// reported in `warnings`.
pub fn tally_rate(panel: &EpisodePanel, bands: &BandSet, rule: &RelatednessRule) -> RateTally {
    let tally = RateTable::build(panel, bands, rule).tally(bands, None);
    for w in &tally.warnings {
        log::warn!("{w}");
    }
    tally
}
