//! Half-open distance and time-lag bands.
//!
//! Every band is `[lo, hi)`: a value equal to `lo` is inside, a value equal to
//! `hi` is not. `hi` may be `+inf`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::CaseDataset;
use crate::pairing::PairMode;

#[derive(Debug, Error, PartialEq)]
pub enum BandError {
    #[error("band arguments must be positive and finite")]
    NonPositiveArguments,
    #[error("cutpoints must be positive and strictly increasing")]
    NonIncreasingCutpoints,
    #[error("need at least {needed} distinct pair values, found {found}")]
    TooFewPairs { needed: usize, found: usize },
    #[error("invalid band [{lo}, {hi})")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("cannot parse band spec `{0}`")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    #[default]
    Distance,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub axis: Axis,
}

impl Band {
    pub fn new(lo: f64, hi: f64, axis: Axis) -> Result<Self, BandError> {
        if !(lo.is_finite() && lo >= 0.0 && hi > lo) || hi.is_nan() {
            return Err(BandError::InvalidBand { lo, hi });
        }
        Ok(Self { lo, hi, axis })
    }

    /// `[0, inf)`: every pair.
    pub fn everything(axis: Axis) -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
            axis,
        }
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v < self.hi
    }

    pub fn is_unbounded(&self) -> bool {
        self.hi == f64::INFINITY
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandStyle {
    Annuli,
    Discs,
    Overlapping,
    EqualCount,
    Custom,
}

/// Ordered set of bands on one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    bands: Vec<Band>,
    style: BandStyle,
    axis: Axis,
}

impl BandSet {
    /// Sorts by `(lo, hi)` and checks every band.
    pub fn new(mut bands: Vec<Band>, style: BandStyle, axis: Axis) -> Result<Self, BandError> {
        for b in &mut bands {
            *b = Band::new(b.lo, b.hi, axis)?;
        }
        bands.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
        Ok(Self { bands, style, axis })
    }

    /// The single band `[0, inf)`.
    pub fn global(axis: Axis) -> Self {
        Self {
            bands: vec![Band::everything(axis)],
            style: BandStyle::Custom,
            axis,
        }
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn style(&self) -> BandStyle {
        self.style
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    /// Same bands on another axis.
    pub fn on_axis(mut self, axis: Axis) -> Self {
        self.axis = axis;
        for b in &mut self.bands {
            b.axis = axis;
        }
        self
    }

    /// Every boundary multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self, BandError> {
        let bands = self
            .bands
            .iter()
            .map(|b| Band::new(b.lo * s, b.hi * s, b.axis))
            .collect::<Result<_, _>>()?;
        Self::new(bands, self.style, self.axis)
    }

    /// True when no two bands overlap.
    pub fn is_disjoint(&self) -> bool {
        self.bands.windows(2).all(|w| w[0].hi <= w[1].lo)
    }

    /// Largest finite boundary, used to censor range estimates.
    pub fn max_finite_edge(&self) -> f64 {
        self.bands
            .iter()
            .flat_map(|b| [b.lo, b.hi])
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
    }
}

/// `k` contiguous annuli of equal width covering `[0, d_max)`.
pub fn equal_width_bands(d_max: f64, k: usize) -> Result<BandSet, BandError> {
    if !(d_max.is_finite() && d_max > 0.0) || k == 0 {
        return Err(BandError::NonPositiveArguments);
    }
    let width = d_max / k as f64;
    let bands = (0..k)
        .map(|i| Band {
            lo: i as f64 * width,
            hi: if i + 1 == k { d_max } else { (i + 1) as f64 * width },
            axis: Axis::Distance,
        })
        .collect();
    Ok(BandSet {
        bands,
        style: BandStyle::Annuli,
        axis: Axis::Distance,
    })
}

/// Discs `[0, c1), [0, c2), ...`.
pub fn expanding_discs(cutpoints: &[f64]) -> Result<BandSet, BandError> {
    if cutpoints.is_empty() {
        return Err(BandError::NonPositiveArguments);
    }
    let increasing = cutpoints.windows(2).all(|w| w[0] < w[1]);
    let positive = cutpoints.iter().all(|c| *c > 0.0 && !c.is_nan());
    if !(increasing && positive) {
        return Err(BandError::NonIncreasingCutpoints);
    }
    let bands = cutpoints
        .iter()
        .map(|&c| Band {
            lo: 0.0,
            hi: c,
            axis: Axis::Distance,
        })
        .collect();
    Ok(BandSet {
        bands,
        style: BandStyle::Discs,
        axis: Axis::Distance,
    })
}

/// Bands `[max(0, c - h), c + h)` around each center.
pub fn overlapping_bands(centers: &[f64], half_width: f64) -> Result<BandSet, BandError> {
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(BandError::NonPositiveArguments);
    }
    let bands = centers
        .iter()
        .map(|&c| Band::new((c - half_width).max(0.0), c + half_width, Axis::Distance))
        .collect::<Result<Vec<_>, _>>()?;
    BandSet::new(bands, BandStyle::Overlapping, Axis::Distance)
}

/// `k` annuli holding (as nearly as possible) equal numbers of unordered
/// pairs. Boundaries sit at midpoints between adjacent distinct order
/// statistics, so no observed distance lies on a boundary.
pub fn equal_count_bands(dataset: &CaseDataset, k: usize, mode: PairMode) -> Result<BandSet, BandError> {
    let mut distances = crate::pairing::pair_distances(dataset, mode);
    distances.sort_by(f64::total_cmp);
    equal_count_from_sorted(&distances, k)
}

pub(crate) fn equal_count_from_sorted(sorted: &[f64], k: usize) -> Result<BandSet, BandError> {
    if k == 0 {
        return Err(BandError::NonPositiveArguments);
    }
    let m = sorted.len();
    // positions g with sorted[g-1] < sorted[g]: a cut there leaves g pairs below
    let gaps: Vec<usize> = (1..m).filter(|&g| sorted[g - 1] < sorted[g]).collect();
    let distinct = if m == 0 { 0 } else { gaps.len() + 1 };
    if distinct < k {
        return Err(BandError::TooFewPairs {
            needed: k,
            found: distinct,
        });
    }
    let mut cuts = Vec::with_capacity(k - 1);
    let mut from = 0;
    for q in 1..k {
        let target = (q * m) as f64 / k as f64;
        let last_allowed = gaps.len() - (k - 1 - q);
        let best = (from..last_allowed)
            .min_by(|&a, &b| {
                (gaps[a] as f64 - target)
                    .abs()
                    .total_cmp(&(gaps[b] as f64 - target).abs())
            })
            .expect("enough gaps remain");
        cuts.push(gaps[best]);
        from = best + 1;
    }
    let mut edges = vec![0.0];
    edges.extend(cuts.iter().map(|&g| 0.5 * (sorted[g - 1] + sorted[g])));
    edges.push(sorted[m - 1].next_up());
    let bands = edges
        .windows(2)
        .map(|w| Band {
            lo: w[0],
            hi: w[1],
            axis: Axis::Distance,
        })
        .collect();
    Ok(BandSet {
        bands,
        style: BandStyle::EqualCount,
        axis: Axis::Distance,
    })
}

/// Half the largest pairwise distance among the participating individuals.
pub fn default_max_distance(dataset: &CaseDataset, mode: PairMode) -> f64 {
    0.5 * crate::pairing::pair_distances(dataset, mode)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Command-line band grammar:
/// `width:<d_max>:<k>` (or `width:<k>` for the default `d_max`),
/// `discs:<c1>,<c2>,...`, `eqcount:<k>`, `overlap:<c1>,<c2>,...:<half_width>`,
/// `global`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSpec {
    Width { d_max: Option<f64>, k: usize },
    Discs(Vec<f64>),
    EqualCount(usize),
    Overlap { centers: Vec<f64>, half_width: f64 },
    Global,
}

impl FromStr for BandSpec {
    type Err = BandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BandError::InvalidSpec(s.to_owned());
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let count = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let list = |t: &str| t.split(',').map(num).collect::<Result<Vec<_>, _>>();
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["width", k] => Ok(Self::Width {
                d_max: None,
                k: count(k)?,
            }),
            ["width", d, k] => Ok(Self::Width {
                d_max: Some(num(d)?),
                k: count(k)?,
            }),
            ["discs", cs] => Ok(Self::Discs(list(cs)?)),
            ["eqcount", k] => Ok(Self::EqualCount(count(k)?)),
            ["overlap", cs, h] => Ok(Self::Overlap {
                centers: list(cs)?,
                half_width: num(h)?,
            }),
            ["global"] => Ok(Self::Global),
            _ => Err(bad()),
        }
    }
}

impl BandSpec {
    /// Builds distance bands, looking at the data only where the spec needs it.
    pub fn resolve(&self, dataset: &CaseDataset, mode: PairMode) -> Result<BandSet, BandError> {
        match self {
            Self::Width { d_max: Some(d), k } => equal_width_bands(*d, *k),
            Self::Width { d_max: None, k } => {
                equal_width_bands(default_max_distance(dataset, mode), *k)
            }
            Self::Discs(cs) => expanding_discs(cs),
            Self::EqualCount(k) => equal_count_bands(dataset, *k, mode),
            Self::Overlap {
                centers,
                half_width,
            } => overlapping_bands(centers, *half_width),
            Self::Global => Ok(BandSet::global(Axis::Distance)),
        }
    }

    /// Builds bands without data; fails for data-driven specs.
    pub fn resolve_fixed(&self) -> Result<BandSet, BandError> {
        match self {
            Self::Width { d_max: Some(d), k } => equal_width_bands(*d, *k),
            Self::Discs(cs) => expanding_discs(cs),
            Self::Overlap {
                centers,
                half_width,
            } => overlapping_bands(centers, *half_width),
            Self::Global => Ok(BandSet::global(Axis::Distance)),
            _ => Err(BandError::InvalidSpec(format!("{self:?} needs data"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CrsMode, Individual};

    fn edges(set: &BandSet) -> Vec<(f64, f64)> {
        set.bands().iter().map(|b| (b.lo, b.hi)).collect()
    }

    #[test]
    fn equal_width() {
        let set = equal_width_bands(100.0, 4).unwrap();
        assert_eq!(
            edges(&set),
            [(0.0, 25.0), (25.0, 50.0), (50.0, 75.0), (75.0, 100.0)]
        );
        assert_eq!(edges(&equal_width_bands(10.0, 1).unwrap()), [(0.0, 10.0)]);
        assert_eq!(equal_width_bands(0.0, 4), Err(BandError::NonPositiveArguments));
        assert_eq!(equal_width_bands(10.0, 0), Err(BandError::NonPositiveArguments));
        assert!(set.is_disjoint());
    }

    #[test]
    fn discs() {
        assert_eq!(
            edges(&expanding_discs(&[50.0, 100.0]).unwrap()),
            [(0.0, 50.0), (0.0, 100.0)]
        );
        assert_eq!(edges(&expanding_discs(&[25.0]).unwrap()), [(0.0, 25.0)]);
        assert_eq!(
            expanding_discs(&[100.0, 50.0]),
            Err(BandError::NonIncreasingCutpoints)
        );
    }

    #[test]
    fn overlapping() {
        assert_eq!(
            edges(&overlapping_bands(&[50.0, 75.0], 25.0).unwrap()),
            [(25.0, 75.0), (50.0, 100.0)]
        );
        assert_eq!(edges(&overlapping_bands(&[10.0], 25.0).unwrap()), [(0.0, 35.0)]);
        assert!(overlapping_bands(&[], 25.0).unwrap().is_empty());
        assert!(overlapping_bands(&[10.0], 0.0).is_err());
    }

    #[test]
    fn half_closed_membership() {
        let b = Band::new(25.0, 50.0, Axis::Distance).unwrap();
        assert!(b.contains(25.0));
        assert!(!b.contains(50.0));
        assert!(b.contains(49.999_999));
        assert!(!b.contains(24.999_999));
        assert!(Band::everything(Axis::Distance).contains(0.0));
        assert!(Band::new(5.0, 5.0, Axis::Distance).is_err());
    }

    fn line(xs: &[f64]) -> CaseDataset {
        let inds = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| Individual::case(format!("p{i}"), x, 0.0, i as f64))
            .collect();
        CaseDataset::new(inds, CrsMode::Planar).unwrap()
    }

    #[test]
    fn equal_count_on_collinear_points() {
        // pair distances 1,1,2,8,9,10; the cut falls between 2 and 8
        let ds = line(&[0.0, 1.0, 2.0, 10.0]);
        let set = equal_count_bands(&ds, 2, PairMode::CasesOnly).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.bands()[0].lo, 0.0);
        assert_eq!(set.bands()[0].hi, 5.0);
        assert_eq!(set.bands()[1].lo, 5.0);
        assert!(set.bands()[1].hi > 10.0 && set.bands()[1].hi < 10.0 + 1e-9);

        let one = equal_count_bands(&ds, 1, PairMode::CasesOnly).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.bands()[0].contains(10.0));

        let two = line(&[0.0, 1.0]);
        assert!(matches!(
            equal_count_bands(&two, 3, PairMode::CasesOnly),
            Err(BandError::TooFewPairs { .. })
        ));
    }

    #[test]
    fn equal_count_with_ties_keeps_boundaries_off_data() {
        let sorted = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        let set = equal_count_from_sorted(&sorted, 3).unwrap();
        for b in set.bands() {
            for v in sorted {
                assert_ne!(b.lo, v);
                assert_ne!(b.hi, v);
            }
        }
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn spec_grammar() {
        assert_eq!(
            "width:100:4".parse::<BandSpec>().unwrap(),
            BandSpec::Width {
                d_max: Some(100.0),
                k: 4
            }
        );
        assert_eq!(
            "discs:50,100,200".parse::<BandSpec>().unwrap(),
            BandSpec::Discs(vec![50.0, 100.0, 200.0])
        );
        assert_eq!("eqcount:10".parse::<BandSpec>().unwrap(), BandSpec::EqualCount(10));
        assert_eq!(
            "overlap:50,75:25".parse::<BandSpec>().unwrap(),
            BandSpec::Overlap {
                centers: vec![50.0, 75.0],
                half_width: 25.0
            }
        );
        assert!("rings:4".parse::<BandSpec>().is_err());
        assert!("width:a:4".parse::<BandSpec>().is_err());
    }

    #[test]
    fn default_d_max_is_half_the_diameter() {
        let ds = line(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(default_max_distance(&ds, PairMode::CasesOnly), 5.0);
        let set = BandSpec::Width { d_max: None, k: 5 }
            .resolve(&ds, PairMode::CasesOnly)
            .unwrap();
        assert_eq!(set.bands()[4].hi, 5.0);
    }
}
