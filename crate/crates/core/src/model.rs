//! Domain types for case datasets, episode panels and relatedness rules,
//! plus the validation that every downstream computation relies on.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod io;

pub use io::{
    load_case_data, load_episode_panel, read_case_data, read_episode_panel, write_case_data,
    LoadOptions,
};

/// Mean Earth radius in meters used for great-circle distances.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: malformed csv: {message}")]
    Csv { row: usize, message: String },
    #[error("row {row}: missing column `{column}`")]
    MissingColumn { row: usize, column: String },
    #[error("row {row}: coordinate `{column}` is missing, non-finite or out of range")]
    NonFiniteCoordinate { row: usize, column: String },
    #[error("row {row}: invalid value `{value}` in column `{column}`")]
    InvalidValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: case `{id}` has no onset time")]
    MissingOnset { row: usize, id: String },
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("dataset holds {found} case(s) (ending at row {row}); at least 2 are required")]
    FewerThanTwoCases { row: usize, found: usize },
    #[error("row {row}: unknown person id `{id}`")]
    UnknownPersonId { row: usize, id: String },
    #[error("row {row}: episode [{onset}, {recovery}] lies outside the enrollment of `{id}`")]
    EpisodeOutsideEnrollment {
        row: usize,
        id: String,
        onset: f64,
        recovery: f64,
    },
    #[error("row {row}: episode onset {onset} is after recovery {recovery}")]
    InvalidEpisode {
        row: usize,
        onset: f64,
        recovery: f64,
    },
    #[error("row {row}: episodes of `{id}` overlap")]
    OverlappingEpisodes { row: usize, id: String },
    #[error("row {row}: entry {entry} is after exit {exit}")]
    InvalidEnrollment { row: usize, entry: f64, exit: f64 },
    #[error("row {row}: location track of `{id}` must have strictly increasing days starting at or before entry")]
    InvalidTrack { row: usize, id: String },
    #[error("invalid relatedness rule: {0}")]
    InvalidRule(String),
}

/// How coordinates are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrsMode {
    /// Euclidean plane, meters.
    #[default]
    Planar,
    /// `x` = longitude, `y` = latitude, degrees. Distances in meters.
    Geographic,
}

impl CrsMode {
    #[inline]
    pub fn distance(self, a: Coord, b: Coord) -> f64 {
        match self {
            CrsMode::Planar => (a.x - b.x).hypot(a.y - b.y),
            CrsMode::Geographic => haversine(a, b),
        }
    }
}

fn haversine(a: Coord, b: Coord) -> f64 {
    let (lat1, lat2) = (a.y.to_radians(), b.y.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.x - a.x).to_radians();
    let h = (dlat * 0.5).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon * 0.5).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Case,
    Noncase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub location: Coord,
    /// Onset time as a day offset.
    pub onset: Option<f64>,
    pub status: Status,
    pub marks: BTreeMap<String, String>,
}

impl Individual {
    pub fn case(id: impl Into<String>, x: f64, y: f64, onset: f64) -> Self {
        Self {
            id: id.into(),
            location: Coord::new(x, y),
            onset: Some(onset),
            status: Status::Case,
            marks: BTreeMap::new(),
        }
    }

    pub fn noncase(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self {
            id: id.into(),
            location: Coord::new(x, y),
            onset: None,
            status: Status::Noncase,
            marks: BTreeMap::new(),
        }
    }

    pub fn with_mark(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.marks.insert(name.into(), value.into());
        self
    }

    pub fn is_case(&self) -> bool {
        self.status == Status::Case
    }
}

/// Dataset-level switches that relax individual validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetFlags {
    /// Cases may lack onset times because relatedness is implied by marks
    /// (e.g. prevalent/incident status).
    pub implicit_relatedness: bool,
}

/// Immutable, validated collection of individuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseDataset {
    individuals: Vec<Individual>,
    crs: CrsMode,
    time_unit: String,
    flags: DatasetFlags,
}

impl CaseDataset {
    /// Validates `individuals`; errors carry the 1-based record number.
    pub fn new(individuals: Vec<Individual>, crs: CrsMode) -> Result<Self, DataError> {
        Self::with_options(individuals, crs, "days", DatasetFlags::default())
    }

    pub fn with_options(
        individuals: Vec<Individual>,
        crs: CrsMode,
        time_unit: impl Into<String>,
        flags: DatasetFlags,
    ) -> Result<Self, DataError> {
        Self::validated(individuals, crs, time_unit.into(), flags, |i| i + 1)
    }

    pub(crate) fn validated(
        individuals: Vec<Individual>,
        crs: CrsMode,
        time_unit: String,
        flags: DatasetFlags,
        row_of: impl Fn(usize) -> usize,
    ) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(individuals.len());
        for (idx, ind) in individuals.iter().enumerate() {
            let row = row_of(idx);
            check_coord(ind.location, crs, row)?;
            if let Some(t) = ind.onset {
                if !t.is_finite() {
                    return Err(DataError::InvalidValue {
                        row,
                        column: "t".into(),
                        value: t.to_string(),
                    });
                }
            } else if ind.is_case() && !flags.implicit_relatedness {
                return Err(DataError::MissingOnset {
                    row,
                    id: ind.id.clone(),
                });
            }
            if !seen.insert(ind.id.as_str()) {
                return Err(DataError::DuplicateId {
                    row,
                    id: ind.id.clone(),
                });
            }
        }
        let cases = individuals.iter().filter(|i| i.is_case()).count();
        if cases < 2 {
            return Err(DataError::FewerThanTwoCases {
                row: row_of(individuals.len()).saturating_sub(1),
                found: cases,
            });
        }
        Ok(Self {
            individuals,
            crs,
            time_unit,
            flags,
        })
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn crs(&self) -> CrsMode {
        self.crs
    }

    pub fn time_unit(&self) -> &str {
        &self.time_unit
    }

    pub fn flags(&self) -> DatasetFlags {
        self.flags
    }

    pub fn case_count(&self) -> usize {
        self.individuals.iter().filter(|i| i.is_case()).count()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.crs
            .distance(self.individuals[a].location, self.individuals[b].location)
    }

    /// A new dataset holding the individuals selected by `keep`, in order.
    pub fn filtered(&self, mut keep: impl FnMut(&Individual) -> bool) -> Result<Self, DataError> {
        let kept = self.individuals.iter().filter(|i| keep(i)).cloned().collect();
        Self::with_options(kept, self.crs, self.time_unit.clone(), self.flags)
    }

    /// Same individuals with every coordinate passed through `f`.
    pub fn map_locations(&self, f: impl Fn(Coord) -> Coord) -> Result<Self, DataError> {
        let moved = self
            .individuals
            .iter()
            .map(|i| Individual {
                location: f(i.location),
                ..i.clone()
            })
            .collect();
        Self::with_options(moved, self.crs, self.time_unit.clone(), self.flags)
    }
}

fn check_coord(c: Coord, crs: CrsMode, row: usize) -> Result<(), DataError> {
    let bad = |column: &str| DataError::NonFiniteCoordinate {
        row,
        column: column.into(),
    };
    if !c.x.is_finite() {
        return Err(bad("x"));
    }
    if !c.y.is_finite() {
        return Err(bad("y"));
    }
    if crs == CrsMode::Geographic {
        if !(-180.0..=180.0).contains(&c.x) {
            return Err(bad("x"));
        }
        if !(-90.0..=90.0).contains(&c.y) {
            return Err(bad("y"));
        }
    }
    Ok(())
}

/// A residence record: the person is at `location` from day `from` until the
/// next record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub from: f64,
    pub location: Coord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub id: String,
    pub entry: f64,
    pub exit: f64,
    /// Piecewise-constant location track; a single record is a static residence.
    pub track: Vec<TrackPoint>,
}

impl Person {
    pub fn resident(id: impl Into<String>, entry: f64, exit: f64, at: Coord) -> Self {
        Self {
            id: id.into(),
            entry,
            exit,
            track: vec![TrackPoint {
                from: entry,
                location: at,
            }],
        }
    }

    /// Location at day `t`. Days before the first record map to the first
    /// location.
    pub fn location_at(&self, t: f64) -> Coord {
        let idx = self.track.partition_point(|p| p.from <= t);
        self.track[idx.saturating_sub(1)].location
    }

    /// Days at which the location changes, strictly inside `(lo, hi)`.
    pub(crate) fn moves_within(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.track
            .iter()
            .map(|p| p.from)
            .filter(move |&d| d > lo && d < hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    /// Index into [`EpisodePanel::persons`].
    pub person: usize,
    pub onset: f64,
    pub recovery: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfectiousWindow {
    /// Infectious from onset to recovery.
    UseRecovery,
    /// Infectious for a fixed number of days after onset.
    FixedDuration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelOptions {
    pub immunizing: bool,
    pub infectious_window: InfectiousWindow,
    /// Days after recovery before a person can be infected again.
    pub susceptibility_delay: f64,
    pub crs: CrsMode,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self {
            immunizing: false,
            infectious_window: InfectiousWindow::UseRecovery,
            susceptibility_delay: 0.0,
            crs: CrsMode::Planar,
        }
    }
}

/// Person-level follow-up data with disease episodes, the input to the rate
/// estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodePanel {
    persons: Vec<Person>,
    /// Sorted by person, then onset.
    episodes: Vec<Episode>,
    /// `episodes[episode_ranges[p].0 .. episode_ranges[p].1]` belong to person `p`.
    episode_ranges: Vec<(usize, usize)>,
    options: PanelOptions,
}

impl EpisodePanel {
    /// Validates persons and episodes. Errors carry 1-based record numbers
    /// (persons for track errors, episodes otherwise).
    pub fn new(
        persons: Vec<Person>,
        episodes: Vec<Episode>,
        options: PanelOptions,
    ) -> Result<Self, DataError> {
        let rows: Vec<usize> = (1..=episodes.len()).collect();
        Self::validated(persons, episodes, &rows, options, |i| i + 1)
    }

    pub(crate) fn validated(
        persons: Vec<Person>,
        episodes: Vec<Episode>,
        episode_rows: &[usize],
        options: PanelOptions,
        person_row: impl Fn(usize) -> usize,
    ) -> Result<Self, DataError> {
        if let InfectiousWindow::FixedDuration(d) = options.infectious_window {
            if !(d.is_finite() && d >= 0.0) {
                return Err(DataError::InvalidValue {
                    row: 0,
                    column: "infectious_window".into(),
                    value: d.to_string(),
                });
            }
        }
        if !(options.susceptibility_delay.is_finite() && options.susceptibility_delay >= 0.0) {
            return Err(DataError::InvalidValue {
                row: 0,
                column: "susceptibility_delay".into(),
                value: options.susceptibility_delay.to_string(),
            });
        }
        let mut seen = HashSet::new();
        for (idx, p) in persons.iter().enumerate() {
            let row = person_row(idx);
            if !seen.insert(p.id.as_str()) {
                return Err(DataError::DuplicateId {
                    row,
                    id: p.id.clone(),
                });
            }
            if !(p.entry.is_finite() && p.exit.is_finite()) || p.entry > p.exit {
                return Err(DataError::InvalidEnrollment {
                    row,
                    entry: p.entry,
                    exit: p.exit,
                });
            }
            let increasing = p.track.windows(2).all(|w| w[0].from < w[1].from);
            let starts_ok = p.track.first().is_some_and(|f| f.from <= p.entry);
            let finite = p.track.iter().all(|t| t.from.is_finite());
            if !(increasing && starts_ok && finite) {
                return Err(DataError::InvalidTrack {
                    row,
                    id: p.id.clone(),
                });
            }
            for t in &p.track {
                check_coord(t.location, options.crs, row)?;
            }
        }

        let mut order: Vec<usize> = (0..episodes.len()).collect();
        for (k, e) in episodes.iter().enumerate() {
            let row = episode_rows[k];
            let Some(person) = persons.get(e.person) else {
                return Err(DataError::UnknownPersonId {
                    row,
                    id: format!("#{}", e.person),
                });
            };
            if !(e.onset.is_finite() && e.recovery.is_finite()) || e.onset > e.recovery {
                return Err(DataError::InvalidEpisode {
                    row,
                    onset: e.onset,
                    recovery: e.recovery,
                });
            }
            if e.onset < person.entry || e.recovery > person.exit {
                return Err(DataError::EpisodeOutsideEnrollment {
                    row,
                    id: person.id.clone(),
                    onset: e.onset,
                    recovery: e.recovery,
                });
            }
        }
        order.sort_by(|&a, &b| {
            (episodes[a].person, episodes[a].onset)
                .partial_cmp(&(episodes[b].person, episodes[b].onset))
                .expect("finite onsets")
        });
        for w in order.windows(2) {
            let (a, b) = (&episodes[w[0]], &episodes[w[1]]);
            if a.person == b.person && b.onset < a.recovery {
                return Err(DataError::OverlappingEpisodes {
                    row: episode_rows[w[1]].max(episode_rows[w[0]]),
                    id: persons[a.person].id.clone(),
                });
            }
        }
        let sorted: Vec<Episode> = order.iter().map(|&i| episodes[i]).collect();
        let mut ranges = vec![(0, 0); persons.len()];
        let mut start = 0;
        for (p, range) in ranges.iter_mut().enumerate() {
            let end = start + sorted[start..].iter().take_while(|e| e.person == p).count();
            *range = (start, end);
            start = end;
        }
        Ok(Self {
            persons,
            episodes: sorted,
            episode_ranges: ranges,
            options,
        })
    }

    pub fn persons(&self) -> &[Person] {
        &self.persons
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn episodes_of(&self, person: usize) -> &[Episode] {
        let (a, b) = self.episode_ranges[person];
        &self.episodes[a..b]
    }

    pub fn options(&self) -> &PanelOptions {
        &self.options
    }

    pub fn crs(&self) -> CrsMode {
        self.options.crs
    }

    /// Total number of disease episodes (`n`).
    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    /// Number of people at risk (`n_r`).
    pub fn persons_at_risk(&self) -> usize {
        self.persons.len()
    }

    pub fn person_index(&self, id: &str) -> Option<usize> {
        self.persons.iter().position(|p| p.id == id)
    }

    /// End of the infectious period of an episode.
    pub fn infectious_end(&self, e: &Episode) -> f64 {
        match self.options.infectious_window {
            InfectiousWindow::UseRecovery => e.recovery,
            InfectiousWindow::FixedDuration(d) => e.onset + d,
        }
    }

    /// Location of the episode's person at its onset.
    pub fn episode_location(&self, e: &Episode) -> Coord {
        self.persons[e.person].location_at(e.onset)
    }
}

/// Decides whether a pair is plausibly linked by transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelatednessRule {
    /// Related iff `min_days <= |t_j - t_i| <= max_days` (signed `t_m - t_l`
    /// for directed episode pairs).
    TemporalInterval { min_days: f64, max_days: f64 },
    /// Related iff both carry the mark and the values agree.
    MarkEquality { mark: String },
    /// Related iff exactly one of the pair is flagged prevalent by `mark`.
    PrevalentIncident { mark: String },
    /// Related iff every component is related.
    Conjunction(Vec<RelatednessRule>),
}

impl RelatednessRule {
    pub fn temporal(min_days: f64, max_days: f64) -> Result<Self, DataError> {
        let rule = Self::TemporalInterval { min_days, max_days };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        match self {
            Self::TemporalInterval { min_days, max_days } => {
                if !(min_days.is_finite() && max_days.is_finite()) || min_days > max_days {
                    return Err(DataError::InvalidRule(format!(
                        "temporal interval [{min_days}, {max_days}] needs finite T1 <= T2"
                    )));
                }
                Ok(())
            }
            Self::MarkEquality { mark } | Self::PrevalentIncident { mark } => {
                if mark.is_empty() {
                    return Err(DataError::InvalidRule("empty mark name".into()));
                }
                Ok(())
            }
            Self::Conjunction(parts) => {
                if parts.is_empty() {
                    return Err(DataError::InvalidRule("empty conjunction".into()));
                }
                parts.iter().try_for_each(Self::validate)
            }
        }
    }

    /// Whether the rule depends on onset times at all.
    pub fn uses_time(&self) -> bool {
        match self {
            Self::TemporalInterval { .. } => true,
            Self::Conjunction(parts) => parts.iter().any(Self::uses_time),
            _ => false,
        }
    }

    /// Human-readable form used in plot captions and metadata.
    pub fn describe(&self) -> String {
        match self {
            Self::TemporalInterval { min_days, max_days } => {
                format!("|dt| in [{min_days}, {max_days}]")
            }
            Self::MarkEquality { mark } => format!("same {mark}"),
            Self::PrevalentIncident { mark } => format!("prevalent-incident via {mark}"),
            Self::Conjunction(parts) => parts
                .iter()
                .map(Self::describe)
                .collect::<Vec<_>>()
                .join(" and "),
        }
    }
}

/// Truthy mark values flagging a prevalent individual.
pub fn is_flagged(value: &str) -> bool {
    matches!(
        value.trim().to_ascii_lowercase().as_str(),
        "1" | "true" | "yes" | "prevalent"
    )
}

pub(crate) fn index_by_id<'a>(ids: impl Iterator<Item = &'a str>) -> HashMap<&'a str, usize> {
    ids.enumerate().map(|(i, id)| (id, i)).collect()
}
