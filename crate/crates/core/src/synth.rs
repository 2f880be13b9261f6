//! Synthetic case data: complete spatial randomness and a spatial branching
//! epidemic on a fixed population, with observation models applied after
//! the fact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CaseDataset, Coord, CrsMode, DataError, Individual};

/// Serial-interval family used by [`simulate_epidemic`].
pub const SERIAL_INTERVAL_FAMILY: &str = "gamma (shape (mean/sd)^2, scale sd^2/mean)";

/// Draw limit when picking a contact by rejection; exceeding it drops the
/// infection.
const MAX_CONTACT_DRAWS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig(msg.into())
}

/// Axis-aligned rectangle in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, SynthError> {
        let r = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        r.validate()?;
        Ok(r)
    }

    /// `[0, width] x [0, height]`.
    pub fn square(side: f64) -> Result<Self, SynthError> {
        Self::new(0.0, 0.0, side, side)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let ok = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("region {self:?} must be a finite, non-empty rectangle")))
        }
    }

    pub fn contains(&self, c: Coord) -> bool {
        (self.x_min..=self.x_max).contains(&c.x) && (self.y_min..=self.y_max).contains(&c.y)
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }

    fn sample(&self, rng: &mut impl Rng) -> Coord {
        Coord {
            x: rng.random_range(self.x_min..self.x_max),
            y: rng.random_range(self.y_min..self.y_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Layout {
    Uniform,
    /// Gaussian clusters around uniformly placed centres, clipped to the region.
    Clustered { clusters: usize, sd: f64 },
}

/// Relative chance that a case infects a given person at distance `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Kernel {
    Gaussian { sd: f64 },
    Exponential { rate: f64 },
    UniformDisc { radius: f64 },
}

impl Kernel {
    pub fn weight(&self, d: f64) -> f64 {
        match *self {
            Kernel::Gaussian { sd } => (-d * d / (2.0 * sd * sd)).exp(),
            Kernel::Exponential { rate } => (-rate * d).exp(),
            Kernel::UniformDisc { radius } => f64::from(u8::from(d <= radius)),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let v = match *self {
            Kernel::Gaussian { sd } => sd,
            Kernel::Exponential { rate } => rate,
            Kernel::UniformDisc { radius } => radius,
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("kernel {self:?} needs a positive parameter")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Observation {
    Full,
    /// Each case is observed independently with probability `p`.
    RandomFraction { p: f64 },
    /// Cases within `radius` of `center` are observed with `p_in`, others with `p_out`.
    SpatialBias {
        center: Coord,
        radius: f64,
        p_in: f64,
        p_out: f64,
    },
}

impl Observation {
    fn validate(&self) -> Result<(), SynthError> {
        let prob = |p: f64| p > 0.0 && p <= 1.0;
        let ok = match *self {
            Observation::Full => true,
            Observation::RandomFraction { p } => prob(p),
            Observation::SpatialBias {
                center,
                radius,
                p_in,
                p_out,
            } => center.x.is_finite() && center.y.is_finite() && radius > 0.0 && prob(p_in) && prob(p_out),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("observation {self:?}: probabilities must lie in (0, 1]")))
        }
    }

    fn probability(&self, at: Coord) -> f64 {
        match *self {
            Observation::Full => 1.0,
            Observation::RandomFraction { p } => p,
            Observation::SpatialBias {
                center,
                radius,
                p_in,
                p_out,
            } => {
                if CrsMode::Planar.distance(at, center) <= radius {
                    p_in
                } else {
                    p_out
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicConfig {
    pub region: Region,
    pub population_n: usize,
    pub layout: Layout,
    pub kernel: Kernel,
    /// Days.
    pub serial_interval_mean: f64,
    /// Days.
    pub serial_interval_sd: f64,
    /// Expected offspring per case.
    pub r_e: f64,
    pub initial_cases: usize,
    /// Days; later onsets are dropped.
    pub horizon: f64,
    pub observation: Observation,
    /// Uninfected people added as noncases.
    pub noncases: usize,
}

impl Default for EpidemicConfig {
    fn default() -> Self {
        Self {
            region: Region::square(2000.0).expect("valid square"),
            population_n: 5000,
            layout: Layout::Uniform,
            kernel: Kernel::Gaussian { sd: 100.0 },
            serial_interval_mean: 15.0,
            serial_interval_sd: 5.0,
            r_e: 2.0,
            initial_cases: 5,
            horizon: 120.0,
            observation: Observation::Full,
            noncases: 0,
        }
    }
}

impl EpidemicConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.region.validate()?;
        self.kernel.validate()?;
        self.observation.validate()?;
        if let Layout::Clustered { clusters, sd } = self.layout {
            if clusters == 0 || !(sd > 0.0 && sd.is_finite()) {
                return Err(invalid("clustered layout needs at least one cluster and sd > 0"));
            }
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.serial_interval_mean) || !positive(self.serial_interval_sd) {
            return Err(invalid("serial interval mean and sd must be positive"));
        }
        if !(self.r_e.is_finite() && self.r_e >= 0.0) {
            return Err(invalid("R_e must be finite and non-negative"));
        }
        if !positive(self.horizon) || self.horizon < self.serial_interval_mean {
            return Err(invalid("horizon must be positive and at least one serial interval"));
        }
        if self.initial_cases < 2 || self.initial_cases > self.population_n {
            return Err(invalid("need 2 <= initial_cases <= population_n"));
        }
        Ok(())
    }
}

/// One infection in the simulated transmission tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionEvent {
    pub id: String,
    pub infector: Option<String>,
    pub onset: f64,
    pub generation: u32,
    pub location: Coord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SynthWarning {
    /// Fewer than ten cases per initial case; the caller may reseed.
    ExtinctEpidemic { final_size: usize, threshold: usize },
}

#[derive(Debug, Clone)]
pub struct SimulatedEpidemic {
    /// Observed cases (and noncases, when requested).
    pub dataset: CaseDataset,
    /// Every infection before observation, in onset order.
    pub tree: Vec<TransmissionEvent>,
    pub warnings: Vec<SynthWarning>,
}

impl SimulatedEpidemic {
    pub fn final_size(&self) -> usize {
        self.tree.len()
    }
}

/// Complete spatial randomness: `n` cases with independent uniform
/// locations and onsets, and a uniformly drawn `serotype` mark (1 to 4).
pub fn simulate_null(n: usize, region: Region, horizon: f64, seed: u64) -> Result<CaseDataset, SynthError> {
    region.validate()?;
    if n < 2 {
        return Err(invalid("at least 2 cases are needed"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases = (0..n)
        .map(|k| {
            let c = region.sample(&mut rng);
            let t = rng.random_range(0.0..horizon);
            let serotype = rng.random_range(1..=4u8);
            Individual::case(format!("n{k}"), c.x, c.y, t).with_mark("serotype", serotype.to_string())
        })
        .collect();
    Ok(CaseDataset::new(cases, CrsMode::Planar)?)
}

fn population(config: &EpidemicConfig, rng: &mut ChaCha8Rng) -> Vec<Coord> {
    let region = config.region;
    match config.layout {
        Layout::Uniform => (0..config.population_n).map(|_| region.sample(rng)).collect(),
        Layout::Clustered { clusters, sd } => {
            let centres: Vec<Coord> = (0..clusters).map(|_| region.sample(rng)).collect();
            let spread = Normal::new(0.0, sd).expect("validated sd");
            (0..config.population_n)
                .map(|_| {
                    let c = centres[rng.random_range(0..clusters)];
                    loop {
                        let p = Coord {
                            x: c.x + spread.sample(rng),
                            y: c.y + spread.sample(rng),
                        };
                        if region.contains(p) {
                            break p;
                        }
                    }
                })
                .collect()
        }
    }
}

/// Pending infection ordered by onset, earliest first.
struct Pending {
    onset: f64,
    case: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .onset
            .total_cmp(&self.onset)
            .then_with(|| other.case.cmp(&self.case))
    }
}

/// Spatial branching process over a fixed set of locations.
///
/// Initial cases have onsets uniform over one mean serial interval. Each
/// case, in onset order, has a Poisson(`r_e`) number of offspring; an
/// offspring is placed at a population member drawn with probability
/// proportional to the kernel weight of its distance. Each person is infected
/// at most once: an offspring drawn onto an already infected person is lost.
/// Onsets beyond the horizon are dropped. The observation model runs last
/// with its own stream.
pub fn simulate_epidemic(config: &EpidemicConfig, seed: u64) -> Result<SimulatedEpidemic, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let people = population(config, &mut rng);
    let m = config.serial_interval_mean;
    let s = config.serial_interval_sd;
    let serial = Gamma::new((m / s).powi(2), s * s / m).map_err(|e| invalid(e.to_string()))?;
    let offspring = (config.r_e > 0.0)
        .then(|| Poisson::new(config.r_e))
        .transpose()
        .map_err(|e| invalid(e.to_string()))?;

    let n = people.len();
    // (person, infector case index, generation) per case, in creation order
    let mut cases: Vec<(usize, Option<usize>, u32)> = Vec::new();
    let mut ever_infected = vec![false; n];
    let mut queue = BinaryHeap::new();
    for person in sample(&mut rng, n, config.initial_cases) {
        ever_infected[person] = true;
        queue.push(Pending {
            onset: rng.random_range(0.0..m),
            case: cases.len(),
        });
        cases.push((person, None, 0));
    }

    let mut tree = Vec::new();
    let mut label: Vec<usize> = Vec::new();
    while let Some(Pending { onset, case }) = queue.pop() {
        let (person, infector, generation) = cases[case];
        if label.len() < cases.len() {
            label.resize(cases.len(), usize::MAX);
        }
        label[case] = tree.len();
        tree.push(TransmissionEvent {
            id: format!("c{}", tree.len()),
            infector: infector.map(|k| format!("c{}", label[k])),
            onset,
            generation,
            location: people[person],
        });
        let Some(offspring) = &offspring else { continue };
        let contacts = offspring.sample(&mut rng) as usize;
        for _ in 0..contacts {
            let Some(target) = draw_contact(&people, people[person], &config.kernel, &mut rng) else {
                continue;
            };
            if ever_infected[target] {
                continue;
            }
            let t = onset + serial.sample(&mut rng);
            if t > config.horizon {
                continue;
            }
            ever_infected[target] = true;
            queue.push(Pending {
                onset: t,
                case: cases.len(),
            });
            cases.push((target, Some(case), generation + 1));
        }
    }

    let mut individuals: Vec<Individual> = tree
        .iter()
        .map(|e| {
            Individual::case(e.id.clone(), e.location.x, e.location.y, e.onset)
                .with_mark("generation", e.generation.to_string())
        })
        .collect();
    let uninfected: Vec<usize> = (0..n).filter(|&k| !ever_infected[k]).collect();
    let take = config.noncases.min(uninfected.len());
    let mut chosen: Vec<usize> = sample(&mut rng, uninfected.len(), take)
        .into_iter()
        .map(|k| uninfected[k])
        .collect();
    chosen.sort_unstable();
    individuals.extend(
        chosen
            .into_iter()
            .map(|k| Individual::noncase(format!("p{k}"), people[k].x, people[k].y)),
    );

    let mut warnings = Vec::new();
    let threshold = 10 * config.initial_cases;
    if tree.len() < threshold {
        log::warn!("epidemic died out: {} cases, fewer than {threshold}", tree.len());
        warnings.push(SynthWarning::ExtinctEpidemic {
            final_size: tree.len(),
            threshold,
        });
    }
    let full = CaseDataset::new(individuals, CrsMode::Planar)?;
    let dataset = apply_observation(&full, &config.observation, seed ^ 0x0b5e_7ea7_10e5_eed5)?;
    Ok(SimulatedEpidemic {
        dataset,
        tree,
        warnings,
    })
}

fn draw_contact(people: &[Coord], from: Coord, kernel: &Kernel, rng: &mut ChaCha8Rng) -> Option<usize> {
    for _ in 0..MAX_CONTACT_DRAWS {
        let k = rng.random_range(0..people.len());
        let w = kernel.weight(CrsMode::Planar.distance(from, people[k]));
        if w > 0.0 && rng.random::<f64>() < w {
            return Some(k);
        }
    }
    None
}

/// Keeps each case with the observation model's probability at its
/// location. Noncases are always kept.
pub fn apply_observation(dataset: &CaseDataset, observation: &Observation, seed: u64) -> Result<CaseDataset, SynthError> {
    observation.validate()?;
    if *observation == Observation::Full {
        return Ok(dataset.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(dataset.filtered(|ind| {
        let u: f64 = rng.random();
        !ind.is_case() || u < observation.probability(ind.location)
    })?)
}
