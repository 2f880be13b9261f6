//! Brute-force reference: every ordered pair is visited, each unordered pair
//! is therefore seen twice, and counts are halved at the end.

use taukit::model::InfectiousWindow;
use taukit::{BandSet, CaseDataset, Coord, CrsMode, EpisodePanel, Individual, Person, RelatednessRule};

const R_EARTH: f64 = 6_371_008.8;

pub fn distance(crs: CrsMode, a: Coord, b: Coord) -> f64 {
    match crs {
        CrsMode::Planar => ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt(),
        CrsMode::Geographic => {
            let (p1, p2) = (a.y.to_radians(), b.y.to_radians());
            let dphi = p2 - p1;
            let dlam = (b.x - a.x).to_radians();
            let s = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlam / 2.0).sin().powi(2);
            2.0 * R_EARTH * s.sqrt().atan2((1.0 - s).sqrt())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Yes,
    No,
    Unknown,
}

fn flagged(v: &str) -> bool {
    ["1", "true", "yes", "prevalent"].contains(&v.trim().to_lowercase().as_str())
}

pub fn relate(rule: &RelatednessRule, a: &Individual, b: &Individual) -> Rel {
    match rule {
        RelatednessRule::TemporalInterval { min_days, max_days } => match (a.onset, b.onset) {
            (Some(x), Some(y)) => {
                let lag = (x - y).abs();
                if lag >= *min_days && lag <= *max_days {
                    Rel::Yes
                } else {
                    Rel::No
                }
            }
            _ => Rel::Unknown,
        },
        RelatednessRule::MarkEquality { mark } => match (a.marks.get(mark), b.marks.get(mark)) {
            (Some(x), Some(y)) => {
                if x == y {
                    Rel::Yes
                } else {
                    Rel::No
                }
            }
            _ => Rel::Unknown,
        },
        RelatednessRule::PrevalentIncident { mark } => match (a.marks.get(mark), b.marks.get(mark)) {
            (Some(x), Some(y)) => {
                if flagged(x) ^ flagged(y) {
                    Rel::Yes
                } else {
                    Rel::No
                }
            }
            _ => Rel::Unknown,
        },
        RelatednessRule::Conjunction(parts) => {
            let all: Vec<Rel> = parts.iter().map(|p| relate(p, a, b)).collect();
            if all.contains(&Rel::No) {
                Rel::No
            } else if all.contains(&Rel::Unknown) {
                Rel::Unknown
            } else {
                Rel::Yes
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub related: u64,
    pub unrelated: u64,
    pub unknown: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.related + self.unrelated + self.unknown
    }
}

/// Per-band and global counts. `with_noncases` selects all individuals,
/// otherwise cases only; pairs with a noncase are unrelated.
pub fn tally(
    dataset: &CaseDataset,
    bands: &BandSet,
    rule: &RelatednessRule,
    with_noncases: bool,
) -> (Vec<Counts>, Counts) {
    let inds: Vec<&Individual> = dataset
        .individuals()
        .iter()
        .filter(|i| with_noncases || i.is_case())
        .collect();
    let mut per = vec![Counts::default(); bands.len()];
    let mut global = Counts::default();
    for (i, a) in inds.iter().enumerate() {
        for (j, b) in inds.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = distance(dataset.crs(), a.location, b.location);
            let r = if a.is_case() && b.is_case() {
                relate(rule, a, b)
            } else {
                Rel::No
            };
            let bump = |c: &mut Counts| match r {
                Rel::Yes => c.related += 1,
                Rel::No => c.unrelated += 1,
                Rel::Unknown => c.unknown += 1,
            };
            bump(&mut global);
            for (k, band) in bands.bands().iter().enumerate() {
                if band.lo <= d && d < band.hi {
                    bump(&mut per[k]);
                }
            }
        }
    }
    let half = |c: Counts| {
        assert!(c.related.is_multiple_of(2) && c.unrelated.is_multiple_of(2) && c.unknown.is_multiple_of(2));
        Counts {
            related: c.related / 2,
            unrelated: c.unrelated / 2,
            unknown: c.unknown / 2,
        }
    };
    (per.into_iter().map(half).collect(), half(global))
}

/// Odds form: `(rel / unrel) / (rel_all / unrel_all)`, unknown pairs counted
/// as unrelated. `None` where undefined.
pub fn tau_odds(per: &[Counts], global: Counts) -> Option<Vec<Option<f64>>> {
    let g_rel = global.related as f64;
    let g_unrel = (global.unrelated + global.unknown) as f64;
    if g_rel == 0.0 || g_unrel == 0.0 {
        return None;
    }
    let theta_g = g_rel / g_unrel;
    Some(
        per.iter()
            .map(|c| {
                let unrel = (c.unrelated + c.unknown) as f64;
                (unrel > 0.0).then(|| (c.related as f64 / unrel) / theta_g)
            })
            .collect(),
    )
}

/// Prevalence form: `(rel / total) / (rel_all / total_all)`.
pub fn tau_prev(per: &[Counts], global: Counts) -> Option<Vec<Option<f64>>> {
    if global.related == 0 {
        return None;
    }
    let pi_g = global.related as f64 / global.total() as f64;
    Some(
        per.iter()
            .map(|c| (c.total() > 0).then(|| (c.related as f64 / c.total() as f64) / pi_g))
            .collect(),
    )
}

fn location(p: &Person, t: f64) -> Coord {
    let mut at = p.track[0].location;
    for tp in &p.track {
        if tp.from <= t {
            at = tp.location;
        }
    }
    at
}

/// Directed related episode pairs per band: signed lag `t_m - t_l` within
/// the temporal window, different persons, distance at each own onset.
pub fn rate_events(panel: &EpisodePanel, bands: &BandSet, min_days: f64, max_days: f64) -> (Vec<u64>, u64) {
    let persons = panel.persons();
    let mut per = vec![0; bands.len()];
    let mut all = 0;
    for l in panel.episodes() {
        for m in panel.episodes() {
            if l.person == m.person {
                continue;
            }
            let lag = m.onset - l.onset;
            if lag < min_days || lag > max_days {
                continue;
            }
            let d = distance(
                panel.crs(),
                location(&persons[l.person], l.onset),
                location(&persons[m.person], m.onset),
            );
            all += 1;
            for (k, b) in bands.bands().iter().enumerate() {
                if b.lo <= d && d < b.hi {
                    per[k] += 1;
                }
            }
        }
    }
    (per, all)
}

fn infectious(panel: &EpisodePanel, p: usize, t: f64) -> bool {
    let person = &panel.persons()[p];
    if t < person.entry || t >= person.exit {
        return false;
    }
    panel.episodes_of(p).iter().any(|e| {
        let end = match panel.options().infectious_window {
            InfectiousWindow::UseRecovery => e.recovery,
            InfectiousWindow::FixedDuration(w) => e.onset + w,
        };
        e.onset <= t && t < end
    })
}

fn susceptible(panel: &EpisodePanel, p: usize, t: f64) -> bool {
    let person = &panel.persons()[p];
    if t < person.entry || t >= person.exit {
        return false;
    }
    let eps = panel.episodes_of(p);
    let opts = panel.options();
    if opts.immunizing {
        eps.first().is_none_or(|e| t < e.onset)
    } else {
        !eps
            .iter()
            .any(|e| e.onset <= t && t < e.recovery + opts.susceptibility_delay)
    }
}

/// Pair person-time per band by scanning cell midpoints of width `step`.
/// Exact whenever every event time is a multiple of `step`.
pub fn pair_time_scan(panel: &EpisodePanel, bands: &BandSet, step: f64) -> (Vec<f64>, f64) {
    let persons = panel.persons();
    let t0 = persons.iter().map(|p| p.entry).fold(f64::INFINITY, f64::min);
    let t1 = persons.iter().map(|p| p.exit).fold(f64::NEG_INFINITY, f64::max);
    let cells = ((t1 - t0) / step).ceil() as usize;
    let mut per = vec![0.0; bands.len()];
    let mut all = 0.0;
    for c in 0..cells {
        let t = t0 + (c as f64 + 0.5) * step;
        for i in 0..persons.len() {
            if !infectious(panel, i, t) {
                continue;
            }
            for j in 0..persons.len() {
                if i == j || !susceptible(panel, j, t) {
                    continue;
                }
                let d = distance(panel.crs(), location(&persons[i], t), location(&persons[j], t));
                all += step;
                for (k, b) in bands.bands().iter().enumerate() {
                    if b.lo <= d && d < b.hi {
                        per[k] += step;
                    }
                }
            }
        }
    }
    (per, all)
}
