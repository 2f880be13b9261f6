//! Shared fixtures for integration tests: a brute-force reference
//! implementation over ordered pairs and random instance generators.

#![allow(dead_code)]

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taukit::bands::{equal_width_bands, expanding_discs, overlapping_bands};
use taukit::model::{InfectiousWindow, TrackPoint};
use taukit::{
    Axis, Band, BandSet, BandStyle, CaseDataset, Coord, CrsMode, Episode, EpisodePanel, Individual,
    PanelOptions, Person, RelatednessRule,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Onsets on a half-day grid so that coincident lags and band edges occur.
fn half_day(rng: &mut ChaCha8Rng, max: u32) -> f64 {
    f64::from(rng.random_range(0..2 * max)) / 2.0
}

/// A random coordinate; geographic datasets sit in a box about 10 km wide.
pub fn coord(rng: &mut ChaCha8Rng, crs: CrsMode) -> Coord {
    match crs {
        CrsMode::Planar => Coord::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
        CrsMode::Geographic => Coord::new(rng.random_range(36.80..36.90), rng.random_range(-1.35..-1.25)),
    }
}

/// Between 2 and `max_n` individuals with at least two cases, optional
/// noncases, a serotype mark on most individuals and a prevalence flag.
pub fn random_dataset(rng: &mut ChaCha8Rng, max_n: usize, crs: CrsMode, noncases: bool) -> CaseDataset {
    let n = rng.random_range(2..=max_n.max(2));
    let mut inds = Vec::with_capacity(n);
    for k in 0..n {
        let c = coord(rng, crs);
        let is_case = k < 2 || !noncases || rng.random_bool(0.6);
        let mut ind = if is_case {
            Individual::case(format!("i{k}"), c.x, c.y, half_day(rng, 30))
        } else {
            Individual::noncase(format!("i{k}"), c.x, c.y)
        };
        if rng.random_bool(0.9) {
            let sero = ["A", "B", "C"][rng.random_range(0..3)];
            ind = ind.with_mark("serotype", sero);
        }
        ind = ind.with_mark("prevalent", if rng.random_bool(0.3) { "1" } else { "0" });
        inds.push(ind);
    }
    CaseDataset::new(inds, crs).expect("generated dataset is valid")
}

/// Scale of pair distances for a reference system.
pub fn distance_scale(crs: CrsMode) -> f64 {
    match crs {
        CrsMode::Planar => 100.0,
        CrsMode::Geographic => 10_000.0,
    }
}

/// Annuli, discs, overlapping windows or an irregular custom set.
pub fn random_bands(rng: &mut ChaCha8Rng, scale: f64) -> BandSet {
    let k = rng.random_range(1..=6);
    match rng.random_range(0..4) {
        0 => equal_width_bands(scale * rng.random_range(0.3..1.5), k).unwrap(),
        1 => {
            let mut cuts: Vec<f64> = (0..k).map(|_| scale * rng.random_range(0.05..1.5)).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            expanding_discs(&cuts).unwrap()
        }
        2 => {
            let centers: Vec<f64> = (0..k).map(|i| scale * 0.2 * (i + 1) as f64).collect();
            overlapping_bands(&centers, scale * rng.random_range(0.05..0.4)).unwrap()
        }
        _ => {
            let bands = (0..k)
                .map(|_| {
                    let lo = scale * rng.random_range(0.0..1.0);
                    let hi = if rng.random_bool(0.15) {
                        f64::INFINITY
                    } else {
                        lo + scale * rng.random_range(0.01..0.8)
                    };
                    Band::new(lo, hi, Axis::Distance).unwrap()
                })
                .collect();
            BandSet::new(bands, BandStyle::Custom, Axis::Distance).unwrap()
        }
    }
}

pub fn random_temporal(rng: &mut ChaCha8Rng) -> RelatednessRule {
    let lo = half_day(rng, 4);
    RelatednessRule::temporal(lo, lo + half_day(rng, 10)).unwrap()
}

/// Temporal, mark-based or combined rules.
pub fn random_rule(rng: &mut ChaCha8Rng) -> RelatednessRule {
    match rng.random_range(0..5) {
        0 | 1 => random_temporal(rng),
        2 => RelatednessRule::MarkEquality {
            mark: "serotype".into(),
        },
        3 => RelatednessRule::PrevalentIncident {
            mark: "prevalent".into(),
        },
        _ => RelatednessRule::Conjunction(vec![
            random_temporal(rng),
            RelatednessRule::MarkEquality {
                mark: "serotype".into(),
            },
        ]),
    }
}

/// Small panel on a half-day grid: enrollment windows, up to two
/// non-overlapping episodes per person and occasional relocations.
pub fn random_panel(rng: &mut ChaCha8Rng, max_persons: usize) -> EpisodePanel {
    let n = rng.random_range(2..=max_persons.max(2));
    let mut persons = Vec::with_capacity(n);
    let mut episodes = Vec::new();
    for p in 0..n {
        let entry = half_day(rng, 5);
        let exit = entry + 10.0 + half_day(rng, 30);
        let mut track = vec![TrackPoint {
            from: entry,
            location: coord(rng, CrsMode::Planar),
        }];
        if rng.random_bool(0.3) {
            let from = entry + 0.5 + half_day(rng, ((exit - entry) as u32).saturating_sub(1).max(1));
            if from < exit {
                track.push(TrackPoint {
                    from,
                    location: coord(rng, CrsMode::Planar),
                });
            }
        }
        persons.push(Person {
            id: format!("p{p}"),
            entry,
            exit,
            track,
        });
        let mut t = entry;
        for _ in 0..rng.random_range(0..=2) {
            let onset = t + half_day(rng, 8);
            let recovery = onset + half_day(rng, 6);
            if recovery > exit {
                break;
            }
            episodes.push(Episode {
                person: p,
                onset,
                recovery,
            });
            t = recovery + 0.5;
        }
    }
    let options = PanelOptions {
        immunizing: rng.random_bool(0.3),
        infectious_window: if rng.random_bool(0.5) {
            InfectiousWindow::UseRecovery
        } else {
            InfectiousWindow::FixedDuration(half_day(rng, 5))
        },
        susceptibility_delay: half_day(rng, 3),
        crs: CrsMode::Planar,
    };
    EpisodePanel::new(persons, episodes, options).expect("generated panel is valid")
}

/// Everyone enrolled throughout, static, one instantaneous episode each,
/// non-immunizing and infectious for a fixed `w` days: every ordered pair
/// accrues exactly `w` days of pair-time. Returns the panel and the matching
/// all-case dataset.
pub fn uniform_time_panel(rng: &mut ChaCha8Rng, max_persons: usize) -> (EpisodePanel, CaseDataset) {
    let n = rng.random_range(3..=max_persons.max(3));
    let w = 1.0 + half_day(rng, 4);
    let horizon = 60.0;
    let mut persons = Vec::with_capacity(n);
    let mut episodes = Vec::with_capacity(n);
    let mut inds = Vec::with_capacity(n);
    for p in 0..n {
        let at = coord(rng, CrsMode::Planar);
        // onsets on a 0.25 grid offset by p / 1024 never tie
        let onset = f64::from(rng.random_range(0..160u32)) * 0.25 + p as f64 / 1024.0;
        persons.push(Person::resident(format!("p{p}"), 0.0, horizon + w, at));
        episodes.push(Episode {
            person: p,
            onset,
            recovery: onset,
        });
        inds.push(Individual::case(format!("p{p}"), at.x, at.y, onset));
    }
    let options = PanelOptions {
        immunizing: false,
        infectious_window: InfectiousWindow::FixedDuration(w),
        susceptibility_delay: 0.0,
        crs: CrsMode::Planar,
    };
    (
        EpisodePanel::new(persons, episodes, options).expect("valid panel"),
        CaseDataset::new(inds, CrsMode::Planar).expect("valid dataset"),
    )
}

/// Relative difference, with exact zeros equal.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
