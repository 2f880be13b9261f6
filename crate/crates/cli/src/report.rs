//! The `result.json` document and the CSV tables written next to it.

use std::fs;
use std::path::Path;

use serde::Serialize;
use taukit::estimators::TauMap;
use taukit::inference::{EnvelopeTestResult, LegacyTrigger};
use taukit::{Band, Crossing, Envelope, LegacyRange, RangeEstimate, TauCurve, UndefinedReason};

use crate::error::{write_error, CliError};
use crate::plot::PlotRow;

/// `hi` is `null` for an unbounded band.
#[derive(Debug, Serialize)]
pub struct BandOut {
    pub lo: f64,
    pub hi: Option<f64>,
}

impl From<&Band> for BandOut {
    fn from(b: &Band) -> Self {
        Self {
            lo: b.lo,
            hi: b.hi.is_finite().then_some(b.hi),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EnvelopeOut {
    pub level: f64,
    pub kind: &'static str,
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
    pub defined_fraction: Vec<f64>,
}

impl From<&Envelope> for EnvelopeOut {
    fn from(e: &Envelope) -> Self {
        Self {
            level: e.level,
            kind: "bootstrap_percentile",
            lo: e.lo.clone(),
            hi: e.hi.clone(),
            defined_fraction: e.defined_fraction.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BoundsOut {
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
pub struct GlobalTestOut {
    pub p: f64,
    pub alpha: f64,
    pub reject: bool,
    pub bounds: BoundsOut,
    pub k_alpha: usize,
    pub observed_extreme_rank: f64,
    pub bands_used: Vec<bool>,
}

impl From<&EnvelopeTestResult> for GlobalTestOut {
    fn from(t: &EnvelopeTestResult) -> Self {
        Self {
            p: t.p_value,
            alpha: t.reject_at,
            reject: t.reject,
            bounds: BoundsOut {
                lo: t.global_lo.clone(),
                hi: t.global_hi.clone(),
            },
            k_alpha: t.k_alpha,
            observed_extreme_rank: t.observed_extreme_rank,
            bands_used: t.bands_used.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RangeOut {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub crossing: Crossing,
    pub censored_fraction: f64,
}

impl From<&RangeEstimate> for RangeOut {
    fn from(r: &RangeEstimate) -> Self {
        Self {
            point: r.point,
            lo: r.lo,
            hi: r.hi,
            level: r.level,
            crossing: r.crossing,
            censored_fraction: r.censored_fraction,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LegacyOut {
    pub distance: f64,
    pub trigger: LegacyTrigger,
}

impl From<&LegacyRange> for LegacyOut {
    fn from(l: &LegacyRange) -> Self {
        Self {
            distance: l.distance,
            trigger: l.trigger,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub seed: u64,
    #[serde(rename = "R")]
    pub r: usize,
    pub rng: &'static str,
    pub version: &'static str,
    pub replicate_kind: Option<&'static str>,
    pub time_window: Option<[f64; 2]>,
    pub convention: &'static str,
    pub reference_label: &'static str,
    pub crs: &'static str,
    pub n_cases: usize,
    pub n_units: usize,
}

#[derive(Debug, Serialize)]
pub struct ResultDoc {
    pub command: &'static str,
    pub estimator: &'static str,
    pub relatedness: String,
    pub bands: Vec<BandOut>,
    pub x: Vec<f64>,
    pub tau: Vec<Option<f64>>,
    pub undefined_reason: Vec<Option<UndefinedReason>>,
    pub related: Vec<u64>,
    pub reference: Vec<f64>,
    pub envelope: Option<EnvelopeOut>,
    pub global_test: Option<GlobalTestOut>,
    pub range: Option<RangeOut>,
    pub legacy_range: Option<LegacyOut>,
    pub warnings: Vec<String>,
    pub meta: Meta,
}

impl ResultDoc {
    pub fn new(command: &'static str, curve: &TauCurve, relatedness: String, meta: Meta) -> Self {
        Self {
            command,
            estimator: curve.estimator.name(),
            relatedness,
            bands: curve.bands.bands().iter().map(BandOut::from).collect(),
            x: curve.plot_points(),
            tau: curve.values.iter().map(|v| v.value()).collect(),
            undefined_reason: curve
                .values
                .iter()
                .map(|v| match v {
                    taukit::TauValue::Defined(_) => None,
                    taukit::TauValue::Undefined(r) => Some(*r),
                })
                .collect(),
            related: curve.support.iter().map(|s| s.related).collect(),
            reference: curve.support.iter().map(|s| s.reference).collect(),
            envelope: None,
            global_test: None,
            range: None,
            legacy_range: None,
            warnings: curve.warnings.clone(),
            meta,
        }
    }
}

pub fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| write_error(&path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialise");
    s.push('\n');
    s
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn reason_text(r: &Option<UndefinedReason>) -> String {
    match r {
        None => "defined".into(),
        Some(r) => serde_json::to_value(r)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default(),
    }
}

/// One row per band: counts, value, status and whichever bounds exist.
pub fn curve_csv(doc: &ResultDoc) -> Vec<u8> {
    let header = [
        "band_lo",
        "band_hi",
        "x",
        "tau",
        "status",
        "related",
        doc.meta.reference_label,
        "envelope_lo",
        "envelope_hi",
        "global_lo",
        "global_hi",
    ];
    let rows = (0..doc.tau.len()).map(|b| {
        vec![
            doc.bands[b].lo.to_string(),
            doc.bands[b].hi.map_or("inf".into(), |h| h.to_string()),
            doc.x[b].to_string(),
            cell(doc.tau[b]),
            reason_text(&doc.undefined_reason[b]),
            doc.related[b].to_string(),
            doc.reference[b].to_string(),
            cell(doc.envelope.as_ref().and_then(|e| e.lo[b])),
            cell(doc.envelope.as_ref().and_then(|e| e.hi[b])),
            cell(doc.global_test.as_ref().and_then(|t| t.bounds.lo[b])),
            cell(doc.global_test.as_ref().and_then(|t| t.bounds.hi[b])),
        ]
    });
    csv_bytes(&header, rows)
}

pub fn plot_csv(rows: &[PlotRow<'_>]) -> Vec<u8> {
    csv_bytes(
        &["panel", "curve", "x", "tau", "lo", "hi"],
        rows.iter().map(|r| {
            vec![
                r.panel.to_string(),
                r.curve.to_string(),
                r.x.to_string(),
                cell(r.tau),
                cell(r.lo),
                cell(r.hi),
            ]
        }),
    )
}

pub fn map_csv(map: &TauMap) -> Vec<u8> {
    let mut rows = Vec::new();
    for (a, db) in map.distance_bands.bands().iter().enumerate() {
        for (b, tb) in map.time_lag_bands.bands().iter().enumerate() {
            let v = map.cells[a][b];
            let reason = match v {
                taukit::TauValue::Defined(_) => None,
                taukit::TauValue::Undefined(r) => Some(r),
            };
            rows.push(vec![
                db.lo.to_string(),
                db.hi.to_string(),
                tb.lo.to_string(),
                tb.hi.to_string(),
                cell(v.value()),
                reason_text(&reason),
                map.related[a][b].to_string(),
                map.unrelated[a][b].to_string(),
                map.low_support[a][b].to_string(),
            ]);
        }
    }
    csv_bytes(
        &[
            "distance_lo",
            "distance_hi",
            "lag_lo",
            "lag_hi",
            "tau",
            "status",
            "related",
            "unrelated",
            "low_support",
        ],
        rows,
    )
}
