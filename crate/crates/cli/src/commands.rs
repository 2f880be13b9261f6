//! Subcommand pipelines: load, estimate, resample, then write artifacts.

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use taukit::estimators::{estimate, tau_rate, tau_spacetime_map, TauMap};
use taukit::inference::{
    bootstrap_curves, bootstrap_rate_curves, clustering_range, global_envelope_test, legacy_range_azman,
    permutation_null_curves, pointwise_envelope, MIN_ENVELOPE_REPLICATES, RNG_NAME,
};
use taukit::model::io::{load_case_data, load_episode_panel, write_case_data, LoadOptions};
use taukit::model::InfectiousWindow;
use taukit::pairing::{pair_distances, tally_rate};
use taukit::synth::{
    simulate_epidemic, simulate_null, EpidemicConfig, Kernel, Layout, Observation, Region, SERIAL_INTERVAL_FAMILY,
};
use taukit::{
    Axis, BandSet, BandSpec, CaseDataset, Crossing, CrsMode, CurveBundle, EpisodePanel, Estimator,
    InapplicablePolicy, InferenceError, PanelOptions, PlotConvention, RelatednessRule, TauCurve,
};

use crate::error::{config, CliError};
use crate::plot::{self, Marker, PlotOptions, Series, WHISKER_MAX_REPLICATES};
use crate::report::{self, write_file, EnvelopeOut, GlobalTestOut, LegacyOut, Meta, RangeOut, ResultDoc};
use crate::{
    BandsArgs, ConventionArg, CrossingArg, CurveArgs, EstimatorArg, Format, InputArgs, KernelArg, MapArgs, ModelArg,
    RangeArgs, RuleArgs, SimulateArgs, TestArgs,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "TAUKIT_SEED";
/// Tolerance of the all-distance consistency check.
const IDENTITY_TOLERANCE: f64 = 1e-12;

const DEFAULT_BOOTSTRAP_R: usize = 500;
const DEFAULT_PERMUTATION_R: usize = 999;

pub struct Output {
    pub dir: PathBuf,
    pub format: Format,
}

fn resolve_seed(arg: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = arg {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn parse_window(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || config(format!("--relate expects T1:T2, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

fn build_rule(args: &RuleArgs) -> Result<RelatednessRule, CliError> {
    let mut parts = Vec::new();
    if let Some(w) = &args.relate {
        let (a, b) = parse_window(w)?;
        parts.push(RelatednessRule::temporal(a, b)?);
    }
    if let Some(m) = &args.same_mark {
        parts.push(RelatednessRule::MarkEquality { mark: m.clone() });
    }
    if let Some(m) = &args.prevalent_mark {
        parts.push(RelatednessRule::PrevalentIncident { mark: m.clone() });
    }
    let rule = match parts.len() {
        0 => return Err(config("give a relatedness rule: --relate, --same-mark or --prevalent-mark")),
        1 => parts.pop().expect("one part"),
        _ => RelatednessRule::Conjunction(parts),
    };
    rule.validate()?;
    Ok(rule)
}

fn time_window(rule: &RelatednessRule) -> Option<[f64; 2]> {
    match rule {
        RelatednessRule::TemporalInterval { min_days, max_days } => Some([*min_days, *max_days]),
        RelatednessRule::Conjunction(parts) => parts.iter().find_map(time_window),
        _ => None,
    }
}

fn estimator(arg: EstimatorArg) -> Estimator {
    match arg {
        EstimatorArg::Odds => Estimator::Odds,
        EstimatorArg::Prev => Estimator::Prev,
        EstimatorArg::Rate => Estimator::Rate,
    }
}

fn crs(geographic: bool) -> CrsMode {
    if geographic {
        CrsMode::Geographic
    } else {
        CrsMode::Planar
    }
}

fn load_cases(path: &Option<PathBuf>, geographic: bool) -> Result<CaseDataset, CliError> {
    let path = path.as_ref().ok_or_else(|| config("--cases is required"))?;
    let opts = LoadOptions {
        crs: crs(geographic),
        ..LoadOptions::default()
    };
    Ok(load_case_data(path, &opts)?)
}

enum Data {
    Cases(CaseDataset),
    Panel(EpisodePanel),
}

impl Data {
    fn load(input: &InputArgs, est: Estimator) -> Result<Self, CliError> {
        if est != Estimator::Rate {
            return Ok(Data::Cases(load_cases(&input.cases, input.geographic)?));
        }
        let (Some(persons), Some(episodes)) = (&input.persons, &input.episodes) else {
            return Err(config("the rate estimator needs --episodes and --persons"));
        };
        let options = PanelOptions {
            immunizing: input.immunizing,
            infectious_window: input
                .infectious_days
                .map_or(InfectiousWindow::UseRecovery, InfectiousWindow::FixedDuration),
            susceptibility_delay: input.susceptibility_delay,
            crs: crs(input.geographic),
        };
        Ok(Data::Panel(load_episode_panel(
            persons,
            episodes,
            input.relocations.as_deref(),
            options,
        )?))
    }

    fn bands(&self, spec: &str, est: Estimator) -> Result<BandSet, CliError> {
        let spec = BandSpec::from_str(spec)?;
        Ok(match self {
            Data::Cases(ds) => spec.resolve(ds, est.pair_mode())?,
            Data::Panel(_) => spec
                .resolve_fixed()
                .map_err(|_| config("the rate estimator needs bands that do not depend on the data"))?,
        })
    }

    fn curve(
        &self,
        bands: &BandSet,
        rule: &RelatednessRule,
        est: Estimator,
        policy: InapplicablePolicy,
    ) -> Result<TauCurve, CliError> {
        Ok(match self {
            Data::Cases(ds) => estimate(ds, bands, rule, est, policy)?,
            Data::Panel(panel) => tau_rate(&tally_rate(panel, bands, rule))?,
        })
    }

    fn bootstrap(
        &self,
        bands: &BandSet,
        rule: &RelatednessRule,
        est: Estimator,
        r: usize,
        seed: u64,
    ) -> Result<CurveBundle, CliError> {
        Ok(match self {
            Data::Cases(ds) => bootstrap_curves(ds, bands, rule, est, r, seed)?,
            Data::Panel(panel) => bootstrap_rate_curves(panel, bands, rule, r, seed)?,
        })
    }

    fn counts(&self) -> (usize, usize, &'static str) {
        match self {
            Data::Cases(ds) => (ds.case_count(), ds.len(), crs_name(ds.crs())),
            Data::Panel(p) => (p.episode_count(), p.persons().len(), crs_name(p.crs())),
        }
    }
}

fn crs_name(c: CrsMode) -> &'static str {
    match c {
        CrsMode::Planar => "planar",
        CrsMode::Geographic => "geographic",
    }
}

/// A curve with its inputs, ready for resampling.
struct Analysis {
    data: Data,
    rule: RelatednessRule,
    est: Estimator,
    bands: BandSet,
    curve: TauCurve,
    seed: u64,
    warnings: Vec<String>,
}

fn analyse(args: &CurveArgs) -> Result<Analysis, CliError> {
    let est = estimator(args.estimator);
    let rule = build_rule(&args.rule)?;
    let seed = resolve_seed(args.seed)?;
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(config(format!("--level {} must lie in (0, 1)", args.level)));
    }
    let policy = if args.exclude_inapplicable {
        if args.replicates.is_some_and(|r| r > 0) {
            return Err(config("--exclude-inapplicable is not available with replicates"));
        }
        InapplicablePolicy::Exclude
    } else {
        InapplicablePolicy::CountAsUnrelated
    };
    let data = Data::load(&args.input, est)?;
    let bands = data.bands(&args.bands, est)?;
    let mut curve = data.curve(&bands, &rule, est, policy)?;
    curve.convention = match args.convention {
        ConventionArg::BandEnd => PlotConvention::BandEnd,
        ConventionArg::Midpoint => PlotConvention::BandMidpoint,
    };
    if !curve.values.iter().any(|v| v.is_defined()) {
        return Err(CliError::AllUndefined);
    }
    let mut warnings = Vec::new();
    let global = data.curve(&BandSet::global(Axis::Distance), &rule, est, policy)?;
    match global.values[0].value() {
        Some(v) if (v - 1.0).abs() <= IDENTITY_TOLERANCE => {}
        other => warnings.push(format!(
            "consistency check failed: tau over all distances is {other:?}, expected 1"
        )),
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Analysis {
        data,
        rule,
        est,
        bands,
        curve,
        seed,
        warnings,
    })
}

fn meta(a: &Analysis, r: usize, kind: Option<&'static str>) -> Meta {
    let (n_cases, n_units, crs) = a.data.counts();
    Meta {
        seed: a.seed,
        r,
        rng: RNG_NAME,
        version: VERSION,
        replicate_kind: kind,
        time_window: time_window(&a.rule),
        convention: match a.curve.convention {
            PlotConvention::BandEnd => "band_end",
            PlotConvention::BandMidpoint => "band_midpoint",
        },
        reference_label: a.curve.reference_label(),
        crs,
        n_cases,
        n_units,
    }
}

#[derive(Serialize)]
struct FigureMeta<'a> {
    estimator: &'a str,
    #[serde(rename = "R")]
    r: usize,
    envelope_level: Option<f64>,
    envelope_type: &'a str,
    relatedness: &'a str,
    time_window: Option<[f64; 2]>,
}

fn figure(doc: &ResultDoc, envelope_type: &str, log_tau: bool, markers: Vec<Marker>) -> PlotOptions {
    let level = doc
        .envelope
        .as_ref()
        .map(|e| e.level)
        .or(doc.global_test.as_ref().map(|t| 1.0 - t.alpha));
    let meta = FigureMeta {
        estimator: doc.estimator,
        r: doc.meta.r,
        envelope_level: level,
        envelope_type,
        relatedness: &doc.relatedness,
        time_window: doc.meta.time_window,
    };
    let level_text = level.map(|l| format!("{:.0}% ", 100.0 * l)).unwrap_or_default();
    PlotOptions {
        log_tau,
        whiskers: doc.meta.r < WHISKER_MAX_REPLICATES,
        x_label: format!("distance (m), band {}", doc.meta.convention.replace('_', " ")),
        caption: format!(
            "tau_{}; {level_text}{envelope_type}, R = {}; related if {}",
            doc.estimator, doc.meta.r, doc.relatedness
        ),
        metadata: serde_json::to_string(&meta).expect("figure metadata serialises"),
        markers,
    }
}

fn write_curve_outputs(
    out: &Output,
    doc: &ResultDoc,
    envelope: Option<plot::Bounds>,
    opts: &PlotOptions,
) -> Result<(), CliError> {
    let series = [Series {
        label: format!("tau_{}", doc.estimator),
        xs: doc.x.clone(),
        ys: doc.tau.clone(),
        envelope,
    }];
    let svg = plot::line_plot(&series, opts)?;
    if out.format.json() {
        write_file(&out.dir, "result.json", report::to_json(doc))?;
    }
    if out.format.csv() {
        write_file(&out.dir, "curve.csv", report::curve_csv(doc))?;
    }
    write_file(&out.dir, "curve.svg", svg)?;
    write_file(&out.dir, "curve_plot.csv", report::plot_csv(&plot::plot_rows(&series)))
}

fn bootstrap_envelope(a: &Analysis, r: usize, level: f64, warnings: &mut Vec<String>) -> Result<Option<(CurveBundle, Option<taukit::Envelope>)>, CliError> {
    if r == 0 {
        return Ok(None);
    }
    let bundle = a.data.bootstrap(&a.bands, &a.rule, a.est, r, a.seed)?;
    let env = if r >= MIN_ENVELOPE_REPLICATES {
        Some(pointwise_envelope(&bundle, level)?)
    } else {
        warnings.push(format!("no envelope: {r} replicates, at least {MIN_ENVELOPE_REPLICATES} needed"));
        None
    };
    Ok(Some((bundle, env)))
}

pub fn tau(args: &CurveArgs, out: &Output) -> Result<(), CliError> {
    let a = analyse(args)?;
    let r = args.replicates.unwrap_or(0);
    let mut warnings = a.warnings.clone();
    let boot = bootstrap_envelope(&a, r, args.level, &mut warnings)?;
    let mut doc = ResultDoc::new("tau", &a.curve, a.rule.describe(), meta(&a, r, (r > 0).then_some("bootstrap")));
    let env = boot.as_ref().and_then(|(_, e)| e.as_ref());
    doc.envelope = env.map(EnvelopeOut::from);
    doc.warnings.extend(warnings);
    let opts = figure(&doc, "pointwise bootstrap percentile envelope", args.log_tau, Vec::new());
    write_curve_outputs(out, &doc, env.map(|e| (e.lo.clone(), e.hi.clone())), &opts)
}

pub fn range(args: &RangeArgs, out: &Output) -> Result<(), CliError> {
    let a = analyse(&args.curve)?;
    let r = args.curve.replicates.unwrap_or(DEFAULT_BOOTSTRAP_R);
    if r == 0 {
        return Err(config("range estimation needs --R of at least 1"));
    }
    let crossing = match args.crossing {
        CrossingArg::First => Crossing::First,
        CrossingArg::Last => Crossing::Last,
    };
    let mut warnings = a.warnings.clone();
    let (bundle, env) = bootstrap_envelope(&a, r, args.curve.level, &mut warnings)?.expect("r > 0");
    let mut doc = ResultDoc::new("range", &a.curve, a.rule.describe(), meta(&a, r, Some("bootstrap")));
    let mut markers = Vec::new();
    match clustering_range(&bundle, args.curve.level, crossing) {
        Ok(range) => {
            markers.push(Marker {
                label: format!("range {:.1}", range.point),
                x: range.point,
                interval: Some((range.lo, range.hi)),
            });
            doc.range = Some(RangeOut::from(&range));
        }
        Err(InferenceError::AllCensored { replicates }) => warnings.push(format!(
            "range censored: all {replicates} replicate curves stay above 1 over every band"
        )),
        Err(e) => return Err(e.into()),
    }
    let other = match crossing {
        Crossing::First => Crossing::Last,
        Crossing::Last => Crossing::First,
    };
    match clustering_range(&bundle, args.curve.level, other) {
        Ok(alt) => log::info!("{other:?} crossing: {:.3} [{:.3}, {:.3}]", alt.point, alt.lo, alt.hi),
        Err(e) => log::info!("{other:?} crossing: {e}"),
    }
    if let Some(env) = &env {
        match legacy_range_azman(&a.curve, env, &bundle) {
            Ok(legacy) => {
                markers.push(Marker {
                    label: format!("legacy {:.1}", legacy.distance),
                    x: legacy.distance,
                    interval: None,
                });
                doc.legacy_range = Some(LegacyOut::from(&legacy));
            }
            Err(InferenceError::NoCrossing) => warnings.push("legacy heuristic: neither criterion triggers".into()),
            Err(e) => return Err(e.into()),
        }
    }
    doc.envelope = env.as_ref().map(EnvelopeOut::from);
    doc.warnings.extend(warnings);
    let opts = figure(&doc, "pointwise bootstrap percentile envelope", args.curve.log_tau, markers);
    write_curve_outputs(out, &doc, env.map(|e| (e.lo, e.hi)), &opts)
}

pub fn test(args: &TestArgs, out: &Output) -> Result<(), CliError> {
    let a = analyse(&args.curve)?;
    let Data::Cases(ds) = &a.data else {
        return Err(InferenceError::EstimatorNotPermutable(a.est.name()).into());
    };
    let r = args.curve.replicates.unwrap_or(DEFAULT_PERMUTATION_R);
    let null = permutation_null_curves(ds, &a.bands, &a.rule, a.est, r, a.seed)?;
    let result = global_envelope_test(&a.curve, &null, args.alpha)?;
    let mut doc = ResultDoc::new("test", &a.curve, a.rule.describe(), meta(&a, r, Some("permutation")));
    doc.global_test = Some(GlobalTestOut::from(&result));
    doc.warnings.extend(a.warnings.iter().cloned());
    let opts = figure(&doc, "global rank envelope", args.curve.log_tau, Vec::new());
    write_curve_outputs(out, &doc, Some((result.global_lo.clone(), result.global_hi.clone())), &opts)
}

#[derive(Serialize)]
struct MapDoc<'a> {
    distance_bands: Vec<report::BandOut>,
    lag_bands: Vec<report::BandOut>,
    tau: Vec<Vec<Option<f64>>>,
    related: &'a [Vec<u64>],
    unrelated: &'a [Vec<u64>],
    low_support: &'a [Vec<bool>],
    min_pairs: u64,
    version: &'static str,
}

fn map_doc(m: &TauMap) -> MapDoc<'_> {
    MapDoc {
        distance_bands: m.distance_bands.bands().iter().map(Into::into).collect(),
        lag_bands: m.time_lag_bands.bands().iter().map(Into::into).collect(),
        tau: m.cells.iter().map(|row| row.iter().map(|v| v.value()).collect()).collect(),
        related: &m.related,
        unrelated: &m.unrelated,
        low_support: &m.low_support,
        min_pairs: m.min_pairs,
        version: VERSION,
    }
}

pub fn map(args: &MapArgs, out: &Output) -> Result<(), CliError> {
    let ds = load_cases(&Some(args.cases.clone()), args.geographic)?;
    let dbands = BandSpec::from_str(&args.dbands)?.resolve(&ds, Estimator::Odds.pair_mode())?;
    let tbands = BandSpec::from_str(&args.tbands)?
        .resolve_fixed()
        .map_err(|_| config("--tbands must not depend on the data"))?
        .on_axis(Axis::Time);
    let m = tau_spacetime_map(&ds, &dbands, &tbands, args.min_pairs)?;
    if !m.cells.iter().flatten().any(|v| v.is_defined()) {
        return Err(CliError::AllUndefined);
    }
    let opts = PlotOptions {
        x_label: "distance (m, lower band edge)".into(),
        caption: format!(
            "tau_odds per distance band and lag band; translucent cells hold fewer than {} related pairs",
            args.min_pairs
        ),
        metadata: serde_json::json!({ "estimator": "odds", "R": 0, "min_pairs": args.min_pairs }).to_string(),
        ..PlotOptions::default()
    };
    let svg = plot::heatmap(&m, &opts)?;
    if out.format.csv() {
        write_file(&out.dir, "map.csv", report::map_csv(&m))?;
    }
    if out.format.json() {
        write_file(&out.dir, "map.json", report::to_json(&map_doc(&m)))?;
    }
    write_file(&out.dir, "heatmap.svg", svg)
}

fn epidemic_config(args: &SimulateArgs) -> Result<EpidemicConfig, CliError> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|source| {
            CliError::Data(taukit::DataError::Io {
                path: path.display().to_string(),
                source,
            })
        })?;
        return serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())));
    }
    Ok(EpidemicConfig {
        region: Region::square(args.side)?,
        population_n: args.population,
        layout: if args.clusters == 0 {
            Layout::Uniform
        } else {
            Layout::Clustered {
                clusters: args.clusters,
                sd: args.cluster_sd,
            }
        },
        kernel: match args.kernel {
            KernelArg::Gaussian => Kernel::Gaussian { sd: args.kernel_param },
            KernelArg::Exponential => Kernel::Exponential { rate: args.kernel_param },
            KernelArg::Disc => Kernel::UniformDisc {
                radius: args.kernel_param,
            },
        },
        serial_interval_mean: args.si_mean,
        serial_interval_sd: args.si_sd,
        r_e: args.r_e,
        initial_cases: args.initial,
        horizon: args.horizon,
        observation: args.observe.map_or(Observation::Full, |p| Observation::RandomFraction { p }),
        noncases: args.noncases,
    })
}

pub fn simulate(args: &SimulateArgs, out: &Output) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let (dataset, info) = match args.model {
        ModelArg::Null => {
            let ds = simulate_null(args.n, Region::square(args.side)?, args.horizon, seed)?;
            let info = serde_json::json!({
                "model": "null",
                "seed": seed,
                "n": args.n,
                "side": args.side,
                "horizon": args.horizon,
                "version": VERSION,
            });
            (ds, info)
        }
        ModelArg::Epidemic => {
            let cfg = epidemic_config(args)?;
            let sim = simulate_epidemic(&cfg, seed)?;
            for w in &sim.warnings {
                log::warn!("{w:?}");
            }
            write_file(&out.dir, "tree.json", report::to_json(&sim.tree))?;
            let info = serde_json::json!({
                "model": "epidemic",
                "seed": seed,
                "config": cfg,
                "serial_interval": SERIAL_INTERVAL_FAMILY,
                "final_size": sim.final_size(),
                "observed_cases": sim.dataset.case_count(),
                "warnings": sim.warnings,
                "version": VERSION,
            });
            (sim.dataset, info)
        }
    };
    let mut csv = Vec::new();
    write_case_data(&dataset, &mut csv).map_err(|e| config(format!("cannot encode cases: {e}")))?;
    write_file(&out.dir, "cases.csv", csv)?;
    write_file(&out.dir, "simulation.json", report::to_json(&info))
}

#[derive(Serialize)]
struct BandPreview {
    lo: f64,
    hi: Option<f64>,
    pairs: Option<usize>,
}

pub fn bands(args: &BandsArgs, out: &Output) -> Result<(), CliError> {
    let spec = BandSpec::from_str(&args.bands)?;
    let mode = estimator(args.estimator).pair_mode();
    let (set, distances) = match &args.cases {
        Some(_) => {
            let ds = load_cases(&args.cases, args.geographic)?;
            (spec.resolve(&ds, mode)?, Some(pair_distances(&ds, mode)))
        }
        None => (
            spec.resolve_fixed()
                .map_err(|_| config("this band spec needs --cases"))?,
            None,
        ),
    };
    let rows: Vec<BandPreview> = set
        .bands()
        .iter()
        .map(|b| BandPreview {
            lo: b.lo,
            hi: b.hi.is_finite().then_some(b.hi),
            pairs: distances.as_ref().map(|d| d.iter().filter(|&&x| b.contains(x)).count()),
        })
        .collect();
    let text = match out.format {
        Format::Json => report::to_json(&rows),
        Format::Csv => {
            let mut s = String::from("lo,hi,pairs\n");
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{}\n",
                    r.lo,
                    r.hi.map_or("inf".into(), |h| h.to_string()),
                    r.pairs.map(|p| p.to_string()).unwrap_or_default()
                ));
            }
            s
        }
        Format::Both => {
            let mut s = format!("{} band(s), {:?}\n", rows.len(), set.style());
            for (i, r) in rows.iter().enumerate() {
                let hi = r.hi.map_or("inf".into(), |h| h.to_string());
                let pairs = r.pairs.map(|p| format!("  {p} pairs")).unwrap_or_default();
                s.push_str(&format!("{:>3}  [{}, {hi}){pairs}\n", i + 1, r.lo));
            }
            s
        }
    };
    print!("{text}");
    Ok(())
}
