//! Hand-written SVG: tau curves with envelopes and the distance x lag
//! heatmap. Every plot has a companion CSV holding the plotted numbers.

use std::fmt::Write as _;

use serde::Serialize;
use taukit::estimators::TauMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot: no defined values")]
    NothingToPlot,
}

/// Curves per panel; further curves go to panels stacked below.
pub const MAX_CURVES_PER_PANEL: usize = 3;
/// Envelopes from fewer replicates are drawn as whiskers, otherwise shaded.
pub const WHISKER_MAX_REPLICATES: usize = 100;

const WIDTH: f64 = 680.0;
const PANEL_HEIGHT: f64 = 300.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; MAX_CURVES_PER_PANEL] = ["#1f4e9c", "#c0392b", "#2e8b57"];

/// Lower and upper curves, undefined where `None`.
pub type Bounds = (Vec<Option<f64>>, Vec<Option<f64>>);

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<Option<f64>>,
    /// Lower and upper envelope per point.
    pub envelope: Option<Bounds>,
}

/// A vertical marker, optionally with a shaded interval.
#[derive(Debug, Clone)]
pub struct Marker {
    pub label: String,
    pub x: f64,
    pub interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct PlotOptions {
    pub log_tau: bool,
    pub whiskers: bool,
    pub x_label: String,
    pub caption: String,
    /// Embedded verbatim in the SVG `<metadata>` element.
    pub metadata: String,
    pub markers: Vec<Marker>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions with a 1, 2 or 5 step covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    if !(raw > 0.0 && raw.is_finite()) {
        return vec![lo];
    }
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

struct Frame {
    x_max: f64,
    y_lo: f64,
    y_hi: f64,
    log: bool,
    top: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x / self.x_max) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> Option<f64> {
        let t = if self.log {
            if y <= 0.0 {
                return None;
            }
            (y.log10() - self.y_lo) / (self.y_hi - self.y_lo)
        } else {
            (y - self.y_lo) / (self.y_hi - self.y_lo)
        };
        Some(self.top + PANEL_HEIGHT - t * PANEL_HEIGHT)
    }
}

fn y_range(values: &[f64], log: bool) -> (f64, f64) {
    let usable: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| v.is_finite() && (!log || *v > 0.0))
        .chain(std::iter::once(1.0))
        .collect();
    let max = usable.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if log {
        let min = usable.iter().copied().fold(f64::INFINITY, f64::min);
        ((min / 1.2).log10(), (max * 1.2).log10())
    } else {
        (0.0, max * 1.1)
    }
}

/// Splits indices of defined points into runs without gaps.
fn runs(defined: impl Iterator<Item = bool>) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut open = false;
    for (i, d) in defined.enumerate() {
        if d {
            if !open {
                out.push(Vec::new());
            }
            out.last_mut().expect("run opened").push(i);
        }
        open = d;
    }
    out
}

fn panel(svg: &mut String, series: &[Series], opts: &PlotOptions, frame: &Frame) {
    let (x0, x1) = (frame.px(0.0), frame.px(frame.x_max));
    let (y0, y1) = (frame.top + PANEL_HEIGHT, frame.top);
    // axes meet at the origin of the plotted range
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for t in ticks(0.0, frame.x_max) {
        let x = frame.px(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            y0 + 4.0,
            y0 + 16.0,
            fmt_tick(t)
        );
    }
    for t in ticks(frame.y_lo, frame.y_hi) {
        let (value, label) = if frame.log {
            (10f64.powf(t), fmt_tick(10f64.powf(t)))
        } else {
            (t, fmt_tick(t))
        };
        if frame.log && t.fract() != 0.0 {
            continue;
        }
        if let Some(y) = frame.py(value) {
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{label}</text>"#,
                x0 - 4.0,
                x0 - 6.0,
                y + 4.0
            );
        }
    }
    if let Some(y) = frame.py(1.0) {
        let _ = writeln!(
            svg,
            r##"<line class="reference" x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#555" stroke-dasharray="6,4"/>"##
        );
    }
    for m in &opts.markers {
        if let Some((lo, hi)) = m.interval {
            let _ = writeln!(
                svg,
                r##"<rect class="interval" x="{:.2}" y="{y1:.2}" width="{:.2}" height="{PANEL_HEIGHT:.2}" fill="#f0b429" fill-opacity="0.2"/>"##,
                frame.px(lo),
                (frame.px(hi) - frame.px(lo)).max(0.0)
            );
        }
        let x = frame.px(m.x);
        let _ = writeln!(
            svg,
            r##"<line class="marker" x1="{x:.2}" y1="{y1:.2}" x2="{x:.2}" y2="{y0:.2}" stroke="#b7791f" stroke-dasharray="2,3"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"##,
            x + 3.0,
            y1 + 12.0,
            esc(&m.label)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if let Some((lo, hi)) = &s.envelope {
            let pairs: Vec<Option<(f64, f64, f64)>> = (0..s.xs.len())
                .map(|i| match (lo[i].and_then(|v| frame.py(v)), hi[i].and_then(|v| frame.py(v))) {
                    (Some(a), Some(b)) if s.xs[i].is_finite() => Some((frame.px(s.xs[i]), a, b)),
                    _ => None,
                })
                .collect();
            if opts.whiskers {
                for (x, a, b) in pairs.iter().flatten() {
                    let _ = writeln!(
                        svg,
                        r#"<path class="whisker" d="M{x:.2},{a:.2} L{x:.2},{b:.2} M{:.2},{a:.2} L{:.2},{a:.2} M{:.2},{b:.2} L{:.2},{b:.2}" stroke="{color}" fill="none"/>"#,
                        x - 3.0,
                        x + 3.0,
                        x - 3.0,
                        x + 3.0
                    );
                }
            } else {
                for run in runs(pairs.iter().map(Option::is_some)) {
                    let mut d = String::new();
                    for (j, &i) in run.iter().enumerate() {
                        let (x, _, b) = pairs[i].expect("defined");
                        let _ = write!(d, "{}{x:.2},{b:.2} ", if j == 0 { "M" } else { "L" });
                    }
                    for &i in run.iter().rev() {
                        let (x, a, _) = pairs[i].expect("defined");
                        let _ = write!(d, "L{x:.2},{a:.2} ");
                    }
                    let _ = writeln!(
                        svg,
                        r#"<path class="band" d="{}Z" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                        d
                    );
                }
            }
        }
        let pts: Vec<Option<(f64, f64)>> = s
            .xs
            .iter()
            .zip(&s.ys)
            .map(|(&x, y)| match y.and_then(|v| frame.py(v)) {
                Some(py) if x.is_finite() => Some((frame.px(x), py)),
                _ => None,
            })
            .collect();
        for run in runs(pts.iter().map(Option::is_some)) {
            let mut d = String::new();
            for (j, &i) in run.iter().enumerate() {
                let (x, y) = pts[i].expect("defined");
                let _ = write!(d, "{}{x:.2},{y:.2} ", if j == 0 { "M" } else { "L" });
            }
            let _ = writeln!(
                svg,
                r#"<path class="curve" d="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                d.trim_end()
            );
        }
        for (x, y) in pts.iter().flatten() {
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{}</text>"#,
            x1 - 160.0,
            y1 + 14.0 + 14.0 * k as f64,
            esc(&s.label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        y0 + 34.0,
        esc(&opts.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        if frame.log { "tau (log scale)" } else { "tau" }
    );
}

fn header(svg: &mut String, height: f64, opts: &PlotOptions) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="0 0 {WIDTH} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, "<metadata>{}</metadata>", esc(&opts.metadata));
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

/// Line plot of one or more tau curves; panels hold at most
/// [`MAX_CURVES_PER_PANEL`] curves and share the axis ranges.
pub fn line_plot(series: &[Series], opts: &PlotOptions) -> Result<String, PlotError> {
    let usable = |v: &f64| v.is_finite() && (!opts.log_tau || *v > 0.0);
    if !series.iter().any(|s| s.ys.iter().flatten().any(usable)) {
        return Err(PlotError::NothingToPlot);
    }
    let mut values: Vec<f64> = Vec::new();
    for s in series {
        values.extend(s.ys.iter().flatten());
        if let Some((lo, hi)) = &s.envelope {
            values.extend(lo.iter().flatten());
            values.extend(hi.iter().flatten());
        }
    }
    let (y_lo, y_hi) = y_range(&values, opts.log_tau);
    let x_max = series
        .iter()
        .flat_map(|s| s.xs.iter().copied())
        .chain(opts.markers.iter().flat_map(|m| [m.x, m.interval.map_or(0.0, |i| i.1)]))
        .filter(|x| x.is_finite())
        .fold(0.0, f64::max);
    let x_max = if x_max > 0.0 { x_max } else { 1.0 };
    let chunks: Vec<&[Series]> = series.chunks(MAX_CURVES_PER_PANEL).collect();
    let caption_h = 24.0;
    let height = chunks.len() as f64 * (TOP + PANEL_HEIGHT + BOTTOM) + caption_h;
    let mut svg = String::new();
    header(&mut svg, height, opts);
    for (p, chunk) in chunks.iter().enumerate() {
        let frame = Frame {
            x_max,
            y_lo,
            y_hi,
            log: opts.log_tau,
            top: p as f64 * (TOP + PANEL_HEIGHT + BOTTOM) + TOP,
        };
        let _ = writeln!(svg, r#"<g class="panel" id="panel-{}">"#, p + 1);
        panel(&mut svg, chunk, opts, &frame);
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(
        svg,
        r#"<text class="caption" x="{LEFT}" y="{:.2}" font-size="11">{}</text>"#,
        height - 8.0,
        esc(&opts.caption)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[derive(Serialize)]
pub struct PlotRow<'a> {
    pub panel: usize,
    pub curve: &'a str,
    pub x: f64,
    pub tau: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

/// Rows behind [`line_plot`], in drawing order.
pub fn plot_rows(series: &[Series]) -> Vec<PlotRow<'_>> {
    let mut rows = Vec::new();
    for (k, s) in series.iter().enumerate() {
        for i in 0..s.xs.len() {
            rows.push(PlotRow {
                panel: k / MAX_CURVES_PER_PANEL + 1,
                curve: &s.label,
                x: s.xs[i],
                tau: s.ys[i],
                lo: s.envelope.as_ref().and_then(|e| e.0[i]),
                hi: s.envelope.as_ref().and_then(|e| e.1[i]),
            });
        }
    }
    rows
}

/// Diverging colour on `log(tau)`: blue below 1, white at 1, red above.
fn cell_color(v: f64, scale: f64) -> String {
    let t = (v.ln() / scale).clamp(-1.0, 1.0);
    let fade = |t: f64| (255.0 * (1.0 - t.abs())).round() as u8;
    if t >= 0.0 {
        format!("#ff{0:02x}{0:02x}", fade(t))
    } else {
        format!("#{0:02x}{0:02x}ff", fade(t))
    }
}

/// Heatmap of a distance x time-lag map. Undefined cells are grey and cells
/// with low support are drawn translucent.
pub fn heatmap(map: &TauMap, opts: &PlotOptions) -> Result<String, PlotError> {
    let defined: Vec<f64> = map
        .cells
        .iter()
        .flatten()
        .filter_map(|v| v.value())
        .filter(|v| *v > 0.0)
        .collect();
    if defined.is_empty() {
        return Err(PlotError::NothingToPlot);
    }
    let scale = defined.iter().map(|v| v.ln().abs()).fold(0.0, f64::max).max(f64::EPSILON);
    let (na, nb) = (map.distance_bands.len(), map.time_lag_bands.len());
    let plot_w = WIDTH - LEFT - RIGHT - 90.0;
    let plot_h = PANEL_HEIGHT + 60.0;
    let (cw, ch) = (plot_w / na as f64, plot_h / nb as f64);
    let height = TOP + plot_h + BOTTOM + 24.0;
    let mut svg = String::new();
    header(&mut svg, height, opts);
    let y_base = TOP + plot_h;
    for a in 0..na {
        for b in 0..nb {
            let (x, y) = (LEFT + a as f64 * cw, y_base - (b + 1) as f64 * ch);
            let (fill, opacity) = match map.cells[a][b].value() {
                Some(v) if v > 0.0 => (cell_color(v, scale), if map.low_support[a][b] { 0.4 } else { 1.0 }),
                Some(_) => ("#0000ff".to_string(), if map.low_support[a][b] { 0.4 } else { 1.0 }),
                None => ("#cccccc".to_string(), 1.0),
            };
            let _ = writeln!(
                svg,
                r#"<rect class="cell" x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}" fill-opacity="{opacity}" stroke="white" stroke-width="0.5"/>"#
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT:.2},{TOP:.2} L{LEFT:.2},{y_base:.2} L{:.2},{y_base:.2}" fill="none" stroke="black"/>"#,
        LEFT + plot_w
    );
    let label_every = na.div_ceil(10).max(1);
    for (a, band) in map.distance_bands.bands().iter().enumerate() {
        if a % label_every == 0 || a + 1 == na {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                LEFT + (a as f64 + 0.5) * cw,
                y_base + 14.0,
                fmt_tick(band.lo)
            );
        }
    }
    let label_every = nb.div_ceil(10).max(1);
    for (b, band) in map.time_lag_bands.bands().iter().enumerate() {
        if b % label_every == 0 || b + 1 == nb {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y_base - (b as f64 + 0.5) * ch + 3.0,
                fmt_tick(band.lo)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        y_base + 32.0,
        esc(&opts.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {0:.2})">time lag (lower band edge)</text>"#,
        TOP + plot_h / 2.0
    );
    let lx = LEFT + plot_w + 20.0;
    let legend = [
        (cell_color(scale.exp(), scale), format!("tau = {}", fmt_tick(scale.exp()))),
        ("#ffffff".to_string(), "tau = 1".to_string()),
        (cell_color((-scale).exp(), scale), format!("tau = {}", fmt_tick((-scale).exp()))),
        ("#cccccc".to_string(), "undefined".to_string()),
    ];
    for (i, (fill, text)) in legend.iter().enumerate() {
        let y = TOP + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.2}" y="{y:.2}" width="12" height="12" fill="{fill}" stroke="black" stroke-width="0.5"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            lx + 16.0,
            y + 10.0,
            esc(text)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="caption" x="{LEFT}" y="{:.2}" font-size="11">{}</text>"#,
        height - 8.0,
        esc(&opts.caption)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}
