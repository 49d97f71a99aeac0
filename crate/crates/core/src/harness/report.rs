use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::Variant;

pub const SWEEP_HEADER: &str = "variant,per_class_size,seed,epoch,train_error,test_error";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variant: Variant,
    pub per_class_size: usize,
    pub seed: u64,
    pub epoch: usize,
    pub train_error: f64,
    pub test_error: f64,
}

pub fn results_to_csv(results: &[SweepResult]) -> Result<String> {
    if results.is_empty() {
        return Err(Error::EmptyInput("sweep results"));
    }
    let mut s = String::with_capacity(64 * (results.len() + 1));
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in results {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.variant, r.per_class_size, r.seed, r.epoch, r.train_error, r.test_error
        )
        .expect("writing to a String");
    }
    Ok(s)
}

pub fn emit_csv(results: &[SweepResult], path: &Path) -> Result<()> {
    let text = results_to_csv(results)?;
    write_file(path, &text)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// What the horizontal axis of a results plot shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    PerClassSize,
    Epoch,
}

/// Named series of `(x, y)` points with axis labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

/// Mean test error per variant, averaged over seeds, against `x_axis`.
/// One series per variant.
pub fn sweep_plot(results: &[SweepResult], x_axis: XAxis) -> Result<LinePlot> {
    if results.is_empty() {
        return Err(Error::EmptyInput("sweep results"));
    }
    let mut groups: BTreeMap<Variant, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in results {
        let x = match x_axis {
            XAxis::PerClassSize => r.per_class_size,
            XAxis::Epoch => r.epoch,
        };
        let slot = groups.entry(r.variant).or_default().entry(x).or_insert((0.0, 0));
        slot.0 += r.test_error;
        slot.1 += 1;
    }
    let series = groups
        .into_iter()
        .map(|(v, pts)| {
            let pts = pts.into_iter().map(|(x, (sum, n))| (x as f64, sum / n as f64)).collect();
            (v.to_string(), pts)
        })
        .collect();
    let (title, x_label) = match x_axis {
        XAxis::PerClassSize => ("Test error by training size", "training images per class"),
        XAxis::Epoch => ("Test error by epoch", "epoch"),
    };
    Ok(LinePlot {
        title: title.into(),
        x_label: x_label.into(),
        y_label: "test error".into(),
        series,
    })
}

pub fn emit_svg_lineplot(results: &[SweepResult], x_axis: XAxis, path: &Path) -> Result<()> {
    let svg = sweep_plot(results, x_axis)?.to_svg()?;
    write_file(path, &svg)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const TICKS: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl LinePlot {
    /// Renders the plot as a standalone SVG document. Output depends only on
    /// the plot contents.
    pub fn to_svg(&self) -> Result<String> {
        let points = || self.series.iter().flat_map(|(_, p)| p.iter());
        if points().next().is_none() {
            return Err(Error::EmptyInput("plot series"));
        }
        if points().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Config("plot points must be finite".into()));
        }
        let (x0, x1) = span(points().map(|p| p.0));
        let (y0, y1) = {
            let (lo, hi) = span(points().map(|p| p.1));
            (lo.min(0.0), hi)
        };
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            w,
            r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
            TOP + plot_h,
            LEFT + plot_w,
            TOP + plot_h,
            TOP + plot_h
        );
        for i in 0..=TICKS {
            let t = i as f64 / TICKS as f64;
            let xv = x0 + t * (x1 - x0);
            let yv = y0 + t * (y1 - y0);
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                sx(xv),
                TOP + plot_h + 18.0,
                tick_label(xv)
            );
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                sy(yv) + 4.0,
                tick_label(yv)
            );
        }
        let _ = writeln!(
            w,
            r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            w,
            r#"<text class="y-label" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        for (i, (name, pts)) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                w,
                r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                escape(name),
                coords.join(" ")
            );
            let ly = TOP + 10.0 + 20.0 * i as f64;
            let lx = WIDTH - RIGHT + 16.0;
            let _ = writeln!(
                w,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 10.0 || v.fract().abs() < 1e-9 && v.abs() >= 1.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}
