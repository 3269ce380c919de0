//! SVG line plots of report CSVs: mean ± std across seeds, log-scale
//! vertical axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use viper_core::eval::SuboptReport;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Subopt,
    Latency,
}

impl Metric {
    fn value(self, r: &SuboptReport) -> f64 {
        match self {
            Metric::Subopt => r.subopt,
            Metric::Latency => r.select_us_median,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Subopt => "suboptimality",
            Metric::Latency => "median selection latency (µs)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum XAxis {
    K,
    Members,
    Width,
}

impl XAxis {
    fn of(self, r: &SuboptReport) -> Option<f64> {
        match self {
            XAxis::K => Some(r.k as f64),
            XAxis::Members => r.members.map(|m| m as f64),
            XAxis::Width => r.width.map(|m| m as f64),
        }
    }

    fn label(self) -> &'static str {
        match self {
            XAxis::K => "K",
            XAxis::Members => "M",
            XAxis::Width => "m",
        }
    }
}

/// Varying quantity on the horizontal axis: `K` unless it is constant,
/// then `M`, then `m`.
fn pick_axis(rows: &[SuboptReport]) -> XAxis {
    let distinct = |f: &dyn Fn(&SuboptReport) -> Option<u64>| {
        let mut v: Vec<u64> = rows.iter().filter_map(f).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    if distinct(&|r| Some(r.k as u64)) > 1 {
        XAxis::K
    } else if distinct(&|r| r.members.map(|m| m as u64)) > 1 {
        XAxis::Members
    } else if distinct(&|r| r.width.map(|m| m as u64)) > 1 {
        XAxis::Width
    } else {
        XAxis::K
    }
}

/// Hyperparameters identifying a curve, except the one on the x axis.
fn config_key(r: &SuboptReport, axis: XAxis) -> String {
    let f = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    format!(
        "{}|m={}|M={}|sigma={}|beta={}",
        r.algo,
        if axis == XAxis::Width { "-".into() } else { f(r.width.map(|v| v.to_string())) },
        if axis == XAxis::Members { "-".into() } else { f(r.members.map(|v| v.to_string())) },
        f(r.sigma.map(|v| v.to_string())),
        f(r.beta.map(|v| v.to_string())),
    )
}

pub struct Curve {
    pub label: String,
    /// `(x, mean, std)` sorted by `x`.
    pub points: Vec<(f64, f64, f64)>,
}

/// One curve per algorithm, using the hyperparameters with the lowest
/// average of the metric over the x axis.
pub fn curves(rows: &[SuboptReport], metric: Metric) -> (Vec<Curve>, &'static str) {
    let axis = pick_axis(rows);
    let mut groups: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let (Some(x), y) = (axis.of(r), metric.value(r)) else { continue };
        if !y.is_finite() {
            continue;
        }
        groups.entry(config_key(r, axis)).or_default().entry(x.to_bits()).or_default().push(y);
    }
    let mut best: BTreeMap<String, (f64, Curve)> = BTreeMap::new();
    for (key, by_x) in groups {
        let mut points: Vec<(f64, f64, f64)> = by_x
            .into_iter()
            .map(|(xb, ys)| {
                let n = ys.len() as f64;
                let mean = ys.iter().sum::<f64>() / n;
                let var = if ys.len() > 1 { ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                (f64::from_bits(xb), mean, var.sqrt())
            })
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let score = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
        let algo = key.split('|').next().unwrap_or_default().to_string();
        let label = key.replace("|m=-", "").replace("|M=-", "").replace("|sigma=-", "").replace("|beta=-", "");
        let label = label.replace('|', " ");
        if best.get(&algo).is_none_or(|(s, _)| score < *s) {
            best.insert(algo, (score, Curve { label, points }));
        }
    }
    (best.into_values().map(|(_, c)| c).collect(), axis.label())
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render the rows as an SVG document; `None` when nothing is plottable.
pub fn render(rows: &[SuboptReport], metric: Metric, title: &str) -> Option<String> {
    let (curves, xlabel) = curves(rows, metric);
    let pts: Vec<&(f64, f64, f64)> = curves.iter().flat_map(|c| &c.points).collect();
    if pts.is_empty() {
        return None;
    }
    let (xmin, xmax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let positive: Vec<f64> = pts.iter().flat_map(|p| [p.1 - p.2, p.1, p.1 + p.2]).filter(|v| *v > 0.0).collect();
    let ymax = positive.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    let ymin = positive.iter().cloned().fold(f64::MAX, f64::min).min(ymax / 10.0).max(ymax * 1e-8);
    let (lo, hi) = (ymin.log10().floor(), ymax.log10().ceil().max(ymin.log10().floor() + 1.0));
    let floor = 10f64.powf(lo);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| if xmax > xmin { LEFT + (x - xmin) / (xmax - xmin) * pw } else { LEFT + pw / 2.0 };
    let sy = |y: f64| TOP + (hi - y.max(floor).log10()) / (hi - lo) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, esc(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for e in (lo as i32)..=(hi as i32) {
        let y = sy(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let ticks: Vec<f64> = if xs.len() <= 10 { xs } else { (0..=4).map(|i| xmin + (xmax - xmin) * i as f64 / 4.0).collect() };
    for x in ticks {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(x), TOP + ph + 18.0, x);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#, LEFT + pw / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{} (log scale)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        metric.label()
    );
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper: Vec<String> = c.points.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1 + p.2))).collect();
        let lower: Vec<String> = c.points.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1 - p.2))).collect();
        let _ = writeln!(s, r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, upper.join(" "), lower.join(" "));
        let line: Vec<String> = c.points.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 10.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{}</text>"#, lx + 22.0, ly + 4.0, esc(&c.label));
    }
    s.push_str("</svg>\n");
    Some(s)
}
