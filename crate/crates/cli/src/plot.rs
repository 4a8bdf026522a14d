//! Dependency-free SVG rendering for run curves and histograms.
//!
//! Charts are plain SVG text so headless environments need no graphics
//! stack; the CSVs remain the primary artifacts.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const SERIES_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn finite_points(s: &Series) -> impl Iterator<Item = (f64, f64)> + '_ {
    s.points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs: Vec<f64> = series.iter().flat_map(|s| finite_points(s).map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| finite_points(s).map(|p| p.1)).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);

    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0).max(1e-300) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0).max(1e-300) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = header(title);
    svg.push_str(&axes(x_label, y_label, x0, x1, y0, y1, &px, &py));
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let pts: Vec<String> = finite_points(s)
            .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if !pts.is_empty() {
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
                pts.join(" ")
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" fill=\"{color}\" font-size=\"12\">{}</text>\n",
            MARGIN_L + 8.0,
            MARGIN_T + 16.0 + 16.0 * i as f64,
            escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn histogram(title: &str, x_label: &str, values: &[f64], n_bins: usize) -> String {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = bounds(&finite);
    let n_bins = n_bins.max(1);
    let width = (hi - lo).max(1e-12) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in &finite {
        let bin = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let max_count = counts.iter().copied().max().unwrap_or(1).max(1) as f64;

    let px = |x: f64| MARGIN_L + (x - lo) / (hi - lo).max(1e-300) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |c: f64| HEIGHT - MARGIN_B - c / max_count * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = header(title);
    svg.push_str(&axes(x_label, "count", lo, hi, 0.0, max_count, &px, &py));
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x = lo + i as f64 * width;
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#1f77b4\" opacity=\"0.8\"/>\n",
            px(x),
            py(c as f64),
            (px(x + width) - px(x)).max(1.0),
            (HEIGHT - MARGIN_B - py(c as f64)).max(0.0)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.0}\" y=\"22\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
        MARGIN_L,
        escape(title)
    )
}

#[allow(clippy::too_many_arguments)]
fn axes(
    x_label: &str,
    y_label: &str,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    px: &dyn Fn(f64) -> f64,
    py: &dyn Fn(f64) -> f64,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<line x1=\"{l:.1}\" y1=\"{b:.1}\" x2=\"{r:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{l:.1}\" y1=\"{t:.1}\" x2=\"{l:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B,
    ));
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            px(fx),
            HEIGHT - MARGIN_B + 18.0,
            fmt_tick(fx)
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            py(fy) + 4.0,
            fmt_tick(fy)
        ));
        out.push_str(&format!(
            "<line x1=\"{l:.1}\" y1=\"{y:.1}\" x2=\"{r:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n",
            l = MARGIN_L,
            r = WIDTH - MARGIN_R,
            y = py(fy),
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        escape(y_label)
    ));
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
