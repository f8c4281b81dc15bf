//! Hand-rolled SVG output. Everything here is deterministic: fixed
//! palettes, fixed precision, no timestamps, so identical inputs yield
//! byte-identical files.

use std::fmt::Write as _;

use lcc_core::region_scanner::{CellClass, GainKind, GainRef, StabilityChart};
use lcc_core::SimulationResult;

const PLOT_LEFT: i64 = 84;
const PLOT_TOP: i64 = 48;
const PLOT_W: i64 = 460;
const PLOT_H: i64 = 460;

pub fn gain_name(g: GainRef) -> String {
    match g.kind {
        GainKind::Mu => format!("mu_{}", g.vehicle),
        GainKind::K => format!("k_{}", g.vehicle),
    }
}

fn class_color(class: CellClass) -> &'static str {
    match class {
        CellClass::StringStable => "#2a9d8f",
        CellClass::StringUnstable => "#e9c46a",
        CellClass::PlantUnstable => "#e76f51",
        CellClass::Marginal => "#adb5bd",
    }
}

fn class_label(class: CellClass) -> &'static str {
    match class {
        CellClass::StringStable => "string stable",
        CellClass::StringUnstable => "string unstable",
        CellClass::PlantUnstable => "plant unstable",
        CellClass::Marginal => "marginal",
    }
}

/// Shortest decimal that still reads as the tick value.
fn fmt_tick(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e6 {
        return format!("{}", v as i64);
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Classic 1-2-5 tick spacing, inclusive of range ends that land on ticks.
fn ticks(min: f64, max: f64) -> Vec<f64> {
    let span = max - min;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 8.0)
        .unwrap_or(10.0 * mag);
    let first = (min / step).ceil() as i64;
    let last = (max / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn header(out: &mut String, width: i64, height: i64, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"DejaVu Sans, Helvetica, sans-serif\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n\
         <text x=\"{}\" y=\"26\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        PLOT_LEFT + PLOT_W / 2
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str, xr: (f64, f64), yr: (f64, f64)) {
    let x0 = PLOT_LEFT;
    let (y0, y1) = (PLOT_TOP, PLOT_TOP + PLOT_H);
    let _ = write!(
        out,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"none\" \
         stroke=\"#343a40\" stroke-width=\"1\"/>\n"
    );
    for t in ticks(xr.0, xr.1) {
        let px = x0 as f64 + PLOT_W as f64 * (t - xr.0) / (xr.1 - xr.0);
        let _ = write!(
            out,
            "<line x1=\"{px:.1}\" y1=\"{y1}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"#343a40\"/>\n\
             <text x=\"{px:.1}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            y1 + 5,
            y1 + 18,
            fmt_tick(t)
        );
    }
    for t in ticks(yr.0, yr.1) {
        let py = y1 as f64 - PLOT_H as f64 * (t - yr.0) / (yr.1 - yr.0);
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{py:.1}\" x2=\"{x0}\" y2=\"{py:.1}\" stroke=\"#343a40\"/>\n\
             <text x=\"{}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            x0 - 5,
            x0 - 8,
            py + 4.0,
            fmt_tick(t)
        );
    }
    let _ = write!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"22\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 22 {})\">{y_label}</text>\n",
        x0 + PLOT_W / 2,
        y1 + 38,
        y0 + PLOT_H / 2,
        y0 + PLOT_H / 2,
    );
}

/// Stability-region heatmap. Rows are run-length encoded and cell edges
/// snap to integer pixels so adjacent runs tile without seams.
pub fn chart_svg(chart: &StabilityChart) -> String {
    let spec = &chart.spec;
    let (sx, sy) = (spec.x_range.steps(), spec.y_range.steps());
    let x_name = gain_name(spec.x_gain);
    let y_name = gain_name(spec.y_gain);
    let mut out = String::with_capacity(1 << 17);
    header(
        &mut out,
        PLOT_LEFT + PLOT_W + 190,
        PLOT_TOP + PLOT_H + 60,
        &format!("stability regions over ({x_name}, {y_name})"),
    );

    let px = |i: usize| PLOT_LEFT + (PLOT_W * i as i64) / sx as i64;
    // y axis points up; row iy = 0 is the range minimum, drawn at the bottom.
    let py = |j: usize| PLOT_TOP + PLOT_H - (PLOT_H * j as i64) / sy as i64;
    for iy in 0..sy {
        let (y_hi, y_lo) = (py(iy + 1), py(iy));
        let mut ix = 0;
        while ix < sx {
            let class = chart.class(ix, iy);
            let mut end = ix + 1;
            while end < sx && chart.class(end, iy) == class {
                end += 1;
            }
            let _ = write!(
                out,
                "<rect x=\"{}\" y=\"{y_hi}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                px(ix),
                px(end) - px(ix),
                y_lo - y_hi,
                class_color(class)
            );
            ix = end;
        }
    }

    axes(
        &mut out,
        &x_name,
        &y_name,
        (spec.x_range.min(), spec.x_range.max()),
        (spec.y_range.min(), spec.y_range.max()),
    );

    let lx = PLOT_LEFT + PLOT_W + 16;
    for (row, class) in [
        CellClass::StringStable,
        CellClass::StringUnstable,
        CellClass::PlantUnstable,
        CellClass::Marginal,
    ]
    .into_iter()
    .enumerate()
    {
        let ly = PLOT_TOP + 10 + 24 * row as i64;
        let _ = write!(
            out,
            "<rect x=\"{lx}\" y=\"{ly}\" width=\"14\" height=\"14\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\">{} ({})</text>\n",
            class_color(class),
            lx + 20,
            ly + 11,
            class_label(class),
            chart.counts().of(class)
        );
    }
    out.push_str("</svg>\n");
    out
}

const LINE_PALETTE: [&str; 6] = [
    "#457b9d", "#6d9dc5", "#2a9d8f", "#74c69d", "#8e7dbe", "#b5838d",
];

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, width: f64, dash: Option<&str>) {
    let dash = dash.map_or(String::new(), |d| format!(" stroke-dasharray=\"{d}\""));
    let _ = write!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash} points=\""
    );
    for (x, y) in pts {
        let _ = write!(out, "{x:.1},{y:.1} ");
    }
    out.push_str("\"/>\n");
}

/// Velocity-profile figure: one line per vehicle plus the head input.
pub fn trajectory_svg(result: &SimulationResult) -> String {
    let times = &result.times;
    let mut series: Vec<(String, &Vec<f64>, &'static str, f64, Option<&'static str>)> =
        Vec::new();
    if let Some(head) = &result.head_velocity {
        series.push(("head".into(), head, "#212529", 1.3, Some("6 4")));
    }
    let mut hdv = 0usize;
    for v in &result.vehicles {
        let (color, width) = if v.vehicle == 0 {
            ("#d62828", 2.0)
        } else {
            let c = LINE_PALETTE[hdv % LINE_PALETTE.len()];
            hdv += 1;
            (c, 1.3)
        };
        let label = if v.vehicle == 0 {
            "cav".into()
        } else {
            format!("vehicle {}", v.vehicle)
        };
        series.push((label, &v.velocity, color, width, None));
    }

    let (t0, t1) = (times[0], *times.last().unwrap());
    let mut v_lo = f64::INFINITY;
    let mut v_hi = f64::NEG_INFINITY;
    for (_, vs, ..) in &series {
        for &v in vs.iter() {
            v_lo = v_lo.min(v);
            v_hi = v_hi.max(v);
        }
    }
    let pad = 0.06 * (v_hi - v_lo).max(1e-9);
    let (v_lo, v_hi) = (v_lo - pad, v_hi + pad);

    let mut out = String::with_capacity(1 << 17);
    header(
        &mut out,
        PLOT_LEFT + PLOT_W + 190,
        PLOT_TOP + PLOT_H + 60,
        "velocity profiles",
    );
    let to_xy = |t: f64, v: f64| {
        (
            PLOT_LEFT as f64 + PLOT_W as f64 * (t - t0) / (t1 - t0),
            PLOT_TOP as f64 + PLOT_H as f64 * (v_hi - v) / (v_hi - v_lo),
        )
    };
    // Cap points per line; strided sampling keeps the last sample.
    let stride = times.len().div_ceil(1600).max(1);
    for (_, vs, color, width, dash) in &series {
        let mut pts: Vec<(f64, f64)> = times
            .iter()
            .zip(vs.iter())
            .step_by(stride)
            .map(|(&t, &v)| to_xy(t, v))
            .collect();
        let last = to_xy(*times.last().unwrap(), *vs.last().unwrap());
        if pts.last() != Some(&last) {
            pts.push(last);
        }
        polyline(&mut out, &pts, color, *width, *dash);
    }
    axes(&mut out, "time [s]", "velocity [m/s]", (t0, t1), (v_lo, v_hi));

    let lx = PLOT_LEFT + PLOT_W + 16;
    for (row, (label, _, color, _, dash)) in series.iter().enumerate() {
        let ly = PLOT_TOP + 10 + 20 * row as i64;
        let dash_attr = dash.map_or(String::new(), |d| format!(" stroke-dasharray=\"{d}\""));
        let _ = write!(
            out,
            "<line x1=\"{lx}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" \
             stroke-width=\"2\"{dash_attr}/>\n<text x=\"{}\" y=\"{}\" font-size=\"11\">{label}</text>\n",
            ly + 6,
            lx + 22,
            ly + 6,
            lx + 28,
            ly + 10,
        );
    }
    out.push_str("</svg>\n");
    out
}
