//! CSV and SVG artifact writers.
//!
//! All numeric CSV cells use 17 significant decimal digits so outputs are
//! bit-faithful to the computed doubles; files are byte-deterministic for a
//! fixed config and seed.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::experiments::{FitModel, FitReport, ScheduleTable};

/// 17-significant-digit decimal rendering of a double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_schedule_csv(path: &Path, table: &ScheduleTable) -> Result<()> {
    let mut out = String::from("N,e2,err_est,order\n");
    for r in &table.rows {
        writeln!(out, "{},{},{},{}", r.n_actual, fmt_f64(r.e2), fmt_f64(r.error_estimate), r.order)
            .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_per_stratum_csv(
    path: &Path,
    design: &crate::designs::CrossRegularDesign,
    per: &[f64],
) -> Result<()> {
    let d = design.dim();
    let mut out = String::new();
    for m in 1..=d {
        write!(out, "i{m},").unwrap();
    }
    out.push_str("volume,e2_i\n");
    for (flat, &e2) in per.iter().enumerate() {
        let s = design.stratum(flat as u64);
        for i in &s.index {
            write!(out, "{i},").unwrap();
        }
        writeln!(out, "{},{}", fmt_f64(s.volume), fmt_f64(e2)).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn fit_label(model: &FitModel) -> String {
    match model {
        FitModel::SinglePower => "single_power".into(),
        FitModel::TwoPower { p1, p2 } => format!("two_power({p1};{p2})"),
        FitModel::Scaled { p } => format!("scaled({p})"),
    }
}

pub fn write_fit_csv(path: &Path, fits: &[FitReport]) -> Result<()> {
    let mut out = String::from("model,param1,param2,residual,window_start,window_len,flags\n");
    for f in fits {
        let cell = |v: Option<&f64>| v.map(|x| fmt_f64(*x)).unwrap_or_default();
        let p1 = cell(f.estimates.first());
        let p2 = cell(f.estimates.get(1));
        let mut flags = Vec::new();
        if f.degenerate {
            flags.push("degenerate");
        }
        if f.still_trending {
            flags.push("still_trending");
        }
        writeln!(
            out,
            "{},{p1},{p2},{},{},{},{}",
            fit_label(&f.model),
            fmt_f64(f.residual),
            f.window.0,
            f.window.1,
            flags.join("|")
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_scaled_csv(path: &Path, column: &[(f64, f64)], p: f64) -> Result<()> {
    let mut out = format!("N,scaled_p{p}\n");
    for &(n, v) in column {
        writeln!(out, "{},{}", n as u64, fmt_f64(v)).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_kv_csv(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("quantity,value\n");
    for (k, v) in rows {
        writeln!(out, "{k},{}", fmt_f64(*v)).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One plotted series.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Minimal standalone log-log SVG line plot; no external tooling needed to
/// render it.
pub fn write_loglog_svg(path: &Path, title: &str, series: &[Series<'_>]) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    let colors = ["#1f6fb4", "#d2502a", "#3d8c40", "#8251a1", "#777777"];

    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            if x > 0.0 && y > 0.0 {
                x0 = x0.min(x.log10());
                x1 = x1.max(x.log10());
                y0 = y0.min(y.log10());
                y1 = y1.max(y.log10());
            }
        }
    }
    if !x0.is_finite() || x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if !y0.is_finite() || y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let px = |lx: f64| ML + (lx - x0) / (x1 - x0) * (W - ML - MR);
    let py = |ly: f64| H - MB - (ly - y0) / (y1 - y0) * (H - MB - MT);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>").unwrap();
    writeln!(svg, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>", W / 2.0)
        .unwrap();
    // frame
    writeln!(
        svg,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - ML - MR,
        H - MB - MT
    )
    .unwrap();
    // decade ticks
    for k in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let x = px(k as f64);
        writeln!(svg, "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#cccccc\"/>", MT, H - MB)
            .unwrap();
        writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">1e{k}</text>",
            H - MB + 16.0
        )
        .unwrap();
    }
    for k in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let y = py(k as f64);
        writeln!(svg, "<line x1=\"{ML}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#cccccc\"/>", W - MR)
            .unwrap();
        writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{k}</text>", ML - 6.0, y + 4.0)
            .unwrap();
    }
    // series
    for (i, s) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        let mut d = String::new();
        for (j, &(x, y)) in s.points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).enumerate() {
            let (cx, cy) = (px(x.log10()), py(y.log10()));
            write!(d, "{}{cx:.2},{cy:.2} ", if j == 0 { "M" } else { "L" }).unwrap();
        }
        writeln!(svg, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", d.trim())
            .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            ML + 10.0,
            MT + 18.0 + 16.0 * i as f64,
            s.label
        )
        .unwrap();
    }
    writeln!(svg, "</svg>").unwrap();
    std::fs::write(path, svg)?;
    Ok(())
}
