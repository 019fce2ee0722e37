use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::fsio::write_atomic;
use crate::{Error, Result};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Counts per series over bins shared by all series.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub series: Vec<(String, Vec<usize>)>,
}

/// Bins every series over the common range `[min, max]` of all values.
/// The last bin is closed on the right. A zero-width range becomes
/// `[v − 0.5, v + 0.5]`.
pub fn histogram(series: &[(&str, &[f64])], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Contract("histogram needs at least one bin".into()));
    }
    let all = || series.iter().flat_map(|(_, v)| v.iter().copied());
    if all().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram values must be finite".into()));
    }
    let (mut lo, mut hi) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    } else if lo == hi {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * width }).collect();
    let series = series
        .iter()
        .map(|(name, values)| {
            let mut counts = vec![0; bins];
            for &v in values.iter() {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            (name.to_string(), counts)
        })
        .collect();
    Ok(Histogram { edges, series })
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,bin_left,bin_right,count\n");
        for (name, counts) in &self.series {
            for (i, c) in counts.iter().enumerate() {
                let _ = writeln!(out, "{name},{},{},{c}", self.edges[i], self.edges[i + 1]);
            }
        }
        out
    }

    /// Overlaid translucent bars, one colour per series, with a legend.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h) = (720.0, 420.0);
        let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
        let (pw, ph) = (w - left - right, h - top - bottom);
        let bins = self.edges.len() - 1;
        let peak = self.series.iter().flat_map(|(_, c)| c.iter().copied()).max().unwrap_or(0).max(1) as f64;
        let bar = pw / bins as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect width="{w}" height="{h}" fill="white"/>
<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            w / 2.0,
            escape(title)
        );
        for (k, (name, counts)) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.45" stroke="{color}" stroke-width="0.5">"#);
            for (i, &c) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
                let bh = c as f64 / peak * ph;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                    left + i as f64 * bar,
                    top + ph - bh,
                    bar,
                    bh
                );
            }
            let _ = writeln!(s, "</g>");
            let ly = top + 14.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{color}" fill-opacity="0.6"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
                w - right - 150.0,
                ly - 10.0,
                w - right - 132.0,
                ly,
                escape(name)
            );
        }
        let (x0, x1, y0) = (left, left + pw, top + ph);
        let _ = writeln!(
            s,
            r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{top}" x2="{x0}" y2="{y0}"/></g>
<g font-family="sans-serif" font-size="11">
<text x="{x0}" y="{}" text-anchor="start">{:.1}</text>
<text x="{x1}" y="{}" text-anchor="end">{:.1}</text>
<text x="{}" y="{}" text-anchor="middle">log-likelihood</text>
<text x="{}" y="{}" text-anchor="end">{}</text>
<text x="{}" y="{y0}" text-anchor="end">0</text>
</g>
</svg>"#,
            y0 + 16.0,
            self.edges[0],
            y0 + 16.0,
            self.edges[bins],
            left + pw / 2.0,
            y0 + 36.0,
            x0 - 6.0,
            top + 4.0,
            peak,
            x0 - 6.0,
        );
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes `<stem>.csv` and `<stem>.svg` and returns their paths.
pub fn emit_histogram(series: &[(&str, &[f64])], bins: usize, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    if let Some((name, _)) = series.iter().find(|(n, _)| n.contains([',', '\n', '\r'])) {
        return Err(Error::Contract(format!("series name {name:?} cannot appear in CSV")));
    }
    let hist = histogram(series, bins)?;
    let csv = stem.with_extension("csv");
    let svg = stem.with_extension("svg");
    let title = stem.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_atomic(&csv, hist.to_csv().as_bytes())?;
    write_atomic(&svg, hist.to_svg(&title).as_bytes())?;
    Ok((csv, svg))
}
