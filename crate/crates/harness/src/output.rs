//! CSV tables, SVG plots and the JSON run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const GENERATOR: &str = concat!("ntkgauss ", env!("CARGO_PKG_VERSION"));

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes an RFC-4180 table with a header row.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Shortest round-trip decimal, with an exponent for very large or small
/// magnitudes; equal values always print identically.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Everything needed to trace a run back to its inputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub generator: &'static str,
    pub command: String,
    pub preset: Option<String>,
    pub config_hash: String,
    pub config: RunConfig,
    pub master_seed: u64,
    pub seed_scheme: &'static str,
    pub workers: usize,
    pub undersampled: bool,
    pub warnings: Vec<String>,
    pub wall_seconds: BTreeMap<String, f64>,
    pub files: Vec<String>,
    pub results: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, preset: Option<&str>, cfg: &RunConfig, workers: usize) -> Self {
        Manifest {
            generator: GENERATOR,
            command: command.into(),
            preset: preset.map(str::to_string),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            master_seed: cfg.seed,
            seed_scheme: "ChaCha8 stream keyed by (master seed, tensor name), replica = (width index << 32) | replica index",
            workers,
            undersampled: false,
            warnings: Vec::new(),
            wall_seconds: BTreeMap::new(),
            files: Vec::new(),
            results: serde_json::Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("meta.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_text(&path, &(text + "\n"))?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Linear,
    Log,
}

pub enum Mark {
    Line { points: Vec<(f64, f64)>, color: &'static str, width: f64, opacity: f64 },
    Dots { points: Vec<(f64, f64)>, color: &'static str },
    Area { upper: Vec<(f64, f64)>, lower: Vec<(f64, f64)>, color: &'static str },
}

/// A single-panel static chart.
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    pub marks: Vec<Mark>,
    /// Lines written as XML comments, typically the plotted data.
    pub comments: Vec<String>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x_scale: Scale, y_scale: Scale) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale,
            y_scale,
            marks: Vec::new(),
            comments: Vec::new(),
        }
    }

    fn all_points(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.marks.iter().flat_map(|m| match m {
            Mark::Line { points, .. } | Mark::Dots { points, .. } => points.iter().chain([].iter()),
            Mark::Area { upper, lower, .. } => upper.iter().chain(lower.iter()),
        })
    }

    pub fn render(&self) -> String {
        let tx = |v: f64, s: Scale| if s == Scale::Log { v.log10() } else { v };
        let usable = |p: &&(f64, f64)| {
            let ok = |v: f64, s: Scale| v.is_finite() && (s == Scale::Linear || v > 0.0);
            ok(p.0, self.x_scale) && ok(p.1, self.y_scale)
        };
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in self.all_points().filter(usable) {
            let (x, y) = (tx(p.0, self.x_scale), tx(p.1, self.y_scale));
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            let d = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
            (lo - d, hi + d)
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        let (ml, mr, mt, mb) = MARGIN;
        let px = |x: f64| ml + (tx(x, self.x_scale) - x0) / (x1 - x0) * (W - ml - mr);
        let py = |y: f64| H - mb - (tx(y, self.y_scale) - y0) / (y1 - y0) * (H - mt - mb);
        let path = |pts: &[(f64, f64)]| {
            pts.iter()
                .filter(|p| usable(p))
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect::<Vec<_>>()
                .join(" ")
        };

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
        let _ = writeln!(s, "<!-- generator: {GENERATOR} -->");
        for c in &self.comments {
            let _ = writeln!(s, "<!-- {} -->", c.replace("--", "- -"));
        }
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - ml - mr,
            H - mt - mb
        );
        for m in &self.marks {
            match m {
                Mark::Area { upper, lower, color } => {
                    let mut pts = upper.clone();
                    pts.extend(lower.iter().rev());
                    let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" stroke="none" opacity="0.6"/>"#, path(&pts));
                }
                Mark::Line { points, color, width, opacity } => {
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" opacity="{opacity}"/>"#,
                        path(points)
                    );
                }
                Mark::Dots { points, color } => {
                    for p in points.iter().filter(|p| usable(p)) {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, px(p.0), py(p.1));
                    }
                }
            }
        }
        let label = |v: f64, sc: Scale| if sc == Scale::Log { format!("{:.3}", 10f64.powf(v)) } else { format!("{v:.3}") };
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let xp = ml + f * (W - ml - mr);
            let yp = H - mb - f * (H - mt - mb);
            let _ = writeln!(s, r#"<text x="{xp:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, H - mb + 16.0, label(xv, self.x_scale));
            let _ = writeln!(s, r#"<text x="{}" y="{yp:.2}" font-size="11" text-anchor="end">{}</text>"#, ml - 4.0, label(yv, self.y_scale));
        }
        let _ = writeln!(s, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, xml_escape(&self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, xml_escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            xml_escape(&self.y_label)
        );
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["a".into(), "b,c".into()], &[vec![num(0.1), num(-2.5e-300)]]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "a,\"b,c\"\n0.1,-2.5e-300\n");
    }

    #[test]
    fn chart_renders_log_axes_and_skips_nonpositive() {
        let mut c = Chart::new("t", "x", "y", Scale::Log, Scale::Log);
        c.marks.push(Mark::Dots { points: vec![(2.0, 0.1), (4.0, 0.05), (8.0, 0.0)], color: "blue" });
        c.comments.push("width,w2 -- data".into());
        let svg = c.render();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("w2 -- data"));
    }
}
