//! Noise-pattern analysis by template matching, and perception-distortion
//! ranking.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_TEMPLATE_SIZE: usize = 32;
pub const DEFAULT_TEMPLATE_COUNT: usize = 9;

/// A `t × t` patch cut from a source image at `origin = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub patch: Image,
    pub origin: (usize, usize),
}

impl Template {
    pub fn extract(source: &Image, origin: (usize, usize), t: usize) -> Result<Self> {
        if t == 0 || origin.0 + t > source.width() || origin.1 + t > source.height() {
            return Err(Error::ImageTooSmall {
                width: source.width(),
                height: source.height(),
                t,
            });
        }
        Ok(Self {
            patch: source.crop(origin.0, origin.1, t, t)?,
            origin,
        })
    }

    pub fn size(&self) -> usize {
        self.patch.width()
    }
}

/// Normalized cross-correlation surface, one value per image position.
#[derive(Debug, Clone, PartialEq)]
pub struct NccMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl NccMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Largest value and its position; the first one in row-major order wins.
    pub fn argmax(&self) -> (f64, (usize, usize)) {
        let mut best = (f64::NEG_INFINITY, (0, 0));
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.0 {
                best = (v, (i % self.width, i / self.width));
            }
        }
        best
    }
}

/// `M(x,y) = Σ T·I(x+x', y+y') / √(ΣT² · ΣI²)` with zeros outside the image.
/// Windows with zero energy (template or image) score 0.
pub fn ncc_map(template: &Template, img: &Image) -> NccMap {
    let (w, h) = img.dims();
    let (tw, th) = template.patch.dims();
    let t = template.patch.data();
    let t_energy: f64 = t.iter().map(|v| v * v).sum();
    let data = img.data();
    let values = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..w).map(move |x| {
                let mut num = 0.0;
                let mut energy = 0.0;
                for dy in 0..th.min(h - y) {
                    let row = &data[(y + dy) * w..(y + dy + 1) * w];
                    let trow = &t[dy * tw..(dy + 1) * tw];
                    for dx in 0..tw.min(w - x) {
                        let v = row[x + dx];
                        num += trow[dx] * v;
                        energy += v * v;
                    }
                }
                let denom = (t_energy * energy).sqrt();
                if denom > 0.0 {
                    num / denom
                } else {
                    0.0
                }
            })
        })
        .collect();
    NccMap { width: w, height: h, values }
}

/// `m = max M(x, y)`.
pub fn max_match(template: &Template, img: &Image) -> f64 {
    ncc_map(template, img).argmax().0
}

/// `r` templates on a `√r × √r` grid: each sits centered in its grid cell,
/// shifted inward where needed so it stays inside the image.
pub fn equispaced_templates(img: &Image, r: usize, t: usize) -> Result<Vec<Template>> {
    let k = (r as f64).sqrt().round() as usize;
    if r == 0 || k * k != r {
        return Err(Error::InvalidParameter(format!("template count {r} is not a perfect square")));
    }
    let (w, h) = img.dims();
    if t == 0 || t > w || t > h {
        return Err(Error::ImageTooSmall { width: w, height: h, t });
    }
    let place = |extent: usize, i: usize| -> usize {
        let center = (i as f64 + 0.5) * extent as f64 / k as f64;
        let start = (center - t as f64 / 2.0).round().max(0.0) as usize;
        start.min(extent - t)
    };
    let mut out = Vec::with_capacity(r);
    for j in 0..k {
        for i in 0..k {
            out.push(Template::extract(img, (place(w, i), place(h, j)), t)?);
        }
    }
    Ok(out)
}

/// Max-match scores of every template cut from `source` against each target.
/// Output order: target-major, then template.
pub fn match_scores(source: &Image, targets: &[Image], r: usize, t: usize) -> Result<Vec<f64>> {
    let templates = equispaced_templates(source, r, t)?;
    let mut scores = Vec::with_capacity(templates.len() * targets.len());
    for target in targets {
        source.ensure_same_shape(target)?;
        scores.extend(templates.iter().map(|tpl| max_match(tpl, target)));
    }
    Ok(scores)
}

/// Gaussian KDE of a score sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchDistribution {
    pub scores: Vec<f64>,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl MatchDistribution {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    /// Trapezoid rule over the evaluation grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
            .sum()
    }

    /// Grid abscissae where the density has a strict local maximum.
    pub fn modes(&self) -> Vec<f64> {
        (1..self.density.len().saturating_sub(1))
            .filter(|&i| self.density[i] > self.density[i - 1] && self.density[i] > self.density[i + 1])
            .map(|i| self.grid[i])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,density\n");
        for (x, f) in self.grid.iter().zip(&self.density) {
            let _ = writeln!(out, "{x},{f}");
        }
        out
    }
}

/// Scott's rule for one dimension: `σ̂·N^(−1/5)` with the sample (N−1) σ̂.
pub fn scott_bandwidth(scores: &[f64]) -> Result<f64> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::DegenerateKde);
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let h = var.sqrt() * (n as f64).powf(-0.2);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::DegenerateKde);
    }
    Ok(h)
}

pub fn kde(scores: &[f64], eval_grid: &[f64]) -> Result<MatchDistribution> {
    let h = scott_bandwidth(scores)?;
    let norm = 1.0 / (scores.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = eval_grid
        .iter()
        .map(|&m| norm * scores.iter().map(|&s| (-0.5 * ((m - s) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    Ok(MatchDistribution {
        scores: scores.to_vec(),
        bandwidth: h,
        grid: eval_grid.to_vec(),
        density,
    })
}

/// KDE on `points` evenly spaced abscissae covering the data ±5 bandwidths.
pub fn kde_auto(scores: &[f64], points: usize) -> Result<MatchDistribution> {
    let h = scott_bandwidth(scores)?;
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * h;
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * h;
    let points = points.max(2);
    let grid: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    kde(scores, &grid)
}

/// One experiment in the perception-distortion plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub label: String,
    pub perception: f64,
    pub distortion: f64,
}

impl PdPoint {
    pub fn new(label: impl Into<String>, perception: f64, distortion: f64) -> Result<Self> {
        let p = Self {
            label: label.into(),
            perception,
            distortion,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.perception) && ok(self.distortion)) {
            return Err(Error::InvalidParameter(format!(
                "point {:?} needs finite non-negative coordinates",
                self.label
            )));
        }
        Ok(())
    }

    pub fn distance(&self) -> f64 {
        self.perception.hypot(self.distortion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPoint {
    pub rank: usize,
    pub label: String,
    pub perception: f64,
    pub distortion: f64,
    pub distance: f64,
}

/// Orders points by distance to the origin; equal distances fall back to the
/// label. Ranks start at 1.
pub fn pd_rank(points: &[PdPoint]) -> Result<Vec<RankedPoint>> {
    for p in points {
        p.validate()?;
    }
    let mut sorted: Vec<&PdPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.distance().total_cmp(&b.distance()).then_with(|| a.label.cmp(&b.label)));
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, p)| RankedPoint {
            rank: i + 1,
            label: p.label.clone(),
            perception: p.perception,
            distortion: p.distortion,
            distance: p.distance(),
        })
        .collect())
}

/// Reads `label,perception,distortion` rows (header required).
pub fn read_pd_csv(text: &str) -> Result<Vec<PdPoint>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize::<PdPoint>() {
        let p = row.map_err(|e| Error::InvalidParameter(format!("rank input: {e}")))?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn ranked_to_csv(ranked: &[RankedPoint]) -> String {
    let mut out = String::from("rank,label,perception,distortion,distance\n");
    for r in ranked {
        let _ = writeln!(out, "{},{},{},{},{}", r.rank, r.label, r.perception, r.distortion, r.distance);
    }
    out
}
