//! Timing sweeps for hard and soft GLCM construction.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glcm::{hard_glcm, soft_glcm, BinGrid, Offset};
use crate::image::{Image, Interval};
use crate::synth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Hard,
    Soft,
}

impl BenchMode {
    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Hard => "hard",
            BenchMode::Soft => "soft",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub pixels: usize,
    pub bins: usize,
    pub mode: BenchMode,
    /// Median wall time over `repeats` timed runs.
    pub seconds: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub cpu: String,
    pub threads: usize,
}

impl BenchResult {
    fn series(&self, mode: BenchMode, keep: impl Fn(&BenchRow) -> bool, x: impl Fn(&BenchRow) -> usize) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.mode == mode && keep(r))
            .map(|r| (x(r) as f64, r.seconds))
            .collect()
    }

    /// Log-log slope of time against pixel count at a fixed bin count.
    pub fn slope_vs_pixels(&self, mode: BenchMode, bins: usize) -> Result<f64> {
        loglog_slope(&self.series(mode, |r| r.bins == bins, |r| r.pixels))
    }

    /// Log-log slope of time against bin count at a fixed pixel count.
    pub fn slope_vs_bins(&self, mode: BenchMode, pixels: usize) -> Result<f64> {
        loglog_slope(&self.series(mode, |r| r.pixels == pixels, |r| r.bins))
    }

    /// Soft/hard time ratios at a fixed pixel count, ordered by bin count.
    pub fn soft_hard_ratios(&self, pixels: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.mode == BenchMode::Soft && r.pixels == pixels)
            .filter_map(|s| {
                self.rows
                    .iter()
                    .find(|h| h.mode == BenchMode::Hard && h.pixels == pixels && h.bins == s.bins)
                    .map(|h| (s.bins, s.seconds / h.seconds))
            })
            .collect();
        out.sort_by_key(|r| r.0);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# cpu={}", self.cpu);
        let _ = writeln!(out, "# threads={}", self.threads);
        out.push_str("N,n,mode,seconds,repeats\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:e},{}", r.pixels, r.bins, r.mode.name(), r.seconds, r.repeats);
        }
        out
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidParameter("slope fit needs at least two positive points".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope fit needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Closest-to-square `w × h` with `w·h = pixels`.
fn shape_for(pixels: usize) -> (usize, usize) {
    let mut w = (pixels as f64).sqrt() as usize;
    while w > 1 && pixels % w != 0 {
        w -= 1;
    }
    (pixels / w.max(1), w.max(1))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn time_median(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?; // warm-up
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64().max(1e-9));
    }
    Ok(median(times))
}

fn cpu_name() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string())
}

/// Times one hard and one soft GLCM (offset `d = 1, θ = 0`) per
/// `(pixels, bins)` pair on a single worker thread.
pub fn run_scaling(sizes: &[usize], bins: &[usize], repeats: usize, seed: u64) -> Result<BenchResult> {
    if sizes.is_empty() || bins.is_empty() {
        return Err(Error::InvalidParameter("bench needs at least one size and one bin count".into()));
    }
    if repeats < 3 {
        return Err(Error::InvalidParameter("bench needs at least 3 repeats".into()));
    }
    if sizes.iter().any(|&s| s < 4) || bins.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParameter("sizes must be ≥ 4 pixels and bin counts ≥ 2".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let offset = Offset::new(1.0, 0.0)?;
    let mut rng = synth::rng(seed);
    pool.install(|| {
        let mut rows = Vec::new();
        for &pixels in sizes {
            let (w, h) = shape_for(pixels);
            for &n in bins {
                let grid = BinGrid::ordinal(n, 0.5)?;
                let hi = (n - 1) as f64;
                let data = (0..pixels).map(|_| rng.random_range(0.0..=hi)).collect();
                let img = Image::new(w, h, data, Interval::new(0.0, hi)?)?;
                for mode in [BenchMode::Hard, BenchMode::Soft] {
                    let seconds = match mode {
                        BenchMode::Hard => time_median(repeats, || hard_glcm(&img, offset, &grid).map(drop))?,
                        BenchMode::Soft => time_median(repeats, || soft_glcm(&img, offset, &grid).map(drop))?,
                    };
                    rows.push(BenchRow {
                        pixels,
                        bins: n,
                        mode,
                        seconds,
                        repeats,
                    });
                }
            }
        }
        Ok(BenchResult {
            rows,
            cpu: cpu_name(),
            threads: 1,
        })
    })
}
