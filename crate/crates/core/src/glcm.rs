//! Gray-level co-occurrence matrices for a single spatial offset.
//!
//! [`hard_glcm`] is the classic counting construction (nearest-bin labels,
//! Kronecker-delta pair counts). [`soft_glcm`] replaces the labels with
//! Gaussian soft assignments and accumulates outer products of the two
//! assignment vectors of every valid pixel pair, which makes every entry a
//! smooth function of the pixel values. Both are normalized by the number of
//! valid pairs; pairs whose shifted partner leaves the image are dropped.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Soft weights below this are stored as exact zeros. It sits near
/// `√f64::MIN_POSITIVE`, so the product of two stored weights is never
/// subnormal; subnormal arithmetic is slow enough on common CPUs to distort
/// timings by an order of magnitude, and the dropped mass is below 1e-150.
pub const WEIGHT_FLOOR: f64 = 1.5e-154;

/// Default soft-assignment width, in bin-center units.
pub const DEFAULT_SIGMA: f64 = 0.5;

/// Spatial offset `(d, θ)`, θ in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    pub d: f64,
    pub theta: f64,
}

impl Offset {
    pub fn new(d: f64, theta: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite() && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "offset needs finite d > 0, got d={d}, theta={theta}"
            )));
        }
        Ok(Self { d, theta })
    }

    /// Integer displacement `(Δu, Δv)`, each component of `(d·cosθ, d·sinθ)`
    /// rounded half away from zero.
    pub fn displacement(&self) -> (isize, isize) {
        let rad = self.theta.to_radians();
        (
            (self.d * rad.cos()).round() as isize,
            (self.d * rad.sin()).round() as isize,
        )
    }
}

/// Valid anchor positions for a displacement: every `(u, v)` with
/// `(u + Δu, v + Δv)` still inside the image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairWindow {
    pub cols: Range<usize>,
    pub rows: Range<usize>,
    pub du: isize,
    pub dv: isize,
    width: usize,
}

impl PairWindow {
    pub fn new(width: usize, height: usize, (du, dv): (isize, isize)) -> Self {
        let axis = |n: usize, delta: isize| -> Range<usize> {
            let n = n as isize;
            let lo = (-delta).max(0);
            let hi = (n - delta).min(n);
            if lo >= hi {
                0..0
            } else {
                lo as usize..hi as usize
            }
        };
        Self {
            cols: axis(width, du),
            rows: axis(height, dv),
            du,
            dv,
            width,
        }
    }

    pub fn count(&self) -> usize {
        self.cols.len() * self.rows.len()
    }

    /// Flat `(anchor, partner)` index pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width as isize;
        let shift = self.dv * w + self.du;
        self.rows.clone().flat_map(move |v| {
            self.cols.clone().map(move |u| {
                let p = v * self.width + u;
                (p, (p as isize + shift) as usize)
            })
        })
    }
}

/// Bin centers plus the soft-assignment width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    centers: Vec<f64>,
    sigma: f64,
}

impl BinGrid {
    pub fn new(centers: Vec<f64>, sigma: f64) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::InvalidParameter("at least two bins are required".into()));
        }
        if centers.iter().any(|c| !c.is_finite()) || centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "bin centers must be finite and strictly increasing".into(),
            ));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { centers, sigma })
    }

    /// `n` equally spaced centers from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, n: usize, sigma: f64) -> Result<Self> {
        if n < 2 || !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "uniform bins need n >= 2 and lo < hi, got n={n}, [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let centers = (0..n)
            .map(|k| if k == n - 1 { hi } else { lo + k as f64 * step })
            .collect();
        Self::new(centers, sigma)
    }

    /// Centers at the integers `0..n`.
    pub fn ordinal(n: usize, sigma: f64) -> Result<Self> {
        Self::new((0..n).map(|k| k as f64).collect(), sigma)
    }

    pub fn n(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn min_spacing(&self) -> f64 {
        self.centers
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest center; ties go to the lower index.
    pub fn nearest(&self, x: f64) -> usize {
        let c = &self.centers;
        let idx = c.partition_point(|&b| b < x);
        if idx == 0 {
            return 0;
        }
        if idx == c.len() {
            return c.len() - 1;
        }
        if x - c[idx - 1] <= c[idx] - x {
            idx - 1
        } else {
            idx
        }
    }

    /// Normalized Gaussian weights of one value over all bins, written into `out`.
    pub fn assign_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let mut zmax = f64::NEG_INFINITY;
        for (o, &b) in out.iter_mut().zip(&self.centers) {
            let z = -(x - b) * (x - b) * inv;
            *o = z;
            zmax = zmax.max(z);
        }
        let mut total = 0.0;
        // the normalizer is at least 1, so anything this far below the peak
        // would be flushed anyway
        let cutoff = WEIGHT_FLOOR.ln();
        for o in out.iter_mut() {
            let z = *o - zmax;
            *o = if z < cutoff { 0.0 } else { z.exp() };
            total += *o;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NumericallyDegenerate(x));
        }
        for o in out.iter_mut() {
            *o /= total;
            if *o < WEIGHT_FLOOR {
                *o = 0.0;
            }
        }
        Ok(())
    }
}

/// Co-occurrence probabilities for one offset, row-major `n × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    n: usize,
    entries: Vec<f64>,
    offset: Offset,
}

impl Glcm {
    pub fn from_entries(n: usize, entries: Vec<f64>, offset: Offset) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "GLCM needs {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidParameter("GLCM entries must be finite and >= 0".into()));
        }
        Ok(Self { n, entries, offset })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn offset(&self) -> Offset {
        self.offset
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn transpose(&self) -> Glcm {
        let n = self.n;
        let mut t = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = self.entries[i * n + j];
            }
        }
        Glcm {
            n,
            entries: t,
            offset: self.offset,
        }
    }

    pub fn max_abs_diff(&self, other: &Glcm) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `n` rows of `n` comma-separated values; row `i` is the first index.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<&[f64]> = self.entries.chunks(self.n).collect();
        serde_json::json!({
            "n": self.n,
            "d": self.offset.d,
            "theta": self.offset.theta,
            "entries": rows,
        })
    }
}

/// Per-pixel soft assignments, row `p` holds the weights of pixel `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    n: usize,
    weights: Vec<f64>,
}

impl SoftAssignment {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixels(&self) -> usize {
        self.weights.len() / self.n
    }

    #[inline]
    pub fn row(&self, p: usize) -> &[f64] {
        &self.weights[p * self.n..(p + 1) * self.n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Shifted copy `x_s(u, v) = x(u + Δu, v + Δv)` and the validity mask.
///
/// `mask[p]` is `true` when the partner of `p` lies inside the image. Invalid
/// positions carry `range.lo` and never enter a GLCM.
pub fn shift_image(img: &Image, off: Offset) -> Result<(Image, Vec<bool>)> {
    let (w, h) = img.dims();
    let window = PairWindow::new(w, h, off.displacement());
    let mut data = vec![img.range().lo; w * h];
    let mut mask = vec![false; w * h];
    for (p, q) in window.pairs() {
        data[p] = img.data()[q];
        mask[p] = true;
    }
    Ok((Image::new(w, h, data, img.range())?, mask))
}

fn pair_window(img: &Image, off: Offset) -> Result<PairWindow> {
    let (w, h) = img.dims();
    let window = PairWindow::new(w, h, off.displacement());
    if window.count() == 0 {
        return Err(Error::DegenerateGlcm {
            d: off.d,
            theta: off.theta,
        });
    }
    Ok(window)
}

pub fn hard_glcm(img: &Image, off: Offset, bins: &BinGrid) -> Result<Glcm> {
    let window = pair_window(img, off)?;
    let n = bins.n();
    let labels: Vec<usize> = img.data().iter().map(|&x| bins.nearest(x)).collect();
    let mut counts = vec![0u64; n * n];
    for (p, q) in window.pairs() {
        counts[labels[p] * n + labels[q]] += 1;
    }
    let total = window.count() as f64;
    let entries = counts.into_iter().map(|c| c as f64 / total).collect();
    Ok(Glcm {
        n,
        entries,
        offset: off,
    })
}

pub fn soft_assign(img: &Image, bins: &BinGrid) -> Result<SoftAssignment> {
    let n = bins.n();
    let mut weights = vec![0.0; img.len() * n];
    for (row, &x) in weights.chunks_exact_mut(n).zip(img.data()) {
        bins.assign_into(x, row)?;
    }
    Ok(SoftAssignment { n, weights })
}

/// Soft GLCM from precomputed assignments of an image with the given dimensions.
pub fn soft_glcm_from_assignment(
    assign: &SoftAssignment,
    dims: (usize, usize),
    off: Offset,
) -> Result<Glcm> {
    let window = PairWindow::new(dims.0, dims.1, off.displacement());
    if window.count() == 0 {
        return Err(Error::DegenerateGlcm {
            d: off.d,
            theta: off.theta,
        });
    }
    let n = assign.n();
    let mut entries = vec![0.0; n * n];
    for (p, q) in window.pairs() {
        let (wa, wb) = (assign.row(p), assign.row(q));
        for (i, &a) in wa.iter().enumerate() {
            let row = &mut entries[i * n..(i + 1) * n];
            for (g, &b) in row.iter_mut().zip(wb) {
                *g += a * b;
            }
        }
    }
    let total = window.count() as f64;
    for g in &mut entries {
        *g /= total;
    }
    Ok(Glcm {
        n,
        entries,
        offset: off,
    })
}

pub fn soft_glcm(img: &Image, off: Offset, bins: &BinGrid) -> Result<Glcm> {
    pair_window(img, off)?;
    let assign = soft_assign(img, bins)?;
    soft_glcm_from_assignment(&assign, img.dims(), off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Interval;
    use proptest::prelude::*;

    fn img(w: usize, h: usize, data: &[f64]) -> Image {
        Image::new(w, h, data.to_vec(), Interval::new(0.0, 7.0).unwrap()).unwrap()
    }

    fn off(d: f64, theta: f64) -> Offset {
        Offset::new(d, theta).unwrap()
    }

    #[test]
    fn displacements() {
        assert_eq!(off(1.0, 0.0).displacement(), (1, 0));
        assert_eq!(off(1.0, 90.0).displacement(), (0, 1));
        // round(0.7071) = 1 on both axes
        assert_eq!(off(1.0, 45.0).displacement(), (1, 1));
        assert_eq!(off(1.0, 135.0).displacement(), (-1, 1));
        assert_eq!(off(3.0, 45.0).displacement(), (2, 2));
        assert_eq!(off(5.0, 45.0).displacement(), (4, 4));
        assert_eq!(off(7.0, 135.0).displacement(), (-5, 5));
        assert_eq!(off(2.0, 180.0).displacement(), (-2, 0));
    }

    #[test]
    fn shift_masks_last_column() {
        let x = img(2, 2, &[0.0, 1.0, 2.0, 3.0]);
        let (s, mask) = shift_image(&x, off(1.0, 0.0)).unwrap();
        assert_eq!(mask, vec![true, false, true, false]);
        assert_eq!(s.data()[0], 1.0);
        assert_eq!(s.data()[2], 3.0);
    }

    #[test]
    fn two_by_two_hard_glcm() {
        let x = img(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let bins = BinGrid::ordinal(2, 0.05).unwrap();
        let g = hard_glcm(&x, off(1.0, 0.0), &bins).unwrap();
        assert_eq!(g.entries(), &[0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn constant_image_is_a_delta() {
        let x = img(5, 4, &[3.0; 20]);
        let bins = BinGrid::ordinal(8, 0.05).unwrap();
        for o in [off(1.0, 0.0), off(3.0, 45.0), off(2.0, 90.0)] {
            let g = hard_glcm(&x, o, &bins).unwrap();
            assert_eq!(g.get(3, 3), 1.0);
            assert_eq!(g.sum(), 1.0);
            let s = soft_glcm(&x, o, &bins).unwrap();
            assert!((s.get(3, 3) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_offsets() {
        let x = img(1, 1, &[0.0]);
        let bins = BinGrid::ordinal(2, 0.5).unwrap();
        assert!(matches!(
            hard_glcm(&x, off(1.0, 0.0), &bins),
            Err(Error::DegenerateGlcm { .. })
        ));
        assert!(matches!(
            soft_glcm(&x, off(1.0, 0.0), &bins),
            Err(Error::DegenerateGlcm { .. })
        ));
    }

    #[test]
    fn soft_assignment_values() {
        let bins = BinGrid::ordinal(8, 0.5).unwrap();
        let x = Image::new(1, 1, vec![0.0], Interval::new(0.0, 7.0).unwrap()).unwrap();
        let a = soft_assign(&x, &bins).unwrap();
        let denom: f64 = (0..8).map(|k| (-(k as f64).powi(2) * 2.0).exp()).sum();
        assert!((a.row(0)[0] - 1.0 / denom).abs() < 1e-15);
        assert!((a.row(0)[0] - 0.88053).abs() < 1e-5);
        assert!((a.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mid = Image::new(1, 1, vec![2.5], Interval::new(0.0, 7.0).unwrap()).unwrap();
        let a = soft_assign(&mid, &bins).unwrap();
        assert!((a.row(0)[2] - a.row(0)[3]).abs() < 1e-15);

        let sharp = BinGrid::ordinal(8, 1e-3).unwrap();
        let a = soft_assign(&img(1, 1, &[4.0]), &sharp).unwrap();
        assert_eq!(a.row(0)[4], 1.0);
        assert_eq!(a.row(0).iter().filter(|&&w| w == 0.0).count(), 7);
    }

    #[test]
    fn far_outside_values_do_not_underflow() {
        let bins = BinGrid::ordinal(4, 0.01).unwrap();
        let x = Image::new(1, 1, vec![1e3], Interval::new(0.0, 1e4).unwrap()).unwrap();
        let a = soft_assign(&x, &bins).unwrap();
        assert_eq!(a.row(0)[3], 1.0);
    }

    #[test]
    fn soft_matches_hard_on_worked_example() {
        let x = img(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let bins = BinGrid::ordinal(2, 0.05).unwrap();
        let h = hard_glcm(&x, off(1.0, 0.0), &bins).unwrap();
        let s = soft_glcm(&x, off(1.0, 0.0), &bins).unwrap();
        assert!(h.max_abs_diff(&s) <= 1e-9);
    }

    #[test]
    fn nearest_bin_ties_go_low() {
        let bins = BinGrid::ordinal(4, 0.5).unwrap();
        assert_eq!(bins.nearest(1.5), 1);
        assert_eq!(bins.nearest(1.50001), 2);
        assert_eq!(bins.nearest(-3.0), 0);
        assert_eq!(bins.nearest(9.0), 3);
    }

    #[test]
    fn exports() {
        let g = Glcm::from_entries(2, vec![0.5, 0.5, 0.0, 0.0], off(1.0, 0.0)).unwrap();
        assert_eq!(g.to_csv(), "0.5,0.5\n0,0\n");
        let j = g.to_json();
        assert_eq!(j["n"], 2);
        assert_eq!(j["entries"][0][1], 0.5);
        assert_eq!(j["theta"], 0.0);
    }

    #[test]
    fn uniform_bins_end_exactly() {
        let b = BinGrid::uniform(-1.0, 1.0, 8, 0.5).unwrap();
        assert_eq!(b.centers()[0], -1.0);
        assert_eq!(b.centers()[7], 1.0);
        assert!(BinGrid::new(vec![0.0, 0.0], 0.5).is_err());
        assert!(BinGrid::ordinal(1, 0.5).is_err());
        assert!(BinGrid::ordinal(3, 0.0).is_err());
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (2usize..7, 2usize..7).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0u8..8, w * h)
                .prop_map(move |v| img(w, h, &v.iter().map(|&x| x as f64).collect::<Vec<_>>()))
        })
    }

    proptest! {
        #[test]
        fn soft_sums_to_one(x in arb_image(), sigma in 0.05f64..2.0, jitter in -0.4f64..0.4) {
            let data: Vec<f64> = x.data().iter().map(|v| (v + jitter).clamp(0.0, 7.0)).collect();
            let x = x.with_data(data).unwrap();
            let bins = BinGrid::ordinal(8, sigma).unwrap();
            let g = soft_glcm(&x, off(1.0, 0.0), &bins).unwrap();
            prop_assert!((g.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(g.entries().iter().all(|&e| e >= 0.0));
        }

        #[test]
        fn opposite_offset_transposes(x in arb_image(), theta in prop_oneof![Just(0.0), Just(45.0), Just(90.0), Just(135.0)]) {
            let bins = BinGrid::ordinal(8, 0.5).unwrap();
            let a = hard_glcm(&x, off(1.0, theta), &bins).unwrap();
            let b = hard_glcm(&x, off(1.0, theta + 180.0), &bins).unwrap();
            prop_assert!(a.max_abs_diff(&b.transpose()) <= 1e-15);
        }

        #[test]
        fn row_permutation_keeps_horizontal_glcm(x in arb_image(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let (w, h) = x.dims();
            let mut order: Vec<usize> = (0..h).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let data: Vec<f64> = order.iter().flat_map(|&r| x.data()[r * w..(r + 1) * w].to_vec()).collect();
            let y = x.with_data(data).unwrap();
            let bins = BinGrid::ordinal(8, 0.5).unwrap();
            let a = hard_glcm(&x, off(1.0, 0.0), &bins).unwrap();
            let b = hard_glcm(&y, off(1.0, 0.0), &bins).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= 1e-15);
        }

        #[test]
        fn soft_glcm_is_continuous(x in arb_image(), idx in 0usize..4, dx in -1e-4f64..1e-4) {
            let bins = BinGrid::ordinal(8, 0.5).unwrap();
            let mut data = x.data().to_vec();
            data[idx] = (data[idx] - dx.abs()).max(0.0) + 0.0;
            let base = x.with_data(data.clone()).unwrap();
            data[idx] = (data[idx] + dx.abs()).min(7.0);
            let moved = x.with_data(data).unwrap();
            let a = soft_glcm(&base, off(1.0, 0.0), &bins).unwrap();
            let b = soft_glcm(&moved, off(1.0, 0.0), &bins).unwrap();
            // |dw/dx| <= 1/sigma per weight; two weights per pair
            prop_assert!(a.max_abs_diff(&b) <= 10.0 * 2.0 * dx.abs() + 1e-15);
        }
    }
}
