//! Grayscale image container and the CT preprocessing chain
//! (HU windowing, normalization, resizing).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "interval requires finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[-1, 1]`, the normalized intensity range used throughout the pipeline.
    pub fn symmetric_unit() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Radiological display window in Hounsfield units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuWindow {
    pub center: f64,
    pub width: f64,
}

impl HuWindow {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && center.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "HU window width must be positive, got {width}"
            )));
        }
        Ok(Self { center, width })
    }

    /// Lung window: center -500 HU, width 1400 HU.
    pub fn lung() -> Self {
        Self {
            center: -500.0,
            width: 1400.0,
        }
    }

    pub fn floor(&self) -> f64 {
        self.center - self.width / 2.0
    }

    pub fn ceiling(&self) -> f64 {
        self.center + self.width / 2.0
    }
}

impl Default for HuWindow {
    fn default() -> Self {
        Self::lung()
    }
}

/// Row-major grayscale image with a declared value range.
///
/// Pixel `(u, v)` is column `u`, row `v`; it lives at `data[v * width + u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
    range: Interval,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>, range: Interval) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if !(range.lo < range.hi) {
            return Err(Error::InvalidImage("value range requires lo < hi".into()));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || !range.contains(**v))
        {
            return Err(Error::InvalidImage(format!(
                "sample {i} = {v} is non-finite or outside [{}, {}]",
                range.lo, range.hi
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            range,
        })
    }

    /// Builds an image after clamping every sample into `range`.
    pub fn from_clamped(
        width: usize,
        height: usize,
        mut data: Vec<f64>,
        range: Interval,
    ) -> Result<Self> {
        for v in &mut data {
            *v = range.clamp(*v);
        }
        Self::new(width, height, data, range)
    }

    pub fn constant(width: usize, height: usize, value: f64, range: Interval) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], range)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn range(&self) -> Interval {
        self.range
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy with sample `idx` replaced; the value must stay inside the range.
    pub fn with_sample(&self, idx: usize, value: f64) -> Result<Self> {
        let mut data = self.data.clone();
        data[idx] = value;
        Self::new(self.width, self.height, data, self.range)
    }

    /// Copy with the same geometry and new samples.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, data, self.range)
    }

    /// Same samples, different declared range.
    pub fn with_range(&self, range: Interval) -> Result<Self> {
        Self::new(self.width, self.height, self.data.clone(), range)
    }

    /// `t×t` crop with top-left corner at `(u0, v0)`.
    pub fn crop(&self, u0: usize, v0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || u0 + w > self.width || v0 + h > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {w}x{h} at ({u0},{v0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for v in v0..v0 + h {
            data.extend_from_slice(&self.data[v * self.width + u0..v * self.width + u0 + w]);
        }
        Self::new(w, h, data, self.range)
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }
}

/// Clamps HU values to the window and maps the window affinely onto `target`.
pub fn hu_window_normalize(img: &Image, win: HuWindow, target: Interval) -> Result<Image> {
    let (floor, ceil) = (win.floor(), win.ceiling());
    let data = img
        .data()
        .iter()
        .map(|&hu| {
            let t = (hu.clamp(floor, ceil) - floor) / win.width;
            // endpoints map exactly; the clamp absorbs rounding in between
            target.clamp(target.lo + t * target.width())
        })
        .collect();
    Image::new(img.width(), img.height(), data, target)
}

/// Corner-aligned bilinear resampling: output corners coincide with input corners.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter(format!(
            "output size must be positive, got {out_w}x{out_h}"
        )));
    }
    let (w, h) = img.dims();
    let src_coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_in == 1 {
            return (0, 0, 0.0);
        }
        let s = if n_out == 1 {
            (n_in - 1) as f64 / 2.0
        } else {
            (i * (n_in - 1)) as f64 / (n_out - 1) as f64
        };
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let lerp = |a: f64, b: f64, t: f64| -> f64 {
        let r = a + t * (b - a);
        r.clamp(a.min(b), a.max(b))
    };

    let cols: Vec<_> = (0..out_w).map(|u| src_coord(u, w, out_w)).collect();
    let mut data = Vec::with_capacity(out_w * out_h);
    for v in 0..out_h {
        let (v0, v1, tv) = src_coord(v, h, out_h);
        for &(u0, u1, tu) in &cols {
            let top = lerp(img.get(u0, v0), img.get(u1, v0), tu);
            let bottom = lerp(img.get(u0, v1), img.get(u1, v1), tu);
            data.push(lerp(top, bottom, tv));
        }
    }
    Image::new(out_w, out_h, data, img.range())
}

/// Affine map of `img.range()` onto `target`.
pub fn rescale(img: &Image, target: Interval) -> Result<Image> {
    let src = img.range();
    let scale = target.width() / src.width();
    let data = img
        .data()
        .iter()
        .map(|&v| target.clamp(target.lo + (v - src.lo) * scale))
        .collect();
    Image::new(img.width(), img.height(), data, target)
}

/// Window, normalize, then resize.
pub fn preprocess_ct(
    hu: &Image,
    win: HuWindow,
    target: Interval,
    out_w: usize,
    out_h: usize,
) -> Result<Image> {
    let normalized = hu_window_normalize(hu, win, target)?;
    if normalized.dims() == (out_w, out_h) {
        return Ok(normalized);
    }
    resize_bilinear(&normalized, out_w, out_h)
}
