//! Seeded synthetic test images.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{Image, Interval};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Alternating squares of side `cell` at `lo_val` / `hi_val`.
pub fn checkerboard(
    width: usize,
    height: usize,
    cell: usize,
    lo_val: f64,
    hi_val: f64,
    range: Interval,
) -> Result<Image> {
    if cell == 0 {
        return Err(Error::InvalidParameter("checkerboard cell must be positive".into()));
    }
    let data = (0..height)
        .flat_map(|v| (0..width).map(move |u| if (u / cell + v / cell) % 2 == 0 { lo_val } else { hi_val }))
        .collect();
    Image::new(width, height, data, range)
}

/// Linear horizontal ramp spanning the range.
pub fn ramp(width: usize, height: usize, range: Interval) -> Result<Image> {
    let denom = (width.max(2) - 1) as f64;
    let data = (0..height)
        .flat_map(|_| (0..width).map(move |u| range.lo + range.width() * u as f64 / denom))
        .collect();
    Image::new(width, height, data, range)
}

/// Uniform noise image over the range.
pub fn uniform_noise(width: usize, height: usize, range: Interval, seed: u64) -> Result<Image> {
    use rand::Rng;
    let mut r = rng(seed);
    let data = (0..width * height).map(|_| r.random_range(range.lo..=range.hi)).collect();
    Image::new(width, height, data, range)
}

/// Adds i.i.d. Gaussian noise and clamps back into the range.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut r = rng(seed);
    let data = img.data().iter().map(|&x| x + normal.sample(&mut r)).collect();
    Image::from_clamped(img.width(), img.height(), data, img.range())
}

/// The denoising benchmark: a 32×32 checkerboard of 8-pixel squares at ±0.5
/// in [−1, 1], corrupted by noise with σ = 0.2 of the range width.
pub fn checkerboard_benchmark(seed: u64) -> Result<(Image, Image)> {
    let range = Interval::symmetric_unit();
    let clean = checkerboard(32, 32, 8, -0.5, 0.5, range)?;
    let noisy = add_gaussian_noise(&clean, 0.2 * range.width(), seed)?;
    Ok((clean, noisy))
}
