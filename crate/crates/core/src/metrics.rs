//! Paired image-quality metrics (MSE, PSNR, SSIM) and contrast-to-noise ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// Which `MAX` enters the PSNR numerator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrPeak {
    /// Largest sample of the first (denoised) image.
    #[default]
    ObservedMax,
    /// Width of the first image's value range.
    RangeWidth,
    Fixed(f64),
}

/// `10·log10(MAX² / MSE)`; `f64::INFINITY` when the images are identical.
pub fn psnr(a: &Image, b: &Image, peak: PsnrPeak) -> Result<f64> {
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let max = match peak {
        PsnrPeak::ObservedMax => a.max(),
        PsnrPeak::RangeWidth => a.range().width(),
        PsnrPeak::Fixed(v) => v,
    };
    Ok(10.0 * (max * max / err).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    /// One evaluation over whole-image statistics.
    Global,
    /// Gaussian-weighted local statistics; the window is truncated and
    /// renormalized at the borders.
    Gaussian { size: usize, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
    pub window: SsimWindow,
}

impl SsimParams {
    /// `C1 = (0.01·L)²`, `C2 = (0.03·L)²`, Gaussian window 11 / σ 1.5.
    pub fn for_dynamic_range(l: f64) -> Self {
        Self {
            c1: (0.01 * l).powi(2),
            c2: (0.03 * l).powi(2),
            window: SsimWindow::Gaussian { size: 11, sigma: 1.5 },
        }
    }

    pub fn for_image(img: &Image) -> Self {
        Self::for_dynamic_range(img.range().width())
    }

    pub fn global(mut self) -> Self {
        self.window = SsimWindow::Global;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParameter("SSIM constants must be positive".into()));
        }
        if let SsimWindow::Gaussian { size, sigma } = self.window {
            if size == 0 || size % 2 == 0 || !(sigma > 0.0) {
                return Err(Error::InvalidParameter("SSIM window must be odd-sized with sigma > 0".into()));
            }
        }
        Ok(())
    }
}

/// Linear smoothing operator `K` with its adjoint.
enum Smoother {
    Global,
    Separable { rows: Vec<Vec<(usize, f64)>>, cols: Vec<Vec<(usize, f64)>> },
}

fn axis_weights(n: usize, size: usize, sigma: f64) -> Vec<Vec<(usize, f64)>> {
    let r = (size / 2) as isize;
    (0..n as isize)
        .map(|i| {
            let taps: Vec<(usize, f64)> = (-r..=r)
                .filter(|t| (0..n as isize).contains(&(i + t)))
                .map(|t| ((i + t) as usize, (-(t * t) as f64 / (2.0 * sigma * sigma)).exp()))
                .collect();
            let z: f64 = taps.iter().map(|(_, w)| w).sum();
            taps.into_iter().map(|(j, w)| (j, w / z)).collect()
        })
        .collect()
}

impl Smoother {
    fn new(window: SsimWindow, w: usize, h: usize) -> Self {
        match window {
            SsimWindow::Global => Smoother::Global,
            SsimWindow::Gaussian { size, sigma } => Smoother::Separable {
                rows: axis_weights(w, size, sigma),
                cols: axis_weights(h, size, sigma),
            },
        }
    }

    fn apply(&self, x: &[f64], w: usize, h: usize) -> Vec<f64> {
        match self {
            Smoother::Global => vec![x.iter().sum::<f64>() / x.len() as f64; x.len()],
            Smoother::Separable { rows, cols } => {
                let mut tmp = vec![0.0; w * h];
                for v in 0..h {
                    for (u, taps) in rows.iter().enumerate() {
                        tmp[v * w + u] = taps.iter().map(|&(j, k)| k * x[v * w + j]).sum();
                    }
                }
                let mut out = vec![0.0; w * h];
                for (v, taps) in cols.iter().enumerate() {
                    for u in 0..w {
                        out[v * w + u] = taps.iter().map(|&(j, k)| k * tmp[j * w + u]).sum();
                    }
                }
                out
            }
        }
    }

    fn adjoint(&self, y: &[f64], w: usize, h: usize) -> Vec<f64> {
        match self {
            Smoother::Global => vec![y.iter().sum::<f64>() / y.len() as f64; y.len()],
            Smoother::Separable { rows, cols } => {
                let mut tmp = vec![0.0; w * h];
                for (v, taps) in cols.iter().enumerate() {
                    for u in 0..w {
                        for &(j, k) in taps {
                            tmp[j * w + u] += k * y[v * w + u];
                        }
                    }
                }
                let mut out = vec![0.0; w * h];
                for v in 0..h {
                    for (u, taps) in rows.iter().enumerate() {
                        for &(j, k) in taps {
                            out[v * w + j] += k * tmp[v * w + u];
                        }
                    }
                }
                out
            }
        }
    }
}

/// Mean SSIM and, when requested, its gradient with respect to `a`.
pub(crate) fn ssim_with_grad(
    a: &Image,
    b: &Image,
    params: &SsimParams,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    a.ensure_same_shape(b)?;
    params.validate()?;
    let (w, h) = a.dims();
    let (xa, xb) = (a.data(), b.data());
    let k = Smoother::new(params.window, w, h);
    let mu_a = k.apply(xa, w, h);
    let mu_b = k.apply(xb, w, h);
    let sq = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..xa.len()).map(f).collect() };
    let e_aa = k.apply(&sq(&|i| xa[i] * xa[i]), w, h);
    let e_bb = k.apply(&sq(&|i| xb[i] * xb[i]), w, h);
    let e_ab = k.apply(&sq(&|i| xa[i] * xb[i]), w, h);
    let (c1, c2) = (params.c1, params.c2);

    let n = xa.len() as f64;
    let mut total = 0.0;
    let mut g_mu = vec![0.0; xa.len()];
    let mut g_aa = vec![0.0; xa.len()];
    let mut g_ab = vec![0.0; xa.len()];
    for i in 0..xa.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let n1 = 2.0 * ma * mb + c1;
        let n2 = 2.0 * cov + c2;
        let d1 = ma * ma + mb * mb + c1;
        let d2 = var_a + var_b + c2;
        let s = (n1 * n2) / (d1 * d2);
        total += s;
        if want_grad {
            let den = d1 * d2;
            // partials w.r.t. μa (with E[a²], E[ab] held fixed), E[a²], E[ab]
            let dn = 2.0 * mb * n2 + n1 * (-2.0 * mb);
            let dd = 2.0 * ma * d2 + d1 * (-2.0 * ma);
            g_mu[i] = (dn - s * dd) / den / n;
            g_aa[i] = -s * d1 / den / n;
            g_ab[i] = 2.0 * n1 / den / n;
        }
    }
    let value = total / n;
    if !value.is_finite() {
        return Err(Error::NumericOverflow("ssim"));
    }
    if !want_grad {
        return Ok((value, None));
    }
    let back_mu = k.adjoint(&g_mu, w, h);
    let back_aa = k.adjoint(&g_aa, w, h);
    let back_ab = k.adjoint(&g_ab, w, h);
    let grad = (0..xa.len())
        .map(|i| back_mu[i] + 2.0 * xa[i] * back_aa[i] + xb[i] * back_ab[i])
        .collect();
    Ok((value, Some(grad)))
}

pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    Ok(ssim_with_grad(a, b, params, false)?.0)
}

/// `|S_A − S_B| / σ_N`.
pub fn cnr(s_a: f64, s_b: f64, sigma_n: f64) -> Result<f64> {
    if !(sigma_n > 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma must be positive, got {sigma_n}")));
    }
    Ok((s_a - s_b).abs() / sigma_n)
}

pub fn snr(signal: f64, sigma_n: f64) -> Result<f64> {
    if !(sigma_n > 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma must be positive, got {sigma_n}")));
    }
    Ok(signal / sigma_n)
}

/// The `metrics` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedMetrics {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn paired_metrics(a: &Image, b: &Image, peak: PsnrPeak) -> Result<PairedMetrics> {
    Ok(PairedMetrics {
        mse: mse(a, b)?,
        psnr: psnr(a, b, peak)?,
        ssim: ssim(a, b, &SsimParams::for_image(b))?,
    })
}
