//! Analytic pixel gradients of the texture loss and a central-difference
//! checker.
//!
//! The backward pass runs the forward chain in reverse:
//!
//! ```text
//! x ─► soft assignment W ─► soft GLCM G(d,θ) ─► h(G) ─► |h − h_target| ─► aggregation ─► L
//! ```
//!
//! Every pixel enters each GLCM twice: as the anchor of its own pair and as
//! the shifted partner of the pixel at `p − (Δu, Δv)`. Both contributions are
//! accumulated into `∂L/∂W` before the per-pixel softmax Jacobian is applied.

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{attention_full, AggregationRule, AttentionGrads};
use crate::descriptors::{descriptor_with_grad, DescriptorKind};
use crate::error::{Error, Result};
use crate::glcm::{soft_assign, soft_glcm_from_assignment, BinGrid, Offset, PairWindow, SoftAssignment};
use crate::image::Image;
use crate::mste::{extract, GlcmMode, OffsetGrid, TextureRepr};

/// `∂L/∂x`, same layout as the image.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGradient {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl PixelGradient {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add_scaled(&mut self, other: &PixelGradient, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }
}

/// Everything produced by one loss evaluation.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub gradient: PixelGradient,
    /// Texture representation of the evaluated image.
    pub repr: TextureRepr,
    /// Present for the attention rule.
    pub attention: Option<AttentionGrads>,
}

/// Texture loss for one descriptor: grid, bins, descriptor and aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureLoss {
    pub grid: OffsetGrid,
    pub bins: BinGrid,
    pub kind: DescriptorKind,
    pub rule: AggregationRule,
}

impl TextureLoss {
    pub fn new(grid: OffsetGrid, bins: BinGrid, kind: DescriptorKind, rule: AggregationRule) -> Self {
        Self { grid, bins, kind, rule }
    }

    /// Soft-mode representation of a reference image.
    pub fn target(&self, reference: &Image) -> Result<TextureRepr> {
        extract(reference, &self.grid, &self.bins, self.kind, GlcmMode::Soft)
    }

    pub fn loss(&self, x: &Image, target: &TextureRepr) -> Result<f64> {
        let repr = extract(x, &self.grid, &self.bins, self.kind, GlcmMode::Soft)?;
        self.check_target(target)?;
        let deviation: Vec<f64> = repr.values.iter().zip(&target.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(self.rule.forward_backward(&deviation)?.0)
    }

    pub fn evaluate(&self, x: &Image, target: &TextureRepr) -> Result<LossEval> {
        self.check_target(target)?;
        let assign = soft_assign(x, &self.bins)?;
        let offsets: Vec<Offset> = self.grid.offsets().collect();
        let cells = offsets
            .par_iter()
            .map(|&off| {
                let glcm = soft_glcm_from_assignment(&assign, x.dims(), off)?;
                descriptor_with_grad(&glcm, self.kind).map_err(|e| match e {
                    Error::UndefinedDescriptor { kind } => Error::UndefinedDescriptorAt {
                        kind,
                        d: off.d,
                        theta: off.theta,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<(f64, Vec<f64>)>>>()?;

        let diff: Vec<f64> = cells.iter().zip(&target.values).map(|((h, _), t)| h - t).collect();
        let deviation: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
        let (loss, d_dev, attention) = match &self.rule {
            AggregationRule::Attention(p) => {
                let (l, g, pg) = attention_full(&deviation, p)?;
                (l, g, Some(pg))
            }
            rule => {
                let (l, g) = rule.forward_backward(&deviation)?;
                (l, g, None)
            }
        };
        if !loss.is_finite() {
            return Err(Error::NumericOverflow("texture loss"));
        }

        // ∂L/∂h per cell; |·| has subgradient 0 at 0
        let d_h: Vec<f64> = d_dev
            .iter()
            .zip(&diff)
            .map(|(g, d)| if *d > 0.0 { *g } else if *d < 0.0 { -*g } else { 0.0 })
            .collect();

        let n = self.bins.n();
        let (w, h) = x.dims();
        let partials: Vec<Option<Vec<f64>>> = offsets
            .par_iter()
            .zip(&cells)
            .zip(&d_h)
            .map(|((&off, (_, dh_dg)), &coef)| {
                if coef == 0.0 {
                    return None;
                }
                let window = PairWindow::new(w, h, off.displacement());
                let scale = coef / window.count() as f64;
                let m: Vec<f64> = dh_dg.iter().map(|g| g * scale).collect();
                Some(glcm_backward(&assign, &window, &m, n))
            })
            .collect();
        // fixed summation order keeps the result independent of scheduling
        let mut d_w = vec![0.0; w * h * n];
        for part in partials.into_iter().flatten() {
            for (a, b) in d_w.iter_mut().zip(&part) {
                *a += b;
            }
        }

        let gradient = PixelGradient {
            width: w,
            height: h,
            values: assignment_backward(x, &self.bins, &assign, &d_w),
        };
        Ok(LossEval {
            loss,
            gradient,
            repr: TextureRepr {
                values: cells.into_iter().map(|(h, _)| h).collect(),
                grid: self.grid.clone(),
                kind: self.kind,
            },
            attention,
        })
    }

    fn check_target(&self, target: &TextureRepr) -> Result<()> {
        if target.grid != self.grid || target.kind != self.kind || target.values.len() != self.grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// `∂L/∂W` contribution of one offset, given `M = ∂L/∂G` already divided by
/// the pair count.
fn glcm_backward(assign: &SoftAssignment, window: &PairWindow, m: &[f64], n: usize) -> Vec<f64> {
    let mut d_w = vec![0.0; assign.pixels() * n];
    for (p, q) in window.pairs() {
        let (wp, wq) = (assign.row(p), assign.row(q));
        for i in 0..n {
            let row = &m[i * n..(i + 1) * n];
            // anchor: Σ_j M[i][j]·w_q[j]
            d_w[p * n + i] += row.iter().zip(wq).map(|(a, b)| a * b).sum::<f64>();
            // partner: Σ_i M[i][j]·w_p[i], accumulated over i
            let wpi = wp[i];
            for (j, &mij) in row.iter().enumerate() {
                d_w[q * n + j] += mij * wpi;
            }
        }
    }
    d_w
}

/// Chains `∂L/∂w` through the normalized Gaussian weights of every pixel.
fn assignment_backward(x: &Image, bins: &BinGrid, assign: &SoftAssignment, d_w: &[f64]) -> Vec<f64> {
    let n = bins.n();
    let inv_var = 1.0 / (bins.sigma() * bins.sigma());
    x.data()
        .iter()
        .enumerate()
        .map(|(p, &xp)| {
            let w = assign.row(p);
            let g = &d_w[p * n..(p + 1) * n];
            // dz_k/dx = −(x − b_k)/σ²
            let dz: Vec<f64> = bins.centers().iter().map(|b| -(xp - b) * inv_var).collect();
            let mean_dz: f64 = w.iter().zip(&dz).map(|(a, b)| a * b).sum();
            w.iter()
                .zip(&dz)
                .zip(g)
                .map(|((wk, dzk), gk)| gk * wk * (dzk - mean_dz))
                .sum()
        })
        .collect()
}

/// Free-function form of [`TextureLoss::evaluate`].
pub fn loss_and_grad(
    x: &Image,
    target: &TextureRepr,
    grid: &OffsetGrid,
    bins: &BinGrid,
    kind: DescriptorKind,
    rule: &AggregationRule,
) -> Result<(f64, PixelGradient)> {
    let loss = TextureLoss::new(grid.clone(), bins.clone(), kind, rule.clone());
    let eval = loss.evaluate(x, target)?;
    Ok((eval.loss, eval.gradient))
}

/// Anything that can report a value and an analytic gradient.
pub trait Objective {
    fn value(&self, x: &Image) -> Result<f64>;
    fn value_and_grad(&self, x: &Image) -> Result<(f64, Vec<f64>)>;
}

/// Texture loss against a fixed target.
pub struct TextureObjective<'a> {
    pub loss: &'a TextureLoss,
    pub target: &'a TextureRepr,
}

impl Objective for TextureObjective<'_> {
    fn value(&self, x: &Image) -> Result<f64> {
        self.loss.loss(x, self.target)
    }

    fn value_and_grad(&self, x: &Image) -> Result<(f64, Vec<f64>)> {
        let e = self.loss.evaluate(x, self.target)?;
        Ok((e.loss, e.gradient.values))
    }
}

/// Adapter for closures: `value_and_grad` supplies the analytic side.
pub struct FnObjective<F, G> {
    pub value: F,
    pub value_and_grad: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&Image) -> Result<f64>,
    G: Fn(&Image) -> Result<(f64, Vec<f64>)>,
{
    fn value(&self, x: &Image) -> Result<f64> {
        (self.value)(x)
    }

    fn value_and_grad(&self, x: &Image) -> Result<(f64, Vec<f64>)> {
        (self.value_and_grad)(x)
    }
}

/// Relative errors are taken against `max(|analytic|, |numeric|, floor)`, where
/// the floor is `REL_FLOOR` or `REL_SCALE` times the largest gradient component,
/// whichever is larger. Without the scaled floor, a component that happens to
/// cross zero turns the O(h²) truncation error of the central difference into
/// an arbitrarily large relative error.
pub const REL_FLOOR: f64 = 1e-8;
pub const REL_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// `(u, v)` of the pixel with the largest relative error.
    pub worst_pixel: (usize, usize),
    pub step: f64,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_err < rel_tol
    }
}

/// Compares the analytic gradient with `(L(x + h·e_p) − L(x − h·e_p)) / 2h`
/// at every pixel. Probes must stay inside the image's value range.
pub fn finite_diff_check(x: &Image, objective: &dyn Objective, step: f64) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let (_, analytic) = objective.value_and_grad(x)?;
    if analytic.len() != x.len() {
        return Err(Error::InvalidParameter("gradient length does not match the image".into()));
    }
    let mut report = GradCheckReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst_pixel: (0, 0),
        step,
    };
    let mut probe = x.data().to_vec();
    let mut numerics = Vec::with_capacity(analytic.len());
    for p in 0..analytic.len() {
        let orig = probe[p];
        probe[p] = orig + step;
        let plus = objective.value(&x.with_data(probe.clone())?)?;
        probe[p] = orig - step;
        let minus = objective.value(&x.with_data(probe.clone())?)?;
        probe[p] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NumericOverflow("finite-difference probe"));
        }
        numerics.push((plus - minus) / (2.0 * step));
    }
    let scale = analytic.iter().chain(&numerics).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = REL_FLOOR.max(REL_SCALE * scale);
    for (p, (&a, &numeric)) in analytic.iter().zip(&numerics).enumerate() {
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(floor);
        report.max_abs_err = report.max_abs_err.max(abs);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_pixel = (p % x.width(), p / x.width());
        }
    }
    Ok(report)
}
