//! Pixel-space denoiser: gradient descent on the image itself.
//!
//! Stands in for training a generator. The objective is
//! `λ_pix·L1(x, noisy) + λ_txt·Σ_kinds L_txt(x) + λ_c·L_c(x, clean)` where the
//! texture target is the clean reference's soft representation and `L_c` is an
//! optional competitor loss (SSIM or Laplacian edge loss).

use std::fmt::Write as _;

use serde::Serialize;

use crate::aggregation::{AggregationRule, AttentionParams, RuleName};
use crate::descriptors::DescriptorKind;
use crate::error::{Error, Result};
use crate::glcm::BinGrid;
use crate::grad::TextureLoss;
use crate::image::Image;
use crate::metrics::{mse, psnr, ssim, ssim_with_grad, PsnrPeak, SsimParams};
use crate::mste::{OffsetGrid, TextureRepr};

pub const DEFAULT_EDGE_EPS2: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Gd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

/// Comparison losses evaluated against the clean reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Competitor {
    SsimL,
    Edge,
}

impl Competitor {
    pub fn name(self) -> &'static str {
        match self {
            Competitor::SsimL => "ssim_l",
            Competitor::Edge => "edge",
        }
    }

    /// Weights used alongside the texture loss in the original experiments.
    pub fn default_weight(self) -> f64 {
        match self {
            Competitor::SsimL => 1.0,
            Competitor::Edge => 10.0,
        }
    }
}

impl std::str::FromStr for Competitor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssim_l" | "ssim-l" | "ssim" => Ok(Competitor::SsimL),
            "edge" => Ok(Competitor::Edge),
            other => Err(Error::InvalidParameter(format!("unknown competitor loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub rule: AggregationRule,
    pub kinds: Vec<DescriptorKind>,
    pub grid: OffsetGrid,
    pub bins: BinGrid,
    pub lambda_txt: f64,
    /// Weight of the L1 anchor to the noisy input.
    pub lambda_pix: f64,
    pub competitor: Option<(Competitor, f64)>,
    pub train_attention: bool,
    /// Seeds attention initialization when a configuration builds its own rule.
    pub seed: u64,
    /// Peak used for the PSNR column of the trace.
    pub psnr_peak: PsnrPeak,
}

impl OptimConfig {
    /// Settings goldened on the checkerboard benchmark.
    pub fn benchmark() -> Self {
        Self {
            steps: 200,
            lr: 1e-2,
            optimizer: Optimizer::ADAM,
            rule: AggregationRule::AVERAGE,
            kinds: vec![DescriptorKind::Contrast],
            grid: OffsetGrid::default(),
            bins: BinGrid::uniform(-1.0, 1.0, 16, 0.1).expect("static bin grid"),
            lambda_txt: 1.0,
            lambda_pix: 0.0,
            competitor: None,
            train_attention: false,
            seed: 0,
            psnr_peak: PsnrPeak::RangeWidth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", self.lr)));
        }
        let weights = [self.lambda_txt, self.lambda_pix, self.competitor.map_or(0.0, |c| c.1)];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("loss weights must be finite and non-negative".into()));
        }
        if self.lambda_txt > 0.0 && self.kinds.is_empty() {
            return Err(Error::InvalidParameter("texture loss needs at least one descriptor".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(Error::InvalidParameter("Adam needs β1, β2 in [0,1) and ε > 0".into()));
            }
        }
        if let AggregationRule::Attention(p) = &self.rule {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub l_txt: f64,
    pub total: f64,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    pub records: Vec<TraceRecord>,
    /// Step whose iterate was returned (lowest total objective).
    pub best_step: usize,
    /// Attention parameters after optimization, for the attention rule.
    pub attention: Option<AttentionParams>,
}

impl OptimTrace {
    pub fn initial(&self) -> &TraceRecord {
        &self.records[0]
    }

    pub fn best(&self) -> &TraceRecord {
        &self.records[self.best_step]
    }

    /// Fraction of steps where the objective did not increase.
    pub fn monotone_fraction(&self) -> f64 {
        let steps = self.records.len().saturating_sub(1);
        if steps == 0 {
            return 1.0;
        }
        let ok = self.records.windows(2).filter(|w| w[1].total <= w[0].total).count();
        ok as f64 / steps as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,l_txt,l_total,psnr\n");
        for r in &self.records {
            let p = r.psnr.map_or(String::new(), |p| if p.is_infinite() { "inf".into() } else { p.to_string() });
            let _ = writeln!(out, "{},{},{},{}", r.step, r.l_txt, r.total, p);
        }
        out
    }
}

/// `1 − SSIM(a, b)` with the default windowed parameters for `b`'s range.
pub fn ssim_loss(a: &Image, b: &Image) -> Result<f64> {
    Ok(1.0 - ssim(a, b, &SsimParams::for_image(b))?)
}

/// `1 − SSIM(a, b)` and its gradient with respect to `a`.
pub fn ssim_loss_with_grad(a: &Image, b: &Image) -> Result<(f64, Vec<f64>)> {
    let (s, g) = ssim_with_grad(a, b, &SsimParams::for_image(b), true)?;
    let g = g.expect("gradient requested");
    Ok((1.0 - s, g.into_iter().map(|v| -v).collect()))
}

/// 5-point Laplacian with zero padding. The operator is symmetric.
fn laplacian(x: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |u: isize, v: isize| -> f64 {
        if u < 0 || v < 0 || u >= w as isize || v >= h as isize {
            0.0
        } else {
            x[v as usize * w + u as usize]
        }
    };
    let mut out = vec![0.0; w * h];
    for v in 0..h as isize {
        for u in 0..w as isize {
            out[v as usize * w + u as usize] =
                at(u - 1, v) + at(u + 1, v) + at(u, v - 1) + at(u, v + 1) - 4.0 * at(u, v);
        }
    }
    out
}

/// Charbonnier distance between Laplacians: `√(‖∇²a − ∇²b‖² + ε²)`.
pub fn edge_loss(a: &Image, b: &Image, eps2: f64) -> Result<f64> {
    Ok(edge_loss_with_grad(a, b, eps2)?.0)
}

pub fn edge_loss_with_grad(a: &Image, b: &Image, eps2: f64) -> Result<(f64, Vec<f64>)> {
    a.ensure_same_shape(b)?;
    if !(eps2 >= 0.0) {
        return Err(Error::InvalidParameter("eps2 must be non-negative".into()));
    }
    let (w, h) = a.dims();
    let la = laplacian(a.data(), w, h);
    let lb = laplacian(b.data(), w, h);
    let r: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x - y).collect();
    let loss = (r.iter().map(|v| v * v).sum::<f64>() + eps2).sqrt();
    if loss == 0.0 {
        return Ok((0.0, vec![0.0; r.len()]));
    }
    let grad = laplacian(&r, w, h).into_iter().map(|v| v / loss).collect();
    Ok((loss, grad))
}

/// Evaluates the full objective at one iterate.
struct Problem<'a> {
    cfg: &'a OptimConfig,
    noisy: &'a Image,
    clean: &'a Image,
    losses: Vec<(TextureLoss, TextureRepr)>,
}

struct StepEval {
    l_txt: f64,
    total: f64,
    pixel_grad: Vec<f64>,
    attention_grad: Option<Vec<f64>>,
}

fn flatten_attention(p: &AttentionParams) -> Vec<f64> {
    let mut v = p.wq.clone();
    v.extend_from_slice(&p.wk);
    v.push(p.wv);
    v.push(p.gamma);
    v
}

fn unflatten_attention(cq: usize, v: &[f64]) -> Result<AttentionParams> {
    AttentionParams::new(v[..cq].to_vec(), v[cq..2 * cq].to_vec(), v[2 * cq], v[2 * cq + 1])
}

impl<'a> Problem<'a> {
    fn new(cfg: &'a OptimConfig, noisy: &'a Image, clean: &'a Image) -> Result<Self> {
        let losses = if cfg.lambda_txt > 0.0 {
            cfg.kinds
                .iter()
                .map(|&k| {
                    let tl = TextureLoss::new(cfg.grid.clone(), cfg.bins.clone(), k, cfg.rule.clone());
                    let target = tl.target(clean)?;
                    Ok((tl, target))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self { cfg, noisy, clean, losses })
    }

    fn set_rule(&mut self, rule: &AggregationRule) {
        for (tl, _) in &mut self.losses {
            tl.rule = rule.clone();
        }
    }

    fn eval(&self, x: &Image) -> Result<StepEval> {
        let n = x.len();
        let mut grad = vec![0.0; n];
        let mut attention_grad: Option<Vec<f64>> = None;
        let mut l_txt = 0.0;
        for (tl, target) in &self.losses {
            let ev = tl.evaluate(x, target)?;
            l_txt += ev.loss;
            for (g, v) in grad.iter_mut().zip(&ev.gradient.values) {
                *g += self.cfg.lambda_txt * v;
            }
            if let Some(ag) = ev.attention {
                let flat = flatten_attention(&AttentionParams {
                    cq: ag.wq.len(),
                    wq: ag.wq,
                    wk: ag.wk,
                    wv: ag.wv,
                    gamma: ag.gamma,
                });
                let acc = attention_grad.get_or_insert_with(|| vec![0.0; flat.len()]);
                for (a, v) in acc.iter_mut().zip(flat) {
                    *a += self.cfg.lambda_txt * v;
                }
            }
        }
        let mut total = self.cfg.lambda_txt * l_txt;

        if self.cfg.lambda_pix > 0.0 {
            let mut l1 = 0.0;
            for ((g, a), b) in grad.iter_mut().zip(x.data()).zip(self.noisy.data()) {
                let d = a - b;
                l1 += d.abs();
                let s = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
                *g += self.cfg.lambda_pix * s / n as f64;
            }
            total += self.cfg.lambda_pix * l1 / n as f64;
        }

        if let Some((comp, weight)) = self.cfg.competitor {
            let (l, g) = match comp {
                Competitor::SsimL => ssim_loss_with_grad(x, self.clean)?,
                Competitor::Edge => edge_loss_with_grad(x, self.clean, DEFAULT_EDGE_EPS2)?,
            };
            total += weight * l;
            for (a, v) in grad.iter_mut().zip(g) {
                *a += weight * v;
            }
        }
        Ok(StepEval {
            l_txt,
            total,
            pixel_grad: grad,
            attention_grad,
        })
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

fn apply_step(opt: Optimizer, lr: f64, params: &mut [f64], grad: &[f64], state: &mut AdamState) {
    match opt {
        Optimizer::Gd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let c1 = 1.0 - beta1.powi(state.t);
            let c2 = 1.0 - beta2.powi(state.t);
            for i in 0..params.len() {
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let m_hat = state.m[i] / c1;
                let v_hat = state.v[i] / c2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Optimizes pixel values starting from `noisy`.
///
/// Every iterate is clamped to the value range. The returned image is the
/// iterate with the lowest total objective, so the objective never ends above
/// its starting value.
pub fn denoise_pixels(noisy: &Image, clean_ref: &Image, cfg: &OptimConfig) -> Result<(Image, OptimTrace)> {
    cfg.validate()?;
    noisy.ensure_same_shape(clean_ref)?;
    let mut problem = Problem::new(cfg, noisy, clean_ref)?;
    let range = noisy.range();

    let mut x = noisy.clone();
    let mut rule = cfg.rule.clone();
    let mut attn: Option<Vec<f64>> = match (&rule, cfg.train_attention) {
        (AggregationRule::Attention(p), true) => Some(flatten_attention(p)),
        _ => None,
    };
    let mut pix_state = AdamState::new(x.len());
    let mut attn_state = AdamState::new(attn.as_ref().map_or(0, Vec::len));

    let mut records = Vec::with_capacity(cfg.steps + 1);
    let mut best: Option<(f64, usize, Image, AggregationRule)> = None;
    for step in 0..=cfg.steps {
        let ev = problem.eval(&x)?;
        if !ev.total.is_finite() || ev.pixel_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step });
        }
        records.push(TraceRecord {
            step,
            l_txt: ev.l_txt,
            total: ev.total,
            psnr: Some(psnr(&x, clean_ref, cfg.psnr_peak)?),
        });
        if best.as_ref().is_none_or(|b| ev.total < b.0) {
            best = Some((ev.total, step, x.clone(), rule.clone()));
        }
        if step == cfg.steps {
            break;
        }

        let mut data = x.data().to_vec();
        apply_step(cfg.optimizer, cfg.lr, &mut data, &ev.pixel_grad, &mut pix_state);
        for v in &mut data {
            *v = range.clamp(*v);
        }
        x = x.with_data(data)?;

        if let (Some(theta), Some(g)) = (attn.as_mut(), ev.attention_grad.as_ref()) {
            apply_step(cfg.optimizer, cfg.lr, theta, g, &mut attn_state);
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { step: step + 1 });
            }
            if let AggregationRule::Attention(p) = &rule {
                rule = AggregationRule::Attention(unflatten_attention(p.cq, theta)?);
            }
            problem.set_rule(&rule);
        }
    }

    let (_, best_step, image, best_rule) = best.expect("at least one evaluation");
    let attention = match best_rule {
        AggregationRule::Attention(p) => Some(p),
        _ => None,
    };
    Ok((
        image,
        OptimTrace {
            records,
            best_step,
            attention,
        },
    ))
}

/// One row of a loss comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub config: String,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn get(&self, config: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.config == config)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,mse,psnr,ssim\n");
        for r in &self.rows {
            let p = if r.psnr.is_infinite() { "inf".to_string() } else { r.psnr.to_string() };
            let _ = writeln!(out, "{},{},{},{}", r.config, r.mse, p, r.ssim);
        }
        out
    }
}

/// Runs the denoiser once per configuration and scores each result against
/// `clean_ref`.
///
/// Rows: `input` (the noisy image, unoptimized), `baseline` (anchor only, when
/// `base.lambda_pix > 0`), one per competitor and one `mstlf-<rule>` per rule.
/// Competitor rows use their conventional weights; texture rows use
/// `base.lambda_txt`.
pub fn compare_losses(
    noisy: &Image,
    clean_ref: &Image,
    base: &OptimConfig,
    rules: &[RuleName],
    competitors: &[Competitor],
) -> Result<CompareReport> {
    let score = |config: String, img: &Image| -> Result<CompareRow> {
        Ok(CompareRow {
            config,
            mse: mse(img, clean_ref)?,
            psnr: psnr(img, clean_ref, base.psnr_peak)?,
            ssim: ssim(img, clean_ref, &SsimParams::for_image(clean_ref))?,
        })
    };
    let mut rows = vec![score("input".into(), noisy)?];
    let no_texture = OptimConfig {
        lambda_txt: 0.0,
        competitor: None,
        ..base.clone()
    };
    if base.lambda_pix > 0.0 {
        let (img, _) = denoise_pixels(noisy, clean_ref, &no_texture)?;
        rows.push(score("baseline".into(), &img)?);
    }
    for &c in competitors {
        let cfg = OptimConfig {
            competitor: Some((c, c.default_weight())),
            ..no_texture.clone()
        };
        let (img, _) = denoise_pixels(noisy, clean_ref, &cfg)?;
        rows.push(score(c.name().into(), &img)?);
    }
    for &r in rules {
        let cfg = OptimConfig {
            rule: r.build(base.grid.len(), base.seed)?,
            competitor: None,
            ..base.clone()
        };
        let (img, _) = denoise_pixels(noisy, clean_ref, &cfg)?;
        let name = cfg.rule.name();
        rows.push(score(format!("mstlf-{name}"), &img)?);
    }
    Ok(CompareReport { rows })
}
