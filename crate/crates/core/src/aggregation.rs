//! Reduction of the deviation matrix `ΔH` to the scalar texture loss.
//!
//! Static rules (max, mean, Frobenius norm) have no parameters. The attention
//! rule treats `ΔH` as a one-channel map of `s = p·q` positions, projects it
//! with bias-free 1×1 convolutions to queries/keys (`cq` channels) and values
//! (one channel), and returns
//!
//! ```text
//! L = Σ_i (γ·(A·V)_i + ΔH_i),   A = row_softmax(QᵀK)
//! ```
//!
//! Flattening is row-major on both the way in and the way out.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mste::DeltaH;

/// Parameters of the attention aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub cq: usize,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: f64,
    pub gamma: f64,
}

impl AttentionParams {
    pub fn new(wq: Vec<f64>, wk: Vec<f64>, wv: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            cq: wq.len(),
            wq,
            wk,
            wv,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cq == 0 || self.wq.len() != self.cq || self.wk.len() != self.cq {
            return Err(Error::InvalidParameter(format!(
                "attention weights must have cq = {} entries each",
                self.cq
            )));
        }
        let finite = self
            .wq
            .iter()
            .chain(&self.wk)
            .chain([&self.wv, &self.gamma])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("attention weights must be finite".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

/// γ = 0, projection weights i.i.d. uniform in `(−1/√cq, 1/√cq)`.
pub fn init_attention(cq: usize, seed: u64) -> Result<AttentionParams> {
    if cq == 0 {
        return Err(Error::InvalidParameter("cq must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (cq as f64).sqrt();
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-bound..bound)).collect() };
    let wq = draw(cq);
    let wk = draw(cq);
    let wv = draw(1)[0];
    Ok(AttentionParams {
        cq,
        wq,
        wk,
        wv,
        gamma: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticRule {
    Max,
    Average,
    Frobenius,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggregationRule {
    Static(StaticRule),
    Attention(AttentionParams),
}

impl AggregationRule {
    pub const MAX: AggregationRule = AggregationRule::Static(StaticRule::Max);
    pub const AVERAGE: AggregationRule = AggregationRule::Static(StaticRule::Average);
    pub const FROBENIUS: AggregationRule = AggregationRule::Static(StaticRule::Frobenius);

    pub fn name(&self) -> &'static str {
        match self {
            AggregationRule::Static(StaticRule::Max) => "max",
            AggregationRule::Static(StaticRule::Average) => "average",
            AggregationRule::Static(StaticRule::Frobenius) => "frobenius",
            AggregationRule::Attention(_) => "attention",
        }
    }

    /// Loss and `∂L/∂ΔH` for a flattened deviation matrix.
    pub fn forward_backward(&self, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            AggregationRule::Static(rule) => Ok(static_with_grad(values, *rule)),
            AggregationRule::Attention(params) => {
                let pass = attention_pass(values, params)?;
                Ok((pass.loss, pass.input_grad))
            }
        }
    }

    pub fn aggregate(&self, dh: &DeltaH) -> Result<f64> {
        match self {
            AggregationRule::Static(rule) => Ok(aggregate_static(dh, *rule)),
            AggregationRule::Attention(params) => aggregate_attention(dh, params).map(|(l, _)| l),
        }
    }
}

impl fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rule name as given on a command line; attention still needs parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Max,
    Average,
    Frobenius,
    Attention,
}

impl RuleName {
    pub const ALL: [RuleName; 4] = [RuleName::Max, RuleName::Average, RuleName::Frobenius, RuleName::Attention];

    /// Attention rules are initialized with `init_attention(cq, seed)`.
    pub fn build(self, cq: usize, seed: u64) -> Result<AggregationRule> {
        Ok(match self {
            RuleName::Max => AggregationRule::MAX,
            RuleName::Average => AggregationRule::AVERAGE,
            RuleName::Frobenius => AggregationRule::FROBENIUS,
            RuleName::Attention => AggregationRule::Attention(init_attention(cq, seed)?),
        })
    }
}

impl FromStr for RuleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" | "maximum" => Ok(RuleName::Max),
            "average" | "avg" | "mean" => Ok(RuleName::Average),
            "frobenius" | "frob" => Ok(RuleName::Frobenius),
            "attention" | "att" => Ok(RuleName::Attention),
            other => Err(Error::InvalidParameter(format!("unknown aggregation rule {other:?}"))),
        }
    }
}

pub fn aggregate_static(dh: &DeltaH, rule: StaticRule) -> f64 {
    static_with_grad(&dh.values, rule).0
}

fn static_with_grad(values: &[f64], rule: StaticRule) -> (f64, Vec<f64>) {
    let s = values.len();
    let mut grad = vec![0.0; s];
    let loss = match rule {
        StaticRule::Max => {
            // first maximal cell in row-major order carries the subgradient
            let (arg, max) = values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(ai, am), (i, &v)| if v > am { (i, v) } else { (ai, am) });
            grad[arg] = 1.0;
            max
        }
        StaticRule::Average => {
            grad.fill(1.0 / s as f64);
            values.iter().sum::<f64>() / s as f64
        }
        StaticRule::Frobenius => {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (g, v) in grad.iter_mut().zip(values) {
                    *g = v / norm;
                }
            }
            norm
        }
    };
    (loss, grad)
}

/// Intermediates of one attention evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    /// `s × s` attention map, row-major; row `i` is query position `i`.
    pub attention: Vec<f64>,
    /// `ΔH' = γ·A·V + ΔH`, flattened row-major.
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: f64,
    pub gamma: f64,
}

struct AttentionPass {
    loss: f64,
    trace: AttentionTrace,
    params: AttentionGrads,
    input_grad: Vec<f64>,
}

fn attention_pass(x: &[f64], p: &AttentionParams) -> Result<AttentionPass> {
    p.validate()?;
    let s = x.len();
    let cq = p.cq;
    // Q, K: cq × s
    let q: Vec<f64> = p.wq.iter().flat_map(|&w| x.iter().map(move |&xi| w * xi)).collect();
    let k: Vec<f64> = p.wk.iter().flat_map(|&w| x.iter().map(move |&xi| w * xi)).collect();
    let v: Vec<f64> = x.iter().map(|&xi| p.wv * xi).collect();

    let mut a = vec![0.0; s * s];
    for i in 0..s {
        let row = &mut a[i * s..(i + 1) * s];
        for (j, r) in row.iter_mut().enumerate() {
            *r = (0..cq).map(|c| q[c * s + i] * k[c * s + j]).sum();
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for r in row.iter_mut() {
            *r = (*r - m).exp();
            total += *r;
        }
        for r in row.iter_mut() {
            *r /= total;
        }
    }
    let av: Vec<f64> = (0..s)
        .map(|i| a[i * s..(i + 1) * s].iter().zip(&v).map(|(aij, vj)| aij * vj).sum())
        .collect();
    let output: Vec<f64> = av.iter().zip(x).map(|(avi, xi)| p.gamma * avi + xi).collect();
    let loss: f64 = output.iter().sum();
    if !loss.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("attention aggregation"));
    }

    // backward from dL/dout = 1
    let d_gamma: f64 = av.iter().sum();
    let mut d_v = vec![0.0; s];
    let mut d_s = vec![0.0; s * s];
    for i in 0..s {
        let row = &a[i * s..(i + 1) * s];
        // dA[i][j] = γ·V[j]
        let mean: f64 = row.iter().zip(&v).map(|(aij, vj)| aij * p.gamma * vj).sum();
        for j in 0..s {
            d_v[j] += p.gamma * row[j];
            d_s[i * s + j] = row[j] * (p.gamma * v[j] - mean);
        }
    }
    let mut d_wq = vec![0.0; cq];
    let mut d_wk = vec![0.0; cq];
    let mut input_grad = vec![1.0; s];
    for c in 0..cq {
        for i in 0..s {
            let dq: f64 = (0..s).map(|j| d_s[i * s + j] * k[c * s + j]).sum();
            let dk: f64 = (0..s).map(|j| d_s[j * s + i] * q[c * s + j]).sum();
            d_wq[c] += dq * x[i];
            d_wk[c] += dk * x[i];
            input_grad[i] += dq * p.wq[c] + dk * p.wk[c];
        }
    }
    let d_wv: f64 = d_v.iter().zip(x).map(|(d, xi)| d * xi).sum();
    for (g, d) in input_grad.iter_mut().zip(&d_v) {
        *g += d * p.wv;
    }

    Ok(AttentionPass {
        loss,
        trace: AttentionTrace { attention: a, output },
        params: AttentionGrads {
            wq: d_wq,
            wk: d_wk,
            wv: d_wv,
            gamma: d_gamma,
        },
        input_grad,
    })
}

pub fn aggregate_attention(dh: &DeltaH, params: &AttentionParams) -> Result<(f64, AttentionTrace)> {
    let pass = attention_pass(&dh.values, params)?;
    Ok((pass.loss, pass.trace))
}

pub fn attention_param_gradients(dh: &DeltaH, params: &AttentionParams) -> Result<AttentionGrads> {
    Ok(attention_pass(&dh.values, params)?.params)
}

/// Loss, input gradient and parameter gradients in one pass.
pub fn attention_full(
    values: &[f64],
    params: &AttentionParams,
) -> Result<(f64, Vec<f64>, AttentionGrads)> {
    let pass = attention_pass(values, params)?;
    Ok((pass.loss, pass.input_grad, pass.params))
}
