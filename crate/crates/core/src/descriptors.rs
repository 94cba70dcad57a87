//! Haralick descriptors `h(G) = Σ f(i,j)·G(i,j)` and their derivatives
//! with respect to the GLCM entries.
//!
//! Indices `i, j` are bin ordinals `0..n`, not bin-center values.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glcm::{hard_glcm, soft_assign, soft_glcm_from_assignment, BinGrid, Glcm};
use crate::image::Image;
use crate::mste::{GlcmMode, OffsetGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    Contrast,
    Homogeneity,
    Correlation,
    AngularSecondMoment,
}

impl DescriptorKind {
    pub const ALL: [DescriptorKind; 4] = [
        DescriptorKind::Contrast,
        DescriptorKind::Homogeneity,
        DescriptorKind::Correlation,
        DescriptorKind::AngularSecondMoment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DescriptorKind::Contrast => "contrast",
            DescriptorKind::Homogeneity => "homogeneity",
            DescriptorKind::Correlation => "correlation",
            DescriptorKind::AngularSecondMoment => "asm",
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "contrast" => Ok(DescriptorKind::Contrast),
            "homogeneity" => Ok(DescriptorKind::Homogeneity),
            "correlation" => Ok(DescriptorKind::Correlation),
            "asm" | "angular_second_moment" => Ok(DescriptorKind::AngularSecondMoment),
            other => Err(Error::InvalidParameter(format!("unknown descriptor {other:?}"))),
        }
    }
}

/// Means and variances of the row (`i`) and column (`j`) marginals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlcmMarginals {
    pub mu_i: f64,
    pub mu_j: f64,
    pub var_i: f64,
    pub var_j: f64,
}

pub fn marginals(glcm: &Glcm) -> GlcmMarginals {
    let (rows, cols) = marginal_sums(glcm);
    let (mu_i, var_i) = moments(&rows);
    let (mu_j, var_j) = moments(&cols);
    GlcmMarginals {
        mu_i,
        mu_j,
        var_i,
        var_j,
    }
}

fn marginal_sums(glcm: &Glcm) -> (Vec<f64>, Vec<f64>) {
    let n = glcm.n();
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let g = glcm.get(i, j);
            rows[i] += g;
            cols[j] += g;
        }
    }
    (rows, cols)
}

fn moments(p: &[f64]) -> (f64, f64) {
    let mu: f64 = p.iter().enumerate().map(|(i, &w)| i as f64 * w).sum();
    let var = p
        .iter()
        .enumerate()
        .map(|(i, &w)| (i as f64 - mu).powi(2) * w)
        .sum::<f64>()
        .max(0.0);
    (mu, var)
}

/// Weight `f(i, j)` of the linear descriptors.
fn linear_weight(kind: DescriptorKind, i: usize, j: usize) -> f64 {
    let diff = i as f64 - j as f64;
    match kind {
        DescriptorKind::Contrast => diff * diff,
        DescriptorKind::Homogeneity => 1.0 / (1.0 + diff * diff),
        _ => unreachable!("not a linear descriptor"),
    }
}

pub fn descriptor(glcm: &Glcm, kind: DescriptorKind) -> Result<f64> {
    let n = glcm.n();
    match kind {
        DescriptorKind::Contrast | DescriptorKind::Homogeneity => {
            let mut h = 0.0;
            for i in 0..n {
                for j in 0..n {
                    h += linear_weight(kind, i, j) * glcm.get(i, j);
                }
            }
            Ok(h)
        }
        DescriptorKind::AngularSecondMoment => Ok(glcm.entries().iter().map(|g| g * g).sum()),
        DescriptorKind::Correlation => {
            let m = marginals(glcm);
            let denom = (m.var_i * m.var_j).sqrt();
            if !(denom > 0.0) {
                return Err(Error::UndefinedDescriptor { kind });
            }
            let mut cov = 0.0;
            for i in 0..n {
                for j in 0..n {
                    cov += (i as f64 - m.mu_i) * (j as f64 - m.mu_j) * glcm.get(i, j);
                }
            }
            Ok(cov / denom)
        }
    }
}

/// Value and `∂h/∂G(i,j)` (row-major), with every entry treated as a free
/// variable of the formula used in [`descriptor`].
pub fn descriptor_with_grad(glcm: &Glcm, kind: DescriptorKind) -> Result<(f64, Vec<f64>)> {
    let n = glcm.n();
    let mut grad = vec![0.0; n * n];
    let value = match kind {
        DescriptorKind::Contrast | DescriptorKind::Homogeneity => {
            let mut h = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let f = linear_weight(kind, i, j);
                    grad[i * n + j] = f;
                    h += f * glcm.get(i, j);
                }
            }
            h
        }
        DescriptorKind::AngularSecondMoment => {
            for (g, &e) in grad.iter_mut().zip(glcm.entries()) {
                *g = 2.0 * e;
            }
            glcm.entries().iter().map(|g| g * g).sum()
        }
        DescriptorKind::Correlation => {
            let (rows, cols) = marginal_sums(glcm);
            let (mu_i, var_i) = moments(&rows);
            let (mu_j, var_j) = moments(&cols);
            let denom = (var_i * var_j).sqrt();
            if !(denom > 0.0) {
                return Err(Error::UndefinedDescriptor { kind });
            }
            // first central moments; zero whenever the GLCM sums to one
            let ei: f64 = rows.iter().enumerate().map(|(i, &p)| (i as f64 - mu_i) * p).sum();
            let ej: f64 = cols.iter().enumerate().map(|(j, &p)| (j as f64 - mu_j) * p).sum();
            let mut cov = 0.0;
            for i in 0..n {
                for j in 0..n {
                    cov += (i as f64 - mu_i) * (j as f64 - mu_j) * glcm.get(i, j);
                }
            }
            let h = cov / denom;
            for a in 0..n {
                let (af, da) = (a as f64, a as f64 - mu_i);
                let dvar_i = da * da - 2.0 * af * ei;
                for b in 0..n {
                    let (bf, db) = (b as f64, b as f64 - mu_j);
                    let dcov = da * db - af * ej - bf * ei;
                    let dvar_j = db * db - 2.0 * bf * ej;
                    grad[a * n + b] = dcov / denom - 0.5 * h * (dvar_i / var_i + dvar_j / var_j);
                }
            }
            h
        }
    };
    Ok((value, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub kind: DescriptorKind,
    pub d: f64,
    pub theta: f64,
    pub delta: f64,
}

/// `|h(noisy) − h(clean)|` per descriptor and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityReport {
    /// Δh averaged over all offsets.
    pub fn mean_delta(&self, kind: DescriptorKind) -> f64 {
        let (sum, count) = self
            .rows
            .iter()
            .filter(|r| r.kind == kind)
            .fold((0.0, 0usize), |(s, c), r| (s + r.delta, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Descriptors sorted by decreasing mean Δh.
    pub fn ranking(&self) -> Vec<(DescriptorKind, f64)> {
        let mut out: Vec<_> = DescriptorKind::ALL
            .iter()
            .filter(|k| self.rows.iter().any(|r| r.kind == **k))
            .map(|&k| (k, self.mean_delta(k)))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("descriptor,d,theta,value\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.kind, r.d, r.theta, r.delta);
        }
        out
    }
}

pub fn noise_sensitivity_report(
    clean: &Image,
    noisy: &Image,
    bins: &BinGrid,
    grid: &OffsetGrid,
    mode: GlcmMode,
) -> Result<SensitivityReport> {
    clean.ensure_same_shape(noisy)?;
    let glcms = |img: &Image| -> Result<Vec<Glcm>> {
        match mode {
            GlcmMode::Hard => grid.offsets().map(|o| hard_glcm(img, o, bins)).collect(),
            GlcmMode::Soft => {
                let a = soft_assign(img, bins)?;
                grid.offsets()
                    .map(|o| soft_glcm_from_assignment(&a, img.dims(), o))
                    .collect()
            }
        }
    };
    let (gc, gn) = (glcms(clean)?, glcms(noisy)?);
    let mut rows = Vec::with_capacity(4 * gc.len());
    for kind in DescriptorKind::ALL {
        for (a, b) in gc.iter().zip(&gn) {
            let off = a.offset();
            rows.push(SensitivityRow {
                kind,
                d: off.d,
                theta: off.theta,
                delta: (descriptor(b, kind)? - descriptor(a, kind)?).abs(),
            });
        }
    }
    Ok(SensitivityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glcm::Offset;
    use proptest::prelude::*;

    fn g(n: usize, e: &[f64]) -> Glcm {
        Glcm::from_entries(n, e.to_vec(), Offset::new(1.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn delta_glcm() {
        let mut e = vec![0.0; 16];
        e[2 * 4 + 2] = 1.0;
        let d = g(4, &e);
        assert_eq!(descriptor(&d, DescriptorKind::Contrast).unwrap(), 0.0);
        assert_eq!(descriptor(&d, DescriptorKind::Homogeneity).unwrap(), 1.0);
        assert_eq!(descriptor(&d, DescriptorKind::AngularSecondMoment).unwrap(), 1.0);
        assert!(matches!(
            descriptor(&d, DescriptorKind::Correlation),
            Err(Error::UndefinedDescriptor { .. })
        ));
        let m = marginals(&d);
        assert_eq!((m.mu_i, m.mu_j, m.var_i, m.var_j), (2.0, 2.0, 0.0, 0.0));
    }

    #[test]
    fn worked_example() {
        let w = g(2, &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(descriptor(&w, DescriptorKind::Contrast).unwrap(), 0.5);
        assert_eq!(descriptor(&w, DescriptorKind::AngularSecondMoment).unwrap(), 0.5);
        assert_eq!(descriptor(&w, DescriptorKind::Homogeneity).unwrap(), 0.75);
        let m = marginals(&w);
        assert_eq!((m.mu_i, m.mu_j, m.var_i, m.var_j), (0.0, 0.5, 0.0, 0.25));
    }

    #[test]
    fn uniform_glcm() {
        let u = g(2, &[0.25; 4]);
        let m = marginals(&u);
        assert_eq!((m.mu_i, m.mu_j, m.var_i, m.var_j), (0.5, 0.5, 0.25, 0.25));
        let n = 5;
        let u = g(n, &vec![1.0 / 25.0; 25]);
        let asm = descriptor(&u, DescriptorKind::AngularSecondMoment).unwrap();
        assert!((asm - 1.0 / 25.0).abs() < 1e-15);
        assert!(descriptor(&u, DescriptorKind::Correlation).unwrap().abs() < 1e-15);
    }

    #[test]
    fn perfectly_correlated_diagonal() {
        let c = g(3, &[1.0 / 3.0, 0.0, 0.0, 0.0, 1.0 / 3.0, 0.0, 0.0, 0.0, 1.0 / 3.0]);
        assert!((descriptor(&c, DescriptorKind::Correlation).unwrap() - 1.0).abs() < 1e-12);
        let a = g(2, &[0.0, 0.5, 0.5, 0.0]);
        assert!((descriptor(&a, DescriptorKind::Correlation).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn parses_kinds() {
        assert_eq!("ASM".parse::<DescriptorKind>().unwrap(), DescriptorKind::AngularSecondMoment);
        assert!("entropy".parse::<DescriptorKind>().is_err());
    }

    fn arb_glcm(n: usize) -> impl Strategy<Value = Glcm> {
        proptest::collection::vec(0.01f64..1.0, n * n).prop_map(move |v| {
            let s: f64 = v.iter().sum();
            g(n, &v.iter().map(|x| x / s).collect::<Vec<_>>())
        })
    }

    proptest! {
        #[test]
        fn descriptor_ranges(glcm in arb_glcm(4)) {
            let c = descriptor(&glcm, DescriptorKind::Contrast).unwrap();
            let h = descriptor(&glcm, DescriptorKind::Homogeneity).unwrap();
            let a = descriptor(&glcm, DescriptorKind::AngularSecondMoment).unwrap();
            let r = descriptor(&glcm, DescriptorKind::Correlation).unwrap();
            prop_assert!(c >= 0.0);
            prop_assert!(h > 0.0 && h <= 1.0 + 1e-12);
            prop_assert!(a > 0.0 && a <= 1.0);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }

        #[test]
        fn linear_descriptors_are_linear(a in arb_glcm(3), b in arb_glcm(3), alpha in 0.0f64..1.0) {
            let mix: Vec<f64> = a.entries().iter().zip(b.entries()).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
            let mix = g(3, &mix);
            for kind in [DescriptorKind::Contrast, DescriptorKind::Homogeneity] {
                let lhs = descriptor(&mix, kind).unwrap();
                let rhs = alpha * descriptor(&a, kind).unwrap() + (1.0 - alpha) * descriptor(&b, kind).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn entry_gradients_match_differences(glcm in arb_glcm(3), cell in 0usize..9) {
            for kind in DescriptorKind::ALL {
                let (_, grad) = descriptor_with_grad(&glcm, kind).unwrap();
                let h = 1e-6;
                let mut plus = glcm.entries().to_vec();
                let mut minus = plus.clone();
                plus[cell] += h;
                minus[cell] -= h;
                let fp = descriptor(&g(3, &plus), kind).unwrap();
                let fm = descriptor(&g(3, &minus), kind).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                prop_assert!((fd - grad[cell]).abs() < 1e-6 * (1.0 + fd.abs()), "{kind}: {fd} vs {}", grad[cell]);
            }
        }
    }
}
