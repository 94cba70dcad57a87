//! Multi-scale texture extraction: one descriptor evaluated over every
//! `(d, θ)` of an offset grid, and the elementwise deviation between two such
//! representations.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{descriptor, DescriptorKind};
use crate::error::{Error, Result};
use crate::glcm::{hard_glcm, soft_assign, soft_glcm_from_assignment, BinGrid, Offset};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlcmMode {
    Hard,
    Soft,
}

impl FromStr for GlcmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(GlcmMode::Hard),
            "soft" => Ok(GlcmMode::Soft),
            other => Err(Error::InvalidParameter(format!("unknown GLCM mode {other:?}"))),
        }
    }
}

/// Distances `D` (rows) × angles `Θ` (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetGrid {
    distances: Vec<f64>,
    angles: Vec<f64>,
}

impl OffsetGrid {
    pub fn new(distances: Vec<f64>, angles: Vec<f64>) -> Result<Self> {
        if distances.is_empty() || angles.is_empty() {
            return Err(Error::InvalidParameter("offset grid needs at least one distance and one angle".into()));
        }
        for (name, set) in [("distances", &distances), ("angles", &angles)] {
            for (i, a) in set.iter().enumerate() {
                if !a.is_finite() || set[..i].contains(a) {
                    return Err(Error::InvalidParameter(format!("{name} must be finite and distinct")));
                }
            }
        }
        for &d in &distances {
            Offset::new(d, 0.0)?;
        }
        Ok(Self { distances, angles })
    }

    pub fn p(&self) -> usize {
        self.distances.len()
    }

    pub fn q(&self) -> usize {
        self.angles.len()
    }

    pub fn len(&self) -> usize {
        self.p() * self.q()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Offsets in row-major `(d_i, θ_j)` order.
    pub fn offsets(&self) -> impl Iterator<Item = Offset> + '_ {
        self.distances
            .iter()
            .flat_map(move |&d| self.angles.iter().map(move |&theta| Offset { d, theta }))
    }
}

impl Default for OffsetGrid {
    /// `D = {1, 3, 5, 7}`, `Θ = {0°, 45°, 90°, 135°}`.
    fn default() -> Self {
        Self {
            distances: vec![1.0, 3.0, 5.0, 7.0],
            angles: vec![0.0, 45.0, 90.0, 135.0],
        }
    }
}

/// `p × q` descriptor values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureRepr {
    pub values: Vec<f64>,
    pub grid: OffsetGrid,
    pub kind: DescriptorKind,
}

impl TextureRepr {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.q() + j]
    }

    fn compatible(&self, other: &TextureRepr) -> Result<()> {
        if self.grid != other.grid || self.kind != other.kind || self.values.len() != other.values.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Header rows list `D` and `Θ`, then `p` rows of `q` values.
    pub fn to_csv(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "# descriptor={}", self.kind);
        let _ = writeln!(out, "D,{}", join(self.grid.distances()));
        let _ = writeln!(out, "theta,{}", join(self.grid.angles()));
        for row in self.values.chunks(self.grid.q()) {
            let _ = writeln!(out, "{}", join(row));
        }
        out
    }
}

/// Elementwise `|H − Ĥ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaH {
    pub values: Vec<f64>,
    pub grid: OffsetGrid,
    pub kind: DescriptorKind,
}

impl DeltaH {
    /// Builds a deviation matrix directly; all values must be finite and `>= 0`.
    pub fn from_values(values: Vec<f64>, grid: OffsetGrid, kind: DescriptorKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("deviation entries must be finite and >= 0".into()));
        }
        Ok(Self { values, grid, kind })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn annotate(err: Error, off: Offset) -> Error {
    match err {
        Error::UndefinedDescriptor { kind } => Error::UndefinedDescriptorAt {
            kind,
            d: off.d,
            theta: off.theta,
        },
        other => other,
    }
}

pub fn extract(
    img: &Image,
    grid: &OffsetGrid,
    bins: &BinGrid,
    kind: DescriptorKind,
    mode: GlcmMode,
) -> Result<TextureRepr> {
    let offsets: Vec<Offset> = grid.offsets().collect();
    let assign = match mode {
        GlcmMode::Soft => Some(soft_assign(img, bins)?),
        GlcmMode::Hard => None,
    };
    let values = offsets
        .par_iter()
        .map(|&off| {
            let glcm = match &assign {
                Some(a) => soft_glcm_from_assignment(a, img.dims(), off)?,
                None => hard_glcm(img, off, bins)?,
            };
            descriptor(&glcm, kind).map_err(|e| annotate(e, off))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TextureRepr {
        values,
        grid: grid.clone(),
        kind,
    })
}

pub fn delta(hx: &TextureRepr, hy: &TextureRepr) -> Result<DeltaH> {
    hx.compatible(hy)?;
    let values = hx
        .values
        .iter()
        .zip(&hy.values)
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(DeltaH {
        values,
        grid: hx.grid.clone(),
        kind: hx.kind,
    })
}
