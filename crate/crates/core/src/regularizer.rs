//! The discrete PDE-constrained seminorm `PV_B(u) = Σ_pixels |(B u)(pixel)|_p`,
//! its dual certificates and the pointwise dual-ball projections.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Image, JetField};
use crate::operator::OperatorSpec;

/// Pointwise norm applied to each pixel's jet vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NormChoice {
    L1,
    #[default]
    L2,
    LInf,
}

impl NormChoice {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormChoice::L1 => v.iter().map(|x| x.abs()).sum(),
            NormChoice::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormChoice::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// The dual norm: ℓ∞ for ℓ1, ℓ2 for ℓ2, ℓ1 for ℓ∞.
    pub fn dual(self) -> NormChoice {
        match self {
            NormChoice::L1 => NormChoice::LInf,
            NormChoice::L2 => NormChoice::L2,
            NormChoice::LInf => NormChoice::L1,
        }
    }

    pub fn dual_norm(self, v: &[f64]) -> f64 {
        self.dual().norm(v)
    }
}

impl fmt::Display for NormChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormChoice::L1 => "1",
            NormChoice::L2 => "2",
            NormChoice::LInf => "inf",
        })
    }
}

impl FromStr for NormChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(NormChoice::L1),
            "2" => Ok(NormChoice::L2),
            "inf" | "Inf" | "infinity" => Ok(NormChoice::LInf),
            other => Err(Error::InvalidParameter(format!(
                "norm must be 1, 2 or inf, got `{other}`"
            ))),
        }
    }
}

impl TryFrom<String> for NormChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NormChoice> for String {
    fn from(n: NormChoice) -> String {
        n.to_string()
    }
}

/// Sum of pointwise `p`-norms of an already-applied jet field.
pub fn field_norm_sum(field: &JetField, norm: NormChoice) -> f64 {
    field.pixels().map(|px| norm.norm(px)).sum()
}

pub fn pv(spec: &OperatorSpec, img: &Image, norm: NormChoice) -> f64 {
    field_norm_sum(&spec.apply(img), norm)
}

/// Largest pointwise dual norm of `field`.
pub fn max_dual_norm(field: &JetField, norm: NormChoice) -> f64 {
    field
        .pixels()
        .map(|px| norm.dual_norm(px))
        .fold(0.0, f64::max)
}

/// `⟨img, B* field⟩`, a lower bound on `pv` for every field inside the unit dual ball.
pub fn dual_certificate(
    spec: &OperatorSpec,
    img: &Image,
    field: &JetField,
    norm: NormChoice,
) -> Result<f64> {
    let worst = max_dual_norm(field, norm);
    if worst > 1.0 + 1e-9 {
        return Err(Error::InfeasibleDual(worst));
    }
    Ok(img.dot(&spec.adjoint(field)?))
}

/// The unit-dual-norm field attaining `⟨B u, v⟩ = pv(u)`.
pub fn optimal_certificate_field(spec: &OperatorSpec, img: &Image, norm: NormChoice) -> JetField {
    let mut field = spec.apply(img);
    for px in field.pixels_mut() {
        match norm {
            NormChoice::L2 => {
                let n = NormChoice::L2.norm(px);
                if n > 0.0 {
                    px.iter_mut().for_each(|x| *x /= n);
                }
            }
            NormChoice::L1 => px
                .iter_mut()
                .for_each(|x| *x = if *x == 0.0 { 0.0 } else { x.signum() }),
            NormChoice::LInf => {
                let (arg, peak) = px.iter().enumerate().fold((0, 0.0f64), |best, (i, x)| {
                    if x.abs() > best.1 {
                        (i, x.abs())
                    } else {
                        best
                    }
                });
                let sign = px[arg].signum();
                px.iter_mut().for_each(|x| *x = 0.0);
                if peak > 0.0 {
                    px[arg] = sign;
                }
            }
        }
    }
    field
}

/// Projects one vector onto the ball `{ |v|_dual ≤ radius }` in place.
pub(crate) fn project_pixel(px: &mut [f64], radius: f64, norm: NormChoice, scratch: &mut Vec<f64>) {
    match norm {
        NormChoice::L2 => {
            let n = NormChoice::L2.norm(px);
            if n > radius {
                let s = radius / n;
                px.iter_mut().for_each(|x| *x *= s);
            }
        }
        NormChoice::L1 => px.iter_mut().for_each(|x| *x = x.clamp(-radius, radius)),
        NormChoice::LInf => project_l1_ball(px, radius, scratch),
    }
}

/// Sort-based exact projection onto the ℓ1 ball.
fn project_l1_ball(px: &mut [f64], radius: f64, scratch: &mut Vec<f64>) {
    let total: f64 = px.iter().map(|x| x.abs()).sum();
    if total <= radius {
        return;
    }
    if radius == 0.0 {
        px.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    scratch.clear();
    scratch.extend(px.iter().map(|x| x.abs()));
    scratch.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (j, &mu) in scratch.iter().enumerate() {
        cumulative += mu;
        let candidate = (cumulative - radius) / (j + 1) as f64;
        if mu - candidate > 0.0 {
            shift = candidate;
        } else {
            break;
        }
    }
    for x in px.iter_mut() {
        *x = x.signum() * (x.abs() - shift).max(0.0);
    }
}

pub(crate) fn project_in_place(field: &mut JetField, radius: f64, norm: NormChoice) {
    let mut scratch = Vec::with_capacity(field.channels());
    for px in field.pixels_mut() {
        project_pixel(px, radius, norm, &mut scratch);
    }
}

/// Pointwise projection onto the dual-norm ball of `radius`.
pub fn dual_ball_project(field: &JetField, radius: f64, norm: NormChoice) -> Result<JetField> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "projection radius must be >= 0, got {radius}"
        )));
    }
    let mut out = field.clone();
    project_in_place(&mut out, radius, norm);
    Ok(out)
}

/// L² projection onto constant images: every pixel becomes the mean.
pub fn kernel_project_gradient(img: &Image) -> Image {
    Image::from_raw(img.width(), img.height(), vec![img.mean(); img.len()])
}
