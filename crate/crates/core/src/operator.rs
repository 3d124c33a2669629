//! Mixed-order differential operators `B u = Σ_h B^h (H^h u)`.
//!
//! An [`OperatorSpec`] holds one square coefficient block per order, block
//! `h` acting on the `2^h` partials of order `h` at each pixel. Parametric
//! collections of operators are described by [`OperatorFamily`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, block_offset, channel_count, Image, JetField};

/// Coefficient blocks `B^1, …, B^d` of a differential operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDoc", into = "SpecDoc")]
pub struct OperatorSpec {
    /// Row-major blocks; block `h - 1` is `2^h × 2^h`.
    blocks: Vec<Vec<f64>>,
}

/// On-disk layout: `{"d": 1, "blocks": [[[1, 0], [0, 1]]]}`.
#[derive(Serialize, Deserialize)]
struct SpecDoc {
    d: usize,
    blocks: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<SpecDoc> for OperatorSpec {
    type Error = Error;

    fn try_from(doc: SpecDoc) -> Result<Self> {
        if doc.blocks.len() != doc.d {
            return Err(Error::InvalidParameter(format!(
                "d = {} but {} blocks given",
                doc.d,
                doc.blocks.len()
            )));
        }
        OperatorSpec::from_rows(doc.blocks)
    }
}

impl From<OperatorSpec> for SpecDoc {
    fn from(spec: OperatorSpec) -> Self {
        let blocks = spec
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| b.chunks(1 << (i + 1)).map(<[f64]>::to_vec).collect())
            .collect();
        SpecDoc {
            d: spec.order(),
            blocks,
        }
    }
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl OperatorSpec {
    /// Builds a spec from flat row-major blocks.
    pub fn new(blocks: Vec<Vec<f64>>) -> Result<Self> {
        grid::check_order(blocks.len())?;
        for (i, block) in blocks.iter().enumerate() {
            let n = 1usize << (i + 1);
            if block.len() != n * n {
                return Err(Error::BlockShape {
                    index: i + 1,
                    expected: n,
                });
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("operator block"));
            }
        }
        Ok(Self { blocks })
    }

    /// Builds a spec from nested row arrays.
    pub fn from_rows(blocks: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let mut flat = Vec::with_capacity(blocks.len());
        for (i, rows) in blocks.into_iter().enumerate() {
            let n = 1usize << (i + 1);
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::BlockShape {
                    index: i + 1,
                    expected: n,
                });
            }
            flat.push(rows.into_iter().flatten().collect());
        }
        Self::new(flat)
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(
            (1..=d)
                .map(|h| {
                    let n = 1usize << h;
                    (0..n * n)
                        .map(|k| if k / n == k % n { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect(),
        )
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new((1..=d).map(|h| vec![0.0; 1 << (2 * h)]).collect())
    }

    /// First-order operator with the single 2×2 block `[[a, b], [c, e]]`.
    pub fn first_order(a: f64, b: f64, c: f64, e: f64) -> Result<Self> {
        Self::new(vec![vec![a, b, c, e]])
    }

    pub fn order(&self) -> usize {
        self.blocks.len()
    }

    /// Total channel count `K`.
    pub fn channels(&self) -> usize {
        channel_count(self.order())
    }

    /// Row-major block for order `h` (1-based).
    pub fn block(&self, h: usize) -> &[f64] {
        &self.blocks[h - 1]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    /// Multiplies each order block of every pixel by its coefficient matrix,
    /// transposed when `transpose` is set.
    fn mix_blocks(&self, field: &mut JetField, transpose: bool) {
        let mut scratch = [0.0; 8];
        for px in field.pixels_mut() {
            for (i, block) in self.blocks.iter().enumerate() {
                let h = i + 1;
                let n = 1usize << h;
                let slot = &mut px[block_offset(h)..block_offset(h) + n];
                for r in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        let coef = if transpose {
                            block[c * n + r]
                        } else {
                            block[r * n + c]
                        };
                        acc += coef * slot[c];
                    }
                    scratch[r] = acc;
                }
                slot.copy_from_slice(&scratch[..n]);
            }
        }
    }

    /// `B u`: the Hessian stack followed by per-pixel block multiplication.
    pub fn apply(&self, img: &Image) -> JetField {
        let mut field =
            grid::hessian_stack(img, self.order()).expect("order validated at construction");
        self.mix_blocks(&mut field, false);
        field
    }

    /// `B* v = Σ_h (H^h)*((B^h)ᵀ v_h)`.
    pub fn adjoint(&self, field: &JetField) -> Result<Image> {
        if field.channels() != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                actual: field.channels(),
            });
        }
        let mut mixed = field.clone();
        self.mix_blocks(&mut mixed, true);
        grid::hessian_adjoint(&mixed, self.order())
    }

    /// `Σ_h max |B^h_self − B^h_other|`.
    pub fn linf_distance(&self, other: &OperatorSpec) -> Result<f64> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch(self.order(), other.order()));
        }
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            })
            .sum())
    }

    /// `Σ_h max |B^h|`, the distance to the zero operator.
    pub fn linf_norm(&self) -> f64 {
        self.blocks.iter().map(|b| max_abs(b)).sum()
    }

    /// Inverses of all blocks, or `None` if any block is singular.
    pub fn block_inverses(&self) -> Option<Vec<Vec<f64>>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| invert(b, 1 << (i + 1)))
            .collect()
    }

    /// True iff every block is invertible with inverse entries bounded by `p` in magnitude.
    pub fn sigma_p_admissible(&self, p: f64) -> bool {
        match self.block_inverses() {
            Some(inverses) => inverses.iter().all(|inv| max_abs(inv) <= p),
            None => false,
        }
    }

    /// Constant `c = d·√K·P·|a − b|` with `|PV_a(u) − PV_b(u)| ≤ c·min(PV_a(u), PV_b(u))`
    /// for operators admissible at level `p`.
    pub fn continuity_modulus(a: &OperatorSpec, b: &OperatorSpec, p: f64) -> Result<f64> {
        let distance = a.linf_distance(b)?;
        if !(p > 0.0) || !a.sigma_p_admissible(p) || !b.sigma_p_admissible(p) {
            return Err(Error::Inadmissible(p));
        }
        let d = a.order() as f64;
        let k = a.channels() as f64;
        Ok(d * k.sqrt() * p * distance)
    }
}

/// Gauss–Jordan inverse of an `n × n` row-major matrix with partial pivoting.
///
/// Singular when `|det| < 1e-12 · scale^n`, `scale` the largest entry magnitude.
fn invert(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = max_abs(m);
    if scale == 0.0 {
        return None;
    }
    let mut a = m.to_vec();
    let mut inv: Vec<f64> = (0..n * n)
        .map(|k| if k / n == k % n { 1.0 } else { 0.0 })
        .collect();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        if p == 0.0 {
            return None;
        }
        for k in 0..n {
            a[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        a[row * n + k] -= f * a[col * n + k];
                        inv[row * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
    }
    if det.abs() < 1e-12 * scale.powi(n as i32) {
        None
    } else {
        Some(inv)
    }
}

/// The parametric shapes an [`OperatorFamily`] can take.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    /// The single operator `[1, 0; 0, 1]` (plain total variation).
    Identity,
    /// `B_s = [1, s; 0, 1]`.
    UpperShear,
    /// `B_{s,t} = [1, s; t, 1]`.
    FullShear,
    /// `B(θ) = base + Σ_i θ_i · directions[i]`.
    CustomAffine {
        base: OperatorSpec,
        directions: Vec<OperatorSpec>,
    },
}

/// A box-parameterized collection of operators of one fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyDoc", into = "FamilyDoc")]
pub struct OperatorFamily {
    kind: FamilyKind,
    bounds: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct FamilyDoc {
    label: String,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<OperatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    directions: Option<Vec<OperatorSpec>>,
}

impl TryFrom<FamilyDoc> for OperatorFamily {
    type Error = Error;

    fn try_from(doc: FamilyDoc) -> Result<Self> {
        let bounds = doc
            .bounds
            .map(|b| b.into_iter().map(|[lo, hi]| (lo, hi)).collect());
        let kind = match doc.label.as_str() {
            "identity" => FamilyKind::Identity,
            "upper-shear" => FamilyKind::UpperShear,
            "full-shear" => FamilyKind::FullShear,
            "custom-affine" => FamilyKind::CustomAffine {
                base: doc.base.ok_or_else(|| {
                    Error::InvalidParameter("custom-affine family needs `base`".into())
                })?,
                directions: doc.directions.unwrap_or_default(),
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown family label `{other}`"
                )))
            }
        };
        match bounds {
            Some(b) => OperatorFamily::new(kind, b),
            None => OperatorFamily::with_default_box(kind),
        }
    }
}

impl From<OperatorFamily> for FamilyDoc {
    fn from(family: OperatorFamily) -> Self {
        let label = family.label().to_string();
        let bounds = Some(family.bounds.iter().map(|&(lo, hi)| [lo, hi]).collect());
        let (base, directions) = match family.kind {
            FamilyKind::CustomAffine { base, directions } => (Some(base), Some(directions)),
            _ => (None, None),
        };
        FamilyDoc {
            label,
            bounds,
            base,
            directions,
        }
    }
}

impl OperatorFamily {
    pub fn new(kind: FamilyKind, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let dim = match &kind {
            FamilyKind::Identity => 0,
            FamilyKind::UpperShear => 1,
            FamilyKind::FullShear => 2,
            FamilyKind::CustomAffine { base, directions } => {
                if let Some(bad) = directions.iter().find(|s| s.order() != base.order()) {
                    return Err(Error::OrderMismatch(base.order(), bad.order()));
                }
                directions.len()
            }
        };
        if bounds.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "family needs {dim} parameter intervals, got {}",
                bounds.len()
            )));
        }
        if let Some(&(lo, hi)) = bounds
            .iter()
            .find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return Err(Error::InvalidParameter(format!(
                "invalid interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { kind, bounds })
    }

    /// Shear families default to `[-0.5, 0.5]` per parameter.
    pub fn with_default_box(kind: FamilyKind) -> Result<Self> {
        let dim = match &kind {
            FamilyKind::Identity => 0,
            FamilyKind::UpperShear => 1,
            FamilyKind::FullShear => 2,
            FamilyKind::CustomAffine { directions, .. } => directions.len(),
        };
        Self::new(kind, vec![(-0.5, 0.5); dim])
    }

    pub fn identity() -> Self {
        Self::with_default_box(FamilyKind::Identity).expect("valid")
    }

    pub fn upper_shear(lo: f64, hi: f64) -> Result<Self> {
        Self::new(FamilyKind::UpperShear, vec![(lo, hi)])
    }

    pub fn full_shear(lo: f64, hi: f64) -> Result<Self> {
        Self::new(FamilyKind::FullShear, vec![(lo, hi), (lo, hi)])
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            FamilyKind::Identity => "identity",
            FamilyKind::UpperShear => "upper-shear",
            FamilyKind::FullShear => "full-shear",
            FamilyKind::CustomAffine { .. } => "custom-affine",
        }
    }

    pub fn parameter_dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn order(&self) -> usize {
        match &self.kind {
            FamilyKind::CustomAffine { base, .. } => base.order(),
            _ => 1,
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.bounds.len()
            && theta
                .iter()
                .zip(&self.bounds)
                .all(|(&t, &(lo, hi))| lo <= t && t <= hi)
    }

    pub fn materialize(&self, theta: &[f64]) -> Result<OperatorSpec> {
        if !self.contains(theta) {
            return Err(Error::OutsideBox(theta.to_vec()));
        }
        match &self.kind {
            FamilyKind::Identity => OperatorSpec::identity(1),
            FamilyKind::UpperShear => OperatorSpec::first_order(1.0, theta[0], 0.0, 1.0),
            FamilyKind::FullShear => OperatorSpec::first_order(1.0, theta[0], theta[1], 1.0),
            FamilyKind::CustomAffine { base, directions } => {
                let mut blocks = base.blocks().to_vec();
                for (dir, &t) in directions.iter().zip(theta) {
                    for (b, db) in blocks.iter_mut().zip(dir.blocks()) {
                        for (x, dx) in b.iter_mut().zip(db) {
                            *x += t * dx;
                        }
                    }
                }
                OperatorSpec::new(blocks)
            }
        }
    }

    /// Corners of the parameter box (one empty point for a zero-dimensional box).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let m = self.bounds.len();
        (0..1usize << m)
            .map(|mask| {
                self.bounds
                    .iter()
                    .enumerate()
                    .map(|(i, &(lo, hi))| if mask >> i & 1 == 1 { hi } else { lo })
                    .collect()
            })
            .collect()
    }

    /// Reports members with `|B|_ℓ∞ > 1`.
    ///
    /// The norm is convex along the affine parameterization, so checking the
    /// box corners suffices.
    pub fn normalization_warning(&self) -> Option<String> {
        let worst = self
            .corners()
            .iter()
            .filter_map(|c| self.materialize(c).ok())
            .map(|s| s.linf_norm())
            .fold(0.0, f64::max);
        (worst > 1.0 + 1e-12).then(|| {
            format!(
                "family `{}` contains operators with |B|_inf = {worst:.4} > 1",
                self.label()
            )
        })
    }
}
