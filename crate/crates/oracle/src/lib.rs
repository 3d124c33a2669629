//! Reference implementations that exist only to check `pvb`.
//!
//! Everything here is deliberately slow and size-capped:
//!
//! * [`dense_assemble`] builds the matrix of `B` from Kronecker products of
//!   1-D difference matrices, independently of the stencil loops in `pvb`.
//! * [`dual_reference_solve`] solves the denoising problem through its
//!   smooth dual by accelerated projected gradient, with its own ball
//!   projections and a step taken from a dense SVD.
//! * [`randomized_pv_lower_bound`] collects dual certificates.
//!
//! The recovery `u = u_η − ½·B*φ` used by the dual solver is the
//! stationarity condition of `‖u − u_η‖² + ⟨B u, φ⟩` in `u`.

use nalgebra::{DMatrix, DVector};
use pvb::{Image, JetField, NormChoice, OperatorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest grid (in pixels) the dense oracles accept.
pub const MAX_PIXELS: usize = 256;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid of {0} pixels exceeds the oracle cap of {MAX_PIXELS}")]
    TooLarge(usize),
    #[error("alpha must be > 0 for the dual reference solve")]
    NonPositiveAlpha,
    #[error(transparent)]
    Core(#[from] pvb::Error),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleParams {
    pub max_iterations: usize,
    /// Stop once the largest dual entry moves less than this.
    pub tolerance: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            tolerance: 1e-10,
        }
    }
}

fn check_size(width: usize, height: usize) -> Result<()> {
    if width * height > MAX_PIXELS {
        Err(OracleError::TooLarge(width * height))
    } else {
        Ok(())
    }
}

/// `n × n` forward difference with a zero last row.
fn difference_1d(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        d[(k, k)] = -1.0;
        d[(k, k + 1)] = 1.0;
    }
    d
}

/// Explicit `(K·W·H) × (W·H)` matrix of `spec`, rows ordered pixel-major like `JetField`.
pub fn dense_assemble(spec: &OperatorSpec, width: usize, height: usize) -> Result<DMatrix<f64>> {
    check_size(width, height)?;
    let n = width * height;
    // row-major pixels: index = y·W + x
    let dx = DMatrix::<f64>::identity(height, height).kronecker(&difference_1d(width));
    let dy = difference_1d(height).kronecker(&DMatrix::<f64>::identity(width, width));
    let axes = [dx, dy];

    let k = spec.channels();
    let mut out = DMatrix::zeros(k * n, n);
    let mut offset = 0;
    for h in 1..=spec.order() {
        let m = 1usize << h;
        // partials[c] for multi-index c = (a_1, …, a_h), a_1 most significant
        let partials: Vec<DMatrix<f64>> = (0..m)
            .map(|c| {
                (0..h).fold(DMatrix::identity(n, n), |acc, i| {
                    let axis = (c >> (h - 1 - i)) & 1;
                    &axes[axis] * acc
                })
            })
            .collect();
        let block = spec.block(h);
        for r in 0..m {
            let mut mixed = DMatrix::zeros(n, n);
            for (c, partial) in partials.iter().enumerate() {
                mixed += partial * block[r * m + c];
            }
            for p in 0..n {
                out.row_mut(p * k + offset + r).copy_from(&mixed.row(p));
            }
        }
        offset += m;
    }
    Ok(out)
}

/// Largest singular value of the dense operator matrix.
pub fn dense_operator_norm(spec: &OperatorSpec, width: usize, height: usize) -> Result<f64> {
    let m = dense_assemble(spec, width, height)?;
    let gram = m.transpose() * &m;
    let top = gram
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    Ok(top.max(0.0).sqrt())
}

/// Projection onto the ℓ1 ball by bisection on the soft-threshold level.
fn project_l1_bisection(v: &mut [f64], radius: f64) {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= radius {
        return;
    }
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = v.iter().map(|x| (x.abs() - mid).max(0.0)).sum();
        if s > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - hi).max(0.0);
    }
}

fn project_dual(values: &mut [f64], channels: usize, radius: f64, norm: NormChoice) {
    for px in values.chunks_exact_mut(channels) {
        match norm {
            NormChoice::L2 => {
                let n = px.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > radius {
                    px.iter_mut().for_each(|x| *x *= radius / n);
                }
            }
            NormChoice::L1 => px.iter_mut().for_each(|x| *x = x.max(-radius).min(radius)),
            NormChoice::LInf => project_l1_bisection(px, radius),
        }
    }
}

/// Solves `argmin ‖u − u_η‖² + α·PV_B(u)` through the dual
/// `max_{|φ|_* ≤ α} ⟨B*φ, u_η⟩ − ¼‖B*φ‖²` with FISTA-accelerated projected
/// gradient, then returns `u_η − ½·B*φ`.
pub fn dual_reference_solve(
    u_eta: &Image,
    alpha: f64,
    spec: &OperatorSpec,
    norm: NormChoice,
    params: &OracleParams,
) -> Result<Image> {
    let (w, h) = (u_eta.width(), u_eta.height());
    check_size(w, h)?;
    if !(alpha > 0.0) {
        return Err(OracleError::NonPositiveAlpha);
    }
    let matrix = dense_assemble(spec, w, h)?;
    let f = DVector::from_column_slice(u_eta.values());
    let sigma = dense_operator_norm(spec, w, h)?;
    if sigma == 0.0 {
        return Ok(u_eta.clone());
    }
    // gradient of the dual objective is B(u_η − ½B*φ), Lipschitz with ½σ²
    let step = 2.0 / (sigma * sigma);
    let k = spec.channels();
    let transpose = matrix.transpose();

    let mut phi = DVector::zeros(matrix.nrows());
    let mut look = phi.clone();
    let mut t: f64 = 1.0;
    for _ in 0..params.max_iterations {
        let u = &f - (&transpose * &look) * 0.5;
        let mut next = &look + (&matrix * u) * step;
        project_dual(next.as_mut_slice(), k, alpha, norm);
        let change = (&next - &phi).amax();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        look = &next + (&next - &phi) * ((t - 1.0) / t_next);
        phi = next;
        t = t_next;
        if change <= params.tolerance {
            break;
        }
    }
    let u = &f - (&transpose * &phi) * 0.5;
    Ok(Image::new(w, h, u.as_slice().to_vec())?)
}

/// Best certificate `⟨u, B*v⟩` over `draws` feasible fields: draw 0 is the
/// analytic optimum (so `draws = 0` is treated as 1), the rest perturb it
/// with shrinking Gaussian-like noise and project back into the unit ball.
pub fn randomized_pv_lower_bound(
    spec: &OperatorSpec,
    img: &Image,
    norm: NormChoice,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let best_field = pvb::optimal_certificate_field(spec, img, norm);
    let mut best = pvb::dual_certificate(spec, img, &best_field, norm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.channels();
    for i in 1..draws.max(1) {
        let scale = 2.0 / i as f64;
        let mut values: Vec<f64> = best_field
            .values()
            .iter()
            .map(|v| v + scale * (rng.random::<f64>() - 0.5))
            .collect();
        project_dual(&mut values, k, 1.0, norm);
        let field = JetField::new(img.width(), img.height(), k, values)?;
        best = best.max(pvb::dual_certificate(spec, img, &field, norm)?);
    }
    Ok(best)
}

/// Random field with every pixel strictly inside the unit dual ball.
pub fn random_feasible_field(
    width: usize,
    height: usize,
    channels: usize,
    norm: NormChoice,
    rng: &mut impl Rng,
) -> JetField {
    let mut values: Vec<f64> = (0..width * height * channels)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    project_dual(&mut values, channels, 1.0, norm);
    JetField::new(width, height, channels, values).expect("finite values")
}
