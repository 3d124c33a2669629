//! Level-1 training: learn `(α, B)` by exhaustive search over a finite
//! training ground.
//!
//! A [`FiniteGround`] at level `l` samples `α` on `{0, P/l, …, P}` and the
//! operator family by a greedy packing of its parameter box: starting from
//! the point of smallest ℓ∞ norm, each chosen point removes every parameter
//! closer than `Δ_l = (longest box side)/l`, and the next choice is the
//! smallest-norm survivor (ties broken lexicographically). The packing runs
//! on a lattice of spacing at most `Δ_l / 2`, so chosen points are pairwise
//! at least `Δ_l` apart and every lattice point lies within `Δ_l` of one.
//!
//! The assessment `A(α, B) = ‖u_{α,B} − u_c‖²` is evaluated at every
//! `(α, θ)` pair, possibly in parallel on the current rayon pool. Records
//! are always reported in `(α, θ)` lexicographic order, so neither the
//! thread count nor completion order changes the result.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, channel_count, Image};
use crate::operator::{OperatorFamily, OperatorSpec};
use crate::regularizer::NormChoice;
use crate::solver::{DenoiseProblem, SolverParams};

/// Absolute tolerance under which two assessments count as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Default cap on the refinement level in [`run_workflow`].
pub const DEFAULT_MAX_LEVEL: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    clean: Image,
    noisy: Image,
}

impl TrainingPair {
    pub fn new(clean: Image, noisy: Image) -> Result<Self> {
        clean.check_shape(&noisy)?;
        Ok(Self { clean, noisy })
    }

    pub fn clean(&self) -> &Image {
        &self.clean
    }

    pub fn noisy(&self) -> &Image {
        &self.noisy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSample {
    pub theta: Vec<f64>,
    pub spec: OperatorSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGround {
    bound: f64,
    level: usize,
    alpha_step: f64,
    alpha_samples: Vec<f64>,
    family: OperatorFamily,
    cube_side: f64,
    operator_samples: Vec<OperatorSample>,
    sigma_p_certified: bool,
}

impl FiniteGround {
    /// The box constraint `P` on `α` (and on inverse coefficient blocks).
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `δ_l = P / l`.
    pub fn alpha_step(&self) -> f64 {
        self.alpha_step
    }

    pub fn alpha_samples(&self) -> &[f64] {
        &self.alpha_samples
    }

    pub fn family(&self) -> &OperatorFamily {
        &self.family
    }

    /// `Δ_l`, the packing distance in parameter space.
    pub fn cube_side(&self) -> f64 {
        self.cube_side
    }

    /// Samples in the order the greedy packing picked them.
    pub fn operator_samples(&self) -> &[OperatorSample] {
        &self.operator_samples
    }

    /// Whether every lattice member of the family is admissible at level `P`,
    /// which is what makes [`error_bound`] a certified estimate.
    pub fn sigma_p_certified(&self) -> bool {
        self.sigma_p_certified
    }

    pub fn size(&self) -> usize {
        self.alpha_samples.len() * self.operator_samples.len()
    }
}

/// Per-axis lattice of spacing at most `step` covering `[lo, hi]`, endpoints included.
fn axis_lattice(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let side = hi - lo;
    if side == 0.0 || step == 0.0 {
        return vec![lo];
    }
    let n = ((side / step) - 1e-9).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| {
            if k == n {
                hi
            } else {
                lo + k as f64 * (side / n as f64)
            }
        })
        .collect()
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect()
    })
}

fn linf(theta: &[f64]) -> f64 {
    theta.iter().fold(0.0, |m, t| m.max(t.abs()))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Greedy minimal-norm packing of `points` at separation `side`.
fn greedy_packing(mut points: Vec<Vec<f64>>, side: f64) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| linf(a).total_cmp(&linf(b)).then_with(|| lex_cmp(a, b)));
    let slack = 1e-12 * side.max(1.0);
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if chosen.iter().all(|c| linf_distance(c, &p) >= side - slack) {
            chosen.push(p);
        }
    }
    chosen
}

/// The lattice [`build_ground`] packs, exposed for coverage checks.
pub fn packing_lattice(family: &OperatorFamily, level: usize) -> Vec<Vec<f64>> {
    let side = cube_side(family, level);
    cartesian(
        &family
            .bounds()
            .iter()
            .map(|&(lo, hi)| axis_lattice(lo, hi, side / 2.0))
            .collect::<Vec<_>>(),
    )
}

fn cube_side(family: &OperatorFamily, level: usize) -> f64 {
    family
        .bounds()
        .iter()
        .map(|(lo, hi)| hi - lo)
        .fold(0.0, f64::max)
        / level as f64
}

/// Builds the level-`l` finite training ground for `α ∈ [0, P]` and `family`.
pub fn build_ground(bound: f64, level: usize, family: &OperatorFamily) -> Result<FiniteGround> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "P must be positive and finite, got {bound}"
        )));
    }
    if level < 1 {
        return Err(Error::InvalidParameter("level must be >= 1".into()));
    }
    let alpha_step = bound / level as f64;
    let alpha_samples = (0..=level)
        .map(|i| {
            if i == level {
                bound
            } else {
                i as f64 * alpha_step
            }
        })
        .collect();

    let side = cube_side(family, level);
    let lattice = packing_lattice(family, level);
    let sigma_p_certified = lattice.iter().all(|theta| {
        family
            .materialize(theta)
            .is_ok_and(|s| s.sigma_p_admissible(bound))
    });
    let operator_samples = greedy_packing(lattice, side)
        .into_iter()
        .map(|theta| {
            let spec = family.materialize(&theta)?;
            Ok(OperatorSample { theta, spec })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FiniteGround {
        bound,
        level,
        alpha_step,
        alpha_samples,
        family: family.clone(),
        cube_side: side,
        operator_samples,
        sigma_p_certified,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub alpha: f64,
    pub theta: Vec<f64>,
    /// `‖u_{α,B} − u_c‖²`.
    pub assessment: f64,
    pub pv_value: f64,
    pub iterations: usize,
    /// Relative duality gap reached by the solver.
    pub gap: f64,
    pub converged: bool,
}

impl AssessmentRecord {
    /// Canonical order: smaller `α` first, then lexicographic `θ`.
    pub fn key_cmp(&self, other: &Self) -> Ordering {
        self.alpha
            .total_cmp(&other.alpha)
            .then_with(|| lex_cmp(&self.theta, &other.theta))
    }
}

/// Denoises `pair.noisy` with `(α, B)` and scores the result against `pair.clean`.
pub fn assess(
    pair: &TrainingPair,
    alpha: f64,
    spec: &OperatorSpec,
    norm: NormChoice,
    params: &SolverParams,
) -> Result<AssessmentRecord> {
    let result = DenoiseProblem::new(&pair.noisy, alpha, spec, norm)?.solve(params)?;
    Ok(AssessmentRecord {
        alpha,
        theta: Vec::new(),
        assessment: result.u.squared_distance(&pair.clean),
        pv_value: result.pv_value,
        iterations: result.iterations,
        gap: result.gap,
        converged: result.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Records attaining the minimum within [`TIE_TOLERANCE`], canonical winner first.
    pub winners: Vec<AssessmentRecord>,
    /// Every evaluated record in canonical order.
    pub records: Vec<AssessmentRecord>,
}

impl SearchOutcome {
    pub fn winner(&self) -> &AssessmentRecord {
        &self.winners[0]
    }

    pub fn min_assessment(&self) -> f64 {
        self.winner().assessment
    }

    pub fn unconverged(&self) -> usize {
        self.records.iter().filter(|r| !r.converged).count()
    }
}

/// Evaluates the assessment on `alphas × operators` and collects the argmin set.
pub fn evaluate_grid(
    pair: &TrainingPair,
    alphas: &[f64],
    operators: &[OperatorSample],
    norm: NormChoice,
    params: &SolverParams,
) -> Result<SearchOutcome> {
    if alphas.is_empty() || operators.is_empty() {
        return Err(Error::InvalidParameter("empty search grid".into()));
    }
    let tasks: Vec<(f64, &OperatorSample)> = alphas
        .iter()
        .flat_map(|&a| operators.iter().map(move |op| (a, op)))
        .collect();
    let mut records = tasks
        .par_iter()
        .map(|&(alpha, op)| {
            let mut record = assess(pair, alpha, &op.spec, norm, params)?;
            record.theta = op.theta.clone();
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(AssessmentRecord::key_cmp);

    let best = records
        .iter()
        .map(|r| r.assessment)
        .fold(f64::INFINITY, f64::min);
    let winners = records
        .iter()
        .filter(|r| r.assessment <= best + TIE_TOLERANCE)
        .cloned()
        .collect();
    Ok(SearchOutcome { winners, records })
}

pub fn grid_search(
    pair: &TrainingPair,
    ground: &FiniteGround,
    norm: NormChoice,
    params: &SolverParams,
) -> Result<SearchOutcome> {
    evaluate_grid(
        pair,
        &ground.alpha_samples,
        &ground.operator_samples,
        norm,
        params,
    )
}

/// Discrete `W^{d,1}` norm `Σ_{h=0..d} ‖H^h u‖₁`, entrywise.
pub fn sobolev_norm(img: &Image, d: usize) -> Result<f64> {
    let jets = grid::hessian_stack(img, d)?;
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    Ok(l1(img.values()) + l1(jets.values()))
}

/// Worst-case gap between the best assessment on the level-`l` ground and
/// the true optimum:
///
/// `4·K·P·[d·√K·P·(P/l) + 1/l]^{1/2} · sobolev^{1/2} / δ^d + δ/2`.
pub fn error_bound(
    level: usize,
    bound: f64,
    channels: usize,
    order: usize,
    delta: f64,
    sobolev: f64,
) -> Result<f64> {
    if level < 1 {
        return Err(Error::InvalidParameter("level must be >= 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be > 0, got {delta}"
        )));
    }
    if !(bound > 0.0) || !(sobolev >= 0.0) || channels == 0 || order == 0 {
        return Err(Error::InvalidParameter(
            "bound arguments must be positive".into(),
        ));
    }
    let l = level as f64;
    let k = channels as f64;
    let d = order as f64;
    let modulus = d * k.sqrt() * bound * (bound / l);
    Ok(
        4.0 * k * bound * (modulus + 1.0 / l).sqrt() * sobolev.sqrt() / delta.powi(order as i32)
            + delta / 2.0,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowOutcome {
    pub winner: AssessmentRecord,
    pub level: usize,
    pub bound: f64,
    /// The bound reached `ε` before the level cap.
    pub certified: bool,
    /// The family was not verified admissible, so the bound is only indicative.
    pub heuristic: bool,
    pub ground: FiniteGround,
    pub search: SearchOutcome,
}

/// Refines the level geometrically (`1, 2, 4, …`, capped at `max_level`)
/// until the error bound with `δ = ε/2` drops to `ε`, then searches that ground.
pub fn run_workflow(
    pair: &TrainingPair,
    epsilon: f64,
    bound: f64,
    family: &OperatorFamily,
    norm: NormChoice,
    params: &SolverParams,
    max_level: usize,
) -> Result<WorkflowOutcome> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if max_level < 1 {
        return Err(Error::InvalidParameter("max_level must be >= 1".into()));
    }
    let order = family.order();
    let channels = channel_count(order);
    let sobolev = sobolev_norm(pair.noisy(), order)?;
    let delta = epsilon / 2.0;

    let mut level = 1;
    let (certified, error) = loop {
        let b = error_bound(level, bound, channels, order, delta, sobolev)?;
        if b <= epsilon {
            break (true, b);
        }
        if level >= max_level {
            break (false, b);
        }
        level = (level * 2).min(max_level);
    };

    let ground = build_ground(bound, level, family)?;
    let search = grid_search(pair, &ground, norm, params)?;
    Ok(WorkflowOutcome {
        winner: search.winner().clone(),
        level,
        bound: error,
        certified,
        heuristic: !ground.sigma_p_certified(),
        ground,
        search,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub theta: Vec<f64>,
    pub assessment: f64,
}

/// The regular `grid_per_axis`-point lattice of the family box, first axis outermost.
pub fn landscape_lattice(family: &OperatorFamily, grid_per_axis: usize) -> Result<Vec<Vec<f64>>> {
    if grid_per_axis < 2 {
        return Err(Error::InvalidParameter("grid_per_axis must be >= 2".into()));
    }
    if family.parameter_dim() > 2 {
        return Err(Error::InvalidParameter(format!(
            "landscapes need at most 2 parameters, family has {}",
            family.parameter_dim()
        )));
    }
    let n = grid_per_axis - 1;
    let axes: Vec<Vec<f64>> = family
        .bounds()
        .iter()
        .map(|&(lo, hi)| {
            (0..=n)
                .map(|k| {
                    if k == n {
                        hi
                    } else {
                        lo + k as f64 * (hi - lo) / n as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(cartesian(&axes))
}

/// Assessment over the family lattice at a fixed `α`.
pub fn landscape(
    pair: &TrainingPair,
    alpha: f64,
    family: &OperatorFamily,
    grid_per_axis: usize,
    norm: NormChoice,
    params: &SolverParams,
) -> Result<Vec<LandscapeRow>> {
    let operators = landscape_lattice(family, grid_per_axis)?
        .into_iter()
        .map(|theta| {
            let spec = family.materialize(&theta)?;
            Ok(OperatorSample { theta, spec })
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = evaluate_grid(pair, &[alpha], &operators, norm, params)?;
    Ok(outcome
        .records
        .into_iter()
        .map(|r| LandscapeRow {
            theta: r.theta,
            assessment: r.assessment,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_family_ground() {
        let ground = build_ground(1.0, 4, &OperatorFamily::identity()).unwrap();
        assert_eq!(ground.alpha_samples(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(ground.operator_samples().len(), 1);
        assert_eq!(
            ground.operator_samples()[0].spec,
            OperatorSpec::identity(1).unwrap()
        );
        assert!(ground.sigma_p_certified());
        assert_eq!(ground.size(), 5);
    }

    #[test]
    fn one_dimensional_packing_by_hand() {
        // Lattice {-0.5, -0.25, 0, 0.25, 0.5}; 0 removes (-0.5, 0.5), leaving the ends.
        let family = OperatorFamily::upper_shear(-0.5, 0.5).unwrap();
        let ground = build_ground(1.0, 2, &family).unwrap();
        assert_eq!(ground.cube_side(), 0.5);
        let thetas: Vec<Vec<f64>> = ground
            .operator_samples()
            .iter()
            .map(|s| s.theta.clone())
            .collect();
        assert_eq!(thetas, vec![vec![0.0], vec![-0.5], vec![0.5]]);
    }

    #[test]
    fn two_dimensional_packing_and_cover() {
        let family = OperatorFamily::full_shear(-0.5, 0.5).unwrap();
        let ground = build_ground(1.0, 5, &family).unwrap();
        let side = ground.cube_side();
        assert!((side - 0.2).abs() < 1e-15);
        let samples: Vec<&Vec<f64>> = ground.operator_samples().iter().map(|s| &s.theta).collect();
        for (i, a) in samples.iter().enumerate() {
            assert!(family.contains(a));
            for b in &samples[i + 1..] {
                assert!(linf_distance(a, b) >= 0.2 - 1e-12);
            }
        }
        for p in packing_lattice(&family, 5) {
            let nearest = samples
                .iter()
                .map(|s| linf_distance(s, &p))
                .fold(f64::INFINITY, f64::min);
            assert!(
                nearest <= side / 2.0 + 1e-12,
                "{p:?} is {nearest} from the samples"
            );
        }
        assert_eq!(samples[0], &vec![0.0, 0.0]);
    }

    #[test]
    fn degenerate_box_gives_single_sample() {
        let family = OperatorFamily::upper_shear(0.3, 0.3).unwrap();
        let ground = build_ground(1.0, 3, &family).unwrap();
        assert_eq!(ground.operator_samples().len(), 1);
        assert_eq!(ground.operator_samples()[0].theta, vec![0.3]);
    }

    #[test]
    fn ground_validation() {
        let fam = OperatorFamily::identity();
        assert!(build_ground(0.0, 2, &fam).is_err());
        assert!(build_ground(1.0, 0, &fam).is_err());
    }

    #[test]
    fn sigma_p_certification_of_families() {
        let upper = OperatorFamily::upper_shear(-0.5, 0.5).unwrap();
        assert!(build_ground(1.0, 4, &upper).unwrap().sigma_p_certified());
        let full = OperatorFamily::full_shear(-0.5, 0.5).unwrap();
        // corner (0.5, 0.5) has inverse entries 4/3
        assert!(!build_ground(1.0, 4, &full).unwrap().sigma_p_certified());
        assert!(build_ground(2.0, 4, &full).unwrap().sigma_p_certified());
    }

    #[test]
    fn sobolev_examples() {
        assert_eq!(sobolev_norm(&Image::zeros(4, 4).unwrap(), 2).unwrap(), 0.0);
        let c = Image::constant(3, 5, 0.5).unwrap();
        for d in 1..=3 {
            assert_eq!(sobolev_norm(&c, d).unwrap(), 7.5);
        }
        // u = column index on 4x4: ‖u‖₁ = 4·(0+1+2+3) = 24, ‖∇u‖₁ = 4 rows · 3 unit steps = 12
        let ramp = Image::from_fn(4, 4, |x, _| x as f64).unwrap();
        assert_eq!(sobolev_norm(&ramp, 1).unwrap(), 36.0);
    }

    #[test]
    fn error_bound_examples() {
        let b = error_bound(1, 1.0, 2, 1, 1.0, 1.0).unwrap();
        assert!((b - (8.0 * (2f64.sqrt() + 1.0).sqrt() + 0.5)).abs() < 1e-12);
        assert!((b - 12.93).abs() < 5e-3);
        let far = error_bound(1 << 40, 1.0, 2, 1, 1.0, 1.0).unwrap();
        assert!((far - 0.5).abs() < 1e-4);
        assert!(error_bound(1, 1.0, 2, 1, 0.0, 1.0).is_err());
        assert!(error_bound(0, 1.0, 2, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn error_bound_monotonicity() {
        for &(p, k, d, delta, s) in &[
            (1.0, 2, 1, 0.5, 30.0),
            (2.0, 6, 2, 1.5, 400.0),
            (0.3, 14, 3, 0.1, 1.0),
        ] {
            let mut prev = f64::INFINITY;
            for l in [1, 2, 4, 8, 16, 32, 64] {
                let b = error_bound(l, p, k, d, delta, s).unwrap();
                assert!(b < prev);
                prev = b;
                assert!(error_bound(l, p * 1.1, k, d, delta, s).unwrap() > b);
                assert!(error_bound(l, p, k + 1, d, delta, s).unwrap() > b);
                assert!(error_bound(l, p, k, d, delta, s * 1.1).unwrap() > b);
            }
        }
    }

    #[test]
    fn landscape_lattice_shapes() {
        assert_eq!(
            landscape_lattice(&OperatorFamily::identity(), 5).unwrap(),
            vec![Vec::<f64>::new()]
        );
        let full = OperatorFamily::full_shear(-0.5, 0.5).unwrap();
        let pts = landscape_lattice(&full, 3).unwrap();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![-0.5, -0.5]);
        assert_eq!(pts[4], vec![0.0, 0.0]);
        assert_eq!(pts[8], vec![0.5, 0.5]);
        assert!(landscape_lattice(&full, 1).is_err());
    }
}
