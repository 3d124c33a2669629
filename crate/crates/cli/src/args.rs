//! Command-line flags and the config-file merge.
//!
//! A `--config` file is a JSON object whose keys are the command's long flag
//! names (`"max-iterations": 8000`). Flags given on the command line win.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pvb::{NormChoice, SolverParams, StepRule};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::synth::SynthKind;
use crate::CliError;

pub const DEFAULT_BOUND: f64 = 1.0;
pub const DEFAULT_LEVEL: usize = 8;
pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_GRID: usize = 11;
pub const DEFAULT_SIZE: usize = 32;
pub const DEFAULT_FAMILY: &str = "identity";

#[derive(Debug, Parser)]
#[command(
    name = "pvb",
    version,
    about = "PV_B denoising and bilevel parameter learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise one image with a fixed (α, B).
    Denoise(DenoiseArgs),
    /// Grid search over a finite training ground.
    Train(TrainArgs),
    /// Pick the level from an acceptable error ε, then train.
    Workflow(WorkflowArgs),
    /// Assessment over a regular lattice of the family box at fixed α.
    Landscape(LandscapeArgs),
    /// Write a synthetic test image.
    Synth(SynthArgs),
    /// Add seeded Gaussian noise to an image.
    AddNoise(AddNoiseArgs),
}

/// Solver and norm flags shared by the computing commands.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SolveArgs {
    /// Pointwise norm: 1, 2 or inf [default: 2]
    #[arg(long)]
    pub p: Option<NormChoice>,
    /// [default: 5000]
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Relative duality gap at which the solver stops [default: 1e-6]
    #[arg(long)]
    pub gap_tolerance: Option<f64>,
    /// Extrapolation weight θ ∈ [0, 1], used by the balanced rule [default: 1]
    #[arg(long)]
    pub extrapolation: Option<f64>,
    /// balanced or accelerated [default: accelerated]
    #[arg(long)]
    pub step_rule: Option<StepRule>,
}

impl SolveArgs {
    pub fn norm(&self) -> NormChoice {
        self.p.unwrap_or_default()
    }

    pub fn params(&self) -> Result<SolverParams, CliError> {
        let d = SolverParams::default();
        let params = SolverParams {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            gap_tolerance: self.gap_tolerance.unwrap_or(d.gap_tolerance),
            theta: self.extrapolation.unwrap_or(d.theta),
            step_rule: self.step_rule.unwrap_or(d.step_rule),
        };
        params.validate()?;
        Ok(params)
    }

    fn resolve(&mut self) {
        let d = SolverParams::default();
        self.p.get_or_insert(NormChoice::default());
        self.max_iterations.get_or_insert(d.max_iterations);
        self.gap_tolerance.get_or_insert(d.gap_tolerance);
        self.extrapolation.get_or_insert(d.theta);
        self.step_rule.get_or_insert(d.step_rule);
    }
}

/// Replaces unset options by their defaults, so reports show effective values.
pub trait Resolve {
    fn resolve(&mut self);
}

impl Resolve for DenoiseArgs {
    fn resolve(&mut self) {
        if self.operator.is_none() {
            self.family.get_or_insert_with(|| DEFAULT_FAMILY.into());
        }
        self.solve.resolve();
    }
}

impl Resolve for TrainArgs {
    fn resolve(&mut self) {
        self.bound.get_or_insert(DEFAULT_BOUND);
        self.level.get_or_insert(DEFAULT_LEVEL);
        self.delta.get_or_insert(DEFAULT_DELTA);
        self.family.get_or_insert_with(|| DEFAULT_FAMILY.into());
        self.solve.resolve();
    }
}

impl Resolve for WorkflowArgs {
    fn resolve(&mut self) {
        self.bound.get_or_insert(DEFAULT_BOUND);
        self.l_max.get_or_insert(pvb::trainer::DEFAULT_MAX_LEVEL);
        self.family.get_or_insert_with(|| DEFAULT_FAMILY.into());
        self.solve.resolve();
    }
}

impl Resolve for LandscapeArgs {
    fn resolve(&mut self) {
        self.grid.get_or_insert(DEFAULT_GRID);
        self.family.get_or_insert_with(|| DEFAULT_FAMILY.into());
        self.solve.resolve();
    }
}

impl Resolve for SynthArgs {
    fn resolve(&mut self) {
        self.size.get_or_insert(DEFAULT_SIZE);
    }
}

impl Resolve for AddNoiseArgs {
    fn resolve(&mut self) {
        self.seed.get_or_insert(0);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Diagnostics report (JSON)
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// identity, upper-shear, full-shear, or a family JSON file
    #[arg(long)]
    pub family: Option<String>,
    /// Family parameters, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Operator JSON file, instead of --family/--theta
    #[arg(long)]
    pub operator: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solve: SolveArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub clean: Option<PathBuf>,
    #[arg(long)]
    pub noisy: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Box constraint P on α [default: 1]
    #[arg(long)]
    pub bound: Option<f64>,
    /// Refinement level l [default: 8]
    #[arg(long)]
    pub level: Option<usize>,
    /// identity, upper-shear, full-shear, or a family JSON file [default: identity]
    #[arg(long)]
    pub family: Option<String>,
    /// δ in the reported error bound [default: 0.5]
    #[arg(long)]
    pub delta: Option<f64>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solve: SolveArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct WorkflowArgs {
    #[arg(long)]
    pub clean: Option<PathBuf>,
    #[arg(long)]
    pub noisy: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Acceptable error ε
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Box constraint P on α [default: 1]
    #[arg(long)]
    pub bound: Option<f64>,
    /// [default: identity]
    #[arg(long)]
    pub family: Option<String>,
    /// Largest level tried [default: 64]
    #[arg(long)]
    pub l_max: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solve: SolveArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LandscapeArgs {
    #[arg(long)]
    pub clean: Option<PathBuf>,
    #[arg(long)]
    pub noisy: Option<PathBuf>,
    /// CSV output
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub family: Option<String>,
    /// Points per parameter axis [default: 11]
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solve: SolveArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    /// disk, squares or ramp
    #[arg(long)]
    pub kind: Option<SynthKind>,
    /// Side length in pixels [default: 32]
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AddNoiseArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Standard deviation in intensity units
    #[arg(long)]
    pub sigma: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Overlays the non-empty flags of `flags` onto the JSON object in `config`,
/// then fills in defaults.
pub fn merge<T>(flags: &T, config: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default + Resolve,
{
    let mut merged: T = overlay(flags, config)?;
    merged.resolve();
    Ok(merged)
}

fn overlay<T>(flags: &T, config: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(path) = config else {
        return from_object(to_object(flags)?);
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut base = match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => map,
        Ok(_) => {
            return Err(CliError::Usage(format!(
                "{}: config must be a JSON object",
                path.display()
            )))
        }
        Err(e) => return Err(CliError::Usage(format!("{}: {e}", path.display()))),
    };
    let known: BTreeSet<String> = to_object(&T::default())?.keys().cloned().collect();
    if let Some(key) = base.keys().find(|k| !known.contains(*k)) {
        return Err(CliError::Usage(format!(
            "{}: unknown config key `{key}`",
            path.display()
        )));
    }
    base.retain(|_, v| !v.is_null());
    for (k, v) in to_object(flags)? {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    from_object(base).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn to_object<T: Serialize>(value: &T) -> Result<Map<String, Value>, CliError> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => Ok(map),
        _ => Err(CliError::Usage(
            "arguments do not serialize to an object".into(),
        )),
    }
}

fn from_object<T: DeserializeOwned>(map: Map<String, Value>) -> Result<T, CliError> {
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}
