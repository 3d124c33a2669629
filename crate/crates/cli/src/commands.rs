use std::fs;
use std::path::Path;

use pvb::trainer::{OperatorSample, SearchOutcome};
use pvb::{
    build_ground, channel_count, error_bound, grid_search, landscape, run_workflow, sobolev_norm,
    DenoiseProblem, FiniteGround, Image, OperatorFamily, OperatorSpec, TrainingPair,
};
use serde::Serialize;
use serde_json::Value;

use crate::args::{
    required, AddNoiseArgs, DenoiseArgs, LandscapeArgs, SynthArgs, TrainArgs, WorkflowArgs,
    DEFAULT_BOUND, DEFAULT_DELTA, DEFAULT_FAMILY, DEFAULT_GRID, DEFAULT_LEVEL, DEFAULT_SIZE,
};
use crate::io::{self, Format};
use crate::synth::{synthesize, SynthKind};
use crate::{noise, CliError, Exit};

/// Configuration as embedded in reports: the run-local `jobs` and the
/// report path itself are left out so reruns compare byte for byte.
fn report_config<T: Serialize>(args: &T) -> Value {
    let mut value = serde_json::to_value(args).expect("arguments serialize");
    if let Value::Object(map) = &mut value {
        map.remove("jobs");
        map.remove("report");
    }
    value
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    bytes.push(b'\n');
    io::write_atomic(path, &bytes)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// A built-in family label or the path of a family JSON file.
pub fn resolve_family(name: Option<&str>) -> Result<OperatorFamily, CliError> {
    match name.unwrap_or(DEFAULT_FAMILY) {
        "identity" => Ok(OperatorFamily::identity()),
        "upper-shear" => Ok(OperatorFamily::upper_shear(-0.5, 0.5)?),
        "full-shear" => Ok(OperatorFamily::full_shear(-0.5, 0.5)?),
        path => read_json(Path::new(path)),
    }
}

fn warn_normalization(family: &OperatorFamily) {
    if let Some(msg) = family.normalization_warning() {
        eprintln!("warning: {msg}");
    }
}

fn load_pair(clean: &Path, noisy: &Path) -> Result<TrainingPair, CliError> {
    let clean = io::read_image(clean)?;
    let noisy = io::read_image(noisy)?;
    Ok(TrainingPair::new(clean, noisy)?)
}

fn with_jobs<R>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError>
where
    R: Send,
{
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--jobs must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Serialize)]
struct DenoiseReport {
    command: &'static str,
    config: Value,
    operator: OperatorSpec,
    iterations: usize,
    gap: f64,
    converged: bool,
    pv_value: f64,
    fidelity: f64,
}

pub fn denoise(args: &DenoiseArgs) -> Result<Exit, CliError> {
    let input = required(&args.input, "input")?;
    let output = required(&args.output, "output")?;
    let alpha = *required(&args.alpha, "alpha")?;
    let out_format = Format::from_path(output)?;
    io::check_output(output)?;
    if let Some(report) = &args.report {
        io::check_output(report)?;
    }
    let spec = match (&args.operator, &args.family) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "give either --operator or --family, not both".into(),
            ))
        }
        (Some(path), None) => {
            if args.theta.is_some() {
                return Err(CliError::Usage("--theta needs --family".into()));
            }
            read_json::<OperatorSpec>(path)?
        }
        (None, family) => {
            let family = resolve_family(family.as_deref())?;
            warn_normalization(&family);
            let theta = args.theta.clone().unwrap_or_default();
            if theta.len() != family.parameter_dim() {
                return Err(CliError::Usage(format!(
                    "family {} takes {} parameter(s) via --theta, got {}",
                    family.label(),
                    family.parameter_dim(),
                    theta.len()
                )));
            }
            family.materialize(&theta)?
        }
    };
    let params = args.solve.params()?;
    let img = io::read_image(input)?;

    let result = DenoiseProblem::new(&img, alpha, &spec, args.solve.norm())?.solve(&params)?;
    io::write_atomic(output, &io::encode_image(&result.u, out_format)?)?;
    if let Some(report) = &args.report {
        write_json(
            report,
            &DenoiseReport {
                command: "denoise",
                config: report_config(args),
                operator: spec,
                iterations: result.iterations,
                gap: result.gap,
                converged: result.converged,
                pv_value: result.pv_value,
                fidelity: result.fidelity,
            },
        )?;
    }
    if result.converged {
        Ok(Exit::Success)
    } else {
        eprintln!(
            "warning: not converged after {} iterations (relative gap {:e})",
            result.iterations, result.gap
        );
        Ok(Exit::NotConverged)
    }
}

#[derive(Serialize)]
struct GroundReport<'a> {
    bound: f64,
    level: usize,
    alpha_step: f64,
    alpha_samples: &'a [f64],
    family: &'a OperatorFamily,
    cube_side: f64,
    operator_samples: &'a [OperatorSample],
    sigma_p_certified: bool,
}

impl<'a> From<&'a FiniteGround> for GroundReport<'a> {
    fn from(g: &'a FiniteGround) -> Self {
        GroundReport {
            bound: g.bound(),
            level: g.level(),
            alpha_step: g.alpha_step(),
            alpha_samples: g.alpha_samples(),
            family: g.family(),
            cube_side: g.cube_side(),
            operator_samples: g.operator_samples(),
            sigma_p_certified: g.sigma_p_certified(),
        }
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    command: &'static str,
    config: Value,
    ground: GroundReport<'a>,
    winner: &'a pvb::AssessmentRecord,
    winners: &'a [pvb::AssessmentRecord],
    error_bound: f64,
    delta: f64,
    sobolev: f64,
    /// The bound is only indicative: the family is not certified admissible.
    heuristic: bool,
    unconverged: usize,
    records: &'a [pvb::AssessmentRecord],
}

pub fn train(args: &TrainArgs) -> Result<Exit, CliError> {
    let clean = required(&args.clean, "clean")?;
    let noisy = required(&args.noisy, "noisy")?;
    let report = required(&args.report, "report")?;
    io::check_output(report)?;
    let family = resolve_family(args.family.as_deref())?;
    warn_normalization(&family);
    let params = args.solve.params()?;
    let bound = args.bound.unwrap_or(DEFAULT_BOUND);
    let delta = args.delta.unwrap_or(DEFAULT_DELTA);
    let level = args.level.unwrap_or(DEFAULT_LEVEL);
    let pair = load_pair(clean, noisy)?;

    let ground = build_ground(bound, level, &family)?;
    let order = family.order();
    let sobolev = sobolev_norm(pair.noisy(), order)?;
    let bound_value = error_bound(level, bound, channel_count(order), order, delta, sobolev)?;
    let search: SearchOutcome = with_jobs(args.jobs, || {
        grid_search(&pair, &ground, args.solve.norm(), &params)
    })??;
    if search.unconverged() > 0 {
        eprintln!("warning: {} solves did not converge", search.unconverged());
    }
    write_json(
        report,
        &TrainReport {
            command: "train",
            config: report_config(args),
            ground: (&ground).into(),
            winner: search.winner(),
            winners: &search.winners,
            error_bound: bound_value,
            delta,
            sobolev,
            heuristic: !ground.sigma_p_certified(),
            unconverged: search.unconverged(),
            records: &search.records,
        },
    )?;
    Ok(Exit::Success)
}

#[derive(Serialize)]
struct WorkflowReport<'a> {
    command: &'static str,
    config: Value,
    epsilon: f64,
    delta: f64,
    level: usize,
    bound: f64,
    certified: bool,
    heuristic: bool,
    ground: GroundReport<'a>,
    winner: &'a pvb::AssessmentRecord,
    winners: &'a [pvb::AssessmentRecord],
    unconverged: usize,
    records: &'a [pvb::AssessmentRecord],
}

pub fn workflow(args: &WorkflowArgs) -> Result<Exit, CliError> {
    let clean = required(&args.clean, "clean")?;
    let noisy = required(&args.noisy, "noisy")?;
    let report = required(&args.report, "report")?;
    let epsilon = *required(&args.epsilon, "epsilon")?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CliError::Usage(format!(
            "--epsilon must be positive, got {epsilon}"
        )));
    }
    io::check_output(report)?;
    let family = resolve_family(args.family.as_deref())?;
    warn_normalization(&family);
    let params = args.solve.params()?;
    let bound = args.bound.unwrap_or(DEFAULT_BOUND);
    let l_max = args.l_max.unwrap_or(pvb::trainer::DEFAULT_MAX_LEVEL);
    let pair = load_pair(clean, noisy)?;

    let out = with_jobs(args.jobs, || {
        run_workflow(
            &pair,
            epsilon,
            bound,
            &family,
            args.solve.norm(),
            &params,
            l_max,
        )
    })??;
    write_json(
        report,
        &WorkflowReport {
            command: "workflow",
            config: report_config(args),
            epsilon,
            delta: epsilon / 2.0,
            level: out.level,
            bound: out.bound,
            certified: out.certified,
            heuristic: out.heuristic,
            ground: (&out.ground).into(),
            winner: &out.winner,
            winners: &out.search.winners,
            unconverged: out.search.unconverged(),
            records: &out.search.records,
        },
    )?;
    if out.certified {
        Ok(Exit::Success)
    } else {
        eprintln!(
            "error bound {} > ε = {epsilon} at l = {}",
            out.bound, out.level
        );
        Ok(Exit::Uncertified)
    }
}

pub fn landscape_csv(rows: &[pvb::trainer::LandscapeRow], dim: usize) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=dim).map(|i| format!("theta_{i}")).collect();
    header.push("assessment".into());
    let csv_err = |e: csv::Error| CliError::Usage(e.to_string());
    writer.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let fields = row
            .theta
            .iter()
            .chain([&row.assessment])
            .map(|v| v.to_string());
        writer.write_record(fields).map_err(csv_err)?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::Usage(e.to_string()))
}

pub fn landscape_cmd(args: &LandscapeArgs) -> Result<Exit, CliError> {
    let clean = required(&args.clean, "clean")?;
    let noisy = required(&args.noisy, "noisy")?;
    let output = required(&args.output, "output")?;
    let alpha = *required(&args.alpha, "alpha")?;
    io::check_output(output)?;
    let family = resolve_family(args.family.as_deref())?;
    warn_normalization(&family);
    let params = args.solve.params()?;
    let grid = args.grid.unwrap_or(DEFAULT_GRID);
    let pair = load_pair(clean, noisy)?;

    let rows = with_jobs(args.jobs, || {
        landscape(&pair, alpha, &family, grid, args.solve.norm(), &params)
    })??;
    io::write_atomic(output, &landscape_csv(&rows, family.parameter_dim())?)?;
    Ok(Exit::Success)
}

pub fn synth(args: &SynthArgs) -> Result<Exit, CliError> {
    let kind: SynthKind = *required(&args.kind, "kind")?;
    let output = required(&args.output, "output")?;
    let format = Format::from_path(output)?;
    io::check_output(output)?;
    let size = args.size.unwrap_or(DEFAULT_SIZE);
    let img = synthesize(kind, size)?;
    io::write_atomic(output, &io::encode_image(&img, format)?)?;
    Ok(Exit::Success)
}

pub fn add_noise(args: &AddNoiseArgs) -> Result<Exit, CliError> {
    let input = required(&args.input, "input")?;
    let output = required(&args.output, "output")?;
    let sigma = *required(&args.sigma, "sigma")?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(CliError::Usage(format!(
            "--sigma must be >= 0, got {sigma}"
        )));
    }
    let format = Format::from_path(output)?;
    io::check_output(output)?;
    let img: Image = io::read_image(input)?;
    let noisy = noise::add_noise(&img, sigma, args.seed.unwrap_or(0));
    io::write_atomic(output, &io::encode_image(&noisy, format)?)?;
    Ok(Exit::Success)
}
