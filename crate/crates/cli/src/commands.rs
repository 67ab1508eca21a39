use std::path::{Path, PathBuf};
use std::time::Duration;

use brush_core::denoise::mock::{MockBehavior, MockServer};
use brush_core::denoise::Backend;
use brush_core::masks::{load_mask_png, resample_to_latent};
use brush_core::render::{display_scale, render_png};
use brush_core::sampler::{edit_magnitude, generate, run_brush};
use brush_core::{AnalyticDenoiser, BrushJob, EditMask, GaussianMixture, Latent, SeededRng};
use serde_json::json;

use crate::args::{Behavior, Cli, Command, EditArgs, GenerateArgs, InitGmmArgs, MockArgs};
use crate::{parse_shape, read_file, sweep, write_file, CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => generate_cmd(a),
        Command::Edit(a) => edit_cmd(a),
        Command::Sweep(a) => sweep::run(a),
        Command::MockDenoiser(a) => mock_cmd(a),
        Command::InitGmm(a) => init_gmm_cmd(a),
    }
}

pub(crate) fn backend(spec: &str) -> CliResult<Backend> {
    Ok(Backend::parse(spec)?)
}

/// The seed to use and whether it was drawn here.
fn resolve(seed: i64, what: &str) -> CliResult<(u64, bool)> {
    match seed {
        -1 => Ok((SeededRng::from_entropy().next_seed(), true)),
        s if s >= 0 => Ok((s as u64, false)),
        s => Err(CliError::Usage(format!(
            "{what}: must be >= 0 or -1, got {s}"
        ))),
    }
}

fn side_path(out: &Path, explicit: Option<PathBuf>, ext: &str) -> PathBuf {
    explicit.unwrap_or_else(|| out.with_extension(ext))
}

pub(crate) fn write_png(path: &Path, latent: &Latent) -> CliResult<()> {
    write_file(path, &render_png(latent, display_scale(latent.shape()))?)
}

fn generate_cmd(a: GenerateArgs) -> CliResult<()> {
    let backend = backend(&a.backend.backend)?;
    let shape = match (
        a.shape.as_deref().map(parse_shape).transpose()?,
        backend.shape(),
    ) {
        (Some(s), Some(b)) if s != b => {
            return Err(CliError::Usage(format!(
                "shape: backend works on {b}, got {s}"
            )))
        }
        (Some(s), _) => s,
        (None, Some(b)) => b,
        (None, None) => {
            return Err(CliError::Usage(
                "shape: required for remote backends".into(),
            ))
        }
    };
    let mut schedule = backend.default_schedule().with_steps(a.steps);
    schedule.sigma_min = a.sigma_min.unwrap_or(schedule.sigma_min);
    schedule.sigma_max = a.sigma_max.unwrap_or(schedule.sigma_max);
    schedule.rho = a.rho.unwrap_or(schedule.rho);
    let (seed, drawn) = resolve(a.seed, "seed")?;
    let mut job = BrushJob::new(a.prompt, seed, shape, schedule);
    job.merge_step = a.merge_step;
    if let Some(c) = a.s_churn {
        job.sampler.s_churn = c;
    }
    job.validate()?;
    if drawn {
        println!("seed: {seed}");
    }

    let (latent, trace) = generate::<f32, _>(&job, backend.denoiser().as_ref())?;
    write_png(&a.out, &latent)?;
    let job_path = side_path(&a.out, a.job_out, "json");
    write_file(&job_path, job.to_json_pretty().as_bytes())?;
    println!(
        "wrote {} and {} (seed {seed}, {:.1} ms)",
        a.out.display(),
        job_path.display(),
        trace.wall_ms
    );
    Ok(())
}

/// Reads a job file and gives every enabled `-1` mask seed a value.
pub(crate) fn load_job(path: &Path) -> CliResult<BrushJob> {
    let mut job = BrushJob::from_json(&read_file(path)?)?;
    job.resolve_seeds(&mut SeededRng::from_entropy());
    Ok(job)
}

fn edit_cmd(a: EditArgs) -> CliResult<()> {
    let backend = backend(&a.backend.backend)?;
    let job = load_job(&a.job)?;
    let raster = load_mask_png(&read_file(&a.mask)?)?;
    let id = a
        .mask_id
        .unwrap_or_else(|| format!("mask{}", job.masks.len()));
    let (seed, drawn) = resolve(a.mask_seed, "mask_seed")?;
    let edited_job = job
        .clone()
        .with_mask(EditMask::new(id.clone(), raster.clone(), a.n, a.alpha).with_seed(seed));
    edited_job.validate()?;
    if drawn {
        println!("mask_seed: {seed}");
    }

    let denoiser = backend.denoiser();
    let (base, _) = run_brush::<f32, _>(&job, denoiser.as_ref())?;
    let (edited, trace) = run_brush::<f32, _>(&edited_job, denoiser.as_ref())?;
    let shape = job.latent_shape;
    let footprint = resample_to_latent(&raster, shape.height(), shape.width())?;
    let mag = edit_magnitude(&base, &edited, &footprint)?;

    write_png(&a.out, &edited)?;
    let job_path = side_path(&a.out, a.job_out, "json");
    write_file(&job_path, edited_job.to_json_pretty().as_bytes())?;
    let report = json!({
        "mask_id": id,
        "n": a.n,
        "alpha": a.alpha,
        "mask_seed": seed,
        "in_mask_rms": mag.in_mask_rms,
        "out_mask_rms": mag.out_mask_rms,
        "wall_ms": trace.wall_ms,
    });
    let report_path = a.out.with_extension("metrics.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&report_path, text.as_bytes())?;
    println!("{text}");
    Ok(())
}

fn mock_cmd(a: MockArgs) -> CliResult<()> {
    let gmm = || -> CliResult<MockBehavior> {
        let path = a.gmm.as_deref().ok_or_else(|| {
            CliError::Usage("gmm: a mixture file is required for this behavior".into())
        })?;
        Ok(MockBehavior::Gmm(AnalyticDenoiser::from_json(&read_file(
            path,
        )?)?))
    };
    let behavior = match a.behavior {
        Behavior::Identity => MockBehavior::Identity,
        Behavior::Gmm => gmm()?,
        Behavior::WrongShape => MockBehavior::WrongShape,
        Behavior::NonFinite => MockBehavior::NonFinite,
        Behavior::Fault => MockBehavior::Fault {
            error_rate: a.error_rate,
            latency: Duration::from_millis(a.latency_ms),
            seed: a.fault_seed,
            inner: Box::new(if a.gmm.is_some() {
                gmm()?
            } else {
                MockBehavior::Identity
            }),
        },
    };
    if !(0.0..=1.0).contains(&a.error_rate) {
        return Err(CliError::Usage(format!(
            "error_rate: must be in [0, 1], got {}",
            a.error_rate
        )));
    }
    let server = MockServer::start(behavior, (a.bind.as_str(), a.port))?;
    println!("listening on {}", server.addr());
    server.wait();
    Ok(())
}

fn init_gmm_cmd(a: InitGmmArgs) -> CliResult<()> {
    let gmm = GaussianMixture::patterns(parse_shape(&a.shape)?, a.components, a.variance)?;
    let text = serde_json::to_string_pretty(&gmm).expect("mixture serializes");
    write_file(&a.out, text.as_bytes())?;
    println!("wrote {}", a.out.display());
    Ok(())
}
