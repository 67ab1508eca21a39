use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use brush_core::masks::{load_mask_png, resample_to_latent};
use brush_core::render::{assemble_grid, display_scale, render_latent, RgbImage};
use brush_core::sampler::{edit_magnitude, run_brush, EditMagnitude};
use brush_core::{BrushJob, Denoiser, EditMask, Latent, MaskRaster};

use crate::args::SweepArgs;
use crate::commands::{backend, load_job};
use crate::{read_file, write_file, CliError, CliResult};

pub const CSV_HEADER: &str = "alpha,n,mask_seed,in_mask_rms,out_mask_rms,wall_ms,error";

/// One grid row: the Cartesian product of its lists, enumerated n, then
/// alpha, then seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RowSpec {
    pub alphas: Vec<f64>,
    pub ns: Vec<usize>,
}

/// Parses `alphas=0.1,1.3;ns=10`.
pub fn parse_row(text: &str) -> CliResult<RowSpec> {
    let bad = |why: String| CliError::Usage(format!("row `{text}`: {why}"));
    let mut alphas = None;
    let mut ns = None;
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, list) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=list, got `{part}`")))?;
        let items = list.split(',').map(str::trim);
        match key.trim() {
            "alphas" => {
                alphas = Some(
                    items
                        .map(|v| {
                            v.parse::<f64>()
                                .map_err(|_| bad(format!("bad alpha `{v}`")))
                        })
                        .collect::<CliResult<Vec<_>>>()?,
                )
            }
            "ns" => {
                ns = Some(
                    items
                        .map(|v| v.parse::<usize>().map_err(|_| bad(format!("bad n `{v}`"))))
                        .collect::<CliResult<Vec<_>>>()?,
                )
            }
            k => return Err(bad(format!("unknown key `{k}`"))),
        }
    }
    match (alphas, ns) {
        (Some(alphas), Some(ns)) if !alphas.is_empty() && !ns.is_empty() => {
            Ok(RowSpec { alphas, ns })
        }
        _ => Err(bad("needs nonempty alphas and ns".into())),
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub row: usize,
    pub alpha: f64,
    pub n: usize,
    pub seed: u64,
}

pub fn cells(rows: &[RowSpec], seeds: &[u64]) -> Vec<Cell> {
    let mut out = Vec::new();
    for (row, spec) in rows.iter().enumerate() {
        for &n in &spec.ns {
            for &alpha in &spec.alphas {
                for &seed in seeds {
                    out.push(Cell {
                        row,
                        alpha,
                        n,
                        seed,
                    });
                }
            }
        }
    }
    out
}

pub struct CellOutput {
    pub latent: Latent,
    pub magnitude: EditMagnitude,
    pub wall_ms: f64,
}

fn run_cell(
    job: &BrushJob,
    mask_id: &str,
    raster: &MaskRaster,
    footprint: &MaskRaster,
    base: &Latent,
    cell: &Cell,
    denoiser: &dyn Denoiser<f32>,
) -> Result<CellOutput, String> {
    let started = Instant::now();
    let edited = job
        .clone()
        .with_mask(EditMask::new(mask_id, raster.clone(), cell.n, cell.alpha).with_seed(cell.seed));
    let (latent, _) = run_brush::<f32, _>(&edited, denoiser).map_err(|e| e.to_string())?;
    let magnitude = edit_magnitude(base, &latent, footprint).map_err(|e| e.to_string())?;
    Ok(CellOutput {
        latent,
        magnitude,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs every cell on a pool of `workers` threads. Results are keyed by cell
/// index, so their order never depends on scheduling.
pub fn run_cells(
    job: &BrushJob,
    raster: &MaskRaster,
    cells: &[Cell],
    workers: usize,
    denoiser: &dyn Denoiser<f32>,
) -> CliResult<(Latent, Vec<Result<CellOutput, String>>)> {
    let (base, _) = run_brush::<f32, _>(job, denoiser)?;
    let shape = job.latent_shape;
    let footprint = resample_to_latent(raster, shape.height(), shape.width())?;
    let mut mask_id = "sweep".to_string();
    while job.masks.iter().any(|m| m.id() == mask_id) {
        mask_id.push('_');
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<CellOutput, String>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let out = run_cell(job, &mask_id, raster, &footprint, &base, cell, denoiser);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(out);
            });
        }
    });
    let results = slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .unwrap_or_else(|p| p.into_inner())
                .unwrap_or_else(|| Err("cell did not run".into()))
        })
        .collect();
    Ok((base, results))
}

pub fn csv(cells: &[Cell], results: &[Result<CellOutput, String>]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (cell, res) in cells.iter().zip(results) {
        let _ = match res {
            Ok(o) => writeln!(
                out,
                "{},{},{},{},{},{:.3},",
                cell.alpha,
                cell.n,
                cell.seed,
                o.magnitude.in_mask_rms,
                o.magnitude.out_mask_rms,
                o.wall_ms
            ),
            Err(e) => writeln!(
                out,
                "{},{},{},,,,\"{}\"",
                cell.alpha,
                cell.n,
                cell.seed,
                e.replace('"', "'")
            ),
        };
    }
    out
}

fn label(cell: &Cell, many_seeds: bool) -> String {
    let mut s = format!("a={} n={}", cell.alpha, cell.n);
    if many_seeds {
        let _ = write!(s, " s={}", cell.seed);
    }
    s
}

/// One row per row spec, each led by the unedited image.
pub fn grid(
    rows: usize,
    base: &Latent,
    cells: &[Cell],
    results: &[Result<CellOutput, String>],
    many_seeds: bool,
) -> RgbImage {
    let scale = display_scale(base.shape());
    let base_img = render_latent(base, scale);
    let mut grid: Vec<Vec<(RgbImage, String)>> = (0..rows)
        .map(|_| vec![(base_img.clone(), "base".into())])
        .collect();
    for (cell, res) in cells.iter().zip(results) {
        let entry = match res {
            Ok(o) => (render_latent(&o.latent, scale), label(cell, many_seeds)),
            Err(_) => (
                RgbImage::new(base_img.width, base_img.height, [64, 64, 64]),
                format!("{} err", label(cell, many_seeds)),
            ),
        };
        grid[cell.row].push(entry);
    }
    assemble_grid(&grid)
}

pub fn run(a: SweepArgs) -> CliResult<()> {
    let backend = backend(&a.backend.backend)?;
    let rows = if a.rows.is_empty() {
        if a.alphas.is_empty() || a.ns.is_empty() {
            return Err(CliError::Usage("alphas and ns must be nonempty".into()));
        }
        a.ns.iter()
            .map(|&n| RowSpec {
                alphas: a.alphas.clone(),
                ns: vec![n],
            })
            .collect()
    } else {
        a.rows
            .iter()
            .map(|r| parse_row(r))
            .collect::<CliResult<Vec<_>>>()?
    };
    if a.seeds == 0 {
        return Err(CliError::Usage("seeds: must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| a.seed_start + k).collect();
    let job = load_job(&a.job)?;
    let raster = load_mask_png(&read_file(&a.mask)?)?;
    let cells = cells(&rows, &seeds);
    let workers = a.workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });

    let (base, results) = run_cells(&job, &raster, &cells, workers, backend.denoiser().as_ref())?;
    let image = grid(rows.len(), &base, &cells, &results, seeds.len() > 1);
    write_file(&a.grid_out, &image.to_png()?)?;
    write_file(&a.csv_out, csv(&cells, &results).as_bytes())?;

    let failed: Vec<_> = cells
        .iter()
        .zip(&results)
        .filter_map(|(c, r)| r.as_ref().err().map(|e| (c, e)))
        .collect();
    for (c, e) in &failed {
        eprintln!(
            "cell alpha={} n={} seed={} failed: {e}",
            c.alpha, c.n, c.seed
        );
    }
    println!(
        "wrote {} and {} ({} cells, {} failed)",
        a.grid_out.display(),
        a.csv_out.display(),
        cells.len(),
        failed.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial {
            failed: failed.len(),
            total: cells.len(),
        })
    }
}
