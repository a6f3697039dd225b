//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::dataset_io::{
    check_model_grid, export_spectra, load_dataset, load_image, load_model, save_model, write_pgm, DatasetManifest,
    MeanMode,
};
use crate::error::{Error, Result};
use crate::lattice::GridParams;
use crate::projector::{as_real, delta_error, error_histogram, Projector};
use crate::solver::{check_fit_params, fit, FitMode, FitOptions};
use crate::transform::{Image, C64};

#[derive(Debug, Parser)]
#[command(name = "rigidframes", version, about = "Rigid-motion-invariant frame generators for image datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Direct,
    Incremental,
    /// Incremental when 16·d²·m bytes exceed --mem-budget.
    Auto,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit κ generators to the images listed in a manifest.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        kappa: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        /// Bytes allowed for the spectra of the whole dataset in direct mode.
        #[arg(long, default_value_t = 1 << 30)]
        mem_budget: u64,
        /// Images per accumulation step in incremental mode.
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, env = "RIGIDFRAMES_WORKERS")]
        workers: Option<usize>,
    },
    /// Project one image and print its error as `delta_percent=X.X`.
    Approx {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Add the dataset mean back before writing the PGM.
        #[arg(long)]
        restore_mean: bool,
        #[arg(long, env = "RIGIDFRAMES_WORKERS")]
        workers: Option<usize>,
    },
    /// Per-image errors and their histogram as CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long, env = "RIGIDFRAMES_WORKERS")]
        workers: Option<usize>,
    },
    /// Write log-scaled generator spectra as PGM files.
    Spectra {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn set_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::InvalidGrid("--workers must be positive".into()));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            warn!("worker pool already initialized; --workers {n} ignored");
        }
    }
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Fit {
            manifest,
            p,
            q,
            kappa,
            out,
            mode,
            mem_budget,
            batch_size,
            workers,
        } => {
            set_workers(workers)?;
            let grid = GridParams::new(p, q)?;
            check_fit_params(&grid, kappa)?;
            let manifest = DatasetManifest::from_file(&manifest)?;
            let grid = manifest.grid(Some(p), Some(q))?;
            let m = manifest.paths.len();
            if m == 0 {
                return Err(Error::EmptyDataset);
            }
            let mode = match mode {
                ModeArg::Direct => FitMode::Direct,
                ModeArg::Incremental => FitMode::Incremental,
                ModeArg::Auto => {
                    let need = 16 * (grid.len() as u64) * m as u64;
                    if need > mem_budget {
                        FitMode::Incremental
                    } else {
                        FitMode::Direct
                    }
                }
            };
            let data = load_dataset(&manifest, grid)?;
            info!("dataset: m={m} {grid} digest={}", data.digest_hex());
            let model = fit(&data.images, kappa, &FitOptions { mode, batch_size })?.with_mean(data.mean_image);
            save_model(&model, &out)?;
            let st = &model.fit_stats;
            println!(
                "kappa={kappa} m={m} subproblems={} total_energy={:.9e} total_residual_sq={:.9e}",
                st.per_omega.len(),
                st.total_energy,
                st.image_residual
            );
            Ok(())
        }
        Command::Approx {
            model,
            image,
            out,
            restore_mean,
            workers,
        } => {
            set_workers(workers)?;
            let model = load_model(&model)?;
            let raw = load_image(&image, model.grid)?;
            let mean = Image::from_real(model.grid, &model.mean_image)?;
            let f = raw.sub(&mean);
            let projector = Projector::new(&model)?;
            let pf = projector.project(&f)?;
            let delta = delta_error(&f, &pf);
            let (mut values, imag) = as_real(&pf);
            if imag > 1e-8 {
                warn!("projection has imaginary energy fraction {imag:.3e}; writing the real part");
            }
            if restore_mean {
                for (v, mu) in values.iter_mut().zip(&model.mean_image) {
                    *v += mu;
                }
            }
            write_pgm(&out, model.grid.d(), &values)?;
            println!("delta_percent={delta:.1}");
            Ok(())
        }
        Command::Eval {
            model,
            manifest,
            out,
            bins,
            workers,
        } => {
            set_workers(workers)?;
            let model = load_model(&model)?;
            let mut manifest = DatasetManifest::from_file(&manifest)?;
            if manifest.paths.is_empty() {
                return Err(Error::EmptyDataset);
            }
            if let Some(d) = manifest.d {
                if d != model.grid.d() {
                    return Err(Error::GridMismatch {
                        expected: model.grid.to_string(),
                        found: format!("d={d} in manifest"),
                    });
                }
            }
            let grid = manifest.grid(Some(model.grid.p()), Some(model.grid.q()))?;
            check_model_grid(&model, &grid)?;
            manifest.mean = MeanMode::None;
            let data = load_dataset(&manifest, grid)?;
            let images: Vec<(String, Image)> = data
                .names
                .iter()
                .zip(&data.images)
                .map(|(n, f)| {
                    let values = f
                        .values()
                        .iter()
                        .zip(&model.mean_image)
                        .map(|(v, mu)| v - C64::new(*mu, 0.0))
                        .collect();
                    Ok((n.clone(), Image::from_values(grid, values)?))
                })
                .collect::<Result<_>>()?;
            let projector = Projector::new(&model)?;
            let report = error_histogram(&projector, &images, bins)?;
            fs::write(&out, report.to_csv()).map_err(|e| Error::io(&out, e))?;
            println!(
                "images={} mean_delta_percent={:.1} max_delta_percent={:.1} total_residual_sq={:.9e}",
                report.rows.len(),
                report.mean_delta,
                report.max_delta,
                report.total_residual_sqr
            );
            Ok(())
        }
        Command::Spectra { model, out } => {
            let model = load_model(&model)?;
            let files = export_spectra(&model, &out)?;
            info!("wrote {} spectra images to {}", files.len(), out.display());
            Ok(())
        }
    }
}
