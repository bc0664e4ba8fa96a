use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use evrobust_core::dvs::NoiseModel;
use evrobust_core::events::{encode_voxel, EventStream, VoxelGrid, DEFAULT_BINS};
use evrobust_core::frames::read_sequence;
use evrobust_core::metrics::{psnr, ssim, ImageF, SSIM_WINDOW};
use evrobust_core::rps::{empirical_ur, survival_map_from_alpha, thin};
use evrobust_harness::compare::{compare_files, DEFAULT_SIGMAS};
use evrobust_harness::config::SweepConfig;
use evrobust_harness::exit;
use evrobust_harness::io::write_atomic;
use evrobust_harness::pipeline::{simulate_pipeline, SimulateOptions};
use evrobust_harness::smoke::SmokeWeights;
use evrobust_harness::sweep::run_sweep;
use evrobust_nn::mrm::MrmConfig;

/// Event-camera robustness experiments.
#[derive(Parser)]
#[command(name = "evrobust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an under-reporting or noise-injection sweep from a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate events from frames and write blur, events, voxel grids and
    /// thinned grids with a checksum manifest.
    Simulate {
        #[arg(long)]
        frames: PathBuf,
        /// Contrast thresholds (comma separated or repeated).
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Under-reporting levels for thinned variants.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
    },
    /// Bernoulli-thin a voxel grid at a constant under-reporting ratio.
    #[command(alias = "rps-thin")]
    Thin {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode an event file as a voxel grid.
    Encode {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR and SSIM between two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Compare a result curve with a reference curve.
    Compare {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Binomial tolerance, in standard errors, for empirical UR checks.
        #[arg(long, default_value_t = DEFAULT_SIGMAS)]
        sigmas: f64,
    },
    /// Write seeded random weights for forward smoke runs.
    InitWeights {
        #[arg(long, default_value_t = 4)]
        c: usize,
        #[arg(long, default_value_t = 2)]
        t: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Sweep { config } => {
            let cfg = SweepConfig::read(&config)?;
            let result = run_sweep(&cfg)?;
            println!(
                "sweep: {} levels, seed {}, config hash {:016x} -> {}",
                result.rows.len(),
                result.seed,
                result.config_hash,
                cfg.output.display()
            );
            for r in &result.rows {
                println!(
                    "  level {:<6} empirical {:.6} nonzero {} -> {} psnr {:.3}",
                    r.level, r.empirical, r.nonzero_before, r.nonzero_after, r.psnr
                );
            }
            Ok(exit::OK)
        }
        Command::Simulate {
            frames,
            theta,
            out,
            bins,
            levels,
            seed,
            lambda,
            sigma,
        } => {
            let seq = read_sequence(&frames)?;
            let opts = SimulateOptions {
                thetas: theta,
                noise: NoiseModel::new(lambda, sigma)?,
                bins,
                levels,
                seed,
            };
            let m = simulate_pipeline(&seq, &opts, &out)?;
            for t in &m.thetas {
                println!("theta {}: {} events, {} nonzero cells", t.theta, t.events, t.nonzero_cells);
            }
            println!("{} files listed in {}", m.entries.len(), out.join("manifest.txt").display());
            Ok(exit::OK)
        }
        Command::Thin {
            input,
            alpha,
            seed,
            out,
        } => {
            let grid = VoxelGrid::read(&input)?;
            let (b, h, w) = grid.shape();
            let thinned = thin(&grid, &survival_map_from_alpha(alpha, b, h, w)?, seed)?;
            write_atomic(&out, thinned.to_text().as_bytes())?;
            println!(
                "empirical UR {:.6} ({} of {} nonzero cells kept)",
                empirical_ur(&grid, &thinned)?,
                thinned.nonzero_count(),
                grid.nonzero_count()
            );
            Ok(exit::OK)
        }
        Command::Encode { events, bins, out } => {
            let grid = encode_voxel(&EventStream::read(&events)?, bins)?;
            write_atomic(&out, grid.to_text().as_bytes())?;
            println!("{} bins, {} nonzero cells", grid.bins(), grid.nonzero_count());
            Ok(exit::OK)
        }
        Command::Metrics { a, b } => {
            let ia = ImageF::read(&a)?;
            let ib = ImageF::read(&b)?;
            let p = psnr(&ia, &ib)?;
            let tag = if p.exact_match { " (exact match)" } else { "" };
            println!("psnr {:.6} dB{tag}", p.db);
            let (h, w, _) = ia.dims();
            if h.min(w) >= SSIM_WINDOW {
                println!("ssim {:.6}", ssim(&ia, &ib)?);
            } else {
                println!("ssim n/a (images below {SSIM_WINDOW}x{SSIM_WINDOW})");
            }
            Ok(exit::OK)
        }
        Command::Compare {
            result,
            reference,
            sigmas,
        } => {
            let report = compare_files(&result, &reference, sigmas)?;
            print!("{}", report.render());
            Ok(if report.passed() { exit::OK } else { exit::INVARIANT })
        }
        Command::InitWeights {
            c,
            t,
            heads,
            bins,
            seed,
            scale,
            out,
        } => {
            if !(scale > 0.0 && scale.is_finite()) {
                bail!("scale must be > 0");
            }
            let cfg = MrmConfig::new(c, t, heads)?;
            let w = SmokeWeights::random(cfg, bins, seed, scale);
            write_atomic(&out, w.to_store().to_text().as_bytes())
                .with_context(|| format!("writing {}", out.display()))?;
            println!("N = {}, {} bins -> {}", cfg.n(), bins, out.display());
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::VALIDATION as u8)
        }
    }
}
