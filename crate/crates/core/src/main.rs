//! Command-line front end: generate or load snapshot data, train the
//! autoencoder and reservoir, forecast, evaluate, or run the whole
//! pipeline in one shot.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use romcast::cae::{CaeModel, LatentTrajectory};
use romcast::config::{KeyValues, PipelineConfig};
use romcast::esn::EsnModel;
use romcast::grid::{load_snapshots, save_snapshots, split};
use romcast::pipeline::{self, evaluate};
use romcast::Result;

#[derive(Parser)]
#[command(
    name = "romcast",
    about = "Reduced-order forecasting of structured-grid scalar fields",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named baseline configuration.
    #[arg(long, value_parser = romcast::config::PRESET_NAMES)]
    preset: Option<String>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.preset {
            Some(name) => PipelineConfig::preset(name)?,
            None => PipelineConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg.apply(&KeyValues::load(path)?)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate benchmark snapshots and write them in the binary grid format.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the autoencoder on the training split and save its checkpoint.
    TrainCae {
        #[command(flatten)]
        common: Common,
    },
    /// Encode snapshots to a latent CSV with a trained autoencoder.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Autoencoder checkpoint; defaults to <out>/cae.romw.
        #[arg(long)]
        cae: Option<PathBuf>,
        /// Snapshot file; defaults to <out>/snapshots.bin.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Train the reservoir readout on a latent CSV and save its checkpoint.
    TrainRc {
        #[command(flatten)]
        common: Common,
        /// Latent trajectory CSV; defaults to <out>/latents_truth.csv.
        #[arg(long)]
        latents: Option<PathBuf>,
    },
    /// Forecast future latents from a warmup trajectory.
    Forecast {
        #[command(flatten)]
        common: Common,
        /// Reservoir checkpoint; defaults to <out>/esn.rome.
        #[arg(long)]
        esn: Option<PathBuf>,
        /// Warmup latent CSV; defaults to <out>/latents_truth.csv.
        #[arg(long)]
        latents: Option<PathBuf>,
        /// Number of autoregressive steps.
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Compare two snapshot files and write a relative L2 report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Reference snapshots.
        #[arg(long)]
        truth: PathBuf,
        /// Approximation snapshots.
        #[arg(long)]
        rom: PathBuf,
        /// Phase boundary time; earlier entries count as reconstruction.
        #[arg(long, default_value_t = 0.0)]
        split_time: f64,
    },
    /// Run generate, train, forecast, decode, and evaluate end to end.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn ensure_out(cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| romcast::Error::io(cfg.out_dir.display().to_string(), e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            ensure_out(&cfg)?;
            let set = pipeline::obtain_snapshots(&cfg)?;
            let path = cfg.out_dir.join("snapshots.bin");
            save_snapshots(&set, &path)?;
            println!(
                "wrote {} snapshots on a {}x{}x{} grid to {}",
                set.len(),
                set.grid.nx,
                set.grid.ny,
                set.grid.nz,
                path.display()
            );
        }
        Command::TrainCae { common } => {
            let cfg = common.resolve()?;
            ensure_out(&cfg)?;
            let set = pipeline::obtain_snapshots(&cfg)?;
            let (train_set, _) = split(&set, cfg.train_fraction)?;
            let mut cae_config = cfg.cae.clone();
            cae_config.seed = cfg.seed;
            let mut model = CaeModel::build(cae_config, set.grid)?;
            let losses = model.train(&train_set)?;
            let path = cfg.out_dir.join("cae.romw");
            model.save(&path)?;
            println!(
                "trained autoencoder for {} epochs (final loss {:.3e}, training error {:.3}%), saved {}",
                losses.len(),
                losses.last().copied().unwrap_or(f64::NAN),
                model.train_error_pct.unwrap_or(f64::NAN),
                path.display()
            );
        }
        Command::Encode {
            common,
            cae,
            snapshots,
        } => {
            let cfg = common.resolve()?;
            ensure_out(&cfg)?;
            let cae_path = cae.unwrap_or_else(|| cfg.out_dir.join("cae.romw"));
            let snap_path = snapshots.unwrap_or_else(|| cfg.out_dir.join("snapshots.bin"));
            let model = CaeModel::load(&cae_path)?;
            let set = load_snapshots(&snap_path)?;
            let latents = model.encode_set(&set)?;
            let path = cfg.out_dir.join("latents_truth.csv");
            latents.write_csv(&path)?;
            println!(
                "encoded {} snapshots to {}-dim latents in {}",
                latents.len(),
                latents.dim(),
                path.display()
            );
        }
        Command::TrainRc { common, latents } => {
            let cfg = common.resolve()?;
            ensure_out(&cfg)?;
            let latents_path = latents.unwrap_or_else(|| cfg.out_dir.join("latents_truth.csv"));
            let traj = LatentTrajectory::read_csv(&latents_path)?;
            let mut esn_config = cfg.esn.clone();
            esn_config.seed = cfg.seed;
            let mut model = EsnModel::init(esn_config, traj.dim())?;
            model.train(&traj)?;
            let path = cfg.out_dir.join("esn.rome");
            model.save(&path)?;
            println!(
                "trained reservoir readout on {} latent samples, saved {}",
                traj.len(),
                path.display()
            );
        }
        Command::Forecast {
            common,
            esn,
            latents,
            steps,
        } => {
            let cfg = common.resolve()?;
            ensure_out(&cfg)?;
            let esn_path = esn.unwrap_or_else(|| cfg.out_dir.join("esn.rome"));
            let latents_path = latents.unwrap_or_else(|| cfg.out_dir.join("latents_truth.csv"));
            let model = EsnModel::load(&esn_path)?;
            let warmup = LatentTrajectory::read_csv(&latents_path)?;
            let forecast = model.forecast(&warmup, steps)?;
            let path = cfg.out_dir.join("latents_pred.csv");
            forecast.write_csv(&path)?;
            println!("forecast {} steps to {}", forecast.len(), path.display());
        }
        Command::Evaluate {
            common,
            truth,
            rom,
            split_time,
        } => {
            let cfg = common.resolve()?;
            ensure_out(&cfg)?;
            let truth_set = load_snapshots(&truth)?;
            let rom_set = load_snapshots(&rom)?;
            let report = evaluate(&truth_set, &rom_set, split_time)?;
            let path = cfg.out_dir.join("report.csv");
            report.write_csv(&path)?;
            println!(
                "reconstruction: mean {:.4}% max {:.4}% over {} snapshots",
                report.reconstruction.mean_pct,
                report.reconstruction.max_pct,
                report.reconstruction.count
            );
            println!(
                "prediction: mean {:.4}% max {:.4}% over {} snapshots",
                report.prediction.mean_pct, report.prediction.max_pct, report.prediction.count
            );
            println!("wrote {}", path.display());
        }
        Command::Pipeline { common } => {
            let cfg = common.resolve()?;
            let report = pipeline::run_pipeline(&cfg)?;
            let summary_path = cfg.out_dir.join("summary.txt");
            let summary = std::fs::read_to_string(&summary_path)
                .map_err(|e| romcast::Error::io(summary_path.display().to_string(), e))?;
            print!("{summary}");
            println!(
                "done: reconstruction mean {:.4}%, prediction mean {:.4}%, artifacts in {}",
                report.reconstruction.mean_pct,
                report.prediction.mean_pct,
                cfg.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
