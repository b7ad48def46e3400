use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcc_cli::{commands, Mode, RunConfig};

#[derive(Parser)]
#[command(
    name = "pcc",
    version,
    about = "Passive channel charting on simulated UWB meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a training session and two test targets.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a chart (pcc) or fingerprinting (fp) model on a bundle.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training bundle directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "pcc")]
        mode: Mode,
        /// Distance window in seconds; overrides the config.
        #[arg(long)]
        window: Option<f64>,
        /// Link selection name; overrides the config.
        #[arg(long)]
        links: Option<String>,
        /// Output directory for the checkpoint and transform.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained model on a bundle and print metrics JSON.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        transform: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the metrics to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one chart per window and score it on both targets.
    SweepWindow {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding train/, p1/ and p2/.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,10,40")]
        windows: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train per link selection and score on both targets.
    SweepMesh {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "full,st_0,ac_2_s")]
        selections: Vec<String>,
        /// Also train the fingerprinting baseline.
        #[arg(long)]
        both: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scatter plot of chart coordinates as SVG.
    Plot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        transform: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Apply the stored transform before plotting.
        #[arg(long)]
        aligned: bool,
        /// Plot every n-th frame.
        #[arg(long, default_value_t = 10)]
        every: usize,
    },
}

fn load_config(path: Option<&PathBuf>) -> pcc_cli::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> pcc_cli::Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(config.as_ref())?;
            let s = commands::simulate(&cfg, &out)?;
            println!(
                "wrote {} train, {} p1, {} p2 frames to {}",
                s.train.frames.len(),
                s.p1.frames.len(),
                s.p2.frames.len(),
                out.display()
            );
        }
        Command::Train {
            config,
            data,
            mode,
            window,
            links,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(w) = window {
                cfg = cfg.with_window(w)?;
            }
            if let Some(l) = links {
                cfg = cfg.with_links(&l)?;
            }
            let model = commands::train(&cfg, &data, mode, &out)?;
            if let Some(last) = model.loss_history.last() {
                println!("final epoch loss {last:.6}");
            }
            println!("wrote {}", out.display());
        }
        Command::Evaluate {
            checkpoint,
            transform,
            data,
            out,
        } => {
            println!(
                "{}",
                commands::evaluate(&checkpoint, &transform, &data, out.as_deref())?
            );
        }
        Command::SweepWindow {
            config,
            data,
            windows,
            out,
        } => {
            let cfg = load_config(config.as_ref())?;
            print!("{}", commands::sweep_window(&cfg, &data, &windows, &out)?);
        }
        Command::SweepMesh {
            config,
            data,
            selections,
            both,
            out,
        } => {
            let cfg = load_config(config.as_ref())?;
            print!("{}", commands::sweep_mesh(&cfg, &data, &selections, both, &out)?);
        }
        Command::Plot {
            checkpoint,
            transform,
            data,
            out,
            aligned,
            every,
        } => commands::plot(&checkpoint, &transform, &data, &out, aligned, every)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use pcc_cli::CliError;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn mode_parses() {
        assert!(matches!("fp".parse::<Mode>(), Ok(Mode::Fp)));
        assert!(matches!("x".parse::<Mode>(), Err(CliError::Usage(_))));
    }
}
