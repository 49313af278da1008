use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "vocsync",
    version,
    about = "Simulate and steer populations of rhythmically vocalizing agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Simulate a configuration and write events.csv, snapshots.jsonl and summary.csv.
    Run(RunArgs),
    /// Master/slave chain experiment.
    Experiment(ExperimentArgs),
    /// Render a run to a 16-bit mono WAV file.
    Render(RenderArgs),
    /// Serve a live simulation over WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, env = "VOCSYNC_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Feedback,
    ActionReaction,
    Both,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Chain length including the master.
    #[arg(long, default_value_t = 8, value_parser = at_least(2))]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10, value_parser = at_least(1))]
    pub trials: usize,
    #[arg(long, default_value_t = 120)]
    pub cycles: usize,
    #[arg(long, default_value_t = 20)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0, env = "VOCSYNC_SEED")]
    pub seed: u64,
    /// Onset jitter of the slaves (ms).
    #[arg(long, default_value_t = 3.0)]
    pub jitter: f64,
    /// Reaction latency of action-reaction slaves (ms).
    #[arg(long, default_value_t = 23.8)]
    pub latency: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gain_other: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gain_self: f64,
    /// Preferred period of every agent (ms).
    #[arg(long, default_value_t = 500.0)]
    pub period: f64,
    /// Summary CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report with the full experiment settings and table.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 44_100, value_parser = clap::value_parser!(u32).range(8_000..=192_000))]
    pub sample_rate: u32,
    /// Render this events.csv instead of simulating the configuration.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Randomize agent pitches with this seed before rendering.
    #[arg(long)]
    pub individuality_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub config: PathBuf,
    #[arg(long, default_value_t = 8765, env = "VOCSYNC_PORT")]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "VOCSYNC_SEED")]
    pub seed: Option<u64>,
    /// Simulated time per unit of wall-clock time.
    #[arg(long, default_value_t = 1.0, value_parser = parse_speed)]
    pub speed: f64,
}

fn at_least(min: usize) -> impl Fn(&str) -> Result<usize, String> + Clone + Send + Sync + 'static {
    move |s| match s.parse::<usize>() {
        Ok(v) if v >= min => Ok(v),
        Ok(v) => Err(format!("must be at least {min} (got {v})")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_speed(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("speed must be a positive number (got {s})")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn experiment_flags() {
        let cli = Cli::try_parse_from([
            "vocsync",
            "experiment",
            "--n",
            "8",
            "--mode",
            "action-reaction",
            "--jitter",
            "0",
            "--latency",
            "23.8",
        ])
        .unwrap();
        let Commands::Experiment(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.mode, ModeArg::ActionReaction);
        assert_eq!(a.jitter, 0.0);
        assert_eq!(a.trials, 10);
    }

    #[test]
    fn zero_trials_and_short_chains_rejected() {
        assert!(Cli::try_parse_from(["vocsync", "experiment", "--trials", "0"]).is_err());
        assert!(Cli::try_parse_from(["vocsync", "experiment", "--n", "1"]).is_err());
        assert!(Cli::try_parse_from(["vocsync", "serve", "c.json", "--speed", "0"]).is_err());
    }
}
