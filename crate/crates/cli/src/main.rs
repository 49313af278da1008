use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};
use vocsync_cli::cli::{Cli, Commands};
use vocsync_cli::commands::{experiment_cmd, render_cmd, run_cmd, serve_cmd};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    if !e.render().to_string().contains("Usage:") {
                        eprintln!("\n{}", usage_for(std::env::args().nth(1)));
                    }
                    ExitCode::from(1)
                }
            };
        }
    };
    let result = match &cli.command {
        Commands::Run(a) => run_cmd(a),
        Commands::Experiment(a) => experiment_cmd(a).map(drop),
        Commands::Render(a) => render_cmd(a),
        Commands::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn usage_for(subcommand: Option<String>) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    subcommand
        .and_then(|name| cmd.find_subcommand_mut(&name).map(|c| c.render_usage()))
        .unwrap_or_else(|| cmd.render_usage())
        .to_string()
}
