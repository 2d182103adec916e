mod args;
mod commands;
mod error;
mod output;

use clap::Parser;
use esap_core::config::AppConfig;
use esap_core::exec::Execution;

use crate::args::Cli;
use crate::commands::Context;
use crate::error::CliError;

fn configure(cli: &Cli) -> Result<AppConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    cli.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

fn main() {
    let cli = Cli::parse();
    let result = configure(&cli).and_then(|config| {
        let ctx = Context {
            config,
            pretty: cli.pretty,
            exec: Execution::default(),
        };
        commands::run(&ctx, &cli.command)
    });
    if let Err(e) = result {
        eprintln!("{}", e.to_json_line());
        std::process::exit(e.code as i32);
    }
}
