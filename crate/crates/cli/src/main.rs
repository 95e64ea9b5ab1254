use std::process::ExitCode;

use clap::Parser;
use swarm_qed_cli::error::CliError;
use swarm_qed_cli::{execute, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (line, code) = match e.downcast_ref::<CliError>() {
                Some(c) => (c.line(), c.kind.exit_code()),
                None => (
                    format!("error: kind=internal message={:?}", format!("{e:#}")),
                    1,
                ),
            };
            eprintln!("{line}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    execute(cli)?;
    Ok(())
}
