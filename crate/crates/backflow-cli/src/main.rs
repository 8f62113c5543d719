use std::process::ExitCode;

use backflow_cli::commands::{run, Context};
use backflow_cli::{Cli, CliError, RunConfig};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = RunConfig::from_args(cli.command, &cli.args)?;
    if let Some(workers) = cli.args.workers {
        if workers == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size worker pool: {e}")))?;
    }
    let progress = |msg: &str| eprintln!("[backflow {}] {msg}", config.command.name());
    let ctx = Context { out: &cli.args.out, resume: cli.args.resume.as_deref(), progress: &progress };
    let report = run(&config, &ctx)?;
    println!("{}", report.summary);
    for file in &report.outputs.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}
