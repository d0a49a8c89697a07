use std::process::ExitCode;

use clap::Parser;

use posediff_cli::cli::{execute, Cli};

/// Exit status when a run completes but an embedded check fails.
const CHECK_FAILED: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let args = cli.command.args();
    let fail = |e: posediff_cli::CliError| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code() as u8)
    };
    let cfg = match args.to_config() {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(&cli.command, &cfg, &args.out, args.trajectories) {
        Ok(report) => {
            let (traj, top): (Vec<_>, Vec<_>) = report
                .files
                .iter()
                .partition(|f| f.parent().is_some_and(|p| p.ends_with("trajectories")));
            for f in top {
                println!("wrote {}", f.display());
            }
            if let Some(dir) = traj.first().and_then(|f| f.parent()) {
                println!(
                    "wrote {} trajectory files under {}",
                    traj.len(),
                    dir.display()
                );
            }
            for msg in &report.failures {
                eprintln!("check failed: {msg}");
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(CHECK_FAILED)
            }
        }
        Err(e) => fail(e),
    }
}
