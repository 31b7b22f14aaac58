use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fraclab_cli::pipeline::describe;
use fraclab_cli::{load_config, report, run, EXIT_CHECK_FAILED, EXIT_IO, EXIT_PASS};

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Solve and verify fractional gradient systems from config files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a config and run its checks.
    Run {
        config: PathBuf,
        /// Run directory (default: [output] dir, else runs/<config name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent checks.
        #[arg(long, env = "FRACLAB_THREADS")]
        threads: Option<usize>,
    },
    /// Summarize the manifests of finished runs.
    Report {
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out, threads } => {
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1);
            match run(&config, out.as_deref(), threads) {
                Ok(r) => {
                    for c in &r.manifest.checks {
                        println!("{}", describe(c));
                    }
                    println!("manifest: {}", r.dir.join(fraclab_cli::manifest::MANIFEST_FILE).display());
                    r.manifest.exit_code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Report { dirs, csv } => {
            let rep = report::build(&dirs);
            print!("{}", rep.to_text());
            let mut code = if rep.all_pass { EXIT_PASS } else { EXIT_CHECK_FAILED };
            if let Some(path) = csv {
                if let Err(e) = std::fs::write(&path, rep.to_csv()) {
                    eprintln!("error: {}: {e}", path.display());
                    code = EXIT_IO;
                }
            }
            code
        }
        Command::Validate { config } => match load_config(&config) {
            Ok((cfg, _)) => {
                println!("{}: valid ({} components, checks: solve {})", config.display(), cfg.orders.m(), cfg.checks.run.join(" "));
                EXIT_PASS
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
