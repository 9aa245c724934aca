use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slidebo_cli::{run_bench, serve, BenchArgs, ServerConfig};

#[derive(Parser)]
#[command(name = "slidebo", version, about = "Preferential Bayesian optimization with multi-way sliders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulated-user ablation and write CSVs.
    Bench(BenchArgs),
    /// Serve the session API.
    Serve(ServeArgs),
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, env = "PORT")]
    port: Option<u16>,
    /// TOML file with server settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default latent dimension (at least 8).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

impl ServeArgs {
    fn resolve(&self) -> anyhow::Result<ServerConfig> {
        let mut cfg = match &self.config {
            Some(path) => ServerConfig::from_file(path)?,
            None => ServerConfig::default(),
        };
        if let Some(p) = self.port {
            cfg.port = p;
        }
        if let Some(d) = self.d {
            cfg.d = d;
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(w) = self.width {
            cfg.width = w;
        }
        if let Some(h) = self.height {
            cfg.height = h;
        }
        // Fail at startup rather than on the first request.
        slidebo::ProceduralGenerator::new(cfg.d, cfg.width, cfg.height)?;
        anyhow::ensure!(cfg.c >= 2, "need at least two sliders");
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Bench(args) => run_bench(&args, &mut std::io::stdout()),
        Command::Serve(args) => {
            let cfg = args.resolve()?;
            tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(cfg))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
