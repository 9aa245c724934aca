//! `slidebo bench`: runs the simulated-user ablation and writes CSVs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use slidebo::harness::{run_study, write_summary_csv, write_trajectories_csv};
use slidebo::{Method, StudyConfig, StudyResult, TestFunction, TestFunctionKind};

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

fn parse_function(s: &str) -> Result<TestFunctionKind, String> {
    s.parse().map_err(|e: slidebo::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: slidebo::Error| e.to_string())
}

#[derive(Args, Clone, Debug)]
pub struct BenchArgs {
    /// sphere, rosenbrock (squared inner term) or rosenbrock_standard.
    #[arg(long, value_parser = parse_function, default_value = "sphere")]
    pub function: TestFunctionKind,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub d: u64,
    /// Comma-separated: sliders<c>, slider1, random, pointwise[<c>].
    #[arg(long, value_delimiter = ',', value_parser = parse_method,
          default_value = "sliders4,slider1,random,pointwise")]
    pub methods: Vec<Method>,
    /// Number of seeds; runs seeds first-seed .. first-seed + N.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub first_seed: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
    #[arg(long, default_value_t = slidebo::harness::DEFAULT_ORACLE_RESOLUTION as u64,
          value_parser = clap::value_parser!(u64).range(1..))]
    pub oracle_resolution: u64,
    /// Output directory for trajectories.csv and summary.csv.
    #[arg(long, default_value = "bench_out")]
    pub out: PathBuf,
}

pub fn run_studies(args: &BenchArgs) -> anyhow::Result<Vec<StudyResult>> {
    let function = TestFunction::new(args.function, args.d as usize)?;
    args.methods
        .iter()
        .map(|&method| {
            let mut cfg = StudyConfig::new(function, method);
            cfg.iterations = args.iterations as usize;
            cfg.seeds = (args.first_seed..args.first_seed + args.seeds).collect();
            cfg.oracle_resolution = args.oracle_resolution as usize;
            run_study(&cfg).with_context(|| format!("study {method} failed"))
        })
        .collect()
}

/// Runs every requested method, writes both CSVs and reports the mean
/// final residual per method on `report`.
pub fn run_bench(args: &BenchArgs, report: &mut impl Write) -> anyhow::Result<()> {
    let results = run_studies(args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let path = args.out.join(TRAJECTORIES_FILE);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_trajectories_csv(&results, BufWriter::new(file))?;
    let path = args.out.join(SUMMARY_FILE);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_summary_csv(&results, BufWriter::new(file))?;

    for r in &results {
        writeln!(
            report,
            "{:<12} {} d={} mean final residual {:.6}",
            r.method.to_string(),
            r.function.kind.name(),
            r.function.dimension,
            r.mean_final()
        )?;
    }
    Ok(())
}
