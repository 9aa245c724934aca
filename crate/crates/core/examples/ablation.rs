//! Prints mean final residuals of every method on the two benchmark
//! functions. Usage: `cargo run --release --example ablation -- [d] [seeds] [iterations]`.

use std::time::Instant;

use slidebo::harness::run_study;
use slidebo::{Method, StudyConfig, TestFunction, TestFunctionKind};

fn main() -> slidebo::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let d = args.first().copied().unwrap_or(32);
    let seeds = args.get(1).copied().unwrap_or(10) as u64;
    let iterations = args.get(2).copied().unwrap_or(20);
    for kind in [TestFunctionKind::Sphere, TestFunctionKind::RosenbrockPaper] {
        let f = TestFunction::new(kind, d)?;
        for method in [Method::SlidersBo(4), Method::Slider1Bo, Method::RandomSampling, Method::PointwiseBo(4)] {
            let mut cfg = StudyConfig::new(f, method);
            cfg.seeds = (1..=seeds).collect();
            cfg.iterations = iterations;
            let t = Instant::now();
            let r = run_study(&cfg)?;
            println!(
                "{:<10} {:<10} d={d:<3} mean final {:>12.4} (per dim {:>8.4})  first {:>10.3}  [{:.1}s]",
                kind.name(),
                method.to_string(),
                r.mean_final(),
                r.mean_final() / d as f64,
                r.mean[0],
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
