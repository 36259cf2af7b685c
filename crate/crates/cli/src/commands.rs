use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use eann_core::ann::{brute_force, AnnIndex, BuildOptions};
use eann_core::config::DistanceConfig;
use eann_core::pointfile::read_points;
use eann_core::{Error, par::Execution};

use crate::CliResult;

pub fn build(points: &Path, config: &Path, eps: f64, out: &Path, eager: bool) -> CliResult {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::EpsOutOfRange(eps).into());
    }
    let pts = read_points(points)?;
    let cfg = DistanceConfig::load(config)?;
    let sites = cfg.make_sites(&pts)?;
    let exec = Execution::best();
    let index = AnnIndex::build_with(
        sites,
        eps,
        BuildOptions {
            eager,
            exec,
            ..BuildOptions::default()
        },
    )?;
    index.tree().materialize_all(exec);
    index.save(out)?;
    let bytes = std::fs::metadata(out)?.len();
    let st = index.stats();
    println!("n: {}", index.sites().len());
    println!("d: {}", index.dim());
    println!("tau: {}", index.tau());
    println!("alpha: {}", index.alpha());
    println!("beta: {}", index.beta());
    println!("leaves: {}", st.tree.leaves);
    println!("envelope_samples: {}", st.envelope_samples);
    println!("bytes: {bytes}");
    Ok(ExitCode::SUCCESS)
}

pub fn query(index_path: &Path, points: &Path, check: bool) -> CliResult {
    let index = AnnIndex::load(index_path)?;
    let qs = read_points(points)?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let (mut errors, mut failures) = (0usize, 0usize);
    let mut worst = 1.0f64;
    for (i, q) in qs.iter().enumerate() {
        match index.query(q) {
            Ok((w, v)) => {
                writeln!(out, "{w} {v}")?;
                if check {
                    let (_, best) = brute_force(index.sites(), q)?;
                    let ratio = if best > 0.0 { v / best } else if v == 0.0 { 1.0 } else { f64::INFINITY };
                    worst = worst.max(ratio);
                    if v > (1.0 + index.eps()) * best + 1e-12 {
                        failures += 1;
                        eprintln!("query {}: value {v} exceeds (1+eps) * {best}", i + 1);
                    }
                }
            }
            Err(e) => {
                errors += 1;
                writeln!(out, "error: {e}")?;
            }
        }
    }
    out.flush()?;
    if check {
        eprintln!("checked: {}", qs.len() - errors);
        eprintln!("max_ratio: {worst}");
        eprintln!("failures: {failures}");
    }
    Ok(if errors == 0 && failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
