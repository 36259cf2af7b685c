//! Sweeps over random instances.
//!
//! ```toml
//! kinds = ["l2", "mahalanobis"]
//! n = [100, 400]
//! d = [2]
//! eps = [0.25, 0.1]
//! queries = 200
//! seed = 7
//! eager = false
//! ```
//!
//! Configurations run one after another so latencies are not disturbed.
//! Indices are lazy by default, so envelope counts cover the leaves the
//! queries touched. The tree does not depend on `eps`, so with a fixed query
//! set the same leaves are touched at every `eps`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use eann_core::ann::{brute_force, AnnIndex, BuildOptions};
use eann_core::instances::{random_queries, random_sites, InstanceKind};
use eann_core::par::Execution;
use serde::{Deserialize, Serialize};

use crate::CliResult;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub kinds: Vec<String>,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub eps: Vec<f64>,
    #[serde(default = "default_queries")]
    pub queries: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eager: bool,
}

fn default_queries() -> usize {
    200
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub kind: String,
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub tau: f64,
    pub build_seconds: f64,
    pub leaves: usize,
    pub envelope_samples: usize,
    pub bytes: usize,
    pub mean_latency_us: f64,
    pub median_latency_us: f64,
    pub p99_latency_us: f64,
    pub mean_visits: f64,
    pub max_ratio: f64,
    pub failures: usize,
}

#[derive(Debug, Serialize)]
pub struct StorageFit {
    pub kind: String,
    pub n: usize,
    pub d: usize,
    /// Slope of log envelope samples against log 1/eps.
    pub exponent: f64,
    pub reference: f64,
}

#[derive(Debug, Serialize)]
pub struct VisitFit {
    pub kind: String,
    pub d: usize,
    pub eps: f64,
    /// Increase of mean node visits per 4x sites.
    pub per_quadrupling: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub runs: Vec<RunRecord>,
    pub storage_fits: Vec<StorageFit>,
    pub visit_fits: Vec<VisitFit>,
    pub failures: usize,
}

/// Least-squares slope.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let i = ((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1);
    sorted[i]
}

fn run_one(kind: InstanceKind, n: usize, d: usize, eps: f64, cfg: &BenchConfig) -> Result<RunRecord, eann_core::Error> {
    let seed = cfg.seed ^ ((n as u64) << 20) ^ ((d as u64) << 8);
    let sites = random_sites(kind, n, d, seed)?;
    let t0 = Instant::now();
    let index = AnnIndex::build_with(
        sites,
        eps,
        BuildOptions {
            eager: cfg.eager,
            exec: Execution::best(),
            ..BuildOptions::default()
        },
    )?;
    let build_seconds = t0.elapsed().as_secs_f64();
    let qs = random_queries(kind, cfg.queries, d, seed.wrapping_add(1));
    let mut lat = Vec::with_capacity(qs.len());
    let (mut visits, mut worst, mut failures) = (0usize, 1.0f64, 0usize);
    for q in &qs {
        let t = Instant::now();
        let res = index.query_counted(q);
        lat.push(t.elapsed().as_secs_f64() * 1e6);
        let Ok((_, v, vis)) = res else {
            failures += 1;
            continue;
        };
        visits += vis;
        let (_, best) = brute_force(index.sites(), q)?;
        let ratio = if best > 0.0 { v / best } else if v == 0.0 { 1.0 } else { f64::INFINITY };
        worst = worst.max(ratio);
        if v > (1.0 + eps) * best + 1e-12 {
            failures += 1;
        }
    }
    let mut buf = Vec::new();
    index.write_to(&mut buf)?;
    let st = index.stats();
    let mean = lat.iter().sum::<f64>() / lat.len().max(1) as f64;
    lat.sort_by(f64::total_cmp);
    Ok(RunRecord {
        kind: kind.name().to_string(),
        n,
        d,
        eps,
        tau: index.tau(),
        build_seconds,
        leaves: st.tree.leaves,
        envelope_samples: st.envelope_samples,
        bytes: buf.len(),
        mean_latency_us: mean,
        median_latency_us: percentile(&lat, 0.5),
        p99_latency_us: percentile(&lat, 0.99),
        mean_visits: visits as f64 / qs.len().max(1) as f64,
        max_ratio: worst,
        failures,
    })
}

pub fn sweep(cfg: &BenchConfig) -> Result<BenchReport, eann_core::Error> {
    let kinds = cfg
        .kinds
        .iter()
        .map(|k| k.parse::<InstanceKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut runs = Vec::new();
    for &kind in &kinds {
        for &d in &cfg.d {
            for &n in &cfg.n {
                for &eps in &cfg.eps {
                    runs.push(run_one(kind, n, d, eps, cfg)?);
                }
            }
        }
    }
    let mut by_storage: BTreeMap<(String, usize, usize), Vec<&RunRecord>> = BTreeMap::new();
    let mut by_visits: BTreeMap<(String, usize, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in &runs {
        by_storage.entry((r.kind.clone(), r.n, r.d)).or_default().push(r);
        by_visits.entry((r.kind.clone(), r.d, r.eps.to_bits())).or_default().push(r);
    }
    let storage_fits = by_storage
        .into_iter()
        .filter(|(_, rs)| rs.len() >= 2 && rs.iter().all(|r| r.envelope_samples > 0))
        .map(|((kind, n, d), rs)| {
            let xs: Vec<f64> = rs.iter().map(|r| (1.0 / r.eps).ln()).collect();
            let ys: Vec<f64> = rs.iter().map(|r| (r.envelope_samples as f64).ln()).collect();
            StorageFit {
                kind,
                n,
                d,
                exponent: slope(&xs, &ys),
                reference: d as f64 / 2.0 + 0.5,
            }
        })
        .collect();
    let visit_fits = by_visits
        .into_iter()
        .filter(|(_, rs)| rs.len() >= 2)
        .map(|((kind, d, eps), rs)| {
            let xs: Vec<f64> = rs.iter().map(|r| (r.n as f64).ln() / 4f64.ln()).collect();
            let ys: Vec<f64> = rs.iter().map(|r| r.mean_visits).collect();
            VisitFit {
                kind,
                d,
                eps: f64::from_bits(eps),
                per_quadrupling: slope(&xs, &ys),
            }
        })
        .collect();
    let failures = runs.iter().map(|r| r.failures).sum();
    Ok(BenchReport {
        runs,
        storage_fits,
        visit_fits,
        failures,
    })
}

pub fn to_text(r: &BenchReport) -> String {
    let mut s = String::new();
    s.push_str("kind n d eps tau leaves envelope_samples bytes build_s mean_us median_us p99_us visits max_ratio failures\n");
    for x in &r.runs {
        s.push_str(&format!(
            "{} {} {} {} {:.4} {} {} {} {:.3} {:.1} {:.1} {:.1} {:.2} {:.6} {}\n",
            x.kind,
            x.n,
            x.d,
            x.eps,
            x.tau,
            x.leaves,
            x.envelope_samples,
            x.bytes,
            x.build_seconds,
            x.mean_latency_us,
            x.median_latency_us,
            x.p99_latency_us,
            x.mean_visits,
            x.max_ratio,
            x.failures
        ));
    }
    for f in &r.storage_fits {
        s.push_str(&format!(
            "storage_exponent kind={} n={} d={}: {:.3} (reference {:.1})\n",
            f.kind, f.n, f.d, f.exponent, f.reference
        ));
    }
    for f in &r.visit_fits {
        s.push_str(&format!(
            "visit_growth kind={} d={} eps={}: {:.3} per 4x n\n",
            f.kind, f.d, f.eps, f.per_quadrupling
        ));
    }
    s.push_str(&format!("failures: {}\n", r.failures));
    s
}

pub fn run(config: &Path, json_out: Option<&Path>) -> CliResult {
    let text = std::fs::read_to_string(config)?;
    let cfg: BenchConfig = toml::from_str(&text)?;
    let report = sweep(&cfg)?;
    print!("{}", to_text(&report));
    if let Some(p) = json_out {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
