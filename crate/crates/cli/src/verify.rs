use std::path::PathBuf;
use std::process::ExitCode;

use eann_core::admissibility::{
    check_directional_identity, measure_admissibility, measure_bregman_complexity, ComplexityReport, Region,
    SampleSpec, TAU_GATE,
};
use eann_core::config::DistanceConfig;
use eann_core::distances::Domain;
use eann_core::geom::{AlignedBox, EuclideanBall, Vector};
use eann_core::Error;
use serde::Serialize;

use crate::CliResult;

pub struct VerifyArgs {
    pub config: PathBuf,
    pub region: Option<String>,
    pub site: Option<String>,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub json_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct VerifyOutput {
    report: ComplexityReport,
    checks: Vec<Check>,
}

fn coords(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad coordinate {t:?}")))
        })
        .collect()
}

/// `box:LOW:HIGH` or `ball:CENTER:RADIUS`.
pub fn parse_region(s: &str) -> Result<Region, Error> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["box", lo, hi] => Ok(Region::Box(AlignedBox::new(Vector::new(coords(lo)?)?, Vector::new(coords(hi)?)?)?)),
        ["ball", c, r] => {
            let r: f64 = r
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad radius {r:?}")))?;
            Ok(Region::Ball(EuclideanBall::new(Vector::new(coords(c)?)?, r)?))
        }
        _ => Err(Error::InvalidParameter(format!("bad region {s:?}"))),
    }
}

fn region_center(r: &Region) -> Vector {
    match r {
        Region::Box(b) => b.center(),
        Region::Ball(b) => b.center.clone(),
    }
}

pub fn run(a: &VerifyArgs) -> CliResult {
    let cfg = DistanceConfig::load(&a.config)?;
    let region = a.region.as_deref().map(parse_region).transpose()?;
    let site = a.site.as_deref().map(coords).transpose()?.map(Vector::new).transpose()?;
    let d = match (&region, &site) {
        (Some(r), _) => r.dim(),
        (None, Some(s)) => s.dim(),
        _ => a.dim,
    };
    let is_bregman = cfg.kind == "bregman";
    let spec = if is_bregman { Some(cfg.bregman_spec(d)?) } else { None };
    let region = match region {
        Some(r) => r,
        None => match spec.as_ref().map(|s| s.domain()) {
            Some(Domain::Box(b)) => Region::Box(b.clone()),
            _ => {
                let c = site.clone().unwrap_or_else(|| Vector::zeros(d));
                Region::Ball(EuclideanBall::new(c, 1.0)?)
            }
        },
    };
    if let Some(s) = &site {
        if s.dim() != region.dim() {
            return Err(Error::DimensionMismatch {
                expected: region.dim(),
                got: s.dim(),
            }
            .into());
        }
    }
    let samples = SampleSpec::new(region.clone(), a.samples, a.seed)?;
    let mut checks = Vec::new();
    let report = match &spec {
        Some(spec) => {
            let report = measure_bregman_complexity(spec, &samples)?;
            let pts = samples.points();
            let dom = spec.domain();
            let mut worst = 0.0f64;
            for pair in pts.chunks_exact(2) {
                let (q, p) = (&pair[0], &pair[1]);
                if !dom.contains(q) || !dom.contains(p) {
                    continue;
                }
                let scale = spec.divergence(q, p)? + spec.divergence(p, q)?;
                if scale > 1e-12 {
                    worst = worst.max(check_directional_identity(spec, q, p)? / scale);
                }
            }
            checks.push(Check {
                name: "directional_identity",
                passed: worst <= 1e-9,
                detail: format!("max relative residual {worst:e}"),
            });
            if let Some(m) = report.mu_asym {
                let gap = (report.mu_dir - (1.0 + m)).abs() / report.mu_dir.max(1.0);
                checks.push(Check {
                    name: "mu_dir_equals_one_plus_mu_asym",
                    passed: gap <= 1e-6,
                    detail: format!("relative gap {gap:e}"),
                });
            }
            report
        }
        None => {
            let p = site.unwrap_or_else(|| region_center(&region));
            let f = cfg.make_sites(&[p])?.remove(0);
            measure_admissibility(&f, &samples)?
        }
    };
    checks.push(Check {
        name: "mu_dir_at_most_tau",
        passed: report.mu_dir <= report.tau * (1.0 + 1e-9),
        detail: format!("mu_dir {} tau {}", report.mu_dir, report.tau),
    });
    checks.push(Check {
        name: "tau_gate",
        passed: report.tau.is_finite() && report.tau <= TAU_GATE,
        detail: format!("tau {} gate {TAU_GATE}", report.tau),
    });
    print!("{}", report.to_text());
    for c in &checks {
        println!("check_{}: {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    let ok = checks.iter().all(|c| c.passed);
    if let Some(path) = &a.json_out {
        std::fs::write(path, serde_json::to_string_pretty(&VerifyOutput { report, checks })?)?;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
