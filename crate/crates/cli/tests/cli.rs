use std::path::Path;
use std::process::{Command, Output};

fn eann(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eann"))
        .args(args)
        .current_dir(dir)
        .env("EANN_THREADS", "1")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// Deterministic pseudo-random coordinates in `[0, 1)`.
fn lcg_points(n: usize, d: usize, mut state: u64) -> String {
    let mut s = String::new();
    for _ in 0..n {
        let row: Vec<String> = (0..d)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                format!("{}", (state >> 11) as f64 / (1u64 << 53) as f64)
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sites.txt"), format!("# sites\n{}", lcg_points(100, 2, 1))).unwrap();
    std::fs::write(dir.path().join("queries.txt"), lcg_points(1000, 2, 2)).unwrap();
    std::fs::write(dir.path().join("l2.toml"), "kind = \"minkowski\"\nk = 2.0\n").unwrap();
    dir
}

fn summary_value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .parse()
        .unwrap()
}

#[test]
fn build_then_query_with_check() {
    let dir = setup();
    let p = dir.path();
    let out = eann(&["build", "--points", "sites.txt", "--config", "l2.toml", "--eps", "0.25", "--out", "idx.eann"], p);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert_eq!(summary_value(&s, "n"), 100.0);
    assert_eq!(summary_value(&s, "d"), 2.0);
    let tau = summary_value(&s, "tau");
    assert!((summary_value(&s, "alpha") - 2.0 * tau).abs() < 1e-12);
    assert!(summary_value(&s, "leaves") >= 1.0);
    assert!(summary_value(&s, "bytes") > 0.0);

    let q = eann(&["query", "--index", "idx.eann", "--points", "queries.txt", "--check"], p);
    assert!(q.status.success(), "{}", text(&q.stderr));
    let lines: Vec<String> = text(&q.stdout).lines().map(String::from).collect();
    assert_eq!(lines.len(), 1000);
    assert!(text(&q.stderr).contains("failures: 0"));

    let again = eann(&["query", "--index", "idx.eann", "--points", "queries.txt"], p);
    assert_eq!(again.stdout, q.stdout);
}

#[test]
fn querying_a_site_gives_zero() {
    let dir = setup();
    let p = dir.path();
    assert!(eann(&["build", "--points", "sites.txt", "--config", "l2.toml", "--eps", "0.1", "--out", "i.eann"], p)
        .status
        .success());
    let first = lcg_points(1, 2, 1);
    std::fs::write(p.join("one.txt"), &first).unwrap();
    let q = eann(&["query", "--index", "i.eann", "--points", "one.txt"], p);
    assert_eq!(text(&q.stdout).trim(), "0 0");
}

#[test]
fn build_errors() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("empty.txt"), "# nothing\n").unwrap();
    let out = eann(&["build", "--points", "empty.txt", "--config", "l2.toml", "--eps", "0.25", "--out", "x"], p);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("no sites"));

    let out = eann(&["build", "--points", "sites.txt", "--config", "l2.toml", "--eps", "0", "--out", "x"], p);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("eps out of range"));

    std::fs::write(p.join("bad.txt"), "1 2\n3 4 5\n").unwrap();
    let out = eann(&["build", "--points", "bad.txt", "--config", "l2.toml", "--eps", "0.25", "--out", "x"], p);
    assert!(text(&out.stderr).contains("line 2"));
}

#[test]
fn query_reports_domain_violations_per_line() {
    let dir = setup();
    let p = dir.path();
    let sites: String = lcg_points(50, 2, 5)
        .lines()
        .map(|l| l.split(' ').map(|x| format!("{}", 0.1 + 0.9 * x.parse::<f64>().unwrap())).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(p.join("kl_sites.txt"), sites).unwrap();
    std::fs::write(
        p.join("kl.toml"),
        "kind = \"bregman\"\ngenerator = \"kl\"\ndomain_low = [0.1, 0.1]\ndomain_high = [1.0, 1.0]\n",
    )
    .unwrap();
    std::fs::write(p.join("kq.txt"), "0.5 0.5\n0.01 0.5\n0.7 0.2\n").unwrap();
    assert!(eann(&["build", "--points", "kl_sites.txt", "--config", "kl.toml", "--eps", "0.25", "--out", "k.eann"], p)
        .status
        .success());
    let q = eann(&["query", "--index", "k.eann", "--points", "kq.txt"], p);
    let out = text(&q.stdout);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("error: query outside domain"));
    assert!(!lines[0].starts_with("error") && !lines[2].starts_with("error"));
    assert!(!q.status.success());
}

#[test]
fn verify_reports() {
    let dir = setup();
    let p = dir.path();
    let out = eann(&["verify", "--config", "l2.toml", "--samples", "5000"], p);
    assert!(out.status.success());
    let tau = summary_value(&text(&out.stdout), "tau");
    assert!((1.0..=1.01).contains(&tau));

    std::fs::write(p.join("se.toml"), "kind = \"bregman\"\ngenerator = \"squared-euclidean\"\n").unwrap();
    let out = eann(&["verify", "--config", "se.toml", "--region", "box:0,0:1,1", "--json-out", "v.json"], p);
    assert!(out.status.success());
    let s = text(&out.stdout);
    assert!((summary_value(&s, "mu_asym") - 1.0).abs() < 1e-9);
    assert!((summary_value(&s, "mu_dir") - 2.0).abs() < 1e-9);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("v.json")).unwrap()).unwrap();
    assert!(json["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    std::fs::write(
        p.join("kl.toml"),
        "kind = \"bregman\"\ngenerator = \"kl\"\ndomain_low = [0.1, 0.1]\ndomain_high = [1.0, 1.0]\n",
    )
    .unwrap();
    let out = eann(&["verify", "--config", "kl.toml"], p);
    assert!(out.status.success());
    assert!(summary_value(&text(&out.stdout), "tau").is_finite());
}

#[test]
fn bench_sweeps() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("trivial.toml"), "kinds = [\"l2\"]\nn = [1]\nd = [2]\neps = [0.25]\nqueries = 50\n").unwrap();
    let out = eann(&["bench", "trivial.toml"], p);
    assert!(out.status.success());
    assert!(text(&out.stdout).contains(" 1.000000 0\n"));

    std::fs::write(
        p.join("sweep.toml"),
        "kinds = [\"l2\"]\nn = [100, 400]\nd = [2]\neps = [0.4, 0.2, 0.1]\nqueries = 100\nseed = 3\n",
    )
    .unwrap();
    let out = eann(&["bench", "sweep.toml", "--json-out", "b.json"], p);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("b.json")).unwrap()).unwrap();
    assert_eq!(json["failures"], 0);
    assert_eq!(json["runs"].as_array().unwrap().len(), 6);
    for f in json["storage_fits"].as_array().unwrap() {
        assert!(f["exponent"].as_f64().unwrap() <= 1.5);
    }
    for f in json["visit_fits"].as_array().unwrap() {
        assert!(f["per_quadrupling"].as_f64().unwrap() <= 6.0);
    }
}
