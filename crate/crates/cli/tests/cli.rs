use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn fpwell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpwell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fpwell(args);
    assert!(
        out.status.success(),
        "fpwell {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn header(path: &Path) -> Vec<String> {
    read(path)
        .lines()
        .next()
        .unwrap()
        .split(',')
        .map(String::from)
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn asymptotics_prints_bundle() {
    let out = ok(&["asymptotics", "--sigma", "0.5", "--nu", "0.45"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in [
        "sigma", "nu", "P0", "Q0", "hL", "hR", "cK", "tau", "log_mu0", "log_eta0", "kappa", "theta",
    ] {
        assert!(v[key].is_f64(), "missing {key}");
    }
    let hr = v["hR"].as_f64().unwrap();
    assert!((hr - (3f64.sqrt() - std::f64::consts::PI / 3.0)).abs() < 1e-9);
    let dh = v["hL"].as_f64().unwrap() - hr;
    assert!((dh - std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = fpwell(&["asymptotics", "--sigma", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("fpwell:"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sigma = 0.5\nbogus = 1\n").unwrap();
    assert_eq!(
        fpwell(&["--config", s(&cfg), "asymptotics"]).status.code(),
        Some(2)
    );

    let missing = dir.path().join("nope.toml");
    assert_ne!(
        fpwell(&["--config", s(&missing), "asymptotics"])
            .status
            .code(),
        Some(0)
    );

    assert_eq!(
        fpwell(&["solve", "--init", "gaussian:1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        fpwell(&["sweep", "--nus", "0.4,0.5,0.6"]).status.code(),
        Some(2)
    );
    assert_eq!(fpwell(&["asymptotics", "--nu", "0"]).status.code(), Some(2));
}

#[test]
fn underflowing_time_scale_exits_three() {
    assert_eq!(
        fpwell(&["asymptotics", "--nu", "0.01"]).status.code(),
        Some(3)
    );
}

#[test]
fn toml_config_is_read_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "sigma = 0.25\nnu = 0.4\n").unwrap();
    let v: Value =
        serde_json::from_slice(&ok(&["--config", s(&cfg), "asymptotics"]).stdout).unwrap();
    assert_eq!(v["sigma"].as_f64(), Some(0.25));
    assert_eq!(v["nu"].as_f64(), Some(0.4));
    let v: Value =
        serde_json::from_slice(&ok(&["--config", s(&cfg), "asymptotics", "--nu", "0.5"]).stdout)
            .unwrap();
    assert_eq!(v["nu"].as_f64(), Some(0.5));
}

const SOLVE: &[&str] = &[
    "solve",
    "--sigma",
    "0.5",
    "--nu",
    "0.5",
    "--T",
    "0.5",
    "--wells",
    "-1:1",
    "--cells-per-well",
    "32",
    "--cadence",
    "0.1",
];

#[test]
fn solve_writes_diagnostics_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a/deeper");
    let mut args = SOLVE.to_vec();
    args.extend(["--out", s(&first)]);
    ok(&args);

    let cols = header(&first.join("diagnostics.csv"));
    for c in [
        "t", "E", "D", "P", "K", "V", "m_-1", "m_0", "m_1", "mbar_0", "mtilde_0",
    ] {
        assert!(cols.iter().any(|x| x == c), "missing column {c}");
    }
    assert!(first.join("density_0000.csv").exists());
    let diag = read(&first.join("diagnostics.csv"));
    assert!(diag.lines().count() >= 6);
    for line in diag.lines().skip(1) {
        let masses: f64 = line
            .split(',')
            .skip(6)
            .take(3)
            .map(|x| x.parse::<f64>().unwrap())
            .sum();
        assert!(masses <= 1.0 + 1e-12 && masses > 0.9);
    }

    let rec = json(&first.join("run.json"));
    assert_eq!(rec["command"], "solve");
    assert_eq!(rec["config_hash"].as_str().unwrap().len(), 64);
    assert!(rec["seeds"].is_array());
    assert!(rec["versions"]["core"].is_string());

    let second = dir.path().join("b");
    ok(&[
        "--config",
        s(&first.join("run.json")),
        "solve",
        "--out",
        s(&second),
    ]);
    assert_eq!(
        read(&first.join("diagnostics.csv")),
        read(&second.join("diagnostics.csv"))
    );
    let rec2 = json(&second.join("run.json"));
    // Only the output directory differs between the two configurations.
    assert_eq!(rec["config"]["solver"], rec2["config"]["solver"]);
}

#[test]
fn solve_accepts_gaussian_and_table_starts() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("rho.csv");
    let mut text = String::from("p,rho\n");
    for k in 0..=40 {
        let p = 0.2 + 0.05 * k as f64;
        text.push_str(&format!("{p},{}\n", (-(p - 1.2f64).powi(2) * 4.0).exp()));
    }
    std::fs::write(&table, text).unwrap();
    for (name, init) in [
        ("g", "gaussian:1.0,0.3".to_string()),
        ("t", format!("table:{}", s(&table))),
    ] {
        let out = dir.path().join(name);
        let mut args = SOLVE.to_vec();
        args.extend(["--init", &init, "--out", s(&out)]);
        ok(&args);
        assert!(out.join("diagnostics.csv").exists());
    }
}

#[test]
fn lattice_writes_masses_and_product() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lat");
    ok(&[
        "lattice",
        "--T",
        "1",
        "--wells",
        "2",
        "--init",
        "point:0",
        "--x-samples",
        "1,2",
        "--out",
        s(&out),
    ]);
    assert!(out.join("masses.csv").exists());
    assert!(out.join("product.csv").exists());
    let rows: Vec<Vec<f64>> = read(&out.join("masses.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    let first = &rows[0];
    assert_eq!(first[0], 0.0);
    // Mass inside the window plus the sinks is conserved.
    for r in &rows {
        let total: f64 = r[1..].iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
    }
}

#[test]
fn compare_and_sweep_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cmp = dir.path().join("cmp");
    ok(&[
        "compare",
        "--nu",
        "0.5",
        "--T",
        "0.5",
        "--wells",
        "-1:1",
        "--cells-per-well",
        "32",
        "--out",
        s(&cmp),
    ]);
    let cols = header(&cmp.join("masses.csv"));
    assert!(cols.iter().any(|c| c == "pde_0") && cols.iter().any(|c| c == "lattice_0"));

    let sw = dir.path().join("sw");
    let out = ok(&[
        "sweep",
        "--nus",
        "0.6,0.5,0.4",
        "--T",
        "0.5",
        "--wells",
        "-1:1",
        "--cells-per-well",
        "32",
        "--out",
        s(&sw),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("fitted order"));
    assert_eq!(read(&sw.join("convergence.csv")).lines().count(), 4);
}

#[test]
fn doublewell_and_supercritical_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let dw = dir.path().join("dw");
    ok(&[
        "doublewell",
        "--nu",
        "0.5",
        "--T",
        "0.5",
        "--cells-per-well",
        "64",
        "--out",
        s(&dw),
    ]);
    assert!(dw.join("diagnostics.csv").exists());
    assert!(dw.join("ode_reference.csv").exists());

    let sc = dir.path().join("sc");
    ok(&[
        "supercritical",
        "--sigma",
        "2",
        "--nu",
        "0.5",
        "--T",
        "2",
        "--cells",
        "200",
        "--out",
        s(&sc),
    ]);
    let summary = json(&sc.join("summary.json"));
    let exact = summary["lambda_quadrature"].as_f64().unwrap();
    assert!((exact - 3f64.sqrt()).abs() < 1e-9);
    assert!(summary["lambda_measured"].as_f64().unwrap() > 0.0);
    assert!(sc.join("first_moment.csv").exists());
}

#[test]
fn mc_is_reproducible_from_its_seed() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "mc",
        "--sigma",
        "0",
        "--nu",
        "0.6",
        "--T",
        "1",
        "--particles",
        "16",
        "--max-hops",
        "2",
        "--snapshots",
        "0.5,1",
        "--seed",
        "11",
    ];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = base.to_vec();
    args.extend(["--out", s(&a)]);
    ok(&args);
    ok(&["--config", s(&a.join("run.json")), "mc", "--out", s(&b)]);
    assert_eq!(read(&a.join("hops.csv")), read(&b.join("hops.csv")));
    assert_eq!(
        read(&a.join("occupation.csv")),
        read(&b.join("occupation.csv"))
    );
    assert_eq!(
        header(&a.join("hops.csv")),
        ["particle", "from", "to", "time"]
    );
    let rec = json(&a.join("run.json"));
    assert_eq!(rec["seeds"], serde_json::json!([11]));
}

#[test]
fn weights_dump_goes_to_stdout() {
    let out = ok(&[
        "weights",
        "--dump",
        "--wells",
        "0:1",
        "--cells-per-well",
        "4",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,psi_0,psi_1,phi"));
    assert_eq!(lines.count(), 5);
}
