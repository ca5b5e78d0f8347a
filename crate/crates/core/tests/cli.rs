use std::path::Path;
use std::process::{Command, Output};

use ctdelay::approx::rct_latency;

fn ctdelay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctdelay"))
        .args(args)
        .env_remove("CTDELAY_THREADS")
        .output()
        .expect("binary runs")
}

fn read_table(path: &Path) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut meta = Vec::new();
    let mut lines = text.lines();
    let header = loop {
        let line = lines.next().unwrap();
        match line.strip_prefix("# ") {
            Some(m) => meta.push(m.to_owned()),
            None => break line.split(',').map(String::from).collect(),
        }
    };
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (meta, header, rows)
}

#[test]
fn zero_tracing_curve_is_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.csv");
    let o = ctdelay(&[
        "kappa", "--direction", "backward", "--mode", "recursive", "--beta", "2", "--alpha", "0.1",
        "--sigma", "0.9", "--delay", "dirac:0.5", "--p", "0", "-o", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = String::from_utf8_lossy(&o.stdout);
    assert!(summary.contains("R0=2.000000"), "{summary}");
    let (meta, header, rows) = read_table(&out);
    assert!(meta[0].starts_with("ctdelay "));
    assert_eq!(header, ["a", "kappa_hat", "gen_0"]);
    for r in &rows {
        assert!((r[1] - (-r[0]).exp()).abs() < 1e-12);
        assert!((r[2] - r[1]).abs() < 1e-10);
    }
}

#[test]
fn metadata_replays_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let o = ctdelay(&[
        "simulate", "--p", "0.3", "--direction", "full", "--generation", "1", "--replicas", "3000",
        "--seed", "9", "--h", "0.05", "--a-max", "10", "-o", first.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&first).unwrap();
    let config: String = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter(|l| l.contains(" = "))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    let o = ctdelay(&["simulate", "--config", cfg.to_str().unwrap(), "-o", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn explicit_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "# rates\nbeta = 3\np = 0.2\nfirst-order = true\n").unwrap();
    let out = dir.path().join("k.csv");
    let o = ctdelay(&[
        "kappa", "--config", cfg.to_str().unwrap(), "--p", "0.1", "-o", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (meta, header, _) = read_table(&out);
    assert!(meta.contains(&"beta = 3".to_owned()));
    assert!(meta.contains(&"p = 0.1".to_owned()));
    assert_eq!(header.last().unwrap(), "first_order");
}

#[test]
fn exit_codes() {
    assert_eq!(ctdelay(&["kappa", "--p", "1.5"]).status.code(), Some(2));
    assert_eq!(ctdelay(&["kappa", "--delay", "gamma:2"]).status.code(), Some(2));
    assert_eq!(ctdelay(&["reproduce", "fig9"]).status.code(), Some(2));
    assert_eq!(ctdelay(&["frobnicate"]).status.code(), Some(2));
    let o = ctdelay(&["simulate", "--p", "0.3", "--replicas", "5", "--generation", "3"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient sample"));
    let o = ctdelay(&["sis", "--beta", "40", "--alpha", "0", "--sigma", "1", "--p", "1", "--delay", "0", "--tracing-start", "0", "--window-start", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(ctdelay(&["--help"]).status.code(), Some(0));
}

#[test]
fn latency_sweep_spot_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = ctdelay(&[
        "sweep", "rct-latency", "--r0", "2", "--T", "0:3:0.05", "--Ti", "0:3:0.05", "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let (_, header, rows) = read_table(&out);
    assert_eq!(header[..3], ["T", "Ti", "effect"]);
    assert_eq!(rows.len(), 61 * 61);
    for r in rows.iter().step_by(97) {
        let b = rct_latency(2.0, 0.4, 0.8, 1.0, r[0], r[1]).unwrap();
        let bracket = (b.backward_term + b.forward_term) / (0.5 * 0.8 * 2.0);
        assert!((r[2] - bracket).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn rct_reports_closed_form_and_quadrature() {
    let o = ctdelay(&["rct", "--p", "0.3", "--delay", "exp:0.5"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let row: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[5] - row[6]).abs() < 1e-3, "{row:?}");
    let o = ctdelay(&["rct", "--p", "0.3", "--latency", "1"]);
    assert!(o.status.success());
}

#[test]
fn reproduce_writes_panels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for fig in ["kernels", "sweep"] {
        let o = ctdelay(&["reproduce", fig, "--out-dir", d]);
        assert!(o.status.success(), "{fig}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = ctdelay(&["reproduce", "fig2", "--out-dir", d, "--replicas", "3000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "kernels_backward.csv",
        "kernels_forward.csv",
        "sweep_rct_latency.csv",
        "fig2_one-step_p0.3.csv",
        "fig2_one-step_p0.8.csv",
        "fig2_recursive_p0.3.csv",
        "fig2_recursive_p0.8.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let (meta, header, rows) = read_table(&dir.path().join("fig2_recursive_p0.3.csv"));
    assert!(meta.contains(&"generation: 4".to_owned()));
    assert_eq!(header, ["a", "kappa_hat", "theory", "first_order", "mc", "mc_lo", "mc_hi"]);
    let last = rows.last().unwrap();
    assert!((last[0] - 3.0).abs() < 1e-9);
    for r in &rows {
        assert!(r[2] <= r[1] + 1e-12 && r[5] <= r[4] && r[4] <= r[6]);
    }
}

#[test]
fn sis_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sis.csv");
    let o = ctdelay(&[
        "sis", "--population", "2000", "--seeds", "3", "--step", "0.5", "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ode_level="));
    let (_, header, rows) = read_table(&out);
    assert_eq!(header, ["t", "phase", "ode", "stochastic_mean", "stochastic_first"]);
    assert_eq!(rows.len(), 81);
    assert_eq!(rows[30][1], 1.0);
    assert_eq!(rows[31][1], 2.0);
}
