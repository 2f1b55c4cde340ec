use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_coneflow");

const MODEL: &str = r#"
name = "model"
[grid]
theta_max = 1.0471975511965976
n_theta = 21
[flow]
alpha = 1.0
t_end = 2.0
[initial]
eps = 0.0
[output]
record_every = 10
"#;

const PERTURBED: &str = r#"
name = "perturbed"
[grid]
theta_max = 1.0471975511965976
n_theta = 21
[flow]
alpha = 1.0
s_end = 8.0
[initial]
eps = 0.05
[output]
record_every = 20
"#;

fn coneflow(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn model_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "model.toml", MODEL);
    let out = tmp.path().join("run");
    let o = coneflow(&["run", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    for f in ["timeseries.csv", "report.json", "config.echo", "snap_0.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let ts = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert_eq!(
        ts.lines().next().unwrap(),
        "t,s,u_min,u_max,phidot_theta_min,phidot_theta_max,sup_grad_phi,H_theta_min,H_theta_max,area,\
         integral_u_minus_alpha,H_min,w_min,utilde_min,utilde_max,sup_grad_utilde"
    );
    let last: Vec<f64> = ts.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 2.0);
    assert!((last[3] - 2.0).abs() < 1e-10);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["meta"]["termination"], "reached_t_end");
    for c in report["checks"].as_array().unwrap() {
        let m = c["margin"].as_f64().unwrap();
        if ["c0_sandwich", "phidot_bounds", "h_theta_band"].contains(&c["name"].as_str().unwrap()) {
            assert!(m.abs() < 1e-10, "{c}");
        }
    }

    let snap = fs::read_to_string(out.join("snap_0.csv")).unwrap();
    let header: Vec<&str> = snap.lines().take(6).collect();
    assert_eq!(header[0], "# n_dim = 2");
    assert_eq!(header[2], "# mode = axisymmetric");
    assert_eq!(header[5], "theta,u");

    let v = coneflow(&["verify", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0), "{}", stdout(&v));
    assert_eq!(stdout(&v), stdout(&o).lines().filter(|l| !l.starts_with("wrote")).map(|l| format!("{l}\n")).collect::<String>());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", PERTURBED);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = coneflow(&["run", &cfg, "--out-dir", d.to_str().unwrap(), "--seed", "7"]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for n in names {
        if n == "config.echo" {
            continue;
        }
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn bad_initial_data_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", PERTURBED);
    let out = tmp.path().join("x");
    let o = coneflow(&[
        "run",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--override",
        "initial.eps=0.9",
        "--override",
        "initial.k_radial=3",
    ]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("initial data not mean convex"), "{}", stderr(&o));
}

#[test]
fn config_errors_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", PERTURBED);
    let o = coneflow(&["run", &cfg, "--override", "grid.theta_max=2.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cone not convex"), "{}", stderr(&o));

    let bad = write_config(tmp.path(), "bad.toml", &format!("{PERTURBED}\n[grid.extra]\n"));
    let o = coneflow(&["run", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extra"), "{}", stderr(&o));

    let broken = write_config(tmp.path(), "broken.toml", "name = \"x\"\n[grid\n");
    let o = coneflow(&["run", &broken]);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn failed_check_sets_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", PERTURBED);
    let out = tmp.path().join("short");
    // Too short to become round, so the radius check must fail.
    let o = coneflow(&["run", &cfg, "--out-dir", out.to_str().unwrap(), "--override", "flow.s_end=0.5"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL radius"));
    let v = coneflow(&["verify", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn verify_rejects_tampered_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", PERTURBED);
    let out = tmp.path().join("run");
    assert_eq!(coneflow(&["run", &cfg, "--out-dir", out.to_str().unwrap()]).status.code(), Some(0));
    // Inflate u_max late in the run: the C0 sandwich must notice.
    let ts = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let mut lines: Vec<String> = ts.lines().map(str::to_string).collect();
    let k = lines.len() - 2;
    let mut cols: Vec<String> = lines[k].split(',').map(str::to_string).collect();
    let u_max: f64 = cols[3].parse().unwrap();
    cols[3] = format!("{:e}", u_max * 1.5);
    lines[k] = cols.join(",");
    fs::write(out.join("timeseries.csv"), lines.join("\n") + "\n").unwrap();
    let v = coneflow(&["verify", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(stdout(&v).contains("FAIL c0_sandwich"), "{}", stdout(&v));
}

#[test]
fn study_reports_orders() {
    let tmp = tempfile::tempdir().unwrap();
    let perturbed = r#"
name = "study"
[grid]
theta_max = 1.0471975511965976
n_theta = 51
[flow]
alpha = 1.0
t_end = 0.02
[output]
record_every = 5
"#;
    let cfg = write_config(tmp.path(), "s.toml", perturbed);
    let out = tmp.path().join("study");
    let o = coneflow(&["study", &cfg, "--grids", "51,101,201", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("orders.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let oracle: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[0] == "h_oracle_discrepancy").collect();
    assert_eq!(oracle.len(), 2);
    for r in oracle {
        let p: f64 = r[7].parse().unwrap();
        assert!((p - 2.0).abs() <= 0.2, "{r:?}");
        assert_eq!(&r[8], "ok");
    }
    assert!(out.join("n_theta_101").join("timeseries.csv").exists());

    let constant = write_config(tmp.path(), "c.toml", &format!("{perturbed}[initial]\neps = 0.0\n"));
    let out = tmp.path().join("study_c");
    let o = coneflow(&["study", &constant, "--grids", "11,21,41", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = fs::read_to_string(out.join("orders.csv")).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("final_u")).all(|l| l.ends_with("time_dominated")), "{text}");

    let o = coneflow(&["study", &cfg, "--grids", "51"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("need >= 3 grids"));
}
