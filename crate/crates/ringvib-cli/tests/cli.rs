use std::path::Path;
use std::process::{Command, Output};

fn ringvib(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ringvib"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("RINGVIB_WORKERS", w),
        None => cmd.env_remove("RINGVIB_WORKERS"),
    };
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// CSV body without the timestamp line.
fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let (stamp, rest) = text.split_once('\n').unwrap();
    assert!(stamp.starts_with("# generated by ringvib"), "{stamp}");
    rest.to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn spectrum_writes_layout_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "spectrum".to_string(),
            "--formulation".into(),
            "all".into(),
            "--p".into(),
            "2".into(),
            "--elems".into(),
            "16,24".into(),
            "--overkill".into(),
            "64".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let run = |out: &Path, w| {
        let owned = args(out);
        let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
        ringvib(&refs, Some(w))
    };
    let oa = run(&a, "1");
    assert_eq!(code(&oa), 0, "{}", stderr(&oa));
    let ob = run(&b, "4");
    assert_eq!(code(&ob), 0, "{}", stderr(&ob));

    for name in ["report.csv", "verdicts.json", "manifest.json", "locking_metrics.csv", "spectrum_dsg_p2_n16.csv"] {
        assert!(a.join(name).exists(), "{name}");
    }
    assert_eq!(body(&a.join("report.csv")), body(&b.join("report.csv")));
    assert_eq!(body(&a.join("spectrum_b-bar_p2_n24.csv")), body(&b.join("spectrum_b-bar_p2_n24.csv")));
    assert_eq!(json(&a.join("verdicts.json")), json(&b.join("verdicts.json")));

    let report = body(&a.join("report.csv"));
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "formulation,p,n_elem,branch,n,n_over_N,lambda_h,lambda_exact,ev_err,mode_err_L2,pyth_residual"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r.len(), 11);
        for v in &r[5..10] {
            assert!(v.parse::<f64>().unwrap().is_finite(), "{v}");
        }
    }
    let mut keys: Vec<(String, usize, usize)> =
        rows.iter().map(|r| (r[0].to_string(), r[2].parse().unwrap(), 0)).collect();
    keys.dedup();
    assert_eq!(keys.len(), 10, "five formulations times two meshes, contiguous");

    let v = json(&a.join("verdicts.json"));
    assert_eq!(v["study"], "spectrum");
    let verdicts = v["locking_verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 5 * 2 * 4);
    let full = verdicts
        .iter()
        .find(|x| x["formulation"] == "standard-full" && x["branch"] == "transverse" && x["quantity"] == "eigenvalue")
        .unwrap();
    assert_eq!(full["verdict"], "locking");
    let checks = v["acceptance_checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["criterion"] == 4));
    assert!(checks.iter().all(|c| c["pass"].is_boolean()));

    let m = json(&a.join("manifest.json"));
    assert_eq!(m["config"]["overkill"], 64);
    assert!(m["config"]["thresholds"]["locking"].is_number());
    assert!(m["parameter_provenance"]["ring"].is_string());
}

#[test]
fn empty_formulation_list_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = ringvib(&["spectrum", "--formulation", "", "--out", &out], None);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("formulations"));
}

#[test]
fn invalid_configuration_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o").display().to_string();
    let o = ringvib(&["spectrum", "--elems", "64", "--overkill", "32", "--out", &out], None);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`overkill`"), "{}", stderr(&o));

    let o = ringvib(&["locking-indicator", "--elems", "16", "--out", &out, "--overkill", "8"], None);
    assert_eq!(code(&o), 2);

    let o = ringvib(&["spectrum", "--slenderness", "-3", "--out", &out], None);
    assert_eq!(code(&o), 2);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[study]\nmeshes = \"many\"\n").unwrap();
    let o = ringvib(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", &out], None);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("config"));

    let o = ringvib(&["spectrum", "--elems", "16", "--out", &out], Some("zero"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("RINGVIB_WORKERS"));
}

#[test]
fn numeric_failure_reports_the_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = ringvib(&["spectrum", "--formulation", "bbar", "--p", "4", "--elems", "2", "--out", &out], None);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("b-bar p=4 n_elem=2"), "{}", stderr(&o));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "[study]\nkind = \"locking-indicator\"\nformulations = [\"full\", \"bbar\"]\ndegrees = [2]\nmeshes = [16]\noverkill = 48\noutput = \"{}\"\n",
            dir.path().join("ignored").display()
        ),
    )
    .unwrap();
    let o = ringvib(
        &["locking-indicator", "--config", cfg.to_str().unwrap(), "--elems", "12", "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!dir.path().join("ignored").exists());
    let report = body(&out.join("report.csv"));
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), "formulation,p,n_elem,overkill,branch,quantity,metric,n_points,verdict");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 4);
    assert!(rows.iter().all(|r| r.contains(",2,12,48,")));
}

#[test]
fn eigen_convergence_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = ringvib(
        &["eigen-convergence", "--formulation", "bbar", "--target-mode", "3", "--meshes", "16,32", "--p", "2", "--out", &out],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = body(&dir.path().join("report.csv"));
    assert_eq!(report.lines().count(), 3);
    let slopes = body(&dir.path().join("slopes.csv"));
    let row: Vec<&str> = slopes.lines().nth(1).unwrap().split(',').collect();
    let slope: f64 = row[4].parse().unwrap();
    assert!((slope - 2.0).abs() < 0.5, "{slope}");
}

#[test]
fn cantilever_rows_follow_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = ringvib(
        &[
            "cantilever",
            "--formulation",
            "hr",
            "--p",
            "2",
            "--meshes",
            "8,16,32",
            "--slenderness",
            "100",
            "--skip-reference-check",
            "--out",
            &out,
        ],
        Some("2"),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = body(&dir.path().join("report.csv"));
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "formulation,p,n_elem,R_over_t,rel_L2_err,slope_estimate,plateau_flag"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[0] == "hellinger-reissner" && r[6] == "false"));
    let v = json(&dir.path().join("verdicts.json"));
    assert!(v["details"]["reference"]["independence"].is_null());
}

#[test]
fn fixture_verification_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let o = ringvib(&["verify-fixtures", "--tol", "1e-9"], None);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("21 of 21 rows pass"));

    let o = ringvib(&["verify-fixtures", "--tol", "1e-9", "--modulus-scale", "1.01"], None);
    assert_eq!(code(&o), 4);
    let line = stdout(&o).lines().find(|l| l.starts_with("n= 5")).unwrap().to_string();
    let d: f64 = line.split("dlambda1=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((d - 0.01 / 1.01).abs() < 1e-6, "{line}");

    let missing = dir.path().join("absent.csv");
    let o = ringvib(&["verify-fixtures", "--fixture", missing.to_str().unwrap()], None);
    assert_eq!(code(&o), 5);

    let corrupt = dir.path().join("corrupt.csv");
    std::fs::write(&corrupt, "n,lambda1,lambda2,r1,r2\n2,abc,1,2,3\n").unwrap();
    let o = ringvib(&["verify-fixtures", "--fixture", corrupt.to_str().unwrap()], None);
    assert_eq!(code(&o), 4);
}
