use std::path::Path;
use std::process::{Command, Output};

fn acb(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_acb"));
    cmd.args(args).env_remove("ACB_SEED");
    if let Some(s) = env_seed {
        cmd.env("ACB_SEED", s);
    }
    cmd.output().expect("spawn acb")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

const SMALL_LB: &[&str] = &[
    "lowerbound",
    "--n",
    "256",
    "--r",
    "1",
    "--reps",
    "500",
    "--set",
    "band_test=false",
    "--set",
    "deltas=-1,0,1",
];

#[test]
fn config_errors_exit_2() {
    let out = acb(&["rates", "--n", "64"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = acb(&["coverage", "--set", "nonsense=1"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = acb(&["coverage", "--config", "/definitely/not/here.cfg"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = acb(&["sideways"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_3() {
    // a bandwidth below the design spacing leaves too few points in a window
    let out = acb(
        &["concentration", "--n", "64", "--reps", "1000", "--set", "h=0.001", "--set", "fit_reps=10"],
        None,
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stdout_report_and_env_seed() {
    let out = acb(SMALL_LB, None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("n,r,j,jstar,delta_from_jstar,test"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",42")));

    let mut args = SMALL_LB.to_vec();
    args.extend(["--seed", "5"]);
    let out = acb(&args, Some("9"));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",9")));
}

#[test]
fn jobs_do_not_change_output_and_manifest_replays() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    let many = dir.path().join("many.csv");
    let base = [
        "concentration",
        "--n",
        "128",
        "--reps",
        "1000",
        "--set",
        "h=0.2",
        "--set",
        "fit_reps=200",
        "--set",
        "u_points=3",
    ];
    let mut a = base.to_vec();
    a.extend(["--jobs", "1", "--out", one.to_str().unwrap()]);
    assert!(acb(&a, None).status.success());
    let mut b = base.to_vec();
    b.extend(["--jobs", "8", "--out", many.to_str().unwrap()]);
    assert!(acb(&b, None).status.success());
    assert_eq!(read(&one), read(&many));

    let manifest = dir.path().join("one.csv.manifest.json");
    let m: serde_json::Value = serde_json::from_str(&read(&manifest)).unwrap();
    assert_eq!(m["experiment"], "concentration");
    assert_eq!(m["rows"], 3);
    assert!(m["constants"]["c1"].as_f64().unwrap() > 0.0);

    let replay = dir.path().join("replay.csv");
    let out = acb(
        &[
            "concentration",
            "--config",
            manifest.to_str().unwrap(),
            "--out",
            replay.to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success());
    assert_eq!(read(&one), read(&replay));
}

#[test]
fn json_format() {
    let mut args = SMALL_LB.to_vec();
    args.extend(["--format", "json"]);
    let out = acb(&args, None);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert!(rows.iter().any(|r| r["test"] == "lr" && r["delta_from_jstar"] == 0));
}
