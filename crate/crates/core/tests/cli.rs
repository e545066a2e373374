use std::process::Command;

fn stocoap(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stocoap"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn plan_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = stocoap(&["plan", "--out", out, "--ratio", "2"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("transmissions = 1152"));
}

#[test]
fn infeasible_plan_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.csv");
    let rows: String = (0..16).map(|i| format!("{i},0.999\n")).collect();
    std::fs::write(&req, format!("block_id,r\n{rows}")).unwrap();
    let values = format!("requirements:{}", req.display());
    let (code, _, stderr) = stocoap(&[
        "plan", "--width", "32", "--height", "32", "--ratio", "0.25", "--values", &values,
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("infeasible"));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["plan", "--no-such-flag"],
        vec!["plan", "--trials", "0"],
        vec!["plan", "--loss", "2"],
        vec!["simulate", "--channel", "udp", "--trials", "1"],
        vec!["plan", "--channel", "scripted"],
        vec!["frobnicate"],
        vec![],
    ] {
        let (code, _, stderr) = stocoap(&args);
        assert_eq!(code, 2, "{args:?}: {stderr}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# small sweep\nwidth = 32\nheight = 32\ntrials = 5\nloss = 0, 0.5\nratio = 1\nout = results\n").unwrap();
    let (code, stdout, stderr) = stocoap(&["simulate", "--config", cfg.to_str().unwrap(), "--ratio", "1,2"]);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(stdout.lines().count(), 1 + 4);
    let rows = std::fs::read_to_string(dir.path().join("results/sim_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2 + 4 * 5);
}

#[test]
fn metrics_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = stocoap(&["simulate", "--width", "16", "--height", "16", "--trials", "1", "--save-images", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let original = dir.path().join("original.pgm");
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let (code, _, _) = stocoap(&[
        "metrics", "--images", empty.to_str().unwrap(), "--image", original.to_str().unwrap(),
        "--out", dir.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    let (code, stdout, _) = stocoap(&[
        "metrics", "--images", dir.path().join("images").to_str().unwrap(), "--image",
        original.to_str().unwrap(), "--out", dir.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("1 images"));
}

#[test]
fn agreement_timeout_is_a_protocol_failure() {
    let (code, _, stderr) = stocoap(&["recv", "--listen", "127.0.0.1:0", "--wait", "0.2"]);
    assert_eq!(code, 1, "{stderr}");
}
