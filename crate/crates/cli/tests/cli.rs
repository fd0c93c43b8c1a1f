use std::path::Path;
use std::process::Command;

fn stflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stflow"))
}

const CONFIG: &str = r#"
seed = 3

[grid]
nx = 4
ny = 4
dx = 8.0
dy = 8.0
levels_space = 1
levels_time = 1

[time]
steps = 3
dt = 2.0

[rock]
kind = "gaussian"
log_variance = 0.5
correlation_length = 2.0

[[wells]]
name = "inj"
kind = "injector"
i = 0
j = 0
value = 1.0

[[wells]]
name = "prod"
kind = "producer"
i = 7
j = 7
value = 1000.0
radius = 0.1
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_outputs_and_compare_reads_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    for (mode, dir) in [("adaptive", "a"), ("fine", "f")] {
        let out = tmp.path().join(dir);
        let st = stflow()
            .args(["run", cfg.to_str().unwrap(), "--mode", mode, "--out", out.to_str().unwrap(), "--verbose-indicators"])
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        let rates = std::fs::read_to_string(out.join("rates.csv")).unwrap();
        assert!(rates.starts_with("time_days,qo_ft3_day,qw_ft3_day,cum_oil_ft3,cum_water_ft3\n"));
        assert_eq!(rates.lines().count(), 4);
        assert!(out.join("final.vtk").exists());
        let report = std::fs::read_to_string(out.join("report.toml")).unwrap();
        for key in ["system_setup_seconds", "linear_solve_seconds", "data_handle_seconds"] {
            assert!(report.contains(key));
        }
    }
    assert!(tmp.path().join("a/indicators").read_dir().unwrap().count() > 0);
    let st = stflow()
        .args(["compare", tmp.path().join("a").to_str().unwrap(), tmp.path().join("f").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(st.status.success());
    let text = String::from_utf8_lossy(&st.stdout);
    assert!(text.contains("saturation_l2_relative"));
    assert!(text.contains("speedup"));
}

#[test]
fn identical_runs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let mut csv = Vec::new();
    for dir in ["x", "y"] {
        let out = tmp.path().join(dir);
        let st = stflow().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
        assert!(st.status.success());
        csv.push(std::fs::read(out.join("rates.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), &CONFIG.replace("seed = 3", "seed = 3\nbogus = 1"));
    let st = stflow().args(["run", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("bogus"));

    let st = stflow().args(["run", tmp.path().join("missing.toml").to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(3));

    let failing = write_config(
        tmp.path(),
        &format!("{CONFIG}\n[solver.newton]\nmax_iters = 1\ndamping = false\n"),
    );
    let st = stflow()
        .args(["run", failing.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2), "{}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn upscale_reports_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("k.txt");
    std::fs::write(&f, "4 4\n1 1 100 100\n1 1 100 100\n1 1 100 100\n1 1 100 100\n").unwrap();
    let out = tmp.path().join("up");
    let st = stflow()
        .args(["upscale", f.to_str().unwrap(), "--levels", "1", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let text = String::from_utf8_lossy(&st.stdout);
    assert!(text.contains("level 0 kx: 2x2"));
    assert!(out.join("level0_kx.txt").exists());

    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "2 2\n1 2 3\n").unwrap();
    let st = stflow().args(["upscale", bad.to_str().unwrap(), "--levels", "1"]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
}
