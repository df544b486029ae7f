use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn quick_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.cfg")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blochbeam"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("failed to start blochbeam")
}

fn header(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines().next().unwrap_or("").to_string()
}

#[test]
fn bands_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bands"], &quick_config(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("bands.csv")), "band,k,energy,e1,e2,gap");
    let rows = std::fs::read_to_string(dir.path().join("bands.csv")).unwrap().lines().count();
    assert_eq!(rows, 102);
}

#[test]
fn propagate_and_simulate_write_one_file_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["propagate", "--serial"], &quick_config(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for tag in ["eps16", "eps32"] {
        let h = header(&dir.path().join(format!("beams_{tag}.csv")));
        assert!(h.starts_with("x0,band,t,x,p,S,re_M,im_M"), "{h}");
    }
    let out = run(&["simulate"], &quick_config(), dir.path());
    assert!(out.status.success());
    for name in ["beams_initial_eps16.csv", "beams_final_eps32.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn reference_reports_mass_drift() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["reference"], &quick_config(), dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("eps16:") && stdout.contains("mass drift"), "{stdout}");
    assert!(dir.path().join("reference_eps32.csv").is_file());
}

#[test]
fn converge_writes_csv_plot_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["converge"], &quick_config(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("study.csv");
    assert_eq!(
        header(&csv),
        "epsilon,err_initial_L2,err_total_L2,order_initial,order_total,ref_mass_drift,min_ImM,min_gap,runtime_s"
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let first: Vec<&str> = rows[0].split(',').collect();
    assert_eq!((first[3], first[4]), ("", ""));
    let second: Vec<&str> = rows[1].split(',').collect();
    assert!(second[4].parse::<f64>().unwrap() > 0.0);
    let svg = std::fs::read_to_string(dir.path().join("study.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("slope 1/2"));
    let summary = std::fs::read_to_string(dir.path().join("study_summary.txt")).unwrap();
    assert!(summary.contains("with_A1 = true"));
}

#[test]
fn no_a1_flag_reaches_the_study() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["converge", "--no-a1", "--serial"], &quick_config(), dir.path());
    assert!(out.status.success());
    let summary = std::fs::read_to_string(dir.path().join("study_summary.txt")).unwrap();
    assert!(summary.contains("with_A1 = false"));
}

#[test]
fn residual_writes_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["residual"], &quick_config(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        header(&dir.path().join("residual.csv")),
        "epsilon,x0,ratio_h,ratio_h_half,max_solvability"
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("HJ ratios in"));
}

#[test]
fn schema_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "bands = 1\nK0 = -1, 1\nepsilons = 1/16, 1/48\nT = 0.1\nfoo = 3\n").unwrap();
    let out = run(&["converge"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3") && stderr.contains("line 5"), "{stderr}");
}

#[test]
fn failed_rows_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(quick_config()).unwrap().replace("beam.dt = 0.02", "beam.dt = 0.02\nreference.dt_factor = 4");
    let cfg = dir.path().join("coarse.cfg");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["converge"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED"));
    assert!(dir.path().join("study.csv").is_file());
}

#[test]
fn missing_config_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bands"], &dir.path().join("absent.cfg"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}
