use blochbeam::harness::{self, parse_config, read_csv, CSV_HEADER};
use blochbeam::wavefield::{read_field_csv, write_field_csv};

const STUDY: &str = "\
potential.v1 = 0.5
external.form = harmonic
external.omega = 0.5
S0.form = quadratic
S0.alpha = -1/4
bands = 1
envelope.1.sigma = 0.3
K0 = -2.3, 2.3
epsilons = 1/16, 1/32
T = 0.2
beam.dt = 0.02
grid.box_length = 6
";

#[test]
fn study_round_trips_through_csv() {
    let cfg = parse_config(STUDY).unwrap();
    let result = harness::run_convergence_study(&cfg).unwrap();
    assert!(result.all_completed());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("study.csv");
    harness::write_csv(&result, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = read_csv(&path).unwrap();
    assert_eq!(rows.len(), 2);
    for (row, parsed) in result.rows.iter().zip(&rows) {
        let d = row.data().unwrap();
        assert_eq!(parsed.epsilon, row.epsilon);
        assert_eq!(parsed.err_initial, Some(d.err_initial));
        assert_eq!(parsed.err_total, Some(d.err_total));
        assert_eq!(parsed.min_gap, Some(d.min_gap));
    }
    assert_eq!(rows[0].order_total, None);
    assert_eq!(rows[1].order_total, Some(result.order_total[0]));
}

#[test]
fn reference_snapshot_round_trips() {
    let cfg = parse_config(STUDY).unwrap();
    let cell = cfg.cell().unwrap();
    let (exact, run) = harness::reference(&cfg, &cell, 1.0 / 16.0).unwrap();
    assert!(run.mass_drift < 1e-12);
    assert_eq!(exact.grid, run.field.grid);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.csv");
    write_field_csv(&run.field, &path).unwrap();
    let back = read_field_csv(&path).unwrap();
    assert_eq!(back.grid, run.field.grid);
    assert_eq!(back.values, run.field.values);
}

#[test]
fn short_evolution_keeps_the_initial_error() {
    let cfg = parse_config(STUDY).unwrap();
    let cell = cfg.cell().unwrap();
    let eps = 1.0 / 32.0;
    let (initial, field) = harness::beam_fields(&cfg, &cell, eps).unwrap();
    let (exact, run) = harness::reference(&cfg, &cell, eps).unwrap();
    let e0 = blochbeam::wavefield::l2_error(&initial, &exact).unwrap();
    let e1 = blochbeam::wavefield::l2_error(&field, &run.field).unwrap();
    let norm = blochbeam::wavefield::l2_norm(&exact);
    assert!(e0 < 0.2 * norm, "{e0} vs {norm}");
    assert!(e1 < 1.2 * e0, "{e1} vs {e0}");
}
