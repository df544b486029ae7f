//! Convergence studies over an ε ladder: config parsing, the per-ε
//! pipeline (exact datum, beams, reference solve), observed orders and the
//! CSV/SVG outputs.

mod config;
mod output;

pub use config::{
    load_config, parse_config, parse_number, StudyConfig, DEFAULT_CUTOFF, DEFAULT_DX0_FACTOR,
    DEFAULT_POINTS_PER_CELL, MAX_EPSILON,
};
pub use output::{emit_plot, read_csv, write_csv, write_summary, CsvRow, CSV_HEADER};

use std::time::Instant;

use rayon::prelude::*;

use crate::beam_dynamics::{
    compute_a1_on_ray, rk4_propagate, solvability_residual, BeamTrajectory,
};
use crate::cell_spectral::{BandStructure, CellProblem};
use crate::error::{Error, Result};
use crate::reference_solver::{run_reference, subsample, ReferenceRun, SplitStepConfig};
use crate::wavefield::{
    exact_initial, hj_residual, l2_error, launch_beams, superpose, Beam, Grid, WaveField,
};

/// Largest box-edge modulus, relative to the field maximum, tolerated in
/// the reference field.
pub const EDGE_TOLERANCE: f64 = 1e-10;
/// Largest change of the reference field under doubling the grid density.
pub const RESOLUTION_TOLERANCE: f64 = 1e-8;
/// Largest change of the reference field under halving its step, relative
/// to the total beam error it is compared with.
pub const STEP_GATE_RATIO: f64 = 0.1;
/// Rays whose launch amplitude is below this fraction of the peak are
/// ignored by the focal-time diagnostic.
pub const FOCAL_AMPLITUDE_FLOOR: f64 = 1e-3;

/// Diagnostics of one completed ε row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowData {
    pub epsilon: f64,
    pub err_initial: f64,
    pub err_total: f64,
    pub ref_mass_drift: f64,
    pub min_im_m: f64,
    pub min_gap: f64,
    pub runtime_s: f64,
    pub beams: usize,
    pub grid_points: usize,
    pub max_beam_modulus: f64,
    pub max_reference_modulus: f64,
    /// First time neighbouring rays cross, if before `T`.
    pub focal_time: Option<f64>,
    pub resolution_change: Option<f64>,
    pub step_change: Option<f64>,
    pub extrapolated_points: usize,
}

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub epsilon: f64,
    /// Error message when the row was aborted.
    pub outcome: std::result::Result<RowData, String>,
}

impl StudyRow {
    pub fn data(&self) -> Option<&RowData> {
        self.outcome.as_ref().ok()
    }
}

#[derive(Debug, Clone, Default)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    /// `order_initial[i]` belongs to the pair of rows `(i, i + 1)`.
    pub order_initial: Vec<f64>,
    pub order_total: Vec<f64>,
}

impl StudyResult {
    pub fn from_rows(rows: Vec<StudyRow>) -> Self {
        let orders = |pick: fn(&RowData) -> f64| -> Vec<f64> {
            rows.windows(2)
                .map(|w| match (w[0].data(), w[1].data()) {
                    (Some(a), Some(b)) => observed_order(pick(a), pick(b)),
                    _ => f64::NAN,
                })
                .collect()
        };
        StudyResult {
            order_initial: orders(|r| r.err_initial),
            order_total: orders(|r| r.err_total),
            rows,
        }
    }

    pub fn all_completed(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.is_ok())
    }
}

/// `log₂(err(ε) / err(ε/2))`; NaN when either error is zero or not finite.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    if coarse > 0.0 && fine > 0.0 && coarse.is_finite() && fine.is_finite() {
        (coarse / fine).log2()
    } else {
        f64::NAN
    }
}

/// Beams launched at `t = 0` for one ε, with their node spacing.
pub fn launch(cfg: &StudyConfig, cell: &CellProblem, epsilon: f64) -> Result<(Vec<Beam>, f64)> {
    launch_beams(&cfg.initial, &cfg.superposition(epsilon), &cfg.external, cell)
}

/// RK4 trajectories of all beams up to `T`.
pub fn propagate(cfg: &StudyConfig, cell: &CellProblem, beams: &[Beam]) -> Result<Vec<BeamTrajectory>> {
    let dt = cfg.beam_dt();
    let run = |b: &Beam| rk4_propagate(&b.state, &cfg.external, cell, cfg.t_final, dt);
    if cfg.parallel {
        beams.par_iter().map(run).collect()
    } else {
        beams.iter().map(run).collect()
    }
}

/// Final beams with the on-ray corrector when the study uses it.
pub fn final_beams(
    cfg: &StudyConfig,
    cell: &CellProblem,
    trajectories: &[BeamTrajectory],
) -> Result<Vec<Beam>> {
    let finish = |traj: &BeamTrajectory| -> Result<Beam> {
        let state = *traj.final_state();
        let a1 = if cfg.with_a1 {
            Some(compute_a1_on_ray(&state, &cfg.external, cell)?)
        } else {
            None
        };
        Ok(Beam { state, a1 })
    };
    if cfg.parallel {
        trajectories.par_iter().map(finish).collect()
    } else {
        trajectories.iter().map(finish).collect()
    }
}

/// First time at which two neighbouring rays of the same band cross.
///
/// Trajectories must come in launch order. Rays launched with an
/// amplitude below [`FOCAL_AMPLITUDE_FLOOR`] of the peak are skipped.
pub fn first_crossing_time(trajectories: &[BeamTrajectory]) -> Option<f64> {
    let peak = trajectories
        .iter()
        .map(|t| t.states[0].a.norm())
        .fold(0.0, f64::max);
    let floor = FOCAL_AMPLITUDE_FLOOR * peak;
    let mut first: Option<f64> = None;
    for pair in trajectories.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.states[0].band != b.states[0].band
            || a.states[0].a.norm() < floor
            || b.states[0].a.norm() < floor
        {
            continue;
        }
        let orientation = (b.states[0].xt - a.states[0].xt).signum();
        let hit = a
            .states
            .iter()
            .zip(&b.states)
            .find(|(sa, sb)| (sb.xt - sa.xt) * orientation <= 0.0)
            .map(|(sa, _)| sa.t);
        if let Some(t) = hit {
            first = Some(first.map_or(t, |f: f64| f.min(t)));
        }
    }
    first
}

fn reference_config(cfg: &StudyConfig, cell: &CellProblem, grid: Grid, epsilon: f64, factor: f64) -> Result<SplitStepConfig> {
    SplitStepConfig::from_potentials(grid, epsilon, cell.potential(), &cfg.external, factor)
}

/// Reference solution at `T` from the exact datum.
pub fn reference(cfg: &StudyConfig, cell: &CellProblem, epsilon: f64) -> Result<(WaveField, ReferenceRun)> {
    let grid = cfg.grid(epsilon)?;
    let exact = exact_initial(&cfg.initial, &grid, epsilon, cell)?;
    let run = run_reference(&exact, &reference_config(cfg, cell, grid, epsilon, cfg.ref_dt_factor)?, cfg.t_final)?;
    Ok((exact, run))
}

/// Beam superposition at `t = 0` and at `T`.
pub fn beam_fields(cfg: &StudyConfig, cell: &CellProblem, epsilon: f64) -> Result<(WaveField, WaveField)> {
    let grid = cfg.grid(epsilon)?;
    let sup = cfg.superposition(epsilon);
    let (beams, dx0) = launch(cfg, cell, epsilon)?;
    let (initial, _) = superpose(&beams, dx0, &sup, &grid, epsilon, cell)?;
    let evolved = final_beams(cfg, cell, &propagate(cfg, cell, &beams)?)?;
    let (field, _) = superpose(&evolved, dx0, &sup, &grid, epsilon, cell)?;
    Ok((initial, field))
}

/// Runs one ε row of the study.
pub fn run_row(cfg: &StudyConfig, cell: &CellProblem, epsilon: f64) -> Result<RowData> {
    let start = Instant::now();
    let grid = cfg.grid(epsilon)?;
    let sup = cfg.superposition(epsilon);
    let exact = exact_initial(&cfg.initial, &grid, epsilon, cell)?;
    let (beams, dx0) = launch(cfg, cell, epsilon)?;
    let (initial, _) = superpose(&beams, dx0, &sup, &grid, epsilon, cell)?;
    let err_initial = l2_error(&exact, &initial)?;

    let ref_cfg = reference_config(cfg, cell, grid, epsilon, cfg.ref_dt_factor)?;
    let run = run_reference(&exact, &ref_cfg, cfg.t_final)?;
    let edge = run.field.edge_ratio();
    if edge > EDGE_TOLERANCE {
        return Err(Error::Invariant(format!(
            "reference field reaches the box edge (edge/max = {edge:.3e}); enlarge grid.box_length"
        )));
    }

    let trajectories = propagate(cfg, cell, &beams)?;
    let evolved = final_beams(cfg, cell, &trajectories)?;
    let (field, diag) = superpose(&evolved, dx0, &sup, &grid, epsilon, cell)?;
    let err_total = l2_error(&run.field, &field)?;

    let resolution_change = if cfg.resolution_gate {
        let fine = Grid::commensurate(cfg.grid_center, cfg.box_length, epsilon, 2 * cfg.points_per_cell)?;
        let fine_exact = exact_initial(&cfg.initial, &fine, epsilon, cell)?;
        let fine_run = run_reference(&fine_exact, &reference_config(cfg, cell, fine, epsilon, cfg.ref_dt_factor)?, cfg.t_final)?;
        let change = l2_error(&subsample(&fine_run.field, 2)?, &run.field)?;
        if !(change < RESOLUTION_TOLERANCE) {
            return Err(Error::Consistency(format!(
                "reference changes by {change:.3e} under grid doubling (limit {RESOLUTION_TOLERANCE:.0e})"
            )));
        }
        Some(change)
    } else {
        None
    };
    let step_change = if cfg.step_gate {
        let half = run_reference(&exact, &reference_config(cfg, cell, grid, epsilon, 0.5 * cfg.ref_dt_factor)?, cfg.t_final)?;
        let change = l2_error(&half.field, &run.field)?;
        if change > STEP_GATE_RATIO * err_total {
            return Err(Error::Consistency(format!(
                "reference changes by {change:.3e} under step halving, above {STEP_GATE_RATIO} of the beam error {err_total:.3e}"
            )));
        }
        Some(change)
    } else {
        None
    };

    let min_im_m = trajectories
        .iter()
        .flat_map(|t| t.states.iter().map(|s| s.m.im))
        .fold(f64::INFINITY, f64::min);
    let min_gap = trajectories.iter().map(|t| t.min_gap).fold(f64::INFINITY, f64::min);
    Ok(RowData {
        epsilon,
        err_initial,
        err_total,
        ref_mass_drift: run.mass_drift,
        min_im_m,
        min_gap,
        runtime_s: start.elapsed().as_secs_f64(),
        beams: beams.len(),
        grid_points: grid.n,
        max_beam_modulus: field.max_abs(),
        max_reference_modulus: run.field.max_abs(),
        focal_time: first_crossing_time(&trajectories),
        resolution_change,
        step_change,
        extrapolated_points: diag.extrapolated_points,
    })
}

/// The full pipeline over the ladder; a failing row is recorded and the
/// study moves on.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<StudyResult> {
    let cell = cfg.cell()?;
    let rows = cfg
        .epsilons
        .iter()
        .map(|&epsilon| StudyRow {
            epsilon,
            outcome: run_row(cfg, &cell, epsilon).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(StudyResult::from_rows(rows))
}

/// Band quantities sampled over the launch momenta `S0'(K0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSample {
    pub band: usize,
    pub k: f64,
    pub energy: f64,
    pub e1: f64,
    pub e2: f64,
    pub gap: f64,
}

pub fn band_table(cfg: &StudyConfig, cell: &CellProblem, samples: usize) -> Result<Vec<BandSample>> {
    let (lo, hi) = cfg.initial.k0;
    let n = samples.max(2);
    let ks: Vec<f64> = (0..n)
        .map(|i| cfg.initial.phase.d1(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect();
    let (k_lo, k_hi) = ks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &k| (a.0.min(k), a.1.max(k)));
    let mut out = Vec::new();
    for band in cfg.initial.bands() {
        for i in 0..n {
            let k = if k_hi > k_lo {
                k_lo + (k_hi - k_lo) * i as f64 / (n - 1) as f64
            } else {
                k_lo
            };
            let d = cell.ray_data(k, band)?;
            out.push(BandSample {
                band,
                k,
                energy: d.energy,
                e1: d.e1,
                e2: d.e2,
                gap: d.gap,
            });
            if k_hi <= k_lo {
                break;
            }
        }
    }
    Ok(out)
}

/// Residual structure along the trajectories of one ε.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub epsilon: f64,
    /// Offsets `h, h/2, h/4` used for the Hamilton–Jacobi ratios.
    pub offsets: [f64; 3],
    /// Per beam with non-negligible residual: `x0`, `|F(h)|/|F(h/2)|`,
    /// `|F(h/2)|/|F(h/4)|` at `T`.
    pub hj_ratios: Vec<(f64, f64, f64)>,
    /// Largest `|⟨LA₀, z⟩| / |a|` over every stored state.
    pub max_solvability: f64,
}

pub fn residual_report(cfg: &StudyConfig, cell: &CellProblem, epsilon: f64, h: f64) -> Result<ResidualReport> {
    let (beams, _) = launch(cfg, cell, epsilon)?;
    let trajectories = propagate(cfg, cell, &beams)?;
    let offsets = [h, 0.5 * h, 0.25 * h];
    let mut hj_ratios = Vec::new();
    let mut max_solvability: f64 = 0.0;
    for traj in &trajectories {
        let last = traj.final_state();
        let f = hj_residual(last, &offsets, &cfg.external, cell)?;
        if f[2] > 1e-13 {
            hj_ratios.push((last.x0, f[0] / f[1], f[1] / f[2]));
        }
        for s in &traj.states {
            max_solvability = max_solvability.max(solvability_residual(s, &cfg.external, cell)?);
        }
    }
    Ok(ResidualReport {
        epsilon,
        offsets,
        hj_ratios,
        max_solvability,
    })
}
