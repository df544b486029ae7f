use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blochbeam::harness::{self, StudyConfig};
use blochbeam::wavefield::write_field_csv;
use blochbeam::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blochbeam", version, about = "Bloch-band Gaussian beam studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate E, E', E'' and the local gap over the launch momenta.
    Bands(Common),
    /// Propagate every beam to T and write the final states.
    Propagate(Common),
    /// Write the beam superposition at t = 0 and at T.
    Simulate(Common),
    /// Run the split-step reference solver to T.
    Reference(Common),
    /// Full convergence study over the ε ladder.
    Converge(Common),
    /// Hamilton–Jacobi and solvability residuals along the trajectories.
    Residual(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate beams one after another instead of in parallel.
    #[arg(long)]
    serial: bool,
    /// Drop the first-order corrector A₁.
    #[arg(long = "no-a1")]
    no_a1: bool,
}

impl Common {
    fn load(&self) -> Result<(StudyConfig, PathBuf)> {
        let mut cfg = harness::load_config(&self.config)?;
        if self.serial {
            cfg.parallel = false;
        }
        if self.no_a1 {
            cfg.with_a1 = false;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.output.clone());
        std::fs::create_dir_all(&out).map_err(|source| Error::Io {
            path: out.clone(),
            source,
        })?;
        for w in &cfg.warnings {
            eprintln!("warning: {w}");
        }
        Ok((cfg, out))
    }
}

fn tag(epsilon: f64) -> String {
    format!("eps{}", (1.0 / epsilon).round() as u64)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::Other, e),
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn bands(cfg: &StudyConfig, out: &Path) -> Result<bool> {
    let cell = cfg.cell()?;
    let table = harness::band_table(cfg, &cell, 101)?;
    let path = out.join("bands.csv");
    let mut w = csv_writer(&path)?;
    let write = |w: &mut csv::Writer<_>, rec: Vec<String>| w.write_record(rec).map_err(|e| csv_io(&path, e));
    write(&mut w, ["band", "k", "energy", "e1", "e2", "gap"].map(String::from).to_vec())?;
    for s in &table {
        write(&mut w, vec![s.band.to_string(), num(s.k), num(s.energy), num(s.e1), num(s.e2), num(s.gap)])?;
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    let min_gap = table.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min);
    println!("{} samples, min gap {min_gap:.6e} -> {}", table.len(), path.display());
    Ok(true)
}

fn per_epsilon(cfg: &StudyConfig, mut run: impl FnMut(f64) -> Result<()>) -> bool {
    let mut ok = true;
    for &eps in &cfg.epsilons {
        if let Err(e) = run(eps) {
            eprintln!("{}: {e}", tag(eps));
            ok = false;
        }
    }
    ok
}

fn propagate(cfg: &StudyConfig, out: &Path) -> Result<bool> {
    let cell = cfg.cell()?;
    Ok(per_epsilon(cfg, |eps| {
        let (beams, _) = harness::launch(cfg, &cell, eps)?;
        let trajectories = harness::propagate(cfg, &cell, &beams)?;
        let path = out.join(format!("beams_{}.csv", tag(eps)));
        let mut w = csv_writer(&path)?;
        let header = ["x0", "band", "t", "x", "p", "S", "re_M", "im_M", "re_a", "im_a", "min_gap"];
        w.write_record(header).map_err(|e| csv_io(&path, e))?;
        for traj in &trajectories {
            let s = traj.final_state();
            let rec = vec![
                num(s.x0),
                s.band.to_string(),
                num(s.t),
                num(s.xt),
                num(s.p),
                num(s.s),
                num(s.m.re),
                num(s.m.im),
                num(s.a.re),
                num(s.a.im),
                num(traj.min_gap),
            ];
            w.write_record(rec).map_err(|e| csv_io(&path, e))?;
        }
        w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
        let min_im = trajectories
            .iter()
            .flat_map(|t| t.states.iter().map(|s| s.m.im))
            .fold(f64::INFINITY, f64::min);
        println!("{}: {} beams, min Im M {min_im:.6e} -> {}", tag(eps), trajectories.len(), path.display());
        Ok(())
    }))
}

fn simulate(cfg: &StudyConfig, out: &Path) -> Result<bool> {
    let cell = cfg.cell()?;
    Ok(per_epsilon(cfg, |eps| {
        let (initial, field) = harness::beam_fields(cfg, &cell, eps)?;
        let p0 = out.join(format!("beams_initial_{}.csv", tag(eps)));
        let p1 = out.join(format!("beams_final_{}.csv", tag(eps)));
        write_field_csv(&initial, &p0)?;
        write_field_csv(&field, &p1)?;
        println!("{}: max|field(T)| {:.6e} -> {}", tag(eps), field.max_abs(), p1.display());
        Ok(())
    }))
}

fn reference(cfg: &StudyConfig, out: &Path) -> Result<bool> {
    let cell = cfg.cell()?;
    Ok(per_epsilon(cfg, |eps| {
        let (_, run) = harness::reference(cfg, &cell, eps)?;
        let path = out.join(format!("reference_{}.csv", tag(eps)));
        write_field_csv(&run.field, &path)?;
        println!(
            "{}: {} steps of {:.3e}, mass drift {:.3e} -> {}",
            tag(eps),
            run.steps,
            run.dt,
            run.mass_drift,
            path.display()
        );
        Ok(())
    }))
}

fn converge(cfg: &StudyConfig, out: &Path) -> Result<bool> {
    let result = harness::run_convergence_study(cfg)?;
    harness::write_csv(&result, &out.join("study.csv"))?;
    harness::emit_plot(&result, &out.join("study.svg"))?;
    harness::write_summary(&result, cfg, &out.join("study_summary.txt"))?;
    for (i, row) in result.rows.iter().enumerate() {
        match &row.outcome {
            Ok(d) => {
                let order = |o: &[f64]| if i == 0 { "-".to_string() } else { format!("{:.3}", o[i - 1]) };
                println!(
                    "{}: err_initial {:.6e} (order {}), err_total {:.6e} (order {}), {:.2} s",
                    tag(row.epsilon),
                    d.err_initial,
                    order(&result.order_initial),
                    d.err_total,
                    order(&result.order_total),
                    d.runtime_s
                );
            }
            Err(e) => println!("{}: FAILED: {e}", tag(row.epsilon)),
        }
    }
    println!("-> {}", out.join("study.csv").display());
    Ok(result.all_completed())
}

fn residual(cfg: &StudyConfig, out: &Path) -> Result<bool> {
    let cell = cfg.cell()?;
    let path = out.join("residual.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["epsilon", "x0", "ratio_h", "ratio_h_half", "max_solvability"])
        .map_err(|e| csv_io(&path, e))?;
    let ok = per_epsilon(cfg, |eps| {
        let report = harness::residual_report(cfg, &cell, eps, 1e-2)?;
        for &(x0, r1, r2) in &report.hj_ratios {
            w.write_record([num(eps), num(x0), num(r1), num(r2), num(report.max_solvability)])
                .map_err(|e| csv_io(&path, e))?;
        }
        let (lo, hi) = report
            .hj_ratios
            .iter()
            .flat_map(|r| [r.1, r.2])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |a, r| (a.0.min(r), a.1.max(r)));
        println!(
            "{}: HJ ratios in [{lo:.4}, {hi:.4}], max solvability residual {:.3e}",
            tag(eps),
            report.max_solvability
        );
        Ok(())
    });
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    let (common, action): (&Common, fn(&StudyConfig, &Path) -> Result<bool>) = match &cli.command {
        Command::Bands(c) => (c, bands),
        Command::Propagate(c) => (c, propagate),
        Command::Simulate(c) => (c, simulate),
        Command::Reference(c) => (c, reference),
        Command::Converge(c) => (c, converge),
        Command::Residual(c) => (c, residual),
    };
    let (cfg, out) = common.load()?;
    action(&cfg, &out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
