use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use cutfem_heat::analysis::error_norms;
use cutfem_heat::config::{parse_config, Config};
use cutfem_heat::experiment::{format_sci, run_grid};
use cutfem_heat::timestepper::{run, RunConfig};
use cutfem_heat::Result;

/// CutFEM Crank-Nicolson solver for the heat equation on moving domains.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// Configuration file (flat key = value).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-step VTK files.
    #[arg(long)]
    vtk: bool,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let config = match fs::read_to_string(&cli.config)
        .map_err(cutfem_heat::Error::from)
        .and_then(|text| parse_config(&text))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let outcome = match config {
        Config::Run { mut run, out } => {
            let dir = cli.out.or(out).unwrap_or_else(|| PathBuf::from("."));
            if cli.vtk {
                run.vtk_dir = Some(dir.join("vtk"));
            }
            single_run(&run, &dir, cli.quiet)
        }
        Config::Grid(mut grid) => {
            if cli.out.is_some() {
                grid.out_dir = cli.out;
            }
            grid.vtk |= cli.vtk;
            let dir = grid.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            run_grid(&grid).and_then(|report| {
                report.write(&dir)?;
                if !cli.quiet {
                    print!("{}", report.summary());
                }
                let failed = report.rows.iter().filter(|r| !r.is_ok()).count();
                if failed > 0 {
                    log::warn!("{failed} of {} runs failed", report.rows.len());
                }
                Ok(())
            })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn single_run(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<()> {
    let traj = run(cfg)?;
    let rep = error_norms(&traj)?;
    fs::create_dir_all(dir)?;
    let csv_err = |e: csv::Error| cutfem_heat::Error::Io(e.into());
    let mut w = csv::Writer::from_path(dir.join("steps.csv")).map_err(csv_err)?;
    w.write_record([
        "step", "t", "energy2", "l2_norm", "residual", "iterations", "active_cells", "active_dofs", "cut_cells",
    ])
    .map_err(csv_err)?;
    for s in &traj.steps {
        let mut rec = vec![s.step.to_string()];
        rec.extend([s.t, s.energy2, s.l2_norm, s.residual].map(format_sci));
        rec.extend([s.iterations, s.active_cells, s.active_dofs, s.cut_cells].map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("errors.csv")).map_err(csv_err)?;
    w.write_record(["n", "h", "dt", "end_time_L2", "L2L2", "L2H1av"]).map_err(csv_err)?;
    let mut rec = vec![cfg.n.to_string()];
    rec.extend([1.0 / cfg.n as f64, cfg.dt, rep.end_time_l2, rep.l2l2, rep.l2h1av].map(format_sci));
    w.write_record(&rec).map_err(csv_err)?;
    w.flush()?;
    if !quiet {
        println!("problem      {}", traj.problem.name);
        println!("n, dt        {}, {}", cfg.n, cfg.dt);
        println!("steps        {}", traj.num_steps());
        println!("end-time L2  {:.3e}", rep.end_time_l2);
        println!("L2(L2)       {:.3e}", rep.l2l2);
        println!("L2(H1_av)    {:.3e}", rep.l2h1av);
        println!("max residual {:.1e}", traj.max_residual());
        if !traj.cfl_satisfied {
            println!("note: dt > h^2, the parabolic CFL condition does not hold");
        }
    }
    Ok(())
}
