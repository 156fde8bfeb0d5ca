//! Convergence studies over grids of mesh and time-step sizes.
//!
//! Every grid cell is an independent run. A failing cell is recorded with an
//! error tag and the remaining cells still run. Reports are written as
//! `errors.csv`, `eoc.csv`, a text table in `summary.txt` and a gnuplot
//! script.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{error_norms, fit_diagonal, fit_spatial, fit_temporal, EocFit, Norm, Protocol};
use crate::timestepper::{run, RunConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    /// Every combination of `n_list` and `dt_list`.
    Full,
    /// `n_list[i]` paired with `dt_list[i]`.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub mode: GridMode,
    /// Subdivisions per side; `h = 1/n`.
    pub n_list: Vec<usize>,
    pub dt_list: Vec<f64>,
    /// Everything except `n` and `dt`.
    pub base: RunConfig,
    pub out_dir: Option<PathBuf>,
    pub vtk: bool,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.dt_list.is_empty() {
            return Err(Error::invalid("n_list and dt_list must be nonempty"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) || self.n_list[0] == 0 {
            return Err(Error::invalid("n_list must be positive and strictly increasing (h decreasing)"));
        }
        if self.dt_list.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid("dt_list must be strictly decreasing"));
        }
        if self.mode == GridMode::Diagonal && self.n_list.len() != self.dt_list.len() {
            return Err(Error::invalid(format!(
                "diagonal mode needs lists of equal length, got {} and {}",
                self.n_list.len(),
                self.dt_list.len()
            )));
        }
        let problem = self.base.problem()?;
        for cfg in self.runs() {
            cfg.validate(&problem)?;
        }
        Ok(())
    }

    /// Configurations of all cells, row-major in `(n, dt)`.
    pub fn runs(&self) -> Vec<RunConfig> {
        let pairs: Vec<(usize, f64)> = match self.mode {
            GridMode::Full => self
                .n_list
                .iter()
                .flat_map(|&n| self.dt_list.iter().map(move |&dt| (n, dt)))
                .collect(),
            GridMode::Diagonal => self.n_list.iter().copied().zip(self.dt_list.iter().copied()).collect(),
        };
        pairs
            .into_iter()
            .enumerate()
            .map(|(i, (n, dt))| {
                let mut cfg = self.base.clone();
                cfg.n = n;
                cfg.dt = dt;
                cfg.vtk_dir = match (&self.out_dir, self.vtk) {
                    (Some(dir), true) => Some(dir.join("vtk").join(format!("run_{i:02}_n{n}"))),
                    (None, true) => Some(PathBuf::from("vtk").join(format!("run_{i:02}_n{n}"))),
                    _ => None,
                };
                cfg
            })
            .collect()
    }
}

/// Rounds to the six significant digits written to CSV.
pub fn round_sig(x: f64) -> f64 {
    format_sci(x).parse().unwrap_or(x)
}

/// Scientific notation with six significant digits.
pub fn format_sci(x: f64) -> String {
    format!("{x:.5e}")
}

/// One row of `errors.csv`. Numbers are stored rounded as written.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub end_time_l2: f64,
    pub l2l2: f64,
    pub l2h1av: f64,
    pub runtime_s: f64,
    pub max_residual: f64,
    /// `ok` or `error:<tag>`.
    pub status: String,
}

impl GridRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn value(&self, norm: Norm) -> f64 {
        match norm {
            Norm::EndTimeL2 => self.end_time_l2,
            Norm::L2L2 => self.l2l2,
            Norm::L2H1av => self.l2h1av,
        }
    }
}

/// One row of `eoc.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub protocol: Protocol,
    pub norm: Norm,
    /// The quantity held fixed: `h` for temporal fits, `dt` for spatial
    /// fits, the ratio `dt/h` for diagonal fits.
    pub fixed: f64,
    pub order: f64,
    pub offset: f64,
    pub constant: f64,
    pub residual: f64,
    pub stderr: f64,
    pub usable: bool,
}

impl FitRow {
    fn new(fit: &EocFit, norm: Norm, fixed: f64) -> Self {
        Self {
            protocol: fit.protocol,
            norm,
            fixed: round_sig(fixed),
            order: round_sig(fit.order),
            offset: round_sig(fit.offset),
            constant: round_sig(fit.constant),
            residual: round_sig(fit.residual),
            stderr: round_sig(fit.stderr),
            usable: fit.usable,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub mode: GridMode,
    pub rows: Vec<GridRow>,
    pub fits: Vec<FitRow>,
}

fn error_tag(e: &Error) -> &'static str {
    match e.root() {
        Error::InvalidArgument(_) => "invalid",
        Error::ExtensionCoverage { .. } => "coverage",
        Error::SolverDivergence { .. } => "divergence",
        Error::Config { .. } => "config",
        Error::Io(_) => "io",
        Error::Step { .. } => "step",
    }
}

fn run_cell(cfg: &RunConfig) -> GridRow {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<_> {
        let traj = run(cfg)?;
        let rep = error_norms(&traj)?;
        Ok((rep, traj.max_residual()))
    }));
    let runtime_s = round_sig(start.elapsed().as_secs_f64());
    let mut row = GridRow {
        n: cfg.n,
        h: round_sig(1.0 / cfg.n as f64),
        dt: round_sig(cfg.dt),
        end_time_l2: f64::NAN,
        l2l2: f64::NAN,
        l2h1av: f64::NAN,
        runtime_s,
        max_residual: f64::NAN,
        status: "ok".into(),
    };
    match outcome {
        Ok(Ok((rep, res))) => {
            row.end_time_l2 = round_sig(rep.end_time_l2);
            row.l2l2 = round_sig(rep.l2l2);
            row.l2h1av = round_sig(rep.l2h1av);
            row.max_residual = round_sig(res);
        }
        Ok(Err(e)) => {
            log::error!("run n = {}, dt = {} failed: {e}", cfg.n, cfg.dt);
            row.status = format!("error:{}", error_tag(&e));
        }
        Err(_) => {
            log::error!("run n = {}, dt = {} panicked", cfg.n, cfg.dt);
            row.status = "error:panic".into();
        }
    }
    row
}

/// Runs every cell (in parallel) and fits orders.
pub fn run_grid(grid: &ExperimentGrid) -> Result<GridReport> {
    grid.validate()?;
    let rows: Vec<GridRow> = grid.runs().par_iter().map(run_cell).collect();
    let fits = compute_fits(grid.mode, &rows);
    Ok(GridReport {
        mode: grid.mode,
        rows,
        fits,
    })
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.dedup();
    v
}

pub fn compute_fits(mode: GridMode, rows: &[GridRow]) -> Vec<FitRow> {
    let ok: Vec<&GridRow> = rows.iter().filter(|r| r.is_ok()).collect();
    let mut fits = Vec::new();
    for norm in Norm::ALL {
        match mode {
            GridMode::Full => {
                for h in distinct(ok.iter().map(|r| r.h)) {
                    let data: Vec<(f64, f64)> =
                        ok.iter().filter(|r| r.h == h).map(|r| (r.dt, r.value(norm))).collect();
                    if let Ok(fit) = fit_temporal(&data) {
                        fits.push(FitRow::new(&fit, norm, h));
                    }
                }
                for dt in distinct(ok.iter().map(|r| r.dt)) {
                    let data: Vec<(f64, f64)> =
                        ok.iter().filter(|r| r.dt == dt).map(|r| (r.h, r.value(norm))).collect();
                    if let Ok(fit) = fit_spatial(&data) {
                        fits.push(FitRow::new(&fit, norm, dt));
                    }
                }
            }
            GridMode::Diagonal => {
                let data: Vec<(f64, f64)> = ok.iter().map(|r| (r.h, r.value(norm))).collect();
                if let Ok(fit) = fit_diagonal(&data) {
                    let ratio = ok.first().map_or(f64::NAN, |r| r.dt / r.h);
                    fits.push(FitRow::new(&fit, norm, ratio));
                }
            }
        }
    }
    fits
}

const ERRORS_HEADER: [&str; 9] =
    ["n", "h", "dt", "end_time_L2", "L2L2", "L2H1av", "runtime_s", "max_residual", "status"];
const EOC_HEADER: [&str; 9] =
    ["protocol", "norm", "fixed", "order", "offset", "constant", "residual", "stderr", "usable"];

fn to_csv(header: &[&str], records: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in records {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

fn csv_records(text: &str, width: usize, what: &str) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for (i, rec) in csv::Reader::from_reader(text.as_bytes()).records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("{what}: {e}")))?;
        if rec.len() != width {
            return Err(Error::invalid(format!("{what}: record {} has {} fields", i + 1, rec.len())));
        }
        out.push(rec);
    }
    Ok(out)
}

impl GridReport {
    pub fn errors_csv(&self) -> String {
        to_csv(
            &ERRORS_HEADER,
            self.rows.iter().map(|r| {
                let mut rec = vec![r.n.to_string()];
                rec.extend(
                    [r.h, r.dt, r.end_time_l2, r.l2l2, r.l2h1av, r.runtime_s, r.max_residual].map(format_sci),
                );
                rec.push(r.status.clone());
                rec
            }),
        )
    }

    pub fn eoc_csv(&self) -> String {
        to_csv(
            &EOC_HEADER,
            self.fits.iter().map(|f| {
                let mut rec = vec![f.protocol.as_str().to_string(), f.norm.as_str().to_string()];
                rec.extend([f.fixed, f.order, f.offset, f.constant, f.residual, f.stderr].map(format_sci));
                rec.push(f.usable.to_string());
                rec
            }),
        )
    }

    /// Parses the two CSV files back into a report.
    pub fn from_csv(mode: GridMode, errors: &str, eoc: &str) -> Result<Self> {
        let num = |rec: &csv::StringRecord, k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("not a number: '{}'", &rec[k])))
        };
        let mut rows = Vec::new();
        for rec in csv_records(errors, ERRORS_HEADER.len(), "errors.csv")? {
            rows.push(GridRow {
                n: rec[0].parse().map_err(|_| Error::invalid(format!("bad n '{}'", &rec[0])))?,
                h: num(&rec, 1)?,
                dt: num(&rec, 2)?,
                end_time_l2: num(&rec, 3)?,
                l2l2: num(&rec, 4)?,
                l2h1av: num(&rec, 5)?,
                runtime_s: num(&rec, 6)?,
                max_residual: num(&rec, 7)?,
                status: rec[8].to_string(),
            });
        }
        let mut fits = Vec::new();
        for rec in csv_records(eoc, EOC_HEADER.len(), "eoc.csv")? {
            fits.push(FitRow {
                protocol: Protocol::parse(&rec[0]).ok_or_else(|| Error::invalid(format!("bad protocol '{}'", &rec[0])))?,
                norm: Norm::parse(&rec[1]).ok_or_else(|| Error::invalid(format!("bad norm '{}'", &rec[1])))?,
                fixed: num(&rec, 2)?,
                order: num(&rec, 3)?,
                offset: num(&rec, 4)?,
                constant: num(&rec, 5)?,
                residual: num(&rec, 6)?,
                stderr: num(&rec, 7)?,
                usable: rec[8].parse().map_err(|_| Error::invalid(format!("bad flag '{}'", &rec[8])))?,
            });
        }
        Ok(Self { mode, rows, fits })
    }

    fn fit(&self, protocol: Protocol, norm: Norm, fixed: f64) -> Option<&FitRow> {
        self.fits
            .iter()
            .find(|f| f.protocol == protocol && f.norm == norm && f.fixed == fixed)
    }

    fn order_cell(fit: Option<&FitRow>) -> String {
        match fit {
            Some(f) if f.usable => format!("{:.2}", f.order),
            _ => "-".into(),
        }
    }

    /// Error tables laid out with `h` down and `dt` across, an `eoc_dt`
    /// column and an `eoc_h` row; the diagonal mode lists the diagonal and
    /// its fitted order.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let cell = |v: f64| if v.is_nan() { "failed".to_string() } else { format!("{v:.2e}") };
        for norm in Norm::ALL {
            let _ = writeln!(s, "{}", norm.as_str());
            match self.mode {
                GridMode::Full => {
                    let dts = distinct(self.rows.iter().map(|r| r.dt));
                    let hs = distinct(self.rows.iter().map(|r| r.h));
                    let _ = write!(s, "{:>10}", "h \\ dt");
                    for dt in &dts {
                        let _ = write!(s, " {:>10}", format!("1/{:.0}", 1.0 / dt));
                    }
                    let _ = writeln!(s, " {:>8}", "eoc_dt");
                    for h in &hs {
                        let _ = write!(s, "{:>10}", format!("1/{:.0}", 1.0 / h));
                        for dt in &dts {
                            let v = self
                                .rows
                                .iter()
                                .find(|r| r.h == *h && r.dt == *dt)
                                .map_or(f64::NAN, |r| r.value(norm));
                            let _ = write!(s, " {:>10}", cell(v));
                        }
                        let _ = writeln!(s, " {:>8}", Self::order_cell(self.fit(Protocol::Temporal, norm, *h)));
                    }
                    let _ = write!(s, "{:>10}", "eoc_h");
                    for dt in &dts {
                        let _ = write!(s, " {:>10}", Self::order_cell(self.fit(Protocol::Spatial, norm, *dt)));
                    }
                    let _ = writeln!(s);
                }
                GridMode::Diagonal => {
                    let _ = writeln!(s, "{:>10} {:>10} {:>10}", "h", "dt", "error");
                    for r in &self.rows {
                        let _ = writeln!(
                            s,
                            "{:>10} {:>10} {:>10}",
                            format!("1/{:.0}", 1.0 / r.h),
                            format!("{:.3e}", r.dt),
                            cell(r.value(norm))
                        );
                    }
                    let fit = self.fits.iter().find(|f| f.protocol == Protocol::Diagonal && f.norm == norm);
                    let _ = writeln!(s, "{:>10} {:>10}", "eoc_dt,h", Self::order_cell(fit));
                }
            }
            let _ = writeln!(s);
        }
        s
    }

    /// Gnuplot script plotting `errors.csv` on log-log axes.
    pub fn gnuplot_script(&self) -> String {
        let (xcol, xlabel) = match self.mode {
            GridMode::Full => (3, "dt"),
            GridMode::Diagonal => (2, "h"),
        };
        let mut s = String::new();
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set logscale xy");
        let _ = writeln!(s, "set key left top");
        let _ = writeln!(s, "set xlabel '{xlabel}'");
        let _ = writeln!(s, "set ylabel 'error'");
        let plots: Vec<String> = Norm::ALL
            .iter()
            .enumerate()
            .map(|(i, n)| format!("'errors.csv' skip 1 using {xcol}:{} with linespoints title '{}'", 4 + i, n.as_str()))
            .collect();
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("errors.csv"), self.errors_csv())?;
        fs::write(dir.join("eoc.csv"), self.eoc_csv())?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        fs::write(dir.join("plot.gp"), self.gnuplot_script())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manufactured::ProblemId;

    fn static_grid(mode: GridMode, n_list: Vec<usize>, dt_list: Vec<f64>) -> ExperimentGrid {
        ExperimentGrid {
            mode,
            n_list,
            dt_list,
            base: RunConfig::new(ProblemId::StaticSquare, 1, 0.1, 1),
            out_dir: None,
            vtk: false,
        }
    }

    #[test]
    fn small_full_grid() {
        let grid = static_grid(GridMode::Full, vec![4, 8], vec![0.05, 0.025]);
        let rep = run_grid(&grid).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert!(rep.rows.iter().all(|r| r.is_ok()));
        let dir = tempfile::tempdir().unwrap();
        rep.write(dir.path()).unwrap();
        for f in ["errors.csv", "eoc.csv", "summary.txt", "plot.gp"] {
            assert!(dir.path().join(f).exists());
        }
        let errors = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
        assert_eq!(errors.lines().count(), 5);
        let back = GridReport::from_csv(rep.mode, &errors, &rep.eoc_csv()).unwrap();
        assert_eq!(back, rep);
        assert_eq!(back.errors_csv(), errors);
        assert!(rep.summary().contains("eoc_h"));
    }

    #[test]
    fn grid_validation() {
        assert!(static_grid(GridMode::Diagonal, vec![4, 8], vec![0.05]).validate().is_err());
        assert!(static_grid(GridMode::Full, vec![8, 4], vec![0.05]).validate().is_err());
        assert!(static_grid(GridMode::Full, vec![4], vec![0.025, 0.05]).validate().is_err());
        assert!(static_grid(GridMode::Full, vec![], vec![0.05]).validate().is_err());
    }

    #[test]
    fn failures_are_isolated() {
        let mut grid = static_grid(GridMode::Full, vec![4, 8], vec![0.05]);
        grid.base.solver_tol = 1e-40;
        let rep = run_grid(&grid).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows.iter().all(|r| r.status == "error:divergence"));
        assert!(rep.fits.is_empty());
        assert!(rep.summary().contains("failed"));
    }

    #[test]
    fn synthetic_full_table() {
        let mut rows = Vec::new();
        for n in [16, 32, 64, 128] {
            for d in [50.0, 100.0, 200.0, 400.0, 800.0] {
                let (h, dt) = (1.0 / n as f64, 1.0 / d);
                let e = round_sig(0.3 * h * h + 2.0 * dt * dt);
                rows.push(GridRow {
                    n,
                    h,
                    dt,
                    end_time_l2: e,
                    l2l2: e,
                    l2h1av: e,
                    runtime_s: 0.0,
                    max_residual: 0.0,
                    status: "ok".into(),
                });
            }
        }
        let fits = compute_fits(GridMode::Full, &rows);
        assert_eq!(fits.len(), 3 * (4 + 5));
        let t = fits.iter().find(|f| f.protocol == Protocol::Temporal).unwrap();
        assert!((t.order - 2.0).abs() < 0.01);
        let rep = GridReport {
            mode: GridMode::Full,
            rows,
            fits,
        };
        let table = rep.summary();
        assert!(table.contains("1/800") && table.contains("eoc_dt") && table.contains("2.00"));
    }

    #[test]
    fn sci_format() {
        assert_eq!(format_sci(1.93e-3), "1.93000e-3");
        assert_eq!(round_sig(1.234567891), 1.23457);
    }
}
