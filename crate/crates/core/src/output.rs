//! CSV emission. Floats carry 17 significant digits so the files reproduce
//! the in-memory values exactly; every file has a header row and LF endings.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::experiments::{ConvergenceReport, DeltaSweepReport, ScenarioSweepReport};
use crate::gld::GldSolution;
use crate::grid::{GridSpec, TimeField};
use crate::mfg::{turnpike_index, IterationLog, MfgSolution};

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> io::Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(into_io)
}

fn into_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

fn write_table<I, R>(path: &Path, header: &[String], rows: I) -> io::Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(into_io)?;
    for row in rows {
        w.write_record(row).map_err(into_io)?;
    }
    w.flush()
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `x, p1, p2, ...` for one level of cell masses.
pub fn write_stationary(dir: &Path, grid: &GridSpec, mu: &[Vec<f64>]) -> io::Result<PathBuf> {
    let path = dir.join("stationary.csv");
    let mut head = vec!["x".to_string()];
    head.extend((1..=mu.len()).map(|i| format!("p{i}")));
    let dx = grid.dx();
    let rows = (0..grid.n_x()).map(|l| {
        let mut row = vec![fmt_f64(grid.center(l))];
        row.extend(mu.iter().map(|s| fmt_f64(s[l] / dx)));
        row
    });
    write_table(&path, &head, rows)?;
    Ok(path)
}

/// Long-format `t, x, <column>` rows for the given `(time, slice)` levels.
fn write_levels<'a>(
    path: &Path,
    grid: &GridSpec,
    column: &str,
    scale: f64,
    levels: impl Iterator<Item = (f64, &'a [f64])>,
) -> io::Result<()> {
    let rows = levels.flat_map(|(t, s)| {
        s.iter()
            .enumerate()
            .map(move |(l, v)| vec![fmt_f64(t), fmt_f64(grid.center(l)), fmt_f64(v * scale)])
            .collect::<Vec<_>>()
    });
    write_table(path, &header(&["t", "x", column]), rows)
}

fn strided(n_levels: usize, stride: usize) -> impl Iterator<Item = usize> {
    let last = n_levels - 1;
    (0..n_levels)
        .step_by(stride.max(1))
        .chain((last % stride.max(1) != 0).then_some(last))
}

fn write_field(
    dir: &Path,
    grid: &GridSpec,
    field: &TimeField,
    stem: &str,
    column: &str,
    scale: f64,
    stride: usize,
) -> io::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for i in 0..field.n_types() {
        let path = dir.join(format!("{stem}_{}.csv", i + 1));
        let levels = strided(field.n_levels(), stride).map(|k| (grid.time(k), field.slice(i, k)));
        write_levels(&path, grid, column, scale, levels)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Stationary slice plus the recorded trajectory, if any.
pub fn write_gld(dir: &Path, grid: &GridSpec, sol: &GldSolution) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = vec![write_stationary(dir, grid, &sol.stationary)?];
    if !sol.trajectory.is_empty() {
        let n_types = sol.stationary.len();
        for i in 0..n_types {
            let path = dir.join(format!("density_{}.csv", i + 1));
            let levels = sol
                .trajectory
                .iter()
                .map(|s| (s.time, s.mu[i].as_slice()));
            write_levels(&path, grid, "p", 1.0 / grid.dx(), levels)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

pub fn write_iterations(dir: &Path, log: &IterationLog) -> io::Result<PathBuf> {
    let path = dir.join("iterations.csv");
    let rows = log
        .residuals
        .iter()
        .enumerate()
        .map(|(r, e)| vec![(r + 1).to_string(), fmt_f64(*e)]);
    write_table(&path, &header(&["iteration", "residual"]), rows)?;
    Ok(path)
}

/// Densities and values strided in time, the turnpike slice and the
/// iteration log.
pub fn write_mfg(
    dir: &Path,
    grid: &GridSpec,
    sol: &MfgSolution,
    stride: usize,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = write_field(dir, grid, &sol.density.0, "density", "p", 1.0 / grid.dx(), stride)?;
    paths.extend(write_field(dir, grid, &sol.value.0, "value", "phi", 1.0, stride)?);
    let k = turnpike_index(grid);
    paths.push(write_stationary(dir, grid, &sol.density.0.level(k))?);
    paths.push(write_iterations(dir, &sol.log)?);
    Ok(paths)
}

pub fn write_convergence(dir: &Path, report: &ConvergenceReport) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("report_convergence.csv");
    let rows = report.rows.iter().map(|r| {
        vec![
            r.m.to_string(),
            r.quantity.clone(),
            fmt_f64(r.max_err),
            fmt_f64(r.avg_err),
        ]
    });
    write_table(&path, &header(&["m", "quantity", "max_err", "avg_err"]), rows)?;
    Ok(path)
}

/// `report_delta_sweep.csv` with one row per delta, and `fit.csv` with the
/// log-log slope per type (empty cells when the fit is undefined).
pub fn write_delta_sweep(dir: &Path, report: &DeltaSweepReport) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let n_types = report.fits.len();
    let path = dir.join("report_delta_sweep.csv");
    let mut head = vec!["delta".to_string()];
    head.extend((1..=n_types).map(|i| format!("dist_p{i}")));
    let rows = report.rows.iter().map(|r| {
        let mut row = vec![fmt_f64(r.delta)];
        row.extend(r.dist.iter().map(|d| fmt_f64(*d)));
        row
    });
    write_table(&path, &head, rows)?;

    let fit = dir.join("fit.csv");
    let rows = report.fits.iter().enumerate().map(|(i, f)| match f {
        Some((s, c)) => vec![format!("p{}", i + 1), fmt_f64(*s), fmt_f64(*c)],
        None => vec![format!("p{}", i + 1), String::new(), String::new()],
    });
    write_table(&fit, &header(&["quantity", "slope", "intercept"]), rows)?;
    Ok(vec![path, fit])
}

pub fn write_scenario_sweep(dir: &Path, report: &ScenarioSweepReport) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let n_types = report.entries.first().map_or(0, |e| e.densities.len());
    let path = dir.join("report_scenario_sweep.csv");
    let mut head = header(&["label", "value", "x"]);
    head.extend((1..=n_types).map(|i| format!("p{i}")));
    let rows = report.entries.iter().flat_map(|e| {
        report.x.iter().enumerate().map(move |(l, x)| {
            let mut row = vec![e.label.clone(), fmt_f64(e.value), fmt_f64(*x)];
            row.extend(e.densities.iter().map(|p| fmt_f64(p[l])));
            row
        })
    });
    write_table(&path, &head, rows)?;
    let mut paths = vec![path];
    if !report.swap_ratios.is_empty() {
        let path = dir.join("report_swap_ratio.csv");
        let rows = report.swap_ratios.iter().map(|s| {
            vec![
                fmt_f64(s.m1),
                fmt_f64(s.swapped_m1),
                fmt_f64(s.stats.min),
                fmt_f64(s.stats.max),
                fmt_f64(s.stats.mean),
                s.stats.cells.to_string(),
            ]
        });
        write_table(
            &path,
            &header(&["m1", "swapped_m1", "ratio_min", "ratio_max", "ratio_mean", "cells"]),
            rows,
        )?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn two_cell_uniform_stationary() {
        let dir = tempfile::tempdir().unwrap();
        let grid = make_grid(2, 1, 1.0).unwrap();
        let path = write_stationary(dir.path(), &grid, &[vec![0.5, 0.5]]).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows, vec![vec![0.25, 1.0], vec![0.75, 1.0]]);
        assert!(text.starts_with("x,p1\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, -7.25e12] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.25), "2.5000000000000000e-1");
    }

    #[test]
    fn stride_keeps_last_level() {
        assert_eq!(strided(5, 2).collect::<Vec<_>>(), vec![0, 2, 4]);
        assert_eq!(strided(6, 2).collect::<Vec<_>>(), vec![0, 2, 4, 5]);
        assert_eq!(strided(3, 10).collect::<Vec<_>>(), vec![0, 2]);
    }
}
