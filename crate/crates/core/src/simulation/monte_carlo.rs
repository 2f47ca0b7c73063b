use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, gen_dataset, NoiseFamily, SyntheticSpec};
use crate::error::{Error, Result};
use crate::optimizer::{default_tuning_with, estimation_error, fit, squared_loss_tuning, FitResult, TuningOptions};
use crate::stats::{loglog_slope, median};
use crate::tensor::Tensor3;

/// Estimator run in every replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub delta: f64,
    pub tuning: TuningOptions,
    /// No truncation and squared loss, tuned by [`squared_loss_tuning`].
    pub squared_loss: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            delta: 1.0,
            tuning: TuningOptions::default(),
            squared_loss: false,
        }
    }
}

/// Column order of the CSV form of [`ErrorTable`].
pub const ERROR_TABLE_COLUMNS: [&str; 22] = [
    "cell",
    "p1",
    "p2",
    "p3",
    "r1",
    "r2",
    "r3",
    "n",
    "noise",
    "noise_param",
    "noise_scale",
    "spectrum_min",
    "spectrum_max",
    "contamination_fraction",
    "contamination_factor",
    "rep",
    "seed",
    "error_frobenius",
    "relative_error",
    "iterations",
    "runtime_ms",
    "converged",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub cell: usize,
    pub p1: usize,
    pub p2: usize,
    pub p3: usize,
    pub r1: usize,
    pub r2: usize,
    pub r3: usize,
    pub n: usize,
    pub noise: String,
    pub noise_param: Option<f64>,
    pub noise_scale: f64,
    pub spectrum_min: f64,
    pub spectrum_max: f64,
    pub contamination_fraction: Option<f64>,
    pub contamination_factor: Option<f64>,
    pub rep: usize,
    pub seed: u64,
    pub error_frobenius: f64,
    pub relative_error: f64,
    pub iterations: usize,
    pub runtime_ms: f64,
    pub converged: bool,
}

fn noise_columns(family: &NoiseFamily) -> (&'static str, Option<f64>) {
    match *family {
        NoiseFamily::None => ("none", None),
        NoiseFamily::Gaussian => ("gaussian", None),
        NoiseFamily::StudentT { nu } => ("student_t", Some(nu)),
        NoiseFamily::ParetoCentered { alpha } => ("pareto_centered", Some(alpha)),
        NoiseFamily::LognormalCentered { sigma } => ("lognormal_centered", Some(sigma)),
    }
}

impl ErrorRow {
    fn new(cell: usize, rep: usize, spec: &SyntheticSpec, fit: &FitResult, truth: &Tensor3, runtime_ms: f64) -> Result<Self> {
        let (noise, noise_param) = noise_columns(&spec.noise.family);
        let error = estimation_error(&fit.estimate, truth)?;
        let norm = truth.fro_norm();
        Ok(ErrorRow {
            cell,
            p1: spec.dims[0],
            p2: spec.dims[1],
            p3: spec.dims[2],
            r1: spec.ranks[0],
            r2: spec.ranks[1],
            r3: spec.ranks[2],
            n: spec.n,
            noise: noise.to_string(),
            noise_param,
            noise_scale: spec.noise.scale,
            spectrum_min: spec.spectrum[0],
            spectrum_max: spec.spectrum[1],
            contamination_fraction: spec.contamination.map(|c| c.fraction),
            contamination_factor: spec.contamination.map(|c| c.factor),
            rep,
            seed: spec.seed,
            error_frobenius: error,
            relative_error: if norm > 0.0 { error / norm } else { error },
            iterations: fit.iterations_run,
            runtime_ms,
            converged: fit.converged,
        })
    }
}

/// Median summary of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub reps: usize,
    pub median_error: f64,
    pub median_relative_error: f64,
    pub converged: usize,
}

/// Rows keyed by `(cell, rep)` in ascending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    /// Copy with every `runtime_ms` set to zero, for byte-stable output.
    pub fn without_runtime(&self) -> ErrorTable {
        ErrorTable {
            rows: self
                .rows
                .iter()
                .map(|r| ErrorRow {
                    runtime_ms: 0.0,
                    ..r.clone()
                })
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        if self.rows.is_empty() {
            wtr.write_record(ERROR_TABLE_COLUMNS)?;
        }
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<ErrorRow>, _>>()?;
        Ok(ErrorTable { rows })
    }

    /// Tidy form: one `(cell, rep, seed, n, metric, value)` line per metric.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["cell", "rep", "seed", "n", "metric", "value"])?;
        for r in &self.rows {
            let metrics = [
                ("error_frobenius", r.error_frobenius),
                ("relative_error", r.relative_error),
                ("iterations", r.iterations as f64),
                ("runtime_ms", r.runtime_ms),
            ];
            for (name, value) in metrics {
                wtr.write_record([
                    r.cell.to_string(),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    r.n.to_string(),
                    name.to_string(),
                    value.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summaries(&self) -> Vec<CellSummary> {
        let mut cells: Vec<usize> = self.rows.iter().map(|r| r.cell).collect();
        cells.dedup();
        cells
            .into_iter()
            .map(|cell| {
                let rows: Vec<&ErrorRow> = self.rows.iter().filter(|r| r.cell == cell).collect();
                let errors: Vec<f64> = rows.iter().map(|r| r.error_frobenius).collect();
                let rel: Vec<f64> = rows.iter().map(|r| r.relative_error).collect();
                CellSummary {
                    cell,
                    n: rows[0].n,
                    reps: rows.len(),
                    median_error: median(&errors),
                    median_relative_error: median(&rel),
                    converged: rows.iter().filter(|r| r.converged).count(),
                }
            })
            .collect()
    }

    /// Least-squares slope of log median error against log n across cells.
    pub fn loglog_slope_vs_n(&self) -> f64 {
        let s = self.summaries();
        let n: Vec<f64> = s.iter().map(|c| c.n as f64).collect();
        let e: Vec<f64> = s.iter().map(|c| c.median_error).collect();
        loglog_slope(&n, &e)
    }
}

/// Generates the dataset of `spec`, tunes and fits. Returns the fit, the
/// ground truth and the wall-clock time of tuning plus fitting in ms.
pub fn run_replication(spec: &SyntheticSpec, est: &EstimatorConfig) -> Result<(FitResult, Tensor3, f64)> {
    let (samples, truth) = gen_dataset(spec)?;
    let start = Instant::now();
    let cfg = if est.squared_loss {
        squared_loss_tuning(&samples, spec.ranks, &est.tuning)?
    } else {
        default_tuning_with(&samples, spec.ranks, est.delta, &est.tuning)?
    };
    let result = fit(&samples, &cfg, Some(&truth))?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((result, truth, runtime_ms))
}

/// Runs `reps` replications of every cell. Replication `(c, r)` uses the
/// cell spec with its seed replaced by `derive_seed(master_seed, [c, r])`.
/// Replications run on the current rayon pool; the table is assembled in
/// `(cell, rep)` order regardless of scheduling.
pub fn monte_carlo(cells: &[SyntheticSpec], reps: usize, master_seed: u64, est: &EstimatorConfig) -> Result<ErrorTable> {
    if reps == 0 {
        return Err(Error::param("reps", "must be at least 1"));
    }
    for c in cells {
        c.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(c, r)| {
            let spec = cells[c].with_seed(derive_seed(master_seed, &[c as u64, r as u64]));
            let (result, truth, ms) = run_replication(&spec, est)?;
            if result.diverged {
                log::warn!("cell {c} rep {r}: fit diverged");
            }
            ErrorRow::new(c, r, &spec, &result, &truth, ms)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::NoiseModel;

    fn cell(n: usize) -> SyntheticSpec {
        SyntheticSpec {
            dims: [4, 4, 4],
            ranks: [2, 2, 2],
            n,
            noise: NoiseModel::student_t(3.0, 1.0).unwrap(),
            spectrum: [3.0, 4.0],
            seed: 0,
            contamination: None,
        }
    }

    #[test]
    fn single_replication_matches_direct_fit() {
        let est = EstimatorConfig::default();
        let table = monte_carlo(&[cell(200)], 1, 99, &est).unwrap();
        let spec = cell(200).with_seed(derive_seed(99, &[0, 0]));
        let (samples, truth) = gen_dataset(&spec).unwrap();
        let cfg = default_tuning_with(&samples, spec.ranks, 1.0, &est.tuning).unwrap();
        let direct = fit(&samples, &cfg, Some(&truth)).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.error_frobenius, estimation_error(&direct.estimate, &truth).unwrap());
        assert_eq!(row.iterations, direct.iterations_run);
        assert_eq!(row.seed, spec.seed);
    }

    #[test]
    fn table_shape_and_csv_round_trip() {
        let table = monte_carlo(&[cell(120), cell(240)], 2, 5, &EstimatorConfig::default()).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert!(table.rows.iter().all(|r| r.error_frobenius >= 0.0));
        let keys: Vec<(usize, usize)> = table.rows.iter().map(|r| (r.cell, r.rep)).collect();
        assert_eq!(keys, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);

        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), ERROR_TABLE_COLUMNS.join(","));
        assert_eq!(ErrorTable::read_csv(buf.as_slice()).unwrap(), table);

        let mut long = Vec::new();
        table.write_long_csv(&mut long).unwrap();
        assert_eq!(String::from_utf8(long).unwrap().lines().count(), 1 + 4 * 4);

        let s = table.summaries();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].n, 240);
    }

    #[test]
    fn reruns_are_identical_up_to_timing() {
        let est = EstimatorConfig::default();
        let a = monte_carlo(&[cell(150)], 2, 3, &est).unwrap().without_runtime();
        let b = monte_carlo(&[cell(150)], 2, 3, &est).unwrap().without_runtime();
        assert_eq!(a, b);
        assert!(monte_carlo(&[cell(150)], 0, 3, &est).is_err());
    }
}
