//! Command-line front end.
//!
//! Every subcommand reads an optional flat TOML file (`--config`); keys a
//! subcommand does not use are rejected by name. The resolved configuration,
//! defaults included, is embedded in JSON output and written next to CSV
//! output as `<out>.config.json`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{load_dataset, save_dataset};
use crate::diagnostics::{
    clipped_varpi, coverage_over_t, fourth_moment_constant, gradient_fd_check, lemma1_varpi, lemma2,
    opnorm_concentration, random_instance, rsc_check, Lemma2Config, Lemma3Config, TauRule, LEMMA2_CONSTANT,
};
use crate::error::Error;
use crate::huber::HuberParams;
use crate::init::{select_rank, RankSelectConfig, TauSchedule};
use crate::optimizer::{default_tuning_with, estimation_error, fit, squared_loss_tuning, GDConfig, TuningOptions};
use crate::samples::SampleSet;
use crate::simulation::{
    derive_seed, gen_dataset, monte_carlo, Contamination, EstimatorConfig, NoiseFamily, NoiseModel, SyntheticSpec,
};
use crate::tensor::{degrees_of_freedom, Ranks};

#[derive(Debug, Parser)]
#[command(name = "robust-tucker", version, about = "Robust low-rank tensor regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat TOML file of parameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path; stdout when absent (required by `simulate`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads; all cores by default. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset file.
    Simulate,
    /// Fit from a dataset file or an inline synthetic spec.
    Fit,
    /// Monte Carlo sweep over sample sizes.
    Benchmark,
    /// Iterative rank selection.
    RankSelect,
    /// Analytic gradients against finite differences.
    CheckGradients,
    /// Empirical restricted strong convexity.
    CheckRsc,
    /// Coverage of the truncated singular-value bounds.
    CheckLemma2,
    /// Operator-norm concentration of the truncated gradient.
    CheckLemma3,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Benchmark => "benchmark",
            Command::RankSelect => "rank-select",
            Command::CheckGradients => "check-gradients",
            Command::CheckRsc => "check-rsc",
            Command::CheckLemma2 => "check-lemma2",
            Command::CheckLemma3 => "check-lemma3",
        }
    }

    fn allowed_keys(self) -> Vec<&'static str> {
        const DATA: [&str; 10] = [
            "seed",
            "dims",
            "ranks",
            "n",
            "noise",
            "noise_param",
            "noise_scale",
            "spectrum",
            "contamination_fraction",
            "contamination_factor",
        ];
        const TUNING: [&str; 6] = ["delta", "winsor_quantile", "step_scale", "t_max", "rel_tol", "squared_loss"];
        let mut keys: Vec<&str> = Vec::new();
        match self {
            Command::Simulate => keys.extend(DATA),
            Command::Fit => {
                keys.extend(DATA);
                keys.extend(TUNING);
                keys.extend(["dataset", "tau", "varpi", "a", "b", "eta"]);
            }
            Command::Benchmark => {
                keys.extend(DATA.iter().filter(|k| **k != "n"));
                keys.extend(TUNING);
                keys.extend(["n_grid", "n_multipliers", "reps", "record_runtime", "long_format"]);
            }
            Command::RankSelect => {
                keys.extend(DATA);
                keys.extend([
                    "dataset",
                    "singular_value_ratio_threshold",
                    "max_outer_iters",
                    "noise_edge_factor",
                    "winsor_quantile",
                    "tau",
                ]);
            }
            Command::CheckGradients => keys.extend([
                "seed",
                "dims",
                "ranks",
                "n",
                "instances",
                "h",
                "directions_per_block",
                "varpi",
                "a",
                "b",
            ]),
            Command::CheckRsc => {
                keys.extend(DATA);
                keys.extend(["delta", "radius", "trials", "c1_directions", "varpi"]);
            }
            Command::CheckLemma2 => keys.extend([
                "seed",
                "n",
                "d1",
                "d2",
                "noise",
                "noise_param",
                "noise_scale",
                "tau",
                "t_grid",
                "reps",
                "constant",
            ]),
            Command::CheckLemma3 => keys.extend([
                "seed",
                "d1",
                "d2",
                "rank",
                "signal",
                "noise",
                "noise_param",
                "noise_scale",
                "n_grid",
                "tau_rule",
                "tau",
                "reps",
            ]),
        }
        keys
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Union of all subcommand parameters; absent keys take per-command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub dims: Option<[usize; 3]>,
    pub ranks: Option<[usize; 3]>,
    pub n: Option<usize>,
    pub noise: Option<String>,
    pub noise_param: Option<f64>,
    pub noise_scale: Option<f64>,
    pub spectrum: Option<[f64; 2]>,
    pub contamination_fraction: Option<f64>,
    pub contamination_factor: Option<f64>,
    pub dataset: Option<PathBuf>,
    pub delta: Option<f64>,
    pub winsor_quantile: Option<f64>,
    pub step_scale: Option<f64>,
    pub t_max: Option<usize>,
    pub rel_tol: Option<f64>,
    pub squared_loss: Option<bool>,
    pub tau: Option<f64>,
    pub varpi: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub eta: Option<f64>,
    pub n_grid: Option<Vec<usize>>,
    pub n_multipliers: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub record_runtime: Option<bool>,
    pub long_format: Option<PathBuf>,
    pub singular_value_ratio_threshold: Option<f64>,
    pub max_outer_iters: Option<usize>,
    pub noise_edge_factor: Option<f64>,
    pub instances: Option<usize>,
    pub h: Option<f64>,
    pub directions_per_block: Option<usize>,
    pub radius: Option<f64>,
    pub trials: Option<usize>,
    pub c1_directions: Option<usize>,
    pub d1: Option<usize>,
    pub d2: Option<usize>,
    pub t_grid: Option<Vec<f64>>,
    pub constant: Option<f64>,
    pub rank: Option<usize>,
    pub signal: Option<f64>,
    pub tau_rule: Option<String>,
}

impl ExperimentConfig {
    /// Parses `text` and rejects keys `command` does not use.
    pub fn parse(text: &str, command: Command) -> std::result::Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let allowed = command.allowed_keys();
        for (key, value) in &table {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown key `{key}` for `{}`",
                    command.name()
                )));
            }
            if value.is_table() {
                return Err(CliError::Config(format!("key `{key}`: nested tables are not allowed")));
            }
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
    }

    fn noise_model(&self) -> Result<NoiseModel, CliError> {
        let name = self.noise.as_deref().unwrap_or("student_t");
        let scale = self.noise_scale.unwrap_or(1.0);
        let family = match name {
            "none" => NoiseFamily::None,
            "gaussian" => NoiseFamily::Gaussian,
            "student_t" => NoiseFamily::StudentT {
                nu: self.noise_param.unwrap_or(3.0),
            },
            "pareto_centered" => NoiseFamily::ParetoCentered {
                alpha: self.noise_param.unwrap_or(2.5),
            },
            "lognormal_centered" => NoiseFamily::LognormalCentered {
                sigma: self.noise_param.unwrap_or(1.0),
            },
            other => {
                return Err(CliError::Config(format!(
                    "key `noise`: unknown family `{other}`; expected none, gaussian, student_t, pareto_centered or lognormal_centered"
                )))
            }
        };
        Ok(NoiseModel::new(family, scale)?)
    }

    fn synthetic_spec(&self, seed: u64, default_multiplier: usize) -> Result<SyntheticSpec, CliError> {
        let dims = self.dims.unwrap_or([8, 8, 8]);
        let ranks = self.ranks.unwrap_or([2, 2, 2]);
        let contamination = match self.contamination_fraction {
            Some(fraction) if fraction > 0.0 => Some(Contamination {
                fraction,
                factor: self.contamination_factor.unwrap_or(100.0),
            }),
            _ => None,
        };
        let spec = SyntheticSpec {
            dims,
            ranks,
            n: self.n.unwrap_or(default_multiplier * degrees_of_freedom(dims, ranks)),
            noise: self.noise_model()?,
            spectrum: self.spectrum.unwrap_or([2.0, 3.0]),
            seed,
            contamination,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn tuning(&self) -> TuningOptions {
        let d = TuningOptions::default();
        TuningOptions {
            winsor_quantile: self.winsor_quantile.unwrap_or(d.winsor_quantile),
            step_scale: self.step_scale.unwrap_or(d.step_scale),
            t_max: self.t_max.unwrap_or(d.t_max),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Diverged(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Run(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Run(
                Error::InvalidParameter { .. }
                | Error::InvalidMode(_)
                | Error::ShapeMismatch { .. }
                | Error::InfeasibleSpectrum(_),
            ) => 2,
            CliError::Run(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Diverged(_) => "diverged",
            CliError::Run(_) if self.exit_code() == 2 => "config",
            CliError::Run(_) => "runtime",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Diverged(m) => m.clone(),
            CliError::Run(e) => e.to_string(),
        }
    }

    /// Single-line JSON error record.
    pub fn error_line(&self) -> String {
        json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        })
        .to_string()
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Errors go to stderr as one JSON line.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", CliError::Config(e.kind().to_string()).error_line());
            }
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.error_line());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("`--threads` must be at least 1".into()));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            log::warn!("thread pool already initialized; ignoring --threads {t}");
        }
    }
    let cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text, cli.command)?
        }
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let ctx = Ctx { cli, cfg: &cfg, seed };
    match cli.command {
        Command::Simulate => ctx.simulate(),
        Command::Fit => ctx.fit(),
        Command::Benchmark => ctx.benchmark(),
        Command::RankSelect => ctx.rank_select(),
        Command::CheckGradients => ctx.check_gradients(),
        Command::CheckRsc => ctx.check_rsc(),
        Command::CheckLemma2 => ctx.check_lemma2(),
        Command::CheckLemma3 => ctx.check_lemma3(),
    }
}

/// Seed paths `[DIAGNOSTIC_STREAM, k]` stay clear of the one-element paths
/// the data generator derives from the same master seed.
const DIAGNOSTIC_STREAM: u64 = 0xD1A6;

fn open_out(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: &'a ExperimentConfig,
    seed: u64,
}

impl Ctx<'_> {
    /// Writes `{command, config, result}` as JSON, or `rows` as CSV with the
    /// resolved config in a sidecar file.
    fn emit(
        &self,
        config: Value,
        result: Value,
        rows: impl FnOnce(&mut dyn Write) -> crate::error::Result<()>,
    ) -> Result<(), CliError> {
        let doc = json!({
            "command": self.cli.command.name(),
            "config": config,
            "result": result,
        });
        log::info!("resolved config: {}", doc["config"]);
        let mut out = open_out(self.cli.out.as_deref())?;
        match self.cli.format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, &doc).map_err(Error::from)?;
                writeln!(out)?;
            }
            Format::Csv => {
                rows(&mut out)?;
                if let Some(p) = &self.cli.out {
                    let meta = json!({ "command": doc["command"], "config": doc["config"] });
                    std::fs::write(sidecar(p), serde_json::to_string_pretty(&meta).map_err(Error::from)? + "\n")?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Dataset file when `dataset` is set, otherwise a synthetic draw.
    fn load_samples(&self, default_multiplier: usize) -> Result<(SampleSet, Value, Option<Ranks>), CliError> {
        match &self.cfg.dataset {
            Some(path) => {
                let (samples, header) = load_dataset(path)?;
                let ranks = self.cfg.ranks.or(header.spec.as_ref().map(|s| s.ranks));
                let source = json!({ "dataset": path, "header": header });
                Ok((samples, source, ranks))
            }
            None => {
                let spec = self.cfg.synthetic_spec(self.seed, default_multiplier)?;
                let (samples, _) = gen_dataset(&spec)?;
                Ok((samples, json!({ "spec": spec }), Some(spec.ranks)))
            }
        }
    }

    fn simulate(&self) -> Result<(), CliError> {
        let spec = self.cfg.synthetic_spec(self.seed, 20)?;
        let path = self
            .cli
            .out
            .as_ref()
            .ok_or_else(|| CliError::Config("`simulate` needs --out <path>".into()))?;
        let (samples, _) = gen_dataset(&spec)?;
        save_dataset(path, &samples, Some(&spec))?;
        let doc = json!({ "command": "simulate", "config": { "spec": spec }, "result": { "path": path } });
        let mut out = io::stdout().lock();
        serde_json::to_writer_pretty(&mut out, &doc).map_err(Error::from)?;
        writeln!(out)?;
        Ok(())
    }

    fn fit(&self) -> Result<(), CliError> {
        let (samples, source, ranks) = self.load_samples(20)?;
        let ranks = ranks.ok_or_else(|| CliError::Config("key `ranks` is required for this dataset".into()))?;
        let delta = self.cfg.delta.unwrap_or(1.0);
        let gd = if self.cfg.squared_loss.unwrap_or(false) {
            squared_loss_tuning(&samples, ranks, &self.cfg.tuning())?
        } else {
            default_tuning_with(&samples, ranks, delta, &self.cfg.tuning())?
        };
        let c = self.cfg;
        let gd = GDConfig {
            tau: c.tau.unwrap_or(gd.tau),
            varpi: c.varpi.unwrap_or(gd.varpi),
            a: c.a.unwrap_or(gd.a),
            b: c.b.unwrap_or(gd.b),
            eta: c.eta.unwrap_or(gd.eta),
            ..gd
        };
        let truth = samples.ground_truth();
        let result = fit(&samples, &gd, truth)?;
        let (err, rel) = match truth {
            Some(t) => {
                let e = estimation_error(&result.estimate, t)?;
                let norm = t.fro_norm();
                (Some(e), Some(if norm > 0.0 { e / norm } else { e }))
            }
            None => (None, None),
        };
        let config = json!({ "data": source, "gd": gd });
        let report = json!({
            "iterations_run": result.iterations_run,
            "converged": result.converged,
            "diverged": result.diverged,
            "eta_used": result.eta_used,
            "halvings": result.halvings,
            "error_frobenius": err,
            "relative_error": rel,
            "objective_trace": result.objective_trace,
            "error_trace": result.error_trace,
            "estimate": result.estimate.data(),
        });
        self.emit(config, report, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["iteration", "objective", "error"])?;
            for (i, obj) in result.objective_trace.iter().enumerate() {
                let e = result.error_trace.get(i).map(|e| e.to_string()).unwrap_or_default();
                wtr.write_record([i.to_string(), obj.to_string(), e])?;
            }
            wtr.flush()?;
            Ok(())
        })?;
        if result.diverged {
            return Err(CliError::Diverged(format!(
                "objective diverged after {} step halvings; partial trace written",
                result.halvings
            )));
        }
        Ok(())
    }

    fn benchmark(&self) -> Result<(), CliError> {
        let base = self.cfg.synthetic_spec(self.seed, 1)?;
        let df = degrees_of_freedom(base.dims, base.ranks);
        let grid: Vec<usize> = match (&self.cfg.n_grid, &self.cfg.n_multipliers) {
            (Some(g), _) => g.clone(),
            (None, m) => m
                .clone()
                .unwrap_or_else(|| vec![5.0, 10.0, 20.0, 40.0])
                .iter()
                .map(|x| (x * df as f64).round() as usize)
                .collect(),
        };
        if grid.is_empty() || grid.contains(&0) {
            return Err(CliError::Config("sample-size grid must be nonempty and positive".into()));
        }
        let cells: Vec<SyntheticSpec> = grid.iter().map(|&n| SyntheticSpec { n, ..base.clone() }).collect();
        let reps = self.cfg.reps.unwrap_or(20);
        let est = EstimatorConfig {
            delta: self.cfg.delta.unwrap_or(1.0),
            tuning: self.cfg.tuning(),
            squared_loss: self.cfg.squared_loss.unwrap_or(false),
        };
        let record_runtime = self.cfg.record_runtime.unwrap_or(false);
        let mut table = monte_carlo(&cells, reps, self.seed, &est)?;
        if !record_runtime {
            table = table.without_runtime();
        }
        if let Some(p) = &self.cfg.long_format {
            table.write_long_csv(BufWriter::new(File::create(p)?))?;
        }
        let config = json!({
            "master_seed": self.seed,
            "base_spec": base,
            "n_grid": grid,
            "reps": reps,
            "estimator": est,
            "record_runtime": record_runtime,
            "long_format": self.cfg.long_format,
        });
        let result = json!({
            "rows": table.rows,
            "summaries": table.summaries(),
            "loglog_slope": if grid.len() >= 2 { Some(table.loglog_slope_vs_n()) } else { None },
        });
        self.emit(config, result, |w| table.write_csv(w))
    }

    fn rank_select(&self) -> Result<(), CliError> {
        let (samples, source, _) = self.load_samples(50)?;
        let d = RankSelectConfig::default();
        let rs = RankSelectConfig {
            singular_value_ratio_threshold: self
                .cfg
                .singular_value_ratio_threshold
                .unwrap_or(d.singular_value_ratio_threshold),
            max_outer_iters: self.cfg.max_outer_iters.unwrap_or(d.max_outer_iters),
            tau_schedule: self.cfg.tau.map(TauSchedule::Fixed).unwrap_or(d.tau_schedule),
            noise_edge_factor: self.cfg.noise_edge_factor.unwrap_or(d.noise_edge_factor),
            winsor_quantile: self.cfg.winsor_quantile.unwrap_or(d.winsor_quantile),
        };
        let sel = select_rank(&samples, &rs)?;
        let config = json!({ "data": source, "rank_select": rs });
        self.emit(config, json!(sel), |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["iteration", "tau", "r1", "r2", "r3"])?;
            for (i, it) in sel.trace.iter().enumerate() {
                wtr.write_record([
                    i.to_string(),
                    it.tau.map(|t| t.to_string()).unwrap_or_default(),
                    it.ranks[0].to_string(),
                    it.ranks[1].to_string(),
                    it.ranks[2].to_string(),
                ])?;
            }
            wtr.flush()?;
            Ok(())
        })
    }

    fn check_gradients(&self) -> Result<(), CliError> {
        let c = self.cfg;
        let dims = c.dims.unwrap_or([4, 5, 6]);
        let ranks = c.ranks.unwrap_or([2, 2, 2]);
        let n = c.n.unwrap_or(30);
        let instances = c.instances.unwrap_or(20);
        let h = c.h.unwrap_or(1e-6);
        let dirs = c.directions_per_block.unwrap_or(5);
        let (a, b) = (c.a.unwrap_or(0.3), c.b.unwrap_or(1.2));
        let mut reports = Vec::with_capacity(instances);
        for i in 0..instances {
            let (samples, f) = random_instance(dims, ranks, n, derive_seed(self.seed, &[i as u64, 0]))?;
            let varpi = match c.varpi {
                Some(v) => v,
                None => clipped_varpi(&samples, &f, 0.5)?,
            };
            let r = gradient_fd_check(&samples, &f, &HuberParams::new(varpi)?, a, b, h, dirs, derive_seed(self.seed, &[i as u64, 1]))?;
            reports.push((varpi, r));
        }
        let worst = reports.iter().map(|r| r.1.max_relative_error).fold(0.0, f64::max);
        let config = json!({
            "seed": self.seed, "dims": dims, "ranks": ranks, "n": n, "instances": instances,
            "h": h, "directions_per_block": dirs, "a": a, "b": b,
            "varpi": c.varpi.map(|v| json!(v)).unwrap_or(json!("0.5 * median |residual|")),
        });
        let result = json!({
            "max_relative_error": worst,
            "instances": reports.iter().map(|(v, r)| json!({ "varpi": v, "check": r })).collect::<Vec<_>>(),
        });
        self.emit(config, result, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["instance", "varpi", "max_relative_error", "core", "u1", "u2", "u3", "redraws"])?;
            for (i, (v, r)) in reports.iter().enumerate() {
                wtr.write_record([
                    i.to_string(),
                    v.to_string(),
                    r.max_relative_error.to_string(),
                    r.per_block[0].to_string(),
                    r.per_block[1].to_string(),
                    r.per_block[2].to_string(),
                    r.per_block[3].to_string(),
                    r.redraws.to_string(),
                ])?;
            }
            wtr.flush()?;
            Ok(())
        })
    }

    fn check_rsc(&self) -> Result<(), CliError> {
        let spec = self.cfg.synthetic_spec(self.seed, 30)?;
        let (samples, truth) = gen_dataset(&spec)?;
        let delta = self.cfg.delta.unwrap_or(1.0);
        let radius = self.cfg.radius.unwrap_or(1.0);
        let trials = self.cfg.trials.unwrap_or(200);
        let c1_dirs = self.cfg.c1_directions.unwrap_or(50);
        let c1 = fourth_moment_constant(&samples, c1_dirs, derive_seed(self.seed, &[DIAGNOSTIC_STREAM, 0]))?;
        let moment = spec.noise.abs_moment(1.0 + delta);
        if !moment.is_finite() {
            return Err(CliError::Config(format!(
                "noise has no finite moment of order {}",
                1.0 + delta
            )));
        }
        let varpi = self.cfg.varpi.unwrap_or_else(|| lemma1_varpi(moment, delta, c1, radius));
        let report = rsc_check(
            &samples,
            &truth,
            radius,
            spec.ranks,
            &HuberParams::new(varpi)?,
            trials,
            derive_seed(self.seed, &[DIAGNOSTIC_STREAM, 1]),
        )?;
        let config = json!({
            "spec": spec, "delta": delta, "radius": radius, "trials": trials,
            "c1_directions": c1_dirs, "varpi_override": self.cfg.varpi,
        });
        let result = json!({
            "c1": c1, "noise_moment": moment, "varpi": varpi,
            "satisfied_fraction": report.satisfied_fraction(), "report": report,
        });
        self.emit(config, result, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record([
                "trials",
                "satisfied_count",
                "min_ratio",
                "median_ratio",
                "radius",
                "varpi",
                "c1",
                "threshold",
            ])?;
            wtr.write_record([
                report.trials.to_string(),
                report.satisfied_count.to_string(),
                report.min_ratio.to_string(),
                report.median_ratio.to_string(),
                report.radius.to_string(),
                report.varpi.to_string(),
                c1.to_string(),
                report.threshold.to_string(),
            ])?;
            wtr.flush()?;
            Ok(())
        })
    }

    fn check_lemma2(&self) -> Result<(), CliError> {
        let c = self.cfg;
        let r = lemma2::reference_config();
        let noise = if c.noise.is_some() { c.noise_model()? } else { r.noise };
        let (n, d1, d2) = (c.n.unwrap_or(r.n), c.d1.unwrap_or(r.d1), c.d2.unwrap_or(r.d2));
        let tau = match c.tau {
            Some(t) => t,
            None => lemma2::reference_tau(&noise, n, d1, d2)?,
        };
        let cfg = Lemma2Config {
            n,
            d1,
            d2,
            noise,
            tau,
            t: 1.0,
            reps: c.reps.unwrap_or(200),
            seed: self.seed,
            constant: c.constant.unwrap_or(LEMMA2_CONSTANT),
        };
        let ts = c.t_grid.clone().unwrap_or_else(|| vec![1.0, 3.0, 5.0]);
        let reports = coverage_over_t(&cfg, &ts)?;
        let config = json!({ "base": cfg, "t_grid": ts });
        self.emit(config, json!(reports), |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record([
                "t",
                "tau",
                "psi_second_moment",
                "upper_bound",
                "lower_bound",
                "upper_coverage",
                "lower_coverage",
            ])?;
            for r in &reports {
                wtr.write_record(
                    [
                        r.config.t,
                        r.config.tau,
                        r.psi_second_moment,
                        r.upper_bound,
                        r.lower_bound,
                        r.upper_coverage,
                        r.lower_coverage,
                    ]
                    .map(|x| x.to_string()),
                )?;
            }
            wtr.flush()?;
            Ok(())
        })
    }

    fn check_lemma3(&self) -> Result<(), CliError> {
        let c = self.cfg;
        let tau_rule = match (c.tau_rule.as_deref(), c.tau) {
            (None | Some("scaled"), None) => TauRule::Scaled,
            (None | Some("fixed"), Some(tau)) => TauRule::Fixed { tau },
            (Some("disabled"), None) => TauRule::Disabled,
            (rule, tau) => {
                return Err(CliError::Config(format!(
                    "`tau_rule` = {rule:?} with `tau` = {tau:?}: expected scaled, disabled, or fixed with tau"
                )))
            }
        };
        let cfg = Lemma3Config {
            d1: c.d1.unwrap_or(10),
            d2: c.d2.unwrap_or(10),
            rank: c.rank.unwrap_or(1),
            signal: c.signal.unwrap_or(1.0),
            noise: c.noise_model()?,
            n_grid: c.n_grid.clone().unwrap_or_else(|| vec![250, 500, 1000, 2000]),
            tau_rule,
            reps: c.reps.unwrap_or(100),
            seed: self.seed,
        };
        let report = opnorm_concentration(&cfg)?;
        let result = json!({
            "medians": report.medians,
            "slope": report.slope,
            "paired_fraction": report.paired_fraction,
            "rows": report.rows,
        });
        self.emit(json!(cfg), result, |w| report.write_csv(w))
    }
}
