//! Pipeline stages and the four commands built on them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ensemble_control::export::{
    read_control_csv, write_control_csv, write_flow_table, write_operator_dump, write_outcome_csv,
    write_picard_csv, write_spectrum_csv, write_trajectories_csv,
};
use ensemble_control::synthesis::{default_hard_cap, picard_diagnostic};
use ensemble_control::verify::evaluate_transfer_recording;
use ensemble_control::{
    assemble_operator, assemble_target, build_flow_table, choose_truncation, compute_svd,
    synthesize_control, ControlSignal, EnsembleOutcome, FlowTable, OperatorMatrix,
    SingularSystemApprox, SynthesisReport, TargetVector,
};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, SystemConfig};
use crate::error::{CliError, CliResult};

/// Seconds spent per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Timings {
    pub flow_s: f64,
    pub assembly_s: f64,
    pub svd_s: f64,
    pub synthesis_s: f64,
    pub total_s: f64,
}

/// Everything produced by one synthesis.
#[derive(Debug)]
pub struct SynthesisRun {
    pub flow: FlowTable,
    pub operator: OperatorMatrix,
    pub target: TargetVector,
    pub svd: SingularSystemApprox,
    pub control: ControlSignal,
    pub report: SynthesisReport,
    pub hard_cap: usize,
    pub timings: Timings,
}

pub fn synthesize(exp: &Experiment) -> CliResult<SynthesisRun> {
    let start = Instant::now();
    let flow = build_flow_table(&exp.system, &exp.pgrid, &exp.tgrid, &exp.integrator)?;
    let flow_s = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let operator = assemble_operator(&exp.system, &flow, &exp.tgrid, &exp.pgrid)?;
    let target = assemble_target(&exp.system, &flow, &exp.transfer, &exp.pgrid, &exp.tgrid)?;
    let assembly_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let svd = compute_svd(&operator)?;
    let svd_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let hard_cap = exp.hard_cap.unwrap_or_else(|| default_hard_cap(&operator));
    let j = choose_truncation(svd.singular_values(), exp.ratio_cap, Some(hard_cap));
    let (control, report) = synthesize_control(&operator, &svd, &target, j, &exp.tgrid)?;
    let synthesis_s = t.elapsed().as_secs_f64();

    Ok(SynthesisRun {
        flow,
        operator,
        target,
        svd,
        control,
        report,
        hard_cap,
        timings: Timings {
            flow_s,
            assembly_s,
            svd_s,
            synthesis_s,
            total_s: start.elapsed().as_secs_f64(),
        },
    })
}

/// About a hundred recorded samples per member unless configured.
pub fn trajectory_stride(cfg: &ExperimentConfig, exp: &Experiment) -> usize {
    cfg.output
        .trajectory_stride
        .unwrap_or_else(|| (exp.tgrid.steps() / 100).max(1))
}

pub fn verify(
    exp: &Experiment,
    control: &ControlSignal,
    stride: Option<usize>,
) -> CliResult<EnsembleOutcome> {
    Ok(evaluate_transfer_recording(
        &exp.system,
        &exp.pgrid,
        &exp.transfer,
        control,
        &exp.integrator,
        stride,
    )?)
}

/// Command-line overrides applied on top of a config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub ratio_cap: Option<f64>,
    pub hard_cap: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> CliResult<()> {
        if let Some(dir) = &self.out {
            cfg.output.dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            match &mut cfg.system {
                SystemConfig::RandomTimevarying { seed: s } => *s = seed,
                _ => {
                    return Err(CliError::config(
                        "--seed: only the random_timevarying system takes a seed",
                    ))
                }
            }
        }
        if let Some(r) = self.ratio_cap {
            cfg.truncation.ratio_cap = r;
        }
        if let Some(c) = self.hard_cap {
            cfg.truncation.hard_cap = Some(c);
        }
        Ok(())
    }
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn finish(mut w: BufWriter<File>, dir: &Path, name: &str) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(dir.join(name), e))
}

/// Writes one CSV through a core writer, attributing I/O failures to the file.
fn write_csv(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> ensemble_control::Result<()>,
) -> CliResult<()> {
    let mut w = create(dir, name)?;
    body(&mut w).map_err(|e| match e {
        ensemble_control::Error::Io(source) => CliError::io(dir.join(name), source),
        ensemble_control::Error::Csv(c) => CliError::io(dir.join(name), std::io::Error::other(c)),
        other => other.into(),
    })?;
    finish(w, dir, name)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Serialize)]
struct GridSummary {
    system: String,
    state_dim: usize,
    input_dim: usize,
    param_dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    points: usize,
    cell_measure: f64,
    horizon: f64,
    steps: usize,
    delta: f64,
    operator_rows: usize,
    operator_cols: usize,
}

impl GridSummary {
    fn new(exp: &Experiment) -> Self {
        let (n, m) = (exp.system.state_dim(), exp.system.input_dim());
        Self {
            system: exp.system.label().to_string(),
            state_dim: n,
            input_dim: m,
            param_dim: exp.system.param_dim(),
            lower: exp.pgrid.bounds().lower().to_vec(),
            upper: exp.pgrid.bounds().upper().to_vec(),
            counts: exp.pgrid.counts().to_vec(),
            points: exp.pgrid.len(),
            cell_measure: exp.pgrid.cell_measure(),
            horizon: exp.tgrid.horizon(),
            steps: exp.tgrid.steps(),
            delta: exp.tgrid.delta(),
            operator_rows: n * exp.pgrid.len(),
            operator_cols: m * exp.tgrid.steps(),
        }
    }
}

#[derive(Serialize)]
struct TruncationSummary {
    ratio_cap: f64,
    hard_cap: usize,
    /// Retained singular triples `J`.
    retained: usize,
    /// `⌈J / m⌉`.
    retained_per_channel: usize,
    rank: usize,
    s_1: Option<f64>,
    s_j: Option<f64>,
    condition_ratio: Option<f64>,
}

#[derive(Serialize)]
struct ResidualSummary {
    residual_norm: f64,
    predicted_residual: f64,
    target_norm: f64,
    control_l2_norm: f64,
}

#[derive(Serialize)]
struct RunReport {
    command: &'static str,
    grid: GridSummary,
    truncation: TruncationSummary,
    residual: ResidualSummary,
    timings: Timings,
}

fn report_for(command: &'static str, exp: &Experiment, run: &SynthesisRun) -> RunReport {
    let r = &run.report;
    let j = r.truncation_count;
    RunReport {
        command,
        grid: GridSummary::new(exp),
        truncation: TruncationSummary {
            ratio_cap: exp.ratio_cap,
            hard_cap: run.hard_cap,
            retained: j,
            retained_per_channel: r.per_channel_count(),
            rank: run.svd.rank_bound(),
            s_1: r.singular_values.first().copied(),
            s_j: j.checked_sub(1).map(|i| r.singular_values[i]),
            condition_ratio: r.condition_ratio,
        },
        residual: ResidualSummary {
            residual_norm: r.residual_norm,
            predicted_residual: r.predicted_residual(),
            target_norm: r.target_norm,
            control_l2_norm: run.control.l2_norm(),
        },
        timings: run.timings,
    }
}

fn write_report(dir: &Path, report: &RunReport) -> CliResult<()> {
    let text = toml::to_string(report).expect("report serializes");
    let path = dir.join("report.toml");
    std::fs::write(&path, text).map_err(|e| CliError::io(path, e))
}

fn write_spectrum_tables(dir: &Path, run: &SynthesisRun) -> CliResult<()> {
    write_csv(dir, "spectrum.csv", |w| write_spectrum_csv(w, &run.svd))?;
    let rows = picard_diagnostic(&run.report);
    write_csv(dir, "picard.csv", |w| write_picard_csv(w, &rows))
}

fn summary_line(run: &SynthesisRun) -> String {
    let r = &run.report;
    format!(
        "retained {} singular values ({} per channel) of {}, s1/sJ = {}, residual {:.3e}, W {:.2}s, SVD {:.2}s",
        r.truncation_count,
        r.per_channel_count(),
        run.svd.rank_bound(),
        r.condition_ratio.map_or("n/a".into(), |c| format!("{c:.3e}")),
        r.residual_norm,
        run.timings.assembly_s,
        run.timings.svd_s,
    )
}

/// `synthesize`: control.csv, spectrum.csv, picard.csv, report.toml and,
/// with `dump`, binary flow and operator dumps.
pub fn run_synthesize(cfg: &ExperimentConfig, dump: bool) -> CliResult<SynthesisRun> {
    let exp = cfg.build()?;
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let run = synthesize(&exp)?;
    write_csv(dir, "control.csv", |w| write_control_csv(w, &run.control))?;
    write_spectrum_tables(dir, &run)?;
    write_report(dir, &report_for("synthesize", &exp, &run))?;
    if dump {
        let mut w = create(dir, "flow.bin")?;
        write_flow_table(&mut w, &run.flow, &exp.pgrid, &exp.tgrid)?;
        finish(w, dir, "flow.bin")?;
        let mut w = create(dir, "operator.bin")?;
        write_operator_dump(&mut w, &run.operator, &run.target, &exp.pgrid, &exp.tgrid)?;
        finish(w, dir, "operator.bin")?;
    }
    println!("{}", summary_line(&run));
    Ok(run)
}

/// `spectrum`: spectrum.csv, picard.csv and report.toml, no control.
pub fn run_spectrum(cfg: &ExperimentConfig) -> CliResult<SynthesisRun> {
    let exp = cfg.build()?;
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let run = synthesize(&exp)?;
    write_spectrum_tables(dir, &run)?;
    write_report(dir, &report_for("spectrum", &exp, &run))?;
    println!("{}", summary_line(&run));
    Ok(run)
}

pub fn load_control(path: &Path, exp: &Experiment) -> CliResult<ControlSignal> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_control_csv(file, &exp.tgrid, exp.system.input_dim()).map_err(|e| match e {
        ensemble_control::Error::Io(source) => CliError::io(path, source),
        other => CliError::FileMismatch {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// `verify`: outcome.csv and trajectories.csv for the control at
/// `control_path` (default `<out>/control.csv`).
pub fn run_verify(
    cfg: &ExperimentConfig,
    control_path: Option<&Path>,
) -> CliResult<EnsembleOutcome> {
    let exp = cfg.build()?;
    let dir = &cfg.output.dir;
    let default_path = dir.join("control.csv");
    let path = control_path.unwrap_or(&default_path);
    let control = load_control(path, &exp)?;
    ensure_dir(dir)?;
    let outcome = verify(&exp, &control, Some(trajectory_stride(cfg, &exp)))?;
    write_csv(dir, "outcome.csv", |w| {
        write_outcome_csv(w, &exp.pgrid, &outcome)
    })?;
    write_csv(dir, "trajectories.csv", |w| {
        write_trajectories_csv(w, &outcome)
    })?;
    println!("k_norm_error = {:.6e}", outcome.k_norm_error);
    println!("mean_error   = {:.6e}", outcome.mean_error);
    println!("max_error    = {:.6e}", outcome.max_error);
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub horizon: f64,
    pub steps: usize,
    pub delta: f64,
    pub k_norm_error: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub retained: usize,
    pub retained_per_channel: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HorizonSummary {
    pub horizon: f64,
    /// Least-squares slope of `ln(k_norm_error)` against `ln(δ)`; absent
    /// with fewer than two distinct step counts.
    pub slope: Option<f64>,
    /// Retained count at the finest step of this horizon.
    pub retained: usize,
    pub retained_per_channel: usize,
}

pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if xs.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

pub fn summarize_horizons(rows: &[ConvergenceRow]) -> Vec<HorizonSummary> {
    let mut horizons: Vec<f64> = Vec::new();
    for r in rows {
        if !horizons.contains(&r.horizon) {
            horizons.push(r.horizon);
        }
    }
    horizons
        .into_iter()
        .map(|t| {
            let group: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.horizon == t).collect();
            let xs: Vec<f64> = group.iter().map(|r| r.delta.ln()).collect();
            let ys: Vec<f64> = group.iter().map(|r| r.k_norm_error.ln()).collect();
            let finest = group
                .iter()
                .max_by_key(|r| r.steps)
                .expect("group is non-empty");
            HorizonSummary {
                horizon: t,
                slope: fit_slope(&xs, &ys),
                retained: finest.retained,
                retained_per_channel: finest.retained_per_channel,
            }
        })
        .collect()
}

/// `convergence`: synthesizes and verifies every `(T, N)` pair, writing
/// convergence.csv and horizons.csv.
pub fn run_convergence(
    cfg: &ExperimentConfig,
) -> CliResult<(Vec<ConvergenceRow>, Vec<HorizonSummary>)> {
    let pairs = cfg.convergence_pairs()?;
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let mut rows = Vec::with_capacity(pairs.len());
    for (horizon, steps) in pairs {
        let exp = cfg.build_with_time(horizon, steps)?;
        let run = synthesize(&exp)?;
        let outcome = verify(&exp, &run.control, None)?;
        let row = ConvergenceRow {
            horizon,
            steps,
            delta: exp.tgrid.delta(),
            k_norm_error: outcome.k_norm_error,
            mean_error: outcome.mean_error,
            max_error: outcome.max_error,
            retained: run.report.truncation_count,
            retained_per_channel: run.report.per_channel_count(),
        };
        println!(
            "T = {horizon:<6} N = {steps:<7} delta = {:.3e}  k-norm error = {:.4e}  J = {}",
            row.delta, row.k_norm_error, row.retained
        );
        rows.push(row);
    }
    let summaries = summarize_horizons(&rows);

    write_csv(dir, "convergence.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "T",
            "N",
            "delta",
            "k_norm_error",
            "mean_error",
            "max_error",
            "retained",
            "retained_per_channel",
        ])?;
        for r in &rows {
            csv.write_record([
                r.horizon.to_string(),
                r.steps.to_string(),
                r.delta.to_string(),
                r.k_norm_error.to_string(),
                r.mean_error.to_string(),
                r.max_error.to_string(),
                r.retained.to_string(),
                r.retained_per_channel.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_csv(dir, "horizons.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["T", "slope", "retained", "retained_per_channel"])?;
        for s in &summaries {
            csv.write_record([
                s.horizon.to_string(),
                s.slope.map_or(String::new(), |v| v.to_string()),
                s.retained.to_string(),
                s.retained_per_channel.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    for s in &summaries {
        match s.slope {
            Some(v) => println!("T = {:<6} slope = {v:.3}  J = {}", s.horizon, s.retained),
            None => println!("T = {:<6} slope = (absent)  J = {}", s.horizon, s.retained),
        }
    }
    Ok((rows, summaries))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(horizon: f64, steps: usize, err: f64) -> ConvergenceRow {
        ConvergenceRow {
            horizon,
            steps,
            delta: horizon / steps as f64,
            k_norm_error: err,
            mean_error: err,
            max_error: err,
            retained: steps / 100,
            retained_per_channel: steps / 200,
        }
    }

    #[test]
    fn slope_of_first_order_data_is_one() {
        let rows: Vec<_> = [100, 200, 400]
            .iter()
            .map(|&n| row(1.0, n, 3.0 / n as f64))
            .collect();
        let s = summarize_horizons(&rows);
        assert_eq!(s.len(), 1);
        assert!((s[0].slope.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s[0].retained, 4);
    }

    #[test]
    fn single_step_count_has_no_slope() {
        let rows = vec![row(1.0, 100, 0.1), row(2.0, 100, 0.2)];
        let s = summarize_horizons(&rows);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|h| h.slope.is_none()));
    }

    #[test]
    fn seed_override_needs_random_system() {
        let mut cfg = crate::presets::preset("fig1").unwrap();
        let o = Overrides {
            seed: Some(3),
            ..Default::default()
        };
        assert!(o.apply(&mut cfg).is_err());
        let mut cfg = crate::presets::preset("fig4").unwrap();
        o.apply(&mut cfg).unwrap();
        assert_eq!(cfg.system, SystemConfig::RandomTimevarying { seed: 3 });
    }
}
