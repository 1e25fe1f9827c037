//! Experiment configuration: a versioned TOML document.
//!
//! ```toml
//! version = 1
//!
//! [system]
//! kind = "harmonic_oscillator"        # or "random_timevarying" (+ seed), "tabulated"
//!
//! [grid]
//! lower = [-10.0]
//! upper = [10.0]
//! counts = [20]
//!
//! [time]
//! horizon = 1.0
//! steps = 20000
//!
//! [transfer]
//! kind = "constant"                   # or "curves" with builtin curve names
//! initial = [1.0, 0.0]
//! target = [0.0, 0.0]
//!
//! [integrator]                        # optional
//! rel_tol = 1e-6
//! abs_tol = 1e-9
//!
//! [truncation]                        # optional
//! ratio_cap = 1e4
//! hard_cap = 12
//!
//! [output]                            # optional
//! dir = "out"
//! trajectory_stride = 200
//!
//! [convergence]                       # needed by `convergence` only
//! horizons = [0.5, 1.0, 2.0]
//! steps = [1250, 2500, 5000, 12500]
//! ```

use std::path::{Path, PathBuf};

use ensemble_control::model::TabulatedSystem;
use ensemble_control::operator::check_shape;
use ensemble_control::synthesis::DEFAULT_RATIO_CAP;
use ensemble_control::{
    harmonic_oscillator_system, random_timevarying_system, IntegratorConfig, LinearEnsembleSystem,
    ParameterBox, ParameterGrid, PlanarCurve, TimeGrid, TransferSpec,
};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub system: SystemConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub transfer: TransferConfig,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
}

/// Matrices are lists of rows.
pub type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    HarmonicOscillator,
    RandomTimevarying {
        #[serde(default)]
        seed: u64,
    },
    /// `A(t,β) = A(t) + Σᵢ βᵢ a_param[i]`, tables interpolated linearly in
    /// time; likewise for `B`.
    Tabulated {
        times: Vec<f64>,
        a: Vec<Rows>,
        b: Vec<Rows>,
        #[serde(default)]
        a_param: Vec<Rows>,
        #[serde(default)]
        b_param: Vec<Rows>,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransferConfig {
    Constant {
        initial: Vec<f64>,
        target: Vec<f64>,
    },
    /// Builtin curve names: `circle`, `star`, `leaf`.
    Curves {
        initial: String,
        target: String,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
}

fn default_rel_tol() -> f64 {
    IntegratorConfig::default().rel_tol
}

fn default_abs_tol() -> f64 {
    IntegratorConfig::default().abs_tol
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_step: None,
            initial_step: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default = "default_ratio_cap")]
    pub ratio_cap: f64,
    /// Defaults to `m · P_total`.
    pub hard_cap: Option<usize>,
}

fn default_ratio_cap() -> f64 {
    DEFAULT_RATIO_CAP
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            ratio_cap: DEFAULT_RATIO_CAP,
            hard_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Record every k-th time node in `trajectories.csv`; by default about
    /// a hundred samples per member.
    pub trajectory_stride: Option<usize>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            trajectory_stride: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub horizons: Vec<f64>,
    pub steps: Vec<usize>,
}

/// Everything the pipeline needs, built from a validated config.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub system: LinearEnsembleSystem,
    pub pgrid: ParameterGrid,
    pub tgrid: TimeGrid,
    pub transfer: TransferSpec,
    pub integrator: IntegratorConfig,
    pub ratio_cap: f64,
    pub hard_cap: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "version: expected {CONFIG_VERSION}, found {}",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Builds the system and grids and checks `n·P_total ≤ m·N`. Nothing
    /// expensive happens here.
    pub fn build(&self) -> CliResult<Experiment> {
        self.build_with_time(self.time.horizon, self.time.steps)
    }

    /// Like [`build`](Self::build) with the time grid replaced.
    pub fn build_with_time(&self, horizon: f64, steps: usize) -> CliResult<Experiment> {
        let system = self.build_system()?;
        let pgrid = self.build_grid(&system)?;
        let tgrid = TimeGrid::new(horizon, steps)
            .map_err(|e| CliError::config(format!("time: {}", core_message(e))))?;
        check_shape(
            system.state_dim(),
            system.input_dim(),
            pgrid.len(),
            tgrid.steps(),
        )?;
        let transfer = self.build_transfer(&system, &pgrid)?;
        let integrator = IntegratorConfig {
            rel_tol: self.integrator.rel_tol,
            abs_tol: self.integrator.abs_tol,
            max_step: self.integrator.max_step,
            initial_step: self.integrator.initial_step,
        };
        integrator
            .validate()
            .map_err(|e| CliError::config(format!("integrator: {}", core_message(e))))?;
        let ratio_cap = self.truncation.ratio_cap;
        if !(ratio_cap.is_finite() && ratio_cap > 1.0) {
            return Err(CliError::config(format!(
                "truncation.ratio_cap: must be a finite number above 1, got {ratio_cap}"
            )));
        }
        if self.truncation.hard_cap == Some(0) {
            return Err(CliError::config("truncation.hard_cap: must be at least 1"));
        }
        if self.output.trajectory_stride == Some(0) {
            return Err(CliError::config(
                "output.trajectory_stride: must be at least 1",
            ));
        }
        Ok(Experiment {
            system,
            pgrid,
            tgrid,
            transfer,
            integrator,
            ratio_cap,
            hard_cap: self.truncation.hard_cap,
        })
    }

    /// Every `(T, N)` pair of the convergence study, checked up front.
    pub fn convergence_pairs(&self) -> CliResult<Vec<(f64, usize)>> {
        let conv = self
            .convergence
            .as_ref()
            .ok_or_else(|| CliError::config("convergence: section is required for this command"))?;
        if conv.horizons.is_empty() || conv.steps.is_empty() {
            return Err(CliError::config(
                "convergence: horizons and steps must be non-empty",
            ));
        }
        let mut pairs = Vec::new();
        for &t in &conv.horizons {
            for &n in &conv.steps {
                self.build_with_time(t, n)?;
                pairs.push((t, n));
            }
        }
        Ok(pairs)
    }

    fn build_system(&self) -> CliResult<LinearEnsembleSystem> {
        match &self.system {
            SystemConfig::HarmonicOscillator => Ok(harmonic_oscillator_system()),
            SystemConfig::RandomTimevarying { seed } => Ok(random_timevarying_system(*seed)),
            SystemConfig::Tabulated {
                times,
                a,
                b,
                a_param,
                b_param,
            } => {
                let mats = |field: &str, tables: &[Rows]| -> CliResult<Vec<DMatrix<f64>>> {
                    tables
                        .iter()
                        .enumerate()
                        .map(|(i, rows)| {
                            matrix(rows)
                                .map_err(|e| CliError::config(format!("system.{field}[{i}]: {e}")))
                        })
                        .collect()
                };
                let table = TabulatedSystem::new(
                    times.clone(),
                    mats("a", a)?,
                    mats("b", b)?,
                    mats("a_param", a_param)?,
                    mats("b_param", b_param)?,
                )
                .map_err(|e| CliError::config(format!("system: {}", core_message(e))))?;
                table
                    .into_system("tabulated")
                    .map_err(|e| CliError::config(format!("system: {}", core_message(e))))
            }
        }
    }

    fn build_grid(&self, system: &LinearEnsembleSystem) -> CliResult<ParameterGrid> {
        let g = &self.grid;
        if g.lower.len() != system.param_dim() {
            return Err(CliError::config(format!(
                "grid.lower: system `{}` has {} parameter(s), grid has {}",
                system.label(),
                system.param_dim(),
                g.lower.len()
            )));
        }
        let bounds = ParameterBox::new(g.lower.clone(), g.upper.clone())
            .map_err(|e| CliError::config(format!("grid: {}", core_message(e))))?;
        ParameterGrid::new(bounds, g.counts.clone())
            .map_err(|e| CliError::config(format!("grid.counts: {}", core_message(e))))
    }

    fn build_transfer(
        &self,
        system: &LinearEnsembleSystem,
        pgrid: &ParameterGrid,
    ) -> CliResult<TransferSpec> {
        let n = system.state_dim();
        match &self.transfer {
            TransferConfig::Constant { initial, target } => {
                for (field, v) in [("initial", initial), ("target", target)] {
                    if v.len() != n {
                        return Err(CliError::config(format!(
                            "transfer.{field}: expected {n} entries, found {}",
                            v.len()
                        )));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(CliError::config(format!(
                            "transfer.{field}: entries must be finite"
                        )));
                    }
                }
                Ok(TransferSpec::constant(
                    DVector::from_column_slice(initial),
                    DVector::from_column_slice(target),
                )?)
            }
            TransferConfig::Curves { initial, target } => {
                let curve = |field: &str, name: &str| {
                    PlanarCurve::builtin(name).ok_or_else(|| {
                        CliError::config(format!(
                            "transfer.{field}: unknown curve `{name}` (known: circle, star, leaf)"
                        ))
                    })
                };
                let c0 = curve("initial", initial)?;
                let cf = curve("target", target)?;
                TransferSpec::curves(system, c0, cf, pgrid)
                    .map_err(|e| CliError::config(format!("transfer: {}", core_message(e))))
            }
        }
    }
}

fn matrix(rows: &Rows) -> Result<DMatrix<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err("matrix rows must be non-empty and of equal length".into());
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

fn core_message(e: ensemble_control::Error) -> String {
    match e {
        ensemble_control::Error::InvalidArgument(m)
        | ensemble_control::Error::DimensionMismatch(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::exit;

    const FIG1: &str = r#"
version = 1
[system]
kind = "harmonic_oscillator"
[grid]
lower = [-10.0]
upper = [10.0]
counts = [20]
[time]
horizon = 1.0
steps = 20000
[transfer]
kind = "constant"
initial = [1.0, 0.0]
target = [0.0, 0.0]
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = ExperimentConfig::from_toml(FIG1).unwrap();
        assert_eq!(cfg.integrator, IntegratorSection::default());
        assert_eq!(cfg.truncation.ratio_cap, 1e4);
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
        let exp = cfg.build().unwrap();
        assert_eq!(exp.pgrid.len(), 20);
        assert_eq!(exp.tgrid.steps(), 20000);
    }

    #[test]
    fn rejects_wrong_version_and_unknown_fields() {
        let bad = FIG1.replace("version = 1", "version = 2");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(err.to_string().contains("version"));
        let bad = FIG1.replace("steps = 20000", "steps = 20000\nstep = 3");
        assert_eq!(
            ExperimentConfig::from_toml(&bad).unwrap_err().exit_code(),
            exit::CONFIG
        );
    }

    #[test]
    fn overdetermined_shape_is_a_shape_error() {
        let cfg =
            ExperimentConfig::from_toml(&FIG1.replace("steps = 20000", "steps = 19")).unwrap();
        assert_eq!(cfg.build().unwrap_err().exit_code(), exit::SHAPE);
    }

    #[test]
    fn errors_name_the_field() {
        let cfg =
            ExperimentConfig::from_toml(&FIG1.replace("initial = [1.0, 0.0]", "initial = [1.0]"))
                .unwrap();
        assert!(cfg
            .build()
            .unwrap_err()
            .to_string()
            .contains("transfer.initial"));
        let cfg =
            ExperimentConfig::from_toml(&FIG1.replace("counts = [20]", "counts = [0]")).unwrap();
        assert!(cfg.build().unwrap_err().to_string().contains("grid.counts"));
        let cfg =
            ExperimentConfig::from_toml(&FIG1.replace("lower = [-10.0]", "lower = [-10.0, 0.0]"))
                .unwrap();
        assert!(cfg.build().unwrap_err().to_string().contains("grid.lower"));
    }

    #[test]
    fn tabulated_system_from_rows() {
        let text = FIG1.replace(
            "kind = \"harmonic_oscillator\"",
            "kind = \"tabulated\"\ntimes = [0.0, 1.0]\na = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [0.0, 0.0]]]\nb = [[[1.0], [0.0]], [[1.0], [0.0]]]\na_param = [[[0.0, -1.0], [1.0, 0.0]]]",
        )
        .replace("counts = [20]", "counts = [4]");
        let exp = ExperimentConfig::from_toml(&text).unwrap().build().unwrap();
        assert_eq!((exp.system.state_dim(), exp.system.input_dim()), (2, 1));
        let a = exp.system.eval_a(0.5, &[2.0]);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, -1.5, 2.0, 0.0]));
    }

    #[test]
    fn convergence_pairs_checked_up_front() {
        let text = format!("{FIG1}\n[convergence]\nhorizons = [0.5, 1.0]\nsteps = [100, 5]\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(
            cfg.convergence_pairs().unwrap_err().exit_code(),
            exit::SHAPE
        );
        let cfg = ExperimentConfig::from_toml(FIG1).unwrap();
        assert_eq!(
            cfg.convergence_pairs().unwrap_err().exit_code(),
            exit::CONFIG
        );
    }
}
