//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use roadfield_core::eigensolver::{WholeFieldOptions, DEFAULT_TOL};
use roadfield_core::model::{make_model, ModelParams, ModelSpec};
use roadfield_core::simulator::{InitialData, StationaryOptions, TraceConfig};
use roadfield_core::speeds::SpeedOptions;
use roadfield_core::{CellGrid, StripGrid, TopBoundary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub task: TaskBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub tolerance: ToleranceBlock,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// `x` nodes per period of the cell; defaults depend on the exchange rates.
    pub nx: Option<usize>,
    /// Vertical spacing of the cell.
    pub hy: Option<f64>,
    /// Height `R` of the truncated cell (eigen, truncated speed, stationary).
    #[serde(rename = "R")]
    pub height: Option<f64>,
    /// Top boundary of the cell for stationary runs.
    #[serde(default)]
    pub top: TopBoundary,
    pub strip: Option<StripBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripBlock {
    pub periods_left: usize,
    pub periods_right: usize,
    pub cells_per_period: usize,
    pub height: f64,
    pub ny: usize,
    #[serde(default)]
    pub top: TopBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CurveSelection {
    Truncated,
    #[default]
    WholeField,
    Both,
}

/// `alpha` samples: an explicit list or `count` evenly spaced values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaGrid {
    List(Vec<f64>),
    Range { from: f64, to: f64, count: usize },
}

impl AlphaGrid {
    pub fn values(&self) -> anyhow::Result<Vec<f64>> {
        let v = match self {
            AlphaGrid::List(v) => v.clone(),
            AlphaGrid::Range { from, to, count } => {
                if *count < 2 {
                    bail!("task.alphas: count must be at least 2");
                }
                (0..*count)
                    .map(|k| from + (to - from) * k as f64 / (*count - 1) as f64)
                    .collect()
            }
        };
        if v.is_empty() || v.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            bail!("task.alphas: values must be finite and nonnegative");
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            bail!("task.alphas: values must be strictly increasing");
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    pub alphas: Option<AlphaGrid>,
    #[serde(default)]
    pub mode: CurveSelection,
    /// Road diffusivities for a threshold scan (speed).
    pub d_sweep: Option<Vec<f64>>,
    /// Decay rate of exponential data whose speed `c(alpha)` is also reported (speed).
    pub exp_alpha: Option<f64>,
    pub initial: Option<InitialData>,
    pub t_final: Option<f64>,
    #[serde(default)]
    pub trace: TraceConfig,
    /// Time limit of each stationary run.
    pub t_max: Option<f64>,
    /// Compare a simulated run with the stationary state behind the front.
    pub inner: Option<InnerBlock>,
    /// Keep every `snapshot_stride`-th node in snapshot CSVs.
    #[serde(default = "one")]
    pub snapshot_stride: usize,
    /// Compare the truncated speed with the truncated field speed (verify).
    #[serde(default)]
    pub truncated_field: bool,
    /// Run the simulation-versus-spectral speed check (verify).
    #[serde(default)]
    pub verify_speed: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerBlock {
    pub c_test: f64,
    pub y_max: f64,
}

fn one() -> usize {
    1
}

impl Default for TaskBlock {
    fn default() -> Self {
        TaskBlock {
            alphas: None,
            mode: CurveSelection::default(),
            d_sweep: None,
            exp_alpha: None,
            initial: None,
            t_final: None,
            trace: TraceConfig::default(),
            t_max: None,
            inner: None,
            snapshot_stride: 1,
            truncated_field: false,
            verify_speed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: PathBuf,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: PathBuf::from("out"),
            formats: all_formats(),
        }
    }
}

impl OutputBlock {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceBlock {
    /// Power-iteration tolerance.
    pub eigen: f64,
    /// Stopping tolerance of the `R`-sequence.
    pub tol_r: f64,
    pub r0: f64,
    pub r_max: f64,
    /// Golden-section tolerance on `ln alpha`.
    pub log_alpha: f64,
    /// Time-derivative norm at which a stationary run stops.
    pub stationary: f64,
    /// Relative speed agreement required by the verify suite.
    pub speed: f64,
    /// Averaging identity residual limit.
    pub averaging: f64,
    /// Misfit limit of the sine profile fit.
    pub profile: f64,
    /// Truncated eigenvalue agreement with the constant-coefficient oracle.
    pub oracle: f64,
}

impl Default for ToleranceBlock {
    fn default() -> Self {
        let w = WholeFieldOptions::default();
        ToleranceBlock {
            eigen: DEFAULT_TOL,
            tol_r: w.tol_r,
            r0: w.r0,
            r_max: w.r_max,
            log_alpha: SpeedOptions::default().log_alpha_tol,
            stationary: StationaryOptions::default().tol,
            speed: 0.05,
            averaging: 5e-3,
            profile: 5e-3,
            oracle: 1e-5,
        }
    }
}

impl ToleranceBlock {
    fn validate(&self) -> anyhow::Result<()> {
        let all = [
            ("eigen", self.eigen),
            ("tol_r", self.tol_r),
            ("r0", self.r0),
            ("r_max", self.r_max),
            ("log_alpha", self.log_alpha),
            ("stationary", self.stationary),
            ("speed", self.speed),
            ("averaging", self.averaging),
            ("profile", self.profile),
            ("oracle", self.oracle),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                bail!("tolerance.{name} must be positive and finite, got {v}");
            }
        }
        if self.r_max < self.r0 {
            bail!("tolerance.r_max must be at least tolerance.r0");
        }
        Ok(())
    }
}

/// A parsed configuration with its validated model and the SHA-256 of the
/// raw document.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub params: ModelParams,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn from_bytes(bytes: &[u8]) -> anyhow::Result<Self> {
        let config: RunConfig = serde_json::from_slice(bytes).context("parsing run config")?;
        let params = make_model(&config.model).map_err(|e| anyhow!(e))?;
        config.tolerance.validate()?;
        if config.task.snapshot_stride == 0 {
            bail!("task.snapshot_stride must be at least 1");
        }
        if let Some(t) = config.task.t_final {
            if !(t.is_finite() && t > 0.0) {
                bail!("task.t_final must be positive and finite, got {t}");
            }
        }
        if config.output.formats.is_empty() {
            bail!("output.formats must not be empty");
        }
        let sha256 = hex::encode(Sha256::digest(bytes));
        Ok(LoadedConfig { config, params, sha256 })
    }

    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes)
    }

    pub fn whole_field_options(&self) -> WholeFieldOptions {
        let t = &self.config.tolerance;
        let g = &self.config.grid;
        let base = WholeFieldOptions::for_params(&self.params);
        WholeFieldOptions {
            nx: g.nx.unwrap_or(base.nx),
            hy: g.hy.unwrap_or(base.hy),
            r0: t.r0,
            r_max: t.r_max,
            tol_r: t.tol_r,
            tol: t.eigen,
        }
    }

    pub fn speed_options(&self) -> SpeedOptions {
        SpeedOptions {
            eigen: self.whole_field_options(),
            log_alpha_tol: self.config.tolerance.log_alpha,
        }
    }

    /// Truncated cell of height `grid.R` (default 10).
    pub fn cell(&self) -> anyhow::Result<CellGrid> {
        self.cell_of_height(self.config.grid.height.unwrap_or(10.0))
    }

    pub fn cell_of_height(&self, height: f64) -> anyhow::Result<CellGrid> {
        let w = self.whole_field_options();
        CellGrid::with_spacing(self.params.period, height, w.nx, w.hy).map_err(|e| anyhow!(e))
    }

    pub fn strip(&self) -> anyhow::Result<StripGrid> {
        let s = self
            .config
            .grid
            .strip
            .as_ref()
            .ok_or_else(|| anyhow!("grid.strip is required for this task"))?;
        StripGrid::new(
            self.params.period,
            s.periods_left,
            s.periods_right,
            s.cells_per_period,
            s.height,
            s.ny,
            s.top,
        )
        .map_err(|e| anyhow!(e))
    }

    pub fn stationary_options(&self) -> StationaryOptions {
        let mut o = StationaryOptions {
            tol: self.config.tolerance.stationary,
            ..StationaryOptions::default()
        };
        if let Some(t) = self.config.task.t_max {
            o.t_max = t;
        }
        o
    }

    pub fn tolerance_json(&self) -> String {
        serde_json::to_string(&self.config.tolerance).expect("tolerance block serializes")
    }
}
