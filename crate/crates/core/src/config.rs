//! JSON run configuration: parsing, validation and construction of the
//! solver inputs.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifacts::{read_control_csv, read_mask_csv};
use crate::control::{BandKind, OuterLoopSettings};
use crate::enthalpy::{EnthalpyParams, MollifierSpec};
use crate::error::{Error, Result};
use crate::forward::{Numerics, PicardSettings};
use crate::grid::{read_slice_binary, read_slice_csv, BoundaryControl, Side, SpatialGrid, TimeGrid};
use crate::linsolve::LinearSolver;
use crate::mushy::TargetSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: usize,
    pub extent: Vec<f64>,
    pub cells: Vec<usize>,
    /// Final time `T`.
    pub horizon: f64,
    pub steps: usize,
}

/// Named initial states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant { value: f64 },
    /// Linear in `x` from `left` at `x = 0` to `right` at `x = L`.
    LinearRamp { left: f64, right: f64 },
    /// Solid for `x < interface - width/2`, liquid beyond
    /// `interface + width/2`, linear in between.
    TwoPhaseStep { solid: f64, liquid: f64, interface: f64, width: f64 },
    /// `base + amplitude (1 + cos(pi r / radius)) / 2` for `r < radius`.
    CosineBump { base: f64, amplitude: f64, center: Vec<f64>, radius: f64 },
    /// Field file in the CSV or binary slice format.
    File { path: PathBuf },
}

impl InitialProfile {
    fn validate(&self, dimension: usize) -> Result<()> {
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("initial.{key}"), "must be finite"))
            }
        };
        match self {
            Self::Constant { value } => finite("value", *value),
            Self::LinearRamp { left, right } => finite("left", *left).and(finite("right", *right)),
            Self::TwoPhaseStep { solid, liquid, interface, width } => {
                finite("solid", *solid)?;
                finite("liquid", *liquid)?;
                finite("interface", *interface)?;
                if !(*width >= 0.0 && width.is_finite()) {
                    return Err(Error::config("initial.width", "must be non-negative"));
                }
                Ok(())
            }
            Self::CosineBump { base, amplitude, center, radius } => {
                finite("base", *base)?;
                finite("amplitude", *amplitude)?;
                if center.len() != dimension {
                    return Err(Error::config("initial.center", "needs one coordinate per axis"));
                }
                if !(*radius > 0.0) {
                    return Err(Error::config("initial.radius", "must be positive"));
                }
                Ok(())
            }
            Self::File { .. } => Ok(()),
        }
    }

    pub fn evaluate(&self, grid: &SpatialGrid) -> Result<Vec<f64>> {
        let length = grid.extent()[0];
        let dim = grid.dimension();
        Ok(match self {
            Self::Constant { value } => vec![*value; grid.cell_count()],
            Self::LinearRamp { left, right } => grid.sample(|c| left + (right - left) * c[0] / length),
            Self::TwoPhaseStep { solid, liquid, interface, width } => grid.sample(|c| {
                let lo = interface - 0.5 * width;
                if c[0] <= lo {
                    *solid
                } else if c[0] >= interface + 0.5 * width {
                    *liquid
                } else {
                    solid + (liquid - solid) * (c[0] - lo) / width
                }
            }),
            Self::CosineBump { base, amplitude, center, radius } => grid.sample(|c| {
                let r = (0..dim).map(|a| (c[a] - center[a]).powi(2)).sum::<f64>().sqrt();
                if r < *radius {
                    base + 0.5 * amplitude * (1.0 + (PI * r / radius).cos())
                } else {
                    *base
                }
            }),
            Self::File { path } => read_field_file(path, grid)?,
        })
    }
}

fn read_field_file(path: &Path, grid: &SpatialGrid) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "bin") {
        let (g, values) = read_slice_binary(std::io::BufReader::new(file))?;
        if &g != grid {
            return Err(Error::config("initial.path", "field file grid differs from the problem grid"));
        }
        Ok(values)
    } else {
        read_slice_csv(grid, std::io::BufReader::new(file))
    }
}

/// Prescribed boundary flux for `simulate`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    #[default]
    Zero,
    /// Constant flux per side (unused sides in 1D must stay 0).
    Constant {
        #[serde(default)]
        left: f64,
        #[serde(default)]
        right: f64,
        #[serde(default)]
        bottom: f64,
        #[serde(default)]
        top: f64,
    },
    /// Control table as written by `control`.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Boxes `[x0, x1]` (1D) or `[x0, x1, y0, y1]` (2D).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<Vec<f64>>>,
    /// Cell list file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<PathBuf>,
}

impl TargetSpec {
    pub fn build(&self, grid: &SpatialGrid) -> Result<TargetSet> {
        match (&self.boxes, &self.mask_file) {
            (Some(boxes), None) => {
                let mut out = Vec::with_capacity(boxes.len());
                for (i, b) in boxes.iter().enumerate() {
                    if b.len() != 2 * grid.dimension() || b.chunks(2).any(|p| !(p[0] <= p[1])) {
                        return Err(Error::config(
                            format!("target.boxes[{i}]"),
                            "needs ordered lower/upper bounds for each axis",
                        ));
                    }
                    let mut full = [0.0; 4];
                    full[..b.len()].copy_from_slice(b);
                    out.push(full);
                }
                TargetSet::from_boxes(grid, &out).map_err(|_| Error::config("target", "selects no cell"))
            }
            (None, Some(path)) => TargetSet::from_mask(grid, read_mask_csv(path, grid.cell_count())?)
                .map_err(|_| Error::config("target.mask_file", "selects no cell")),
            _ => Err(Error::config("target", "give exactly one of `boxes` or `mask_file`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub picard: PicardSettings,
    pub linear_solver: LinearSolver,
    pub quadrature_order: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            picard: PicardSettings::default(),
            linear_solver: LinearSolver::Auto,
            quadrature_order: MollifierSpec::DEFAULT_ORDER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Distance from the boundary of the cells used by the interior
    /// diagnostics (raised to `lambda` when smaller).
    pub interior_margin: f64,
    pub holder_samples: usize,
    /// Write a state snapshot every this many levels (0: only `t = 0, T`).
    pub snapshot_every: usize,
    /// Band of the mushy masks written by `simulate`.
    pub band: BandKind,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { interior_margin: 0.05, holder_samples: 2000, snapshot_every: 0, band: BandKind::Mu }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Cells of the 1D verification instances.
    pub cells: usize,
    pub steps: usize,
    /// Random probes per resolution for the duality check.
    pub probes: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { cells: 64, steps: 64, probes: 20 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda,
    EpsilonFloor,
    Cells,
    Steps,
    Mu,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    Control,
    Simulate,
    /// Error of the cosine eigenmode for the frozen constant-coefficient solver.
    Manufactured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub mode: SweepMode,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub physics: EnthalpyParams,
    pub initial: InitialProfile,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub optimizer: OuterLoopSettings,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { key, constraint } => Error::Config { key: format!("{prefix}.{key}"), constraint },
        other => other,
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Inputs assembled from a configuration.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub grid: SpatialGrid,
    pub times: TimeGrid,
    pub params: EnthalpyParams,
    pub numerics: Numerics,
    pub y0: Vec<f64>,
    pub control: BoundaryControl,
    pub target: Option<TargetSet>,
    pub settings: OuterLoopSettings,
}

impl RunConfig {
    /// The 1D two-phase desk instance: solid at -1 left of `x = 0.75`,
    /// liquid at 2 to the right, target `[0.4, 0.6]`.
    pub fn desk() -> Self {
        Self {
            problem: ProblemConfig { dimension: 1, extent: vec![1.0], cells: vec![128], horizon: 0.2, steps: 256 },
            physics: EnthalpyParams { k1: 2.0, k2: 1.0, rho: 1.0, lambda: 1e-4, alpha: 0.25, mu: 0.05 },
            initial: InitialProfile::TwoPhaseStep { solid: -1.0, liquid: 2.0, interface: 0.75, width: 0.1 },
            control: ControlSpec::Zero,
            target: Some(TargetSpec { boxes: Some(vec![vec![0.4, 0.6]]), mask_file: None }),
            optimizer: OuterLoopSettings::default(),
            solver: SolverConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            verify: VerifyConfig::default(),
            sweep: None,
            output: default_output(),
            seed: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        let p = &self.problem;
        if !(1..=2).contains(&p.dimension) {
            return Err(Error::config("problem.dimension", "must be 1 or 2"));
        }
        if p.extent.len() != p.dimension {
            return Err(Error::config("problem.extent", "needs one length per axis"));
        }
        if p.cells.len() != p.dimension {
            return Err(Error::config("problem.cells", "needs one count per axis"));
        }
        SpatialGrid::new(&p.extent, &p.cells).map_err(|e| prefixed("problem", e))
    }

    pub fn times(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.problem.horizon, self.problem.steps).map_err(|e| prefixed("problem", e))
    }

    /// Re-checks every invariant that does not need external files.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.times()?;
        self.physics.validate().map_err(|e| prefixed("physics", e))?;
        self.initial.validate(grid.dimension())?;
        if let ControlSpec::Constant { bottom, top, .. } = self.control {
            if grid.dimension() == 1 && (bottom != 0.0 || top != 0.0) {
                return Err(Error::config("control.bottom", "only left/right exist in 1D"));
            }
        }
        if let Some(target) = &self.target {
            if target.mask_file.is_none() {
                target.build(&grid)?;
            } else if target.boxes.is_some() {
                return Err(Error::config("target", "give exactly one of `boxes` or `mask_file`"));
            }
        }
        self.optimizer.validate().map_err(|e| prefixed("optimizer", e))?;
        self.solver.picard.validate().map_err(|e| prefixed("solver", e))?;
        if !(1..=64).contains(&self.solver.quadrature_order) {
            return Err(Error::config("solver.quadrature_order", "must lie in 1..=64"));
        }
        let d = &self.diagnostics;
        if !(d.interior_margin >= 0.0) {
            return Err(Error::config("diagnostics.interior_margin", "must be non-negative"));
        }
        if d.holder_samples == 0 {
            return Err(Error::config("diagnostics.holder_samples", "must be at least 1"));
        }
        let v = &self.verify;
        if v.cells < 8 || v.steps < 4 || v.probes == 0 {
            return Err(Error::config("verify", "needs cells >= 8, steps >= 4 and probes >= 1"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::config("sweep.values", "must not be empty"));
            }
            for &x in &s.values {
                self.with_axis(s.axis, x)?;
            }
        }
        Ok(())
    }

    /// Copy with one sweep axis set to `value`.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        let count = |key: &str| {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::config(format!("sweep.values ({key})"), "must be positive integers"))
            }
        };
        match axis {
            SweepAxis::Lambda => c.physics.lambda = value,
            SweepAxis::Mu => c.physics.mu = value,
            SweepAxis::EpsilonFloor => c.optimizer.eps_schedule.floor = value,
            SweepAxis::Cells => {
                let n = count("cells")?;
                c.problem.cells.iter_mut().for_each(|k| *k = n);
            }
            SweepAxis::Steps => c.problem.steps = count("steps")?,
        }
        c.sweep = None;
        if axis != SweepAxis::Cells && axis != SweepAxis::Steps {
            c.physics.validate().map_err(|e| prefixed("physics", e))?;
            c.optimizer.validate().map_err(|e| prefixed("optimizer", e))?;
        }
        Ok(c)
    }

    /// Builds grids, parameters and fields, reading any referenced files.
    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let grid = self.grid()?;
        let times = self.times()?;
        let numerics = Numerics {
            mollifier: MollifierSpec::new(grid.dimension(), self.solver.quadrature_order)?,
            linear_solver: self.solver.linear_solver,
        };
        let y0 = self.initial.evaluate(&grid)?;
        let control = match &self.control {
            ControlSpec::Zero => BoundaryControl::zeros(&grid, times),
            ControlSpec::Constant { left, right, bottom, top } => BoundaryControl::from_fn(&grid, times, |_, f| match f.side {
                Side::Left => *left,
                Side::Right => *right,
                Side::Bottom => *bottom,
                Side::Top => *top,
            }),
            ControlSpec::File { path } => read_control_csv(path, &grid, times)?,
        };
        let target = self.target.as_ref().map(|t| t.build(&grid)).transpose()?;
        let mut settings = self.optimizer;
        settings.picard = self.solver.picard;
        Ok(Experiment {
            grid,
            times,
            params: self.physics,
            numerics,
            y0,
            control,
            target,
            settings,
        })
    }
}
