//! Scenario configuration in TOML.
//!
//! ```toml
//! name = "example"
//! true_mode = 1            # one-based
//! horizon = 100
//! inputs = 0               # known-input dimension m
//! allow_uncertified = false
//! inf_bound_max_vertices = 1048576
//!
//! [initial]
//! x_hat = [0.0, 0.0]
//! delta = 0.5
//! # x0 = [0.1, 0.0]        # true initial state, drawn from the ball if absent
//!
//! [noise]
//! seed = 1
//! eta_w = 0.02
//! eta_v = 0.02
//!
//! [input]                  # unknown input d_k
//! kind = "bounded_random"  # or "growing_ramp" (rate, seed) or "sequence" (values)
//! bound = 0.4
//! seed = 2
//!
//! [known_input]            # optional, zero when absent; cycled
//! values = [[0.0]]
//!
//! [gains]
//! kind = "heuristic"       # or "file" (path) or "per_mode" ([[gains.modes]])
//! refine = true
//!
//! [bounds]                 # optional, for the detectability check
//! r_x = 5.0
//! r_y = 5.0
//!
//! [[modes]]
//! field = "linear_sinusoidal"   # a_hat, a_tilde; or "linear" with a
//! a_hat = [[0.3, 0.0], [0.4, -0.7]]
//! a_tilde = [[0.8, -0.4], [0.4, -0.8]]
//! g = [[0.4], [-0.1]]
//! c = [[0.8, 0.1], [0.8, 0.1]]
//! h = [[0.5], [0.5]]
//! # b, d default to zero; w to the identity; eta_w, eta_v, lipschitz per mode
//! ```
//!
//! Matrices are row-major lists of rows.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::residual::DEFAULT_MAX_VERTICES;
use crate::system::{FieldDescriptor, ModeModel, NoiseBounds, SwitchedSystem, TrajectoryBounds};

pub type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub true_mode: usize,
    pub horizon: usize,
    #[serde(default)]
    pub inputs: usize,
    #[serde(default)]
    pub allow_uncertified: bool,
    #[serde(default = "default_max_vertices")]
    pub inf_bound_max_vertices: u64,
    pub output_dir: Option<PathBuf>,
    pub initial: InitialConfig,
    pub noise: NoiseConfig,
    pub input: InputSignal,
    pub known_input: Option<KnownInput>,
    pub gains: GainsConfig,
    pub bounds: Option<BoundsConfig>,
    pub modes: Vec<ModeConfig>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_max_vertices() -> u64 {
    DEFAULT_MAX_VERTICES
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x_hat: Vec<f64>,
    pub delta: f64,
    pub x0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub seed: u64,
    pub eta_w: f64,
    pub eta_v: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSignal {
    /// Uniform in the Euclidean ball of radius `bound`.
    BoundedRandom { bound: f64, seed: u64 },
    /// `rate * k * u` for a seeded random unit vector `u`.
    GrowingRamp { rate: f64, seed: u64 },
    /// Cycled list of values.
    Sequence { values: Rows },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnownInput {
    pub values: Rows,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainsConfig {
    /// `L = Phi (C2 Phi)^+`, optionally refined by the tuner.
    Heuristic {
        #[serde(default)]
        refine: bool,
        #[serde(default)]
        tune_seed: u64,
    },
    /// TOML file holding `[[modes]]` entries as in `per_mode`.
    File { path: PathBuf },
    PerMode { modes: Vec<UserGain> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserGain {
    pub l_tilde: Rows,
    /// Positive definite `P`; the radius metric is `|S x|` with `P = S^T S`.
    pub metric_p: Option<Rows>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub modes: Vec<UserGain>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub r_x: f64,
    pub r_y: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum ModeConfig {
    LinearSinusoidal {
        a_hat: Rows,
        a_tilde: Rows,
        #[serde(flatten)]
        common: ModeCommon,
    },
    Linear {
        a: Rows,
        #[serde(flatten)]
        common: ModeCommon,
    },
}

#[derive(Clone, Debug, Deserialize)]
pub struct ModeCommon {
    pub b: Option<Rows>,
    pub g: Rows,
    pub c: Rows,
    pub d: Option<Rows>,
    pub h: Rows,
    pub w: Option<Rows>,
    pub eta_w: Option<f64>,
    pub eta_v: Option<f64>,
    pub lipschitz: Option<f64>,
}

pub fn matrix(name: &str, rows: &Rows) -> Result<Mat<f64>> {
    Mat::from_f64_rows(rows).map_err(|e| Error::Config(format!("{name}: {e}")))
}

/// Matrix with `cols` columns; an empty list of rows means zero rows.
fn sized(name: &str, rows: &Rows, cols: usize) -> Result<Mat<f64>> {
    if rows.iter().all(Vec::is_empty) {
        return Ok(Mat::zeros(rows.len(), cols));
    }
    matrix(name, rows)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        if self.true_mode == 0 || self.true_mode > self.modes.len() {
            return Err(Error::Config(format!(
                "true_mode {} out of range 1..={}",
                self.true_mode,
                self.modes.len()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let nonneg = [
            ("initial.delta", self.initial.delta),
            ("noise.eta_w", self.noise.eta_w),
            ("noise.eta_v", self.noise.eta_v),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative")));
            }
        }
        match &self.input {
            InputSignal::BoundedRandom { bound, .. } if !(*bound >= 0.0) => {
                return Err(Error::Config("input bound must be nonnegative".into()))
            }
            InputSignal::GrowingRamp { rate, .. } if !rate.is_finite() => {
                return Err(Error::Config("ramp rate must be finite".into()))
            }
            InputSignal::Sequence { values } if values.is_empty() => {
                return Err(Error::Config("input sequence is empty".into()))
            }
            _ => {}
        }
        if let Some(b) = self.bounds {
            if !(b.r_x >= 0.0 && b.r_y >= 0.0) {
                return Err(Error::Config("trajectory bounds must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn true_mode_index(&self) -> usize {
        self.true_mode - 1
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn build_system(&self) -> Result<SwitchedSystem<f64>> {
        let mut modes = Vec::with_capacity(self.modes.len());
        let mut noise = Vec::with_capacity(self.modes.len());
        for (q, mc) in self.modes.iter().enumerate() {
            let ctx = |m: &str| format!("mode {} {m}", q + 1);
            let (field, common) = match mc {
                ModeConfig::LinearSinusoidal { a_hat, a_tilde, common } => (
                    FieldDescriptor::LinearSinusoidal {
                        a_hat: matrix(&ctx("a_hat"), a_hat)?,
                        a_tilde: matrix(&ctx("a_tilde"), a_tilde)?,
                    },
                    common,
                ),
                ModeConfig::Linear { a, common } => {
                    (FieldDescriptor::Linear { a: matrix(&ctx("a"), a)? }, common)
                }
            };
            let n = field.dim();
            let c = matrix(&ctx("c"), &common.c)?;
            let l = c.rows();
            let g = matrix(&ctx("g"), &common.g)?;
            let p = g.cols();
            let b = match &common.b {
                Some(r) => sized(&ctx("b"), r, self.inputs)?,
                None => Mat::zeros(n, self.inputs),
            };
            let d = match &common.d {
                Some(r) => sized(&ctx("d"), r, self.inputs)?,
                None => Mat::zeros(l, self.inputs),
            };
            let h = sized(&ctx("h"), &common.h, p)?;
            let w = common.w.as_ref().map(|r| matrix(&ctx("w"), r)).transpose()?;
            let mode = ModeModel::new(field, b, g, c, d, h, w, common.lipschitz)
                .map_err(|e| Error::Config(format!("mode {}: {e}", q + 1)))?;
            modes.push(mode);
            noise.push(NoiseBounds {
                eta_w: common.eta_w.unwrap_or(self.noise.eta_w),
                eta_v: common.eta_v.unwrap_or(self.noise.eta_v),
            });
        }
        let bounds = self.bounds.map(|b| TrajectoryBounds { r_x: b.r_x, r_y: b.r_y });
        SwitchedSystem::new(modes, noise, self.initial.x_hat.clone(), self.initial.delta, bounds)
    }

    /// User gains for every mode, from `file` or `per_mode`.
    pub fn user_gains(&self) -> Result<Option<Vec<UserGain>>> {
        let list = match &self.gains {
            GainsConfig::Heuristic { .. } => return Ok(None),
            GainsConfig::PerMode { modes } => modes.clone(),
            GainsConfig::File { path } => {
                let text = std::fs::read_to_string(self.resolve(path))?;
                let f: GainsFile = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
                f.modes
            }
        };
        if list.len() != self.modes.len() {
            return Err(Error::Config(format!(
                "{} gain entries for {} modes",
                list.len(),
                self.modes.len()
            )));
        }
        Ok(Some(list))
    }
}
