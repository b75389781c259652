//! Experiment configuration: a TOML document with a fixed key schema.
//!
//! Every section has defaults, so a file only needs the keys it changes.
//! [`ExperimentConfig::validate`] checks the cross-module preconditions up
//! front and names the offending key in its error.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nlkpp::hj::Flux;
use nlkpp::media::{self, MediaContext};
use nlkpp::{build_weights, CoefficientField, Error, Kernel, KernelProfile, Point, Region, StencilWeights};

/// A validation failure tied to a key path such as `cell.lambdas`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError { path: path.into(), message: message.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn check(ok: bool, path: &str, message: impl fmt::Display) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(path, message))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory. Not part of the config hash.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub media: MediaSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub cell: CellSpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub vi: ViSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default)]
    pub converge: ConvergeSpec,
    #[serde(default)]
    pub validate: ValidateSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: default_seeds(),
            output: default_output(),
            media: MediaSpec::default(),
            kernel: KernelSpec::default(),
            cell: CellSpec::default(),
            simulate: SimulateSpec::default(),
            vi: ViSpec::default(),
            metric: MetricSpec::default(),
            converge: ConvergeSpec::default(),
            validate: ValidateSpec::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediaSpec {
    pub dimension: usize,
    /// Torus side of the medium.
    pub period_length: f64,
    pub kappa: f64,
    pub generator: GeneratorSpec,
}

impl Default for MediaSpec {
    fn default() -> Self {
        MediaSpec { dimension: 1, period_length: 16.0, kappa: 0.1, generator: GeneratorSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Constant { c0: f64 },
    Periodic { base: f64, amplitude: f64, period: f64 },
    Checkerboard { cell: f64, c_lo: f64, c_hi: f64, sigma: f64 },
    PoissonBumps { intensity: f64, base: f64, amplitude: f64, bump_radius: f64 },
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec::Checkerboard { cell: 1.0, c_lo: 0.6, c_hi: 1.0, sigma: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    pub profile: KernelProfile,
    pub r_bar: f64,
    pub j_bar: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { profile: KernelProfile::UniformBall, r_bar: 1.0, j_bar: 1.0 }
    }
}

/// Cell problem and `H̄` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellSpec {
    pub h: f64,
    /// Torus side; defaults to the medium period.
    pub torus: Option<f64>,
    /// Strictly decreasing damping parameters, at least three.
    pub lambdas: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Slope axis `[p_lo, p_hi]` with `p_points` nodes, shared by every axis.
    pub p_lo: f64,
    pub p_hi: f64,
    pub p_points: usize,
}

impl Default for CellSpec {
    fn default() -> Self {
        CellSpec {
            h: 0.0625,
            torus: None,
            lambdas: vec![0.2, 0.1, 0.05, 0.025],
            tol: 1e-7,
            max_iter: 200_000,
            p_lo: -4.0,
            p_hi: 4.0,
            p_points: 33,
        }
    }
}

/// Direct simulation of the (optionally rescaled) KPP equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSpec {
    pub h: f64,
    /// Torus side, starting at the origin.
    pub extent: f64,
    pub epsilon: f64,
    pub t_end: f64,
    /// Time step as a fraction of the stability bound.
    pub cfl_fraction: f64,
    pub snapshot_interval: f64,
    pub level: f64,
    pub speed_window: [f64; 2],
    pub initial: Region,
    pub ramp: f64,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        SimulateSpec {
            h: 0.05,
            extent: 200.0,
            epsilon: 1.0,
            t_end: 80.0,
            cfl_fraction: 0.01,
            snapshot_interval: 1.0,
            level: 0.5,
            speed_window: [40.0, 80.0],
            initial: Region::Ball { center: [100.0, 100.0], radius: 2.0 },
            ramp: 0.5,
        }
    }
}

/// Effective variational inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViSpec {
    pub h: f64,
    /// The grid covers `[-half_width, half_width]` on each axis.
    pub half_width: f64,
    pub t_end: f64,
    pub cfl_fraction: f64,
    pub flux: Flux,
    pub snapshot_interval: f64,
    pub speed_window: [f64; 2],
    pub g0: Region,
    /// Precomputed table; tabulated from the cell section when absent.
    pub table: Option<PathBuf>,
}

impl Default for ViSpec {
    fn default() -> Self {
        ViSpec {
            h: 0.025,
            half_width: 12.0,
            t_end: 10.0,
            cfl_fraction: 1.0,
            flux: Flux::Godunov,
            snapshot_interval: 0.5,
            speed_window: [4.0, 10.0],
            g0: Region::Box { lo: [-1.0, -1.0], hi: [1.0, 1.0] },
            table: None,
        }
    }
}

/// Metric problem and duality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSpec {
    pub h: f64,
    pub r_dom: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub p: Point,
    /// Levels `μ = H̄(p) - offset`.
    pub mu_offsets: Vec<f64>,
    pub directions: Vec<Point>,
    pub t_list: Vec<f64>,
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec {
            h: 0.0625,
            r_dom: 36.0,
            tol: 1e-9,
            max_sweeps: 100_000,
            p: [0.0, 0.0],
            mu_offsets: vec![1.0],
            directions: vec![[1.0, 0.0], [-1.0, 0.0]],
            t_list: vec![8.0, 16.0, 24.0, 32.0],
        }
    }
}

/// Front convergence along a decreasing sequence of scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSpec {
    pub epsilons: Vec<f64>,
    pub t_star: f64,
    pub h_macro: f64,
    pub h_vi: f64,
    pub half_width: f64,
    pub cfl_fraction: f64,
    pub g0: Region,
    /// Ramp width of the initial datum; defaults to `h_macro`.
    pub ramp: Option<f64>,
    /// Outer probes; defaults to quarter points between `G0` and the edge
    /// along the first axis.
    pub probes: Option<Vec<Point>>,
}

impl Default for ConvergeSpec {
    fn default() -> Self {
        ConvergeSpec {
            epsilons: vec![0.4, 0.2, 0.1],
            t_star: 1.0,
            h_macro: 0.0125,
            h_vi: 0.0125,
            half_width: 6.0,
            cfl_fraction: 0.5,
            g0: Region::Box { lo: [-1.0, -1.0], hi: [1.0, 1.0] },
            ramp: None,
            probes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSpec {
    /// Randomized trials per comparison check.
    pub trials: usize,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        ValidateSpec { trials: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative agreement of the fitted radial limit with the dual formula
    /// in a constant medium.
    pub duality_homogeneous: f64,
    /// Relative agreement at the largest `t` in a random medium.
    pub duality_random: f64,
    /// Relative agreement of simulated, VI and predicted speeds.
    pub speed: f64,
    /// Lower bound on `u^ε` at the interior probe.
    pub interior_probe: f64,
    /// Level of `φ` below which outer probes are placed.
    pub probe_phi: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            duality_homogeneous: 0.03,
            duality_random: 0.07,
            speed: 0.05,
            interior_probe: 0.99,
            probe_phi: -0.2,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))
    }

    /// SHA-256 of the canonical JSON form with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn context(&self) -> MediaContext {
        MediaContext {
            dimension: self.media.dimension,
            period_length: self.media.period_length,
            kappa: self.media.kappa,
            j_bar: self.kernel.j_bar,
        }
    }

    pub fn kernel(&self) -> Result<Kernel, ConfigError> {
        Kernel::new(self.media.dimension, self.kernel.profile, self.kernel.r_bar, self.kernel.j_bar)
            .map_err(|e| ConfigError::new("kernel", e))
    }

    pub fn field(&self, seed: u64) -> Result<CoefficientField, ConfigError> {
        let ctx = self.context();
        let made = match self.media.generator {
            GeneratorSpec::Constant { c0 } => media::make_constant(&ctx, c0),
            GeneratorSpec::Periodic { base, amplitude, period } => media::make_periodic(&ctx, base, amplitude, period),
            GeneratorSpec::Checkerboard { cell, c_lo, c_hi, sigma } => {
                media::make_checkerboard(&ctx, seed, cell, c_lo, c_hi, sigma)
            }
            GeneratorSpec::PoissonBumps { intensity, base, amplitude, bump_radius } => {
                media::make_poisson_bumps(&ctx, seed, intensity, base, amplitude, bump_radius)
            }
        };
        made.map_err(|e| {
            let path = match e {
                Error::InvalidParam(_) | Error::OscillationViolation { .. } => "media.generator",
                _ => "media",
            };
            ConfigError::new(path, e)
        })
    }

    pub fn fields(&self) -> Result<Vec<CoefficientField>, ConfigError> {
        self.seeds.iter().map(|s| self.field(*s)).collect()
    }

    pub fn weights(&self, h: f64, path: &str) -> Result<StencilWeights, ConfigError> {
        build_weights(&self.kernel()?, h).map_err(|e| ConfigError::new(path, e))
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.media.generator, GeneratorSpec::Constant { .. })
    }

    pub fn cell_torus(&self) -> f64 {
        self.cell.torus.unwrap_or(self.media.period_length)
    }

    /// Checks every cross-module precondition without running a solver.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(!self.seeds.is_empty(), "seeds", "at least one seed is required")?;
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        check(seen.len() == self.seeds.len(), "seeds", "seeds must be distinct")?;
        let kernel = self.kernel()?;
        let fields = self.fields()?;
        let c_max = fields.iter().map(|f| f.c_max).fold(0.0, f64::max);
        self.validate_cell(&kernel)?;
        self.validate_simulate(&kernel, c_max)?;
        self.validate_vi()?;
        self.validate_metric(&kernel)?;
        self.validate_converge(&kernel)?;
        check(self.validate.trials > 0, "validate.trials", "at least one trial is required")?;
        let t = &self.tolerances;
        for (v, path) in [
            (t.duality_homogeneous, "tolerances.duality_homogeneous"),
            (t.duality_random, "tolerances.duality_random"),
            (t.speed, "tolerances.speed"),
        ] {
            check(v > 0.0, path, "tolerance must be positive")?;
        }
        check(t.interior_probe > 0.0 && t.interior_probe < 1.0, "tolerances.interior_probe", "must lie in (0, 1)")?;
        check(t.probe_phi < 0.0, "tolerances.probe_phi", "must be negative")?;
        Ok(())
    }

    fn validate_cell(&self, kernel: &Kernel) -> Result<(), ConfigError> {
        let c = &self.cell;
        self.weights(c.h, "cell.h")?;
        let torus = self.cell_torus();
        let n = torus / c.h;
        check((n - n.round()).abs() < 1e-9, "cell.torus", format!("side {torus} is not a multiple of h = {}", c.h))?;
        check(torus >= 4.0 * kernel.r_bar, "cell.torus", format!("side {torus} is below 4 r_bar"))?;
        let ratio = torus / self.media.period_length;
        check(
            (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0,
            "cell.torus",
            format!("side {torus} is not a multiple of the medium period {}", self.media.period_length),
        )?;
        check(c.lambdas.len() >= 3, "cell.lambdas", "at least three values are required")?;
        check(
            c.lambdas.iter().all(|l| *l > 0.0) && c.lambdas.windows(2).all(|w| w[1] < w[0]),
            "cell.lambdas",
            "values must be positive and strictly decreasing",
        )?;
        check(c.tol > 0.0, "cell.tol", "must be positive")?;
        check(c.max_iter > 0, "cell.max_iter", "must be positive")?;
        check(c.p_points >= 2, "cell.p_points", "the slope grid needs at least two nodes")?;
        check(c.p_hi > c.p_lo, "cell.p_hi", "must exceed cell.p_lo")?;
        check((c.p_lo + c.p_hi).abs() < 1e-12, "cell.p_lo", "the slope grid must be symmetric about 0")?;
        Ok(())
    }

    fn validate_simulate(&self, kernel: &Kernel, c_max: f64) -> Result<(), ConfigError> {
        let s = &self.simulate;
        check(s.epsilon > 0.0, "simulate.epsilon", "must be positive")?;
        check(
            s.epsilon * kernel.r_bar / s.h >= 8.0 - 1e-9,
            "simulate.h",
            format!("spacing {} resolves epsilon * r_bar with fewer than 8 nodes", s.h),
        )?;
        self.weights(s.h / s.epsilon, "simulate.h")?;
        check(
            s.extent > 0.0 && ((s.extent / s.h) - (s.extent / s.h).round()).abs() < 1e-9,
            "simulate.extent",
            "must be a positive multiple of h",
        )?;
        self.cfl("simulate.cfl_fraction", s.cfl_fraction, s.epsilon, c_max)?;
        check(s.t_end > 0.0, "simulate.t_end", "must be positive")?;
        check(s.snapshot_interval > 0.0, "simulate.snapshot_interval", "must be positive")?;
        check(s.level > 0.0 && s.level < 1.0, "simulate.level", "must lie in (0, 1)")?;
        check(
            s.speed_window[0] >= 0.0 && s.speed_window[1] > s.speed_window[0] && s.speed_window[1] <= s.t_end,
            "simulate.speed_window",
            "must be an increasing interval inside [0, t_end]",
        )?;
        check(s.ramp > 0.0, "simulate.ramp", "must be positive")?;
        Ok(())
    }

    fn cfl(&self, path: &str, fraction: f64, epsilon: f64, c_max: f64) -> Result<(), ConfigError> {
        check(fraction > 0.0, path, "must be positive")?;
        if fraction > 1.0 {
            let bound = nlkpp::kpp::CFL_THETA * epsilon / (self.kernel.j_bar + c_max);
            return Err(ConfigError::new(path, Error::CflViolation { dt: fraction * bound, bound }));
        }
        Ok(())
    }

    fn validate_vi(&self) -> Result<(), ConfigError> {
        let v = &self.vi;
        check(v.h > 0.0, "vi.h", "must be positive")?;
        check(v.half_width > 2.0 * v.h, "vi.half_width", "must span several cells")?;
        check(v.t_end > 0.0, "vi.t_end", "must be positive")?;
        if !(v.cfl_fraction > 0.0 && v.cfl_fraction <= 1.0) {
            return Err(ConfigError::new(
                "vi.cfl_fraction",
                format!("time step fraction {} of the monotone bound must lie in (0, 1]", v.cfl_fraction),
            ));
        }
        check(
            v.flux == Flux::LaxFriedrichs || self.media.dimension == 1,
            "vi.flux",
            "the godunov flux needs a one-dimensional medium",
        )?;
        check(v.snapshot_interval > 0.0, "vi.snapshot_interval", "must be positive")?;
        check(
            v.speed_window[0] >= 0.0 && v.speed_window[1] > v.speed_window[0] && v.speed_window[1] <= v.t_end,
            "vi.speed_window",
            "must be an increasing interval inside [0, t_end]",
        )?;
        Ok(())
    }

    fn validate_metric(&self, kernel: &Kernel) -> Result<(), ConfigError> {
        let m = &self.metric;
        self.weights(m.h, "metric.h")?;
        check(m.r_dom >= 8.0, "metric.r_dom", "must be at least 8")?;
        check(m.tol > 0.0, "metric.tol", "must be positive")?;
        check(!m.mu_offsets.is_empty(), "metric.mu_offsets", "at least one level is required")?;
        for (k, o) in m.mu_offsets.iter().enumerate() {
            check(*o > 0.0, &format!("metric.mu_offsets[{k}]"), "offsets must be positive")?;
        }
        check(!m.directions.is_empty(), "metric.directions", "at least one direction is required")?;
        for (k, e) in m.directions.iter().enumerate() {
            let path = format!("metric.directions[{k}]");
            check(*e != [0.0, 0.0], &path, "the zero direction has no radial limit")?;
            check(
                self.media.dimension == 2 || e[1] == 0.0,
                &path,
                "one-dimensional directions have no second component",
            )?;
        }
        check(
            !m.t_list.is_empty() && m.t_list[0] > 0.0 && m.t_list.windows(2).all(|w| w[1] > w[0]),
            "metric.t_list",
            "must be positive and strictly increasing",
        )?;
        let t_max = m.t_list[m.t_list.len() - 1];
        check(
            t_max <= m.r_dom - 2.0 * kernel.r_bar,
            "metric.t_list",
            format!("largest t = {t_max} exceeds r_dom - 2 r_bar"),
        )?;
        Ok(())
    }

    fn validate_converge(&self, kernel: &Kernel) -> Result<(), ConfigError> {
        let c = &self.converge;
        check(!c.epsilons.is_empty(), "converge.epsilons", "at least one scale is required")?;
        check(
            c.epsilons.iter().all(|e| *e > 0.0) && c.epsilons.windows(2).all(|w| w[1] < w[0]),
            "converge.epsilons",
            "scales must be positive and strictly decreasing",
        )?;
        let eps_min = c.epsilons[c.epsilons.len() - 1];
        check(
            eps_min * kernel.r_bar / c.h_macro >= 8.0 - 1e-9,
            "converge.h_macro",
            format!("spacing {} resolves {eps_min} * r_bar with fewer than 8 nodes", c.h_macro),
        )?;
        for e in &c.epsilons {
            self.weights(c.h_macro / e, "converge.h_macro")?;
        }
        check(c.h_vi > 0.0, "converge.h_vi", "must be positive")?;
        check(c.t_star > 0.0, "converge.t_star", "must be positive")?;
        let n = 2.0 * c.half_width / c.h_macro;
        check(
            c.half_width > 0.0 && (n - n.round()).abs() < 1e-9,
            "converge.half_width",
            "2 half_width must be a multiple of h_macro",
        )?;
        let c_max = self.fields()?.iter().map(|f| f.c_max).fold(0.0, f64::max);
        self.cfl("converge.cfl_fraction", c.cfl_fraction, eps_min, c_max)?;
        check(c.ramp.is_none_or(|r| r > 0.0), "converge.ramp", "must be positive")?;
        Ok(())
    }
}
