//! Experiment configuration files (TOML).

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use cogarch_core::characteristics::validate_rectangle;
use cogarch_core::levy::JumpDensity;
use cogarch_core::{Atom, CogarchParams, DensityFamily, Error as CoreError, LevyMeasure, LevyTriplet, Rectangle, StatePoint, Tolerance};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grids: GridSpec,
    #[serde(default)]
    pub mc: MonteCarloSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub characteristics: CharacteristicsSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub beta: f64,
    pub delta: f64,
    pub lambda: f64,
    pub driver: DriverSpec,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSpec {
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub gaussian: f64,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    pub density: Option<DensitySpec>,
}

// `deny_unknown_fields` cannot be combined with `flatten`; the family enum rejects strays itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensitySpec {
    pub y_min: f64,
    pub y_max: f64,
    #[serde(flatten)]
    pub family: DensityFamily,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Start points `(g, v)`.
    #[serde(default = "default_starts")]
    pub starts: Vec<[f64; 2]>,
    /// Explicit frequencies.
    #[serde(default)]
    pub xi: Vec<[f64; 2]>,
    /// Values whose Cartesian square is appended to `xi`.
    #[serde(default)]
    pub xi_axis: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            starts: default_starts(),
            xi: Vec::new(),
            xi_axis: Vec::new(),
        }
    }
}

fn default_starts() -> Vec<[f64; 2]> {
    vec![[0.0, 0.0]]
}

impl GridSpec {
    pub fn frequencies(&self) -> Vec<[f64; 2]> {
        let mut out = self.xi.clone();
        for &a in &self.xi_axis {
            for &b in &self.xi_axis {
                out.push([a, b]);
            }
        }
        out
    }

    pub fn start_points(&self) -> Vec<StatePoint> {
        self.starts.iter().map(|s| StatePoint::from(*s)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    #[serde(default = "default_mc_paths")]
    pub n_paths: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ladder")]
    pub t_ladder: Vec<f64>,
    #[serde(rename = "R_list", default = "default_radii")]
    pub r_list: Vec<f64>,
    pub workers: Option<usize>,
    /// Event-grid spacing for the symbol estimator; defaults to a quarter of the smallest ladder time.
    pub step: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            n_paths: default_mc_paths(),
            seed: 0,
            t_ladder: default_ladder(),
            r_list: default_radii(),
            workers: None,
            step: None,
            epsilon: default_epsilon(),
        }
    }
}

fn default_mc_paths() -> u64 {
    100_000
}

fn default_ladder() -> Vec<f64> {
    vec![0.02, 0.01, 0.005]
}

fn default_radii() -> Vec<f64> {
    vec![1.0]
}

fn default_epsilon() -> f64 {
    cogarch_core::sim::DEFAULT_TRUNCATION
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: default_abs_tol(),
            rel_tol: default_rel_tol(),
        }
    }
}

fn default_abs_tol() -> f64 {
    Tolerance::default().abs
}

fn default_rel_tol() -> f64 {
    Tolerance::default().rel
}

impl QuadratureSpec {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            abs: self.abs_tol,
            rel: self.rel_tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default = "default_horizon")]
    pub t_max: f64,
    #[serde(default = "default_sim_step")]
    pub step: f64,
    /// Paths exported per start point.
    #[serde(default = "one")]
    pub n_paths: u64,
    /// Stop each path on leaving the max-norm ball of this radius around its start.
    pub radius: Option<f64>,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            t_max: default_horizon(),
            step: default_sim_step(),
            n_paths: 1,
            radius: None,
        }
    }
}

fn default_horizon() -> f64 {
    1.0
}

fn default_sim_step() -> f64 {
    0.01
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Largest accepted |closed − MC| / stderr per component.
    #[serde(default = "three")]
    pub max_z: f64,
    /// Absolute allowance for extrapolation bias, added to `max_z` stderr.
    #[serde(default = "default_bias_tol")]
    pub abs_tol: f64,
    /// Largest accepted relative error where |p| exceeds `relative_floor`; unchecked when absent.
    pub max_relative_error: Option<f64>,
    #[serde(default = "default_relative_floor")]
    pub relative_floor: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            max_z: 3.0,
            abs_tol: default_bias_tol(),
            max_relative_error: None,
            relative_floor: default_relative_floor(),
        }
    }
}

fn three() -> f64 {
    3.0
}

fn default_bias_tol() -> f64 {
    cogarch_core::Agreement::default().abs_tol
}

fn default_relative_floor() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: [f64; 2],
    pub width: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "default_bumps")]
    pub bumps: Vec<BumpSpec>,
    #[serde(default = "half")]
    pub t: f64,
    #[serde(default = "default_sim_step")]
    pub step: f64,
    /// Residual paths; falls back to `mc.n_paths`.
    pub n_paths: Option<u64>,
    #[serde(default = "three")]
    pub max_z: f64,
    /// Tolerance of the cutoff-Fourier consistency check against the closed-form symbol.
    #[serde(default = "default_consistency_tol")]
    pub consistency_tol: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            bumps: default_bumps(),
            t: 0.5,
            step: default_sim_step(),
            n_paths: None,
            max_z: 3.0,
            consistency_tol: default_consistency_tol(),
        }
    }
}

fn default_bumps() -> Vec<BumpSpec> {
    vec![
        BumpSpec {
            center: [0.0, 0.0],
            width: 0.8,
            amplitude: 1.0,
        },
        BumpSpec {
            center: [0.4, -0.5],
            width: 0.6,
            amplitude: 1.0,
        },
        BumpSpec {
            center: [-0.3, 0.8],
            width: 1.2,
            amplitude: 2.0,
        },
    ]
}

fn half() -> f64 {
    0.5
}

fn default_consistency_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsSpec {
    #[serde(default = "default_horizon")]
    pub t: f64,
    #[serde(default = "default_char_step")]
    pub step: f64,
    #[serde(default = "default_char_paths")]
    pub n_paths: u64,
    #[serde(default)]
    pub rectangles: Vec<Rectangle>,
    #[serde(default = "four")]
    pub max_z: f64,
    #[serde(default = "default_char_abs_tol")]
    pub abs_tol: f64,
    /// Paths whose integrated characteristics are exported per start point.
    #[serde(default = "one")]
    pub export_paths: u64,
}

impl Default for CharacteristicsSpec {
    fn default() -> Self {
        Self {
            t: 1.0,
            step: default_char_step(),
            n_paths: default_char_paths(),
            rectangles: Vec::new(),
            max_z: 4.0,
            abs_tol: default_char_abs_tol(),
            export_paths: 1,
        }
    }
}

fn default_char_step() -> f64 {
    1e-3
}

fn default_char_paths() -> u64 {
    10_000
}

fn four() -> f64 {
    4.0
}

fn default_char_abs_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// A parsed config together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: String,
}

impl LoadedConfig {
    pub fn parse(source: &str, origin: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(source).map_err(|e| {
            let at = e.span().map(|s| format!(" (line {})", line_of(source, s.start))).unwrap_or_default();
            anyhow!("{origin}{at}: {}", e.message())
        })?;
        let loaded = Self {
            config,
            source: source.to_owned(),
        };
        loaded.validate().with_context(|| format!("invalid config {origin}"))?;
        Ok(loaded)
    }

    /// Checks every module precondition so that no computation starts on a bad config.
    fn validate(&self) -> Result<()> {
        let c = &self.config;
        self.params().map_err(|e| self.locate(e))?;
        let positive = |name: &str, v: f64| -> Result<()> {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{}`{name}` must be finite and > 0 (got {v})", self.line_prefix(name));
            }
            Ok(())
        };
        for s in &c.grids.starts {
            if !(s[0].is_finite() && s[1].is_finite()) {
                bail!("{}start {s:?} must be finite", self.line_prefix("starts"));
            }
        }
        for xi in c.grids.frequencies() {
            if !(xi[0].is_finite() && xi[1].is_finite()) {
                bail!("{}frequency {xi:?} must be finite", self.line_prefix("xi"));
            }
        }
        if c.mc.n_paths < 2 {
            bail!("{}`n_paths` must be >= 2 (got {})", self.line_prefix("n_paths"), c.mc.n_paths);
        }
        if c.mc.t_ladder.is_empty() {
            bail!("{}`t_ladder` must not be empty", self.line_prefix("t_ladder"));
        }
        for &t in &c.mc.t_ladder {
            positive("t_ladder", t)?;
        }
        if c.mc.r_list.is_empty() {
            bail!("{}`R_list` must not be empty", self.line_prefix("R_list"));
        }
        for &r in &c.mc.r_list {
            positive("R_list", r)?;
        }
        if let Some(step) = c.mc.step {
            positive("step", step)?;
        }
        positive("epsilon", c.mc.epsilon)?;
        if c.mc.epsilon >= 1.0 {
            bail!("{}`epsilon` must satisfy 0 < epsilon < 1 (got {})", self.line_prefix("epsilon"), c.mc.epsilon);
        }
        if c.mc.workers == Some(0) {
            bail!("{}`workers` must be >= 1", self.line_prefix("workers"));
        }
        positive("abs_tol", c.quadrature.abs_tol)?;
        positive("rel_tol", c.quadrature.rel_tol)?;
        positive("t_max", c.simulate.t_max)?;
        positive("step", c.simulate.step)?;
        if let Some(r) = c.simulate.radius {
            positive("radius", r)?;
        }
        positive("max_z", c.verify.max_z)?;
        if !(c.verify.abs_tol >= 0.0 && c.verify.abs_tol.is_finite()) {
            bail!("{}`abs_tol` must be finite and >= 0 (got {})", self.line_prefix("abs_tol"), c.verify.abs_tol);
        }
        if let Some(r) = c.verify.max_relative_error {
            positive("max_relative_error", r)?;
        }
        for b in &c.generator.bumps {
            positive("width", b.width)?;
        }
        positive("t", c.generator.t)?;
        positive("step", c.generator.step)?;
        positive("consistency_tol", c.generator.consistency_tol)?;
        positive("t", c.characteristics.t)?;
        positive("step", c.characteristics.step)?;
        for r in &c.characteristics.rectangles {
            Rectangle::new(r.lo, r.hi)
                .and_then(|r| validate_rectangle(&r))
                .map_err(|e| anyhow!("{}{e}", self.line_prefix("rectangles")))?;
        }
        Ok(())
    }

    pub fn params(&self) -> cogarch_core::Result<CogarchParams> {
        let m = &self.config.model;
        let d = &m.driver;
        let measure = match (&d.density, d.atoms.is_empty()) {
            (Some(_), false) => return Err(CoreError::InvalidMeasure("give either `atoms` or `density`, not both".into())),
            (Some(spec), true) => LevyMeasure::density(JumpDensity::from_family(spec.family.clone(), (spec.y_min, spec.y_max))?)?,
            (None, false) => LevyMeasure::atomic(d.atoms.clone())?,
            (None, true) => LevyMeasure::zero(),
        };
        measure.validate(self.config.quadrature.tolerance())?;
        let driver = LevyTriplet::new(d.drift, d.gaussian, measure)?;
        CogarchParams::new(m.beta, m.delta, m.lambda, driver)
    }

    fn locate(&self, e: CoreError) -> anyhow::Error {
        let prefix = match &e {
            CoreError::InvalidParameter { name, .. } => self.line_prefix(name),
            _ => String::new(),
        };
        anyhow!("{prefix}{e}")
    }

    /// `"line N: "` for the first assignment to `key` in the source, if any.
    fn line_prefix(&self, key: &str) -> String {
        self.source
            .lines()
            .position(|l| {
                let l = l.trim_start();
                l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
            })
            .map(|i| format!("line {}: ", i + 1))
            .unwrap_or_default()
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nbeta = 1.0\ndelta = 0.5\nlambda = 0.25\n[model.driver]\ngaussian = 1.0\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = LoadedConfig::parse(MINIMAL, "test").unwrap();
        assert_eq!(c.config.mc.t_ladder, vec![0.02, 0.01, 0.005]);
        assert_eq!(c.config.grids.start_points(), vec![StatePoint::new(0.0, 0.0)]);
        assert_eq!(c.params().unwrap().driver().gaussian(), 1.0);
    }

    #[test]
    fn delta_violation_names_constraint_and_line() {
        let src = MINIMAL.replace("delta = 0.5", "delta = 1.5");
        let msg = format!("{:#}", LoadedConfig::parse(&src, "test").unwrap_err());
        assert!(msg.contains("0 < delta < 1"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = format!("{MINIMAL}[mc]\nnpaths = 10\n");
        let msg = format!("{:#}", LoadedConfig::parse(&src, "test").unwrap_err());
        assert!(msg.contains("unknown field"), "{msg}");
        assert!(msg.contains("line 8"), "{msg}");
    }

    #[test]
    fn xi_axis_expands_to_square() {
        let src = format!("{MINIMAL}[grids]\nxi = [[9.0, 9.0]]\nxi_axis = [-1.0, 1.0]\n");
        let c = LoadedConfig::parse(&src, "test").unwrap();
        assert_eq!(
            c.config.grids.frequencies(),
            vec![[9.0, 9.0], [-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]
        );
    }

    #[test]
    fn density_driver_parses() {
        let src = "[model]\nbeta = 1.0\ndelta = 0.5\nlambda = 0.25\n[model.driver.density]\nfamily = \"tempered_stable\"\n\
                   c_neg = 1.0\nc_pos = 1.0\ndecay_neg = 2.0\ndecay_pos = 2.0\nalpha = 0.5\ny_min = -30.0\ny_max = 30.0\n";
        let c = LoadedConfig::parse(src, "test").unwrap();
        assert!(!c.params().unwrap().driver().measure().is_zero());
    }

    #[test]
    fn rectangle_through_origin_is_rejected() {
        let src = format!("{MINIMAL}[[characteristics.rectangles]]\nlo = [-0.5, -0.5]\nhi = [0.5, 0.5]\n");
        assert!(LoadedConfig::parse(&src, "test").is_err());
    }
}
