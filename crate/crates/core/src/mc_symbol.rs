//! Monte-Carlo estimate of the probabilistic symbol
//! `p(x, ξ) = −lim_{t↓0} E^x (e^{i(X^T_t − x)·ξ} − 1)/t`, with `T` the exit
//! time from the max-norm ball of radius `R` around `x`.
//!
//! One simulated path serves every time of the ladder and every `ξ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cogarch::{CogarchParams, StatePoint};
use crate::error::{Error, Result};
use crate::estimator::{ladder_result, normalize_ladder, EstimatorResult, Moments};
use crate::levy::expi_m1;
use crate::parallel;
use crate::quadrature::Tolerance;
use crate::rng::path_rng;
use crate::sim::{PathState, Scratch, Simulator, TimeGrid, DEFAULT_TRUNCATION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub radius: f64,
    pub t_ladder: Vec<f64>,
    pub n_paths: u64,
    pub seed: u64,
    /// Simulation grid step; defaults to a quarter of the smallest ladder time.
    pub step: Option<f64>,
    /// Small-jump truncation for density drivers.
    pub epsilon: f64,
    pub workers: Option<usize>,
    #[serde(skip, default)]
    pub tol: Tolerance,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            radius: 1.0,
            t_ladder: vec![0.02, 0.01, 0.005],
            n_paths: 100_000,
            seed: 0,
            step: None,
            epsilon: DEFAULT_TRUNCATION,
            workers: None,
            tol: Tolerance::default(),
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<Vec<f64>> {
        if !(self.radius > 0.0) {
            return Err(Error::param("R", "R > 0", self.radius));
        }
        if self.n_paths < 2 {
            return Err(Error::param("n_paths", "n_paths >= 2", self.n_paths as f64));
        }
        normalize_ladder(&self.t_ladder)
    }

    fn step(&self, ladder: &[f64]) -> Result<f64> {
        let step = self.step.unwrap_or(ladder[ladder.len() - 1] / 4.0);
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("step", "step > 0", step));
        }
        Ok(step)
    }
}

/// Runs `cfg.n_paths` stopped paths from `x` and accumulates, per estimator,
/// the row that `row` computes from the states at the (descending) ladder times.
pub(crate) fn accumulate_ladder<F>(x: StatePoint, params: &CogarchParams, cfg: &McConfig, ladder: &[f64], n_estimators: usize, row: F) -> Result<Vec<Moments>>
where
    F: Fn(usize, &[PathState], &mut [f64]) + Sync,
{
    let sim = Simulator::new(params, cfg.epsilon, cfg.tol)?;
    let grid = TimeGrid::new(ladder[0], cfg.step(ladder)?, ladder)?;
    let k = ladder.len();
    let init = || (vec![Moments::new(2 * k); n_estimators], Scratch::default());
    let (moments, _) = parallel::run_chunked(
        cfg.n_paths,
        cfg.workers,
        init,
        |acc: &mut (Vec<Moments>, Scratch), i| {
            let mut obs = vec![PathState { dg: 0.0, v: x.v }; k];
            let mut rng = path_rng(cfg.seed, i);
            sim.run(x.v, &grid, Some(cfg.radius), &mut rng, &mut acc.1, |e| {
                if let Some(j) = e.observation {
                    obs[j] = e.post;
                }
            });
            let mut buf = vec![0.0; 2 * k];
            for (e, m) in acc.0.iter_mut().enumerate() {
                row(e, &obs, &mut buf);
                m.push(&buf);
            }
            Ok(())
        },
        |a, b| {
            for (m, o) in a.0.iter_mut().zip(b.0) {
                m.merge(o);
            }
        },
    )?;
    Ok(moments)
}

/// Symbol estimates at `x` for several frequencies, all from the same paths.
pub fn estimate_symbols(x: StatePoint, xis: &[[f64; 2]], params: &CogarchParams, cfg: &McConfig) -> Result<Vec<EstimatorResult>> {
    let ladder = cfg.validate()?;
    let moments = accumulate_ladder(x, params, cfg, &ladder, xis.len(), |e, obs, out| {
        let xi = xis[e];
        for (i, (s, t)) in obs.iter().zip(&ladder).enumerate() {
            let theta = xi[0] * s.dg + xi[1] * (s.v - x.v);
            let y = -expi_m1(theta) / *t;
            assert!(y.norm() <= 2.0 / t * (1.0 + 1e-12), "estimator sample {y} exceeds 2/t at t = {t}");
            out[2 * i] = y.re;
            out[2 * i + 1] = y.im;
        }
    })?;
    Ok(moments.iter().map(|m| ladder_result(&ladder, m, cfg.radius)).collect())
}

pub fn estimate_symbol(x: StatePoint, xi: [f64; 2], params: &CogarchParams, cfg: &McConfig) -> Result<EstimatorResult> {
    Ok(estimate_symbols(x, &[xi], params, cfg)?.remove(0))
}

/// Pass rule for comparing a Monte-Carlo estimate with a reference:
/// `|d| ≤ max_z · stderr + abs_tol` per component.
///
/// `abs_tol` absorbs the deterministic bias of the `t ↓ 0` extrapolation,
/// which matters only where the estimator has (almost) no variance, e.g. the
/// `ξ₁ = 0` frequencies of a driver without jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub max_z: f64,
    pub abs_tol: f64,
}

impl Default for Agreement {
    fn default() -> Self {
        Self { max_z: 3.0, abs_tol: 1e-4 }
    }
}

impl Agreement {
    pub fn new(max_z: f64, abs_tol: f64) -> Self {
        Self { max_z, abs_tol }
    }

    /// `|d| / (max_z · se + abs_tol)`; the rule holds iff this is at most 1.
    pub fn score(&self, d: f64, se: f64) -> f64 {
        let allowed = self.max_z * se + self.abs_tol;
        if d == 0.0 {
            0.0
        } else {
            d.abs() / allowed
        }
    }

    pub fn accepts(&self, d: Complex64, se: (f64, f64)) -> bool {
        self.score(d.re, se.0) <= 1.0 && self.score(d.im, se.1) <= 1.0
    }
}

/// Agreement of an estimate with a reference value, per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: Complex64,
    pub estimate: Complex64,
    pub stderr: (f64, f64),
    /// `|estimate − reference| / stderr` for the real and imaginary parts.
    pub z: (f64, f64),
    /// `|estimate − reference| / |reference|`.
    pub relative_error: f64,
}

/// `|d| / se`; zero when both vanish, infinite when only `se` does.
pub fn z_score(d: f64, se: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        d.abs() / se
    }
}

impl Comparison {
    pub fn new(result: &EstimatorResult, reference: Complex64) -> Self {
        let d = result.estimate - reference;
        Self {
            reference,
            estimate: result.estimate,
            stderr: result.stderr,
            z: (z_score(d.re, result.stderr.0), z_score(d.im, result.stderr.1)),
            relative_error: d.norm() / reference.norm(),
        }
    }

    pub fn difference(&self) -> Complex64 {
        self.estimate - self.reference
    }

    pub fn score(&self, rule: &Agreement) -> f64 {
        let d = self.difference();
        rule.score(d.re, self.stderr.0).max(rule.score(d.im, self.stderr.1))
    }

    pub fn within(&self, rule: &Agreement) -> bool {
        rule.accepts(self.difference(), self.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusPair {
    pub xi: [f64; 2],
    pub radii: (f64, f64),
    pub difference: Complex64,
    pub pooled_stderr: (f64, f64),
    pub z: (f64, f64),
    /// See [`Agreement::score`].
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RIndependenceReport {
    pub radii: Vec<f64>,
    /// `estimates[r][k]` is the estimate at `radii[r]` and the `k`-th frequency.
    pub estimates: Vec<Vec<EstimatorResult>>,
    pub pairs: Vec<RadiusPair>,
    /// Largest finite z-score over all pairs and components.
    pub max_z: f64,
    pub max_score: f64,
    pub passed: bool,
}

/// Re-runs the estimator for every radius (same seed) and flags pairs whose
/// difference breaks `rule` with the pooled standard error.
pub fn r_independence_check(
    x: StatePoint,
    xis: &[[f64; 2]],
    params: &CogarchParams,
    radii: &[f64],
    cfg: &McConfig,
    rule: &Agreement,
) -> Result<RIndependenceReport> {
    if radii.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least two radii, got {}", radii.len())));
    }
    let estimates = radii
        .iter()
        .map(|&r| estimate_symbols(x, xis, params, &McConfig { radius: r, ..cfg.clone() }))
        .collect::<Result<Vec<_>>>()?;
    Ok(compare_radii(radii, xis, estimates, rule))
}

/// Pairwise comparison of estimates already computed for each radius.
pub fn compare_radii(radii: &[f64], xis: &[[f64; 2]], estimates: Vec<Vec<EstimatorResult>>, rule: &Agreement) -> RIndependenceReport {
    let mut pairs = Vec::new();
    for a in 0..radii.len() {
        for b in a + 1..radii.len() {
            for (k, xi) in xis.iter().enumerate() {
                let (ea, eb) = (&estimates[a][k], &estimates[b][k]);
                let d = ea.estimate - eb.estimate;
                let pooled = (ea.stderr.0.hypot(eb.stderr.0), ea.stderr.1.hypot(eb.stderr.1));
                let score = rule.score(d.re, pooled.0).max(rule.score(d.im, pooled.1));
                pairs.push(RadiusPair {
                    xi: *xi,
                    radii: (radii[a], radii[b]),
                    difference: d,
                    pooled_stderr: pooled,
                    z: (z_score(d.re, pooled.0), z_score(d.im, pooled.1)),
                    score,
                    flagged: score > 1.0,
                });
            }
        }
    }
    RIndependenceReport {
        radii: radii.to_vec(),
        max_z: max_finite(pairs.iter().flat_map(|p| [p.z.0, p.z.1])),
        max_score: pairs.iter().map(|p| p.score).fold(0.0, f64::max),
        passed: pairs.iter().all(|p| !p.flagged),
        estimates,
        pairs,
    }
}

/// Largest finite value, or zero.
pub fn max_finite(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().filter(|v| v.is_finite()).fold(0.0, f64::max)
}
