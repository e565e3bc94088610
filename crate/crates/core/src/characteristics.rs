//! Semimartingale characteristics `(B, C, ν)` of `(G, V)` relative to the
//! truncation `h(z) = z 1{|z₁|<1} 1{|z₂|<1}`:
//! `B_t = ∫₀ᵗ (b₁, b₂)(X_s) ds`, `C_t = ∫₀ᵗ diag(e^{V_s} Q, 0) ds`,
//! `ν(ds, dz) = Ñ(X_s, dz) ds`.

use serde::{Deserialize, Serialize};

use crate::cogarch::{evolve_volatility_between_jumps, CogarchParams, StatePoint};
use crate::error::{Error, Result};
use crate::estimator::Moments;
use crate::mc_symbol::{z_score, Agreement};
use crate::parallel;
use crate::quadrature::Tolerance;
use crate::rng::path_rng;
use crate::sim::{PathState, SamplePath, Scratch, Simulator, TimeGrid, DEFAULT_TRUNCATION};
use crate::symbol::{drift_coefficients, image_rectangle_mass, in_truncation_box, ImageMeasureSpec, Rectangle};

/// Distance that test rectangles keep from the truncation boundary `|zᵢ| = 1`.
pub const BOUNDARY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DifferentialCharacteristics {
    pub drift: [f64; 2],
    pub diffusion: [[f64; 2]; 2],
    pub jump_measure: ImageMeasureSpec,
    pub quadrature_error: f64,
}

pub fn differential_characteristics(x: StatePoint, params: &CogarchParams, tol: Tolerance) -> Result<DifferentialCharacteristics> {
    let c = drift_coefficients(x.v, params, tol)?;
    Ok(DifferentialCharacteristics {
        drift: [c.b1, c.b2],
        diffusion: [[c.q11, 0.0], [0.0, 0.0]],
        jump_measure: ImageMeasureSpec::new(params, x.v),
        quadrature_error: c.quadrature_error,
    })
}

/// `B⁽¹⁾, B⁽²⁾, C₁₁` along a path, at the path's event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsPath {
    pub t: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub c11: Vec<f64>,
}

/// Trapezoid integration of the differential characteristics along `path`,
/// using left limits at jump times. A stopped path contributes nothing after
/// its stopping time.
pub fn integrate_characteristics(path: &SamplePath, params: &CogarchParams, tol: Tolerance) -> Result<CharacteristicsPath> {
    let n = path.len();
    let mut out = CharacteristicsPath {
        t: path.times.clone(),
        b1: Vec::with_capacity(n),
        b2: Vec::with_capacity(n),
        c11: Vec::with_capacity(n),
    };
    if n == 0 {
        return Ok(out);
    }
    let coef = |s: &PathState| drift_coefficients(s.v, params, tol).map(|c| [c.b1, c.b2, c.q11]);
    let stop = path.stop_time().unwrap_or(f64::INFINITY);
    let mut acc = [0.0; 3];
    let mut prev = coef(&path.offsets[0])?;
    out.b1.push(0.0);
    out.b2.push(0.0);
    out.c11.push(0.0);
    let mut jumps = path.jumps.iter().peekable();
    for i in 1..n {
        let dt = path.times[i] - path.times[i - 1];
        let jump = jumps.next_if(|j| j.index == i);
        if path.times[i - 1] < stop {
            let pre = coef(&jump.map_or(path.offsets[i], |j| j.pre))?;
            for k in 0..3 {
                acc[k] += 0.5 * (prev[k] + pre[k]) * dt;
            }
            prev = if jump.is_some() { coef(&path.offsets[i])? } else { pre };
        }
        out.b1.push(acc[0]);
        out.b2.push(acc[1]);
        out.c11.push(acc[2]);
    }
    Ok(out)
}

/// A test rectangle must be closed, avoid the origin and stay
/// [`BOUNDARY_MARGIN`] away from the lines `|zᵢ| = 1`.
pub fn validate_rectangle(rect: &Rectangle) -> Result<()> {
    if rect.contains_origin() {
        return Err(Error::InvalidArgument(format!("test rectangle {rect:?} must stay away from the origin")));
    }
    for i in 0..2 {
        for b in [-1.0, 1.0] {
            if !(rect.hi[i] <= b - BOUNDARY_MARGIN || rect.lo[i] >= b + BOUNDARY_MARGIN) {
                return Err(Error::InvalidArgument(format!(
                    "test rectangle {rect:?} is within {BOUNDARY_MARGIN} of the truncation boundary z{} = {b}",
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsConfig {
    pub n_paths: u64,
    pub seed: u64,
    pub step: f64,
    pub epsilon: f64,
    pub workers: Option<usize>,
    /// Pass threshold in standard errors.
    pub threshold: f64,
    /// Absolute slack for deterministic comparisons (time discretization).
    pub abs_tol: f64,
    #[serde(skip, default)]
    pub tol: Tolerance,
}

impl Default for CharacteristicsConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 0,
            step: 1e-3,
            epsilon: DEFAULT_TRUNCATION,
            workers: None,
            threshold: 4.0,
            abs_tol: 1e-8,
            tol: Tolerance::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    /// Mean of the path statistic.
    pub empirical: f64,
    /// Mean of its model counterpart.
    pub expected: f64,
    pub stderr: f64,
    pub z: f64,
    /// `|d| / (threshold · stderr + abs_tol)`; the line passes iff this is at most 1.
    pub score: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsReport {
    pub start: StatePoint,
    pub t: f64,
    pub n_paths: u64,
    pub drift: Vec<CheckLine>,
    pub quadratic_variation: CheckLine,
    pub jump_counts: Vec<CheckLine>,
    pub passed: bool,
}

/// Compares simulated paths with their characteristics:
///
/// * `X_t − x − Σ_{s≤t} ΔX_s 1{ΔX_s ∉ box}` against `B_t`,
/// * the realized quadratic variation of the continuous part of `G` against `C₁₁(t)`,
/// * the number of jumps `ΔX_s ∈ A` against `∫₀ᵗ Ñ(X_s, A) ds`, with the
///   Poisson standard error `√(E∫Ñ(X_s, A) ds / n)`.
pub fn empirical_characteristics_check(
    params: &CogarchParams,
    start: StatePoint,
    t: f64,
    rectangles: &[Rectangle],
    cfg: &CharacteristicsConfig,
) -> Result<CharacteristicsReport> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", "t > 0", t));
    }
    if cfg.n_paths < 2 {
        return Err(Error::param("n_paths", "n_paths >= 2", cfg.n_paths as f64));
    }
    rectangles.iter().try_for_each(validate_rectangle)?;
    let sim = Simulator::new(params, cfg.epsilon, cfg.tol)?;
    let grid = TimeGrid::new(t, cfg.step, &[])?;
    let cont_drift = sim.driver().effective_drift();
    let m = rectangles.len();
    // Row: (empirical, model) for B1, B2, C11 and each rectangle.
    let dim = 2 * (3 + m);
    let coef = |v: f64| -> Result<Vec<f64>> {
        let c = drift_coefficients(v, params, cfg.tol)?;
        let mut row = vec![c.b1, c.b2, c.q11];
        for r in rectangles {
            row.push(image_rectangle_mass(params.driver().measure(), v, params.jump_ratio(), r, cfg.tol)?);
        }
        Ok(row)
    };

    let (moments, _) = parallel::run_chunked(
        cfg.n_paths,
        cfg.workers,
        || (Moments::new(dim), Scratch::default()),
        |acc: &mut (Moments, Scratch), i| {
            let mut rng = path_rng(cfg.seed, i);
            let mut model = vec![0.0; 3 + m];
            let mut big = [0.0; 2];
            let mut qv = 0.0;
            let mut counts = vec![0.0; m];
            let mut last = PathState { dg: 0.0, v: start.v };
            let mut last_t = 0.0;
            let mut prev: Vec<f64> = Vec::new();
            let mut failure = None;
            sim.run(start.v, &grid, None, &mut rng, &mut acc.1, |e| {
                if failure.is_some() {
                    return;
                }
                let r = (|| -> Result<()> {
                    if e.t == 0.0 {
                        prev = coef(e.post.v)?;
                        return Ok(());
                    }
                    let dt = e.t - last_t;
                    let pre = coef(e.pre.v)?;
                    for k in 0..3 + m {
                        model[k] += 0.5 * (prev[k] + pre[k]) * dt;
                    }
                    let v_mid = evolve_volatility_between_jumps(last.v, 0.5 * dt, params);
                    let int_sigma = dt / 6.0 * ((0.5 * last.v).exp() + 4.0 * (0.5 * v_mid).exp() + (0.5 * e.pre.v).exp());
                    let dc = e.pre.dg - last.dg - cont_drift * int_sigma;
                    qv += dc * dc;
                    if e.dz.is_some() {
                        let z = [e.post.dg - e.pre.dg, e.post.v - e.pre.v];
                        if !in_truncation_box(z) {
                            big[0] += z[0];
                            big[1] += z[1];
                        }
                        for (k, r) in rectangles.iter().enumerate() {
                            if r.contains(z) {
                                counts[k] += 1.0;
                            }
                        }
                        prev = coef(e.post.v)?;
                    } else {
                        prev = pre;
                    }
                    last = e.post;
                    last_t = e.t;
                    Ok(())
                })();
                if let Err(err) = r {
                    failure = Some(err);
                }
            });
            if let Some(err) = failure {
                return Err(err);
            }
            let mut row = Vec::with_capacity(dim);
            row.extend([last.dg - big[0], model[0], last.v - start.v - big[1], model[1], qv, model[2]]);
            for k in 0..m {
                row.extend([counts[k], model[3 + k]]);
            }
            acc.0.push(&row);
            Ok(())
        },
        |a, b| a.0.merge(b.0),
    )?;

    let n = moments.count() as f64;
    let rule = Agreement::new(cfg.threshold, cfg.abs_tol);
    let line = |name: String, k: usize, poisson: bool| {
        let (e, x) = (moments.mean(2 * k), moments.mean(2 * k + 1));
        let stderr = if poisson {
            (x.max(0.0) / n).sqrt()
        } else {
            let var = moments.covariance(2 * k, 2 * k) + moments.covariance(2 * k + 1, 2 * k + 1) - 2.0 * moments.covariance(2 * k, 2 * k + 1);
            (var.max(0.0) / n).sqrt()
        };
        let d = e - x;
        CheckLine {
            name,
            empirical: e,
            expected: x,
            stderr,
            z: z_score(d, stderr),
            score: rule.score(d, stderr),
            passed: rule.score(d, stderr) <= 1.0,
        }
    };
    let drift = vec![line("B1".into(), 0, false), line("B2".into(), 1, false)];
    let quadratic_variation = line("C11".into(), 2, false);
    let jump_counts: Vec<CheckLine> = rectangles
        .iter()
        .enumerate()
        .map(|(k, r)| line(format!("count [{}, {}] x [{}, {}]", r.lo[0], r.hi[0], r.lo[1], r.hi[1]), 3 + k, true))
        .collect();
    let passed = drift.iter().chain(std::iter::once(&quadratic_variation)).chain(&jump_counts).all(|l| l.passed);
    Ok(CharacteristicsReport {
        start,
        t,
        n_paths: moments.count(),
        drift,
        quadratic_variation,
        jump_counts,
        passed,
    })
}
