//! Extended generator of `(G, V)` on `C_b²(ℝ²)`:
//!
//! ```text
//! Gu(x) = b₁ ∂₁u + b₂ ∂₂u + ½ e^{x₂} Q ∂₁∂₁u
//!         + ∫ (u(x + z) − u(x) − z·∇u(x) 1{|z₁|<1} 1{|z₂|<1}) Ñ(x, dz)
//! ```
//!
//! together with two Monte-Carlo checks: the small-time semigroup derivative
//! and the martingale residual `u(X_t) − u(x) − ∫₀ᵗ Gu(X_s) ds`.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::cogarch::{CogarchParams, StatePoint};
use crate::error::{Error, Result};
use crate::estimator::{ladder_result, normalize_ladder, EstimatorResult, Moments};
use crate::mc_symbol::{accumulate_ladder, McConfig};
use crate::parallel;
use crate::quadrature::Tolerance;
use crate::rng::{path_rng, PathRng};
use crate::sim::{PathState, Scratch, Simulator, TimeGrid};
use crate::symbol::{drift_coefficients, in_truncation_box, integrate_image};

/// A bounded `C²` function with analytic first derivatives and `∂₁∂₁u`.
pub trait TestFunction: Send + Sync {
    fn value(&self, x: [f64; 2]) -> f64;
    fn gradient(&self, x: [f64; 2]) -> [f64; 2];
    fn hess11(&self, x: [f64; 2]) -> f64;
    /// Beyond this max-norm distance from its center the function is constant.
    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }
}

impl<T: TestFunction + ?Sized> TestFunction for Box<T> {
    fn value(&self, x: [f64; 2]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        (**self).gradient(x)
    }
    fn hess11(&self, x: [f64; 2]) -> f64 {
        (**self).hess11(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
}

impl<T: TestFunction + ?Sized> TestFunction for &T {
    fn value(&self, x: [f64; 2]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        (**self).gradient(x)
    }
    fn hess11(&self, x: [f64; 2]) -> f64 {
        (**self).hess11(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn value(&self, _: [f64; 2]) -> f64 {
        self.0
    }
    fn gradient(&self, _: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn hess11(&self, _: [f64; 2]) -> f64 {
        0.0
    }
    fn support_radius(&self) -> f64 {
        0.0
    }
}

/// `a · exp(−|x − c|² / (2 s²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

impl TestFunction for GaussianBump {
    fn value(&self, x: [f64; 2]) -> f64 {
        let (d0, d1) = (x[0] - self.center[0], x[1] - self.center[1]);
        self.amplitude * (-(d0 * d0 + d1 * d1) / (2.0 * self.width * self.width)).exp()
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let u = self.value(x);
        let s2 = self.width * self.width;
        [-u * (x[0] - self.center[0]) / s2, -u * (x[1] - self.center[1]) / s2]
    }
    fn hess11(&self, x: [f64; 2]) -> f64 {
        let u = self.value(x);
        let s2 = self.width * self.width;
        let d0 = x[0] - self.center[0];
        u * (d0 * d0 / s2 - 1.0) / s2
    }
}

/// `a·x + c` (unbounded; wrap it in a [`Cutoff`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub coef: [f64; 2],
    pub offset: f64,
}

impl TestFunction for Affine {
    fn value(&self, x: [f64; 2]) -> f64 {
        self.coef[0] * x[0] + self.coef[1] * x[1] + self.offset
    }
    fn gradient(&self, _: [f64; 2]) -> [f64; 2] {
        self.coef
    }
    fn hess11(&self, _: [f64; 2]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

/// `cos(x·ξ)` or `sin(x·ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fourier {
    pub xi: [f64; 2],
    pub kind: Trig,
}

impl Fourier {
    fn parts(&self, x: [f64; 2]) -> (f64, f64) {
        let th = x[0] * self.xi[0] + x[1] * self.xi[1];
        let (s, c) = th.sin_cos();
        match self.kind {
            Trig::Cos => (c, -s),
            Trig::Sin => (s, c),
        }
    }
}

impl TestFunction for Fourier {
    fn value(&self, x: [f64; 2]) -> f64 {
        self.parts(x).0
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let d = self.parts(x).1;
        [d * self.xi[0], d * self.xi[1]]
    }
    fn hess11(&self, x: [f64; 2]) -> f64 {
        -self.parts(x).0 * self.xi[0] * self.xi[0]
    }
}

/// `1` for `s ≤ 0`, `0` for `s ≥ 1`, quintic smoothstep between; with derivatives.
fn smooth_step(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        (1.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        let s2 = s * s;
        let v = 1.0 - s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
        let d = -30.0 * s2 * (1.0 - s) * (1.0 - s);
        let dd = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        (v, d, dd)
    }
}

/// `inner(x)·χ(x)`: `χ = 1` on the max-norm ball of radius `inner` around
/// `center`, `0` outside radius `outer`, a product of quintic steps between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff<F> {
    pub function: F,
    pub center: [f64; 2],
    pub inner: f64,
    pub outer: f64,
}

impl<F> Cutoff<F> {
    fn factor(&self, x: [f64; 2], i: usize) -> (f64, f64, f64) {
        let d = x[i] - self.center[i];
        let w = self.outer - self.inner;
        let (v, dv, ddv) = smooth_step((d.abs() - self.inner) / w);
        let sg = d.signum();
        (v, dv * sg / w, ddv / (w * w))
    }
}

impl<F: TestFunction> TestFunction for Cutoff<F> {
    fn value(&self, x: [f64; 2]) -> f64 {
        let c = self.factor(x, 0).0 * self.factor(x, 1).0;
        if c == 0.0 {
            0.0
        } else {
            c * self.function.value(x)
        }
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let (a, da, _) = self.factor(x, 0);
        let (b, db, _) = self.factor(x, 1);
        if a * b == 0.0 && da == 0.0 && db == 0.0 {
            return [0.0, 0.0];
        }
        let u = self.function.value(x);
        let g = self.function.gradient(x);
        [a * b * g[0] + da * b * u, a * b * g[1] + a * db * u]
    }
    fn hess11(&self, x: [f64; 2]) -> f64 {
        let (a, da, dda) = self.factor(x, 0);
        let (b, _, _) = self.factor(x, 1);
        if b == 0.0 || (a == 0.0 && da == 0.0 && dda == 0.0) {
            return 0.0;
        }
        let u = self.function.value(x);
        let g = self.function.gradient(x);
        b * (a * self.function.hess11(x) + 2.0 * da * g[0] + dda * u)
    }
    fn support_radius(&self) -> f64 {
        self.outer
    }
}

/// `Σ cᵢ uᵢ`.
#[derive(Default)]
pub struct LinearCombination {
    pub terms: Vec<(f64, Box<dyn TestFunction>)>,
}

impl LinearCombination {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, c: f64, f: impl TestFunction + 'static) -> Self {
        self.terms.push((c, Box::new(f)));
        self
    }
}

impl TestFunction for LinearCombination {
    fn value(&self, x: [f64; 2]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(x)).sum()
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        self.terms.iter().fold([0.0, 0.0], |acc, (c, f)| {
            let g = f.gradient(x);
            [acc[0] + c * g[0], acc[1] + c * g[1]]
        })
    }
    fn hess11(&self, x: [f64; 2]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.hess11(x)).sum()
    }
    fn support_radius(&self) -> f64 {
        self.terms.iter().map(|(_, f)| f.support_radius()).fold(0.0, f64::max)
    }
}

/// A test function assembled from closures.
pub struct FnTestFunction<U, G, H> {
    pub u: U,
    pub grad: G,
    pub hess11: H,
}

impl<U, G, H> TestFunction for FnTestFunction<U, G, H>
where
    U: Fn([f64; 2]) -> f64 + Send + Sync,
    G: Fn([f64; 2]) -> [f64; 2] + Send + Sync,
    H: Fn([f64; 2]) -> f64 + Send + Sync,
{
    fn value(&self, x: [f64; 2]) -> f64 {
        (self.u)(x)
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        (self.grad)(x)
    }
    fn hess11(&self, x: [f64; 2]) -> f64 {
        (self.hess11)(x)
    }
}

/// Compares the analytic derivatives with central differences at `n` points
/// drawn uniformly from the max-norm ball of radius `spread` around `center`.
/// Deviations are measured relative to `max(1, |analytic|)`.
pub fn check_derivatives<F: TestFunction + ?Sized>(f: &F, center: [f64; 2], spread: f64, n: usize, seed: u64, rel_tol: f64) -> Result<()> {
    let mut rng = PathRng::seed_from_u64(seed);
    for _ in 0..n {
        let x = [
            center[0] + spread * rng.random_range(-1.0..1.0),
            center[1] + spread * rng.random_range(-1.0..1.0),
        ];
        let g = f.gradient(x);
        for i in 0..2 {
            let h = 1e-5 * x[i].abs().max(1.0);
            let (mut a, mut b) = (x, x);
            a[i] += h;
            b[i] -= h;
            let fd = (f.value(a) - f.value(b)) / (2.0 * h);
            if (fd - g[i]).abs() > rel_tol * g[i].abs().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "gradient component {i} at {x:?}: analytic {} vs difference {fd}",
                    g[i]
                )));
            }
        }
        let second = |h: f64| (f.value([x[0] + h, x[1]]) - 2.0 * f.value(x) + f.value([x[0] - h, x[1]])) / (h * h);
        let h = 2e-3 * x[0].abs().max(1.0);
        let fd = (4.0 * second(0.5 * h) - second(h)) / 3.0;
        let an = f.hess11(x);
        if (fd - an).abs() > rel_tol * an.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!("∂₁∂₁u at {x:?}: analytic {an} vs difference {fd}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorValue {
    pub value: f64,
    pub quadrature_error: f64,
}

/// `Gu(x)`; independent of how `x.g` enters only through `u`.
pub fn apply_generator<F: TestFunction + ?Sized>(f: &F, x: StatePoint, params: &CogarchParams, tol: Tolerance) -> Result<GeneratorValue> {
    let c = drift_coefficients(x.v, params, tol)?;
    let p = x.as_array();
    let u = f.value(p);
    let g = f.gradient(p);
    let local = c.b1 * g[0] + c.b2 * g[1] + 0.5 * c.q11 * f.hess11(p);
    let jumps = integrate_image(
        |z| {
            let mut d = f.value([p[0] + z[0], p[1] + z[1]]) - u;
            if in_truncation_box(z) {
                d -= z[0] * g[0] + z[1] * g[1];
            }
            d.into()
        },
        x.v,
        params,
        tol,
    )?;
    Ok(GeneratorValue {
        value: local + jumps.value.re,
        quadrature_error: jumps.error + c.quadrature_error * (g[0].abs() + g[1].abs()),
    })
}

/// Monte-Carlo `lim_{h↓0} (E^x u(X_h) − u(x)) / h` over the ladder `cfg.t_ladder`.
pub fn semigroup_derivative<F: TestFunction + ?Sized>(f: &F, x: StatePoint, params: &CogarchParams, cfg: &McConfig) -> Result<EstimatorResult> {
    if cfg.n_paths < 2 {
        return Err(Error::param("n_paths", "n_paths >= 2", cfg.n_paths as f64));
    }
    if !(cfg.radius > 0.0) {
        return Err(Error::param("R", "R > 0", cfg.radius));
    }
    let ladder = normalize_ladder(&cfg.t_ladder)?;
    let u0 = f.value(x.as_array());
    let m = accumulate_ladder(x, params, cfg, &ladder, 1, |_, obs, out| {
        for (i, (s, h)) in obs.iter().zip(&ladder).enumerate() {
            out[2 * i] = (f.value([x.g + s.dg, s.v]) - u0) / h;
            out[2 * i + 1] = 0.0;
        }
    })?;
    Ok(ladder_result(&ladder, &m[0], cfg.radius))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
}

impl Residual {
    pub fn z(&self) -> f64 {
        crate::mc_symbol::z_score(self.mean, self.stderr)
    }
}

/// Settings of the martingale-residual simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualConfig {
    pub n_paths: u64,
    pub seed: u64,
    /// Step of the trapezoid grid between jumps.
    pub step: f64,
    pub epsilon: f64,
    pub workers: Option<usize>,
    pub tol: Tolerance,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            seed: 0,
            step: 0.01,
            epsilon: crate::sim::DEFAULT_TRUNCATION,
            workers: None,
            tol: Tolerance::default(),
        }
    }
}

/// Means of `C_t^u = u(X_t) − u(x) − ∫₀ᵗ Gu(X_s) ds` for several test
/// functions on the same paths. The time integral is a trapezoid over the
/// event grid that uses left limits at jump times.
pub fn martingale_residuals(fs: &[&dyn TestFunction], start: StatePoint, params: &CogarchParams, t: f64, cfg: &ResidualConfig) -> Result<Vec<Residual>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", "t > 0", t));
    }
    if cfg.n_paths < 2 {
        return Err(Error::param("n_paths", "n_paths >= 2", cfg.n_paths as f64));
    }
    let sim = Simulator::new(params, cfg.epsilon, cfg.tol)?;
    let grid = TimeGrid::new(t, cfg.step, &[])?;
    let k = fs.len();
    let start_values: Vec<f64> = fs.iter().map(|f| f.value(start.as_array())).collect();
    let at = |s: &PathState| [start.g + s.dg, s.v];
    let (moments, _) = parallel::run_chunked(
        cfg.n_paths,
        cfg.workers,
        || (Moments::new(k), Scratch::default()),
        |acc: &mut (Moments, Scratch), i| {
            let mut rng = path_rng(cfg.seed, i);
            let mut integral = vec![0.0; k];
            let mut last: Vec<f64> = Vec::new();
            let mut last_t = 0.0;
            let mut end = vec![0.0; k];
            let mut failure = None;
            sim.run(start.v, &grid, None, &mut rng, &mut acc.1, |e| {
                if failure.is_some() {
                    return;
                }
                let eval = |s: &PathState| -> Result<Vec<f64>> {
                    let x = at(s);
                    fs.iter()
                        .map(|f| apply_generator(*f, StatePoint::from(x), params, cfg.tol).map(|g| g.value))
                        .collect()
                };
                let step = (|| -> Result<()> {
                    if e.t > 0.0 {
                        let pre = if e.dz.is_some() { eval(&e.pre)? } else { eval(&e.post)? };
                        for j in 0..k {
                            integral[j] += 0.5 * (last[j] + pre[j]) * (e.t - last_t);
                        }
                        last = if e.dz.is_some() { eval(&e.post)? } else { pre };
                    } else {
                        last = eval(&e.post)?;
                    }
                    last_t = e.t;
                    for (j, f) in fs.iter().enumerate() {
                        end[j] = f.value(at(&e.post));
                    }
                    Ok(())
                })();
                if let Err(err) = step {
                    failure = Some(err);
                }
            });
            if let Some(err) = failure {
                return Err(err);
            }
            let row: Vec<f64> = (0..k).map(|j| end[j] - start_values[j] - integral[j]).collect();
            acc.0.push(&row);
            Ok(())
        },
        |a, b| a.0.merge(b.0),
    )?;
    Ok((0..k)
        .map(|j| Residual {
            mean: moments.mean(j),
            stderr: moments.stderr(j),
            n_paths: moments.count(),
        })
        .collect())
}

pub fn martingale_residual<F: TestFunction>(f: &F, start: StatePoint, params: &CogarchParams, t: f64, cfg: &ResidualConfig) -> Result<Residual> {
    Ok(martingale_residuals(&[f], start, params, t, cfg)?[0])
}
