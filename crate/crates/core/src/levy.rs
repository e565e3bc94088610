//! Scalar Lévy drivers: triplets, the Lévy–Khintchine exponent and path
//! skeleton sampling.
//!
//! The truncation function is `y ↦ y·1{|y| < 1}` everywhere in the crate.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Integral, Tolerance};
use crate::rng::path_rng;

/// `e^{iθ} − 1` without cancellation for small θ.
#[inline]
pub(crate) fn expi_m1(theta: f64) -> Complex64 {
    let s = (0.5 * theta).sin();
    Complex64::new(-2.0 * s * s, theta.sin())
}

/// `e^{iθ} − 1 − iθ` without cancellation for small θ.
#[inline]
pub(crate) fn expi_m1_mi(theta: f64) -> Complex64 {
    let s = (0.5 * theta).sin();
    let im = if theta.abs() < 1e-3 {
        let t2 = theta * theta;
        -theta * t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0))
    } else {
        theta.sin() - theta
    };
    Complex64::new(-2.0 * s * s, im)
}

/// A single jump height together with its intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub size: f64,
    pub rate: f64,
}

/// Parametric jump densities that can be named in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityFamily {
    /// `c_± e^{−decay_±|y|} |y|^{−1−α}` on the positive / negative half-line.
    TemperedStable {
        c_neg: f64,
        c_pos: f64,
        decay_neg: f64,
        decay_pos: f64,
        alpha: f64,
    },
    /// `rate` times the normal density with the given mean and standard deviation.
    Gaussian { rate: f64, mean: f64, std: f64 },
}

impl DensityFamily {
    fn eval(&self, y: f64) -> f64 {
        match *self {
            DensityFamily::TemperedStable {
                c_neg,
                c_pos,
                decay_neg,
                decay_pos,
                alpha,
            } => {
                let a = y.abs();
                let (c, g) = if y > 0.0 { (c_pos, decay_pos) } else { (c_neg, decay_neg) };
                c * (-g * a).exp() * a.powf(-1.0 - alpha)
            }
            DensityFamily::Gaussian { rate, mean, std } => {
                let z = (y - mean) / std;
                rate * (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    fn small_jump_exponent(&self) -> f64 {
        match *self {
            DensityFamily::TemperedStable { alpha, .. } => alpha,
            DensityFamily::Gaussian { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DensityFamily::TemperedStable {
                c_neg,
                c_pos,
                decay_neg,
                decay_pos,
                alpha,
            } => {
                for (name, v) in [("c_neg", c_neg), ("c_pos", c_pos), ("decay_neg", decay_neg), ("decay_pos", decay_pos)] {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::param(name, "must be finite and >= 0", v));
                    }
                }
                if !(0.0..2.0).contains(&alpha) {
                    return Err(Error::param("alpha", "0 <= alpha < 2", alpha));
                }
            }
            DensityFamily::Gaussian { rate, mean, std } => {
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::param("rate", "must be finite and >= 0", rate));
                }
                if !mean.is_finite() {
                    return Err(Error::param("mean", "must be finite", mean));
                }
                if !(std > 0.0 && std.is_finite()) {
                    return Err(Error::param("std", "must be finite and > 0", std));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
enum DensityKind {
    Family(DensityFamily),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A Lévy density `n(y)` on `(y_min, 0) ∪ (0, y_max)`, zero beyond the cutoffs.
///
/// `small_jump_exponent` is an `α ∈ [0, 2)` with `n(y) = O(|y|^{-1-α})` at the
/// origin; quadrature uses it to decide how close to zero it must integrate.
#[derive(Clone)]
pub struct JumpDensity {
    kind: DensityKind,
    small_jump_exponent: f64,
    support: (f64, f64),
}

impl fmt::Debug for JumpDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("JumpDensity");
        match &self.kind {
            DensityKind::Family(fam) => s.field("family", fam),
            DensityKind::Custom(_) => s.field("family", &"custom"),
        };
        s.field("small_jump_exponent", &self.small_jump_exponent)
            .field("support", &self.support)
            .finish()
    }
}

impl JumpDensity {
    pub fn from_family(family: DensityFamily, support: (f64, f64)) -> Result<Self> {
        family.validate()?;
        let alpha = family.small_jump_exponent();
        Self::build(DensityKind::Family(family), alpha, support)
    }

    pub fn custom<F>(density: F, small_jump_exponent: f64, support: (f64, f64)) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(DensityKind::Custom(Arc::new(density)), small_jump_exponent, support)
    }

    fn build(kind: DensityKind, alpha: f64, support: (f64, f64)) -> Result<Self> {
        if !(0.0..2.0).contains(&alpha) {
            return Err(Error::param("small_jump_exponent", "0 <= alpha < 2", alpha));
        }
        let (lo, hi) = support;
        if !(lo < 0.0 && lo.is_finite()) {
            return Err(Error::param("y_min", "must be finite and < 0", lo));
        }
        if !(hi > 0.0 && hi.is_finite()) {
            return Err(Error::param("y_max", "must be finite and > 0", hi));
        }
        Ok(Self {
            kind,
            small_jump_exponent: alpha,
            support,
        })
    }

    pub fn family(&self) -> Option<&DensityFamily> {
        match &self.kind {
            DensityKind::Family(f) => Some(f),
            DensityKind::Custom(_) => None,
        }
    }

    pub fn small_jump_exponent(&self) -> f64 {
        self.small_jump_exponent
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Density value; zero at the origin and outside the support.
    pub fn eval(&self, y: f64) -> f64 {
        if y == 0.0 || y <= self.support.0 || y >= self.support.1 {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Family(f) => f.eval(y),
            DensityKind::Custom(f) => f(y),
        }
    }

    /// Smallest |y| the quadrature resolves. Integrands are `O(y²)` at the
    /// origin, so the neglected mass is `O(floor^{2−α})`: about 1e-14, or
    /// larger for α close to 2 where `n(floor)` must still be representable.
    fn floor(&self) -> f64 {
        let alpha = self.small_jump_exponent;
        (-32.3 / (2.0 - alpha)).max(-600.0 / (1.0 + alpha)).exp()
    }

    /// `∫ h(y) n(y) dy` over `lo_abs ≤ |y|` (restricted to one sign) in the
    /// variable `u = ln|y|`, which absorbs the `|y|^{-1-α}` singularity.
    fn integrate_side<F>(&self, h: &F, sign: f64, lo_abs: f64, breakpoints: &[f64], tol: Tolerance) -> Result<Integral>
    where
        F: Fn(f64) -> Complex64,
    {
        let hi_abs = if sign > 0.0 { self.support.1 } else { -self.support.0 };
        if lo_abs >= hi_abs {
            return Ok(Integral::ZERO);
        }
        let (u_lo, u_hi) = (lo_abs.ln(), hi_abs.ln());
        let mut pts = vec![u_lo];
        let mut inner: Vec<f64> = breakpoints
            .iter()
            .filter(|b| **b * sign > 0.0)
            .map(|b| b.abs().ln())
            .filter(|u| *u > u_lo && *u < u_hi)
            .collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        pts.extend(inner);
        pts.push(u_hi);
        quadrature::integrate(
            |u| {
                let a = u.exp();
                let y = sign * a;
                let w = self.eval(y) * a;
                if w == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    h(y) * w
                }
            },
            &pts,
            tol,
        )
    }
}

/// The jump measure `N` of a scalar Lévy process.
#[derive(Debug, Clone)]
pub enum LevyMeasure {
    Atomic(Vec<Atom>),
    Density(JumpDensity),
}

impl LevyMeasure {
    pub fn zero() -> Self {
        LevyMeasure::Atomic(Vec::new())
    }

    pub fn atomic(atoms: Vec<Atom>) -> Result<Self> {
        let m = LevyMeasure::Atomic(atoms);
        m.validate(Tolerance::default())?;
        Ok(m)
    }

    pub fn density(density: JumpDensity) -> Result<Self> {
        let m = LevyMeasure::Density(density);
        m.validate(Tolerance::default())?;
        Ok(m)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, LevyMeasure::Atomic(a) if a.is_empty())
    }

    pub fn validate(&self, tol: Tolerance) -> Result<()> {
        match self {
            LevyMeasure::Atomic(atoms) => {
                for a in atoms {
                    if !(a.size != 0.0 && a.size.is_finite()) {
                        return Err(Error::InvalidMeasure(format!("atom size must be finite and nonzero, got {}", a.size)));
                    }
                    if !(a.rate > 0.0 && a.rate.is_finite()) {
                        return Err(Error::InvalidMeasure(format!(
                            "atom rate must be finite and strictly positive, got {} at size {}",
                            a.rate, a.size
                        )));
                    }
                }
                Ok(())
            }
            LevyMeasure::Density(d) => {
                let (lo, hi) = d.support;
                for k in 0..=400 {
                    let s = k as f64 / 400.0;
                    for y in [hi * (1e-6f64).powf(s), lo * (1e-6f64).powf(s)] {
                        let n = d.eval(y);
                        if !(n >= 0.0 && n.is_finite()) {
                            return Err(Error::InvalidMeasure(format!("density must be finite and nonnegative, got {n} at y = {y}")));
                        }
                    }
                }
                // The declared exponent must actually bound the density at the
                // quadrature floor, otherwise the neglected mass is not small.
                let floor = d.floor();
                for y in [floor, -floor] {
                    let tail = (y.abs() * d.eval(y)) * y * y;
                    if !(tail <= 1e-6) {
                        return Err(Error::InvalidMeasure(format!(
                            "density at |y| = {floor:.3e} exceeds the |y|^(-1-alpha) bound for alpha = {}",
                            d.small_jump_exponent
                        )));
                    }
                }
                let mass = self
                    .integrate(|y| Complex64::new(y.abs().min(1.0).powi(2), 0.0), &[-1.0, 1.0], tol)
                    .map_err(|e| Error::InvalidMeasure(format!("∫(1 ∧ y²) N(dy) is not finite: {e}")))?;
                if !mass.value.re.is_finite() {
                    return Err(Error::InvalidMeasure("∫(1 ∧ y²) N(dy) is not finite".into()));
                }
                Ok(())
            }
        }
    }

    /// `∫_{y≠0} h(y) N(dy)`. For densities `h` must vanish like `y²` at the
    /// origin (or be zero near it); `breakpoints` are the points where `h`
    /// is discontinuous. Atomic measures are summed exactly.
    pub fn integrate<F>(&self, h: F, breakpoints: &[f64], tol: Tolerance) -> Result<Integral>
    where
        F: Fn(f64) -> Complex64,
    {
        match self {
            LevyMeasure::Atomic(atoms) => Ok(Integral::exact(atoms.iter().map(|a| h(a.size) * a.rate).sum())),
            LevyMeasure::Density(d) => {
                let floor = d.floor();
                Ok(d.integrate_side(&h, 1.0, floor, breakpoints, tol)? + d.integrate_side(&h, -1.0, floor, breakpoints, tol)?)
            }
        }
    }

    /// `∫_{|y| ≥ min_abs} h(y) N(dy)`.
    pub fn integrate_beyond<F>(&self, h: F, min_abs: f64, breakpoints: &[f64], tol: Tolerance) -> Result<Integral>
    where
        F: Fn(f64) -> Complex64,
    {
        match self {
            LevyMeasure::Atomic(atoms) => Ok(Integral::exact(
                atoms.iter().filter(|a| a.size.abs() >= min_abs).map(|a| h(a.size) * a.rate).sum(),
            )),
            LevyMeasure::Density(d) => {
                let lo = min_abs.max(d.floor());
                Ok(d.integrate_side(&h, 1.0, lo, breakpoints, tol)? + d.integrate_side(&h, -1.0, lo, breakpoints, tol)?)
            }
        }
    }

    /// `N([a, b])` for an interval not containing the origin.
    pub fn interval_mass(&self, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
        if !(a <= b) || (a <= 0.0 && b >= 0.0) {
            return Err(Error::InvalidArgument(format!("interval [{a}, {b}] must not contain the origin")));
        }
        match self {
            LevyMeasure::Atomic(atoms) => Ok(atoms.iter().filter(|x| x.size >= a && x.size <= b).map(|x| x.rate).sum()),
            LevyMeasure::Density(d) => {
                let (lo, hi) = (a.max(d.support.0), b.min(d.support.1));
                if lo >= hi {
                    return Ok(0.0);
                }
                let sign = if lo > 0.0 { 1.0 } else { -1.0 };
                let (ua, ub) = (lo.abs().ln(), hi.abs().ln());
                let (u0, u1) = if ua < ub { (ua, ub) } else { (ub, ua) };
                let (v, _) = quadrature::integrate_real(
                    |u| {
                        let r = u.exp();
                        d.eval(sign * r) * r
                    },
                    &[u0, u1],
                    tol,
                )?;
                Ok(v)
            }
        }
    }
}

/// `(ℓ, Q, N)`: drift under the unit truncation, Gaussian variance and jump measure.
#[derive(Debug, Clone)]
pub struct LevyTriplet {
    drift: f64,
    gaussian: f64,
    measure: LevyMeasure,
}

impl LevyTriplet {
    pub fn new(drift: f64, gaussian: f64, measure: LevyMeasure) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::param("drift", "must be finite", drift));
        }
        if !(gaussian >= 0.0 && gaussian.is_finite()) {
            return Err(Error::param("gaussian", "Q >= 0", gaussian));
        }
        Ok(Self { drift, gaussian, measure })
    }

    pub fn brownian(gaussian: f64) -> Result<Self> {
        Self::new(0.0, gaussian, LevyMeasure::zero())
    }

    pub fn zero() -> Self {
        Self {
            drift: 0.0,
            gaussian: 0.0,
            measure: LevyMeasure::zero(),
        }
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn gaussian(&self) -> f64 {
        self.gaussian
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.measure
    }
}

/// Lévy–Khintchine exponent `ψ(ξ)` with `E e^{iξZ_t} = e^{−tψ(ξ)}`.
pub fn characteristic_exponent(triplet: &LevyTriplet, xi: f64) -> Result<Complex64> {
    characteristic_exponent_with_tolerance(triplet, xi, Tolerance::default()).map(|i| i.value)
}

pub fn characteristic_exponent_with_tolerance(triplet: &LevyTriplet, xi: f64, tol: Tolerance) -> Result<Integral> {
    let jumps = triplet.measure.integrate(
        |y| {
            let th = y * xi;
            if y.abs() < 1.0 {
                expi_m1_mi(th)
            } else {
                expi_m1(th)
            }
        },
        &[-1.0, 1.0],
        tol,
    )?;
    let value = Complex64::new(0.5 * triplet.gaussian * xi * xi, -triplet.drift * xi) - jumps.value;
    Ok(Integral { value, error: jumps.error })
}

/// Symbol of a Lévy process: the exponent itself, whatever the state `x`.
pub fn levy_symbol(triplet: &LevyTriplet, _x: &[f64], xi: f64) -> Result<Complex64> {
    characteristic_exponent(triplet, xi)
}

/// Upper bound on accepted jump intensities after truncation.
const MAX_INTENSITY: f64 = 1e9;
const TABLE_CELLS: usize = 2048;

#[derive(Debug, Clone)]
enum SizeTable {
    Empty,
    Atoms {
        cumulative: Vec<f64>,
        sizes: Vec<f64>,
    },
    /// Cells uniform in `u = ln|y|`; sizes are drawn uniformly in `u` inside a cell.
    Cells {
        cumulative: Vec<f64>,
        cells: Vec<(f64, f64, f64)>,
    },
}

/// Compound-Poisson sampler for the jumps of size `|y| ≥ ε` (all jumps for
/// atomic measures).
#[derive(Debug, Clone)]
pub struct JumpSampler {
    intensity: f64,
    small_jump_compensator: f64,
    threshold: f64,
    table: SizeTable,
}

impl JumpSampler {
    pub fn new(measure: &LevyMeasure, threshold: f64, tol: Tolerance) -> Result<Self> {
        match measure {
            LevyMeasure::Atomic(atoms) => {
                let mut cumulative = Vec::with_capacity(atoms.len());
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.rate;
                    cumulative.push(acc);
                }
                let small_jump_compensator = atoms.iter().filter(|a| a.size.abs() < 1.0).map(|a| a.rate * a.size).sum();
                let table = if atoms.is_empty() {
                    SizeTable::Empty
                } else {
                    SizeTable::Atoms {
                        cumulative,
                        sizes: atoms.iter().map(|a| a.size).collect(),
                    }
                };
                Ok(Self {
                    intensity: acc,
                    small_jump_compensator,
                    threshold: 0.0,
                    table,
                })
            }
            LevyMeasure::Density(d) => {
                if !(threshold > 0.0 && threshold.is_finite()) {
                    return Err(Error::param("epsilon", "small-jump threshold must be > 0 for density measures", threshold));
                }
                let intensity = measure
                    .integrate_beyond(|_| Complex64::new(1.0, 0.0), threshold, &[], tol)
                    .map_err(|_| Error::InfiniteIntensity {
                        threshold,
                        rate: f64::INFINITY,
                    })?
                    .value
                    .re;
                if !intensity.is_finite() || intensity > MAX_INTENSITY {
                    return Err(Error::InfiniteIntensity { threshold, rate: intensity });
                }
                let small_jump_compensator = measure
                    .integrate_beyond(|y| Complex64::new(if y.abs() < 1.0 { y } else { 0.0 }, 0.0), threshold, &[-1.0, 1.0], tol)?
                    .value
                    .re;
                let mut cells = Vec::with_capacity(2 * TABLE_CELLS);
                let mut cumulative = Vec::with_capacity(2 * TABLE_CELLS);
                let mut acc = 0.0;
                for sign in [-1.0, 1.0] {
                    let hi = if sign > 0.0 { d.support.1 } else { -d.support.0 };
                    if hi <= threshold {
                        continue;
                    }
                    let (u0, u1) = (threshold.ln(), hi.ln());
                    let width = (u1 - u0) / TABLE_CELLS as f64;
                    for k in 0..TABLE_CELLS {
                        let a = u0 + k as f64 * width;
                        let m = quadrature::kronrod_rule(
                            |u| {
                                let r = u.exp();
                                d.eval(sign * r) * r
                            },
                            a,
                            a + width,
                        );
                        acc += m.max(0.0);
                        cells.push((sign, a, width));
                        cumulative.push(acc);
                    }
                }
                let table = if acc > 0.0 {
                    SizeTable::Cells { cumulative, cells }
                } else {
                    SizeTable::Empty
                };
                Ok(Self {
                    intensity,
                    small_jump_compensator,
                    threshold,
                    table,
                })
            }
        }
    }

    /// Total rate of the simulated jumps.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// `∫_{ε ≤ |y| < 1} y N(dy)`, removed from the drift so that the simulated
    /// process has the triplet's drift under the unit truncation.
    pub fn small_jump_compensator(&self) -> f64 {
        self.small_jump_compensator
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        fn pick(cumulative: &[f64], rng: &mut (impl Rng + ?Sized)) -> usize {
            let total = *cumulative.last().expect("nonempty table");
            let target = rng.random::<f64>() * total;
            cumulative.partition_point(|c| *c <= target).min(cumulative.len() - 1)
        }
        match &self.table {
            SizeTable::Empty => 0.0,
            SizeTable::Atoms { cumulative, sizes } => sizes[pick(cumulative, rng)],
            SizeTable::Cells { cumulative, cells } => {
                let (sign, a, w) = cells[pick(cumulative, rng)];
                sign * (a + w * rng.random::<f64>()).exp()
            }
        }
    }

    /// Appends the jumps on `(0, t_max]` to the given buffers (cleared first).
    pub fn fill_skeleton<R: Rng + ?Sized>(&self, t_max: f64, rng: &mut R, times: &mut Vec<f64>, sizes: &mut Vec<f64>) {
        times.clear();
        sizes.clear();
        if self.intensity <= 0.0 || matches!(self.table, SizeTable::Empty) {
            return;
        }
        let exp = Exp::new(self.intensity).expect("positive intensity");
        let mut t = 0.0;
        loop {
            t += exp.sample(rng);
            if t > t_max {
                break;
            }
            let y = self.sample_size(rng);
            if y == 0.0 || t <= times.last().copied().unwrap_or(0.0) {
                continue;
            }
            times.push(t);
            sizes.push(y);
        }
    }
}

/// Jump times and sizes of one realization on `(0, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSkeleton {
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    pub t_max: f64,
    pub seed: u64,
}

impl PathSkeleton {
    pub fn len(&self) -> usize {
        self.jump_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }
}

/// Samples the jump skeleton of the driver on `(0, t_max]`. Density measures
/// are truncated to jumps with `|y| ≥ epsilon`; atomic ones ignore `epsilon`.
pub fn sample_skeleton(triplet: &LevyTriplet, t_max: f64, epsilon: f64, seed: u64) -> Result<PathSkeleton> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::param("t_max", "must be finite and > 0", t_max));
    }
    let sampler = JumpSampler::new(&triplet.measure, epsilon, Tolerance::default())?;
    let mut rng = path_rng(seed, 0);
    let (mut jump_times, mut jump_sizes) = (Vec::new(), Vec::new());
    sampler.fill_skeleton(t_max, &mut rng, &mut jump_times, &mut jump_sizes);
    Ok(PathSkeleton {
        jump_times,
        jump_sizes,
        t_max,
        seed,
    })
}

/// Simulator of the driver's increments: truncated compound Poisson jumps,
/// Brownian part and the drift corrected for the simulated small jumps.
#[derive(Debug, Clone)]
pub struct DriverSampler {
    jumps: JumpSampler,
    effective_drift: f64,
    volatility: f64,
}

impl DriverSampler {
    pub fn new(triplet: &LevyTriplet, epsilon: f64, tol: Tolerance) -> Result<Self> {
        let jumps = JumpSampler::new(&triplet.measure, epsilon, tol)?;
        Ok(Self {
            effective_drift: triplet.drift - jumps.small_jump_compensator(),
            volatility: triplet.gaussian.sqrt(),
            jumps,
        })
    }

    pub fn jumps(&self) -> &JumpSampler {
        &self.jumps
    }

    /// Drift of the continuous part, `ℓ − ∫_{ε≤|y|<1} y N(dy)`.
    pub fn effective_drift(&self) -> f64 {
        self.effective_drift
    }

    /// `√Q`.
    pub fn volatility(&self) -> f64 {
        self.volatility
    }

    /// One draw of `Z_t − Z_0`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let mut z = self.effective_drift * t;
        if self.volatility > 0.0 {
            let n: f64 = StandardNormal.sample(rng);
            z += self.volatility * t.sqrt() * n;
        }
        let (mut times, mut sizes) = (Vec::new(), Vec::new());
        self.jumps.fill_skeleton(t, rng, &mut times, &mut sizes);
        z + sizes.iter().sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn ts_two_sided() -> LevyMeasure {
        let fam = DensityFamily::TemperedStable {
            c_neg: 1.0,
            c_pos: 1.0,
            decay_neg: 2.0,
            decay_pos: 2.0,
            alpha: 0.5,
        };
        LevyMeasure::density(JumpDensity::from_family(fam, (-30.0, 30.0)).unwrap()).unwrap()
    }

    fn gamma_like() -> LevyMeasure {
        let d = JumpDensity::custom(|y| if y > 0.0 { 3.0 * (-2.0 * y).exp() / y } else { 0.0 }, 0.0, (-1.0, 30.0)).unwrap();
        LevyMeasure::density(d).unwrap()
    }

    #[test]
    fn brownian_exponent() {
        let t = LevyTriplet::brownian(1.0).unwrap();
        assert_eq!(characteristic_exponent(&t, 2.0).unwrap(), Complex64::new(2.0, 0.0));
    }

    #[test]
    fn exponent_vanishes_at_origin() {
        for m in [LevyMeasure::zero(), ts_two_sided(), gamma_like()] {
            let t = LevyTriplet::new(0.3, 0.7, m).unwrap();
            assert_eq!(characteristic_exponent(&t, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn single_large_atom_is_not_compensated() {
        let m = LevyMeasure::atomic(vec![Atom { size: 1.0, rate: 1.0 }]).unwrap();
        let t = LevyTriplet::new(0.0, 0.0, m).unwrap();
        // Reference value 1 − e^{iπ} = 2.
        assert!(close(characteristic_exponent(&t, PI).unwrap(), Complex64::new(2.0, 0.0), 1e-15));
    }

    #[test]
    fn tempered_stable_matches_reference() {
        let t = LevyTriplet::new(0.0, 0.0, ts_two_sided()).unwrap();
        // mpmath values (scripts/oracle_values.py).
        for (xi, re) in [(0.5, 0.076850491444313832898), (1.0, 0.29162628344610699253), (3.0, 1.8428958863643573487)] {
            let psi = characteristic_exponent(&t, xi).unwrap();
            assert!(close(psi, Complex64::new(re, 0.0), 1e-8), "xi={xi}: {psi}");
        }
    }

    #[test]
    fn one_sided_density_with_compensation_matches_reference() {
        let t = LevyTriplet::new(0.0, 0.0, gamma_like()).unwrap();
        for (xi, re, im) in [
            (0.5, 0.090936932724652263871, -0.086437451808051981437),
            (2.0, 1.0397207708399179641, 0.23779966009781699547),
        ] {
            let psi = characteristic_exponent(&t, xi).unwrap();
            assert!(close(psi, Complex64::new(re, im), 1e-8), "xi={xi}: {psi}");
        }
    }

    #[test]
    fn levy_symbol_is_space_homogeneous() {
        let m = LevyMeasure::atomic(vec![Atom { size: 0.4, rate: 1.5 }, Atom { size: -2.0, rate: 0.5 }]).unwrap();
        let t = LevyTriplet::new(0.2, 0.5, m).unwrap();
        let a = levy_symbol(&t, &[0.0], 1.3).unwrap();
        let b = levy_symbol(&t, &[7.0], 1.3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, characteristic_exponent(&t, 1.3).unwrap());
        let bm = LevyTriplet::brownian(1.0).unwrap();
        assert_eq!(levy_symbol(&bm, &[3.0, -1.0], 2.0).unwrap(), Complex64::new(2.0, 0.0));
    }

    #[test]
    fn invalid_atoms_rejected() {
        assert!(LevyMeasure::atomic(vec![Atom { size: 1.0, rate: 0.0 }]).is_err());
        assert!(LevyMeasure::atomic(vec![Atom { size: 0.0, rate: 1.0 }]).is_err());
        assert!(LevyTriplet::new(0.0, -1.0, LevyMeasure::zero()).is_err());
    }

    #[test]
    fn non_levy_density_rejected() {
        // |y|^{-3} is not integrable against y² at the origin.
        let d = JumpDensity::custom(|y: f64| y.abs().powi(-3), 1.5, (-1.0, 1.0)).unwrap();
        assert!(LevyMeasure::density(d).is_err());
        let neg = JumpDensity::custom(|_| -1.0, 0.0, (-1.0, 1.0)).unwrap();
        assert!(LevyMeasure::density(neg).is_err());
    }

    #[test]
    fn zero_measure_gives_empty_skeleton() {
        let s = sample_skeleton(&LevyTriplet::brownian(1.0).unwrap(), 5.0, 0.0, 3).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn atomic_skeleton_counts_are_poisson() {
        let m = LevyMeasure::atomic(vec![Atom { size: 1.0, rate: 2.0 }]).unwrap();
        let t = LevyTriplet::new(0.0, 0.0, m).unwrap();
        let n = 20_000u64;
        let total: usize = (0..n).map(|s| sample_skeleton(&t, 1.0, 0.0, s).unwrap().len()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 2.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn skeleton_invariants_and_determinism() {
        let t = LevyTriplet::new(0.0, 0.0, ts_two_sided()).unwrap();
        let a = sample_skeleton(&t, 2.0, 0.05, 11).unwrap();
        let b = sample_skeleton(&t, 2.0, 0.05, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.jump_times.len(), a.jump_sizes.len());
        assert!(a.jump_times.windows(2).all(|w| w[0] < w[1]));
        assert!(a.jump_times.iter().all(|t| *t > 0.0 && *t <= 2.0));
        assert!(a.jump_sizes.iter().all(|y| y.abs() >= 0.05 && *y != 0.0));
    }

    #[test]
    fn truncated_density_jump_counts_match_mass() {
        let t = LevyTriplet::new(0.0, 0.0, ts_two_sided()).unwrap();
        // mpmath: 2 ∫_{0.01}^{30} e^{-2y} y^{-3/2} dy.
        let mass = 30.770830863498955553;
        let sampler = JumpSampler::new(t.measure(), 0.01, Tolerance::default()).unwrap();
        assert!((sampler.intensity() - mass).abs() < 1e-7 * mass);
        let n = 10_000u64;
        let (mut times, mut sizes) = (Vec::new(), Vec::new());
        let mut total = 0usize;
        for seed in 0..n {
            sampler.fill_skeleton(1.0, &mut path_rng(seed, 0), &mut times, &mut sizes);
            total += times.len();
        }
        assert_eq!(sample_skeleton(&t, 1.0, 0.01, n - 1).unwrap().jump_times, times);
        let mean = total as f64 / n as f64;
        assert!((mean - mass).abs() <= 4.0 * mass.sqrt() / (n as f64).sqrt(), "mean {mean} vs {mass}");
    }

    #[test]
    fn small_jump_compensator_matches_reference() {
        let s = JumpSampler::new(&gamma_like(), 0.01, Tolerance::default()).unwrap();
        assert!((s.small_jump_compensator() - 1.2672950851052139149).abs() < 1e-8);
    }

    #[test]
    fn density_requires_positive_threshold() {
        let t = LevyTriplet::new(0.0, 0.0, ts_two_sided()).unwrap();
        assert!(sample_skeleton(&t, 1.0, 0.0, 1).is_err());
        let fam = DensityFamily::TemperedStable {
            c_neg: 1.0,
            c_pos: 1.0,
            decay_neg: 1.0,
            decay_pos: 1.0,
            alpha: 1.9,
        };
        let heavy = LevyMeasure::density(JumpDensity::from_family(fam, (-10.0, 10.0)).unwrap()).unwrap();
        let err = JumpSampler::new(&heavy, 1e-7, Tolerance::default()).unwrap_err();
        assert!(matches!(err, Error::InfiniteIntensity { .. }), "{err:?}");
    }

    #[test]
    fn empirical_characteristic_function_matches_exponent() {
        let m = LevyMeasure::atomic(vec![Atom { size: 0.5, rate: 1.5 }, Atom { size: -1.5, rate: 0.7 }]).unwrap();
        let trip = LevyTriplet::new(0.3, 0.4, m).unwrap();
        let sampler = DriverSampler::new(&trip, 0.0, Tolerance::default()).unwrap();
        let (t, n) = (0.7, 100_000u64);
        let draws: Vec<f64> = (0..n).map(|i| sampler.sample_increment(t, &mut path_rng(99, i))).collect();
        for k in 1..=10 {
            let xi = 0.35 * k as f64;
            let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
            for z in &draws {
                let (c, s) = ((xi * z).cos(), (xi * z).sin());
                sc += c;
                ss += s;
                sc2 += c * c;
                ss2 += s * s;
            }
            let nf = n as f64;
            let (mc, ms) = (sc / nf, ss / nf);
            let (se_c, se_s) = (((sc2 / nf - mc * mc) / nf).sqrt(), ((ss2 / nf - ms * ms) / nf).sqrt());
            let target = (-t * characteristic_exponent(&trip, xi).unwrap()).exp();
            assert!((mc - target.re).abs() <= 4.0 * se_c, "xi={xi} re");
            assert!((ms - target.im).abs() <= 4.0 * se_s, "xi={xi} im");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hermitian_and_nonnegative_real_part(xi in -20.0f64..20.0, ell in -2.0f64..2.0, q in 0.0f64..3.0,
                                                   y1 in 0.05f64..3.0, r1 in 0.1f64..5.0, y2 in -3.0f64..-0.05, r2 in 0.1f64..5.0) {
                let m = LevyMeasure::atomic(vec![Atom { size: y1, rate: r1 }, Atom { size: y2, rate: r2 }]).unwrap();
                let t = LevyTriplet::new(ell, q, m).unwrap();
                let a = characteristic_exponent(&t, xi).unwrap();
                let b = characteristic_exponent(&t, -xi).unwrap();
                prop_assert!((a - b.conj()).norm() <= 1e-12 * (1.0 + a.norm()));
                prop_assert!(a.re >= -1e-12);
            }
        }

        #[test]
        fn density_exponent_is_hermitian_on_grid() {
            let t = LevyTriplet::new(0.1, 0.0, gamma_like()).unwrap();
            for k in 0..12 {
                let xi = 0.7 * k as f64 - 4.0;
                let a = characteristic_exponent(&t, xi).unwrap();
                let b = characteristic_exponent(&t, -xi).unwrap();
                assert!((a - b.conj()).norm() < 1e-9);
                assert!(a.re >= -1e-9);
            }
        }
    }
}
