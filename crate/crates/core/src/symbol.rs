//! Closed-form symbol of the COGARCH pair `(G, V)`, the image measure of the
//! driver's jumps under `f_v`, and the symbol of Lévy-driven SDEs.
//!
//! With `f_v(w) = (e^{v/2} w, log(1 + (λ/δ) w²))` and `Ñ_v = N ∘ f_v⁻¹`,
//!
//! ```text
//! p((g, v), ξ) = −i ξ₁ b₁(v) − i ξ₂ b₂(v) + ½ ξ₁² e^v Q
//!                − ∫ (e^{i z·ξ} − 1 − i z·ξ 1{|z₁|<1} 1{|z₂|<1}) Ñ_v(dz)
//! ```
//!
//! where `b₁, b₂` are given in [`DriftCoefficients`]. Integrals against
//! `Ñ_v` are always pulled back to `N`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cogarch::{CogarchParams, StatePoint};
use crate::error::{Error, Result};
use crate::levy::{expi_m1, expi_m1_mi, LevyMeasure};
use crate::quadrature::{Integral, Tolerance};

/// `f_v(w)`.
#[inline]
pub fn map_jump(w: f64, v: f64, params: &CogarchParams) -> [f64; 2] {
    [(0.5 * v).exp() * w, params.log_variance_jump(w)]
}

/// `1{|z₁| < 1}·1{|z₂| < 1}`.
#[inline]
pub fn in_truncation_box(z: [f64; 2]) -> bool {
    z[0].abs() < 1.0 && z[1].abs() < 1.0
}

/// A closed rectangle `[lo₁, hi₁] × [lo₂, hi₂]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rectangle {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if !(0..2).all(|i| lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
            return Err(Error::InvalidArgument(format!("rectangle needs finite lo < hi, got {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, z: [f64; 2]) -> bool {
        (0..2).all(|i| z[i] >= self.lo[i] && z[i] <= self.hi[i])
    }

    pub fn contains_origin(&self) -> bool {
        self.contains([0.0, 0.0])
    }
}

/// `Ñ((g, v), ·)`: the driver's jump measure pushed forward by `f_v`.
#[derive(Debug, Clone)]
pub struct ImageMeasureSpec {
    pub base: LevyMeasure,
    pub v: f64,
    /// `λ/δ`.
    pub jump_ratio: f64,
}

impl ImageMeasureSpec {
    pub fn new(params: &CogarchParams, v: f64) -> Self {
        Self {
            base: params.driver().measure().clone(),
            v,
            jump_ratio: params.jump_ratio(),
        }
    }

    #[inline]
    pub fn map(&self, w: f64) -> [f64; 2] {
        [(0.5 * self.v).exp() * w, (self.jump_ratio * w * w).ln_1p()]
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        image_breakpoints(self.v, self.jump_ratio)
    }

    /// `N({w : f_v(w) ∈ A})` for a rectangle `A` away from the origin.
    pub fn rectangle_mass(&self, rect: &Rectangle, tol: Tolerance) -> Result<f64> {
        image_rectangle_mass(&self.base, self.v, self.jump_ratio, rect, tol)
    }
}

/// `Ñ((g, v), A)` for a rectangle `A` away from the origin.
pub fn image_rectangle_mass(base: &LevyMeasure, v: f64, jump_ratio: f64, rect: &Rectangle, tol: Tolerance) -> Result<f64> {
    if rect.contains_origin() {
        return Err(Error::InvalidArgument(format!("rectangle {rect:?} contains the origin")));
    }
    let s = (0.5 * v).exp();
    if let LevyMeasure::Atomic(atoms) = base {
        let map = |w: f64| [s * w, (jump_ratio * w * w).ln_1p()];
        return Ok(atoms.iter().filter(|a| rect.contains(map(a.size))).map(|a| a.rate).sum());
    }
    let first = (rect.lo[0] / s, rect.hi[0] / s);
    let second: Vec<(f64, f64)> = if jump_ratio == 0.0 {
        if rect.lo[1] <= 0.0 && rect.hi[1] >= 0.0 {
            vec![(f64::NEG_INFINITY, f64::INFINITY)]
        } else {
            vec![]
        }
    } else if rect.hi[1] < 0.0 {
        vec![]
    } else {
        let r_lo = (rect.lo[1].max(0.0).exp_m1() / jump_ratio).sqrt();
        let r_hi = (rect.hi[1].exp_m1() / jump_ratio).sqrt();
        vec![(-r_hi, -r_lo), (r_lo, r_hi)]
    };
    let mut mass = 0.0;
    for (a, b) in second {
        let (lo, hi) = (a.max(first.0), b.min(first.1));
        if lo < hi {
            mass += base.interval_mass(lo, hi, tol)?;
        }
    }
    Ok(mass)
}

/// Jump sizes `w` where `|w|`, `|e^{v/2} w|` or `log(1 + (λ/δ)w²)` cross 1.
pub fn image_breakpoints(v: f64, jump_ratio: f64) -> Vec<f64> {
    let mut b = vec![1.0, (-0.5 * v).exp()];
    if jump_ratio > 0.0 {
        b.push(((std::f64::consts::E - 1.0) / jump_ratio).sqrt());
    }
    let mut all: Vec<f64> = b.iter().flat_map(|x| [-x, *x]).filter(|x| x.is_finite()).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// `∫ h(z) Ñ(dz) = ∫ h(f_v(w)) N(dw)`. The caller guarantees integrability:
/// `h` bounded and `O(|z|²)` at the origin (or zero near it).
pub fn integrate_against_image<H>(h: H, spec: &ImageMeasureSpec, tol: Tolerance) -> Result<Integral>
where
    H: Fn([f64; 2]) -> Complex64,
{
    spec.base.integrate(|w| h(spec.map(w)), &spec.breakpoints(), tol)
}

/// [`integrate_against_image`] for `Ñ((g, v), ·)` without building the spec.
pub fn integrate_image<H>(h: H, v: f64, params: &CogarchParams, tol: Tolerance) -> Result<Integral>
where
    H: Fn([f64; 2]) -> Complex64,
{
    params
        .driver()
        .measure()
        .integrate(|w| h(map_jump(w, v, params)), &image_breakpoints(v, params.jump_ratio()), tol)
}

/// First- and second-order coefficients at log-variance `v`:
///
/// * `b₁ = e^{v/2} (ℓ + ∫ y (1{f_v(y) ∈ box} − 1{|y|<1}) N(dy))`
/// * `b₂ = β e^{−v} + log δ + ∫ log(1 + (λ/δ)y²) 1{f_v(y) ∈ box} N(dy)`
/// * `q₁₁ = e^v Q`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCoefficients {
    pub b1: f64,
    pub b2: f64,
    pub q11: f64,
    pub quadrature_error: f64,
}

pub fn drift_coefficients(v: f64, params: &CogarchParams, tol: Tolerance) -> Result<DriftCoefficients> {
    let s = (0.5 * v).exp();
    let brk = image_breakpoints(v, params.jump_ratio());
    let measure = params.driver().measure();
    let d1 = measure.integrate(
        |y| {
            let inside = in_truncation_box(map_jump(y, v, params)) as i32 as f64;
            let small = (y.abs() < 1.0) as i32 as f64;
            Complex64::new(y * (inside - small), 0.0)
        },
        &brk,
        tol,
    )?;
    let d2 = measure.integrate(
        |y| {
            let z = map_jump(y, v, params);
            Complex64::new(if in_truncation_box(z) { z[1] } else { 0.0 }, 0.0)
        },
        &brk,
        tol,
    )?;
    Ok(DriftCoefficients {
        b1: s * (params.driver().drift() + d1.value.re),
        b2: params.beta() * (-v).exp() + params.log_delta() + d2.value.re,
        q11: v.exp() * params.driver().gaussian(),
        quadrature_error: s * d1.error + d2.error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolValue {
    pub value: Complex64,
    pub quadrature_error: f64,
}

/// The symbol at a fixed state, with the drift coefficients computed once.
#[derive(Debug, Clone)]
pub struct StateSymbol {
    coefficients: DriftCoefficients,
    image: ImageMeasureSpec,
    tol: Tolerance,
}

impl StateSymbol {
    pub fn new(x: StatePoint, params: &CogarchParams, tol: Tolerance) -> Result<Self> {
        Ok(Self {
            coefficients: drift_coefficients(x.v, params, tol)?,
            image: ImageMeasureSpec::new(params, x.v),
            tol,
        })
    }

    pub fn coefficients(&self) -> &DriftCoefficients {
        &self.coefficients
    }

    pub fn image(&self) -> &ImageMeasureSpec {
        &self.image
    }

    /// `∫ (e^{iz·ξ} − 1 − iz·ξ 1_box(z)) Ñ(dz)`.
    pub fn jump_part(&self, xi: [f64; 2]) -> Result<Integral> {
        integrate_against_image(
            |z| {
                let th = z[0] * xi[0] + z[1] * xi[1];
                if in_truncation_box(z) {
                    expi_m1_mi(th)
                } else {
                    expi_m1(th)
                }
            },
            &self.image,
            self.tol,
        )
    }

    pub fn eval(&self, xi: [f64; 2]) -> Result<SymbolValue> {
        let c = &self.coefficients;
        let jumps = self.jump_part(xi)?;
        let local = Complex64::new(0.5 * xi[0] * xi[0] * c.q11, -(xi[0] * c.b1 + xi[1] * c.b2));
        Ok(SymbolValue {
            value: local - jumps.value,
            quadrature_error: jumps.error + c.quadrature_error * (xi[0].abs() + xi[1].abs()),
        })
    }
}

/// `p(x, ξ)` with the default quadrature tolerance. Independent of `x.g`.
pub fn cogarch_symbol(x: StatePoint, xi: [f64; 2], params: &CogarchParams) -> Result<SymbolValue> {
    cogarch_symbol_with_tolerance(x, xi, params, Tolerance::default())
}

pub fn cogarch_symbol_with_tolerance(x: StatePoint, xi: [f64; 2], params: &CogarchParams, tol: Tolerance) -> Result<SymbolValue> {
    StateSymbol::new(x, params, tol)?.eval(xi)
}

/// Symbol `ψ(Φ(x)ᵀ ξ)` of `dX = Φ(X_-) dZ` for a Lévy process `Z` in `ℝⁿ`
/// with exponent `ψ`. `phi(x)` returns the `d × n` matrix as rows.
pub fn sde_symbol<P, S>(phi: P, psi: S, x: &[f64], xi: &[f64]) -> Result<Complex64>
where
    P: Fn(&[f64]) -> Vec<Vec<f64>>,
    S: Fn(&[f64]) -> Result<Complex64>,
{
    let m = phi(x);
    if m.len() != xi.len() {
        return Err(Error::DimensionMismatch(format!("Φ(x) has {} rows but ξ has dimension {}", m.len(), xi.len())));
    }
    if m.len() != x.len() {
        return Err(Error::DimensionMismatch(format!("Φ(x) has {} rows but x has dimension {}", m.len(), x.len())));
    }
    let n = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("Φ(x) rows have different lengths".into()));
    }
    let eta: Vec<f64> = (0..n).map(|j| m.iter().zip(xi).map(|(r, x)| r[j] * x).sum()).collect();
    psi(&eta)
}
