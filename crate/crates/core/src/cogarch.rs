//! COGARCH model parameters and the exact dynamics of the log-variance
//! `V = log σ²` between and across jumps of the driver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::LevyTriplet;

/// `(β, δ, λ)` and the driving Lévy triplet.
#[derive(Debug, Clone)]
pub struct CogarchParams {
    beta: f64,
    delta: f64,
    lam: f64,
    driver: LevyTriplet,
}

impl CogarchParams {
    pub fn new(beta: f64, delta: f64, lam: f64, driver: LevyTriplet) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", "0 < delta < 1", delta));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", "beta > 0", beta));
        }
        if !(lam >= 0.0 && lam.is_finite()) {
            return Err(Error::param("lambda", "lambda >= 0", lam));
        }
        Ok(Self { beta, delta, lam, driver })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lam
    }

    pub fn driver(&self) -> &LevyTriplet {
        &self.driver
    }

    /// `log δ < 0`, the mean-reversion rate of σ² between jumps.
    pub fn log_delta(&self) -> f64 {
        self.delta.ln()
    }

    /// `λ/δ`, the volatility feedback of a squared jump.
    pub fn jump_ratio(&self) -> f64 {
        self.lam / self.delta
    }

    /// `log(−β/log δ)`, the log-variance at which the jump-free flow is at rest.
    pub fn fixed_point_log_variance(&self) -> f64 {
        (-self.beta / self.log_delta()).ln()
    }

    /// `log(1 + (λ/δ) w²)`: the log-variance jump caused by a driver jump `w`.
    #[inline]
    pub fn log_variance_jump(&self, w: f64) -> f64 {
        (self.jump_ratio() * w * w).ln_1p()
    }
}

/// A point `(g, v)` of the state space; `v = log σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub g: f64,
    pub v: f64,
}

impl StatePoint {
    pub const fn new(g: f64, v: f64) -> Self {
        Self { g, v }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.g, self.v]
    }

    /// `σ = e^{v/2}`.
    pub fn sigma(&self) -> f64 {
        (0.5 * self.v).exp()
    }
}

impl From<[f64; 2]> for StatePoint {
    fn from(x: [f64; 2]) -> Self {
        Self { g: x[0], v: x[1] }
    }
}

/// Exact solution of `dσ²/dt = β + σ² log δ` over a time `dt`, in log form.
///
/// With `v* = log(−β/log δ)`: `σ²(dt) = e^{v*} (1 + (e^{v−v*} − 1) e^{dt log δ})`.
pub fn evolve_volatility_between_jumps(v: f64, dt: f64, params: &CogarchParams) -> f64 {
    debug_assert!(dt >= 0.0, "negative time step {dt}");
    if dt == 0.0 {
        return v;
    }
    let fixed = params.fixed_point_log_variance();
    let decay = (dt * params.log_delta()).exp();
    let gap = v - fixed;
    if gap < 700.0 {
        fixed + (gap.exp_m1() * decay).ln_1p()
    } else {
        // e^{gap} overflows; σ²/e^{v*} = e^{gap}·decay + (1 − decay).
        let a = gap + dt * params.log_delta();
        let b = (-(dt * params.log_delta()).exp_m1()).ln();
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        fixed + hi + (lo - hi).exp().ln_1p()
    }
}

/// `∫_0^dt σ²(s) ds` along the jump-free flow started at log-variance `v`.
pub fn integrated_variance(v: f64, dt: f64, params: &CogarchParams) -> f64 {
    if dt <= 0.0 {
        return 0.0;
    }
    let l = params.log_delta();
    let fixed = params.fixed_point_log_variance();
    let s_star = fixed.exp();
    // ∫ σ*² (1 + (e^{v−v*} − 1) e^{s l}) ds
    s_star * (dt + (v - fixed).exp_m1() * (dt * l).exp_m1() / l)
}

/// Effect of a driver jump `dz` on the state: `ΔG = σ_- dz`, `ΔV = log(1 + (λ/δ)dz²)`.
pub fn apply_jump(state: StatePoint, dz: f64, params: &CogarchParams) -> StatePoint {
    StatePoint {
        g: state.g + state.sigma() * dz,
        v: state.v + params.log_variance_jump(dz),
    }
}
