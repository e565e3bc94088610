//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature for complex
//! integrands on finite intervals with user supplied breakpoints.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-10, rel: 1e-8 }
    }
}

impl Tolerance {
    pub fn target(&self, value: Complex64) -> f64 {
        self.abs.max(self.rel * value.norm())
    }
}

/// Value of an integral together with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
}

impl Integral {
    pub const ZERO: Integral = Integral {
        value: Complex64::new(0.0, 0.0),
        error: 0.0,
    };

    pub fn exact(value: Complex64) -> Self {
        Self { value, error: 0.0 }
    }
}

impl std::ops::Add for Integral {
    type Output = Integral;

    fn add(self, rhs: Integral) -> Integral {
        Integral {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

const MAX_SEGMENTS: usize = 4000;

// Kronrod abscissae; odd indices are the 10-point Gauss nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_600_017_182,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

fn gauss_kronrod<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).norm();
    Segment { a, b, value, error }
}

/// Integrates a single-segment smooth function with one 21-point Kronrod rule
/// (no adaptivity). Used for tabulating cell masses.
pub fn kronrod_rule<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    gauss_kronrod(&|x| Complex64::new(f(x), 0.0), a, b).value.re
}

/// Integrates `f` over `[points[0], points[last]]`. Interior points are
/// forced segment boundaries, which is where integrand discontinuities
/// must be placed.
pub fn integrate<F>(f: F, points: &[f64], tol: Tolerance) -> Result<Integral>
where
    F: Fn(f64) -> Complex64,
{
    if points.len() < 2 {
        return Ok(Integral::ZERO);
    }
    if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(format!(
            "quadrature breakpoints must be finite and ascending: {points:?}"
        )));
    }
    let mut segments: Vec<Segment> = points.windows(2).filter(|w| w[1] > w[0]).map(|w| gauss_kronrod(&f, w[0], w[1])).collect();

    loop {
        let value: Complex64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::QuadratureFailure {
                achieved: f64::INFINITY,
                requested: tol.abs,
                subdivisions: segments.len(),
            });
        }
        let target = tol.target(value);
        if error <= target {
            return Ok(Integral { value, error });
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::QuadratureFailure {
                achieved: error,
                requested: target,
                subdivisions: segments.len(),
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one segment");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // Interval exhausted at machine resolution.
            return Err(Error::QuadratureFailure {
                achieved: error,
                requested: target,
                subdivisions: segments.len() + 1,
            });
        }
        segments.push(gauss_kronrod(&f, s.a, mid));
        segments.push(gauss_kronrod(&f, mid, s.b));
    }
}

pub fn integrate_real<F>(f: F, points: &[f64], tol: Tolerance) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let r = integrate(|x| Complex64::new(f(x), 0.0), points, tol)?;
    Ok((r.value.re, r.error))
}
