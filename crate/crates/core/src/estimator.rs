//! Path-wise moment accumulation and the small-time extrapolation shared by
//! the symbol and semigroup estimators.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// First and second moments of a fixed-length real vector observed once per
/// path. Sums are taken around a shift (the first observation) so that a
/// sample with no variance has exactly zero covariance.
#[derive(Debug, Clone)]
pub struct Moments {
    dim: usize,
    n: u64,
    shift: Vec<f64>,
    sum: Vec<CompensatedSum>,
    cross: Vec<CompensatedSum>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            n: 0,
            shift: vec![0.0; dim],
            sum: vec![CompensatedSum::new(); dim],
            cross: vec![CompensatedSum::new(); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        if self.n == 0 {
            self.shift.copy_from_slice(x);
        }
        self.n += 1;
        for i in 0..self.dim {
            let di = x[i] - self.shift[i];
            self.sum[i].add(di);
            for j in i..self.dim {
                self.cross[i * self.dim + j].add(di * (x[j] - self.shift[j]));
            }
        }
    }

    pub fn merge(&mut self, other: Moments) {
        assert_eq!(self.dim, other.dim, "merging moments of different dimension");
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other;
            return;
        }
        let nb = other.n as f64;
        let d: Vec<f64> = (0..self.dim).map(|i| other.shift[i] - self.shift[i]).collect();
        for i in 0..self.dim {
            for j in i..self.dim {
                let c = &mut self.cross[i * self.dim + j];
                c.merge(&other.cross[i * other.dim + j]);
                if d[i] != 0.0 || d[j] != 0.0 {
                    c.add(d[i] * other.sum[j].value());
                    c.add(d[j] * other.sum[i].value());
                    c.add(nb * d[i] * d[j]);
                }
            }
        }
        for i in 0..self.dim {
            self.sum[i].merge(&other.sum[i]);
            if d[i] != 0.0 {
                self.sum[i].add(nb * d[i]);
            }
        }
        self.n += other.n;
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.shift[i] + self.sum[i].value() / self.n as f64
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.n as f64;
        let c = (self.cross[i * self.dim + j].value() - self.sum[i].value() * self.sum[j].value() / n) / (n - 1.0);
        if i == j {
            c.max(0.0)
        } else {
            c
        }
    }

    /// Standard error of the mean of component `i`.
    pub fn stderr(&self, i: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.covariance(i, i) / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub t: f64,
    pub mean: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub stderr: (f64, f64),
}

/// Diagnostics of the linear-in-`t` fit through the ladder means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub slope: Complex64,
    /// Square root of the weighted residual sum of squares, per component.
    pub residual: (f64, f64),
    /// `false` when the ladder has a single time and no fit was made.
    pub extrapolated: bool,
}

/// A Monte-Carlo estimate of a `t ↓ 0` limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimate: Complex64,
    pub stderr: (f64, f64),
    /// Sorted by descending `t`.
    pub t_ladder: Vec<LadderPoint>,
    pub radius: f64,
    pub n_paths: u64,
    pub extrapolation: Extrapolation,
}

/// Sorts a ladder descending and checks it is usable.
pub fn normalize_ladder(ladder: &[f64]) -> Result<Vec<f64>> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("time ladder is empty".into()));
    }
    let mut l = ladder.to_vec();
    for &t in &l {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param("ladder time", "t > 0", t));
        }
    }
    l.sort_by(|a, b| b.total_cmp(a));
    if l.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!("time ladder has repeated entries: {ladder:?}")));
    }
    Ok(l)
}

struct ComponentFit {
    intercept: f64,
    stderr: f64,
    slope: f64,
    residual: f64,
}

fn fit_component(ladder: &[f64], m: &Moments, offset: usize) -> ComponentFit {
    let k = ladder.len();
    let idx = |i: usize| 2 * i + offset;
    let means: Vec<f64> = (0..k).map(|i| m.mean(idx(i))).collect();
    let ses: Vec<f64> = (0..k).map(|i| m.stderr(idx(i))).collect();
    if k == 1 {
        return ComponentFit {
            intercept: means[0],
            stderr: ses[0],
            slope: 0.0,
            residual: 0.0,
        };
    }
    let w: Vec<f64> = if ses.iter().all(|s| *s > 0.0) {
        ses.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; k]
    };
    let total: f64 = w.iter().sum();
    let tbar = w.iter().zip(ladder).map(|(w, t)| w * t).sum::<f64>() / total;
    let sxx: f64 = w.iter().zip(ladder).map(|(w, t)| w * (t - tbar).powi(2)).sum();
    let c: Vec<f64> = (0..k).map(|i| w[i] / total - tbar * w[i] * (ladder[i] - tbar) / sxx).collect();
    let d: Vec<f64> = (0..k).map(|i| w[i] * (ladder[i] - tbar) / sxx).collect();
    let intercept: f64 = c.iter().zip(&means).map(|(c, m)| c * m).sum();
    let slope: f64 = d.iter().zip(&means).map(|(d, m)| d * m).sum();
    // The ladder means share paths, so the intercept variance needs the full
    // covariance across ladder times.
    let mut var = 0.0;
    for i in 0..k {
        for j in 0..k {
            var += c[i] * c[j] * m.covariance(idx(i), idx(j));
        }
    }
    let n = m.count().max(1) as f64;
    let residual = (0..k).map(|i| w[i] * (means[i] - intercept - slope * ladder[i]).powi(2)).sum::<f64>().sqrt();
    ComponentFit {
        intercept,
        stderr: (var.max(0.0) / n).sqrt(),
        slope,
        residual,
    }
}

/// Builds the estimate from per-path observations laid out as
/// `[re(t_0), im(t_0), re(t_1), im(t_1), …]` for a descending ladder.
pub fn ladder_result(ladder: &[f64], m: &Moments, radius: f64) -> EstimatorResult {
    assert_eq!(m.dim(), 2 * ladder.len());
    let re = fit_component(ladder, m, 0);
    let im = fit_component(ladder, m, 1);
    let t_ladder = ladder
        .iter()
        .enumerate()
        .map(|(i, &t)| LadderPoint {
            t,
            mean: Complex64::new(m.mean(2 * i), m.mean(2 * i + 1)),
            stderr: (m.stderr(2 * i), m.stderr(2 * i + 1)),
        })
        .collect();
    EstimatorResult {
        estimate: Complex64::new(re.intercept, im.intercept),
        stderr: (re.stderr, im.stderr),
        t_ladder,
        radius,
        n_paths: m.count(),
        extrapolation: Extrapolation {
            slope: Complex64::new(re.slope, im.slope),
            residual: (re.residual, im.residual),
            extrapolated: ladder.len() > 1,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_has_zero_variance_after_merges() {
        let mut a = Moments::new(2);
        let mut b = Moments::new(2);
        for _ in 0..10 {
            a.push(&[0.1, -3.7]);
            b.push(&[0.1, -3.7]);
        }
        a.merge(b);
        assert_eq!(a.covariance(0, 0), 0.0);
        assert_eq!(a.covariance(0, 1), 0.0);
        assert_eq!(a.mean(1), -3.7);
        assert_eq!(a.count(), 20);
    }

    #[test]
    fn merge_agrees_with_direct_accumulation() {
        let xs: Vec<[f64; 2]> = (0..500).map(|i| [(i as f64 * 0.31).sin() + 5.0, (i as f64 * 0.17).cos() * 2.0]).collect();
        let mut whole = Moments::new(2);
        xs.iter().for_each(|x| whole.push(x));
        let mut a = Moments::new(2);
        let mut b = Moments::new(2);
        xs[..137].iter().for_each(|x| a.push(x));
        xs[137..].iter().for_each(|x| b.push(x));
        a.merge(b);
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            assert!((a.covariance(i, j) - whole.covariance(i, j)).abs() < 1e-12);
        }
        assert!((a.mean(0) - whole.mean(0)).abs() < 1e-14);
        let n = xs.len() as f64;
        let mean0 = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let var0 = xs.iter().map(|x| (x[0] - mean0).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((whole.covariance(0, 0) - var0).abs() < 1e-12);
    }

    #[test]
    fn exact_line_is_extrapolated_exactly() {
        // Two paths whose ladder values lie on a + b t exactly.
        let ladder = [0.02, 0.01, 0.005];
        let mut m = Moments::new(6);
        for shift in [0.0, 1.0] {
            let row: Vec<f64> = ladder.iter().flat_map(|t| [2.0 + shift + 3.0 * t, -1.0 + 0.5 * t]).collect();
            m.push(&row);
        }
        let r = ladder_result(&ladder, &m, 1.0);
        assert!((r.estimate - Complex64::new(2.5, -1.0)).norm() < 1e-12);
        assert!((r.extrapolation.slope - Complex64::new(3.0, 0.5)).norm() < 1e-9);
        assert!(r.extrapolation.residual.0 < 1e-9);
        // Real parts differ by 1 on every rung: intercept se = 0.5.
        assert!((r.stderr.0 - 0.5).abs() < 1e-12);
        assert_eq!(r.stderr.1, 0.0);
    }

    #[test]
    fn single_time_is_flagged() {
        let mut m = Moments::new(2);
        m.push(&[1.0, 2.0]);
        m.push(&[3.0, 2.0]);
        let r = ladder_result(&[0.1], &m, 1.0);
        assert!(!r.extrapolation.extrapolated);
        assert_eq!(r.estimate, Complex64::new(2.0, 2.0));
    }

    #[test]
    fn ladder_validation() {
        assert_eq!(normalize_ladder(&[0.005, 0.02, 0.01]).unwrap(), vec![0.02, 0.01, 0.005]);
        assert!(normalize_ladder(&[]).is_err());
        assert!(normalize_ladder(&[0.01, 0.0]).is_err());
        assert!(normalize_ladder(&[0.01, 0.01]).is_err());
    }
}
