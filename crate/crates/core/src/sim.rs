//! Jump-adapted simulation of `(G, V)` with optional stopping at the exit
//! from a max-norm ball.
//!
//! Between jumps `V` follows the exact volatility flow, always recomputed from
//! the last jump so that a jump-free stretch reproduces the flow bitwise. The
//! increment of `G` over an inter-event interval is
//! `ℓ̂ ∫σ du + √Q · N(0, ∫σ² du)`, with `∫σ²` in closed form and `∫σ` by Simpson.
//! `G` is tracked as a displacement from its start, so paths from `(g, v)`
//! and `(g', v)` with the same random stream have identical displacements.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cogarch::{evolve_volatility_between_jumps, integrated_variance, CogarchParams, StatePoint};
use crate::error::{Error, Result};
use crate::levy::DriverSampler;
use crate::parallel;
use crate::quadrature::Tolerance;
use crate::rng::{path_rng, PathRng};

/// Default small-jump truncation for drivers with a Lévy density.
pub const DEFAULT_TRUNCATION: f64 = 1e-2;

/// State relative to the start: `dg = G_t − g`, and the absolute `v = V_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub dg: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    /// Index of the jump time in [`SamplePath::times`].
    pub index: usize,
    pub t: f64,
    pub dz: f64,
    pub dg: f64,
    pub dv: f64,
    /// Left limit of the state at the jump time.
    pub pre: PathState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ExitRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub t: f64,
    pub reason: StopReason,
}

/// One simulated path on its event grid (deterministic grid points and jump times).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub start: StatePoint,
    pub times: Vec<f64>,
    pub offsets: Vec<PathState>,
    pub jumps: Vec<JumpRecord>,
    pub stopped_at: Option<StopEvent>,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> StatePoint {
        StatePoint::new(self.start.g + self.offsets[i].dg, self.offsets[i].v)
    }

    pub fn states(&self) -> Vec<StatePoint> {
        (0..self.len()).map(|i| self.state(i)).collect()
    }

    /// Left limit of the state at grid index `i`.
    pub fn left_limit(&self, i: usize) -> PathState {
        self.jumps.iter().find(|j| j.index == i).map_or(self.offsets[i], |j| j.pre)
    }

    pub fn stop_time(&self) -> Option<f64> {
        self.stopped_at.map(|s| s.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub t: f64,
    /// Index into the observation times this grid point realizes.
    pub observation: Option<usize>,
}

/// Deterministic event times `k·step` on `(0, t_max]`, merged with requested
/// observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    points: Vec<GridPoint>,
}

impl TimeGrid {
    pub fn new(t_max: f64, step: f64, observations: &[f64]) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::param("t_max", "must be finite and > 0", t_max));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("step", "must be finite and > 0", step));
        }
        if t_max / step > 5e7 {
            return Err(Error::InvalidArgument(format!("step {step} too small for horizon {t_max}")));
        }
        for &t in observations {
            if !(t > 0.0 && t <= t_max) {
                return Err(Error::param("observation time", "0 < t <= t_max", t));
            }
        }
        let eps = 1e-12 * t_max;
        let n = (t_max / step).floor() as usize;
        let mut times: Vec<f64> = (1..=n).map(|k| k as f64 * step).filter(|t| *t < t_max - eps).collect();
        times.push(t_max);
        let mut points: Vec<GridPoint> = times.into_iter().map(|t| GridPoint { t, observation: None }).collect();
        for (i, &t) in observations.iter().enumerate() {
            match points.iter_mut().find(|p| (p.t - t).abs() <= eps && p.observation.is_none()) {
                Some(p) => {
                    p.t = t;
                    p.observation = Some(i);
                }
                None => points.push(GridPoint { t, observation: Some(i) }),
            }
        }
        points.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { t_max, points })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }
}

/// What the simulator reports at every event time, including `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    /// Left limit at `t`.
    pub pre: PathState,
    /// Value at `t`.
    pub post: PathState,
    pub dz: Option<f64>,
    pub observation: Option<usize>,
    pub stopped: bool,
}

/// Reusable per-thread buffers for the jump skeleton.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    times: Vec<f64>,
    sizes: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    params: CogarchParams,
    driver: DriverSampler,
}

impl Simulator {
    /// `epsilon` truncates small jumps of density drivers; atomic drivers ignore it.
    pub fn new(params: &CogarchParams, epsilon: f64, tol: Tolerance) -> Result<Self> {
        Ok(Self {
            params: params.clone(),
            driver: DriverSampler::new(params.driver(), epsilon, tol)?,
        })
    }

    pub fn params(&self) -> &CogarchParams {
        &self.params
    }

    pub fn driver(&self) -> &DriverSampler {
        &self.driver
    }

    /// Simulates one path from log-variance `v0` and feeds every event to
    /// `visit`. With a `radius`, the path is stopped (held constant) at the
    /// first event where `max(|G − g|, |V − v0|) > radius`.
    pub fn run<R, F>(&self, v0: f64, grid: &TimeGrid, radius: Option<f64>, rng: &mut R, scratch: &mut Scratch, mut visit: F) -> Option<StopEvent>
    where
        R: Rng + ?Sized,
        F: FnMut(&Event),
    {
        let p = &self.params;
        let drift = self.driver.effective_drift();
        let vol = self.driver.volatility();
        self.driver.jumps().fill_skeleton(grid.t_max(), rng, &mut scratch.times, &mut scratch.sizes);
        let (jt, jz) = (&scratch.times, &scratch.sizes);

        let outside = |s: &PathState| radius.is_some_and(|r| s.dg.abs().max((s.v - v0).abs()) > r);

        let mut cur = PathState { dg: 0.0, v: v0 };
        visit(&Event {
            t: 0.0,
            pre: cur,
            post: cur,
            dz: None,
            observation: None,
            stopped: false,
        });
        let (mut t_prev, mut anchor_t, mut anchor_v) = (0.0, 0.0, v0);
        let mut stop: Option<StopEvent> = None;
        let (mut i, mut j) = (0usize, 0usize);
        let pts = grid.points();

        while i < pts.len() {
            let jump_next = j < jt.len() && jt[j] <= pts[i].t;
            let (t, dz, observation) = if jump_next {
                let obs = if jt[j] == pts[i].t { pts[i].observation } else { None };
                if jt[j] == pts[i].t {
                    i += 1;
                }
                j += 1;
                (jt[j - 1], Some(jz[j - 1]), obs)
            } else {
                i += 1;
                (pts[i - 1].t, None, pts[i - 1].observation)
            };

            if stop.is_some() {
                if dz.is_none() || observation.is_some() {
                    visit(&Event {
                        t,
                        pre: cur,
                        post: cur,
                        dz: None,
                        observation,
                        stopped: true,
                    });
                }
                continue;
            }

            let dt = t - t_prev;
            let v_new = evolve_volatility_between_jumps(anchor_v, t - anchor_t, p);
            let mut dg = cur.dg;
            if dt > 0.0 {
                if drift != 0.0 {
                    let v_mid = evolve_volatility_between_jumps(anchor_v, 0.5 * (t_prev + t) - anchor_t, p);
                    let int_sigma = dt / 6.0 * ((0.5 * cur.v).exp() + 4.0 * (0.5 * v_mid).exp() + (0.5 * v_new).exp());
                    dg += drift * int_sigma;
                }
                if vol > 0.0 {
                    let n: f64 = StandardNormal.sample(rng);
                    dg += vol * integrated_variance(cur.v, dt, p).sqrt() * n;
                }
            }
            let pre = PathState { dg, v: v_new };
            assert!(pre.dg.is_finite() && pre.v.is_finite(), "non-finite state {pre:?} at t = {t}");

            let mut post = pre;
            let mut applied = None;
            if outside(&pre) {
                stop = Some(StopEvent {
                    t,
                    reason: StopReason::ExitRadius,
                });
            } else if let Some(z) = dz {
                post = PathState {
                    dg: pre.dg + (0.5 * pre.v).exp() * z,
                    v: pre.v + p.log_variance_jump(z),
                };
                assert!(post.dg.is_finite() && post.v.is_finite(), "non-finite state {post:?} at t = {t}");
                // A jump that leaves V unchanged keeps the old anchor, so V
                // stays on the same deterministic flow.
                if post.v != pre.v {
                    anchor_t = t;
                    anchor_v = post.v;
                }
                applied = Some(z);
                if outside(&post) {
                    stop = Some(StopEvent {
                        t,
                        reason: StopReason::ExitRadius,
                    });
                }
            }
            if dz.is_none() || applied.is_some() || observation.is_some() || stop.is_some() {
                visit(&Event {
                    t,
                    pre,
                    post,
                    dz: applied,
                    observation,
                    stopped: stop.is_some(),
                });
            }
            cur = post;
            t_prev = t;
        }
        stop
    }

    /// Records the full path; `stream` selects the random stream under `seed`.
    pub fn sample_path(&self, start: StatePoint, grid: &TimeGrid, radius: Option<f64>, seed: u64, stream: u64) -> SamplePath {
        let mut rng: PathRng = path_rng(seed, stream);
        let mut scratch = Scratch::default();
        let mut path = SamplePath {
            start,
            times: Vec::with_capacity(grid.points().len() + 1),
            offsets: Vec::with_capacity(grid.points().len() + 1),
            jumps: Vec::new(),
            stopped_at: None,
        };
        let stop = self.run(start.v, grid, radius, &mut rng, &mut scratch, |e| {
            if let Some(dz) = e.dz {
                path.jumps.push(JumpRecord {
                    index: path.times.len(),
                    t: e.t,
                    dz,
                    dg: (0.5 * e.pre.v).exp() * dz,
                    dv: self.params.log_variance_jump(dz),
                    pre: e.pre,
                });
            }
            path.times.push(e.t);
            path.offsets.push(e.post);
        });
        path.stopped_at = stop;
        path
    }
}

/// Simulates a single path from `start` on the grid `k·step`, `k·step ≤ t_max`.
pub fn simulate_path(start: StatePoint, params: &CogarchParams, t_max: f64, step: f64, radius: Option<f64>, seed: u64) -> Result<SamplePath> {
    if let Some(r) = radius {
        if !(r > 0.0) {
            return Err(Error::param("radius", "R > 0", r));
        }
    }
    let sim = Simulator::new(params, DEFAULT_TRUNCATION, Tolerance::default())?;
    let grid = TimeGrid::new(t_max, step, &[])?;
    Ok(sim.sample_path(start, &grid, radius, seed, 0))
}

/// Simulates `n_paths` paths on streams `0..n_paths` of `seed`.
pub fn simulate_batch(
    sim: &Simulator,
    start: StatePoint,
    grid: &TimeGrid,
    radius: Option<f64>,
    n_paths: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<SamplePath>> {
    let parts = parallel::run_chunked(
        n_paths,
        workers,
        Vec::new,
        |acc: &mut Vec<SamplePath>, i| {
            acc.push(sim.sample_path(start, grid, radius, seed, i));
            Ok(())
        },
        |acc, mut other| acc.append(&mut other),
    )?;
    Ok(parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitFraction {
    pub t: f64,
    pub stopped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSummary {
    pub n_paths: usize,
    pub ladder: Vec<ExitFraction>,
}

/// Fraction of paths stopped at or before each time of `ladder`.
pub fn exit_time_statistics<I>(stop_times: I, ladder: &[f64]) -> ExitSummary
where
    I: IntoIterator<Item = Option<f64>>,
{
    let stops: Vec<Option<f64>> = stop_times.into_iter().collect();
    let n = stops.len();
    let ladder = ladder
        .iter()
        .map(|&t| {
            let k = stops.iter().filter(|s| s.is_some_and(|s| s <= t)).count();
            ExitFraction {
                t,
                stopped_fraction: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            }
        })
        .collect();
    ExitSummary { n_paths: n, ladder }
}

/// Exit times of `n_paths` paths started at `start`; only the stop times are kept.
pub fn exit_times(
    sim: &Simulator,
    start: StatePoint,
    grid: &TimeGrid,
    radius: f64,
    n_paths: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<Option<f64>>> {
    parallel::run_chunked(
        n_paths,
        workers,
        || (Vec::new(), Scratch::default()),
        |acc: &mut (Vec<Option<f64>>, Scratch), i| {
            let mut rng = path_rng(seed, i);
            let stop = sim.run(start.v, grid, Some(radius), &mut rng, &mut acc.1, |_| {});
            acc.0.push(stop.map(|s| s.t));
            Ok(())
        },
        |acc, mut other| acc.0.append(&mut other.0),
    )
    .map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{Atom, LevyMeasure, LevyTriplet};

    fn params(driver: LevyTriplet, lam: f64) -> CogarchParams {
        CogarchParams::new(1.0, 0.5, lam, driver).unwrap()
    }

    fn single_atom(size: f64, rate: f64) -> LevyTriplet {
        LevyTriplet::new(0.0, 0.0, LevyMeasure::atomic(vec![Atom { size, rate }]).unwrap()).unwrap()
    }

    #[test]
    fn grid_contains_observations_and_horizon() {
        let g = TimeGrid::new(0.02, 0.005, &[0.02, 0.01, 0.0075]).unwrap();
        let ts: Vec<f64> = g.points().iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![0.005, 0.0075, 0.01, 0.015, 0.02]);
        assert_eq!(g.points()[1].observation, Some(2));
        assert_eq!(g.points()[4].observation, Some(0));
        assert!(TimeGrid::new(1.0, 0.0, &[]).is_err());
        assert!(TimeGrid::new(1.0, 0.1, &[1.5]).is_err());
    }

    #[test]
    fn step_must_be_positive() {
        let p = params(LevyTriplet::zero(), 0.2);
        assert!(simulate_path(StatePoint::new(0.0, 0.0), &p, 1.0, -0.1, None, 1).is_err());
    }

    #[test]
    fn zero_driver_follows_flow_exactly() {
        let p = params(LevyTriplet::zero(), 0.2);
        let path = simulate_path(StatePoint::new(3.0, -0.7), &p, 2.0, 0.05, None, 9).unwrap();
        assert_eq!(path.states()[0], StatePoint::new(3.0, -0.7));
        for (t, s) in path.times.iter().zip(path.states()) {
            assert_eq!(s.g, 3.0);
            assert_eq!(s.v, evolve_volatility_between_jumps(-0.7, *t, &p));
        }
    }

    #[test]
    fn jump_records_are_exact() {
        let p = params(single_atom(0.8, 3.0), 0.3);
        let path = simulate_path(StatePoint::new(0.0, 0.1), &p, 3.0, 0.1, None, 4).unwrap();
        assert!(!path.jumps.is_empty());
        for j in &path.jumps {
            assert_eq!(j.dv, p.log_variance_jump(j.dz));
            assert_eq!(j.dg, (0.5 * j.pre.v).exp() * j.dz);
            assert_eq!(path.offsets[j.index].v, j.pre.v + j.dv);
            assert_eq!(path.offsets[j.index].dg, j.pre.dg + j.dg);
            assert_eq!(path.times[j.index], j.t);
        }
        assert!(path.times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn variance_never_below_jump_free_flow() {
        let p = params(single_atom(0.6, 4.0), 0.4);
        for seed in 0..50 {
            let path = simulate_path(StatePoint::new(0.0, 0.5), &p, 2.0, 0.05, None, seed).unwrap();
            for (t, s) in path.times.iter().zip(path.states()) {
                assert!(s.v >= evolve_volatility_between_jumps(0.5, *t, &p) - 1e-12);
            }
        }
    }

    #[test]
    fn no_feedback_means_seed_independent_variance() {
        let p = params(
            LevyTriplet::new(0.3, 1.0, LevyMeasure::atomic(vec![Atom { size: 0.5, rate: 2.0 }]).unwrap()).unwrap(),
            0.0,
        );
        let a = simulate_path(StatePoint::new(0.0, 0.2), &p, 1.0, 0.01, None, 1).unwrap();
        let b = simulate_path(StatePoint::new(0.0, 0.2), &p, 1.0, 0.01, None, 2).unwrap();
        let grid_v = |path: &SamplePath| -> Vec<(f64, f64)> {
            path.times
                .iter()
                .zip(&path.offsets)
                .filter(|(t, _)| ((**t / 0.01).round() * 0.01 - **t).abs() < 1e-12)
                .map(|(t, s)| (*t, s.v))
                .collect()
        };
        assert_eq!(grid_v(&a), grid_v(&b));
    }

    #[test]
    fn first_component_translation_is_exact() {
        let p = params(
            LevyTriplet::new(0.2, 0.7, LevyMeasure::atomic(vec![Atom { size: -0.9, rate: 1.0 }]).unwrap()).unwrap(),
            0.3,
        );
        let a = simulate_path(StatePoint::new(-10.0, 0.4), &p, 1.0, 0.01, Some(2.0), 5).unwrap();
        let b = simulate_path(StatePoint::new(10.0, 0.4), &p, 1.0, 0.01, Some(2.0), 5).unwrap();
        assert_eq!(a.offsets, b.offsets);
        assert_eq!(a.jumps, b.jumps);
        assert_eq!(a.stopped_at, b.stopped_at);
    }

    #[test]
    fn stopped_path_is_constant_after_exit() {
        let p = params(LevyTriplet::brownian(1.0).unwrap(), 0.25);
        let path = simulate_path(StatePoint::new(0.0, 0.0), &p, 2.0, 0.01, Some(0.2), 3).unwrap();
        let stop = path.stopped_at.expect("Brownian path leaves a 0.2 ball within t = 2");
        let k = path.times.iter().position(|t| *t == stop.t).unwrap();
        let s = path.offsets[k];
        assert!(s.dg.abs().max(s.v.abs()) > 0.2);
        assert!(path.offsets[k..].iter().all(|x| *x == s));
        assert!(path.offsets[..k].iter().all(|x| x.dg.abs().max(x.v.abs()) <= 0.2));
        assert_eq!(*path.times.last().unwrap(), 2.0);
    }

    #[test]
    fn brownian_time_changed_variance() {
        // λ = 0, N = 0, Q = 1: Var(G_t − g) = ∫_0^t e^{V_s} ds.
        let p = params(LevyTriplet::brownian(1.0).unwrap(), 0.0);
        let sim = Simulator::new(&p, DEFAULT_TRUNCATION, Tolerance::default()).unwrap();
        let grid = TimeGrid::new(1.0, 0.25, &[]).unwrap();
        let n = 100_000u64;
        let mut scratch = Scratch::default();
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let mut last = 0.0;
            sim.run(0.0, &grid, None, &mut path_rng(17, i), &mut scratch, |e| last = e.post.dg);
            s1 += last;
            s2 += last * last;
            s4 += last.powi(4);
        }
        let nf = n as f64;
        let var = s2 / nf - (s1 / nf).powi(2);
        let se = ((s4 / nf - (s2 / nf).powi(2)) / nf).sqrt();
        let exact = 1.1233580708306412121;
        assert!((var - exact).abs() <= 4.0 * se, "{var} vs {exact} (se {se})");
    }

    #[test]
    fn single_atom_no_jump_probability() {
        let p = params(single_atom(1.0, 1.0), 0.25);
        let t = 0.3;
        let n = 40_000u64;
        let flat = simulate_path(StatePoint::new(0.0, 0.0), &params(LevyTriplet::zero(), 0.25), t, 0.05, None, 0).unwrap();
        let mut quiet = 0usize;
        for seed in 0..n {
            let path = simulate_path(StatePoint::new(0.0, 0.0), &p, t, 0.05, None, seed).unwrap();
            if path.jumps.is_empty() {
                quiet += 1;
                // Conditional on no jump, V is the deterministic flow; G drifts by
                // the compensator −rate·y·1{|y|<1} = 0 for this boundary atom.
                let vs: Vec<f64> = path.offsets.iter().map(|s| s.v).collect();
                let fv: Vec<f64> = flat.offsets.iter().map(|s| s.v).collect();
                assert_eq!(vs, fv);
                assert!(path.offsets.iter().all(|s| s.dg == 0.0));
            }
        }
        let prob = (-t).exp();
        let frac = quiet as f64 / n as f64;
        assert!((frac - prob).abs() <= 4.0 * (prob * (1.0 - prob) / n as f64).sqrt(), "{frac} vs {prob}");
    }

    #[test]
    fn exit_statistics() {
        let p = params(LevyTriplet::brownian(1.0).unwrap(), 0.25);
        let sim = Simulator::new(&p, DEFAULT_TRUNCATION, Tolerance::default()).unwrap();
        let grid = TimeGrid::new(1.0, 0.001, &[]).unwrap();
        let stops = exit_times(&sim, StatePoint::new(0.0, 0.0), &grid, 0.01, 20_000, 8, None).unwrap();
        let summary = exit_time_statistics(stops, &[1.0]);
        assert!(summary.ladder[0].stopped_fraction > 0.99);

        let det = params(LevyTriplet::zero(), 0.25);
        let sim = Simulator::new(&det, DEFAULT_TRUNCATION, Tolerance::default()).unwrap();
        let drift = (evolve_volatility_between_jumps(0.0, 1.0, &det)).abs();
        let stops = exit_times(&sim, StatePoint::new(0.0, 0.0), &grid, drift + 0.1, 1000, 8, None).unwrap();
        assert_eq!(
            exit_time_statistics(stops, &[0.5, 1.0]).ladder.iter().map(|e| e.stopped_fraction).sum::<f64>(),
            0.0
        );

        let none = exit_time_statistics(vec![None; 10], &[1.0]);
        assert_eq!(none.ladder[0].stopped_fraction, 0.0);
    }
}
