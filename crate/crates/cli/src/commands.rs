use anyhow::Result;
use serde_json::{json, Value};

use cogarch_core::characteristics::CharacteristicsConfig;
use cogarch_core::generator::{Cutoff, Fourier, Trig};
use cogarch_core::mc_symbol::{compare_radii, max_finite};
use cogarch_core::sim::simulate_batch;
use cogarch_core::{
    apply_generator, cogarch_symbol, empirical_characteristics_check, estimate_symbols, exit_time_statistics, integrate_characteristics, martingale_residuals,
    Agreement, CogarchParams, Comparison, Complex64, GaussianBump, McConfig, ResidualConfig, Simulator, StatePoint, TestFunction, TimeGrid,
};

use crate::config::ExperimentConfig;
use crate::report::{Outcome, Table, Verdict};

pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub params: CogarchParams,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Context<'_> {
    fn mc(&self, radius: f64) -> McConfig {
        let m = &self.config.mc;
        McConfig {
            radius,
            t_ladder: m.t_ladder.clone(),
            n_paths: m.n_paths,
            seed: self.seed,
            step: m.step,
            epsilon: m.epsilon,
            workers: self.workers,
            tol: self.config.quadrature.tolerance(),
        }
    }

    fn starts(&self) -> Vec<StatePoint> {
        self.config.grids.start_points()
    }

    fn frequencies(&self) -> Result<Vec<[f64; 2]>> {
        let xis = self.config.grids.frequencies();
        anyhow::ensure!(!xis.is_empty(), "this command needs frequencies: set `grids.xi` or `grids.xi_axis`");
        Ok(xis)
    }
}

pub fn simulate(cx: &Context) -> Result<Outcome> {
    let s = &cx.config.simulate;
    let sim = Simulator::new(&cx.params, cx.config.mc.epsilon, cx.config.quadrature.tolerance())?;
    let grid = TimeGrid::new(s.t_max, s.step, &[])?;
    let mut table = Table::new("paths", &["start", "path", "t", "g", "v", "is_jump", "dz"]);
    let mut summaries = Vec::new();
    for (si, start) in cx.starts().into_iter().enumerate() {
        let paths = simulate_batch(&sim, start, &grid, s.radius, s.n_paths, cx.seed, cx.workers)?;
        let mut n_jumps = 0;
        for (k, path) in paths.iter().enumerate() {
            n_jumps += path.jumps.len();
            let mut jumps = path.jumps.iter().peekable();
            for i in 0..path.len() {
                let x = path.state(i);
                let dz = jumps.next_if(|j| j.index == i).map(|j| j.dz);
                table.push(vec![
                    si.into(),
                    k.into(),
                    path.times[i].into(),
                    x.g.into(),
                    x.v.into(),
                    dz.is_some().into(),
                    dz.unwrap_or(0.0).into(),
                ]);
            }
        }
        let exits = exit_time_statistics(paths.iter().map(|p| p.stop_time()), &[s.t_max]);
        let last: Vec<Value> = paths.iter().map(|p| json!(p.state(p.len() - 1))).collect();
        summaries.push(json!({
            "start": start,
            "n_paths": paths.len(),
            "n_jumps": n_jumps,
            "stopped_fraction": exits.ladder[0].stopped_fraction,
            "terminal_states": last,
        }));
    }
    Ok(Outcome {
        tables: vec![table],
        verdicts: Vec::new(),
        results: json!({ "t_max": s.t_max, "step": s.step, "radius": s.radius, "starts": summaries }),
    })
}

pub fn symbol(cx: &Context) -> Result<Outcome> {
    let xis = cx.frequencies()?;
    let tol = cx.config.quadrature.tolerance();
    let mut table = Table::new("symbol", &["g", "v", "xi1", "xi2", "re_p", "im_p", "quad_err"]);
    let mut worst_err: f64 = 0.0;
    for x in cx.starts() {
        let sym = cogarch_core::symbol::StateSymbol::new(x, &cx.params, tol)?;
        for xi in &xis {
            let p = sym.eval(*xi)?;
            worst_err = worst_err.max(p.quadrature_error);
            table.push(vec![
                x.g.into(),
                x.v.into(),
                xi[0].into(),
                xi[1].into(),
                p.value.re.into(),
                p.value.im.into(),
                p.quadrature_error.into(),
            ]);
        }
    }
    Ok(Outcome {
        tables: vec![table],
        verdicts: Vec::new(),
        results: json!({ "n_values": xis.len() * cx.config.grids.starts.len(), "max_quadrature_error": worst_err }),
    })
}

const ESTIMATE_COLUMNS: &[&str] = &["g", "v", "R", "xi1", "xi2", "re_p", "im_p", "stderr_re", "stderr_im", "n_paths"];

pub fn mc_symbol(cx: &Context) -> Result<Outcome> {
    let xis = cx.frequencies()?;
    let radii = &cx.config.mc.r_list;
    let rule = Agreement::new(cx.config.verify.max_z, cx.config.verify.abs_tol);
    let mut table = Table::new("mc_symbol", ESTIMATE_COLUMNS);
    let mut verdicts = Vec::new();
    let mut results = Vec::new();
    for x in cx.starts() {
        let estimates = radii
            .iter()
            .map(|&r| estimate_symbols(x, &xis, &cx.params, &cx.mc(r)))
            .collect::<cogarch_core::Result<Vec<_>>>()?;
        for (r, row) in radii.iter().zip(&estimates) {
            for (xi, e) in xis.iter().zip(row) {
                table.push(vec![
                    x.g.into(),
                    x.v.into(),
                    (*r).into(),
                    xi[0].into(),
                    xi[1].into(),
                    e.estimate.re.into(),
                    e.estimate.im.into(),
                    e.stderr.0.into(),
                    e.stderr.1.into(),
                    e.n_paths.into(),
                ]);
            }
        }
        if radii.len() > 1 {
            let rep = compare_radii(radii, &xis, estimates, &rule);
            verdicts.push(Verdict::at_most(format!("R-independence at (g, v) = ({}, {})", x.g, x.v), rep.max_score, 1.0));
            results.push(json!({ "start": x, "max_score": rep.max_score, "max_z": rep.max_z, "passed": rep.passed }));
        } else {
            results.push(json!({ "start": x }));
        }
    }
    Ok(Outcome {
        tables: vec![table],
        verdicts,
        results: json!({ "rule": rule, "radii": radii, "starts": results }),
    })
}

pub fn verify_symbol(cx: &Context) -> Result<Outcome> {
    let xis = cx.frequencies()?;
    let v = &cx.config.verify;
    let rule = Agreement::new(v.max_z, v.abs_tol);
    let tol = cx.config.quadrature.tolerance();
    let mut table = Table::new(
        "verify_symbol",
        &[
            "g",
            "v",
            "R",
            "xi1",
            "xi2",
            "re_closed",
            "im_closed",
            "re_mc",
            "im_mc",
            "stderr_re",
            "stderr_im",
            "z_re",
            "z_im",
            "relative_error",
        ],
    );
    let (mut score, mut z, mut rel): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for x in cx.starts() {
        let closed: Vec<Complex64> = xis
            .iter()
            .map(|xi| cogarch_core::symbol::cogarch_symbol_with_tolerance(x, *xi, &cx.params, tol).map(|s| s.value))
            .collect::<cogarch_core::Result<_>>()?;
        for &r in &cx.config.mc.r_list {
            let est = estimate_symbols(x, &xis, &cx.params, &cx.mc(r))?;
            for ((xi, e), c) in xis.iter().zip(&est).zip(&closed) {
                let cmp = Comparison::new(e, *c);
                score = score.max(cmp.score(&rule));
                z = max_finite([z, cmp.z.0, cmp.z.1]);
                if c.norm() > v.relative_floor {
                    rel = rel.max(cmp.relative_error);
                }
                table.push(vec![
                    x.g.into(),
                    x.v.into(),
                    r.into(),
                    xi[0].into(),
                    xi[1].into(),
                    c.re.into(),
                    c.im.into(),
                    e.estimate.re.into(),
                    e.estimate.im.into(),
                    e.stderr.0.into(),
                    e.stderr.1.into(),
                    cmp.z.0.into(),
                    cmp.z.1.into(),
                    cmp.relative_error.into(),
                ]);
            }
        }
    }
    let mut verdicts = vec![Verdict::at_most("closed form vs Monte Carlo, |d| / (max_z stderr + abs_tol)", score, 1.0)];
    if let Some(limit) = v.max_relative_error {
        verdicts.push(Verdict::at_most(format!("relative error where |p| > {}", v.relative_floor), rel, limit));
    }
    Ok(Outcome {
        tables: vec![table],
        verdicts,
        results: json!({ "rule": rule, "max_score": score, "max_z": z, "max_relative_error": rel }),
    })
}

pub fn generator_check(cx: &Context) -> Result<Outcome> {
    let g = &cx.config.generator;
    let tol = cx.config.quadrature.tolerance();
    let bumps: Vec<GaussianBump> = g
        .bumps
        .iter()
        .map(|b| GaussianBump {
            center: b.center,
            width: b.width,
            amplitude: b.amplitude,
        })
        .collect();
    let fs: Vec<&dyn TestFunction> = bumps.iter().map(|b| b as &dyn TestFunction).collect();
    let rcfg = ResidualConfig {
        n_paths: g.n_paths.unwrap_or(cx.config.mc.n_paths),
        seed: cx.seed,
        step: g.step,
        epsilon: cx.config.mc.epsilon,
        workers: cx.workers,
        tol,
    };
    let mut residuals = Table::new("generator_residuals", &["g", "v", "function", "mean", "stderr", "z"]);
    let mut worst_z: f64 = 0.0;
    let mut tables = Vec::new();
    if !fs.is_empty() {
        for x in cx.starts() {
            for (k, r) in martingale_residuals(&fs, x, &cx.params, g.t, &rcfg)?.into_iter().enumerate() {
                worst_z = worst_z.max(r.z());
                residuals.push(vec![x.g.into(), x.v.into(), k.into(), r.mean.into(), r.stderr.into(), r.z().into()]);
            }
        }
        tables.push(residuals);
    }
    let mut verdicts = Vec::new();
    if !fs.is_empty() {
        verdicts.push(Verdict::at_most(
            format!("martingale residual |E C_t| / stderr at t = {}", g.t),
            worst_z,
            g.max_z,
        ));
    }

    let xis = cx.config.grids.frequencies();
    let mut worst_gap: f64 = 0.0;
    if !xis.is_empty() {
        let mut consistency = Table::new(
            "generator_consistency",
            &["g", "v", "xi1", "xi2", "gen_cos", "gen_sin", "re_expected", "im_expected", "abs_err"],
        );
        for x in cx.starts() {
            for xi in &xis {
                let cut = |kind| Cutoff {
                    function: Fourier { xi: *xi, kind },
                    center: x.as_array(),
                    inner: 1.0,
                    outer: 3.0,
                };
                let c = apply_generator(&cut(Trig::Cos), x, &cx.params, tol)?.value;
                let s = apply_generator(&cut(Trig::Sin), x, &cx.params, tol)?.value;
                let want = -cogarch_symbol(x, *xi, &cx.params)?.value * Complex64::from_polar(1.0, x.g * xi[0] + x.v * xi[1]);
                let err = (c - want.re).abs().max((s - want.im).abs());
                worst_gap = worst_gap.max(err);
                consistency.push(vec![
                    x.g.into(),
                    x.v.into(),
                    xi[0].into(),
                    xi[1].into(),
                    c.into(),
                    s.into(),
                    want.re.into(),
                    want.im.into(),
                    err.into(),
                ]);
            }
        }
        tables.push(consistency);
        verdicts.push(Verdict::at_most(
            "generator of cutoff Fourier modes vs -p e^{i x.xi}",
            worst_gap,
            g.consistency_tol,
        ));
    }
    Ok(Outcome {
        tables,
        verdicts,
        results: json!({ "t": g.t, "n_paths": rcfg.n_paths, "max_residual_z": worst_z, "max_consistency_error": worst_gap }),
    })
}

pub fn characteristics_check(cx: &Context) -> Result<Outcome> {
    let c = &cx.config.characteristics;
    let tol = cx.config.quadrature.tolerance();
    let cfg = CharacteristicsConfig {
        n_paths: c.n_paths,
        seed: cx.seed,
        step: c.step,
        epsilon: cx.config.mc.epsilon,
        workers: cx.workers,
        threshold: c.max_z,
        abs_tol: c.abs_tol,
        tol,
    };
    let sim = Simulator::new(&cx.params, cfg.epsilon, tol)?;
    let grid = TimeGrid::new(c.t, c.step, &[])?;
    let mut along = Table::new("characteristics", &["start", "path", "t", "B1", "B2", "C11"]);
    let mut checks = Table::new(
        "characteristics_checks",
        &["g", "v", "check", "empirical", "expected", "stderr", "z", "score", "passed"],
    );
    let mut verdicts = Vec::new();
    let mut reports = Vec::new();
    for (si, x) in cx.starts().into_iter().enumerate() {
        for (k, path) in simulate_batch(&sim, x, &grid, None, c.export_paths, cx.seed, cx.workers)?.iter().enumerate() {
            let ch = integrate_characteristics(path, &cx.params, tol)?;
            for i in 0..ch.t.len() {
                along.push(vec![si.into(), k.into(), ch.t[i].into(), ch.b1[i].into(), ch.b2[i].into(), ch.c11[i].into()]);
            }
        }
        let rep = empirical_characteristics_check(&cx.params, x, c.t, &c.rectangles, &cfg)?;
        for l in rep.drift.iter().chain([&rep.quadratic_variation]).chain(&rep.jump_counts) {
            checks.push(vec![
                x.g.into(),
                x.v.into(),
                l.name.as_str().into(),
                l.empirical.into(),
                l.expected.into(),
                l.stderr.into(),
                l.z.into(),
                l.score.into(),
                l.passed.into(),
            ]);
            verdicts.push(Verdict {
                name: format!("{} at (g, v) = ({}, {}), |d| / (max_z stderr + abs_tol)", l.name, x.g, x.v),
                value: l.score,
                threshold: 1.0,
                passed: l.passed,
            });
        }
        reports.push(rep);
    }
    Ok(Outcome {
        tables: vec![along, checks],
        verdicts,
        results: json!({ "reports": reports }),
    })
}
