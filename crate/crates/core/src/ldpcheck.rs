//! Monte Carlo checks of the convergence machinery: the size of the
//! stochastic convolution `H`, convergence of controlled paths to the
//! skeleton, and the Laplace principle for terminal costs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{discrete_action, skeleton_g, ControlSignal, DiscretePath, Integrand};
use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::fields::{Field, ProblemDefinition};
use crate::noise::NoisePath;
use crate::optimize::LbfgsOptions;
use crate::quasipotential::{optimize_path, Endpoints};
use crate::sde::{compute_h, euclid, simulate_inertial, Scheme, SimParams};
use crate::stats::{log_mean_exp, loglog_fit, mean, variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub eps_values: Vec<f64>,
    pub metric_values: Vec<f64>,
    pub fitted_exponent: f64,
    pub r_squared: f64,
}

fn fit(eps: &[f64], metric: Vec<f64>) -> Result<ScalingFit> {
    if eps.len() < 3 {
        return Err(Error::Precondition(format!(
            "scaling fits need at least 3 rungs, got {}",
            eps.len()
        )));
    }
    if metric.iter().all(|m| *m == 0.0) {
        return Err(Error::DegenerateFit("all metric values are zero".into()));
    }
    let f = loglog_fit(eps, &metric)?;
    Ok(ScalingFit {
        eps_values: eps.to_vec(),
        metric_values: metric,
        fitted_exponent: f.slope,
        r_squared: f.r_squared,
    })
}

/// Largest step `<= target` dividing `t_end` into whole steps.
fn grid_step(t_end: f64, target: f64) -> (f64, usize) {
    let m = (t_end / target).ceil().max(1.0) as usize;
    (t_end / m as f64, m)
}

/// Which statistic of `H` is reported per rung.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HMetric {
    /// `E sup_t |H(t)|`
    MeanSup,
    /// `(E |H(T)|^k)^(1/k)`
    Moment(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HScalingConfig {
    /// simulation step as a multiple of `eps^2`
    pub h_over_eps2: f64,
    pub q0: Option<Vec<f64>>,
    pub p0: Option<Vec<f64>>,
    pub metric: HMetric,
}

impl Default for HScalingConfig {
    fn default() -> Self {
        HScalingConfig {
            h_over_eps2: 0.05,
            q0: None,
            p0: None,
            metric: HMetric::MeanSup,
        }
    }
}

pub fn h_eps_scaling(
    p: &ProblemDefinition,
    eps_ladder: &[f64],
    m: usize,
    t_end: f64,
    seed: u64,
    cfg: &HScalingConfig,
) -> Result<ScalingFit> {
    if eps_ladder.len() < 3 {
        return Err(Error::Precondition("ladder needs at least 3 rungs".into()));
    }
    let d = p.dim();
    let q0 = cfg.q0.clone().unwrap_or_else(|| p.equilibrium().to_vec());
    let p0 = cfg.p0.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut metric = Vec::with_capacity(eps_ladder.len());
    for (i, &eps) in eps_ladder.iter().enumerate() {
        let (h, steps) = grid_step(t_end, cfg.h_over_eps2 * eps * eps);
        let sp = SimParams {
            eps,
            t_end,
            h,
            scheme: Scheme::Exponential,
            seed,
            beta: None,
        };
        let per_path: Vec<f64> = (0..m as u64)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let noise = NoisePath::generate(seed, ((i as u64) << 32) + k, steps, p.noise_dim(), h)?;
                let tr = simulate_inertial(p, &sp, &q0, &p0, &noise, None)?;
                let tr = compute_h(&tr, p, &noise, None)?;
                let hp = tr.h_path.as_ref().expect("filled by compute_h");
                Ok(match cfg.metric {
                    HMetric::MeanSup => hp
                        .chunks(d)
                        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
                        .fold(0.0, f64::max),
                    HMetric::Moment(k) => {
                        let last = &hp[hp.len() - d..];
                        last.iter().map(|x| x * x).sum::<f64>().sqrt().powi(k as i32)
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mv = mean(&per_path);
        metric.push(match cfg.metric {
            HMetric::MeanSup => mv,
            HMetric::Moment(k) => mv.powf(1.0 / k as f64),
        });
    }
    fit(eps_ladder, metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub h_over_eps2: f64,
    pub q0: Option<Vec<f64>>,
    /// initial velocity parameter; the inertial path starts with `q' = p0 / eps`
    pub p0: Option<Vec<f64>>,
    /// optional oscillating perturbation `sin(t / eps_osc) v` of the control
    pub oscillation: Option<Oscillation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillation {
    pub eps_osc: f64,
    pub v: Vec<f64>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            h_over_eps2: 0.25,
            q0: None,
            p0: None,
            oscillation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub eps_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub strictly_decreasing: bool,
    pub fitted_exponent: Option<f64>,
    pub r_squared: Option<f64>,
}

/// `E sup_t |q^u_eps(t) - g^u(t)|` on the grid of `u` for each `eps`.
pub fn controlled_convergence(
    p: &ProblemDefinition,
    u: &ControlSignal,
    eps_ladder: &[f64],
    m: usize,
    seed: u64,
    cfg: &ConvergenceConfig,
) -> Result<ConvergenceReport> {
    let d = p.dim();
    let q0 = cfg.q0.clone().unwrap_or_else(|| p.equilibrium().to_vec());
    let p0 = cfg.p0.clone().unwrap_or_else(|| vec![0.0; d]);
    let t_end = u.t_end;
    let n = u.segments();
    let dt = u.dt();
    let skeleton = skeleton_g(u, &q0, p, t_end, n)?;
    let mut errors = Vec::with_capacity(eps_ladder.len());
    for (i, &eps) in eps_ladder.iter().enumerate() {
        let sub = ((dt / (cfg.h_over_eps2 * eps * eps)).ceil().max(1.0)) as usize;
        let h = dt / sub as f64;
        let steps = n * sub;
        let control = match &cfg.oscillation {
            None => u.clone(),
            Some(o) => ControlSignal::from_fn(t_end, steps, u.r, |t| {
                let mut uu = vec![0.0; u.r];
                u.at(t, &mut uu);
                uu.iter()
                    .zip(&o.v)
                    .map(|(a, b)| a + (t / o.eps_osc).sin() * b)
                    .collect()
            }),
        };
        let sp = SimParams {
            eps,
            t_end,
            h,
            scheme: Scheme::Exponential,
            seed,
            beta: None,
        };
        let per_path: Vec<f64> = (0..m as u64)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let noise = NoisePath::generate(seed, ((i as u64) << 32) + k, steps, p.noise_dim(), h)?;
                let tr = simulate_inertial(p, &sp, &q0, &p0, &noise, Some(&control))?;
                Ok((0..=n)
                    .map(|j| euclid(tr.q_at(j * sub), skeleton.point(j)))
                    .fold(0.0, f64::max))
            })
            .collect::<Result<Vec<_>>>()?;
        errors.push(mean(&per_path));
    }
    let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let (fitted_exponent, r_squared) = if eps_ladder.len() >= 2 && errors.iter().all(|e| *e > 0.0) {
        let f = loglog_fit(eps_ladder, &errors)?;
        (Some(f.slope), Some(f.r_squared))
    } else {
        (None, None)
    };
    Ok(ConvergenceReport {
        eps_values: eps_ladder.to_vec(),
        errors,
        strictly_decreasing,
        fitted_exponent,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceConfig {
    pub h_over_eps2: f64,
    /// upper bound on the simulation step
    pub h_max: f64,
    pub q0: Option<Vec<f64>>,
    /// segments of the variational path
    #[serde(rename = "N")]
    pub n: usize,
    /// largest accepted half-width of the 95% interval of `log E`, relative
    /// to the rung value
    pub max_relative_ci: f64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        LaplaceConfig {
            h_over_eps2: 0.25,
            h_max: 0.01,
            q0: None,
            n: 128,
            max_relative_ci: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRung {
    pub eps: f64,
    /// `-eps log E exp(-Lambda(q_eps(T)) / eps)`
    pub value: f64,
    pub ci_halfwidth: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub rungs: Vec<LaplaceRung>,
    pub extrapolated: f64,
    pub variational: f64,
    pub relative_gap: f64,
    pub optimizer_converged: bool,
    pub path: DiscretePath,
}

/// `inf_f Lambda(f(T)) + I_T(f)` over paths from `q0` with free end point.
pub fn laplace_variational(
    p: &ProblemDefinition,
    terminal: &ScalarExpr,
    q0: &[f64],
    t_end: f64,
    n: usize,
) -> Result<(f64, DiscretePath, bool)> {
    let d = p.dim();
    let lambda = Field::new(terminal.clone(), d);
    let mut init = DiscretePath::line(t_end, n, q0, q0)?;
    for k in 1..=n {
        for i in 0..d {
            init.points[k * d + i] += 1e-3 * ((k * (i + 1)) as f64).sin();
        }
    }
    let mut g_end = vec![0.0; d];
    let (path, res) = optimize_path(&init, Endpoints::START, LbfgsOptions::default(), |f, g| {
        let a = discrete_action(f, p, Integrand::Cf41, Some(g), None)?;
        let c = lambda.value_grad(f.end(), &mut g_end)?;
        let off = n * d;
        for i in 0..d {
            g[off + i] += g_end[i];
        }
        Ok(a + c)
    })?;
    Ok((res.value, path, res.converged))
}

pub fn laplace_check(
    p: &ProblemDefinition,
    terminal: &ScalarExpr,
    eps_ladder: &[f64],
    m: usize,
    t_end: f64,
    seed: u64,
    cfg: &LaplaceConfig,
) -> Result<LaplaceReport> {
    if eps_ladder.is_empty() {
        return Err(Error::Precondition("empty eps ladder".into()));
    }
    let d = p.dim();
    let q0 = cfg.q0.clone().unwrap_or_else(|| p.equilibrium().to_vec());
    let p0 = vec![0.0; d];
    let mut rungs = Vec::with_capacity(eps_ladder.len());
    for (i, &eps) in eps_ladder.iter().enumerate() {
        let (h, steps) = grid_step(t_end, (cfg.h_over_eps2 * eps * eps).min(cfg.h_max));
        let sp = SimParams {
            eps,
            t_end,
            h,
            scheme: Scheme::Exponential,
            seed,
            beta: None,
        };
        let costs: Vec<f64> = (0..m as u64)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let noise = NoisePath::generate(seed, ((i as u64) << 32) + k, steps, p.noise_dim(), h)?;
                let tr = simulate_inertial(p, &sp, &q0, &p0, &noise, None)?;
                Ok(terminal.eval(tr.final_q())?)
            })
            .collect::<Result<Vec<_>>>()?;
        let logs: Vec<f64> = costs.iter().map(|c| -c / eps).collect();
        let lme = log_mean_exp(&logs);
        let value = -eps * lme;
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let wm = mean(&w);
        let rel_sd = if m > 1 {
            variance(&w).sqrt() / wm / (m as f64).sqrt()
        } else {
            f64::INFINITY
        };
        let ci = eps * 1.96 * rel_sd;
        let flagged = !(ci <= cfg.max_relative_ci * value.abs().max(1e-12)) && ci > 1e-12;
        rungs.push(LaplaceRung {
            eps,
            value,
            ci_halfwidth: ci,
            flagged,
        });
    }
    let extrapolated = if rungs.len() >= 2 {
        let xs: Vec<f64> = rungs.iter().map(|r| r.eps).collect();
        let ys: Vec<f64> = rungs.iter().map(|r| r.value).collect();
        crate::stats::linear_fit(&xs, &ys)?.intercept
    } else {
        rungs[0].value
    };
    let (variational, path, optimizer_converged) = laplace_variational(p, terminal, &q0, t_end, cfg.n)?;
    let relative_gap = if variational.abs() > 0.0 {
        (extrapolated - variational).abs() / variational.abs()
    } else {
        (extrapolated - variational).abs()
    };
    Ok(LaplaceReport {
        rungs,
        extrapolated,
        variational,
        relative_gap,
        optimizer_converged,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::fields::{presets, ProblemFile};

    #[test]
    fn zero_noise_gives_degenerate_fit() {
        let p = ProblemDefinition::from_file(ProblemFile {
            sigma: vec![vec!["0".into()]],
            ..presets::p1()
        })
        .unwrap();
        let r = h_eps_scaling(&p, &[0.2, 0.1, 0.05], 5, 0.2, 1, &HScalingConfig::default());
        assert!(matches!(r, Err(Error::DegenerateFit(_))));
        assert!(h_eps_scaling(&p, &[0.2, 0.1], 5, 0.2, 1, &HScalingConfig::default()).is_err());
    }

    #[test]
    fn constant_terminal_costs() {
        let p = presets::load("p1").unwrap();
        for (src, k) in [("0", 0.0), ("0.7", 0.7)] {
            let e = parse_expression(src).unwrap();
            let r = laplace_check(&p, &e, &[0.2, 0.1], 20, 0.5, 3, &LaplaceConfig::default()).unwrap();
            for rung in &r.rungs {
                assert!((rung.value - k).abs() < 1e-12, "{rung:?}");
            }
            assert!((r.variational - k).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_convergence_is_integrator_bias() {
        let p = ProblemDefinition::from_file(ProblemFile {
            sigma: vec![vec!["0".into()]],
            ..presets::p2()
        })
        .unwrap();
        let u = ControlSignal::zero(1.0, 100, 1);
        let cfg = ConvergenceConfig {
            q0: Some(vec![1.0]),
            ..Default::default()
        };
        let rep = controlled_convergence(&p, &u, &[0.02, 0.01], 2, 0, &cfg).unwrap();
        assert!(rep.errors.iter().all(|e| *e <= 1e-3), "{:?}", rep.errors);
    }
}
