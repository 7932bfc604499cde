//! Monte Carlo exit times and exit locations of the inertial process from
//! the domain `G = {phi < 0}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ProblemDefinition;
use crate::noise::NoiseStream;
use crate::sde::{rescale_to_original_time, InertialStepper, Scheme, SimParams, Trajectory};
use crate::stats::{linear_fit, KahanSum};

#[derive(Debug, Clone, PartialEq)]
pub enum ExitOutcome {
    Exit { tau: f64, point: Vec<f64>, steps: u64 },
    Timeout { steps: u64 },
}

impl ExitOutcome {
    pub fn tau(&self) -> Option<f64> {
        match self {
            ExitOutcome::Exit { tau, .. } => Some(*tau),
            ExitOutcome::Timeout { .. } => None,
        }
    }
}

/// Default step cap, `1e8 / eps^2`.
pub fn default_max_steps(eps: f64) -> u64 {
    (1e8 / (eps * eps)).min(u64::MAX as f64 / 2.0) as u64
}

fn domain(p: &ProblemDefinition) -> Result<&crate::fields::Field> {
    p.domain()
        .ok_or_else(|| Error::Precondition("exit problems need a domain G".into()))
}

/// Runs one path from `(q0, p0)` (initial velocity `p0 / eps`) until
/// `phi(q) >= 0`. The exit time and point are linearly interpolated in
/// `phi` over the last step.
pub fn sample_exit(
    p: &ProblemDefinition,
    sp: &SimParams,
    q0: &[f64],
    p0: &[f64],
    stream_id: u64,
    max_steps: Option<u64>,
) -> Result<ExitOutcome> {
    let phi = domain(p)?;
    let f0 = phi.value(q0)?;
    if f0 > 0.0 {
        return Err(Error::Precondition(format!("q0 = {q0:?} lies outside G")));
    }
    if f0 == 0.0 {
        return Ok(ExitOutcome::Exit {
            tau: 0.0,
            point: q0.to_vec(),
            steps: 0,
        });
    }
    let cap = max_steps.unwrap_or_else(|| default_max_steps(sp.eps));
    let r = p.noise_dim();
    let mut noise = NoiseStream::new(sp.seed, stream_id, r, sp.h);
    let mut st = InertialStepper::new(p, sp, q0, p0)?;
    let (mut dw, mut zeta) = (vec![0.0; r], vec![0.0; r]);
    let mut prev = q0.to_vec();
    let mut f_prev = f0;
    for n in 0..cap {
        noise.next_into(&mut dw, &mut zeta);
        prev.copy_from_slice(&st.q);
        st.advance(&dw, &zeta, None)?;
        let f = phi.value(&st.q)?;
        if f >= 0.0 {
            let theta = if f > f_prev { -f_prev / (f - f_prev) } else { 1.0 };
            let point = prev.iter().zip(&st.q).map(|(a, b)| a + theta * (b - a)).collect();
            return Ok(ExitOutcome::Exit {
                tau: (n as f64 + theta) * sp.h,
                point,
                steps: n + 1,
            });
        }
        f_prev = f;
    }
    Ok(ExitOutcome::Timeout { steps: cap })
}

/// First exit time of a stored trajectory from `G`, interpolated as in
/// [`sample_exit`], in the trajectory's own time units.
pub fn first_exit_time(tr: &Trajectory, p: &ProblemDefinition) -> Result<Option<f64>> {
    let phi = domain(p)?;
    let mut f_prev = phi.value(tr.q_at(0))?;
    if f_prev >= 0.0 {
        return Ok(Some(tr.times[0]));
    }
    for n in 1..tr.len() {
        let f = phi.value(tr.q_at(n))?;
        if f >= 0.0 {
            let theta = if f > f_prev { -f_prev / (f - f_prev) } else { 1.0 };
            return Ok(Some(tr.times[n - 1] + theta * (tr.times[n] - tr.times[n - 1])));
        }
        f_prev = f;
    }
    Ok(None)
}

/// First exit time of the original-time view `q^eps(t) = q_eps(eps t)`.
pub fn first_exit_time_original(tr: &Trajectory, p: &ProblemDefinition) -> Result<Option<f64>> {
    first_exit_time(&rescale_to_original_time(tr), p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExitConfig {
    /// time step as a multiple of `eps^2`
    pub h_over_eps2: f64,
    pub max_steps: Option<u64>,
    pub q0: Option<Vec<f64>>,
    pub p0: Option<Vec<f64>>,
    pub scheme: Scheme,
}

impl Default for ExitConfig {
    fn default() -> Self {
        ExitConfig {
            h_over_eps2: 0.25,
            max_steps: None,
            q0: None,
            p0: None,
            scheme: Scheme::Exponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub eps: f64,
    pub n_samples: usize,
    pub mean_tau: f64,
    pub ci_halfwidth: f64,
    pub eps_log_mean: f64,
    pub median_tau: f64,
    pub exit_points: Vec<Vec<f64>>,
    pub taus: Vec<f64>,
    pub timeouts: usize,
    /// set when timeouts make `mean_tau` a lower bound
    pub lower_bound: bool,
}

/// Runs `m` independent exits at one `eps`. Stream ids are
/// `stream_base + k`, so results do not depend on the thread count.
pub fn run_rung(
    p: &ProblemDefinition,
    eps: f64,
    m: usize,
    seed: u64,
    stream_base: u64,
    cfg: &ExitConfig,
) -> Result<ExitStats> {
    let d = p.dim();
    let q0 = cfg.q0.clone().unwrap_or_else(|| p.equilibrium().to_vec());
    let p0 = cfg.p0.clone().unwrap_or_else(|| vec![0.0; d]);
    let h = cfg.h_over_eps2 * eps * eps;
    let sp = SimParams {
        eps,
        t_end: h,
        h,
        scheme: cfg.scheme,
        seed,
        beta: None,
    };
    let outcomes: Vec<ExitOutcome> = (0..m as u64)
        .into_par_iter()
        .map(|k| sample_exit(p, &sp, &q0, &p0, stream_base + k, cfg.max_steps))
        .collect::<Result<Vec<_>>>()?;
    stats_from_outcomes(eps, &outcomes)
}

pub fn stats_from_outcomes(eps: f64, outcomes: &[ExitOutcome]) -> Result<ExitStats> {
    let mut taus = Vec::new();
    let mut points = Vec::new();
    let mut timeouts = 0;
    for o in outcomes {
        match o {
            ExitOutcome::Exit { tau, point, .. } => {
                taus.push(*tau);
                points.push(point.clone());
            }
            ExitOutcome::Timeout { .. } => timeouts += 1,
        }
    }
    if taus.is_empty() {
        return Err(Error::AllTimedOut(outcomes.len()));
    }
    let n = taus.len() as f64;
    let mut sum = KahanSum::default();
    taus.iter().for_each(|t| sum.add(*t));
    let mean = sum.value() / n;
    let mut sq = KahanSum::default();
    taus.iter().for_each(|t| sq.add((t - mean).powi(2)));
    let sd = if taus.len() > 1 {
        (sq.value() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = taus.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(ExitStats {
        eps,
        n_samples: outcomes.len(),
        mean_tau: mean,
        ci_halfwidth: 1.96 * sd / n.sqrt(),
        eps_log_mean: eps * mean.ln(),
        median_tau: median,
        exit_points: points,
        taus,
        timeouts,
        lower_bound: timeouts > 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitScaling {
    pub rungs: Vec<ExitStats>,
    /// intercept of the linear fit of `eps log E tau` in `eps`
    pub extrapolated: f64,
    pub slope: f64,
    /// number of timeout-free rungs entering the fit
    pub fitted_rungs: usize,
    pub warnings: Vec<String>,
}

/// Exit statistics along a decreasing `eps` ladder and the linear
/// extrapolation of `eps log E tau` to `eps = 0` over timeout-free rungs.
/// `v0_hint`, when given, is used to warn about infeasible budgets.
pub fn exit_scaling(
    p: &ProblemDefinition,
    eps_ladder: &[f64],
    m: usize,
    seed: u64,
    cfg: &ExitConfig,
    v0_hint: Option<f64>,
) -> Result<ExitScaling> {
    if eps_ladder.is_empty() || eps_ladder.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Precondition("eps ladder must be strictly decreasing".into()));
    }
    let mut warnings = Vec::new();
    let mut rungs = Vec::new();
    for (i, &eps) in eps_ladder.iter().enumerate() {
        let cap = cfg.max_steps.unwrap_or_else(|| default_max_steps(eps));
        if let Some(v0) = v0_hint {
            let predicted = (v0 / eps).exp() / (cfg.h_over_eps2 * eps * eps);
            if predicted > cap as f64 {
                warnings.push(format!(
                    "eps = {eps}: predicted exit needs ~{predicted:.2e} steps, cap is {cap}"
                ));
            }
        }
        rungs.push(run_rung(p, eps, m, seed, (i as u64) << 32, cfg)?);
    }
    let good: Vec<&ExitStats> = rungs.iter().filter(|r| r.timeouts == 0).collect();
    let (extrapolated, slope) = match good.len() {
        0 => return Err(Error::DegenerateFit("every rung has timeouts".into())),
        1 => (good[0].eps_log_mean, 0.0),
        _ => {
            let xs: Vec<f64> = good.iter().map(|r| r.eps).collect();
            let ys: Vec<f64> = good.iter().map(|r| r.eps_log_mean).collect();
            let fit = linear_fit(&xs, &ys)?;
            (fit.intercept, fit.slope)
        }
    };
    Ok(ExitScaling {
        fitted_rungs: good.len(),
        rungs,
        extrapolated,
        slope,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitHistogram {
    /// bin edges over the boundary parameter
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// centre of the fullest bin
    pub mode: f64,
    /// exit point closest to the mode
    pub mode_point: Vec<f64>,
}

/// Boundary parameter of an exit point: the coordinate in `d = 1`, the
/// angle about `center` in `d = 2`.
pub fn boundary_parameter(q: &[f64], center: &[f64]) -> f64 {
    if q.len() == 1 {
        q[0]
    } else {
        (q[1] - center[1]).atan2(q[0] - center[0])
    }
}

pub fn exit_location_histogram(stats: &ExitStats, bins: usize, center: &[f64]) -> Result<ExitHistogram> {
    let pts = &stats.exit_points;
    if pts.len() < 50 {
        return Err(Error::InsufficientSamples {
            needed: 50,
            got: pts.len(),
        });
    }
    let bins = bins.max(1);
    let s: Vec<f64> = pts.iter().map(|q| boundary_parameter(q, center)).collect();
    let (lo, hi) = if pts[0].len() == 1 {
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    } else {
        (-std::f64::consts::PI, std::f64::consts::PI)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
    let mut counts = vec![0usize; bins];
    for v in &s {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let kmax = (0..bins).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).unwrap();
    let mode = lo + width * (kmax as f64 + 0.5);
    let idx = (0..s.len())
        .min_by(|&i, &j| (s[i] - mode).abs().total_cmp(&(s[j] - mode).abs()))
        .unwrap();
    Ok(ExitHistogram {
        edges,
        counts,
        mode,
        mode_point: pts[idx].clone(),
    })
}

/// Fraction of exit points within Euclidean distance `radius` of `target`.
pub fn fraction_near(stats: &ExitStats, target: &[f64], radius: f64) -> f64 {
    if stats.exit_points.is_empty() {
        return 0.0;
    }
    let near = stats
        .exit_points
        .iter()
        .filter(|q| crate::sde::euclid(q, target) <= radius)
        .count();
    near as f64 / stats.exit_points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{presets, ProblemFile};

    fn outward() -> ProblemDefinition {
        ProblemDefinition::from_file(ProblemFile {
            b: vec!["q1".into()],
            sigma: vec![vec!["0".into()]],
            potential: None,
            ..presets::p1()
        })
        .unwrap()
    }

    #[test]
    fn outward_drift_exits_at_log_two() {
        let p = outward();
        let eps = 0.05;
        let sp = SimParams::new(eps, 1.0, eps * eps / 4.0, Scheme::Exponential);
        match sample_exit(&p, &sp, &[0.5], &[0.0], 0, Some(1_000_000)).unwrap() {
            ExitOutcome::Exit { tau, point, .. } => {
                assert!((tau / 2f64.ln() - 1.0).abs() < 0.05, "{tau}");
                assert!((point[0] - 1.0).abs() < 1e-6);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn boundary_start_and_timeout() {
        let p = outward();
        let sp = SimParams::new(0.1, 1.0, 1e-3, Scheme::Exponential);
        assert_eq!(
            sample_exit(&p, &sp, &[1.0], &[0.0], 0, Some(10)).unwrap().tau(),
            Some(0.0)
        );
        assert!(sample_exit(&p, &sp, &[1.5], &[0.0], 0, Some(10)).is_err());
        let inward = ProblemDefinition::from_file(ProblemFile {
            sigma: vec![vec!["0".into()]],
            ..presets::p1()
        })
        .unwrap();
        assert_eq!(
            sample_exit(&inward, &sp, &[0.0], &[0.0], 0, Some(10_000)).unwrap(),
            ExitOutcome::Timeout { steps: 10_000 }
        );
    }

    #[test]
    fn histogram_needs_fifty_exits() {
        let one = ExitOutcome::Exit {
            tau: 1.0,
            point: vec![1.0],
            steps: 1,
        };
        let stats = stats_from_outcomes(0.1, std::slice::from_ref(&one)).unwrap();
        assert!(matches!(
            exit_location_histogram(&stats, 10, &[0.0]),
            Err(Error::InsufficientSamples { needed: 50, got: 1 })
        ));
        assert!(matches!(
            stats_from_outcomes(0.1, &[ExitOutcome::Timeout { steps: 3 }]),
            Err(Error::AllTimedOut(1))
        ));
    }

    #[test]
    fn rung_is_reproducible() {
        let p = presets::load("p1").unwrap();
        let cfg = ExitConfig::default();
        let a = run_rung(&p, 0.4, 20, 7, 0, &cfg).unwrap();
        let b = run_rung(&p, 0.4, 20, 7, 0, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.timeouts, 0);
        assert!(a.mean_tau > 0.0);
    }
}
