//! Simulation of the rescaled inertial system
//!
//! ```text
//! eps^2 q'' = b(q) - alpha(q) q' + sigma(q) u + eps^(1/2 - beta) sigma(q) w'
//! ```
//!
//! and of its first-order limit `g' = (b + sigma u) / alpha + eps^(1/2 - beta) sigma / alpha w'`.
//!
//! The exponential scheme freezes the coefficients over a step and solves
//! the resulting linear SDE for `(q, q')` exactly, including the joint
//! Gaussian law of the velocity noise and its time integral, so `h` may be
//! much larger than the relaxation time `eps^2 / alpha`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::ControlSignal;
use crate::error::{Error, Result};
use crate::fields::ProblemDefinition;
use crate::noise::NoisePath;
use crate::output::Csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Exponential,
}

/// Largest `alpha h / eps^2` accepted by the Euler scheme.
pub const EULER_STABILITY: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub eps: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub h: f64,
    pub scheme: Scheme,
    pub seed: u64,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl SimParams {
    pub fn new(eps: f64, t_end: f64, h: f64, scheme: Scheme) -> SimParams {
        SimParams {
            eps,
            t_end,
            h,
            scheme,
            seed: 0,
            beta: None,
        }
    }

    /// Number of steps `T / h`, which must be an integer up to rounding.
    pub fn steps(&self) -> Result<usize> {
        if !(self.h > 0.0 && self.h.is_finite()) || !(self.t_end >= self.h) {
            return Err(Error::Precondition(format!(
                "need h > 0 and T >= h, got h = {}, T = {}",
                self.h, self.t_end
            )));
        }
        let m = (self.t_end / self.h).round();
        if ((m * self.h - self.t_end) / self.t_end).abs() > 1e-9 {
            return Err(Error::GridMismatch(format!(
                "T = {} is not a multiple of h = {}",
                self.t_end, self.h
            )));
        }
        Ok(m as usize)
    }

    pub fn noise_amplitude(&self, p: &ProblemDefinition) -> f64 {
        noise_amplitude(self.eps, self.beta.unwrap_or(p.beta()))
    }
}

/// `eps^(1/2 - beta)`, zero when `eps = 0`.
pub fn noise_amplitude(eps: f64, beta: f64) -> f64 {
    if eps == 0.0 {
        0.0
    } else {
        eps.powf(0.5 - beta)
    }
}

/// A discretized realization. Positions and velocities are stored flat,
/// `d` values per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub d: usize,
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    /// velocity `q'`; empty for first-order paths
    pub p: Vec<f64>,
    pub eps: f64,
    /// `int_0^t alpha(q(r)) dr` in rescaled time units (divide by `eps^2`
    /// for the exponent in `H`)
    pub a_cumulative: Vec<f64>,
    pub h_path: Option<Vec<f64>>,
    /// 1 for rescaled time, `1/eps` for the original-time view
    pub time_factor: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    #[inline]
    pub fn q_at(&self, n: usize) -> &[f64] {
        &self.q[n * self.d..(n + 1) * self.d]
    }

    #[inline]
    pub fn p_at(&self, n: usize) -> &[f64] {
        &self.p[n * self.d..(n + 1) * self.d]
    }

    pub fn h_at(&self, n: usize) -> Option<&[f64]> {
        self.h_path.as_ref().map(|h| &h[n * self.d..(n + 1) * self.d])
    }

    pub fn final_q(&self) -> &[f64] {
        self.q_at(self.len() - 1)
    }

    /// `max_n |q_n - other_n|` over matching time points.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.len() != other.len() || self.d != other.d {
            return Err(Error::GridMismatch("trajectories have different grids".into()));
        }
        Ok((0..self.len())
            .map(|n| euclid(self.q_at(n), other.q_at(n)))
            .fold(0.0, f64::max))
    }

    /// Samples `q` at every `stride` points, for comparison against a
    /// coarser grid.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        let idx: Vec<usize> = (0..self.len()).step_by(stride.max(1)).collect();
        let pick = |v: &[f64]| -> Vec<f64> {
            idx.iter()
                .flat_map(|&n| v[n * self.d..(n + 1) * self.d].to_vec())
                .collect()
        };
        Trajectory {
            d: self.d,
            times: idx.iter().map(|&n| self.times[n]).collect(),
            q: pick(&self.q),
            p: if self.p.is_empty() { Vec::new() } else { pick(&self.p) },
            eps: self.eps,
            a_cumulative: idx.iter().map(|&n| self.a_cumulative[n]).collect(),
            h_path: self.h_path.as_ref().map(|h| pick(h)),
            time_factor: self.time_factor,
        }
    }

    pub fn to_csv(&self) -> Csv {
        let d = self.d;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("q{i}")));
        let with_p = !self.p.is_empty();
        if with_p {
            header.extend((1..=d).map(|i| format!("p{i}")));
        }
        if self.h_path.is_some() {
            header.extend((1..=d).map(|i| format!("H{i}")));
        }
        let mut csv = Csv::new(&header);
        let mut row = Vec::with_capacity(header.len());
        for n in 0..self.len() {
            row.clear();
            row.push(self.times[n]);
            row.extend_from_slice(self.q_at(n));
            if with_p {
                row.extend_from_slice(self.p_at(n));
            }
            if let Some(h) = self.h_at(n) {
                row.extend_from_slice(h);
            }
            csv.row(&row);
        }
        csv
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.to_csv().write(path)
    }
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Per-step coefficients of the exact frozen-coefficient update.
#[derive(Debug, Clone, Copy, Default)]
struct ExpCoefficients {
    alpha_bits: u64,
    e1: f64,
    om: f64,
    c1: f64,
    sqrt_vz: f64,
}

impl ExpCoefficients {
    fn compute(alpha: f64, eps: f64, h: f64) -> ExpCoefficients {
        let lambda = alpha * h / (eps * eps);
        let e1 = (-lambda).exp();
        let om = -(-lambda).exp_m1();
        let c1 = if lambda < 1e-12 {
            1.0 - lambda / 2.0
        } else {
            om / lambda
        };
        let vz = if lambda < 1e-3 {
            h * lambda * lambda * (1.0 / 12.0 - lambda / 12.0 + 17.0 * lambda * lambda / 360.0)
        } else {
            let e2 = -(-2.0 * lambda).exp_m1();
            h * (e2 / (2.0 * lambda) - (om / lambda).powi(2))
        };
        ExpCoefficients {
            alpha_bits: alpha.to_bits(),
            e1,
            om,
            c1,
            sqrt_vz: vz.max(0.0).sqrt(),
        }
    }
}

/// Single-step integrator of the inertial system, reusable for streamed
/// simulations.
#[derive(Debug, Clone)]
pub struct InertialStepper<'a> {
    p: &'a ProblemDefinition,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: f64,
    pub step: usize,
    eps: f64,
    s: f64,
    h: f64,
    scheme: Scheme,
    b: Vec<f64>,
    sigma: Vec<f64>,
    z: Vec<f64>,
    force: Vec<f64>,
    coef: ExpCoefficients,
}

impl<'a> InertialStepper<'a> {
    /// Starts at `q0` with velocity `q'(0) = p0 / eps`.
    pub fn new(p: &'a ProblemDefinition, sp: &SimParams, q0: &[f64], p0: &[f64]) -> Result<Self> {
        let d = p.dim();
        if q0.len() != d || p0.len() != d {
            return Err(Error::Precondition(format!("initial state must have dimension {d}")));
        }
        if !(sp.eps > 0.0) {
            return Err(Error::Precondition("inertial simulation needs eps > 0".into()));
        }
        let alpha = p.alpha(q0)?;
        Ok(InertialStepper {
            p,
            q: q0.to_vec(),
            v: p0.iter().map(|x| x / sp.eps).collect(),
            alpha,
            step: 0,
            eps: sp.eps,
            s: sp.noise_amplitude(p),
            h: sp.h,
            scheme: sp.scheme,
            b: vec![0.0; d],
            sigma: vec![0.0; d * p.noise_dim()],
            z: vec![0.0; p.noise_dim()],
            force: vec![0.0; d],
            coef: ExpCoefficients {
                alpha_bits: u64::MAX,
                ..Default::default()
            },
        })
    }

    /// Advances one step with increment `dw`, auxiliary normals `zeta`
    /// (exponential scheme only) and control value `u` at the left point.
    /// Afterwards `alpha` holds `alpha(q_{n+1})`.
    pub fn advance(&mut self, dw: &[f64], zeta: &[f64], u: Option<&[f64]>) -> Result<()> {
        let p = self.p;
        let d = p.dim();
        let r = p.noise_dim();
        let alpha = self.alpha;
        let eps2 = self.eps * self.eps;
        let h = self.h;
        p.drift_into(&self.q, &mut self.b)?;
        p.sigma_into(&self.q, &mut self.sigma)?;
        for i in 0..d {
            let mut f = self.b[i];
            if let Some(u) = u {
                f += (0..r).map(|k| self.sigma[i * r + k] * u[k]).sum::<f64>();
            }
            self.force[i] = f;
        }
        match self.scheme {
            Scheme::Euler => {
                let ratio = alpha * h / eps2;
                if ratio > EULER_STABILITY {
                    return Err(Error::StepStability { step: self.step, ratio });
                }
                for i in 0..d {
                    let noise: f64 = (0..r).map(|k| self.sigma[i * r + k] * dw[k]).sum();
                    let v_old = self.v[i];
                    self.v[i] += (h / eps2) * (self.force[i] - alpha * v_old) + (self.s / eps2) * noise;
                    self.q[i] += h * v_old;
                }
            }
            Scheme::Exponential => {
                if self.coef.alpha_bits != alpha.to_bits() {
                    self.coef = ExpCoefficients::compute(alpha, self.eps, h);
                }
                let c = self.coef;
                for k in 0..r {
                    self.z[k] = c.c1 * dw[k] + c.sqrt_vz * zeta[k];
                }
                let kappa = alpha / eps2;
                for i in 0..d {
                    let m = self.force[i] / alpha;
                    let (mut xi_v, mut xi_q) = (0.0, 0.0);
                    for k in 0..r {
                        let s_ik = self.sigma[i * r + k];
                        xi_v += s_ik * self.z[k];
                        xi_q += s_ik * (dw[k] - self.z[k]);
                    }
                    let v_old = self.v[i];
                    self.v[i] = c.e1 * v_old + c.om * m + (self.s / eps2) * xi_v;
                    self.q[i] += v_old * c.om / kappa + m * h * (1.0 - c.c1) + (self.s / alpha) * xi_q;
                }
            }
        }
        self.step += 1;
        if self.q.iter().chain(&self.v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: self.step });
        }
        self.alpha = p.alpha(&self.q)?;
        Ok(())
    }
}

fn check_noise(noise: &NoisePath, p: &ProblemDefinition, sp: &SimParams, m: usize) -> Result<()> {
    if noise.r != p.noise_dim() {
        return Err(Error::GridMismatch(format!(
            "noise has dimension {}, problem has r = {}",
            noise.r,
            p.noise_dim()
        )));
    }
    if noise.steps() != m || ((noise.dt - sp.h) / sp.h).abs() > 1e-9 {
        return Err(Error::GridMismatch(format!(
            "noise grid ({} steps of {}) does not match T = {}, h = {}",
            noise.steps(),
            noise.dt,
            sp.t_end,
            sp.h
        )));
    }
    Ok(())
}

pub fn simulate_inertial(
    p: &ProblemDefinition,
    sp: &SimParams,
    q0: &[f64],
    p0: &[f64],
    noise: &NoisePath,
    u: Option<&ControlSignal>,
) -> Result<Trajectory> {
    let m = sp.steps()?;
    check_noise(noise, p, sp, m)?;
    let d = p.dim();
    let mut st = InertialStepper::new(p, sp, q0, p0)?;
    let mut tr = Trajectory {
        d,
        times: Vec::with_capacity(m + 1),
        q: Vec::with_capacity((m + 1) * d),
        p: Vec::with_capacity((m + 1) * d),
        eps: sp.eps,
        a_cumulative: Vec::with_capacity(m + 1),
        h_path: None,
        time_factor: 1.0,
    };
    tr.times.push(0.0);
    tr.q.extend_from_slice(&st.q);
    tr.p.extend_from_slice(&st.v);
    tr.a_cumulative.push(0.0);
    let mut uval = vec![0.0; p.noise_dim()];
    let mut acc = 0.0;
    for n in 0..m {
        let a_left = st.alpha;
        let uu = match u {
            Some(c) => {
                c.at(n as f64 * sp.h, &mut uval);
                Some(&uval[..])
            }
            None => None,
        };
        st.advance(noise.increment(n), noise.aux_normal(n), uu)?;
        acc += 0.5 * sp.h * (a_left + st.alpha);
        tr.times.push((n + 1) as f64 * sp.h);
        tr.q.extend_from_slice(&st.q);
        tr.p.extend_from_slice(&st.v);
        tr.a_cumulative.push(acc);
    }
    Ok(tr)
}

/// Single-step integrator of the first-order limit: Heun on the drift with
/// the noise coefficient taken at the left point.
#[derive(Debug, Clone)]
pub struct FirstOrderStepper<'a> {
    p: &'a ProblemDefinition,
    pub g: Vec<f64>,
    pub step: usize,
    s: f64,
    h: f64,
    f0: Vec<f64>,
    f1: Vec<f64>,
    sigma: Vec<f64>,
    noise: Vec<f64>,
    pred: Vec<f64>,
}

impl<'a> FirstOrderStepper<'a> {
    pub fn new(p: &'a ProblemDefinition, sp: &SimParams, q0: &[f64]) -> Result<Self> {
        let d = p.dim();
        if q0.len() != d {
            return Err(Error::Precondition(format!("initial state must have dimension {d}")));
        }
        if !(sp.eps >= 0.0) {
            return Err(Error::Precondition("eps must be nonnegative".into()));
        }
        Ok(FirstOrderStepper {
            p,
            g: q0.to_vec(),
            step: 0,
            s: sp.noise_amplitude(p),
            h: sp.h,
            f0: vec![0.0; d],
            f1: vec![0.0; d],
            sigma: vec![0.0; d * p.noise_dim()],
            noise: vec![0.0; d],
            pred: vec![0.0; d],
        })
    }

    fn drift(&self, g: &[f64], u: Option<&[f64]>, out: &mut [f64], sigma: &mut [f64]) -> Result<f64> {
        let p = self.p;
        let r = p.noise_dim();
        let alpha = p.alpha(g)?;
        p.drift_into(g, out)?;
        if let Some(u) = u {
            p.sigma_into(g, sigma)?;
            for (i, o) in out.iter_mut().enumerate() {
                *o += (0..r).map(|k| sigma[i * r + k] * u[k]).sum::<f64>();
            }
        }
        for o in out.iter_mut() {
            *o /= alpha;
        }
        Ok(alpha)
    }

    /// One step with control values `u0` at the left and `u1` at the right
    /// end of the step.
    pub fn advance(&mut self, dw: &[f64], u0: Option<&[f64]>, u1: Option<&[f64]>) -> Result<()> {
        let p = self.p;
        let d = p.dim();
        let r = p.noise_dim();
        let h = self.h;
        let mut f0 = std::mem::take(&mut self.f0);
        let mut f1 = std::mem::take(&mut self.f1);
        let mut sigma = std::mem::take(&mut self.sigma);
        let mut pred = std::mem::take(&mut self.pred);
        let g = self.g.clone();
        let alpha = self.drift(&g, u0, &mut f0, &mut sigma)?;
        if self.s != 0.0 {
            p.sigma_into(&g, &mut sigma)?;
            for i in 0..d {
                self.noise[i] = self.s * (0..r).map(|k| sigma[i * r + k] * dw[k]).sum::<f64>() / alpha;
            }
        } else {
            self.noise.fill(0.0);
        }
        for i in 0..d {
            pred[i] = g[i] + h * f0[i] + self.noise[i];
        }
        self.drift(&pred, u1, &mut f1, &mut sigma)?;
        for i in 0..d {
            self.g[i] = g[i] + 0.5 * h * (f0[i] + f1[i]) + self.noise[i];
        }
        self.f0 = f0;
        self.f1 = f1;
        self.sigma = sigma;
        self.pred = pred;
        self.step += 1;
        if self.g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: self.step });
        }
        Ok(())
    }
}

pub fn simulate_first_order(
    p: &ProblemDefinition,
    sp: &SimParams,
    q0: &[f64],
    noise: &NoisePath,
    u: Option<&ControlSignal>,
) -> Result<Trajectory> {
    let m = sp.steps()?;
    check_noise(noise, p, sp, m)?;
    let d = p.dim();
    let r = p.noise_dim();
    let mut st = FirstOrderStepper::new(p, sp, q0)?;
    let mut tr = Trajectory {
        d,
        times: Vec::with_capacity(m + 1),
        q: Vec::with_capacity((m + 1) * d),
        p: Vec::new(),
        eps: sp.eps,
        a_cumulative: Vec::with_capacity(m + 1),
        h_path: None,
        time_factor: 1.0,
    };
    tr.times.push(0.0);
    tr.q.extend_from_slice(q0);
    tr.a_cumulative.push(0.0);
    let mut a_left = p.alpha(q0)?;
    let mut acc = 0.0;
    let (mut u0, mut u1) = (vec![0.0; r], vec![0.0; r]);
    for n in 0..m {
        if let Some(c) = u {
            c.at(n as f64 * sp.h, &mut u0);
            c.at((n + 1) as f64 * sp.h, &mut u1);
        }
        let (a0, a1) = match u {
            Some(_) => (Some(&u0[..]), Some(&u1[..])),
            None => (None, None),
        };
        st.advance(noise.increment(n), a0, a1)?;
        let a_right = p.alpha(&st.g)?;
        acc += 0.5 * sp.h * (a_left + a_right);
        a_left = a_right;
        tr.times.push((n + 1) as f64 * sp.h);
        tr.q.extend_from_slice(&st.g);
        tr.a_cumulative.push(acc);
    }
    Ok(tr)
}

/// The original-time view `q^eps(t) = q_eps(eps t)`: times are divided by
/// `eps`, values are unchanged.
pub fn rescale_to_original_time(tr: &Trajectory) -> Trajectory {
    let mut out = tr.clone();
    let f = 1.0 / tr.eps;
    out.times.iter_mut().for_each(|t| *t *= f);
    out.time_factor = tr.time_factor * f;
    out
}

/// Inverse of [`rescale_to_original_time`].
pub fn rescale_to_scaled_time(tr: &Trajectory) -> Trajectory {
    let mut out = tr.clone();
    out.times.iter_mut().for_each(|t| *t *= tr.eps);
    out.time_factor = tr.time_factor * tr.eps;
    out
}

/// Fills the exponentially weighted stochastic convolution
/// `H(t_n) = eps^(1/2 - beta) sum_{k<n} exp(-(A(t_n) - A(t_k)) / eps^2) sigma(q_k) dw_k`.
pub fn compute_h(tr: &Trajectory, p: &ProblemDefinition, noise: &NoisePath, beta: Option<f64>) -> Result<Trajectory> {
    let d = p.dim();
    let r = p.noise_dim();
    if tr.d != d || noise.r != r {
        return Err(Error::GridMismatch(
            "dimension mismatch between trajectory and noise".into(),
        ));
    }
    if tr.len() != noise.steps() + 1 || tr.a_cumulative.len() != tr.len() {
        return Err(Error::GridMismatch(format!(
            "trajectory has {} points, noise has {} steps",
            tr.len(),
            noise.steps()
        )));
    }
    let s = noise_amplitude(tr.eps, beta.unwrap_or(p.beta()));
    let eps2 = tr.eps * tr.eps;
    let mut h = vec![0.0; tr.len() * d];
    let mut sigma = vec![0.0; d * r];
    for n in 0..noise.steps() {
        p.sigma_into(tr.q_at(n), &mut sigma)?;
        let w = (-(tr.a_cumulative[n + 1] - tr.a_cumulative[n]) / eps2).exp();
        let dw = noise.increment(n);
        for i in 0..d {
            let incr: f64 = (0..r).map(|k| sigma[i * r + k] * dw[k]).sum();
            h[(n + 1) * d + i] = w * (h[n * d + i] + s * incr);
        }
    }
    let mut out = tr.clone();
    out.h_path = Some(h);
    Ok(out)
}

/// `max_n |H(t_n)|`.
pub fn sup_norm_h(tr: &Trajectory) -> Option<f64> {
    let h = tr.h_path.as_ref()?;
    Some(
        h.chunks(tr.d)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{presets, ProblemFile};

    fn problem(b: &str, alpha: &str, sigma: &str) -> ProblemDefinition {
        ProblemDefinition::from_file(ProblemFile {
            b: vec![b.into()],
            alpha: alpha.into(),
            sigma: vec![vec![sigma.into()]],
            potential: None,
            domain: None,
            alpha0: 0.5,
            ..presets::p1()
        })
        .unwrap_or_else(|e| panic!("{e}"))
    }

    fn free_problem() -> ProblemDefinition {
        problem("0", "1", "0")
    }

    #[test]
    fn exponential_scheme_is_exact_without_forcing() {
        let p = free_problem();
        let eps = 0.1;
        let sp = SimParams::new(eps, 1.0, 0.01, Scheme::Exponential);
        let noise = NoisePath::generate(1, 1, 100, 1, 0.01).unwrap();
        let tr = simulate_inertial(&p, &sp, &[0.3], &[2.0], &noise, None).unwrap();
        for n in 0..tr.len() {
            let t = tr.times[n];
            let exact = 0.3 + eps * 2.0 * (1.0 - (-t / (eps * eps)).exp());
            assert!((tr.q_at(n)[0] - exact).abs() < 1e-14, "{n}");
        }
        assert!((tr.final_q()[0] - (0.3 + eps * 2.0)).abs() < 1e-8);
    }

    #[test]
    fn euler_enforces_stability() {
        let p = free_problem();
        let sp = SimParams::new(0.1, 1.0, 0.01, Scheme::Euler);
        let noise = NoisePath::zero(100, 1, 0.01);
        assert!(matches!(
            simulate_inertial(&p, &sp, &[0.0], &[0.0], &noise, None),
            Err(Error::StepStability { step: 0, .. })
        ));
    }

    #[test]
    fn exponential_matches_fine_euler_on_p2() {
        let p = presets::load("p2").unwrap();
        let eps = 0.1;
        let h_exp = 1e-3;
        let fine = NoisePath::generate(3, 0, 100_000, 1, h_exp / 100.0).unwrap();
        let coarse = fine.coarsen(100).unwrap();
        let sp_e = SimParams::new(eps, 1.0, h_exp / 100.0, Scheme::Euler);
        let sp_x = SimParams::new(eps, 1.0, h_exp, Scheme::Exponential);
        let te = simulate_inertial(&p, &sp_e, &[0.5], &[0.0], &fine, None).unwrap();
        let tx = simulate_inertial(&p, &sp_x, &[0.5], &[0.0], &coarse, None).unwrap();
        let dist = te.subsample(100).sup_distance(&tx).unwrap();
        assert!(dist <= 5e-3, "sup distance {dist}");
    }

    #[test]
    fn first_order_deterministic_cases() {
        let p = presets::load("p1").unwrap();
        let sp = SimParams::new(0.0, 1.0, 1e-4, Scheme::Exponential);
        let noise = NoisePath::zero(10_000, 1, 1e-4);
        let tr = simulate_first_order(&p, &sp, &[1.0], &noise, None).unwrap();
        let worst = (0..tr.len())
            .map(|n| (tr.q_at(n)[0] - (-tr.times[n]).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");

        let p = problem("0", "2", "1");
        let u = ControlSignal::constant(1.0, 10, &[1.0]);
        let tr = simulate_first_order(&p, &sp, &[0.25], &noise, Some(&u)).unwrap();
        for n in (0..tr.len()).step_by(1000) {
            assert!((tr.q_at(n)[0] - (0.25 + tr.times[n] / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn a_cumulative_slope_bounded_below() {
        let p = presets::load("p2").unwrap();
        let sp = SimParams::new(0.2, 1.0, 1e-3, Scheme::Exponential);
        let noise = NoisePath::generate(1, 1, 1000, 1, 1e-3).unwrap();
        let tr = simulate_inertial(&p, &sp, &[0.0], &[0.0], &noise, None).unwrap();
        for n in 0..tr.len() - 1 {
            let slope = (tr.a_cumulative[n + 1] - tr.a_cumulative[n]) / 1e-3;
            assert!(slope >= p.alpha0() - 1e-12);
        }
    }

    #[test]
    fn rescale_round_trip() {
        let p = presets::load("p1").unwrap();
        let sp = SimParams::new(0.5, 0.2, 0.1, Scheme::Exponential);
        let noise = NoisePath::generate(0, 0, 2, 1, 0.1).unwrap();
        let tr = simulate_inertial(&p, &sp, &[0.0], &[0.0], &noise, None).unwrap();
        let orig = rescale_to_original_time(&tr);
        assert_eq!(orig.times, vec![0.0, 0.2, 0.4]);
        assert_eq!(orig.q, tr.q);
        let back = rescale_to_scaled_time(&orig);
        assert_eq!(back.q, tr.q);
        for (a, b) in back.times.iter().zip(&tr.times) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn h_vanishes_without_noise() {
        let p = problem("-q1", "1", "0");
        let sp = SimParams::new(0.1, 1.0, 1e-3, Scheme::Exponential);
        let noise = NoisePath::generate(2, 0, 1000, 1, 1e-3).unwrap();
        let tr = simulate_inertial(&p, &sp, &[0.5], &[0.0], &noise, None).unwrap();
        let tr = compute_h(&tr, &p, &noise, None).unwrap();
        assert_eq!(sup_norm_h(&tr), Some(0.0));
        let short = NoisePath::generate(2, 0, 999, 1, 1e-3).unwrap();
        assert!(matches!(compute_h(&tr, &p, &short, None), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = presets::load("p3").unwrap();
        let sp = SimParams::new(0.1, 0.5, 1e-3, Scheme::Exponential);
        let n1 = NoisePath::generate(8, 4, 500, 2, 1e-3).unwrap();
        let n2 = NoisePath::generate(8, 4, 500, 2, 1e-3).unwrap();
        let a = simulate_inertial(&p, &sp, &[0.1, 0.2], &[0.0, 0.0], &n1, None).unwrap();
        let b = simulate_inertial(&p, &sp, &[0.1, 0.2], &[0.0, 0.0], &n2, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_header_and_rows() {
        let p = presets::load("p3").unwrap();
        let sp = SimParams::new(0.1, 0.002, 1e-3, Scheme::Exponential);
        let noise = NoisePath::generate(0, 0, 2, 2, 1e-3).unwrap();
        let tr = simulate_inertial(&p, &sp, &[0.0, 0.0], &[0.0, 0.0], &noise, None).unwrap();
        let tr = compute_h(&tr, &p, &noise, None).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.as_str().lines();
        assert_eq!(lines.next(), Some("t,q1,q2,p1,p2,H1,H2"));
        assert_eq!(lines.count(), 3);
    }
}
