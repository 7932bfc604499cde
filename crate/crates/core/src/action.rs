//! Discrete action functionals on grid paths and the control-to-path map.
//!
//! Every functional has the segment form `dt * 1/2 z^T a^{-1} z` with
//! `z = A(m) v - B(m)`, where `v` is the forward difference and `m` the
//! midpoint of the segment, and `a = sigma sigma^T`:
//!
//! | integrand | `A`     | `B`        |
//! |-----------|---------|------------|
//! | `Cf41`    | `alpha` | `b`        |
//! | `Cf400`   | `1`     | `alpha b`  |
//! | `Kinetic` | `alpha` | `0`        |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Jet, ProblemDefinition};
use crate::output::Csv;

/// A path on the uniform grid `t_k = k T / N`, `k = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub d: usize,
    /// row-major `(N + 1) x d`
    pub points: Vec<f64>,
}

impl DiscretePath {
    pub fn new(t_end: f64, d: usize, points: Vec<f64>) -> Result<DiscretePath> {
        if d == 0 || !points.len().is_multiple_of(d) || points.len() / d < 3 {
            return Err(Error::Precondition("a path needs at least 2 segments".into()));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Precondition("path horizon must be positive".into()));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("path points must be finite".into()));
        }
        Ok(DiscretePath { t_end, d, points })
    }

    pub fn from_fn(t_end: f64, n: usize, d: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<DiscretePath> {
        let pts = (0..=n)
            .flat_map(|k| {
                let v = f(t_end * k as f64 / n as f64);
                debug_assert_eq!(v.len(), d);
                v
            })
            .collect();
        DiscretePath::new(t_end, d, pts)
    }

    pub fn line(t_end: f64, n: usize, a: &[f64], b: &[f64]) -> Result<DiscretePath> {
        DiscretePath::from_fn(t_end, n, a.len(), |t| {
            let s = t / t_end;
            a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
        })
    }

    pub fn segments(&self) -> usize {
        self.points.len() / self.d - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.segments() as f64
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.d..(k + 1) * self.d]
    }

    pub fn start(&self) -> &[f64] {
        self.point(0)
    }

    pub fn end(&self) -> &[f64] {
        self.point(self.segments())
    }

    pub fn to_csv(&self) -> Csv {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.d).map(|i| format!("f{i}")));
        let mut csv = Csv::new(&header);
        let dt = self.dt();
        let mut row = Vec::with_capacity(self.d + 1);
        for k in 0..=self.segments() {
            row.clear();
            row.push(k as f64 * dt);
            row.extend_from_slice(self.point(k));
            csv.row(&row);
        }
        csv
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.to_csv().write(path)
    }

    /// Reads a `t,f1..fd` table; the grid must be uniform and start at 0.
    pub fn from_csv(text: &str) -> Result<DiscretePath> {
        let (header, rows) = crate::output::parse_csv(text)?;
        let d = header.len().saturating_sub(1);
        if rows.len() < 3 || d == 0 {
            return Err(Error::Precondition("path file needs a t column and 3 rows".into()));
        }
        let t_end = rows[rows.len() - 1][0];
        let dt = t_end / (rows.len() - 1) as f64;
        for (k, r) in rows.iter().enumerate() {
            if (r[0] - k as f64 * dt).abs() > 1e-9 * t_end.max(1.0) {
                return Err(Error::GridMismatch(format!("path row {k} is off the uniform grid")));
            }
        }
        DiscretePath::new(t_end, d, rows.iter().flat_map(|r| r[1..].to_vec()).collect())
    }
}

/// Control values on the uniform grid `t_k = k T / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub r: usize,
    /// row-major `(N + 1) x r`
    pub values: Vec<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl ControlSignal {
    pub fn new(t_end: f64, r: usize, values: Vec<f64>, gamma: Option<f64>) -> Result<ControlSignal> {
        if r == 0 || !values.len().is_multiple_of(r) || values.len() / r < 2 {
            return Err(Error::Precondition("a control needs at least one segment".into()));
        }
        if !(t_end > 0.0) {
            return Err(Error::Precondition("control horizon must be positive".into()));
        }
        let u = ControlSignal {
            t_end,
            r,
            values,
            gamma,
        };
        if let Some(g) = gamma {
            let energy = 2.0 * control_cost(&u);
            if energy > g * (1.0 + 1e-12) {
                return Err(Error::Precondition(format!(
                    "control energy {energy} exceeds the budget {g}"
                )));
            }
        }
        Ok(u)
    }

    pub fn from_fn(t_end: f64, n: usize, r: usize, f: impl Fn(f64) -> Vec<f64>) -> ControlSignal {
        let values = (0..=n).flat_map(|k| f(t_end * k as f64 / n as f64)).collect();
        ControlSignal {
            t_end,
            r,
            values,
            gamma: None,
        }
    }

    pub fn constant(t_end: f64, n: usize, u: &[f64]) -> ControlSignal {
        ControlSignal::from_fn(t_end, n, u.len(), |_| u.to_vec())
    }

    pub fn zero(t_end: f64, n: usize, r: usize) -> ControlSignal {
        ControlSignal::constant(t_end, n, &vec![0.0; r])
    }

    /// Scales the signal so that `int |u|^2 = gamma`.
    pub fn with_budget(mut self, gamma: f64) -> ControlSignal {
        let e = 2.0 * control_cost(&self);
        if e > 0.0 {
            let s = (gamma / e).sqrt();
            self.values.iter_mut().for_each(|v| *v *= s);
        }
        self.gamma = Some(gamma);
        self
    }

    pub fn segments(&self) -> usize {
        self.values.len() / self.r - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.segments() as f64
    }

    #[inline]
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.r..(k + 1) * self.r]
    }

    /// Piecewise-linear interpolation, constant beyond the horizon.
    pub fn at(&self, t: f64, out: &mut [f64]) {
        let n = self.segments();
        let x = (t / self.dt()).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        let w = x - k as f64;
        for (i, o) in out.iter_mut().enumerate() {
            *o = (1.0 - w) * self.values[k * self.r + i] + w * self.values[(k + 1) * self.r + i];
        }
    }

    pub fn to_csv(&self) -> Csv {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.r).map(|i| format!("u{i}")));
        let mut csv = Csv::new(&header);
        let dt = self.dt();
        for k in 0..=self.segments() {
            let mut row = vec![k as f64 * dt];
            row.extend_from_slice(self.value(k));
            csv.row(&row);
        }
        csv
    }
}

/// Total and per-segment values of a discrete action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub value: f64,
    pub integrand: Vec<f64>,
}

/// The two equivalent forms of the rate functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    Cf41,
    Cf400,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    Cf41,
    Cf400,
    /// drift-free `1/2 alpha^2 a^{-1} f' . f'`
    Kinetic,
}

impl From<Functional> for Integrand {
    fn from(f: Functional) -> Integrand {
        match f {
            Functional::Cf41 => Integrand::Cf41,
            Functional::Cf400 => Integrand::Cf400,
        }
    }
}

/// Evaluator of the segment Lagrangian and its partial derivatives, with its
/// own scratch space.
#[derive(Debug, Clone)]
pub struct SegmentLagrangian<'a> {
    p: &'a ProblemDefinition,
    kind: Integrand,
    jet: Jet,
    a_inv: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    sy: Vec<f64>,
    pub dl_dv: Vec<f64>,
    pub dl_dm: Vec<f64>,
}

impl<'a> SegmentLagrangian<'a> {
    pub fn new(p: &'a ProblemDefinition, kind: Integrand) -> Self {
        let d = p.dim();
        let r = p.noise_dim();
        SegmentLagrangian {
            p,
            kind,
            jet: Jet::new(d, r),
            a_inv: vec![0.0; d * d],
            z: vec![0.0; d],
            y: vec![0.0; d],
            sy: vec![0.0; r],
            dl_dv: vec![0.0; d],
            dl_dm: vec![0.0; d],
        }
    }

    fn prepare(&mut self, v: &[f64], m: &[f64], with_jet: bool) -> Result<f64> {
        let p = self.p;
        let d = p.dim();
        if with_jet {
            p.jet_into(m, &mut self.jet)?;
        } else {
            self.jet.alpha = p.alpha(m)?;
            if self.kind != Integrand::Kinetic {
                p.drift_into(m, &mut self.jet.b)?;
            }
            if !p.sigma_is_constant() {
                p.sigma_into(m, &mut self.jet.sigma)?;
            }
        }
        p.a_inverse(m, &self.jet.sigma, &mut self.a_inv)?;
        let al = self.jet.alpha;
        for i in 0..d {
            self.z[i] = match self.kind {
                Integrand::Cf41 => al * v[i] - self.jet.b[i],
                Integrand::Cf400 => v[i] - al * self.jet.b[i],
                Integrand::Kinetic => al * v[i],
            };
        }
        for i in 0..d {
            self.y[i] = (0..d).map(|j| self.a_inv[i * d + j] * self.z[j]).sum();
        }
        Ok(0.5 * self.z.iter().zip(&self.y).map(|(a, b)| a * b).sum::<f64>())
    }

    /// `L(v, m)`.
    pub fn value(&mut self, v: &[f64], m: &[f64]) -> Result<f64> {
        self.prepare(v, m, false)
    }

    /// `L(v, m)`, filling `dl_dv` and `dl_dm`.
    pub fn value_grad(&mut self, v: &[f64], m: &[f64]) -> Result<f64> {
        let l = self.prepare(v, m, true)?;
        let p = self.p;
        let d = p.dim();
        let r = p.noise_dim();
        let jet = &self.jet;
        let a_coef = match self.kind {
            Integrand::Cf400 => 1.0,
            _ => jet.alpha,
        };
        for i in 0..d {
            self.dl_dv[i] = a_coef * self.y[i];
        }
        let sigma_varies = !p.sigma_is_constant();
        if sigma_varies {
            for k in 0..r {
                self.sy[k] = (0..d).map(|i| jet.sigma[i * r + k] * self.y[i]).sum();
            }
        }
        for j in 0..d {
            let mut g = 0.0;
            for i in 0..d {
                let da_v = match self.kind {
                    Integrand::Cf400 => 0.0,
                    _ => jet.dalpha[j] * v[i],
                };
                let db = match self.kind {
                    Integrand::Cf41 => jet.db[i * d + j],
                    Integrand::Cf400 => jet.dalpha[j] * jet.b[i] + jet.alpha * jet.db[i * d + j],
                    Integrand::Kinetic => 0.0,
                };
                g += self.y[i] * (da_v - db);
            }
            if sigma_varies {
                // y^T (d_j a) y = 2 (sigma^T y) . (d_j sigma^T y)
                let ds = &jet.dsigma[j];
                let mut quad = 0.0;
                for k in 0..r {
                    let dsy: f64 = (0..d).map(|i| ds[i * r + k] * self.y[i]).sum();
                    quad += self.sy[k] * dsy;
                }
                g -= quad;
            }
            self.dl_dm[j] = g;
        }
        Ok(l)
    }
}

/// Discrete action of `f` under `kind`, optionally accumulating the gradient
/// with respect to every path point into `grad` (same layout as `points`).
pub fn discrete_action(
    f: &DiscretePath,
    p: &ProblemDefinition,
    kind: Integrand,
    mut grad: Option<&mut [f64]>,
    integrand: Option<&mut Vec<f64>>,
) -> Result<f64> {
    let d = p.dim();
    if f.d != d {
        return Err(Error::Precondition(format!(
            "path dimension {} but problem has d = {d}",
            f.d
        )));
    }
    let n = f.segments();
    let dt = f.dt();
    let mut lag = SegmentLagrangian::new(p, kind);
    let mut v = vec![0.0; d];
    let mut m = vec![0.0; d];
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let mut parts = integrand;
    if let Some(parts) = parts.as_deref_mut() {
        parts.clear();
    }
    let mut total = 0.0;
    for k in 0..n {
        let (a, b) = (f.point(k), f.point(k + 1));
        for i in 0..d {
            v[i] = (b[i] - a[i]) / dt;
            m[i] = 0.5 * (a[i] + b[i]);
        }
        let l = match grad.as_deref_mut() {
            Some(g) => {
                let l = lag.value_grad(&v, &m)?;
                for i in 0..d {
                    g[k * d + i] += -lag.dl_dv[i] + 0.5 * dt * lag.dl_dm[i];
                    g[(k + 1) * d + i] += lag.dl_dv[i] + 0.5 * dt * lag.dl_dm[i];
                }
                l
            }
            None => lag.value(&v, &m)?,
        };
        let seg = dt * l;
        if let Some(parts) = parts.as_deref_mut() {
            parts.push(seg);
        }
        total += seg;
    }
    Ok(total)
}

fn action_value(f: &DiscretePath, p: &ProblemDefinition, kind: Integrand) -> Result<ActionValue> {
    let mut parts = Vec::new();
    let value = discrete_action(f, p, kind, None, Some(&mut parts))?;
    Ok(ActionValue {
        value,
        integrand: parts,
    })
}

/// `1/2 int |sigma^{-1}(alpha f' - b)|^2`.
pub fn action_i(f: &DiscretePath, p: &ProblemDefinition) -> Result<ActionValue> {
    action_value(f, p, Integrand::Cf41)
}

/// `1/2 int |sigma^{-1}(f' - alpha b)|^2`.
pub fn action_cf400(f: &DiscretePath, p: &ProblemDefinition) -> Result<ActionValue> {
    action_value(f, p, Integrand::Cf400)
}

pub fn action(f: &DiscretePath, p: &ProblemDefinition, functional: Functional) -> Result<ActionValue> {
    action_value(f, p, functional.into())
}

/// Solves `g' = (b(g) + sigma(g) u) / alpha(g)` with classical RK4 on the
/// grid of `u`.
pub fn skeleton_g(u: &ControlSignal, q0: &[f64], p: &ProblemDefinition, t_end: f64, n: usize) -> Result<DiscretePath> {
    let d = p.dim();
    let r = p.noise_dim();
    if q0.len() != d {
        return Err(Error::Precondition(format!("q0 must have dimension {d}")));
    }
    if u.r != r {
        return Err(Error::GridMismatch(format!("control has {} components, r = {r}", u.r)));
    }
    if u.segments() != n || ((u.t_end - t_end) / t_end).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "control grid ({} segments on [0, {}]) does not match N = {n}, T = {t_end}",
            u.segments(),
            u.t_end
        )));
    }
    let mut sigma = vec![0.0; d * r];
    let mut rhs = |g: &[f64], uu: &[f64], out: &mut [f64]| -> Result<()> {
        let alpha = p.alpha(g)?;
        p.drift_into(g, out)?;
        p.sigma_into(g, &mut sigma)?;
        for i in 0..d {
            out[i] = (out[i] + (0..r).map(|k| sigma[i * r + k] * uu[k]).sum::<f64>()) / alpha;
        }
        Ok(())
    };
    let dt = t_end / n as f64;
    let mut pts = Vec::with_capacity((n + 1) * d);
    pts.extend_from_slice(q0);
    let mut g = q0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    let mut umid = vec![0.0; r];
    for k in 0..n {
        let u0 = u.value(k);
        let u1 = u.value(k + 1);
        for i in 0..r {
            umid[i] = 0.5 * (u0[i] + u1[i]);
        }
        rhs(&g, u0, &mut k1)?;
        for i in 0..d {
            tmp[i] = g[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &umid, &mut k2)?;
        for i in 0..d {
            tmp[i] = g[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &umid, &mut k3)?;
        for i in 0..d {
            tmp[i] = g[i] + dt * k3[i];
        }
        rhs(&tmp, u1, &mut k4)?;
        for i in 0..d {
            g[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        pts.extend_from_slice(&g);
    }
    DiscretePath::new(t_end, d, pts)
}

/// The control representing `f`: `u = sigma^T a^{-1} (alpha f' - b)` on
/// segment midpoints, extended to the grid by averaging neighbours.
pub fn recover_control(f: &DiscretePath, p: &ProblemDefinition) -> Result<ControlSignal> {
    let d = p.dim();
    let r = p.noise_dim();
    let n = f.segments();
    let dt = f.dt();
    let mut seg = vec![0.0; n * r];
    let mut sigma = vec![0.0; d * r];
    let mut a_inv = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let mut m = vec![0.0; d];
    let mut z = vec![0.0; d];
    for k in 0..n {
        let (x, y) = (f.point(k), f.point(k + 1));
        for i in 0..d {
            m[i] = 0.5 * (x[i] + y[i]);
        }
        let alpha = p.alpha(&m)?;
        p.drift_into(&m, &mut b)?;
        p.sigma_into(&m, &mut sigma)?;
        p.a_inverse(&m, &sigma, &mut a_inv)?;
        for i in 0..d {
            z[i] = alpha * (y[i] - x[i]) / dt - b[i];
        }
        for kk in 0..r {
            seg[k * r + kk] = (0..d)
                .map(|i| sigma[i * r + kk] * (0..d).map(|j| a_inv[i * d + j] * z[j]).sum::<f64>())
                .sum();
        }
    }
    let mut values = vec![0.0; (n + 1) * r];
    for k in 0..=n {
        for kk in 0..r {
            values[k * r + kk] = match k {
                0 => 1.5 * seg[kk] - 0.5 * seg[r + kk],
                _ if k == n => 1.5 * seg[(n - 1) * r + kk] - 0.5 * seg[(n - 2) * r + kk],
                _ => 0.5 * (seg[(k - 1) * r + kk] + seg[k * r + kk]),
            };
        }
    }
    ControlSignal::new(f.t_end, r, values, None)
}

/// `1/2 int_0^T |u|^2` by the trapezoidal rule.
pub fn control_cost(u: &ControlSignal) -> f64 {
    let n = u.segments();
    let sq = |k: usize| u.value(k).iter().map(|x| x * x).sum::<f64>();
    let inner: f64 = (1..n).map(sq).sum();
    0.5 * u.dt() * (inner + 0.5 * (sq(0) + sq(n)))
}

/// `int_0^t c(f(s), 0) ds - I_t(f)` with the trapezoidal rule for the
/// reaction term and the drift-free kinetic action.
pub fn running_cost_action(f: &DiscretePath, p: &ProblemDefinition) -> Result<f64> {
    let n = f.segments();
    let mut reaction = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        reaction += w * p.reaction_at_zero(f.point(k))?;
    }
    reaction *= f.dt();
    let kinetic = discrete_action(f, p, Integrand::Kinetic, None, None)?;
    Ok(reaction - kinetic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{presets, ProblemFile};
    use std::f64::consts::PI;

    fn flat(alpha: &str, b: &str) -> ProblemDefinition {
        ProblemDefinition::from_file(ProblemFile {
            b: vec![b.into()],
            alpha: alpha.into(),
            potential: None,
            domain: None,
            c: Some("1".into()),
            ..presets::p1()
        })
        .unwrap()
    }

    #[test]
    fn unit_speed_line_costs_half() {
        let p = flat("1", "0");
        let f = DiscretePath::line(1.0, 64, &[0.0], &[1.0]).unwrap();
        let a = action_i(&f, &p).unwrap();
        assert!((a.value - 0.5).abs() < 1e-14);
        assert!((a.integrand.iter().sum::<f64>() - a.value).abs() < 1e-15);
        let c = action_cf400(&f, &p).unwrap();
        assert!((c.value - a.value).abs() < 1e-15);
    }

    #[test]
    fn skeleton_has_zero_action() {
        let p = presets::load("p2").unwrap();
        let u = ControlSignal::zero(2.0, 400, 1);
        let f = skeleton_g(&u, &[1.2], &p, 2.0, 400).unwrap();
        assert!(action_i(&f, &p).unwrap().value <= 1e-6);
    }

    #[test]
    fn skeleton_of_p1_decays_exponentially() {
        let p = presets::load("p1").unwrap();
        let u = ControlSignal::zero(1.0, 1000, 1);
        let f = skeleton_g(&u, &[1.0], &p, 1.0, 1000).unwrap();
        assert!((f.end()[0] - (-1.0f64).exp()).abs() < 1e-8);

        let p = ProblemDefinition::from_file(ProblemFile {
            b: vec!["0".into()],
            alpha: "2".into(),
            potential: None,
            ..presets::p1()
        })
        .unwrap();
        let u = ControlSignal::constant(1.0, 10, &[1.0]);
        let f = skeleton_g(&u, &[0.3], &p, 1.0, 10).unwrap();
        for k in 0..=10 {
            assert!((f.point(k)[0] - (0.3 + 0.05 * k as f64)).abs() < 1e-14);
        }
    }

    #[test]
    fn control_identity_for_sine() {
        let p = presets::load("p2").unwrap();
        let n = 2048;
        let u = ControlSignal::from_fn(PI, n, 1, |t| vec![t.sin()]);
        let f = skeleton_g(&u, &[0.0], &p, PI, n).unwrap();
        let i = action_i(&f, &p).unwrap().value;
        assert!((i - PI / 4.0).abs() < 1e-3, "{i}");
        let back = recover_control(&f, &p).unwrap();
        assert!((control_cost(&back) - i).abs() < 1e-4);
    }

    #[test]
    fn control_cost_examples() {
        assert_eq!(control_cost(&ControlSignal::zero(1.0, 10, 2)), 0.0);
        assert!((control_cost(&ControlSignal::constant(2.0, 7, &[1.0])) - 1.0).abs() < 1e-15);
        let u = ControlSignal::from_fn(PI, 10_000, 1, |t| vec![t.sin()]);
        assert!((control_cost(&u) - PI / 4.0).abs() < 1e-6);
    }

    #[test]
    fn budget_enforced() {
        let vals = vec![1.0; 11];
        assert!(ControlSignal::new(1.0, 1, vals.clone(), Some(0.5)).is_err());
        assert!(ControlSignal::new(1.0, 1, vals, Some(1.0)).is_ok());
        let u = ControlSignal::from_fn(1.0, 10, 1, |t| vec![t]).with_budget(2.0);
        assert!((2.0 * control_cost(&u) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_path_at_rest_point_is_free() {
        for name in ["p1", "p2"] {
            let p = presets::load(name).unwrap();
            let f = DiscretePath::line(3.0, 20, &[0.0], &[0.0]).unwrap();
            assert_eq!(action_cf400(&f, &p).unwrap().value, 0.0);
            assert_eq!(action_i(&f, &p).unwrap().value, 0.0);
        }
    }

    #[test]
    fn running_cost_examples() {
        let p = flat("1", "0");
        let still = DiscretePath::line(1.5, 10, &[0.2], &[0.2]).unwrap();
        assert!((running_cost_action(&still, &p).unwrap() - 1.5).abs() < 1e-14);
        let moving = DiscretePath::line(1.0, 10, &[0.0], &[0.7]).unwrap();
        assert!((running_cost_action(&moving, &p).unwrap() - (1.0 - 0.49 / 2.0)).abs() < 1e-14);
        let no_c = presets::load("p1").unwrap();
        assert!(running_cost_action(&moving, &no_c).is_err());
    }

    fn fd_check(p: &ProblemDefinition, kind: Integrand, f: &DiscretePath) {
        let mut g = vec![0.0; f.points.len()];
        discrete_action(f, p, kind, Some(&mut g), None).unwrap();
        let mut x = f.clone();
        for idx in 0..f.points.len() {
            let h = 1e-6;
            x.points[idx] = f.points[idx] + h;
            let fp = discrete_action(&x, p, kind, None, None).unwrap();
            x.points[idx] = f.points[idx] - h;
            let fm = discrete_action(&x, p, kind, None, None).unwrap();
            x.points[idx] = f.points[idx];
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - g[idx]).abs() <= 1e-5 * (1.0 + fd.abs()),
                "{kind:?} {idx}: {fd} vs {}",
                g[idx]
            );
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let p2 = presets::load("p2").unwrap();
        let f = DiscretePath::from_fn(1.3, 12, 1, |t| vec![0.3 * t + 0.2 * (3.0 * t).sin()]).unwrap();
        fd_check(&p2, Integrand::Cf41, &f);
        fd_check(&p2, Integrand::Cf400, &f);
        fd_check(&p2, Integrand::Kinetic, &f);

        let p3 = presets::load("p3").unwrap();
        let f = DiscretePath::from_fn(0.9, 10, 2, |t| vec![t.cos(), 0.5 * t * t]).unwrap();
        fd_check(&p3, Integrand::Cf41, &f);
        fd_check(&p3, Integrand::Cf400, &f);

        let varying = ProblemDefinition::from_file(ProblemFile {
            d: 2,
            r: 2,
            b: vec!["-q1 + 0.3*sin(q2)".into(), "-q2*q1".into()],
            sigma: vec![
                vec!["1 + 0.2*cos(q1)".into(), "0.1*q2".into()],
                vec!["0".into(), "1.5 + 0.1*tanh(q1*q2)".into()],
            ],
            alpha: "2 + sin(q1 - q2)".into(),
            potential: None,
            l: None,
            ..presets::p3()
        })
        .unwrap();
        fd_check(&varying, Integrand::Cf41, &f);
        fd_check(&varying, Integrand::Cf400, &f);
        fd_check(&varying, Integrand::Kinetic, &f);
    }

    #[test]
    fn path_csv_round_trip() {
        let f = DiscretePath::from_fn(2.0, 8, 2, |t| vec![t, -t * t]).unwrap();
        let g = DiscretePath::from_csv(f.to_csv().as_str()).unwrap();
        assert_eq!(f.d, g.d);
        for (a, b) in f.points.iter().zip(&g.points) {
            assert_eq!(a, b);
        }
    }
}
