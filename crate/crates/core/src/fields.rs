//! Coefficient fields of the damped Langevin problem: the drift `b`, the
//! noise matrix `sigma`, the friction `alpha`, and the optional potential,
//! rotational part, reaction rate, initial datum and exit domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_with_dim, ScalarExpr};

/// Largest condition number of `sigma sigma^T` accepted before a point is
/// treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

/// On-disk problem description. Expression values are strings in the
/// grammar of [`crate::expr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub d: usize,
    pub r: usize,
    pub b: Vec<String>,
    pub sigma: Vec<Vec<String>>,
    pub alpha: String,
    pub alpha0: f64,
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(rename = "O", default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: f64,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub sample_box: Option<Vec<[f64; 2]>>,
}

/// A compiled scalar field with its gradient strategy.
#[derive(Debug, Clone)]
pub struct Field {
    expr: ScalarExpr,
    constant: Option<f64>,
    grad: Option<Vec<ScalarExpr>>,
}

impl Field {
    pub fn new(expr: ScalarExpr, dim: usize) -> Field {
        let constant = expr.constant_value();
        let grad = if expr.is_polynomial() {
            (0..dim).map(|i| expr.derivative(i)).collect::<Option<Vec<_>>>()
        } else {
            None
        };
        Field { expr, constant, grad }
    }

    pub fn expr(&self) -> &ScalarExpr {
        &self.expr
    }

    pub fn constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }

    #[inline]
    pub fn value(&self, q: &[f64]) -> Result<f64> {
        match self.constant {
            Some(v) => Ok(v),
            None => Ok(self.expr.eval(q)?),
        }
    }

    /// Value and gradient. Polynomial fields use their symbolic derivative,
    /// everything else centered differences with step `1e-5 (1 + |q|)`.
    pub fn value_grad(&self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        if let Some(v) = self.constant {
            grad.fill(0.0);
            return Ok(v);
        }
        let v = self.expr.eval(q)?;
        if let Some(g) = &self.grad {
            for (out, e) in grad.iter_mut().zip(g) {
                *out = e.eval(q)?;
            }
            return Ok(v);
        }
        let h = fd_step(q);
        let mut x = q.to_vec();
        for i in 0..q.len() {
            x[i] = q[i] + h;
            let fp = self.expr.eval(&x)?;
            x[i] = q[i] - h;
            let fm = self.expr.eval(&x)?;
            x[i] = q[i];
            grad[i] = (fp - fm) / (2.0 * h);
        }
        Ok(v)
    }
}

#[inline]
pub fn fd_step(q: &[f64]) -> f64 {
    1e-5 * (1.0 + q.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// First derivatives of all coefficients at one point.
#[derive(Debug, Clone)]
pub struct Jet {
    pub alpha: f64,
    pub dalpha: Vec<f64>,
    pub b: Vec<f64>,
    /// `db[i * d + j] = d b_i / d q_j`
    pub db: Vec<f64>,
    /// row-major `d x r`
    pub sigma: Vec<f64>,
    /// `dsigma[j]` is `d sigma / d q_j`, row-major `d x r`
    pub dsigma: Vec<Vec<f64>>,
}

impl Jet {
    pub fn new(d: usize, r: usize) -> Jet {
        Jet {
            alpha: 0.0,
            dalpha: vec![0.0; d],
            b: vec![0.0; d],
            db: vec![0.0; d * d],
            sigma: vec![0.0; d * r],
            dsigma: vec![vec![0.0; d * r]; d],
        }
    }
}

/// One instance of the dynamics. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProblemDefinition {
    source: ProblemFile,
    d: usize,
    r: usize,
    b: Vec<Field>,
    sigma: Vec<Field>,
    alpha: Field,
    alpha0: f64,
    potential: Option<Field>,
    l: Option<Vec<Field>>,
    c: Option<Field>,
    g: Option<Field>,
    domain: Option<Field>,
    equilibrium: Vec<f64>,
    beta: f64,
    sample_box: Vec<[f64; 2]>,
    /// `(sigma sigma^T)^{-1}` and its condition number when sigma is constant.
    const_a_inv: Option<(Vec<f64>, f64)>,
}

fn compile(src: &str, d: usize, what: &str, allow_u: bool) -> Result<Field> {
    let e = parse_with_dim(src, Some(d)).map_err(|err| Error::Problem(format!("field {what}: {err}")))?;
    if e.uses_u() && !allow_u {
        return Err(Error::Problem(format!("field {what} may not depend on u")));
    }
    Ok(Field::new(e, d))
}

impl ProblemDefinition {
    pub fn from_file(file: ProblemFile) -> Result<ProblemDefinition> {
        let d = file.d;
        let r = file.r;
        if d == 0 {
            return Err(Error::Problem("d must be at least 1".into()));
        }
        if r < d {
            return Err(Error::Problem(format!(
                "noise dimension r = {r} must be at least d = {d} for sigma to have full rank"
            )));
        }
        if file.b.len() != d {
            return Err(Error::Problem(format!("b has {} entries, expected {d}", file.b.len())));
        }
        if file.sigma.len() != d || file.sigma.iter().any(|row| row.len() != r) {
            return Err(Error::Problem(format!("sigma must be a {d} x {r} matrix")));
        }
        if !(file.alpha0 > 0.0 && file.alpha0.is_finite()) {
            return Err(Error::Problem("alpha0 must be positive".into()));
        }
        if !(0.0..0.5).contains(&file.beta) {
            return Err(Error::Problem("beta must lie in [0, 1/2)".into()));
        }
        let b = file
            .b
            .iter()
            .enumerate()
            .map(|(i, s)| compile(s, d, &format!("b[{i}]"), false))
            .collect::<Result<Vec<_>>>()?;
        let sigma = file
            .sigma
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, s)| (i, j, s)))
            .map(|(i, j, s)| compile(s, d, &format!("sigma[{i}][{j}]"), false))
            .collect::<Result<Vec<_>>>()?;
        let alpha = compile(&file.alpha, d, "alpha", false)?;
        let potential = file
            .potential
            .as_deref()
            .map(|s| compile(s, d, "U", false))
            .transpose()?;
        let l = match &file.l {
            None => None,
            Some(v) => {
                if v.len() != d {
                    return Err(Error::Problem(format!("l has {} entries, expected {d}", v.len())));
                }
                Some(
                    v.iter()
                        .enumerate()
                        .map(|(i, s)| compile(s, d, &format!("l[{i}]"), false))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        let c = file.c.as_deref().map(|s| compile(s, d, "c", true)).transpose()?;
        let g = file.g.as_deref().map(|s| compile(s, d, "g", false)).transpose()?;
        let domain = file.domain.as_deref().map(|s| compile(s, d, "G", false)).transpose()?;
        let equilibrium = file.equilibrium.clone().unwrap_or_else(|| vec![0.0; d]);
        if equilibrium.len() != d {
            return Err(Error::Problem(format!("O must have {d} coordinates")));
        }
        let sample_box = file.sample_box.clone().unwrap_or_else(|| vec![[-4.0, 4.0]; d]);
        if sample_box.len() != d || sample_box.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::Problem(format!("box must list {d} intervals lo < hi")));
        }
        let mut p = ProblemDefinition {
            source: file,
            d,
            r,
            b,
            sigma,
            alpha,
            alpha0: 0.0,
            potential,
            l,
            c,
            g,
            domain,
            equilibrium,
            beta: 0.0,
            sample_box,
            const_a_inv: None,
        };
        p.alpha0 = p.source.alpha0;
        p.beta = p.source.beta;
        if p.sigma.iter().all(|f| f.constant().is_some()) {
            let s: Vec<f64> = p.sigma.iter().map(|f| f.constant().unwrap()).collect();
            p.const_a_inv = Some(spd_inverse(&diffusion_matrix(&s, d, r), d));
        }
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<ProblemDefinition> {
        let file: ProblemFile = serde_json::from_str(text)?;
        ProblemDefinition::from_file(file)
    }

    pub fn source(&self) -> &ProblemFile {
        &self.source
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.source).expect("problem file serializes")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn noise_dim(&self) -> usize {
        self.r
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn equilibrium(&self) -> &[f64] {
        &self.equilibrium
    }

    pub fn sample_box(&self) -> &[[f64; 2]] {
        &self.sample_box
    }

    pub fn alpha_field(&self) -> &Field {
        &self.alpha
    }

    pub fn potential(&self) -> Option<&Field> {
        self.potential.as_ref()
    }

    pub fn rotation(&self) -> Option<&[Field]> {
        self.l.as_deref()
    }

    pub fn reaction(&self) -> Option<&Field> {
        self.c.as_ref()
    }

    pub fn initial_datum(&self) -> Option<&Field> {
        self.g.as_ref()
    }

    pub fn domain(&self) -> Option<&Field> {
        self.domain.as_ref()
    }

    pub fn sigma_is_constant(&self) -> bool {
        self.const_a_inv.is_some()
    }

    pub fn in_box(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.sample_box)
            .all(|(x, [lo, hi])| *x >= *lo && *x <= *hi)
    }

    #[inline]
    pub fn alpha(&self, q: &[f64]) -> Result<f64> {
        self.alpha.value(q)
    }

    #[inline]
    pub fn drift_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, f) in out.iter_mut().zip(&self.b) {
            *o = f.value(q)?;
        }
        Ok(())
    }

    #[inline]
    pub fn sigma_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, f) in out.iter_mut().zip(&self.sigma) {
            *o = f.value(q)?;
        }
        Ok(())
    }

    pub fn drift(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        self.drift_into(q, &mut out)?;
        Ok(out)
    }

    pub fn sigma(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d * self.r];
        self.sigma_into(q, &mut out)?;
        Ok(out)
    }

    /// Reaction rate `c(q, 0)`.
    pub fn reaction_at_zero(&self, q: &[f64]) -> Result<f64> {
        let c = self
            .c
            .as_ref()
            .ok_or_else(|| Error::Precondition("problem has no reaction field c".into()))?;
        Ok(c.expr().eval_with_u(q, 0.0)?)
    }

    /// Fills every coefficient value and first derivative at `q`.
    pub fn jet_into(&self, q: &[f64], jet: &mut Jet) -> Result<()> {
        let d = self.d;
        jet.alpha = self.alpha.value_grad(q, &mut jet.dalpha)?;
        let mut g = vec![0.0; d];
        for i in 0..d {
            jet.b[i] = self.b[i].value_grad(q, &mut g)?;
            jet.db[i * d..(i + 1) * d].copy_from_slice(&g);
        }
        for (k, f) in self.sigma.iter().enumerate() {
            jet.sigma[k] = f.value_grad(q, &mut g)?;
            for j in 0..d {
                jet.dsigma[j][k] = g[j];
            }
        }
        Ok(())
    }

    /// Writes `(sigma sigma^T)^{-1}` at `q` (row-major `d x d`) given the
    /// already evaluated `sigma`.
    pub fn a_inverse(&self, q: &[f64], sigma: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some((inv, cond)) = &self.const_a_inv {
            if !(*cond <= MAX_CONDITION) {
                return Err(Error::SingularSigma {
                    point: q.to_vec(),
                    condition: *cond,
                });
            }
            out.copy_from_slice(inv);
            return Ok(());
        }
        self.a_inverse_from_sigma(sigma, out, q)
    }

    fn a_inverse_from_sigma(&self, sigma: &[f64], out: &mut [f64], q: &[f64]) -> Result<()> {
        let d = self.d;
        let a = diffusion_matrix(sigma, d, self.r);
        let (inv, cond) = spd_inverse(&a, d);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SingularSigma {
                point: q.to_vec(),
                condition: cond,
            });
        }
        out.copy_from_slice(&inv);
        Ok(())
    }
}

/// `a = sigma sigma^T` for a row-major `d x r` sigma.
pub fn diffusion_matrix(sigma: &[f64], d: usize, r: usize) -> Vec<f64> {
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = (0..r).map(|k| sigma[i * r + k] * sigma[j * r + k]).sum();
        }
    }
    a
}

/// Inverse of a symmetric positive semi-definite matrix together with its
/// condition number (infinite when singular).
pub fn spd_inverse(a: &[f64], d: usize) -> (Vec<f64>, f64) {
    if d == 1 {
        let v = a[0];
        if v > 0.0 {
            return (vec![1.0 / v], 1.0);
        }
        return (vec![f64::INFINITY], f64::INFINITY);
    }
    let m = nalgebra::DMatrix::from_row_slice(d, d, a);
    let eig = m.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(lmin > 0.0) {
        return (vec![f64::INFINITY; d * d], f64::INFINITY);
    }
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            inv[i * d + j] = (0..d)
                .map(|k| eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)] / eig.eigenvalues[k])
                .sum();
        }
    }
    (inv, lmax / lmin)
}

/// Smallest singular value of a row-major `d x r` matrix with `r >= d`.
pub fn min_singular_value(sigma: &[f64], d: usize, r: usize) -> f64 {
    let a = diffusion_matrix(sigma, d, r);
    if d == 1 {
        return a[0].max(0.0).sqrt();
    }
    let m = nalgebra::DMatrix::from_row_slice(d, d, &a);
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::MAX, f64::min)
        .max(0.0)
        .sqrt()
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while n > 0 {
        out += (n % base) as f64 * inv;
        n /= base;
        inv /= base as f64;
    }
    out
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Low-discrepancy points in the box: a Halton sequence with a random
/// rotation drawn from `seed`.
pub fn stratified_samples(bx: &[[f64; 2]], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = bx.iter().map(|_| rng.random::<f64>()).collect();
    (0..n)
        .map(|k| {
            bx.iter()
                .enumerate()
                .map(|(i, [lo, hi])| {
                    let base = PRIMES[i % PRIMES.len()];
                    let u = (radical_inverse(k as u64 + 1, base) + shift[i]).fract();
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

/// Points on the zero level set of `phi` inside the box. In one dimension
/// these are the bracketed roots; in two dimensions the edge crossings of a
/// `resolution x resolution` marching-squares grid, refined by bisection.
/// Points are returned in a deterministic order (by angle about `center` in
/// two dimensions).
pub fn sample_boundary(phi: &Field, bx: &[[f64; 2]], resolution: usize, center: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = bx.len();
    let res = resolution.max(4);
    let bisect = |a: &[f64], b: &[f64], fa: f64| -> Result<Vec<f64>> {
        let mut lo = a.to_vec();
        let mut hi = b.to_vec();
        let mut flo = fa;
        for _ in 0..60 {
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(x, y)| 0.5 * (x + y)).collect();
            let fm = phi.value(&mid)?;
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        Ok(lo.iter().zip(&hi).map(|(x, y)| 0.5 * (x + y)).collect())
    };
    let mut pts = Vec::new();
    match d {
        1 => {
            let [lo, hi] = bx[0];
            let n = res * 16;
            let xs: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
            let vals = xs.iter().map(|x| phi.value(&[*x])).collect::<Result<Vec<_>>>()?;
            for k in 0..n {
                if vals[k] == 0.0 {
                    pts.push(vec![xs[k]]);
                } else if (vals[k] < 0.0) != (vals[k + 1] < 0.0) && vals[k + 1] != 0.0 {
                    pts.push(bisect(&[xs[k]], &[xs[k + 1]], vals[k])?);
                }
            }
            if vals[n] == 0.0 {
                pts.push(vec![xs[n]]);
            }
        }
        2 => {
            let node = |i: usize, j: usize| -> Vec<f64> {
                vec![
                    bx[0][0] + (bx[0][1] - bx[0][0]) * i as f64 / res as f64,
                    bx[1][0] + (bx[1][1] - bx[1][0]) * j as f64 / res as f64,
                ]
            };
            let mut vals = vec![0.0; (res + 1) * (res + 1)];
            for i in 0..=res {
                for j in 0..=res {
                    vals[i * (res + 1) + j] = phi.value(&node(i, j))?;
                }
            }
            for i in 0..=res {
                for j in 0..=res {
                    let v = vals[i * (res + 1) + j];
                    for (di, dj) in [(1usize, 0usize), (0, 1)] {
                        let (ni, nj) = (i + di, j + dj);
                        if ni > res || nj > res {
                            continue;
                        }
                        let w = vals[ni * (res + 1) + nj];
                        if (v < 0.0) != (w < 0.0) {
                            pts.push(bisect(&node(i, j), &node(ni, nj), v)?);
                        }
                    }
                }
            }
            pts.sort_by(|a, b| {
                let ta = (a[1] - center[1]).atan2(a[0] - center[0]);
                let tb = (b[1] - center[1]).atan2(b[0] - center[0]);
                ta.total_cmp(&tb)
            });
        }
        _ => {
            return Err(Error::BoundarySampling(format!(
                "boundary sampling supports d <= 2, got d = {d}"
            )))
        }
    }
    if pts.is_empty() {
        return Err(Error::BoundarySampling(
            "zero level set of G not found in the sampling box".into(),
        ));
    }
    Ok(pts)
}

/// Pass/fail entry of a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub seed: u64,
    pub min_alpha: f64,
    pub min_singular_value: f64,
    pub lipschitz_b: f64,
    pub transversality_min: Option<f64>,
    pub gradient_residual: Option<f64>,
    pub orthogonality_residual: Option<f64>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub sigma_tolerance: f64,
    pub gradient_tolerance: f64,
    pub boundary_resolution: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            sigma_tolerance: 1e-6,
            gradient_tolerance: 1e-8,
            boundary_resolution: 64,
        }
    }
}

pub fn validate_hypotheses(p: &ProblemDefinition, samples: usize, seed: u64) -> Result<ValidationReport> {
    validate_with(p, samples, seed, ValidationOptions::default())
}

/// Sample-based check of the standing hypotheses on the problem's box.
/// Failures are recorded in the report; only evaluation errors abort.
pub fn validate_with(
    p: &ProblemDefinition,
    samples: usize,
    seed: u64,
    opts: ValidationOptions,
) -> Result<ValidationReport> {
    if samples < 100 {
        return Err(Error::Precondition(format!(
            "validation needs at least 100 samples, got {samples}"
        )));
    }
    let d = p.dim();
    let r = p.noise_dim();
    let pts = stratified_samples(p.sample_box(), samples, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let width = p.sample_box().iter().map(|[lo, hi]| hi - lo).fold(f64::MAX, f64::min);
    let delta = 1e-3 * width;

    let mut min_alpha = f64::INFINITY;
    let mut min_sv = f64::INFINITY;
    let mut lip: f64 = 0.0;
    let mut grad_res: f64 = 0.0;
    let mut orth_res: f64 = 0.0;
    let mut b = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut s = vec![0.0; d * r];
    let mut grad_u = vec![0.0; d];
    for x in &pts {
        min_alpha = min_alpha.min(p.alpha(x)?);
        p.sigma_into(x, &mut s)?;
        min_sv = min_sv.min(min_singular_value(&s, d, r));

        let dir: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, v)| a + delta * v / norm).collect();
        p.drift_into(x, &mut b)?;
        p.drift_into(&y, &mut b2)?;
        let db = b.iter().zip(&b2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        lip = lip.max(db / delta);

        if let Some(u) = p.potential() {
            u.value_grad(x, &mut grad_u)?;
            let alpha = p.alpha(x)?;
            let mut lv = vec![0.0; d];
            if let Some(l) = p.rotation() {
                for (o, f) in lv.iter_mut().zip(l) {
                    *o = f.value(x)?;
                }
            }
            let scale = 1.0 + grad_u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let res = (0..d)
                .map(|i| (alpha * b[i] + grad_u[i] - lv[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            grad_res = grad_res.max(res / scale);
            let dot: f64 = grad_u.iter().zip(&lv).map(|(a, c)| a * c).sum();
            orth_res = orth_res.max(dot.abs() / scale);
        }
    }

    let mut checks = vec![
        Check {
            name: "alpha_positive".into(),
            value: min_alpha,
            threshold: p.alpha0(),
            passed: min_alpha >= p.alpha0() && min_alpha > 0.0,
        },
        Check {
            name: "sigma_full_rank".into(),
            value: min_sv,
            threshold: opts.sigma_tolerance,
            passed: min_sv >= opts.sigma_tolerance,
        },
        Check {
            name: "b_lipschitz_finite".into(),
            value: lip,
            threshold: f64::INFINITY,
            passed: lip.is_finite(),
        },
    ];
    let (gradient_residual, orthogonality_residual) = if p.potential().is_some() {
        checks.push(Check {
            name: "gradient_structure".into(),
            value: grad_res,
            threshold: opts.gradient_tolerance,
            passed: grad_res <= opts.gradient_tolerance,
        });
        checks.push(Check {
            name: "rotation_orthogonal".into(),
            value: orth_res,
            threshold: opts.gradient_tolerance,
            passed: orth_res <= opts.gradient_tolerance,
        });
        (Some(grad_res), Some(orth_res))
    } else {
        (None, None)
    };

    let transversality_min = match p.domain() {
        None => None,
        Some(phi) => {
            let o = p.equilibrium();
            let phi_o = phi.value(o)?;
            checks.push(Check {
                name: "equilibrium_in_domain".into(),
                value: phi_o,
                threshold: 0.0,
                passed: phi_o < 0.0,
            });
            p.drift_into(o, &mut b)?;
            let bo = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            checks.push(Check {
                name: "equilibrium_is_rest_point".into(),
                value: bo,
                threshold: 1e-8,
                passed: bo <= 1e-8,
            });
            let boundary = sample_boundary(phi, p.sample_box(), opts.boundary_resolution, o)?;
            let mut tmin = f64::INFINITY;
            let mut gphi = vec![0.0; d];
            for q in &boundary {
                phi.value_grad(q, &mut gphi)?;
                let gn = gphi.iter().map(|v| v * v).sum::<f64>().sqrt();
                if gn == 0.0 {
                    tmin = f64::NEG_INFINITY;
                    continue;
                }
                p.drift_into(q, &mut b)?;
                let inward: f64 = b.iter().zip(&gphi).map(|(bi, gi)| -bi * gi / gn).sum();
                tmin = tmin.min(inward);
            }
            checks.push(Check {
                name: "boundary_transversal".into(),
                value: tmin,
                threshold: 0.0,
                passed: tmin > 0.0,
            });
            Some(tmin)
        }
    };

    Ok(ValidationReport {
        samples,
        seed,
        min_alpha,
        min_singular_value: min_sv,
        lipschitz_b: lip,
        transversality_min,
        gradient_residual,
        orthogonality_residual,
        checks,
    })
}

/// Bundled problem instances for which the gradient-case identity `V = 2U`
/// holds exactly.
pub mod presets {
    use super::*;

    fn s(v: &str) -> String {
        v.to_string()
    }

    /// Ornstein-Uhlenbeck drift with unit friction and noise.
    pub fn p1() -> ProblemFile {
        ProblemFile {
            d: 1,
            r: 1,
            b: vec![s("-q1")],
            sigma: vec![vec![s("1")]],
            alpha: s("1"),
            alpha0: 1.0,
            potential: Some(s("q1^2/2")),
            l: None,
            c: None,
            g: None,
            domain: Some(s("q1^2 - 1")),
            equilibrium: Some(vec![0.0]),
            beta: 0.0,
            sample_box: Some(vec![[-3.0, 3.0]]),
        }
    }

    /// State-dependent friction `2 + cos q` with `alpha b = -U'`.
    pub fn p2() -> ProblemFile {
        ProblemFile {
            b: vec![s("-q1/(2 + cos(q1))")],
            alpha: s("2 + cos(q1)"),
            alpha0: 1.0,
            ..p1()
        }
    }

    /// Planar rotational flow: `alpha b = -grad U + l` with `l` orthogonal
    /// to `grad U`.
    pub fn p3() -> ProblemFile {
        ProblemFile {
            d: 2,
            r: 2,
            b: vec![s("-q1 - q2"), s("-q2 + q1")],
            sigma: vec![vec![s("1"), s("0")], vec![s("0"), s("1")]],
            alpha: s("1"),
            alpha0: 1.0,
            potential: Some(s("(q1^2 + q2^2)/2")),
            l: Some(vec![s("-q2"), s("q1")]),
            c: None,
            g: None,
            domain: Some(s("q1^2 + q2^2 - 1")),
            equilibrium: Some(vec![0.0, 0.0]),
            beta: 0.0,
            sample_box: Some(vec![[-3.0, 3.0], [-3.0, 3.0]]),
        }
    }

    /// P1 with the potential tilted to `q^2/2 + 0.2 q`; the rest point moves
    /// to `-0.2` and the low side of `(-1, 1)` is `-1`.
    pub fn tilted() -> ProblemFile {
        ProblemFile {
            b: vec![s("-q1 - 0.2")],
            potential: Some(s("q1^2/2 + 0.2*q1")),
            equilibrium: Some(vec![-0.2]),
            ..p1()
        }
    }

    /// Drift-free planar transport with constant reaction rate, for front
    /// propagation.
    pub fn huygens_2d() -> ProblemFile {
        ProblemFile {
            d: 2,
            r: 2,
            b: vec![s("0"), s("0")],
            sigma: vec![vec![s("1"), s("0")], vec![s("0"), s("1")]],
            alpha: s("1"),
            alpha0: 1.0,
            potential: None,
            l: None,
            c: Some(s("1 - u")),
            g: Some(s("max(0, 0.0004 - q1^2 - q2^2)")),
            domain: None,
            equilibrium: Some(vec![0.0, 0.0]),
            beta: 0.0,
            sample_box: Some(vec![[-2.5, 2.5], [-2.5, 2.5]]),
        }
    }

    /// One-dimensional drift-free transport with constant reaction rate and
    /// initial datum supported on `[-0.1, 0.1]`.
    pub fn kpp_1d() -> ProblemFile {
        ProblemFile {
            d: 1,
            r: 1,
            b: vec![s("0")],
            sigma: vec![vec![s("1")]],
            alpha: s("1"),
            alpha0: 1.0,
            potential: None,
            l: None,
            c: Some(s("1 - u")),
            g: Some(s("max(0, 0.01 - q1^2)")),
            domain: None,
            equilibrium: Some(vec![0.0]),
            beta: 0.0,
            sample_box: Some(vec![[-3.0, 3.0]]),
        }
    }

    pub fn by_name(name: &str) -> Option<ProblemFile> {
        Some(match name.to_ascii_lowercase().as_str() {
            "p1" => p1(),
            "p2" => p2(),
            "p3" => p3(),
            "tilted" => tilted(),
            "huygens_2d" | "huygens2d" => huygens_2d(),
            "kpp_1d" | "kpp1d" => kpp_1d(),
            _ => return None,
        })
    }

    pub const NAMES: &[&str] = &["p1", "p2", "p3", "tilted", "huygens_2d", "kpp_1d"];

    pub fn load(name: &str) -> Result<ProblemDefinition> {
        let file = by_name(name).ok_or_else(|| Error::Problem(format!("unknown preset `{name}`")))?;
        ProblemDefinition::from_file(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(alpha: &str, sigma: &str, bx: [f64; 2]) -> ProblemDefinition {
        ProblemDefinition::from_file(ProblemFile {
            alpha: alpha.into(),
            sigma: vec![vec![sigma.into()]],
            sample_box: Some(vec![bx]),
            potential: None,
            domain: None,
            alpha0: 1e-3,
            ..presets::p1()
        })
        .unwrap()
    }

    #[test]
    fn alpha_range_detected() {
        let p = one_d("2 + cos(q1)", "1", [-4.0, 4.0]);
        let rep = validate_hypotheses(&p, 10_000, 7).unwrap();
        assert!((rep.min_alpha - 1.0).abs() < 1e-3, "{}", rep.min_alpha);
        assert!(rep.check("alpha_positive").unwrap().passed);

        let p = one_d("q1", "1", [-1.0, 1.0]);
        let rep = validate_hypotheses(&p, 1000, 7).unwrap();
        assert!(!rep.check("alpha_positive").unwrap().passed);
    }

    #[test]
    fn identity_sigma_has_unit_singular_value() {
        let p = presets::load("p3").unwrap();
        let rep = validate_hypotheses(&p, 500, 1).unwrap();
        assert!((rep.min_singular_value - 1.0).abs() < 1e-12);
        assert!(rep.check("sigma_full_rank").unwrap().passed);
    }

    #[test]
    fn presets_satisfy_gradient_structure() {
        for name in ["p1", "p2", "p3", "tilted"] {
            let p = presets::load(name).unwrap();
            let rep = validate_hypotheses(&p, 10_000, 3).unwrap();
            assert!(rep.passed(), "{name}: {:?}", rep.checks);
            assert!(rep.gradient_residual.unwrap() <= 1e-8);
            assert!(rep.orthogonality_residual.unwrap() <= 1e-8);
        }
    }

    #[test]
    fn validation_is_deterministic() {
        let p = presets::load("p2").unwrap();
        let a = validate_hypotheses(&p, 300, 11).unwrap();
        let b = validate_hypotheses(&p, 300, 11).unwrap();
        assert_eq!(a, b);
        assert!(validate_hypotheses(&p, 99, 11).is_err());
    }

    #[test]
    fn outward_drift_fails_transversality() {
        let p = ProblemDefinition::from_file(ProblemFile {
            b: vec!["q1".into()],
            potential: None,
            ..presets::p1()
        })
        .unwrap();
        let rep = validate_hypotheses(&p, 200, 1).unwrap();
        assert!(!rep.check("boundary_transversal").unwrap().passed);
    }

    #[test]
    fn rejects_malformed_problems() {
        let bad_rank = ProblemFile {
            d: 2,
            r: 1,
            ..presets::p3()
        };
        assert!(ProblemDefinition::from_file(bad_rank).is_err());
        let bad_var = ProblemFile {
            b: vec!["-q2".into()],
            ..presets::p1()
        };
        assert!(ProblemDefinition::from_file(bad_var).is_err());
        let bad_beta = ProblemFile {
            beta: 0.5,
            ..presets::p1()
        };
        assert!(ProblemDefinition::from_file(bad_beta).is_err());
        assert!(ProblemDefinition::from_json(
            r#"{"d":1,"r":1,"b":["0"],"sigma":[["1"]],"alpha":"1","alpha0":1,"extra":3}"#
        )
        .is_err());
        let singular = ProblemDefinition::from_file(ProblemFile {
            sigma: vec![vec!["0".into()]],
            ..presets::p1()
        })
        .unwrap();
        let mut inv = [0.0];
        assert!(matches!(
            singular.a_inverse(&[0.5], &[0.0], &mut inv),
            Err(Error::SingularSigma { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let p = presets::load("p3").unwrap();
        let q = ProblemDefinition::from_json(&p.to_json()).unwrap();
        assert_eq!(p.source(), q.source());
    }

    #[test]
    fn finite_difference_gradient_matches_analytic() {
        let f = Field::new(crate::expr::parse_expression("2 + cos(q1)*q2").unwrap(), 2);
        let mut g = [0.0; 2];
        f.value_grad(&[0.7, 1.3], &mut g).unwrap();
        assert!((g[0] + 0.7f64.sin() * 1.3).abs() < 1e-8);
        assert!((g[1] - 0.7f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn boundary_of_unit_disk() {
        let p = presets::load("p3").unwrap();
        let pts = sample_boundary(p.domain().unwrap(), p.sample_box(), 32, &[0.0, 0.0]).unwrap();
        assert!(pts.len() > 20);
        for q in pts {
            assert!(((q[0] * q[0] + q[1] * q[1]).sqrt() - 1.0).abs() < 1e-9);
        }
        let p1 = presets::load("p1").unwrap();
        let pts = sample_boundary(p1.domain().unwrap(), p1.sample_box(), 32, &[0.0]).unwrap();
        assert_eq!(pts.len(), 2);
        assert!((pts[0][0] + 1.0).abs() < 1e-12 && (pts[1][0] - 1.0).abs() < 1e-12);
    }
}
