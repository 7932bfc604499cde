//! Minimum action method: quasi-potentials `V(q1, q2)`, the boundary
//! minimum `V0` with its minimizer, and the gradient-case oracle `2U`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{discrete_action, DiscretePath, Functional, Integrand};
use crate::error::{Error, Result};
use crate::fields::{sample_boundary, validate_with, ProblemDefinition, ValidationOptions};
use crate::optimize::{golden_section, lbfgs, LbfgsOptions, LbfgsResult};

/// Which path points are held fixed during optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoints {
    pub fix_start: bool,
    pub fix_end: bool,
}

impl Endpoints {
    pub const BOTH: Endpoints = Endpoints {
        fix_start: true,
        fix_end: true,
    };
    pub const START: Endpoints = Endpoints {
        fix_start: true,
        fix_end: false,
    };
}

/// Minimizes `objective` over the free points of `init`. The objective
/// writes the gradient with respect to all points.
pub fn optimize_path<F>(
    init: &DiscretePath,
    ends: Endpoints,
    opts: LbfgsOptions,
    mut objective: F,
) -> Result<(DiscretePath, LbfgsResult)>
where
    F: FnMut(&DiscretePath, &mut [f64]) -> Result<f64>,
{
    let d = init.d;
    let total = init.points.len();
    let lo = if ends.fix_start { d } else { 0 };
    let hi = if ends.fix_end { total - d } else { total };
    let mut work = init.clone();
    let mut full_grad = vec![0.0; total];
    let res = lbfgs(
        |x, g| {
            work.points[lo..hi].copy_from_slice(x);
            let v = objective(&work, &mut full_grad)?;
            g.copy_from_slice(&full_grad[lo..hi]);
            Ok(v)
        },
        init.points[lo..hi].to_vec(),
        opts,
    )?;
    let mut path = init.clone();
    path.points[lo..hi].copy_from_slice(&res.x);
    Ok((path, res))
}

/// Log-spaced horizons.
pub fn log_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|k| (lo.ln() + (hi / lo).ln() * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MamConfig {
    /// segments per path
    #[serde(rename = "N")]
    pub n: usize,
    pub t_ladder: Vec<f64>,
    /// golden-section iterations over `log T` around the best rung
    pub refine_iterations: usize,
    pub functional: Functional,
    pub max_iter: usize,
    pub gtol: f64,
    /// amplitude of the symmetry-breaking perturbation of the initial line
    pub init_noise: f64,
    pub seed: u64,
    /// relative gap below which boundary values count as tied
    pub tie_tolerance: f64,
}

impl Default for MamConfig {
    fn default() -> Self {
        MamConfig {
            n: 128,
            t_ladder: log_ladder(0.5, 64.0, 8),
            refine_iterations: 12,
            functional: Functional::Cf41,
            max_iter: 5000,
            gtol: 1e-6,
            init_noise: 1e-3,
            seed: 0,
            tie_tolerance: 1e-6,
        }
    }
}

impl MamConfig {
    pub fn lbfgs(&self) -> LbfgsOptions {
        LbfgsOptions {
            memory: 10,
            max_iter: self.max_iter,
            gtol: self.gtol,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 16 {
            return Err(Error::Precondition(format!("MAM needs N >= 16, got {}", self.n)));
        }
        if self.t_ladder.is_empty()
            || self.t_ladder.iter().any(|t| !(*t > 0.0))
            || self.t_ladder.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Precondition("T ladder must be positive and increasing".into()));
        }
        Ok(())
    }
}

/// Starting path of a minimum-action problem.
#[derive(Debug, Clone, PartialEq)]
pub enum PathInit {
    Line,
    Custom(DiscretePath),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinActionProblem {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub functional: Functional,
    pub init: PathInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinActionResult {
    pub value: f64,
    pub path: DiscretePath,
    #[serde(rename = "T_star")]
    pub t_star: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

fn initial_line(q1: &[f64], q2: &[f64], t: f64, cfg: &MamConfig) -> Result<DiscretePath> {
    let mut f = DiscretePath::line(t, cfg.n, q1, q2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = q1.len();
    for k in 1..cfg.n {
        for i in 0..d {
            f.points[k * d + i] += cfg.init_noise * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    Ok(f)
}

fn fixed_t_from(
    start: &DiscretePath,
    t: f64,
    p: &ProblemDefinition,
    functional: Functional,
    cfg: &MamConfig,
) -> Result<MinActionResult> {
    let mut init = start.clone();
    init.t_end = t;
    let kind: Integrand = functional.into();
    let (path, res) = optimize_path(&init, Endpoints::BOTH, cfg.lbfgs(), |f, g| {
        discrete_action(f, p, kind, Some(g), None)
    })?;
    Ok(MinActionResult {
        value: res.value,
        path,
        t_star: t,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        converged: res.converged,
    })
}

fn check_endpoints(p: &ProblemDefinition, q1: &[f64], q2: &[f64]) -> Result<()> {
    let d = p.dim();
    if q1.len() != d || q2.len() != d {
        return Err(Error::Precondition(format!("endpoints must have dimension {d}")));
    }
    for q in [q1, q2] {
        if !p.in_box(q) {
            return Err(Error::Precondition(format!(
                "endpoint {q:?} lies outside the sampling box {:?}",
                p.sample_box()
            )));
        }
    }
    Ok(())
}

pub fn minimize_action_fixed_t(
    mp: &MinActionProblem,
    t: f64,
    p: &ProblemDefinition,
    cfg: &MamConfig,
) -> Result<MinActionResult> {
    cfg.validate()?;
    check_endpoints(p, &mp.q1, &mp.q2)?;
    let start = match &mp.init {
        PathInit::Line => initial_line(&mp.q1, &mp.q2, t, cfg)?,
        PathInit::Custom(f) => {
            if f.start() != mp.q1.as_slice() || f.end() != mp.q2.as_slice() {
                return Err(Error::Precondition("custom path must join q1 to q2".into()));
            }
            f.clone()
        }
    };
    fixed_t_from(&start, t, p, mp.functional, cfg)
}

/// `inf_T` of the fixed-horizon minimum over the ladder, refined by golden
/// section in `log T` around the best rung. Each horizon is warm-started
/// from the best path found so far.
pub fn quasipotential_v(q1: &[f64], q2: &[f64], p: &ProblemDefinition, cfg: &MamConfig) -> Result<MinActionResult> {
    cfg.validate()?;
    check_endpoints(p, q1, q2)?;
    let functional = cfg.functional;
    let line = initial_line(q1, q2, cfg.t_ladder[0], cfg)?;
    let mut rungs: Vec<MinActionResult> = Vec::with_capacity(cfg.t_ladder.len());
    for &t in &cfg.t_ladder {
        let warm = rungs.last().map(|r| &r.path).unwrap_or(&line);
        let a = fixed_t_from(warm, t, p, functional, cfg)?;
        let b = fixed_t_from(&line, t, p, functional, cfg)?;
        rungs.push(if b.value < a.value { b } else { a });
    }
    let best_idx = (0..rungs.len())
        .min_by(|&i, &j| rungs[i].value.total_cmp(&rungs[j].value))
        .unwrap();
    let mut best = rungs[best_idx].clone();
    if cfg.refine_iterations > 0 && rungs.len() > 1 {
        let lo = cfg.t_ladder[best_idx.saturating_sub(1)].ln();
        let hi = cfg.t_ladder[(best_idx + 1).min(rungs.len() - 1)].ln();
        let seed_path = best.path.clone();
        golden_section(
            |logt| {
                let r = fixed_t_from(&seed_path, logt.exp(), p, functional, cfg)?;
                let v = r.value;
                if v < best.value {
                    best = r;
                }
                Ok(v)
            },
            lo,
            hi,
            cfg.refine_iterations,
        )?;
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cf400Check {
    pub v_cf41: f64,
    pub v_cf400: f64,
    pub relgap: f64,
}

/// Quasi-potential from the equilibrium to `q2` under both functionals.
pub fn check_cf400_equivalence(q2: &[f64], p: &ProblemDefinition, cfg: &MamConfig) -> Result<Cf400Check> {
    let o = p.equilibrium().to_vec();
    let a = quasipotential_v(
        &o,
        q2,
        p,
        &MamConfig {
            functional: Functional::Cf41,
            ..cfg.clone()
        },
    )?;
    let b = quasipotential_v(
        &o,
        q2,
        p,
        &MamConfig {
            functional: Functional::Cf400,
            ..cfg.clone()
        },
    )?;
    let scale = a.value.abs().max(b.value.abs());
    let relgap = if scale == 0.0 {
        0.0
    } else {
        (a.value - b.value).abs() / scale
    };
    Ok(Cf400Check {
        v_cf41: a.value,
        v_cf400: b.value,
        relgap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    /// boundary parameter: index in d = 1, angle about O in d = 2
    pub s: f64,
    pub q: Vec<f64>,
    #[serde(rename = "V")]
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMinimum {
    #[serde(rename = "V0")]
    pub v0: f64,
    pub q_star: Vec<f64>,
    pub index: usize,
    pub profile: Vec<BoundaryPoint>,
}

/// Boundary points used for the boundary minimum: both roots in d = 1, at
/// most `count` points evenly thinned from the marching-squares crossings in
/// d = 2.
pub fn boundary_points(p: &ProblemDefinition, count: usize) -> Result<Vec<Vec<f64>>> {
    let phi = p
        .domain()
        .ok_or_else(|| Error::Precondition("problem has no domain G".into()))?;
    let o = p.equilibrium();
    if !(phi.value(o)? < 0.0) {
        return Err(Error::Precondition("equilibrium O does not lie in G".into()));
    }
    let res = if p.dim() == 1 { 64 } else { (count.max(8) * 2).min(512) };
    let pts = sample_boundary(phi, p.sample_box(), res, o)?;
    if p.dim() == 1 || pts.len() <= count.max(1) {
        return Ok(pts);
    }
    let m = count.max(1);
    Ok((0..m).map(|k| pts[k * pts.len() / m].clone()).collect())
}

pub fn quasipotential_boundary(
    p: &ProblemDefinition,
    boundary_samples: usize,
    cfg: &MamConfig,
) -> Result<BoundaryMinimum> {
    let pts = boundary_points(p, boundary_samples)?;
    let o = p.equilibrium().to_vec();
    let mut profile = Vec::with_capacity(pts.len());
    for (k, q) in pts.iter().enumerate() {
        let r = quasipotential_v(&o, q, p, cfg)?;
        let s = if p.dim() == 2 {
            (q[1] - o[1]).atan2(q[0] - o[0])
        } else {
            k as f64
        };
        profile.push(BoundaryPoint {
            s,
            q: q.clone(),
            v: r.value,
        });
    }
    let vmin = profile.iter().map(|b| b.v).fold(f64::INFINITY, f64::min);
    let index = profile
        .iter()
        .position(|b| b.v <= vmin + cfg.tie_tolerance * vmin.abs())
        .unwrap();
    Ok(BoundaryMinimum {
        v0: vmin,
        q_star: profile[index].q.clone(),
        index,
        profile,
    })
}

/// `2 (U(q) - U(O))`, available when the problem satisfies the
/// gradient-structure hypotheses with `sigma sigma^T = I`.
pub fn gradient_case_oracle(q: &[f64], p: &ProblemDefinition) -> Result<f64> {
    let u = p
        .potential()
        .ok_or_else(|| Error::Hypotheses("no potential U declared".into()))?;
    let d = p.dim();
    if !p.sigma_is_constant() {
        return Err(Error::Hypotheses("sigma sigma^T = I requires constant sigma".into()));
    }
    let sigma = p.sigma(p.equilibrium())?;
    let a = crate::fields::diffusion_matrix(&sigma, d, p.noise_dim());
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            if (a[i * d + j] - target).abs() > 1e-12 {
                return Err(Error::Hypotheses("sigma sigma^T is not the identity".into()));
            }
        }
    }
    let rep = validate_with(p, 2000, 0, ValidationOptions::default())?;
    for name in ["gradient_structure", "rotation_orthogonal"] {
        let c = rep.check(name).expect("potential present");
        if !c.passed {
            return Err(Error::Hypotheses(format!("{name} residual {:.3e}", c.value)));
        }
    }
    Ok(2.0 * (u.value(q)? - u.value(p.equilibrium())?))
}
