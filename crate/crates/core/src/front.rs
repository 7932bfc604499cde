//! KPP fronts: Riemannian distance to the support of the initial datum,
//! the front indicator `R(t, q)` and its interface, path-optimized `R` and
//! `R~` for general reaction rates, and a Feynman-Kac Monte Carlo bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{DiscretePath, Integrand, SegmentLagrangian};
use crate::error::{Error, Result};
use crate::fields::{Field, ProblemDefinition};
use crate::noise::NoisePath;
use crate::optimize::{lbfgs, LbfgsOptions};
use crate::output::{write_json, Csv};
use crate::sde::{simulate_inertial, Scheme, SimParams};
use crate::stats::{linear_fit, log_mean_exp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Rho,
    R,
    Rtilde,
}

/// Node-centred values on a rectangular grid in one or two dimensions.
/// Unreached nodes hold `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    pub kind: GridKind,
}

#[derive(Debug, Clone, Serialize)]
struct GridSidecar<'a> {
    origin: &'a [f64],
    spacing: f64,
    dims: &'a [usize],
    kind: GridKind,
}

impl GridField {
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear index of node `(i, j)`; `j` is ignored in one dimension.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.dims.len() == 1 {
            i
        } else {
            i * self.dims[1] + j
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        if self.dims.len() == 1 {
            vec![self.origin[0] + self.spacing * idx as f64]
        } else {
            let (i, j) = (idx / self.dims[1], idx % self.dims[1]);
            vec![
                self.origin[0] + self.spacing * i as f64,
                self.origin[1] + self.spacing * j as f64,
            ]
        }
    }

    /// Index of the node nearest to `q`, if inside the grid.
    pub fn nearest(&self, q: &[f64]) -> Option<usize> {
        let mut ij = [0usize; 2];
        for (a, (&x, (&o, &n))) in q.iter().zip(self.origin.iter().zip(&self.dims)).enumerate() {
            let k = ((x - o) / self.spacing).round();
            if k < 0.0 || k >= n as f64 {
                return None;
            }
            ij[a] = k as usize;
        }
        Some(self.index(ij[0], ij[1]))
    }

    pub fn value_at(&self, q: &[f64]) -> Option<f64> {
        self.nearest(q).map(|i| self.values[i])
    }

    pub fn to_csv(&self) -> Csv {
        let header: Vec<&str> = if self.dim() == 1 {
            vec!["x", "value"]
        } else {
            vec!["x", "y", "value"]
        };
        let mut csv = Csv::new(&header);
        for idx in 0..self.len() {
            let mut row = self.node(idx);
            row.push(self.values[idx]);
            csv.row(&row);
        }
        csv
    }

    /// Writes the CSV dump and a `.json` sidecar with the grid geometry.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        self.to_csv().write(csv_path)?;
        let sidecar = csv_path.with_extension("json");
        write_json(
            &sidecar,
            &GridSidecar {
                origin: &self.origin,
                spacing: self.spacing,
                dims: &self.dims,
                kind: self.kind,
            },
        )
    }
}

/// Rectangular grid `lo + k h` covering `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
}

impl GridSpec {
    pub fn square(half_width: f64, d: usize, h: f64) -> GridSpec {
        GridSpec {
            lo: vec![-half_width; d],
            hi: vec![half_width; d],
            h,
        }
    }

    fn dims(&self) -> Result<Vec<usize>> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() || self.lo.len() > 2 {
            return Err(Error::Precondition("grids have dimension 1 or 2".into()));
        }
        if !(self.h > 0.0) {
            return Err(Error::Precondition("grid spacing must be positive".into()));
        }
        Ok(self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| ((b - a) / self.h).round() as usize + 1)
            .collect())
    }
}

fn initial_datum(p: &ProblemDefinition) -> Result<&Field> {
    p.initial_datum()
        .ok_or_else(|| Error::Precondition("problem has no initial datum g".into()))
}

#[derive(Copy, Clone, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Metric length `alpha(m) sqrt(dq . a^{-1}(m) dq)` of a grid edge.
fn edge_weight(p: &ProblemDefinition, a: &[f64], b: &[f64], sigma: &mut [f64], a_inv: &mut [f64]) -> Result<f64> {
    let d = a.len();
    let m: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let dq: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if !p.sigma_is_constant() {
        p.sigma_into(&m, sigma)?;
    }
    p.a_inverse(&m, sigma, a_inv)?;
    let mut quad = 0.0;
    for i in 0..d {
        for j in 0..d {
            quad += dq[i] * a_inv[i * d + j] * dq[j];
        }
    }
    Ok(p.alpha(&m)? * quad.sqrt())
}

/// Graph distance from the nodes where `g > 0`, on the 2-neighbour (d = 1)
/// or 8-neighbour (d = 2) stencil.
pub fn riemannian_distance(p: &ProblemDefinition, spec: &GridSpec) -> Result<GridField> {
    let g = initial_datum(p)?;
    let dims = spec.dims()?;
    if dims.len() != p.dim() {
        return Err(Error::Precondition("grid dimension differs from the problem's".into()));
    }
    let mut grid = GridField {
        origin: spec.lo.clone(),
        spacing: spec.h,
        dims: dims.clone(),
        values: vec![f64::INFINITY; dims.iter().product()],
        kind: GridKind::Rho,
    };
    let mut heap = BinaryHeap::new();
    for idx in 0..grid.len() {
        if g.value(&grid.node(idx))? > 0.0 {
            grid.values[idx] = 0.0;
            heap.push(Entry(0.0, idx));
        }
    }
    if heap.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let d = p.dim();
    let r = p.noise_dim();
    let mut sigma = p.sigma(p.equilibrium())?;
    sigma.resize(d * r, 0.0);
    let mut a_inv = vec![0.0; d * d];
    let offsets: Vec<(isize, isize)> = if d == 1 {
        vec![(-1, 0), (1, 0)]
    } else {
        vec![(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    };
    let mut done = vec![false; grid.len()];
    while let Some(Entry(dist, idx)) = heap.pop() {
        if done[idx] {
            continue;
        }
        done[idx] = true;
        let (i, j) = if d == 1 {
            (idx, 0)
        } else {
            (idx / dims[1], idx % dims[1])
        };
        let here = grid.node(idx);
        for &(di, dj) in &offsets {
            let ni = i as isize + di;
            let nj = j as isize + dj;
            if ni < 0 || ni >= dims[0] as isize {
                continue;
            }
            if d == 2 && (nj < 0 || nj >= dims[1] as isize) {
                continue;
            }
            let nidx = grid.index(ni as usize, nj.max(0) as usize);
            if done[nidx] {
                continue;
            }
            let w = edge_weight(p, &here, &grid.node(nidx), &mut sigma, &mut a_inv)?;
            let nd = dist + w;
            if nd < grid.values[nidx] {
                grid.values[nidx] = nd;
                heap.push(Entry(nd, nidx));
            }
        }
    }
    Ok(grid)
}

/// `R(t, q) = c t - rho^2 / (2 t)` node-wise.
pub fn r_constant_c(rho: &GridField, c: f64, t: f64) -> Result<GridField> {
    if !(c > 0.0 && t > 0.0) {
        return Err(Error::Precondition("need c > 0 and t > 0".into()));
    }
    Ok(GridField {
        values: rho.values.iter().map(|r| c * t - r * r / (2.0 * t)).collect(),
        kind: GridKind::R,
        ..rho.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontContour {
    pub level: f64,
    pub points: Vec<Vec<f64>>,
}

impl FrontContour {
    pub fn to_csv(&self) -> Csv {
        let d = self.points.first().map(|p| p.len()).unwrap_or(1);
        let header: Vec<&str> = if d == 1 { vec!["x"] } else { vec!["x", "y"] };
        let mut csv = Csv::new(&header);
        for p in &self.points {
            csv.row(p);
        }
        csv
    }

    /// Mean distance of the contour points from `center`.
    pub fn mean_radius(&self, center: &[f64]) -> f64 {
        let n = self.points.len().max(1) as f64;
        self.points.iter().map(|q| crate::sde::euclid(q, center)).sum::<f64>() / n
    }
}

/// Zero crossings of `R` along grid edges, linearly interpolated.
pub fn extract_front(grid: &GridField) -> Result<FrontContour> {
    let mut points = Vec::new();
    let v = &grid.values;
    let cross = |a: usize, b: usize| -> Option<Vec<f64>> {
        let (fa, fb) = (v[a], v[b]);
        if !(fa.is_finite() && fb.is_finite()) || (fa >= 0.0) == (fb >= 0.0) {
            return None;
        }
        let theta = fa / (fa - fb);
        let (pa, pb) = (grid.node(a), grid.node(b));
        Some(pa.iter().zip(&pb).map(|(x, y)| x + theta * (y - x)).collect())
    };
    if grid.dim() == 1 {
        for i in 0..grid.dims[0].saturating_sub(1) {
            points.extend(cross(i, i + 1));
        }
    } else {
        let (n0, n1) = (grid.dims[0], grid.dims[1]);
        for i in 0..n0 {
            for j in 0..n1 {
                let here = grid.index(i, j);
                if i + 1 < n0 {
                    points.extend(cross(here, grid.index(i + 1, j)));
                }
                if j + 1 < n1 {
                    points.extend(cross(here, grid.index(i, j + 1)));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::NoSignChange);
    }
    Ok(FrontContour { level: 0.0, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSpeed {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub speed: f64,
    pub r_squared: f64,
}

/// Mean front radius about `center` at each time and the least-squares
/// speed, for constant `c`.
pub fn front_speed(rho: &GridField, c: f64, times: &[f64], center: &[f64]) -> Result<FrontSpeed> {
    let mut radii = Vec::with_capacity(times.len());
    for &t in times {
        radii.push(extract_front(&r_constant_c(rho, c, t)?)?.mean_radius(center));
    }
    let fit = linear_fit(times, &radii)?;
    Ok(FrontSpeed {
        times: times.to_vec(),
        radii,
        speed: fit.slope,
        r_squared: fit.r_squared,
    })
}

/// Samples of the support `G0 = {g > 0}`: exact intervals in one dimension,
/// grid nodes in two or more.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Intervals(Vec<[f64; 2]>),
    Points(Vec<Vec<f64>>),
}

impl Support {
    /// Locates `{g > 0}` inside the problem's sampling box at the given
    /// resolution (intervals are refined by bisection).
    pub fn from_problem(p: &ProblemDefinition, resolution: usize) -> Result<Support> {
        let g = initial_datum(p)?;
        let bx = p.sample_box();
        let res = resolution.max(8);
        let inside = |q: &[f64]| -> Result<bool> { Ok(g.value(q)? > 0.0) };
        if p.dim() == 1 {
            let [lo, hi] = bx[0];
            let n = res * 16;
            let xs: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
            let flags = xs.iter().map(|x| inside(&[*x])).collect::<Result<Vec<_>>>()?;
            let refine = |mut a: f64, mut b: f64| -> Result<f64> {
                // a is inside, b outside
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if inside(&[m])? {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                Ok(0.5 * (a + b))
            };
            let mut out = Vec::new();
            let mut k = 0;
            while k <= n {
                if flags[k] {
                    let start = if k == 0 { xs[0] } else { refine(xs[k], xs[k - 1])? };
                    let mut e = k;
                    while e < n && flags[e + 1] {
                        e += 1;
                    }
                    let end = if e == n { xs[n] } else { refine(xs[e], xs[e + 1])? };
                    out.push([start, end]);
                    k = e + 1;
                } else {
                    k += 1;
                }
            }
            if out.is_empty() {
                return Err(Error::EmptySeedSet);
            }
            Ok(Support::Intervals(out))
        } else {
            let d = p.dim();
            let total = res.pow(d as u32);
            let mut pts = Vec::new();
            for idx in 0..total {
                let mut rem = idx;
                let mut q = vec![0.0; d];
                for a in (0..d).rev() {
                    let k = rem % res;
                    rem /= res;
                    q[a] = bx[a][0] + (bx[a][1] - bx[a][0]) * (k as f64 + 0.5) / res as f64;
                }
                if inside(&q)? {
                    pts.push(q);
                }
            }
            if pts.is_empty() {
                // a very small support: fall back to the maximizer of g among the samples
                return Err(Error::EmptySeedSet);
            }
            Ok(Support::Points(pts))
        }
    }

    /// Nearest point of the support to `x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Support::Intervals(iv) => {
                let mut best = (f64::INFINITY, x[0]);
                for [a, b] in iv {
                    let y = x[0].clamp(*a, *b);
                    let dd = (y - x[0]).abs();
                    if dd < best.0 {
                        best = (dd, y);
                    }
                }
                vec![best.1]
            }
            Support::Points(pts) => pts
                .iter()
                .min_by(|a, b| crate::sde::euclid(a, x).total_cmp(&crate::sde::euclid(b, x)))
                .cloned()
                .unwrap_or_else(|| x.to_vec()),
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        crate::sde::euclid(&self.project(x), x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontPathConfig {
    /// weight of the squared end-point distance to `G0`
    pub penalty: f64,
    pub restarts: usize,
    pub seed: u64,
    /// soft-min temperatures for the prefix minimum, coarse to fine
    pub temperatures: Vec<f64>,
    pub support_resolution: usize,
    pub max_iter: usize,
}

impl Default for FrontPathConfig {
    fn default() -> Self {
        FrontPathConfig {
            penalty: 1e3,
            restarts: 8,
            seed: 0,
            temperatures: vec![1e-1, 1e-2, 1e-3, 1e-4],
            support_resolution: 64,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPathResult {
    pub value: f64,
    pub path: DiscretePath,
    /// end-point distance to `G0`
    pub end_gap: f64,
    pub converged: bool,
}

/// Per-segment gains `int c - I` on the segment, with gradients.
struct Gains<'a> {
    p: &'a ProblemDefinition,
    c: &'a Field,
    lag: SegmentLagrangian<'a>,
    gc: Vec<f64>,
}

impl<'a> Gains<'a> {
    fn new(p: &'a ProblemDefinition) -> Result<Self> {
        let c = p
            .reaction()
            .ok_or_else(|| Error::Precondition("problem has no reaction field c".into()))?;
        Ok(Gains {
            p,
            c,
            lag: SegmentLagrangian::new(p, Integrand::Kinetic),
            gc: vec![0.0; p.dim()],
        })
    }

    /// Fills `seg[k]` and, when given, `dseg[k]` = gradient of segment `k`
    /// with respect to its two end points (`2 d` values).
    fn eval(&mut self, f: &DiscretePath, seg: &mut [f64], mut dseg: Option<&mut [f64]>) -> Result<()> {
        let d = self.p.dim();
        let n = f.segments();
        let dt = f.dt();
        let mut cvals = vec![0.0; n + 1];
        let mut cgrad = vec![0.0; (n + 1) * d];
        for k in 0..=n {
            cvals[k] = self.c.value_grad(f.point(k), &mut self.gc)?;
            cgrad[k * d..(k + 1) * d].copy_from_slice(&self.gc);
        }
        let mut v = vec![0.0; d];
        let mut m = vec![0.0; d];
        for k in 0..n {
            let (a, b) = (f.point(k), f.point(k + 1));
            for i in 0..d {
                v[i] = (b[i] - a[i]) / dt;
                m[i] = 0.5 * (a[i] + b[i]);
            }
            let reaction = 0.5 * dt * (cvals[k] + cvals[k + 1]);
            match dseg.as_deref_mut() {
                Some(ds) => {
                    let l = self.lag.value_grad(&v, &m)?;
                    seg[k] = reaction - dt * l;
                    let out = &mut ds[k * 2 * d..(k + 1) * 2 * d];
                    for i in 0..d {
                        out[i] = 0.5 * dt * cgrad[k * d + i] - (-self.lag.dl_dv[i] + 0.5 * dt * self.lag.dl_dm[i]);
                        out[d + i] =
                            0.5 * dt * cgrad[(k + 1) * d + i] - (self.lag.dl_dv[i] + 0.5 * dt * self.lag.dl_dm[i]);
                    }
                }
                None => {
                    let l = self.lag.value(&v, &m)?;
                    seg[k] = reaction - dt * l;
                }
            }
        }
        Ok(())
    }
}

fn initial_front_path(
    q: &[f64],
    target: &[f64],
    t: f64,
    n: usize,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DiscretePath> {
    let mut f = DiscretePath::line(t, n, q, target)?;
    let d = q.len();
    if jitter > 0.0 {
        for k in 1..=n {
            for i in 0..d {
                f.points[k * d + i] += jitter * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
    }
    Ok(f)
}

/// Objective over the per-segment gains: returns its value and, when asked,
/// the derivative with respect to each gain.
type Reduce<'r> = dyn FnMut(&[f64], Option<&mut [f64]>) -> f64 + 'r;

struct FrontSolver<'a> {
    p: &'a ProblemDefinition,
    support: Support,
    gains: Gains<'a>,
    cfg: &'a FrontPathConfig,
}

impl<'a> FrontSolver<'a> {
    fn new(p: &'a ProblemDefinition, q: &[f64], t: f64, n: usize, cfg: &'a FrontPathConfig) -> Result<Self> {
        let d = p.dim();
        if q.len() != d {
            return Err(Error::Precondition(format!("q must have dimension {d}")));
        }
        if n < 2 || !(t > 0.0) {
            return Err(Error::Precondition("need N >= 2 and t > 0".into()));
        }
        Ok(FrontSolver {
            p,
            support: Support::from_problem(p, cfg.support_resolution)?,
            gains: Gains::new(p)?,
            cfg,
        })
    }

    fn score(&self, r: &FrontPathResult) -> f64 {
        r.value - self.cfg.penalty * r.end_gap * r.end_gap
    }

    /// Maximizes `reduce(gains) - penalty * gap^2` from `init` (start point fixed).
    fn solve(&mut self, init: DiscretePath, reduce: &mut Reduce<'_>) -> Result<FrontPathResult> {
        let d = self.p.dim();
        let n = init.segments();
        let mut work = init;
        let mut seg = vec![0.0; n];
        let mut dseg = vec![0.0; n * 2 * d];
        let mut weights = vec![0.0; n];
        let mut full = vec![0.0; (n + 1) * d];
        let penalty = self.cfg.penalty;
        let support = &self.support;
        let gains = &mut self.gains;
        let opts = LbfgsOptions {
            max_iter: self.cfg.max_iter,
            ..Default::default()
        };
        let x0 = work.points[d..].to_vec();
        let res = lbfgs(
            |x, g| {
                work.points[d..].copy_from_slice(x);
                gains.eval(&work, &mut seg, Some(&mut dseg))?;
                let mut value = -reduce(&seg, Some(&mut weights));
                full.fill(0.0);
                for k in 0..n {
                    for i in 0..d {
                        full[k * d + i] -= weights[k] * dseg[k * 2 * d + i];
                        full[(k + 1) * d + i] -= weights[k] * dseg[k * 2 * d + d + i];
                    }
                }
                let end = work.end();
                let proj = support.project(end);
                for i in 0..d {
                    let diff = end[i] - proj[i];
                    value += penalty * diff * diff;
                    full[n * d + i] += 2.0 * penalty * diff;
                }
                g.copy_from_slice(&full[d..]);
                Ok(value)
            },
            x0,
            opts,
        )?;
        work.points[d..].copy_from_slice(&res.x);
        self.gains.eval(&work, &mut seg, None)?;
        Ok(FrontPathResult {
            value: reduce(&seg, None),
            end_gap: self.support.distance(work.end()),
            path: work,
            converged: res.converged,
        })
    }
}

fn plain_sum(seg: &[f64], w: Option<&mut [f64]>) -> f64 {
    if let Some(w) = w {
        w.fill(1.0);
    }
    seg.iter().sum()
}

/// Soft minimum over prefix sums `S_0 = 0, S_j = sum_{k<j} seg_k`; without
/// a weight buffer the hard minimum is returned.
fn prefix_softmin(tau: f64, seg: &[f64], w: Option<&mut [f64]>) -> f64 {
    let n = seg.len();
    let mut s = vec![0.0; n + 1];
    for k in 0..n {
        s[k + 1] = s[k] + seg[k];
    }
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let Some(w) = w else { return smin };
    let e: Vec<f64> = s.iter().map(|x| (-(x - smin) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    // d softmin / d seg_k = sum_{j > k} softmax_j
    let mut tail = 0.0;
    for k in (0..n).rev() {
        tail += e[k + 1] / z;
        w[k] = tail;
    }
    smin - tau * z.ln()
}

/// `R(t, q) = sup { int_0^t c(f, 0) - I_t(f) : f(0) = q, f(t) in G0 }` with
/// the end constraint relaxed to a quadratic penalty.
pub fn r_general(p: &ProblemDefinition, q: &[f64], t: f64, n: usize, cfg: &FrontPathConfig) -> Result<FrontPathResult> {
    let mut solver = FrontSolver::new(p, q, t, n, cfg)?;
    let target = solver.support.project(q);
    let init = DiscretePath::line(t, n, q, &target)?;
    solver.solve(init, &mut plain_sum)
}

/// `R~(t, q) = sup_f min_{0 <= a <= t} (int_0^a c - I_a)` over grid
/// prefixes. The minimum is smoothed with an annealed soft minimum and the
/// best of several starting paths is kept.
pub fn r_tilde(p: &ProblemDefinition, q: &[f64], t: f64, n: usize, cfg: &FrontPathConfig) -> Result<FrontPathResult> {
    let mut solver = FrontSolver::new(p, q, t, n, cfg)?;
    let target = solver.support.project(q);
    let temps = if cfg.temperatures.is_empty() {
        vec![1e-4]
    } else {
        cfg.temperatures.clone()
    };
    let spread = crate::sde::euclid(q, &target).max(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<FrontPathResult> = None;
    for attempt in 0..cfg.restarts.max(1) {
        let jitter = if attempt == 0 { 0.0 } else { 0.3 * spread };
        let mut path = initial_front_path(q, &target, t, n, jitter, &mut rng)?;
        let mut last = None;
        for &tau in &temps {
            let r = solver.solve(path, &mut |s: &[f64], w: Option<&mut [f64]>| prefix_softmin(tau, s, w))?;
            path = r.path.clone();
            last = Some(r);
        }
        let cand = last.expect("temperatures nonempty");
        if best.as_ref().is_none_or(|b| solver.score(&cand) > solver.score(b)) {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeynmanKacEstimate {
    pub estimate: f64,
    /// `eps log estimate`; `None` when every sample has `g = 0`
    pub eps_log: Option<f64>,
    pub nonzero_samples: usize,
}

/// Monte Carlo mean of `g(q_eps(t)) exp(eps^{-1} int_0^t c(q_eps, 0))`
/// over inertial paths from `(q, pvel)`, accumulated in log space.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_bound(
    p: &ProblemDefinition,
    q: &[f64],
    pvel: &[f64],
    t: f64,
    eps: f64,
    m: usize,
    seed: u64,
    h_max: f64,
) -> Result<FeynmanKacEstimate> {
    let g = initial_datum(p)?;
    let c = p
        .reaction()
        .ok_or_else(|| Error::Precondition("problem has no reaction field c".into()))?;
    let target = (eps * eps / 4.0).min(h_max);
    let steps = (t / target).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let sp = SimParams {
        eps,
        t_end: t,
        h,
        scheme: Scheme::Exponential,
        seed,
        beta: None,
    };
    let logs: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let noise = NoisePath::generate(seed, k, steps, p.noise_dim(), h)?;
            let tr = simulate_inertial(p, &sp, q, pvel, &noise, None)?;
            let gv = g.value(tr.final_q())?;
            if gv <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let mut integral = 0.0;
            for n in 0..=steps {
                let w = if n == 0 || n == steps { 0.5 } else { 1.0 };
                integral += w * c.expr().eval_with_u(tr.q_at(n), 0.0)?;
            }
            Ok(gv.ln() + integral * h / eps)
        })
        .collect::<Result<Vec<_>>>()?;
    let nonzero = logs.iter().filter(|l| l.is_finite()).count();
    let lme = log_mean_exp(&logs);
    Ok(FeynmanKacEstimate {
        estimate: lme.exp(),
        eps_log: if nonzero > 0 { Some(eps * lme) } else { None },
        nonzero_samples: nonzero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{presets, ProblemFile};

    fn kpp(alpha: &str, c: &str) -> ProblemDefinition {
        ProblemDefinition::from_file(ProblemFile {
            alpha: alpha.into(),
            c: Some(c.into()),
            ..presets::kpp_1d()
        })
        .unwrap()
    }

    fn point_seed_2d(alpha: &str) -> ProblemDefinition {
        ProblemDefinition::from_file(ProblemFile {
            alpha: alpha.into(),
            g: Some("max(0, 0.0001 - q1^2 - q2^2)".into()),
            ..presets::huygens_2d()
        })
        .unwrap()
    }

    #[test]
    fn octile_distance_bound() {
        let p = point_seed_2d("1");
        let rho = riemannian_distance(&p, &GridSpec::square(1.0, 2, 0.05)).unwrap();
        for idx in 0..rho.len() {
            let q = rho.node(idx);
            let e = (q[0] * q[0] + q[1] * q[1]).sqrt();
            assert!(rho.values[idx] >= e - 1e-12);
            assert!(rho.values[idx] <= 1.09 * e + 1e-12, "{q:?}");
        }
        let rho2 = riemannian_distance(&point_seed_2d("2"), &GridSpec::square(1.0, 2, 0.05)).unwrap();
        for (a, b) in rho.values.iter().zip(&rho2.values) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn one_dimensional_distance_matches_quadrature() {
        let p = ProblemDefinition::from_file(ProblemFile {
            alpha: "2 + cos(abs(q1))".into(),
            g: Some("max(0, 0.000001 - q1^2)".into()),
            ..presets::kpp_1d()
        })
        .unwrap();
        let h = 0.01;
        let rho = riemannian_distance(&p, &GridSpec::square(2.0, 1, h)).unwrap();
        for idx in 0..rho.len() {
            let q = rho.node(idx)[0];
            let exact = 2.0 * q.abs() + q.abs().sin();
            assert!((rho.values[idx] - exact).abs() <= 2.0 * h);
        }
    }

    #[test]
    fn no_seed_is_an_error() {
        let p = ProblemDefinition::from_file(ProblemFile {
            g: Some("0".into()),
            ..presets::kpp_1d()
        })
        .unwrap();
        assert!(matches!(
            riemannian_distance(&p, &GridSpec::square(1.0, 1, 0.1)),
            Err(Error::EmptySeedSet)
        ));
    }

    #[test]
    fn r_formula_and_front_extraction() {
        let rho = GridField {
            origin: vec![0.0],
            spacing: 0.5,
            dims: vec![5],
            values: vec![0.0, 0.5, 2f64.sqrt(), 1.5, 2.0],
            kind: GridKind::Rho,
        };
        let r = r_constant_c(&rho, 1.0, 1.0).unwrap();
        assert_eq!(r.values[0], 1.0);
        assert!(r.values[2].abs() < 1e-15);

        let affine = GridField {
            origin: vec![0.0],
            spacing: 0.1,
            dims: vec![11],
            values: (0..11).map(|k| 0.37 - 0.1 * k as f64).collect(),
            kind: GridKind::R,
        };
        let c = extract_front(&affine).unwrap();
        assert_eq!(c.points.len(), 1);
        assert!((c.points[0][0] - 0.37).abs() < 1e-12);

        let positive = GridField {
            values: vec![1.0; 11],
            ..affine
        };
        assert!(matches!(extract_front(&positive), Err(Error::NoSignChange)));
    }

    #[test]
    fn disk_front_radius() {
        let p = point_seed_2d("1");
        let h = 0.02;
        let rho = riemannian_distance(&p, &GridSpec::square(1.8, 2, h)).unwrap();
        let front = extract_front(&r_constant_c(&rho, 1.0, 1.0).unwrap()).unwrap();
        for q in &front.points {
            let rad = (q[0] * q[0] + q[1] * q[1]).sqrt();
            // octile stencil: graph distance overestimates by up to 8.3%
            assert!(
                rad <= 2f64.sqrt() + 2.0 * h && rad >= 2f64.sqrt() / 1.0824 - 2.0 * h,
                "{rad}"
            );
        }
    }

    #[test]
    fn path_optimized_r_matches_grid_formula() {
        let p = kpp("1", "1");
        let cfg = FrontPathConfig::default();
        for (q, t) in [(0.8, 1.0), (1.5, 0.7), (0.05, 1.0), (-1.2, 1.3)] {
            let rho = (f64::abs(q) - 0.1).max(0.0);
            let exact = t - rho * rho / (2.0 * t);
            let r = r_general(&p, &[q], t, 64, &cfg).unwrap();
            assert!(
                (r.value - exact).abs() <= 0.05 * exact.abs().max(0.1),
                "q={q} t={t}: {} vs {exact}",
                r.value
            );
        }
        let zero_c = kpp("1", "0");
        let inside = r_general(&zero_c, &[0.05], 1.0, 32, &cfg).unwrap();
        assert!(inside.value.abs() < 1e-6);
        let outside = r_general(&zero_c, &[1.0], 1.0, 32, &cfg).unwrap();
        assert!(outside.value < 0.0);
    }

    #[test]
    fn r_tilde_is_min_of_r_and_zero() {
        let p = kpp("1", "1");
        let cfg = FrontPathConfig {
            restarts: 2,
            ..Default::default()
        };
        for (q, t) in [(2.0, 1.0), (0.5, 1.0), (0.0, 0.5)] {
            let rho = (f64::abs(q) - 0.1).max(0.0);
            let r = t - rho * rho / (2.0 * t);
            let rt = r_tilde(&p, &[q], t, 48, &cfg).unwrap();
            assert!(rt.value <= 1e-12);
            assert!(
                (rt.value - r.min(0.0)).abs() <= 0.05 * r.abs().max(0.1),
                "q={q}: {} vs {}",
                rt.value,
                r
            );
        }
    }

    #[test]
    fn feynman_kac_trivial_cases() {
        let zero_g = ProblemDefinition::from_file(ProblemFile {
            g: Some("0".into()),
            ..presets::kpp_1d()
        })
        .unwrap();
        let e = feynman_kac_bound(&zero_g, &[0.0], &[0.0], 0.5, 0.1, 20, 1, 0.01).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert_eq!(e.eps_log, None);

        let p = ProblemDefinition::from_file(ProblemFile {
            c: Some("0".into()),
            g: Some("max(0, 0.25 - q1^2)".into()),
            ..presets::kpp_1d()
        })
        .unwrap();
        let e = feynman_kac_bound(&p, &[0.0], &[0.0], 0.5, 0.1, 200, 1, 0.01).unwrap();
        assert!(e.estimate >= 0.0 && e.estimate <= 0.25);
    }
}
