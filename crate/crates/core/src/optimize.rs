//! Limited-memory BFGS with Armijo backtracking, and golden-section search.

use std::collections::VecDeque;

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// converged when `|grad|_inf <= gtol (1 + |f|)`
    pub gtol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iter: 5000,
            gtol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f`, which returns the value and writes the gradient.
/// Non-convergence is reported through `converged`, not as an error; errors
/// from `f` at trial points shrink the step, at the start they propagate.
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, opts: LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g)?;
    if n == 0 {
        return Ok(LbfgsResult {
            x,
            value: fx,
            grad_norm: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut dir = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut iterations = 0;
    let mut stalls = 0;
    loop {
        let gn = sup(&g);
        if gn <= opts.gtol * (1.0 + fx.abs()) {
            return Ok(LbfgsResult {
                x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: true,
            });
        }
        if iterations >= opts.max_iter {
            return Ok(LbfgsResult {
                x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: false,
            });
        }
        // two-loop recursion
        dir.copy_from_slice(&g);
        for (i, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[i] = a;
            for (d, yv) in dir.iter_mut().zip(y) {
                *d -= a * yv;
            }
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gn.max(1e-300).max(1.0),
        };
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (i, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &dir);
            for (d, sv) in dir.iter_mut().zip(s) {
                *d += (alpha_buf[i] - b) * sv;
            }
        }
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            hist.clear();
            for (d, gv) in dir.iter_mut().zip(&g) {
                *d = -gv / gn.max(1.0);
            }
            slope = dot(&dir, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                xt[i] = x[i] + step * dir[i];
            }
            if let Ok(ft) = f(&xt, &mut gt) {
                if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                    accepted = Some(ft);
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some(ft) = accepted else {
            if hist.is_empty() {
                return Ok(LbfgsResult {
                    x,
                    value: fx,
                    grad_norm: gn,
                    iterations,
                    converged: false,
                });
            }
            hist.clear();
            continue;
        };
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        if fx - ft <= 1e-15 * fx.abs().max(1e-300) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        fx = ft;
        if stalls >= 20 {
            let gn = sup(&g);
            return Ok(LbfgsResult {
                x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: gn <= opts.gtol * (1.0 + fx.abs()),
            });
        }
    }
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`; returns the
/// best abscissa and value seen, including the bracket ends if supplied.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, iterations: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for _ in 0..iterations {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let res = lbfgs(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                Ok((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
            },
            vec![-1.2, 1.0],
            LbfgsOptions::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-5 && (res.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let n = 200;
        let res = lbfgs(
            |x, g| {
                let mut v = 0.0;
                for i in 0..n {
                    let w = 1.0 + i as f64 * 50.0;
                    g[i] = w * (x[i] - 1.0);
                    v += 0.5 * w * (x[i] - 1.0).powi(2);
                }
                Ok(v)
            },
            vec![0.0; n],
            LbfgsOptions::default(),
        )
        .unwrap();
        assert!(res.converged, "{}", res.iterations);
        assert!(res.x.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, v) = golden_section(|x| Ok((x - 0.3).powi(2) + 2.0), -1.0, 2.0, 60).unwrap();
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
