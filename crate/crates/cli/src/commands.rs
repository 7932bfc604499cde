//! One function per subcommand. Each writes its artifacts below the output
//! directory and reports them back for the manifest.

use std::path::{Path, PathBuf};

use serde_json::json;
use strongdamp::action::{
    action_cf400, action_i, control_cost, running_cost_action, skeleton_g, ControlSignal, DiscretePath,
};
use strongdamp::exit::{exit_location_histogram, exit_scaling};
use strongdamp::expr::parse_with_dim;
use strongdamp::fields::{validate_with, ValidationOptions};
use strongdamp::front::{
    extract_front, feynman_kac_bound, front_speed, r_constant_c, r_general, r_tilde, riemannian_distance, GridSpec,
};
use strongdamp::ldpcheck::{controlled_convergence, h_eps_scaling, laplace_check, HMetric};
use strongdamp::noise::NoisePath;
use strongdamp::output::{parse_csv, read_text, write_json, Csv};
use strongdamp::quasipotential::{
    check_cf400_equivalence, gradient_case_oracle, quasipotential_boundary, quasipotential_v,
};
use strongdamp::sde::{compute_h, simulate_first_order, simulate_inertial, sup_norm_h, SimParams};
use strongdamp::suite::{run_all, run_suite, SuiteConfig};
use strongdamp::ProblemDefinition;

use crate::config::{ControlSpec, PathSpec};
use crate::{relative, CliError, Command, Completed, Context};

/// Records every file a command writes.
struct Outputs<'a> {
    root: &'a Path,
    files: Vec<PathBuf>,
    plot: Option<Csv>,
}

impl<'a> Outputs<'a> {
    fn new(ctx: &'a Context) -> Self {
        Outputs {
            root: &ctx.out,
            files: Vec::new(),
            plot: ctx.emit_plot_data.then(|| Csv::new(&["series", "x", "y"])),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, csv: &Csv) -> Result<(), CliError> {
        let path = self.path(name);
        csv.write(&path)?;
        self.files.push(path);
        Ok(())
    }

    fn plot(&mut self, series: &str, x: f64, y: f64) {
        if let Some(p) = self.plot.as_mut() {
            p.raw_row(&[series.to_string(), x.to_string(), y.to_string()]);
        }
    }

    fn finish(mut self, passed: bool) -> Result<Completed, CliError> {
        if let Some(p) = self.plot.take() {
            self.csv("plot_data.csv", &p)?;
        }
        for f in &self.files {
            println!("wrote {}", relative(self.root, f));
        }
        Ok(Completed {
            passed,
            artifacts: self.files,
        })
    }
}

pub fn dispatch(ctx: &Context) -> Result<Completed, CliError> {
    match ctx.command {
        Command::Validate => validate(ctx),
        Command::Simulate => simulate(ctx),
        Command::Action => action(ctx),
        Command::Quasipotential => quasipotential(ctx),
        Command::Exit => exit(ctx),
        Command::Front => front(ctx),
        Command::Verify => verify(ctx),
        Command::All => all(ctx),
    }
}

fn missing(block: &str) -> CliError {
    CliError::Config(format!("config has no `{block}` block"))
}

fn check_dim(name: &str, v: &[f64], d: usize) -> Result<(), CliError> {
    if v.len() != d {
        return Err(CliError::Config(format!(
            "`{name}` has {} components, expected {d}",
            v.len()
        )));
    }
    Ok(())
}

/// Rewrites the variable `t` as `q1` so time expressions reuse the field
/// parser.
fn time_expression(src: &str) -> String {
    let mut out = String::with_capacity(src.len() + 4);
    let mut ident = String::new();
    let flush = |ident: &mut String, out: &mut String| {
        if ident == "t" {
            out.push_str("q1");
        } else {
            out.push_str(ident);
        }
        ident.clear();
    };
    for ch in src.chars() {
        if ch.is_ascii_alphanumeric() || ch == '_' {
            ident.push(ch);
        } else {
            flush(&mut ident, &mut out);
            out.push(ch);
        }
    }
    flush(&mut ident, &mut out);
    out
}

fn control_signal(
    spec: &ControlSpec,
    base: &Path,
    t_end: Option<f64>,
    n: Option<usize>,
    r: usize,
) -> Result<ControlSignal, CliError> {
    let grid = || match (t_end, n) {
        (Some(t), Some(n)) if t > 0.0 && n >= 2 => Ok((t, n)),
        _ => Err(CliError::Config(
            "a constant or expression control needs T > 0 and N >= 2".into(),
        )),
    };
    match spec {
        ControlSpec::Constant(u) => {
            check_dim("control", u, r)?;
            let (t, n) = grid()?;
            Ok(ControlSignal::constant(t, n, u))
        }
        ControlSpec::Expressions(src) => {
            if src.len() != r {
                return Err(CliError::Config(format!(
                    "control has {} expressions, r = {r}",
                    src.len()
                )));
            }
            let exprs = src
                .iter()
                .map(|s| {
                    parse_with_dim(&time_expression(s), Some(1))
                        .map_err(|e| CliError::Config(format!("control `{s}`: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (t, n) = grid()?;
            let mut values = Vec::with_capacity((n + 1) * r);
            for k in 0..=n {
                let tk = t * k as f64 / n as f64;
                for e in &exprs {
                    values.push(
                        e.eval(&[tk])
                            .map_err(|e| CliError::Numerical(format!("control at t = {tk}: {e}")))?,
                    );
                }
            }
            Ok(ControlSignal::new(t, r, values, None)?)
        }
        ControlSpec::File(path) => {
            let full = base.join(path);
            let text = read_text(&full).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
            let (header, rows) = parse_csv(&text)?;
            if header.len() != r + 1 || rows.len() < 3 {
                return Err(CliError::Config(format!(
                    "{}: need columns t,u1..u{r} and at least 3 rows",
                    full.display()
                )));
            }
            let t = rows[rows.len() - 1][0];
            if let Some(want) = t_end {
                if ((t - want) / want).abs() > 1e-9 {
                    return Err(CliError::Config(format!("control file ends at t = {t}, T = {want}")));
                }
            }
            let dt = t / (rows.len() - 1) as f64;
            if rows
                .iter()
                .enumerate()
                .any(|(k, row)| (row[0] - k as f64 * dt).abs() > 1e-9 * t.max(1.0))
            {
                return Err(CliError::Config(format!(
                    "{}: time column is not uniform from 0",
                    full.display()
                )));
            }
            let values = rows.iter().flat_map(|row| row[1..].to_vec()).collect();
            Ok(ControlSignal::new(t, r, values, None)?)
        }
    }
}

fn problem(ctx: &Context) -> Result<ProblemDefinition, CliError> {
    ctx.config.problem(&ctx.base)
}

fn validate(ctx: &Context) -> Result<Completed, CliError> {
    let p = problem(ctx)?;
    let params = ctx.config.validate.clone().unwrap_or_default();
    let opts = ValidationOptions {
        sigma_tolerance: params.sigma_tolerance,
        gradient_tolerance: params.gradient_tolerance,
        boundary_resolution: params.boundary_resolution,
    };
    let report = validate_with(&p, params.samples, ctx.seed, opts)?;
    for c in &report.checks {
        println!(
            "[{}] {} = {:.6e} (threshold {:.3e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    let mut out = Outputs::new(ctx);
    for (i, c) in report.checks.iter().enumerate() {
        out.plot(&c.name, i as f64, c.value);
    }
    out.json("validation.json", &report)?;
    out.finish(report.passed())
}

fn simulate(ctx: &Context) -> Result<Completed, CliError> {
    let p = problem(ctx)?;
    let s = ctx.config.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
    let d = p.dim();
    let r = p.noise_dim();
    let q0 = s.q0.clone().unwrap_or_else(|| p.equilibrium().to_vec());
    let p0 = s.p0.clone().unwrap_or_else(|| vec![0.0; d]);
    check_dim("q0", &q0, d)?;
    check_dim("p0", &p0, d)?;
    if s.paths == 0 || s.stride == 0 {
        return Err(CliError::Config("`paths` and `stride` must be positive".into()));
    }
    let sp = SimParams {
        eps: s.eps,
        t_end: s.t_end,
        h: s.h,
        scheme: s.scheme,
        seed: ctx.seed,
        beta: s.beta,
    };
    let steps = sp.steps()?;
    let u = s
        .control
        .as_ref()
        .map(|c| control_signal(c, &ctx.base, Some(s.t_end), Some(steps.max(2)), r))
        .transpose()?;
    let mut out = Outputs::new(ctx);
    let mut finals = Vec::with_capacity(s.paths);
    let mut sups = Vec::new();
    for k in 0..s.paths {
        let noise = NoisePath::generate(ctx.seed, k as u64, steps, r, s.h)?;
        let mut tr = if s.first_order {
            simulate_first_order(&p, &sp, &q0, &noise, u.as_ref())?
        } else {
            simulate_inertial(&p, &sp, &q0, &p0, &noise, u.as_ref())?
        };
        if s.compute_h {
            tr = compute_h(&tr, &p, &noise, s.beta)?;
            sups.push(sup_norm_h(&tr).unwrap_or(f64::NAN));
        }
        finals.push(tr.final_q().to_vec());
        let thin = tr.subsample(s.stride);
        out.csv(&format!("paths/path_{k:04}.csv"), &thin.to_csv())?;
        for n in 0..thin.len() {
            for (i, q) in thin.q_at(n).iter().enumerate() {
                out.plot(&format!("path{k}_q{}", i + 1), thin.times[n], *q);
            }
        }
    }
    let summary = json!({
        "eps": s.eps,
        "T": s.t_end,
        "h": s.h,
        "steps": steps,
        "paths": s.paths,
        "first_order": s.first_order,
        "final_q": finals,
        "sup_h": if s.compute_h { json!(sups) } else { json!(null) },
    });
    println!("simulated {} path(s) of {steps} steps", s.paths);
    out.json("simulate.json", &summary)?;
    out.finish(true)
}

fn action(ctx: &Context) -> Result<Completed, CliError> {
    let p = problem(ctx)?;
    let a = ctx.config.action.as_ref().ok_or_else(|| missing("action"))?;
    let d = p.dim();
    let mut cost = None;
    let path = match (&a.path, &a.control) {
        (Some(_), Some(_)) => return Err(CliError::Config("give either `path` or `control`, not both".into())),
        (None, None) => return Err(CliError::Config("`action` needs `path` or `control`".into())),
        (None, Some(spec)) => {
            let q0 = a.q0.clone().unwrap_or_else(|| p.equilibrium().to_vec());
            check_dim("q0", &q0, d)?;
            let u = control_signal(spec, &ctx.base, a.t_end, a.n, p.noise_dim())?;
            cost = Some(control_cost(&u));
            skeleton_g(&u, &q0, &p, u.t_end, u.segments())?
        }
        (Some(PathSpec::File(f)), None) => {
            let full = ctx.base.join(f);
            let text = read_text(&full).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
            DiscretePath::from_csv(&text)?
        }
        (Some(PathSpec::Line(l)), None) => {
            check_dim("from", &l.from, d)?;
            check_dim("to", &l.to, d)?;
            DiscretePath::line(l.t_end, l.n, &l.from, &l.to)?
        }
    };
    let i41 = action_i(&path, &p)?;
    let i400 = action_cf400(&path, &p)?;
    let running = if a.running_cost {
        Some(running_cost_action(&path, &p)?)
    } else {
        None
    };
    let dt = path.dt();
    let mut integrand = Csv::new(&["t", "cf41", "cf400"]);
    let mut out = Outputs::new(ctx);
    for k in 0..path.segments() {
        let t = (k as f64 + 0.5) * dt;
        integrand.row(&[t, i41.integrand[k] / dt, i400.integrand[k] / dt]);
        out.plot("cf41", t, i41.integrand[k] / dt);
        out.plot("cf400", t, i400.integrand[k] / dt);
    }
    println!("I = {:.6}  I(cf400) = {:.6}", i41.value, i400.value);
    out.csv("path.csv", &path.to_csv())?;
    out.csv("integrand.csv", &integrand)?;
    out.json(
        "action.json",
        &json!({
            "T": path.t_end,
            "N": path.segments(),
            "I": i41.value,
            "I_cf400": i400.value,
            "control_cost": cost,
            "running_cost_action": running,
        }),
    )?;
    out.finish(true)
}

fn quasipotential(ctx: &Context) -> Result<Completed, CliError> {
    let p = problem(ctx)?;
    let q = ctx
        .config
        .quasipotential
        .as_ref()
        .ok_or_else(|| missing("quasipotential"))?;
    let d = p.dim();
    let mut mam = q.mam.clone().unwrap_or_default();
    if let Some(f) = q.functional {
        mam.functional = f;
    }
    let mut out = Outputs::new(ctx);
    if q.boundary {
        if q.q.is_some() {
            return Err(CliError::Config("`q` and `boundary` are exclusive".into()));
        }
        let b = quasipotential_boundary(&p, q.boundary_samples, &mam)?;
        let mut header = vec!["s".to_string()];
        header.extend((1..=d).map(|i| format!("q{i}")));
        header.push("V".into());
        let mut csv = Csv::new(&header);
        for bp in &b.profile {
            let mut row = vec![bp.s];
            row.extend_from_slice(&bp.q);
            row.push(bp.v);
            csv.row(&row);
            out.plot("V", bp.s, bp.v);
        }
        println!("V0 = {:.6} at {:?}", b.v0, b.q_star);
        out.csv("profile.csv", &csv)?;
        out.json("quasipotential.json", &b)?;
        return out.finish(true);
    }
    let target =
        q.q.as_ref()
            .ok_or_else(|| CliError::Config("`quasipotential` needs `q` or `boundary: true`".into()))?;
    check_dim("q", target, d)?;
    let from = q.from.clone().unwrap_or_else(|| p.equilibrium().to_vec());
    check_dim("from", &from, d)?;
    let at_equilibrium = from == p.equilibrium();
    let r = quasipotential_v(&from, target, &p, &mam)?;
    let oracle = if at_equilibrium {
        gradient_case_oracle(target, &p).ok()
    } else {
        None
    };
    let equivalence = if q.check_equivalence {
        if !at_equilibrium {
            return Err(CliError::Config(
                "`check_equivalence` needs `from` at the equilibrium".into(),
            ));
        }
        Some(check_cf400_equivalence(target, &p, &mam)?)
    } else {
        None
    };
    for k in 0..=r.path.segments() {
        let t = k as f64 * r.path.dt();
        for (i, x) in r.path.point(k).iter().enumerate() {
            out.plot(&format!("q{}", i + 1), t, *x);
        }
    }
    println!("V = {:.6} (T* = {:.3}, converged = {})", r.value, r.t_star, r.converged);
    out.csv("path.csv", &r.path.to_csv())?;
    out.json(
        "quasipotential.json",
        &json!({
            "V": r.value,
            "T_star": r.t_star,
            "iterations": r.iterations,
            "grad_norm": r.grad_norm,
            "converged": r.converged,
            "functional": mam.functional,
            "oracle": oracle,
            "equivalence": equivalence,
        }),
    )?;
    out.finish(true)
}

fn exit(ctx: &Context) -> Result<Completed, CliError> {
    let p = problem(ctx)?;
    let e = ctx.config.exit.as_ref().ok_or_else(|| missing("exit"))?;
    let scaling = exit_scaling(&p, &e.eps_ladder, e.m, ctx.seed, &e.config, e.v0_hint)?;
    let d = p.dim();
    let mut out = Outputs::new(ctx);
    let mut header = vec!["eps".to_string(), "tau".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    let mut samples = Csv::new(&header);
    let mut rungs = Vec::new();
    for r in &scaling.rungs {
        for (tau, x) in r.taus.iter().zip(&r.exit_points) {
            let mut row = vec![r.eps, *tau];
            row.extend_from_slice(x);
            samples.row(&row);
        }
        out.plot("eps_log_mean", r.eps, r.eps_log_mean);
        let histogram = match exit_location_histogram(r, e.histogram_bins, p.equilibrium()) {
            Ok(h) => {
                let mut csv = Csv::new(&["lo", "hi", "count"]);
                for (k, c) in h.counts.iter().enumerate() {
                    csv.row(&[h.edges[k], h.edges[k + 1], *c as f64]);
                    out.plot(
                        &format!("histogram_eps{}", r.eps),
                        0.5 * (h.edges[k] + h.edges[k + 1]),
                        *c as f64,
                    );
                }
                out.csv(&format!("histogram_eps{}.csv", r.eps), &csv)?;
                Some(h)
            }
            Err(strongdamp::Error::InsufficientSamples { .. }) => None,
            Err(err) => return Err(err.into()),
        };
        println!(
            "eps = {}: E tau = {:.4e} +- {:.2e}, eps log E tau = {:.4}, timeouts = {}",
            r.eps, r.mean_tau, r.ci_halfwidth, r.eps_log_mean, r.timeouts
        );
        rungs.push(json!({
            "eps": r.eps,
            "n_samples": r.n_samples,
            "mean_tau": r.mean_tau,
            "ci_halfwidth": r.ci_halfwidth,
            "eps_log_mean": r.eps_log_mean,
            "median_tau": r.median_tau,
            "timeouts": r.timeouts,
            "lower_bound": r.lower_bound,
            "histogram": histogram,
        }));
    }
    for w in &scaling.warnings {
        eprintln!("warning: {w}");
    }
    println!("extrapolated eps log E tau -> {:.4}", scaling.extrapolated);
    out.csv("exit_samples.csv", &samples)?;
    out.json(
        "exit.json",
        &json!({
            "rungs": rungs,
            "extrapolated": scaling.extrapolated,
            "slope": scaling.slope,
            "fitted_rungs": scaling.fitted_rungs,
            "warnings": scaling.warnings,
        }),
    )?;
    out.finish(true)
}

fn default_grid(p: &ProblemDefinition) -> GridSpec {
    let bx = p.sample_box();
    let span = bx.iter().map(|b| b[1] - b[0]).fold(0.0, f64::max);
    GridSpec {
        lo: bx.iter().map(|b| b[0]).collect(),
        hi: bx.iter().map(|b| b[1]).collect(),
        h: span / 200.0,
    }
}

fn front(ctx: &Context) -> Result<Completed, CliError> {
    let p = problem(ctx)?;
    let f = ctx.config.front.as_ref().ok_or_else(|| missing("front"))?;
    if f.times.is_empty() && f.points.is_empty() && f.feynman_kac.is_none() && f.grid.is_none() {
        return Err(CliError::Config(
            "`front` needs `grid`, `times`, `points` or `feynman_kac`".into(),
        ));
    }
    let d = p.dim();
    let mut out = Outputs::new(ctx);
    let mut summary = serde_json::Map::new();
    if f.grid.is_some() || !f.times.is_empty() {
        let spec = f.grid.clone().unwrap_or_else(|| default_grid(&p));
        let rho = riemannian_distance(&p, &spec)?;
        let path = out.path("rho.csv.gz");
        rho.write(&path)?;
        out.files.push(path.with_extension("json"));
        out.files.push(path);
        if !f.times.is_empty() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for idx in 0..rho.len() {
                let c = p.reaction_at_zero(&rho.node(idx))?;
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if hi - lo > 1e-12 * hi.abs().max(1.0) {
                return Err(CliError::Config(format!(
                    "fronts from rho need constant c(q, 0); it ranges over [{lo}, {hi}]"
                )));
            }
            for &t in &f.times {
                let contour = extract_front(&r_constant_c(&rho, hi, t)?)?;
                for pt in &contour.points {
                    out.plot(&format!("front_t{t}"), pt[0], pt.get(1).copied().unwrap_or(0.0));
                }
                out.csv(&format!("front_t{t}.csv"), &contour.to_csv())?;
            }
            if f.times.len() >= 2 {
                let speed = front_speed(&rho, hi, &f.times, p.equilibrium())?;
                println!(
                    "front speed {:.4} (sqrt(2c) = {:.4}, r^2 = {:.4})",
                    speed.speed,
                    (2.0 * hi).sqrt(),
                    speed.r_squared
                );
                summary.insert("speed".into(), serde_json::to_value(&speed)?);
                summary.insert("c".into(), json!(hi));
            }
        }
    }
    if !f.points.is_empty() {
        let mut header: Vec<String> = (1..=d).map(|i| format!("q{i}")).collect();
        header.extend(["t", "R", "R_tilde", "gap_R", "gap_R_tilde"].map(String::from));
        let mut csv = Csv::new(&header);
        let mut rows = Vec::new();
        for pt in &f.points {
            check_dim("points.q", &pt.q, d)?;
            let rg = r_general(&p, &pt.q, pt.t, f.n, &f.path)?;
            let rt = r_tilde(&p, &pt.q, pt.t, f.n, &f.path)?;
            let mut row = pt.q.clone();
            row.extend([pt.t, rg.value, rt.value, rg.end_gap, rt.end_gap]);
            csv.row(&row);
            println!(
                "q = {:?}, t = {}: R = {:.5}, R~ = {:.5}",
                pt.q, pt.t, rg.value, rt.value
            );
            rows.push(json!({
                "q": pt.q,
                "t": pt.t,
                "R": rg.value,
                "R_tilde": rt.value,
                "converged": rg.converged && rt.converged,
            }));
        }
        out.csv("points.csv", &csv)?;
        summary.insert("points".into(), json!(rows));
    }
    if let Some(fk) = &f.feynman_kac {
        check_dim("feynman_kac.q", &fk.q, d)?;
        let pvel = fk.p.clone().unwrap_or_else(|| vec![0.0; d]);
        check_dim("feynman_kac.p", &pvel, d)?;
        let est = feynman_kac_bound(&p, &fk.q, &pvel, fk.t, fk.eps, fk.m, ctx.seed, fk.h_max)?;
        println!("Feynman-Kac mean {:.4e} (eps log = {:?})", est.estimate, est.eps_log);
        summary.insert("feynman_kac".into(), serde_json::to_value(&est)?);
    }
    out.json("front.json", &summary)?;
    out.finish(true)
}

fn verify(ctx: &Context) -> Result<Completed, CliError> {
    let p = problem(ctx)?;
    let v = ctx.config.verify.as_ref().ok_or_else(|| missing("verify"))?;
    if v.h_scaling.is_none() && v.convergence.is_none() && v.laplace.is_none() {
        return Err(CliError::Config(
            "`verify` needs `h_scaling`, `convergence` or `laplace`".into(),
        ));
    }
    let tol = ctx.config.tolerances();
    let mut out = Outputs::new(ctx);
    let mut checks = Vec::new();
    let mut all_passed = true;
    let mut record = |name: &str, passed: bool, report: serde_json::Value| {
        println!("[{}] {name}", if passed { "PASS" } else { "FAIL" });
        all_passed &= passed;
        checks.push(json!({ "name": name, "passed": passed, "report": report }));
    };
    if let Some(h) = &v.h_scaling {
        let fit = h_eps_scaling(&p, &h.eps_ladder, h.m, h.t_end, ctx.seed, &h.config)?;
        // the exponent window refers to the mean supremum
        let gated = h.config.metric == HMetric::MeanSup;
        let passed = !gated
            || (fit.fitted_exponent >= tol.h_exponent[0]
                && fit.fitted_exponent <= tol.h_exponent[1]
                && fit.r_squared >= tol.h_r_squared);
        for (e, m) in fit.eps_values.iter().zip(&fit.metric_values) {
            out.plot("h_metric", *e, *m);
        }
        println!("H exponent {:.3} (r^2 {:.3})", fit.fitted_exponent, fit.r_squared);
        record("h_scaling", passed, json!({ "gated": gated, "fit": fit }));
    }
    if let Some(c) = &v.convergence {
        let u = control_signal(&c.control, &ctx.base, Some(c.t_end), Some(c.n), p.noise_dim())?;
        let rep = controlled_convergence(&p, &u, &c.eps_ladder, c.m, ctx.seed, &c.config)?;
        for (e, err) in rep.eps_values.iter().zip(&rep.errors) {
            out.plot("convergence_error", *e, *err);
        }
        record("convergence", rep.strictly_decreasing, serde_json::to_value(&rep)?);
    }
    if let Some(l) = &v.laplace {
        let lambda = parse_with_dim(&l.terminal_cost, Some(p.dim()))
            .map_err(|e| CliError::Config(format!("terminal_cost: {e}")))?;
        let rep = laplace_check(&p, &lambda, &l.eps_ladder, l.m, l.t_end, ctx.seed, &l.config)?;
        for r in &rep.rungs {
            out.plot("laplace", r.eps, r.value);
        }
        println!(
            "Laplace extrapolated {:.4}, variational {:.4}, gap {:.3}",
            rep.extrapolated, rep.variational, rep.relative_gap
        );
        record(
            "laplace",
            rep.relative_gap <= tol.laplace_relative,
            serde_json::to_value(&rep)?,
        );
    }
    out.json("verify.json", &json!({ "tolerances": tol, "checks": checks }))?;
    out.finish(all_passed)
}

fn collect_files(dir: &Path, into: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            collect_files(&path, into)?;
        } else {
            into.push(path);
        }
    }
    Ok(())
}

fn all(ctx: &Context) -> Result<Completed, CliError> {
    let params = ctx.config.all.clone().unwrap_or_default();
    let cfg = SuiteConfig {
        seed: ctx.seed,
        criteria: params.criteria,
        tolerances: ctx.config.tolerances(),
    };
    let suite_dir = ctx.out.join("suite");
    let run = if params.determinism {
        let rerun = ctx.out.join(".rerun");
        let run = run_all(&cfg, &suite_dir, &rerun);
        let _ = std::fs::remove_dir_all(&rerun);
        run?
    } else {
        run_suite(&cfg, &suite_dir)?
    };
    for line in run.lines() {
        println!("{line}");
    }
    let mut out = Outputs::new(ctx);
    for (o, s) in run.report.outcomes.iter().zip(&run.seconds) {
        out.plot("seconds", o.id as f64, *s);
        out.plot("passed", o.id as f64, if o.passed { 1.0 } else { 0.0 });
    }
    collect_files(&suite_dir, &mut out.files)?;
    let passed = run.all_passed();
    out.finish(passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_variable_is_renamed() {
        assert_eq!(time_expression("sin(t) + t^2"), "sin(q1) + q1^2");
        assert_eq!(time_expression("tanh(t)"), "tanh(q1)");
        assert_eq!(time_expression("2*theta"), "2*theta");
    }
}
