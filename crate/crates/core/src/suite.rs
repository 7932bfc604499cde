//! The acceptance suite: one routine per criterion, each writing its
//! artifacts into its own subdirectory. Artifacts carry no timing so that
//! reruns with the same seed are byte-identical; wall times are returned
//! separately.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::action::{action_i, control_cost, skeleton_g, ControlSignal};
use crate::error::{Error, Result};
use crate::exit::{exit_location_histogram, exit_scaling, fraction_near, run_rung, ExitConfig};
use crate::expr::parse_expression;
use crate::fields::{presets, ProblemDefinition};
use crate::front::{front_speed, r_general, r_tilde, riemannian_distance, FrontPathConfig, GridSpec};
use crate::ldpcheck::{
    controlled_convergence, h_eps_scaling, laplace_check, ConvergenceConfig, HMetric, HScalingConfig, LaplaceConfig,
};
use crate::output::{write_json, Csv};
use crate::quasipotential::{
    check_cf400_equivalence, gradient_case_oracle, quasipotential_boundary, quasipotential_v, MamConfig,
};

/// Pass/fail thresholds. The defaults are the suite's reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub oracle_relative: f64,
    /// range of `2U(q)` over which the oracle comparison is made
    pub oracle_range: [f64; 2],
    pub cf400_relative: f64,
    pub control_absolute: f64,
    pub h_exponent: [f64; 2],
    pub h_r_squared: f64,
    pub exit_relative: f64,
    pub exit_mass: f64,
    /// fitted front speed as a multiple of `sqrt(2c)`
    pub front_speed: [f64; 2],
    pub rtilde_relative: f64,
    pub rtilde_floor: f64,
    pub laplace_relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oracle_relative: 0.03,
            oracle_range: [0.25, 4.0],
            cf400_relative: 0.02,
            control_absolute: 1e-3,
            h_exponent: [0.3, 0.7],
            h_r_squared: 0.9,
            exit_relative: 0.15,
            exit_mass: 0.7,
            front_speed: [0.95, 1.09],
            rtilde_relative: 0.05,
            rtilde_floor: 0.1,
            laplace_relative: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub seed: u64,
    /// criteria to run, from 1 to 9; determinism (10) is handled by `run_all`
    pub criteria: Vec<u32>,
    pub tolerances: Tolerances,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            criteria: (1..=9).collect(),
            tolerances: Tolerances::default(),
        }
    }
}

pub const CRITERIA: [(u32, &str, f64); 10] = [
    (1, "gradient_oracle", 60.0),
    (2, "functional_equivalence", 60.0),
    (3, "control_identity", 10.0),
    (4, "h_scaling", 120.0),
    (5, "controlled_convergence", 120.0),
    (6, "exit_asymptotics", 600.0),
    (7, "huygens_front", 120.0),
    (8, "rtilde_consistency", 180.0),
    (9, "laplace", 180.0),
    (10, "determinism", f64::INFINITY),
];

pub fn criterion_name(id: u32) -> &'static str {
    CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown")
}

/// Runtime budget in seconds.
pub fn criterion_budget(id: u32) -> f64 {
    CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.2)
        .unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    /// the numerical check, independent of wall time
    pub passed: bool,
    pub summary: String,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub outcomes: Vec<CriterionOutcome>,
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub report: SuiteReport,
    pub seconds: Vec<f64>,
}

impl SuiteRun {
    /// Numerical check passed and wall time within budget.
    pub fn passed(&self, i: usize) -> bool {
        let o = &self.report.outcomes[i];
        o.passed && self.seconds[i] <= criterion_budget(o.id)
    }

    pub fn all_passed(&self) -> bool {
        (0..self.report.outcomes.len()).all(|i| self.passed(i))
    }

    /// One line per criterion.
    pub fn lines(&self) -> Vec<String> {
        self.report
            .outcomes
            .iter()
            .zip(&self.seconds)
            .enumerate()
            .map(|(i, (o, s))| {
                let budget = criterion_budget(o.id);
                let time = if budget.is_finite() {
                    format!("{s:.1}s/{budget:.0}s")
                } else {
                    format!("{s:.1}s")
                };
                format!(
                    "[{}] {:>2} {:<24} {}  ({time})",
                    if self.passed(i) { "PASS" } else { "FAIL" },
                    o.id,
                    o.name,
                    o.summary
                )
            })
            .collect()
    }
}

fn outcome(id: u32, passed: bool, summary: String, details: serde_json::Value) -> CriterionOutcome {
    CriterionOutcome {
        id,
        name: criterion_name(id).to_string(),
        passed,
        summary,
        details,
    }
}

fn criterion_dir(out: &Path, id: u32) -> Result<PathBuf> {
    let dir = out.join(format!("c{id:02}_{}", criterion_name(id)));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn preset(name: &str) -> Result<ProblemDefinition> {
    presets::load(name)
}

fn mam(cfg: &SuiteConfig) -> MamConfig {
    MamConfig {
        seed: cfg.seed,
        ..Default::default()
    }
}

fn fmt_q(q: &[f64]) -> String {
    q.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

fn gradient_oracle(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let tol = &cfg.tolerances;
    let cases: [(&str, Vec<Vec<f64>>); 3] = [
        ("p1", vec![vec![-1.5], vec![0.5], vec![1.0], vec![1.5], vec![2.0]]),
        ("p2", vec![vec![-1.0], vec![0.7], vec![1.2], vec![1.8]]),
        (
            "p3",
            vec![
                vec![0.5, 0.0],
                vec![0.0, -1.0],
                vec![0.9, 0.9],
                vec![-1.2, 0.8],
                vec![1.9, 0.3],
            ],
        ),
    ];
    let mut csv = Csv::new(&["preset", "q", "V", "oracle", "relative_error", "T_star"]);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (name, points) in &cases {
        let p = preset(name)?;
        let o = p.equilibrium().to_vec();
        for q in points {
            let oracle = gradient_case_oracle(q, &p)?;
            if oracle < tol.oracle_range[0] || oracle > tol.oracle_range[1] {
                continue;
            }
            let r = quasipotential_v(&o, q, &p, &mam(cfg))?;
            let rel = (r.value - oracle).abs() / oracle;
            worst = worst.max(rel);
            count += 1;
            csv.raw_row(&[
                name.to_string(),
                fmt_q(q),
                format!("{}", r.value),
                format!("{oracle}"),
                format!("{rel}"),
                format!("{}", r.t_star),
            ]);
        }
    }
    csv.write(&dir.join("values.csv"))?;
    Ok(outcome(
        1,
        count > 0 && worst <= tol.oracle_relative,
        format!(
            "max |V - 2U|/2U = {worst:.2e} over {count} points (tol {})",
            tol.oracle_relative
        ),
        json!({ "max_relative_error": worst, "points": count }),
    ))
}

fn functional_equivalence(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let tol = cfg.tolerances.cf400_relative;
    let mut csv = Csv::new(&["preset", "q", "V_primary", "V_alternative", "relative_gap"]);
    let mut worst = 0.0f64;
    for (name, q) in [
        ("p1", vec![1.0]),
        ("p1", vec![-1.5]),
        ("p2", vec![1.2]),
        ("p2", vec![-0.8]),
    ] {
        let p = preset(name)?;
        let c = check_cf400_equivalence(&q, &p, &mam(cfg))?;
        worst = worst.max(c.relgap);
        csv.raw_row(&[
            name.to_string(),
            fmt_q(&q),
            format!("{}", c.v_cf41),
            format!("{}", c.v_cf400),
            format!("{}", c.relgap),
        ]);
    }
    csv.write(&dir.join("values.csv"))?;
    Ok(outcome(
        2,
        worst <= tol,
        format!("max relative gap = {worst:.2e} (tol {tol})"),
        json!({ "max_relative_gap": worst }),
    ))
}

/// Random trigonometric controls `u_i(t) = sum_j a_ij sin(j pi t / T + phi_ij)`.
fn random_control(rng: &mut ChaCha8Rng, t_end: f64, n: usize, r: usize) -> ControlSignal {
    let coef: Vec<(f64, f64)> = (0..3 * r)
        .map(|_| (2.0 * rng.random::<f64>() - 1.0, 2.0 * PI * rng.random::<f64>()))
        .collect();
    ControlSignal::from_fn(t_end, n, r, |t| {
        (0..r)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        let (a, phi) = coef[i * 3 + j];
                        a * ((j + 1) as f64 * PI * t / t_end + phi).sin()
                    })
                    .sum()
            })
            .collect()
    })
}

fn control_identity(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let tol = cfg.tolerances.control_absolute;
    let names = ["p1", "p2", "p3"];
    let problems = names.iter().map(|n| preset(n)).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x3c3c);
    let (t_end, n) = (1.0, 2048);
    let mut csv = Csv::new(&["case", "preset", "action", "energy", "difference"]);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let p = &problems[k % 3];
        let u = random_control(&mut rng, t_end, n, p.noise_dim());
        let g = skeleton_g(&u, p.equilibrium(), p, t_end, n)?;
        let a = action_i(&g, p)?.value;
        let e = control_cost(&u);
        worst = worst.max((a - e).abs());
        csv.raw_row(&[
            format!("{k}"),
            names[k % 3].to_string(),
            format!("{a}"),
            format!("{e}"),
            format!("{}", a - e),
        ]);
    }
    csv.write(&dir.join("values.csv"))?;
    Ok(outcome(
        3,
        worst <= tol,
        format!("max |I(G(u)) - |u|^2/2| = {worst:.2e} over 20 controls (tol {tol:e})"),
        json!({ "max_abs_difference": worst }),
    ))
}

const MC_LADDER: [f64; 3] = [0.2, 0.1, 0.05];

fn h_scaling(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let tol = &cfg.tolerances;
    let p = preset("p2")?;
    let sup = h_eps_scaling(&p, &MC_LADDER, 1000, 1.0, cfg.seed, &HScalingConfig::default())?;
    let moment = h_eps_scaling(
        &p,
        &MC_LADDER,
        1000,
        1.0,
        cfg.seed,
        &HScalingConfig {
            metric: HMetric::Moment(2),
            ..Default::default()
        },
    )?;
    let mut csv = Csv::new(&["eps", "mean_sup", "moment2"]);
    for i in 0..MC_LADDER.len() {
        csv.row(&[MC_LADDER[i], sup.metric_values[i], moment.metric_values[i]]);
    }
    csv.write(&dir.join("values.csv"))?;
    let k = sup.fitted_exponent;
    let passed = k >= tol.h_exponent[0] && k <= tol.h_exponent[1] && sup.r_squared >= tol.h_r_squared;
    Ok(outcome(
        4,
        passed,
        format!(
            "exponent {k:.3} (want [{}, {}]), r^2 {:.4}; second-moment exponent {:.3}",
            tol.h_exponent[0], tol.h_exponent[1], sup.r_squared, moment.fitted_exponent
        ),
        json!({ "sup": sup, "moment2": moment }),
    ))
}

fn convergence(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let p = preset("p2")?;
    let u = ControlSignal::from_fn(PI, 256, 1, |t| vec![t.sin()]);
    let r = controlled_convergence(&p, &u, &MC_LADDER, 500, cfg.seed, &ConvergenceConfig::default())?;
    let mut csv = Csv::new(&["eps", "error"]);
    for (e, v) in r.eps_values.iter().zip(&r.errors) {
        csv.row(&[*e, *v]);
    }
    csv.write(&dir.join("values.csv"))?;
    Ok(outcome(
        5,
        r.strictly_decreasing,
        format!(
            "errors {:?}, strictly decreasing: {}",
            r.errors.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>(),
            r.strictly_decreasing
        ),
        serde_json::to_value(&r)?,
    ))
}

fn exit_asymptotics(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let tol = &cfg.tolerances;
    let p = preset("p1")?;
    let v0 = [vec![-1.0], vec![1.0]]
        .iter()
        .map(|q| gradient_case_oracle(q, &p))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let ladder = [0.25, 0.18, 0.12];
    let sc = exit_scaling(&p, &ladder, 400, cfg.seed, &ExitConfig::default(), Some(v0))?;
    let mut csv = Csv::new(&[
        "eps",
        "mean_tau",
        "ci_halfwidth",
        "eps_log_mean",
        "median_tau",
        "timeouts",
    ]);
    for r in &sc.rungs {
        csv.row(&[
            r.eps,
            r.mean_tau,
            r.ci_halfwidth,
            r.eps_log_mean,
            r.median_tau,
            r.timeouts as f64,
        ]);
    }
    csv.write(&dir.join("rungs.csv"))?;
    let logs: Vec<f64> = sc.rungs.iter().map(|r| r.eps_log_mean).collect();
    let monotone = logs.windows(2).all(|w| w[1] > w[0]);
    let rel = (sc.extrapolated - v0).abs() / v0;

    let tilted = preset("tilted")?;
    let bmin = quasipotential_boundary(&tilted, 2, &mam(cfg))?;
    let stats = run_rung(&tilted, 0.25, 400, cfg.seed, 3 << 32, &ExitConfig::default())?;
    let hist = exit_location_histogram(&stats, 20, tilted.equilibrium())?;
    let mass = fraction_near(&stats, &bmin.q_star, 0.1);
    let mode_ok = crate::sde::euclid(&hist.mode_point, &bmin.q_star) <= 0.1;
    let mut hcsv = Csv::new(&["left", "right", "count"]);
    for (k, c) in hist.counts.iter().enumerate() {
        hcsv.row(&[hist.edges[k], hist.edges[k + 1], *c as f64]);
    }
    hcsv.write(&dir.join("tilted_histogram.csv"))?;

    let passed = monotone && rel <= tol.exit_relative && mode_ok && mass >= tol.exit_mass;
    Ok(outcome(
        6,
        passed,
        format!(
            "eps log E tau {:?} monotone: {monotone}; extrapolated {:.3} vs V0 {v0} (rel {rel:.3}, tol {}); tilted mass at q* = {:.2} ({mass:.3})",
            logs.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            sc.extrapolated,
            tol.exit_relative,
            bmin.q_star[0],
        ),
        json!({
            "eps_log_mean": logs,
            "monotone": monotone,
            "extrapolated": sc.extrapolated,
            "slope": sc.slope,
            "v0": v0,
            "relative_error": rel,
            "warnings": sc.warnings,
            "tilted_q_star": bmin.q_star,
            "tilted_v0": bmin.v0,
            "tilted_mass": mass,
            "tilted_mode_point": hist.mode_point,
        }),
    ))
}

fn huygens(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let tol = &cfg.tolerances;
    let p = preset("huygens_2d")?;
    let c = p.reaction_at_zero(p.equilibrium())?;
    let rho = riemannian_distance(&p, &GridSpec::square(2.5, 2, 0.02))?;
    rho.write(&dir.join("rho.csv.gz"))?;
    let times = [0.5, 1.0, 1.5];
    let fs = front_speed(&rho, c, &times, p.equilibrium())?;
    for &t in &times {
        crate::front::extract_front(&crate::front::r_constant_c(&rho, c, t)?)?
            .to_csv()
            .write(&dir.join(format!("front_t{t}.csv")))?;
    }
    let ratio = fs.speed / (2.0 * c).sqrt();
    Ok(outcome(
        7,
        ratio >= tol.front_speed[0] && ratio <= tol.front_speed[1],
        format!(
            "speed {:.4} = {ratio:.4} sqrt(2c) (want [{}, {}])",
            fs.speed, tol.front_speed[0], tol.front_speed[1]
        ),
        json!({ "fit": fs, "ratio": ratio }),
    ))
}

fn rtilde(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let tol = &cfg.tolerances;
    let p = preset("kpp_1d")?;
    let c = p.reaction_at_zero(p.equilibrium())?;
    // fine spacing: the seeds stop one node short of the support edge
    let rho = riemannian_distance(&p, &GridSpec::square(2.5, 1, 0.001))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x8888);
    let mut csv = Csv::new(&["t", "q", "R", "R_path", "R_tilde", "deviation", "allowed"]);
    let (mut positive, mut violations, mut order) = (0, 0, 0);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let t = 0.4 + 1.2 * rng.random::<f64>();
        let idx = 500 + rng.random_range(0..=4000usize);
        let q = rho.node(idx);
        let r = c * t - rho.values[idx].powi(2) / (2.0 * t);
        let fcfg = FrontPathConfig {
            seed: cfg.seed.wrapping_add(k),
            ..Default::default()
        };
        let rt = r_tilde(&p, &q, t, 64, &fcfg)?.value;
        let rg = r_general(&p, &q, t, 64, &fcfg)?.value;
        let dev = (rt - r.min(0.0)).abs();
        let allowed = tol.rtilde_relative * r.abs().max(tol.rtilde_floor);
        positive += (rt > 0.0) as usize;
        violations += (dev > allowed) as usize;
        order += (rg < rt - 1e-6 * rt.abs().max(1.0)) as usize;
        worst = worst.max(dev / allowed);
        csv.row(&[t, q[0], r, rg, rt, dev, allowed]);
    }
    csv.write(&dir.join("samples.csv"))?;
    Ok(outcome(
        8,
        positive == 0 && violations == 0,
        format!(
            "{positive} positive values, {violations}/50 outside tolerance (worst {worst:.2} of allowed), R_path < R~ at {order}"
        ),
        json!({ "positive": positive, "violations": violations, "order_violations": order, "worst_ratio": worst }),
    ))
}

/// Larger `eps` than the other Monte Carlo checks: below `0.1` the tilted
/// event dominating the sum is too rare for the sample size.
const LAPLACE_LADDER: [f64; 3] = [0.3, 0.2, 0.1];

fn laplace(cfg: &SuiteConfig, dir: &Path) -> Result<CriterionOutcome> {
    let tol = cfg.tolerances.laplace_relative;
    let p = preset("p1")?;
    let cost = parse_expression("10*(q1 - 0.8)^2")?;
    let r = laplace_check(
        &p,
        &cost,
        &LAPLACE_LADDER,
        50_000,
        1.0,
        cfg.seed,
        &LaplaceConfig::default(),
    )?;
    let mut csv = Csv::new(&["eps", "value", "ci_halfwidth", "flagged"]);
    for rung in &r.rungs {
        csv.row(&[rung.eps, rung.value, rung.ci_halfwidth, rung.flagged as u8 as f64]);
    }
    csv.write(&dir.join("rungs.csv"))?;
    r.path.write_csv(&dir.join("variational_path.csv"))?;
    Ok(outcome(
        9,
        r.relative_gap <= tol,
        format!(
            "extrapolated {:.4} vs variational {:.4} (rel {:.3}, tol {tol})",
            r.extrapolated, r.variational, r.relative_gap
        ),
        json!({
            "rungs": r.rungs,
            "extrapolated": r.extrapolated,
            "variational": r.variational,
            "relative_gap": r.relative_gap,
            "optimizer_converged": r.optimizer_converged,
        }),
    ))
}

fn run_criterion(id: u32, cfg: &SuiteConfig, out: &Path) -> Result<CriterionOutcome> {
    let dir = criterion_dir(out, id)?;
    let result = match id {
        1 => gradient_oracle(cfg, &dir),
        2 => functional_equivalence(cfg, &dir),
        3 => control_identity(cfg, &dir),
        4 => h_scaling(cfg, &dir),
        5 => convergence(cfg, &dir),
        6 => exit_asymptotics(cfg, &dir),
        7 => huygens(cfg, &dir),
        8 => rtilde(cfg, &dir),
        9 => laplace(cfg, &dir),
        _ => return Err(Error::Precondition(format!("unknown criterion {id}"))),
    };
    // a numerical failure fails the criterion but not the suite
    let o = result.unwrap_or_else(|e| outcome(id, false, format!("error: {e}"), json!({ "error": e.to_string() })));
    write_json(&dir.join("result.json"), &o)?;
    Ok(o)
}

/// Runs the selected criteria, writing artifacts under `out`.
pub fn run_suite(cfg: &SuiteConfig, out: &Path) -> Result<SuiteRun> {
    fs::create_dir_all(out)?;
    let mut outcomes = Vec::new();
    let mut seconds = Vec::new();
    for &id in &cfg.criteria {
        let start = Instant::now();
        outcomes.push(run_criterion(id, cfg, out)?);
        seconds.push(start.elapsed().as_secs_f64());
    }
    let report = SuiteReport {
        seed: cfg.seed,
        outcomes,
    };
    write_json(&out.join("suite.json"), &report)?;
    Ok(SuiteRun { report, seconds })
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.extension().is_some_and(|e| e == "csv" || e == "json" || e == "gz") {
            out.push(path.strip_prefix(root).expect("below root").to_path_buf());
        }
    }
    Ok(())
}

/// Relative paths of CSV/JSON artifacts that differ between two output
/// trees, including files present in only one of them.
pub fn compare_artifacts(a: &Path, b: &Path) -> Result<Vec<String>> {
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    collect_files(a, a, &mut fa)?;
    collect_files(b, b, &mut fb)?;
    fa.sort();
    fb.sort();
    let mut diff = Vec::new();
    for f in &fa {
        if !fb.contains(f) || fs::read(a.join(f))? != fs::read(b.join(f))? {
            diff.push(f.display().to_string());
        }
    }
    for f in &fb {
        if !fa.contains(f) {
            diff.push(f.display().to_string());
        }
    }
    Ok(diff)
}

/// Runs the suite into `out`, reruns it into `rerun_dir` and appends the
/// byte-identity check as criterion 10.
pub fn run_all(cfg: &SuiteConfig, out: &Path, rerun_dir: &Path) -> Result<SuiteRun> {
    let mut first = run_suite(cfg, out)?;
    let start = Instant::now();
    run_suite(cfg, rerun_dir)?;
    let diff = compare_artifacts(out, rerun_dir)?;
    let o = outcome(
        10,
        diff.is_empty(),
        if diff.is_empty() {
            "rerun artifacts byte-identical".into()
        } else {
            format!("{} artifacts differ", diff.len())
        },
        json!({ "differing": diff }),
    );
    write_json(&criterion_dir(out, 10)?.join("result.json"), &o)?;
    first.report.outcomes.push(o);
    first.seconds.push(start.elapsed().as_secs_f64());
    write_json(&out.join("suite.json"), &first.report)?;
    Ok(first)
}
