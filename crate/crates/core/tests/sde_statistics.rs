use rayon::prelude::*;
use strongdamp::noise::NoisePath;
use strongdamp::sde::*;
use strongdamp::stats::variance;
use strongdamp::{presets, ProblemDefinition, ProblemFile};

fn free_particle(alpha: &str) -> ProblemDefinition {
    ProblemDefinition::from_file(ProblemFile {
        b: vec!["0".into()],
        alpha: alpha.into(),
        potential: None,
        domain: None,
        ..presets::p1()
    })
    .unwrap()
}

fn terminal_values<F>(m: usize, f: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    (0..m as u64).into_par_iter().map(f).collect()
}

#[test]
fn inertial_variance_matches_first_order_limit() {
    let p = free_particle("1");
    let eps = 0.05;
    let h = eps * eps / 4.0;
    let sp = SimParams::new(eps, 1.0, h, Scheme::Exponential);
    let steps = sp.steps().unwrap();
    let q1 = terminal_values(4000, |k| {
        let noise = NoisePath::generate(11, k, steps, 1, h).unwrap();
        simulate_inertial(&p, &sp, &[0.0], &[0.0], &noise, None)
            .unwrap()
            .final_q()[0]
    });
    let v = variance(&q1);
    assert!((v - 0.05).abs() <= 0.1 * 0.05, "{v}");
}

#[test]
fn first_order_ou_variance() {
    let p = presets::load("p1").unwrap();
    let eps = 0.04;
    let h = 1e-3;
    let sp = SimParams::new(eps, 1.0, h, Scheme::Exponential);
    let steps = sp.steps().unwrap();
    let g1 = terminal_values(4000, |k| {
        let noise = NoisePath::generate(12, k, steps, 1, h).unwrap();
        simulate_first_order(&p, &sp, &[0.0], &noise, None).unwrap().final_q()[0]
    });
    let exact = eps * (1.0 - (-2.0f64).exp()) / 2.0;
    let v = variance(&g1);
    assert!((v - exact).abs() <= 0.1 * exact, "{v} vs {exact}");
}

#[test]
fn stochastic_convolution_isometry() {
    let alpha = 2.0;
    let p = free_particle("2");
    let (eps, t_end) = (0.2, 1.0);
    let h = eps * eps / 100.0;
    let sp = SimParams::new(eps, t_end, h, Scheme::Exponential);
    let steps = sp.steps().unwrap();
    let h2 = terminal_values(2000, |k| {
        let noise = NoisePath::generate(13, k, steps, 1, h).unwrap();
        let tr = simulate_inertial(&p, &sp, &[0.0], &[0.0], &noise, None).unwrap();
        let tr = compute_h(&tr, &p, &noise, None).unwrap();
        tr.h_at(tr.len() - 1).unwrap()[0].powi(2)
    });
    let mean = h2.iter().sum::<f64>() / h2.len() as f64;
    let exact = eps * (1.0 - (-2.0 * alpha * t_end / (eps * eps)).exp()) * eps * eps / (2.0 * alpha);
    assert!((mean - exact).abs() <= 0.15 * exact, "{mean} vs {exact}");
}

#[test]
fn euler_and_exponential_agree_in_law() {
    let p = presets::load("p2").unwrap();
    let eps = 0.2;
    let fine = eps * eps / 200.0;
    let coarse = eps * eps / 4.0;
    let se = SimParams::new(eps, 1.0, fine, Scheme::Euler);
    let sx = SimParams::new(eps, 1.0, coarse, Scheme::Exponential);
    let (ne, nx) = (se.steps().unwrap(), sx.steps().unwrap());
    let a = terminal_values(2000, |k| {
        let noise = NoisePath::generate(14, k, ne, 1, fine).unwrap();
        simulate_inertial(&p, &se, &[0.5], &[0.0], &noise, None)
            .unwrap()
            .final_q()[0]
    });
    let b = terminal_values(2000, |k| {
        let noise = NoisePath::generate(15, k, nx, 1, coarse).unwrap();
        simulate_inertial(&p, &sx, &[0.5], &[0.0], &noise, None)
            .unwrap()
            .final_q()[0]
    });
    let (ma, mb) = (a.iter().sum::<f64>() / 2000.0, b.iter().sum::<f64>() / 2000.0);
    let (va, vb) = (variance(&a), variance(&b));
    let se_mean = ((va + vb) / 2000.0).sqrt();
    assert!((ma - mb).abs() <= 4.0 * se_mean, "{ma} {mb}");
    assert!((va / vb - 1.0).abs() <= 0.15, "{va} {vb}");
}
