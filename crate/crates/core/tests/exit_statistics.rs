use strongdamp::exit::*;
use strongdamp::noise::NoisePath;
use strongdamp::quasipotential::{quasipotential_boundary, MamConfig};
use strongdamp::sde::{simulate_inertial, Scheme, SimParams};
use strongdamp::{presets, ProblemDefinition, ProblemFile};

#[test]
fn rescaled_exit_time_is_scaled_by_eps() {
    let p = ProblemDefinition::from_file(ProblemFile {
        b: vec!["q1".into()],
        potential: None,
        ..presets::p1()
    })
    .unwrap();
    let eps = 0.3;
    let h = 0.025;
    let sp = SimParams::new(eps, 5.0, h, Scheme::Exponential);
    let steps = sp.steps().unwrap();
    for k in 0..20 {
        let noise = NoisePath::generate(5, k, steps, 1, h).unwrap();
        let tr = simulate_inertial(&p, &sp, &[0.5], &[0.0], &noise, None).unwrap();
        let tau = first_exit_time(&tr, &p).unwrap().expect("outward drift exits");
        let orig = first_exit_time_original(&tr, &p).unwrap().unwrap();
        assert!((orig - tau / eps).abs() <= 1e-12 * orig, "{tau} {orig}");
    }
}

#[test]
fn symmetric_preset_exits_evenly() {
    let p = presets::load("p1").unwrap();
    let stats = run_rung(&p, 0.25, 400, 21, 0, &ExitConfig::default()).unwrap();
    assert_eq!(stats.timeouts, 0);
    let n = stats.exit_points.len() as f64;
    let right = stats.exit_points.iter().filter(|q| q[0] > 0.0).count() as f64 / n;
    assert!((right - 0.5).abs() <= 2.0 * (0.25 / n).sqrt(), "{right}");
    let hist = exit_location_histogram(&stats, 2, p.equilibrium()).unwrap();
    assert_eq!(hist.counts.iter().sum::<usize>(), stats.exit_points.len());
}

#[test]
fn tilted_preset_prefers_low_side() {
    let p = presets::load("tilted").unwrap();
    let b = quasipotential_boundary(&p, 2, &MamConfig::default()).unwrap();
    let stats = run_rung(&p, 0.12, 200, 22, 0, &ExitConfig::default()).unwrap();
    let hist = exit_location_histogram(&stats, 20, p.equilibrium()).unwrap();
    assert!((hist.mode_point[0] - b.q_star[0]).abs() <= 0.1, "{:?}", hist.mode_point);
    assert!(fraction_near(&stats, &b.q_star, 0.1) >= 0.7);
}

#[test]
fn doubled_noise_quarters_the_barrier() {
    let p = ProblemDefinition::from_file(ProblemFile {
        sigma: vec![vec!["2".into()]],
        potential: None,
        ..presets::p1()
    })
    .unwrap();
    let v0 = quasipotential_boundary(&p, 2, &MamConfig::default()).unwrap().v0;
    assert!((v0 - 0.25).abs() <= 0.02 * 0.25, "{v0}");
    let sc = exit_scaling(&p, &[0.0625, 0.045], 200, 23, &ExitConfig::default(), Some(v0)).unwrap();
    assert_eq!(sc.fitted_rungs, 2);
    assert!((sc.extrapolated - v0).abs() <= 0.2 * v0, "{sc:?}");
}
