use strongdamp::front::*;
use strongdamp::{presets, ProblemDefinition, ProblemFile};

fn seeded_at(q: [f64; 2], alpha: &str, h: f64) -> ProblemDefinition {
    ProblemDefinition::from_file(ProblemFile {
        alpha: alpha.into(),
        g: Some(format!(
            "max(0, {} - (q1 - {})^2 - (q2 - {})^2)",
            h * h / 4.0,
            q[0],
            q[1]
        )),
        ..presets::huygens_2d()
    })
    .unwrap()
}

#[test]
fn graph_metric_triangle_inequality() {
    let h = 0.1;
    let spec = GridSpec::square(1.0, 2, h);
    let alpha = "1 + 0.5*sin(q1)*cos(q2)";
    let nodes = [[-0.8, 0.3], [0.5, -0.6], [0.2, 0.9], [-0.1, -0.1]];
    let fields: Vec<GridField> = nodes
        .iter()
        .map(|&n| riemannian_distance(&seeded_at(n, alpha, h), &spec).unwrap())
        .collect();
    for (i, fi) in fields.iter().enumerate() {
        for (j, fj) in fields.iter().enumerate() {
            for node in &nodes {
                let (a, b) = (fi.value_at(node).unwrap(), fj.value_at(node).unwrap());
                let dij = fi.value_at(&nodes[j]).unwrap();
                assert!(a <= dij + b + 1e-12, "{i} {j} {node:?}");
            }
        }
    }
}

#[test]
fn refinement_stays_within_stencil_bound() {
    let coarse = riemannian_distance(&seeded_at([0.0, 0.0], "1", 0.1), &GridSpec::square(1.0, 2, 0.1)).unwrap();
    let fine = riemannian_distance(&seeded_at([0.0, 0.0], "1", 0.05), &GridSpec::square(1.0, 2, 0.05)).unwrap();
    for idx in 0..coarse.len() {
        let q = coarse.node(idx);
        let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
        let f = fine.value_at(&q).unwrap();
        assert!((coarse.values[idx] - f).abs() <= 0.09 * r + 1e-12, "{q:?}");
    }
}

#[test]
fn euclidean_front_circle() {
    let h = 0.02;
    let n = 201;
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (-2.0 + h * i as f64, -2.0 + h * j as f64);
            values.push((x * x + y * y).sqrt());
        }
    }
    let rho = GridField {
        origin: vec![-2.0, -2.0],
        spacing: h,
        dims: vec![n, n],
        values,
        kind: GridKind::Rho,
    };
    let r = r_constant_c(&rho, 1.0, 1.0).unwrap();
    let front = extract_front(&r).unwrap();
    assert!(front.points.len() > 100);
    for q in &front.points {
        let rad = (q[0] * q[0] + q[1] * q[1]).sqrt();
        assert!((rad - 2f64.sqrt()).abs() <= 2.0 * h, "{rad}");
    }
}

#[test]
fn general_r_dominates_r_tilde() {
    let p = ProblemDefinition::from_file(ProblemFile {
        c: Some("1 + 0.5*cos(q1) - u".into()),
        ..presets::kpp_1d()
    })
    .unwrap();
    let cfg = FrontPathConfig {
        restarts: 3,
        ..Default::default()
    };
    for (q, t) in [(0.0, 0.5), (0.6, 1.0), (-1.4, 0.8), (2.0, 1.2)] {
        let r = r_general(&p, &[q], t, 48, &cfg).unwrap();
        let rt = r_tilde(&p, &[q], t, 48, &cfg).unwrap();
        assert!(rt.value <= 0.0);
        assert!(r.value >= rt.value - 1e-6, "q={q}: {} < {}", r.value, rt.value);
        if q.abs() < 0.1 {
            assert!(r.value >= 0.0);
            assert!(rt.value.abs() < 1e-6);
        }
    }
}

#[test]
fn feynman_kac_decays_where_r_is_negative() {
    let p = presets::load("kpp_1d").unwrap();
    let rho = riemannian_distance(&p, &GridSpec::square(2.5, 1, 0.001)).unwrap();
    let (q, t) = (1.8, 1.0);
    let r = r_constant_c(&rho, 1.0, t).unwrap().value_at(&[q]).unwrap();
    assert!(r <= -0.3, "{r}");
    let e = feynman_kac_bound(&p, &[q], &[0.0], t, 0.05, 2000, 31, 0.01).unwrap();
    if let Some(v) = e.eps_log {
        assert!(v <= -0.15, "{v}");
    }

    // inside the support the bound is of order one
    let inside = feynman_kac_bound(&p, &[0.0], &[0.0], 0.2, 0.05, 500, 32, 0.01).unwrap();
    assert!(inside.nonzero_samples > 0);
}
