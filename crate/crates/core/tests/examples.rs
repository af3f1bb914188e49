use std::f64::consts::PI;

use plpde_core::conegeo::{
    c1_estimate, rank_condition_check, rank_probe, rank_threshold, ProbeOptions, ProbeSpace,
};
use plpde_core::estimates::{
    measure_c2, measure_gradient_detail, measure_harnack, measure_level, Ball, EstimateReport, HarnackOutcome,
};
use plpde_core::hermfield::{ModelGeometry, ScalarField};
use plpde_core::solver::{dirichlet_solve, mms_generate, SolverOptions};
use plpde_core::symcalc::{Family, OperatorSpec};

#[test]
fn log_rho_rank_in_eigenvalue_space() {
    // log ρ₂ on ℝ³ is log σ₃ composed with the pair sums
    let op = OperatorSpec::new(Family::LogSigmaN, 3, 2).unwrap();
    let opts = ProbeOptions {
        space: ProbeSpace::Eigen,
        ..Default::default()
    };
    let cert = rank_probe(&op, 1.0, &opts).unwrap();
    assert_eq!(cert.estimated_rank, 2);
    assert!(cert.passes_condition);
    assert!(!cert.assumptions.is_empty());
}

#[test]
fn scalar_laplacian_case_passes() {
    let op = OperatorSpec::new(Family::Linear, 3, 3).unwrap();
    assert_eq!(op.ambient_dim(), 1);
    assert_eq!(rank_threshold(&op, ProbeSpace::Cone), 1.0);
    let res = rank_condition_check(&op, &ProbeOptions::default()).unwrap();
    assert_eq!(res.rank, 1);
    assert!(res.passes);
}

#[test]
fn probe_is_independent_of_subset_plan() {
    let op = OperatorSpec::new(Family::SigmaRoot { degree: 2 }, 4, 1).unwrap();
    let full = rank_probe(&op, 1.0, &ProbeOptions::default()).unwrap();
    let per_cardinality = rank_probe(
        &op,
        1.0,
        &ProbeOptions {
            ray_budget: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(full.estimated_rank, per_cardinality.estimated_rank);
    let reseeded = rank_probe(
        &op,
        1.0,
        &ProbeOptions {
            seed: 99,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(full.estimated_rank, reseeded.estimated_rank);
}

#[test]
fn c1_overstated_rank_is_flagged() {
    let op = OperatorSpec::new(Family::SigmaRoot { degree: 3 }, 3, 1).unwrap();
    let c1 = c1_estimate(&op, 1.0, 2, &ProbeOptions::default()).unwrap();
    assert!(c1.flagged);
    assert_eq!(c1.value, 0.0);
}

#[test]
fn log_cos_gradient_ratio_matches_closed_form() {
    let geo = ModelGeometry::interval(-1.2, 1.2, 1 << 16).unwrap();
    let u = geo.sample(|x| x[0].cos().ln());
    let ball = Ball::new(vec![0.0], 1.0);
    let m = measure_gradient_detail(&geo, &u, &ball).unwrap();
    let x = geo.coords(m.argmax)[0];
    assert!(x.abs() <= 0.5);
    assert!(x.abs() > 0.5 - geo.spacing());
    // |∂u|² = ¼ tan² x, sup over the ball is log cos 0 = 0
    let expected = 0.25 * x.tan().powi(2) / (1.0 - x.cos().ln());
    assert!((m.ratio - expected).abs() <= 1e-6 * expected, "{} vs {expected}", m.ratio);
}

#[test]
fn raw_suprema_are_monotone_under_ball_inclusion() {
    let geo = ModelGeometry::torus(2, 16).unwrap();
    let u = geo.sample(|x| 0.1 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[3]).sin() + 0.05 * (2.0 * PI * x[1]).sin());
    let osc = u.max() - u.min();
    let raw = |r: f64| {
        let ball = Ball::new(vec![0.3125, 0.625, 0.125, 0.8125], r);
        measure_c2(&geo, &u, &ball).unwrap() * (1.0 + osc) / (r * r)
    };
    let radii = [0.05, 0.1, 0.15, 0.2, 0.25];
    for w in radii.windows(2) {
        assert!(raw(w[0]) <= raw(w[1]));
    }
}

#[test]
fn harnack_ratio_decreases_under_shift() {
    let geo = ModelGeometry::torus(2, 16).unwrap();
    let u_star = geo.sample(|x| 0.05 * (2.0 * PI * x[0]).cos() + 0.03 * (2.0 * PI * x[3]).cos());
    let ball = Ball::new(vec![0.5; 4], 0.25);
    let base = -u_star.min() + 0.1;
    let mut previous = f64::INFINITY;
    for c in [base, base + 0.5, base + 1.0, base + 5.0] {
        let shifted = ScalarField::new(u_star.values.iter().map(|v| v + c).collect());
        let ratio = measure_harnack(&geo, &shifted, &ball).unwrap().ratio().unwrap();
        assert!(ratio.is_finite() && ratio < previous);
        previous = ratio;
    }
    let constant = ScalarField::constant(geo.npts(), 3.0);
    assert_eq!(measure_harnack(&geo, &constant, &ball).unwrap(), HarnackOutcome::Ratio(1.0));
}

#[test]
fn interval_mms_ratios_stabilise_under_refinement() {
    let op = OperatorSpec::new(Family::LogSigmaN, 1, 1).unwrap();
    let ball = Ball::new(vec![0.0], 0.5);
    let levels: Vec<_> = [32, 64, 128]
        .iter()
        .map(|&cells| {
            let geo = ModelGeometry::interval(-1.0, 1.0, cells).unwrap();
            let u_star = geo.sample(|x| 0.3 * (PI * x[0]).sin() + 0.2 * x[0] * x[0]);
            let spec = mms_generate(&geo, &op, &u_star, &geo.constant_field(2.0), None).unwrap();
            let state = dirichlet_solve(&spec, &SolverOptions::default()).unwrap();
            measure_level(&geo, &state.u, &ball).unwrap()
        })
        .collect();
    let c2: Vec<f64> = levels.iter().map(|l| l.c2_ratio).collect();
    let spread = c2.iter().copied().fold(f64::MIN, f64::max) / c2.iter().copied().fold(f64::MAX, f64::min);
    assert!(spread < 1.05, "{c2:?}");
    let report = EstimateReport::new("interval", ball, levels);
    assert!(report.stability.iter().all(|f| f.finite && f.stable));
    let csv = report.to_csv();
    assert!(csv.starts_with("level,ratio,value\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
}
