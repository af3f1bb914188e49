//! Acceptance suite: one pass/fail line per criterion.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use plpde_core::conegeo::{
    c1_estimate, operating_levels, rank_condition_check, rank_probe, ProbeOptions, ProbeSpace,
};
use plpde_core::estimates::{ellipticity_check, measure_level, Ball, EstimateReport};
use plpde_core::hermfield::eigen::hermitian_eigen;
use plpde_core::hermfield::{HermitianField, ModelGeometry, ScalarField};
use plpde_core::solver::{
    barrier_newton, barrier_residual, barrier_solve, dirichlet_solve, homotopy_solve, mms_generate,
    residual, riccati_oracle, BarrierOutcome, Mode, ProblemSpec, SolveState, SolverOptions, TraceBound,
};
use plpde_core::symcalc::{Family, IndexSetFamily, OperatorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn expect_solved(r: plpde_core::Result<SolveState>) -> SolveState {
    r.unwrap_or_else(|e| panic!("{e}"))
}

struct Solved {
    name: String,
    spec: ProblemSpec,
    state: SolveState,
    elapsed: Duration,
}

fn sigma_root(degree: usize, n: usize, k: usize) -> OperatorSpec {
    OperatorSpec::new(Family::SigmaRoot { degree }, n, k).unwrap()
}

fn torus_u_star(geo: &ModelGeometry) -> ScalarField {
    geo.sample(|x| 0.05 * (2.0 * PI * x[0]).cos() + 0.03 * (2.0 * PI * x[3]).cos())
}

fn torus_mms(name: &str, op: &OperatorSpec, p: usize) -> Solved {
    let geo = ModelGeometry::torus(2, p).unwrap();
    let u_star = torus_u_star(&geo);
    let start = Instant::now();
    let spec = mms_generate(&geo, op, &u_star, &geo.constant_field(2.0), None).unwrap();
    let opts = SolverOptions {
        coarse_points: (p > 8).then_some(8),
        ..Default::default()
    };
    let state = expect_solved(homotopy_solve(&spec, &opts));
    Solved {
        name: format!("{name} p={p}"),
        spec,
        state,
        elapsed: start.elapsed(),
    }
}

fn interval_u_star(x: f64) -> f64 {
    0.3 * (PI * x).sin() + 0.2 * x * x
}

fn interval_mms(cells: usize) -> Solved {
    let geo = ModelGeometry::interval(-1.0, 1.0, cells).unwrap();
    let op = OperatorSpec::new(Family::LogSigmaN, 1, 1).unwrap();
    let u_star = geo.sample(|x| interval_u_star(x[0]));
    // ∂∂̄ acts as ¼ d²/dx² in one real variable
    let hess = HermitianField {
        n: 1,
        data: (0..geo.npts())
            .map(|i| {
                let x = geo.coords(i)[0];
                Complex64::new(0.25 * (-0.3 * PI * PI * (PI * x).sin() + 0.4), 0.0)
            })
            .collect(),
    };
    let start = Instant::now();
    let spec = mms_generate(&geo, &op, &u_star, &geo.constant_field(2.0), Some(&hess)).unwrap();
    let state = expect_solved(dirichlet_solve(&spec, &SolverOptions::default()));
    Solved {
        name: format!("interval log-sigma cells={cells}"),
        spec,
        state,
        elapsed: start.elapsed(),
    }
}

fn constant_instance(op: &OperatorSpec, n: usize, p: usize, c: f64, psi: f64) -> Solved {
    let geo = ModelGeometry::torus(n, p).unwrap();
    let x = geo.constant_field(c);
    let spec = ProblemSpec::new(
        geo.clone(),
        op.clone(),
        x,
        ScalarField::constant(geo.npts(), psi),
        Mode::PeriodicWithConstant,
        None,
    )
    .unwrap();
    let start = Instant::now();
    let state = expect_solved(homotopy_solve(&spec, &SolverOptions::default()));
    Solved {
        name: format!("constant n={n} K={} c={c} psi={psi}", op.k()),
        spec,
        state,
        elapsed: start.elapsed(),
    }
}

fn variable_instance() -> Solved {
    let geo = ModelGeometry::torus(2, 16).unwrap();
    let npts = geo.npts();
    let mut data = vec![Complex64::new(0.0, 0.0); npts * 4];
    for i in 0..npts {
        let x = geo.coords(i);
        let d1 = 2.0 + 0.3 * (2.0 * PI * x[0]).cos();
        let d2 = 1.5 + 0.2 * (2.0 * PI * x[2]).sin();
        let off = Complex64::new(0.1 * (2.0 * PI * x[1]).cos(), 0.05);
        data[4 * i] = Complex64::new(d1, 0.0);
        data[4 * i + 1] = off;
        data[4 * i + 2] = off.conj();
        data[4 * i + 3] = Complex64::new(d2, 0.0);
    }
    let psi = geo.sample(|x| 1.0 + 0.2 * (2.0 * PI * x[2]).sin());
    let spec = ProblemSpec::new(
        geo,
        sigma_root(2, 2, 1),
        HermitianField { n: 2, data },
        psi,
        Mode::PeriodicWithConstant,
        None,
    )
    .unwrap();
    let start = Instant::now();
    let state = expect_solved(homotopy_solve(&spec, &SolverOptions::default()));
    Solved {
        name: "variable X n=2 K=1 p=16".into(),
        spec,
        state,
        elapsed: start.elapsed(),
    }
}

fn n3_mms(p: usize) -> Solved {
    let geo = ModelGeometry::torus(3, p).unwrap();
    let op = sigma_root(2, 3, 2);
    let u_star = geo.sample(|x| {
        0.04 * (2.0 * PI * x[0]).cos() + 0.03 * (2.0 * PI * x[3]).sin() + 0.02 * (2.0 * PI * (x[4] + x[1])).cos()
    });
    let start = Instant::now();
    let spec = mms_generate(&geo, &op, &u_star, &geo.constant_field(1.0), None).unwrap();
    let state = expect_solved(homotopy_solve(&spec, &SolverOptions::default()));
    Solved {
        name: format!("torus n=3 K=2 sigma2 p={p}"),
        spec,
        state,
        elapsed: start.elapsed(),
    }
}

struct Corpus {
    torus_k1: Vec<Solved>,
    torus_k2: Vec<Solved>,
    interval: Vec<Solved>,
    constant: Vec<Solved>,
    variable: Solved,
    n3: Solved,
}

impl Corpus {
    fn build() -> Self {
        let k1 = sigma_root(2, 2, 1);
        let k2 = OperatorSpec::new(Family::Linear, 2, 2).unwrap();
        Self {
            torus_k1: [8, 16, 32].iter().map(|&p| torus_mms("torus sigma2 K=1", &k1, p)).collect(),
            torus_k2: [8, 16, 32].iter().map(|&p| torus_mms("torus trace K=2", &k2, p)).collect(),
            interval: [64, 128, 256].iter().map(|&c| interval_mms(c)).collect(),
            constant: vec![
                constant_instance(&k1, 2, 8, 2.0, 0.5),
                constant_instance(&sigma_root(2, 3, 2), 3, 4, 1.5, 2.0),
            ],
            variable: variable_instance(),
            n3: n3_mms(4),
        }
    }

    fn all(&self) -> Vec<&Solved> {
        self.torus_k1
            .iter()
            .chain(&self.torus_k2)
            .chain(&self.interval)
            .chain(&self.constant)
            .chain([&self.variable, &self.n3])
            .collect()
    }

    fn periodic(&self) -> Vec<&Solved> {
        self.all()
            .into_iter()
            .filter(|s| s.spec.mode == Mode::PeriodicWithConstant)
            .collect()
    }
}

type Outcome = (bool, String);

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=8);
        let k = rng.random_range(1..=n);
        let fam = IndexSetFamily::new(n, k).unwrap();
        let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s1: f64 = lambda.iter().sum();
        let big = fam.lambda_map(&lambda).unwrap().0;
        let prime = fam.lambda_prime(&lambda).unwrap().0;
        for (a, b) in big.iter().zip(&prime) {
            worst = worst.max((a + b - s1).abs());
        }
        let expected = (fam.len() * k) as f64 / n as f64 * s1;
        worst = worst.max((big.iter().sum::<f64>() - expected).abs());

        // K = n-1: Λ(λ(𝔤)) equals the spectrum of (tr 𝔤)ω - 𝔤
        let mut g = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            g[i * n + i] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
            for j in i + 1..n {
                let z = Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                g[i * n + j] = z;
                g[j * n + i] = z.conj();
            }
        }
        let trace: f64 = (0..n).map(|i| g[i * n + i].re).sum();
        let mut comp: Vec<Complex64> = g.iter().map(|z| -z).collect();
        for i in 0..n {
            comp[i * n + i] += trace;
        }
        let mut vals = vec![0.0; n];
        let mut vecs = vec![Complex64::new(0.0, 0.0); n * n];
        hermitian_eigen(n, &g, &mut vals, &mut vecs);
        let mut lhs = IndexSetFamily::new(n, n - 1).unwrap().lambda_map(&vals).unwrap().0;
        hermitian_eigen(n, &comp, &mut vals, &mut vecs);
        let mut rhs = vals.clone();
        lhs.sort_by(f64::total_cmp);
        rhs.sort_by(f64::total_cmp);
        worst = worst.max(max_diff(&lhs, &rhs));
    }
    let elapsed = start.elapsed();
    (
        worst <= 1e-12 && elapsed < Duration::from_secs(5),
        format!("combinatorial identities, max deviation {worst:.2e} over 10^4 samples in {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let opts = ProbeOptions::default();
    let mut mismatches = Vec::new();
    for m in 3..=5 {
        for k in 1..=m {
            let rank = rank_probe(&sigma_root(k, m, 1), 1.0, &opts).unwrap().estimated_rank;
            if rank != m - k + 1 {
                mismatches.push(format!("sigma_{k}^(1/{k}) dim {m}: {rank}"));
            }
        }
        let op = OperatorSpec::new(Family::Linear, m, 1).unwrap();
        let rank = rank_probe(&op, 1.0, &opts).unwrap().estimated_rank;
        if rank != m {
            mismatches.push(format!("sigma_1 dim {m}: {rank}"));
        }
    }
    let mut table = Vec::new();
    for k in 1..=3 {
        let res = rank_condition_check(&sigma_root(k, 3, 2), &opts).unwrap();
        table.push((k, res.rank, res.passes));
        if res.passes != (k <= 2) || res.threshold != 2.0 {
            mismatches.push(format!("(n=3,K=2) k={k}: rank {} passes {}", res.rank, res.passes));
        }
    }
    let elapsed = start.elapsed();
    (
        mismatches.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "rank reproduction, (n=3,K=2) table (k, rank, pass) {table:?}, mismatches {mismatches:?}, {elapsed:.2?}"
        ),
    )
}

fn c1_for(op: &OperatorSpec) -> (f64, usize) {
    let opts = ProbeOptions::default();
    let cond = rank_condition_check(op, &opts).unwrap();
    let r = if cond.passes {
        cond.rank
    } else {
        (cond.threshold.ceil() as usize).min(op.ambient_dim())
    };
    let c1 = operating_levels(op, ProbeSpace::Cone)
        .unwrap()
        .iter()
        .map(|&sigma| c1_estimate(op, sigma, r, &opts).unwrap().value)
        .fold(f64::INFINITY, f64::min);
    (c1, r)
}

fn criterion_3(corpus: &Corpus) -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for s in corpus.all() {
        let (c1, r) = c1_for(&s.spec.operator);
        let check = ellipticity_check(&s.spec.geometry, &s.spec.operator, &s.spec.x, &s.state.u, c1).unwrap();
        ok &= check.passes;
        lines.push(format!("{}: r={r} c1={c1:.4} slack={:.3e}", s.name, check.min_slack));
    }
    let nontrivial = c1_for(&corpus.n3.spec.operator).0 > 0.0;
    (ok && nontrivial, format!("c1 ellipticity on every solved instance; {}", lines.join("; ")))
}

fn criterion_4(corpus: &Corpus) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut elapsed = Duration::ZERO;
    for s in [&corpus.torus_k1[2], &corpus.torus_k2[2]] {
        let u_star = torus_u_star(&s.spec.geometry);
        let sup = u_star.max();
        let shifted: Vec<f64> = u_star.values.iter().map(|v| v - sup).collect();
        let err = max_diff(&s.state.u.values, &shifted);
        ok &= err <= 1e-8;
        elapsed += s.elapsed;
        parts.push(format!("{} error {err:.2e}", s.name));
    }
    let errors: Vec<f64> = corpus.interval[..2]
        .iter()
        .map(|s| {
            elapsed += s.elapsed;
            let exact: Vec<f64> = (0..s.spec.geometry.npts())
                .map(|i| interval_u_star(s.spec.geometry.coords(i)[0]))
                .collect();
            max_diff(&s.state.u.values, &exact)
        })
        .collect();
    let ratio = errors[0] / errors[1];
    ok &= (3.2..=4.8).contains(&ratio);
    ok &= elapsed < Duration::from_secs(120);
    parts.push(format!("interval errors {:.3e} -> {:.3e}, ratio {ratio:.4}", errors[0], errors[1]));
    (ok, format!("MMS convergence, {}, solve time {elapsed:.2?}", parts.join(", ")))
}

fn criterion_5(corpus: &Corpus) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    // σ₂^{1/2}(c, c) = c and σ₂^{1/2}(2c, 2c, 2c) = 2√3 c
    let closed = [(2.0f64 / 0.5).ln(), (2.0 * 3f64.sqrt() * 1.5 / 2.0).ln()];
    for (s, b) in corpus.constant.iter().zip(closed) {
        let db = (s.state.b - b).abs();
        let u = max_abs(&s.state.u.values);
        ok &= db <= 1e-10 && u <= 1e-10;
        parts.push(format!("{}: |b-b*| {db:.1e} |u| {u:.1e}", s.name));
    }
    let mut start_residual: f64 = 0.0;
    let mut bounds = true;
    for s in corpus.periodic() {
        let zero = ScalarField::constant(s.spec.geometry.npts(), 0.0);
        let r = residual(&s.spec, &SolveState::new(zero, 0.0, 1.0)).unwrap();
        start_residual = start_residual.max(r.max_abs());
        bounds &= s.state.bounds_respected() && !s.state.bound_series.is_empty();
    }
    ok &= start_residual <= 1e-12 && bounds;
    parts.push(format!("t=1 residual {start_residual:.1e}, bound series respected: {bounds}"));
    (ok, format!("homotopy closed form, {}", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let geo = ModelGeometry::interval(-FRAC_PI_2, FRAC_PI_2, 16384).unwrap();
    let half = barrier_solve(&geo, TraceBound::model(0.5)).unwrap();
    let newton = barrier_newton(&geo, TraceBound::model(0.5), 1e-9, 50).unwrap();
    let agreement = half
        .solution()
        .map_or(f64::INFINITY, |h| max_diff(&h.values, &newton.values));
    let unit = barrier_solve(&geo, TraceBound::model(1.0)).unwrap();
    let nonexistence = matches!(unit, BarrierOutcome::Nonexistence { .. });
    let residuals: Vec<f64> = [512, 1024]
        .iter()
        .map(|&cells| {
            let g = ModelGeometry::interval(-1.2, 1.2, cells).unwrap();
            let pts: Vec<f64> = (0..g.npts()).map(|i| g.coords(i)[0]).collect();
            let h = riccati_oracle(&pts).unwrap();
            max_abs(&barrier_residual(&g, &h, TraceBound::model(1.0)).unwrap())
        })
        .collect();
    let ratio = residuals[0] / residuals[1];
    (
        agreement <= 1e-8 && nonexistence && (3.2..=4.8).contains(&ratio),
        format!(
            "barrier dichotomy, b=0.5 two-method agreement {agreement:.2e}, b=1 nonexistence {nonexistence}, log-cos residual ratio {ratio:.4}"
        ),
    )
}

fn criterion_7(corpus: &Corpus) -> Outcome {
    let torus_ball = Ball::new(vec![0.5; 4], 0.25);
    let interval_ball = Ball::new(vec![0.0], 0.5);
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, solves, ball) in [
        ("torus sigma2 K=1", &corpus.torus_k1, &torus_ball),
        ("torus trace K=2", &corpus.torus_k2, &torus_ball),
        ("interval log-sigma", &corpus.interval, &interval_ball),
    ] {
        let levels = solves
            .iter()
            .map(|s| measure_level(&s.spec.geometry, &s.state.u, ball).unwrap())
            .collect();
        let report = EstimateReport::new(name, ball.clone(), levels);
        let mut spreads = Vec::new();
        for ratio in ["c2_ratio", "grad_ratio", "harnack_ratio"] {
            let flag = report.flag(ratio).unwrap();
            ok &= flag.finite && flag.stable;
            spreads.push(format!("{ratio} {:.4}", flag.spread));
        }
        parts.push(format!("{name}: {}", spreads.join(" ")));
    }
    let constant = &corpus.constant[0];
    let lifted = ScalarField::new(constant.state.u.values.iter().map(|v| v + 1.0).collect());
    let harnack = measure_level(&constant.spec.geometry, &lifted, &Ball::new(vec![0.5; 4], 0.25))
        .unwrap()
        .harnack_ratio;
    ok &= harnack == Some(1.0);
    parts.push(format!("constant harnack {harnack:?}"));
    (ok, format!("estimate stability (max/min over three finest grids), {}", parts.join(", ")))
}

fn random_cone_point(op: &OperatorSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = op.ambient_dim();
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let mut x: Vec<f64> = (0..m).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    while op.base_margin(&x) <= 1e-3 * scale {
        x.iter_mut().for_each(|v| *v += 0.25 * scale);
    }
    x
}

fn sampling_suite(op: &OperatorSpec, samples: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = op.ambient_dim();
    let (mut monotone_fail, mut concave_fail) = (0, 0);
    for _ in 0..samples {
        let x = random_cone_point(op, &mut rng);
        let y = random_cone_point(op, &mut rng);
        let fx = op.base_value(&x).unwrap();
        let fy = op.base_value(&y).unwrap();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let fm = op.base_value(&mid).unwrap();
        let tol = 1e-12 * (1.0 + fx.abs() + fy.abs());
        if fm < 0.5 * (fx + fy) - tol {
            concave_fail += 1;
        }
        let d: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
        if op.base_hessian_action(&x, &d).unwrap() > 1e-9 * (1.0 + fx.abs()) * scale {
            concave_fail += 1;
        }
        let grad = op.base_gradient(&x).unwrap();
        let gmax = max_abs(&grad);
        if grad.iter().any(|g| *g < -1e-12 * gmax) {
            monotone_fail += 1;
        }
        let bump: Vec<f64> = x.iter().map(|v| v + rng.random_range(0.0..0.1)).collect();
        if op.base_value(&bump).unwrap() < fx - tol {
            monotone_fail += 1;
        }
    }
    (monotone_fail, concave_fail)
}

fn criterion_8(corpus: &Corpus) -> Outcome {
    let mut ok = true;
    let mut min_margin = f64::INFINITY;
    let mut records = 0;
    for s in corpus.all() {
        ok &= s.state.residuals_monotone();
        min_margin = min_margin.min(s.state.min_recorded_margin());
        records += s.state.residual_history.len();
    }
    ok &= min_margin > 0.0;
    let mut families = Vec::new();
    for m in [3, 5] {
        for k in 1..=m {
            families.push(sigma_root(k, m, 1));
        }
        families.push(OperatorSpec::new(Family::LogSigmaN, m, 1).unwrap());
        families.push(OperatorSpec::new(Family::Linear, m, 1).unwrap());
    }
    let mut failures = 0;
    for (i, op) in families.iter().enumerate() {
        let (mono, conc) = sampling_suite(op, 10_000, 100 + i as u64);
        failures += mono + conc;
    }
    ok &= failures == 0;
    (
        ok,
        format!(
            "safety invariants, {records} accepted iterates with min margin {min_margin:.3e}, {} families x 10^4 samples with {failures} failures",
            families.len()
        ),
    )
}

fn run(id: usize, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let (ok, msg) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let why = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {why}"))
    });
    println!(
        "{} criterion {id}: {msg} [{:.2?}]",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed()
    );
    ok
}

fn main() {
    let mut ok = run(1, criterion_1);
    ok &= run(2, criterion_2);
    let build = Instant::now();
    let corpus = Corpus::build();
    println!("solved corpus of {} instances in {:.2?}", corpus.all().len(), build.elapsed());
    for s in corpus.all() {
        println!(
            "  {}: {} Newton iterations, residual {:.2e}, {:.2?}",
            s.name, s.state.newton_iterations, s.state.final_residual, s.elapsed
        );
    }
    ok &= run(3, || criterion_3(&corpus));
    ok &= run(4, || criterion_4(&corpus));
    ok &= run(5, || criterion_5(&corpus));
    ok &= run(6, criterion_6);
    ok &= run(7, || criterion_7(&corpus));
    ok &= run(8, || criterion_8(&corpus));
    if !ok {
        std::process::exit(1);
    }
}
