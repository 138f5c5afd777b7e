//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! fails at the end if any criterion failed.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI, SQRT_2};
use std::time::{Duration, Instant};

use oscdamp::check::run_checks;
use oscdamp::config::RunConfig;
use oscdamp::control::{control_exact, feedback_rate};
use oscdamp::dynamics::{
    compare_optimal, converge_in_n, lipschitz_probe, optimal_time_1osc, replay_schedule,
    semigroup_check, transport_residual, CompareConfig, SearchOptions, TestFunction,
    TransportGrid,
};
use oscdamp::gauge::{duality_residual, DualityOptions};
use oscdamp::report::{Report, Status};
use oscdamp::support::omega_support_grad;
use oscdamp::{
    omega_support, Backend, GaugeSolver, OscillatorSystem, PhaseState, Quadrature,
    QuadratureConfig, SimConfig, Simulator, SolverOptions, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    summary: String,
}

fn outcome(passed: bool, summary: String) -> Outcome {
    Outcome { passed, summary }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn state(v: &[f64]) -> PhaseState {
    PhaseState::new(v.to_vec()).unwrap()
}

fn pair() -> OscillatorSystem {
    OscillatorSystem::new(vec![1.0, SQRT_2]).unwrap()
}

/// Random N = 2 state with `rho = 10`.
fn pair_start(solver: &GaugeSolver, seed: u64) -> PhaseState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rho = solver.solve(&state(&x)).unwrap().rho;
    state(&x.iter().map(|v| v * 10.0 / rho).collect::<Vec<_>>())
}

fn c1_support_values() -> Outcome {
    let q1 = Quadrature::new(&QuadratureConfig::default().with_points(4096), 1).unwrap();
    let q2 = Quadrature::new(&QuadratureConfig::default().with_points(512), 2).unwrap();
    let e1 = (q1.eval(&[1.0]) - FRAC_2_PI).abs();
    let e2 = (q2.eval(&[1.0, 1.0]) - 8.0 / (PI * PI)).abs();
    // The full tensor grid (no closed-form last axis) must meet the same bounds.
    let full = QuadratureConfig {
        analytic_last_axis: false,
        ..Default::default()
    };
    let f1 = Quadrature::new(&full.clone().with_points(4096), 1).unwrap();
    let f2 = Quadrature::new(&full.with_points(512), 2).unwrap();
    let g1 = (f1.eval(&[1.0]) - FRAC_2_PI).abs();
    let g2 = (f2.eval(&[1.0, 1.0]) - 8.0 / (PI * PI)).abs();
    outcome(
        e1 <= 1e-6 && e2 <= 1e-4 && g1 <= 1e-6 && g2 <= 1e-4,
        format!("|h(1)-2/pi| = {e1:.1e} (full grid {g1:.1e}), |h(1,1)-8/pi^2| = {e2:.1e} (full grid {g2:.1e})"),
    )
}

fn c2_backend_cross_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let n = 1 + k % 3;
        let grid = Quadrature::new(&QuadratureConfig::default(), n).unwrap();
        let bessel =
            Quadrature::new(&QuadratureConfig::default().with_backend(Backend::Bessel), n).unwrap();
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        worst = worst.max(rel(grid.eval(&z), bessel.eval(&z)));
    }
    outcome(
        worst <= 1e-5,
        format!("max relative torus-grid/bessel gap over 20 z (N = 1..3): {worst:.2e}"),
    )
}

fn c3_homogeneity_euler_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let systems = [
        OscillatorSystem::new(vec![1.0]).unwrap(),
        pair(),
        OscillatorSystem::new(vec![1.0, 2.0_f64.sqrt(), 3.0_f64.sqrt()]).unwrap(),
    ];
    let (mut hom, mut euler_z, mut euler_p, mut fd): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..50 {
        let sys = &systems[k % 3];
        let n = sys.len();
        let quad = Quadrature::new(&QuadratureConfig::default(), n).unwrap();
        let p: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let h = omega_support(sys, &p, &quad);
        for lam in [0.5, 2.0, 10.0] {
            let q: Vec<f64> = p.iter().map(|v| v * lam).collect();
            hom = hom.max(rel(omega_support(sys, &q, &quad), lam * h));
        }
        let mut gp = vec![0.0; 2 * n];
        omega_support_grad(sys, &p, &quad, &mut gp).unwrap();
        let dot_p: f64 = p.iter().zip(&gp).map(|(a, b)| a * b).sum();
        euler_p = euler_p.max(rel(dot_p, h));

        let mut z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let mut g = vec![0.0; n];
        let v = quad.eval_grad(&z, &mut g);
        let dot_z: f64 = z.iter().zip(&g).map(|(a, b)| a * b).sum();
        euler_z = euler_z.max(rel(dot_z, v));
        let mut diff = vec![0.0; n];
        for i in 0..n {
            let (z0, step) = (z[i], 1e-6 * z[i]);
            z[i] = z0 + step;
            let up = quad.eval(&z);
            z[i] = z0 - step;
            let dn = quad.eval(&z);
            z[i] = z0;
            diff[i] = (up - dn) / (2.0 * step) - g[i];
        }
        fd = fd.max(norm(&diff) / norm(&g));
    }
    outcome(
        hom <= 1e-8 && euler_z <= 1e-6 && euler_p <= 1e-6 && fd <= 1e-4,
        format!(
            "homogeneity {hom:.1e}, Euler in z {euler_z:.1e}, Euler in p {euler_p:.1e}, gradient vs FD {fd:.1e} (50 points)"
        ),
    )
}

fn c4_gauge_closed_form() -> Outcome {
    let (mut worst_rho, mut worst_grad): (f64, f64) = (0.0, 0.0);
    for w in [0.5, 1.0, 2.0] {
        let sys = OscillatorSystem::new(vec![w]).unwrap();
        let quad = Quadrature::new(&QuadratureConfig::default(), 1).unwrap();
        let solver = GaugeSolver::new(&sys, &quad, SolverOptions::default());
        for i in 0..10 {
            for j in 0..10 {
                let x = -3.0 + 6.0 * i as f64 / 9.0;
                let y = -3.0 + 6.0 * j as f64 / 9.0;
                let r = (w * w * x * x + y * y).sqrt();
                let sol = solver.solve(&state(&[x, y])).unwrap();
                worst_rho = worst_rho.max(rel(sol.rho, FRAC_PI_2 * r));
                let exact = [FRAC_PI_2 * w * w * x / r, FRAC_PI_2 * y / r];
                let p = sol.p.as_slice();
                let d = [p[0] - exact[0], p[1] - exact[1]];
                worst_grad = worst_grad.max(norm(&d) / norm(&exact));
            }
        }
    }
    outcome(
        worst_rho <= 1e-6 && worst_grad <= 1e-5,
        format!("rho rel. error {worst_rho:.1e}, grad rho rel. error {worst_grad:.1e} (300 points)"),
    )
}

fn c5_duality() -> Outcome {
    let opts = DualityOptions::default();
    let s1 = OscillatorSystem::new(vec![1.0]).unwrap();
    let q1 = Quadrature::new(&QuadratureConfig::default(), 1).unwrap();
    let solver1 = GaugeSolver::new(&s1, &q1, SolverOptions::default());
    let r1 = duality_residual(&solver1, &state(&[1.0, 1.0]), &opts).unwrap();
    let r1b = duality_residual(&solver1, &state(&[2.0, 2.0]), &opts).unwrap();

    let s2 = pair();
    let q2 = Quadrature::new(&QuadratureConfig::default(), 2).unwrap();
    let solver2 = GaugeSolver::new(&s2, &q2, SolverOptions::default());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 8 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = solver2.solve(&state(&x)).unwrap().p;
        let z = s2.amplitudes(p.as_slice());
        if z.iter().cloned().fold(f64::INFINITY, f64::min) < 0.1 * norm(&z) {
            continue;
        }
        worst = worst.max(duality_residual(&solver2, &state(&x), &opts).unwrap());
        count += 1;
    }
    outcome(
        r1 <= 1e-3 && r1b <= 1e-3 && worst <= 5e-3,
        format!("N=1 residual {r1:.1e} (at 2x: {r1b:.1e}), N=2 max residual {worst:.1e} over 8 points"),
    )
}

/// `x` at the sign changes of `y`, interpolated, after the initial state.
fn turning_points(traj: &Trajectory) -> Vec<f64> {
    let mut out = vec![traj.states[0][0]];
    for w in traj.states.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a[1] != 0.0 && a[1].signum() != b[1].signum() {
            let s = a[1] / (a[1] - b[1]);
            out.push(a[0] + s * (b[0] - a[0]));
        }
    }
    out
}

fn c6_single_oscillator_reduction(trajs: &mut Vec<Trajectory>) -> Outcome {
    let sys = OscillatorSystem::new(vec![1.0]).unwrap();
    let quad = Quadrature::new(&QuadratureConfig::default(), 1).unwrap();
    let solver = GaugeSolver::new(&sys, &quad, SolverOptions::default());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut sign_ok = true;
    for _ in 0..200 {
        let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let c = control_exact(&solver, &state(&x)).unwrap();
        sign_ok &= !c.multivalued && c.u == -x[1].signum();
    }
    let mut cfg = SimConfig::default();
    cfg.smoothing.n = 1e3;
    cfg.horizon = 2.0 * PI + 1.0;
    let traj = Simulator::new(&sys, &cfg).unwrap().run(&state(&[5.0, 0.0])).unwrap();
    let end = traj.final_state().to_vec();
    let ends_ok = (end[0] - 1.0).abs() <= 0.1 && end[1].abs() <= 0.05;
    let tp = turning_points(&traj);
    // Amplitude about the origin drops by 2/w^2 per half period.
    let decrements: Vec<f64> = tp.windows(2).map(|w| w[0].abs() - w[1].abs()).collect();
    let dec_ok = decrements.len() >= 2 && decrements.iter().all(|d| (d - 2.0).abs() <= 0.05);
    trajs.push(traj);
    outcome(
        sign_ok && ends_ok && dec_ok,
        format!(
            "u = -sign(y) on 200 states: {sign_ok}; end ({:.4}, {:.4}); turning points {:?}",
            end[0],
            end[1],
            tp.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

fn c7_dissipation_and_freezing(trajs: &mut Vec<Trajectory>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_step = f64::NEG_INFINITY;
    let mut worst_rate = f64::NEG_INFINITY;
    let mut tangency: f64 = 0.0;
    let systems = [OscillatorSystem::new(vec![1.0]).unwrap(), pair()];
    for sys in &systems {
        let cfg = SimConfig::default();
        let sim = Simulator::new(sys, &cfg).unwrap();
        let solver = sim.solver();
        let d = sys.phase_dim();
        for _ in 0..5000 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let (rate, drift) = feedback_rate(&solver, &x, cfg.smoothing.n).unwrap();
            worst_rate = worst_rate.max(rate);
            tangency = tangency.max(drift.abs() / norm(&x));
            let t = sim.run_steps(&state(&x), 1, None).unwrap();
            worst_step = worst_step.max(t.max_rho_increase());
        }
    }
    // Runs that enter the frozen zone.
    let s1 = &systems[0];
    let mut cfg = SimConfig::default();
    cfg.horizon = 8.0;
    let sim = Simulator::new(s1, &cfg).unwrap();
    for x0 in [[0.0, 0.05], [0.004, -0.02], [0.5, 0.3]] {
        trajs.push(sim.run(&state(&x0)).unwrap());
    }
    let s2 = pair();
    let mut cfg2 = SimConfig::default();
    cfg2.horizon = 5.0;
    let sim2 = Simulator::new(&s2, &cfg2).unwrap();
    let x0 = pair_start(&sim2.solver(), 70);
    let t2 = sim2.run(&x0).unwrap();
    let decreased = t2.rho_values.last().unwrap() < &t2.rho_values[0];
    trajs.push(t2);

    let mut traj_worst = f64::NEG_INFINITY;
    let mut exits = 0;
    let mut frozen_runs = 0;
    for t in trajs.iter() {
        traj_worst = traj_worst.max(t.max_rho_increase());
        if t.frozen_from.is_some() {
            frozen_runs += 1;
        }
        if let Some(k) = t.rho_values.iter().position(|&r| r <= SimConfig::default().smoothing.delta) {
            exits += t.rho_values[k..].iter().filter(|&&r| r > SimConfig::default().smoothing.delta).count();
        }
    }
    outcome(
        worst_step <= 1e-9 && worst_rate <= 1e-12 && tangency <= 1e-6 && traj_worst <= 1e-9 && exits == 0 && frozen_runs >= 2 && decreased,
        format!(
            "one-step rho increase {worst_step:.1e}, rho' max {worst_rate:.1e}, |<grad rho, Ax>|/|x| {tangency:.1e} (10^4 states); trajectories: max step increase {traj_worst:.1e}, {frozen_runs} frozen, {exits} exits"
        ),
    )
}

fn c8_semiflow() -> Outcome {
    let s1 = OscillatorSystem::new(vec![1.0]).unwrap();
    let s2 = pair();
    let x1 = state(&[5.0, 0.0]);
    let mut cfg = SimConfig::default();
    cfg.horizon = 2.0;
    let semi1 = semigroup_check(&s1, &x1, &cfg, 1.0, 1.0).unwrap();
    let sim2 = Simulator::new(&s2, &cfg).unwrap();
    let x2 = pair_start(&sim2.solver(), 80);
    let semi2 = semigroup_check(&s2, &x2, &cfg, 1.0, 1.0).unwrap();

    let ladder = [125.0, 250.0, 500.0, 1000.0];
    let mut c1 = SimConfig::default();
    c1.horizon = 2.0 * PI + 1.0;
    let conv1 = converge_in_n(&s1, &x1, &c1, &ladder).unwrap();
    let mut c2 = SimConfig::default();
    c2.horizon = 4.0;
    let conv2 = converge_in_n(&s2, &x2, &c2, &ladder).unwrap();

    let lips: Vec<f64> = ladder
        .iter()
        .map(|&n| lipschitz_probe(&s1, &x1, 1e-4, &c1.with_n(n)).unwrap())
        .collect();
    let (lo, hi) = lips
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    outcome(
        semi1 <= 1e-9 && semi2 <= 1e-9 && conv1.strictly_decreasing() && conv2.strictly_decreasing() && hi <= 2.0 * lo,
        format!(
            "semigroup {semi1:.1e} / {semi2:.1e}; d(n) N=1 {:?}, N=2 {:?}; Lipschitz {:?}",
            conv1.distances.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>(),
            conv2.distances.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>(),
            lips.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn c9_transport() -> Outcome {
    let sys = OscillatorSystem::new(vec![1.0]).unwrap();
    let cfg = SimConfig::default().with_n(100.0);
    let grid = TransportGrid {
        center: vec![0.0, 3.0],
        half_width: 1.0,
        points: 5,
        times: vec![0.1, 0.2],
        dx: 0.04,
        dt_steps: 40,
        margin: 0.1,
    };
    let fine = grid.refined();
    let constant = transport_residual(&sys, &TestFunction::Constant(2.5), &grid, &cfg).unwrap();
    let mut ok = constant.residual == 0.0;
    let mut parts = vec![format!("constant {:.0e}", constant.residual)];
    for (name, f) in [
        ("x_1", TestFunction::Coordinate(0)),
        ("rho", TestFunction::Rho),
        (
            "gaussian",
            TestFunction::Gaussian {
                center: vec![0.5, 3.0],
                width: 1.0,
            },
        ),
    ] {
        let a = transport_residual(&sys, &f, &grid, &cfg).unwrap();
        let b = transport_residual(&sys, &f, &fine, &cfg).unwrap();
        let order = (a.residual / b.residual).log2();
        let order_beta = (a.renormalized_residual / b.renormalized_residual).log2();
        ok &= order >= 1.0 && order_beta >= 1.0 && a.evaluated > 0 && b.evaluated > 0;
        parts.push(format!(
            "{name} {:.1e} -> {:.1e} (order {order:.2}, v^2 order {order_beta:.2}, {} excluded)",
            a.residual, b.residual, a.excluded
        ));
    }
    outcome(ok, parts.join("; "))
}

fn c10_optimality() -> Outcome {
    let opts = SearchOptions::default();
    let mut cert: f64 = 0.0;
    for x0 in [[2.0, 0.0], [0.0, 10.0], [0.0, 100.0], [5.0, 0.0], [3.0, -2.0]] {
        let o = optimal_time_1osc(1.0, x0, &opts).unwrap();
        let end = replay_schedule(&o, 1e-3);
        cert = cert.max(o.terminal_error).max(norm(&end));
    }
    let cfg = CompareConfig {
        initial_states: vec![[0.0, 10.0], [0.0, 100.0], [5.0, 0.0], [3.0, -2.0]],
        ..Default::default()
    };
    let report = compare_optimal(&cfg, &SimConfig::default()).unwrap();
    let ratios: Vec<f64> = report
        .cases
        .iter()
        .map(|c| c.ratio.unwrap_or(f64::INFINITY))
        .collect();
    let all_ge_one = ratios.iter().all(|&r| r >= 1.0 && r.is_finite());
    let trend = ratios[1] <= ratios[0] + 0.1;
    outcome(
        cert <= 1e-9 && all_ge_one && trend,
        format!(
            "certificate {cert:.1e}; T_dry/T* = {:?} for x0 = (0,10), (0,100), (5,0), (3,-2)",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn c11_determinism() -> Outcome {
    let cfg = RunConfig::default();
    let render = || {
        let r = run_checks(&cfg).unwrap();
        let status = if r.all_passed() { Status::Ok } else { Status::Failed };
        Report::new(cfg.to_json_value(), serde_json::to_value(&r).unwrap(), status).to_json()
    };
    let (a, b) = (render(), render());
    outcome(
        a == b && a.contains("\"status\": \"ok\""),
        format!("two check reports ({} bytes) identical: {}", a.len(), a == b),
    )
}

#[test]
fn acceptance() {
    let mut trajs = Vec::new();
    let criteria: Vec<(usize, &str, Duration, Box<dyn FnOnce(&mut Vec<Trajectory>) -> Outcome>)> = vec![
        (1, "support values", Duration::from_secs(1), Box::new(|_| c1_support_values())),
        (2, "backend cross-check", Duration::from_secs(10), Box::new(|_| c2_backend_cross_check())),
        (3, "homogeneity/Euler/gradient", Duration::from_secs(30), Box::new(|_| c3_homogeneity_euler_gradient())),
        (4, "gauge closed form", Duration::from_secs(10), Box::new(|_| c4_gauge_closed_form())),
        (5, "duality identity", Duration::from_secs(60), Box::new(|_| c5_duality())),
        (6, "single-oscillator reduction", Duration::from_secs(30), Box::new(c6_single_oscillator_reduction)),
        (7, "dissipation and freezing", Duration::from_secs(60), Box::new(c7_dissipation_and_freezing)),
        (8, "semiflow properties", Duration::from_secs(300), Box::new(|_| c8_semiflow())),
        (9, "transport residual", Duration::from_secs(120), Box::new(|_| c9_transport())),
        (10, "optimality baseline", Duration::from_secs(120), Box::new(|_| c10_optimality())),
        (11, "determinism", Duration::from_secs(600), Box::new(|_| c11_determinism())),
    ];
    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let o = run(&mut trajs);
        let elapsed = start.elapsed();
        let passed = o.passed && elapsed <= limit;
        println!(
            "criterion {id:>2} {}: {name} [{:.2}s / {}s] {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            o.summary
        );
        if !passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
