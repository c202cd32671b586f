//! End-to-end acceptance checks. Each test prints one line:
//! `[n] name: PASS|FAIL (details; runtime / limit)`.
//!
//! The checks hold a shared lock so their timings do not overlap. Run with
//! `cargo test -p waveleton --test acceptance -- --nocapture` to see the lines.

use std::f64::consts::{PI, SQRT_2};
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use waveleton::cutoff::{
    refine_until_converged, solve_problem, InitialDatum, Problem, RefinementPolicy,
    RefinementStatus, TimeModes, TimeSpec,
};
use waveleton::hierarchy::{
    ClosureSpec, Field, HamiltonianSpec, HierarchyState, NormForm, PhaseBox, RationalFunction,
    StateComponent,
};
use waveleton::io::demos::load_demo;
use waveleton::io::dump::coefficients_from_csv;
use waveleton::io::pipeline::COEFFICIENT_FILE;
use waveleton::io::run;
use waveleton::operator::{connection_coefficients, PeriodicAxis};
use waveleton::pattern::{classify, PatternLabel, Thresholds, TimeResolvedSpectrum};
use waveleton::quadrature::gauss_legendre_on;
use waveleton::solver::newton::solve_by_continuation;
use waveleton::solver::system::DEFAULT_MEMORY_BUDGET;
use waveleton::solver::{
    evaluate_on_grid, grid_positions, AxisSpec, CoefficientTensor, PhaseRole, SolverSettings,
};
use waveleton::wavelet::{eval_scaling, forward_transform, inverse_transform, make_family};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, name: &str, ok: bool, detail: String, elapsed: Duration, limit: f64) {
    let secs = elapsed.as_secs_f64();
    let pass = ok && secs < limit;
    println!(
        "[{n}] {name}: {} ({detail}; {secs:.2} s / {limit} s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} failed: {detail}");
    assert!(secs < limit, "criterion {n} exceeded its time limit: {secs:.2} s");
}

fn one() -> BigRational {
    BigRational::from_integer(BigInt::from(1))
}

fn free_problem(dom: PhaseBox, order: usize, level: u32, time: TimeSpec, initial: InitialDatum) -> Problem {
    Problem {
        closure: ClosureSpec::vlasov(),
        s_max: 1,
        hamiltonian: HamiltonianSpec::free(one(), dom).unwrap(),
        order,
        level,
        time: Some(time),
        initial,
        mass: None,
    }
}

#[test]
fn wavelet_identities() {
    let _serial = serial();
    let t0 = Instant::now();
    let r = 6;
    let mut worst = 0.0f64;
    for p in 1..=4 {
        let f = make_family(p).unwrap();
        let h = f.filter();
        worst = worst.max((h.iter().sum::<f64>() - SQRT_2).abs());
        for m in 0..p {
            let dot: f64 = (0..h.len() - 2 * m).map(|k| h[k] * h[k + 2 * m]).sum();
            worst = worst.max((dot - if m == 0 { 1.0 } else { 0.0 }).abs());
        }
        let t = eval_scaling(&f, r).unwrap();
        let n = 1i64 << r;
        let support = (2 * p - 1) as i64;
        for m in 0..n {
            let s: f64 = (0..=support).map(|k| t.at(m + k * n)).sum();
            worst = worst.max((s - 1.0).abs());
        }
        for m in 0..=support * n {
            let rhs: f64 = h
                .iter()
                .enumerate()
                .map(|(k, hk)| hk * t.at(2 * m - k as i64 * n))
                .sum();
            worst = worst.max((t.at(m) - SQRT_2 * rhs).abs());
        }
    }
    verdict(
        1,
        "wavelet identities p=1..4",
        worst <= 1e-10,
        format!("max defect {worst:.2e}"),
        t0.elapsed(),
        5.0,
    );
}

#[test]
fn transform_round_trip_and_parseval() {
    let _serial = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut round, mut parseval) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let order = 1 + i % 10;
        let bits = 1 + (i as u32 % 10);
        let len = 1usize << bits;
        let levels = rng.gen_range(1..=bits);
        let f = make_family(order).unwrap();
        let x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let y = forward_transform(&f, &x, levels).unwrap();
        let z = inverse_transform(&f, &y, levels).unwrap();
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = x.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        round = round.max(err / scale);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ey: f64 = y.iter().map(|v| v * v).sum();
        parseval = parseval.max((ex - ey).abs() / ex);
    }
    verdict(
        2,
        "transform round trip and Parseval",
        round <= 1e-12 && parseval <= 1e-12,
        format!("round trip {round:.2e}, Parseval {parseval:.2e}"),
        t0.elapsed(),
        5.0,
    );
}

#[test]
fn connection_coefficient_exactness() {
    let _serial = serial();
    let t0 = Instant::now();
    let (mut poly, mut sums) = (0.0f64, 0.0f64);
    for p in 2..=4 {
        let table = connection_coefficients(&make_family(p).unwrap(), 1).unwrap();
        let s0: f64 = table.entries().map(|(_, g)| g).sum();
        let s1: f64 = table.entries().map(|(l, g)| l as f64 * g).sum();
        sums = sums.max(s0.abs()).max((s1 + 1.0).abs());

        // x and x² are not periodic: only rows whose stencil stays clear of
        // the seam at the domain ends are compared.
        let ax = PeriodicAxis::new(p, 6, 0.0, 1.0).unwrap();
        let d = ax.derivative(1).unwrap();
        let n = ax.modes();
        let interior = 3 * p..n - 3 * p;
        for (f, df) in [
            (&(|x: f64| x) as &(dyn Fn(f64) -> f64 + Sync), &(|_: f64| 1.0) as &(dyn Fn(f64) -> f64 + Sync)),
            (&|x: f64| x * x, &|x: f64| 2.0 * x),
        ] {
            let c = ax.project(f).unwrap();
            let dc = d.matvec(&c);
            let oracle = ax.project(df).unwrap();
            for k in interior.clone() {
                poly = poly.max((dc[k] - oracle[k]).abs());
            }
        }
    }
    verdict(
        3,
        "connection coefficients p=2..4",
        poly <= 1e-8 && sums <= 1e-10,
        format!("derivative of x, x² {poly:.2e}, sum rules {sums:.2e}"),
        t0.elapsed(),
        10.0,
    );
}

fn free_streaming_error(level: u32) -> f64 {
    let dom = PhaseBox {
        q_start: 0.0,
        q_length: 1.0,
        p_start: -1.75,
        p_length: 3.5,
    };
    let t_end = 0.25;
    let f0 = |q: f64, p: f64| (1.0 + 0.5 * (2.0 * PI * q).sin()) * (-p * p / 0.5).exp();
    let prob = free_problem(
        dom,
        3,
        level,
        TimeSpec {
            start: 0.0,
            window: t_end,
            windows: 1,
            modes: TimeModes::Fixed(8),
        },
        InitialDatum::separable(|q| 1.0 + 0.5 * (2.0 * PI * q).sin(), |p| (-p * p / 0.5).exp()),
    );
    let sol = solve_problem(&prob, level, 1, &SolverSettings::default(), DEFAULT_MEMORY_BUDGET).unwrap();
    let fin = sol.final_one_particle().unwrap();
    let m = 256;
    let g = evaluate_on_grid(&fin, &[m, m]).unwrap();
    let qs = grid_positions(&fin.axes()[0], m);
    let ps = grid_positions(&fin.axes()[1], m);
    let (mut e, mut n) = (0.0, 0.0);
    for (i, q) in qs.iter().enumerate() {
        for (j, p) in ps.iter().enumerate() {
            let exact = f0((q - p * t_end).rem_euclid(1.0), *p);
            e += (g[i * m + j] - exact).powi(2);
            n += exact * exact;
        }
    }
    (e / n).sqrt()
}

#[test]
fn free_streaming_matches_characteristics() {
    let _serial = serial();
    let t0 = Instant::now();
    let e16 = free_streaming_error(4);
    let e32 = free_streaming_error(5);
    let ratio = e16 / e32;
    verdict(
        4,
        "free streaming vs characteristics",
        e16 <= 1e-2 && ratio >= 4.0,
        format!("rel L2 N=16 {e16:.3e}, N=32 {e32:.3e}, ratio {ratio:.2}"),
        t0.elapsed(),
        120.0,
    );
}

#[test]
fn harmonic_rotation_conserves_norm() {
    let _serial = serial();
    let t0 = Instant::now();
    let dom = PhaseBox {
        q_start: -5.0,
        q_length: 10.0,
        p_start: -5.0,
        p_length: 10.0,
    };
    let q = RationalFunction::variable(1, 0);
    let ext = q.mul(&q).scale(&BigRational::new(BigInt::from(1), BigInt::from(2)));
    let h = HamiltonianSpec::new(one(), ext, RationalFunction::zero(2), dom, None).unwrap();
    let s2 = 0.7f64 * 0.7;
    let windows = 8;
    let prob = Problem {
        closure: ClosureSpec::vlasov(),
        s_max: 1,
        hamiltonian: h,
        order: 3,
        level: 6,
        time: Some(TimeSpec {
            start: 0.0,
            window: 2.0 * PI / windows as f64,
            windows,
            modes: TimeModes::Fixed(8),
        }),
        initial: InitialDatum::separable(
            move |q| (-(q - 2.0) * (q - 2.0) / (2.0 * s2)).exp(),
            move |p| (-p * p / (2.0 * s2)).exp(),
        ),
        mass: None,
    };
    let sol = solve_problem(&prob, 6, 1, &SolverSettings::default(), DEFAULT_MEMORY_BUDGET).unwrap();
    let ic = sol.system.initial(Field::One).unwrap().to_vec();
    let fin = sol.final_one_particle().unwrap();
    let start = CoefficientTensor::from_single_scale(fin.axes().to_vec(), 1, ic).unwrap();
    let n0 = start.norm_squared().sqrt();
    let drift = (fin.norm_squared().sqrt() - n0).abs() / n0;
    // A full period maps the datum onto itself.
    let diff: f64 = fin
        .values()
        .iter()
        .zip(start.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / n0;
    verdict(
        5,
        "harmonic period: norm and rotation",
        drift <= 1e-4 && diff <= 2e-2,
        format!("norm drift {drift:.2e}, rel L2 to datum {diff:.2e}"),
        t0.elapsed(),
        120.0,
    );
}

#[test]
fn galerkin_system_is_square() {
    let _serial = serial();
    let t0 = Instant::now();
    let dom = PhaseBox {
        q_start: -1.0,
        q_length: 2.0,
        p_start: -1.0,
        p_length: 2.0,
    };
    let prob = free_problem(
        dom,
        3,
        2,
        TimeSpec {
            start: 0.0,
            window: 0.5,
            windows: 1,
            modes: TimeModes::Fixed(4),
        },
        InitialDatum::separable(|q| (-q * q).exp(), |p| (-p * p).exp()),
    );
    let sys = prob.system(2, 1, DEFAULT_MEMORY_BUDGET).unwrap();
    let a = sys.linear_matrix();
    let (u, e) = (sys.unknowns(), sys.equations());
    verdict(
        6,
        "system count d=1, 3 axes, N=4",
        u == 64 && e == 64 && a.rows() == 64 && a.cols() == 64,
        format!("{u} unknowns, {e} equations, matrix {}x{}", a.rows(), a.cols()),
        t0.elapsed(),
        1.0,
    );
}

#[test]
fn vlasov_residual_is_quadratic_and_continuation_converges() {
    let _serial = serial();
    let t0 = Instant::now();
    let mut loaded = load_demo("vlasov_weak").unwrap();
    loaded.config.discretization.modes = 8;
    let problem = loaded.build().unwrap();
    let sys = problem
        .system(3, 1, DEFAULT_MEMORY_BUDGET)
        .unwrap()
        .with_coupling(0.01)
        .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..sys.unknowns()).map(|_| rng.sample(StandardNormal)).collect();
    let at = |a: f64| sys.residual(&x.iter().map(|v| a * v).collect::<Vec<_>>()).unwrap();
    let (rm, r0, rp) = (at(-1.0), at(0.0), at(1.0));
    // R(α) = A + αB + α²C through α = −1, 0, 1.
    let b: Vec<f64> = rp.iter().zip(&rm).map(|(p, m)| 0.5 * (p - m)).collect();
    let c: Vec<f64> = rp
        .iter()
        .zip(&rm)
        .zip(&r0)
        .map(|((p, m), z)| 0.5 * (p + m) - z)
        .collect();
    let mut fit = 0.0f64;
    for a in [-2.0, -0.5, 0.25, 0.75, 1.5, 3.0] {
        let r = at(a);
        let scale = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..r.len() {
            let model = r0[i] + a * b[i] + a * a * c[i];
            fit = fit.max((r[i] - model).abs() / scale);
        }
    }
    let curvature = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let (sol, report) = solve_by_continuation(&sys, &SolverSettings::default()).unwrap();
    let residual = sys.residual_norm(&sol).unwrap();
    verdict(
        7,
        "quadratic residual and continuation at 0.01",
        fit <= 1e-10 && curvature > 0.0 && residual <= 1e-8,
        format!(
            "fit error {fit:.2e}, max |C| {curvature:.2e}, residual {residual:.2e} ({} steps)",
            report.steps()
        ),
        t0.elapsed(),
        180.0,
    );
}

/// `sqrt((1/T)∫ ‖P_{J+1} f‖² − ‖P_J f‖² dt)`: what refinement from J to
/// J + 1 adds when the solution equals the projection of `f`.
fn projection_gain(dom: &PhaseBox, order: usize, f: &(dyn Fn(f64, f64, f64) -> f64 + Sync), t_end: f64, nodes: usize, levels: std::ops::RangeInclusive<u32>) -> Vec<(u32, f64)> {
    let (ts, ws) = gauss_legendre_on(nodes, 0.0, t_end);
    let norms: Vec<f64> = levels
        .clone()
        .map(|lv| {
            let qa = PeriodicAxis::new(order, lv, dom.q_start, dom.q_length).unwrap();
            let pa = PeriodicAxis::new(order, lv, dom.p_start, dom.p_length).unwrap();
            ts.iter()
                .zip(&ws)
                .map(|(t, w)| {
                    let c = qa.project_2d(&pa, |q, p| f(q, p, *t)).unwrap();
                    w / t_end * c.iter().map(|v| v * v).sum::<f64>()
                })
                .sum()
        })
        .collect();
    levels
        .skip(1)
        .zip(norms.windows(2))
        .map(|(lv, n)| (lv, (n[1] - n[0]).max(0.0).sqrt()))
        .collect()
}

#[test]
fn cutoff_controller_matches_projection_oracle() {
    let _serial = serial();
    let t0 = Instant::now();
    let dom = PhaseBox {
        q_start: -1.0,
        q_length: 2.0,
        p_start: -2.0,
        p_length: 4.0,
    };
    let (sq, sp, t_end, nt) = (0.25f64, 0.5f64, 0.25, 8);
    let prob = free_problem(
        dom,
        3,
        3,
        TimeSpec {
            start: 0.0,
            window: t_end,
            windows: 1,
            modes: TimeModes::Fixed(nt),
        },
        InitialDatum::separable(
            move |q| (-q * q / (2.0 * sq * sq)).exp(),
            move |p| (-p * p / (2.0 * sp * sp)).exp(),
        ),
    );
    let out = refine_until_converged(&prob, &RefinementPolicy::modes(1e-3, 7)).unwrap();
    let h = &out.history;
    let exact = move |q: f64, p: f64, t: f64| {
        let x = (q - p * t + 1.0).rem_euclid(2.0) - 1.0;
        (-x * x / (2.0 * sq * sq)).exp() * (-p * p / (2.0 * sp * sp)).exp()
    };
    let last = h.entries.last().unwrap().level;
    let oracle = projection_gain(&dom, 3, &exact, t_end, nt + 1, 3..=last);
    let mut ratios = Vec::new();
    for e in &h.entries {
        if let Some(d) = e.fock_diff {
            let (_, o) = oracle.iter().find(|(lv, _)| *lv == e.level).unwrap();
            ratios.push((e.level, d, d / o));
        }
    }
    let within = ratios.iter().all(|(_, _, r)| (0.5..=2.0).contains(r));
    let detail = ratios
        .iter()
        .map(|(lv, d, r)| format!("J{lv} {d:.2e} x{r:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        8,
        "cut-off refinement vs projection oracle",
        h.status == RefinementStatus::Converged && !ratios.is_empty() && within,
        format!("{:?} at level {last}; {detail}", h.status),
        t0.elapsed(),
        300.0,
    );
}

fn phase_axes(order: usize, level: u32, particles: usize) -> Vec<AxisSpec> {
    (0..particles)
        .flat_map(|i| {
            [
                AxisSpec::Phase {
                    role: PhaseRole::Position(i),
                    order,
                    level,
                    start: -1.0,
                    length: 2.0,
                },
                AxisSpec::Phase {
                    role: PhaseRole::Momentum(i),
                    order,
                    level,
                    start: -1.5,
                    length: 3.0,
                },
            ]
        })
        .collect()
}

#[test]
fn fock_norm_matches_grid_quadrature() {
    let _serial = serial();
    let t0 = Instant::now();
    // Point sums of products of order-4 functions carry ~1e-9 error at 2^10
    // points per axis; order 6 leaves the grid route well below 1e-8.
    let (order, level, nt, rank, grid) = (6, 2, 3, 2, 1 << 10);
    let time = AxisSpec::Time {
        modes: nt,
        start: 0.5,
        length: 0.75,
    };
    let one_axes = phase_axes(order, level, 1);
    let n2 = 1usize << (2 * level);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let cell = (2.0 / grid as f64) * (3.0 / grid as f64);
    let dot = |a: &[f64], b: &[f64]| cell * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let eval = |values: Vec<f64>| {
        let t = CoefficientTensor::from_values(one_axes.clone(), 1, values).unwrap();
        evaluate_on_grid(&t, &[grid, grid]).unwrap()
    };
    let legendre = time.legendre().unwrap();
    let (ts, ws) = gauss_legendre_on(8, 0.5, 1.25);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f0: f64 = normal(1)[0];
        let mut axes = vec![time.clone()];
        axes.extend(one_axes.clone());
        let f1 = CoefficientTensor::from_values(axes, 1, normal(nt * n2)).unwrap();
        // Correlator Σ_r c_r(t) a_r(x1) b_r(x2), stored as a full tensor.
        let c: Vec<Vec<f64>> = (0..rank).map(|_| normal(nt)).collect();
        let a: Vec<Vec<f64>> = (0..rank).map(|_| normal(n2)).collect();
        let b: Vec<Vec<f64>> = (0..rank).map(|_| normal(n2)).collect();
        let mut g = vec![0.0; nt * n2 * n2];
        for r in 0..rank {
            for m in 0..nt {
                for i in 0..n2 {
                    for j in 0..n2 {
                        g[(m * n2 + i) * n2 + j] += c[r][m] * a[r][i] * b[r][j];
                    }
                }
            }
        }
        let mut gaxes = vec![time.clone()];
        gaxes.extend(phase_axes(order, level, 2));
        let g = CoefficientTensor::from_values(gaxes, 1, g).unwrap();
        let state = HierarchyState::new(
            f0,
            vec![
                StateComponent::Tensor(f1.clone()),
                StateComponent::Product {
                    one: f1.clone(),
                    power: 2,
                    correlator: Some(g),
                },
            ],
        )
        .unwrap();
        let coefficient_space = state.fock_norm(NormForm::Integrated).unwrap();

        // Grid route: point values on 2^10 × 2^10 per particle, Fubini for F_2.
        let av: Vec<Vec<f64>> = a.iter().map(|v| eval(v.clone())).collect();
        let bv: Vec<Vec<f64>> = b.iter().map(|v| eval(v.clone())).collect();
        let mut acc = 0.0;
        for (t, w) in ts.iter().zip(&ws) {
            let fv = eval(f1.time_slice(*t).unwrap().values().to_vec());
            let lt = legendre.values_at(*t);
            let ct: Vec<f64> = c.iter().map(|cr| cr.iter().zip(&lt).map(|(x, y)| x * y).sum()).collect();
            let ff = dot(&fv, &fv);
            let mut s2 = ff * ff;
            for r in 0..rank {
                s2 += 2.0 * ct[r] * dot(&fv, &av[r]) * dot(&fv, &bv[r]);
                for s in 0..rank {
                    s2 += ct[r] * ct[s] * dot(&av[r], &av[s]) * dot(&bv[r], &bv[s]);
                }
            }
            acc += w / 0.75 * (ff + s2);
        }
        let grid_route = (f0 * f0 + acc).sqrt();
        worst = worst.max((coefficient_space - grid_route).abs() / grid_route);
    }
    verdict(
        9,
        "Fock norm vs 2^10-point quadrature",
        worst <= 1e-8,
        format!("max rel difference {worst:.2e} over 20 states (F_0, F_1, F_2 with correlator)"),
        t0.elapsed(),
        10.0,
    );
}

fn run_demo(name: &str, dir: &std::path::Path) -> (PatternLabel, Vec<u8>, usize, Duration) {
    let mut loaded = load_demo(name).unwrap();
    loaded.config.output.dir = dir.to_path_buf();
    let t0 = Instant::now();
    let summary = run(&loaded, "acceptance").unwrap();
    let elapsed = t0.elapsed();
    let dump = std::fs::read(dir.join(COEFFICIENT_FILE)).unwrap();
    (summary.report.label, dump, loaded.config.output.slices, elapsed)
}

#[test]
fn demo_labels_are_scale_invariant() {
    let _serial = serial();
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, expected) in [
        ("localized_mode", PatternLabel::LocalizedEigenmode),
        ("chaotic_pattern", PatternLabel::ChaoticLike),
        ("vlasov_weak", PatternLabel::Waveleton),
    ] {
        let (label, dump, slices, _) = run_demo(name, &tmp.path().join(name));
        let (t, _) = coefficients_from_csv(std::str::from_utf8(&dump).unwrap()).unwrap();
        let mut rescaled = Vec::new();
        for s in [1e-3, 1e3] {
            let series = TimeResolvedSpectrum::sample(&t.scaled(s), slices).unwrap();
            rescaled.push(classify(&series, &Thresholds::default()).unwrap().label);
        }
        ok &= label == expected && rescaled.iter().all(|l| *l == label);
        detail.push(format!("{name} {label} ({} / {})", rescaled[0], rescaled[1]));
    }
    verdict(
        10,
        "demo taxonomy and rescaling",
        ok,
        detail.join(", "),
        t0.elapsed(),
        120.0,
    );
}

#[test]
fn repeated_demo_runs_are_byte_identical() {
    let _serial = serial();
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    let (mut first_total, mut second_total) = (Duration::ZERO, Duration::ZERO);
    for name in ["free_streaming", "localized_mode", "chaotic_pattern", "vlasov_weak"] {
        let (_, a, _, ta) = run_demo(name, &tmp.path().join(format!("{name}_a")));
        let (_, b, _, tb) = run_demo(name, &tmp.path().join(format!("{name}_b")));
        ok &= a == b;
        first_total += ta;
        second_total += tb;
        detail.push(format!("{name} {}", if a == b { "identical" } else { "DIFFERENT" }));
    }
    let limit = 2.0 * first_total.as_secs_f64();
    verdict(
        11,
        "determinism of demo dumps",
        ok,
        format!("{}; first pass {:.2} s", detail.join(", "), first_total.as_secs_f64()),
        second_total,
        limit,
    );
}
