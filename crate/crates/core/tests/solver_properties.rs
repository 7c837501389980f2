use kpp_core::analysis::{level_position, spreading_check, SpreadSense};
use kpp_core::model::{InitialDatum, Nonlinearity};
use kpp_core::solver::{Geometry, SolutionField, Solver, SolverConfig, TimeScheme, WindowPolicy};
use proptest::prelude::*;

fn fixed(geometry: Geometry, dr: f64, width: f64) -> SolverConfig {
    let mut cfg = SolverConfig::new(geometry, dr, InitialDatum::ball(1.0, 2.0, 1.5).unwrap());
    cfg.window_width = width;
    cfg.window_policy = WindowPolicy::Fixed;
    cfg
}

fn bumps(n: usize, dr: f64, bumps_at: &[(f64, f64, f64)]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let r = i as f64 * dr;
            bumps_at.iter()
                .map(|&(c, w, h)| h * (-((r - c) / w).powi(2)).exp())
                .fold(0.0, f64::max)
        })
        .collect()
}

fn trajectory(cfg: &SolverConfig, u0: Vec<f64>, times: &[f64]) -> Vec<SolutionField> {
    let mut s = Solver::with_values(cfg.clone(), u0).unwrap();
    times
        .iter()
        .map(|&t| {
            s.advance(t).unwrap();
            s.record()
        })
        .collect()
}

fn bump() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0..15.0, 0.5..3.0, 0.0..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn comparison_principle(
        lower in prop::collection::vec(bump(), 1..4),
        extra in prop::collection::vec(bump(), 0..3),
    ) {
        let cfg = fixed(Geometry::Line, 0.1, 80.0);
        let n = cfg.n_r();
        let a = bumps(n, cfg.dr, &lower);
        let all: Vec<_> = lower.iter().chain(&extra).copied().collect();
        let b = bumps(n, cfg.dr, &all);
        let times = [2.0, 5.0, 10.0, 20.0];
        let ua = trajectory(&cfg, a, &times);
        let ub = trajectory(&cfg, b, &times);
        for (x, y) in ua.iter().zip(&ub) {
            for (p, q) in x.values.iter().zip(&y.values) {
                prop_assert!(*p <= *q + 10.0 * f64::EPSILON, "t = {}: {p} > {q}", x.t);
            }
        }
    }

    #[test]
    fn solution_stays_in_unit_interval(
        bumps_at in prop::collection::vec(bump(), 1..4),
        radial in any::<bool>(),
        semi in any::<bool>(),
    ) {
        let geometry = if radial { Geometry::Radial { n: 3 } } else { Geometry::Line };
        let mut cfg = fixed(geometry, 0.1, 60.0);
        if semi {
            cfg.scheme = TimeScheme::SemiImplicit;
            cfg.dt = 0.01;
        }
        let u0 = bumps(cfg.n_r(), cfg.dr, &bumps_at);
        for f in trajectory(&cfg, u0, &[2.0, 5.0, 10.0]) {
            prop_assert!(f.min_value() >= 0.0);
            prop_assert!(f.max_value() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn general_reaction_respects_bounds(a in 0.1..2.0f64, b in 0.0..1.0f64) {
        // f(u) = a(u − u²) + b(u − u³)
        let mut cfg = fixed(Geometry::Line, 0.1, 60.0);
        cfg.nl = Nonlinearity::general(vec![a, b]).unwrap();
        let u0 = bumps(cfg.n_r(), cfg.dr, &[(0.0, 2.0, 1.0)]);
        cfg.t_end = 5.0;
        for f in trajectory(&cfg, u0, &[2.0, 5.0]) {
            prop_assert!(f.min_value() >= 0.0 && f.max_value() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn polar_with_isotropic_data_matches_radial() {
    let run = |geometry| {
        let mut s = Solver::new(fixed(geometry, 0.1, 60.0)).unwrap();
        s.advance(20.0).unwrap();
        s.record()
    };
    let radial = run(Geometry::Radial { n: 2 });
    let polar = run(Geometry::Polar2d { n_theta: 16 });
    for j in 0..polar.n_theta {
        let gap = polar
            .row(j)
            .iter()
            .zip(radial.row(0))
            .map(|(p, r)| (p - r).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-6, "row {j}: {gap}");
    }
}

#[test]
fn line_front_lies_in_log_bracket() {
    let cfg = SolverConfig::new(Geometry::Line, 0.05, InitialDatum::ball(0.5, 2.0, 1.0).unwrap());
    let mut s = Solver::new(cfg).unwrap();
    s.advance(50.0).unwrap();
    let r = level_position(&s.record(), 0.5).unwrap().mean();
    // the datum is posed at t = 1, so 49 time units have elapsed
    let e = 49.0f64;
    assert!(r >= 2.0 * e - 1.9 * e.ln() && r <= 2.0 * e - 1.1 * e.ln(), "{r}");
    // explicit RK2 reference on [0, 160] with dr = 0.01 gives 90.943
    assert!((r - 90.943).abs() < 0.05, "{r}");
}

#[test]
fn halving_dr_moves_front_less_than_dr() {
    let front = |dr: f64| {
        let mut s = Solver::new(SolverConfig::new(Geometry::Line, dr, InitialDatum::ball(1.0, 2.0, 1.5).unwrap())).unwrap();
        s.advance(100.0).unwrap();
        level_position(&s.record(), 0.5).unwrap().mean()
    };
    let (coarse, fine) = (front(0.1), front(0.05));
    assert!((coarse - fine).abs() < 0.1, "{coarse} vs {fine}");
}

#[test]
fn radial_front_and_spreading_at_moderate_time() {
    let mut cfg = SolverConfig::new(Geometry::Radial { n: 2 }, 0.1, InitialDatum::ball(1.0, 2.0, 1.5).unwrap());
    cfg.window_width = 300.0;
    cfg.window_policy = WindowPolicy::CoMoving {
        anchor_level: 0.5,
        margin_back: 40.0,
        margin_front: 250.0,
    };
    let mut s = Solver::new(cfg).unwrap();
    s.advance(300.0).unwrap();
    let f = s.record();
    let r = level_position(&f, 0.5).unwrap().mean();
    let l = 300f64.ln();
    // Gärtner bracket with an O(1) allowance
    assert!(r >= 600.0 - 2.5 * l - 2.0 && r <= 600.0 - 1.2 * l + 2.0, "{r}");
    assert!(spreading_check(&f, 0.0, SpreadSense::Inner).unwrap() >= 0.999);
    assert!(spreading_check(&f, 1.8, SpreadSense::Inner).unwrap() >= 0.99);
    assert!(spreading_check(&f, 2.2, SpreadSense::Outer).unwrap() <= 1e-3);
}

#[test]
fn level_position_on_tabulated_wave() {
    let wave = kpp_core::wave::solve_profile(&Nonlinearity::QuadraticKpp, 2.0, 0.02, 1e-10).unwrap();
    let dr = 0.05;
    let n_r = 1000;
    let origin_cells = 1000; // window [50, 100)
    let values: Vec<f64> = (0..n_r).map(|i| wave.query((origin_cells + i) as f64 * dr - 75.0)).collect();
    let f = SolutionField {
        t: 10.0,
        geometry: Geometry::Line,
        dr,
        origin_cells: origin_cells as u64,
        n_r,
        n_theta: 1,
        values,
        trailing_ghost: Some(vec![1.0]),
        leading_ghost: 0.0,
    };
    let r = level_position(&f, 0.5).unwrap().mean();
    assert!((r - 75.0).abs() <= dr, "{r}");

    let full = SolutionField {
        values: vec![1.0; n_r],
        ..f
    };
    assert!(level_position(&full, 0.5).is_err());
}

#[test]
fn grid_matched_frame_removes_secular_drift() {
    use kpp_core::frames::{moving_frame_shift, FrameParams};
    let dr = 0.2;
    let exact = FrameParams::homogeneous(1).unwrap();
    let matched = exact.matched_to_grid(dr).unwrap();
    let mut s = Solver::new(SolverConfig::new(Geometry::Line, dr, InitialDatum::ball(1.0, 2.0, 1.5).unwrap())).unwrap();
    let mut offsets = Vec::new();
    for t in [200.0, 400.0] {
        s.advance(t).unwrap();
        let r = level_position(&s.record(), 0.5).unwrap().mean();
        offsets.push((
            r - moving_frame_shift(t, &exact).unwrap(),
            r - moving_frame_shift(t, &matched).unwrap(),
        ));
    }
    // (c_dr − 2)·200 ≈ 0.67; the 1/√t correction alone is ≈ 0.1
    let drift_exact = offsets[1].0 - offsets[0].0;
    let drift_matched = offsets[1].1 - offsets[0].1;
    assert!(drift_exact > 0.5, "{drift_exact}");
    assert!(drift_matched.abs() < 0.2, "{drift_matched}");
}
