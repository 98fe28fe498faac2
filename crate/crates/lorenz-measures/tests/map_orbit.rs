use lorenz_measures::ext::{to_f64, ExtMap};
use lorenz_measures::fixtures::{k1, k2};
use lorenz_measures::orbit::{iterate, periodic_point, singular_orbit, Stop, DEFAULT_C_TOL};
use lorenz_measures::{metric_dist, Chart, Error, Itinerary, LorenzMap, Side};

// closed-form oracle for K1: 1 - (1 - 2x)^0.6 left, (2x - 1)^0.6 right
fn k1_oracle(x: f64) -> f64 {
    if x < 0.5 {
        1.0 - (1.0 - 2.0 * x).powf(0.6)
    } else {
        (2.0 * x - 1.0).powf(0.6)
    }
}

#[test]
fn k1_eval_examples() {
    let f = k1();
    assert_eq!(f.eval(0.0).unwrap(), 0.0);
    assert!((f.eval(0.25).unwrap() - 0.340246).abs() < 1e-6);
    assert!((f.eval(0.75).unwrap() - 0.659754).abs() < 1e-6);
    assert!((f.eval(0.25).unwrap() - k1_oracle(0.25)).abs() < 1e-15);
}

#[test]
fn eval_errors() {
    let f = k1();
    assert_eq!(f.eval(0.5), Err(Error::Singularity));
    assert!(matches!(f.eval(1.5), Err(Error::Domain(_))));
    assert_eq!(f.eval_side(0.5, Side::Left).unwrap(), 1.0);
    assert_eq!(f.eval_side(0.5, Side::Right).unwrap(), 0.0);
}

#[test]
fn endpoint_and_singular_value_invariants() {
    let maps = [
        k1(),
        k2(),
        LorenzMap::with_charts(
            0.45,
            0.7,
            0.65,
            0.93,
            0.97,
            Chart::Quadratic { kappa: 0.15 },
            Chart::Quadratic { kappa: -0.2 },
        )
        .unwrap(),
    ];
    for f in maps {
        assert!(f.eval(0.0).unwrap().abs() < 1e-12);
        assert!((f.eval(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((f.eval_side(f.c(), Side::Left).unwrap() - f.d0()).abs() < 1e-12);
        assert!((f.eval_side(f.c(), Side::Right).unwrap() - (1.0 - f.d1())).abs() < 1e-12);
        assert!(f.phi(Side::Left, f.c()).abs() < 1e-15);
        assert!((f.phi(Side::Left, 0.0) - f.d0().powf(1.0 / f.alpha())).abs() < 1e-12);
        assert!(f.phi(Side::Right, f.c()).abs() < 1e-15);
        assert!((f.phi(Side::Right, 1.0) - f.d1().powf(1.0 / f.beta())).abs() < 1e-12);
    }
}

#[test]
fn k1_deriv_examples() {
    let f = k1();
    assert!((f.deriv(0.25).unwrap() - 1.583410).abs() < 1e-5);
    assert!((f.deriv(0.25).unwrap() - 1.2 * 0.5f64.powf(-0.4)).abs() < 1e-12);
    assert!(f.deriv(0.5 - 1e-8).unwrap() > 1e3);
    for i in 0..=1000 {
        let x = i as f64 / 1000.0;
        if x != 0.5 {
            assert!(f.deriv(x).unwrap() >= 1.2 - 1e-12);
        }
    }
}

#[test]
fn deriv_matches_central_difference() {
    let f = LorenzMap::with_charts(
        0.45,
        0.7,
        0.65,
        0.93,
        0.97,
        Chart::Quadratic { kappa: 0.15 },
        Chart::Quadratic { kappa: -0.2 },
    )
    .unwrap();
    let h = 1e-7;
    for i in 1..100 {
        let x = i as f64 / 100.0;
        if (x - f.c()).abs() < 0.02 {
            continue;
        }
        let fd = (f.eval(x + h).unwrap() - f.eval(x - h).unwrap()) / (2.0 * h);
        let d = f.deriv(x).unwrap();
        assert!(((fd - d) / d).abs() < 1e-5, "x = {x}");
    }
}

#[test]
fn derivative_blows_up_at_c() {
    for f in [k1(), k2()] {
        let mut prev = [0.0, 0.0];
        for k in 4..=12 {
            let s = 10f64.powi(-k);
            let l = f.deriv(f.c() - s).unwrap();
            let r = f.deriv(f.c() + s).unwrap();
            assert!(l > prev[0] && r > prev[1]);
            prev = [l, r];
        }
    }
}

#[test]
fn inverse_branch_examples() {
    let f = k1();
    assert!((f.inverse_branch(Side::Left, 0.340246).unwrap() - 0.25).abs() < 1e-6);
    assert!((f.inverse_branch(Side::Left, k1_oracle(0.25)).unwrap() - 0.25).abs() < 1e-12);
    assert!((f.inverse_branch(Side::Right, 0.5).unwrap() - 0.657490).abs() < 1e-5);
    assert_eq!(f.inverse_branch(Side::Left, 0.0).unwrap(), 0.0);
    let g = k2();
    assert!(matches!(
        g.inverse_branch(Side::Right, 0.1),
        Err(Error::NoPreimage { .. })
    ));
}

#[test]
fn expansion_floor_closed_form_matches_grid() {
    for f in [k1(), k2(), LorenzMap::canonical(0.3, 0.8, 0.75, 0.9, 0.99).unwrap()] {
        let closed = (f.alpha() * f.d0() / f.c()).min(f.beta() * f.d1() / (1.0 - f.c()));
        assert!((f.expansion_floor() - closed).abs() < 1e-12);
        let mut grid = f64::INFINITY;
        for i in 0..=100_000 {
            let x = i as f64 / 100_000.0;
            if x != f.c() {
                grid = grid.min(f.deriv(x).unwrap());
            }
        }
        assert!((grid - closed).abs() < 1e-9, "grid {grid} closed {closed}");
    }
}

#[test]
fn k1_nonflat_bounds() {
    let b = k1().nonflat_bounds();
    assert!((b.a - 1.10).abs() < 0.01, "a = {}", b.a);
    assert!((b.a - 1.0 / (0.6 * 0.5f64.powf(-0.6))).abs() < 1e-6);
    assert_eq!(b.expo_low, 0.4);
    assert!((b.expo_high - 0.4).abs() < 1e-15);
    assert_eq!(b.holder_c, 0.0);
    assert_eq!(b.holder_t, 1.0);
}

#[test]
fn sandwich_holds_down_to_1e_minus_12() {
    let quad = LorenzMap::with_charts(
        0.45,
        0.7,
        0.65,
        0.93,
        0.97,
        Chart::Quadratic { kappa: 0.15 },
        Chart::Quadratic { kappa: -0.2 },
    )
    .unwrap();
    for f in [k1(), k2(), LorenzMap::canonical(0.3, 0.8, 0.75, 0.9, 0.99).unwrap(), quad] {
        let b = f.nonflat_bounds();
        assert!(b.holder_c >= 0.0 && b.holder_t > 0.0 && b.holder_t <= 1.0);
        for side in [Side::Left, Side::Right] {
            let scale = f.branch_scale(side);
            for i in 0..1000 {
                let d = scale * 10f64.powf(-12.0 + 12.0 * i as f64 / 999.0);
                let x = f.c() + side.sign() * d;
                if (0.0..=1.0).contains(&x) {
                    assert!(b.sandwich_holds(&f, x), "{side} d = {d:e}");
                }
            }
        }
    }
}

#[test]
fn metric_examples() {
    let f = k1();
    assert_eq!(metric_dist(&f, &f, 200).unwrap(), 0.0);
    let g = f.with_d1(0.9).unwrap();
    let gap = lorenz_measures::map::singular_value_gap(&f, &g);
    assert!((gap - 0.1).abs() < 1e-15);
    // descriptor difference (1 - 0.9^{1/0.6}) u on [c, 1]: sup value + sup slope, no Hölder part
    let k = 1.0 - 0.9f64.powf(1.0 / 0.6);
    let full = metric_dist(&f, &g, 200).unwrap();
    assert!((full - (0.1 + k + 2.0 * k)).abs() < 1e-12, "full = {full}");
    assert_eq!(metric_dist(&g, &f, 200).unwrap(), full);
    let other = LorenzMap::canonical(0.45, 0.6, 0.6, 1.0, 1.0).unwrap();
    assert_eq!(metric_dist(&f, &other, 10), Err(Error::IncompatibleFamily));
}

#[test]
fn iterate_examples() {
    let f = k1();
    let rec = iterate(&f, 0.0, 10, DEFAULT_C_TOL).unwrap();
    assert_eq!(rec.points, vec![0.0; 11]);
    let rec = iterate(&f, 0.25, 2, DEFAULT_C_TOL).unwrap();
    assert_eq!(rec.points.len(), 3);
    assert!((rec.points[1] - 0.340246).abs() < 1e-6);
    assert!((rec.points[2] - 0.495700).abs() < 1e-6);
    assert_eq!(rec.points[2], f.eval(f.eval(0.25).unwrap()).unwrap());
    assert_eq!(rec.stop, Stop::Completed);
}

#[test]
fn iterate_truncates_on_budget() {
    let f = k1();
    let rec = iterate(&f, 0.1234, 10_000, DEFAULT_C_TOL).unwrap();
    assert_eq!(rec.stop, Stop::Budget);
    assert!(rec.error_budget <= DEFAULT_C_TOL / 10.0);
    assert!(rec.points.len() < 10_000);
}

#[test]
fn singular_orbit_examples() {
    let f = k1();
    let left = singular_orbit(&f, Side::Left, 20, DEFAULT_C_TOL).unwrap();
    assert!(left.record.points.iter().all(|&x| x == 1.0));
    assert_eq!(left.period, None);
    let right = singular_orbit(&f, Side::Right, 20, DEFAULT_C_TOL).unwrap();
    assert!(right.record.points.iter().all(|&x| x == 0.0));
    assert_eq!(right.period, None);

    let g = k2();
    let r = singular_orbit(&g, Side::Right, 50, DEFAULT_C_TOL).unwrap();
    assert_eq!(r.period, Some(5));
    let expected = [0.14912, 0.19143, 0.25144, 0.34251, 0.5];
    for (x, e) in r.record.points.iter().zip(expected) {
        assert!((x - e).abs() < 1e-4, "{x} vs {e}");
    }
}

#[test]
fn periodic_point_examples() {
    let f = k1();
    assert!(periodic_point(&f, &"L".parse().unwrap()).unwrap().abs() < 1e-13);
    assert!((periodic_point(&f, &"R".parse().unwrap()).unwrap() - 1.0).abs() < 1e-13);
    let p = periodic_point(&f, &"RL".parse().unwrap()).unwrap();
    let f1 = f.eval(p).unwrap();
    let f2 = f.eval(f1).unwrap();
    assert!(p > 0.5 && f1 < 0.5);
    assert!((f2 - p).abs() < 1e-10);
}

#[test]
fn periodic_point_rejects_collapse_onto_c() {
    // on K2 the cylinder of R L^4 shrinks onto the singular connection
    let g = k2();
    assert!(matches!(
        periodic_point(&g, &"RLLLL".parse().unwrap()),
        Err(Error::NoPeriodicPoint(_))
    ));
}

#[test]
fn extended_precision_periodic_point_survives_long_words() {
    let f = k1();
    let mut ext = ExtMap::new(f, 512).unwrap();
    let word: Itinerary = "RLLRLRRLRLLLRLRRRLLRLRLLRRLRLLLRLRLRRLLRLRLLRLRRLRLLRLRLRRLR".parse().unwrap();
    assert_eq!(word.len(), 60);
    let p = ext.periodic_point(&word).unwrap();
    let (sides, end) = ext.push(&p, word.len());
    let visited: Vec<Side> = sides.into_iter().map(|s| s.unwrap()).collect();
    assert_eq!(visited, word.symbols());
    assert!((to_f64(&end) - to_f64(&p)).abs() < 1e-8);
}
