use std::sync::OnceLock;

use lorenz_measures::ext::{to_f64, ExtMap};
use lorenz_measures::fixtures::{k1, k2};
use lorenz_measures::induced::{cylinder_tower, enumerate_return_branches, find_nice_interval, CylinderTower};
use lorenz_measures::map::{sandwich_grid, singular_value_gap};
use lorenz_measures::measures::{base_measure, entropy_term, mass_distribution, BaseMeasure};
use lorenz_measures::orbit::{iterate, periodic_point, singular_orbit, Itinerary, Stop, DEFAULT_C_TOL};
use lorenz_measures::perturbation::tune_singular_orbit;
use lorenz_measures::recurrence::{
    birkhoff_recurrence, bound_period, distortion_check, truncated_dist, OrbitMode, DEFAULT_DELTA,
};
use lorenz_measures::{metric_dist, Chart, Error, LorenzMap, Side};
use proptest::prelude::*;

fn arb_chart() -> impl Strategy<Value = Chart> {
    prop_oneof![
        Just(Chart::Affine),
        (-0.3..0.3f64).prop_map(|kappa| Chart::Quadratic { kappa }),
    ]
}

/// Expanding maps of the family, charts included.
fn arb_map() -> impl Strategy<Value = LorenzMap> {
    (
        0.35..0.65f64,
        0.4..0.9f64,
        0.4..0.9f64,
        0.75..=1.0f64,
        0.75..=1.0f64,
        arb_chart(),
        arb_chart(),
    )
        .prop_filter_map("not expanding", |(c, a, b, d0, d1, p0, p1)| {
            LorenzMap::with_charts(c, a, b, d0, d1, p0, p1).ok()
        })
}

/// Three expanding maps sharing `(c, alpha, beta)`.
fn arb_family_triple() -> impl Strategy<Value = [LorenzMap; 3]> {
    let base = (0.35..0.65f64, 0.4..0.9f64, 0.4..0.9f64)
        .prop_filter("not expanding at d = 0.9", |&(c, a, b)| LorenzMap::canonical(c, a, b, 0.9, 0.9).is_ok());
    base.prop_flat_map(|(c, a, b)| {
        let member = || (0.9..=1.0f64, 0.9..=1.0f64, arb_chart(), arb_chart());
        (member(), member(), member()).prop_filter_map("not expanding", move |(f, g, h)| {
            let make = |(d0, d1, p0, p1): (f64, f64, Chart, Chart)| LorenzMap::with_charts(c, a, b, d0, d1, p0, p1).ok();
            Some([make(f)?, make(g)?, make(h)?])
        })
    })
}

fn fixtures() -> [LorenzMap; 3] {
    [
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
    ]
}

fn point_on(map: &LorenzMap, side: Side, u: f64) -> f64 {
    map.c() + side.sign() * u * map.branch_scale(side)
}

fn side_strategy() -> impl Strategy<Value = Side> {
    prop_oneof![Just(Side::Left), Just(Side::Right)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inverse_branch_round_trip(map in arb_map(), us in prop::collection::vec(1e-9..1.0f64, 100)) {
        for side in [Side::Left, Side::Right] {
            for &u in &us {
                let x = point_on(&map, side, u);
                let y = map.eval_side(x, side).unwrap();
                let back = map.inverse_branch(side, y).unwrap();
                prop_assert!((back - x).abs() < 1e-10, "{side} x = {x}, back = {back}");
            }
        }
    }

    #[test]
    fn derivative_stays_above_the_expansion_floor(map in arb_map()) {
        let floor = map.expansion_floor();
        prop_assert!(floor > 1.0);
        for side in [Side::Left, Side::Right] {
            for i in 0..=2000 {
                let u = (i as f64 / 2000.0).max(1e-12);
                let x = point_on(&map, side, u);
                prop_assert!(map.slope(side, x) >= floor * (1.0 - 1e-12), "{side} u = {u}");
            }
        }
    }

    #[test]
    fn truncated_distance_is_monotone_then_one(c in 0.1..0.9f64, delta in 1e-3..0.5f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a * delta, b * delta) } else { (b * delta, a * delta) };
        for sign in [-1.0, 1.0] {
            let t_lo = truncated_dist(c + sign * lo, c, delta);
            let t_hi = truncated_dist(c + sign * hi, c, delta);
            prop_assert!(t_lo <= t_hi);
            prop_assert!(t_hi <= delta * (1.0 + 1e-12));
            let beyond = delta * (1.0 + 1e-9) + b * (1.0 - delta);
            prop_assert_eq!(truncated_dist(c + sign * beyond, c, delta), 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sandwich_holds_down_to_tiny_offsets(map in arb_map()) {
        let b = map.nonflat_bounds();
        for side in [Side::Left, Side::Right] {
            for d in sandwich_grid(map.branch_scale(side)) {
                let x = map.c() + side.sign() * d;
                prop_assert!(b.sandwich_holds(&map, x), "{side} |x - c| = {d:e}");
            }
        }
    }

    #[test]
    fn metric_is_a_pseudometric([f, g, h] in arb_family_triple()) {
        let d = |a: &LorenzMap, b: &LorenzMap| metric_dist(a, b, 200).unwrap();
        prop_assert_eq!(d(&f, &f), 0.0);
        prop_assert_eq!(d(&f, &g), d(&g, &f));
        prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-12);
        prop_assert!(d(&f, &g) >= singular_value_gap(&f, &g));
    }
}

fn arb_word(max_len: usize) -> impl Strategy<Value = Itinerary> {
    prop::collection::vec(side_strategy(), 1..=max_len).prop_filter_map("not primitive", |s| {
        Itinerary::new(s).ok().filter(Itinerary::is_primitive)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn long_periodic_words_are_backward_stable(word in arb_word(60)) {
        let mut ext = ExtMap::new(k1(), 512).unwrap();
        let p = match ext.periodic_point(&word) {
            Ok(p) => p,
            // words whose cylinder collapses onto c have no periodic point
            Err(Error::NoPeriodicPoint(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let (sides, end) = ext.push(&p, word.len());
        let visited: Vec<Option<Side>> = word.symbols().iter().map(|&s| Some(s)).collect();
        prop_assert_eq!(sides, visited);
        prop_assert!((to_f64(&end) - to_f64(&p)).abs() < 1e-8);
    }

    #[test]
    fn budgeted_iteration_agrees_with_extended_precision(x0 in 0.0..1.0f64, n in 1usize..200) {
        let f = k1();
        let rec = iterate(&f, x0, n, DEFAULT_C_TOL).unwrap();
        let mut ext = ExtMap::new(f, 256).unwrap();
        let reference = ext.iterate(x0, rec.points.len() - 1);
        for (a, b) in rec.points.iter().zip(&reference) {
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn short_periodic_words_reproduce_their_itinerary(word in arb_word(10)) {
        let f = k1();
        let Ok(p) = periodic_point(&f, &word) else { return Ok(()) };
        let rec = iterate(&f, p, word.len(), DEFAULT_C_TOL).unwrap();
        // a budget stop is honest; only the produced prefix is checked
        let n = rec.itinerary.len().min(word.len());
        prop_assert_eq!(&rec.itinerary[..n], &word.symbols()[..n]);
        if rec.stop == Stop::Completed {
            prop_assert!((rec.points[word.len()] - p).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bound_period_zero_iff_first_step_separates(which in 0usize..3, side in side_strategy(), u in 1e-6..1.0f64) {
        let f = &fixtures()[which];
        let p = point_on(f, side, u);
        let sv = f.singular_value(side);
        let threshold = DEFAULT_DELTA * (sv - f.c()).abs();
        let sep = (f.apply(side, p) - sv).abs();
        prop_assume!((sep - threshold).abs() > 1e-9 * (1.0 + threshold));
        match bound_period(f, p, DEFAULT_DELTA, 200) {
            Ok(m) => prop_assert_eq!(m.m == 0, sep >= threshold),
            Err(Error::Budget(_)) => prop_assert!(sep < threshold),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn distortion_ratio_never_exceeds_bound(which in 0usize..3, x in 0.0..1.0f64, rel in -0.49..0.49f64, n in 1usize..30) {
        let f = &fixtures()[which];
        let y = x + rel * (x - f.c()).abs() * 1e-3;
        prop_assume!((0.0..=1.0).contains(&y) && x != f.c());
        match distortion_check(f, x, y, n) {
            Ok(d) => prop_assert!(d.ratio <= d.bound * (1.0 + 1e-12), "{} > {}", d.ratio, d.bound),
            Err(Error::Precondition { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lyapunov_average_stays_in_its_sandwich(which in 0usize..3, x0 in 0.0..1.0f64, n in 10usize..3000) {
        let f = &fixtures()[which];
        prop_assume!(x0 != f.c());
        let r = birkhoff_recurrence(f, x0, n, DEFAULT_DELTA, OrbitMode::Shadow);
        match r {
            Ok(r) => prop_assert_eq!(r.sandwich_violations, 0),
            // the shadow orbit cannot be continued through c
            Err(Error::Singularity) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn tuning_stays_in_the_family_and_is_idempotent(
        f in (0.8..1.0f64, 0.8..1.0f64).prop_filter_map("not expanding", |(d0, d1)| {
            LorenzMap::canonical(0.5, 0.6, 0.6, d0, d1).ok()
        }),
        side in side_strategy(),
        eps in 0.05..0.2f64,
    ) {
        let t = tune_singular_orbit(&f, side, eps, 60).unwrap();
        prop_assert!(t.delta < eps);
        prop_assert_eq!(singular_value_gap(&f, &t.map), t.delta);
        prop_assert!(t.map.expansion_floor() > 1.0);
        prop_assert_eq!((t.map.c(), t.map.alpha(), t.map.beta()), (f.c(), f.alpha(), f.beta()));
        prop_assert_eq!(singular_orbit(&t.map, side, 4096, DEFAULT_C_TOL).unwrap().period, Some(t.t));
    }
}

fn k2_tower() -> &'static (CylinderTower, BaseMeasure) {
    static TOWER: OnceLock<(CylinderTower, BaseMeasure)> = OnceLock::new();
    TOWER.get_or_init(|| {
        let map = k2();
        let j = find_nice_interval(&map, 0.1, 12).unwrap();
        let set = enumerate_return_branches(&map, &j, 16).unwrap();
        let tower = cylinder_tower(&map, &j, &set, 30).unwrap();
        let base = base_measure(&tower).unwrap();
        (tower, base)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_distributions_are_normalized_and_entropy_bounded(ell in 0usize..8, alpha in 0.05..0.95f64) {
        let (tower, base) = k2_tower();
        let m = mass_distribution(base, tower, ell, alpha).unwrap();
        let total = m.total().unwrap();
        prop_assert!((total.value - 1.0).abs() <= total.error, "{total:?}");
        let head_base: f64 = tower
            .atoms
            .iter()
            .zip(&base.weights)
            .filter(|(a, _)| a.level <= ell)
            .map(|(_, &w)| entropy_term(w))
            .sum();
        let h = m.entropy().unwrap();
        prop_assert!(h.value <= head_base + m.bound_c().unwrap() + h.error + 1e-12);
        prop_assert!(m.int_rc().value.is_finite());
        prop_assert!(!m.tail.second_moment_finite());
    }
}
