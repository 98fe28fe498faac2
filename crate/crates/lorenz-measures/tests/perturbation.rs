use lorenz_measures::fixtures::{k1, k2, K2_D1};
use lorenz_measures::induced::{check_hypotheses, find_nice_interval};
use lorenz_measures::map::{sandwich_grid, singular_value_gap};
use lorenz_measures::orbit::{singular_orbit, DEFAULT_C_TOL};
use lorenz_measures::perturbation::{
    nearest_preimage_chain, shoot_for_connection, tune_both, tune_singular_orbit, Tuned, SHOOT_TOL,
};
use lorenz_measures::{Error, LorenzMap, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_in_family(f: &LorenzMap, g: &LorenzMap) {
    assert_eq!((g.c(), g.alpha(), g.beta()), (f.c(), f.alpha(), f.beta()));
    assert_eq!(g.apply(Side::Left, 0.0), 0.0);
    assert_eq!(g.apply(Side::Right, 1.0), 1.0);
    assert!(g.expansion_floor() > 1.0);
    let b = g.nonflat_bounds();
    for side in [Side::Left, Side::Right] {
        for d in sandwich_grid(0.5) {
            let x = g.c() + side.sign() * d;
            if (0.0..=1.0).contains(&x) && x != g.c() {
                assert!(b.sandwich_holds(g, x), "{side} {d:e}");
            }
        }
    }
}

fn assert_tuned(f: &LorenzMap, tuned: &Tuned, eps: f64) {
    assert_in_family(f, &tuned.map);
    assert!(tuned.delta < eps);
    assert_eq!(singular_value_gap(f, &tuned.map), tuned.delta);
    let again = singular_orbit(&tuned.map, tuned.side, 4096, DEFAULT_C_TOL).unwrap();
    assert_eq!(again.period, Some(tuned.t));
}

#[test]
fn right_chain_on_k1() {
    let chain = nearest_preimage_chain(&k1(), 1.0, Side::Right, 6).unwrap();
    assert_eq!(chain[0], (0, 0.5));
    let want = [0.65749, 0.74857, 0.80858, 0.85089, 0.88203, 0.90561];
    for (&(k, y), w) in chain[1..].iter().zip(want) {
        assert!((y - w).abs() < 1e-4, "k = {k}: {y}");
        // closed form of the right pullback on K1
        let prev = chain[k - 1].1;
        assert!((y - (0.5 + 0.5 * prev.powf(5.0 / 3.0))).abs() < 1e-12);
        let forward = (0..k).fold(y, |x, _| k1().apply(Side::Right, x));
        assert!((forward - 0.5).abs() < 1e-10);
    }
    for pair in chain.windows(2) {
        assert!((pair[1].1 - 1.0).abs() < (pair[0].1 - 1.0).abs());
    }
    assert_eq!(nearest_preimage_chain(&k1(), 1.0, Side::Right, 0).unwrap(), vec![(0, 0.5)]);
}

#[test]
fn chain_not_approaching_target_is_an_error() {
    assert!(matches!(
        nearest_preimage_chain(&k1(), 0.0, Side::Right, 5),
        Err(Error::ChainNotFound { .. })
    ));
}

#[test]
fn left_tuning_of_k1() {
    let f = k1();
    let tuned = tune_singular_orbit(&f, Side::Left, 0.1, 40).unwrap();
    assert!((tuned.map.d0() - 0.90561).abs() < 1e-4);
    assert_eq!(tuned.t, 7);
    assert!(!tuned.shot);
    assert!(tuned.residual < 1e-9);
    assert!((tuned.expansion_floor - 1.0867).abs() < 1e-3);
    assert_tuned(&f, &tuned, 0.1);

    let left = nearest_preimage_chain(&tuned.map, 0.0, Side::Left, 30).unwrap();
    assert!((left[1].1 - 0.36890).abs() < 1e-4);
    assert!(left.windows(2).all(|p| p[1].1 < p[0].1));
}

#[test]
fn non_positive_eps_is_infeasible() {
    for eps in [0.0, -0.1, f64::NAN] {
        assert!(matches!(
            tune_singular_orbit(&k1(), Side::Left, eps, 40),
            Err(Error::Infeasible { .. })
        ));
    }
}

#[test]
fn tuned_connection_survives_retuning() {
    let tuned = tune_singular_orbit(&k1(), Side::Left, 0.1, 40).unwrap();
    let shot = shoot_for_connection(&tuned.map, Side::Left, tuned.t, (0.85, 0.95)).unwrap();
    assert_eq!(shot, tuned.map);
}

#[test]
fn double_tuning_enters_the_hypothesis_set() {
    let f = k1();
    let both = tune_both(&f, 0.2, 0.03, 60).unwrap();
    assert!(both.residual_left < 1e-9 && both.residual_right < 1e-9);
    assert!(both.expansion_floor > 1.0);
    assert_in_family(&f, &both.map);
    let h = check_hypotheses(&both.map, 0.15).unwrap();
    assert_eq!(h.t0, both.t_right);
    assert_eq!(h.c_minus_hit, Some(both.t_left));
    let least = h.c_minus_min_above.unwrap();
    assert!(least >= both.map.c() + 0.15, "{least}");
    // a cap beyond the least point of the c- orbit above c is rejected
    assert!(matches!(
        check_hypotheses(&both.map, least - both.map.c() + 1e-3),
        Err(Error::Inapplicable(_))
    ));
    find_nice_interval(&both.map, 0.15, 12).unwrap();
}

#[test]
fn shooting_recovers_k2() {
    let f = LorenzMap::canonical(0.5, 0.6, 0.6, 1.0, 1.0).unwrap();
    let g = shoot_for_connection(&f, Side::Right, 5, (0.84, 0.86)).unwrap();
    assert!((g.d1() - 0.85088).abs() < 1e-4);
    assert!((g.d1() - K2_D1).abs() < 1e-12);
    let orbit = singular_orbit(&g, Side::Right, 50, DEFAULT_C_TOL).unwrap();
    assert_eq!(orbit.period, Some(5));
    let x4 = orbit.record.points[3];
    assert!((g.apply(Side::Left, x4) - 0.5).abs() < SHOOT_TOL);
    for (x, w) in orbit.record.points.iter().zip([0.14912, 0.19143, 0.25144, 0.34251, 0.5]) {
        assert!((x - w).abs() < 1e-4);
    }
}

#[test]
fn shooting_k2_is_idempotent() {
    assert_eq!(shoot_for_connection(&k2(), Side::Right, 5, (0.834, 1.0)).unwrap(), k2());
}

#[test]
fn shooting_for_an_infeasible_time_is_a_bracket_error() {
    assert!(matches!(
        shoot_for_connection(&k2(), Side::Right, 2, (0.834, 1.0)),
        Err(Error::Bracket(_))
    ));
    // d0 below the fifth right preimage of c sends the orbit across c early
    let err = shoot_for_connection(&k1(), Side::Left, 7, (0.84, 1.0)).unwrap_err();
    assert!(matches!(&err, Error::Bracket(m) if m.contains("itinerary")), "{err}");
    assert!(shoot_for_connection(&k1(), Side::Left, 7, (0.89, 1.0)).is_ok());
}

#[test]
fn random_maps_tune_at_every_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut maps = Vec::new();
    while maps.len() < 5 {
        let d0 = rng.random_range(0.75..1.0);
        let d1 = rng.random_range(0.75..1.0);
        if let Ok(m) = LorenzMap::canonical(0.5, 0.6, 0.6, d0, d1) {
            maps.push(m);
        }
    }
    for f in &maps {
        for eps in [0.2, 0.1, 0.05] {
            for side in [Side::Left, Side::Right] {
                let tuned = tune_singular_orbit(f, side, eps, 60)
                    .unwrap_or_else(|e| panic!("d0 = {}, d1 = {}, eps = {eps}: {e}", f.d0(), f.d1()));
                assert_tuned(f, &tuned, eps);
            }
        }
    }
}

#[test]
fn shooting_fallback_on_a_narrow_window() {
    let f = LorenzMap::canonical(0.5, 0.6, 0.6, 0.8468, 0.8878).unwrap();
    let chain_only = tune_singular_orbit(&f, Side::Left, 0.01, 40).unwrap();
    assert!(!chain_only.shot);
    let tuned = tune_singular_orbit(&f, Side::Left, 0.002, 40).unwrap();
    assert!(tuned.shot);
    assert_tuned(&f, &tuned, 0.002);
}
