use lorenz_measures::fixtures::{k1, k2};
use lorenz_measures::induced::{
    check_hypotheses, cylinder_tower, enumerate_return_branches, find_nice_interval, periodic_orbit,
    NiceInterval,
};
use lorenz_measures::orbit::periodic_point;
use lorenz_measures::{Error, Side};

fn k2_interval() -> NiceInterval {
    find_nice_interval(&k2(), 0.1, 12).unwrap()
}

#[test]
fn gate_rejects_maps_without_singular_connection() {
    assert!(matches!(check_hypotheses(&k1(), 0.1), Err(Error::Inapplicable(_))));
    let h = check_hypotheses(&k2(), 0.1).unwrap();
    assert_eq!(h.t0, 5);
    assert_eq!(h.c_plus_orbit.len(), 4);
}

#[test]
fn k2_nice_interval() {
    let f = k2();
    let j = k2_interval();
    assert_eq!(j.word.to_string(), "RL");
    assert!((j.p - 0.552_450_808_972_212_7).abs() < 1e-12);
    assert!((f.apply(Side::Left, f.apply(Side::Right, j.p)) - j.p).abs() < 1e-12);
    j.validate(&f).unwrap();
    // tighter caps need longer words
    assert_eq!(find_nice_interval(&f, 0.02, 8).unwrap().word.to_string(), "RLL");
    assert_eq!(find_nice_interval(&f, 0.005, 8).unwrap().word.to_string(), "RLLL");
    assert!(matches!(find_nice_interval(&f, 0.005, 3), Err(Error::SearchExhausted(3))));
}

#[test]
fn k2_return_branches_are_markov() {
    let f = k2();
    let j = k2_interval();
    let set = enumerate_return_branches(&f, &j, 40).unwrap();
    let left = set.leftmost().unwrap();
    assert_eq!(left.word.to_string(), "RLLLL");
    assert_eq!(left.r, 5);
    assert_eq!(left.interval.0, f.c());
    assert_eq!(&set.counts[..12], &[0, 0, 1, 1, 2, 3, 4, 6, 10, 16, 26, 42]);
    // from R = 6 on the counts follow the Fibonacci recursion
    for r in 8..=40 {
        assert_eq!(set.counts[r], set.counts[r - 1] + set.counts[r - 2]);
    }
    assert!(set.complete_through >= 20);
    assert!(set.max_image_error < 1e-8);
    for pair in set.branches.windows(2) {
        assert!(pair[0].interval.1 <= pair[1].interval.0);
    }
    assert!(set.covered_length <= j.p - f.c());
}

#[test]
fn returns_precede_the_singular_connection_on_k2() {
    // J = (c, p) from the word RL has returns at R = 2, 3, 4 < t0
    let set = enumerate_return_branches(&k2(), &k2_interval(), 4).unwrap();
    assert_eq!(set.branches.len(), 4);
    assert!(set.branches.iter().all(|b| b.r < 5));
}

#[test]
fn covered_length_grows_with_return_cap() {
    let f = k2();
    let j = k2_interval();
    let mut prev = 0.0;
    for r in [6, 10, 14, 18, 22] {
        let cov = enumerate_return_branches(&f, &j, r).unwrap().covered_length;
        assert!(cov > prev);
        prev = cov;
    }
    assert!(prev < j.p - f.c());
}

#[test]
fn non_nice_endpoint_breaks_markov_property() {
    let f = k2();
    // the orbit of this periodic point re-enters (c, p)
    let word = "RLRLL".parse().unwrap();
    let p = periodic_point(&f, &word).unwrap();
    let orbit = periodic_orbit(&f, &word, p);
    assert!(orbit.iter().any(|&x| x > f.c() && x < p));
    let j = NiceInterval {
        p,
        word,
        r_cap: 0.5,
        orbit,
    };
    assert!(j.validate(&f).is_err());
    assert!(matches!(
        enumerate_return_branches(&f, &j, 20),
        Err(Error::MarkovViolation { .. })
    ));
}

#[test]
fn k2_cylinder_tower() {
    let f = k2();
    let j = k2_interval();
    let set = enumerate_return_branches(&f, &j, 16).unwrap();
    let tower = cylinder_tower(&f, &j, &set, 30).unwrap();
    assert_eq!(tower.t0, 5);
    assert_eq!(tower.ln_widths[0], (j.p - f.c()).ln());
    assert_eq!(tower.q, set.leftmost().unwrap().interval.1);
    let g = tower.leftmost_return().unwrap();
    assert!((g.ln_inverse(tower.ln_widths[0]) - tower.ln_widths[1]).abs() < 1e-9);
    // strictly nested and super-geometric: log widths convex decreasing
    for w in tower.ln_widths.windows(3) {
        assert!(w[1] < w[0] && w[2] < w[1]);
        assert!(w[0] - w[1] < w[1] - w[2]);
    }
    assert_eq!(tower.below_double_from, Some(9));
    assert!(tower.log_distance_slope() > 0.0);
    assert_eq!(tower.exactness_failures(1000, 11), 0);
    assert!(tower.max_endpoint_error < 1e-8);
    // R_c is 1 off P_1(c) and n + 1 on level n
    assert_eq!(tower.level_of((0.5 * (tower.q + j.p) - f.c()).ln()), Some(0));
    assert_eq!(tower.level_of(tower.ln_widths[3] - 1e-9), Some(3));
    assert_eq!(tower.level_of((j.p - f.c()).ln() + 1e-9), None);
    let atoms_per_level = set.branches.len() - 1;
    assert_eq!(tower.atoms.len(), atoms_per_level * 31);
    for a in &tower.atoms {
        assert_eq!(a.rc, a.level as u64 + 1);
        assert!(a.ln_lo < a.ln_hi);
        let tol = 1e-12 * tower.ln_widths[a.level].abs();
        assert!(a.ln_hi <= tower.ln_widths[a.level] + tol);
        if a.level < tower.depth() {
            assert!(a.ln_lo >= tower.ln_widths[a.level + 1] - tol);
        }
    }
}

#[test]
fn no_return_precedes_the_connection_when_p_follows_c_plus() {
    let f = k2();
    let word = "RLLLLR".parse().unwrap();
    let p = periodic_point(&f, &word).unwrap();
    let orbit = periodic_orbit(&f, &word, p);
    let j = NiceInterval {
        p,
        word,
        r_cap: 0.01,
        orbit,
    };
    j.validate(&f).unwrap();
    let early = enumerate_return_branches(&f, &j, 4).unwrap();
    assert!(early.branches.is_empty());
    assert_eq!(early.total(), 0);
    let later = enumerate_return_branches(&f, &j, 12).unwrap();
    assert_eq!(later.leftmost().unwrap().r, 5);
}

#[test]
fn sub_ulp_branches_on_a_doubly_tuned_map_stay_ordered() {
    // at R = 25 a real branch narrower than an ulp collapses onto the left
    // end of J and must not be mistaken for an overlap
    let g = lorenz_measures::perturbation::tune_both(&k1(), 0.2, 0.03, 60).unwrap().map;
    let j = find_nice_interval(&g, 0.15, 12).unwrap();
    assert_eq!(j.word.to_string(), "RL");
    let set = enumerate_return_branches(&g, &j, 30).unwrap();
    assert!(set.branches.iter().any(|b| b.interval.0 == b.interval.1));
    assert!(set.max_image_error < 1e-8, "{}", set.max_image_error);
}
