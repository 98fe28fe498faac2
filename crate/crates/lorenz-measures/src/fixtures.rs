//! Reference maps.

use crate::map::LorenzMap;

/// `f(c+) = 1 - d1` reaches `c` after five steps of the family
/// `c = 0.5, alpha = beta = 0.6, d0 = 1`.
pub const K2_D1: f64 = 0.850_888_842_001_398_2;

/// `c = 0.5, alpha = beta = 0.6, d0 = d1 = 1`: both singular values are fixed endpoints.
pub fn k1() -> LorenzMap {
    LorenzMap::canonical(0.5, 0.6, 0.6, 1.0, 1.0).expect("valid parameters")
}

/// [`k1`] with `d1` tuned so the right singular orbit hits `c` at `t0 = 5`.
pub fn k2() -> LorenzMap {
    LorenzMap::canonical(0.5, 0.6, 0.6, 1.0, K2_D1).expect("valid parameters")
}
