//! Moving a singular value onto a preimage of `c` so that the singular
//! orbit lands on `c`, staying inside the parametric family.
//!
//! The preimage chain lives in the branch opposite to the tuned singular
//! value, so retuning does not move the chain.

use crate::error::{Error, Result};
use crate::map::{metric_dist, LorenzMap, Side};
use crate::orbit::{singular_orbit, DEFAULT_C_TOL};

/// Grid used for reported metric distances.
pub const METRIC_GRID: usize = 400;
/// Residual at which a shot connection is accepted.
pub const SHOOT_TOL: f64 = 1e-12;
/// Verification tolerance for tuned connections.
pub const VERIFY_TOL: f64 = 1e-9;

/// `(k, y_k)` with `y_0 = c` and `y_k` the `k`-fold pullback of `c` along
/// the constant word `side`, while the distance to `target` decreases.
pub fn nearest_preimage_chain(map: &LorenzMap, target: f64, side: Side, depth_max: usize) -> Result<Vec<(usize, f64)>> {
    let c = map.c();
    let mut chain = vec![(0, c)];
    let (a, b) = map.image(side);
    let mut y = c;
    for k in 1..=depth_max {
        if !(a..=b).contains(&y) {
            return Err(Error::ChainNotFound { target, depth: k });
        }
        let next = map.pull(side, y);
        if (next - target).abs() >= (y - target).abs() {
            return Err(Error::ChainNotFound { target, depth: k });
        }
        y = next;
        chain.push((k, y));
    }
    Ok(chain)
}

/// `f^k(y) - c` by forward iteration along `side`.
fn chain_residual(map: &LorenzMap, side: Side, y: f64, k: usize) -> f64 {
    (0..k).fold(y, |x, _| map.apply(side, x)) - map.c()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub map: LorenzMap,
    pub side: Side,
    /// Hit time: `g^t(c_side) = c`.
    pub t: usize,
    pub residual: f64,
    /// Change of the tuned singular value.
    pub delta: f64,
    pub metric_dist: f64,
    pub expansion_floor: f64,
    /// The connection came from shooting rather than a constant-word chain.
    pub shot: bool,
}

fn singular_param(map: &LorenzMap, side: Side) -> f64 {
    match side {
        Side::Left => map.d0(),
        Side::Right => map.d1(),
    }
}

fn with_param(map: &LorenzMap, side: Side, d: f64) -> Result<LorenzMap> {
    match side {
        Side::Left => map.with_d0(d),
        Side::Right => map.with_d1(d),
    }
}

/// Parameter value putting the singular value of `side` at `y`.
fn param_for_value(side: Side, y: f64) -> f64 {
    match side {
        Side::Left => y,
        Side::Right => 1.0 - y,
    }
}

/// `|g^t(c_side) - c|` with the singular-orbit check of the hit time.
fn verify(map: &LorenzMap, side: Side) -> Result<(usize, f64)> {
    let orbit = singular_orbit(map, side, 4096, DEFAULT_C_TOL)?;
    let t = orbit
        .period
        .ok_or_else(|| Error::Inapplicable(format!("the {side} singular orbit misses c")))?;
    let hit = orbit.record.points[t - 1];
    Ok((t, (hit - map.c()).abs()))
}

fn finish(original: &LorenzMap, tuned: LorenzMap, side: Side, shot: bool) -> Result<Tuned> {
    let (t, residual) = verify(&tuned, side)?;
    if residual > VERIFY_TOL {
        return Err(Error::Inapplicable(format!("connection residual {residual:e}")));
    }
    Ok(Tuned {
        side,
        t,
        residual,
        delta: (singular_param(&tuned, side) - singular_param(original, side)).abs(),
        metric_dist: metric_dist(original, &tuned, METRIC_GRID)?,
        expansion_floor: tuned.expansion_floor(),
        map: tuned,
        shot,
    })
}

/// Moves the singular value of `side` by less than `eps` onto a preimage of
/// `c`. Constant-word chains in the opposite branch are tried first (their
/// targets are the fixed endpoints); otherwise the singular value is shot
/// for a connection at increasing hit times inside the `eps`-window.
pub fn tune_singular_orbit(map: &LorenzMap, side: Side, eps: f64, depth_max: usize) -> Result<Tuned> {
    let infeasible = || Error::Infeasible { eps, depth: depth_max };
    if !(eps > 0.0) {
        return Err(infeasible());
    }
    let chain_side = side.opposite();
    let current = map.singular_value(side);
    let target = match chain_side {
        Side::Left => 0.0,
        Side::Right => 1.0,
    };
    if let Ok(chain) = nearest_preimage_chain(map, target, chain_side, depth_max) {
        for &(k, y) in chain.iter().skip(1) {
            if (y - current).abs() >= eps {
                continue;
            }
            let Ok(tuned) = with_param(map, side, param_for_value(side, y)) else { continue };
            if chain_residual(&tuned, chain_side, y, k).abs() > 1e-10 {
                continue;
            }
            if let Ok(t) = finish(map, tuned, side, false) {
                return Ok(t);
            }
        }
    }
    let d = singular_param(map, side);
    let lo = (d - eps).max(f64::MIN_POSITIVE);
    let hi = (d + eps).min(1.0);
    for t in 2..=depth_max {
        if let Some(tuned) = shoot_in_window(map, side, t, lo, hi, d)? {
            if let Ok(done) = finish(map, tuned, side, true) {
                if done.t == t && done.delta < eps {
                    return Ok(done);
                }
            }
        }
    }
    Err(infeasible())
}

/// Samples in a shooting window.
const WINDOW_SAMPLES: usize = 256;

struct Shot {
    /// `f^{t-1}(singular value) - c`.
    value: f64,
    /// Sides of the singular value and its first `t - 2` images.
    itinerary: Vec<Side>,
}

/// `None` when the map is not admissible at this parameter or the orbit
/// meets `c` early.
fn shot(map: &LorenzMap, side: Side, t: usize, d: f64) -> Option<Shot> {
    let g = with_param(map, side, d).ok()?;
    let mut x = g.singular_value(side);
    let mut itinerary = Vec::with_capacity(t);
    for _ in 0..t - 1 {
        let s = g.side_of(x)?;
        itinerary.push(s);
        x = g.apply(s, x);
    }
    Some(Shot {
        value: x - g.c(),
        itinerary,
    })
}

/// Root of the shot function on `[a, b]` with constant itinerary.
fn bisect(map: &LorenzMap, side: Side, t: usize, mut a: f64, mut b: f64, fa: f64) -> Option<(f64, f64)> {
    let mut sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = shot(map, side, t, m)?.value;
        if fm.abs() < SHOOT_TOL {
            return Some((m, fm));
        }
        if m <= a || m >= b {
            return Some((m, fm));
        }
        if fm.signum() == sa {
            a = m;
            sa = fm.signum();
        } else {
            b = m;
        }
    }
    None
}

fn shoot_in_window(map: &LorenzMap, side: Side, t: usize, lo: f64, hi: f64, prefer: f64) -> Result<Option<LorenzMap>> {
    let grid: Vec<f64> = (0..=WINDOW_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / WINDOW_SAMPLES as f64)
        .collect();
    let shots: Vec<Option<Shot>> = grid.iter().map(|&d| shot(map, side, t, d)).collect();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..WINDOW_SAMPLES {
        let (Some(a), Some(b)) = (&shots[i], &shots[i + 1]) else { continue };
        if a.itinerary != b.itinerary || a.value.signum() == b.value.signum() {
            continue;
        }
        if let Some((root, res)) = bisect(map, side, t, grid[i], grid[i + 1], a.value) {
            if res.abs() < SHOOT_TOL && best.is_none_or(|(r, _)| (root - prefer).abs() < (r - prefer).abs()) {
                best = Some((root, res));
            }
        }
    }
    best.map(|(root, _)| with_param(map, side, root)).transpose()
}

/// Bisection on the tuned parameter of `side` for `f^{t_target}(c_side) = c`
/// inside `bracket`, which must keep the itinerary constant and show one
/// sign change.
pub fn shoot_for_connection(map: &LorenzMap, side: Side, t_target: usize, bracket: (f64, f64)) -> Result<LorenzMap> {
    if t_target < 1 {
        return Err(Error::InvalidArgument("hit time must be at least 1".into()));
    }
    if let Ok((t, res)) = verify(map, side) {
        if t == t_target && res < SHOOT_TOL {
            return Ok(*map);
        }
    }
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(Error::Bracket(format!("empty bracket [{lo}, {hi}]")));
    }
    if t_target == 1 {
        let d = param_for_value(side, map.c());
        return if (lo..=hi).contains(&d) {
            with_param(map, side, d)
        } else {
            Err(Error::Bracket(format!("f(c_side) = c needs parameter {d}")))
        };
    }
    let grid: Vec<f64> = (0..=WINDOW_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / WINDOW_SAMPLES as f64)
        .collect();
    let mut shots = Vec::with_capacity(grid.len());
    for &d in &grid {
        let s = shot(map, side, t_target, d).ok_or_else(|| {
            Error::Bracket(format!("parameter {d} is not admissible or its orbit meets c early"))
        })?;
        shots.push(s);
    }
    for (i, pair) in shots.windows(2).enumerate() {
        if pair[0].itinerary != pair[1].itinerary {
            return Err(Error::Bracket(format!(
                "itinerary changes between {} and {}",
                grid[i],
                grid[i + 1]
            )));
        }
    }
    let (f_lo, f_hi) = (shots[0].value, shots[WINDOW_SAMPLES].value);
    if f_lo == 0.0 {
        return with_param(map, side, lo);
    }
    if f_hi == 0.0 {
        return with_param(map, side, hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket(format!(
            "no sign change of f^{t_target}(c_side) - c on [{lo}, {hi}]"
        )));
    }
    let (root, res) =
        bisect(map, side, t_target, lo, hi, f_lo).ok_or_else(|| Error::Bracket("bisection left the family".into()))?;
    if res.abs() >= SHOOT_TOL {
        return Err(Error::Bracket(format!("bisection stalled at residual {res:e}")));
    }
    with_param(map, side, root)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoublyTuned {
    pub map: LorenzMap,
    pub t_left: usize,
    pub t_right: usize,
    pub residual_left: f64,
    pub residual_right: f64,
    pub metric_dist: f64,
    pub expansion_floor: f64,
    pub iterations: usize,
}

/// Both singular values onto preimages of `c`: `d0 = y^R_k(d1)` and
/// `1 - d1 = y^L_j(d0)` solved jointly, each chain in the opposite branch.
/// Depth pairs are tried with `k` then `j` increasing; the first pair whose
/// joint solution stays within both windows wins.
pub fn tune_both(map: &LorenzMap, eps_left: f64, eps_right: f64, depth_max: usize) -> Result<DoublyTuned> {
    let infeasible = || Error::Infeasible {
        eps: eps_left.min(eps_right),
        depth: depth_max,
    };
    if !(eps_left > 0.0 && eps_right > 0.0) {
        return Err(infeasible());
    }
    for k in 1..=depth_max {
        for j in 1..=depth_max {
            let Some((g, iterations)) = joint_fixed_point(map, k, j) else { continue };
            if (g.d0() - map.d0()).abs() >= eps_left || (g.d1() - map.d1()).abs() >= eps_right {
                continue;
            }
            let (Ok((t_left, residual_left)), Ok((t_right, residual_right))) =
                (verify(&g, Side::Left), verify(&g, Side::Right))
            else {
                continue;
            };
            if residual_left > VERIFY_TOL || residual_right > VERIFY_TOL {
                continue;
            }
            return Ok(DoublyTuned {
                t_left,
                t_right,
                residual_left,
                residual_right,
                metric_dist: metric_dist(map, &g, METRIC_GRID)?,
                expansion_floor: g.expansion_floor(),
                map: g,
                iterations,
            });
        }
    }
    Err(infeasible())
}

/// Alternating substitution; each half-step moves one singular value onto
/// the chain of the other branch, which the other half-step then perturbs.
fn joint_fixed_point(map: &LorenzMap, k: usize, j: usize) -> Option<(LorenzMap, usize)> {
    let mut g = *map;
    for it in 1..=500 {
        let g1 = g.with_d0(nth_preimage(&g, Side::Right, k).ok()?).ok()?;
        let g2 = g1.with_d1(1.0 - nth_preimage(&g1, Side::Left, j).ok()?).ok()?;
        let moved = (g2.d0() - g.d0()).abs() + (g2.d1() - g.d1()).abs();
        g = g2;
        if moved < 1e-15 {
            return Some((g, it));
        }
    }
    Some((g, 500))
}

fn nth_preimage(map: &LorenzMap, side: Side, k: usize) -> Result<f64> {
    let (a, b) = map.image(side);
    let mut y = map.c();
    for depth in 1..=k {
        if !(a..=b).contains(&y) {
            return Err(Error::ChainNotFound { target: y, depth });
        }
        y = map.pull(side, y);
    }
    Ok(y)
}
