//! Forward orbits with error budgets, singular orbits, periodic points.
//!
//! Forward iteration is trusted only while the accumulated bound
//! `e_{j+1} = f'(x_j) e_j + 4 eps` stays below `c_tol / 10`. Deep objects
//! come from inverse branches, which contract.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{LorenzMap, Side};

pub const DEFAULT_C_TOL: f64 = 1e-11;

/// Per-evaluation rounding allowance in the forward error budget.
const STEP_ROUNDING: f64 = 4.0 * f64::EPSILON;

/// Nonempty word over `{L, R}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Itinerary(Vec<Side>);

impl Itinerary {
    pub fn new(symbols: Vec<Side>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Empty("itinerary"));
        }
        Ok(Self(symbols))
    }

    pub fn symbols(&self) -> &[Side] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Not a proper power of a shorter word.
    pub fn is_primitive(&self) -> bool {
        let n = self.0.len();
        (1..n)
            .filter(|d| n % d == 0)
            .all(|d| (d..n).any(|i| self.0[i] != self.0[i - d]))
    }
}

impl fmt::Display for Itinerary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for Itinerary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .map(|ch| {
                Side::from_symbol(ch)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad symbol {ch:?} in word")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(symbols)
    }
}

impl Serialize for Itinerary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Itinerary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stop {
    Completed,
    HitC,
    Budget,
}

/// Exactly repeating tail: `points[start + period] == points[start]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub start: usize,
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub points: Vec<f64>,
    /// Sides of `points[j]` for every point off `c`.
    pub itinerary: Vec<Side>,
    pub error_budget: f64,
    pub hit_c_at: Option<usize>,
    pub stop: Stop,
    pub cycle: Option<Cycle>,
}

impl OrbitRecord {
    pub fn word(&self) -> Option<Itinerary> {
        Itinerary::new(self.itinerary.clone()).ok()
    }
}

pub fn iterate(map: &LorenzMap, x0: f64, n: usize, c_tol: f64) -> Result<OrbitRecord> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::Domain(x0));
    }
    Ok(run(map, x0, n, c_tol))
}

fn run(map: &LorenzMap, x0: f64, n: usize, c_tol: f64) -> OrbitRecord {
    let c = map.c();
    let mut points = vec![x0];
    let mut itinerary = Vec::new();
    let mut budget = 0.0;
    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut cycle = None;
    let mut x = x0;
    let mut stop = Stop::Completed;
    let mut hit_c_at = None;
    for j in 0..=n {
        if (x - c).abs() <= c_tol {
            hit_c_at = Some(j);
            stop = Stop::HitC;
            break;
        }
        let side = map.side_of(x).expect("off c");
        itinerary.push(side);
        if cycle.is_none() {
            if let Some(&first) = seen.get(&x.to_bits()) {
                cycle = Some(Cycle {
                    start: first,
                    period: j - first,
                });
            } else {
                seen.insert(x.to_bits(), j);
            }
        }
        if j == n {
            break;
        }
        let next_budget = map.slope(side, x) * budget + STEP_ROUNDING;
        if next_budget > c_tol / 10.0 {
            stop = Stop::Budget;
            break;
        }
        budget = next_budget;
        x = map.apply(side, x);
        points.push(x);
    }
    OrbitRecord {
        points,
        itinerary,
        error_budget: budget,
        hit_c_at,
        stop,
        cycle,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularOrbit {
    pub side: Side,
    /// `record.points[k] = f^{k+1}(c_side)`.
    pub record: OrbitRecord,
    /// Smallest `t >= 1` with `f^t(c_side) = c`.
    pub period: Option<usize>,
}

impl SingularOrbit {
    /// Points of the orbit before it reaches `c`.
    pub fn points_before_hit(&self) -> &[f64] {
        let end = self.record.hit_c_at.unwrap_or(self.record.points.len());
        &self.record.points[..end]
    }
}

pub fn singular_orbit(map: &LorenzMap, side: Side, horizon: usize, c_tol: f64) -> Result<SingularOrbit> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let record = run(map, map.singular_value(side), horizon - 1, c_tol);
    let period = record.hit_c_at.map(|k| k + 1);
    Ok(SingularOrbit {
        side,
        record,
        period,
    })
}

/// Closed interval `[lo, hi]` pulled back through `side`; `None` if it misses the image.
pub fn pull_interval(map: &LorenzMap, side: Side, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let (a, b) = map.image(side);
    let lo = lo.max(a);
    let hi = hi.min(b);
    if lo > hi {
        return None;
    }
    Some((map.pull(side, lo), map.pull(side, hi)))
}

/// Fixed point of the inverse-branch composition along `word`.
///
/// The bracket `[0, 1]` is pulled back through the word until it stops
/// shrinking; a bracket collapsing onto `c` is rejected.
pub fn periodic_point(map: &LorenzMap, word: &Itinerary) -> Result<f64> {
    let fail = || Error::NoPeriodicPoint(word.to_string());
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut width = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..200_000 {
        let mut cur = (lo, hi);
        for &s in word.symbols().iter().rev() {
            cur = pull_interval(map, s, cur.0, cur.1).ok_or_else(fail)?;
        }
        (lo, hi) = cur;
        let w = hi - lo;
        if w < 1e-15 {
            break;
        }
        if w >= width {
            stalled += 1;
            if stalled > 3 {
                break;
            }
        } else {
            stalled = 0;
        }
        width = w;
    }
    let p = 0.5 * (lo + hi);
    // the cycle read back through the inverse branches must stay off c
    let c = map.c();
    let mut x = p;
    for &s in word.symbols().iter().rev() {
        if (x - c).abs() < 1e-10 {
            return Err(fail());
        }
        let (a, b) = map.image(s);
        x = map.pull(s, x.clamp(a, b));
    }
    if (x - c).abs() < 1e-10 || (x - p).abs() > 1e-9 {
        return Err(fail());
    }
    Ok(p)
}

/// True orbit shadowing the double-precision pseudo-orbit of `x0`:
/// the itinerary of the pseudo-orbit is kept and the points are rebuilt by
/// inverse branches from the last pseudo-orbit point.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowOrbit {
    pub points: Vec<f64>,
    pub itinerary: Vec<Side>,
    /// `max_j |f(points[j]) - points[j+1]|`.
    pub max_residual: f64,
    /// `max_j |points[j] - pseudo[j]|`.
    pub max_shadow_gap: f64,
}

pub fn shadow_orbit(map: &LorenzMap, x0: f64, n: usize) -> Result<ShadowOrbit> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::Domain(x0));
    }
    let mut pseudo = Vec::with_capacity(n + 1);
    let mut itinerary = Vec::with_capacity(n);
    let mut x = x0;
    pseudo.push(x);
    for _ in 0..n {
        let Some(side) = map.side_of(x) else { break };
        itinerary.push(side);
        x = map.apply(side, x);
        pseudo.push(x);
    }
    let m = pseudo.len();
    let mut points = vec![0.0; m];
    points[m - 1] = pseudo[m - 1];
    for j in (0..m - 1).rev() {
        let side = itinerary[j];
        let (a, b) = map.image(side);
        points[j] = map.pull(side, points[j + 1].clamp(a, b));
    }
    let mut max_residual: f64 = 0.0;
    let mut max_gap: f64 = 0.0;
    for j in 0..m {
        max_gap = max_gap.max((points[j] - pseudo[j]).abs());
        if j + 1 < m {
            max_residual = max_residual.max((map.apply(itinerary[j], points[j]) - points[j + 1]).abs());
        }
    }
    Ok(ShadowOrbit {
        points,
        itinerary,
        max_residual,
        max_shadow_gap: max_gap,
    })
}
