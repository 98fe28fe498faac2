//! Recurrence to `c`: truncated distances, bound periods, the constant
//! chain behind the finite-Lyapunov certificate, distortion control and
//! Birkhoff diagnostics.
//!
//! Points near `c` are passed as a side plus an offset `s = |x - c|` so that
//! depths below the double spacing at `c` stay representable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{LorenzMap, NonFlatBounds, Side};
use crate::orbit::{self, shadow_orbit, singular_orbit, Stop, DEFAULT_C_TOL};

pub const DEFAULT_DELTA: f64 = 0.5;

/// Singular orbits closer than this to `c` make `M` numerically infinite.
pub const FAST_RECURRENCE_FLOOR: f64 = 1e-14;

const STEP_ROUNDING: f64 = 4.0 * f64::EPSILON;

/// Forward error allowed on the singular orbit while a separation is pending;
/// thresholds are `delta |f^j(c_±) - c|`, far above this.
const SEPARATION_BUDGET: f64 = 1e-8;

/// `|x - c|` when it is at most `delta`, else 1.
pub fn truncated_dist(x: f64, c: f64, delta: f64) -> f64 {
    let d = (x - c).abs();
    if d <= delta {
        d
    } else {
        1.0
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 0.5 {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "delta",
            value: delta,
            reason: "bound-period threshold must lie in (0, 1/2]",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundPeriod {
    pub m: usize,
    /// The horizon ran out before separation; `m` is only a lower bound.
    pub lower_bound_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPeriodTrace {
    pub period: BoundPeriod,
    /// `|f^j(p) - c|` for `j = 0..=m`.
    pub distances: Vec<f64>,
}

/// Bound period of `p = c + side * s` with the singular orbit on its side.
pub fn bound_period_at(
    map: &LorenzMap,
    side: Side,
    s: f64,
    delta: f64,
    horizon: usize,
) -> Result<BoundPeriodTrace> {
    check_delta(delta)?;
    if !(s > 0.0) || s > map.branch_scale(side) {
        return Err(Error::InvalidArgument(format!("offset {s} is not a point of the {side} branch")));
    }
    let c = map.c();
    let mut distances = vec![s];
    // z: singular orbit, diff = f^j(p) - f^j(c_side), carried as an offset
    let mut z = map.singular_value(side);
    let mut diff = map.step_offset(side, c, side.sign() * s);
    let mut budget = STEP_ROUNDING;
    for j in 1..=horizon {
        let gap = (z - c).abs();
        let threshold = delta * gap;
        let sep = diff.abs();
        if sep >= threshold {
            if (sep - threshold).abs() < budget * (1.0 + delta) && gap > 0.0 {
                return Err(Error::Budget(j));
            }
            return Ok(BoundPeriodTrace {
                period: BoundPeriod {
                    m: j - 1,
                    lower_bound_only: false,
                },
                distances,
            });
        }
        distances.push((z + diff - c).abs());
        if j == horizon {
            break;
        }
        let zs = map.side_of(z).expect("gap > threshold >= 0 keeps z off c");
        let next = map.slope(zs, z) * budget + STEP_ROUNDING;
        if next > SEPARATION_BUDGET {
            return Err(Error::Budget(j));
        }
        budget = next;
        diff = map.step_offset(zs, z, diff);
        z = map.apply(zs, z);
    }
    Ok(BoundPeriodTrace {
        period: BoundPeriod {
            m: horizon,
            lower_bound_only: true,
        },
        distances,
    })
}

/// Bound period of a coordinate `p != c`.
pub fn bound_period(map: &LorenzMap, p: f64, delta: f64, horizon: usize) -> Result<BoundPeriod> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(p));
    }
    let side = map.side_of(p).ok_or(Error::Singularity)?;
    Ok(bound_period_at(map, side, (p - map.c()).abs(), delta, horizon)?.period)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceConstants {
    pub delta: f64,
    /// Sup over `n` of the averaged `|log|f^j(c_±) - c||`, both sides.
    #[serde(rename = "M")]
    pub m: f64,
    pub b: f64,
    pub gamma: f64,
    pub t: f64,
    #[serde(rename = "A")]
    pub a_const: f64,
    #[serde(rename = "B")]
    pub b_const: f64,
    #[serde(rename = "Gamma")]
    pub big_gamma: f64,
    pub r: f64,
    #[serde(rename = "Upsilon")]
    pub upsilon: f64,
    /// Sandwich constant and upper exponent the chain was built from.
    pub a: f64,
    pub expo_high: f64,
    pub expo_low: f64,
    /// `M` is exact (both singular orbits cycle); otherwise a horizon sup.
    pub m_exact: bool,
}

impl RecurrenceConstants {
    /// Assemble the chain from `M` and the non-flat data, with `A` maximal
    /// and `B` minimal.
    pub fn from_parts(delta: f64, m: f64, bounds: &NonFlatBounds, m_exact: bool) -> Result<Self> {
        check_delta(delta)?;
        let a = bounds.a;
        let beta = bounds.expo_high;
        let t = bounds.holder_t;
        let b = a.ln() + beta * m;
        let gamma = bounds.holder_c + 2.0 * beta;
        let a_const = delta * (1.0 - beta) / (a * a);
        let b_const = 2.0 * gamma * delta.powf(t) + 2.0 * m + b;
        let big_gamma = a_const.ln().abs() / (1.0 - beta)
            + 2.0 * b_const / (1.0 - beta)
            + (1.0 / (1.0 - delta)).ln()
            + m;
        let ln_r = (a_const.ln() - b_const) / (1.0 - beta);
        Ok(Self {
            delta,
            m,
            b,
            gamma,
            t,
            a_const,
            b_const,
            big_gamma,
            r: ln_r.exp(),
            upsilon: -ln_r + big_gamma,
            a,
            expo_high: beta,
            expo_low: bounds.expo_low,
            m_exact,
        })
    }

    /// Largest offset `s` with `s^{1 - expo_high} <= A e^{-B n}`.
    pub fn depth_for(&self, n: usize) -> f64 {
        ((self.a_const.ln() - self.b_const * n as f64) / (1.0 - self.expo_high)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularAverage {
    pub side: Side,
    pub sup_average: f64,
    pub exact: bool,
    pub steps: usize,
}

/// `sup_n (1/n) sum_{j=1}^n |log|f^j(c_side) - c||` over the trusted prefix.
///
/// When the orbit closes a cycle the sup is exact: past the horizon the
/// averages move monotonically toward the cycle average.
pub fn singular_log_average(map: &LorenzMap, side: Side, horizon: usize) -> Result<SingularAverage> {
    let orb = singular_orbit(map, side, horizon, DEFAULT_C_TOL)?;
    let c = map.c();
    if orb.period.is_some() {
        return Err(Error::FastRecurrence { side, distance: 0.0 });
    }
    let pts = &orb.record.points;
    let mut sum = 0.0;
    let mut sup: f64 = 0.0;
    let mut logs = Vec::with_capacity(pts.len());
    for (k, &x) in pts.iter().enumerate() {
        let d = (x - c).abs();
        if d < FAST_RECURRENCE_FLOOR {
            return Err(Error::FastRecurrence { side, distance: d });
        }
        let l = d.ln().abs();
        logs.push(l);
        sum += l;
        sup = sup.max(sum / (k + 1) as f64);
    }
    let exact = match orb.record.cycle {
        Some(cy) => {
            let cyc: f64 = logs[cy.start..cy.start + cy.period].iter().sum::<f64>() / cy.period as f64;
            sup = sup.max(cyc);
            true
        }
        None => false,
    };
    Ok(SingularAverage {
        side,
        sup_average: sup,
        exact,
        steps: pts.len(),
    })
}

pub fn recurrence_constants(map: &LorenzMap, delta: f64, horizon: usize) -> Result<RecurrenceConstants> {
    check_delta(delta)?;
    let left = singular_log_average(map, Side::Left, horizon)?;
    let right = singular_log_average(map, Side::Right, horizon)?;
    let m = left.sup_average.max(right.sup_average);
    RecurrenceConstants::from_parts(delta, m, &map.nonflat_bounds(), left.exact && right.exact)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub ratio: f64,
    pub bound: f64,
}

/// `(f^n)'(y) / (f^n)'(x)` against `exp(gamma sum_j (|f^j x - f^j y| / |f^j x - c|)^t)`.
pub fn distortion_check(map: &LorenzMap, x: f64, y: f64, n: usize) -> Result<Distortion> {
    let bounds = map.nonflat_bounds();
    let gamma = bounds.holder_c + 2.0 * bounds.expo_high;
    let c = map.c();
    let (mut u, mut v) = (x, y);
    let mut ln_ratio = 0.0;
    let mut sum = 0.0;
    for j in 0..n {
        let (Some(su), Some(sv)) = (map.side_of(u), map.side_of(v)) else {
            return Err(Error::Precondition { step: j, reason: "orbit reaches c" });
        };
        if su != sv {
            return Err(Error::Precondition { step: j, reason: "points on opposite sides of c" });
        }
        let gap = (u - c).abs();
        let sep = (u - v).abs();
        if sep > gap / 2.0 {
            return Err(Error::Precondition { step: j, reason: "separation exceeds half the distance to c" });
        }
        ln_ratio += map.log_slope(sv, v) - map.log_slope(su, u);
        sum += (sep / gap).powf(bounds.holder_t);
        u = map.apply(su, u);
        v = map.apply(sv, v);
    }
    Ok(Distortion {
        ratio: ln_ratio.exp(),
        bound: (gamma * sum).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitMode {
    /// Double-precision forward orbit; fails once the error budget is spent.
    Budgeted,
    /// True orbit shadowing the double pseudo-orbit, rebuilt by pullback.
    Shadow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffRecord {
    pub steps: usize,
    /// `(1/n) sum -log dist_delta(x_j, c)`.
    pub truncated_average: f64,
    /// `(1/n) sum |log|x_j - c||`.
    pub recurrence_average: f64,
    /// `(1/n) sum log f'(x_j)`.
    pub lyapunov_average: f64,
    /// Running minimum over prefixes of the untruncated average.
    pub running_min: f64,
    /// Largest running minimum ever reached after the first prefix.
    pub max_running_min: f64,
    /// Prefixes whose Lyapunov average leaves the non-flat sandwich.
    pub sandwich_violations: usize,
    pub shadow_residual: f64,
}

/// Birkhoff averages along the orbit of `x0` for `n` steps.
pub fn birkhoff_recurrence(
    map: &LorenzMap,
    x0: f64,
    n: usize,
    delta: f64,
    mode: OrbitMode,
) -> Result<BirkhoffRecord> {
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("at least one step is needed".into()));
    }
    let (points, residual) = match mode {
        OrbitMode::Budgeted => {
            let rec = orbit::iterate(map, x0, n - 1, DEFAULT_C_TOL)?;
            let mut points = rec.points;
            match (rec.stop, rec.cycle) {
                // an exactly repeating double orbit is replayed, not re-iterated
                (_, Some(cy)) => {
                    points.truncate(cy.start + cy.period);
                    let mut j = cy.start;
                    while points.len() < n {
                        points.push(points[j]);
                        j += 1;
                    }
                }
                (Stop::Budget, None) => return Err(Error::Budget(points.len())),
                _ => {}
            }
            (points, 0.0)
        }
        OrbitMode::Shadow => {
            let sh = shadow_orbit(map, x0, n - 1)?;
            (sh.points, sh.max_residual)
        }
    };
    Ok(birkhoff_over(map, &points, delta, residual))
}

/// Birkhoff averages over a given orbit segment (points off `c`).
pub fn birkhoff_over(map: &LorenzMap, points: &[f64], delta: f64, shadow_residual: f64) -> BirkhoffRecord {
    let bounds = map.nonflat_bounds();
    let c = map.c();
    let (ln_a, lo, hi) = (bounds.a.ln(), bounds.expo_low, bounds.expo_high);
    let mut trunc = 0.0;
    let mut rec = 0.0;
    let mut lyap = 0.0;
    let mut running_min = f64::INFINITY;
    let mut max_running_min: f64 = 0.0;
    let mut violations = 0;
    let mut steps = 0;
    for &x in points {
        let Some(side) = map.side_of(x) else { break };
        steps += 1;
        let d = (x - c).abs();
        trunc -= truncated_dist(x, c, delta).ln();
        rec -= d.ln();
        lyap += map.log_slope(side, x);
        let k = steps as f64;
        let (ri, li) = (rec / k, lyap / k);
        running_min = running_min.min(ri);
        if steps > 1 {
            max_running_min = max_running_min.max(running_min);
        }
        let slack = 1e-12 * (1.0 + li.abs());
        if li < -ln_a + lo * ri - slack || li > ln_a + hi * ri + slack {
            violations += 1;
        }
    }
    let k = steps.max(1) as f64;
    BirkhoffRecord {
        steps,
        truncated_average: trunc / k,
        recurrence_average: rec / k,
        lyapunov_average: lyap / k,
        running_min,
        max_running_min,
        sandwich_violations: violations,
        shadow_residual,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryCheck {
    pub n: usize,
    pub samples: usize,
    /// Samples whose bound period fell short of `n`.
    pub period_violations: usize,
    /// Samples whose log-distance sum reached `Gamma m(p)`.
    pub sum_violations: usize,
    /// Smallest `m(p) - n` seen.
    pub worst_period_margin: i64,
    /// Largest `sum / (Gamma m(p))` seen.
    pub worst_sum_ratio: f64,
    /// Samples the double-precision run could not decide.
    pub skipped: usize,
}

/// Sample offsets in each band `A e^{-B(n+1)} < s^{1-expo_high} <= A e^{-Bn}`
/// (plus the band's upper edge) and check `m(p) >= n` and
/// `sum_{j<=m} |log|f^j p - c|| < Gamma m(p)`.
pub fn verify_bound_period_corollaries(
    map: &LorenzMap,
    consts: &RecurrenceConstants,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<CorollaryCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let hi = consts.depth_for(n).ln();
        let lo = consts.depth_for(n + 1).ln();
        let mut check = CorollaryCheck {
            n,
            samples,
            period_violations: 0,
            sum_violations: 0,
            worst_period_margin: i64::MAX,
            worst_sum_ratio: 0.0,
            skipped: 0,
        };
        for k in 0..samples {
            let side = if rng.random::<bool>() { Side::Left } else { Side::Right };
            // the first sample sits exactly on the band's upper edge
            let ln_s = if k == 0 { hi } else { lo + (hi - lo) * rng.random::<f64>() };
            let s = ln_s.exp();
            if s == 0.0 || s >= map.branch_scale(side) {
                check.skipped += 1;
                continue;
            }
            let trace = match bound_period_at(map, side, s, consts.delta, 100_000) {
                Ok(t) => t,
                Err(Error::Budget(_)) => {
                    check.skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let m = trace.period.m;
            check.worst_period_margin = check.worst_period_margin.min(m as i64 - n as i64);
            if m < n {
                check.period_violations += 1;
            }
            let sum: f64 = trace.distances.iter().map(|d| d.ln().abs()).sum();
            let ratio = sum / (consts.big_gamma * m as f64);
            check.worst_sum_ratio = check.worst_sum_ratio.max(ratio);
            if !(ratio < 1.0) {
                check.sum_violations += 1;
            }
        }
        out.push(check);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartStatistics {
    /// `None` once the orbit reaches `c`.
    pub lyapunov: Option<f64>,
    pub recurrence: Option<f64>,
    /// Step at which the orbit reached `c`, making its recurrence infinite.
    pub hits_c_at: Option<usize>,
    pub typical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrbDiagnostic {
    pub steps: usize,
    pub samples: usize,
    pub lyapunov_mean: f64,
    pub lyapunov_spread: f64,
    pub recurrence_mean: f64,
    pub recurrence_spread: f64,
    pub left: StartStatistics,
    pub right: StartStatistics,
    /// Both singular starts are within three spreads on both functionals.
    pub singular_values_typical: bool,
}

fn mean_spread(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Compare Birkhoff averages from `f(c_±)` with Lebesgue-random starts.
pub fn srb_basin_diagnostic(map: &LorenzMap, n: usize, sample_count: usize, seed: u64) -> Result<SrbDiagnostic> {
    if sample_count == 0 {
        return Err(Error::Empty("random start sample"));
    }
    let delta = DEFAULT_DELTA;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lyap = Vec::with_capacity(sample_count);
    let mut recs = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let x0 = rng.random::<f64>();
        let r = birkhoff_recurrence(map, x0, n, delta, OrbitMode::Shadow)?;
        lyap.push(r.lyapunov_average);
        recs.push(r.recurrence_average);
    }
    let (lm, ls) = mean_spread(&lyap);
    let (rm, rs) = mean_spread(&recs);
    let within = |v: f64, m: f64, s: f64| (v - m).abs() <= 3.0 * s.max(1e-12);
    let start = |side: Side| -> Result<StartStatistics> {
        let orb = singular_orbit(map, side, n, DEFAULT_C_TOL)?;
        if let Some(t) = orb.period {
            return Ok(StartStatistics {
                lyapunov: None,
                recurrence: None,
                hits_c_at: Some(t),
                typical: false,
            });
        }
        let r = birkhoff_recurrence(map, map.singular_value(side), n, delta, OrbitMode::Shadow)?;
        Ok(StartStatistics {
            lyapunov: Some(r.lyapunov_average),
            recurrence: Some(r.recurrence_average),
            hits_c_at: None,
            typical: within(r.lyapunov_average, lm, ls) && within(r.recurrence_average, rm, rs),
        })
    };
    let left = start(Side::Left)?;
    let right = start(Side::Right)?;
    Ok(SrbDiagnostic {
        steps: n,
        samples: sample_count,
        lyapunov_mean: lm,
        lyapunov_spread: ls,
        recurrence_mean: rm,
        recurrence_spread: rs,
        singular_values_typical: left.typical && right.typical,
        left,
        right,
    })
}
