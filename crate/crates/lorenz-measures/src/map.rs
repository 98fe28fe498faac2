//! Non-flat expanding Lorenz maps.
//!
//! On each side of the discontinuity `c` the map is a power law of a chart
//! in the rescaled distance to `c`:
//!
//! ```text
//! f(x) = d0 - d0 h0((c - x)/c)^alpha                x < c
//! f(x) = 1 - d1 + d1 h1((x - c)/(1 - c))^beta       x > c
//! ```
//!
//! so `f(0) = 0`, `f(1) = 1`, `f(c-) = d0` and `f(c+) = 1 - d1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::error::{Error, Result};

/// Side of the discontinuity. Also the symbol alphabet of itineraries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn symbol(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }

    pub fn from_symbol(ch: char) -> Option<Side> {
        match ch {
            'L' | 'l' => Some(Side::Left),
            'R' | 'r' => Some(Side::Right),
            _ => None,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// -1 on the left, +1 on the right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzMap {
    c: f64,
    alpha: f64,
    beta: f64,
    d0: f64,
    d1: f64,
    phi0: Chart,
    phi1: Chart,
}

/// One branch in normalized form: `x = c + sign * scale * u`,
/// `f(x) = singular + sign * amp * h(u)^expo`.
#[derive(Debug, Clone, Copy)]
struct Branch {
    sign: f64,
    scale: f64,
    amp: f64,
    expo: f64,
    singular: f64,
    endpoint: f64,
    chart: Chart,
}

impl Branch {
    fn unit(&self, c: f64, x: f64) -> f64 {
        (self.sign * (x - c) / self.scale).clamp(0.0, 1.0)
    }

    /// `u - 1` without cancellation near the fixed endpoint.
    fn unit_minus_one(&self, x: f64) -> f64 {
        (self.sign * (x - self.endpoint) / self.scale).min(0.0)
    }
}

impl LorenzMap {
    /// Map with affine charts on both sides.
    pub fn canonical(c: f64, alpha: f64, beta: f64, d0: f64, d1: f64) -> Result<Self> {
        Self::with_charts(c, alpha, beta, d0, d1, Chart::Affine, Chart::Affine)
    }

    pub fn with_charts(
        c: f64,
        alpha: f64,
        beta: f64,
        d0: f64,
        d1: f64,
        phi0: Chart,
        phi1: Chart,
    ) -> Result<Self> {
        let map = Self::unchecked(c, alpha, beta, d0, d1, phi0, phi1)?;
        let floor = map.expansion_floor();
        if floor.is_nan() || floor <= 1.0 {
            return Err(Error::NotExpanding(floor));
        }
        Ok(map)
    }

    /// Parameter checks only; the expansion floor may be `<= 1`.
    pub(crate) fn unchecked(
        c: f64,
        alpha: f64,
        beta: f64,
        d0: f64,
        d1: f64,
        phi0: Chart,
        phi1: Chart,
    ) -> Result<Self> {
        let open = |name, v: f64| {
            if v.is_finite() && v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter {
                    name,
                    value: v,
                    reason: "must lie in (0, 1)",
                })
            }
        };
        let half_open = |name, v: f64| {
            if v.is_finite() && v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter {
                    name,
                    value: v,
                    reason: "must lie in (0, 1]",
                })
            }
        };
        open("c", c)?;
        open("alpha", alpha)?;
        open("beta", beta)?;
        half_open("d0", d0)?;
        half_open("d1", d1)?;
        phi0.validate()?;
        phi1.validate()?;
        Ok(Self {
            c,
            alpha,
            beta,
            d0,
            d1,
            phi0,
            phi1,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn d0(&self) -> f64 {
        self.d0
    }
    pub fn d1(&self) -> f64 {
        self.d1
    }
    pub fn chart(&self, side: Side) -> Chart {
        match side {
            Side::Left => self.phi0,
            Side::Right => self.phi1,
        }
    }

    /// Same map with the left singular value replaced.
    pub fn with_d0(&self, d0: f64) -> Result<Self> {
        Self::with_charts(self.c, self.alpha, self.beta, d0, self.d1, self.phi0, self.phi1)
    }

    /// Same map with `f(c+) = 1 - d1` replaced.
    pub fn with_d1(&self, d1: f64) -> Result<Self> {
        Self::with_charts(self.c, self.alpha, self.beta, self.d0, d1, self.phi0, self.phi1)
    }

    /// Branch exponent (`alpha` left, `beta` right).
    pub fn exponent(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.alpha,
            Side::Right => self.beta,
        }
    }

    /// Length of the branch domain.
    pub fn branch_scale(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.c,
            Side::Right => 1.0 - self.c,
        }
    }

    fn branch(&self, side: Side) -> Branch {
        match side {
            Side::Left => Branch {
                sign: -1.0,
                scale: self.c,
                amp: self.d0,
                expo: self.alpha,
                singular: self.d0,
                endpoint: 0.0,
                chart: self.phi0,
            },
            Side::Right => Branch {
                sign: 1.0,
                scale: 1.0 - self.c,
                amp: self.d1,
                expo: self.beta,
                singular: 1.0 - self.d1,
                endpoint: 1.0,
                chart: self.phi1,
            },
        }
    }

    /// `f(c-)` or `f(c+)`.
    pub fn singular_value(&self, side: Side) -> f64 {
        self.branch(side).singular
    }

    /// Closed image of a branch: `[0, d0]` or `[1 - d1, 1]`.
    pub fn image(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Left => (0.0, self.d0),
            Side::Right => (1.0 - self.d1, 1.0),
        }
    }

    /// Side of `x`, or `None` at `c`.
    pub fn side_of(&self, x: f64) -> Option<Side> {
        if x < self.c {
            Some(Side::Left)
        } else if x > self.c {
            Some(Side::Right)
        } else {
            None
        }
    }

    fn check_domain(x: f64) -> Result<()> {
        if (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(Error::Domain(x))
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        let side = self.side_of(x).ok_or(Error::Singularity)?;
        Ok(self.apply(side, x))
    }

    /// Evaluation with an explicit side; at `x = c` this is the one-sided limit.
    pub fn eval_side(&self, x: f64, side: Side) -> Result<f64> {
        Self::check_domain(x)?;
        if self.side_of(x).is_some_and(|s| s != side) {
            return Err(Error::InvalidArgument(format!("{x} is not on the {side} of c")));
        }
        Ok(self.apply(side, x))
    }

    /// Branch formula without domain checks.
    pub fn apply(&self, side: Side, x: f64) -> f64 {
        let b = self.branch(side);
        let u = b.unit(self.c, x);
        if u < 0.5 {
            b.singular + b.sign * b.amp * b.chart.eval(u).powf(b.expo)
        } else {
            let um1 = b.unit_minus_one(x);
            let dh = um1 * b.chart.secant(u, 1.0);
            b.endpoint + b.sign * b.amp * (b.expo * dh.ln_1p()).exp_m1()
        }
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        let side = self.side_of(x).ok_or(Error::Singularity)?;
        Ok(self.slope(side, x))
    }

    /// Branch derivative without domain checks (`+inf` at `c`).
    pub fn slope(&self, side: Side, x: f64) -> f64 {
        let b = self.branch(side);
        let u = b.unit(self.c, x);
        b.expo * b.amp / b.scale * b.chart.eval(u).powf(b.expo - 1.0) * b.chart.deriv(u)
    }

    /// `ln f'(x)` on a branch.
    pub fn log_slope(&self, side: Side, x: f64) -> f64 {
        let b = self.branch(side);
        let u = b.unit(self.c, x);
        (b.expo * b.amp / b.scale).ln()
            + (b.expo - 1.0) * b.chart.ln_eval(u)
            + b.chart.deriv(u).ln()
    }

    /// `ln f'(c + side * s)` given `ln s`; valid far below the double range.
    pub fn log_slope_near_c(&self, side: Side, ln_s: f64) -> f64 {
        let b = self.branch(side);
        let ln_u = ln_s - b.scale.ln();
        let u = ln_u.exp();
        (b.expo * b.amp / b.scale).ln()
            + (b.expo - 1.0) * b.chart.ln_eval_from_ln(ln_u)
            + b.chart.deriv(u).ln()
    }

    pub fn inverse_branch(&self, side: Side, y: f64) -> Result<f64> {
        let (lo, hi) = self.image(side);
        let slack = 1e-13;
        if !(y >= lo - slack && y <= hi + slack) {
            return Err(Error::NoPreimage { side, y });
        }
        Ok(self.pull(side, y.clamp(lo, hi)))
    }

    /// Inverse branch without image checks; `y` must lie in the branch image.
    pub fn pull(&self, side: Side, y: f64) -> f64 {
        let b = self.branch(side);
        let big_h = (b.sign * (y - b.singular) / b.amp).clamp(0.0, 1.0);
        if big_h <= 0.5 {
            let u = b.chart.inverse(big_h.powf(1.0 / b.expo));
            self.c + b.sign * b.scale * u
        } else {
            // distance to the fixed endpoint, kept relative
            let gap = (b.sign * (b.endpoint - y) / b.amp).max(0.0);
            let one_minus_h = -((-gap).ln_1p() / b.expo).exp_m1();
            let u = b.chart.inverse(1.0 - one_minus_h);
            let one_minus_u = one_minus_h / b.chart.secant(u, 1.0);
            b.endpoint - b.sign * b.scale * one_minus_u
        }
    }

    /// `f(x* + dx) - f(x*)` on `side`, accurate for `|dx|` far below `|x*|` ulp.
    /// `x* = c` is read as the one-sided limit.
    pub fn step_offset(&self, side: Side, x_star: f64, dx: f64) -> f64 {
        let b = self.branch(side);
        let u_star = b.unit(self.c, x_star);
        let du = b.sign * dx / b.scale;
        let u = u_star + du;
        if u_star == 0.0 {
            return b.sign * b.amp * b.chart.eval(du.max(0.0)).powf(b.expo);
        }
        let h_star = b.chart.eval(u_star);
        let dh = du * b.chart.secant(u, u_star);
        b.sign * b.amp * h_star.powf(b.expo) * (b.expo * (dh / h_star).ln_1p()).exp_m1()
    }

    /// Inverse of [`step_offset`](Self::step_offset): the `dx` with
    /// `f(x* + dx) = f(x*) + dy` on `side`.
    pub fn pull_offset(&self, side: Side, x_star: f64, dy: f64) -> f64 {
        let b = self.branch(side);
        let u_star = b.unit(self.c, x_star);
        let dbig = b.sign * dy / b.amp;
        if u_star == 0.0 {
            let u = b.chart.inverse(dbig.max(0.0).powf(1.0 / b.expo));
            return b.sign * b.scale * u;
        }
        let h_star = b.chart.eval(u_star);
        let big_star = h_star.powf(b.expo);
        let dh = h_star * ((dbig / big_star).ln_1p() / b.expo).exp_m1();
        let u = b.chart.inverse(h_star + dh);
        let du = dh / b.chart.secant(u, u_star);
        b.sign * b.scale * du
    }

    /// `ln |f(c + side * s) - f(c_side)|` from `ln s`.
    pub fn ln_first_offset(&self, side: Side, ln_s: f64) -> f64 {
        let b = self.branch(side);
        b.amp.ln() + b.expo * b.chart.ln_eval_from_ln(ln_s - b.scale.ln())
    }

    /// Inverse of [`ln_first_offset`](Self::ln_first_offset).
    pub fn ln_first_offset_inverse(&self, side: Side, ln_dy: f64) -> f64 {
        let b = self.branch(side);
        let ln_h = (ln_dy - b.amp.ln()) / b.expo;
        b.chart.ln_inverse_from_ln(ln_h) + b.scale.ln()
    }

    /// Infimum of `f'`.
    pub fn expansion_floor(&self) -> f64 {
        [Side::Left, Side::Right]
            .into_iter()
            .map(|s| self.branch_floor(s))
            .fold(f64::INFINITY, f64::min)
    }

    fn branch_floor(&self, side: Side) -> f64 {
        let b = self.branch(side);
        if b.chart.is_affine() {
            return b.expo * b.amp / b.scale;
        }
        let g = |u: f64| {
            b.expo * b.amp / b.scale * b.chart.eval(u).powf(b.expo - 1.0) * b.chart.deriv(u)
        };
        let n = 2048;
        let (mut best_i, mut best) = (n, g(1.0));
        for i in 1..n {
            let v = g(i as f64 / n as f64);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        let lo = (best_i as f64 - 1.0).max(1.0) / n as f64;
        let hi = ((best_i + 1).min(n)) as f64 / n as f64;
        best.min(golden_min(g, lo, hi))
    }

    /// Branch descriptor `phi_j(x)` in unnormalized form:
    /// `phi0(x) = d0^{1/alpha} h0((c - x)/c)`, `phi1(x) = d1^{1/beta} h1((x - c)/(1 - c))`.
    pub fn phi(&self, side: Side, x: f64) -> f64 {
        let b = self.branch(side);
        b.amp.powf(1.0 / b.expo) * b.chart.eval(b.unit(self.c, x))
    }

    pub fn phi_deriv(&self, side: Side, x: f64) -> f64 {
        let b = self.branch(side);
        b.sign * b.amp.powf(1.0 / b.expo) * b.chart.deriv(b.unit(self.c, x)) / b.scale
    }

    pub fn nonflat_bounds(&self) -> NonFlatBounds {
        let e_left = 1.0 - self.alpha;
        let e_right = 1.0 - self.beta;
        let lo = e_left.min(e_right);
        let hi = e_left.max(e_right);
        let affine = self.phi0.is_affine() && self.phi1.is_affine();
        let mut a: f64 = 1.0;
        for side in [Side::Left, Side::Right] {
            let b = self.branch(side);
            let e = 1.0 - b.expo;
            if affine {
                // f' = k d^{-e} exactly, so both ratios peak at d = scale
                let k = b.expo * b.amp * b.scale.powf(-b.expo);
                a = a.max(k * b.scale.powf(hi - e)).max(b.scale.powf(e - lo) / k);
            } else {
                for d in sandwich_grid(b.scale) {
                    let fp = self.slope(side, self.c + b.sign * d);
                    a = a.max(fp * d.powf(hi)).max(d.powf(-lo) / fp);
                }
            }
        }
        let a = if affine { a * (1.0 + 1e-9) } else { a * 1.1 };
        let (holder_c, holder_t) = if affine {
            (0.0, 1.0)
        } else {
            (1.2 * self.ln_phi_deriv_lipschitz_estimate(), 1.0)
        };
        NonFlatBounds {
            a,
            expo_low: lo,
            expo_high: hi,
            holder_c,
            holder_t,
            expansion_floor: self.expansion_floor(),
        }
    }

    /// Lipschitz estimate of `ln(f'(x) |x - c|^{1 - expo})` on each branch,
    /// from increments on a dyadic grid.
    fn ln_phi_deriv_lipschitz_estimate(&self) -> f64 {
        let n = 1usize << 12;
        let mut best: f64 = 0.0;
        for side in [Side::Left, Side::Right] {
            let b = self.branch(side);
            let e = 1.0 - b.expo;
            let dx = b.scale / n as f64;
            let ln_phi = |i: usize| {
                let d = dx * i as f64;
                self.log_slope(side, self.c + b.sign * d) + e * d.ln()
            };
            let mut prev = ln_phi(1);
            for i in 2..=n {
                let cur = ln_phi(i);
                best = best.max((cur - prev).abs() / dx);
                prev = cur;
            }
        }
        best
    }

    pub fn to_document(&self) -> MapDocument {
        let affine = self.phi0.is_affine() && self.phi1.is_affine();
        MapDocument {
            c: self.c,
            alpha: self.alpha,
            beta: self.beta,
            d0: self.d0,
            d1: self.d1,
            family: if affine { FAMILY_AFFINE } else { FAMILY_CHART }.to_string(),
            phi0: (!affine).then_some(self.phi0),
            phi1: (!affine).then_some(self.phi1),
        }
    }

    pub fn from_document(doc: &MapDocument) -> Result<Self> {
        let (phi0, phi1) = match doc.family.as_str() {
            FAMILY_AFFINE => {
                if doc.phi0.is_some_and(|p| !p.is_affine()) || doc.phi1.is_some_and(|p| !p.is_affine())
                {
                    return Err(Error::InvalidArgument(
                        "family canonical-affine takes affine charts only".into(),
                    ));
                }
                (Chart::Affine, Chart::Affine)
            }
            FAMILY_CHART => (doc.phi0.unwrap_or_default(), doc.phi1.unwrap_or_default()),
            other => return Err(Error::InvalidArgument(format!("unknown map family {other:?}"))),
        };
        Self::with_charts(doc.c, doc.alpha, doc.beta, doc.d0, doc.d1, phi0, phi1)
    }
}

pub const FAMILY_AFFINE: &str = "canonical-affine";
pub const FAMILY_CHART: &str = "chart";

/// Serialized map: `{c, alpha, beta, d0, d1, family, phi0?, phi1?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d0: f64,
    pub d1: f64,
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<Chart>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi1: Option<Chart>,
}

/// Derivative sandwich `(1/a)|x-c|^{-expo_low} <= f'(x) <= a|x-c|^{-expo_high}`,
/// Hölder data `(holder_c, holder_t)` for `ln |phi_j'|`, and the expansion floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonFlatBounds {
    pub a: f64,
    pub expo_low: f64,
    pub expo_high: f64,
    pub holder_c: f64,
    pub holder_t: f64,
    pub expansion_floor: f64,
}

impl NonFlatBounds {
    /// Whether the sandwich holds at `x`.
    pub fn sandwich_holds(&self, map: &LorenzMap, x: f64) -> bool {
        let Some(side) = map.side_of(x) else {
            return true;
        };
        let d = (x - map.c()).abs();
        let fp = map.slope(side, x);
        fp >= d.powf(-self.expo_low) / self.a && fp <= self.a * d.powf(-self.expo_high)
    }
}

/// Distance grid for sandwich certification: log-spaced from `1e-12 * scale`
/// up to `scale`, then uniform.
pub fn sandwich_grid(scale: f64) -> Vec<f64> {
    let n = 1000;
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        out.push(scale * 10f64.powf(-12.0 * (1.0 - t)));
    }
    for i in 1..=n {
        out.push(scale * i as f64 / n as f64);
    }
    out
}

fn golden_min(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..80 {
        if g1 < g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - r * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + r * (hi - lo);
            g2 = g(x2);
        }
    }
    g1.min(g2)
}

/// Distance in the family sharing `(c, alpha, beta)`: singular-value gaps plus
/// C^{1+t} norms of the descriptor differences sampled on `grid_n` points per side.
pub fn metric_dist(f: &LorenzMap, g: &LorenzMap, grid_n: usize) -> Result<f64> {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-15;
    if !(same(f.c, g.c) && same(f.alpha, g.alpha) && same(f.beta, g.beta)) {
        return Err(Error::IncompatibleFamily);
    }
    if grid_n < 2 {
        return Err(Error::InvalidArgument("grid_n must be at least 2".into()));
    }
    let mut total = singular_value_gap(f, g);
    let t = f.nonflat_bounds().holder_t.min(g.nonflat_bounds().holder_t);
    for side in [Side::Left, Side::Right] {
        total += descriptor_norm(f, g, side, grid_n, t);
    }
    Ok(total)
}

/// `|f(c-) - g(c-)| + |f(c+) - g(c+)|`.
pub fn singular_value_gap(f: &LorenzMap, g: &LorenzMap) -> f64 {
    (f.d0 - g.d0).abs() + (f.d1 - g.d1).abs()
}

fn descriptor_norm(f: &LorenzMap, g: &LorenzMap, side: Side, n: usize, t: f64) -> f64 {
    let (a, b) = match side {
        Side::Left => (0.0, f.c),
        Side::Right => (f.c, 1.0),
    };
    let xs: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    let dv: Vec<f64> = xs.iter().map(|&x| f.phi(side, x) - g.phi(side, x)).collect();
    let dd: Vec<f64> = xs
        .iter()
        .map(|&x| f.phi_deriv(side, x) - g.phi_deriv(side, x))
        .collect();
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let mut holder: f64 = 0.0;
    let mut stride = 1;
    while stride < n {
        for i in 0..n - stride {
            let gap = (xs[i + stride] - xs[i]).powf(t);
            holder = holder.max((dd[i + stride] - dd[i]).abs() / gap);
        }
        stride *= 2;
    }
    sup(&dv) + sup(&dd) + holder
}
