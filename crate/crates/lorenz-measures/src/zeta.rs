//! Power sums `sum_{n >= n0} n^{-s}` for `s > 1`: a direct head plus an
//! Euler–Maclaurin tail whose remainder is bounded by the first omitted term.

use crate::error::{Error, Result};

/// `B_{2k} / (2k)!` for `k = 1..=7`.
const BERNOULLI_OVER_FACTORIAL: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
    1.0 / 74_724_249_600.0,
];

/// Start of the asymptotic part; below it the sum is taken term by term.
const EM_START: u64 = 16;

/// A sum together with a bound on its numerical error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded {
    pub value: f64,
    pub error: f64,
}

fn check(s: f64) -> Result<()> {
    if s > 1.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "s",
            value: s,
            reason: "power sums converge only for s > 1",
        })
    }
}

/// `sum_{n >= n0} n^{-s}`.
pub fn power_tail(s: f64, n0: u64) -> Result<Bounded> {
    check(s)?;
    if n0 == 0 {
        return Err(Error::InvalidArgument("power sums start at n = 1".into()));
    }
    let big_n = n0.max(EM_START);
    // add small terms first
    let head: f64 = (n0..big_n).rev().map(|n| (n as f64).powf(-s)).sum();
    let n = big_n as f64;
    let mut value = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // rising factorial (s)_{2k-1} times N^{-s-2k+1}
    let mut rising = s;
    let mut power = n.powf(-s - 1.0);
    let mut last = 0.0;
    for (k, &c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        let term = c * rising * power;
        if k + 1 == BERNOULLI_OVER_FACTORIAL.len() {
            last = term.abs();
        } else {
            value += term;
        }
        rising *= (s + 2.0 * k as f64 + 1.0) * (s + 2.0 * k as f64 + 2.0);
        power /= n * n;
    }
    let total = head + value;
    Ok(Bounded {
        value: total,
        error: last + 4.0 * f64::EPSILON * total,
    })
}

/// `sum_{n >= n0} ln(n) n^{-s}`, which is `-zeta'(s)` for `n0 = 1`.
pub fn log_power_tail(s: f64, n0: u64) -> Result<Bounded> {
    check(s)?;
    if n0 == 0 {
        return Err(Error::InvalidArgument("power sums start at n = 1".into()));
    }
    let big_n = n0.max(EM_START);
    let head: f64 = (n0..big_n).rev().map(|n| (n as f64).ln() * (n as f64).powf(-s)).sum();
    let n = big_n as f64;
    let ln_n = n.ln();
    let mut value = n.powf(1.0 - s) * (ln_n / (s - 1.0) + 1.0 / (s - 1.0).powi(2)) + 0.5 * ln_n * n.powf(-s);
    // g^{(k)}(x) = x^{-s-k} (a_k ln x + b_k) for g(x) = ln(x) x^{-s}
    let (mut a, mut b) = (1.0, 0.0);
    let mut k = 0.0;
    let mut step = |a: &mut f64, b: &mut f64| {
        let m = -(s + k);
        (*a, *b) = (m * *a, m * *b + *a);
        k += 1.0;
    };
    step(&mut a, &mut b);
    let mut last = 0.0;
    for (i, &c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        // derivative of order 2i + 1 at N
        let order = 2 * i + 1;
        let deriv = n.powf(-s - order as f64) * (a * ln_n + b);
        let term = -c * deriv;
        if i + 1 == BERNOULLI_OVER_FACTORIAL.len() {
            last = term.abs();
        } else {
            value += term;
        }
        step(&mut a, &mut b);
        step(&mut a, &mut b);
    }
    let total = head + value;
    Ok(Bounded {
        value: total,
        error: last + 8.0 * f64::EPSILON * total.abs(),
    })
}

/// Riemann zeta on `s > 1`.
pub fn zeta(s: f64) -> Result<Bounded> {
    power_tail(s, 1)
}

/// `sum_{n=1}^{n_max} n^{-s}` for any real `s`, summed smallest terms first.
pub fn power_partial(s: f64, n_max: u64) -> f64 {
    (1..=n_max).rev().map(|n| (n as f64).powf(-s)).sum()
}
