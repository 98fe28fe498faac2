//! Extended-precision evaluation for cross-checks.
//!
//! Map parameters stay the doubles of the [`LorenzMap`]; only the orbit
//! arithmetic runs at `bits` of mantissa.

use astro_float::{BigFloat, Consts, RoundingMode, Sign};

use crate::error::{Error, Result};
use crate::map::{LorenzMap, Side};
use crate::orbit::Itinerary;

const RM: RoundingMode = RoundingMode::ToEven;

pub struct ExtMap {
    map: LorenzMap,
    bits: usize,
    cc: Consts,
}

/// Round a big float to the nearest double.
pub fn to_f64(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let Some((words, _, sign, exp, _)) = x.as_raw_parts() else {
        return f64::NAN;
    };
    let top = *words.last().expect("normal value has a mantissa");
    let next = if words.len() > 1 { words[words.len() - 2] } else { 0 };
    // value = 0.m * 2^exp with the top word holding the leading 64 bits
    let hi = top as f64 * 2f64.powi(-64);
    let lo = next as f64 * 2f64.powi(-128);
    let mag = (hi + lo) * pow2(exp as i32);
    match sign {
        Sign::Pos => mag,
        Sign::Neg => -mag,
    }
}

fn pow2(e: i32) -> f64 {
    if e < -1000 {
        2f64.powi(-1000) * 2f64.powi(e + 1000)
    } else {
        2f64.powi(e)
    }
}

impl ExtMap {
    pub fn new(map: LorenzMap, bits: usize) -> Result<Self> {
        if bits < 64 {
            return Err(Error::InvalidArgument("extended precision needs at least 64 bits".into()));
        }
        let cc = Consts::new().map_err(|e| Error::InvalidArgument(format!("{e:?}")))?;
        Ok(Self { map, bits, cc })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn num(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.bits)
    }

    fn pow(&mut self, base: &BigFloat, expo: &BigFloat) -> BigFloat {
        if base.is_zero() {
            return BigFloat::from_f64(0.0, self.bits);
        }
        let p = self.bits;
        let ln = base.ln(p, RM, &mut self.cc);
        ln.mul(expo, p, RM).exp(p, RM, &mut self.cc)
    }

    fn chart_eval(&self, side: Side, u: &BigFloat) -> BigFloat {
        let p = self.bits;
        match self.map.chart(side) {
            crate::Chart::Affine => u.clone(),
            crate::Chart::Quadratic { kappa } => {
                let one = BigFloat::from_f64(1.0, p);
                let t = u.mul(&one.sub(u, p, RM), p, RM).mul(&self.num(kappa), p, RM);
                u.add(&t, p, RM)
            }
        }
    }

    fn chart_inverse(&mut self, side: Side, y: &BigFloat) -> BigFloat {
        let p = self.bits;
        match self.map.chart(side) {
            crate::Chart::Affine => y.clone(),
            crate::Chart::Quadratic { kappa } => {
                if kappa == 0.0 {
                    return y.clone();
                }
                let k = self.num(kappa);
                let b = self.num(1.0 + kappa);
                let four_ky = k.mul(y, p, RM).mul(&self.num(4.0), p, RM);
                let disc = b.mul(&b, p, RM).sub(&four_ky, p, RM);
                let root = disc.sqrt(p, RM);
                y.mul(&self.num(2.0), p, RM).div(&b.add(&root, p, RM), p, RM)
            }
        }
    }

    fn branch_consts(&self, side: Side) -> (f64, f64, f64, f64) {
        let m = &self.map;
        match side {
            Side::Left => (-1.0, m.c(), m.d0(), m.alpha()),
            Side::Right => (1.0, 1.0 - m.c(), m.d1(), m.beta()),
        }
    }

    pub fn apply(&mut self, side: Side, x: &BigFloat) -> BigFloat {
        let p = self.bits;
        let (sign, scale, amp, expo) = self.branch_consts(side);
        let c = self.num(self.map.c());
        let mut u = x.sub(&c, p, RM).div(&self.num(scale), p, RM);
        if sign < 0.0 {
            u = u.neg();
        }
        let h = self.chart_eval(side, &u);
        let term = self.pow(&h, &self.num(expo)).mul(&self.num(amp), p, RM);
        let sv = match side {
            Side::Left => self.num(self.map.d0()),
            Side::Right => self.num(1.0).sub(&self.num(self.map.d1()), p, RM),
        };
        if sign < 0.0 {
            sv.sub(&term, p, RM)
        } else {
            sv.add(&term, p, RM)
        }
    }

    pub fn pull(&mut self, side: Side, y: &BigFloat) -> BigFloat {
        let p = self.bits;
        let (sign, scale, amp, expo) = self.branch_consts(side);
        let sv = match side {
            Side::Left => self.num(self.map.d0()),
            Side::Right => self.num(1.0).sub(&self.num(self.map.d1()), p, RM),
        };
        let mut big_h = y.sub(&sv, p, RM).div(&self.num(amp), p, RM);
        if sign < 0.0 {
            big_h = big_h.neg();
        }
        if big_h.is_negative() {
            big_h = self.num(0.0);
        }
        // the reciprocal exponent is formed at full precision so that pull inverts apply
        let inv = self.num(1.0).div(&self.num(expo), p, RM);
        let h = self.pow(&big_h, &inv);
        let u = self.chart_inverse(side, &h);
        let step = u.mul(&self.num(scale), p, RM);
        let c = self.num(self.map.c());
        if sign < 0.0 {
            c.sub(&step, p, RM)
        } else {
            c.add(&step, p, RM)
        }
    }

    fn side_of(&self, x: &BigFloat) -> Option<Side> {
        let c = self.num(self.map.c());
        match x.cmp(&c) {
            Some(s) if s < 0 => Some(Side::Left),
            Some(s) if s > 0 => Some(Side::Right),
            _ => None,
        }
    }

    /// Forward orbit of `x0` rounded to doubles; stops at `c`.
    pub fn iterate(&mut self, x0: f64, n: usize) -> Vec<f64> {
        let mut x = self.num(x0);
        let mut out = vec![x0];
        for _ in 0..n {
            let Some(side) = self.side_of(&x) else { break };
            x = self.apply(side, &x);
            out.push(to_f64(&x));
        }
        out
    }

    /// Periodic point of `word` by pullback iteration, as a big float.
    pub fn periodic_point(&mut self, word: &Itinerary) -> Result<BigFloat> {
        let p = self.bits;
        let start = crate::orbit::periodic_point(&self.map, word)?;
        let mut x = self.num(start);
        // each sweep contracts by at least lambda^{|word|}
        let per_sweep = (self.map.expansion_floor().ln() * word.len() as f64).max(1e-3);
        let sweeps = ((p as f64 * std::f64::consts::LN_2) / per_sweep).ceil() as usize + 4;
        for _ in 0..sweeps.min(100_000) {
            for &s in word.symbols().iter().rev() {
                x = self.pull(s, &x);
            }
        }
        Ok(x)
    }

    /// Push `x` along `word`; returns the visited sides and the endpoint.
    pub fn push(&mut self, x: &BigFloat, steps: usize) -> (Vec<Option<Side>>, BigFloat) {
        let mut cur = x.clone();
        let mut sides = Vec::with_capacity(steps);
        for _ in 0..steps {
            let s = self.side_of(&cur);
            sides.push(s);
            let Some(side) = s else { break };
            cur = self.apply(side, &cur);
        }
        (sides, cur)
    }
}
