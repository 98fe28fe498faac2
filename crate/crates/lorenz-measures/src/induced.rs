//! First-return Markov structure on a one-sided neighbourhood `J = (c, p)`
//! and the cylinder tower over its leftmost branch.
//!
//! Every branch of `f^n` restricted to a cylinder of `J` has an image whose
//! endpoints lie on the forward orbits of `c_-`, `c_+` and `p`. Images are
//! therefore tracked symbolically; equal images are merged with a `u128`
//! multiplicity so that the Markov property can be checked for every branch
//! up to large return times, while explicit branches are materialized only
//! up to a piece cap.
//!
//! The connection `f^{t0}(c_+) = c` is treated as exact: the tower is built
//! on anchors obtained by pulling `c` back along the `c_+` word.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{LorenzMap, Side};
use crate::orbit::{periodic_point, singular_orbit, Itinerary, SingularOrbit, DEFAULT_C_TOL};

/// Horizon for singular-orbit hypothesis checks.
pub const HYPOTHESIS_HORIZON: usize = 400;

pub const DEFAULT_R_MAX: usize = 40;
pub const DEFAULT_DEPTH: usize = 30;
/// Live explicit pieces allowed before materialization stops.
pub const DEFAULT_PIECE_CAP: usize = 1 << 16;

/// Offsets below this are propagated in log form.
const LINEAR_FLOOR: f64 = 1e-280;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    /// `min {j >= 1 : f^j(c_+) = c}`.
    pub t0: usize,
    /// Orbit `f(c_+), ..., f^{t0-1}(c_+)`.
    pub c_plus_orbit: Vec<f64>,
    /// Smallest point of the `c_-` orbit above `c`, if any was seen.
    pub c_minus_min_above: Option<f64>,
    /// Hit time of `c_-`, if its orbit reaches `c`.
    pub c_minus_hit: Option<usize>,
    /// The `c_-` orbit was checked for its full future (cycle or hit).
    pub c_minus_complete: bool,
}

/// Gate: `c_+` must reach `c`, and the `c_-` orbit must avoid `(c, c + r_cap)`.
pub fn check_hypotheses(map: &LorenzMap, r_cap: f64) -> Result<Hypotheses> {
    if !(r_cap > 0.0) {
        return Err(Error::InvalidArgument("r_cap must be positive".into()));
    }
    let plus = singular_orbit(map, Side::Right, HYPOTHESIS_HORIZON, DEFAULT_C_TOL)?;
    let Some(t0) = plus.period else {
        return Err(Error::Inapplicable(format!(
            "f^n(c+) does not reach c within {HYPOTHESIS_HORIZON} steps"
        )));
    };
    let minus = singular_orbit(map, Side::Left, HYPOTHESIS_HORIZON, DEFAULT_C_TOL)?;
    let c = map.c();
    let min_above = minus
        .points_before_hit()
        .iter()
        .copied()
        .filter(|&x| x > c)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    if let Some(m) = min_above {
        if m < c + r_cap {
            return Err(Error::Inapplicable(format!(
                "the c- orbit visits {m} inside (c, c + r_cap) with r_cap = {r_cap}"
            )));
        }
    }
    Ok(Hypotheses {
        t0,
        c_plus_orbit: plus.points_before_hit().to_vec(),
        c_minus_min_above: min_above,
        c_minus_hit: minus.period,
        c_minus_complete: minus.period.is_some() || minus.record.cycle.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiceInterval {
    pub p: f64,
    pub word: Itinerary,
    pub r_cap: f64,
    /// `orbit[k] = f^k(p)` over one period.
    pub orbit: Vec<f64>,
}

impl NiceInterval {
    pub fn len(&self, map: &LorenzMap) -> f64 {
        self.p - map.c()
    }

    /// Re-check all invariants of a nice interval against `map`.
    pub fn validate(&self, map: &LorenzMap) -> Result<()> {
        let hyp = check_hypotheses(map, self.r_cap)?;
        admissible(map, &self.word, self.p, &self.orbit, self.r_cap, &hyp)
            .then_some(())
            .ok_or_else(|| Error::Inapplicable(format!("p = {} is not a nice endpoint", self.p)))
    }
}

/// Orbit of the periodic point `p` of `word`, rebuilt by pullback so that it
/// closes exactly: `orbit[k] = f^k(p)`.
pub fn periodic_orbit(map: &LorenzMap, word: &Itinerary, p: f64) -> Vec<f64> {
    let n = word.len();
    let mut orbit = vec![0.0; n];
    let mut x = p;
    for k in (0..n).rev() {
        let s = word.symbols()[k];
        let (a, b) = map.image(s);
        x = map.pull(s, x.clamp(a, b));
        orbit[k] = x;
    }
    orbit[0] = p;
    orbit
}

fn admissible(map: &LorenzMap, word: &Itinerary, p: f64, orbit: &[f64], r_cap: f64, hyp: &Hypotheses) -> bool {
    let c = map.c();
    if !(p > c && p < c + r_cap) {
        return false;
    }
    // closes up, follows the word, and p is the least orbit point above c
    let mut x = p;
    for (k, &s) in word.symbols().iter().enumerate() {
        if map.side_of(orbit[k]) != Some(s) {
            return false;
        }
        if k > 0 && orbit[k] > c && orbit[k] <= p {
            return false;
        }
        x = map.apply(s, x);
    }
    let _ = x;
    let back = map.apply(word.symbols()[word.len() - 1], orbit[word.len() - 1]);
    if (back - p).abs() > 1e-10 {
        return false;
    }
    // p lies below every c+ orbit point above c, and no boundary orbit enters J
    if hyp.c_plus_orbit.iter().any(|&x| x > c && x <= p) {
        return false;
    }
    if hyp.c_minus_min_above.is_some_and(|m| m <= p) {
        return false;
    }
    true
}

/// Shortest primitive word starting with `R` whose periodic point is a nice
/// endpoint; ties go to the smallest `p - c`.
pub fn find_nice_interval(map: &LorenzMap, r_cap: f64, max_word_len: usize) -> Result<NiceInterval> {
    let hyp = check_hypotheses(map, r_cap)?;
    for len in 1..=max_word_len {
        let mut best: Option<NiceInterval> = None;
        for bits in 0u64..(1u64 << (len - 1)) {
            let mut sym = vec![Side::Right];
            for i in 0..len - 1 {
                sym.push(if bits >> (len - 2 - i) & 1 == 1 { Side::Right } else { Side::Left });
            }
            let word = Itinerary::new(sym)?;
            if !word.is_primitive() {
                continue;
            }
            let Ok(p) = periodic_point(map, &word) else { continue };
            let orbit = periodic_orbit(map, &word, p);
            if !admissible(map, &word, p, &orbit, r_cap, &hyp) {
                continue;
            }
            if best.as_ref().is_none_or(|b| p < b.p) {
                best = Some(NiceInterval { p, word, r_cap, orbit });
            }
        }
        if let Some(b) = best {
            return Ok(b);
        }
    }
    Err(Error::SearchExhausted(max_word_len))
}

/// Symbolic endpoint of an image interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Pt {
    C,
    Zero,
    One,
    /// `f^k(c_+)`, `1 <= k < t0`.
    Plus(usize),
    /// `f^k(c_-)`, canonical index.
    Minus(usize),
    /// `f^k(p)`, `k` modulo the period.
    P(usize),
}

struct Points {
    c: f64,
    t0: usize,
    plus: Vec<f64>,
    minus: SingularOrbit,
    p_orbit: Vec<f64>,
}

impl Points {
    fn plus(&self, k: usize) -> Pt {
        if k == self.t0 {
            Pt::C
        } else {
            self.canon(Pt::Plus(k))
        }
    }

    fn minus(&self, k: usize) -> Result<Pt> {
        if self.minus.period == Some(k) {
            return Ok(Pt::C);
        }
        let mut k = k;
        if let Some(cy) = self.minus.record.cycle {
            // points[j] = f^{j+1}(c-)
            let idx = k - 1;
            if idx >= cy.start + cy.period {
                k = cy.start + (idx - cy.start) % cy.period + 1;
            }
        }
        if k > self.minus.points_before_hit().len() {
            return Err(Error::Budget(k));
        }
        Ok(self.canon(Pt::Minus(k)))
    }

    fn canon(&self, pt: Pt) -> Pt {
        match self.value(pt) {
            v if v == 0.0 => Pt::Zero,
            v if v == 1.0 => Pt::One,
            _ => pt,
        }
    }

    fn value(&self, pt: Pt) -> f64 {
        match pt {
            Pt::C => self.c,
            Pt::Zero => 0.0,
            Pt::One => 1.0,
            Pt::Plus(k) => self.plus[k - 1],
            Pt::Minus(k) => self.minus.record.points[k - 1],
            Pt::P(k) => self.p_orbit[k],
        }
    }

    /// Image of an endpoint under the branch on `side`.
    fn step(&self, pt: Pt, side: Side) -> Result<Pt> {
        Ok(match pt {
            Pt::C => match side {
                Side::Left => self.minus(1)?,
                Side::Right => self.plus(1),
            },
            Pt::Zero => Pt::Zero,
            Pt::One => Pt::One,
            Pt::Plus(k) => self.plus(k + 1),
            Pt::Minus(k) => self.minus(k + 1)?,
            Pt::P(k) => Pt::P((k + 1) % self.p_orbit.len()),
        })
    }
}

type State = (Pt, Pt);

/// Outcome of one step on an image interval.
struct Split {
    returns: bool,
    /// Pieces outside `J` with the branch they continue through.
    next: Vec<(State, Side)>,
}

fn split(pts: &Points, (a, b): State) -> std::result::Result<Split, ()> {
    let c = pts.c;
    let p = pts.value(Pt::P(0));
    let (va, vb) = (pts.value(a), pts.value(b));
    let a_le_c = a == Pt::C || va < c;
    let b_ge_p = b == Pt::P(0) || vb > p;
    let meets_j = (a == Pt::C || va < p) && (b == Pt::P(0) || vb > c) && !(a == Pt::P(0)) && !(b == Pt::C);
    let mut next = Vec::new();
    if !meets_j {
        if a_le_c && vb > c && b != Pt::C {
            // straddles c without reaching J: impossible since J is adjacent to c
            return Err(());
        }
        let side = if a_le_c && (b == Pt::C || vb <= c) { Side::Left } else { Side::Right };
        next.push(((a, b), side));
        return Ok(Split { returns: false, next });
    }
    if !(a_le_c && b_ge_p) {
        return Err(());
    }
    if a != Pt::C {
        next.push(((a, Pt::C), Side::Left));
    }
    if b != Pt::P(0) {
        next.push(((Pt::P(0), b), Side::Right));
    }
    Ok(Split { returns: true, next })
}

fn step_state(pts: &Points, (a, b): State, side: Side) -> Result<State> {
    Ok((pts.step(a, side)?, pts.step(b, side)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnBranch {
    pub word: Itinerary,
    #[serde(rename = "R")]
    pub r: usize,
    /// Domain `(lo, hi)` inside `J`; `f^R` maps it increasingly onto `J`.
    pub interval: (f64, f64),
    /// `hi - lo` carried without cancellation.
    pub width: f64,
    /// Largest relative endpoint residual along the pullback chain.
    pub image_error: f64,
}

impl ReturnBranch {
    pub fn len(&self) -> f64 {
        self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnBranchSet {
    pub r_max: usize,
    /// Branches ordered by position.
    pub branches: Vec<ReturnBranch>,
    /// `counts[R]`: number of first-return branches with return time `R`.
    pub counts: Vec<u128>,
    /// Largest `R` through which `branches` is exhaustive.
    pub complete_through: usize,
    /// Distinct symbolic image intervals met by the enumeration.
    pub states: usize,
    pub max_image_error: f64,
    pub covered_length: f64,
}

impl ReturnBranchSet {
    pub fn total(&self) -> u128 {
        self.counts.iter().sum()
    }

    pub fn leftmost(&self) -> Option<&ReturnBranch> {
        self.branches.first()
    }
}

fn points_for(map: &LorenzMap, j: &NiceInterval) -> Result<Points> {
    let hyp = check_hypotheses(map, j.r_cap)?;
    let minus = singular_orbit(map, Side::Left, HYPOTHESIS_HORIZON, DEFAULT_C_TOL)?;
    Ok(Points {
        c: map.c(),
        t0: hyp.t0,
        plus: hyp.c_plus_orbit,
        minus,
        p_orbit: j.orbit.clone(),
    })
}

/// First-return branches of `J` up to return time `r_max`.
pub fn enumerate_return_branches(map: &LorenzMap, j: &NiceInterval, r_max: usize) -> Result<ReturnBranchSet> {
    enumerate_with_cap(map, j, r_max, DEFAULT_PIECE_CAP)
}

pub fn enumerate_with_cap(
    map: &LorenzMap,
    j: &NiceInterval,
    r_max: usize,
    piece_cap: usize,
) -> Result<ReturnBranchSet> {
    let pts = points_for(map, j)?;
    let start: State = (Pt::C, Pt::P(0));
    let violation = |word: &[Side], step: usize| Error::MarkovViolation {
        word: word.iter().map(|s| s.symbol()).collect(),
        step,
    };

    // merged graph: state -> (multiplicity, one word reaching it)
    let mut layer: HashMap<State, (u128, Vec<Side>)> = HashMap::new();
    layer.insert(step_state(&pts, start, Side::Right)?, (1, vec![Side::Right]));
    let mut counts = vec![0u128; r_max + 1];
    let mut seen_states: BTreeMap<State, ()> = BTreeMap::new();
    // explicit pieces: (word, state)
    let mut pieces: Option<Vec<(Vec<Side>, State)>> =
        Some(vec![(vec![Side::Right], step_state(&pts, start, Side::Right)?)]);
    let mut words: Vec<Vec<Side>> = Vec::new();
    let mut complete_through = 0;

    for r in 1..=r_max {
        let mut next_layer: HashMap<State, (u128, Vec<Side>)> = HashMap::new();
        for (state, (mult, word)) in &layer {
            seen_states.insert(*state, ());
            let sp = split(&pts, *state).map_err(|_| violation(word, r))?;
            if sp.returns {
                counts[r] += mult;
            }
            if r == r_max {
                continue;
            }
            for (piece, side) in sp.next {
                let img = step_state(&pts, piece, side)?;
                let e = next_layer.entry(img).or_insert_with(|| {
                    let mut w = word.clone();
                    w.push(side);
                    (0, w)
                });
                e.0 += mult;
            }
        }
        layer = next_layer;

        if let Some(live) = pieces.take() {
            let mut next = Vec::new();
            for (word, state) in live {
                let sp = split(&pts, state).map_err(|_| violation(&word, r))?;
                if sp.returns {
                    words.push(word.clone());
                }
                if r == r_max {
                    continue;
                }
                for (piece, side) in sp.next {
                    let mut w = word.clone();
                    w.push(side);
                    next.push((w, step_state(&pts, piece, side)?));
                }
            }
            complete_through = r;
            if next.len() <= piece_cap {
                pieces = Some(next);
            }
        }
    }

    let c = map.c();
    let p = j.p;
    let mut branches = Vec::with_capacity(words.len());
    for w in words {
        branches.push(materialize(map, c, p, w)?);
    }
    // branches narrower than an ulp collapse to a point; they sort before a
    // neighbour that starts at the same double
    branches.sort_by(|x, y| {
        (x.interval.0.total_cmp(&y.interval.0)).then(x.interval.1.total_cmp(&y.interval.1))
    });
    for pair in branches.windows(2) {
        if pair[0].interval.1 > pair[1].interval.0 + 1e-12 * (p - c) {
            return Err(violation(pair[1].word.symbols(), pair[1].r));
        }
    }
    let max_image_error = branches.iter().map(|b| b.image_error).fold(0.0, f64::max);
    let covered_length = branches.iter().map(ReturnBranch::len).sum();
    Ok(ReturnBranchSet {
        r_max,
        branches,
        counts,
        complete_through,
        states: seen_states.len(),
        max_image_error,
        covered_length,
    })
}

fn ulp(x: f64) -> f64 {
    f64::from_bits(x.abs().to_bits() + 1) - x.abs()
}

/// Pull `J` back along `word` and check the chain step by step.
fn materialize(map: &LorenzMap, c: f64, p: f64, word: Vec<Side>) -> Result<ReturnBranch> {
    let r = word.len();
    let jl = p - c;
    let mut chain = vec![(c, p); r + 1];
    for k in (0..r).rev() {
        let s = word[k];
        let (a, b) = map.image(s);
        let (lo, hi) = chain[k + 1];
        chain[k] = (map.pull(s, lo.clamp(a, b)), map.pull(s, hi.clamp(a, b)));
    }
    // widths carried as offsets keep full relative precision on tiny branches
    let mut widths = vec![jl; r + 1];
    for k in (0..r).rev() {
        widths[k] = map.pull_offset(word[k], chain[k].0, widths[k + 1]);
    }
    let mut err: f64 = 0.0;
    let mut w = widths[0];
    for k in 0..r {
        let s = word[k];
        let (lo, hi) = chain[k];
        let (nlo, nhi) = chain[k + 1];
        // residual beyond what rounding explains: two ulps in the pulled
        // endpoint and eight in the image (a chart, a power and the affine
        // wrap each round; 4.4 ulps seen on quadratic charts)
        let slope = map.slope(s, lo).max(map.slope(s, hi));
        let allowance = |x: f64, y: f64| 2.0 * slope * ulp(x) + 8.0 * ulp(y);
        let width = widths[k + 1].max(f64::MIN_POSITIVE);
        let rl = ((map.apply(s, lo) - nlo).abs() - allowance(lo, nlo)).max(0.0);
        let rh = ((map.apply(s, hi) - nhi).abs() - allowance(hi, nhi)).max(0.0);
        err = err.max(rl / width).max(rh / width);
        w = map.step_offset(s, lo, w);
        // strictly before the return the image stays outside J
        if k > 0 && hi > c + 1e-12 * jl && lo < p - 1e-12 * jl {
            return Err(Error::MarkovViolation {
                word: word.iter().map(|s| s.symbol()).collect(),
                step: k,
            });
        }
    }
    // image length and final endpoints, relative to |J|
    err = err.max((w / jl - 1.0).abs());
    let (lo, hi) = chain[r - 1];
    let last = word[r - 1];
    err = err.max((map.apply(last, lo) - c).abs() / jl).max((map.apply(last, hi) - p).abs() / jl);
    Ok(ReturnBranch {
        word: Itinerary::new(word)?,
        r,
        interval: chain[0],
        width: widths[0],
        image_error: err,
    })
}

/// `f^{t0}` near `c_+` and its inverse, in offset and log-offset form.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftmostReturn {
    map: LorenzMap,
    t0: usize,
    word: Vec<Side>,
    /// `anchors[k]`: preimage of `c` on the `c_+` orbit, `f^k`-image of `c_+`.
    anchors: Vec<f64>,
    /// `ln (f^{t0-1})'` at `anchors[1]`.
    ln_chain_slope: f64,
}

impl LeftmostReturn {
    pub fn new(map: &LorenzMap, t0: usize, c_plus_orbit: &[f64]) -> Result<Self> {
        if t0 == 0 || c_plus_orbit.len() + 1 != t0 {
            return Err(Error::InvalidArgument("c+ orbit must have t0 - 1 points".into()));
        }
        let mut word = vec![Side::Right];
        for &x in c_plus_orbit {
            word.push(map.side_of(x).ok_or(Error::Singularity)?);
        }
        let c = map.c();
        let mut anchors = vec![c; t0 + 1];
        for k in (1..t0).rev() {
            let s = word[k];
            let (a, b) = map.image(s);
            anchors[k] = map.pull(s, anchors[k + 1].clamp(a, b));
        }
        let ln_chain_slope = (1..t0).map(|k| map.log_slope(word[k], anchors[k])).sum();
        Ok(Self {
            map: *map,
            t0,
            word,
            anchors,
            ln_chain_slope,
        })
    }

    pub fn t0(&self) -> usize {
        self.t0
    }

    pub fn word(&self) -> &[Side] {
        &self.word
    }

    /// Sums of `|ln|x - c||` and `ln f'(x)` over the `t0` points
    /// `c + s, f(c + s), ..., f^{t0-1}(c + s)`, from `ln s`.
    pub fn block_sums(&self, ln_s: f64) -> (f64, f64) {
        let c = self.map.c();
        let mut dist = -ln_s;
        let mut slope = self.map.log_slope_near_c(Side::Right, ln_s);
        let ln_dy = self.map.ln_first_offset(Side::Right, ln_s);
        // below the floor the offsets vanish next to the anchors
        let mut d = if ln_dy < LINEAR_FLOOR.ln() { 0.0 } else { ln_dy.exp() };
        for k in 1..self.t0 {
            let x = self.anchors[k] + d;
            dist -= (x - c).abs().ln();
            slope += self.map.log_slope(self.word[k], x);
            if k + 1 < self.t0 {
                d = self.map.step_offset(self.word[k], self.anchors[k], d);
            }
        }
        (dist, slope)
    }

    /// `ln (f^{t0}(c + s) - c)` from `ln s`.
    pub fn ln_forward(&self, ln_s: f64) -> f64 {
        let ln_dy = self.map.ln_first_offset(Side::Right, ln_s);
        if ln_dy < LINEAR_FLOOR.ln() {
            return ln_dy + self.ln_chain_slope;
        }
        let mut d = ln_dy.exp();
        for k in 1..self.t0 {
            d = self.map.step_offset(self.word[k], self.anchors[k], d);
        }
        d.ln()
    }

    /// `ln s` with `f^{t0}(c + s) - c = w`, from `ln w`.
    pub fn ln_inverse(&self, ln_w: f64) -> f64 {
        let ln_dx1 = if ln_w < LINEAR_FLOOR.ln() {
            ln_w - self.ln_chain_slope
        } else {
            let mut d = ln_w.exp();
            for k in (1..self.t0).rev() {
                d = self.map.pull_offset(self.word[k], self.anchors[k], d);
            }
            d.ln()
        };
        self.map.ln_first_offset_inverse(Side::Right, ln_dx1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerAtom {
    pub level: usize,
    /// Index into the tower's `base_branches`.
    pub branch: usize,
    /// `R_c = level + 1`.
    pub rc: u64,
    /// `t0 * level + R(branch)`.
    pub rtilde: u64,
    /// `ln (lo - c)`, `ln (hi - c)` of the atom.
    pub ln_lo: f64,
    pub ln_hi: f64,
    pub ln_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderTower {
    pub t0: usize,
    pub q: f64,
    pub p: f64,
    pub c: f64,
    pub word0: Itinerary,
    /// `ln |P_n(c)| = ln (q_n - c)` for `n = 0..=depth`, with `q_0 = p`.
    pub ln_widths: Vec<f64>,
    /// First level whose width is below the smallest normal double, if any.
    pub below_double_from: Option<usize>,
    /// Non-leftmost branches: the level-0 atoms.
    pub base_branches: Vec<ReturnBranch>,
    pub atoms: Vec<TowerAtom>,
    /// Largest `|G^n(atom) - branch| / |J|` over atoms, endpoint check of `F_c`.
    pub max_endpoint_error: f64,
    #[serde(skip)]
    leftmost: Option<LeftmostReturn>,
}

/// `ln(e^hi - e^lo)` for `lo < hi`.
fn ln_gap(lo: f64, hi: f64) -> f64 {
    hi + (-(lo - hi).exp_m1()).ln()
}

impl CylinderTower {
    pub fn depth(&self) -> usize {
        self.ln_widths.len() - 1
    }

    pub fn widths(&self) -> Vec<f64> {
        self.ln_widths.iter().map(|l| l.exp()).collect()
    }

    /// `R_c` as prescribed on the levels: `n + 1` on `P_n(c) \ P_{n+1}(c)`.
    pub fn rc_of_level(level: usize) -> u64 {
        level as u64 + 1
    }

    /// Level `n` with `x - c` in `(q_{n+1} - c, q_n - c]`, from `ln (x - c)`.
    pub fn level_of(&self, ln_s: f64) -> Option<usize> {
        if ln_s > self.ln_widths[0] {
            return None;
        }
        (0..self.depth()).find(|&n| ln_s > self.ln_widths[n + 1])
    }

    pub fn leftmost_return(&self) -> Option<&LeftmostReturn> {
        self.leftmost.as_ref()
    }

    /// `min over atoms of level n of |log|x - c||` divided by `n + 1`,
    /// minimized over levels: a fitted `K` with `|log|x - c|| >= K R_c`.
    pub fn log_distance_slope(&self) -> f64 {
        (0..self.depth())
            .map(|n| -self.ln_widths[n] / (n + 1) as f64)
            .fold(f64::INFINITY, f64::min)
    }

    /// Exactness of `R_c` along `F`: for a point of level `n`, each
    /// application of the leftmost return lowers the level by one.
    /// Returns the number of failures among the sampled points.
    pub fn exactness_failures(&self, samples: usize, seed: u64) -> usize {
        use rand::{Rng, SeedableRng};
        let Some(g) = &self.leftmost else { return samples };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let top = self.depth().min(8);
        let mut failures = 0;
        for _ in 0..samples {
            let n = rng.random_range(0..top);
            let (lo, hi) = (self.ln_widths[n + 1], self.ln_widths[n]);
            let ln_s = lo + (hi - lo) * rng.random_range(0.001..0.999);
            let rc = Self::rc_of_level(n);
            let mut cur = ln_s;
            let mut ok = true;
            for j in 0..rc as usize {
                match self.level_of(cur) {
                    Some(m) if m as u64 + 1 + j as u64 == rc => {}
                    _ => ok = false,
                }
                if j + 1 < rc as usize {
                    cur = g.ln_forward(cur);
                }
            }
            if !ok {
                failures += 1;
            }
        }
        failures
    }
}

/// Tower of pullbacks of `J` along the leftmost branch, with `P*` atoms up
/// to `depth` built from the explicit branches.
pub fn cylinder_tower(
    map: &LorenzMap,
    j: &NiceInterval,
    branches: &ReturnBranchSet,
    depth: usize,
) -> Result<CylinderTower> {
    let hyp = check_hypotheses(map, j.r_cap)?;
    let c = map.c();
    let p = j.p;
    let left = branches
        .leftmost()
        .filter(|b| b.interval.0 == c && b.r == hyp.t0)
        .ok_or_else(|| Error::Inapplicable("leftmost branch (c, q) with R = t0 is missing".into()))?;
    let q = left.interval.1;
    let g = LeftmostReturn::new(map, hyp.t0, &hyp.c_plus_orbit)?;
    let mut ln_widths = vec![(p - c).ln()];
    for n in 0..depth {
        let next = g.ln_inverse(ln_widths[n]);
        // level 1 is the leftmost branch itself
        ln_widths.push(if n == 0 { (q - c).ln() } else { next });
    }
    let below_double_from = ln_widths.iter().position(|&l| l < f64::MIN_POSITIVE.ln());
    // only the exhaustive part of the explicit list enters the tower
    let base_branches: Vec<ReturnBranch> = branches
        .branches
        .iter()
        .skip(1)
        .filter(|b| b.r <= branches.complete_through)
        .cloned()
        .collect();
    if base_branches.is_empty() {
        return Err(Error::Empty("return branches besides the leftmost one"));
    }
    let mut atoms = Vec::new();
    let mut max_err: f64 = 0.0;
    for (bi, b) in base_branches.iter().enumerate() {
        let (mut lo, mut hi) = ((b.interval.0 - c).ln(), (b.interval.1 - c).ln());
        for level in 0..=depth {
            if level > 0 {
                lo = g.ln_inverse(lo);
                hi = g.ln_inverse(hi);
                if level <= 3 && hi > LINEAR_FLOOR.ln() {
                    // F_c endpoint check: push back up to level 0
                    let (mut l2, mut h2) = (lo, hi);
                    for _ in 0..level {
                        l2 = g.ln_forward(l2);
                        h2 = g.ln_forward(h2);
                    }
                    let e = ((l2.exp() + c - b.interval.0).abs()).max((h2.exp() + c - b.interval.1).abs());
                    max_err = max_err.max(e / (p - c));
                }
            }
            atoms.push(TowerAtom {
                level,
                branch: bi,
                rc: level as u64 + 1,
                rtilde: (hyp.t0 * level + b.r) as u64,
                ln_lo: lo,
                ln_hi: hi,
                ln_len: ln_gap(lo, hi),
            });
        }
    }
    Ok(CylinderTower {
        t0: hyp.t0,
        q,
        p,
        c,
        word0: left.word.clone(),
        ln_widths,
        below_double_from,
        base_branches,
        atoms,
        max_endpoint_error: max_err.max(branches.max_image_error),
        leftmost: Some(g),
    })
}
