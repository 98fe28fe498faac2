//! Bernoulli measures on the atoms of a cylinder tower, zeta-weighted tails
//! over the tower levels, and the functionals they feed: entropy, induced
//! times, Kac projection, and sampled orbit statistics.
//!
//! Atoms of level `n` have `R_c = n + 1` and `f`-time `t0 n + R(branch)`.
//! Levels beyond the computed depth reuse the deepest level's profile.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::induced::CylinderTower;
use crate::map::{LorenzMap, Side};
use crate::zeta::{log_power_tail, power_tail, zeta, Bounded};

/// `x ln(1/x)`, continuous at 0.
pub fn entropy_term(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Neumaier summation.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Probability vector proportional to `exp(ln_lengths)`.
pub fn normalized_from_ln(ln_lengths: &[f64]) -> Result<Vec<f64>> {
    if ln_lengths.is_empty() {
        return Err(Error::Empty("atom list"));
    }
    // scale by the largest term so equal lengths stay exactly equal
    let m = ln_lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = ln_lengths.iter().map(|l| (l - m).exp()).collect();
    let total = compensated_sum(scaled.iter().copied());
    Ok(scaled.into_iter().map(|x| x / total).collect())
}

/// Length-proportional weights on the tower atoms, in tower order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasure {
    pub weights: Vec<f64>,
    pub ln_weights: Vec<f64>,
    /// Base mass of each level `0..=depth`.
    pub level_mass: Vec<f64>,
}

pub fn base_measure(tower: &CylinderTower) -> Result<BaseMeasure> {
    let ln_len: Vec<f64> = tower.atoms.iter().map(|a| a.ln_len).collect();
    if ln_len.is_empty() {
        return Err(Error::Empty("tower"));
    }
    let total = log_sum_exp(ln_len.iter().copied());
    let ln_weights: Vec<f64> = ln_len.iter().map(|l| l - total).collect();
    let mut level_mass = vec![0.0; tower.depth() + 1];
    for (a, lw) in tower.atoms.iter().zip(&ln_weights) {
        level_mass[a.level] += lw.exp();
    }
    Ok(BaseMeasure {
        weights: normalized_from_ln(&ln_len)?,
        ln_weights,
        level_mass,
    })
}

/// Within-level distribution of the base measure over the base branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProfile {
    pub level: usize,
    pub proportions: Vec<f64>,
    /// `sum H(proportion)`.
    pub entropy: f64,
    /// Mean branch return time under the proportions.
    pub mean_r: f64,
}

/// Level weights `z k^{-s}` on levels `ell + k`, `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTail {
    pub z: f64,
    pub ell: usize,
    pub s: f64,
}

impl PowerTail {
    pub fn weight(&self, level: usize) -> f64 {
        if level <= self.ell {
            0.0
        } else {
            self.z * ((level - self.ell) as f64).powf(-self.s)
        }
    }

    pub fn mass(&self) -> Result<Bounded> {
        let zs = zeta(self.s)?;
        Ok(Bounded {
            value: self.z * zs.value,
            error: self.z * zs.error,
        })
    }

    /// `sum_k w_k (ell + k + 1)`; infinite for `s <= 2`.
    pub fn first_moment(&self) -> Bounded {
        if self.s <= 2.0 {
            return Bounded {
                value: f64::INFINITY,
                error: 0.0,
            };
        }
        let a = zeta(self.s - 1.0).expect("s - 1 > 1");
        let b = zeta(self.s).expect("s > 1");
        let l1 = (self.ell + 1) as f64;
        Bounded {
            value: self.z * (a.value + l1 * b.value),
            error: self.z * (a.error + l1 * b.error),
        }
    }

    /// `sum_{k <= n - ell} w_k (ell + k + 1)^2` for each level cap `n` in `caps`.
    pub fn second_moment_partials(&self, caps: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(caps.len());
        let mut acc = 0.0;
        let mut k = 0usize;
        for &n in caps {
            while self.ell + k < n {
                k += 1;
                let r = (self.ell + k + 1) as f64;
                acc += r * r * (k as f64).powf(-self.s);
            }
            out.push(self.z * acc);
        }
        out
    }

    /// Convergence of `sum (level + 1)^2 w`: needs `s > 3`.
    pub fn second_moment_finite(&self) -> bool {
        self.s > 3.0
    }
}

/// Head of base weights on levels `<= ell` plus a power-law tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassDistribution {
    pub ell: usize,
    /// Tail exponent is `2 + alpha_mass`.
    pub alpha_mass: f64,
    pub t0: u64,
    pub head: Vec<HeadAtom>,
    pub head_mass: f64,
    /// Base mass of `P_{ell+1}(c)`, redistributed over the tail.
    pub tail_mass: f64,
    pub tail: PowerTail,
    /// Profiles for levels `0..=depth`.
    pub profiles: Vec<LevelProfile>,
    /// Return time of each base branch.
    pub branch_r: Vec<u64>,
    /// Head weights, level-major over `(ell + 1) x branches`.
    #[serde(skip)]
    head_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadAtom {
    pub level: usize,
    pub branch: usize,
    pub weight: f64,
}

/// `m_ell` with `alpha_mass` in `(0, 1)`.
pub fn mass_distribution(
    base: &BaseMeasure,
    tower: &CylinderTower,
    ell: usize,
    alpha_mass: f64,
) -> Result<MassDistribution> {
    if !(alpha_mass > 0.0 && alpha_mass < 1.0) {
        return Err(Error::Parameter {
            name: "alpha_mass",
            value: alpha_mass,
            reason: "tail exponent 2 + alpha_mass needs alpha_mass in (0, 1)",
        });
    }
    mass_distribution_with_exponent(base, tower, ell, 2.0 + alpha_mass)
}

/// Same construction with an arbitrary tail exponent `s > 1`, for
/// comparison tails outside the admissible range.
pub fn mass_distribution_with_exponent(
    base: &BaseMeasure,
    tower: &CylinderTower,
    ell: usize,
    s: f64,
) -> Result<MassDistribution> {
    let depth = tower.depth();
    if ell >= depth {
        return Err(Error::InvalidArgument(format!(
            "head depth {ell} needs a tower deeper than {depth}"
        )));
    }
    if base.weights.len() != tower.atoms.len() {
        return Err(Error::InvalidArgument("base measure does not match the tower".into()));
    }
    let nb = tower.base_branches.len();
    let branch_r: Vec<u64> = tower.base_branches.iter().map(|b| b.r as u64).collect();
    let mut by_level: Vec<Vec<f64>> = vec![vec![f64::NEG_INFINITY; nb]; depth + 1];
    let mut head = Vec::new();
    let mut head_grid = vec![0.0; (ell + 1) * nb];
    for (i, a) in tower.atoms.iter().enumerate() {
        by_level[a.level][a.branch] = base.ln_weights[i];
        if a.level <= ell {
            head_grid[a.level * nb + a.branch] = base.weights[i];
            head.push(HeadAtom {
                level: a.level,
                branch: a.branch,
                weight: base.weights[i],
            });
        }
    }
    let profiles = by_level
        .iter()
        .enumerate()
        .map(|(level, lw)| {
            let proportions = normalized_from_ln(lw).expect("nonempty level");
            LevelProfile {
                level,
                entropy: proportions.iter().map(|&p| entropy_term(p)).sum(),
                mean_r: proportions.iter().zip(&branch_r).map(|(p, &r)| p * r as f64).sum(),
                proportions,
            }
        })
        .collect();
    let head_mass = compensated_sum(head.iter().map(|h| h.weight));
    let tail_mass: f64 = base.level_mass[ell + 1..].iter().sum();
    let zs = zeta(s)?;
    Ok(MassDistribution {
        ell,
        alpha_mass: s - 2.0,
        t0: tower.t0 as u64,
        head,
        head_mass,
        tail_mass,
        tail: PowerTail {
            z: tail_mass / zs.value,
            ell,
            s,
        },
        profiles,
        branch_r,
        head_grid,
    })
}

impl MassDistribution {
    pub fn depth(&self) -> usize {
        self.profiles.len() - 1
    }

    pub fn profile(&self, level: usize) -> &LevelProfile {
        &self.profiles[level.min(self.depth())]
    }

    /// `m(P)` of atom `(level, branch)`.
    pub fn weight(&self, level: usize, branch: usize) -> f64 {
        if level <= self.ell {
            let nb = self.branch_r.len();
            match self.head_grid.get(level * nb + branch) {
                Some(&w) => w,
                // deserialized values carry no grid
                None => self
                    .head
                    .iter()
                    .find(|h| h.level == level && h.branch == branch)
                    .map_or(0.0, |h| h.weight),
            }
        } else {
            self.tail.weight(level) * self.profile(level).proportions[branch]
        }
    }

    pub fn total(&self) -> Result<Bounded> {
        let t = self.tail.mass()?;
        Ok(Bounded {
            value: self.head_mass + t.value,
            // each stored weight carries a few ulps from exp and the log-sum
            error: t.error + 8.0 * f64::EPSILON,
        })
    }

    /// `2 (ell + 1) zeta(1 + alpha_mass)`.
    pub fn bound_c(&self) -> Result<f64> {
        Ok(2.0 * (self.ell + 1) as f64 * zeta(1.0 + self.alpha_mass)?.value)
    }

    /// Tail part of `int R_c`.
    pub fn rc_tail(&self) -> Bounded {
        self.tail.first_moment()
    }

    pub fn int_rc(&self) -> Bounded {
        let head: f64 = self.head.iter().map(|h| (h.level + 1) as f64 * h.weight).sum();
        let t = self.rc_tail();
        Bounded {
            value: head + t.value,
            error: t.error,
        }
    }

    /// `sum_k w_k g(ell + k)` where `g` is constant beyond the depth.
    fn tail_sum(&self, g: impl Fn(usize) -> f64) -> Result<Bounded> {
        let depth = self.depth();
        let mut value = 0.0;
        for level in self.ell + 1..=depth {
            value += self.tail.weight(level) * g(level);
        }
        let rest = power_tail(self.tail.s, (depth - self.ell + 1) as u64)?;
        let gd = g(depth);
        Ok(Bounded {
            value: value + self.tail.z * gd * rest.value,
            error: self.tail.z * gd.abs() * rest.error,
        })
    }

    /// Tail part of `sum H(m(P))`: level entropy plus within-level entropy.
    pub fn entropy_tail(&self) -> Result<Bounded> {
        let z = self.tail.z;
        if z == 0.0 {
            return Ok(Bounded { value: 0.0, error: 0.0 });
        }
        let s = self.tail.s;
        let zs = zeta(s)?;
        let ls = log_power_tail(s, 1)?;
        let levels = z * (-z.ln() * zs.value + s * ls.value);
        let within = self.tail_sum(|n| self.profile(n).entropy)?;
        Ok(Bounded {
            value: levels + within.value,
            error: z * (z.ln().abs() * zs.error + s * ls.error) + within.error,
        })
    }

    pub fn entropy(&self) -> Result<Bounded> {
        let head: f64 = self.head.iter().map(|h| entropy_term(h.weight)).sum();
        let t = self.entropy_tail()?;
        Ok(Bounded {
            value: head + t.value,
            error: t.error,
        })
    }

    /// `int R~ dm` with `R~ = t0 level + R(branch)`.
    pub fn int_rtilde(&self) -> Result<Bounded> {
        let head: f64 = self
            .head
            .iter()
            .map(|h| (self.t0 * h.level as u64 + self.branch_r[h.branch]) as f64 * h.weight)
            .sum();
        let t0 = self.t0 as f64;
        let tail = self.tail_sum(|n| t0 * n as f64 + self.profile(n).mean_r)?;
        // the linear part beyond the depth is handled exactly
        let depth = self.depth();
        let s = self.tail.s;
        let extra = if s > 2.0 {
            let a = power_tail(s - 1.0, (depth - self.ell + 1) as u64)?;
            let b = power_tail(s, (depth - self.ell + 1) as u64)?;
            let base = (self.ell as f64) * b.value + a.value;
            Bounded {
                value: self.tail.z * t0 * (base - depth as f64 * b.value),
                error: self.tail.z * t0 * (a.error + depth as f64 * b.error),
            }
        } else {
            Bounded {
                value: f64::INFINITY,
                error: 0.0,
            }
        };
        Ok(Bounded {
            value: head + tail.value + extra.value,
            error: tail.error + extra.error,
        })
    }

    /// Finite system of atoms on levels `<= max_level`, renormalized.
    pub fn truncate(&self, max_level: usize) -> FiniteSystem {
        let mut atoms = Vec::new();
        for level in 0..=max_level {
            for b in 0..self.branch_r.len() {
                let w = self.weight(level, b);
                if w > 0.0 {
                    atoms.push(FiniteAtom {
                        level,
                        branch: b,
                        rc: level as u64 + 1,
                        rtilde: self.t0 * level as u64 + self.branch_r[b],
                        weight: w,
                    });
                }
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        for a in &mut atoms {
            a.weight /= total;
        }
        FiniteSystem { t0: self.t0, atoms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteAtom {
    pub level: usize,
    pub branch: usize,
    pub rc: u64,
    pub rtilde: u64,
    pub weight: f64,
}

/// Bernoulli system on finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSystem {
    pub t0: u64,
    pub atoms: Vec<FiniteAtom>,
}

impl FiniteSystem {
    /// Atoms with `f`-time at most `max_rtilde`, renormalized.
    pub fn restrict_time(&self, max_rtilde: u64) -> Result<FiniteSystem> {
        let mut atoms: Vec<FiniteAtom> = self.atoms.iter().copied().filter(|a| a.rtilde <= max_rtilde).collect();
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if atoms.is_empty() || total <= 0.0 {
            return Err(Error::Empty("atoms within the time cap"));
        }
        for a in &mut atoms {
            a.weight /= total;
        }
        Ok(FiniteSystem { t0: self.t0, atoms })
    }

    pub fn entropy(&self) -> f64 {
        self.atoms.iter().map(|a| entropy_term(a.weight)).sum()
    }

    pub fn int_rc(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.rc as f64).sum()
    }

    pub fn int_rtilde(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.rtilde as f64).sum()
    }

    /// `h_nu / int R_c`, then divided by `int R deta = int R~ / int R_c`.
    pub fn abramov(&self) -> AbramovChain {
        let h_nu = self.entropy();
        let int_rc = self.int_rc();
        let h_eta = h_nu / int_rc;
        let int_r_eta = self.int_rtilde() / int_rc;
        AbramovChain {
            h_nu,
            int_rc,
            h_eta,
            int_r_eta,
            h_mu: h_eta / int_r_eta,
        }
    }

    /// `L`/`R` word of each atom's `f`-orbit segment.
    pub fn words(&self, tower: &CylinderTower) -> Vec<Vec<Side>> {
        self.atoms
            .iter()
            .map(|a| {
                let mut w = Vec::with_capacity(a.rtilde as usize);
                for _ in 0..a.level {
                    w.extend_from_slice(tower.word0.symbols());
                }
                w.extend_from_slice(tower.base_branches[a.branch].word.symbols());
                w
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbramovChain {
    pub h_nu: f64,
    pub int_rc: f64,
    pub h_eta: f64,
    pub int_r_eta: f64,
    pub h_mu: f64,
}

/// Block entropies of the symbolic `f`-process generated by concatenating
/// i.i.d. atom words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderEntropy {
    /// `H(X_1..X_n)` for `n = 1..=block`.
    pub block: Vec<f64>,
    /// `H_n - H_{n-1}`: decreases to the entropy rate.
    pub upper: f64,
    /// `H(X_n | X_1..X_{n-1}, S_1)` with the hidden start state: increases to it.
    pub lower: Option<f64>,
}

/// Hidden states beyond which the lower bound is skipped.
const LOWER_BOUND_STATE_CAP: usize = 400;

struct Hmm<'a> {
    words: &'a [Vec<Side>],
    weights: Vec<f64>,
    offsets: Vec<usize>,
    states: usize,
}

impl Hmm<'_> {
    /// Forward step: condition on the next symbol being `y`.
    fn step(&self, alpha: &[f64], y: Side, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut restart = 0.0;
        for (i, w) in self.words.iter().enumerate() {
            let o = self.offsets[i];
            for j in 0..w.len() {
                let a = alpha[o + j];
                if a == 0.0 {
                    continue;
                }
                if j + 1 < w.len() {
                    if w[j + 1] == y {
                        out[o + j + 1] += a;
                    }
                } else {
                    restart += a;
                }
            }
        }
        if restart > 0.0 {
            for (i, w) in self.words.iter().enumerate() {
                if w[0] == y {
                    out[self.offsets[i]] += restart * self.weights[i];
                }
            }
        }
    }

    /// Adds `sum P(y) ln(1/P(y))` over words `y` of each length to `acc`.
    fn accumulate(&self, alpha: &[f64], depth: usize, max: usize, acc: &mut [f64]) {
        let p: f64 = alpha.iter().sum();
        if p <= 0.0 {
            return;
        }
        acc[depth - 1] += entropy_term(p);
        if depth == max {
            return;
        }
        let mut next = vec![0.0; self.states];
        for y in [Side::Left, Side::Right] {
            self.step(alpha, y, &mut next);
            self.accumulate(&next, depth + 1, max, acc);
        }
    }

    fn initial(&self, start: &[f64], y: Side) -> Vec<f64> {
        let mut alpha = vec![0.0; self.states];
        for (i, w) in self.words.iter().enumerate() {
            for (j, &s) in w.iter().enumerate() {
                if s == y {
                    alpha[self.offsets[i] + j] = start[self.offsets[i] + j];
                }
            }
        }
        alpha
    }

    fn block_entropies(&self, start: &[f64], max: usize) -> Vec<f64> {
        let mut acc = vec![0.0; max];
        for y in [Side::Left, Side::Right] {
            let alpha = self.initial(start, y);
            self.accumulate(&alpha, 1, max, &mut acc);
        }
        acc
    }
}

/// Brute-force cylinder entropy of the stationary `f`-level process over
/// all words of length `<= block`.
pub fn cylinder_entropy(words: &[Vec<Side>], weights: &[f64], block: usize) -> Result<CylinderEntropy> {
    if words.is_empty() || words.len() != weights.len() || words.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("one nonempty word per weight".into()));
    }
    if block < 2 {
        return Err(Error::InvalidArgument("block length must be at least 2".into()));
    }
    let mut offsets = Vec::with_capacity(words.len());
    let mut states = 0;
    for w in words {
        offsets.push(states);
        states += w.len();
    }
    let mean_len: f64 = words.iter().zip(weights).map(|(w, p)| p * w.len() as f64).sum();
    let mut stationary = vec![0.0; states];
    for (i, w) in words.iter().enumerate() {
        for j in 0..w.len() {
            stationary[offsets[i] + j] = weights[i] / mean_len;
        }
    }
    let hmm = Hmm {
        words,
        weights: weights.to_vec(),
        offsets,
        states,
    };
    let block_h = hmm.block_entropies(&stationary, block);
    let upper = block_h[block - 1] - block_h[block - 2];
    let lower = (states <= LOWER_BOUND_STATE_CAP).then(|| {
        let mut total = 0.0;
        for (x, &px) in stationary.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let mut start = vec![0.0; states];
            start[x] = 1.0;
            let h = hmm.block_entropies(&start, block);
            total += px * (h[block - 1] - h[block - 2]);
        }
        total
    });
    Ok(CylinderEntropy {
        block: block_h,
        upper,
        lower,
    })
}

/// Both sides of `(1/2) int R dnu int R deta <= int R^2 dnu <= 2 int R dnu int R deta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedReturnBound {
    pub int_r: f64,
    pub int_r_sq: f64,
    pub int_r_projected: f64,
    /// `int R^2 dnu / (int R dnu int R deta)`; the bound says it lies in `[1/2, 2]`.
    pub ratio: f64,
}

impl TwoSidedReturnBound {
    pub fn holds(&self) -> bool {
        (0.5..=2.0).contains(&self.ratio)
    }
}

/// Kac spreading of a measure with exact induced time `R` along its orbit
/// segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// `int R dnu`.
    pub total_mass: f64,
    /// Normalized mass carried by each point of atom `i`'s orbit segment.
    pub point_weight: Vec<f64>,
    pub bound: TwoSidedReturnBound,
}

pub fn project_measure(weights: &[f64], times: &[u64]) -> Result<Projection> {
    if weights.is_empty() || weights.len() != times.len() {
        return Err(Error::InvalidArgument("one induced time per weight".into()));
    }
    if times.iter().any(|&t| t == 0) || weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument("times must be positive and weights nonnegative".into()));
    }
    let total_mass: f64 = weights.iter().zip(times).map(|(w, &t)| w * t as f64).sum();
    let int_r_sq: f64 = weights.iter().zip(times).map(|(w, &t)| w * (t * t) as f64).sum();
    // along a segment of length R the exact time takes the values R, R-1, ..., 1
    let spread: f64 = weights
        .iter()
        .zip(times)
        .map(|(w, &t)| w * (t as f64) * (t as f64 + 1.0) / 2.0)
        .sum();
    let int_r_projected = spread / total_mass;
    Ok(Projection {
        total_mass,
        point_weight: weights.iter().map(|w| w / total_mass).collect(),
        bound: TwoSidedReturnBound {
            int_r: total_mass,
            int_r_sq,
            int_r_projected,
            ratio: int_r_sq / (total_mass * int_r_projected),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMoment {
    /// Head contribution (levels `<= ell`).
    pub head: f64,
    /// `(N, tail partial sum through level N)` at dyadic `N` and the final cap.
    pub tail_partials: Vec<(usize, f64)>,
    /// Growth exponent of the tail from the last two dyadic block increments.
    pub growth_exponent: f64,
    /// The full sum converges.
    pub finite: bool,
}

/// Partial sums of `int R_c^2` through level cap `n_partial`.
pub fn second_moment(m: &MassDistribution, n_partial: usize) -> Result<SecondMoment> {
    if n_partial < 4 * (m.ell + 1) {
        return Err(Error::InvalidArgument(format!(
            "level cap {n_partial} too small for a growth fit"
        )));
    }
    let head = m
        .head
        .iter()
        .map(|h| ((h.level + 1) as f64).powi(2) * h.weight)
        .sum();
    let mut caps = Vec::new();
    let mut n = 1;
    while n < n_partial {
        caps.push(n);
        n *= 2;
    }
    caps.push(n_partial);
    let quarter = n_partial / 4;
    let half = n_partial / 2;
    let mut fit_caps = vec![quarter, half, n_partial];
    fit_caps.sort_unstable();
    let fit = m.tail.second_moment_partials(&fit_caps);
    let growth_exponent = ((fit[2] - fit[1]) / (fit[1] - fit[0])).log2();
    let values = m.tail.second_moment_partials(&caps);
    Ok(SecondMoment {
        head,
        tail_partials: caps.into_iter().zip(values).collect(),
        growth_exponent,
        finite: m.tail.second_moment_finite(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub ell: usize,
    pub alpha_mass: f64,
    pub total_mass: f64,
    pub total_mass_error: f64,
    pub entropy_fc: f64,
    pub entropy_fc_error: f64,
    pub entropy_tail: f64,
    pub int_rc: f64,
    pub int_rc_error: f64,
    pub rc_tail: f64,
    /// `2 (ell + 1) zeta(1 + alpha_mass)`.
    pub bound_c: f64,
    pub int_rc_sq: SecondMoment,
    pub rc_sq_divergent: bool,
    pub int_rtilde: f64,
    pub int_r_eta: f64,
    pub h_eta: f64,
    pub h_mu: f64,
    /// `(N, sum over levels <= N of int log f')`.
    pub lyapunov_partials: Vec<(usize, f64)>,
}

/// Divergence criterion: partial sums ten times the comparison value and a
/// growth exponent of at least `(1 - alpha_mass) / 2`.
pub fn looks_divergent(partial: f64, comparison: f64, exponent: f64, alpha_mass: f64) -> bool {
    partial > 10.0 * comparison && exponent >= (1.0 - alpha_mass) / 2.0
}

pub fn measure_report(m: &MassDistribution, tower: &CylinderTower, map: &LorenzMap, n_partial: usize) -> Result<MeasureReport> {
    let total = m.total()?;
    let entropy = m.entropy()?;
    let entropy_tail = m.entropy_tail()?;
    let int_rc = m.int_rc();
    let rtilde = m.int_rtilde()?;
    let sm = second_moment(m, n_partial)?;
    let h_eta = entropy.value / int_rc.value;
    let int_r_eta = rtilde.value / int_rc.value;
    let lyap = lyapunov_partials(m, tower, map)?;
    Ok(MeasureReport {
        ell: m.ell,
        alpha_mass: m.alpha_mass,
        total_mass: total.value,
        total_mass_error: total.error,
        entropy_fc: entropy.value,
        entropy_fc_error: entropy.error,
        entropy_tail: entropy_tail.value,
        int_rc: int_rc.value,
        int_rc_error: int_rc.error,
        rc_tail: m.rc_tail().value,
        bound_c: m.bound_c()?,
        rc_sq_divergent: !sm.finite,
        int_rc_sq: sm,
        int_rtilde: rtilde.value,
        int_r_eta,
        h_eta,
        h_mu: h_eta / int_r_eta,
        lyapunov_partials: lyap,
    })
}

/// Branch chain of a point of `J`: `(points before the return, ln f' sum)`.
fn branch_segment(map: &LorenzMap, word: &[Side], target: f64) -> (Vec<f64>, f64) {
    let mut pts = vec![0.0; word.len()];
    let mut y = target;
    for k in (0..word.len()).rev() {
        let (a, b) = map.image(word[k]);
        y = map.pull(word[k], y.clamp(a, b));
        pts[k] = y;
    }
    let slope = pts.iter().zip(word).map(|(&x, &s)| map.log_slope(s, x)).sum();
    (pts, slope)
}

/// Sums of `|ln|x - c||` and `ln f'` over the `f`-orbit segment of the atom
/// `(level, branch)` through the point whose branch image is `target`.
fn segment_sums(map: &LorenzMap, tower: &CylinderTower, level: usize, branch: usize, target: f64) -> (f64, f64) {
    let c = map.c();
    let g = tower.leftmost_return().expect("tower carries its return map");
    let b = &tower.base_branches[branch];
    let (pts, mut slope) = branch_segment(map, b.word.symbols(), target);
    let mut dist: f64 = pts.iter().map(|&x| -(x - c).abs().ln()).sum();
    let mut ln_s = (pts[0] - c).ln();
    for _ in 0..level {
        ln_s = g.ln_inverse(ln_s);
        if !ln_s.is_finite() {
            return (f64::INFINITY, f64::INFINITY);
        }
        let (d, s) = g.block_sums(ln_s);
        dist += d;
        slope += s;
    }
    (dist, slope)
}

/// `sum_{levels <= N} sum_P m(P) ln (f^{R~})'` at a representative point
/// (the branch point over the middle of `J`), for `N = 0..=depth`.
pub fn lyapunov_partials(m: &MassDistribution, tower: &CylinderTower, map: &LorenzMap) -> Result<Vec<(usize, f64)>> {
    let mid = 0.5 * (tower.c + tower.p);
    let mut out = Vec::with_capacity(m.depth() + 1);
    let mut acc = 0.0;
    let mut per_branch: Vec<(f64, f64)> = tower
        .base_branches
        .iter()
        .map(|b| {
            let (pts, slope) = branch_segment(map, b.word.symbols(), mid);
            ((pts[0] - tower.c).ln(), slope)
        })
        .collect();
    let g = tower.leftmost_return().ok_or(Error::Empty("leftmost return"))?;
    for level in 0..=m.depth() {
        if level > 0 {
            for (ln_s, slope) in &mut per_branch {
                *ln_s = g.ln_inverse(*ln_s);
                *slope += g.block_sums(*ln_s).1;
            }
        }
        for (b, (_, slope)) in per_branch.iter().enumerate() {
            let w = m.weight(level, b);
            if w > 0.0 {
                acc += w * slope;
            }
        }
        out.push((level, acc));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefixAverage {
    pub segments: usize,
    pub steps: u64,
    pub abs_log_dist: f64,
    pub log_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub seed: u64,
    pub prefixes: Vec<PrefixAverage>,
    pub max_level: usize,
    /// For each threshold, the first prefix (in segments) whose `|ln|x - c||`
    /// average exceeds it.
    pub first_exceed: Vec<(f64, Option<usize>)>,
    /// `log f'` average `>= expo_low * dist average - ln a` on every prefix.
    pub lower_envelope_holds: bool,
}

pub const SAMPLE_THRESHOLDS: [f64; 3] = [10.0, 20.0, 40.0];

/// Table size for the inverse CDF of the tail levels.
const LEVEL_TABLE: usize = 1 << 16;

struct LevelSampler {
    cdf: Vec<f64>,
    zs: f64,
    s: f64,
}

impl LevelSampler {
    fn new(s: f64) -> Result<Self> {
        let zs = zeta(s)?.value;
        let mut cdf = Vec::with_capacity(LEVEL_TABLE);
        let mut acc = 0.0;
        for k in 1..=LEVEL_TABLE {
            acc += (k as f64).powf(-s) / zs;
            cdf.push(acc);
        }
        Ok(Self { cdf, zs, s })
    }

    /// `k >= 1` with probability `k^{-s} / zeta(s)`.
    fn sample(&self, u: f64) -> usize {
        match self.cdf.binary_search_by(|p| p.total_cmp(&u)) {
            Ok(i) | Err(i) if i < self.cdf.len() => i + 1,
            _ => {
                // integral approximation of the far tail
                let rest = ((1.0 - u) * self.zs * (self.s - 1.0)).max(f64::MIN_POSITIVE);
                (rest.powf(-1.0 / (self.s - 1.0)).floor() as usize).max(LEVEL_TABLE + 1)
            }
        }
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// i.i.d. atoms from `m`, each expanded into its `f`-orbit segment.
pub fn sample_superexpanding(
    map: &LorenzMap,
    m: &MassDistribution,
    tower: &CylinderTower,
    seed: u64,
    segments: usize,
) -> Result<SampleStats> {
    if segments == 0 {
        return Err(Error::InvalidArgument("at least one segment".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = LevelSampler::new(m.tail.s)?;
    let head_w: Vec<f64> = m.head.iter().map(|h| h.weight).collect();
    let total = m.head_mass + m.tail_mass;
    let bounds = map.nonflat_bounds();
    let (c1, c0) = (bounds.expo_low, bounds.a.ln());
    let jl = tower.p - tower.c;
    let (mut dist, mut slope, mut steps) = (0.0, 0.0, 0u64);
    let mut prefixes = Vec::with_capacity(segments);
    let mut max_level = 0;
    let mut envelope = true;
    for i in 0..segments {
        let (level, branch) = if rng.random::<f64>() * total < m.head_mass {
            let h = m.head[pick(&head_w, rng.random())];
            (h.level, h.branch)
        } else {
            let level = m.ell + levels.sample(rng.random());
            (level, pick(&m.profile(level).proportions, rng.random()))
        };
        max_level = max_level.max(level);
        let target = tower.c + jl * rng.random_range(1e-6..1.0 - 1e-6);
        let (d, s) = segment_sums(map, tower, level, branch, target);
        dist += d;
        slope += s;
        steps += m.t0 * level as u64 + m.branch_r[branch];
        let p = PrefixAverage {
            segments: i + 1,
            steps,
            abs_log_dist: dist / steps as f64,
            log_slope: slope / steps as f64,
        };
        if p.abs_log_dist.is_finite() && p.log_slope < c1 * p.abs_log_dist - c0 - 1e-9 {
            envelope = false;
        }
        prefixes.push(p);
    }
    let first_exceed = SAMPLE_THRESHOLDS
        .iter()
        .map(|&t| (t, prefixes.iter().find(|p| p.abs_log_dist > t).map(|p| p.segments)))
        .collect();
    Ok(SampleStats {
        seed,
        prefixes,
        max_level,
        first_exceed,
        lower_envelope_holds: envelope,
    })
}
