//! Exit probabilities, crossing-back probabilities and offspring mean matrices.
//!
//! Exit probabilities from an interval `[-n, i]` come from left products of
//! companion matrices `M(k)` (first row `(sum_{m>=j} p_m(k) / q(k))_j`,
//! identity below the diagonal):
//!
//! ```text
//! P^i[(-n,i), i+j] = <e_1, S (e_j - e_{j+1})> / (1 + <e_1, S e_1>),
//! S = M(i) + M(i-1)M(i) + ... + M(-n)...M(i),     e_{R+1} = 0.
//! ```
//!
//! The entries of `S` grow geometrically, so products are kept normalized and
//! the scale is tracked in log space; the ratio above only needs the scale
//! through the `1 +` term.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::env::{Environment, SiteLaw};
use crate::layout::{CrossingType, TypeLayout};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_N: usize = 10_000;

const RESCALE_ABOVE: f64 = 1e100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExitError {
    #[error("q = 0 at site {site}: the transfer matrix is undefined")]
    ZeroLeftProbability { site: i64 },
    #[error("truncation n = {n} invalid for level {level} (need n >= 2 and -n <= level)")]
    BadTruncation { level: i64, n: i64 },
    #[error("transfer-matrix products overflowed at depth {0}")]
    NumericalOverflow(usize),
    #[error(
        "exit probabilities at level {level} did not converge after n = {n} \
         (last change {change:.3e}, sum {sum:.12})"
    )]
    NotConverged { level: i64, n: usize, change: f64, sum: f64 },
    #[error("1 - (base crossing-back mass) = {0} is not positive")]
    DegenerateDenominator(f64),
    #[error("expected jump bound R = {expected}, found {found}")]
    RangeMismatch { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitOptions {
    /// Successive-difference and sum-to-one tolerance.
    pub tol: f64,
    /// Matrices added beyond the starting truncation before giving up.
    pub max_n: usize,
}

impl Default for ExitOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_n: DEFAULT_MAX_N }
    }
}

/// `M(i)` for one site.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionMatrix(DMatrix<f64>);

impl CompanionMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn first_row(&self) -> Vec<f64> {
        self.0.row(0).iter().copied().collect()
    }
}

fn companion_row(site: &SiteLaw) -> Option<Vec<f64>> {
    if site.q() <= 0.0 {
        return None;
    }
    Some((1..=site.range()).map(|j| site.right_tail(j) / site.q()).collect())
}

pub fn companion_matrix(site: &SiteLaw) -> Result<CompanionMatrix, ExitError> {
    let row = companion_row(site).ok_or(ExitError::ZeroLeftProbability { site: 0 })?;
    let r = row.len();
    let m = DMatrix::from_fn(r, r, |a, b| match a {
        0 => row[b],
        _ if b + 1 == a => 1.0,
        _ => 0.0,
    });
    Ok(CompanionMatrix(m))
}

/// `(P[i+1], ..., P[i+R])`: where the walk started at `i` first lands above `i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitDistribution {
    pub probs: Vec<f64>,
    /// Left boundary `-n` of the interval used.
    pub truncation_n: i64,
    pub converged: bool,
}

impl ExitDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability of landing at `i + j`, `j` 1-based.
    pub fn at(&self, j: usize) -> f64 {
        self.probs[j - 1]
    }
}

/// Running `P = M(k)...M(i)` and `S = sum P`, both divided by `exp(log_scale)`.
struct Transfer {
    prod: Vec<Vec<f64>>,
    sum: Vec<Vec<f64>>,
    log_scale: f64,
    terms: usize,
    scratch: Vec<f64>,
}

impl Transfer {
    fn new(r: usize) -> Self {
        let mut id = vec![vec![0.0; r]; r];
        (0..r).for_each(|j| id[j][j] = 1.0);
        Self { prod: id, sum: vec![vec![0.0; r]; r], log_scale: 0.0, terms: 0, scratch: vec![0.0; r] }
    }

    /// `P <- M(site) P`, `S <- S + P`.
    fn push(&mut self, env: &Environment, site: i64) -> Result<(), ExitError> {
        let law = env.law(site);
        if law.q() <= 0.0 {
            return Err(ExitError::ZeroLeftProbability { site });
        }
        let r = self.prod.len();
        let q = law.q();
        self.scratch.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..r {
            let a = law.right_tail(j + 1) / q;
            if a != 0.0 {
                for (s, p) in self.scratch.iter_mut().zip(&self.prod[j]) {
                    *s += a * p;
                }
            }
        }
        self.prod.rotate_right(1);
        std::mem::swap(&mut self.prod[0], &mut self.scratch);
        let mut big = 0.0f64;
        for (srow, prow) in self.sum.iter_mut().zip(&self.prod) {
            for (s, p) in srow.iter_mut().zip(prow) {
                *s += p;
                big = big.max(s.abs());
            }
        }
        self.terms += 1;
        if !big.is_finite() {
            return Err(ExitError::NumericalOverflow(self.terms));
        }
        if big > RESCALE_ABOVE {
            let inv = 1.0 / big;
            for row in self.prod.iter_mut().chain(self.sum.iter_mut()) {
                row.iter_mut().for_each(|x| *x *= inv);
            }
            self.log_scale += big.ln();
        }
        Ok(())
    }

    fn distribution(&self) -> Vec<f64> {
        let s = &self.sum[0];
        let denom = (-self.log_scale).exp() + s[0];
        (0..s.len())
            .map(|j| {
                let next = s.get(j + 1).copied().unwrap_or(0.0);
                (s[j] - next) / denom
            })
            .collect()
    }
}

/// Exit distribution from `[-n, i]` started at `i`.
pub fn exit_probs_finite(env: &Environment, i: i64, n: i64) -> Result<ExitDistribution, ExitError> {
    if n < 2 || -n > i {
        return Err(ExitError::BadTruncation { level: i, n });
    }
    let mut t = Transfer::new(env.range());
    for k in (-n..=i).rev() {
        t.push(env, k)?;
    }
    Ok(ExitDistribution { probs: t.distribution(), truncation_n: n, converged: false })
}

/// The `n -> infinity` limit, grown one site at a time until successive
/// distributions differ by less than `tol` and the total is within `tol` of 1.
///
/// A `tol` below machine epsilon cannot be certified, since a sum of rounded
/// probabilities only lands on 1 by accident; such requests run to `max_n`
/// and report `NotConverged`.
pub fn exit_probs_limit(env: &Environment, i: i64, opts: &ExitOptions) -> Result<ExitDistribution, ExitError> {
    let certifiable = opts.tol >= f64::EPSILON;
    let n0 = (-i).max(2);
    let mut t = Transfer::new(env.range());
    for k in (-n0..=i).rev() {
        t.push(env, k)?;
    }
    let mut prev = t.distribution();
    let mut change = f64::INFINITY;
    let mut n = n0;
    for _ in 0..opts.max_n {
        n += 1;
        t.push(env, -n)?;
        let cur = t.distribution();
        change = cur.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let sum: f64 = cur.iter().sum();
        prev = cur;
        if certifiable && change < opts.tol && (sum - 1.0).abs() < opts.tol {
            return Ok(ExitDistribution { probs: prev, truncation_n: n, converged: true });
        }
    }
    Err(ExitError::NotConverged { level: i, n: n as usize, change, sum: prev.iter().sum() })
}

/// Crossing-back probabilities at one level, in [`TypeLayout`] order.
/// For `R = 2` these are `(alpha, beta, gamma)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingBackProbs {
    pub level: i64,
    pub layout: TypeLayout,
    pub probs: Vec<f64>,
}

impl CrossingBackProbs {
    pub fn alpha(&self) -> f64 {
        self.probs[0]
    }

    pub fn beta(&self) -> f64 {
        self.probs[1]
    }

    pub fn gamma(&self) -> f64 {
        self.probs[2]
    }

    /// Probabilities of the types that land back on the departed level.
    pub fn base(&self) -> &[f64] {
        &self.probs[self.layout.base()]
    }

    pub fn base_sum(&self) -> f64 {
        self.base().iter().sum()
    }

    /// Equals `q(level)` for a transient walk.
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// `(alpha(i), beta(i), gamma(i))` from exit limits at `i-1` and `i-2`:
///
/// `gamma(i) = q(i) P^{i-1}[., i+1]`, and `alpha(i) + beta(i) = q(i) P^{i-1}[., i]`
/// split in ratio `p_1(i-1) : gamma(i-1)`.
pub fn crossing_back_probs_r2(env: &Environment, i: i64, opts: &ExitOptions) -> Result<CrossingBackProbs, ExitError> {
    if env.range() != 2 {
        return Err(ExitError::RangeMismatch { expected: 2, found: env.range() });
    }
    let e1 = exit_probs_limit(env, i - 1, opts)?;
    let e2 = exit_probs_limit(env, i - 2, opts)?;
    let (here, below) = (env.law(i), env.law(i - 1));
    let gamma_below = below.q() * e2.at(2);
    let gamma = here.q() * e1.at(2);
    let back = here.q() * e1.at(1);
    let split = below.p_k(1) + gamma_below;
    let (alpha, beta) =
        if split > 0.0 { (back * below.p_k(1) / split, back * gamma_below / split) } else { (0.0, 0.0) };
    Ok(CrossingBackProbs { level: i, layout: TypeLayout::new(2), probs: vec![alpha, beta, gamma] })
}

/// The full `R(R+1)/2` crossing-back vector at level `i`.
///
/// Types landing at `i + l` share `q(i) P^{i-1}[., i+l]`, split in proportion
/// to the ways the walk can leave `i-1` for `i+l`: the direct jump
/// `p_{l+1}(i-1)`, or a type `(l+1, d-1)` crossing-back at level `i-1`. The
/// recursion loses one landing group per level, so it closes after `R-1` levels.
pub fn crossing_back_probs_general(
    env: &Environment,
    i: i64,
    opts: &ExitOptions,
) -> Result<CrossingBackProbs, ExitError> {
    Quenched::new(env, *opts).crossing_back(i)
}

/// Offspring mean matrix, rows indexed by parent type, columns by child type.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanMatrix(DMatrix<f64>);

impl MeanMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Every row carries the base-type means `p_(k) / (1 - sum_base)`; a parent
/// of type `(l, d)` with `d >= 2` adds exactly one `(l+1, d-1)` child.
pub fn mean_matrix(cb: &CrossingBackProbs) -> Result<MeanMatrix, ExitError> {
    let layout = cb.layout;
    let stop = 1.0 - cb.base_sum();
    if stop <= 0.0 {
        return Err(ExitError::DegenerateDenominator(stop));
    }
    let n = layout.len();
    let mut m = DMatrix::zeros(n, n);
    for row in 0..n {
        for (col, p) in cb.base().iter().enumerate() {
            m[(row, col)] = p / stop;
        }
        if let Some(child) = layout.forced_child(row) {
            m[(row, child)] = 1.0;
        }
    }
    Ok(MeanMatrix(m))
}

/// Memoized per-level quantities of one quenched environment.
pub struct Quenched<'a> {
    env: &'a Environment,
    layout: TypeLayout,
    opts: ExitOptions,
    exits: HashMap<i64, ExitDistribution>,
    partial: HashMap<(i64, usize), Vec<f64>>,
}

impl<'a> Quenched<'a> {
    pub fn new(env: &'a Environment, opts: ExitOptions) -> Self {
        Self { env, layout: TypeLayout::new(env.range()), opts, exits: HashMap::new(), partial: HashMap::new() }
    }

    pub fn env(&self) -> &Environment {
        self.env
    }

    pub fn layout(&self) -> TypeLayout {
        self.layout
    }

    pub fn exit_limit(&mut self, i: i64) -> Result<ExitDistribution, ExitError> {
        if let Some(e) = self.exits.get(&i) {
            return Ok(e.clone());
        }
        let e = exit_probs_limit(self.env, i, &self.opts)?;
        self.exits.insert(i, e.clone());
        Ok(e)
    }

    /// Crossing-back probabilities at level `i` for the types landing at
    /// `i + from_group` or higher; entries of lower groups are left at 0.
    fn groups_from(&mut self, i: i64, from_group: usize) -> Result<Vec<f64>, ExitError> {
        let r = self.layout.r();
        let mut out = vec![0.0; self.layout.len()];
        if from_group >= r {
            return Ok(out);
        }
        if let Some(v) = self.partial.get(&(i, from_group)) {
            return Ok(v.clone());
        }
        let exit = self.exit_limit(i - 1)?;
        let below_types = self.groups_from(i - 1, from_group + 1)?;
        let (q, below) = (self.env.law(i).q(), self.env.law(i - 1));
        for landing in from_group..r {
            let routes: Vec<f64> = (1..=r - landing)
                .map(|depth| match depth {
                    1 => below.p_k(landing + 1),
                    d => below_types[self.layout.index(CrossingType { landing: landing + 1, depth: d - 1 })],
                })
                .collect();
            let norm: f64 = routes.iter().sum();
            let mass = q * exit.at(landing + 1);
            for (g, w) in self.layout.group(landing).zip(&routes) {
                out[g] = if norm > 0.0 { mass * w / norm } else { 0.0 };
            }
        }
        self.partial.insert((i, from_group), out.clone());
        Ok(out)
    }

    pub fn crossing_back(&mut self, i: i64) -> Result<CrossingBackProbs, ExitError> {
        Ok(CrossingBackProbs { level: i, layout: self.layout, probs: self.groups_from(i, 0)? })
    }

    pub fn mean_matrix(&mut self, i: i64) -> Result<MeanMatrix, ExitError> {
        mean_matrix(&self.crossing_back(i)?)
    }

    /// Weights of the ways the walk standing at `i` can next rise above `i`,
    /// indexed by the type of the rise seen from level `i+1`: type `(l, 1)` is
    /// the direct jump `p_{l+1}(i)`, type `(l, d)` is a crossing-back of type
    /// `(l+1, d-1)` at level `i`.
    pub fn exit_routes(&mut self, i: i64) -> Result<Vec<f64>, ExitError> {
        let here_types = self.groups_from(i, 1)?;
        let law = self.env.law(i);
        Ok(self
            .layout
            .types()
            .map(|t| match t.depth {
                1 => law.p_k(t.landing + 1),
                d => here_types[self.layout.index(CrossingType { landing: t.landing + 1, depth: d - 1 })],
            })
            .collect())
    }

    /// Law of the immigrant `U(1)` for a walk started at `i`.
    pub fn immigration(&mut self, i: i64) -> Result<Vec<f64>, ExitError> {
        let stop = 1.0 - self.crossing_back(i)?.base_sum();
        if stop <= 0.0 {
            return Err(ExitError::DegenerateDenominator(stop));
        }
        Ok(self.exit_routes(i)?.into_iter().map(|w| w / stop).collect())
    }

    /// `sum_j E(U(1) | X_{T_1} = j)` for a walk started at `i`: the exit
    /// routes normalized within each landing group.
    pub fn conditional_immigrants(&mut self, i: i64) -> Result<Vec<f64>, ExitError> {
        let mut w = self.exit_routes(i)?;
        for landing in 0..self.layout.r() {
            let g = self.layout.group(landing);
            let norm: f64 = w[g.clone()].iter().sum();
            w[g].iter_mut().for_each(|x| *x = if norm > 0.0 { *x / norm } else { 0.0 });
        }
        Ok(w)
    }
}
