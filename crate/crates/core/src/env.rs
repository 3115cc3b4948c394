//! Site laws, realized environments and laws over environments.
//!
//! An [`Environment`] is a map from integer sites to [`SiteLaw`]s. Realizations
//! are pure functions of `(seed, site)`, so the order in which a window is grown
//! never changes what a site holds.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rng::{self, Domain, SimRng};

/// Default lower bound for `p_k / q`.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Tolerance on `q + sum(p) = 1` accepted at construction.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("not a probability vector: q = {q}, p = {p:?}")]
    NotSimplex { q: f64, p: Vec<f64> },
    #[error("ellipticity violated: p_{k} / q < {epsilon} (q = {q})")]
    EllipticityViolated { k: usize, q: f64, epsilon: f64 },
    #[error("a site law needs at least one right jump")]
    NoRightJumps,
    #[error("environment law has no atoms")]
    NoAtoms,
    #[error("atom weights do not form a probability vector: {0:?}")]
    BadWeights(Vec<f64>),
    #[error("atoms disagree on the jump bound R ({0} vs {1})")]
    MixedRange(usize, usize),
    #[error("empty window [{0}, {1}]")]
    EmptyWindow(i64, i64),
}

/// Jump distribution at one site: `-1` with probability `q`, `+k` with
/// probability `p[k-1]` for `k = 1..=R`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteLaw {
    q: f64,
    p: Vec<f64>,
}

impl SiteLaw {
    /// Validates the simplex and ellipticity constraints.
    ///
    /// `epsilon = 0` waives ellipticity entirely (degenerate laws used in
    /// tests). With `epsilon > 0`, `q = 0` is rejected since `p_k / q` is
    /// undefined.
    pub fn new(q: f64, p: &[f64], epsilon: f64) -> Result<Self, EnvError> {
        if p.is_empty() {
            return Err(EnvError::NoRightJumps);
        }
        let not_simplex = || EnvError::NotSimplex { q, p: p.to_vec() };
        if !q.is_finite() || q < 0.0 || p.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(not_simplex());
        }
        let total = q + p.iter().sum::<f64>();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(not_simplex());
        }
        let (q, p): (f64, Vec<f64>) = (q / total, p.iter().map(|x| x / total).collect());
        if epsilon > 0.0 {
            for (k, &pk) in p.iter().enumerate() {
                if q == 0.0 || pk / q < epsilon {
                    return Err(EnvError::EllipticityViolated { k: k + 1, q, epsilon });
                }
            }
        }
        Ok(Self { q, p })
    }

    /// [`SiteLaw::new`] with [`DEFAULT_EPSILON`].
    pub fn elliptic(q: f64, p: &[f64]) -> Result<Self, EnvError> {
        Self::new(q, p, DEFAULT_EPSILON)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Right-jump probabilities, index `k - 1` for jump `+k`.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Probability of jump `+k`, `k` 1-based; zero outside `1..=R`.
    pub fn p_k(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.p.get(k - 1).copied().unwrap_or(0.0)
    }

    /// Jump bound `R`.
    pub fn range(&self) -> usize {
        self.p.len()
    }

    /// `sum_{m >= k} p_m`.
    pub fn right_tail(&self, k: usize) -> f64 {
        self.p.iter().skip(k.saturating_sub(1)).sum()
    }

    /// Local drift `sum_k k p_k - q`.
    pub fn mean_step(&self) -> f64 {
        self.p.iter().enumerate().map(|(k, pk)| (k + 1) as f64 * pk).sum::<f64>() - self.q
    }

    /// Maps a uniform `u` in `[0, 1)` to a jump in `{-1, 1, ..., R}`.
    #[inline]
    pub fn jump_for(&self, u: f64) -> i64 {
        if u < self.q {
            return -1;
        }
        let mut acc = self.q;
        for (k, pk) in self.p.iter().enumerate() {
            acc += pk;
            if u < acc {
                return k as i64 + 1;
            }
        }
        // rounding in the cumulative sum: fall back to the largest jump with mass
        self.p.iter().rposition(|&x| x > 0.0).map_or(-1, |k| k as i64 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Homogeneous,
    IidFiniteSupport,
    Periodic,
}

/// A distribution over environments.
///
/// Periodic laws are the uniform mixture of the shifts of one period table;
/// their `weights` are `1/L` for each phase.
#[derive(Clone, Debug, Serialize)]
pub struct EnvironmentLaw {
    kind: LawKind,
    atoms: Vec<SiteLaw>,
    weights: Vec<f64>,
}

impl EnvironmentLaw {
    pub fn homogeneous(site: SiteLaw) -> Self {
        Self { kind: LawKind::Homogeneous, atoms: vec![site], weights: vec![1.0] }
    }

    /// Independent sites, each equal to `atoms[j].0` with probability `atoms[j].1`.
    pub fn iid(atoms: Vec<(SiteLaw, f64)>) -> Result<Self, EnvError> {
        let (atoms, weights): (Vec<SiteLaw>, Vec<f64>) = atoms.into_iter().unzip();
        check_atoms(&atoms)?;
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(EnvError::BadWeights(weights));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { kind: LawKind::IidFiniteSupport, atoms, weights })
    }

    /// Site `x` gets `table[x mod L]`; the law averages over the `L` phases.
    pub fn periodic(table: Vec<SiteLaw>) -> Result<Self, EnvError> {
        check_atoms(&table)?;
        let w = 1.0 / table.len() as f64;
        let weights = vec![w; table.len()];
        Ok(Self { kind: LawKind::Periodic, atoms: table, weights })
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn atoms(&self) -> &[SiteLaw] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn range(&self) -> usize {
        self.atoms[0].range()
    }

    /// The realization addressed by `seed`, with nothing materialized yet.
    ///
    /// Periodic laws are anchored so that site 0 carries entry 0; `seed` is
    /// ignored for homogeneous and periodic laws.
    pub fn realization(&self, seed: u64) -> Environment {
        let source = match self.kind {
            LawKind::Homogeneous => SiteSource::Constant,
            LawKind::Periodic => SiteSource::Cyclic,
            LawKind::IidFiniteSupport => {
                let mut acc = 0.0;
                let cumulative = self
                    .weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                SiteSource::Iid { seed, cumulative }
            }
        };
        Environment { atoms: self.atoms.clone().into(), source, offset: 0, window: Arc::new(Window::default()) }
    }
}

fn check_atoms(atoms: &[SiteLaw]) -> Result<(), EnvError> {
    let first = atoms.first().ok_or(EnvError::NoAtoms)?;
    for a in atoms {
        if a.range() != first.range() {
            return Err(EnvError::MixedRange(first.range(), a.range()));
        }
    }
    Ok(())
}

/// Realize `law` with `seed` and materialize `window`.
pub fn sample_environment(
    law: &EnvironmentLaw,
    window: RangeInclusive<i64>,
    seed: u64,
) -> Result<Environment, EnvError> {
    let (lo, hi) = window.into_inner();
    if lo > hi {
        return Err(EnvError::EmptyWindow(lo, hi));
    }
    let mut env = law.realization(seed);
    env.realize(lo, hi);
    Ok(env)
}

#[derive(Clone, Debug)]
enum SiteSource {
    Constant,
    Cyclic,
    Iid { seed: u64, cumulative: Vec<f64> },
}

/// Cached atom indices over `[lo, lo + atoms.len())` in base coordinates.
#[derive(Clone, Debug, Default)]
struct Window {
    lo: i64,
    atoms: Vec<u32>,
}

impl Window {
    #[inline]
    fn get(&self, base: i64) -> Option<u32> {
        let off = base.checked_sub(self.lo)?;
        if off < 0 {
            return None;
        }
        self.atoms.get(off as usize).copied()
    }

    fn hi(&self) -> i64 {
        self.lo + self.atoms.len() as i64 - 1
    }
}

/// A realized environment `omega`, viewed through a shift.
///
/// `shift(k)` is cheap: it shares the atom table and the realized window.
#[derive(Clone, Debug)]
pub struct Environment {
    atoms: Arc<[SiteLaw]>,
    source: SiteSource,
    /// `self.law(x) = base(x + offset)`
    offset: i64,
    window: Arc<Window>,
}

impl Environment {
    /// The constant environment.
    pub fn homogeneous(site: SiteLaw) -> Self {
        EnvironmentLaw::homogeneous(site).realization(0)
    }

    /// Cyclic environment with `table[0]` at site 0.
    pub fn periodic(table: Vec<SiteLaw>) -> Result<Self, EnvError> {
        Ok(EnvironmentLaw::periodic(table)?.realization(0))
    }

    /// Jump bound shared by every site.
    pub fn range(&self) -> usize {
        self.atoms[0].range()
    }

    pub fn atoms(&self) -> &[SiteLaw] {
        &self.atoms
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.source, SiteSource::Constant)
    }

    /// Period of a cyclic environment.
    pub fn period(&self) -> Option<usize> {
        match self.source {
            SiteSource::Cyclic => Some(self.atoms.len()),
            SiteSource::Constant => Some(1),
            SiteSource::Iid { .. } => None,
        }
    }

    /// Total shift applied relative to the underlying realization.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// Index into [`Environment::atoms`] of the law at site `x`.
    #[inline]
    pub fn atom_index(&self, x: i64) -> usize {
        let base = x + self.offset;
        match &self.source {
            SiteSource::Constant => 0,
            SiteSource::Cyclic => base.rem_euclid(self.atoms.len() as i64) as usize,
            SiteSource::Iid { seed, cumulative } => match self.window.get(base) {
                Some(a) => a as usize,
                None => draw_atom(&mut site_rng(*seed, base), cumulative) as usize,
            },
        }
    }

    #[inline]
    pub fn law(&self, x: i64) -> &SiteLaw {
        &self.atoms[self.atom_index(x)]
    }

    /// `theta^k`: the returned environment satisfies `shifted.law(x) == self.law(x + k)`.
    pub fn shift(&self, k: i64) -> Environment {
        Environment { offset: self.offset + k, ..self.clone() }
    }

    /// Realized window in this view's coordinates; `None` when every site is
    /// available without materialization (constant and cyclic environments)
    /// or nothing has been realized yet.
    pub fn window(&self) -> Option<(i64, i64)> {
        match self.source {
            SiteSource::Iid { .. } if !self.window.atoms.is_empty() => {
                Some((self.window.lo - self.offset, self.window.hi() - self.offset))
            }
            _ => None,
        }
    }

    /// Materialize sites `lo..=hi`. Already realized sites are kept as is.
    pub fn realize(&mut self, lo: i64, hi: i64) {
        let SiteSource::Iid { seed, cumulative } = &self.source else {
            return;
        };
        if lo > hi {
            return;
        }
        let (lo, hi) = (lo + self.offset, hi + self.offset);
        let w = &self.window;
        if !w.atoms.is_empty() && lo >= w.lo && hi <= w.hi() {
            return;
        }
        let (new_lo, new_hi) = if w.atoms.is_empty() { (lo, hi) } else { (lo.min(w.lo), hi.max(w.hi())) };
        let mut atoms = Vec::with_capacity((new_hi - new_lo + 1) as usize);
        if w.atoms.is_empty() {
            atoms.extend(draw_block(*seed, cumulative, new_lo, new_hi));
        } else {
            if new_lo < w.lo {
                atoms.extend(draw_block(*seed, cumulative, new_lo, w.lo - 1));
            }
            atoms.extend_from_slice(&w.atoms);
            if new_hi > w.hi() {
                atoms.extend(draw_block(*seed, cumulative, w.hi() + 1, new_hi));
            }
        }
        self.window = Arc::new(Window { lo: new_lo, atoms });
    }

    /// Make sure `x` is realized, growing the window geometrically.
    #[inline]
    pub(crate) fn ensure(&mut self, x: i64) {
        if let SiteSource::Iid { .. } = self.source {
            let base = x + self.offset;
            if self.window.get(base).is_some() {
                return;
            }
            let (lo, hi) = match self.window.atoms.is_empty() {
                true => (base - 64, base + 64),
                false => {
                    let len = self.window.atoms.len() as i64;
                    (base.min(self.window.lo - len), base.max(self.window.hi() + len))
                }
            };
            self.realize(lo - self.offset, hi - self.offset);
        }
    }
}

// Non-negative sites read stream 0 at word 2x; negative sites read stream 1
// at word 2(-x-1). Each site consumes exactly one u64.
fn site_rng(seed: u64, base: i64) -> SimRng {
    let (stream, j) = if base >= 0 { (0, base as u64) } else { (1, (-(base + 1)) as u64) };
    let mut r = rng::stream(seed, Domain::Sites, stream);
    r.set_word_pos(2 * j as u128);
    r
}

#[inline]
fn draw_atom(r: &mut SimRng, cumulative: &[f64]) -> u32 {
    let u: f64 = r.random();
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1) as u32
}

fn draw_block(seed: u64, cumulative: &[f64], lo: i64, hi: i64) -> Vec<u32> {
    let mut out = Vec::with_capacity((hi - lo + 1) as usize);
    if lo < 0 {
        let top = hi.min(-1);
        let mut r = site_rng(seed, top);
        let mut neg: Vec<u32> = (lo..=top).map(|_| draw_atom(&mut r, cumulative)).collect();
        neg.reverse();
        out.extend(neg);
    }
    if hi >= 0 {
        let start = lo.max(0);
        let mut r = site_rng(seed, start);
        out.extend((start..=hi).map(|_| draw_atom(&mut r, cumulative)));
    }
    out
}
