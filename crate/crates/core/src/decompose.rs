//! Decomposition of a ladder path into its multitype branching process.
//!
//! Every down-step `i -> i-1` taken before `T_1` is a particle at level `i`.
//! Its type is the way the walk first climbs back to level `i` or above (see
//! [`crate::layout`]). Its parent is the particle at level `i+1` whose
//! excursion contains it; down-steps at level 0 descend from the immigrant,
//! which stands for the final ladder jump and lives at level 1.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::layout::{CrossingType, TypeLayout};
use crate::walk::{WalkError, WalkPath};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("malformed path: {0}")]
    MalformedPath(String),
    #[error("insufficient data: {found} conditioning events, need {required}")]
    InsufficientData { found: u64, required: u64 },
}

impl From<WalkError> for DecomposeError {
    fn from(e: WalkError) -> Self {
        match e {
            WalkError::MalformedPath(m) => Self::MalformedPath(m),
            other => Self::MalformedPath(other.to_string()),
        }
    }
}

/// Who a particle descends from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parent {
    Immigrant,
    Step(usize),
}

/// A classified down-step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Particle {
    pub level: i64,
    /// Time `k` with `X_k = level`, `X_{k+1} = level - 1`.
    pub time: usize,
    pub parent: Parent,
    pub kind: usize,
}

/// Every particle of one path with its parent link.
#[derive(Clone, Debug)]
pub struct Genealogy {
    pub layout: TypeLayout,
    pub particles: Vec<Particle>,
    /// Type of the immigrant (the final ladder jump).
    pub immigrant: usize,
}

/// Per-level type counts `U(i)` for `i <= 0` plus the immigrant `U(1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchingRecord {
    layout: TypeLayout,
    levels: BTreeMap<i64, Vec<u64>>,
    immigration: usize,
}

impl BranchingRecord {
    pub fn layout(&self) -> TypeLayout {
        self.layout
    }

    pub fn r(&self) -> usize {
        self.layout.r()
    }

    /// `U(i)`; level 1 is the immigrant's unit vector, levels with no
    /// particles are all zero.
    pub fn counts(&self, level: i64) -> Vec<u64> {
        if level == 1 {
            return self.immigration_vector();
        }
        self.levels.get(&level).cloned().unwrap_or_else(|| vec![0; self.layout.len()])
    }

    /// Non-empty levels `i <= 0`, ascending.
    pub fn levels(&self) -> impl Iterator<Item = (i64, &[u64])> {
        self.levels.iter().map(|(&l, v)| (l, v.as_slice()))
    }

    pub fn immigration_type(&self) -> usize {
        self.immigration
    }

    pub fn immigration_vector(&self) -> Vec<u64> {
        let mut v = vec![0; self.layout.len()];
        v[self.immigration] = 1;
        v
    }

    /// `sum_{i <= 0} U(i)`.
    pub fn total(&self) -> Vec<u64> {
        let mut tot = vec![0; self.layout.len()];
        for v in self.levels.values() {
            tot.iter_mut().zip(v).for_each(|(t, c)| *t += c);
        }
        tot
    }

    /// `1 + <weights, sum_{i <= 0} U(i)>`.
    pub fn weighted_time(&self, weights: &[u64]) -> u64 {
        1 + self.total().iter().zip(weights).map(|(c, w)| c * w).sum::<u64>()
    }
}

fn check_range(path: &WalkPath, r: usize) -> Result<(), DecomposeError> {
    if r == 0 {
        return Err(DecomposeError::MalformedPath("jump bound must be positive".into()));
    }
    let s = path.sites();
    if let Some(k) = s.windows(2).position(|w| w[1] - w[0] > r as i64) {
        return Err(DecomposeError::MalformedPath(format!("jump {} at step {k} exceeds R = {r}", s[k + 1] - s[k])));
    }
    Ok(())
}

/// Classify every down-step and link it to its parent in one pass.
///
/// The open (not yet undone) down-steps are exactly one per level in
/// `(X_t, 0]`, so they form a stack indexed by depth below 0. An up-jump
/// `a -> b` closes the open steps at levels `a+1..=min(b, 0)`.
pub fn genealogy(path: &WalkPath, r: usize) -> Result<Genealogy, DecomposeError> {
    check_range(path, r)?;
    let layout = TypeLayout::new(r);
    let mut particles: Vec<Particle> = Vec::with_capacity(path.down_steps());
    let mut open: Vec<usize> = Vec::new();
    let sites = path.sites();
    let t1 = path.t1();
    for t in 0..t1 {
        let (a, b) = (sites[t], sites[t + 1]);
        if b < a {
            let parent = if a == 0 { Parent::Immigrant } else { Parent::Step(open[(-a - 1) as usize]) };
            open.push(particles.len());
            particles.push(Particle { level: a, time: t, parent, kind: usize::MAX });
        } else {
            let top = b.min(0);
            // deepest open level sits on top of the stack
            for j in (a + 1)..=top {
                let id = open.pop().expect("an open down-step per level above the walk");
                debug_assert_eq!(particles[id].level, j);
                particles[id].kind = layout.index(CrossingType { landing: (b - j) as usize, depth: (j - a) as usize });
            }
        }
    }
    debug_assert!(open.is_empty());
    let end = path.ended_by();
    let immigrant =
        layout.index(CrossingType { landing: (end.from + end.size - 1) as usize, depth: (1 - end.from) as usize });
    Ok(Genealogy { layout, particles, immigrant })
}

/// `U(i)` for every level, with `R(R+1)/2` types.
pub fn decompose_general(path: &WalkPath, r: usize) -> Result<BranchingRecord, DecomposeError> {
    Ok(record_from(&genealogy(path, r)?))
}

/// `U(i) = [A(i), B(i), C(i)]` for a path with jumps in `{-1, 1, 2}`.
pub fn decompose_r2(path: &WalkPath) -> Result<BranchingRecord, DecomposeError> {
    decompose_general(path, 2)
}

pub fn record_from(g: &Genealogy) -> BranchingRecord {
    let mut levels: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
    for p in &g.particles {
        levels.entry(p.level).or_insert_with(|| vec![0; g.layout.len()])[p.kind] += 1;
    }
    BranchingRecord { layout: g.layout, levels, immigration: g.immigrant }
}

/// `T_1 == 1 + <w, sum U(i)>` with base-landing weight 2 and overshoot weight 1.
pub fn verify_time_identity(path: &WalkPath, rec: &BranchingRecord) -> bool {
    rec.weighted_time(&rec.layout.time_weights()) == path.t1() as u64
}

/// Offspring counts of one parent type at one level.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OffspringCell {
    pub total: u64,
    pub outcomes: BTreeMap<Vec<u32>, u64>,
}

impl OffspringCell {
    pub fn frequency(&self, outcome: &[u32]) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.outcomes.get(outcome).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn merge(&mut self, other: &OffspringCell) {
        self.total += other.total;
        for (o, c) in &other.outcomes {
            *self.outcomes.entry(o.clone()).or_insert(0) += c;
        }
    }

    /// Mean number of children of each type.
    pub fn mean(&self, types: usize) -> Vec<f64> {
        let mut m = vec![0.0; types];
        for (o, &c) in &self.outcomes {
            m.iter_mut().zip(o).for_each(|(mi, &oi)| *mi += oi as f64 * c as f64);
        }
        m.iter_mut().for_each(|x| *x /= self.total.max(1) as f64);
        m
    }
}

/// Per-particle offspring tables keyed by `(child level, parent type)`.
///
/// The immigrant is a parent whose children live at level 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffspringTables {
    layout: TypeLayout,
    cells: BTreeMap<(i64, usize), OffspringCell>,
}

impl OffspringTables {
    pub fn new(layout: TypeLayout) -> Self {
        Self { layout, cells: BTreeMap::new() }
    }

    pub fn layout(&self) -> TypeLayout {
        self.layout
    }

    pub fn add(&mut self, g: &Genealogy) {
        let n = self.layout.len();
        let mut children: BTreeMap<Parent, Vec<u32>> = BTreeMap::new();
        children.insert(Parent::Immigrant, vec![0; n]);
        for (id, p) in g.particles.iter().enumerate() {
            children.entry(Parent::Step(id)).or_insert_with(|| vec![0; n]);
            children.entry(p.parent).or_insert_with(|| vec![0; n])[p.kind] += 1;
        }
        for (parent, outcome) in children {
            let (level, kind) = match parent {
                Parent::Immigrant => (0, g.immigrant),
                Parent::Step(id) => (g.particles[id].level - 1, g.particles[id].kind),
            };
            let cell = self.cells.entry((level, kind)).or_default();
            cell.total += 1;
            *cell.outcomes.entry(outcome).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: &OffspringTables) {
        for (k, c) in &other.cells {
            self.cells.entry(*k).or_default().merge(c);
        }
    }

    pub fn cell(&self, level: i64, parent: usize) -> Option<&OffspringCell> {
        self.cells.get(&(level, parent))
    }

    pub fn cells(&self) -> impl Iterator<Item = ((i64, usize), &OffspringCell)> {
        self.cells.iter().map(|(k, v)| (*k, v))
    }

    /// All levels merged; meaningful when every level has the same law.
    pub fn pooled(&self, parent: usize) -> OffspringCell {
        let mut out = OffspringCell::default();
        for ((_, p), c) in &self.cells {
            if *p == parent {
                out.merge(c);
            }
        }
        out
    }

    pub fn events(&self) -> u64 {
        self.cells.values().map(|c| c.total).sum()
    }
}

/// Offspring frequency tables over a set of paths from one environment.
pub fn empirical_offspring(paths: &[WalkPath], r: usize, min_events: u64) -> Result<OffspringTables, DecomposeError> {
    let mut tables = OffspringTables::new(TypeLayout::new(r));
    for p in paths {
        tables.add(&genealogy(p, r)?);
    }
    if tables.events() < min_events {
        return Err(DecomposeError::InsufficientData { found: tables.events(), required: min_events });
    }
    Ok(tables)
}

/// Probability that a parent of type `parent` has exactly `outcome` children,
/// given the base crossing-back probabilities `p_(1..R)` at the child level:
/// the base counts are negative-multinomial, the forced child is fixed.
pub fn offspring_probability(layout: TypeLayout, base: &[f64], parent: usize, outcome: &[u32]) -> f64 {
    let r = layout.r();
    let forced = layout.forced_child(parent);
    for (idx, &c) in outcome.iter().enumerate().skip(r) {
        if c != u32::from(forced == Some(idx)) {
            return 0.0;
        }
    }
    let stop = 1.0 - base.iter().sum::<f64>();
    let mut total = 0u32;
    let mut log_p = stop.ln();
    for (&c, &p) in outcome[..r].iter().zip(base) {
        if c > 0 {
            if p <= 0.0 {
                return 0.0;
            }
            log_p += c as f64 * p.ln() - ln_factorial(c);
        }
        total += c;
    }
    (log_p + ln_factorial(total)).exp()
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// All base-count vectors of length `r` with sum at most `max_total`.
pub fn base_outcomes(r: usize, max_total: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..r {
        out = out
            .into_iter()
            .flat_map(|v: Vec<u32>| {
                let used: u32 = v.iter().sum();
                (0..=max_total - used).map(move |c| {
                    let mut w = v.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
    }
    out
}

/// Total-variation distance between a cell and the analytic law, over the
/// outcomes whose base counts sum to at most `max_total`.
pub fn total_variation(cell: &OffspringCell, layout: TypeLayout, base: &[f64], parent: usize, max_total: u32) -> f64 {
    let r = layout.r();
    let forced = layout.forced_child(parent);
    let mut seen = std::collections::BTreeSet::new();
    let mut tv = 0.0;
    for b in base_outcomes(r, max_total) {
        let mut o = b;
        o.resize(layout.len(), 0);
        if let Some(f) = forced {
            o[f] = 1;
        }
        tv += (cell.frequency(&o) - offspring_probability(layout, base, parent, &o)).abs();
        seen.insert(o);
    }
    for o in cell.outcomes.keys() {
        if !seen.contains(o) && o[..r].iter().sum::<u32>() <= max_total {
            tv += (cell.frequency(o) - offspring_probability(layout, base, parent, o)).abs();
        }
    }
    tv / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{TYPE_A, TYPE_B, TYPE_C};

    fn path(s: &[i64]) -> WalkPath {
        WalkPath::from_sites(s.to_vec(), 3).unwrap()
    }

    #[test]
    fn overshooting_first_step() {
        let p = path(&[0, -1, 1]);
        let rec = decompose_r2(&p).unwrap();
        assert_eq!(rec.counts(0), vec![0, 0, 1]);
        assert_eq!(rec.immigration_vector(), vec![0, 1, 0]);
        assert!(verify_time_identity(&p, &rec));
        assert_eq!(rec.weighted_time(&[2, 2, 1]), 2);
    }

    #[test]
    fn nested_excursions() {
        let p = path(&[0, -1, 0, -1, -2, -1, 0, 1]);
        let rec = decompose_r2(&p).unwrap();
        assert_eq!(rec.counts(0), vec![2, 0, 0]);
        assert_eq!(rec.counts(-1), vec![1, 0, 0]);
        assert_eq!(rec.counts(-2), vec![0, 0, 0]);
        assert_eq!(rec.immigration_vector(), vec![1, 0, 0]);
        assert_eq!(p.t1(), 7);
        assert!(verify_time_identity(&p, &rec));
        // the wrong weight vector does not reproduce T_1
        assert_ne!(rec.weighted_time(&[3, 2, 1]), 7);
    }

    #[test]
    fn immigrant_from_plus_two() {
        let rec = decompose_r2(&path(&[0, 2])).unwrap();
        assert_eq!(rec.immigration_vector(), vec![0, 0, 1]);
        assert_eq!(rec.levels().count(), 0);
    }

    #[test]
    fn genealogy_links() {
        // 0 -> -1 -> -2 -> 0 -> -1 -> 1
        let g = genealogy(&path(&[0, -1, -2, 0, -1, 1]), 2).unwrap();
        let kinds: Vec<_> = g.particles.iter().map(|p| (p.level, p.kind, p.parent)).collect();
        assert_eq!(
            kinds,
            vec![(0, TYPE_B, Parent::Immigrant), (-1, TYPE_C, Parent::Step(0)), (0, TYPE_C, Parent::Immigrant),]
        );
        assert_eq!(g.immigrant, TYPE_B);
    }

    #[test]
    fn r1_counts_down_steps() {
        let p = WalkPath::from_sites(vec![0, -1, -2, -1, 0, -1, 0, 1], 1).unwrap();
        let rec = decompose_general(&p, 1).unwrap();
        assert_eq!(rec.counts(0), vec![2]);
        assert_eq!(rec.counts(-1), vec![1]);
        assert!(verify_time_identity(&p, &rec));
    }

    #[test]
    fn rejects_jumps_beyond_r() {
        let p = path(&[0, -1, 2]);
        assert!(matches!(decompose_r2(&p), Err(DecomposeError::MalformedPath(_))));
        assert!(decompose_general(&p, 3).is_ok());
    }

    #[test]
    fn offspring_tables_count_leaves() {
        let p = path(&[0, -1, 0, -1, -2, -1, 0, 1]);
        let t = empirical_offspring(&[p], 2, 1).unwrap();
        // immigrant A has children [2,0,0] at level 0
        assert_eq!(t.cell(0, TYPE_A).unwrap().outcomes.get(&vec![2, 0, 0]), Some(&1));
        // the two level-0 A particles: one childless, one with a single A child
        let c = t.cell(-1, TYPE_A).unwrap();
        assert_eq!(c.total, 2);
        assert_eq!(c.outcomes.get(&vec![0, 0, 0]), Some(&1));
        assert_eq!(c.outcomes.get(&vec![1, 0, 0]), Some(&1));
        assert_eq!(t.cell(-2, TYPE_A).unwrap().total, 1);
        assert!(matches!(
            empirical_offspring(&[], 2, 1),
            Err(DecomposeError::InsufficientData { found: 0, required: 1 })
        ));
    }

    #[test]
    fn offspring_law_normalizes() {
        let layout = TypeLayout::new(2);
        let base = [0.115, 0.016];
        for parent in 0..3 {
            let mut total = 0.0;
            for b in base_outcomes(2, 60) {
                let mut o = b.clone();
                o.push(u32::from(parent == TYPE_B));
                total += offspring_probability(layout, &base, parent, &o);
            }
            // tail beyond a+b = 60 is below (a+b)^61, negligible
            assert!((total - 1.0).abs() < 1e-12, "parent {parent}: {total}");
        }
        assert_eq!(offspring_probability(layout, &base, TYPE_A, &[0, 0, 1]), 0.0);
        assert_eq!(offspring_probability(layout, &base, TYPE_B, &[0, 0, 0]), 0.0);
    }
}
