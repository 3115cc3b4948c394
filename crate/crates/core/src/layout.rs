//! Indexing of crossing-back types.
//!
//! A down-step `i -> i-1` is eventually undone by the first jump that reaches
//! level `i` or above. If that jump goes from `i - depth` to `i + landing`, the
//! down-step has type `(landing, depth)` with `depth >= 1`, `landing >= 0` and
//! `landing + depth <= R`, giving `R(R+1)/2` types.
//!
//! Types are ordered by landing level, then by depth:
//! `(0,1), (0,2), ..., (0,R), (1,1), ..., (1,R-1), ..., (R-1,1)`.
//! For `R = 2` this is `A = (0,1)`, `B = (0,2)`, `C = (1,1)`.

use std::ops::Range;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CrossingType {
    pub landing: usize,
    pub depth: usize,
}

/// Type index of `A` when `R = 2`.
pub const TYPE_A: usize = 0;
/// Type index of `B` when `R = 2`.
pub const TYPE_B: usize = 1;
/// Type index of `C` when `R = 2`.
pub const TYPE_C: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TypeLayout {
    r: usize,
}

impl TypeLayout {
    pub fn new(r: usize) -> Self {
        assert!(r >= 1, "jump bound must be positive");
        Self { r }
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Number of types, `R(R+1)/2`.
    pub fn len(&self) -> usize {
        self.r * (self.r + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index range of the types landing at `i + landing`.
    pub fn group(&self, landing: usize) -> Range<usize> {
        let start = landing * self.r - landing * landing.saturating_sub(1) / 2;
        start..start + (self.r - landing)
    }

    /// Types that land exactly back on the departed level.
    pub fn base(&self) -> Range<usize> {
        self.group(0)
    }

    pub fn index(&self, t: CrossingType) -> usize {
        debug_assert!(t.depth >= 1 && t.landing + t.depth <= self.r);
        self.group(t.landing).start + t.depth - 1
    }

    pub fn type_at(&self, idx: usize) -> CrossingType {
        let mut landing = 0;
        while !self.group(landing).contains(&idx) {
            landing += 1;
        }
        CrossingType { landing, depth: idx - self.group(landing).start + 1 }
    }

    pub fn types(&self) -> impl Iterator<Item = CrossingType> + '_ {
        (0..self.len()).map(|i| self.type_at(i))
    }

    /// The child a parent of type `idx` always produces one level down:
    /// `(landing, depth)` with `depth >= 2` forces `(landing + 1, depth - 1)`.
    pub fn forced_child(&self, idx: usize) -> Option<usize> {
        let t = self.type_at(idx);
        (t.depth >= 2).then(|| self.index(CrossingType { landing: t.landing + 1, depth: t.depth - 1 }))
    }

    /// Time weights: each base-type down-step accounts for itself and for the
    /// up-jump that closes it; overshooting types account only for themselves.
    pub fn time_weights(&self) -> Vec<u64> {
        (0..self.len()).map(|i| if i < self.r { 2 } else { 1 }).collect()
    }
}
