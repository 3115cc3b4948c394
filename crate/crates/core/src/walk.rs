//! Quenched simulation: single steps, paths up to the first ladder time, and
//! fixed-horizon trajectories.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Environment;

/// Step cap for one ladder path.
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WalkError {
    /// The walk did not rise above 0 within the cap. Either the walk is not
    /// transient to the right or the cap is too small.
    #[error("no ladder time within {0} steps")]
    MaxStepsExceeded(u64),
    #[error("malformed path: {0}")]
    MalformedPath(String),
}

/// The last jump of a ladder path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EndingJump {
    pub from: i64,
    pub size: i64,
}

/// `X_0 = 0, X_1, ..., X_{T_1}`: a path stopped at its first strict ascent above 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPath")]
pub struct WalkPath {
    sites: Vec<i64>,
}

#[derive(Deserialize)]
struct RawPath {
    sites: Vec<i64>,
}

impl TryFrom<RawPath> for WalkPath {
    type Error = WalkError;

    fn try_from(raw: RawPath) -> Result<Self, Self::Error> {
        let r = raw.sites.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(1).max(1);
        WalkPath::from_sites(raw.sites, r as usize)
    }
}

impl WalkPath {
    /// Checks the ladder-path invariants for jumps bounded by `r`.
    pub fn from_sites(sites: Vec<i64>, r: usize) -> Result<Self, WalkError> {
        let bad = |msg: String| Err(WalkError::MalformedPath(msg));
        if sites.len() < 2 {
            return bad(format!("need at least two sites, got {}", sites.len()));
        }
        if sites[0] != 0 {
            return bad(format!("path starts at {} instead of 0", sites[0]));
        }
        let t1 = sites.len() - 1;
        for (k, w) in sites.windows(2).enumerate() {
            let d = w[1] - w[0];
            if d != -1 && !(1..=r as i64).contains(&d) {
                return bad(format!("increment {d} at step {k} outside {{-1, 1..={r}}}"));
            }
        }
        if let Some(k) = sites[..t1].iter().position(|&x| x > 0) {
            return bad(format!("site {} > 0 at step {k} before the end", sites[k]));
        }
        if sites[t1] < 1 {
            return bad(format!("path ends at {} without a ladder ascent", sites[t1]));
        }
        Ok(Self { sites })
    }

    pub fn sites(&self) -> &[i64] {
        &self.sites
    }

    /// Ladder time `T_1`.
    pub fn t1(&self) -> usize {
        self.sites.len() - 1
    }

    /// `X_{T_1}`.
    pub fn end_position(&self) -> i64 {
        self.sites[self.t1()]
    }

    pub fn ended_by(&self) -> EndingJump {
        let from = self.sites[self.t1() - 1];
        EndingJump { from, size: self.end_position() - from }
    }

    pub fn min_site(&self) -> i64 {
        *self.sites.iter().min().expect("non-empty")
    }

    /// Number of `-1` increments.
    pub fn down_steps(&self) -> usize {
        self.sites.windows(2).filter(|w| w[1] < w[0]).count()
    }
}

/// `V_i`: visits to site `i <= 0` at times `0..T_1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalTimes {
    lo: i64,
    counts: Vec<u64>,
}

impl LocalTimes {
    pub fn get(&self, i: i64) -> u64 {
        if i < self.lo || i > 0 {
            return 0;
        }
        self.counts[(i - self.lo) as usize]
    }

    /// `(site, visits)` for every site in `[min_site, 0]`, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().enumerate().map(move |(j, &c)| (self.lo + j as i64, c))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Local times of a ladder path; the terminal position is not counted.
pub fn local_times(path: &WalkPath) -> LocalTimes {
    let lo = path.min_site();
    let mut counts = vec![0u64; (1 - lo) as usize];
    for &x in &path.sites[..path.t1()] {
        counts[(x - lo) as usize] += 1;
    }
    LocalTimes { lo, counts }
}

/// One step from `x` in the quenched law.
#[inline]
pub fn step<R: Rng + ?Sized>(env: &Environment, x: i64, rng: &mut R) -> i64 {
    x + env.law(x).jump_for(rng.random())
}

/// Run from 0 until the first time the walk is strictly above 0.
pub fn simulate_until_ladder<R: Rng + ?Sized>(
    env: &Environment,
    rng: &mut R,
    max_steps: u64,
) -> Result<WalkPath, WalkError> {
    let mut sites = vec![0i64];
    let mut x = 0i64;
    while x <= 0 {
        if sites.len() as u64 > max_steps {
            return Err(WalkError::MaxStepsExceeded(max_steps));
        }
        x = step(env, x, rng);
        sites.push(x);
    }
    Ok(WalkPath { sites })
}

/// `X_0, ..., X_n` started from 0.
pub fn simulate_fixed_n<R: Rng + ?Sized>(env: &Environment, n: usize, rng: &mut R) -> Vec<i64> {
    let mut local = env.clone();
    let mut x = 0i64;
    let mut out = Vec::with_capacity(n + 1);
    out.push(x);
    for _ in 0..n {
        local.ensure(x);
        x = step(&local, x, rng);
        out.push(x);
    }
    out
}

/// `X_n` only; consumes the same random numbers as [`simulate_fixed_n`].
pub fn position_after<R: Rng + ?Sized>(env: &Environment, n: u64, rng: &mut R) -> i64 {
    let mut local = env.clone();
    let mut x = 0i64;
    for _ in 0..n {
        local.ensure(x);
        x = step(&local, x, rng);
    }
    x
}
