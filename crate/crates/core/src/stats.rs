//! Running mean and variance.

use serde::Serialize;

/// Mergeable sample accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanVar {
    pub n: u64,
    sum: f64,
    sumsq: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    pub fn merge(&mut self, other: &MeanVar) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = MeanVar::default();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// Point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl From<MeanVar> for Estimate {
    fn from(m: MeanVar) -> Self {
        Self { mean: m.mean(), stderr: m.stderr(), samples: m.n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_and_merge() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let all: MeanVar = xs.iter().copied().collect();
        assert_eq!(all.mean(), 3.5);
        assert!((all.variance() - 7.0).abs() < 1e-12);
        let mut a: MeanVar = xs[..1].iter().copied().collect();
        a.merge(&xs[1..].iter().copied().collect());
        assert_eq!(a, all);
        assert_eq!(MeanVar::default().variance(), 0.0);
    }
}
