//! Expected ladder time, invariant density, drift, and the homogeneous closed forms.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::env::{Environment, EnvironmentLaw, LawKind, SiteLaw};
use crate::exitprob::{ExitError, ExitOptions, MeanMatrix, Quenched};
use crate::rng::{child_seed, stream, Domain};
use crate::stats::{Estimate, MeanVar};
use crate::walk::{local_times, position_after, simulate_until_ladder, WalkError};

/// Fewest paths per ending position accepted by [`estimate_density_mc`].
pub const MIN_CONDITIONING: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error(transparent)]
    Exit(#[from] ExitError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error("series terms still at {last:.3e} after {depth} terms")]
    SeriesDiverged { depth: usize, last: f64 },
    #[error("E(X_1) = {0} is not positive")]
    NotDriftPositive(f64),
    #[error("needs jump bound R = {expected}, got {found}")]
    RangeMismatch { expected: usize, found: usize },
    #[error("spectral radius {0} is not below 1")]
    SpectralRadiusAtLeastOne(f64),
    #[error("shift {shift}: only {found} paths ended at X_T1 = {end}, need {required}")]
    ConditioningStarved { shift: i64, end: usize, found: u64, required: u64 },
    #[error("drift denominator {0} is not positive")]
    DenominatorNonpositive(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesOptions {
    /// Maximum number of terms.
    pub depth: usize,
    /// A term with max-norm below this ends the series.
    pub tol: f64,
    pub min_terms: usize,
    pub exit: ExitOptions,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { depth: 2000, tol: 1e-12, min_terms: 5, exit: ExitOptions::default() }
    }
}

/// A truncated series and the number of terms used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Sums `f(0) + f(1) + ...` where `f(k)` is a row vector, stopping on the
/// first small term past `min_terms`.
fn sum_rows<F>(opts: &SeriesOptions, mut term: F) -> Result<(DVector<f64>, usize), AnalyticsError>
where
    F: FnMut(usize) -> Result<DVector<f64>, AnalyticsError>,
{
    let mut acc: Option<DVector<f64>> = None;
    let mut last = f64::INFINITY;
    for k in 0..opts.depth {
        let t = term(k)?;
        last = max_norm(&t);
        match acc.as_mut() {
            Some(a) => *a += &t,
            None => acc = Some(t),
        }
        if k + 1 >= opts.min_terms && last < opts.tol {
            return Ok((acc.expect("at least one term"), k + 1));
        }
    }
    Err(AnalyticsError::SeriesDiverged { depth: opts.depth, last })
}

fn weights(q: &Quenched) -> DVector<f64> {
    DVector::from_iterator(q.layout().len(), q.layout().time_weights().into_iter().map(|w| w as f64))
}

fn mean_at(q: &mut Quenched, i: i64) -> Result<DMatrix<f64>, AnalyticsError> {
    Ok(q.mean_matrix(i)?.matrix().clone())
}

fn quenched_t1(q: &mut Quenched, opts: &SeriesOptions) -> Result<SeriesValue, AnalyticsError> {
    let w = weights(q);
    let mut row = DVector::from_vec(q.immigration(0)?).transpose();
    let (acc, terms) = sum_rows(opts, |k| {
        row = &row * mean_at(q, -(k as i64))?;
        Ok(row.transpose())
    })?;
    Ok(SeriesValue { value: 1.0 + w.dot(&acc), terms })
}

/// `E_omega(T_1) = 1 + <w, m_0 sum_{i<=0} N(0)...N(i)>`, where `m_0` is the
/// law of the immigrant and `w` weighs base types 2 and overshooting types 1.
pub fn expected_t1(env: &Environment, opts: &SeriesOptions) -> Result<SeriesValue, AnalyticsError> {
    quenched_t1(&mut Quenched::new(env, opts.exit), opts)
}

fn density_in(q: &mut Quenched, opts: &SeriesOptions) -> Result<SeriesValue, AnalyticsError> {
    let n = q.layout().len();
    let stop = 1.0 - q.crossing_back(0)?.base_sum();
    if stop <= 0.0 {
        return Err(ExitError::DegenerateDenominator(stop).into());
    }
    let mut prod = DMatrix::<f64>::identity(n, n);
    let (acc, terms) = sum_rows(opts, |k| {
        let i = k as i64 + 1;
        prod = mean_at(q, i)? * &prod;
        Ok((DVector::from_vec(q.conditional_immigrants(i)?).transpose() * &prod).transpose())
    })?;
    Ok(SeriesValue { value: (reachable_ends(q)? + acc.sum()) / stop, terms })
}

/// `Pi(omega) = [R + <1, sum_{i>=1} c(i) N(i)...N(1)>] / (1 - sum_base(0))`,
/// where `c(i)` is the expected immigrant given each ending position, summed.
pub fn invariant_density(env: &Environment, opts: &SeriesOptions) -> Result<SeriesValue, AnalyticsError> {
    density_in(&mut Quenched::new(env, opts.exit), opts)
}

/// Number of ending positions `X_{T_1}` reachable from 0; `R` unless some
/// jump sizes have probability 0.
fn reachable_ends(q: &mut Quenched) -> Result<f64, AnalyticsError> {
    Ok(q.conditional_immigrants(0)?.iter().sum())
}

fn denominator_in(q: &mut Quenched, opts: &SeriesOptions) -> Result<SeriesValue, AnalyticsError> {
    let n = q.layout().len();
    let w = weights(q);
    let mut prod = DMatrix::<f64>::identity(n, n);
    let (acc, terms) = sum_rows(opts, |k| {
        let i = k as i64;
        prod = mean_at(q, i)? * &prod;
        Ok((DVector::from_vec(q.conditional_immigrants(i)?).transpose() * &prod).transpose())
    })?;
    Ok(SeriesValue { value: reachable_ends(q)? + w.dot(&acc), terms })
}

/// Quenched numerator and denominator of the drift formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftTerms {
    pub numerator: f64,
    pub denominator: f64,
    pub terms: usize,
}

pub fn drift_terms(env: &Environment, opts: &SeriesOptions) -> Result<DriftTerms, AnalyticsError> {
    let mut q = Quenched::new(env, opts.exit);
    let pi = density_in(&mut q, opts)?;
    let den = denominator_in(&mut q, opts)?;
    Ok(DriftTerms {
        numerator: env.law(0).mean_step() * pi.value,
        denominator: den.value,
        terms: pi.terms.max(den.terms),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    pub v_p: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// Delta-method standard error of `v_p`; `None` when exact.
    pub stderr: Option<f64>,
    pub depth: usize,
    pub estimator: Estimator,
}

/// `v_P = E_P[numerator] / E_P[denominator]`.
///
/// Homogeneous laws are exact, periodic laws average exactly over the phases,
/// i.i.d. laws average over `env_samples` realizations.
pub fn drift(
    law: &EnvironmentLaw,
    opts: &SeriesOptions,
    env_samples: usize,
    seed: u64,
) -> Result<DriftReport, AnalyticsError> {
    let envs: Vec<Environment> = match law.kind() {
        LawKind::Homogeneous => vec![law.realization(0)],
        LawKind::Periodic => {
            let base = law.realization(0);
            (0..law.atoms().len() as i64).map(|k| base.shift(k)).collect()
        }
        LawKind::IidFiniteSupport => {
            if env_samples < 2 {
                return Err(AnalyticsError::InvalidArgument("need at least 2 environment samples".into()));
            }
            (0..env_samples as u64).map(|j| law.realization(child_seed(seed, Domain::Environments, j))).collect()
        }
    };
    let terms: Vec<DriftTerms> = envs
        .par_iter()
        .map(|e| {
            let mut e = e.clone();
            e.realize(-(opts.depth as i64) - 64, opts.depth as i64 + 64);
            drift_terms(&e, opts)
        })
        .collect::<Result<_, _>>()?;
    let num: MeanVar = terms.iter().map(|t| t.numerator).collect();
    let den: MeanVar = terms.iter().map(|t| t.denominator).collect();
    let depth = terms.iter().map(|t| t.terms).max().unwrap_or(0);
    let (a, b) = (num.mean(), den.mean());
    if b <= 0.0 {
        return Err(AnalyticsError::DenominatorNonpositive(b));
    }
    let v = a / b;
    let (stderr, estimator) = match law.kind() {
        LawKind::IidFiniteSupport => {
            let n = terms.len() as f64;
            let cov = terms.iter().map(|t| (t.numerator - a) * (t.denominator - b)).sum::<f64>() / (n - 1.0);
            let var = (num.variance() - 2.0 * v * cov + v * v * den.variance()) / (n * b * b);
            (Some(var.max(0.0).sqrt()), Estimator::MonteCarlo { samples: terms.len() })
        }
        _ => (None, Estimator::Exact),
    };
    Ok(DriftReport { v_p: v, numerator: a, denominator: b, stderr, depth, estimator })
}

/// Explicit solution for a constant environment with `R = 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HomogeneousSolution {
    pub delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub exit1: f64,
    pub exit2: f64,
    pub e_xt1: f64,
    pub e_t1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn require_r2(site: &SiteLaw) -> Result<(), AnalyticsError> {
    match site.range() {
        2 => Ok(()),
        found => Err(AnalyticsError::RangeMismatch { expected: 2, found }),
    }
}

pub fn homogeneous_closed_forms(site: &SiteLaw) -> Result<HomogeneousSolution, AnalyticsError> {
    require_r2(site)?;
    let (q, p1, p2) = (site.q(), site.p_k(1), site.p_k(2));
    let drift = site.mean_step();
    if drift <= 0.0 {
        return Err(AnalyticsError::NotDriftPositive(drift));
    }
    if q <= 0.0 {
        return Err(ExitError::ZeroLeftProbability { site: 0 }.into());
    }
    let s = p1 + p2;
    let delta = (s * s + 4.0 * q * p2).sqrt();
    let lambda1 = (s + delta) / (2.0 * q);
    let lambda2 = (s - delta) / (2.0 * q);
    let gamma = -q * lambda2;
    let back = q * (1.0 + lambda2);
    let split = p1 - q * lambda2;
    Ok(HomogeneousSolution {
        delta,
        lambda1,
        lambda2,
        exit1: 1.0 + lambda2,
        exit2: -lambda2,
        e_xt1: 1.0 - lambda2,
        e_t1: 2.0 * delta / (1.0 - q - q * p1 + 3.0 * q * p2 + (1.0 - 3.0 * q) * delta),
        alpha: back * p1 / split,
        beta: back * gamma / split,
        gamma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WaldReport {
    pub e_x1: f64,
    pub e_xt1: f64,
    pub e_t1_closed: f64,
    pub e_t1_series: f64,
    pub series_terms: usize,
    /// `|E(X_T1) - E(T_1) E(X_1)|` with the closed-form `E(T_1)`.
    pub residual_closed: f64,
    /// The same with `E(T_1)` from the branching series.
    pub residual_series: f64,
}

pub fn wald_check(site: &SiteLaw, opts: &SeriesOptions) -> Result<WaldReport, AnalyticsError> {
    let h = homogeneous_closed_forms(site)?;
    let e_x1 = site.mean_step();
    let series = expected_t1(&Environment::homogeneous(site.clone()), opts)?;
    Ok(WaldReport {
        e_x1,
        e_xt1: h.e_xt1,
        e_t1_closed: h.e_t1,
        e_t1_series: series.value,
        series_terms: series.terms,
        residual_closed: (h.e_xt1 - h.e_t1 * e_x1).abs(),
        residual_series: (h.e_xt1 - series.value * e_x1).abs(),
    })
}

/// `sum_{n>=1} N^n` two ways.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricSeries {
    pub closed_form: MeanMatrix,
    pub partial_sum: MeanMatrix,
    pub partial_terms: usize,
    pub spectral_radius: f64,
}

/// Spectral radius of a small matrix by repeated squaring:
/// `rho = lim ||N^(2^k)||^(1/2^k)`.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let norm = |a: &DMatrix<f64>| a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut a = m.clone();
    let mut log_scale = 0.0;
    let mut est = f64::INFINITY;
    for k in 0..40 {
        let n = norm(&a);
        if n == 0.0 {
            return 0.0;
        }
        a /= n;
        log_scale += n.ln();
        est = (log_scale / 2f64.powi(k)).exp();
        a = &a * &a;
        log_scale *= 2.0;
    }
    est
}

/// Closed form (for three types, the explicit eigen-decomposition formula in
/// `alpha = N11 / (1 + N11 + N12)`, `beta = N12 / (1 + N11 + N12)`; otherwise
/// `(I - N)^-1 - I`) next to the partial sum of `terms` powers.
pub fn geometric_series_mean_matrix(n: &MeanMatrix, terms: usize) -> Result<GeometricSeries, AnalyticsError> {
    let m = n.matrix();
    let rho = spectral_radius(m);
    if rho >= 1.0 {
        return Err(AnalyticsError::SpectralRadiusAtLeastOne(rho));
    }
    let d = m.nrows();
    let closed = if d == 3 {
        let (a, b) = (m[(0, 0)], m[(0, 1)]);
        let (alpha, beta) = (a / (1.0 + a + b), b / (1.0 + a + b));
        let c = 1.0 / (1.0 - 2.0 * alpha - 3.0 * beta);
        DMatrix::from_row_slice(
            3,
            3,
            &[alpha, beta, beta, 2.0 * alpha, 2.0 * beta, 1.0 - 2.0 * alpha - beta, alpha, beta, beta],
        ) * c
    } else {
        let id = DMatrix::<f64>::identity(d, d);
        let inv = (&id - m).try_inverse().ok_or(AnalyticsError::SpectralRadiusAtLeastOne(rho))?;
        inv - id
    };
    let mut power = m.clone();
    let mut sum = m.clone();
    for _ in 1..terms {
        power = &power * m;
        sum += &power;
    }
    Ok(GeometricSeries {
        closed_form: MeanMatrix::from_matrix(closed),
        partial_sum: MeanMatrix::from_matrix(sum),
        partial_terms: terms,
        spectral_radius: rho,
    })
}

/// One step of the environment seen from the walker: `theta^k omega` with
/// probability `p_k(0)`, `theta^{-1} omega` with probability `q(0)`.
pub fn kernel_step<R: Rng + ?Sized>(env: &Environment, rng: &mut R) -> Environment {
    env.shift(env.law(0).jump_for(rng.random()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Contribution of each shift `0, 1, ..., shift_depth`.
    pub per_shift: Vec<f64>,
    pub paths: u64,
}

/// Monte Carlo version of [`invariant_density`]: for `m = 0..=shift_depth`,
/// simulate ladder paths in `theta^m omega` and add up
/// `E(V_{-m} | X_{T_1} = j)` over the ending positions `j`.
pub fn estimate_density_mc(
    env: &Environment,
    paths_per_shift: u64,
    shift_depth: u64,
    seed: u64,
    max_steps: u64,
) -> Result<DensityEstimate, AnalyticsError> {
    if shift_depth < 1 {
        return Err(AnalyticsError::InvalidArgument("shift_depth must be at least 1".into()));
    }
    let r = env.range();
    let parts: Vec<(f64, f64)> = (0..=shift_depth)
        .into_par_iter()
        .map(|m| {
            let shifted = env.shift(m as i64);
            let site = -(m as i64);
            let mut by_end = vec![MeanVar::default(); r];
            for j in 0..paths_per_shift {
                let mut rng = stream(seed, Domain::DensityShifts, (m << 32) | j);
                let path = simulate_until_ladder(&shifted, &mut rng, max_steps)?;
                by_end[path.end_position() as usize - 1].push(local_times(&path).get(site) as f64);
            }
            let mut value = 0.0;
            let mut var = 0.0;
            for (end, s) in by_end.iter().enumerate() {
                if s.n < MIN_CONDITIONING {
                    return Err(AnalyticsError::ConditioningStarved {
                        shift: m as i64,
                        end: end + 1,
                        found: s.n,
                        required: MIN_CONDITIONING,
                    });
                }
                value += s.mean();
                var += s.stderr().powi(2);
            }
            Ok((value, var))
        })
        .collect::<Result<_, AnalyticsError>>()?;
    Ok(DensityEstimate {
        value: parts.iter().map(|p| p.0).sum(),
        stderr: parts.iter().map(|p| p.1).sum::<f64>().sqrt(),
        per_shift: parts.iter().map(|p| p.0).collect(),
        paths: paths_per_shift * (shift_depth + 1),
    })
}

/// `X_n / n` averaged over independent replicas, each in a fresh draw from
/// `law` (a uniformly random phase for periodic laws).
pub fn empirical_velocity(law: &EnvironmentLaw, n: u64, replicas: u64, seed: u64) -> Estimate {
    let period = law.atoms().len() as u64;
    let speeds: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|j| {
            let env_seed = child_seed(seed, Domain::Environments, j);
            let env = match law.kind() {
                LawKind::Periodic => law.realization(0).shift((env_seed % period) as i64),
                _ => law.realization(env_seed),
            };
            position_after(&env, n, &mut stream(seed, Domain::Trajectories, j)) as f64 / n as f64
        })
        .collect();
    speeds.into_iter().collect::<MeanVar>().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exitprob::crossing_back_probs_r2;

    fn site(q: f64, p: &[f64]) -> SiteLaw {
        SiteLaw::new(q, p, 0.0).unwrap()
    }

    #[test]
    fn closed_forms_reference_law() {
        let h = homogeneous_closed_forms(&site(0.2, &[0.5, 0.3])).unwrap();
        assert!((h.delta - 0.88f64.sqrt()).abs() < 1e-15);
        assert!((h.lambda2 + 0.34520788).abs() < 1e-8);
        assert!(h.lambda1 > 1.0 && h.lambda2 > -1.0 && h.lambda2 < 0.0);
        assert!((h.e_xt1 - 1.34520788).abs() < 1e-8);
        assert!((h.e_t1 - 1.49467542).abs() < 1e-8);
        assert!((h.alpha + h.beta + h.gamma - 0.2).abs() < 1e-15);
        assert!((h.e_t1 * 0.9 - h.e_xt1).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_nearest_neighbour() {
        let h = homogeneous_closed_forms(&site(0.3, &[0.7, 0.0])).unwrap();
        assert_eq!((h.lambda2, h.exit2, h.e_xt1), (0.0, 0.0, 1.0));
        assert!((h.e_t1 - 1.0 / 0.4).abs() < 1e-12);
    }

    #[test]
    fn closed_form_errors() {
        assert!(matches!(homogeneous_closed_forms(&site(0.6, &[0.3, 0.1])), Err(AnalyticsError::NotDriftPositive(_))));
        assert!(matches!(homogeneous_closed_forms(&site(0.3, &[0.7])), Err(AnalyticsError::RangeMismatch { .. })));
    }

    #[test]
    fn series_t1_matches_closed_form() {
        let env = Environment::homogeneous(site(0.2, &[0.5, 0.3]));
        let t = expected_t1(&env, &SeriesOptions::default()).unwrap();
        assert!((t.value - 1.49467542).abs() < 1e-8, "{}", t.value);
        assert!(t.terms >= 5);
    }

    #[test]
    fn series_t1_nearest_neighbour_r1() {
        let env = Environment::homogeneous(site(0.3, &[0.7]));
        let t = expected_t1(&env, &SeriesOptions::default()).unwrap();
        assert!((t.value - 2.5).abs() < 1e-9);
    }

    #[test]
    fn tiny_q_gives_t1_near_one() {
        let env = Environment::homogeneous(site(1e-6, &[0.5, 0.5 - 1e-6]));
        let t = expected_t1(&env, &SeriesOptions::default()).unwrap();
        assert!(t.value > 1.0 && t.value - 1.0 < 1e-5);
    }

    #[test]
    fn series_diverges_when_depth_is_short() {
        let env = Environment::homogeneous(site(0.45, &[0.3, 0.25]));
        let opts = SeriesOptions { depth: 3, ..SeriesOptions::default() };
        assert!(matches!(expected_t1(&env, &opts), Err(AnalyticsError::SeriesDiverged { .. })));
    }

    #[test]
    fn wald_reference_laws() {
        for (q, p1, p2) in [(0.2, 0.5, 0.3), (0.3, 0.4, 0.3)] {
            let w = wald_check(&site(q, &[p1, p2]), &SeriesOptions::default()).unwrap();
            assert!(w.residual_closed < 1e-10 && w.residual_series < 1e-10, "{w:?}");
        }
        let w = wald_check(&site(0.35, &[0.65, 0.0]), &SeriesOptions::default()).unwrap();
        assert!(w.residual_closed < 1e-12);
    }

    #[test]
    fn homogeneous_drift_reduces_to_mean_step() {
        for (q, p) in [(0.2, vec![0.5, 0.3]), (0.3, vec![0.7, 0.0]), (0.25, vec![0.25, 0.25, 0.25]), (0.3, vec![0.7])] {
            let s = site(q, &p);
            let rep = drift(&EnvironmentLaw::homogeneous(s.clone()), &SeriesOptions::default(), 0, 0).unwrap();
            assert!((rep.v_p - s.mean_step()).abs() < 1e-10, "{q} {p:?}: {}", rep.v_p);
            assert_eq!(rep.estimator, Estimator::Exact);
        }
    }

    #[test]
    fn geometric_series_reference() {
        let env = Environment::homogeneous(site(0.2, &[0.5, 0.3]));
        let cb = crossing_back_probs_r2(&env, 0, &ExitOptions::default()).unwrap();
        let n = crate::exitprob::mean_matrix(&cb).unwrap();
        let g = geometric_series_mean_matrix(&n, 200).unwrap();
        let diff = (g.closed_form.matrix() - g.partial_sum.matrix()).amax();
        assert!(diff < 1e-8, "{diff}");
        let c11 = cb.alpha() / (1.0 - 2.0 * cb.alpha() - 3.0 * cb.beta());
        assert!((g.closed_form.get(0, 0) - c11).abs() < 1e-12);
        assert!((c11 - 0.15933293).abs() < 1e-8);
        assert!(g.spectral_radius < 1.0);
    }

    #[test]
    fn geometric_series_nilpotent() {
        let mut m = DMatrix::zeros(3, 3);
        m[(1, 2)] = 1.0;
        let g = geometric_series_mean_matrix(&MeanMatrix::from_matrix(m.clone()), 200).unwrap();
        assert_eq!(g.spectral_radius, 0.0);
        assert_eq!(g.closed_form.matrix(), &m);
        assert_eq!(g.partial_sum.matrix(), &m);
    }

    #[test]
    fn spectral_radius_guard() {
        let m = DMatrix::from_row_slice(3, 3, &[0.6, 0.5, 0.0, 0.6, 0.5, 1.0, 0.6, 0.5, 0.0]);
        assert!(matches!(
            geometric_series_mean_matrix(&MeanMatrix::from_matrix(m), 200),
            Err(AnalyticsError::SpectralRadiusAtLeastOne(_))
        ));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]));
        assert!((spectral_radius(&d) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn density_is_shift_invariant_when_homogeneous() {
        let env = Environment::homogeneous(site(0.2, &[0.5, 0.3]));
        let opts = SeriesOptions::default();
        let a = invariant_density(&env, &opts).unwrap().value;
        let b = invariant_density(&env.shift(5), &opts).unwrap().value;
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn kernel_step_never_left_without_q() {
        let env = Environment::homogeneous(site(0.0, &[0.5, 0.5]));
        let mut rng = stream(1, Domain::Kernel, 0);
        for _ in 0..1000 {
            assert!(kernel_step(&env, &mut rng).offset() > 0);
        }
    }

    #[test]
    fn density_mc_rejects_zero_depth() {
        let env = Environment::homogeneous(site(0.2, &[0.5, 0.3]));
        assert!(matches!(estimate_density_mc(&env, 10, 0, 1, 1000), Err(AnalyticsError::InvalidArgument(_))));
        let nn = Environment::homogeneous(site(0.3, &[0.7, 0.0]));
        assert!(matches!(
            estimate_density_mc(&nn, 100, 1, 1, 100_000),
            Err(AnalyticsError::ConditioningStarved { end: 2, .. })
        ));
    }
}
