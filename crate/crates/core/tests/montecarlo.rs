//! Simulation against the analytic quantities.

use rayon::prelude::*;
use rwre_core::decompose::{empirical_offspring, genealogy, OffspringTables};
use rwre_core::exitprob::{crossing_back_probs_r2, ExitOptions, Quenched};
use rwre_core::rng::{stream, Domain};
use rwre_core::walk::{position_after, simulate_until_ladder, DEFAULT_MAX_STEPS};
use rwre_core::{
    drift, empirical_velocity, estimate_density_mc, expected_t1, invariant_density, kernel_step, Environment,
    EnvironmentLaw, MeanVar, SeriesOptions, SiteLaw, TypeLayout, WalkPath, TYPE_A, TYPE_B, TYPE_C,
};

fn s(q: f64, p: &[f64]) -> SiteLaw {
    SiteLaw::elliptic(q, p).unwrap()
}

fn paths(env: &Environment, n: u64, seed: u64) -> Vec<WalkPath> {
    (0..n)
        .into_par_iter()
        .map(|j| simulate_until_ladder(env, &mut stream(seed, Domain::Paths, j), DEFAULT_MAX_STEPS).unwrap())
        .collect()
}

fn within(got: f64, want: f64, se: f64, k: f64) -> bool {
    (got - want).abs() < k * se
}

#[test]
fn expected_t1_matches_simulation() {
    let periodic = Environment::periodic(vec![s(0.3, &[0.4, 0.3]), s(0.15, &[0.45, 0.4])]).unwrap();
    for env in [Environment::homogeneous(s(0.2, &[0.5, 0.3])), periodic] {
        let exact = expected_t1(&env, &SeriesOptions::default()).unwrap().value;
        let t: MeanVar = paths(&env, 1_000_000, 4).iter().map(|p| p.t1() as f64).collect();
        assert!(within(t.mean(), exact, t.stderr(), 4.0), "{} vs {exact} (se {})", t.mean(), t.stderr());
    }
}

#[test]
fn offspring_structure() {
    let env = Environment::homogeneous(s(0.2, &[0.5, 0.3]));
    let cb = crossing_back_probs_r2(&env, 0, &ExitOptions::default()).unwrap();
    let (alpha, beta) = (cb.alpha(), cb.beta());
    let tables = empirical_offspring(&paths(&env, 200_000, 11), 2, 1000).unwrap();

    let a = tables.pooled(TYPE_A);
    let f = a.frequency(&[0, 0, 0]);
    let se = (f * (1.0 - f) / a.total as f64).sqrt();
    assert!(within(f, 1.0 - alpha - beta, se, 4.0));

    let b = tables.pooled(TYPE_B);
    assert!(b.total > 0);
    assert!(b.outcomes.keys().all(|o| o[2] == 1));

    // marginal over B-children: A-count geometric with ratio alpha / (1 - beta)
    let c = tables.pooled(TYPE_C);
    let ratio = alpha / (1.0 - beta);
    for k in 0..3u32 {
        let hits: u64 = c.outcomes.iter().filter(|(o, _)| o[0] == k).map(|(_, n)| n).sum();
        let f = hits as f64 / c.total as f64;
        let want = (1.0 - ratio) * ratio.powi(k as i32);
        let se = (want * (1.0 - want) / c.total as f64).sqrt();
        assert!(within(f, want, se, 4.0), "a = {k}: {f} vs {want}");
    }

    let few = paths(&env, 3, 1);
    assert!(empirical_offspring(&few, 2, 1_000_000).is_err());
}

#[test]
fn immigration_law() {
    let env = Environment::homogeneous(s(0.2, &[0.5, 0.3]));
    let imm = Quenched::new(&env, ExitOptions::default()).immigration(0).unwrap();
    let cb = crossing_back_probs_r2(&env, 0, &ExitOptions::default()).unwrap();
    let stop = 1.0 - cb.alpha() - cb.beta();
    assert!((imm[TYPE_A] - 0.5 / stop).abs() < 1e-12);
    assert!((imm[TYPE_B] - cb.gamma() / stop).abs() < 1e-12);
    assert!((imm[TYPE_C] - 0.3 / stop).abs() < 1e-12);

    let ps = paths(&env, 100_000, 12);
    let mut counts = [0u64; 3];
    ps.iter().for_each(|p| counts[genealogy(p, 2).unwrap().immigrant] += 1);
    for k in 0..3 {
        let f = counts[k] as f64 / ps.len() as f64;
        let se = (imm[k] * (1.0 - imm[k]) / ps.len() as f64).sqrt();
        assert!(within(f, imm[k], se, 4.0), "type {k}: {f} vs {}", imm[k]);
    }
}

#[test]
fn kernel_step_frequencies_and_coupling() {
    let env = Environment::homogeneous(s(0.2, &[0.5, 0.3]));
    let n = 1_000_000;
    let mut rng = stream(21, Domain::Kernel, 0);
    let mut counts = [0u64; 3];
    for _ in 0..n {
        match kernel_step(&env, &mut rng).offset() {
            -1 => counts[0] += 1,
            1 => counts[1] += 1,
            2 => counts[2] += 1,
            k => panic!("shift {k}"),
        }
    }
    for (c, p) in counts.iter().zip([0.2, 0.5, 0.3]) {
        let f = *c as f64 / n as f64;
        assert!(within(f, p, (p * (1.0 - p) / n as f64).sqrt(), 4.0));
    }

    // n kernel steps from omega land on theta^{X_n} omega under the same randomness
    let env = Environment::periodic(vec![s(0.3, &[0.4, 0.3]), s(0.15, &[0.45, 0.4]), s(0.4, &[0.3, 0.3])]).unwrap();
    for j in 0..20 {
        let mut rng = stream(22, Domain::Kernel, j);
        let mut w = env.clone();
        for _ in 0..500 {
            w = kernel_step(&w, &mut rng);
        }
        assert_eq!(w.offset(), position_after(&env, 500, &mut stream(22, Domain::Kernel, j)));
    }
}

#[test]
fn density_estimator_contributions_decay() {
    let env = Environment::homogeneous(s(0.2, &[0.5, 0.3]));
    let est = estimate_density_mc(&env, 100_000, 8, 5, DEFAULT_MAX_STEPS).unwrap();
    let exact = invariant_density(&env, &SeriesOptions::default()).unwrap().value;
    assert!(within(est.value, exact, est.stderr, 4.0), "{} vs {exact}", est.value);
    assert!(est.per_shift[0] >= 2.0);
    assert!(est.per_shift.windows(2).all(|w| w[1] <= w[0] + 0.01));
    assert!(est.per_shift[8] < 0.01);
}

#[test]
fn shortest_path_visits_origin_once() {
    let env = Environment::homogeneous(SiteLaw::new(0.0, &[0.5, 0.5], 0.0).unwrap());
    let est = estimate_density_mc(&env, 1000, 1, 3, 10).unwrap();
    assert_eq!(est.per_shift, vec![2.0, 0.0]);
    assert_eq!(est.stderr, 0.0);
}

/// Velocity of a periodic environment from the stationary law of the phase
/// chain `x mod L`.
fn phase_chain_velocity(table: &[SiteLaw]) -> f64 {
    let l = table.len();
    let mut pi = vec![1.0 / l as f64; l];
    for _ in 0..100_000 {
        let mut next = vec![0.0; l];
        for (phase, law) in table.iter().enumerate() {
            next[(phase + l - 1) % l] += pi[phase] * law.q();
            for k in 1..=law.range() {
                next[(phase + k) % l] += pi[phase] * law.p_k(k);
            }
        }
        pi = next;
    }
    table.iter().zip(&pi).map(|(law, w)| w * law.mean_step()).sum()
}

#[test]
fn periodic_velocity() {
    let table = vec![s(0.35, &[0.35, 0.3]), s(0.1, &[0.6, 0.3]), s(0.3, &[0.3, 0.4])];
    let law = EnvironmentLaw::periodic(table.clone()).unwrap();
    let exact = phase_chain_velocity(&table);
    let emp = empirical_velocity(&law, 1_000_000, 16, 8);
    assert!(within(emp.mean, exact, emp.stderr, 4.0), "{} vs {exact}", emp.mean);

    // with a single ending position the series drift is exact
    let nn = vec![SiteLaw::new(0.3, &[0.7, 0.0], 0.0).unwrap(), SiteLaw::new(0.1, &[0.9, 0.0], 0.0).unwrap()];
    let rep = drift(&EnvironmentLaw::periodic(nn.clone()).unwrap(), &SeriesOptions::default(), 0, 0).unwrap();
    assert!((rep.v_p - phase_chain_velocity(&nn)).abs() < 1e-10);
}

#[test]
fn drift_denominator_is_total_density_mass() {
    let law = EnvironmentLaw::periodic(vec![s(0.35, &[0.35, 0.3]), s(0.1, &[0.6, 0.3])]).unwrap();
    let rep = drift(&law, &SeriesOptions::default(), 0, 0).unwrap();
    let env = law.realization(0);
    let opts = SeriesOptions::default();
    let pi0 = invariant_density(&env, &opts).unwrap().value;
    let pi1 = invariant_density(&env.shift(1), &opts).unwrap().value;
    assert!((pi0 - pi1).abs() > 1e-3);
    assert!((0.5 * (pi0 + pi1) - rep.denominator).abs() < 1e-9, "{pi0} {pi1} {}", rep.denominator);
}

#[test]
fn offspring_tables_merge() {
    let env = Environment::homogeneous(s(0.3, &[0.4, 0.3]));
    let ps = paths(&env, 2000, 31);
    let whole = empirical_offspring(&ps, 2, 0).unwrap();
    let mut parts = OffspringTables::new(TypeLayout::new(2));
    for chunk in ps.chunks(300) {
        parts.merge(&empirical_offspring(chunk, 2, 0).unwrap());
    }
    assert_eq!(parts, whole);
}
