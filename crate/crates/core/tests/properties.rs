use proptest::prelude::*;
use rwre_core::decompose::{decompose_general, genealogy, Parent};
use rwre_core::exitprob::{crossing_back_probs_general, exit_probs_finite, exit_probs_limit, ExitOptions};
use rwre_core::rng::{stream, Domain};
use rwre_core::walk::{local_times, simulate_until_ladder};
use rwre_core::{
    homogeneous_closed_forms, sample_environment, verify_time_identity, wald_check, CrossingType, Environment,
    EnvironmentLaw, SeriesOptions, SiteLaw, TypeLayout,
};

/// A site law with `R = r`, `q` in a drift-positive-friendly band.
fn site_law(r: usize) -> impl Strategy<Value = SiteLaw> {
    (0.05f64..0.4, prop::collection::vec(0.05f64..1.0, r)).prop_map(|(q, raw)| {
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total * (1.0 - q)).collect();
        SiteLaw::elliptic(q, &p).unwrap()
    })
}

fn drift_positive(r: usize) -> impl Strategy<Value = SiteLaw> {
    site_law(r).prop_filter("drift positive", |s| s.mean_step() > 0.05)
}

fn iid_law(r: usize) -> impl Strategy<Value = EnvironmentLaw> {
    (prop::collection::vec(site_law(r), 1..4), prop::collection::vec(0.1f64..1.0, 3)).prop_map(|(atoms, w)| {
        let total: f64 = w[..atoms.len()].iter().sum();
        EnvironmentLaw::iid(atoms.into_iter().zip(w.iter().map(|x| x / total)).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifts_compose(law in iid_law(2), seed in any::<u64>(), a in -50i64..50, b in -50i64..50, x in -100i64..100) {
        let env = law.realization(seed);
        let (ab, a_only) = (env.shift(a).shift(b), env.shift(a));
        prop_assert_eq!(ab.law(x), env.law(x + a + b));
        prop_assert_eq!(a_only.law(x - a), env.law(x));
    }

    #[test]
    fn window_growth_keeps_sites(law in iid_law(3), seed in any::<u64>(), lo in -200i64..0, len in 1i64..200, grow in 1i64..300) {
        let small = sample_environment(&law, lo..=lo + len, seed).unwrap();
        let mut big = small.clone();
        big.realize(lo - grow, lo + len + grow);
        let lazy = law.realization(seed);
        for x in lo - grow..=lo + len + grow {
            prop_assert_eq!(big.law(x), lazy.law(x));
            if (lo..=lo + len).contains(&x) {
                prop_assert_eq!(small.law(x), big.law(x));
            }
        }
    }

    #[test]
    fn ladder_paths_decompose_exactly(site in drift_positive(3), r in 1usize..=3, seed in any::<u64>()) {
        // truncate the law to R = r by moving the excess mass onto the largest jump
        let mut p = site.p()[..r].to_vec();
        p[r - 1] += site.p()[r..].iter().sum::<f64>();
        let site = SiteLaw::elliptic(site.q(), &p).unwrap();
        let env = Environment::homogeneous(site);
        let mut rng = stream(seed, Domain::Paths, 0);
        let layout = TypeLayout::new(r);
        for _ in 0..50 {
            let path = simulate_until_ladder(&env, &mut rng, 1_000_000).unwrap();
            let rec = decompose_general(&path, r).unwrap();
            prop_assert!(verify_time_identity(&path, &rec));
            prop_assert_eq!(rec.total().iter().sum::<u64>(), path.down_steps() as u64);
            prop_assert_eq!(local_times(&path).total(), path.t1() as u64);
            // an overshooting type at level i is the forced child of one level up
            for t in layout.types().filter(|t| t.landing >= 1) {
                let parent = layout.index(CrossingType { landing: t.landing - 1, depth: t.depth + 1 });
                for i in path.min_site()..=0 {
                    prop_assert_eq!(rec.counts(i)[layout.index(t)], rec.counts(i + 1)[parent]);
                }
            }
            let g = genealogy(&path, r).unwrap();
            for p in &g.particles {
                match p.parent {
                    Parent::Immigrant => prop_assert_eq!(p.level, 0),
                    Parent::Step(k) => prop_assert_eq!(g.particles[k].level, p.level + 1),
                }
            }
        }
    }

    #[test]
    fn crossing_back_sums_to_q(law in iid_law(3), seed in any::<u64>(), i in -20i64..20) {
        let env = law.realization(seed);
        let opts = ExitOptions::default();
        prop_assume!(exit_probs_limit(&env, i - 1, &opts).is_ok());
        let cb = crossing_back_probs_general(&env, i, &opts).unwrap();
        prop_assert!(cb.probs.iter().all(|&p| p >= 0.0));
        prop_assert!((cb.total() - env.law(i).q()).abs() < 1e-8);
    }

    #[test]
    fn finite_exit_is_a_subprobability(law in iid_law(2), seed in any::<u64>(), n in 2i64..40) {
        let env = law.realization(seed);
        let e = exit_probs_finite(&env, 0, n).unwrap();
        prop_assert!(e.probs.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
        prop_assert!(e.total() <= 1.0 + 1e-12);
        prop_assert!(exit_probs_finite(&env, 0, n + 1).unwrap().total() >= e.total() - 1e-12);
    }

    #[test]
    fn homogeneous_closed_form_invariants(site in drift_positive(2)) {
        let h = homogeneous_closed_forms(&site).unwrap();
        prop_assert!(h.lambda1 > 1.0);
        prop_assert!(h.lambda2 > -1.0 && h.lambda2 <= 0.0);
        prop_assert!((h.exit1 + h.exit2 - 1.0).abs() < 1e-14);
        prop_assert!((h.alpha + h.beta + h.gamma - site.q()).abs() < 1e-14);
        let w = wald_check(&site, &SeriesOptions::default()).unwrap();
        prop_assert!(w.residual_closed < 1e-10, "{:?}", w);
        prop_assert!(w.residual_series < 1e-8, "{:?}", w);
    }
}
