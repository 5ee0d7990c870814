//! Cross-module property tests: structural identities on random inputs.

use hedonic_core::choice::{
    conjugate, conjugate_value, emax, emax_gradient, Heterogeneity, ShockModel,
};
use hedonic_core::flow::{
    assignment_oracle, build_network, divergence, dual_extremes, gradient, solve_market,
    solve_max_surplus_flow, Flow, Potential,
};
use hedonic_core::market::{
    example_market, price_bounds, verify_equilibrium, welfare, IndirectUtilities, MarketSpec,
    Table,
};
use hedonic_core::simulate::{mix_key, round_trip_at, uniform_open};
use hedonic_core::smooth::{solve_price_equilibrium, SolveOptions};
use proptest::prelude::*;

/// Deterministic instance generator driven by the keyed counter.
fn random_spec(seed: u64, xs: usize, ys: usize, zs: usize, integral: bool) -> MarketSpec {
    let mut counter = 0u64;
    let mut next = |lo: f64, hi: f64| {
        counter += 1;
        lo + (hi - lo) * uniform_open(mix_key(seed, 7, 0, counter, 0))
    };
    let mass = |v: f64| if integral { (v * 3.0).floor() } else { v * 3.0 };
    MarketSpec {
        producer_types: (0..xs).map(|i| format!("x{i}")).collect(),
        consumer_types: (0..ys).map(|i| format!("y{i}")).collect(),
        qualities: (0..zs).map(|i| format!("z{i}")).collect(),
        n: (0..xs).map(|_| mass(next(0.34, 1.33))).collect(),
        m: (0..ys).map(|_| mass(next(0.34, 1.33))).collect(),
        alpha: Table::from_fn(xs, zs, |_, _| {
            let v = next(-4.0, 6.0);
            if integral { v.round() } else { v }
        }),
        gamma: Table::from_fn(zs, ys, |_, _| {
            let v = next(-4.0, 6.0);
            if integral { v.round() } else { v }
        }),
        free_disposal: false,
    }
}

#[test]
fn flow_welfare_matches_oracle_on_random_integral_instances() {
    for seed in 0..40u64 {
        let spec = random_spec(seed, 1 + (seed as usize % 4), 1 + (seed as usize / 2 % 3), 1 + (seed as usize % 3), true);
        if spec.validate().is_err() {
            continue;
        }
        let (outcome, _) = solve_market(&spec).unwrap();
        let oracle = assignment_oracle(&spec).unwrap();
        assert_eq!(outcome.welfare, oracle, "seed {seed}");
        assert!(outcome.integral, "seed {seed}");
        let report = verify_equilibrium(&spec, &outcome.prices, &outcome.allocation, 1e-9);
        assert!(report.all_clear(), "seed {seed}: {report:?}");
    }
}

#[test]
fn strong_duality_and_bounds_on_random_instances() {
    for seed in 100..140u64 {
        let spec = random_spec(seed, 3, 3, 2, false);
        let net = build_network(&spec);
        let sol = solve_max_surplus_flow(&net).unwrap();
        let dual = sol.potential.dual_value(&net);
        assert!(
            (dual - sol.welfare).abs() <= 1e-9 * (1.0 + sol.welfare.abs()),
            "seed {seed}: {dual} vs {}",
            sol.welfare
        );
        // Primal welfare recomputed from the allocation agrees.
        let outcome = hedonic_core::flow::extract_equilibrium(&net, &spec, &sol).unwrap();
        let recomputed = welfare(&spec, &outcome.allocation).unwrap();
        assert!((recomputed - sol.welfare).abs() <= 1e-9 * (1.0 + sol.welfare.abs()));
        // Returned prices sit inside the loosest supporting interval.
        let ext = dual_extremes(&net, &sol.flow);
        let bounds = price_bounds(
            &spec,
            &IndirectUtilities { u: ext.u_max.clone(), v: ext.v_max.clone() },
        );
        for z in 0..spec.quality_count() {
            let p = outcome.prices.as_slice()[z];
            assert!(p >= bounds.lower[z] - 1e-9 && p <= bounds.upper[z] + 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn complementary_slackness_on_tight_arcs() {
    for seed in 200..220u64 {
        let spec = random_spec(seed, 3, 2, 3, true);
        let net = build_network(&spec);
        let sol = solve_max_surplus_flow(&net).unwrap();
        let grad = gradient(&net, &sol.potential);
        for (a, (&g, &f)) in grad.iter().zip(sol.flow.on_arc.iter()).enumerate() {
            assert!(g >= net.arcs[a].surplus - 1e-9, "dual feasibility, seed {seed}");
            if f > 1e-9 {
                assert!(
                    (g - net.arcs[a].surplus).abs() <= 1e-9,
                    "slackness on arc {a}, seed {seed}"
                );
            }
        }
    }
}

#[test]
fn smooth_equilibrium_duality_on_random_instances() {
    for seed in 300..320u64 {
        let spec = random_spec(seed, 3, 4, 3, false);
        let eq = solve_price_equilibrium(&spec, &Heterogeneity::Logit, &SolveOptions::default())
            .unwrap();
        assert!(eq.converged, "seed {seed}");
        assert!(eq.clearing_residual < 1e-10, "seed {seed}");
        let primal = hedonic_core::smooth::social_welfare_primal(
            &spec,
            &Heterogeneity::Logit,
            &eq.allocation,
        )
        .unwrap();
        let tol = 1e-7 * eq.welfare.abs().max(1.0);
        assert!((primal - eq.welfare).abs() <= tol, "seed {seed}: {primal} vs {}", eq.welfare);
    }
}

#[test]
fn identification_round_trip_on_random_instances() {
    for seed in 400..420u64 {
        let spec = random_spec(seed, 3, 3, 2, false);
        let (alpha_err, gamma_err) =
            hedonic_core::simulate::round_trip_exact(&spec, &Heterogeneity::Logit).unwrap();
        assert!(alpha_err <= 1e-8, "seed {seed}: {alpha_err}");
        assert!(gamma_err <= 1e-8, "seed {seed}: {gamma_err}");
    }
}

#[test]
fn simulation_errors_shrink_with_population() {
    // Median identification error over 20 seeds is non-increasing in N.
    let spec = MarketSpec {
        producer_types: vec!["a".into(), "b".into()],
        consumer_types: vec!["c".into(), "d".into()],
        qualities: vec!["q".into(), "r".into()],
        n: vec![1.0, 1.0],
        m: vec![1.0, 1.0],
        alpha: Table::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap(),
        gamma: Table::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap(),
        free_disposal: false,
    };
    let het = Heterogeneity::Logit;
    let eq = solve_price_equilibrium(&spec, &het, &SolveOptions::default()).unwrap();
    let median_err = |n: usize| -> f64 {
        let mut errs: Vec<f64> = (0..20u64)
            .map(|seed| round_trip_at(&spec, &het, &eq, n, seed).unwrap().alpha_err)
            .collect();
        errs.sort_by(f64::total_cmp);
        0.5 * (errs[9] + errs[10])
    };
    let e3 = median_err(1_000);
    let e4 = median_err(10_000);
    let e5 = median_err(100_000);
    assert!(e4 <= e3, "{e4} > {e3}");
    assert!(e5 <= e4, "{e5} > {e4}");
}

#[test]
fn price_rises_when_demand_shifts_up() {
    for seed in 500..510u64 {
        let spec = random_spec(seed, 3, 3, 2, false);
        let base = solve_price_equilibrium(&spec, &Heterogeneity::Logit, &SolveOptions::default())
            .unwrap();
        let mut shifted = spec.clone();
        for y in 0..spec.consumer_count() {
            shifted.gamma.set(0, y, shifted.gamma.get(0, y) + 0.7);
        }
        let moved =
            solve_price_equilibrium(&shifted, &Heterogeneity::Logit, &SolveOptions::default())
                .unwrap();
        assert!(
            moved.prices.as_slice()[0] >= base.prices.as_slice()[0] - 1e-9,
            "seed {seed}"
        );
    }
}

proptest! {
    #[test]
    fn adjointness_of_gradient_and_divergence(
        vals in prop::collection::vec(-10.0f64..10.0, 10),
        flows in prop::collection::vec(0.0f64..5.0, 21),
    ) {
        let net = build_network(&example_market());
        let potential = Potential { values: vals };
        let flow = Flow { on_arc: flows };
        let lhs: f64 = gradient(&net, &potential)
            .iter()
            .zip(flow.on_arc.iter())
            .map(|(g, f)| g * f)
            .sum();
        let div = divergence(&net, &flow);
        let rhs: f64 = potential.values.iter().zip(div.iter()).map(|(u, d)| u * d).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn emax_is_convex_and_gradient_stochastic(
        u1 in prop::collection::vec(-6.0f64..6.0, 4),
        u2 in prop::collection::vec(-6.0f64..6.0, 4),
        lambda in 0.0f64..1.0,
    ) {
        let mix: Vec<f64> = u1.iter().zip(u2.iter()).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let lhs = emax(&mix, ShockModel::Logit);
        let rhs = lambda * emax(&u1, ShockModel::Logit) + (1.0 - lambda) * emax(&u2, ShockModel::Logit);
        prop_assert!(lhs <= rhs + 1e-12);
        let g = emax_gradient(&u1, ShockModel::Logit);
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(g.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn fenchel_young_with_equality_at_the_gradient(
        u in prop::collection::vec(-5.0f64..5.0, 3),
        w in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let mu = emax_gradient(&u, ShockModel::Logit);
        let star = conjugate_value(&mu, ShockModel::Logit).unwrap();
        // Inequality at an arbitrary utility vector.
        let pairing: f64 = mu[1..].iter().zip(w.iter()).map(|(m, x)| m * x).sum();
        prop_assert!(star + emax(&w, ShockModel::Logit) >= pairing - 1e-9);
        // Equality exactly at the generating utilities.
        let pairing_u: f64 = mu[1..].iter().zip(u.iter()).map(|(m, x)| m * x).sum();
        prop_assert!((star + emax(&u, ShockModel::Logit) - pairing_u).abs() <= 1e-9);
        // And the conjugate gradient inverts the softmax.
        let (_, grad) = conjugate(&mu, ShockModel::Logit).unwrap();
        for z in 0..3 {
            prop_assert!((grad[z] - u[z]).abs() <= 1e-9);
        }
    }
}
