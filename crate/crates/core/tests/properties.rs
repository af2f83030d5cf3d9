use std::collections::BTreeMap;

use proptest::prelude::*;

use noisy_ce::learning::{
    eap, hoeffding_eps, invert_hoeffding_t, prune_check, select_candidates, BoundMode, Budget, EapConfig,
    MarketStructure, Schedules,
};
use noisy_ce::market::{is_approx_ce, market_distance, um_violation, TOL};
use noisy_ce::metrics::um_loss;
use noisy_ce::pricing::{linear_ce_prices_unit_demand, PriceObjective};
use noisy_ce::valuation::{unit_demand_to_market, NoiseSpec};
use noisy_ce::welfare::{make_submarket, max_welfare_exact, max_welfare_unit_demand, relaxed_upper_bound};
use noisy_ce::{Bundle, IndexSet, Market, NoisyOracle, Outcome, UnitDemandMatrix, Valuations};

fn market(max_buyers: usize, max_goods: usize) -> impl Strategy<Value = Market> {
    (1..=max_buyers, 1..=max_goods).prop_flat_map(|(n, m)| {
        prop::collection::vec(0.0..10.0f64, n << m).prop_map(move |vals| {
            Market::from_fn(n, m, |i, s| vals[(i << m) | s.mask() as usize]).unwrap()
        })
    })
}

fn unit_demand(max_buyers: usize, max_goods: usize) -> impl Strategy<Value = UnitDemandMatrix> {
    (1..=max_buyers, 1..=max_goods).prop_flat_map(|(n, m)| {
        prop::collection::vec(0.0..10.0f64, n * m).prop_map(move |vals| UnitDemandMatrix::new(n, m, vals).unwrap())
    })
}

/// `market` with every value moved by at most `eps`, clamped at zero.
fn shifted(market: &Market, noise: &[f64], eps: f64) -> Market {
    let m = market.num_goods();
    Market::from_fn(market.num_buyers(), m, |i, s| {
        let x = noise[((i << m) | s.mask() as usize) % noise.len()];
        (market.value(i, s) + eps * x).max(0.0)
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_pseudometric(
        a in market(3, 3),
        noise1 in prop::collection::vec(-1.0..1.0f64, 32),
        noise2 in prop::collection::vec(-1.0..1.0f64, 32),
    ) {
        let b = shifted(&a, &noise1, 0.7);
        let c = shifted(&a, &noise2, 1.3);
        let idx = IndexSet::full(a.num_buyers(), a.num_goods());
        let d = |x: &Market, y: &Market| market_distance(x, y, &idx).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn welfare_moves_at_most_eps_per_buyer(
        a in market(3, 3),
        noise in prop::collection::vec(-1.0..1.0f64, 32),
        eps in 0.01..2.0f64,
    ) {
        let b = shifted(&a, &noise, eps);
        let gap = (max_welfare_exact(&a).unwrap().value - max_welfare_exact(&b).unwrap().value).abs();
        prop_assert!(gap <= eps * a.num_buyers() as f64 + TOL);
    }

    #[test]
    fn learned_ce_is_approximate_ce_of_truth(
        v in unit_demand(4, 4),
        noise in prop::collection::vec(-1.0..1.0f64, 16),
        eps in 0.01..1.0f64,
    ) {
        // CE of the perturbed market is a 2 eps CE of the original
        let m = v.num_goods();
        let vals: Vec<f64> = v.as_slice().iter().enumerate().map(|(k, x)| (x + eps * noise[k % 16]).max(0.0)).collect();
        let v_hat = UnitDemandMatrix::new(v.num_buyers(), m, vals).unwrap();
        let alloc = max_welfare_unit_demand(&v_hat).allocation;
        for objective in [PriceObjective::MinRevenue, PriceObjective::MaxRevenue] {
            let sol = linear_ce_prices_unit_demand(&v_hat, &alloc, objective).unwrap();
            let outcome = Outcome::new(alloc.clone(), sol.pricing()).unwrap();
            prop_assert!(um_loss(&v_hat, &outcome) <= 1e-7);
            let truth = unit_demand_to_market(&v).unwrap();
            prop_assert!(is_approx_ce(&truth, &outcome, 2.0 * eps + 1e-7).unwrap());
            prop_assert!(um_loss(&v, &outcome) <= 2.0 * eps + 1e-7);
        }
    }

    #[test]
    fn zero_loss_matches_zero_violation(v in unit_demand(3, 3), prices in prop::collection::vec(0.0..10.0f64, 3)) {
        let market = unit_demand_to_market(&v).unwrap();
        let alloc = max_welfare_unit_demand(&v).allocation;
        let outcome = Outcome::new(alloc, noisy_ce::Pricing::Linear(prices[..v.num_goods()].to_vec())).unwrap();
        prop_assert!((um_loss(&market, &outcome) - um_violation(&market, &outcome)).abs() < 1e-12);
        prop_assert!((um_loss(&v, &outcome) - um_loss(&market, &outcome)).abs() < 1e-12);
    }

    #[test]
    fn hungarian_agrees_with_branch_and_bound(v in unit_demand(5, 5)) {
        let dense = unit_demand_to_market(&v).unwrap();
        let exact = max_welfare_exact(&dense).unwrap().value;
        prop_assert!((max_welfare_unit_demand(&v).value - exact).abs() < 1e-9);
    }

    #[test]
    fn relaxed_bound_dominates_submarket(a in market(3, 4), buyer in 0usize..3, mask in 0u32..16) {
        let buyer = buyer % a.num_buyers();
        let s = Bundle::from_mask(mask & ((1 << a.num_goods()) - 1));
        let sub = make_submarket(&a, buyer, s).unwrap();
        let exact = if sub.market.num_buyers() == 0 { 0.0 } else { max_welfare_exact(&sub.market).unwrap().value };
        prop_assert!(relaxed_upper_bound(&a, buyer, s).unwrap() >= exact - TOL);
    }

    #[test]
    fn prune_check_is_monotone(
        v in 0.0..10.0f64, w in 0.0..30.0f64, eps in 0.0..2.0f64, n in 1usize..6, target in 0.0..40.0f64,
        shrink in 0.0..1.0f64, raise in 0.0..5.0f64,
    ) {
        if prune_check(v, w, eps, n, target) {
            prop_assert!(prune_check(v, w, eps * shrink, n, target));
            prop_assert!(prune_check(v, w, eps, n, target + raise));
        }
    }

    #[test]
    fn candidates_are_the_lowest_bounds(bounds in prop::collection::vec(0.0..10.0f64, 1..20), budget in 0usize..25) {
        let keys: Vec<(usize, Bundle)> = (0..bounds.len()).map(|i| (i, Bundle::singleton(0))).collect();
        let active: IndexSet = keys.iter().copied().collect();
        let map: BTreeMap<_, _> = keys.iter().copied().zip(bounds.iter().copied()).collect();
        let picked = select_candidates(&active, &map, Budget::Limited(budget));
        prop_assert_eq!(picked.len(), budget.min(bounds.len()));
        for w in picked.windows(2) {
            prop_assert!(map[&w[0]] <= map[&w[1]]);
        }
        if let Some(last) = picked.last() {
            let outside = keys.iter().filter(|k| !picked.contains(k));
            for k in outside {
                prop_assert!(map[k] >= map[last]);
            }
        }
    }

    #[test]
    fn inversion_round_trips(c in 0.5..50.0f64, idx in 1usize..10_000, delta in 0.001..0.5f64, eps in 0.01..5.0f64) {
        let t = invert_hoeffding_t(c, idx, delta, eps).unwrap();
        prop_assert!(hoeffding_eps(c, idx, delta, t).unwrap() <= eps);
        if t > 1 {
            prop_assert!(hoeffding_eps(c, idx, delta, t - 1).unwrap() > eps);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pruning_only_saves_samples(v in unit_demand(4, 5), seed in 0u64..1000, mode in 0usize..3) {
        let oracle = NoisyOracle::new(v, NoiseSpec::uniform(1.0).unwrap(), seed, 11.0).unwrap();
        let base = EapConfig {
            schedules: Schedules::new(vec![300, 600, 1200], vec![0.03; 3], vec![Budget::Limited(0); 3]).unwrap(),
            target_eps: 0.0,
            bound_mode: [BoundMode::Exact, BoundMode::Relaxed, BoundMode::TwoPass][mode],
            structure: MarketStructure::UnitDemand,
        };
        let without = eap(&mut oracle.clone(), &base).unwrap();
        let mut pruning = base.clone();
        pruning.schedules.pruning = vec![Budget::Unbounded; 3];
        let with = eap(&mut oracle.clone(), &pruning).unwrap();
        prop_assert!(with.total_samples <= without.total_samples);
        prop_assert_eq!(with.total_samples, with.estimates.total_samples());
        prop_assert_eq!(with.eps_hat <= without.eps_hat, true);
    }
}
