//! Winner determination: exact welfare maximization by branch and bound, the
//! Hungarian fast path for unit-demand markets, submarkets, and the
//! feasibility-relaxed welfare bound.

use crate::error::{Error, Result};
use crate::market::{nonempty_bundles, welfare, Allocation, Bundle, Market, Valuations, TOL};
use crate::valuation::UnitDemandMatrix;

/// Largest number of goods accepted by [`max_welfare_exact`] on dense input.
pub const EXACT_GOODS_CAP: usize = 14;

#[derive(Clone, Debug, PartialEq)]
pub struct WelfareResult {
    pub allocation: Allocation,
    pub value: f64,
}

/// Per-buyer lists of bundle bids. Bundles a buyer has no bid on are
/// unavailable to that buyer; the empty bundle is always available at 0.
#[derive(Clone, Debug, Default)]
pub struct BidTable {
    num_goods: usize,
    bids: Vec<Vec<(Bundle, f64)>>,
}

impl BidTable {
    pub fn new(num_buyers: usize, num_goods: usize) -> Self {
        BidTable { num_goods, bids: vec![Vec::new(); num_buyers] }
    }

    /// Every nonempty bundle of every buyer.
    pub fn from_market(market: &Market) -> Self {
        let mut table = BidTable::new(market.num_buyers(), market.num_goods());
        for i in 0..market.num_buyers() {
            for s in nonempty_bundles(market.num_goods()) {
                table.push(i, s, market.value(i, s));
            }
        }
        table
    }

    /// Singleton bids only; enough for welfare since `v_i(S)` is a max over singletons.
    pub fn from_unit_demand(v: &UnitDemandMatrix) -> Self {
        let mut table = BidTable::new(v.num_buyers(), v.num_goods());
        for i in 0..v.num_buyers() {
            for j in 0..v.num_goods() {
                table.push(i, Bundle::singleton(j), v.get(i, j));
            }
        }
        table
    }

    pub fn push(&mut self, buyer: usize, bundle: Bundle, value: f64) {
        debug_assert!(!bundle.is_empty() && bundle.fits(self.num_goods));
        self.bids[buyer].push((bundle, value));
    }

    pub fn num_buyers(&self) -> usize {
        self.bids.len()
    }

    pub fn num_goods(&self) -> usize {
        self.num_goods
    }

    pub fn bids(&self, buyer: usize) -> &[(Bundle, f64)] {
        &self.bids[buyer]
    }

    pub fn is_unit_demand(&self) -> bool {
        self.bids.iter().flatten().all(|(s, _)| s.len() == 1)
    }

    /// Optimal welfare over the bids, with the Hungarian method when every bid is a single good.
    pub fn max_welfare(&self) -> WelfareResult {
        if self.is_unit_demand() {
            self.hungarian(None, Bundle::EMPTY)
        } else {
            self.branch_and_bound(None, Bundle::EMPTY)
        }
    }

    /// `w*` of the submarket without `buyer` and without the goods in `removed`.
    pub fn max_welfare_without(&self, buyer: usize, removed: Bundle) -> f64 {
        if self.is_unit_demand() {
            self.hungarian(Some(buyer), removed).value
        } else {
            self.branch_and_bound(Some(buyer), removed).value
        }
    }

    /// `sum_{k != buyer} max { v_k(T) : T ∩ removed = ∅ }`, an upper bound on
    /// [`BidTable::max_welfare_without`].
    pub fn relaxed_bound_without(&self, buyer: usize, removed: Bundle) -> f64 {
        self.bids
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != buyer)
            .map(|(_, bids)| {
                bids.iter()
                    .filter(|(s, _)| !s.intersects(removed))
                    .map(|&(_, v)| v)
                    .fold(0.0, f64::max)
            })
            .sum()
    }

    /// Exact optimum by depth-first branch and bound. Buyers are branched in
    /// index order and bundles in increasing mask order (empty first), so
    /// among allocations within `TOL` of each other the lexicographically
    /// smallest one is kept.
    pub fn branch_and_bound(&self, skip: Option<usize>, removed: Bundle) -> WelfareResult {
        let n = self.bids.len();
        let usable = |k: usize| -> Vec<(Bundle, f64)> {
            if Some(k) == skip {
                return Vec::new();
            }
            self.bids[k]
                .iter()
                .copied()
                .filter(|&(s, v)| v > 0.0 && !s.intersects(removed))
                .collect()
        };
        let mut branch: Vec<Vec<(Bundle, f64)>> = (0..n).map(usable).collect();
        let mut by_value = branch.clone();
        for list in &mut branch {
            list.sort_by_key(|&(s, _)| s);
        }
        for list in &mut by_value {
            list.sort_by(|a, b| b.1.total_cmp(&a.1));
        }
        let mut search = Search {
            branch: &branch,
            by_value: &by_value,
            current: vec![Bundle::EMPTY; n],
            best: vec![Bundle::EMPTY; n],
            best_value: f64::NEG_INFINITY,
            floor: greedy_value(&by_value),
        };
        search.dfs(0, Bundle::EMPTY, 0.0);
        WelfareResult { allocation: Allocation::new(search.best), value: search.best_value }
    }

    /// Maximum-weight assignment of buyers to single goods. Multi-good bids
    /// are ignored.
    pub fn hungarian(&self, skip: Option<usize>, removed: Bundle) -> WelfareResult {
        let (n, m) = (self.bids.len(), self.num_goods);
        let mut weights = vec![0.0f64; n * m];
        for (i, bids) in self.bids.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            for &(s, v) in bids {
                if s.len() == 1 && !s.intersects(removed) {
                    let j = s.goods().next().unwrap_or(0);
                    weights[i * m + j] = weights[i * m + j].max(v);
                }
            }
        }
        let assignment = max_weight_assignment(&weights, n, m);
        let mut value = 0.0;
        let bundles = assignment
            .iter()
            .enumerate()
            .map(|(i, a)| match a {
                Some(j) => {
                    value += weights[i * m + j];
                    Bundle::singleton(*j)
                }
                None => Bundle::EMPTY,
            })
            .collect();
        WelfareResult { allocation: Allocation::new(bundles), value }
    }
}

fn best_disjoint(list: &[(Bundle, f64)], used: Bundle) -> f64 {
    list.iter()
        .find(|(s, _)| !s.intersects(used))
        .map_or(0.0, |&(_, v)| v)
}

/// Value of a greedy feasible allocation; a valid lower bound on the optimum.
fn greedy_value(by_value: &[Vec<(Bundle, f64)>]) -> f64 {
    let mut used = Bundle::EMPTY;
    let mut total = 0.0;
    for list in by_value {
        if let Some(&(s, v)) = list.iter().find(|(s, _)| !s.intersects(used)) {
            used = used.union(s);
            total += v;
        }
    }
    total
}

struct Search<'a> {
    branch: &'a [Vec<(Bundle, f64)>],
    by_value: &'a [Vec<(Bundle, f64)>],
    current: Vec<Bundle>,
    best: Vec<Bundle>,
    best_value: f64,
    floor: f64,
}

impl Search<'_> {
    fn dfs(&mut self, buyer: usize, used: Bundle, value: f64) {
        if buyer == self.branch.len() {
            if value > self.best_value + TOL {
                self.best_value = value;
                self.best.clone_from(&self.current);
            }
            return;
        }
        let bound = value
            + self.by_value[buyer..]
                .iter()
                .map(|list| best_disjoint(list, used))
                .sum::<f64>();
        if bound <= self.best_value + TOL || bound < self.floor - TOL {
            return;
        }
        self.current[buyer] = Bundle::EMPTY;
        self.dfs(buyer + 1, used, value);
        for k in 0..self.branch[buyer].len() {
            let (s, v) = self.branch[buyer][k];
            if !s.intersects(used) {
                self.current[buyer] = s;
                self.dfs(buyer + 1, used.union(s), value + v);
            }
        }
        self.current[buyer] = Bundle::EMPTY;
    }
}

/// Optimal welfare of a dense market by branch and bound.
pub fn max_welfare_exact(market: &Market) -> Result<WelfareResult> {
    if market.num_goods() > EXACT_GOODS_CAP {
        return Err(Error::TooManyGoods { goods: market.num_goods(), cap: EXACT_GOODS_CAP });
    }
    let result = BidTable::from_market(market).branch_and_bound(None, Bundle::EMPTY);
    let value = welfare(market, &result.allocation)?;
    Ok(WelfareResult { allocation: result.allocation, value })
}

/// Optimal welfare of a unit-demand market as a maximum-weight bipartite matching.
pub fn max_welfare_unit_demand(v: &UnitDemandMatrix) -> WelfareResult {
    let result = BidTable::from_unit_demand(v).hungarian(None, Bundle::EMPTY);
    let value = result
        .allocation
        .bundles()
        .iter()
        .enumerate()
        .map(|(i, &s)| v.value(i, s))
        .sum();
    WelfareResult { allocation: result.allocation, value }
}

/// Maximum-weight assignment on a row-major `rows x cols` weight matrix.
/// Rows may stay unassigned; entries `<= 0` are never used.
pub fn max_weight_assignment(weights: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    if rows == 0 {
        return Vec::new();
    }
    // one private "stay out" column per row keeps the problem rectangular with rows <= cols
    let width = cols + rows;
    let cost: Vec<f64> = (0..rows)
        .flat_map(|i| {
            (0..width).map(move |j| if j < cols { -weights[i * cols + j].max(0.0) } else { 0.0 })
        })
        .collect();
    min_cost_assignment(&cost, rows, width)
        .into_iter()
        .enumerate()
        .map(|(i, j)| (j < cols && weights[i * cols + j] > 0.0).then_some(j))
        .collect()
}

/// Kuhn-Munkres with potentials, `O(rows^2 * cols)`. Requires `rows <= cols`.
fn min_cost_assignment(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    debug_assert!(rows <= cols);
    let at = |i: usize, j: usize| cost[(i - 1) * cols + (j - 1)];
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    // owner[j]: row matched to column j (1-based), 0 = free
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = at(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// A market with one buyer and a bundle of goods taken out.
#[derive(Clone, Debug, PartialEq)]
pub struct Submarket {
    pub market: Market,
    pub removed: (usize, Bundle),
    /// Parent index of each remaining buyer.
    pub buyers: Vec<usize>,
    /// Parent index of each remaining good; relative order is preserved.
    pub goods: Vec<usize>,
}

impl Submarket {
    pub fn to_parent_bundle(&self, bundle: Bundle) -> Bundle {
        Bundle::from_goods(bundle.goods().map(|j| self.goods[j]))
    }

    /// Lifts a submarket allocation; the removed buyer receives nothing.
    pub fn to_parent_allocation(&self, alloc: &Allocation, parent_buyers: usize) -> Allocation {
        let mut bundles = vec![Bundle::EMPTY; parent_buyers];
        for (k, &s) in alloc.bundles().iter().enumerate() {
            bundles[self.buyers[k]] = self.to_parent_bundle(s);
        }
        Allocation::new(bundles)
    }
}

/// The market over `G \ S` and `N \ {i}`, goods compacted in order.
pub fn make_submarket(market: &Market, buyer: usize, bundle: Bundle) -> Result<Submarket> {
    market.check_index(buyer, bundle)?;
    let buyers: Vec<usize> = (0..market.num_buyers()).filter(|&k| k != buyer).collect();
    let goods: Vec<usize> = (0..market.num_goods()).filter(|&j| !bundle.contains(j)).collect();
    let lift = |t: Bundle| Bundle::from_goods(t.goods().map(|j| goods[j]));
    let sub = Market::from_fn(buyers.len(), goods.len(), |k, t| market.value(buyers[k], lift(t)))?;
    Ok(Submarket { market: sub, removed: (buyer, bundle), buyers, goods })
}

/// `sum_{k != i} max { v_k(T) : T ⊆ G, T ∩ S = ∅ }`, an upper bound on the
/// optimal welfare of the `(i, S)`-submarket that ignores feasibility.
pub fn relaxed_upper_bound<V: Valuations + ?Sized>(market: &V, buyer: usize, bundle: Bundle) -> Result<f64> {
    if buyer >= market.num_buyers() || !bundle.fits(market.num_goods()) {
        return Err(Error::InvalidIndex { buyer, bundle });
    }
    let free = Bundle::full(market.num_goods()).difference(bundle).mask();
    let mut total = 0.0;
    for k in (0..market.num_buyers()).filter(|&k| k != buyer) {
        // walk every submask of the free goods
        let mut best: f64 = 0.0;
        let mut t = free;
        while t != 0 {
            best = best.max(market.value(k, Bundle::from_mask(t)));
            t = (t - 1) & free;
        }
        total += best;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::for_each_feasible_allocation;
    use crate::valuation::{gen_unit_demand, unit_demand_to_market, Distribution};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(goods: &[usize]) -> Bundle {
        Bundle::from_goods(goods.iter().map(|g| g - 1))
    }

    fn brute_force(market: &Market) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for_each_feasible_allocation(market.num_buyers(), market.num_goods(), |s| {
            let w: f64 = s.iter().enumerate().map(|(i, &x)| market.value(i, x)).sum();
            best = best.max(w);
        });
        best
    }

    fn random_market(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Market {
        Market::from_fn(n, m, |_, _| rng.gen_range(0.0..10.0)).unwrap()
    }

    #[test]
    fn single_buyer_takes_best_bundle() {
        let m = Market::from_fn(1, 3, |_, s| (s.mask() as f64 * 1.7) % 5.0).unwrap();
        let best = nonempty_bundles(3).map(|s| m.value(0, s)).fold(0.0, f64::max);
        assert_eq!(max_welfare_exact(&m).unwrap().value, best);
    }

    #[test]
    fn two_by_two_example() {
        let mut m = Market::zeros(2, 2).unwrap();
        m.set_value(0, b(&[1]), 3.0).unwrap();
        m.set_value(0, b(&[1, 2]), 4.0).unwrap();
        m.set_value(1, b(&[2]), 2.0).unwrap();
        let r = max_welfare_exact(&m).unwrap();
        assert_eq!(r.value, 5.0);
        assert_eq!(r.allocation, Allocation::new(vec![b(&[1]), b(&[2])]));
    }

    #[test]
    fn additive_valuations_assign_each_good_to_top_bidder() {
        let u = [[1.0, 6.0, 2.5], [3.0, 0.5, 4.0], [2.0, 2.0, 1.0]];
        let m = Market::from_fn(3, 3, |i, s| s.goods().map(|j| u[i][j]).sum()).unwrap();
        let expected: f64 = (0..3).map(|j| (0..3).map(|i| u[i][j]).fold(0.0, f64::max)).sum();
        assert!((max_welfare_exact(&m).unwrap().value - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (n, m) = (rng.gen_range(1..=3), rng.gen_range(1..=4));
            let market = random_market(&mut rng, n, m);
            let r = max_welfare_exact(&market).unwrap();
            assert!((r.value - brute_force(&market)).abs() < 1e-9);
            assert!((welfare(&market, &r.allocation).unwrap() - r.value).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_cap() {
        let m = Market::zeros(1, EXACT_GOODS_CAP + 1).unwrap();
        assert!(matches!(max_welfare_exact(&m), Err(Error::TooManyGoods { .. })));
    }

    #[test]
    fn ties_break_lexicographically() {
        // both buyers value good 1 at 5; (∅, {1}) precedes ({1}, ∅)
        let m = Market::from_fn(2, 1, |_, _| 5.0).unwrap();
        let r = max_welfare_exact(&m).unwrap();
        assert_eq!(r.allocation, Allocation::new(vec![Bundle::EMPTY, b(&[1])]));
    }

    #[test]
    fn hungarian_examples() {
        let diag = UnitDemandMatrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 7.0]]).unwrap();
        let r = max_welfare_unit_demand(&diag);
        assert_eq!(r.value, 12.0);
        assert_eq!(r.allocation, Allocation::new(vec![b(&[1]), b(&[2])]));

        let contested = UnitDemandMatrix::from_rows(&[vec![4.0, 0.0], vec![9.0, 0.0]]).unwrap();
        let r = max_welfare_unit_demand(&contested);
        assert_eq!(r.value, 9.0);
        assert_eq!(r.allocation.bundle(1), b(&[1]));
    }

    fn matching_oracle(v: &UnitDemandMatrix) -> f64 {
        fn go(v: &UnitDemandMatrix, i: usize, used: u32) -> f64 {
            if i == v.num_buyers() {
                return 0.0;
            }
            let mut best = go(v, i + 1, used);
            for j in 0..v.num_goods() {
                if used & (1 << j) == 0 {
                    best = best.max(v.get(i, j) + go(v, i + 1, used | (1 << j)));
                }
            }
            best
        }
        go(v, 0, 0)
    }

    #[test]
    fn hungarian_matches_exhaustive_matching() {
        for seed in 0..40 {
            let v = gen_unit_demand(Distribution::Uniform, 5, 5, seed).unwrap();
            assert!((max_welfare_unit_demand(&v).value - matching_oracle(&v)).abs() < 1e-9);
        }
        for seed in 0..20 {
            let v = gen_unit_demand(Distribution::PreferredSubset, 6, 3, seed).unwrap();
            let h = max_welfare_unit_demand(&v).value;
            assert!((h - matching_oracle(&v)).abs() < 1e-9);
            let exact = max_welfare_exact(&unit_demand_to_market(&v).unwrap()).unwrap().value;
            assert!((h - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn submarket_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let market = random_market(&mut rng, 3, 3);

        let s = make_submarket(&market, 0, Bundle::EMPTY).unwrap();
        assert_eq!((s.market.num_buyers(), s.market.num_goods()), (2, 3));

        let s = make_submarket(&market, 0, Bundle::full(3)).unwrap();
        assert_eq!(s.market.num_goods(), 0);
        assert_eq!(max_welfare_exact(&s.market).unwrap().value, 0.0);

        // remove buyer 2 and good 1: buyers {1,3} compete over goods {2,3}
        let s = make_submarket(&market, 1, b(&[1])).unwrap();
        assert_eq!(s.buyers, vec![0, 2]);
        assert_eq!(s.goods, vec![1, 2]);
        let mut best: f64 = 0.0;
        for t0 in [0u32, 2, 4, 6] {
            for t2 in [0u32, 2, 4, 6] {
                if t0 & t2 == 0 {
                    best = best.max(market.value(0, Bundle::from_mask(t0)) + market.value(2, Bundle::from_mask(t2)));
                }
            }
        }
        let r = max_welfare_exact(&s.market).unwrap();
        assert!((r.value - best).abs() < 1e-9);
        let lifted = s.to_parent_allocation(&r.allocation, 3);
        assert!(!lifted.allocated_goods().contains(0));
        assert!((welfare(&market, &lifted).unwrap() - r.value).abs() < 1e-9);
    }

    #[test]
    fn bid_table_submarket_matches_dense_submarket() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let market = random_market(&mut rng, 3, 3);
            let table = BidTable::from_market(&market);
            for i in 0..3 {
                for s in nonempty_bundles(3) {
                    let dense = max_welfare_exact(&make_submarket(&market, i, s).unwrap().market).unwrap();
                    assert!((table.max_welfare_without(i, s) - dense.value).abs() < 1e-9);
                    let relaxed = relaxed_upper_bound(&market, i, s).unwrap();
                    assert!((table.relaxed_bound_without(i, s) - relaxed).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn relaxed_bound_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let market = random_market(&mut rng, 2, 3);
        for s in nonempty_bundles(3) {
            let exact = max_welfare_exact(&make_submarket(&market, 0, s).unwrap().market).unwrap().value;
            assert!((relaxed_upper_bound(&market, 0, s).unwrap() - exact).abs() < 1e-12);
        }
        assert_eq!(relaxed_upper_bound(&market, 0, Bundle::full(3)).unwrap(), 0.0);

        for _ in 0..100 {
            let market = random_market(&mut rng, 3, 3);
            let i = rng.gen_range(0..3);
            let s = Bundle::from_mask(rng.gen_range(0..8));
            let exact = max_welfare_exact(&make_submarket(&market, i, s).unwrap().market).unwrap().value;
            assert!(relaxed_upper_bound(&market, i, s).unwrap() >= exact - 1e-9);
        }
    }

    #[test]
    fn monotone_in_buyers_and_goods() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let market = random_market(&mut rng, 3, 3);
            let w = max_welfare_exact(&market).unwrap().value;
            for i in 0..3 {
                let fewer_buyers = make_submarket(&market, i, Bundle::EMPTY).unwrap();
                assert!(max_welfare_exact(&fewer_buyers.market).unwrap().value <= w + 1e-9);
            }
            // dropping a good = keeping every buyer but restricting bundles
            for j in 0..3 {
                let mut restricted = market.clone();
                for i in 0..3 {
                    for s in nonempty_bundles(3).filter(|s| s.contains(j)) {
                        restricted.set_value(i, s, 0.0).unwrap();
                    }
                }
                assert!(max_welfare_exact(&restricted).unwrap().value <= w + 1e-9);
            }
        }
    }
}
