//! Certain-market data model: bundles, markets, allocations, pricings and
//! the competitive-equilibrium checks defined over them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of goods a dense [`Market`] may hold.
pub const MAX_GOODS: usize = 20;

/// Absolute tolerance for every equality / inequality check on derived reals.
pub const TOL: f64 = 1e-9;

/// Largest number of goods for which RM is checked by enumerating allocations.
pub const RM_ENUMERATION_CAP: usize = 12;

/// A set of goods. Good `j` (zero-based) is bit `j` of the mask, so the good
/// numbered `j + 1` in one-based notation is bit `j`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bundle(u32);

impl Bundle {
    pub const EMPTY: Bundle = Bundle(0);

    pub const fn from_mask(mask: u32) -> Self {
        Bundle(mask)
    }

    /// The bundle holding all of `num_goods` goods.
    pub fn full(num_goods: usize) -> Self {
        debug_assert!(num_goods <= 32);
        if num_goods == 32 {
            Bundle(u32::MAX)
        } else {
            Bundle((1u32 << num_goods) - 1)
        }
    }

    pub fn singleton(good: usize) -> Self {
        Bundle(1 << good)
    }

    pub fn from_goods<I: IntoIterator<Item = usize>>(goods: I) -> Self {
        Bundle(goods.into_iter().fold(0, |acc, j| acc | (1 << j)))
    }

    pub const fn mask(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, good: usize) -> bool {
        good < 32 && self.0 & (1 << good) != 0
    }

    pub fn intersects(self, other: Bundle) -> bool {
        self.0 & other.0 != 0
    }

    pub fn union(self, other: Bundle) -> Bundle {
        Bundle(self.0 | other.0)
    }

    pub fn difference(self, other: Bundle) -> Bundle {
        Bundle(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Bundle) -> bool {
        self.0 & !other.0 == 0
    }

    /// True when every member good is below `num_goods`.
    pub fn fits(self, num_goods: usize) -> bool {
        self.is_subset(Bundle::full(num_goods))
    }

    /// Member goods in increasing order.
    pub fn goods(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let j = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(j)
            }
        })
    }
}

impl fmt::Debug for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bundle({:#b})", self.0)
    }
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// All `2^num_goods` bundles in increasing mask order, starting with the empty bundle.
pub fn all_bundles(num_goods: usize) -> impl Iterator<Item = Bundle> {
    (0..(1u64 << num_goods)).map(|mask| Bundle(mask as u32))
}

pub fn nonempty_bundles(num_goods: usize) -> impl Iterator<Item = Bundle> {
    all_bundles(num_goods).skip(1)
}

/// Read access to a valuation profile `v_i(S)`.
pub trait Valuations {
    fn num_buyers(&self) -> usize;
    fn num_goods(&self) -> usize;
    fn value(&self, buyer: usize, bundle: Bundle) -> f64;

    /// `max_T v_i(T) - P_i(T)`, the best utility buyer `i` can reach at `pricing`.
    fn best_utility(&self, buyer: usize, pricing: &Pricing) -> f64 {
        enumerated_best_utility(self, buyer, pricing)
    }
}

/// Exhaustive `max_T v_i(T) - P_i(T)` over all `2^m` bundles.
pub fn enumerated_best_utility<V: Valuations + ?Sized>(
    market: &V,
    buyer: usize,
    pricing: &Pricing,
) -> f64 {
    all_bundles(market.num_goods())
        .map(|t| market.value(buyer, t) - pricing.price(buyer, t))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// A combinatorial market with an explicit dense valuation table.
#[derive(Clone, Debug, PartialEq)]
pub struct Market {
    num_buyers: usize,
    num_goods: usize,
    values: Vec<f64>,
}

impl Market {
    /// A market where every buyer values every bundle at zero.
    pub fn zeros(num_buyers: usize, num_goods: usize) -> Result<Self> {
        if num_goods > MAX_GOODS {
            return Err(Error::TooManyGoods { goods: num_goods, cap: MAX_GOODS });
        }
        Ok(Market {
            num_buyers,
            num_goods,
            values: vec![0.0; num_buyers << num_goods],
        })
    }

    /// Builds a market by evaluating `f` on every buyer and nonempty bundle.
    pub fn from_fn<F>(num_buyers: usize, num_goods: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, Bundle) -> f64,
    {
        let mut market = Market::zeros(num_buyers, num_goods)?;
        for i in 0..num_buyers {
            for s in nonempty_bundles(num_goods) {
                market.set_value(i, s, f(i, s))?;
            }
        }
        Ok(market)
    }

    /// Expands any valuation profile into a dense table.
    pub fn from_valuations<V: Valuations + ?Sized>(v: &V) -> Result<Self> {
        Market::from_fn(v.num_buyers(), v.num_goods(), |i, s| v.value(i, s))
    }

    pub fn set_value(&mut self, buyer: usize, bundle: Bundle, value: f64) -> Result<()> {
        self.check_index(buyer, bundle)?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::SchemaViolation(format!(
                "value for buyer {buyer}, bundle {bundle} must be finite and non-negative, got {value}"
            )));
        }
        if bundle.is_empty() && value != 0.0 {
            return Err(Error::SchemaViolation(format!(
                "empty-bundle value for buyer {buyer} must be 0, got {value}"
            )));
        }
        let idx = self.slot(buyer, bundle);
        self.values[idx] = value;
        Ok(())
    }

    pub fn check_index(&self, buyer: usize, bundle: Bundle) -> Result<()> {
        if buyer >= self.num_buyers || !bundle.fits(self.num_goods) {
            return Err(Error::InvalidIndex { buyer, bundle });
        }
        Ok(())
    }

    /// The `2^m` values of one buyer, indexed by bundle mask.
    pub fn buyer_values(&self, buyer: usize) -> &[f64] {
        let width = 1 << self.num_goods;
        &self.values[buyer * width..(buyer + 1) * width]
    }

    pub fn is_compatible(&self, other: &Market) -> bool {
        self.num_buyers == other.num_buyers && self.num_goods == other.num_goods
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn slot(&self, buyer: usize, bundle: Bundle) -> usize {
        (buyer << self.num_goods) | bundle.mask() as usize
    }
}

impl Valuations for Market {
    fn num_buyers(&self) -> usize {
        self.num_buyers
    }

    fn num_goods(&self) -> usize {
        self.num_goods
    }

    fn value(&self, buyer: usize, bundle: Bundle) -> f64 {
        self.values[self.slot(buyer, bundle)]
    }
}

/// One bundle per buyer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(Vec<Bundle>);

impl Allocation {
    pub fn new(bundles: Vec<Bundle>) -> Self {
        Allocation(bundles)
    }

    /// Every buyer receives the empty bundle.
    pub fn empty(num_buyers: usize) -> Self {
        Allocation(vec![Bundle::EMPTY; num_buyers])
    }

    pub fn bundles(&self) -> &[Bundle] {
        &self.0
    }

    pub fn bundle(&self, buyer: usize) -> Bundle {
        self.0[buyer]
    }

    pub fn num_buyers(&self) -> usize {
        self.0.len()
    }

    /// Union of all allocated bundles.
    pub fn allocated_goods(&self) -> Bundle {
        self.0.iter().fold(Bundle::EMPTY, |acc, &s| acc.union(s))
    }

    fn first_conflict(&self) -> Option<(usize, usize)> {
        let mut seen = Bundle::EMPTY;
        for (k, &s) in self.0.iter().enumerate() {
            if seen.intersects(s) {
                let i = self.0[..k].iter().position(|b| b.intersects(s)).unwrap_or(0);
                return Some((i, k));
            }
            seen = seen.union(s);
        }
        None
    }

    pub fn is_feasible(&self) -> bool {
        self.first_conflict().is_none()
    }

    /// Checks the entry count against `num_buyers`, goods against `num_goods`, and feasibility.
    pub fn validate(&self, num_buyers: usize, num_goods: usize) -> Result<()> {
        if self.0.len() != num_buyers {
            return Err(Error::DimensionMismatch { expected: num_buyers, found: self.0.len() });
        }
        if let Some((buyer, bundle)) = self.0.iter().enumerate().find(|(_, s)| !s.fits(num_goods)) {
            return Err(Error::InvalidIndex { buyer, bundle: *bundle });
        }
        if let Some((i, k)) = self.first_conflict() {
            return Err(Error::InfeasibleAllocation(i, k));
        }
        Ok(())
    }
}

pub fn is_feasible(alloc: &Allocation) -> bool {
    alloc.is_feasible()
}

/// Dense per-buyer bundle prices `P_i(S)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BundlePrices {
    num_buyers: usize,
    num_goods: usize,
    prices: Vec<f64>,
}

impl BundlePrices {
    pub fn zeros(num_buyers: usize, num_goods: usize) -> Result<Self> {
        if num_goods > MAX_GOODS {
            return Err(Error::TooManyGoods { goods: num_goods, cap: MAX_GOODS });
        }
        Ok(BundlePrices { num_buyers, num_goods, prices: vec![0.0; num_buyers << num_goods] })
    }

    /// Prices every bundle at the buyer's own value for it.
    pub fn from_values(market: &Market) -> Self {
        BundlePrices {
            num_buyers: market.num_buyers,
            num_goods: market.num_goods,
            prices: market.values.clone(),
        }
    }

    pub fn set(&mut self, buyer: usize, bundle: Bundle, price: f64) -> Result<()> {
        if buyer >= self.num_buyers || !bundle.fits(self.num_goods) {
            return Err(Error::InvalidIndex { buyer, bundle });
        }
        if !price.is_finite() || price < 0.0 {
            return Err(Error::SchemaViolation(format!("price {price} must be finite and non-negative")));
        }
        self.prices[(buyer << self.num_goods) | bundle.mask() as usize] = price;
        Ok(())
    }

    pub fn get(&self, buyer: usize, bundle: Bundle) -> f64 {
        self.prices[(buyer << self.num_goods) | bundle.mask() as usize]
    }

    pub fn num_buyers(&self) -> usize {
        self.num_buyers
    }

    pub fn num_goods(&self) -> usize {
        self.num_goods
    }
}

/// A pricing profile.
#[derive(Clone, Debug, PartialEq)]
pub enum Pricing {
    /// Anonymous per-good prices; a bundle costs the sum of its goods.
    Linear(Vec<f64>),
    PerBuyerBundle(BundlePrices),
}

impl Pricing {
    pub fn price(&self, buyer: usize, bundle: Bundle) -> f64 {
        match self {
            Pricing::Linear(p) => bundle.goods().map(|j| p[j]).sum(),
            Pricing::PerBuyerBundle(table) => table.get(buyer, bundle),
        }
    }

    pub fn validate(&self, num_buyers: usize, num_goods: usize) -> Result<()> {
        match self {
            Pricing::Linear(p) => {
                if p.len() != num_goods {
                    return Err(Error::DimensionMismatch { expected: num_goods, found: p.len() });
                }
                if let Some(bad) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
                    return Err(Error::SchemaViolation(format!("negative or non-finite price {bad}")));
                }
            }
            Pricing::PerBuyerBundle(t) => {
                if t.num_buyers != num_buyers {
                    return Err(Error::DimensionMismatch { expected: num_buyers, found: t.num_buyers });
                }
                if t.num_goods != num_goods {
                    return Err(Error::DimensionMismatch { expected: num_goods, found: t.num_goods });
                }
            }
        }
        Ok(())
    }
}

/// An allocation paired with a pricing.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub allocation: Allocation,
    pub pricing: Pricing,
}

impl Outcome {
    pub fn new(allocation: Allocation, pricing: Pricing) -> Result<Self> {
        if let Some((i, k)) = allocation.first_conflict() {
            return Err(Error::InfeasibleAllocation(i, k));
        }
        Ok(Outcome { allocation, pricing })
    }

    pub fn validate_for<V: Valuations + ?Sized>(&self, market: &V) -> Result<()> {
        self.allocation.validate(market.num_buyers(), market.num_goods())?;
        self.pricing.validate(market.num_buyers(), market.num_goods())
    }

    /// `v_i(S_i) - P_i(S_i)`.
    pub fn realized_utility<V: Valuations + ?Sized>(&self, market: &V, buyer: usize) -> f64 {
        let s = self.allocation.bundle(buyer);
        market.value(buyer, s) - self.pricing.price(buyer, s)
    }

    /// `sum_i P_i(S_i)`.
    pub fn revenue(&self) -> f64 {
        self.allocation
            .bundles()
            .iter()
            .enumerate()
            .map(|(i, &s)| self.pricing.price(i, s))
            .sum()
    }
}

/// A set of buyer-bundle pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexSet(BTreeSet<(usize, Bundle)>);

impl IndexSet {
    pub fn new() -> Self {
        IndexSet(BTreeSet::new())
    }

    /// `N x (2^G \ {∅})`.
    pub fn full(num_buyers: usize, num_goods: usize) -> Self {
        (0..num_buyers)
            .flat_map(|i| nonempty_bundles(num_goods).map(move |s| (i, s)))
            .collect()
    }

    /// `N x 2^G`, the empty bundle included.
    pub fn full_with_empty(num_buyers: usize, num_goods: usize) -> Self {
        (0..num_buyers)
            .flat_map(|i| all_bundles(num_goods).map(move |s| (i, s)))
            .collect()
    }

    /// Every buyer paired with every single good.
    pub fn singletons(num_buyers: usize, num_goods: usize) -> Self {
        (0..num_buyers)
            .flat_map(|i| (0..num_goods).map(move |j| (i, Bundle::singleton(j))))
            .collect()
    }

    pub fn insert(&mut self, buyer: usize, bundle: Bundle) -> bool {
        self.0.insert((buyer, bundle))
    }

    pub fn remove(&mut self, buyer: usize, bundle: Bundle) -> bool {
        self.0.remove(&(buyer, bundle))
    }

    pub fn contains(&self, buyer: usize, bundle: Bundle) -> bool {
        self.0.contains(&(buyer, bundle))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Bundle)> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<(usize, Bundle)> for IndexSet {
    fn from_iter<I: IntoIterator<Item = (usize, Bundle)>>(iter: I) -> Self {
        IndexSet(iter.into_iter().collect())
    }
}

/// `sum_i v_i(S_i)`.
pub fn welfare<V: Valuations + ?Sized>(market: &V, alloc: &Allocation) -> Result<f64> {
    alloc.validate(market.num_buyers(), market.num_goods())?;
    Ok(alloc
        .bundles()
        .iter()
        .enumerate()
        .map(|(i, &s)| market.value(i, s))
        .sum())
}

/// `max_{(i,S) in idx} |v_i^a(S) - v_i^b(S)|`.
pub fn market_distance(a: &Market, b: &Market, idx: &IndexSet) -> Result<f64> {
    if !a.is_compatible(b) {
        return Err(Error::IncompatibleMarkets(format!(
            "{}x{} vs {}x{}",
            a.num_buyers, a.num_goods, b.num_buyers, b.num_goods
        )));
    }
    if idx.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let mut worst: f64 = 0.0;
    for (i, s) in idx.iter() {
        a.check_index(i, s)?;
        worst = worst.max((a.value(i, s) - b.value(i, s)).abs());
    }
    Ok(worst)
}

/// Largest amount by which any buyer could gain by deviating to another
/// bundle at the outcome's prices, clamped below at zero. The outcome
/// satisfies UM up to `eps` iff the result is at most `eps`.
pub fn um_violation<V: Valuations + ?Sized>(market: &V, outcome: &Outcome) -> f64 {
    (0..market.num_buyers())
        .map(|i| enumerated_best_utility(market, i, &outcome.pricing) - outcome.realized_utility(market, i))
        .fold(0.0, f64::max)
}

/// Revenue maximization: no feasible reallocation earns the seller more at the
/// outcome's prices. Linear prices take the zero-price rule for unallocated
/// goods; per-buyer prices are checked by enumeration.
pub fn rm_holds<V: Valuations + ?Sized>(market: &V, outcome: &Outcome) -> Result<bool> {
    match &outcome.pricing {
        Pricing::Linear(p) => {
            let allocated = outcome.allocation.allocated_goods();
            Ok((0..market.num_goods()).all(|j| allocated.contains(j) || p[j] <= TOL))
        }
        Pricing::PerBuyerBundle(_) => rm_holds_enumerated(market, outcome),
    }
}

/// RM by brute force over all `(n+1)^m` feasible allocations.
pub fn rm_holds_enumerated<V: Valuations + ?Sized>(market: &V, outcome: &Outcome) -> Result<bool> {
    let (n, m) = (market.num_buyers(), market.num_goods());
    if m > RM_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge { goods: m, cap: RM_ENUMERATION_CAP });
    }
    let revenue = outcome.revenue();
    let mut best = f64::NEG_INFINITY;
    for_each_feasible_allocation(n, m, |bundles| {
        let r: f64 = bundles
            .iter()
            .enumerate()
            .map(|(i, &s)| outcome.pricing.price(i, s))
            .sum();
        best = best.max(r);
    });
    Ok(revenue + TOL >= best)
}

/// Calls `f` once per feasible allocation of `num_goods` goods to
/// `num_buyers` buyers (every good goes to one buyer or to nobody).
pub fn for_each_feasible_allocation<F>(num_buyers: usize, num_goods: usize, mut f: F)
where
    F: FnMut(&[Bundle]),
{
    // owner[j] == num_buyers means good j is unallocated
    let mut owner = vec![num_buyers; num_goods];
    let mut bundles = vec![Bundle::EMPTY; num_buyers];
    loop {
        bundles.iter_mut().for_each(|b| *b = Bundle::EMPTY);
        for (j, &o) in owner.iter().enumerate() {
            if o < num_buyers {
                bundles[o] = bundles[o].union(Bundle::singleton(j));
            }
        }
        f(&bundles);
        let mut j = 0;
        loop {
            if j == num_goods {
                return;
            }
            if owner[j] == 0 {
                owner[j] = num_buyers;
                j += 1;
            } else {
                owner[j] -= 1;
                break;
            }
        }
    }
}

/// Membership in the set of `eps`-competitive equilibria: UM up to `eps`,
/// RM exactly.
pub fn is_approx_ce<V: Valuations + ?Sized>(market: &V, outcome: &Outcome, eps: f64) -> Result<bool> {
    outcome.validate_for(market)?;
    Ok(um_violation(market, outcome) <= eps + TOL && rm_holds(market, outcome)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(goods: &[usize]) -> Bundle {
        Bundle::from_goods(goods.iter().map(|g| g - 1))
    }

    fn two_by_two() -> Market {
        let mut m = Market::zeros(2, 2).unwrap();
        m.set_value(0, b(&[1]), 3.0).unwrap();
        m.set_value(1, b(&[2]), 4.0).unwrap();
        m
    }

    #[test]
    fn bundle_basics() {
        let s = b(&[1, 3]);
        assert_eq!(s.mask(), 0b101);
        assert_eq!(s.goods().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(s.len(), 2);
        assert!(s.fits(3));
        assert!(!s.fits(2));
        assert_eq!(Bundle::full(3).mask(), 7);
        assert_eq!(all_bundles(3).count(), 8);
    }

    #[test]
    fn welfare_examples() {
        let m = two_by_two();
        assert_eq!(welfare(&m, &Allocation::empty(2)).unwrap(), 0.0);
        let alloc = Allocation::new(vec![b(&[1]), b(&[2])]);
        assert_eq!(welfare(&m, &alloc).unwrap(), 7.0);

        let mut single = Market::zeros(1, 2).unwrap();
        single.set_value(0, b(&[1, 2]), 7.0).unwrap();
        assert_eq!(welfare(&single, &Allocation::new(vec![b(&[1, 2])])).unwrap(), 7.0);
    }

    #[test]
    fn welfare_errors() {
        let m = two_by_two();
        let overlap = Allocation::new(vec![b(&[1, 2]), b(&[2])]);
        assert!(matches!(welfare(&m, &overlap), Err(Error::InfeasibleAllocation(0, 1))));
        let short = Allocation::new(vec![b(&[1])]);
        assert!(matches!(welfare(&m, &short), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn feasibility_examples() {
        assert!(Allocation::new(vec![b(&[1]), b(&[2])]).is_feasible());
        assert!(!Allocation::new(vec![b(&[1, 2]), b(&[2])]).is_feasible());
        assert!(Allocation::empty(3).is_feasible());
    }

    #[test]
    fn rejects_bad_values() {
        let mut m = Market::zeros(1, 2).unwrap();
        assert!(m.set_value(0, b(&[1]), -1.0).is_err());
        assert!(m.set_value(0, Bundle::EMPTY, 0.2).is_err());
        assert!(m.set_value(0, b(&[3]), 1.0).is_err());
        assert!(m.set_value(1, b(&[1]), 1.0).is_err());
        assert!(Market::zeros(1, MAX_GOODS + 1).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = two_by_two();
        let full = IndexSet::full(2, 2);
        assert_eq!(market_distance(&a, &a, &full).unwrap(), 0.0);

        let mut shifted = a.clone();
        shifted.set_value(1, b(&[2]), 4.3).unwrap();
        let only: IndexSet = [(1, b(&[2]))].into_iter().collect();
        assert!((market_distance(&a, &shifted, &only).unwrap() - 0.3).abs() < 1e-12);

        assert!(matches!(market_distance(&a, &a, &IndexSet::new()), Err(Error::EmptyIndexSet)));
        let other = Market::zeros(3, 2).unwrap();
        assert!(matches!(market_distance(&a, &other, &full), Err(Error::IncompatibleMarkets(_))));
    }

    #[test]
    fn distance_matches_exhaustive_scan() {
        let a = Market::from_fn(2, 2, |i, s| (i as f64 + 1.0) * s.mask() as f64 * 0.7).unwrap();
        let c = Market::from_fn(2, 2, |i, s| 5.0 - i as f64 - 0.9 * s.mask() as f64).unwrap();
        let mut expected: f64 = 0.0;
        for i in 0..2 {
            for mask in 0..4u32 {
                let s = Bundle::from_mask(mask);
                expected = expected.max((a.value(i, s) - c.value(i, s)).abs());
            }
        }
        let d = market_distance(&a, &c, &IndexSet::full_with_empty(2, 2)).unwrap();
        assert_eq!(d, expected);
    }

    fn one_good(value: f64, price: f64, alloc: Bundle) -> (Market, Outcome) {
        let mut m = Market::zeros(1, 1).unwrap();
        m.set_value(0, b(&[1]), value).unwrap();
        let o = Outcome::new(Allocation::new(vec![alloc]), Pricing::Linear(vec![price])).unwrap();
        (m, o)
    }

    #[test]
    fn um_violation_examples() {
        let (m, o) = one_good(5.0, 0.0, Bundle::EMPTY);
        assert_eq!(um_violation(&m, &o), 5.0);
        let (m, o) = one_good(5.0, 6.0, Bundle::EMPTY);
        assert_eq!(um_violation(&m, &o), 0.0);
        let (m, o) = one_good(5.0, 2.0, b(&[1]));
        assert_eq!(um_violation(&m, &o), 0.0);
        assert!(is_approx_ce(&m, &o, 0.0).unwrap());
    }

    #[test]
    fn approx_ce_threshold() {
        // buyer holds good 1 at price 0, but could earn 0.4 more from the pair
        let mut m = Market::zeros(1, 2).unwrap();
        m.set_value(0, b(&[1]), 1.0).unwrap();
        m.set_value(0, b(&[2]), 0.5).unwrap();
        m.set_value(0, b(&[1, 2]), 1.4).unwrap();
        let o = Outcome::new(Allocation::new(vec![b(&[1])]), Pricing::Linear(vec![0.0, 0.0])).unwrap();
        assert!((um_violation(&m, &o) - 0.4).abs() < 1e-12);
        assert!(!is_approx_ce(&m, &o, 0.3).unwrap());
        // good 2 is unallocated at price 0, so RM holds and only UM binds
        assert!(is_approx_ce(&m, &o, 0.4).unwrap());
    }

    #[test]
    fn rm_linear_fast_path() {
        let m = two_by_two();
        let all = Allocation::new(vec![b(&[1]), b(&[2])]);
        let o = Outcome::new(all, Pricing::Linear(vec![1.0, 2.0])).unwrap();
        assert!(rm_holds(&m, &o).unwrap());

        let partial = Allocation::new(vec![b(&[1]), Bundle::EMPTY]);
        let o = Outcome::new(partial, Pricing::Linear(vec![1.0, 0.5])).unwrap();
        assert!(!rm_holds(&m, &o).unwrap());
        assert!(!rm_holds_enumerated(&m, &o).unwrap());
    }

    #[test]
    fn rm_per_buyer_enumeration() {
        // n=2, m=2: compare against the 9 feasible allocations by hand
        let m = two_by_two();
        let mut prices = BundlePrices::zeros(2, 2).unwrap();
        prices.set(0, b(&[1]), 3.0).unwrap();
        prices.set(0, b(&[1, 2]), 8.0).unwrap();
        prices.set(1, b(&[2]), 4.0).unwrap();
        let pricing = Pricing::PerBuyerBundle(prices);

        let mut count = 0;
        let mut best: f64 = 0.0;
        for_each_feasible_allocation(2, 2, |s| {
            count += 1;
            best = best.max(pricing.price(0, s[0]) + pricing.price(1, s[1]));
        });
        assert_eq!(count, 9);
        assert_eq!(best, 8.0);

        let split = Outcome::new(Allocation::new(vec![b(&[1]), b(&[2])]), pricing.clone()).unwrap();
        assert!(!rm_holds(&m, &split).unwrap());
        let bundled = Outcome::new(Allocation::new(vec![b(&[1, 2]), Bundle::EMPTY]), pricing).unwrap();
        assert!(rm_holds(&m, &bundled).unwrap());
    }

    #[test]
    fn rm_enumeration_cap() {
        let m = Market::zeros(1, RM_ENUMERATION_CAP + 1).unwrap();
        let o = Outcome::new(
            Allocation::empty(1),
            Pricing::Linear(vec![0.0; RM_ENUMERATION_CAP + 1]),
        )
        .unwrap();
        assert!(rm_holds(&m, &o).unwrap());
        assert!(matches!(rm_holds_enumerated(&m, &o), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn value_pricing_is_ce_at_welfare_optimum() {
        let m = two_by_two();
        let o = Outcome::new(
            Allocation::new(vec![b(&[1]), b(&[2])]),
            Pricing::PerBuyerBundle(BundlePrices::from_values(&m)),
        )
        .unwrap();
        assert!(is_approx_ce(&m, &o, 0.0).unwrap());
    }
}
