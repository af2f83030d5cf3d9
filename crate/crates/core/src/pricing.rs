//! Linear competitive-equilibrium prices for a fixed allocation.
//!
//! The UM constraints are relaxed by one non-negative slack per buyer-bundle
//! pair. Total slack is minimized first; revenue objectives then optimize the
//! sum of prices with total slack held at that minimum.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{all_bundles, nonempty_bundles, welfare, Allocation, Bundle, Market, Pricing, Valuations, TOL};
use crate::simplex::{LinearProgram, LpSolution, Relation};
use crate::valuation::UnitDemandMatrix;
use crate::welfare::{max_welfare_exact, max_welfare_unit_demand, EXACT_GOODS_CAP};

/// Constraint residual allowed by [`verify_price_solution`].
pub const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriceObjective {
    #[serde(rename = "min-slack")]
    MinSlack,
    #[serde(rename = "min-rev")]
    MinRevenue,
    #[serde(rename = "max-rev")]
    MaxRevenue,
}

impl PriceObjective {
    pub fn name(self) -> &'static str {
        match self {
            PriceObjective::MinSlack => "min-slack",
            PriceObjective::MinRevenue => "min-rev",
            PriceObjective::MaxRevenue => "max-rev",
        }
    }
}

impl fmt::Display for PriceObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriceObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-slack" => Ok(PriceObjective::MinSlack),
            "min-rev" => Ok(PriceObjective::MinRevenue),
            "max-rev" => Ok(PriceObjective::MaxRevenue),
            other => Err(Error::Config(format!("unknown price objective '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceSolution {
    pub prices: Vec<f64>,
    pub total_slack: f64,
    pub per_pair_slack: BTreeMap<(usize, Bundle), f64>,
    pub objective_used: PriceObjective,
}

impl PriceSolution {
    pub fn pricing(&self) -> Pricing {
        Pricing::Linear(self.prices.clone())
    }

    /// Sum of all good prices.
    pub fn revenue(&self) -> f64 {
        self.prices.iter().sum()
    }
}

/// Linear prices supporting `alloc` in a dense market. Deviations to every
/// bundle are constrained. When the market is within the exact solver's cap
/// the allocation is first checked to be welfare-maximizing.
pub fn linear_ce_prices(market: &Market, alloc: &Allocation, objective: PriceObjective) -> Result<PriceSolution> {
    check_welfare_maximizing(market, alloc, |m| {
        (m.num_goods() <= EXACT_GOODS_CAP).then(|| max_welfare_exact(m).map(|r| r.value))
    })?;
    let pairs = deviation_pairs(market.num_buyers(), alloc, |_| nonempty_bundles(market.num_goods()).collect());
    solve_prices(market, alloc, &pairs, objective)
}

/// Linear prices for a unit-demand market. Only single-good deviations are
/// constrained: with non-negative prices a bundle is never worth more to a
/// unit-demand buyer than its best member good.
pub fn linear_ce_prices_unit_demand(
    v: &UnitDemandMatrix,
    alloc: &Allocation,
    objective: PriceObjective,
) -> Result<PriceSolution> {
    check_welfare_maximizing(v, alloc, |v| Some(Ok(max_welfare_unit_demand(v).value)))?;
    let pairs = deviation_pairs(v.num_buyers(), alloc, |_| (0..v.num_goods()).map(Bundle::singleton).collect());
    solve_prices(v, alloc, &pairs, objective)
}

fn check_welfare_maximizing<V, F>(market: &V, alloc: &Allocation, optimum: F) -> Result<()>
where
    V: Valuations,
    F: FnOnce(&V) -> Option<Result<f64>>,
{
    let found = welfare(market, alloc)?;
    match optimum(market) {
        Some(opt) => {
            let opt = opt?;
            if found < opt - TOL {
                return Err(Error::NotWelfareMaximizing { found, optimal: opt });
            }
            Ok(())
        }
        None => Ok(()),
    }
}

/// Constrained `(i, S)` pairs: the given deviations other than `S_i`, plus the
/// empty bundle for every buyer holding something (individual rationality).
fn deviation_pairs<F>(num_buyers: usize, alloc: &Allocation, deviations: F) -> Vec<(usize, Bundle)>
where
    F: Fn(usize) -> Vec<Bundle>,
{
    let mut pairs = Vec::new();
    for i in 0..num_buyers {
        let held = alloc.bundle(i);
        if !held.is_empty() {
            pairs.push((i, Bundle::EMPTY));
        }
        pairs.extend(deviations(i).into_iter().filter(|&s| s != held).map(|s| (i, s)));
    }
    pairs
}

fn solve_prices<V: Valuations + ?Sized>(
    market: &V,
    alloc: &Allocation,
    pairs: &[(usize, Bundle)],
    objective: PriceObjective,
) -> Result<PriceSolution> {
    let m = market.num_goods();
    let allocated = alloc.allocated_goods();
    // price variables exist only for allocated goods; the rest are pinned at 0
    let price_var: Vec<Option<usize>> = {
        let mut next = 0;
        (0..m)
            .map(|j| {
                allocated.contains(j).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let num_prices = allocated.len();
    let num_vars = num_prices + pairs.len();

    let mut lp = LinearProgram::new(num_vars);
    for (k, &(i, s)) in pairs.iter().enumerate() {
        let held = alloc.bundle(i);
        // p(S_i) - p(S) - alpha <= v_i(S_i) - v_i(S)
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for j in held.difference(s).goods() {
            terms.extend(price_var[j].map(|v| (v, 1.0)));
        }
        for j in s.difference(held).goods() {
            terms.extend(price_var[j].map(|v| (v, -1.0)));
        }
        terms.push((num_prices + k, -1.0));
        lp.add_constraint(terms, Relation::Le, market.value(i, held) - market.value(i, s));
    }

    let mut slack_objective = vec![0.0; num_vars];
    slack_objective[num_prices..].iter_mut().for_each(|c| *c = 1.0);
    lp.set_objective(slack_objective);
    let mut x = run(&lp)?;

    if objective != PriceObjective::MinSlack {
        let min_slack: f64 = x[num_prices..].iter().sum();
        // an exact CE keeps every slack at zero; otherwise allow TOL of drift
        let cap = if min_slack <= TOL { 0.0 } else { min_slack + TOL };
        let slack_terms = (num_prices..num_vars).map(|v| (v, 1.0)).collect();
        lp.add_constraint(slack_terms, Relation::Le, cap);
        let sign = if objective == PriceObjective::MinRevenue { 1.0 } else { -1.0 };
        let mut revenue_objective = vec![0.0; num_vars];
        revenue_objective[..num_prices].iter_mut().for_each(|c| *c = sign);
        lp.set_objective(revenue_objective);
        x = run(&lp)?;
    }

    let prices = price_var
        .iter()
        .map(|v| v.map_or(0.0, |v| x[v].max(0.0)))
        .collect();
    let per_pair_slack: BTreeMap<(usize, Bundle), f64> = pairs
        .iter()
        .enumerate()
        .map(|(k, &pair)| (pair, x[num_prices + k].max(0.0)))
        .collect();
    let total_slack = per_pair_slack.values().sum();
    Ok(PriceSolution { prices, total_slack, per_pair_slack, objective_used: objective })
}

fn run(lp: &LinearProgram) -> Result<Vec<f64>> {
    match lp.solve() {
        LpSolution::Optimal { x, .. } => Ok(x),
        LpSolution::Infeasible => Err(Error::LpNumericalFailure("price LP reported infeasible".into())),
        LpSolution::Unbounded => Err(Error::LpNumericalFailure("price LP reported unbounded".into())),
        LpSolution::IterationLimit => Err(Error::LpNumericalFailure("simplex iteration limit".into())),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceReport {
    /// Largest UM residual in excess of the recorded slack, floored at 0.
    pub max_violation: f64,
    /// Pairs whose residual exceeds [`RESIDUAL_TOL`].
    pub violations: Vec<(usize, Bundle, f64)>,
    /// Every unallocated good is priced at zero.
    pub zero_price_ok: bool,
    /// Every price is non-negative.
    pub nonnegative: bool,
}

impl PriceReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.zero_price_ok && self.nonnegative
    }
}

/// Recomputes every UM constraint `(i, S)` over all bundles. Pairs outside the
/// solved constraint set are checked against zero slack.
pub fn verify_price_solution<V: Valuations + ?Sized>(market: &V, alloc: &Allocation, sol: &PriceSolution) -> PriceReport {
    let pricing = sol.pricing();
    let mut max_violation: f64 = 0.0;
    let mut violations = Vec::new();
    for i in 0..market.num_buyers() {
        let held = alloc.bundle(i);
        let realized = market.value(i, held) - pricing.price(i, held);
        for s in all_bundles(market.num_goods()) {
            let slack = sol.per_pair_slack.get(&(i, s)).copied().unwrap_or(0.0);
            let excess = market.value(i, s) - pricing.price(i, s) - realized - slack;
            max_violation = max_violation.max(excess);
            if excess > RESIDUAL_TOL {
                violations.push((i, s, excess));
            }
        }
    }
    let allocated = alloc.allocated_goods();
    let zero_price_ok = sol
        .prices
        .iter()
        .enumerate()
        .all(|(j, &p)| allocated.contains(j) || p.abs() <= TOL);
    let nonnegative = sol.prices.iter().all(|&p| p >= 0.0);
    PriceReport { max_violation, violations, zero_price_ok, nonnegative }
}
