//! Learning empirical markets from noisy value queries: the elicitation
//! algorithm (EA), its pruning variant (EAP), and the Hoeffding radius that
//! drives both.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Bundle, IndexSet, Market, Valuations};
use crate::valuation::{NoisyOracle, UnitDemandMatrix};
use crate::welfare::BidTable;

fn check_common(c: f64, idx_size: usize, delta: f64) -> Result<()> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("value range c must be positive, got {c}")));
    }
    if idx_size == 0 {
        return Err(Error::Domain("index set size must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("failure probability must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `c * sqrt(ln(2 |I| / delta) / (2 t))`.
pub fn hoeffding_eps(c: f64, idx_size: usize, delta: f64, t: u64) -> Result<f64> {
    check_common(c, idx_size, delta)?;
    if t == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    Ok(radius(c, idx_size, delta, t))
}

fn radius(c: f64, idx_size: usize, delta: f64, t: u64) -> f64 {
    c * ((2.0 * idx_size as f64 / delta).ln() / (2.0 * t as f64)).sqrt()
}

/// Smallest `t` with `hoeffding_eps(c, idx_size, delta, t) <= eps`.
pub fn invert_hoeffding_t(c: f64, idx_size: usize, delta: f64, eps: f64) -> Result<u64> {
    check_common(c, idx_size, delta)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("target radius must be positive, got {eps}")));
    }
    let closed = (c * c * (2.0 * idx_size as f64 / delta).ln() / (2.0 * eps * eps)).ceil();
    if closed >= u64::MAX as f64 / 2.0 {
        return Err(Error::Domain(format!("target radius {eps} needs an unrepresentable sample count")));
    }
    // the closed form can be off by one after rounding
    let mut t = (closed as u64).max(1);
    while t > 1 && radius(c, idx_size, delta, t - 1) <= eps {
        t -= 1;
    }
    while radius(c, idx_size, delta, t) > eps {
        t += 1;
    }
    Ok(t)
}

/// Per-iteration cap on pruning candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Limited(usize),
    Unbounded,
}

impl Budget {
    fn take(self, available: usize) -> usize {
        match self {
            Budget::Limited(k) => k.min(available),
            Budget::Unbounded => available,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Limited(k) => write!(f, "{k}"),
            Budget::Unbounded => f.write_str("inf"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "unbounded" | "all" => Ok(Budget::Unbounded),
            other => other
                .parse()
                .map(Budget::Limited)
                .map_err(|_| Error::Config(format!("invalid pruning budget '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub sampling: Vec<u64>,
    pub failure: Vec<f64>,
    pub pruning: Vec<Budget>,
}

impl Schedules {
    pub fn new(sampling: Vec<u64>, failure: Vec<f64>, pruning: Vec<Budget>) -> Result<Self> {
        let s = Schedules { sampling, failure, pruning };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.sampling.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampling.is_empty()
    }

    pub fn total_failure(&self) -> f64 {
        self.failure.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.sampling.len();
        if k == 0 {
            return Err(Error::InvalidSchedule("schedules must have at least one iteration".into()));
        }
        if self.failure.len() != k || self.pruning.len() != k {
            return Err(Error::InvalidSchedule(format!(
                "lengths differ: {} sampling, {} failure, {} pruning",
                k,
                self.failure.len(),
                self.pruning.len()
            )));
        }
        if self.sampling[0] == 0 {
            return Err(Error::InvalidSchedule("sample counts must be positive".into()));
        }
        if let Some(w) = self.sampling.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule(format!(
                "sampling schedule must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        if let Some(d) = self.failure.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return Err(Error::InvalidSchedule(format!("failure probability {d} outside (0, 1)")));
        }
        if self.total_failure() >= 1.0 {
            return Err(Error::InvalidSchedule(format!(
                "failure probabilities sum to {}, must be below 1",
                self.total_failure()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Pruned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub radius: f64,
    pub status: Status,
    pub samples: u64,
}

/// Estimates and confidence radii for every pair in an index set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimateTable {
    entries: BTreeMap<(usize, Bundle), Estimate>,
}

impl EstimateTable {
    /// Every pair starts active at `(0, c/2)` with no samples.
    pub fn new(idx: &IndexSet, c: f64) -> Self {
        let init = Estimate { mean: 0.0, radius: c / 2.0, status: Status::Active, samples: 0 };
        EstimateTable { entries: idx.iter().map(|k| (k, init)).collect() }
    }

    pub fn get(&self, buyer: usize, bundle: Bundle) -> Option<&Estimate> {
        self.entries.get(&(buyer, bundle))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, Bundle), &Estimate)> + '_ {
        self.entries.iter().map(|(k, e)| (*k, e))
    }

    pub fn active(&self) -> IndexSet {
        self.iter().filter(|(_, e)| e.status == Status::Active).map(|(k, _)| k).collect()
    }

    pub fn pruned(&self) -> IndexSet {
        self.iter().filter(|(_, e)| e.status == Status::Pruned).map(|(k, _)| k).collect()
    }

    pub fn total_samples(&self) -> u64 {
        self.entries.values().map(|e| e.samples).sum()
    }

    fn record(&mut self, key: (usize, Bundle), mean: f64, radius: f64, samples: u64) {
        let e = self.entries.get_mut(&key).expect("estimate for a pair outside the table");
        debug_assert_eq!(e.status, Status::Active);
        e.mean = mean;
        e.radius = radius;
        e.samples += samples;
    }

    fn prune(&mut self, key: (usize, Bundle)) {
        if let Some(e) = self.entries.get_mut(&key) {
            e.status = Status::Pruned;
        }
    }

    /// Dense empirical market over all recorded pairs. Negative estimates
    /// are clamped to zero; unrecorded pairs stay at zero.
    pub fn empirical_market(&self, num_buyers: usize, num_goods: usize) -> Result<Market> {
        let mut market = Market::zeros(num_buyers, num_goods)?;
        for ((i, s), e) in self.iter() {
            if !s.is_empty() {
                market.set_value(i, s, e.mean.max(0.0))?;
            }
        }
        Ok(market)
    }

    /// Unit-demand matrix from the singleton estimates, clamped at zero.
    pub fn empirical_unit_demand(&self, num_buyers: usize, num_goods: usize) -> Result<UnitDemandMatrix> {
        let mut values = vec![0.0; num_buyers * num_goods];
        for ((i, s), e) in self.iter() {
            if s.len() == 1 && i < num_buyers {
                let j = s.goods().next().unwrap_or(0);
                if j < num_goods {
                    values[i * num_goods + j] = e.mean.max(0.0);
                }
            }
        }
        UnitDemandMatrix::new(num_buyers, num_goods, values)
    }

    /// Bids for the active pairs only.
    fn active_bids(&self, num_buyers: usize, num_goods: usize) -> BidTable {
        let mut table = BidTable::new(num_buyers, num_goods);
        for ((i, s), e) in self.iter() {
            if e.status == Status::Active && !s.is_empty() {
                table.push(i, s, e.mean);
            }
        }
        table
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EaOutput {
    /// Sample means in index-set order.
    pub estimates: Vec<((usize, Bundle), f64)>,
    pub eps_hat: f64,
    pub samples_per_pair: u64,
}

impl EaOutput {
    pub fn into_map(self) -> BTreeMap<(usize, Bundle), f64> {
        self.estimates.into_iter().collect()
    }
}

/// Draws `t` fresh samples of every pair in `idx` and averages them. The
/// radius uses the oracle's value range as `c`.
pub fn ea<V: Valuations + Sync>(oracle: &mut NoisyOracle<V>, idx: &IndexSet, t: u64, delta: f64) -> Result<EaOutput> {
    if idx.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let eps_hat = hoeffding_eps(oracle.value_range(), idx.len(), delta, t)?;
    let (n, m) = (oracle.num_buyers(), oracle.num_goods());
    if let Some((buyer, bundle)) = idx.iter().find(|&(i, s)| i >= n || !s.fits(m)) {
        return Err(Error::InvalidIndex { buyer, bundle });
    }
    let pairs: Vec<(usize, Bundle)> = idx.iter().collect();
    let view = &*oracle;
    let estimates: Vec<((usize, Bundle), f64)> = pairs
        .par_iter()
        .map(|&(i, s)| ((i, s), view.block_sum(i, s, view.draws_taken(i, s), t) / t as f64))
        .collect();
    for &(i, s) in &pairs {
        oracle.advance(i, s, t);
    }
    Ok(EaOutput { estimates, eps_hat, samples_per_pair: t })
}

/// `v_hat + upper_bound + 2 eps_hat n < w_star_hat`.
pub fn prune_check(v_hat: f64, upper_bound: f64, eps_hat: f64, n: usize, w_star_hat: f64) -> bool {
    v_hat + upper_bound + 2.0 * eps_hat * (n as f64) < w_star_hat
}

/// The `budget` pairs with the smallest bounds, smallest first. Ties keep
/// index-set order.
pub fn select_candidates(
    active: &IndexSet,
    bounds: &BTreeMap<(usize, Bundle), f64>,
    budget: Budget,
) -> Vec<(usize, Bundle)> {
    let mut ordered: Vec<((usize, Bundle), f64)> = active
        .iter()
        .map(|k| (k, bounds.get(&k).copied().unwrap_or(f64::INFINITY)))
        .collect();
    ordered.sort_by(|a, b| a.1.total_cmp(&b.1));
    let take = budget.take(ordered.len());
    ordered.into_iter().take(take).map(|(k, _)| k).collect()
}

/// Which pairs are learned: every nonempty bundle, or singletons only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarketStructure {
    General,
    UnitDemand,
}

impl MarketStructure {
    pub fn index_set(self, num_buyers: usize, num_goods: usize) -> IndexSet {
        match self {
            MarketStructure::General => IndexSet::full(num_buyers, num_goods),
            MarketStructure::UnitDemand => IndexSet::singletons(num_buyers, num_goods),
        }
    }
}

/// How the submarket welfare `W_iS` in the pruning test is bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    Exact,
    Relaxed,
    TwoPass,
}

impl BoundMode {
    pub fn name(self) -> &'static str {
        match self {
            BoundMode::Exact => "exact",
            BoundMode::Relaxed => "relaxed",
            BoundMode::TwoPass => "two-pass",
        }
    }
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(BoundMode::Exact),
            "relaxed" => Ok(BoundMode::Relaxed),
            "two-pass" | "twopass" => Ok(BoundMode::TwoPass),
            _ => Err(Error::Config(format!("unknown bound mode '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EapConfig {
    pub schedules: Schedules,
    pub target_eps: f64,
    pub bound_mode: BoundMode,
    pub structure: MarketStructure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub samples_per_pair: u64,
    pub delta: f64,
    pub active: usize,
    pub eps_hat: f64,
    pub w_star_hat: Option<f64>,
    pub candidates: usize,
    pub pruned: Vec<(usize, Bundle)>,
}

/// What an observer sees after each iteration.
pub struct IterationView<'a> {
    pub record: &'a IterationRecord,
    pub table: &'a EstimateTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnResult {
    pub estimates: EstimateTable,
    pub eps_hat: f64,
    /// Sum of the failure probabilities of the iterations that ran.
    pub delta_spent: f64,
    /// Sum over the whole schedule.
    pub delta_schedule_total: f64,
    pub iterations_run: usize,
    pub total_samples: u64,
    pub history: Vec<IterationRecord>,
}

pub fn eap<V: Valuations + Sync>(oracle: &mut NoisyOracle<V>, config: &EapConfig) -> Result<LearnResult> {
    eap_with_observer(oracle, config, |_| {})
}

/// EAP with a callback after every iteration, once pruning for that
/// iteration is done.
pub fn eap_with_observer<V, F>(oracle: &mut NoisyOracle<V>, config: &EapConfig, mut observe: F) -> Result<LearnResult>
where
    V: Valuations + Sync,
    F: FnMut(&IterationView<'_>),
{
    let schedules = &config.schedules;
    schedules.validate()?;
    if !(config.target_eps.is_finite() && config.target_eps >= 0.0) {
        return Err(Error::Domain(format!("target radius must be >= 0, got {}", config.target_eps)));
    }
    let (n, m) = (oracle.num_buyers(), oracle.num_goods());
    let c = oracle.value_range();
    let mut table = EstimateTable::new(&config.structure.index_set(n, m), c);
    let mut history = Vec::new();
    let mut eps_hat = c / 2.0;
    let mut delta_spent = 0.0;
    let mut total_samples = 0u64;

    for k in 0..schedules.len() {
        let active = table.active();
        if active.is_empty() {
            break;
        }
        let (t, delta) = (schedules.sampling[k], schedules.failure[k]);
        let out = ea(oracle, &active, t, delta)?;
        eps_hat = out.eps_hat;
        delta_spent += delta;
        total_samples += t * active.len() as u64;
        for &(key, mean) in &out.estimates {
            table.record(key, mean, eps_hat, t);
        }
        let mut record = IterationRecord {
            iteration: k + 1,
            samples_per_pair: t,
            delta,
            active: active.len(),
            eps_hat,
            w_star_hat: None,
            candidates: 0,
            pruned: Vec::new(),
        };
        let last = eps_hat <= config.target_eps || k + 1 == schedules.len();
        if !last {
            let bids = table.active_bids(n, m);
            let w_star = bids.max_welfare().value;
            let (candidates, pruned) = prune_round(&bids, &table, &active, schedules.pruning[k], config.bound_mode, eps_hat, w_star);
            for &key in &pruned {
                table.prune(key);
            }
            record.w_star_hat = Some(w_star);
            record.candidates = candidates;
            record.pruned = pruned;
        }
        log::debug!(
            "iteration {}: t={} active={} eps_hat={:.5} pruned={}",
            record.iteration,
            t,
            record.active,
            eps_hat,
            record.pruned.len()
        );
        observe(&IterationView { record: &record, table: &table });
        history.push(record);
        if last {
            break;
        }
    }

    Ok(LearnResult {
        estimates: table,
        eps_hat,
        delta_spent,
        delta_schedule_total: schedules.total_failure(),
        iterations_run: history.len(),
        total_samples,
        history,
    })
}

/// Returns the number of candidates examined and the pairs to prune.
fn prune_round(
    bids: &BidTable,
    table: &EstimateTable,
    active: &IndexSet,
    budget: Budget,
    mode: BoundMode,
    eps_hat: f64,
    w_star: f64,
) -> (usize, Vec<(usize, Bundle)>) {
    let n = bids.num_buyers();
    let mean = |k: &(usize, Bundle)| table.get(k.0, k.1).map_or(0.0, |e| e.mean);
    let passes = |k: &(usize, Bundle), bound: f64| prune_check(mean(k), bound, eps_hat, n, w_star);
    let exact = |keys: &[(usize, Bundle)]| -> Vec<f64> {
        keys.par_iter().map(|&(i, s)| bids.max_welfare_without(i, s)).collect()
    };
    let relaxed_bounds = || -> BTreeMap<(usize, Bundle), f64> {
        active.iter().map(|(i, s)| ((i, s), bids.relaxed_bound_without(i, s))).collect()
    };

    match mode {
        BoundMode::Exact => {
            let proxy: BTreeMap<_, _> = active.iter().map(|k| (k, mean(&k))).collect();
            let candidates = select_candidates(active, &proxy, budget);
            let bounds = exact(&candidates);
            let pruned = candidates.iter().zip(&bounds).filter(|(k, &w)| passes(k, w)).map(|(k, _)| *k).collect();
            (candidates.len(), pruned)
        }
        BoundMode::Relaxed => {
            let bounds = relaxed_bounds();
            let candidates = select_candidates(active, &bounds, budget);
            let pruned = candidates.iter().filter(|k| passes(k, bounds[*k])).copied().collect();
            (candidates.len(), pruned)
        }
        BoundMode::TwoPass => {
            let bounds = relaxed_bounds();
            // the relaxed bound dominates the exact one, so a relaxed pass is final
            let (mut pruned, survivors): (Vec<_>, Vec<_>) = active.iter().partition(|k| passes(k, bounds[k]));
            let survivors: IndexSet = survivors.into_iter().collect();
            let candidates = select_candidates(&survivors, &bounds, budget);
            let exact_bounds = exact(&candidates);
            pruned.extend(candidates.iter().zip(&exact_bounds).filter(|(k, &w)| passes(k, w)).map(|(k, _)| *k));
            pruned.sort();
            (active.len(), pruned)
        }
    }
}
