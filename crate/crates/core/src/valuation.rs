//! Unit-demand market generators and the noisy value oracle.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{enumerated_best_utility, Bundle, Market, Pricing, Valuations};

/// Upper end of the value range every generator draws from.
pub const MAX_UNIT_VALUE: f64 = 10.0;

/// Row-major `n x m` matrix of single-good values; `v_i(S) = max_{j in S} v_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitDemandMatrix {
    num_buyers: usize,
    num_goods: usize,
    values: Vec<f64>,
}

impl UnitDemandMatrix {
    pub fn new(num_buyers: usize, num_goods: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_buyers * num_goods {
            return Err(Error::DimensionMismatch { expected: num_buyers * num_goods, found: values.len() });
        }
        if num_goods > 32 {
            return Err(Error::TooManyGoods { goods: num_goods, cap: 32 });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::SchemaViolation(format!("unit-demand value {bad} must be finite and non-negative")));
        }
        Ok(UnitDemandMatrix { num_buyers, num_goods, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_goods = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != num_goods) {
            return Err(Error::DimensionMismatch { expected: num_goods, found: bad.len() });
        }
        UnitDemandMatrix::new(rows.len(), num_goods, rows.concat())
    }

    pub fn get(&self, buyer: usize, good: usize) -> f64 {
        self.values[buyer * self.num_goods + good]
    }

    pub fn row(&self, buyer: usize) -> &[f64] {
        &self.values[buyer * self.num_goods..(buyer + 1) * self.num_goods]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl Valuations for UnitDemandMatrix {
    fn num_buyers(&self) -> usize {
        self.num_buyers
    }

    fn num_goods(&self) -> usize {
        self.num_goods
    }

    fn value(&self, buyer: usize, bundle: Bundle) -> f64 {
        let row = self.row(buyer);
        bundle.goods().map(|j| row[j]).fold(0.0, f64::max)
    }

    fn best_utility(&self, buyer: usize, pricing: &Pricing) -> f64 {
        match pricing {
            // with p >= 0 a bundle never beats its own best single good
            Pricing::Linear(p) => self
                .row(buyer)
                .iter()
                .zip(p)
                .map(|(v, p)| v - p)
                .fold(0.0, f64::max),
            Pricing::PerBuyerBundle(_) => enumerated_best_utility(self, buyer, pricing),
        }
    }
}

/// Expands a unit-demand matrix into a dense market.
pub fn unit_demand_to_market(v: &UnitDemandMatrix) -> Result<Market> {
    Market::from_valuations(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    Uniform,
    PreferredGood,
    PreferredGoodDistinct,
    PreferredSubset,
}

impl Distribution {
    pub const ALL: [Distribution; 4] = [
        Distribution::Uniform,
        Distribution::PreferredGood,
        Distribution::PreferredGoodDistinct,
        Distribution::PreferredSubset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::PreferredGood => "preferred-good",
            Distribution::PreferredGoodDistinct => "preferred-good-distinct",
            Distribution::PreferredSubset => "preferred-subset",
        }
    }

    /// Whether an `n x m` market can be drawn from this distribution.
    pub fn supports(self, num_buyers: usize, num_goods: usize) -> bool {
        self != Distribution::PreferredGoodDistinct || num_buyers <= num_goods
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Distribution::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown distribution '{s}'")))
    }
}

fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    MAX_UNIT_VALUE * rng.gen::<f64>()
}

/// Draws a unit-demand market. Continuous draws are `U[0, 10)`.
///
/// For the preferred-good variants every non-preferred good `k` (one-based)
/// is worth `v_{i,j_i} / 2^k`.
pub fn gen_unit_demand(
    dist: Distribution,
    num_buyers: usize,
    num_goods: usize,
    seed: u64,
) -> Result<UnitDemandMatrix> {
    if num_buyers == 0 || num_goods == 0 {
        return Err(Error::Domain("unit-demand markets need at least one buyer and one good".into()));
    }
    if !dist.supports(num_buyers, num_goods) {
        return Err(Error::InvalidDistinct { buyers: num_buyers, goods: num_goods });
    }
    if num_goods > 32 {
        return Err(Error::TooManyGoods { goods: num_goods, cap: 32 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; num_buyers * num_goods];

    let preferred_rows = |rng: &mut ChaCha8Rng, values: &mut [f64], preferred: &[usize]| {
        for (i, &pref) in preferred.iter().enumerate() {
            let top = unit_draw(rng);
            for k in 0..num_goods {
                values[i * num_goods + k] = if k == pref { top } else { top / 2f64.powi(k as i32 + 1) };
            }
        }
    };

    match dist {
        Distribution::Uniform => values.iter_mut().for_each(|v| *v = unit_draw(&mut rng)),
        Distribution::PreferredGood => {
            let preferred: Vec<usize> = (0..num_buyers).map(|_| rng.gen_range(0..num_goods)).collect();
            preferred_rows(&mut rng, &mut values, &preferred);
        }
        Distribution::PreferredGoodDistinct => {
            let preferred = sample(&mut rng, num_goods, num_buyers).into_vec();
            preferred_rows(&mut rng, &mut values, &preferred);
        }
        Distribution::PreferredSubset => {
            for i in 0..num_buyers {
                let interest = Bundle::from_mask(rng.gen_range(0..(1u64 << num_goods)) as u32);
                for j in 0..num_goods {
                    if interest.contains(j) {
                        values[i * num_goods + j] = unit_draw(&mut rng);
                    }
                }
            }
        }
    }
    UnitDemandMatrix::new(num_buyers, num_goods, values)
}

/// Additive zero-mean noise, uniform on `[-a, a]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub half_width: f64,
}

impl NoiseSpec {
    pub fn uniform(half_width: f64) -> Result<Self> {
        if !half_width.is_finite() || half_width < 0.0 {
            return Err(Error::Domain(format!("noise half-width must be >= 0, got {half_width}")));
        }
        Ok(NoiseSpec { half_width })
    }

    fn offset(self, bits: u64) -> f64 {
        let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.half_width * (2.0 * u - 1.0)
    }
}

/// The only value source a learner touches: `v_i(S) + x`, with a fresh
/// `x ~ U[-a, a]` per query.
///
/// Each buyer-bundle cell owns its own ChaCha stream, positioned by how many
/// draws that cell has already served, so the samples a cell returns do not
/// depend on the order in which cells are queried.
#[derive(Clone, Debug)]
pub struct NoisyOracle<V> {
    base: V,
    noise: NoiseSpec,
    seed: u64,
    value_range: f64,
    counters: HashMap<(usize, Bundle), u64>,
}

impl<V: Valuations> NoisyOracle<V> {
    /// `value_range` is the `c` the learner assumes bounds every sample.
    pub fn new(base: V, noise: NoiseSpec, seed: u64, value_range: f64) -> Result<Self> {
        if !(value_range.is_finite() && value_range > 0.0) {
            return Err(Error::Domain(format!("value range must be positive, got {value_range}")));
        }
        Ok(NoisyOracle { base, noise, seed, value_range, counters: HashMap::new() })
    }

    pub fn num_buyers(&self) -> usize {
        self.base.num_buyers()
    }

    pub fn num_goods(&self) -> usize {
        self.base.num_goods()
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn value_range(&self) -> f64 {
        self.value_range
    }

    /// The noiseless market. Meant for evaluation; learners must not call it.
    pub fn ground_truth(&self) -> &V {
        &self.base
    }

    pub fn draws_taken(&self, buyer: usize, bundle: Bundle) -> u64 {
        self.counters.get(&(buyer, bundle)).copied().unwrap_or(0)
    }

    fn check(&self, buyer: usize, bundle: Bundle) -> Result<()> {
        if buyer >= self.num_buyers() || !bundle.fits(self.num_goods()) {
            return Err(Error::InvalidIndex { buyer, bundle });
        }
        Ok(())
    }

    fn stream(&self, buyer: usize, bundle: Bundle, start: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((buyer as u64) << 32) | bundle.mask() as u64);
        rng.set_word_pos(2 * start as u128);
        rng
    }

    /// The `index`-th sample of cell `(buyer, bundle)`, without advancing anything.
    pub fn draw_at(&self, buyer: usize, bundle: Bundle, index: u64) -> f64 {
        let mut rng = self.stream(buyer, bundle, index);
        self.base.value(buyer, bundle) + self.noise.offset(rng.gen::<u64>())
    }

    /// Sum of samples `start .. start + count` of one cell, without advancing anything.
    pub fn block_sum(&self, buyer: usize, bundle: Bundle, start: u64, count: u64) -> f64 {
        let value = self.base.value(buyer, bundle);
        let mut rng = self.stream(buyer, bundle, start);
        (0..count).map(|_| value + self.noise.offset(rng.gen::<u64>())).sum()
    }

    /// Marks `count` more draws of a cell as consumed.
    pub fn advance(&mut self, buyer: usize, bundle: Bundle, count: u64) {
        *self.counters.entry((buyer, bundle)).or_insert(0) += count;
    }

    /// One fresh noisy sample of `v_i(S)`.
    pub fn sample(&mut self, buyer: usize, bundle: Bundle) -> Result<f64> {
        self.check(buyer, bundle)?;
        let index = self.draws_taken(buyer, bundle);
        self.advance(buyer, bundle, 1);
        Ok(self.draw_at(buyer, bundle, index))
    }

    /// Mean of `count` fresh samples of one cell.
    pub fn sample_mean(&mut self, buyer: usize, bundle: Bundle, count: u64) -> Result<f64> {
        self.check(buyer, bundle)?;
        if count == 0 {
            return Err(Error::Domain("sample count must be positive".into()));
        }
        let start = self.draws_taken(buyer, bundle);
        self.advance(buyer, bundle, count);
        Ok(self.block_sum(buyer, bundle, start, count) / count as f64)
    }
}
