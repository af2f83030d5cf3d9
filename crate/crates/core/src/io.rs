//! File formats: market and outcome JSON, unit-demand CSV.
//!
//! Bundles are bitmask integers with good `j` (one-based) at bit `j - 1`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{EstimateTable, Status};
use crate::market::{
    nonempty_bundles, Allocation, Bundle, BundlePrices, Market, Outcome, Pricing, Valuations, MAX_GOODS,
};
use crate::valuation::UnitDemandMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueRecord {
    pub buyer: usize,
    pub bundle: u32,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketFile {
    pub goods: usize,
    pub buyers: usize,
    pub values: Vec<ValueRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceRecord {
    pub buyer: usize,
    pub bundle: u32,
    pub price: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PricesFile {
    Linear(Vec<f64>),
    Bundle(Vec<PriceRecord>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeFile {
    pub allocation: Vec<u32>,
    pub prices: PricesFile,
}

impl MarketFile {
    pub fn from_market(market: &Market) -> Self {
        let values = (0..market.num_buyers())
            .flat_map(|i| {
                nonempty_bundles(market.num_goods()).filter_map(move |s| {
                    let value = market.value(i, s);
                    (value != 0.0).then_some(ValueRecord { buyer: i, bundle: s.mask(), value })
                })
            })
            .collect();
        MarketFile { goods: market.num_goods(), buyers: market.num_buyers(), values }
    }

    pub fn into_market(self) -> Result<Market> {
        if self.goods > MAX_GOODS {
            return Err(Error::TooManyGoods { goods: self.goods, cap: MAX_GOODS });
        }
        let mut market = Market::zeros(self.buyers, self.goods)?;
        let mut seen = std::collections::HashSet::new();
        for (k, rec) in self.values.iter().enumerate() {
            let bundle = Bundle::from_mask(rec.bundle);
            if rec.buyer >= self.buyers || !bundle.fits(self.goods) {
                return Err(Error::SchemaViolation(format!(
                    "record {k} {rec:?}: index out of range for {} buyers, {} goods",
                    self.buyers, self.goods
                )));
            }
            if !seen.insert((rec.buyer, rec.bundle)) {
                return Err(Error::SchemaViolation(format!("record {k} {rec:?}: duplicate buyer-bundle pair")));
            }
            market
                .set_value(rec.buyer, bundle, rec.value)
                .map_err(|e| Error::SchemaViolation(format!("record {k} {rec:?}: {e}")))?;
        }
        Ok(market)
    }
}

pub fn parse_market(json: &str) -> Result<Market> {
    let file: MarketFile = serde_json::from_str(json)?;
    file.into_market()
}

pub fn market_to_json(market: &Market) -> Result<String> {
    Ok(serde_json::to_string_pretty(&MarketFile::from_market(market))?)
}

pub fn load_market(path: impl AsRef<Path>) -> Result<Market> {
    parse_market(&fs::read_to_string(path)?)
}

pub fn save_market(market: &Market, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, market_to_json(market)?)?;
    Ok(())
}

impl OutcomeFile {
    pub fn from_outcome(outcome: &Outcome) -> Self {
        let allocation = outcome.allocation.bundles().iter().map(|s| s.mask()).collect();
        let prices = match &outcome.pricing {
            Pricing::Linear(p) => PricesFile::Linear(p.clone()),
            Pricing::PerBuyerBundle(t) => PricesFile::Bundle(
                (0..t.num_buyers())
                    .flat_map(|i| {
                        nonempty_bundles(t.num_goods()).filter_map(move |s| {
                            let price = t.get(i, s);
                            (price != 0.0).then_some(PriceRecord { buyer: i, bundle: s.mask(), price })
                        })
                    })
                    .collect(),
            ),
        };
        OutcomeFile { allocation, prices }
    }

    /// Resolves the outcome against a market's dimensions.
    pub fn into_outcome(self, num_buyers: usize, num_goods: usize) -> Result<Outcome> {
        let allocation = Allocation::new(self.allocation.into_iter().map(Bundle::from_mask).collect());
        allocation.validate(num_buyers, num_goods)?;
        let pricing = match self.prices {
            PricesFile::Linear(p) => Pricing::Linear(p),
            PricesFile::Bundle(records) => {
                let mut table = BundlePrices::zeros(num_buyers, num_goods)?;
                for (k, rec) in records.iter().enumerate() {
                    table
                        .set(rec.buyer, Bundle::from_mask(rec.bundle), rec.price)
                        .map_err(|e| Error::SchemaViolation(format!("price record {k} {rec:?}: {e}")))?;
                }
                Pricing::PerBuyerBundle(table)
            }
        };
        pricing.validate(num_buyers, num_goods)?;
        Outcome::new(allocation, pricing)
    }
}

pub fn load_outcome(path: impl AsRef<Path>, num_buyers: usize, num_goods: usize) -> Result<Outcome> {
    let file: OutcomeFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.into_outcome(num_buyers, num_goods)
}

pub fn save_outcome(outcome: &Outcome, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&OutcomeFile::from_outcome(outcome))?)?;
    Ok(())
}

/// Reads `n` rows of `m` comma-separated values, no header.
pub fn parse_unit_demand_csv(text: &str) -> Result<UnitDemandMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {r}: '{field}': {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    UnitDemandMatrix::from_rows(&rows)
}

pub fn load_unit_demand_csv(path: impl AsRef<Path>) -> Result<UnitDemandMatrix> {
    parse_unit_demand_csv(&fs::read_to_string(path)?)
}

pub fn unit_demand_to_csv(v: &UnitDemandMatrix) -> String {
    let mut out = String::new();
    for i in 0..v.num_buyers() {
        let row: Vec<String> = v.row(i).iter().map(|x| x.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn save_unit_demand_csv(v: &UnitDemandMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, unit_demand_to_csv(v))?;
    Ok(())
}

#[derive(Serialize)]
struct EstimateRow {
    buyer: usize,
    bundle: u32,
    mean: f64,
    radius: f64,
    status: Status,
    samples: u64,
}

/// One CSV row per pair: buyer, bundle bitmask, mean, radius, status, samples.
pub fn estimates_to_csv(table: &EstimateTable) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for ((buyer, s), e) in table.iter() {
        writer.serialize(EstimateRow {
            buyer,
            bundle: s.mask(),
            mean: e.mean,
            radius: e.radius,
            status: e.status,
            samples: e.samples,
        })?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}
