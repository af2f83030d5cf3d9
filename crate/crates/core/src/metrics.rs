//! Utility-maximization loss of an outcome in the true market, and sample
//! accounting between EA and EAP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Outcome, Valuations};

/// How much buyer `i` could gain by switching to its favourite bundle at the
/// outcome's prices. Never negative.
pub fn um_loss_buyer<V: Valuations + ?Sized>(truth: &V, outcome: &Outcome, buyer: usize) -> f64 {
    let best = truth.best_utility(buyer, &outcome.pricing);
    (best - outcome.realized_utility(truth, buyer)).max(0.0)
}

pub fn um_loss_per_buyer<V: Valuations + ?Sized>(truth: &V, outcome: &Outcome) -> Vec<f64> {
    (0..truth.num_buyers()).map(|i| um_loss_buyer(truth, outcome, i)).collect()
}

/// Worst buyer's loss; zero for a market without buyers.
pub fn um_loss<V: Valuations + ?Sized>(truth: &V, outcome: &Outcome) -> f64 {
    um_loss_per_buyer(truth, outcome).into_iter().fold(0.0, f64::max)
}

/// `1 - eap / ea`. Negative when EAP used more samples.
pub fn sample_efficiency(ea_samples: u64, eap_samples: u64) -> Result<f64> {
    if ea_samples == 0 {
        return Err(Error::DivisionByZero("EA sample count is zero"));
    }
    Ok(1.0 - eap_samples as f64 / ea_samples as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub um_loss_per_buyer: Vec<f64>,
    pub um_loss_market: f64,
    pub ea_samples: u64,
    pub eap_samples: u64,
    pub savings_fraction: f64,
    pub eps_target: f64,
    pub eps_achieved: f64,
}

impl EvalReport {
    pub fn new<V: Valuations + ?Sized>(
        truth: &V,
        outcome: &Outcome,
        ea_samples: u64,
        eap_samples: u64,
        eps_target: f64,
        eps_achieved: f64,
    ) -> Result<Self> {
        let per_buyer = um_loss_per_buyer(truth, outcome);
        Ok(EvalReport {
            um_loss_market: per_buyer.iter().copied().fold(0.0, f64::max),
            um_loss_per_buyer: per_buyer,
            ea_samples,
            eap_samples,
            savings_fraction: sample_efficiency(ea_samples, eap_samples)?,
            eps_target,
            eps_achieved,
        })
    }
}
