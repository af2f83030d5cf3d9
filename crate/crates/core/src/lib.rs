//! Learning competitive equilibria of combinatorial markets from noisy
//! value queries.

pub mod error;
pub mod experiment;
pub mod io;
pub mod learning;
pub mod market;
pub mod metrics;
pub mod pricing;
pub mod simplex;
pub mod valuation;
pub mod welfare;

pub use error::{Error, Result};
pub use learning::{ea, eap, BoundMode, Budget, EapConfig, LearnResult, MarketStructure, Schedules};
pub use market::{Allocation, Bundle, IndexSet, Market, Outcome, Pricing, Valuations};
pub use valuation::{Distribution, NoiseSpec, NoisyOracle, UnitDemandMatrix};
