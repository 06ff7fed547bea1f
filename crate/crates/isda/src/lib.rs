//! Simulator of a slotted random-access network with heterogeneous QoS
//! terminals, plus a distributed cross-entropy learner that trains
//! per-terminal mappings from inner state to contention transmission
//! probability, with pure-CSMA and Whittle-index baselines.

pub mod baselines;
pub mod ce;
pub mod harness;
pub mod mac;
pub mod model;
pub mod num;
pub mod policy;
pub mod rng;

pub use num::Real;

/// Default scalar type for experiments.
pub type Scalar = f64;

pub type Scenario = mac::Scenario<Scalar>;
pub type MacConfig = mac::MacConfig<Scalar>;
pub type EpisodeRecord = mac::EpisodeRecord<Scalar>;
pub type TerminalConfig = model::TerminalConfig<Scalar>;
pub type PolicyParams = policy::PolicyParams<Scalar>;
pub type ParamDistribution = ce::ParamDistribution<Scalar>;
pub type CeHyperparams = ce::CeHyperparams<Scalar>;
