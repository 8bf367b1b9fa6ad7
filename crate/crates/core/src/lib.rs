//! Bayes estimation of multivariate hypergeometric category counts when a
//! second survey reports only subgroup totals.
//!
//! [`model`] holds the two-stage sampling law, [`estimators`] the two Bayes
//! rules and their posterior, [`risk`] exact, Monte Carlo and closed-form
//! squared-error risks, and [`dominance`] the frontier scans built on them.

pub mod combin;
pub mod dominance;
pub mod error;
pub mod estimators;
pub mod model;
pub mod risk;
pub mod summation;

pub use dominance::{check_dominance, scan_frontier, DominanceVerdict, FrontierScan};
pub use error::{Error, Result};
pub use estimators::{bayes_full, bayes_xonly, Estimate, PosteriorFactorization};
pub use model::{
    CountGrid, Design, LatentSecondStage, Observation, PopulationMatrix, PriorWeights,
};
pub use risk::{RiskMethod, RiskReport, Rule};
