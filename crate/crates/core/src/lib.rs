//! Simulation of respondent-driven sampling (RDS) and its randomized
//! variant (RRDS) on synthetic social networks, with degree-weighted
//! estimation, tree-bootstrap intervals and evaluation metrics.

pub mod error;
pub mod estimators;
pub mod io;
pub mod metrics;
pub mod network;
pub mod recruitment;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use network::{Gender, Individual, NodeId, PopulationSpec, SocialGraph};
pub use recruitment::{Method, RecruitConfig, Recruitment, RecruitmentForest, SeedSpec};
pub use scenario::ScenarioConfig;
