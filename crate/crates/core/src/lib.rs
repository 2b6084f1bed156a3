//! Laboratory for truthful facility assignment under resource augmentation.
//!
//! Agents with preferred points on a metric space are matched to capacitated
//! facilities. The crate implements:
//!
//! - serial dictatorship (SD) and random serial dictatorship (RSD), run
//!   against a g-augmented instance (every capacity multiplied by g) while
//!   the optimal baseline keeps the original capacities;
//! - an exact minimum social-cost matcher plus a brute-force oracle;
//! - the directed g-tree reduction of an (instance, optimal, SD) triplet and
//!   path-covering certificates that bound the SD/OPT cost ratio;
//! - generators for the worst-case line instances behind the tight bounds.
//!
//! See the `pipeline` module for the end-to-end verification driver used by
//! the CLI and the Python bindings.

pub mod covering;
pub mod gtree;
pub mod instance;
pub mod matching;
pub mod mechanisms;
pub mod metric;
pub mod pipeline;
pub mod testkit;

pub use instance::{Family, Instance, InstanceError};
pub use matching::{brute_force_optimal, optimal, social_cost, Assignment, MatchingError};
pub use mechanisms::{
    chain_of_levels_probability, check_sd_truthful, online_greedy, rsd_exact, rsd_sample, sd,
    sd_augmented_ratio, AgentOrdering, MechanismError, RatioReport,
};
pub use metric::{Metric, MetricError, MetricViolation, PointId};
