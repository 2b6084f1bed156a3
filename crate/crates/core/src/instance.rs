//! Facility-assignment instances, capacity augmentation, and the worst-case
//! instance families on the line.
//!
//! An instance pins agents and facilities to points of a [`Metric`] and gives
//! each facility a positive capacity, with total capacity covering all agents.
//! The [`Family`] generators build the line instances driving the tight
//! lower bounds: a cascade of agent levels at coordinates 1, 2, 4, ..., 2^k
//! with a cheap facility parked at -eps, plus the two-facility instances.

use crate::metric::{Metric, MetricViolation, PointId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A facility-assignment instance. Immutable after construction; all
/// constructors enforce the invariants (nonempty sides, positive capacities,
/// ids in range, total capacity >= number of agents, valid metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub metric: Metric,
    pub agents: Vec<PointId>,
    pub facilities: Vec<PointId>,
    pub capacities: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("agent list is empty")]
    NoAgents,
    #[error("facility list is empty")]
    NoFacilities,
    #[error("facility {facility} has zero capacity")]
    ZeroCapacity { facility: usize },
    #[error("capacities and facilities differ in length ({capacities} vs {facilities})")]
    CapacityCount { capacities: usize, facilities: usize },
    #[error("total capacity {total} cannot host {agents} agents")]
    CapacitySum { total: u64, agents: usize },
    #[error("{side} {index} references point {point} outside the metric ({points} points)")]
    InvalidPoint { side: &'static str, index: usize, point: usize, points: usize },
    #[error("metric violation: {0}")]
    Metric(MetricViolation),
    #[error("augmentation factor must be >= 1")]
    InvalidFactor,
    #[error("capacity arithmetic overflows 64-bit range")]
    CapacityOverflow,
    #[error("family parameter out of range: {0}")]
    BadFamilyParameter(String),
    #[error("malformed instance JSON: {0}")]
    Json(String),
}

impl Instance {
    pub fn new(
        metric: Metric,
        agents: Vec<PointId>,
        facilities: Vec<PointId>,
        capacities: Vec<u64>,
    ) -> Result<Self, InstanceError> {
        if agents.is_empty() {
            return Err(InstanceError::NoAgents);
        }
        if facilities.is_empty() {
            return Err(InstanceError::NoFacilities);
        }
        if capacities.len() != facilities.len() {
            return Err(InstanceError::CapacityCount {
                capacities: capacities.len(),
                facilities: facilities.len(),
            });
        }
        if let Some(j) = capacities.iter().position(|&c| c == 0) {
            return Err(InstanceError::ZeroCapacity { facility: j });
        }
        metric.validate().map_err(InstanceError::Metric)?;
        for (side, list) in [("agent", &agents), ("facility", &facilities)] {
            for (index, p) in list.iter().enumerate() {
                if !metric.contains(*p) {
                    return Err(InstanceError::InvalidPoint {
                        side,
                        index,
                        point: p.0,
                        points: metric.len(),
                    });
                }
            }
        }
        let total = capacities
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .ok_or(InstanceError::CapacityOverflow)?;
        if (total as u128) < agents.len() as u128 {
            return Err(InstanceError::CapacitySum { total, agents: agents.len() });
        }
        Ok(Instance { metric, agents, facilities, capacities })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_facilities(&self) -> usize {
        self.facilities.len()
    }

    /// Distance from agent `i` to facility `j`. Ids are validated at
    /// construction, so this is total.
    #[inline]
    pub fn agent_facility_distance(&self, i: usize, j: usize) -> f64 {
        self.metric.dist_unchecked(self.agents[i], self.facilities[j])
    }

    /// Returns the same instance with every capacity multiplied by `g`.
    /// The original is untouched.
    pub fn augment(&self, g: u64) -> Result<Instance, InstanceError> {
        if g == 0 {
            return Err(InstanceError::InvalidFactor);
        }
        let capacities = self
            .capacities
            .iter()
            .map(|&c| c.checked_mul(g).ok_or(InstanceError::CapacityOverflow))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Instance {
            metric: self.metric.clone(),
            agents: self.agents.clone(),
            facilities: self.facilities.clone(),
            capacities,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    /// Parses and fully validates an instance; schema, capacity-sum, and
    /// metric violations map to distinct [`InstanceError`] variants.
    pub fn from_json(json: &str) -> Result<Instance, InstanceError> {
        let raw: Instance =
            serde_json::from_str(json).map_err(|e| InstanceError::Json(e.to_string()))?;
        Instance::new(raw.metric, raw.agents, raw.facilities, raw.capacities)
    }
}

/// Worst-case instance families.
///
/// `SdLowerBound` and `RsdLowerBound` share the layout: points of interest at
/// -eps, 1, 2, ..., 2^k; level-i agents sit at 2^i, the level-0 facility at
/// -eps, the level-i facility (i >= 1) at 2^i, and the level-k facility has
/// capacity 1. Agents are listed level by level, lowest level first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Levels sized l_i = c_i = g^(k-i-1); drives the serial-dictatorship
    /// lower bounds for every augmentation factor.
    SdLowerBound { g: u64, k: u32, eps: f64 },
    /// Levels sized l_0 = 1, l_i = c_i = 2i+1 (so n = k^2); drives the
    /// lower bound on the expected cost of random serial dictatorship.
    RsdLowerBound { k: u32, eps: f64 },
    /// Two unit facilities at 0 and 2 with agents at 1-delta and 0; the SD
    /// ratio approaches 3 as delta shrinks.
    TwoFacilitySd { delta: f64 },
    /// Facility of capacity n-1 at 0 hosting n-1 agents, a unit facility at
    /// 2+eps, and one agent at 1.
    TwoFacilityAnonymous { n: usize, eps: f64 },
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::SdLowerBound { g, k, eps } => write!(f, "sd-lb(g={g},k={k},eps={eps})"),
            Family::RsdLowerBound { k, eps } => write!(f, "rsd-lb(k={k},eps={eps})"),
            Family::TwoFacilitySd { delta } => write!(f, "two-sd(delta={delta})"),
            Family::TwoFacilityAnonymous { n, eps } => write!(f, "two-anon(n={n},eps={eps})"),
        }
    }
}

impl Family {
    fn check(&self) -> Result<(), InstanceError> {
        let bad = |msg: String| Err(InstanceError::BadFamilyParameter(msg));
        match *self {
            Family::SdLowerBound { g, k, eps } => {
                if g < 1 {
                    return bad(format!("g = {g}, need g >= 1"));
                }
                if k < 1 {
                    return bad(format!("k = {k}, need k >= 1"));
                }
                if !(eps > 0.0) || !eps.is_finite() {
                    return bad(format!("eps = {eps}, need eps > 0"));
                }
            }
            Family::RsdLowerBound { k, eps } => {
                if k < 1 {
                    return bad(format!("k = {k}, need k >= 1"));
                }
                if !(eps > 0.0) || !eps.is_finite() {
                    return bad(format!("eps = {eps}, need eps > 0"));
                }
            }
            Family::TwoFacilitySd { delta } => {
                if !(delta > 0.0) || !delta.is_finite() {
                    return bad(format!("delta = {delta}, need delta > 0"));
                }
            }
            Family::TwoFacilityAnonymous { n, eps } => {
                if n < 2 {
                    return bad(format!("n = {n}, need n >= 2"));
                }
                if !(eps > 0.0) || !eps.is_finite() {
                    return bad(format!("eps = {eps}, need eps > 0"));
                }
            }
        }
        Ok(())
    }

    /// Per-level agent counts for the leveled families (empty otherwise).
    pub fn level_sizes(&self) -> Result<Vec<u64>, InstanceError> {
        self.check()?;
        match *self {
            Family::SdLowerBound { g, k, .. } => (0..k)
                .map(|i| {
                    g.checked_pow(k - i - 1).ok_or(InstanceError::CapacityOverflow)
                })
                .collect(),
            Family::RsdLowerBound { k, .. } => {
                Ok((0..k as u64).map(|i| if i == 0 { 1 } else { 2 * i + 1 }).collect())
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Builds the instance. Leveled families reject parameters whose level
    /// sizes or total agent count overflow 64-bit capacities.
    pub fn generate(&self) -> Result<Instance, InstanceError> {
        self.check()?;
        match *self {
            Family::SdLowerBound { k, eps, .. } | Family::RsdLowerBound { k, eps } => {
                let sizes = self.level_sizes()?;
                let n = sizes
                    .iter()
                    .try_fold(0u64, |acc, &s| acc.checked_add(s))
                    .ok_or(InstanceError::CapacityOverflow)?;
                usize::try_from(n).map_err(|_| InstanceError::CapacityOverflow)?;
                // Points of interest: index 0 is -eps, index i+1 is 2^i.
                let mut coords = vec![-eps];
                for i in 0..=k {
                    coords.push((2.0f64).powi(i as i32));
                }
                let metric = Metric::line(coords);
                let mut agents = Vec::with_capacity(n as usize);
                for (i, &size) in sizes.iter().enumerate() {
                    for _ in 0..size {
                        agents.push(PointId(i + 1));
                    }
                }
                let mut facilities = vec![PointId(0)];
                let mut capacities = vec![sizes[0]];
                for i in 1..k as usize {
                    facilities.push(PointId(i + 1));
                    capacities.push(sizes[i]);
                }
                facilities.push(PointId(k as usize + 1));
                capacities.push(1);
                Instance::new(metric, agents, facilities, capacities)
            }
            Family::TwoFacilitySd { delta } => {
                let metric = Metric::line(vec![0.0, 2.0, 1.0 - delta]);
                Instance::new(
                    metric,
                    vec![PointId(2), PointId(0)],
                    vec![PointId(0), PointId(1)],
                    vec![1, 1],
                )
            }
            Family::TwoFacilityAnonymous { n, eps } => {
                let metric = Metric::line(vec![0.0, 2.0 + eps, 1.0]);
                let mut agents = vec![PointId(0); n - 1];
                agents.push(PointId(2));
                Instance::new(
                    metric,
                    agents,
                    vec![PointId(0), PointId(1)],
                    vec![(n - 1) as u64, 1],
                )
            }
        }
    }
}
