//! Serial dictatorship, its randomized counterpart, ratio reports,
//! truthfulness checks, and the online-transportation view.
//!
//! SD processes agents in a fixed order; each takes the nearest facility with
//! residual capacity, ties broken by lowest facility index. RSD averages SD
//! over orderings: exactly by enumerating all n! permutations (guarded), or
//! by Monte Carlo with a counter-based RNG stream per sample.

use crate::instance::{Instance, InstanceError};
use crate::matching::{self, Assignment, MatchingError};
use crate::metric::{MetricError, PointId};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Permutation of the agent indices 0..n-1 fixing who picks first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentOrdering {
    perm: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("ordering is not a permutation of 0..{n}: {reason}")]
    BadOrdering { n: usize, reason: String },
    #[error("ordering covers {ordering} agents, instance has {agents}")]
    OrderingMismatch { ordering: usize, agents: usize },
    #[error("agent index {agent} out of range ({agents} agents)")]
    UnknownAgent { agent: usize, agents: usize },
    #[error("{n} agents exceed the exact-enumeration guard of {guard}; use rsd_sample or set MECHLAB_GUARD_N")]
    EnumerationGuard { n: usize, guard: usize },
    #[error("sample count must be >= 1")]
    NoSamples,
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl AgentOrdering {
    pub fn new(perm: Vec<usize>) -> Result<Self, MechanismError> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &i in &perm {
            if i >= n {
                return Err(MechanismError::BadOrdering {
                    n,
                    reason: format!("index {i} out of range"),
                });
            }
            if seen[i] {
                return Err(MechanismError::BadOrdering {
                    n,
                    reason: format!("index {i} repeated"),
                });
            }
            seen[i] = true;
        }
        Ok(AgentOrdering { perm })
    }

    /// The instance order 0, 1, ..., n-1.
    pub fn identity(n: usize) -> Self {
        AgentOrdering { perm: (0..n).collect() }
    }

    pub fn reversed(&self) -> Self {
        let mut perm = self.perm.clone();
        perm.reverse();
        AgentOrdering { perm }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

/// Outcome of one mechanism-versus-optimum comparison.
///
/// `ratio = sc_mech / sc_opt` when the optimum is positive; a zero-cost
/// optimum flags the report as degenerate instead of dividing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub instance: String,
    pub mechanism: String,
    pub g: u64,
    pub sc_mech: f64,
    pub sc_opt: f64,
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

impl RatioReport {
    fn build(instance: String, mechanism: String, g: u64, sc_mech: f64, sc_opt: f64) -> Self {
        let degenerate = sc_opt == 0.0;
        RatioReport {
            instance,
            mechanism,
            g,
            sc_mech,
            sc_opt,
            ratio: (!degenerate).then(|| sc_mech / sc_opt),
            degenerate,
        }
    }
}

fn check_ordering(inst: &Instance, order: &AgentOrdering) -> Result<(), MechanismError> {
    if order.len() != inst.n_agents() {
        return Err(MechanismError::OrderingMismatch {
            ordering: order.len(),
            agents: inst.n_agents(),
        });
    }
    Ok(())
}

/// Serial dictatorship: agents pick in `order`; each takes the nearest
/// facility with residual capacity, ties to the lowest facility index.
pub fn sd(inst: &Instance, order: &AgentOrdering) -> Result<Assignment, MechanismError> {
    check_ordering(inst, order)?;
    let mut residual = inst.capacities.clone();
    let mut assigned = vec![usize::MAX; inst.n_agents()];
    for &agent in order.as_slice() {
        let mut choice = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..inst.n_facilities() {
            if residual[j] == 0 {
                continue;
            }
            let d = inst.agent_facility_distance(agent, j);
            if d < best {
                best = d;
                choice = j;
            }
        }
        debug_assert!(choice != usize::MAX, "feasible by instance invariant");
        residual[choice] -= 1;
        assigned[agent] = choice;
    }
    Ok(Assignment::new(inst, assigned)?)
}

/// Runs SD on the g-augmented instance and compares against the optimum of
/// the original: sc_mech = SC_SD(I_g), sc_opt = SC_OPT(I).
pub fn sd_augmented_ratio(
    inst: &Instance,
    order: &AgentOrdering,
    g: u64,
) -> Result<RatioReport, MechanismError> {
    check_ordering(inst, order)?;
    let augmented = inst.augment(g)?;
    let mech = sd(&augmented, order)?;
    let opt = matching::optimal(inst)?;
    Ok(RatioReport::build(String::new(), "sd".into(), g, mech.cost, opt.cost))
}

/// Appendix view: SD on the augmented instance with `arrival` as the online
/// arrival order. Alias of `sd(augment(inst, g), arrival)`.
pub fn online_greedy(
    inst: &Instance,
    arrival: &AgentOrdering,
    g: u64,
) -> Result<Assignment, MechanismError> {
    check_ordering(inst, arrival)?;
    let augmented = inst.augment(g)?;
    Ok(sd(&augmented, arrival)?)
}

/// Default bound on exact n! enumeration; override with MECHLAB_GUARD_N.
pub const DEFAULT_ENUMERATION_GUARD: usize = 9;

/// Current enumeration guard (env override included).
pub fn enumeration_guard() -> usize {
    std::env::var("MECHLAB_GUARD_N")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_ENUMERATION_GUARD)
}

/// Exact expected SD cost over all n! orderings on the g-augmented instance.
/// Summation is in lexicographic permutation order, so the result is
/// deterministic up to floating addition.
pub fn rsd_exact(inst: &Instance, g: u64) -> Result<f64, MechanismError> {
    let n = inst.n_agents();
    let guard = enumeration_guard();
    if n > guard {
        return Err(MechanismError::EnumerationGuard { n, guard });
    }
    let augmented = inst.augment(g)?;
    let mut total = 0.0f64;
    let mut count = 0u64;
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let order = AgentOrdering { perm: perm.clone() };
        total += sd(&augmented, &order)?.cost;
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(total / count as f64)
}

/// Advances `perm` to the next lexicographic permutation; false at the last.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Monte Carlo estimate of the RSD expectation: mean and standard error over
/// `samples` random orderings. Sample s draws from ChaCha8 stream s of the
/// given seed, so the estimate is bitwise reproducible and independent of
/// evaluation order.
pub fn rsd_sample(
    inst: &Instance,
    g: u64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64), MechanismError> {
    if samples == 0 {
        return Err(MechanismError::NoSamples);
    }
    let augmented = inst.augment(g)?;
    let n = inst.n_agents();
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for s in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let cost = sd(&augmented, &AgentOrdering { perm })?.cost;
        sum += cost;
        sum_sq += cost * cost;
    }
    let mean = sum / samples as f64;
    let stderr = if samples < 2 {
        0.0
    } else {
        let var = ((sum_sq - sum * sum / samples as f64) / (samples - 1) as f64).max(0.0);
        (var / samples as f64).sqrt()
    };
    Ok((mean, stderr))
}

/// A misreport that lowered some agent's true cost under the mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthfulnessCounterexample {
    pub agent: usize,
    pub misreport: PointId,
    pub truthful_distance: f64,
    pub misreport_distance: f64,
}

/// Reruns the mechanism with `agent`'s reported point swapped for each
/// misreport and checks the agent's true distance never improves. Generic so
/// tests can probe deliberately broken mechanisms.
pub fn check_truthful_with<F>(
    mechanism: F,
    inst: &Instance,
    order: &AgentOrdering,
    agent: usize,
    misreports: &[PointId],
) -> Result<Option<TruthfulnessCounterexample>, MechanismError>
where
    F: Fn(&Instance, &AgentOrdering) -> Result<Assignment, MechanismError>,
{
    check_ordering(inst, order)?;
    if agent >= inst.n_agents() {
        return Err(MechanismError::UnknownAgent { agent, agents: inst.n_agents() });
    }
    let truthful = mechanism(inst, order)?;
    let truthful_distance = inst.agent_facility_distance(agent, truthful.assigned[agent]);
    for &report in misreports {
        if !inst.metric.contains(report) {
            return Err(MechanismError::Metric(MetricError::InvalidPoint {
                point: report.0,
                points: inst.metric.len(),
            }));
        }
        let mut reported = inst.clone();
        reported.agents[agent] = report;
        let outcome = mechanism(&reported, order)?;
        // True distance: the agent still lives at its truthful point.
        let misreport_distance =
            inst.agent_facility_distance(agent, outcome.assigned[agent]);
        if misreport_distance < truthful_distance {
            return Ok(Some(TruthfulnessCounterexample {
                agent,
                misreport: report,
                truthful_distance,
                misreport_distance,
            }));
        }
    }
    Ok(None)
}

/// Truthfulness check for SD under the fixed lowest-index tie-break.
pub fn check_sd_truthful(
    inst: &Instance,
    order: &AgentOrdering,
    agent: usize,
    misreports: &[PointId],
) -> Result<Option<TruthfulnessCounterexample>, MechanismError> {
    check_truthful_with(sd, inst, order, agent, misreports)
}

/// Probability that a uniformly random ordering has a chain of levels:
/// for each level i >= 1, some level-i agent appears after all agents of
/// levels 0..i-1. Evaluates prod_{i=1}^{k-1} (1 - n_{i-1}/n_i) with n_i the
/// prefix sums of `level_sizes`, as an exact rational.
pub fn chain_of_levels_probability(level_sizes: &[u64]) -> Result<BigRational, MechanismError> {
    if level_sizes.is_empty() || level_sizes.iter().any(|&s| s == 0) {
        return Err(MechanismError::BadOrdering {
            n: level_sizes.len(),
            reason: "level sizes must be positive and nonempty".into(),
        });
    }
    let mut prob = BigRational::one();
    let mut prefix = BigInt::from(level_sizes[0]);
    for &size in &level_sizes[1..] {
        let next = &prefix + BigInt::from(size);
        prob *= BigRational::new(&next - &prefix, next.clone());
        prefix = next;
    }
    Ok(prob)
}

/// Whether `order` has a chain of levels for agents partitioned by
/// `level_sizes` in instance order (level 0 first).
pub fn has_chain_of_levels(order: &AgentOrdering, level_sizes: &[u64]) -> bool {
    let mut level_of = Vec::new();
    for (level, &size) in level_sizes.iter().enumerate() {
        for _ in 0..size {
            level_of.push(level);
        }
    }
    assert_eq!(level_of.len(), order.len(), "level sizes must cover the ordering");
    let k = level_sizes.len();
    // last_pos[l] = position of the last agent of level l in the ordering.
    let mut last_pos = vec![0usize; k];
    for (pos, &agent) in order.as_slice().iter().enumerate() {
        last_pos[level_of[agent]] = pos;
    }
    // Some level-i agent after all of levels 0..i-1 iff the last level-i
    // agent comes after every lower level's last agent.
    let mut max_below = last_pos[0];
    for i in 1..k {
        if last_pos[i] < max_below {
            return false;
        }
        max_below = max_below.max(last_pos[i]);
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Family;
    use crate::metric::Metric;
    use num_traits::ToPrimitive;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn ratio(level: &RatioReport) -> f64 {
        level.ratio.expect("non-degenerate")
    }

    #[test]
    fn ordering_validation() {
        assert!(AgentOrdering::new(vec![2, 0, 1]).is_ok());
        assert!(AgentOrdering::new(vec![0, 0]).is_err());
        assert!(AgentOrdering::new(vec![0, 2]).is_err());
    }

    #[test]
    fn sd_on_sd_lower_bound_level_order() {
        let inst = Family::SdLowerBound { g: 1, k: 2, eps: 0.1 }.generate().unwrap();
        let run = sd(&inst, &AgentOrdering::identity(2)).unwrap();
        assert!((run.cost - 3.0).abs() < 1e-12);
        // Agent at 1 -> facility at 2, agent at 2 -> facility at 4.
        assert_eq!(run.assigned, vec![1, 2]);
    }

    #[test]
    fn sd_is_order_dependent() {
        let inst = Family::SdLowerBound { g: 1, k: 2, eps: 0.1 }.generate().unwrap();
        let run = sd(&inst, &AgentOrdering::identity(2).reversed()).unwrap();
        assert!((run.cost - 1.1).abs() < 1e-12);
    }

    #[test]
    fn sd_costs_zero_on_distinct_empty_facilities() {
        let inst = Instance::new(
            Metric::line(vec![0.0, 5.0]),
            vec![PointId(0), PointId(1)],
            vec![PointId(0), PointId(1)],
            vec![1, 1],
        )
        .unwrap();
        for order in [AgentOrdering::identity(2), AgentOrdering::identity(2).reversed()] {
            assert_eq!(sd(&inst, &order).unwrap().cost, 0.0);
        }
    }

    #[test]
    fn sd_augmented_ratio_on_g2_family() {
        let inst = Family::SdLowerBound { g: 2, k: 2, eps: 0.1 }.generate().unwrap();
        let report = sd_augmented_ratio(&inst, &AgentOrdering::identity(3), 2).unwrap();
        assert!((report.sc_mech - 4.0).abs() < 1e-12);
        assert!((report.sc_opt - 2.2).abs() < 1e-12);
        assert!((ratio(&report) - 4.0 / 2.2).abs() < 1e-12);
    }

    #[test]
    fn sd_augmented_ratio_on_two_facility() {
        let inst = Family::TwoFacilitySd { delta: 0.1 }.generate().unwrap();
        let report = sd_augmented_ratio(&inst, &AgentOrdering::identity(2), 1).unwrap();
        assert!((ratio(&report) - 2.9 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn huge_augmentation_makes_sd_pointwise_optimal() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let inst = crate::testkit::random_line_instance(&mut rng, 6, 3);
            let order = crate::testkit::random_ordering(&mut rng, inst.n_agents());
            let report = sd_augmented_ratio(&inst, &order, 64).unwrap();
            let nearest_sum: f64 = (0..inst.n_agents())
                .map(|i| {
                    (0..inst.n_facilities())
                        .map(|j| inst.agent_facility_distance(i, j))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            assert!((report.sc_mech - nearest_sum).abs() < 1e-9);
            if !report.degenerate {
                assert!(ratio(&report) <= 1.0 + 1e-9);
            } else {
                assert_eq!(report.sc_mech, 0.0);
            }
        }
    }

    #[test]
    fn online_greedy_aliases_sd_on_augmented() {
        let inst = Family::SdLowerBound { g: 2, k: 3, eps: 0.01 }.generate().unwrap();
        let order = AgentOrdering::identity(inst.n_agents());
        let direct = sd(&inst.augment(2).unwrap(), &order).unwrap();
        assert_eq!(online_greedy(&inst, &order, 2).unwrap(), direct);
    }

    #[test]
    fn rsd_exact_single_agent_is_optimal() {
        let inst = Instance::new(
            Metric::line(vec![1.0, 0.0, 3.0]),
            vec![PointId(0)],
            vec![PointId(1), PointId(2)],
            vec![1, 1],
        )
        .unwrap();
        assert_eq!(rsd_exact(&inst, 1).unwrap(), 1.0);
    }

    #[test]
    fn rsd_exact_on_rsd_lower_bound_k2() {
        // Hand enumeration: the lone level-0 agent pays 1 unless it comes
        // last (then 1+eps via the facility at -eps); whenever it is not
        // last, one level-1 agent overflows to the level-2 facility and
        // pays 2: E = (3/4)(1+2) + (1/4)(1+eps).
        let eps = 1e-6;
        let inst = Family::RsdLowerBound { k: 2, eps }.generate().unwrap();
        let expect = 0.75 * 3.0 + 0.25 * (1.0 + eps);
        let exact = rsd_exact(&inst, 1).unwrap();
        assert!((exact - expect).abs() < 1e-12, "{exact} vs {expect}");
        assert!(exact >= 4.0 / 3.0);
    }

    #[test]
    fn rsd_exact_guard_triggers() {
        let inst = Instance::new(
            Metric::line(vec![0.0]),
            vec![PointId(0); 10],
            vec![PointId(0)],
            vec![10],
        )
        .unwrap();
        assert!(matches!(
            rsd_exact(&inst, 1),
            Err(MechanismError::EnumerationGuard { n: 10, guard: 9 })
        ));
    }

    #[test]
    fn rsd_exact_bounded_by_n_times_optimal() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..60 {
            let inst = crate::testkit::random_line_instance(&mut rng, 6, 3);
            let opt = matching::optimal(&inst).unwrap().cost;
            let exact = rsd_exact(&inst, 1).unwrap();
            assert!(exact <= inst.n_agents() as f64 * opt + 1e-9);
        }
    }

    #[test]
    fn rsd_sample_is_deterministic_and_consistent() {
        let inst = Family::RsdLowerBound { k: 2, eps: 0.01 }.generate().unwrap();
        let a = rsd_sample(&inst, 1, 4000, 42).unwrap();
        let b = rsd_sample(&inst, 1, 4000, 42).unwrap();
        assert_eq!(a, b, "same seed twice is bitwise identical");
        let exact = rsd_exact(&inst, 1).unwrap();
        let (mean, stderr) = a;
        assert!((mean - exact).abs() <= 3.0 * stderr, "mean {mean} vs exact {exact} (se {stderr})");

        let single = Instance::new(
            Metric::line(vec![0.0, 2.0]),
            vec![PointId(0)],
            vec![PointId(1)],
            vec![1],
        )
        .unwrap();
        assert_eq!(rsd_sample(&single, 1, 17, 7).unwrap(), (2.0, 0.0));
    }

    #[test]
    fn sd_is_truthful_on_lower_bound_family() {
        let inst = Family::SdLowerBound { g: 1, k: 2, eps: 0.1 }.generate().unwrap();
        let order = AgentOrdering::identity(inst.n_agents());
        let misreports: Vec<PointId> = inst.facilities.clone();
        for agent in 0..inst.n_agents() {
            let result = check_sd_truthful(&inst, &order, agent, &misreports).unwrap();
            assert_eq!(result, None, "agent {agent}");
        }
    }

    #[test]
    fn truthful_check_accepts_identity_report() {
        let inst = Family::TwoFacilitySd { delta: 0.25 }.generate().unwrap();
        let order = AgentOrdering::identity(2);
        for agent in 0..2 {
            let own = vec![inst.agents[agent]];
            assert_eq!(check_sd_truthful(&inst, &order, agent, &own).unwrap(), None);
        }
    }

    #[test]
    fn broken_mechanism_yields_counterexample() {
        // Negative control: assign each agent (in order) to the farthest
        // facility with residual capacity.
        fn farthest(inst: &Instance, order: &AgentOrdering) -> Result<Assignment, MechanismError> {
            let mut residual = inst.capacities.clone();
            let mut assigned = vec![usize::MAX; inst.n_agents()];
            for &agent in order.as_slice() {
                let mut choice = usize::MAX;
                let mut worst = -1.0;
                for j in 0..inst.n_facilities() {
                    if residual[j] == 0 {
                        continue;
                    }
                    let d = inst.agent_facility_distance(agent, j);
                    if d > worst {
                        worst = d;
                        choice = j;
                    }
                }
                residual[choice] -= 1;
                assigned[agent] = choice;
            }
            Ok(Assignment::new(inst, assigned)?)
        }

        let inst = Family::TwoFacilitySd { delta: 0.1 }.generate().unwrap();
        let order = AgentOrdering::identity(2);
        let misreports: Vec<PointId> = inst.facilities.clone();
        let found = (0..inst.n_agents()).any(|agent| {
            check_truthful_with(farthest, &inst, &order, agent, &misreports)
                .unwrap()
                .is_some()
        });
        assert!(found, "farthest-assignment mechanism should be manipulable");
    }

    #[test]
    fn chain_probability_formula() {
        let r = |num: i64, den: i64| BigRational::new(num.into(), den.into());
        // Paper k=2 profile (prefix sums 1, 3).
        assert_eq!(chain_of_levels_probability(&[1, 2]).unwrap(), r(2, 3));
        assert_eq!(chain_of_levels_probability(&[1, 3]).unwrap(), r(3, 4));
        // k=3 generator profile: n = (1, 4, 9).
        assert_eq!(chain_of_levels_probability(&[1, 3, 5]).unwrap(), r(5, 12));
        assert_eq!(chain_of_levels_probability(&[7]).unwrap(), r(1, 1));
        assert!(chain_of_levels_probability(&[]).is_err());
        assert!(chain_of_levels_probability(&[1, 0]).is_err());
    }

    #[test]
    fn chain_probability_matches_exhaustive_enumeration() {
        for sizes in [vec![1u64, 3], vec![1, 2], vec![2, 2, 2]] {
            let n: u64 = sizes.iter().sum();
            let mut perm: Vec<usize> = (0..n as usize).collect();
            let mut chains = 0u64;
            let mut total = 0u64;
            loop {
                let order = AgentOrdering::new(perm.clone()).unwrap();
                if has_chain_of_levels(&order, &sizes) {
                    chains += 1;
                }
                total += 1;
                if !next_permutation(&mut perm) {
                    break;
                }
            }
            let empirical = BigRational::new(chains.into(), total.into());
            assert_eq!(empirical, chain_of_levels_probability(&sizes).unwrap(), "{sizes:?}");
        }
    }

    #[test]
    fn chain_probability_is_a_probability() {
        let p = chain_of_levels_probability(&[1, 2, 6]).unwrap();
        let v = p.to_f64().unwrap();
        assert!(v > 0.0 && v <= 1.0);
        assert_eq!(p, BigRational::new(4.into(), 9.into()));
    }
}
