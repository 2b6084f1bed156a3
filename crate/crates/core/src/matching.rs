//! Minimum social-cost assignment baseline and social-cost accounting.
//!
//! `optimal` runs successive shortest augmenting paths with potentials on the
//! agent-group / facility bipartite graph (agents sharing a preferred point
//! are interchangeable, so they are pooled into supply groups; facility
//! capacities become demand bounds). `brute_force_optimal` enumerates every
//! capacity-respecting assignment and is the independent oracle for the
//! matcher at desk scale.

use crate::instance::Instance;
use crate::metric::PointId;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// An agent-to-facility map respecting capacities, with its social cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Facility index per agent.
    pub assigned: Vec<usize>,
    /// Sum of agent-facility distances, cached at construction.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchingError {
    #[error("assignment covers {assigned} agents, instance has {agents}")]
    SizeMismatch { assigned: usize, agents: usize },
    #[error("agent {agent} assigned to facility {facility}, instance has {facilities}")]
    UnknownFacility { agent: usize, facility: usize, facilities: usize },
    #[error("facility {facility} hosts {load} agents, capacity {capacity}")]
    CapacityExceeded { facility: usize, load: u64, capacity: u64 },
    #[error("enumeration guard exceeded: {agents} agents, {slots} effective slots (limits {max_agents}/{max_slots})")]
    GuardExceeded { agents: usize, slots: u64, max_agents: usize, max_slots: u64 },
}

impl Assignment {
    /// Validates the map against the instance and caches the recomputed cost.
    pub fn new(inst: &Instance, assigned: Vec<usize>) -> Result<Assignment, MatchingError> {
        let cost = social_cost(inst, &assigned)?;
        Ok(Assignment { assigned, cost })
    }
}

/// Social cost of an assignment: sum over agents of the distance to their
/// facility. Errors on size mismatch or capacity violation.
pub fn social_cost(inst: &Instance, assigned: &[usize]) -> Result<f64, MatchingError> {
    if assigned.len() != inst.n_agents() {
        return Err(MatchingError::SizeMismatch {
            assigned: assigned.len(),
            agents: inst.n_agents(),
        });
    }
    let mut load = vec![0u64; inst.n_facilities()];
    for (agent, &facility) in assigned.iter().enumerate() {
        if facility >= inst.n_facilities() {
            return Err(MatchingError::UnknownFacility {
                agent,
                facility,
                facilities: inst.n_facilities(),
            });
        }
        load[facility] += 1;
    }
    for (facility, (&l, &c)) in load.iter().zip(&inst.capacities).enumerate() {
        if l > c {
            return Err(MatchingError::CapacityExceeded { facility, load: l, capacity: c });
        }
    }
    Ok(assigned
        .iter()
        .enumerate()
        .map(|(i, &j)| inst.agent_facility_distance(i, j))
        .sum())
}

/// Enumeration guard for the brute-force oracle.
pub const BRUTE_FORCE_MAX_AGENTS: usize = 9;
/// Effective slot guard: capacities are counted at most once per agent.
pub const BRUTE_FORCE_MAX_SLOTS: u64 = 12;

/// Exhaustive minimum-cost assignment; ties broken by lexicographically
/// smallest assigned array. Guarded to n <= 9 agents and 12 effective slots.
pub fn brute_force_optimal(inst: &Instance) -> Result<Assignment, MatchingError> {
    let n = inst.n_agents();
    let slots: u64 = inst
        .capacities
        .iter()
        .map(|&c| c.min(n as u64))
        .sum();
    if n > BRUTE_FORCE_MAX_AGENTS || slots > BRUTE_FORCE_MAX_SLOTS {
        return Err(MatchingError::GuardExceeded {
            agents: n,
            slots,
            max_agents: BRUTE_FORCE_MAX_AGENTS,
            max_slots: BRUTE_FORCE_MAX_SLOTS,
        });
    }
    let m = inst.n_facilities();
    let mut residual = inst.capacities.clone();
    let mut current = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;

    fn dfs(
        inst: &Instance,
        agent: usize,
        cost_so_far: f64,
        residual: &mut [u64],
        current: &mut [usize],
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        let n = inst.n_agents();
        if let Some((best_cost, _)) = best {
            if cost_so_far > *best_cost {
                return;
            }
        }
        if agent == n {
            // Strict improvement keeps the first (lexicographically
            // smallest) assignment among equal-cost optima.
            if best.as_ref().map_or(true, |(c, _)| cost_so_far < *c) {
                *best = Some((cost_so_far, current.to_vec()));
            }
            return;
        }
        for j in 0..inst.n_facilities() {
            if residual[j] == 0 {
                continue;
            }
            residual[j] -= 1;
            current[agent] = j;
            dfs(
                inst,
                agent + 1,
                cost_so_far + inst.agent_facility_distance(agent, j),
                residual,
                current,
                best,
            );
            residual[j] += 1;
        }
    }

    let _ = m;
    dfs(inst, 0, 0.0, &mut residual, &mut current, &mut best);
    let (cost, assigned) = best.expect("feasible by instance invariant");
    Ok(Assignment { assigned, cost })
}

/// Minimum social-cost assignment via successive shortest augmenting paths
/// with potentials.
///
/// Agents sharing a preferred point are interchangeable, and so are
/// facilities sharing a point, so both sides are pooled before solving; this
/// keeps the node set proportional to the number of distinct points rather
/// than the number of agents or capacity slots. The cost of the result is
/// the optimum; the argmin array is deterministic (agents in index order
/// take the lowest available facility index consistent with the flow).
pub fn optimal(inst: &Instance) -> Result<Assignment, MatchingError> {
    let n = inst.n_agents();

    // Pool agents by preferred point.
    let mut group_of_point: HashMap<PointId, usize> = HashMap::new();
    let mut group_point: Vec<PointId> = Vec::new();
    let mut group_members: Vec<Vec<usize>> = Vec::new();
    for (i, &p) in inst.agents.iter().enumerate() {
        let g = *group_of_point.entry(p).or_insert_with(|| {
            group_point.push(p);
            group_members.push(Vec::new());
            group_point.len() - 1
        });
        group_members[g].push(i);
    }
    let n_groups = group_point.len();

    // Pool facilities by point; capacities add up.
    let mut fgroup_of_point: HashMap<PointId, usize> = HashMap::new();
    let mut fgroup_point: Vec<PointId> = Vec::new();
    let mut fgroup_members: Vec<Vec<usize>> = Vec::new();
    for (j, &p) in inst.facilities.iter().enumerate() {
        let f = *fgroup_of_point.entry(p).or_insert_with(|| {
            fgroup_point.push(p);
            fgroup_members.push(Vec::new());
            fgroup_point.len() - 1
        });
        fgroup_members[f].push(j);
    }
    let m = fgroup_point.len();

    let dist =
        |g: usize, f: usize| -> f64 { inst.metric.dist_unchecked(group_point[g], fgroup_point[f]) };

    let mut supply: Vec<u64> = group_members.iter().map(|v| v.len() as u64).collect();
    let mut cap_left: Vec<u64> = fgroup_members
        .iter()
        .map(|members| members.iter().map(|&j| inst.capacities[j]).sum())
        .collect();
    let mut flow = vec![vec![0u64; m]; n_groups];
    // Potentials keep reduced costs nonnegative across augmentations.
    let mut pi_group = vec![0.0f64; n_groups];
    let mut pi_fac = vec![0.0f64; m];
    let mut remaining = n as u64;

    while remaining > 0 {
        // Dijkstra over the residual graph, multi-sourced at groups with
        // remaining supply. The node space is tiny, so a dense scan is fine.
        const UNSEEN: f64 = f64::INFINITY;
        let mut dist_g = vec![UNSEEN; n_groups];
        let mut dist_f = vec![UNSEEN; m];
        let mut done_g = vec![false; n_groups];
        let mut done_f = vec![false; m];
        // prev_f[j] = group feeding facility j; prev_g[g] = facility whose
        // residual (flow-cancelling) arc reached group g.
        let mut prev_f = vec![usize::MAX; m];
        let mut prev_g = vec![usize::MAX; n_groups];
        for g in 0..n_groups {
            if supply[g] > 0 {
                dist_g[g] = 0.0;
            }
        }
        loop {
            // Pick the unfinished node of smallest tentative distance.
            let mut best = UNSEEN;
            let mut pick: Option<(bool, usize)> = None; // (is_facility, index)
            for g in 0..n_groups {
                if !done_g[g] && dist_g[g] < best {
                    best = dist_g[g];
                    pick = Some((false, g));
                }
            }
            for j in 0..m {
                if !done_f[j] && dist_f[j] < best {
                    best = dist_f[j];
                    pick = Some((true, j));
                }
            }
            let Some((is_fac, idx)) = pick else { break };
            if is_fac {
                done_f[idx] = true;
                // Residual arcs facility -> group exist where flow can be
                // cancelled.
                for g in 0..n_groups {
                    if done_g[g] || flow[g][idx] == 0 {
                        continue;
                    }
                    let rc = (-dist(g, idx) + pi_fac[idx] - pi_group[g]).max(0.0);
                    let nd = dist_f[idx] + rc;
                    if nd < dist_g[g] {
                        dist_g[g] = nd;
                        prev_g[g] = idx;
                    }
                }
            } else {
                done_g[idx] = true;
                for j in 0..m {
                    if done_f[j] {
                        continue;
                    }
                    let rc = (dist(idx, j) + pi_group[idx] - pi_fac[j]).max(0.0);
                    let nd = dist_g[idx] + rc;
                    if nd < dist_f[j] {
                        dist_f[j] = nd;
                        prev_f[j] = idx;
                    }
                }
            }
        }

        // Cheapest facility with spare capacity terminates the path.
        let mut target = usize::MAX;
        for j in 0..m {
            if cap_left[j] > 0
                && dist_f[j] < UNSEEN
                && (target == usize::MAX
                    || dist_f[j] + pi_fac[j] < dist_f[target] + pi_fac[target])
            {
                target = j;
            }
        }
        debug_assert!(target != usize::MAX, "feasible by instance invariant");

        // Bottleneck along the alternating path.
        let mut bottleneck = cap_left[target].min(remaining);
        {
            let mut j = target;
            loop {
                let g = prev_f[j];
                if prev_g[g] == usize::MAX {
                    bottleneck = bottleneck.min(supply[g]);
                    break;
                }
                let back = prev_g[g];
                bottleneck = bottleneck.min(flow[g][back]);
                j = back;
            }
        }
        debug_assert!(bottleneck > 0);

        // Apply the augmentation.
        cap_left[target] -= bottleneck;
        let mut j = target;
        loop {
            let g = prev_f[j];
            flow[g][j] += bottleneck;
            if prev_g[g] == usize::MAX {
                supply[g] -= bottleneck;
                break;
            }
            let back = prev_g[g];
            flow[g][back] -= bottleneck;
            j = back;
        }
        remaining -= bottleneck;

        // Shift potentials by the found distances (standard Johnson update;
        // unreached nodes keep their potential).
        for g in 0..n_groups {
            if dist_g[g] < UNSEEN {
                pi_group[g] += dist_g[g];
            }
        }
        for j in 0..m {
            if dist_f[j] < UNSEEN {
                pi_fac[j] += dist_f[j];
            }
        }
    }

    // Decode flows into a per-agent map. Within a facility group, concrete
    // facilities are used in ascending index order; each agent (in index
    // order) takes the lowest concrete facility its group still has flow
    // toward.
    let mut next_in_fgroup = vec![0usize; m];
    let mut cap_used = vec![0u64; inst.n_facilities()];
    let mut concrete = |f: usize| -> usize {
        loop {
            let j = fgroup_members[f][next_in_fgroup[f]];
            if cap_used[j] < inst.capacities[j] {
                cap_used[j] += 1;
                return j;
            }
            next_in_fgroup[f] += 1;
        }
    };
    let mut assigned = vec![usize::MAX; n];
    for g in 0..n_groups {
        // Members are in ascending agent order; flow rows are consumed
        // facility-group by facility-group in a fixed order, so the output
        // is deterministic.
        let mut members = group_members[g].iter();
        for f in 0..m {
            for _ in 0..flow[g][f] {
                let agent = *members.next().expect("flow matches supply");
                assigned[agent] = concrete(f);
            }
        }
    }
    debug_assert!(assigned.iter().all(|&j| j != usize::MAX));
    Assignment::new(inst, assigned)
}
