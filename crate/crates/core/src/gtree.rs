//! Directed representation graphs of (instance, optimal, SD) triplets and
//! their reduction to directed g-trees.
//!
//! Facilities are split into unit-capacity slots, so the graph has a node per
//! slot and an edge per agent pointing from the agent's slot in the optimal
//! solution to its slot under SD. The reduction removes optimal agents,
//! reroutes blocked agents that collide with greedy agents' optimal slots
//! onto fresh coinciding slots, drops greedy agents that feed nobody, splits
//! shared SD-only slots, and repeats with a re-optimized baseline until the
//! restricted optimum is optimal for the surviving instance. Every surviving
//! component must be a directed g-tree: root of in-degree 1 and out-degree 0,
//! leaves of in-degree 0 and out-degree 1, intermediate nodes of in-degree
//! exactly g.

use crate::instance::{Instance, InstanceError};
use crate::matching::{self, Assignment, MatchingError};
use crate::mechanisms::AgentOrdering;
use crate::metric::{Metric, MetricError, PointId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GTreeError {
    #[error("optimal assignment invalid for instance: {0}")]
    BadOptimal(MatchingError),
    #[error("SD assignment invalid for the {g}-augmented instance: {source}")]
    BadSd { g: u64, source: MatchingError },
    #[error("ordering covers {ordering} agents, instance has {agents}")]
    OrderMismatch { ordering: usize, agents: usize },
    #[error("component is not a directed {g}-tree: {reason}")]
    NotAGTree { g: u64, reason: String },
    #[error("reduction did not reach an optimal baseline within {cap} passes")]
    IterationCap { cap: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Slot node of a representation graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepNode {
    /// Facility index in the source instance.
    pub facility: usize,
    /// Slot number within the facility.
    pub slot: usize,
    pub point: PointId,
}

/// One agent: from its slot in the optimal solution to its slot under SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepEdge {
    pub agent: usize,
    pub from: usize,
    pub to: usize,
    pub opt_dist: f64,
    pub sd_dist: f64,
}

impl RepEdge {
    pub fn is_self_loop(&self) -> bool {
        self.from == self.to
    }
}

/// Representation graph of a triplet. Each node has at most one outgoing
/// edge (its agent in the optimal solution) and at most g incoming edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepGraph {
    pub g: u64,
    pub nodes: Vec<RepNode>,
    pub edges: Vec<RepEdge>,
}

/// Builds the slot-level representation graph.
///
/// `opt` must be valid for `inst` and `sd` for the g-augmented instance.
/// Optimal-solution agents fill their facility's slots in agent order; SD
/// agents matching their optimal facility reuse the same slot (self-loop),
/// the rest fill the lowest slot with fewer than g occupants. Self-loops are
/// retained.
pub fn build_rep_graph(
    inst: &Instance,
    opt: &Assignment,
    sd: &Assignment,
    g: u64,
) -> Result<RepGraph, GTreeError> {
    matching::social_cost(inst, &opt.assigned).map_err(GTreeError::BadOptimal)?;
    let augmented = inst.augment(g)?;
    matching::social_cost(&augmented, &sd.assigned)
        .map_err(|source| GTreeError::BadSd { g, source })?;

    let mut nodes = Vec::new();
    let mut slot_base = Vec::with_capacity(inst.n_facilities());
    for (j, &c) in inst.capacities.iter().enumerate() {
        slot_base.push(nodes.len());
        for s in 0..c as usize {
            nodes.push(RepNode { facility: j, slot: s, point: inst.facilities[j] });
        }
    }

    let n = inst.n_agents();
    // Optimal solution: agents of facility j take slots 0, 1, ... in agent
    // order; injective because opt respects the original capacities.
    let mut o_slot = vec![usize::MAX; n];
    let mut o_fill = vec![0usize; inst.n_facilities()];
    for i in 0..n {
        let j = opt.assigned[i];
        o_slot[i] = slot_base[j] + o_fill[j];
        o_fill[j] += 1;
    }
    // SD solution: self-loops first, then lowest slot with load < g.
    let mut s_slot = vec![usize::MAX; n];
    let mut load = vec![0u64; nodes.len()];
    for i in 0..n {
        if sd.assigned[i] == opt.assigned[i] {
            s_slot[i] = o_slot[i];
            load[o_slot[i]] += 1;
        }
    }
    for i in 0..n {
        if s_slot[i] != usize::MAX {
            continue;
        }
        let j = sd.assigned[i];
        let begin = slot_base[j];
        let end = begin + inst.capacities[j] as usize;
        let v = (begin..end)
            .find(|&v| load[v] < g)
            .expect("slot capacity g * c_j covers the SD load");
        s_slot[i] = v;
        load[v] += 1;
    }

    let edges = (0..n)
        .map(|i| RepEdge {
            agent: i,
            from: o_slot[i],
            to: s_slot[i],
            opt_dist: inst.agent_facility_distance(i, opt.assigned[i]),
            sd_dist: inst.agent_facility_distance(i, sd.assigned[i]),
        })
        .collect();
    Ok(RepGraph { g, nodes, edges })
}

/// Edge of a directed g-tree; tail is the child side, head the parent side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GTreeEdge {
    pub agent: usize,
    pub from: usize,
    pub to: usize,
    pub opt_dist: f64,
    pub sd_dist: f64,
}

/// A directed g-tree with per-edge optimal and SD distances. Nodes are
/// 0..n_nodes; `node_points` keeps the slot positions for trees reduced from
/// instances (placeholder zeros for synthetic shapes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedGTree {
    pub g: u64,
    pub n_nodes: usize,
    pub root: usize,
    pub edges: Vec<GTreeEdge>,
    pub node_points: Vec<PointId>,
}

/// A leaf-originating path: the chain from `leaf_edge` up to `top_edge`
/// inclusive. `len` is the number of edges on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathRef {
    pub leaf_edge: usize,
    pub top_edge: usize,
    pub len: usize,
}

impl DirectedGTree {
    /// Degree and reachability check against the directed g-tree invariants.
    pub fn validate(&self) -> Result<(), GTreeError> {
        let fail = |reason: String| Err(GTreeError::NotAGTree { g: self.g, reason });
        if self.edges.is_empty() {
            return fail("no edges".into());
        }
        if self.n_nodes != self.edges.len() + 1 {
            return fail(format!("{} nodes with {} edges", self.n_nodes, self.edges.len()));
        }
        if self.node_points.len() != self.n_nodes {
            return fail("node_points length mismatch".into());
        }
        let mut in_deg = vec![0usize; self.n_nodes];
        let mut out_edge = vec![usize::MAX; self.n_nodes];
        for (e, edge) in self.edges.iter().enumerate() {
            if edge.from >= self.n_nodes || edge.to >= self.n_nodes {
                return fail(format!("edge {e} out of node range"));
            }
            if edge.from == edge.to {
                return fail(format!("edge {e} is a self-loop"));
            }
            if out_edge[edge.from] != usize::MAX {
                return fail(format!("node {} has two outgoing edges", edge.from));
            }
            out_edge[edge.from] = e;
            in_deg[edge.to] += 1;
        }
        if self.root >= self.n_nodes {
            return fail("root out of range".into());
        }
        for v in 0..self.n_nodes {
            let has_out = out_edge[v] != usize::MAX;
            if v == self.root {
                if has_out || in_deg[v] != 1 {
                    return fail(format!(
                        "root {v} must have in-degree 1 and out-degree 0 (in {}, out {})",
                        in_deg[v], has_out as usize
                    ));
                }
            } else if !has_out {
                return fail(format!("non-root node {v} has no outgoing edge"));
            } else if in_deg[v] != 0 && in_deg[v] != self.g as usize {
                return fail(format!(
                    "intermediate node {v} has in-degree {}, expected {}",
                    in_deg[v], self.g
                ));
            }
        }
        // Every node must reach the root along out-edges without cycling.
        for start in 0..self.n_nodes {
            let mut v = start;
            let mut steps = 0usize;
            while v != self.root {
                v = self.edges[out_edge[v]].to;
                steps += 1;
                if steps > self.n_nodes {
                    return fail(format!("cycle reachable from node {start}"));
                }
            }
        }
        Ok(())
    }

    /// Outgoing edge per node (usize::MAX for the root).
    fn out_edges(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.n_nodes];
        for (e, edge) in self.edges.iter().enumerate() {
            out[edge.from] = e;
        }
        out
    }

    /// Parent edge of each edge, if any (the out-edge of its head node).
    pub fn parent_edges(&self) -> Vec<Option<usize>> {
        let out = self.out_edges();
        self.edges
            .iter()
            .map(|edge| (out[edge.to] != usize::MAX).then(|| out[edge.to]))
            .collect()
    }

    /// The edge incident to the root.
    pub fn root_edge(&self) -> usize {
        self.edges
            .iter()
            .position(|e| e.to == self.root)
            .expect("validated tree has a root edge")
    }

    /// In-degree of each node.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut in_deg = vec![0usize; self.n_nodes];
        for edge in &self.edges {
            in_deg[edge.to] += 1;
        }
        in_deg
    }

    /// All leaf-originating paths: one per (leaf edge, ancestor edge) pair,
    /// listed leaf by leaf in edge-index order, walking upward.
    pub fn enumerate_paths(&self) -> Vec<PathRef> {
        let parent = self.parent_edges();
        let in_deg = self.in_degrees();
        let mut paths = Vec::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if in_deg[edge.from] != 0 {
                continue; // not a leaf edge
            }
            let mut top = e;
            let mut len = 1;
            loop {
                paths.push(PathRef { leaf_edge: e, top_edge: top, len });
                match parent[top] {
                    Some(f) => {
                        top = f;
                        len += 1;
                    }
                    None => break,
                }
            }
        }
        paths
    }

    /// Edges of a path, from the leaf edge up to and including `top_edge`.
    pub fn path_edges(&self, path: &PathRef) -> Vec<usize> {
        let parent = self.parent_edges();
        let mut edges = Vec::with_capacity(path.len);
        let mut e = path.leaf_edge;
        loop {
            edges.push(e);
            if e == path.top_edge {
                break;
            }
            e = parent[e].expect("path ends at an ancestor of its leaf edge");
        }
        edges
    }

    /// Total SD cost carried by the tree's agents.
    pub fn sd_cost(&self) -> f64 {
        self.edges.iter().map(|e| e.sd_dist).sum()
    }

    /// Total optimal cost carried by the tree's agents.
    pub fn opt_cost(&self) -> f64 {
        self.edges.iter().map(|e| e.opt_dist).sum()
    }

    pub fn ratio(&self) -> f64 {
        let opt = self.opt_cost();
        let sd = self.sd_cost();
        if opt == 0.0 {
            if sd > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            sd / opt
        }
    }
}

/// Outcome of the reduction: the validated g-tree components of the final
/// pass and the number of passes taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedForest {
    pub trees: Vec<DirectedGTree>,
    pub iterations: usize,
}

impl ReducedForest {
    /// Component with the largest SD-to-optimal cost ratio.
    pub fn best_tree(&self) -> Option<&DirectedGTree> {
        self.trees
            .iter()
            .max_by(|a, b| a.ratio().partial_cmp(&b.ratio()).expect("ratios are not NaN"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AgentClass {
    Optimal,
    Greedy,
    Blocked,
}

/// Mutable unit-capacity world the reduction passes operate on.
struct UnitWorld {
    metric: Metric,
    /// (original agent id, preferred point) per surviving agent.
    agents: Vec<(usize, PointId)>,
    /// Slot positions; capacity 1 each (g once augmented).
    slot_points: Vec<PointId>,
    o_slot: Vec<usize>,
    s_slot: Vec<usize>,
    /// Agent indices in SD decision order.
    order: Vec<usize>,
    g: u64,
}

#[derive(Clone)]
struct Component {
    tree: DirectedGTree,
    /// World agent index per tree edge.
    agent_of_edge: Vec<usize>,
    /// World slot per tree node.
    slot_of_node: Vec<usize>,
}

impl UnitWorld {
    fn from_rep_graph(rg: &RepGraph, inst: &Instance, order: &AgentOrdering) -> Self {
        UnitWorld {
            metric: inst.metric.clone(),
            agents: (0..inst.n_agents()).map(|i| (i, inst.agents[i])).collect(),
            slot_points: rg.nodes.iter().map(|n| n.point).collect(),
            o_slot: rg.edges.iter().map(|e| e.from).collect(),
            s_slot: rg.edges.iter().map(|e| e.to).collect(),
            order: order.as_slice().to_vec(),
            g: rg.g,
        }
    }

    fn dist(&self, agent: usize, slot: usize) -> f64 {
        self.metric.dist_unchecked(self.agents[agent].1, self.slot_points[slot])
    }

    /// Replays the decision order and classifies each agent by the load of
    /// its optimal slot at its turn.
    fn classify(&self) -> Vec<AgentClass> {
        let mut class = vec![AgentClass::Optimal; self.agents.len()];
        let mut load = vec![0u64; self.slot_points.len()];
        for &a in &self.order {
            if self.o_slot[a] != self.s_slot[a] {
                class[a] = if load[self.o_slot[a]] < self.g {
                    AgentClass::Greedy
                } else {
                    AgentClass::Blocked
                };
            }
            load[self.s_slot[a]] += 1;
        }
        class
    }

    fn fresh_slot_at(&mut self, slot: usize) -> Result<usize, MetricError> {
        let (metric, point) = self.metric.extend_with_coinciding_point(self.slot_points[slot])?;
        self.metric = metric;
        self.slot_points.push(point);
        Ok(self.slot_points.len() - 1)
    }

    /// One application of the reduction surgery. Returns the validated
    /// components; the world is left restricted to the survivors.
    fn lemma_pass(&mut self) -> Result<Vec<Component>, GTreeError> {
        let class = self.classify();
        let n = self.agents.len();

        let mut is_greedy_opt = vec![false; self.slot_points.len()];
        let mut is_blocked_opt = vec![false; self.slot_points.len()];
        for a in 0..n {
            match class[a] {
                AgentClass::Greedy => is_greedy_opt[self.o_slot[a]] = true,
                AgentClass::Blocked => is_blocked_opt[self.o_slot[a]] = true,
                AgentClass::Optimal => {}
            }
        }

        // Reroute blocked agents aimed at a greedy agent's optimal slot onto
        // fresh coinciding slots, one per rerouted agent.
        for a in 0..n {
            if class[a] == AgentClass::Blocked && is_greedy_opt[self.s_slot[a]] {
                let fresh = self.fresh_slot_at(self.s_slot[a])?;
                is_greedy_opt.push(false);
                is_blocked_opt.push(false);
                self.s_slot[a] = fresh;
            }
        }

        // Survivors: blocked agents, plus greedy agents feeding a blocked
        // agent's optimal slot. Optimal agents (self-loops) drop out.
        let survives: Vec<bool> = (0..n)
            .map(|a| match class[a] {
                AgentClass::Optimal => false,
                AgentClass::Blocked => true,
                AgentClass::Greedy => is_blocked_opt[self.s_slot[a]],
            })
            .collect();

        // Split slots that surviving agents share under SD but nobody uses
        // in the optimal solution.
        let mut o_used = vec![false; self.slot_points.len()];
        let mut s_users: Vec<Vec<usize>> = vec![Vec::new(); self.slot_points.len()];
        for a in 0..n {
            if survives[a] {
                o_used[self.o_slot[a]] = true;
                s_users[self.s_slot[a]].push(a);
            }
        }
        for v in 0..o_used.len() {
            if !o_used[v] && s_users[v].len() >= 2 {
                for k in 0..s_users[v].len() {
                    let a = s_users[v][k];
                    let fresh = self.fresh_slot_at(v)?;
                    self.s_slot[a] = fresh;
                }
            }
        }

        self.compact(&survives);
        self.components()
    }

    /// Drops removed agents and unused slots, remapping indices.
    fn compact(&mut self, survives: &[bool]) {
        let mut agent_map = vec![usize::MAX; self.agents.len()];
        let mut agents = Vec::new();
        let mut o_slot = Vec::new();
        let mut s_slot = Vec::new();
        for a in 0..self.agents.len() {
            if survives[a] {
                agent_map[a] = agents.len();
                agents.push(self.agents[a]);
                o_slot.push(self.o_slot[a]);
                s_slot.push(self.s_slot[a]);
            }
        }
        let order = self
            .order
            .iter()
            .filter_map(|&a| (agent_map[a] != usize::MAX).then(|| agent_map[a]))
            .collect();

        let mut slot_map = vec![usize::MAX; self.slot_points.len()];
        let mut slot_points = Vec::new();
        for slots in [&mut o_slot, &mut s_slot] {
            for v in slots.iter_mut() {
                if slot_map[*v] == usize::MAX {
                    slot_map[*v] = slot_points.len();
                    slot_points.push(self.slot_points[*v]);
                }
                *v = slot_map[*v];
            }
        }

        self.agents = agents;
        self.o_slot = o_slot;
        self.s_slot = s_slot;
        self.order = order;
        self.slot_points = slot_points;
    }

    /// Splits the current graph into weakly connected components and checks
    /// each against the g-tree invariants.
    fn components(&self) -> Result<Vec<Component>, GTreeError> {
        let n_slots = self.slot_points.len();
        let mut dsu: Vec<usize> = (0..n_slots).collect();
        fn find(dsu: &mut [usize], v: usize) -> usize {
            let mut root = v;
            while dsu[root] != root {
                root = dsu[root];
            }
            let mut v = v;
            while dsu[v] != root {
                let next = dsu[v];
                dsu[v] = root;
                v = next;
            }
            root
        }
        for a in 0..self.agents.len() {
            let (x, y) = (find(&mut dsu, self.o_slot[a]), find(&mut dsu, self.s_slot[a]));
            if x != y {
                dsu[x] = y;
            }
        }

        // Components indexed by discovery order of their DSU representative.
        let mut comp_of_rep = vec![usize::MAX; n_slots];
        let mut comp_agents: Vec<Vec<usize>> = Vec::new();
        for a in 0..self.agents.len() {
            let rep = find(&mut dsu, self.o_slot[a]);
            if comp_of_rep[rep] == usize::MAX {
                comp_of_rep[rep] = comp_agents.len();
                comp_agents.push(Vec::new());
            }
            comp_agents[comp_of_rep[rep]].push(a);
        }

        let mut components = Vec::with_capacity(comp_agents.len());
        for agents in comp_agents {
            let mut slot_of_node = Vec::new();
            let mut node_of_slot = vec![usize::MAX; n_slots];
            let mut edges = Vec::with_capacity(agents.len());
            for &a in &agents {
                for v in [self.o_slot[a], self.s_slot[a]] {
                    if node_of_slot[v] == usize::MAX {
                        node_of_slot[v] = slot_of_node.len();
                        slot_of_node.push(v);
                    }
                }
                edges.push(GTreeEdge {
                    agent: self.agents[a].0,
                    from: node_of_slot[self.o_slot[a]],
                    to: node_of_slot[self.s_slot[a]],
                    opt_dist: self.dist(a, self.o_slot[a]),
                    sd_dist: self.dist(a, self.s_slot[a]),
                });
            }
            let mut has_out = vec![false; slot_of_node.len()];
            for edge in &edges {
                has_out[edge.from] = true;
            }
            let root = has_out.iter().position(|&o| !o).ok_or_else(|| GTreeError::NotAGTree {
                g: self.g,
                reason: "component has no sink node".into(),
            })?;
            let tree = DirectedGTree {
                g: self.g,
                n_nodes: slot_of_node.len(),
                root,
                edges,
                node_points: slot_of_node.iter().map(|&v| self.slot_points[v]).collect(),
            };
            tree.validate()?;
            components.push(Component { tree, agent_of_edge: agents, slot_of_node });
        }
        Ok(components)
    }

    /// Unit-capacity instance of one component (for re-optimization).
    fn component_instance(&self, comp: &Component) -> Result<Instance, InstanceError> {
        Instance::new(
            self.metric.clone(),
            comp.agent_of_edge.iter().map(|&a| self.agents[a].1).collect(),
            comp.slot_of_node.iter().map(|&v| self.slot_points[v]).collect(),
            vec![1; comp.slot_of_node.len()],
        )
    }

    /// Restricts the world to one component, replacing the optimal side with
    /// `opt` (facility indices of the component instance).
    fn restrict_to(&mut self, comp: &Component, opt: &Assignment) {
        let agents: Vec<(usize, PointId)> =
            comp.agent_of_edge.iter().map(|&a| self.agents[a]).collect();
        let o_slot: Vec<usize> = opt.assigned.iter().map(|&j| comp.slot_of_node[j]).collect();
        let s_slot: Vec<usize> =
            comp.agent_of_edge.iter().map(|&a| self.s_slot[a]).collect();
        let mut agent_map = vec![usize::MAX; self.agents.len()];
        for (new, &old) in comp.agent_of_edge.iter().enumerate() {
            agent_map[old] = new;
        }
        self.order = self
            .order
            .iter()
            .filter_map(|&a| (agent_map[a] != usize::MAX).then(|| agent_map[a]))
            .collect();
        self.agents = agents;
        self.o_slot = o_slot;
        self.s_slot = s_slot;
        // Slots keep their indices; unused ones fall away on the next pass.
    }
}

/// Reduces a representation graph to a forest of directed g-trees.
///
/// `order` is the decision order the SD assignment was produced with. Each
/// pass applies the surgery steps; if the restriction of the optimal side to
/// the best component is not optimal for that component's unit instance, the
/// baseline is re-optimized and the process repeats. The pass count is capped
/// at n as a safety net that raises a diagnostic if ever hit.
pub fn reduce(
    rg: &RepGraph,
    inst: &Instance,
    order: &AgentOrdering,
) -> Result<ReducedForest, GTreeError> {
    if order.len() != inst.n_agents() {
        return Err(GTreeError::OrderMismatch { ordering: order.len(), agents: inst.n_agents() });
    }
    let cap = inst.n_agents().max(1);
    let mut world = UnitWorld::from_rep_graph(rg, inst, order);
    for iteration in 1..=cap {
        let components = world.lemma_pass()?;
        if components.is_empty() {
            return Ok(ReducedForest { trees: Vec::new(), iterations: iteration });
        }
        let best = components
            .iter()
            .max_by(|a, b| a.tree.ratio().partial_cmp(&b.tree.ratio()).expect("not NaN"))
            .expect("nonempty")
            .clone();
        let unit_inst = world.component_instance(&best)?;
        let restricted_cost = best.tree.opt_cost();
        let opt = matching::optimal(&unit_inst)?;
        if opt.cost >= restricted_cost - 1e-9 {
            return Ok(ReducedForest {
                trees: components.into_iter().map(|c| c.tree).collect(),
                iterations: iteration,
            });
        }
        world.restrict_to(&best, &opt);
    }
    Err(GTreeError::IterationCap { cap })
}

/// Complete g-tree with every leaf at `depth` edges from the root and
/// placeholder distances; covering tests drive it.
pub fn complete_tree(g: u64, depth: usize) -> DirectedGTree {
    assert!(depth >= 1 && g >= 1);
    let mut edges = Vec::new();
    let mut n_nodes = 1usize; // root
    let mut frontier = vec![(0usize, 0usize)];
    while let Some((parent, d)) = frontier.pop() {
        if d == depth {
            continue;
        }
        let children = if d == 0 { 1 } else { g as usize };
        for _ in 0..children {
            let child = n_nodes;
            n_nodes += 1;
            edges.push(GTreeEdge {
                agent: edges.len(),
                from: child,
                to: parent,
                opt_dist: 0.0,
                sd_dist: 0.0,
            });
            frontier.push((child, d + 1));
        }
    }
    let tree =
        DirectedGTree { g, n_nodes, root: 0, edges, node_points: vec![PointId(0); n_nodes] };
    tree.validate().expect("complete tree is a valid g-tree");
    tree
}

/// All g-tree shapes with at most `max_edges` edges, one per isomorphism
/// class. Every internal node has exactly g child edges, so the legal edge
/// counts are 1, g+1, 2g+1, ...
pub fn enumerate_shapes(g: u64, max_edges: usize) -> Vec<DirectedGTree> {
    #[derive(Clone)]
    enum Shape {
        Leaf,
        Node(Vec<Shape>),
    }

    // Shapes hanging below one edge, counted with that edge: n = 1 is a
    // leaf, otherwise 1 + the children's totals. Children are chosen as
    // non-decreasing (size, index) pairs to emit one representative per
    // isomorphism class.
    fn subtree_shapes(g: usize, n: usize, memo: &mut Vec<Option<Vec<Shape>>>) -> Vec<Shape> {
        if let Some(cached) = &memo[n] {
            return cached.clone();
        }
        let mut shapes = Vec::new();
        if n == 1 {
            shapes.push(Shape::Leaf);
        } else if n >= g + 1 {
            fn rec(
                g: usize,
                remaining: usize,
                slots_left: usize,
                min_pair: (usize, usize),
                current: &mut Vec<(usize, usize)>,
                out: &mut Vec<Shape>,
                memo: &mut Vec<Option<Vec<Shape>>>,
            ) {
                if slots_left == 0 {
                    if remaining == 0 {
                        let children = current
                            .iter()
                            .map(|&(size, idx)| subtree_shapes(g, size, memo)[idx].clone())
                            .collect();
                        out.push(Shape::Node(children));
                    }
                    return;
                }
                let max_size = remaining.saturating_sub(slots_left - 1);
                for size in min_pair.0..=max_size {
                    let options = subtree_shapes(g, size, memo).len();
                    let start = if size == min_pair.0 { min_pair.1 } else { 0 };
                    for idx in start..options {
                        current.push((size, idx));
                        rec(g, remaining - size, slots_left - 1, (size, idx), current, out, memo);
                        current.pop();
                    }
                }
            }
            let mut current = Vec::with_capacity(g);
            rec(g, n - 1, g, (1, 0), &mut current, &mut shapes, memo);
        }
        memo[n] = Some(shapes.clone());
        shapes
    }

    fn materialize(g: u64, shape: &Shape) -> DirectedGTree {
        fn build(shape: &Shape, parent: usize, n_nodes: &mut usize, edges: &mut Vec<GTreeEdge>) {
            let node = *n_nodes;
            *n_nodes += 1;
            edges.push(GTreeEdge {
                agent: edges.len(),
                from: node,
                to: parent,
                opt_dist: 0.0,
                sd_dist: 0.0,
            });
            if let Shape::Node(children) = shape {
                for child in children {
                    build(child, node, n_nodes, edges);
                }
            }
        }
        let mut n_nodes = 1;
        let mut edges = Vec::new();
        build(shape, 0, &mut n_nodes, &mut edges);
        let tree =
            DirectedGTree { g, n_nodes, root: 0, edges, node_points: vec![PointId(0); n_nodes] };
        tree.validate().expect("enumerated shape is a valid g-tree");
        tree
    }

    let g_usize = g as usize;
    let mut memo: Vec<Option<Vec<Shape>>> = vec![None; max_edges + 1];
    let mut trees = Vec::new();
    for n in 1..=max_edges {
        for shape in subtree_shapes(g_usize, n, &mut memo) {
            trees.push(materialize(g, &shape));
        }
    }
    trees
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Family;
    use crate::mechanisms::sd;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn triplet(inst: &Instance, order: &AgentOrdering, g: u64) -> (Assignment, Assignment) {
        let opt = matching::optimal(inst).unwrap();
        let run = sd(&inst.augment(g).unwrap(), order).unwrap();
        (opt, run)
    }

    #[test]
    fn identical_assignments_give_self_loops() {
        let inst = Family::SdLowerBound { g: 1, k: 2, eps: 0.1 }.generate().unwrap();
        let opt = matching::optimal(&inst).unwrap();
        let rg = build_rep_graph(&inst, &opt, &opt, 1).unwrap();
        assert_eq!(rg.edges.len(), inst.n_agents());
        assert!(rg.edges.iter().all(|e| e.is_self_loop()));
    }

    #[test]
    fn rep_graph_of_sd_family_is_a_chain() {
        let inst = Family::SdLowerBound { g: 1, k: 2, eps: 0.1 }.generate().unwrap();
        let order = AgentOrdering::identity(2);
        let (opt, run) = triplet(&inst, &order, 1);
        let rg = build_rep_graph(&inst, &opt, &run, 1).unwrap();
        // Agent at 1: F0 -> F1; agent at 2: F1 -> F2.
        assert_eq!(rg.edges.len(), 2);
        assert!(rg.edges.iter().all(|e| !e.is_self_loop()));
        let f = |e: &RepEdge| (rg.nodes[e.from].facility, rg.nodes[e.to].facility);
        assert_eq!(f(&rg.edges[0]), (0, 1));
        assert_eq!(f(&rg.edges[1]), (1, 2));
    }

    #[test]
    fn shared_sd_slot_gets_in_degree_two() {
        // Two agents near one remote unit facility; under g = 2 both fit.
        let inst = Instance::new(
            Metric::line(vec![0.0, 0.1, 10.0, 0.05]),
            vec![PointId(0), PointId(1)],
            vec![PointId(3), PointId(2)],
            vec![1, 1],
        )
        .unwrap();
        let order = AgentOrdering::identity(2);
        let opt = Assignment::new(&inst, vec![0, 1]).unwrap();
        let run = sd(&inst.augment(2).unwrap(), &order).unwrap();
        assert_eq!(run.assigned, vec![0, 0]);
        let rg = build_rep_graph(&inst, &opt, &run, 2).unwrap();
        let mut in_deg = vec![0usize; rg.nodes.len()];
        for e in &rg.edges {
            if !e.is_self_loop() {
                in_deg[e.to] += 1;
            }
        }
        assert_eq!(in_deg.iter().max(), Some(&2));
    }

    #[test]
    fn rep_graph_degree_invariants_hold_on_random_triplets() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..100 {
            let inst = crate::testkit::random_line_instance(&mut rng, 7, 4);
            let order = crate::testkit::random_ordering(&mut rng, inst.n_agents());
            for g in [1u64, 2, 3] {
                let (opt, run) = triplet(&inst, &order, g);
                let rg = build_rep_graph(&inst, &opt, &run, g).unwrap();
                let mut out = vec![0usize; rg.nodes.len()];
                let mut inn = vec![0u64; rg.nodes.len()];
                for e in &rg.edges {
                    out[e.from] += 1;
                    inn[e.to] += 1;
                }
                assert!(out.iter().all(|&o| o <= 1), "one optimal agent per slot");
                assert!(inn.iter().all(|&i| i <= g), "at most g SD agents per slot");
            }
        }
    }

    #[test]
    fn rep_graph_rejects_mismatched_assignments() {
        let inst = Family::TwoFacilitySd { delta: 0.1 }.generate().unwrap();
        let opt = matching::optimal(&inst).unwrap();
        let bogus = Assignment { assigned: vec![0, 0], cost: 0.0 };
        assert!(matches!(build_rep_graph(&inst, &bogus, &opt, 1), Err(GTreeError::BadOptimal(_))));
        let too_short = Assignment { assigned: vec![0], cost: 0.0 };
        assert!(matches!(
            build_rep_graph(&inst, &opt, &too_short, 1),
            Err(GTreeError::BadSd { .. })
        ));
    }

    #[test]
    fn all_optimal_triplet_reduces_to_empty_forest() {
        let inst = Family::SdLowerBound { g: 1, k: 3, eps: 0.1 }.generate().unwrap();
        let opt = matching::optimal(&inst).unwrap();
        let order = AgentOrdering::identity(inst.n_agents());
        let rg = build_rep_graph(&inst, &opt, &opt, 1).unwrap();
        let forest = reduce(&rg, &inst, &order).unwrap();
        assert!(forest.trees.is_empty());
    }

    #[test]
    fn sd_family_g1_k3_reduces_to_three_edge_chain() {
        let inst = Family::SdLowerBound { g: 1, k: 3, eps: 0.1 }.generate().unwrap();
        let order = AgentOrdering::identity(inst.n_agents());
        let (opt, run) = triplet(&inst, &order, 1);
        let rg = build_rep_graph(&inst, &opt, &run, 1).unwrap();
        let forest = reduce(&rg, &inst, &order).unwrap();
        assert_eq!(forest.trees.len(), 1);
        let tree = &forest.trees[0];
        assert_eq!(tree.edges.len(), 3);
        assert_eq!(tree.g, 1);
        assert_eq!(tree.enumerate_paths().len(), 3);
    }

    #[test]
    fn sd_family_g2_k2_reduces_to_single_2_tree() {
        let inst = Family::SdLowerBound { g: 2, k: 2, eps: 0.1 }.generate().unwrap();
        let order = AgentOrdering::identity(inst.n_agents());
        let (opt, run) = triplet(&inst, &order, 2);
        let rg = build_rep_graph(&inst, &opt, &run, 2).unwrap();
        let forest = reduce(&rg, &inst, &order).unwrap();
        assert_eq!(forest.trees.len(), 1);
        let tree = &forest.trees[0];
        assert_eq!(tree.g, 2);
        assert_eq!(tree.edges.len(), 3);
        tree.validate().unwrap();
    }

    #[test]
    fn reduction_does_not_lose_ratio() {
        let mut rng = StdRng::seed_from_u64(47);
        for _ in 0..150 {
            let inst = crate::testkit::random_line_instance(&mut rng, 6, 3);
            let order = crate::testkit::random_ordering(&mut rng, inst.n_agents());
            for g in [1u64, 2, 3] {
                let (opt, run) = triplet(&inst, &order, g);
                let rg = build_rep_graph(&inst, &opt, &run, g).unwrap();
                let forest = reduce(&rg, &inst, &order).unwrap();
                if opt.cost == 0.0 {
                    continue;
                }
                let original = run.cost / opt.cost;
                if let Some(best) = forest.best_tree() {
                    assert!(
                        best.ratio() + 1e-9 >= original,
                        "g={g}: best {} < original {original} on {inst:?}",
                        best.ratio()
                    );
                } else {
                    // Empty forest means every agent was optimal under SD.
                    assert!(original <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn primal_constraint_holds_along_every_path() {
        // For each path topped by edge e: the SD distance of e is at most
        // its optimal distance plus the (SD + optimal) distances of the
        // remaining path edges.
        let mut rng = StdRng::seed_from_u64(53);
        let mut checked = 0usize;
        for _ in 0..150 {
            let inst = crate::testkit::random_line_instance(&mut rng, 7, 3);
            let order = crate::testkit::random_ordering(&mut rng, inst.n_agents());
            for g in [1u64, 2, 3] {
                let (opt, run) = triplet(&inst, &order, g);
                let rg = build_rep_graph(&inst, &opt, &run, g).unwrap();
                let forest = reduce(&rg, &inst, &order).unwrap();
                for tree in &forest.trees {
                    for path in tree.enumerate_paths() {
                        let edges = tree.path_edges(&path);
                        let top = *edges.last().unwrap();
                        let slack: f64 = edges
                            .iter()
                            .filter(|&&e| e != top)
                            .map(|&e| tree.edges[e].sd_dist + tree.edges[e].opt_dist)
                            .sum();
                        assert!(
                            tree.edges[top].sd_dist <= tree.edges[top].opt_dist + slack + 1e-9,
                            "path constraint violated on {inst:?}"
                        );
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 100, "exercised {checked} paths");
    }

    #[test]
    fn path_enumeration_counts() {
        let chain = complete_tree(1, 3);
        assert_eq!(chain.enumerate_paths().len(), 3);
        let single = complete_tree(1, 1);
        assert_eq!(single.enumerate_paths().len(), 1);
        // Depth-3 complete 2-tree: 4 leaves, each contributing 3 paths.
        let two = complete_tree(2, 3);
        assert_eq!(two.n_nodes, 8);
        assert_eq!(two.enumerate_paths().len(), 12);
        // Depth-2 complete 2-tree: 2 leaves at depth 2.
        let small = complete_tree(2, 2);
        assert_eq!(small.n_nodes, 4);
        assert_eq!(small.enumerate_paths().len(), 4);
    }

    #[test]
    fn validate_rejects_broken_trees() {
        let mut tree = complete_tree(2, 2);
        tree.g = 3;
        assert!(matches!(tree.validate(), Err(GTreeError::NotAGTree { .. })));

        let cyclic = DirectedGTree {
            g: 1,
            n_nodes: 3,
            root: 2,
            edges: vec![
                GTreeEdge { agent: 0, from: 0, to: 1, opt_dist: 0.0, sd_dist: 0.0 },
                GTreeEdge { agent: 1, from: 1, to: 0, opt_dist: 0.0, sd_dist: 0.0 },
            ],
            node_points: vec![PointId(0); 3],
        };
        assert!(cyclic.validate().is_err());
    }

    #[test]
    fn shape_enumeration_counts_and_validity() {
        assert_eq!(enumerate_shapes(1, 15).len(), 15);
        let two = enumerate_shapes(2, 15);
        assert_eq!(two.len(), 48);
        for tree in &two {
            tree.validate().unwrap();
            assert!(tree.edges.len() <= 15);
        }
        // Edge counts 1, 4, 7, 10, 13 with 1, 1, 2, 4, 9 shapes for g = 3.
        assert_eq!(enumerate_shapes(3, 13).len(), 17);
        assert!(enumerate_shapes(10, 15).len() >= 2);
    }
}
