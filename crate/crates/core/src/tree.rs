//! The shared search tree over joint states: growth by greedy steering with
//! rewiring, an optional fixed node budget enforced by recycling childless
//! nodes, and an undo log so a whole growth step can be rolled back when the
//! budget cannot be honored.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::greedy::Steering;
use crate::grid::GridWorld;
use crate::jointstate::{
    collision_free, joint_sq_dist, path_cost, Cost, JointPath, JointState,
};

/// Node handle. Ids are assigned in insertion order and never reused within
/// one run, even after removals or rollbacks.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub u32);

#[derive(Clone, Debug)]
pub struct TreeNode {
    state: JointState,
    parent: Option<NodeId>,
    cost_from_root: Cost,
    /// Joint steps from the parent's state to this state. The root carries a
    /// single-step path holding its own state.
    edge: JointPath,
    children: Vec<NodeId>,
}

impl TreeNode {
    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn cost_from_root(&self) -> Cost {
        self.cost_from_root
    }

    pub fn edge_path(&self) -> &JointPath {
        &self.edge
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn child_count(&self) -> usize {
        self.children.len()
    }
}

/// How a growth step settled its accounting against the node budget.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RemovalOutcome {
    /// A reparented node's emptied old parent was deleted during rewiring.
    RemovedOnRewire(NodeId),
    /// A random childless node was deleted to make room.
    ForceRemoved(NodeId),
    /// No node could be deleted; the caller must roll the step back.
    Restored,
}

/// Result of one `extend` call.
#[derive(Clone, Debug)]
pub enum ExtendOutcome {
    /// The steered state was empty progress or a duplicate; tree unchanged.
    NoOp,
    Extended {
        node: NodeId,
        /// Old parents deleted by rewire-time removal, in rewiring order.
        removed_on_rewire: Vec<NodeId>,
    },
}

/// Knobs consulted by `extend`.
#[derive(Clone, Copy, Debug)]
pub struct ExtendConfig {
    /// Cost budget for each greedy walk.
    pub c_max: Cost,
    /// Upper bound on near-set candidates actually tried during
    /// choose-parent and rewiring; the closest survive. `None` tries the
    /// whole near set.
    pub near_cap: Option<usize>,
}

enum UndoOp {
    Insert(NodeId),
    Reparent {
        node: NodeId,
        old_parent: NodeId,
        old_index: usize,
        old_edge: JointPath,
        old_cost: Cost,
    },
    Remove {
        id: NodeId,
        node: TreeNode,
        parent_index: usize,
    },
}

pub struct Tree {
    slots: Vec<Option<TreeNode>>,
    live: usize,
    root: NodeId,
    goal: JointState,
    cap: Option<usize>,
    gamma: f64,
    eta: f64,
    goal_nodes: BTreeSet<NodeId>,
    by_state: HashMap<JointState, Vec<NodeId>>,
    journal: Vec<UndoOp>,
}

impl Tree {
    /// A tree rooted at `root`, targeting `goal`, optionally capped at `cap`
    /// nodes. `gamma` and `eta` parameterize the near-set radius.
    pub fn new(
        root: JointState,
        goal: JointState,
        cap: Option<usize>,
        gamma: f64,
        eta: f64,
    ) -> Self {
        assert!(gamma > 0.0 && eta > 0.0, "radius constants must be positive");
        assert_eq!(root.n_agents(), goal.n_agents());
        if let Some(m) = cap {
            assert!(m >= 1, "node cap must be positive");
        }
        let root_id = NodeId(0);
        let node = TreeNode {
            state: root.clone(),
            parent: None,
            cost_from_root: 0,
            edge: JointPath::single(root.clone()),
            children: Vec::new(),
        };
        let mut goal_nodes = BTreeSet::new();
        if root == goal {
            goal_nodes.insert(root_id);
        }
        let mut by_state = HashMap::new();
        by_state.insert(root, vec![root_id]);
        Tree {
            slots: vec![Some(node)],
            live: 1,
            root: root_id,
            goal,
            cap,
            gamma,
            eta,
            goal_nodes,
            by_state,
            journal: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn goal_state(&self) -> &JointState {
        &self.goal
    }

    pub fn goal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.goal_nodes.iter().copied()
    }

    pub fn is_live(&self, id: NodeId) -> bool {
        self.slots
            .get(id.0 as usize)
            .is_some_and(|s| s.is_some())
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        self.slots[id.0 as usize]
            .as_ref()
            .expect("node id refers to a removed node")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        self.slots[id.0 as usize]
            .as_mut()
            .expect("node id refers to a removed node")
    }

    /// Live nodes in id order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &TreeNode)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|n| (NodeId(i as u32), n)))
    }

    pub fn contains_state(&self, state: &JointState) -> bool {
        self.by_state.get(state).is_some_and(|v| !v.is_empty())
    }

    fn over_cap(&self) -> bool {
        self.cap.is_some_and(|m| self.live > m)
    }

    /// The live node closest to `x` in joint distance, ties to the smallest
    /// id. Scans are exact (integer squared distances).
    pub fn nearest(&self, x: &JointState) -> Result<NodeId> {
        let mut best: Option<(u64, NodeId)> = None;
        for (id, node) in self.iter() {
            let d = joint_sq_dist(&node.state, x)?;
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, id));
            }
        }
        best.map(|(_, id)| id)
            .ok_or_else(|| Error::InvalidInput("nearest on an empty tree".into()))
    }

    /// Near-set radius for the current node count `k`:
    /// `min(gamma · (ln k / k)^(1/(2n)), eta)`, with the gamma term read as
    /// unbounded at `k = 1` so a lone root is judged by `eta` alone.
    pub fn near_radius(&self, n_agents: usize) -> f64 {
        let k = self.live;
        if k <= 1 {
            return self.eta;
        }
        let kf = k as f64;
        let term = self.gamma * (kf.ln() / kf).powf(1.0 / (2.0 * n_agents as f64));
        term.min(self.eta)
    }

    /// All live nodes within the shrinking near radius of `x`, in id order.
    pub fn near_set(&self, x: &JointState) -> Result<Vec<NodeId>> {
        let r = self.near_radius(x.n_agents());
        let r_sq = r * r;
        let mut out = Vec::new();
        for (id, node) in self.iter() {
            let d = joint_sq_dist(&node.state, x)?;
            if (d as f64) <= r_sq {
                out.push(id);
            }
        }
        Ok(out)
    }

    /// Lowest-cost goal node with its root-to-goal joint path, or `None`
    /// while no goal node exists. Ties break to the smallest id.
    pub fn best_solution(&self) -> Option<(NodeId, Cost, JointPath)> {
        let best = self
            .goal_nodes
            .iter()
            .copied()
            .min_by_key(|&id| (self.node(id).cost_from_root, id))?;
        let mut chain = vec![best];
        let mut cur = best;
        while let Some(p) = self.node(cur).parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        let mut steps = vec![self.node(chain[0]).state.clone()];
        for &id in &chain[1..] {
            steps.extend(self.node(id).edge.steps[1..].iter().cloned());
        }
        Some((best, self.node(best).cost_from_root, JointPath::new(steps)))
    }

    /// True arrival cost of reaching `target` through `parent` over `edge`:
    /// the per-step accumulation of the whole concatenated root path, which
    /// unlike the edge-cost sum charges agents that pause mid-route.
    fn arrival_cost_via(&self, parent: NodeId, edge: &JointPath, target: &JointState) -> Result<Cost> {
        let mut chain = vec![parent];
        let mut cur = parent;
        while let Some(p) = self.node(cur).parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        let mut steps = vec![self.node(chain[0]).state.clone()];
        for &id in &chain[1..] {
            steps.extend(self.node(id).edge.steps[1..].iter().cloned());
        }
        steps.extend(edge.steps[1..].iter().cloned());
        path_cost(&JointPath::new(steps), target)
    }

    /// Cheapest goal-node cost, if any.
    pub fn best_goal_cost(&self) -> Option<Cost> {
        self.goal_nodes
            .iter()
            .map(|&id| self.node(id).cost_from_root)
            .min()
    }

    /// Insert `state` as a child of `parent` over `edge`. The edge must run
    /// from the parent's state to `state`; its cost is the per-step
    /// accumulation. Duplicate states are not rejected here; `extend` handles
    /// deduplication.
    pub fn insert_child(
        &mut self,
        parent: NodeId,
        state: JointState,
        edge: JointPath,
    ) -> Result<NodeId> {
        if !self.is_live(parent) {
            return Err(Error::InvalidInput("insert under a removed node".into()));
        }
        if edge.first() != Some(&self.node(parent).state) || edge.last() != Some(&state) {
            return Err(Error::InvalidInput(
                "edge endpoints do not match parent and child states".into(),
            ));
        }
        let edge_cost = path_cost(&edge, &state)?;
        let id = NodeId(self.slots.len() as u32);
        let cost = self.node(parent).cost_from_root + edge_cost;
        self.slots.push(Some(TreeNode {
            state: state.clone(),
            parent: Some(parent),
            cost_from_root: cost,
            edge,
            children: Vec::new(),
        }));
        self.live += 1;
        self.node_mut(parent).children.push(id);
        self.by_state.entry(state.clone()).or_default().push(id);
        if state == self.goal {
            self.goal_nodes.insert(id);
        }
        self.journal.push(UndoOp::Insert(id));
        Ok(id)
    }

    /// Add `delta` to the costs of `id` and its whole subtree.
    fn shift_subtree_cost(&mut self, id: NodeId, delta: i64) {
        if delta == 0 {
            return;
        }
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            let node = self.node_mut(cur);
            let shifted = i64::from(node.cost_from_root) + delta;
            debug_assert!(shifted >= 0);
            node.cost_from_root = shifted as Cost;
            stack.extend(node.children.iter().copied());
        }
    }

    /// Move `node` under `new_parent` with a fresh edge and cost, shifting
    /// its subtree's costs by the difference.
    fn reparent(&mut self, node: NodeId, new_parent: NodeId, edge: JointPath, new_cost: Cost) {
        let old_parent = self.node(node).parent.expect("cannot reparent the root");
        let old_index = self
            .node(old_parent)
            .children
            .iter()
            .position(|&c| c == node)
            .expect("child missing from its parent");
        self.node_mut(old_parent).children.remove(old_index);
        self.node_mut(new_parent).children.push(node);
        let old_cost = self.node(node).cost_from_root;
        let old_edge = {
            let n = self.node_mut(node);
            n.parent = Some(new_parent);
            std::mem::replace(&mut n.edge, edge)
        };
        self.journal.push(UndoOp::Reparent {
            node,
            old_parent,
            old_index,
            old_edge,
            old_cost,
        });
        self.shift_subtree_cost(node, i64::from(new_cost) - i64::from(old_cost));
    }

    /// Delete a childless non-root node.
    fn remove_node(&mut self, id: NodeId) {
        debug_assert!(self.node(id).children.is_empty());
        let parent = self.node(id).parent.expect("cannot remove the root");
        let parent_index = self
            .node(parent)
            .children
            .iter()
            .position(|&c| c == id)
            .expect("child missing from its parent");
        self.node_mut(parent).children.remove(parent_index);
        let node = self.slots[id.0 as usize].take().expect("removing a dead node");
        self.live -= 1;
        if let Some(ids) = self.by_state.get_mut(&node.state) {
            ids.retain(|&x| x != id);
        }
        self.goal_nodes.remove(&id);
        self.journal.push(UndoOp::Remove {
            id,
            node,
            parent_index,
        });
    }

    /// Grow toward `x_rand`: steer greedily from the nearest node, insert the
    /// reached state under the cheapest near parent, then rewire near nodes
    /// through it. While the tree stands over its cap, a rewiring that empties
    /// its old parent (not the root, not a goal node) deletes that parent.
    pub fn extend(
        &mut self,
        steering: &mut Steering<'_>,
        x_rand: &JointState,
        cfg: &ExtendConfig,
    ) -> Result<ExtendOutcome> {
        let nearest = self.nearest(x_rand)?;
        let steer = steering.connect(&self.node(nearest).state, x_rand, cfg.c_max)?;
        let x_new = steer.reached;
        if self.contains_state(&x_new) {
            return Ok(ExtendOutcome::NoOp);
        }

        // Candidates come from the pre-insertion tree, in id order, plus the
        // nearest node; an oversized near set keeps only the closest entries.
        let mut near = self.near_set(&x_new)?;
        if let Some(cap) = cfg.near_cap {
            if near.len() > cap {
                let mut keyed: Vec<(u64, NodeId)> = near
                    .iter()
                    .map(|&id| (joint_sq_dist(&self.node(id).state, &x_new).unwrap(), id))
                    .collect();
                keyed.sort_unstable();
                keyed.truncate(cap);
                near = keyed.into_iter().map(|(_, id)| id).collect();
                near.sort_unstable();
            }
        }
        if let Err(pos) = near.binary_search(&nearest) {
            near.insert(pos, nearest);
        }

        let mut best_parent = nearest;
        let mut best_cost = self.node(nearest).cost_from_root + steer.cost;
        let mut best_edge = steer.path;
        let mut best_arrival: Option<Cost> = None;
        for &cand in &near {
            if cand == nearest {
                continue;
            }
            let res = steering.connect(&self.node(cand).state, &x_new, cfg.c_max)?;
            if !res.reached_target {
                continue;
            }
            let through = self.node(cand).cost_from_root + res.cost;
            if through > best_cost {
                continue;
            }
            if through == best_cost {
                // Edge-cost sums do not charge agents parked at intermediate
                // edge targets, so ties can hide genuinely longer routes;
                // prefer the candidate whose concatenated path settles every
                // agent earliest.
                let incumbent = match best_arrival {
                    Some(a) => a,
                    None => {
                        let a = self.arrival_cost_via(best_parent, &best_edge, &x_new)?;
                        best_arrival = Some(a);
                        a
                    }
                };
                let challenger = self.arrival_cost_via(cand, &res.path, &x_new)?;
                if challenger >= incumbent {
                    continue;
                }
                best_arrival = Some(challenger);
            } else {
                best_arrival = None;
            }
            best_parent = cand;
            best_cost = through;
            best_edge = res.path;
        }
        let new_id = self.insert_child(best_parent, x_new.clone(), best_edge)?;

        let mut removed_on_rewire = Vec::new();
        for &cand in &near {
            if cand == best_parent || !self.is_live(cand) {
                continue;
            }
            let res = steering.connect(&x_new, &self.node(cand).state, cfg.c_max)?;
            if !res.reached_target {
                continue;
            }
            let through = self.node(new_id).cost_from_root + res.cost;
            if through >= self.node(cand).cost_from_root {
                continue;
            }
            let old_parent = self.node(cand).parent.expect("rewiring cannot reach the root");
            let empties_parent = self.node(old_parent).children == [cand];
            let delete_old_parent = self.over_cap()
                && empties_parent
                && old_parent != self.root
                && !self.goal_nodes.contains(&old_parent);
            self.reparent(cand, new_id, res.path, through);
            if delete_old_parent {
                self.remove_node(old_parent);
                removed_on_rewire.push(old_parent);
            }
        }

        Ok(ExtendOutcome::Extended {
            node: new_id,
            removed_on_rewire,
        })
    }

    /// Delete one uniformly drawn childless node, never the root, a goal
    /// node, or `x_new`. Candidates are enumerated in id order and the index
    /// drawn from `rng`, so a seed fixes the victim. Returns `Restored` when
    /// nothing is eligible, leaving the tree untouched.
    pub fn forced_removal(&mut self, x_new: NodeId, rng: &mut ChaCha8Rng) -> RemovalOutcome {
        let eligible: Vec<NodeId> = self
            .iter()
            .filter(|(id, node)| {
                node.children.is_empty()
                    && *id != x_new
                    && *id != self.root
                    && !self.goal_nodes.contains(id)
            })
            .map(|(id, _)| id)
            .collect();
        if eligible.is_empty() {
            return RemovalOutcome::Restored;
        }
        let victim = eligible[rng.random_range(0..eligible.len())];
        self.remove_node(victim);
        RemovalOutcome::ForceRemoved(victim)
    }

    /// Start a new undoable growth step; mutations before this point become
    /// permanent.
    pub fn begin_step(&mut self) {
        self.journal.clear();
    }

    /// Roll back every mutation since the last `begin_step`, restoring the
    /// snapshot exactly. Node ids consumed meanwhile stay consumed. A no-op
    /// when nothing was mutated.
    pub fn restore(&mut self) {
        while let Some(op) = self.journal.pop() {
            match op {
                UndoOp::Insert(id) => {
                    debug_assert!(self.node(id).children.is_empty());
                    let parent = self.node(id).parent.expect("inserted node has a parent");
                    let pos = self
                        .node(parent)
                        .children
                        .iter()
                        .position(|&c| c == id)
                        .expect("child missing from its parent");
                    self.node_mut(parent).children.remove(pos);
                    let node = self.slots[id.0 as usize].take().unwrap();
                    self.live -= 1;
                    if let Some(ids) = self.by_state.get_mut(&node.state) {
                        ids.retain(|&x| x != id);
                    }
                    self.goal_nodes.remove(&id);
                }
                UndoOp::Reparent {
                    node,
                    old_parent,
                    old_index,
                    old_edge,
                    old_cost,
                } => {
                    let cur_parent = self.node(node).parent.unwrap();
                    let pos = self
                        .node(cur_parent)
                        .children
                        .iter()
                        .position(|&c| c == node)
                        .expect("child missing from its parent");
                    self.node_mut(cur_parent).children.remove(pos);
                    self.node_mut(old_parent).children.insert(old_index, node);
                    let new_cost = self.node(node).cost_from_root;
                    {
                        let n = self.node_mut(node);
                        n.parent = Some(old_parent);
                        n.edge = old_edge;
                    }
                    self.shift_subtree_cost(node, i64::from(old_cost) - i64::from(new_cost));
                }
                UndoOp::Remove {
                    id,
                    node,
                    parent_index,
                } => {
                    let parent = node.parent.expect("removed node had a parent");
                    let state = node.state.clone();
                    self.slots[id.0 as usize] = Some(node);
                    self.live += 1;
                    self.node_mut(parent).children.insert(parent_index, id);
                    self.by_state.entry(state.clone()).or_default().push(id);
                    if state == self.goal {
                        self.goal_nodes.insert(id);
                    }
                }
            }
        }
    }

    /// One JSON document per line: every node (id, parent, state, cost) in id
    /// order, then every edge (from, to, steps).
    pub fn dump_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, node) in self.iter() {
            let doc = json!({
                "type": "node",
                "id": id.0,
                "parent": node.parent.map(|p| p.0),
                "state": &node.state,
                "cost": node.cost_from_root,
            });
            out.push_str(&doc.to_string());
            out.push('\n');
        }
        for (id, node) in self.iter() {
            if let Some(parent) = node.parent {
                let doc = json!({
                    "type": "edge",
                    "from": parent.0,
                    "to": id.0,
                    "steps": &node.edge,
                });
                out.push_str(&doc.to_string());
                out.push('\n');
            }
        }
        out
    }

    /// Full structural audit: connectivity, acyclicity, parent/child
    /// agreement, cost bookkeeping, edge validity against `world`, state
    /// index and goal set consistency, and the node budget.
    pub fn audit(&self, world: &GridWorld) -> std::result::Result<(), String> {
        let mut seen = 0usize;
        for (id, node) in self.iter() {
            seen += 1;
            // Parent linkage and cost bookkeeping.
            match node.parent {
                None => {
                    if id != self.root {
                        return Err(format!("non-root node {id:?} has no parent"));
                    }
                    if node.cost_from_root != 0 {
                        return Err("root cost is not zero".into());
                    }
                    if node.edge.steps != vec![node.state.clone()] {
                        return Err("root edge is not its own single state".into());
                    }
                }
                Some(p) => {
                    if !self.is_live(p) {
                        return Err(format!("node {id:?} has a dead parent"));
                    }
                    let parent = self.node(p);
                    if parent.children.iter().filter(|&&c| c == id).count() != 1 {
                        return Err(format!("node {id:?} not exactly once in its parent's children"));
                    }
                    if node.edge.first() != Some(&parent.state)
                        || node.edge.last() != Some(&node.state)
                    {
                        return Err(format!("edge endpoints of {id:?} do not match"));
                    }
                    let edge_cost = path_cost(&node.edge, &node.state)
                        .map_err(|e| format!("edge cost of {id:?}: {e}"))?;
                    if node.cost_from_root != parent.cost_from_root + edge_cost {
                        return Err(format!("cost bookkeeping of {id:?} is stale"));
                    }
                }
            }
            for &c in &node.children {
                if !self.is_live(c) {
                    return Err(format!("node {id:?} lists a dead child"));
                }
                if self.node(c).parent != Some(id) {
                    return Err(format!("child {c:?} does not point back at {id:?}"));
                }
            }
            // Edge steps are legal, conflict-free moves.
            for w in node.edge.steps.windows(2) {
                for (a, b) in w[0].cells().iter().zip(w[1].cells()) {
                    let legal = world.children(*a).iter().any(|c| c == b);
                    if !legal {
                        return Err(format!("edge of {id:?} contains an illegal move"));
                    }
                }
                if !collision_free(&w[0], &w[1]).map_err(|e| e.to_string())? {
                    return Err(format!("edge of {id:?} contains a conflict"));
                }
            }
            // State index and goal set agreement.
            if !self
                .by_state
                .get(&node.state)
                .is_some_and(|ids| ids.contains(&id))
            {
                return Err(format!("state index misses node {id:?}"));
            }
            if (node.state == self.goal) != self.goal_nodes.contains(&id) {
                return Err(format!("goal set disagrees about node {id:?}"));
            }
        }
        if seen != self.live {
            return Err(format!("live count {} but {} live slots", self.live, seen));
        }
        // Reachability from the root covers every live node exactly once.
        let mut visited = 0usize;
        let mut stack = vec![self.root];
        let mut marks = vec![false; self.slots.len()];
        while let Some(id) = stack.pop() {
            if marks[id.0 as usize] {
                return Err(format!("node {id:?} reached twice; cycle or shared child"));
            }
            marks[id.0 as usize] = true;
            visited += 1;
            stack.extend(self.node(id).children.iter().copied());
        }
        if visited != self.live {
            return Err(format!("{visited} nodes reachable from root, {} live", self.live));
        }
        if let Some(m) = self.cap {
            if self.live > m {
                return Err(format!("tree holds {} nodes over cap {m}", self.live));
            }
        }
        let indexed: usize = self.by_state.values().map(|v| v.len()).sum();
        if indexed != self.live {
            return Err("state index size disagrees with live count".into());
        }
        Ok(())
    }
}
