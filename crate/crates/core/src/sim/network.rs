//! Random graph and node liveness.

use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DisableCause {
    Overload,
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeState {
    Alive,
    Disabled(DisableCause),
}

/// Result of choosing the host of the next subtransaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    NextNode(NodeId),
    NoRoute,
}

/// Undirected simple graph with per-node liveness.
///
/// Besides the adjacency lists the network keeps, for every node, the number
/// of alive neighbors and a dense list of alive nodes, so that routing and
/// source selection stay O(1) on average.
#[derive(Debug, Clone)]
pub struct Network {
    adjacency: Vec<Vec<NodeId>>,
    states: Vec<NodeState>,
    alive_neighbors: Vec<u32>,
    alive: Vec<NodeId>,
    alive_pos: Vec<u32>,
}

impl Network {
    /// Build a network from an edge list. Self-loops and duplicate edges are
    /// dropped.
    pub fn from_edges(n_nodes: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut adjacency = vec![Vec::new(); n_nodes];
        for (a, b) in edges {
            if a != b {
                adjacency[a as usize].push(b);
                adjacency[b as usize].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let alive_neighbors = adjacency.iter().map(|l| l.len() as u32).collect();
        Network {
            adjacency,
            states: vec![NodeState::Alive; n_nodes],
            alive_neighbors,
            alive: (0..n_nodes as NodeId).collect(),
            alive_pos: (0..n_nodes as u32).collect(),
        }
    }

    /// G(n, p): each unordered pair is an edge independently with
    /// probability `density`.
    pub fn generate(n_nodes: usize, density: f64, rng: &mut SimRng) -> Self {
        let mut edges = Vec::new();
        if density > 0.0 {
            for a in 0..n_nodes as NodeId {
                for b in (a + 1)..n_nodes as NodeId {
                    if rng.unit() < density {
                        edges.push((a, b));
                    }
                }
            }
        }
        Self::from_edges(n_nodes, edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.states.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node as usize]
    }

    pub fn state(&self, node: NodeId) -> NodeState {
        self.states[node as usize]
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.states[node as usize] == NodeState::Alive
    }

    pub fn alive_count(&self) -> usize {
        self.alive.len()
    }

    pub fn alive_neighbor_count(&self, node: NodeId) -> usize {
        self.alive_neighbors[node as usize] as usize
    }

    /// Uniformly chosen alive node, or `None` when every node is disabled.
    pub fn random_alive(&self, rng: &mut SimRng) -> Option<NodeId> {
        if self.alive.is_empty() {
            None
        } else {
            Some(self.alive[rng.index(self.alive.len())])
        }
    }

    /// Disable `node`. Returns `false` if it was already disabled, in which
    /// case its state and cause are left untouched.
    pub fn disable(&mut self, node: NodeId, cause: DisableCause) -> bool {
        let idx = node as usize;
        if self.states[idx] != NodeState::Alive {
            return false;
        }
        self.states[idx] = NodeState::Disabled(cause);
        let pos = self.alive_pos[idx] as usize;
        let last = *self.alive.last().expect("alive list holds the node");
        self.alive.swap_remove(pos);
        if last != node {
            self.alive_pos[last as usize] = pos as u32;
        }
        for &nb in &self.adjacency[idx] {
            self.alive_neighbors[nb as usize] -= 1;
        }
        true
    }

    /// Pick the host of the next subtransaction uniformly among the alive
    /// neighbors of `current`. `current` itself is never a candidate since
    /// the graph has no self-loops.
    pub fn route_next(&self, current: NodeId, rng: &mut SimRng) -> Route {
        let neighbors = &self.adjacency[current as usize];
        let alive = self.alive_neighbors[current as usize] as usize;
        if alive == 0 {
            return Route::NoRoute;
        }
        if alive == neighbors.len() {
            return Route::NextNode(neighbors[rng.index(neighbors.len())]);
        }
        if alive * 8 >= neighbors.len() {
            // Redraw on disabled neighbors; at most 8 expected draws.
            loop {
                let cand = neighbors[rng.index(neighbors.len())];
                if self.is_alive(cand) {
                    return Route::NextNode(cand);
                }
            }
        }
        let k = rng.index(alive);
        let cand = neighbors
            .iter()
            .copied()
            .filter(|&nb| self.is_alive(nb))
            .nth(k)
            .expect("alive neighbor count is consistent");
        Route::NextNode(cand)
    }
}
