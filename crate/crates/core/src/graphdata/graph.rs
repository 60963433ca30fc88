use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 24 * 60;
pub const DAYS_PER_WEEK: usize = 7;

/// A road segment (graph node) and its static attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSegment {
    pub id: usize,
    pub length_m: f64,
    pub road_type: usize,
    pub lanes: u32,
    pub traffic_lights: u32,
    /// Minutes between consecutive speed observations.
    pub interval_minutes: u32,
}

impl RoadSegment {
    /// Observation slots per day.
    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.interval_minutes) as usize
    }

    /// Observation slots per week.
    pub fn slots_per_week(&self) -> usize {
        DAYS_PER_WEEK * self.slots_per_day()
    }

    pub fn validate(&self) -> Result<()> {
        let i = self.interval_minutes;
        if i == 0 || MINUTES_PER_DAY % i != 0 {
            return Err(Error::invalid(format!(
                "road {}: interval {i} min must be positive and divide {MINUTES_PER_DAY}",
                self.id
            )));
        }
        if !(self.length_m.is_finite() && self.length_m >= 0.0) {
            return Err(Error::invalid(format!("road {}: bad length {}", self.id, self.length_m)));
        }
        Ok(())
    }
}

/// Undirected road graph with dense node ids `0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadGraph {
    nodes: Vec<RoadSegment>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl RoadGraph {
    /// Nodes may be given in any order; ids must be exactly `0..N`.
    pub fn new(mut nodes: Vec<RoadSegment>, edges: Vec<(usize, usize)>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::invalid(format!(
                    "node ids must be unique and dense in [0, {}); found id {} at rank {i}",
                    nodes.len(),
                    n.id
                )));
            }
            n.validate()?;
        }
        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut canonical = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) references a missing node")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            let (lo, hi) = (a.min(b), a.max(b));
            if adjacency[lo].contains(&hi) {
                return Err(Error::invalid(format!("duplicate edge ({lo}, {hi})")));
            }
            adjacency[lo].push(hi);
            adjacency[hi].push(lo);
            canonical.push((lo, hi));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(RoadGraph {
            nodes,
            edges: canonical,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[RoadSegment] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&RoadSegment> {
        self.nodes
            .get(id)
            .ok_or_else(|| Error::invalid(format!("no road with id {id}")))
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    /// `result[k-1]` holds the nodes at shortest-path distance exactly `k`
    /// from `node`, sorted ascending.
    pub fn k_hop_neighbors(&self, node: usize, hops: usize) -> Result<Vec<Vec<usize>>> {
        if node >= self.len() {
            return Err(Error::invalid(format!("no road with id {node}")));
        }
        if hops == 0 {
            return Err(Error::invalid("hop count must be >= 1"));
        }
        let mut dist = vec![usize::MAX; self.len()];
        let mut rings = vec![Vec::new(); hops];
        let mut queue = VecDeque::from([node]);
        dist[node] = 0;
        while let Some(u) = queue.pop_front() {
            if dist[u] == hops {
                continue;
            }
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    rings[dist[v] - 1].push(v);
                    queue.push_back(v);
                }
            }
        }
        for r in &mut rings {
            r.sort_unstable();
        }
        Ok(rings)
    }
}
