// SPDX-License-Identifier: Apache-2.0

//! Single-pair shortest path under combined link and node weights.
//!
//! Every admissible link is priced as its own weight plus both endpoint node
//! weights, so interior nodes of a multi-link path count once per traversed
//! link. Links whose remaining capacity cannot carry the requested rate are
//! excluded outright. For an off SDN link the admission test uses the
//! capacity it would expose once on, since its weight already carries the
//! switching cost. Ties are broken by the lexicographically smallest node-id
//! sequence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

use crate::capacity::NetworkState;
use crate::model::{Bps, FlowSpec, LinkId, NetworkGraph, NodeId};
use crate::power::{link_weight, node_weight, WeightParams};

/// A routed stage edge: the concrete link walk and its accumulated weight.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutedEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub path: Vec<LinkId>,
    pub weight: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("no feasible path from {from} to {to}")]
    NoFeasiblePath { from: NodeId, to: NodeId },
}

/// Per-flow weight and admissibility tables, built once and shared by every
/// shortest-path query for that flow.
pub struct WeightTable {
    node_w: Vec<f64>,
    link_w: Vec<f64>,
    admissible_capacity: Vec<Bps>,
}

impl WeightTable {
    pub fn build(
        graph: &NetworkGraph,
        state: &NetworkState,
        flow: &FlowSpec,
        params: &WeightParams,
    ) -> Self {
        let node_w = graph
            .nodes()
            .iter()
            .map(|n| node_weight(n, state.node_on(n.id), flow, params))
            .collect();
        let link_w = graph
            .links()
            .iter()
            .map(|l| link_weight(l, state.link_on(l.id), params))
            .collect();
        let admissible_capacity = graph
            .links()
            .iter()
            .map(|l| state.residual_link_would_be(graph, l.id))
            .collect();
        WeightTable {
            node_w,
            link_w,
            admissible_capacity,
        }
    }
}

/// Settled label: distance, node sequence for tie-breaks, traversed links.
type Label = (f64, Vec<NodeId>, Vec<LinkId>);

#[derive(PartialEq)]
struct QueueEntry {
    dist: f64,
    seq: Vec<NodeId>,
    node: NodeId,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the smallest (dist, seq) pops
        // first.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the folded weights, restricted to links that can carry
/// `required_rate`. Returns the empty zero-weight path when the endpoints
/// coincide.
pub fn shortest_path_with(
    graph: &NetworkGraph,
    table: &WeightTable,
    from: NodeId,
    to: NodeId,
    required_rate: Bps,
) -> Result<RoutedEdge, RoutingError> {
    if from == to {
        return Ok(RoutedEdge {
            from,
            to,
            path: Vec::new(),
            weight: 0.0,
        });
    }
    let n = graph.node_count();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[from.index()] = Some((0.0, vec![from], Vec::new()));
    heap.push(QueueEntry {
        dist: 0.0,
        seq: vec![from],
        node: from,
    });

    while let Some(QueueEntry { dist, seq, node }) = heap.pop() {
        if done[node.index()] {
            continue;
        }
        // Stale entry: a better label was settled after this push.
        match &best[node.index()] {
            Some((d, s, _)) if *d == dist && *s == seq => {}
            _ => continue,
        }
        done[node.index()] = true;
        if node == to {
            break;
        }
        for &link_id in graph.incident_links(node) {
            let link = graph.link(link_id).unwrap();
            if required_rate > table.admissible_capacity[link_id.index()] {
                continue;
            }
            let next = link.other_end(node);
            if done[next.index()] {
                continue;
            }
            let step = table.link_w[link_id.index()]
                + table.node_w[node.index()]
                + table.node_w[next.index()];
            let cand_dist = dist + step;
            let improves = match &best[next.index()] {
                None => true,
                Some((d, s, _)) => {
                    cand_dist < *d
                        || (cand_dist == *d && {
                            let mut cand_seq = seq.clone();
                            cand_seq.push(next);
                            cand_seq < *s
                        })
                }
            };
            if improves {
                let mut cand_seq = seq.clone();
                cand_seq.push(next);
                let mut cand_links = best[node.index()].as_ref().unwrap().2.clone();
                cand_links.push(link_id);
                best[next.index()] = Some((cand_dist, cand_seq.clone(), cand_links));
                heap.push(QueueEntry {
                    dist: cand_dist,
                    seq: cand_seq,
                    node: next,
                });
            }
        }
    }

    match best[to.index()].take() {
        Some((dist, _, links)) => Ok(RoutedEdge {
            from,
            to,
            path: links,
            weight: dist,
        }),
        None => Err(RoutingError::NoFeasiblePath { from, to }),
    }
}

/// Convenience wrapper that builds the weight table for one query.
pub fn shortest_path(
    graph: &NetworkGraph,
    state: &NetworkState,
    flow: &FlowSpec,
    from: NodeId,
    to: NodeId,
    required_rate: Bps,
    params: &WeightParams,
) -> Result<RoutedEdge, RoutingError> {
    let table = WeightTable::build(graph, state, flow, params);
    shortest_path_with(graph, &table, from, to, required_rate)
}
