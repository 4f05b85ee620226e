// SPDX-License-Identifier: Apache-2.0

//! Power consumption of nodes and links, and the per-flow weight assignment
//! that steers routing toward components that are already on.
//!
//! Switches draw a constant power when on. Function-hosting nodes follow a
//! linear load model between idle (theta * peak) and peak. Weights price
//! using an on component at a vanishing epsilon and price an off component at
//! the power that switching it on would add.

use thiserror::Error;

use crate::capacity::NetworkState;
use crate::model::{Bps, FlowSpec, Link, NetworkGraph, Node, NodeKind, Watts};

/// Epsilon weights for components that cost nothing extra to use. Strictly
/// positive and far below any switching cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightParams {
    pub epsilon_node: Watts,
    pub epsilon_link: Watts,
}

impl WeightParams {
    pub fn new(epsilon_node: Watts, epsilon_link: Watts) -> Result<Self, PowerError> {
        if epsilon_node <= 0.0 || epsilon_link <= 0.0 {
            return Err(PowerError::NonPositiveEpsilon);
        }
        Ok(WeightParams {
            epsilon_node,
            epsilon_link,
        })
    }

    /// Default sizing: 1e-6 times the smallest positive power rating in the
    /// graph, so that any sum of epsilons stays far below one switching cost.
    pub fn for_graph(graph: &NetworkGraph) -> Self {
        let smallest = graph
            .nodes()
            .iter()
            .map(|n| n.p_max)
            .chain(graph.links().iter().map(|l| l.p_max))
            .filter(|p| *p > 0.0)
            .fold(f64::INFINITY, f64::min);
        let eps = if smallest.is_finite() {
            smallest * 1e-6
        } else {
            1e-6
        };
        WeightParams {
            epsilon_node: eps,
            epsilon_link: eps,
        }
    }
}

/// Which components the power sum covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowerMode {
    /// The optimization objective: every node except legacy switches, plus
    /// SDN links.
    Objective,
    /// Everything that draws power, legacy components included. Used for the
    /// consumption ratio against the all-active reference network.
    Total,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("node {node} ingress {ingress} exceeds capacity {capacity}")]
    IngressExceedsCapacity {
        node: crate::model::NodeId,
        ingress: Bps,
        capacity: Bps,
    },
    #[error("epsilon weights must be strictly positive")]
    NonPositiveEpsilon,
}

/// Power drawn by a node. Switches draw their full rating whenever on;
/// function-hosting nodes scale linearly with ingress between idle and peak.
/// Servers without a modeled node-level ingress draw idle power regardless
/// of load.
pub fn node_power(node: &Node, on: bool, current_ingress: Bps) -> Result<Watts, PowerError> {
    if !on {
        return Ok(0.0);
    }
    match node.kind {
        NodeKind::NonSdnSwitch | NodeKind::SdnSwitch => Ok(node.p_max),
        NodeKind::NfvServer | NodeKind::PhysicalFunctionNode => match node.ingress_capacity {
            Some(cap) => {
                if current_ingress > cap {
                    return Err(PowerError::IngressExceedsCapacity {
                        node: node.id,
                        ingress: current_ingress,
                        capacity: cap,
                    });
                }
                let fraction = current_ingress as f64 / cap as f64;
                Ok((node.theta + (1.0 - node.theta) * fraction) * node.p_max)
            }
            None => Ok(node.theta * node.p_max),
        },
    }
}

/// Power drawn by a link. Legacy links cannot be switched off.
pub fn link_power(link: &Link, on: bool) -> Watts {
    if !link.is_sdn || on {
        link.p_max
    } else {
        0.0
    }
}

/// Routing weight of a node for one flow. On components cost epsilon (or the
/// marginal load power for function hosts); off components cost what
/// switching them on would add.
pub fn node_weight(node: &Node, on: bool, flow: &FlowSpec, params: &WeightParams) -> Watts {
    match node.kind {
        NodeKind::NonSdnSwitch => params.epsilon_node,
        NodeKind::SdnSwitch => {
            if on {
                params.epsilon_node
            } else {
                node.p_max
            }
        }
        NodeKind::NfvServer | NodeKind::PhysicalFunctionNode => {
            if on {
                match node.ingress_capacity {
                    Some(cap) if cap > 0 => {
                        (1.0 - node.theta) * (flow.rate as f64 / cap as f64) * node.p_max
                    }
                    _ => 0.0,
                }
            } else {
                node.theta * node.p_max
            }
        }
    }
}

/// Routing weight of a link for one flow.
pub fn link_weight(link: &Link, on: bool, params: &WeightParams) -> Watts {
    if !link.is_sdn || on {
        params.epsilon_link
    } else {
        link.p_max
    }
}

/// Sum of consumed power over the state, in the chosen accounting mode.
/// Function-hosting nodes are evaluated at their committed ingress.
pub fn total_power(
    graph: &NetworkGraph,
    state: &NetworkState,
    mode: PowerMode,
) -> Result<Watts, PowerError> {
    let mut sum = 0.0;
    for node in graph.nodes() {
        if mode == PowerMode::Objective && node.kind == NodeKind::NonSdnSwitch {
            continue;
        }
        let ingress = state.committed_node_ingress(graph, node.id);
        sum += node_power(node, state.node_on(node.id), ingress)?;
    }
    for link in graph.links() {
        if mode == PowerMode::Objective && !link.is_sdn {
            continue;
        }
        sum += link_power(link, state.link_on(link.id));
    }
    Ok(sum)
}

/// The same state with every component forced on, used as the all-active
/// reference when computing the consumption ratio.
pub fn all_on(graph: &NetworkGraph, state: &NetworkState) -> NetworkState {
    let mut reference = state.clone();
    for node in graph.nodes() {
        reference.turn_on_node(node.id);
    }
    for link in graph.links() {
        reference.turn_on_link(graph, link.id);
    }
    reference
}
