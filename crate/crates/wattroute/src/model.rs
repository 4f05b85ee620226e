// SPDX-License-Identifier: Apache-2.0

//! Domain types: typed nodes and links, the function catalog, traffic flows
//! with ordered service chains, and the validated network graph.

use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Power figure in watts.
pub type Watts = f64;
/// Rate or capacity in bits per second. Capacities are compared and
/// subtracted exactly, so they stay integral.
pub type Bps = u64;

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Node identifier, dense from 0 within a graph.
    NodeId
);
id_type!(
    /// Link identifier, dense from 0 within a graph.
    LinkId
);
id_type!(
    /// Network-function identifier, dense from 0 within a catalog.
    NfId
);
id_type!(
    /// Flow identifier, dense from 0 within a flow set.
    FlowId
);

/// The four node classes. Legacy switches cannot be switched off; SDN
/// switches, NFV servers and fixed-function nodes are under orchestrator
/// control.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NodeKind {
    NonSdnSwitch,
    SdnSwitch,
    NfvServer,
    PhysicalFunctionNode,
}

impl NodeKind {
    /// Whether the orchestrator may toggle this node's power state.
    pub fn is_controllable(self) -> bool {
        self != NodeKind::NonSdnSwitch
    }

    pub fn is_switch(self) -> bool {
        matches!(self, NodeKind::NonSdnSwitch | NodeKind::SdnSwitch)
    }

    /// Nodes that can host service-chain functions.
    pub fn hosts_functions(self) -> bool {
        matches!(self, NodeKind::NfvServer | NodeKind::PhysicalFunctionNode)
    }
}

/// A network node with its power rating and capacity model.
///
/// `resource_capacity` is present exactly for NFV servers; `supported_nfs`
/// exactly for physical function nodes. `ingress_capacity` is mandatory for
/// physical function nodes and optional for servers (when absent, the server
/// has no node-level ingress limit and its power is load-independent).
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub p_max: Watts,
    /// Idle-to-peak power ratio, only meaningful for function-hosting nodes.
    pub theta: f64,
    pub ingress_capacity: Option<Bps>,
    pub resource_capacity: Option<Vec<u64>>,
    pub supported_nfs: Option<BTreeSet<NfId>>,
}

impl Node {
    pub fn non_sdn_switch(id: NodeId, p_max: Watts) -> Self {
        Node {
            id,
            kind: NodeKind::NonSdnSwitch,
            p_max,
            theta: 0.0,
            ingress_capacity: None,
            resource_capacity: None,
            supported_nfs: None,
        }
    }

    pub fn sdn_switch(id: NodeId, p_max: Watts) -> Self {
        Node {
            kind: NodeKind::SdnSwitch,
            ..Node::non_sdn_switch(id, p_max)
        }
    }

    pub fn nfv_server(
        id: NodeId,
        p_max: Watts,
        theta: f64,
        resources: Vec<u64>,
        ingress: Option<Bps>,
    ) -> Self {
        Node {
            id,
            kind: NodeKind::NfvServer,
            p_max,
            theta,
            ingress_capacity: ingress,
            resource_capacity: Some(resources),
            supported_nfs: None,
        }
    }

    pub fn function_node(
        id: NodeId,
        p_max: Watts,
        theta: f64,
        ingress: Bps,
        supported: BTreeSet<NfId>,
    ) -> Self {
        Node {
            id,
            kind: NodeKind::PhysicalFunctionNode,
            p_max,
            theta,
            ingress_capacity: Some(ingress),
            resource_capacity: None,
            supported_nfs: Some(supported),
        }
    }

    /// Whether this physical node runs the given function. Servers host any
    /// function subject to resources, so this is only meaningful for
    /// physical function nodes.
    pub fn supports(&self, nf: NfId) -> bool {
        match &self.supported_nfs {
            Some(set) => set.contains(&nf),
            None => self.kind == NodeKind::NfvServer,
        }
    }
}

/// An undirected physical link.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub endpoints: (NodeId, NodeId),
    pub capacity: Bps,
    /// Fraction of capacity usable for routing, in (0, 1].
    pub utilization_factor: f64,
    pub p_max: Watts,
    /// True when at least one endpoint is not a legacy switch; derived and
    /// checked at construction.
    pub is_sdn: bool,
}

impl Link {
    /// Usable capacity after the utilization margin, floored to whole bits/s.
    pub fn effective_capacity(&self) -> Bps {
        (self.utilization_factor * self.capacity as f64).floor() as Bps
    }

    pub fn other_end(&self, node: NodeId) -> NodeId {
        if self.endpoints.0 == node {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.endpoints.0 == node || self.endpoints.1 == node
    }
}

/// One network function: its per-instance resource demand, the ingress a
/// single virtualized instance can process, and the factor by which it
/// scales a flow's rate on the way out.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkFunction {
    pub id: NfId,
    pub resource_demand: Vec<u64>,
    pub processing_capacity: Bps,
    pub rising_factor: f64,
}

/// Catalog of all functions known to the orchestrator. All demand vectors
/// share the same length (the number of resource types).
#[derive(Clone, Debug, PartialEq)]
pub struct NfCatalog {
    nfs: Vec<NetworkFunction>,
}

impl NfCatalog {
    pub fn new(nfs: Vec<NetworkFunction>) -> Result<Self, ModelError> {
        if nfs.is_empty() {
            return Err(ModelError::InvalidParameter("empty catalog".into()));
        }
        let types = nfs[0].resource_demand.len();
        for (i, nf) in nfs.iter().enumerate() {
            if nf.id.index() != i {
                return Err(ModelError::DuplicateId(format!("nf {}", nf.id)));
            }
            if nf.resource_demand.len() != types {
                return Err(ModelError::InvalidParameter(format!(
                    "nf {} has {} resource types, expected {}",
                    nf.id,
                    nf.resource_demand.len(),
                    types
                )));
            }
            if nf.rising_factor <= 0.0 {
                return Err(ModelError::InvalidParameter(format!(
                    "nf {} rising factor must be positive",
                    nf.id
                )));
            }
        }
        Ok(NfCatalog { nfs })
    }

    pub fn get(&self, id: NfId) -> Option<&NetworkFunction> {
        self.nfs.get(id.index())
    }

    /// Number of resource types (L).
    pub fn resource_types(&self) -> usize {
        self.nfs[0].resource_demand.len()
    }

    pub fn len(&self) -> usize {
        self.nfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nfs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NetworkFunction> {
        self.nfs.iter()
    }
}

/// A traffic flow: endpoints, offered rate, and the ordered chain of
/// functions it must traverse.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub id: FlowId,
    pub source: NodeId,
    pub destination: NodeId,
    pub rate: Bps,
    pub chain: Vec<NfId>,
}

impl FlowSpec {
    pub fn chain_len(&self) -> usize {
        self.chain.len()
    }

    pub fn validate(&self, graph: &NetworkGraph, catalog: &NfCatalog) -> Result<(), ModelError> {
        if self.chain.is_empty() {
            return Err(ModelError::InvalidParameter(format!(
                "flow {} has an empty chain",
                self.id
            )));
        }
        if self.source == self.destination {
            return Err(ModelError::InvalidParameter(format!(
                "flow {} has identical endpoints",
                self.id
            )));
        }
        if self.rate == 0 {
            return Err(ModelError::InvalidParameter(format!(
                "flow {} has zero rate",
                self.id
            )));
        }
        for &end in [self.source, self.destination].iter() {
            if graph.node(end).is_none() {
                return Err(ModelError::UnknownNode(end));
            }
        }
        for &nf in &self.chain {
            if catalog.get(nf).is_none() {
                return Err(ModelError::UnknownFunction(nf));
            }
        }
        Ok(())
    }
}

/// Round a non-negative rate to whole bits/s, half up. Every rate that feeds
/// residual arithmetic goes through this exact same rounding.
pub(crate) fn round_bps(x: f64) -> Bps {
    (x + 0.5).floor() as Bps
}

/// Ingress rate of a flow at chain position `position` (1-based): the offered
/// rate scaled by the rising factors of all upstream functions.
pub fn chain_ingress_rate(
    flow: &FlowSpec,
    catalog: &NfCatalog,
    position: usize,
) -> Result<Bps, ModelError> {
    if position == 0 || position > flow.chain.len() {
        return Err(ModelError::PositionOutOfRange {
            position,
            chain_len: flow.chain.len(),
        });
    }
    let mut factor = 1.0f64;
    for &nf in &flow.chain[..position - 1] {
        let nf = catalog.get(nf).ok_or(ModelError::UnknownFunction(nf))?;
        factor *= nf.rising_factor;
    }
    Ok(round_bps(flow.rate as f64 * factor))
}

/// Rate of the flow after its last chained function, i.e. what the final leg
/// to the destination carries.
pub fn chain_egress_rate(flow: &FlowSpec, catalog: &NfCatalog) -> Result<Bps, ModelError> {
    let mut factor = 1.0f64;
    for &nf in &flow.chain {
        let nf = catalog.get(nf).ok_or(ModelError::UnknownFunction(nf))?;
        factor *= nf.rising_factor;
    }
    Ok(round_bps(flow.rate as f64 * factor))
}

/// Rate carried by leg `leg` of a flow's route. Leg 0 runs from the source to
/// the first placement; leg k to the node hosting position k+1; the final leg
/// (index = chain length) carries the egress rate to the destination.
pub fn leg_rate(flow: &FlowSpec, catalog: &NfCatalog, leg: usize) -> Result<Bps, ModelError> {
    if leg < flow.chain.len() {
        chain_ingress_rate(flow, catalog, leg + 1)
    } else if leg == flow.chain.len() {
        chain_egress_rate(flow, catalog)
    } else {
        Err(ModelError::PositionOutOfRange {
            position: leg,
            chain_len: flow.chain.len(),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate or non-dense id: {0}")]
    DuplicateId(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown network function {0}")]
    UnknownFunction(NfId),
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("node {0} hosts functions but is not attached to exactly one switch")]
    ServerDegreeViolation(NodeId),
    #[error("link {0} has an SDN flag inconsistent with its endpoints")]
    SdnFlagMismatch(LinkId),
    #[error("link {0} is a self-loop")]
    SelfLoop(LinkId),
    #[error("chain position {position} out of range 1..={chain_len}")]
    PositionOutOfRange { position: usize, chain_len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Immutable, validated topology with an adjacency index.
#[derive(Clone, Debug)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    links: Vec<Link>,
    adjacency: Vec<Vec<LinkId>>,
}

impl NetworkGraph {
    /// Validates and indexes a topology. Checks dense ids, parameter ranges,
    /// field presence per node kind, the derived SDN flags, connectivity, and
    /// that every function-hosting node attaches to exactly one switch.
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::InvalidParameter("no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id.index() != i {
                return Err(ModelError::DuplicateId(format!("node {}", node.id)));
            }
            if node.p_max.is_nan() || node.p_max < 0.0 {
                return Err(ModelError::InvalidParameter(format!(
                    "node {} has negative power rating",
                    node.id
                )));
            }
            if !(0.0..=1.0).contains(&node.theta) {
                return Err(ModelError::InvalidParameter(format!(
                    "node {} theta out of [0,1]",
                    node.id
                )));
            }
            match node.kind {
                NodeKind::NfvServer => {
                    if node.resource_capacity.is_none() || node.supported_nfs.is_some() {
                        return Err(ModelError::InvalidParameter(format!(
                            "server {} must carry resources and no fixed function set",
                            node.id
                        )));
                    }
                }
                NodeKind::PhysicalFunctionNode => {
                    if node.supported_nfs.is_none() || node.resource_capacity.is_some() {
                        return Err(ModelError::InvalidParameter(format!(
                            "function node {} must carry a function set and no resources",
                            node.id
                        )));
                    }
                    if node.ingress_capacity.unwrap_or(0) == 0 {
                        return Err(ModelError::InvalidParameter(format!(
                            "function node {} needs a positive ingress capacity",
                            node.id
                        )));
                    }
                }
                _ => {
                    if node.resource_capacity.is_some() || node.supported_nfs.is_some() {
                        return Err(ModelError::InvalidParameter(format!(
                            "switch {} cannot carry server or function fields",
                            node.id
                        )));
                    }
                }
            }
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, link) in links.iter().enumerate() {
            if link.id.index() != i {
                return Err(ModelError::DuplicateId(format!("link {}", link.id)));
            }
            let (u, v) = link.endpoints;
            if u == v {
                return Err(ModelError::SelfLoop(link.id));
            }
            for end in [u, v] {
                if end.index() >= nodes.len() {
                    return Err(ModelError::UnknownNode(end));
                }
            }
            if link.capacity == 0 {
                return Err(ModelError::InvalidParameter(format!(
                    "link {} has zero capacity",
                    link.id
                )));
            }
            if !(link.utilization_factor > 0.0 && link.utilization_factor <= 1.0) {
                return Err(ModelError::InvalidParameter(format!(
                    "link {} utilization factor out of (0,1]",
                    link.id
                )));
            }
            if link.p_max.is_nan() || link.p_max < 0.0 {
                return Err(ModelError::InvalidParameter(format!(
                    "link {} has negative power rating",
                    link.id
                )));
            }
            let derived_sdn = nodes[u.index()].kind != NodeKind::NonSdnSwitch
                || nodes[v.index()].kind != NodeKind::NonSdnSwitch;
            if link.is_sdn != derived_sdn {
                return Err(ModelError::SdnFlagMismatch(link.id));
            }
            adjacency[u.index()].push(link.id);
            adjacency[v.index()].push(link.id);
        }

        // Function-hosting nodes hang off exactly one switch.
        for node in &nodes {
            if node.kind.hosts_functions() {
                let incident = &adjacency[node.id.index()];
                let attached_to_switch = incident.len() == 1
                    && nodes[links[incident[0].index()].other_end(node.id).index()]
                        .kind
                        .is_switch();
                if !attached_to_switch {
                    return Err(ModelError::ServerDegreeViolation(node.id));
                }
            }
        }

        // Connectivity over the undirected graph.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![NodeId(0)];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &l in &adjacency[u.index()] {
                let v = links[l.index()].other_end(u);
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(ModelError::DisconnectedGraph);
        }

        Ok(NetworkGraph {
            nodes,
            links,
            adjacency,
        })
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.index())
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.get(id.index())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn incident_links(&self, node: NodeId) -> &[LinkId] {
        &self.adjacency[node.index()]
    }

    /// Nodes that can host chain functions (servers and fixed-function
    /// nodes), in id order.
    pub fn function_hosts(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind.hosts_functions())
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_switch_graph() -> (Vec<Node>, Vec<Link>) {
        let nodes = vec![
            Node::sdn_switch(NodeId(0), 10.0),
            Node::sdn_switch(NodeId(1), 10.0),
        ];
        let links = vec![Link {
            id: LinkId(0),
            endpoints: (NodeId(0), NodeId(1)),
            capacity: 1_000,
            utilization_factor: 1.0,
            p_max: 5.0,
            is_sdn: true,
        }];
        (nodes, links)
    }

    #[test]
    fn minimal_graph_builds() {
        let (nodes, links) = two_switch_graph();
        let g = NetworkGraph::new(nodes, links).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.link_count(), 1);
    }

    #[test]
    fn server_with_two_links_rejected() {
        let nodes = vec![
            Node::sdn_switch(NodeId(0), 10.0),
            Node::sdn_switch(NodeId(1), 10.0),
            Node::nfv_server(NodeId(2), 50.0, 0.5, vec![16], None),
        ];
        let mk = |id, u, v| Link {
            id: LinkId(id),
            endpoints: (NodeId(u), NodeId(v)),
            capacity: 1_000,
            utilization_factor: 1.0,
            p_max: 5.0,
            is_sdn: true,
        };
        let links = vec![mk(0, 0, 1), mk(1, 0, 2), mk(2, 1, 2)];
        let err = NetworkGraph::new(nodes, links).unwrap_err();
        assert_eq!(err, ModelError::ServerDegreeViolation(NodeId(2)));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let nodes = vec![
            Node::sdn_switch(NodeId(0), 10.0),
            Node::sdn_switch(NodeId(1), 10.0),
            Node::sdn_switch(NodeId(2), 10.0),
        ];
        let links = vec![Link {
            id: LinkId(0),
            endpoints: (NodeId(0), NodeId(1)),
            capacity: 1_000,
            utilization_factor: 1.0,
            p_max: 5.0,
            is_sdn: true,
        }];
        assert_eq!(
            NetworkGraph::new(nodes, links).unwrap_err(),
            ModelError::DisconnectedGraph
        );
    }

    #[test]
    fn sdn_flag_mismatch_rejected() {
        let (nodes, mut links) = two_switch_graph();
        links[0].is_sdn = false;
        assert_eq!(
            NetworkGraph::new(nodes, links).unwrap_err(),
            ModelError::SdnFlagMismatch(LinkId(0))
        );
    }

    #[test]
    fn validation_is_idempotent() {
        let (nodes, links) = two_switch_graph();
        let g = NetworkGraph::new(nodes, links).unwrap();
        let again = NetworkGraph::new(g.nodes().to_vec(), g.links().to_vec());
        assert!(again.is_ok());
    }

    fn gamma_catalog(gammas: &[f64]) -> NfCatalog {
        NfCatalog::new(
            gammas
                .iter()
                .enumerate()
                .map(|(i, &g)| NetworkFunction {
                    id: NfId(i as u32),
                    resource_demand: vec![1],
                    processing_capacity: 1_000_000_000,
                    rising_factor: g,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn chain_ingress_examples() {
        let catalog = gamma_catalog(&[1.0, 1.1, 1.0]);
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 100,
            chain: vec![NfId(0), NfId(1), NfId(2)],
        };
        assert_eq!(chain_ingress_rate(&flow, &catalog, 1).unwrap(), 100);
        assert_eq!(chain_ingress_rate(&flow, &catalog, 3).unwrap(), 110);
        assert!(matches!(
            chain_ingress_rate(&flow, &catalog, 4),
            Err(ModelError::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn chain_ingress_five_function_chain() {
        // Rising factors (1, 1.1, 1, 1, 1.05): position 5 sees the product of
        // the first four, 1.1.
        let catalog = gamma_catalog(&[1.0, 1.1, 1.0, 1.0, 1.05]);
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 100,
            chain: (0..5).map(NfId).collect(),
        };
        assert_eq!(chain_ingress_rate(&flow, &catalog, 5).unwrap(), 110);
        assert_eq!(chain_egress_rate(&flow, &catalog).unwrap(), 116);
    }

    #[test]
    fn flat_gamma_keeps_rate_constant() {
        let catalog = gamma_catalog(&[1.0, 1.0, 1.0, 1.0]);
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 12_345,
            chain: (0..4).map(NfId).collect(),
        };
        for k in 1..=4 {
            assert_eq!(chain_ingress_rate(&flow, &catalog, k).unwrap(), 12_345);
        }
    }

    #[test]
    fn monotone_when_gammas_at_least_one() {
        let catalog = gamma_catalog(&[1.0, 1.2, 1.05, 1.1]);
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 500,
            chain: (0..4).map(NfId).collect(),
        };
        let rates: Vec<_> = (1..=4)
            .map(|k| chain_ingress_rate(&flow, &catalog, k).unwrap())
            .collect();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
    }

    #[test]
    fn node_kinds_partition_every_generated_graph() {
        use crate::scenarios;
        for spec in [
            scenarios::small(3),
            scenarios::structure_preset(5, 3),
            scenarios::structure_preset(4, 9),
        ] {
            let s = scenarios::generate(&spec).unwrap();
            let total: usize = [
                NodeKind::NonSdnSwitch,
                NodeKind::SdnSwitch,
                NodeKind::NfvServer,
                NodeKind::PhysicalFunctionNode,
            ]
            .iter()
            .map(|&k| s.graph.count_kind(k))
            .sum();
            assert_eq!(total, s.graph.node_count());
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn chain_ingress_monotone_for_amplifying_chains(
            rate in 1u64..1_000_000_000,
            gammas in proptest::collection::vec(1.0f64..1.3, 1..6),
        ) {
            let catalog = gamma_catalog(&gammas);
            let flow = FlowSpec {
                id: FlowId(0),
                source: NodeId(0),
                destination: NodeId(1),
                rate,
                chain: (0..gammas.len() as u32).map(NfId).collect(),
            };
            let rates: Vec<Bps> = (1..=gammas.len())
                .map(|k| chain_ingress_rate(&flow, &catalog, k).unwrap())
                .collect();
            proptest::prop_assert!(rates.windows(2).all(|w| w[0] <= w[1]));
            proptest::prop_assert_eq!(rates[0], rate);
        }
    }
}
