// SPDX-License-Identifier: Apache-2.0

//! Mutable network state: on/off flags, the placed-VNF registry, and exact
//! integer residual bookkeeping for server resources, node ingress, per-VNF
//! ingress and link loads. Commits are transactional, and a from-scratch
//! validator audits any candidate or final solution against the full
//! constraint set (tags C1..C11 in reports).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::model::{
    leg_rate, Bps, FlowId, FlowSpec, LinkId, ModelError, NetworkGraph, NfCatalog, NfId, NodeId,
    NodeKind,
};

/// On/off states plus committed usage. Residuals are derived on demand so
/// that incremental updates and from-scratch recomputation agree exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    node_on: Vec<bool>,
    link_on: Vec<bool>,
    placed_vnfs: BTreeSet<(NodeId, NfId)>,
    /// Per server, committed resource usage per type (empty for non-servers).
    server_used: Vec<Vec<u64>>,
    /// Committed ingress on physical function nodes, counted once per run of
    /// consecutive same-node placements.
    node_ingress_used: Vec<Bps>,
    /// Committed ingress per placed VNF instance.
    vnf_ingress_used: BTreeMap<(NodeId, NfId), Bps>,
    /// Committed load per link.
    link_used: Vec<Bps>,
}

impl NetworkState {
    /// Initial state for a fresh flow set: every controllable component off,
    /// legacy components on, nothing placed.
    pub fn new(graph: &NetworkGraph) -> Self {
        let node_on = graph
            .nodes()
            .iter()
            .map(|n| !n.kind.is_controllable())
            .collect();
        let link_on = graph.links().iter().map(|l| !l.is_sdn).collect();
        let server_used = graph
            .nodes()
            .iter()
            .map(|n| match &n.resource_capacity {
                Some(c) => vec![0u64; c.len()],
                None => Vec::new(),
            })
            .collect();
        NetworkState {
            node_on,
            link_on,
            placed_vnfs: BTreeSet::new(),
            server_used,
            node_ingress_used: vec![0; graph.node_count()],
            vnf_ingress_used: BTreeMap::new(),
            link_used: vec![0; graph.link_count()],
        }
    }

    pub fn node_on(&self, id: NodeId) -> bool {
        self.node_on[id.index()]
    }

    pub fn link_on(&self, id: LinkId) -> bool {
        self.link_on[id.index()]
    }

    pub fn is_vnf_placed(&self, node: NodeId, nf: NfId) -> bool {
        self.placed_vnfs.contains(&(node, nf))
    }

    pub fn placed_vnfs(&self) -> impl Iterator<Item = &(NodeId, NfId)> {
        self.placed_vnfs.iter()
    }

    pub fn nodes_on(&self) -> usize {
        self.node_on.iter().filter(|&&b| b).count()
    }

    pub fn links_on(&self) -> usize {
        self.link_on.iter().filter(|&&b| b).count()
    }

    pub fn link_load(&self, id: LinkId) -> Bps {
        self.link_used[id.index()]
    }

    /// Committed ingress of a node: the once-per-run node ingress for
    /// physical nodes, the sum over hosted VNF instances for servers.
    pub fn committed_node_ingress(&self, graph: &NetworkGraph, node: NodeId) -> Bps {
        match graph.node(node).map(|n| n.kind) {
            Some(NodeKind::PhysicalFunctionNode) => self.node_ingress_used[node.index()],
            Some(NodeKind::NfvServer) => self
                .vnf_ingress_used
                .range((node, NfId(0))..=(node, NfId(u32::MAX)))
                .map(|(_, v)| *v)
                .sum(),
            _ => 0,
        }
    }

    /// Remaining server resources, evaluated as if the node were on: the
    /// search may switch it on, with the switching cost carried by weights.
    pub fn residual_server_resources(&self, graph: &NetworkGraph, node: NodeId) -> Vec<u64> {
        let cap = graph
            .node(node)
            .and_then(|n| n.resource_capacity.as_ref())
            .cloned()
            .unwrap_or_default();
        cap.iter()
            .zip(self.server_used[node.index()].iter())
            .map(|(c, u)| c.saturating_sub(*u))
            .collect()
    }

    /// Remaining node-level ingress of a physical function node, as if on.
    pub fn residual_node_ingress(&self, graph: &NetworkGraph, node: NodeId) -> Bps {
        let cap = graph
            .node(node)
            .and_then(|n| n.ingress_capacity)
            .unwrap_or(0);
        cap.saturating_sub(self.node_ingress_used[node.index()])
    }

    /// Remaining ingress of the VNF instance of `nf` on `node`; full
    /// processing capacity when no instance exists yet.
    pub fn residual_vnf_ingress(&self, catalog: &NfCatalog, node: NodeId, nf: NfId) -> Bps {
        let cap = catalog.get(nf).map(|f| f.processing_capacity).unwrap_or(0);
        cap.saturating_sub(*self.vnf_ingress_used.get(&(node, nf)).unwrap_or(&0))
    }

    /// Remaining link capacity gated by the link's power state: an off SDN
    /// link exposes zero until something switches it on.
    pub fn residual_link(&self, graph: &NetworkGraph, link: LinkId) -> Bps {
        if !self.link_on[link.index()] {
            return 0;
        }
        self.residual_link_would_be(graph, link)
    }

    /// Remaining link capacity if the link were (or is) on. Off links carry
    /// no committed load, so this is simply effective capacity minus load.
    pub fn residual_link_would_be(&self, graph: &NetworkGraph, link: LinkId) -> Bps {
        let eff = graph
            .link(link)
            .map(|l| l.effective_capacity())
            .unwrap_or(0);
        eff.saturating_sub(self.link_used[link.index()])
    }

    pub(crate) fn turn_on_node(&mut self, node: NodeId) {
        self.node_on[node.index()] = true;
    }

    pub(crate) fn turn_on_link(&mut self, graph: &NetworkGraph, link: LinkId) {
        self.link_on[link.index()] = true;
        let (u, v) = graph.link(link).unwrap().endpoints;
        self.node_on[u.index()] = true;
        self.node_on[v.index()] = true;
    }

    pub(crate) fn add_link_load(&mut self, link: LinkId, rate: Bps) {
        self.link_used[link.index()] += rate;
    }

    pub(crate) fn place_vnf(&mut self, node: NodeId, nf: &crate::model::NetworkFunction) {
        self.placed_vnfs.insert((node, nf.id));
        let used = &mut self.server_used[node.index()];
        for (u, d) in used.iter_mut().zip(nf.resource_demand.iter()) {
            *u += *d;
        }
    }

    pub(crate) fn add_vnf_ingress(&mut self, node: NodeId, nf: NfId, rate: Bps) {
        *self.vnf_ingress_used.entry((node, nf)).or_insert(0) += rate;
    }

    pub(crate) fn add_node_ingress(&mut self, node: NodeId, rate: Bps) {
        self.node_ingress_used[node.index()] += rate;
    }

    /// Per-placement resource check: does the function's demand fit the
    /// server's remaining resources (as if on)?
    pub fn check_resources(
        &self,
        graph: &NetworkGraph,
        node: NodeId,
        nf: &crate::model::NetworkFunction,
    ) -> bool {
        let residual = self.residual_server_resources(graph, node);
        residual.len() == nf.resource_demand.len()
            && nf
                .resource_demand
                .iter()
                .zip(residual.iter())
                .all(|(d, r)| d <= r)
    }

    /// Node-level ingress check for physical function nodes. A placement
    /// immediately after one on the same node (`zeta` false) consumes no new
    /// ingress and always passes.
    pub fn check_node_ingress(
        &self,
        graph: &NetworkGraph,
        node: NodeId,
        ingress: Bps,
        zeta: bool,
    ) -> bool {
        !zeta || ingress <= self.residual_node_ingress(graph, node)
    }

    /// Per-instance ingress check for a VNF already placed on a server.
    pub fn check_vnf_ingress(
        &self,
        catalog: &NfCatalog,
        node: NodeId,
        nf: NfId,
        ingress: Bps,
    ) -> bool {
        ingress <= self.residual_vnf_ingress(catalog, node, nf)
    }

    /// Link admission check against the power-gated residual.
    pub fn check_link_capacity(&self, graph: &NetworkGraph, link: LinkId, rate: Bps) -> bool {
        rate <= self.residual_link(graph, link)
    }

    /// Transactionally applies an assignment: validates it against the
    /// current state first and leaves the state untouched on failure.
    pub fn commit(
        &mut self,
        graph: &NetworkGraph,
        catalog: &NfCatalog,
        flow: &FlowSpec,
        assignment: &Assignment,
    ) -> Result<(), CapacityError> {
        validate_assignment(graph, catalog, flow, assignment, self)?;
        self.apply_unchecked(graph, catalog, flow, assignment)
            .expect("validated assignment must apply");
        Ok(())
    }

    /// Applies placements and route loads without the aggregate pre-checks.
    /// Used by commit (after validation) and by the from-scratch replay.
    fn apply_unchecked(
        &mut self,
        graph: &NetworkGraph,
        catalog: &NfCatalog,
        flow: &FlowSpec,
        assignment: &Assignment,
    ) -> Result<(), ModelError> {
        for (leg_idx, leg) in assignment.route.iter().enumerate() {
            let rate = leg_rate(flow, catalog, leg_idx)?;
            for &link in leg {
                self.turn_on_link(graph, link);
                self.add_link_load(link, rate);
            }
        }
        for (i, &(position, node)) in assignment.placements.iter().enumerate() {
            self.turn_on_node(node);
            let nf_id = flow.chain[position - 1];
            let nf = catalog
                .get(nf_id)
                .ok_or(ModelError::UnknownFunction(nf_id))?;
            let ingress = leg_rate(flow, catalog, position - 1)?;
            match graph.node(node).map(|n| n.kind) {
                Some(NodeKind::NfvServer) => {
                    if !self.is_vnf_placed(node, nf_id) {
                        self.place_vnf(node, nf);
                    }
                    self.add_vnf_ingress(node, nf_id, ingress);
                }
                Some(NodeKind::PhysicalFunctionNode) => {
                    if assignment.zeta[i] {
                        self.add_node_ingress(node, ingress);
                    }
                }
                _ => return Err(ModelError::UnknownNode(node)),
            }
        }
        Ok(())
    }
}

/// A served flow: where each chain position runs and the concrete route.
///
/// `route` holds one leg per hop of the logical walk: leg 0 from the source
/// to the first placement, then one leg between consecutive placements, and a
/// final leg to the destination (chain length + 1 legs in total). A leg is
/// empty exactly when its endpoints coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub flow: FlowId,
    /// (1-based chain position, hosting node), in chain order.
    pub placements: Vec<(usize, NodeId)>,
    pub route: Vec<Vec<LinkId>>,
    /// Per position: false when the previous position sits on the same
    /// physical function node, so its ingress is not charged again.
    pub zeta: Vec<bool>,
}

impl Assignment {
    /// Builds an assignment and derives the per-position ingress-charging
    /// flags from the placement sequence.
    pub fn new(
        graph: &NetworkGraph,
        flow: FlowId,
        placements: Vec<(usize, NodeId)>,
        route: Vec<Vec<LinkId>>,
    ) -> Self {
        let zeta = derive_zeta(graph, &placements);
        Assignment {
            flow,
            placements,
            route,
            zeta,
        }
    }
}

fn derive_zeta(graph: &NetworkGraph, placements: &[(usize, NodeId)]) -> Vec<bool> {
    placements
        .iter()
        .enumerate()
        .map(|(i, &(_, node))| {
            if i == 0 {
                return true;
            }
            let same = placements[i - 1].1 == node;
            let physical = graph
                .node(node)
                .map(|n| n.kind == NodeKind::PhysicalFunctionNode)
                .unwrap_or(false);
            !(same && physical)
        })
        .collect()
}

/// Constraint tags used in validation reports and the solution-file format.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Constraint {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    C11,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", *self as u8 + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub ids: Vec<u64>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constraint)?;
        for id in &self.ids {
            write!(f, " {id}")?;
        }
        Ok(())
    }
}

/// Violations found while auditing a solution. Empty means feasible.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, constraint: Constraint, ids: Vec<u64>) {
        self.violations.push(Violation { constraint, ids });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("assignment failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Walks a leg from `start`, following shared endpoints, and returns the far
/// end. None when the links do not chain.
fn walk_leg(graph: &NetworkGraph, start: NodeId, leg: &[LinkId]) -> Option<NodeId> {
    let mut at = start;
    for &l in leg {
        let link = graph.link(l)?;
        if !link.touches(at) {
            return None;
        }
        at = link.other_end(at);
    }
    Some(at)
}

/// Pre-commit validation of a single assignment against the current state.
///
/// Structural checks (chain coverage, eligibility, route continuity) plus
/// aggregate capacity checks that double-charge anything the assignment
/// itself uses twice. Capacity residuals are evaluated as if every component
/// the route touches were on; on/off gating is audited post-commit by
/// [`validate_solution`].
pub fn validate_assignment(
    graph: &NetworkGraph,
    catalog: &NfCatalog,
    flow: &FlowSpec,
    assignment: &Assignment,
    state: &NetworkState,
) -> Result<(), CapacityError> {
    let mut report = ValidationReport::default();
    check_structure(graph, catalog, flow, assignment, &mut report);
    if report.is_clean() {
        check_capacity_fit(graph, catalog, flow, assignment, state, &mut report);
    }
    if report.is_clean() {
        Ok(())
    } else {
        Err(CapacityError::ValidationFailed(report))
    }
}

fn check_structure(
    graph: &NetworkGraph,
    catalog: &NfCatalog,
    flow: &FlowSpec,
    assignment: &Assignment,
    report: &mut ValidationReport,
) {
    let k = flow.chain.len();
    // C4: every position exactly once, in order.
    let positions_ok = assignment.placements.len() == k
        && assignment
            .placements
            .iter()
            .enumerate()
            .all(|(i, &(p, _))| p == i + 1);
    if !positions_ok {
        report.push(Constraint::C4, vec![flow.id.0 as u64]);
        return;
    }
    if assignment.route.len() != k + 1 {
        report.push(Constraint::C9, vec![flow.id.0 as u64]);
        return;
    }
    // C3: hosts must be able to run their function.
    for &(position, node) in &assignment.placements {
        let nf = flow.chain[position - 1];
        let eligible = graph
            .node(node)
            .map(|n| n.kind.hosts_functions() && n.supports(nf))
            .unwrap_or(false);
        if !eligible {
            report.push(Constraint::C3, vec![node.0 as u64, nf.0 as u64]);
        }
    }
    // C8..C10: the legs concatenate into one walk source -> placements in
    // chain order -> destination.
    let mut waypoints = vec![flow.source];
    waypoints.extend(assignment.placements.iter().map(|&(_, n)| n));
    waypoints.push(flow.destination);
    for (i, leg) in assignment.route.iter().enumerate() {
        let from = waypoints[i];
        let to = waypoints[i + 1];
        let tag = if i == 0 {
            Constraint::C8
        } else if i == assignment.route.len() - 1 {
            Constraint::C10
        } else {
            Constraint::C9
        };
        match walk_leg(graph, from, leg) {
            Some(end) if end == to => {}
            _ => report.push(tag, vec![flow.id.0 as u64, i as u64]),
        }
    }
    let _ = catalog;
}

fn check_capacity_fit(
    graph: &NetworkGraph,
    catalog: &NfCatalog,
    flow: &FlowSpec,
    assignment: &Assignment,
    state: &NetworkState,
    report: &mut ValidationReport,
) {
    // Aggregate link demand over all legs.
    let mut link_demand: BTreeMap<LinkId, Bps> = BTreeMap::new();
    for (leg_idx, leg) in assignment.route.iter().enumerate() {
        let rate = match leg_rate(flow, catalog, leg_idx) {
            Ok(r) => r,
            Err(_) => return report.push(Constraint::C9, vec![flow.id.0 as u64]),
        };
        for &link in leg {
            *link_demand.entry(link).or_insert(0) += rate;
        }
    }
    for (link, demand) in &link_demand {
        if *demand > state.residual_link_would_be(graph, *link) {
            report.push(Constraint::C11, vec![link.0 as u64]);
        }
    }

    // Aggregate node-side demands, double-charging repeated use within this
    // assignment. Fresh placements are those not in the global registry and
    // not placed earlier in this very walk.
    let mut fresh: BTreeSet<(NodeId, NfId)> = BTreeSet::new();
    let mut slot_demand: BTreeMap<NodeId, Vec<u64>> = BTreeMap::new();
    let mut vnf_demand: BTreeMap<(NodeId, NfId), Bps> = BTreeMap::new();
    let mut node_demand: BTreeMap<NodeId, Bps> = BTreeMap::new();
    for (i, &(position, node)) in assignment.placements.iter().enumerate() {
        let nf_id = flow.chain[position - 1];
        let Some(nf) = catalog.get(nf_id) else {
            report.push(Constraint::C3, vec![node.0 as u64, nf_id.0 as u64]);
            continue;
        };
        let ingress = match leg_rate(flow, catalog, position - 1) {
            Ok(r) => r,
            Err(_) => continue,
        };
        match graph.node(node).map(|n| n.kind) {
            Some(NodeKind::NfvServer) => {
                if !state.is_vnf_placed(node, nf_id) && fresh.insert((node, nf_id)) {
                    let entry = slot_demand
                        .entry(node)
                        .or_insert_with(|| vec![0; catalog.resource_types()]);
                    for (s, d) in entry.iter_mut().zip(nf.resource_demand.iter()) {
                        *s += *d;
                    }
                }
                *vnf_demand.entry((node, nf_id)).or_insert(0) += ingress;
            }
            Some(NodeKind::PhysicalFunctionNode) if assignment.zeta[i] => {
                *node_demand.entry(node).or_insert(0) += ingress;
            }
            _ => {}
        }
    }
    for (node, demand) in &slot_demand {
        let residual = state.residual_server_resources(graph, *node);
        if demand.iter().zip(residual.iter()).any(|(d, r)| d > r) {
            report.push(Constraint::C5, vec![node.0 as u64]);
        }
    }
    for ((node, nf), demand) in &vnf_demand {
        if *demand > state.residual_vnf_ingress(catalog, *node, *nf) {
            report.push(Constraint::C7, vec![node.0 as u64, nf.0 as u64]);
        }
    }
    for (node, demand) in &node_demand {
        if *demand > state.residual_node_ingress(graph, *node) {
            report.push(Constraint::C6, vec![node.0 as u64]);
        }
    }
}

/// Rebuilds the state a sequence of assignments should produce, by direct
/// summation from scratch. This is the independent route used to audit the
/// incremental bookkeeping.
pub fn recompute_state(
    graph: &NetworkGraph,
    catalog: &NfCatalog,
    flows: &[FlowSpec],
    assignments: &[Assignment],
) -> Result<NetworkState, CapacityError> {
    let mut state = NetworkState::new(graph);
    for assignment in assignments {
        let flow = flows
            .iter()
            .find(|f| f.id == assignment.flow)
            .ok_or_else(|| ModelError::InvalidParameter(format!("flow {}", assignment.flow)))?;
        state.apply_unchecked(graph, catalog, flow, assignment)?;
    }
    Ok(state)
}

/// Replays a solution from the initial state and audits every constraint,
/// reporting each violation with its tag and the offending ids.
pub fn validate_solution(
    graph: &NetworkGraph,
    catalog: &NfCatalog,
    flows: &[FlowSpec],
    assignments: &[Assignment],
) -> ValidationReport {
    let mut report = ValidationReport::default();
    for assignment in assignments {
        let Some(flow) = flows.iter().find(|f| f.id == assignment.flow) else {
            report.push(Constraint::C4, vec![assignment.flow.0 as u64]);
            continue;
        };
        check_structure(graph, catalog, flow, assignment, &mut report);
    }
    let state = match recompute_state(graph, catalog, flows, assignments) {
        Ok(s) => s,
        Err(_) => return report,
    };
    audit_state(graph, catalog, &state, &mut report);
    report
}

/// Audits the state-level constraints (power-state coupling and gated
/// capacities) on an arbitrary state.
pub fn audit_state(
    graph: &NetworkGraph,
    catalog: &NfCatalog,
    state: &NetworkState,
    report: &mut ValidationReport,
) {
    // C1: an on link needs both endpoints on.
    for link in graph.links() {
        if state.link_on(link.id) {
            let (u, v) = link.endpoints;
            if !state.node_on(u) || !state.node_on(v) {
                report.push(Constraint::C1, vec![link.id.0 as u64]);
            }
        }
    }
    // C2: an on controllable node needs at least one on incident link.
    for node in graph.nodes() {
        if node.kind.is_controllable()
            && state.node_on(node.id)
            && !graph
                .incident_links(node.id)
                .iter()
                .any(|&l| state.link_on(l))
        {
            report.push(Constraint::C2, vec![node.id.0 as u64]);
        }
    }
    // Placement registry coupling: a hosted VNF implies its server is on.
    for &(node, _) in state.placed_vnfs() {
        if !state.node_on(node) {
            report.push(Constraint::C1, vec![node.0 as u64]);
        }
    }
    // C5: server resources against the on/off-gated capacity.
    for node in graph.nodes() {
        if let Some(cap) = &node.resource_capacity {
            let gate = if state.node_on(node.id) { 1u64 } else { 0 };
            let used = &state.server_used[node.id.index()];
            if used.iter().zip(cap.iter()).any(|(u, c)| *u > gate * c) {
                report.push(Constraint::C5, vec![node.id.0 as u64]);
            }
        }
    }
    // C6: physical node ingress against the gated capacity.
    for node in graph.nodes() {
        if node.kind == NodeKind::PhysicalFunctionNode {
            let gate = if state.node_on(node.id) { 1u64 } else { 0 };
            let cap = node.ingress_capacity.unwrap_or(0);
            if state.node_ingress_used[node.id.index()] > gate * cap {
                report.push(Constraint::C6, vec![node.id.0 as u64]);
            }
        }
    }
    // C7: per-instance VNF ingress.
    for ((node, nf), used) in &state.vnf_ingress_used {
        let cap = catalog.get(*nf).map(|f| f.processing_capacity).unwrap_or(0);
        if *used > cap {
            report.push(Constraint::C7, vec![node.0 as u64, nf.0 as u64]);
        }
    }
    // C11: link load against the gated effective capacity.
    for link in graph.links() {
        let gate = if state.link_on(link.id) { 1u64 } else { 0 };
        if state.link_load(link.id) > gate * link.effective_capacity() {
            report.push(Constraint::C11, vec![link.id.0 as u64]);
        }
    }
}
