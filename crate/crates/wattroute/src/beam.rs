// SPDX-License-Identifier: Apache-2.0

//! Beam search over a flow's service chain.
//!
//! Each chained function is one stage; the source and destination bound the
//! stage graph. Stage candidates are the nodes that can run the function
//! within their remaining capacity. Between stages, every (stored path,
//! candidate) pair is connected by one node-weighted shortest path, and each
//! candidate keeps the `width` lightest paths. Every stored path carries its
//! own residual view so that revisiting a node within one chain stays
//! self-consistent. The lightest full path wins and is committed
//! transactionally.
//!
//! Serving one flow performs at most chain-length x hosts^2 + hosts
//! shortest-path computations (stage edges are memoized per endpoint pair
//! and rate), each a Dijkstra run, so a solve stays polynomial.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

use crate::capacity::{Assignment, NetworkState};
use crate::exec;
use crate::model::{
    chain_egress_rate, chain_ingress_rate, Bps, FlowId, FlowSpec, LinkId, NetworkGraph, NfCatalog,
    NfId, NodeId, NodeKind, Watts,
};
use crate::power::{self, PowerMode, WeightParams};
use crate::routing::{self, RoutedEdge, WeightTable};

/// Beam width: how many paths each candidate node stores per stage. Width 1
/// is the classic single-survivor dynamic program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeamConfig {
    pub width: usize,
}

impl BeamConfig {
    pub fn new(width: usize) -> Self {
        assert!(width >= 1, "beam width must be at least 1");
        BeamConfig { width }
    }
}

/// Everything a single-flow solve reads. The state is a frozen snapshot;
/// weights and residuals do not move until the selected path commits.
pub struct FlowContext<'a> {
    pub graph: &'a NetworkGraph,
    pub state: &'a NetworkState,
    pub flow: &'a FlowSpec,
    pub catalog: &'a NfCatalog,
    pub params: &'a WeightParams,
}

impl<'a> FlowContext<'a> {
    pub fn new(
        graph: &'a NetworkGraph,
        state: &'a NetworkState,
        flow: &'a FlowSpec,
        catalog: &'a NfCatalog,
        params: &'a WeightParams,
    ) -> Self {
        FlowContext {
            graph,
            state,
            flow,
            catalog,
            params,
        }
    }

    fn stage_ingress(&self, stage: usize) -> Bps {
        chain_ingress_rate(self.flow, self.catalog, stage).expect("stage in range")
    }
}

/// Path-local residual view: only entries this path has touched, falling back
/// to the global state. Tracks server resources, per-instance VNF ingress and
/// physical-node ingress so a chain revisiting a node double-charges itself.
#[derive(Clone, Debug, Default)]
struct PathResiduals {
    server_slots: BTreeMap<NodeId, Vec<u64>>,
    vnf_ingress: BTreeMap<(NodeId, NfId), Bps>,
    node_ingress: BTreeMap<NodeId, Bps>,
    instances: BTreeSet<(NodeId, NfId)>,
}

/// One stored path: the node placed at this stage, the accumulated weight,
/// the placements and route legs so far, and the path-local residuals.
#[derive(Clone, Debug)]
pub struct StagePath {
    pub terminal: NodeId,
    pub weight: Watts,
    pub placements: Vec<(usize, NodeId)>,
    pub legs: Vec<Vec<LinkId>>,
    residuals: PathResiduals,
}

impl StagePath {
    fn flat_route(&self) -> Vec<LinkId> {
        self.legs.iter().flatten().copied().collect()
    }
}

fn path_order(a: &StagePath, b: &StagePath) -> std::cmp::Ordering {
    a.weight
        .total_cmp(&b.weight)
        .then_with(|| a.flat_route().cmp(&b.flat_route()))
        .then_with(|| a.placements.cmp(&b.placements))
}

/// Stored paths per candidate node at one stage.
#[derive(Clone, Debug, Default)]
pub struct Beams {
    entries: BTreeMap<NodeId, Vec<StagePath>>,
}

impl Beams {
    /// Stage-zero beams: a single empty path ending at the flow source.
    pub fn source(node: NodeId) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(
            node,
            vec![StagePath {
                terminal: node,
                weight: 0.0,
                placements: Vec::new(),
                legs: Vec::new(),
                residuals: PathResiduals::default(),
            }],
        );
        Beams { entries }
    }

    pub fn get(&self, node: NodeId) -> &[StagePath] {
        self.entries.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terminals(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Vec<StagePath>)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Memoized stage-edge routing for one flow; one shortest-path run per
/// distinct (from, to, rate) triple. `calls` counts actual runs.
pub struct EdgeCache {
    table: WeightTable,
    edges: HashMap<(NodeId, NodeId, Bps), Option<RoutedEdge>>,
    pub calls: u64,
}

impl EdgeCache {
    pub fn new(ctx: &FlowContext) -> Self {
        EdgeCache {
            table: WeightTable::build(ctx.graph, ctx.state, ctx.flow, ctx.params),
            edges: HashMap::new(),
            calls: 0,
        }
    }

    fn edge(
        &mut self,
        ctx: &FlowContext,
        from: NodeId,
        to: NodeId,
        rate: Bps,
    ) -> Option<RoutedEdge> {
        if from == to {
            return Some(RoutedEdge {
                from,
                to,
                path: Vec::new(),
                weight: 0.0,
            });
        }
        if let Some(cached) = self.edges.get(&(from, to, rate)) {
            return cached.clone();
        }
        self.calls += 1;
        let edge = routing::shortest_path_with(ctx.graph, &self.table, from, to, rate).ok();
        self.edges.insert((from, to, rate), edge.clone());
        edge
    }

    /// Computes and caches the routes for many pairs at once, in parallel
    /// when the `parallel` feature is on.
    fn fill(&mut self, ctx: &FlowContext, pairs: &BTreeSet<(NodeId, NodeId)>, rate: Bps) {
        let missing: Vec<(NodeId, NodeId)> = pairs
            .iter()
            .filter(|(u, v)| u != v && !self.edges.contains_key(&(*u, *v, rate)))
            .copied()
            .collect();
        if missing.is_empty() {
            return;
        }
        self.calls += missing.len() as u64;
        let table = &self.table;
        let graph = ctx.graph;
        let computed = exec::map_collect(missing, |(u, v)| {
            (
                (u, v, rate),
                routing::shortest_path_with(graph, table, u, v, rate).ok(),
            )
        });
        self.edges.extend(computed);
    }
}

/// Why a flow could not be served.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    InvalidFlow,
    NoCandidates,
    NoFeasibleExtension,
    NoPathToDestination,
    CommitFailed,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::InvalidFlow => "invalid_flow",
            RejectReason::NoCandidates => "no_candidates",
            RejectReason::NoFeasibleExtension => "no_feasible_extension",
            RejectReason::NoPathToDestination => "no_path_to_destination",
            RejectReason::CommitFailed => "commit_failed",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("flow {flow} rejected at stage {stage}: {reason}")]
pub struct FlowRejected {
    pub flow: FlowId,
    pub stage: usize,
    pub reason: RejectReason,
}

/// Candidate hosts for chain position `stage`: physical nodes that run the
/// function within their remaining ingress, and servers that either already
/// host the function with ingress to spare or can fit a fresh instance.
pub fn candidate_set(ctx: &FlowContext, stage: usize) -> Result<BTreeSet<NodeId>, FlowRejected> {
    let nf_id = ctx.flow.chain[stage - 1];
    let nf = ctx.catalog.get(nf_id).expect("validated chain");
    let ingress = ctx.stage_ingress(stage);
    let mut set = BTreeSet::new();
    for node in ctx.graph.function_hosts() {
        let eligible = match node.kind {
            NodeKind::PhysicalFunctionNode => {
                node.supports(nf_id)
                    && ctx
                        .state
                        .check_node_ingress(ctx.graph, node.id, ingress, true)
            }
            NodeKind::NfvServer => {
                if ctx.state.is_vnf_placed(node.id, nf_id) {
                    ctx.state
                        .check_vnf_ingress(ctx.catalog, node.id, nf_id, ingress)
                } else {
                    ctx.state.check_resources(ctx.graph, node.id, nf)
                }
            }
            _ => false,
        };
        if eligible {
            set.insert(node.id);
        }
    }
    if set.is_empty() {
        return Err(FlowRejected {
            flow: ctx.flow.id,
            stage,
            reason: RejectReason::NoCandidates,
        });
    }
    Ok(set)
}

/// Tries to extend one stored path to candidate `node` for `stage`. Returns
/// the updated residual view, or None when the path's own bookkeeping rules
/// the extension out.
fn extend_residuals(
    ctx: &FlowContext,
    base: &PathResiduals,
    prev: NodeId,
    node: NodeId,
    stage: usize,
) -> Option<PathResiduals> {
    let nf_id = ctx.flow.chain[stage - 1];
    let nf = ctx.catalog.get(nf_id).expect("validated chain");
    let ingress = ctx.stage_ingress(stage);
    let mut next = base.clone();
    match ctx.graph.node(node).map(|n| n.kind) {
        Some(NodeKind::PhysicalFunctionNode) => {
            let consecutive_here = stage > 1 && prev == node;
            if !consecutive_here {
                let avail = next
                    .node_ingress
                    .get(&node)
                    .copied()
                    .unwrap_or_else(|| ctx.state.residual_node_ingress(ctx.graph, node));
                if ingress > avail {
                    return None;
                }
                next.node_ingress.insert(node, avail - ingress);
            }
        }
        Some(NodeKind::NfvServer) => {
            let hosted =
                ctx.state.is_vnf_placed(node, nf_id) || next.instances.contains(&(node, nf_id));
            if hosted {
                let avail = next
                    .vnf_ingress
                    .get(&(node, nf_id))
                    .copied()
                    .unwrap_or_else(|| ctx.state.residual_vnf_ingress(ctx.catalog, node, nf_id));
                if ingress > avail {
                    return None;
                }
                next.vnf_ingress.insert((node, nf_id), avail - ingress);
            } else {
                let mut slots = next
                    .server_slots
                    .get(&node)
                    .cloned()
                    .unwrap_or_else(|| ctx.state.residual_server_resources(ctx.graph, node));
                for (s, d) in slots.iter_mut().zip(nf.resource_demand.iter()) {
                    if *d > *s {
                        return None;
                    }
                    *s -= *d;
                }
                if ingress > nf.processing_capacity {
                    return None;
                }
                next.server_slots.insert(node, slots);
                next.instances.insert((node, nf_id));
                next.vnf_ingress
                    .insert((node, nf_id), nf.processing_capacity - ingress);
            }
        }
        _ => return None,
    }
    Some(next)
}

/// Extends every stored path to every stage candidate and keeps the `width`
/// lightest per candidate. Candidates nobody can reach feasibly are dropped;
/// an empty result rejects the flow at this stage.
pub fn extend_stage(
    ctx: &FlowContext,
    cache: &mut EdgeCache,
    beams: &Beams,
    stage: usize,
    candidates: &BTreeSet<NodeId>,
    config: &BeamConfig,
) -> Result<Beams, FlowRejected> {
    let ingress = ctx.stage_ingress(stage);
    let pairs: BTreeSet<(NodeId, NodeId)> = beams
        .terminals()
        .flat_map(|u| candidates.iter().map(move |&v| (u, v)))
        .collect();
    cache.fill(ctx, &pairs, ingress);

    let edge_of = |u: NodeId, v: NodeId| -> Option<RoutedEdge> {
        if u == v {
            Some(RoutedEdge {
                from: u,
                to: v,
                path: Vec::new(),
                weight: 0.0,
            })
        } else {
            cache.edges.get(&(u, v, ingress)).cloned().flatten()
        }
    };

    let work: Vec<NodeId> = candidates.iter().copied().collect();
    let extended = exec::map_collect(work, |v| {
        let mut kept: Vec<StagePath> = Vec::new();
        for (&u, paths) in beams.iter() {
            let Some(edge) = edge_of(u, v) else {
                continue;
            };
            for path in paths {
                let Some(residuals) = extend_residuals(ctx, &path.residuals, u, v, stage) else {
                    continue;
                };
                let mut placements = path.placements.clone();
                placements.push((stage, v));
                let mut legs = path.legs.clone();
                legs.push(edge.path.clone());
                kept.push(StagePath {
                    terminal: v,
                    weight: path.weight + edge.weight,
                    placements,
                    legs,
                    residuals,
                });
            }
        }
        kept.sort_by(path_order);
        kept.truncate(config.width);
        (v, kept)
    });

    let mut entries = BTreeMap::new();
    for (v, kept) in extended {
        if !kept.is_empty() {
            entries.insert(v, kept);
        }
    }
    if entries.is_empty() {
        return Err(FlowRejected {
            flow: ctx.flow.id,
            stage,
            reason: RejectReason::NoFeasibleExtension,
        });
    }
    Ok(Beams { entries })
}

/// Counters from one single-flow solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Shortest-path computations performed (memoized per stage edge).
    pub mdra_calls: u64,
}

/// A committed flow: its assignment and the selected end-to-end weight.
#[derive(Clone, Debug)]
pub struct ServedFlow {
    pub assignment: Assignment,
    pub weight: Watts,
}

/// Serves one flow against a frozen state snapshot; on success returns the
/// assignment, the post-commit state, and solve counters.
pub fn solve_flow(
    graph: &NetworkGraph,
    state: &NetworkState,
    flow: &FlowSpec,
    catalog: &NfCatalog,
    config: &BeamConfig,
    params: &WeightParams,
) -> Result<(ServedFlow, NetworkState, SolveStats), FlowRejected> {
    let mut next = state.clone();
    let (served, stats) = solve_flow_inplace(graph, &mut next, flow, catalog, config, params)?;
    Ok((served, next, stats))
}

/// Like [`solve_flow`] but commits straight into `state`. The state is only
/// modified on success.
pub fn solve_flow_inplace(
    graph: &NetworkGraph,
    state: &mut NetworkState,
    flow: &FlowSpec,
    catalog: &NfCatalog,
    config: &BeamConfig,
    params: &WeightParams,
) -> Result<(ServedFlow, SolveStats), FlowRejected> {
    if flow.validate(graph, catalog).is_err() {
        return Err(FlowRejected {
            flow: flow.id,
            stage: 0,
            reason: RejectReason::InvalidFlow,
        });
    }
    let ctx = FlowContext::new(graph, state, flow, catalog, params);
    let mut cache = EdgeCache::new(&ctx);
    let mut beams = Beams::source(flow.source);
    let chain_len = flow.chain_len();
    for stage in 1..=chain_len {
        let candidates = candidate_set(&ctx, stage)?;
        beams = extend_stage(&ctx, &mut cache, &beams, stage, &candidates, config)?;
    }

    // Connect every surviving path to the destination; no truncation before
    // the final selection.
    let egress = chain_egress_rate(flow, catalog).expect("validated flow");
    let mut finals: Vec<StagePath> = Vec::new();
    let terminals: Vec<NodeId> = beams.terminals().collect();
    for u in terminals {
        let Some(edge) = cache.edge(&ctx, u, flow.destination, egress) else {
            continue;
        };
        for path in beams.get(u) {
            let mut legs = path.legs.clone();
            legs.push(edge.path.clone());
            finals.push(StagePath {
                terminal: flow.destination,
                weight: path.weight + edge.weight,
                placements: path.placements.clone(),
                legs,
                residuals: path.residuals.clone(),
            });
        }
    }
    let stats = SolveStats {
        mdra_calls: cache.calls,
    };
    if finals.is_empty() {
        return Err(FlowRejected {
            flow: flow.id,
            stage: chain_len + 1,
            reason: RejectReason::NoPathToDestination,
        });
    }
    finals.sort_by(path_order);

    // Beams track node-side residuals but not joint link usage across legs,
    // so the lightest path can still fail the transactional commit under
    // extreme capacity pressure; fall through to the next one.
    for path in &finals {
        let assignment =
            Assignment::new(graph, flow.id, path.placements.clone(), path.legs.clone());
        if state.commit(graph, catalog, flow, &assignment).is_ok() {
            return Ok((
                ServedFlow {
                    assignment,
                    weight: path.weight,
                },
                stats,
            ));
        }
    }
    Err(FlowRejected {
        flow: flow.id,
        stage: chain_len + 1,
        reason: RejectReason::CommitFailed,
    })
}

/// Outcome of one flow within a batch solve.
#[derive(Clone, Debug)]
pub struct FlowResult {
    pub flow: FlowId,
    pub outcome: Result<ServedFlow, FlowRejected>,
    pub stats: SolveStats,
}

/// Batch result: per-flow outcomes, the final state, and both power sums.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub results: Vec<FlowResult>,
    pub state: NetworkState,
    pub objective_power: Watts,
    pub total_power: Watts,
}

impl SolveReport {
    pub fn assignments(&self) -> Vec<Assignment> {
        self.results
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.assignment.clone()))
            .collect()
    }

    pub fn served(&self) -> usize {
        self.results.iter().filter(|r| r.outcome.is_ok()).count()
    }
}

/// Serves flows in order from the all-off initial state, re-deriving weights
/// from the evolving state for every flow. Rejections are recorded, never
/// fatal.
pub fn solve_all(
    graph: &NetworkGraph,
    flows: &[FlowSpec],
    catalog: &NfCatalog,
    config: &BeamConfig,
    params: &WeightParams,
) -> SolveReport {
    let mut state = NetworkState::new(graph);
    let mut results = Vec::with_capacity(flows.len());
    for flow in flows {
        let outcome = solve_flow_inplace(graph, &mut state, flow, catalog, config, params);
        let (outcome, stats) = match outcome {
            Ok((served, stats)) => (Ok(served), stats),
            Err(rej) => (Err(rej), SolveStats::default()),
        };
        results.push(FlowResult {
            flow: flow.id,
            outcome,
            stats,
        });
    }
    let objective_power =
        power::total_power(graph, &state, PowerMode::Objective).unwrap_or(f64::NAN);
    let total_power = power::total_power(graph, &state, PowerMode::Total).unwrap_or(f64::NAN);
    SolveReport {
        results,
        state,
        objective_power,
        total_power,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::validate_solution;
    use crate::model::Node;
    use crate::scenarios::{self, stage_example};

    fn example_parts() -> (
        crate::model::NetworkGraph,
        NfCatalog,
        FlowSpec,
        WeightParams,
    ) {
        let ex = stage_example();
        let params = WeightParams::for_graph(&ex.graph);
        (ex.graph, ex.catalog, ex.flow, params)
    }

    #[test]
    fn example_candidate_sets_per_stage() {
        let (graph, catalog, flow, params) = example_parts();
        let state = NetworkState::new(&graph);
        let ctx = FlowContext::new(&graph, &state, &flow, &catalog, &params);
        let ids = |set: &BTreeSet<NodeId>| set.iter().map(|n| n.0).collect::<Vec<_>>();
        assert_eq!(ids(&candidate_set(&ctx, 1).unwrap()), vec![5, 7]);
        assert_eq!(ids(&candidate_set(&ctx, 2).unwrap()), vec![5, 8, 9]);
        assert_eq!(ids(&candidate_set(&ctx, 3).unwrap()), vec![6, 8, 9]);
        assert_eq!(ids(&candidate_set(&ctx, 4).unwrap()), vec![6, 8, 9]);
    }

    #[test]
    fn example_stage_three_beams_at_first_server() {
        let (graph, catalog, flow, params) = example_parts();
        let state = NetworkState::new(&graph);
        let ctx = FlowContext::new(&graph, &state, &flow, &catalog, &params);
        let mut cache = EdgeCache::new(&ctx);
        let config = BeamConfig::new(3);
        let mut beams = Beams::source(flow.source);
        for stage in 1..=3 {
            let candidates = candidate_set(&ctx, stage).unwrap();
            beams = extend_stage(&ctx, &mut cache, &beams, stage, &candidates, &config).unwrap();
        }
        let weights: Vec<f64> = beams.get(NodeId(8)).iter().map(|p| p.weight).collect();
        assert_eq!(weights, vec![9.0, 11.0, 11.0]);
    }

    #[test]
    fn example_single_survivor_weight() {
        let (graph, catalog, flow, params) = example_parts();
        let state = NetworkState::new(&graph);
        let (served, _, _) = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(1),
            &params,
        )
        .unwrap();
        assert_eq!(served.weight, 18.0);
    }

    #[test]
    fn example_width_three_improves_to_seventeen() {
        let (graph, catalog, flow, params) = example_parts();
        let state = NetworkState::new(&graph);
        let (served, next, _) = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(3),
            &params,
        )
        .unwrap();
        assert_eq!(served.weight, 17.0);
        let report = validate_solution(&graph, &catalog, &[flow], &[served.assignment]);
        assert!(report.is_clean(), "{report}");
        assert!(next.nodes_on() > 0);
    }

    #[test]
    fn width_one_keeps_single_survivor_per_candidate() {
        let (graph, catalog, flow, params) = example_parts();
        let state = NetworkState::new(&graph);
        let ctx = FlowContext::new(&graph, &state, &flow, &catalog, &params);
        let mut cache = EdgeCache::new(&ctx);
        let config = BeamConfig::new(1);
        let mut beams = Beams::source(flow.source);
        for stage in 1..=4 {
            let candidates = candidate_set(&ctx, stage).unwrap();
            beams = extend_stage(&ctx, &mut cache, &beams, stage, &candidates, &config).unwrap();
            for (_, paths) in beams.iter() {
                assert_eq!(paths.len(), 1);
            }
        }
    }

    #[test]
    fn beam_widths_are_monotone_on_the_example() {
        let (graph, catalog, flow, params) = example_parts();
        let state = NetworkState::new(&graph);
        let mut last = f64::INFINITY;
        for width in [1usize, 2, 4, 8, 16, 32, 64] {
            let (served, _, _) = solve_flow(
                &graph,
                &state,
                &flow,
                &catalog,
                &BeamConfig::new(width),
                &params,
            )
            .unwrap();
            assert!(served.weight <= last);
            last = served.weight;
        }
        assert_eq!(last, 17.0);
    }

    #[test]
    fn path_capacity_view_evicts_oversubscribed_server() {
        // Two-function chain, both demand 10 of a 16-slot server: the second
        // fresh placement on the same server must be evicted.
        use crate::model::{Link, LinkId, NetworkFunction, Node};
        let nodes = vec![
            Node::sdn_switch(NodeId(0), 10.0),
            Node::sdn_switch(NodeId(1), 10.0),
            Node::nfv_server(NodeId(2), 50.0, 0.5, vec![16], None),
        ];
        let mk = |id: u32, u: u32, v: u32| Link {
            id: LinkId(id),
            endpoints: (NodeId(u), NodeId(v)),
            capacity: 1_000,
            utilization_factor: 1.0,
            p_max: 5.0,
            is_sdn: true,
        };
        let graph = NetworkGraph::new(nodes, vec![mk(0, 0, 1), mk(1, 0, 2)]).unwrap();
        let catalog = NfCatalog::new(
            (0..2)
                .map(|i| NetworkFunction {
                    id: NfId(i),
                    resource_demand: vec![10],
                    processing_capacity: 1_000,
                    rising_factor: 1.0,
                })
                .collect(),
        )
        .unwrap();
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 10,
            chain: vec![NfId(0), NfId(1)],
        };
        let state = NetworkState::new(&graph);
        let params = WeightParams::for_graph(&graph);
        let err = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(4),
            &params,
        )
        .unwrap_err();
        // Stage 2 still lists the server as a candidate against the global
        // state, but every stored path already filled it.
        assert_eq!(err.stage, 2);
        assert_eq!(err.reason, RejectReason::NoFeasibleExtension);
    }

    #[test]
    fn forced_unique_assignment() {
        use crate::model::{Link, LinkId, NetworkFunction, Node};
        let nodes = vec![
            Node::sdn_switch(NodeId(0), 10.0),
            Node::sdn_switch(NodeId(1), 10.0),
            Node::nfv_server(NodeId(2), 50.0, 0.5, vec![16], None),
        ];
        let mk = |id: u32, u: u32, v: u32| Link {
            id: LinkId(id),
            endpoints: (NodeId(u), NodeId(v)),
            capacity: 1_000,
            utilization_factor: 1.0,
            p_max: 5.0,
            is_sdn: true,
        };
        let graph = NetworkGraph::new(nodes, vec![mk(0, 0, 1), mk(1, 0, 2)]).unwrap();
        let catalog = NfCatalog::new(vec![NetworkFunction {
            id: NfId(0),
            resource_demand: vec![4],
            processing_capacity: 1_000,
            rising_factor: 1.0,
        }])
        .unwrap();
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 10,
            chain: vec![NfId(0)],
        };
        let state = NetworkState::new(&graph);
        let params = WeightParams::for_graph(&graph);
        let (served, _, _) = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(1),
            &params,
        )
        .unwrap();
        assert_eq!(served.assignment.placements, vec![(1, NodeId(2))]);
        assert_eq!(
            served.assignment.route,
            vec![vec![LinkId(1)], vec![LinkId(1), LinkId(0)]]
        );
    }

    #[test]
    fn empty_candidate_set_rejects() {
        let (graph, catalog, mut flow, params) = example_parts();
        // Demand no node can satisfy: function 0 on chain position with all
        // servers too small and no physical support -> craft a chain of the
        // big function only placeable on 5 or 7, then exhaust node ingress.
        flow.chain = vec![NfId(0)];
        flow.rate = 20_000_000_000;
        let state = NetworkState::new(&graph);
        let err = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(1),
            &params,
        )
        .unwrap_err();
        assert_eq!(err.reason, RejectReason::NoCandidates);
        assert_eq!(err.stage, 1);
    }

    #[test]
    fn solve_all_empty_and_composition() {
        let (graph, catalog, flow, params) = example_parts();
        let report = solve_all(&graph, &[], &catalog, &BeamConfig::new(2), &params);
        assert_eq!(report.objective_power, 0.0);
        assert_eq!(report.results.len(), 0);

        let report = solve_all(
            &graph,
            std::slice::from_ref(&flow),
            &catalog,
            &BeamConfig::new(3),
            &params,
        );
        assert_eq!(report.served(), 1);
        let state = NetworkState::new(&graph);
        let (single, single_state, _) = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(3),
            &params,
        )
        .unwrap();
        assert_eq!(
            report.results[0].outcome.as_ref().unwrap().weight,
            single.weight
        );
        assert_eq!(report.state, single_state);
    }

    #[test]
    fn solved_scenarios_validate_clean() {
        for seed in 0..10u64 {
            for kind in [
                scenarios::SmallKind::AllNfv,
                scenarios::SmallKind::AllPhysical,
                scenarios::SmallKind::Hybrid,
            ] {
                let inst = scenarios::small_instance(seed, kind);
                let params = WeightParams::for_graph(&inst.graph);
                let report = solve_all(
                    &inst.graph,
                    &inst.flows,
                    &inst.catalog,
                    &BeamConfig::new(8),
                    &params,
                );
                let assignments = report.assignments();
                let audit =
                    validate_solution(&inst.graph, &inst.catalog, &inst.flows, &assignments);
                assert!(audit.is_clean(), "seed {seed} {kind:?}: {audit}");
            }
        }
    }

    /// Stage-decomposition brute force: enumerate every placement sequence,
    /// check feasibility with a straightforward tally, and price each leg
    /// with the same shortest-path routine. The unbounded beam must match
    /// its minimum.
    fn stage_brute_force(
        graph: &NetworkGraph,
        state: &NetworkState,
        flow: &FlowSpec,
        catalog: &NfCatalog,
        params: &WeightParams,
    ) -> Option<f64> {
        use crate::model::leg_rate;
        let hosts: Vec<NodeId> = graph.function_hosts().map(|n| n.id).collect();
        let k = flow.chain.len();
        let mut best: Option<f64> = None;
        let mut sequence = vec![NodeId(0); k];
        fn feasible(
            graph: &NetworkGraph,
            state: &NetworkState,
            flow: &FlowSpec,
            catalog: &NfCatalog,
            seq: &[NodeId],
        ) -> bool {
            let mut slots: BTreeMap<NodeId, Vec<u64>> = BTreeMap::new();
            let mut vnf: BTreeMap<(NodeId, NfId), i128> = BTreeMap::new();
            let mut node_in: BTreeMap<NodeId, i128> = BTreeMap::new();
            let mut instances: BTreeSet<(NodeId, NfId)> = BTreeSet::new();
            for (i, &host) in seq.iter().enumerate() {
                let nf_id = flow.chain[i];
                let nf = catalog.get(nf_id).unwrap();
                let ingress = leg_rate(flow, catalog, i).unwrap() as i128;
                let node = graph.node(host).unwrap();
                match node.kind {
                    NodeKind::PhysicalFunctionNode => {
                        if !node.supports(nf_id) {
                            return false;
                        }
                        let zeta = !(i > 0 && seq[i - 1] == host);
                        if zeta {
                            let e = node_in.entry(host).or_insert_with(|| {
                                state.residual_node_ingress(graph, host) as i128
                            });
                            *e -= ingress;
                            if *e < 0 {
                                return false;
                            }
                        }
                    }
                    NodeKind::NfvServer => {
                        let hosted =
                            state.is_vnf_placed(host, nf_id) || instances.contains(&(host, nf_id));
                        if !hosted {
                            let s = slots
                                .entry(host)
                                .or_insert_with(|| state.residual_server_resources(graph, host));
                            for (have, need) in s.iter_mut().zip(nf.resource_demand.iter()) {
                                if *need > *have {
                                    return false;
                                }
                                *have -= *need;
                            }
                            instances.insert((host, nf_id));
                            vnf.insert((host, nf_id), nf.processing_capacity as i128);
                        }
                        let e = vnf.entry((host, nf_id)).or_insert_with(|| {
                            state.residual_vnf_ingress(catalog, host, nf_id) as i128
                        });
                        *e -= ingress;
                        if *e < 0 {
                            return false;
                        }
                    }
                    _ => return false,
                }
            }
            true
        }
        #[allow(clippy::too_many_arguments)]
        fn recurse(
            graph: &NetworkGraph,
            state: &NetworkState,
            flow: &FlowSpec,
            catalog: &NfCatalog,
            params: &WeightParams,
            hosts: &[NodeId],
            seq: &mut Vec<NodeId>,
            pos: usize,
            best: &mut Option<f64>,
        ) {
            use crate::model::{chain_egress_rate, leg_rate};
            if pos == seq.len() {
                if !feasible(graph, state, flow, catalog, seq) {
                    return;
                }
                let mut total = 0.0;
                let mut prev = flow.source;
                for (i, &host) in seq.iter().enumerate() {
                    let rate = leg_rate(flow, catalog, i).unwrap();
                    match routing::shortest_path(graph, state, flow, prev, host, rate, params) {
                        Ok(edge) => total += edge.weight,
                        Err(_) => return,
                    }
                    prev = host;
                }
                let egress = chain_egress_rate(flow, catalog).unwrap();
                match routing::shortest_path(
                    graph,
                    state,
                    flow,
                    prev,
                    flow.destination,
                    egress,
                    params,
                ) {
                    Ok(edge) => total += edge.weight,
                    Err(_) => return,
                }
                if best.map(|b| total < b).unwrap_or(true) {
                    *best = Some(total);
                }
                return;
            }
            for &h in hosts {
                seq[pos] = h;
                recurse(
                    graph,
                    state,
                    flow,
                    catalog,
                    params,
                    hosts,
                    seq,
                    pos + 1,
                    best,
                );
            }
        }
        recurse(
            graph,
            state,
            flow,
            catalog,
            params,
            &hosts,
            &mut sequence,
            0,
            &mut best,
        );
        best
    }

    #[test]
    fn unbounded_beam_matches_stage_brute_force() {
        for seed in 0..30u64 {
            let kind = match seed % 3 {
                0 => scenarios::SmallKind::AllNfv,
                1 => scenarios::SmallKind::AllPhysical,
                _ => scenarios::SmallKind::Hybrid,
            };
            let inst = scenarios::small_instance(seed, kind);
            let flow = &inst.flows[0];
            let params = WeightParams::for_graph(&inst.graph);
            let state = NetworkState::new(&inst.graph);
            let expected = stage_brute_force(&inst.graph, &state, flow, &inst.catalog, &params);
            let actual = solve_flow(
                &inst.graph,
                &state,
                flow,
                &inst.catalog,
                &BeamConfig::new(100_000),
                &params,
            );
            match (expected, actual) {
                (Some(want), Ok((served, _, _))) => {
                    assert_eq!(served.weight, want, "seed {seed} {kind:?}");
                }
                (None, Err(_)) => {}
                (want, got) => panic!(
                    "seed {seed} {kind:?}: {want:?} vs {got:?}",
                    got = got.map(|g| g.0.weight)
                ),
            }
        }
    }

    fn line_with_hosts(hosts: Vec<Node>, host_caps: Vec<Bps>) -> NetworkGraph {
        use crate::model::Link;
        // 0 = source switch, 1 = destination switch, hosts hang off 0.
        let mut nodes = vec![
            Node::sdn_switch(NodeId(0), 1.0),
            Node::sdn_switch(NodeId(1), 1.0),
        ];
        nodes.extend(hosts);
        let mut links = vec![Link {
            id: LinkId(0),
            endpoints: (NodeId(0), NodeId(1)),
            capacity: 100,
            utilization_factor: 1.0,
            p_max: 1.0,
            is_sdn: true,
        }];
        for (i, cap) in host_caps.iter().enumerate() {
            links.push(Link {
                id: LinkId(1 + i as u32),
                endpoints: (NodeId(0), NodeId(2 + i as u32)),
                capacity: *cap,
                utilization_factor: 1.0,
                p_max: if i == 0 { 1.0 } else { 10.0 },
                is_sdn: true,
            });
        }
        NetworkGraph::new(nodes, links).unwrap()
    }

    #[test]
    fn commit_fallback_skips_jointly_oversubscribed_route() {
        use crate::model::NetworkFunction;
        // Host A's attach link fits either leg alone but not both; host B is
        // weight-heavier yet commits. The selected path must be B's.
        let mk_host = |id: u32| Node::function_node(NodeId(id), 2.0, 0.5, 100, [NfId(0)].into());
        let graph = line_with_hosts(vec![mk_host(2), mk_host(3)], vec![15, 100]);
        let catalog = NfCatalog::new(vec![NetworkFunction {
            id: NfId(0),
            resource_demand: vec![1],
            processing_capacity: 100,
            rising_factor: 1.0,
        }])
        .unwrap();
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 10,
            chain: vec![NfId(0)],
        };
        let params = WeightParams::new(1e-6, 1e-6).unwrap();
        let state = NetworkState::new(&graph);
        let (served, next, _) = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(4),
            &params,
        )
        .unwrap();
        assert_eq!(served.assignment.placements, vec![(1, NodeId(3))]);
        let report = crate::capacity::validate_solution(
            &graph,
            &catalog,
            std::slice::from_ref(&flow),
            &[served.assignment],
        );
        assert!(report.is_clean(), "{report}");
        assert!(
            !next.node_on(NodeId(2)),
            "the oversubscribed host stays off"
        );
    }

    #[test]
    fn repeated_function_reuses_the_path_instance() {
        use crate::model::NetworkFunction;
        let server = Node::nfv_server(NodeId(2), 2.0, 0.5, vec![16], None);
        let graph = line_with_hosts(vec![server], vec![100]);
        let catalog = NfCatalog::new(vec![
            NetworkFunction {
                id: NfId(0),
                resource_demand: vec![8],
                processing_capacity: 30,
                rising_factor: 1.0,
            },
            NetworkFunction {
                id: NfId(1),
                resource_demand: vec![8],
                processing_capacity: 30,
                rising_factor: 1.0,
            },
        ])
        .unwrap();
        // g0 twice plus g1 fills the server exactly when the second g0 use
        // shares the first instance.
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 10,
            chain: vec![NfId(0), NfId(1), NfId(0)],
        };
        let params = WeightParams::new(1e-6, 1e-6).unwrap();
        let state = NetworkState::new(&graph);
        let (served, next, _) = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(2),
            &params,
        )
        .unwrap();
        assert_eq!(
            served.assignment.placements,
            vec![(1, NodeId(2)), (2, NodeId(2)), (3, NodeId(2))]
        );
        assert_eq!(
            next.residual_server_resources(&graph, NodeId(2)),
            vec![0u64]
        );
        assert_eq!(next.residual_vnf_ingress(&catalog, NodeId(2), NfId(0)), 10);
        assert_eq!(next.residual_vnf_ingress(&catalog, NodeId(2), NfId(1)), 20);
        let report = crate::capacity::validate_solution(
            &graph,
            &catalog,
            std::slice::from_ref(&flow),
            &[served.assignment],
        );
        assert!(report.is_clean(), "{report}");
    }

    #[test]
    fn nonconsecutive_revisit_double_charges_node_ingress() {
        use crate::model::NetworkFunction;
        let mk_catalog = || {
            NfCatalog::new(
                (0..3)
                    .map(|i| NetworkFunction {
                        id: NfId(i),
                        resource_demand: vec![1],
                        processing_capacity: 100,
                        rising_factor: 1.0,
                    })
                    .collect(),
            )
            .unwrap()
        };
        let build = |ingress_a: Bps| {
            let a = Node::function_node(NodeId(2), 2.0, 0.5, ingress_a, [NfId(0), NfId(2)].into());
            let b = Node::function_node(NodeId(3), 2.0, 0.5, 100, [NfId(1)].into());
            line_with_hosts(vec![a, b], vec![100, 100])
        };
        let flow = FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 10,
            chain: vec![NfId(0), NfId(1), NfId(2)],
        };
        let params = WeightParams::new(1e-6, 1e-6).unwrap();

        // Positions 1 and 3 both land on node 2 with node 3 in between, so
        // its ingress is charged twice: 25 fits, 15 does not.
        let roomy = build(25);
        let state = NetworkState::new(&roomy);
        let catalog = mk_catalog();
        let (served, next, _) = solve_flow(
            &roomy,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(4),
            &params,
        )
        .unwrap();
        assert_eq!(
            served.assignment.placements,
            vec![(1, NodeId(2)), (2, NodeId(3)), (3, NodeId(2))]
        );
        assert_eq!(next.committed_node_ingress(&roomy, NodeId(2)), 20);

        let tight = build(15);
        let state = NetworkState::new(&tight);
        let err = solve_flow(
            &tight,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(4),
            &params,
        )
        .unwrap_err();
        assert_eq!(err.reason, RejectReason::NoFeasibleExtension);
        assert_eq!(err.stage, 3);
    }

    #[test]
    fn mdra_call_count_within_contract() {
        let (graph, catalog, flow, params) = example_parts();
        let state = NetworkState::new(&graph);
        let (_, _, stats) = solve_flow(
            &graph,
            &state,
            &flow,
            &catalog,
            &BeamConfig::new(3),
            &params,
        )
        .unwrap();
        let hosts = graph.function_hosts().count() as u64;
        let bound = flow.chain.len() as u64 * hosts * hosts + hosts;
        assert!(stats.mdra_calls <= bound, "{} > {bound}", stats.mdra_calls);
    }
}
