// SPDX-License-Identifier: Apache-2.0

//! Exhaustive exact solver for desk-scale instances.
//!
//! Enumerates, jointly over all flows, every placement sequence and every
//! simple-path route combination, and returns the assignment set with the
//! smallest objective power. A feasible heuristic solution seeds the
//! incumbent, and subtrees are pruned only when their already-committed
//! power strictly exceeds it, so the search stays exact. Enumeration order
//! is lexicographic (hosts by node id, routes by node sequence) and ties on
//! power resolve to the lexicographically smallest assignment.

use std::collections::HashMap;
use thiserror::Error;

use crate::beam::{self, BeamConfig};
use crate::capacity::{Assignment, NetworkState};
use crate::model::{leg_rate, FlowSpec, LinkId, NetworkGraph, NfCatalog, NodeId, NodeKind, Watts};
use crate::power::{total_power, PowerMode, WeightParams};

/// Instance-size guards and the enumeration budget.
#[derive(Clone, Copy, Debug)]
pub struct OracleLimits {
    pub max_nodes: usize,
    pub max_flows: usize,
    pub max_chain: usize,
    /// Search steps (placement applications and route trials).
    pub budget: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_nodes: 12,
            max_flows: 3,
            max_chain: 5,
            budget: 20_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("instance outside oracle limits: {0}")]
    LimitsExceeded(String),
    #[error("enumeration budget exceeded")]
    BudgetExceeded,
    #[error("no feasible joint assignment exists")]
    Infeasible,
}

/// The proven optimum: assignments, their replayed state, and the objective
/// power.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub assignments: Vec<Assignment>,
    pub state: NetworkState,
    pub power: Watts,
}

struct Search<'a> {
    graph: &'a NetworkGraph,
    catalog: &'a NfCatalog,
    flows: &'a [FlowSpec],
    paths: HashMap<(NodeId, NodeId), Vec<Vec<LinkId>>>,
    budget: u64,
    steps: u64,
    best_power: f64,
    best: Option<Vec<Assignment>>,
}

const POWER_EPS: f64 = 1e-9;

fn assignments_lex_less(a: &[Assignment], b: &[Assignment]) -> bool {
    let key = |list: &[Assignment]| {
        list.iter()
            .map(|m| (m.placements.clone(), m.route.clone()))
            .collect::<Vec<_>>()
    };
    key(a) < key(b)
}

impl<'a> Search<'a> {
    fn objective(&self, state: &NetworkState) -> f64 {
        total_power(self.graph, state, PowerMode::Objective).unwrap_or(f64::INFINITY)
    }

    fn tick(&mut self) -> Result<(), OracleError> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(OracleError::BudgetExceeded);
        }
        Ok(())
    }

    /// All simple paths between two distinct nodes, lexicographic by node
    /// sequence, memoized per ordered pair.
    fn simple_paths(&mut self, from: NodeId, to: NodeId) -> Result<&Vec<Vec<LinkId>>, OracleError> {
        if !self.paths.contains_key(&(from, to)) {
            let mut found = Vec::new();
            let mut visited = vec![false; self.graph.node_count()];
            let mut trail: Vec<LinkId> = Vec::new();
            let mut budget_hit = false;
            enumerate_paths(
                self.graph,
                from,
                to,
                &mut visited,
                &mut trail,
                &mut found,
                &mut budget_hit,
            );
            if budget_hit {
                return Err(OracleError::BudgetExceeded);
            }
            self.steps += found.len() as u64;
            if self.steps > self.budget {
                return Err(OracleError::BudgetExceeded);
            }
            self.paths.insert((from, to), found);
        }
        Ok(&self.paths[&(from, to)])
    }

    fn consider_leaf(&mut self, state: &NetworkState, assignments: &[Assignment]) {
        let p = self.objective(state);
        let better = p < self.best_power - POWER_EPS
            || ((p - self.best_power).abs() <= POWER_EPS
                && self
                    .best
                    .as_ref()
                    .map(|b| assignments_lex_less(assignments, b))
                    .unwrap_or(true));
        if better {
            self.best_power = p;
            self.best = Some(assignments.to_vec());
        }
    }

    fn dfs_flow(
        &mut self,
        flow_idx: usize,
        state: &NetworkState,
        assignments: &mut Vec<Assignment>,
    ) -> Result<(), OracleError> {
        if flow_idx == self.flows.len() {
            self.consider_leaf(state, assignments);
            return Ok(());
        }
        let flow = &self.flows[flow_idx];
        let mut placements = Vec::with_capacity(flow.chain.len());
        self.dfs_position(flow_idx, flow, 0, state, &mut placements, assignments)
    }

    /// Chooses the host of chain position `pos` (0-based), applying node-side
    /// effects to a state clone per choice.
    fn dfs_position(
        &mut self,
        flow_idx: usize,
        flow: &FlowSpec,
        pos: usize,
        state: &NetworkState,
        placements: &mut Vec<(usize, NodeId)>,
        assignments: &mut Vec<Assignment>,
    ) -> Result<(), OracleError> {
        if pos == flow.chain.len() {
            let mut legs = Vec::with_capacity(flow.chain.len() + 1);
            return self.dfs_leg(flow_idx, flow, 0, state, placements, &mut legs, assignments);
        }
        let nf_id = flow.chain[pos];
        let nf = self.catalog.get(nf_id).expect("validated chain");
        let ingress = leg_rate(flow, self.catalog, pos).expect("position in range");
        let hosts: Vec<NodeId> = self.graph.function_hosts().map(|n| n.id).collect();
        for host in hosts {
            let node = self.graph.node(host).unwrap();
            let zeta = !(pos > 0
                && placements[pos - 1].1 == host
                && node.kind == NodeKind::PhysicalFunctionNode);
            let feasible = match node.kind {
                NodeKind::PhysicalFunctionNode => {
                    node.supports(nf_id)
                        && (!zeta || ingress <= state.residual_node_ingress(self.graph, host))
                }
                NodeKind::NfvServer => {
                    if state.is_vnf_placed(host, nf_id) {
                        ingress <= state.residual_vnf_ingress(self.catalog, host, nf_id)
                    } else {
                        state.check_resources(self.graph, host, nf)
                            && ingress <= nf.processing_capacity
                    }
                }
                _ => false,
            };
            if !feasible {
                continue;
            }
            self.tick()?;
            let mut next = state.clone();
            next.turn_on_node(host);
            match node.kind {
                NodeKind::PhysicalFunctionNode => {
                    if zeta {
                        next.add_node_ingress(host, ingress);
                    }
                }
                NodeKind::NfvServer => {
                    if !next.is_vnf_placed(host, nf_id) {
                        next.place_vnf(host, nf);
                    }
                    next.add_vnf_ingress(host, nf_id, ingress);
                }
                _ => unreachable!(),
            }
            if self.objective(&next) > self.best_power + POWER_EPS {
                continue;
            }
            placements.push((pos + 1, host));
            self.dfs_position(flow_idx, flow, pos + 1, &next, placements, assignments)?;
            placements.pop();
        }
        Ok(())
    }

    /// Chooses the route of leg `leg` (0 = source to first host), applying
    /// link loads per choice.
    #[allow(clippy::too_many_arguments)]
    fn dfs_leg(
        &mut self,
        flow_idx: usize,
        flow: &FlowSpec,
        leg: usize,
        state: &NetworkState,
        placements: &[(usize, NodeId)],
        legs: &mut Vec<Vec<LinkId>>,
        assignments: &mut Vec<Assignment>,
    ) -> Result<(), OracleError> {
        if leg == flow.chain.len() + 1 {
            let assignment =
                Assignment::new(self.graph, flow.id, placements.to_vec(), legs.clone());
            assignments.push(assignment);
            self.dfs_flow(flow_idx + 1, state, assignments)?;
            assignments.pop();
            return Ok(());
        }
        let from = if leg == 0 {
            flow.source
        } else {
            placements[leg - 1].1
        };
        let to = if leg == flow.chain.len() {
            flow.destination
        } else {
            placements[leg].1
        };
        let rate = leg_rate(flow, self.catalog, leg).expect("leg in range");
        if from == to {
            legs.push(Vec::new());
            self.dfs_leg(
                flow_idx,
                flow,
                leg + 1,
                state,
                placements,
                legs,
                assignments,
            )?;
            legs.pop();
            return Ok(());
        }
        let candidates = self.simple_paths(from, to)?.clone();
        for path in candidates {
            self.tick()?;
            if path
                .iter()
                .any(|&l| rate > state.residual_link_would_be(self.graph, l))
            {
                continue;
            }
            let mut next = state.clone();
            for &l in &path {
                next.turn_on_link(self.graph, l);
                next.add_link_load(l, rate);
            }
            if self.objective(&next) > self.best_power + POWER_EPS {
                continue;
            }
            legs.push(path);
            self.dfs_leg(
                flow_idx,
                flow,
                leg + 1,
                &next,
                placements,
                legs,
                assignments,
            )?;
            legs.pop();
        }
        Ok(())
    }
}

fn enumerate_paths(
    graph: &NetworkGraph,
    at: NodeId,
    to: NodeId,
    visited: &mut [bool],
    trail: &mut Vec<LinkId>,
    found: &mut Vec<Vec<LinkId>>,
    budget_hit: &mut bool,
) {
    const MAX_PATHS_PER_PAIR: usize = 100_000;
    if *budget_hit {
        return;
    }
    if at == to {
        if found.len() >= MAX_PATHS_PER_PAIR {
            *budget_hit = true;
            return;
        }
        found.push(trail.clone());
        return;
    }
    visited[at.index()] = true;
    // Ascending neighbor order keeps path enumeration lexicographic.
    let mut steps: Vec<(NodeId, LinkId)> = graph
        .incident_links(at)
        .iter()
        .map(|&l| (graph.link(l).unwrap().other_end(at), l))
        .collect();
    steps.sort();
    for (next, link) in steps {
        if visited[next.index()] {
            continue;
        }
        trail.push(link);
        enumerate_paths(graph, next, to, visited, trail, found, budget_hit);
        trail.pop();
    }
    visited[at.index()] = false;
}

/// Solves the joint placement-and-routing problem exactly. The heuristic
/// solution (beam width 32) seeds the incumbent when it serves every flow,
/// which also makes "oracle never exceeds the heuristic" structural.
pub fn exhaustive_solve(
    graph: &NetworkGraph,
    catalog: &NfCatalog,
    flows: &[FlowSpec],
    limits: &OracleLimits,
) -> Result<OracleSolution, OracleError> {
    if graph.node_count() > limits.max_nodes {
        return Err(OracleError::LimitsExceeded(format!(
            "{} nodes > {}",
            graph.node_count(),
            limits.max_nodes
        )));
    }
    if flows.len() > limits.max_flows {
        return Err(OracleError::LimitsExceeded(format!(
            "{} flows > {}",
            flows.len(),
            limits.max_flows
        )));
    }
    if let Some(f) = flows.iter().find(|f| f.chain.len() > limits.max_chain) {
        return Err(OracleError::LimitsExceeded(format!(
            "flow {} chain length {} > {}",
            f.id,
            f.chain.len(),
            limits.max_chain
        )));
    }

    let mut search = Search {
        graph,
        catalog,
        flows,
        paths: HashMap::new(),
        budget: limits.budget,
        steps: 0,
        best_power: f64::INFINITY,
        best: None,
    };

    // Seed the incumbent with the heuristic when it serves everything.
    let params = WeightParams::for_graph(graph);
    let heuristic = beam::solve_all(graph, flows, catalog, &BeamConfig::new(32), &params);
    if heuristic.served() == flows.len() {
        search.best_power = heuristic.objective_power;
        search.best = Some(heuristic.assignments());
    }

    let initial = NetworkState::new(graph);
    let mut assignments = Vec::new();
    search.dfs_flow(0, &initial, &mut assignments)?;

    match search.best {
        Some(best) => {
            let state = crate::capacity::recompute_state(graph, catalog, flows, &best)
                .expect("optimal assignments replay");
            let power = total_power(graph, &state, PowerMode::Objective)
                .expect("replayed state is consistent");
            Ok(OracleSolution {
                assignments: best,
                state,
                power,
            })
        }
        None => Err(OracleError::Infeasible),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::validate_solution;
    use crate::model::{FlowId, Link, NetworkFunction, NfId, Node};
    use crate::scenarios::{small_instance, SmallKind};

    fn forced_instance() -> (NetworkGraph, NfCatalog, Vec<FlowSpec>) {
        // One switch, one server: exactly one way to serve the flow.
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
        let flows = vec![FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 10,
            chain: vec![NfId(0)],
        }];
        (graph, catalog, flows)
    }

    #[test]
    fn forced_instance_returns_the_unique_assignment() {
        let (graph, catalog, flows) = forced_instance();
        let sol = exhaustive_solve(&graph, &catalog, &flows, &OracleLimits::default()).unwrap();
        assert_eq!(sol.assignments.len(), 1);
        assert_eq!(sol.assignments[0].placements, vec![(1, NodeId(2))]);
        // Switch 10 + server idle 25 + both links 5; objective counts all.
        assert_eq!(sol.power, 10.0 + 25.0 + 5.0 + 5.0 + 10.0);
        let report = validate_solution(&graph, &catalog, &flows, &sol.assignments);
        assert!(report.is_clean(), "{report}");
    }

    #[test]
    fn oracle_never_exceeds_heuristic() {
        for seed in 0..12u64 {
            let inst = small_instance(seed, SmallKind::Hybrid);
            let params = WeightParams::for_graph(&inst.graph);
            let h = beam::solve_all(
                &inst.graph,
                &inst.flows,
                &inst.catalog,
                &BeamConfig::new(32),
                &params,
            );
            if h.served() < inst.flows.len() {
                continue;
            }
            let sol = exhaustive_solve(
                &inst.graph,
                &inst.catalog,
                &inst.flows,
                &OracleLimits::default(),
            )
            .unwrap();
            assert!(
                sol.power <= h.objective_power + 1e-9,
                "seed {seed}: oracle {} vs heuristic {}",
                sol.power,
                h.objective_power
            );
            let report =
                validate_solution(&inst.graph, &inst.catalog, &inst.flows, &sol.assignments);
            assert!(report.is_clean(), "seed {seed}: {report}");
        }
    }

    #[test]
    fn flow_permutation_does_not_change_optimal_power() {
        for seed in [3u64, 5, 8, 13] {
            let inst = small_instance(seed, SmallKind::Hybrid);
            if inst.flows.len() < 2 {
                continue;
            }
            let forward = exhaustive_solve(
                &inst.graph,
                &inst.catalog,
                &inst.flows,
                &OracleLimits::default(),
            );
            let mut reversed = inst.flows.clone();
            reversed.reverse();
            let backward = exhaustive_solve(
                &inst.graph,
                &inst.catalog,
                &reversed,
                &OracleLimits::default(),
            );
            match (forward, backward) {
                (Ok(a), Ok(b)) => assert!(
                    (a.power - b.power).abs() <= 1e-9,
                    "seed {seed}: {} vs {}",
                    a.power,
                    b.power
                ),
                (Err(OracleError::Infeasible), Err(OracleError::Infeasible)) => {}
                other => panic!("seed {seed}: mismatched outcomes {other:?}"),
            }
        }
    }

    #[test]
    fn repeated_solves_return_identical_assignments() {
        let inst = small_instance(9, SmallKind::Hybrid);
        let a = exhaustive_solve(
            &inst.graph,
            &inst.catalog,
            &inst.flows,
            &OracleLimits::default(),
        );
        let b = exhaustive_solve(
            &inst.graph,
            &inst.catalog,
            &inst.flows,
            &OracleLimits::default(),
        );
        match (a, b) {
            (Ok(x), Ok(y)) => {
                assert_eq!(x.assignments, y.assignments);
                assert_eq!(x.power, y.power);
            }
            (Err(x), Err(y)) => assert_eq!(x, y),
            other => panic!("diverging outcomes {other:?}"),
        }
    }

    #[test]
    fn equal_power_tie_resolves_to_smallest_assignment() {
        // Two identical servers behind the same switch: both optima cost the
        // same, so the lexicographically smaller placement must win.
        let nodes = vec![
            Node::sdn_switch(NodeId(0), 10.0),
            Node::sdn_switch(NodeId(1), 10.0),
            Node::nfv_server(NodeId(2), 50.0, 0.5, vec![16], None),
            Node::nfv_server(NodeId(3), 50.0, 0.5, vec![16], None),
        ];
        let mk = |id: u32, u: u32, v: u32| Link {
            id: LinkId(id),
            endpoints: (NodeId(u), NodeId(v)),
            capacity: 1_000,
            utilization_factor: 1.0,
            p_max: 5.0,
            is_sdn: true,
        };
        let graph = NetworkGraph::new(nodes, vec![mk(0, 0, 1), mk(1, 0, 2), mk(2, 0, 3)]).unwrap();
        let catalog = NfCatalog::new(vec![NetworkFunction {
            id: NfId(0),
            resource_demand: vec![4],
            processing_capacity: 1_000,
            rising_factor: 1.0,
        }])
        .unwrap();
        let flows = vec![FlowSpec {
            id: FlowId(0),
            source: NodeId(0),
            destination: NodeId(1),
            rate: 10,
            chain: vec![NfId(0)],
        }];
        let sol = exhaustive_solve(&graph, &catalog, &flows, &OracleLimits::default()).unwrap();
        assert_eq!(sol.assignments[0].placements, vec![(1, NodeId(2))]);
    }

    #[test]
    fn infeasible_when_nothing_can_host() {
        let (graph, _, flows) = forced_instance();
        let catalog = NfCatalog::new(vec![NetworkFunction {
            id: NfId(0),
            resource_demand: vec![17],
            processing_capacity: 1_000,
            rising_factor: 1.0,
        }])
        .unwrap();
        let err = exhaustive_solve(&graph, &catalog, &flows, &OracleLimits::default()).unwrap_err();
        assert_eq!(err, OracleError::Infeasible);
    }

    #[test]
    fn limits_are_enforced() {
        let (graph, catalog, flows) = forced_instance();
        let limits = OracleLimits {
            max_nodes: 2,
            ..OracleLimits::default()
        };
        assert!(matches!(
            exhaustive_solve(&graph, &catalog, &flows, &limits),
            Err(OracleError::LimitsExceeded(_))
        ));
    }
}
