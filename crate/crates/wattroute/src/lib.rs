// SPDX-License-Identifier: Apache-2.0

//! Energy-aware joint network-function placement and flow routing for core
//! networks that are only partially upgraded to SDN switching and NFV servers.
//!
//! The library models a mixed network of legacy switches, SDN switches, NFV
//! servers and fixed-function gateways, prices every node and link by the
//! power it would cost to switch it on, and serves each traffic flow by a beam
//! search over its service chain: one stage per chained function, candidate
//! hosts filtered by residual capacity, stages connected by a node-weighted,
//! capacity-aware shortest path. An exhaustive solver provides the exact
//! optimum on desk-scale instances for benchmarking, and the harness module
//! drives reproducible experiments with CSV output.

pub mod beam;
pub mod capacity;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod power;
pub mod routing;
pub mod scenarios;

mod exec;
