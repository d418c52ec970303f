//! Floe: a continuous dataflow engine with elastic core allocation.
//!
//! A dataflow is a directed graph of *pellets* (user logic with named ports)
//! connected by edges. The engine runs each pellet in a *flake*: input
//! queues, an instance pool sized by a core budget, and metrics. Core budgets
//! can be resized while the dataflow runs, pellet logic can be swapped
//! in-place, and whole subgraphs can be replaced without stopping the rest of
//! the graph.
//!
//! The crate also ships a deterministic simulator for comparing core
//! allocation strategies on synthetic workloads, and the allocation
//! strategies themselves (static look-ahead, reactive, hybrid).

pub mod adaptation;
pub mod engine;
pub mod graph;
pub mod routing;
pub mod sim;
