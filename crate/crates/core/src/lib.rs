//! Structured channel pruning planned as a 0/1 knapsack problem.
//!
//! The crate is framework independent: a network is described by a small
//! JSON graph document ([`graph`]), channel scores come from precomputed
//! files or raw weight/gradient dumps ([`importance`], [`tensor`]), and the
//! planner ([`planner`]) turns them into a [`plan::PrunePlan`] that keeps
//! coupled channels consistent across skip connections, depthwise
//! convolutions and squeeze-and-excitation gates.
//!
//! The [`distill`] module holds the loss kernels used while fine-tuning the
//! pruned network against the original one.

pub mod cost;
pub mod distill;
pub mod error;
pub mod graph;
pub mod importance;
pub mod knapsack;
pub mod plan;
pub mod planner;
pub mod report;
pub mod tensor;

pub use cost::{
    build_flops_costs, build_latency_costs, channel_flops_saving, gcd_reduce, parse_latency_table, ChannelCost, CostUnit,
    GcdReduction,
};
pub use distill::{
    combined_loss, fit_reconstruction, ikd_loss, kd_loss, DistillInputs, FeatureMapBatch, IkdPair, LossWeights,
    ReconstructionMatrix,
};
pub use error::{Error, Result};
pub use graph::{
    apply_prune_plan, build_coupling_groups, layer_flops, network_flops, parse_graph, Axis, AxisRef,
    Coupling, CouplingGroup, GraphBuilder, LayerKind, LayerSpec, NetworkGraph,
};
pub use importance::{
    aggregate_group_importance, compute_channel_importance, importance_from_tensors, parse_scores, ChannelImportance,
    ImportanceMode, ScoreSample,
};
pub use knapsack::{brute_force_oracle, solve_dp, solve_greedy, KnapsackInstance, KnapsackSolution, DEFAULT_MEM_CAP_BYTES};
pub use plan::{Budget, BudgetKind, PrunePlan, SolverKind};
pub use planner::{calibrate_budget, plan_prune, PlanOptions, PlanningProblem};
pub use report::{emit_report, Report};
pub use tensor::{load_tensor_dir, write_tensor_dir, Dtype, TensorBlob, TensorData};
