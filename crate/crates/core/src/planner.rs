//! End-to-end planning: coupling groups, group values, per-channel costs,
//! budget calibration and the knapsack solve.
//!
//! Every prunable group first keeps its `min_keep` highest-valued channels
//! unconditionally. The remaining channels become knapsack items whose
//! value is the group's aggregated importance and whose weight is the
//! group's per-channel cost. Item weights overlap across layers, so the
//! knapsack capacity is found by bisecting on the true FLOPs (or estimated
//! latency) of the resulting plan.

use std::collections::BTreeMap;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::cost::{build_flops_costs, build_latency_costs, estimated_latency_us, flops_with_counts, gcd_reduce};
use crate::error::{Error, Result};
use crate::graph::{build_coupling_groups, network_flops, Coupling, NetworkGraph};
use crate::importance::{aggregate_group_importance, ChannelImportance, ImportanceMode};
use crate::knapsack::{mem_cap_from_env, solve_dp_with_cap, solve_greedy, KnapsackInstance};
use crate::plan::{prune_ratio, Budget, PrunePlan, SolverKind, SolverStats, PLAN_VERSION};

/// Bisection stops once the achieved metric is this close below target.
pub const CALIBRATION_TOLERANCE: f64 = 0.005;
pub const MAX_SOLVER_CALLS: usize = 20;

#[derive(Clone, Debug)]
pub struct PlanOptions {
    pub solver: SolverKind,
    /// Recorded in the plan; scores are computed by the caller.
    pub importance_mode: ImportanceMode,
    pub min_keep: usize,
    /// Clamp negative group values at zero instead of failing.
    pub clamp_negative: bool,
    /// Switch to the greedy solver when the DP exceeds its memory cap.
    pub greedy_fallback: bool,
    pub mem_cap_bytes: u64,
    /// Per-layer microseconds; required for latency budgets.
    pub latency_table: Option<BTreeMap<String, f64>>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            solver: SolverKind::Dp,
            importance_mode: ImportanceMode::AbsProduct,
            min_keep: 1,
            clamp_negative: false,
            greedy_fallback: true,
            mem_cap_bytes: mem_cap_from_env(),
            latency_table: None,
        }
    }
}

/// One selectable channel of a coupling group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneItem {
    pub group_id: usize,
    pub channel: usize,
    pub value: f64,
    pub weight: u64,
}

/// Kept channels for one capacity, plus how they were obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub keep: BTreeMap<usize, Vec<usize>>,
    pub solver: SolverKind,
    pub fell_back_to_greedy: bool,
    pub gcd: u64,
    pub selected_items: usize,
    pub selected_value: f64,
}

pub struct PlanningProblem<'g> {
    graph: &'g NetworkGraph,
    coupling: Coupling,
    mandatory: BTreeMap<usize, Vec<usize>>,
    items: Vec<PruneItem>,
    mandatory_weight: u64,
    total_weight: u64,
    options: PlanOptions,
    latency: bool,
}

impl<'g> PlanningProblem<'g> {
    pub fn new(graph: &'g NetworkGraph, importances: &[ChannelImportance], budget: &Budget, options: &PlanOptions) -> Result<Self> {
        let coupling = build_coupling_groups(graph)?;
        let mut values = aggregate_group_importance(graph, &coupling, importances)?;
        for vals in values.values_mut() {
            for (channel, v) in vals.iter_mut().enumerate() {
                if *v < 0.0 {
                    if !options.clamp_negative {
                        return Err(Error::NegativeValue { index: channel, value: *v });
                    }
                    *v = 0.0;
                }
            }
        }

        let costs = if budget.is_latency() {
            let table = options
                .latency_table
                .as_ref()
                .ok_or_else(|| Error::InvalidBudget("latency budget needs a latency table".into()))?;
            build_latency_costs(graph, &coupling, table)?
        } else {
            build_flops_costs(graph, &coupling)?
        };

        let mut mandatory = BTreeMap::new();
        let mut items = Vec::new();
        let mut mandatory_weight = 0u64;
        let mut total_weight = 0u64;
        for cost in &costs {
            let vals = &values[&cost.group_id];
            let mut order: Vec<usize> = (0..vals.len()).collect();
            order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
            let n_keep = options.min_keep.min(vals.len());
            let mut forced = order[..n_keep].to_vec();
            forced.sort_unstable();
            mandatory_weight += cost.per_channel_cost * n_keep as u64;
            total_weight += cost.per_channel_cost * vals.len() as u64;
            for (channel, &value) in vals.iter().enumerate() {
                if forced.binary_search(&channel).is_err() {
                    items.push(PruneItem { group_id: cost.group_id, channel, value, weight: cost.per_channel_cost });
                }
            }
            mandatory.insert(cost.group_id, forced);
        }

        Ok(PlanningProblem {
            graph,
            coupling,
            mandatory,
            items,
            mandatory_weight,
            total_weight,
            options: options.clone(),
            latency: budget.is_latency(),
        })
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn items(&self) -> &[PruneItem] {
        &self.items
    }

    pub fn mandatory(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.mandatory
    }

    pub fn mandatory_weight(&self) -> u64 {
        self.mandatory_weight
    }

    /// Item weight of keeping every prunable channel.
    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    /// Solves for the kept channels at `item_capacity` (mandatory channels
    /// included in the capacity).
    pub fn solve_at(&self, item_capacity: u64) -> Result<Selection> {
        let mut selection = Selection {
            keep: self.mandatory.clone(),
            solver: self.options.solver,
            fell_back_to_greedy: false,
            gcd: 1,
            selected_items: 0,
            selected_value: 0.0,
        };
        let capacity = item_capacity.saturating_sub(self.mandatory_weight);
        let picked: Vec<usize> = if self.items.is_empty() {
            Vec::new()
        } else if capacity >= self.total_weight - self.mandatory_weight {
            (0..self.items.len()).collect()
        } else {
            let weights: Vec<u64> = self.items.iter().map(|i| i.weight).collect();
            let reduced = gcd_reduce(&weights, capacity)?;
            selection.gcd = reduced.gcd;
            let instance = KnapsackInstance::new(self.items.iter().map(|i| i.value).collect(), reduced.weights, reduced.capacity)?;
            match self.options.solver {
                SolverKind::Greedy => solve_greedy(&instance).selected,
                SolverKind::Dp => match solve_dp_with_cap(&instance, self.options.mem_cap_bytes) {
                    Ok(s) => s.selected,
                    Err(e @ Error::MemoryCap { .. }) if self.options.greedy_fallback => {
                        warn!("{e}; falling back to greedy");
                        selection.solver = SolverKind::Greedy;
                        selection.fell_back_to_greedy = true;
                        solve_greedy(&instance).selected
                    }
                    Err(e) => return Err(e),
                },
            }
        };
        for &i in &picked {
            let item = &self.items[i];
            selection.keep.get_mut(&item.group_id).expect("item group has a keep set").push(item.channel);
            selection.selected_value += item.value;
        }
        for kept in selection.keep.values_mut() {
            kept.sort_unstable();
        }
        selection.selected_items = picked.len();
        Ok(selection)
    }

    fn counts(&self, keep: &BTreeMap<usize, Vec<usize>>) -> Vec<usize> {
        let mut counts: Vec<usize> = self.coupling.groups().iter().map(|g| g.channel_count).collect();
        for (&gid, kept) in keep {
            counts[gid] = kept.len();
        }
        counts
    }

    /// True FLOPs, or estimated microseconds for latency budgets.
    pub fn metric(&self, keep: &BTreeMap<usize, Vec<usize>>) -> Result<f64> {
        let counts = self.counts(keep);
        if self.latency {
            let table = self.options.latency_table.as_ref().expect("checked in new");
            estimated_latency_us(self.graph, &self.coupling, &counts, table)
        } else {
            Ok(flops_with_counts(self.graph, &self.coupling, &counts) as f64)
        }
    }

    pub fn baseline_metric(&self) -> Result<f64> {
        self.metric(&BTreeMap::new())
    }
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub capacity: u64,
    pub selection: Selection,
    pub solver_calls: usize,
    pub achieved: f64,
    pub target: f64,
}

/// Finds the largest item capacity whose plan stays within the budget.
///
/// Bisects on capacity between the mandatory-only plan and the keep-all
/// plan, stopping after [`MAX_SOLVER_CALLS`] solves or once the achieved
/// metric is within [`CALIBRATION_TOLERANCE`] below the target.
pub fn calibrate_budget(problem: &PlanningProblem<'_>, budget: &Budget) -> Result<Calibration> {
    budget.validate()?;
    let baseline = problem.baseline_metric()?;
    let target = budget.target(network_flops(problem.graph)?);

    if target >= baseline {
        let selection = problem.solve_at(problem.total_weight)?;
        return Ok(Calibration { capacity: problem.total_weight, selection, solver_calls: 0, achieved: baseline, target });
    }

    let floor_selection = problem.solve_at(problem.mandatory_weight)?;
    let floor = problem.metric(&floor_selection.keep)?;
    if floor > target {
        return Err(Error::InfeasibleBudget { target, floor });
    }

    let mut lo = problem.mandatory_weight;
    let mut hi = problem.total_weight;
    let mut best = (floor_selection, floor);
    let mut calls = 0;
    while calls < MAX_SOLVER_CALLS && hi - lo > 1 {
        if (target - best.1) / target <= CALIBRATION_TOLERANCE {
            break;
        }
        let mid = lo + (hi - lo) / 2;
        let selection = problem.solve_at(mid)?;
        calls += 1;
        let achieved = problem.metric(&selection.keep)?;
        debug!("calibration call {calls}: capacity {mid} -> {achieved} (target {target})");
        if achieved <= target {
            lo = mid;
            best = (selection, achieved);
        } else {
            hi = mid;
        }
    }
    Ok(Calibration { capacity: lo, selection: best.0, solver_calls: calls, achieved: best.1, target })
}

/// Plans which channels to keep under `budget`.
pub fn plan_prune(graph: &NetworkGraph, importances: &[ChannelImportance], budget: &Budget, options: &PlanOptions) -> Result<PrunePlan> {
    budget.validate()?;
    let problem = PlanningProblem::new(graph, importances, budget, options)?;
    let calibration = calibrate_budget(&problem, budget)?;
    let selection = calibration.selection;

    // every prunable group appears in the plan, kept whole or not
    let mut plan = PrunePlan {
        version: PLAN_VERSION,
        budget: *budget,
        solver: selection.solver,
        importance_mode: options.importance_mode,
        min_keep: options.min_keep,
        groups: selection.keep,
        layers: BTreeMap::new(),
        original_flops: 0,
        achieved_flops: 0,
        achieved_ratio: 0.0,
        achieved_latency_us: None,
        stats: SolverStats {
            solver_calls: calibration.solver_calls,
            item_capacity: calibration.capacity,
            total_item_weight: problem.total_weight,
            gcd: selection.gcd,
            items: problem.items.len(),
            mandatory_channels: problem.mandatory.values().map(Vec::len).sum(),
            selected_channels: selection.selected_items,
            selected_value: selection.selected_value,
            fell_back_to_greedy: selection.fell_back_to_greedy,
        },
    };
    plan.finalize(graph)?;
    if budget.is_latency() {
        plan.achieved_latency_us = Some(calibration.achieved);
    }
    debug_assert_eq!(plan.achieved_ratio, prune_ratio(plan.original_flops, plan.achieved_flops));
    Ok(plan)
}
