//! Plan document shared by the planner, the graph rewriter and reports.
//!
//! ```json
//! {
//!   "version": 1,
//!   "budget": {"kind": "flops_fraction", "value": 0.5},
//!   "solver": "dp",
//!   "importance_mode": "abs_product",
//!   "min_keep": 1,
//!   "groups": {"1": [0, 3, 5]},
//!   "layers": {"conv1": {"kept_out": [0, 3, 5]}},
//!   "original_flops": 1769472,
//!   "achieved_flops": 82944,
//!   "achieved_ratio": 0.953125,
//!   "stats": { ... }
//! }
//! ```
//!
//! `groups` lists kept channel indices for every prunable coupling group;
//! groups that are absent keep all channels. `layers` is derived from
//! `groups` for consumers that slice checkpoints per layer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_coupling_groups, Axis, NetworkGraph};
use crate::importance::ImportanceMode;

pub const PLAN_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    FlopsAbsolute,
    FlopsFraction,
    LatencyAbsolute,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub kind: BudgetKind,
    /// FLOPs, a fraction of the original FLOPs, or microseconds.
    pub value: f64,
}

impl Budget {
    pub fn flops(value: u64) -> Self {
        Budget { kind: BudgetKind::FlopsAbsolute, value: value as f64 }
    }

    pub fn fraction(value: f64) -> Self {
        Budget { kind: BudgetKind::FlopsFraction, value }
    }

    pub fn latency_us(value: f64) -> Self {
        Budget { kind: BudgetKind::LatencyAbsolute, value }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() || self.value <= 0.0 {
            return Err(Error::InvalidBudget(format!("value must be positive, got {}", self.value)));
        }
        if self.kind == BudgetKind::FlopsFraction && self.value > 1.0 {
            return Err(Error::InvalidBudget(format!("fraction must be in (0, 1], got {}", self.value)));
        }
        Ok(())
    }

    pub fn is_latency(&self) -> bool {
        self.kind == BudgetKind::LatencyAbsolute
    }

    /// Target in FLOPs (or microseconds for latency budgets).
    pub fn target(&self, original_flops: u64) -> f64 {
        match self.kind {
            BudgetKind::FlopsAbsolute | BudgetKind::LatencyAbsolute => self.value,
            BudgetKind::FlopsFraction => self.value * original_flops as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Dp,
    Greedy,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Dp => "dp",
            SolverKind::Greedy => "greedy",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solver_calls: usize,
    /// Calibrated capacity in item-weight units, mandatory channels included.
    pub item_capacity: u64,
    pub total_item_weight: u64,
    pub gcd: u64,
    pub items: usize,
    pub mandatory_channels: usize,
    pub selected_channels: usize,
    pub selected_value: f64,
    pub fell_back_to_greedy: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerKeep {
    pub kept_out: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunePlan {
    pub version: u32,
    pub budget: Budget,
    pub solver: SolverKind,
    pub importance_mode: ImportanceMode,
    pub min_keep: usize,
    pub groups: BTreeMap<usize, Vec<usize>>,
    #[serde(default)]
    pub layers: BTreeMap<String, LayerKeep>,
    pub original_flops: u64,
    pub achieved_flops: u64,
    pub achieved_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_latency_us: Option<f64>,
    #[serde(default)]
    pub stats: SolverStats,
}

impl PrunePlan {
    /// A plan with the given keep sets and no budget bookkeeping; the
    /// FLOPs fields are filled by [`PrunePlan::finalize`].
    pub fn from_keep_sets(groups: BTreeMap<usize, Vec<usize>>) -> Self {
        PrunePlan {
            version: PLAN_VERSION,
            budget: Budget::fraction(1.0),
            solver: SolverKind::Dp,
            importance_mode: ImportanceMode::default(),
            min_keep: 1,
            groups,
            layers: BTreeMap::new(),
            original_flops: 0,
            achieved_flops: 0,
            achieved_ratio: 0.0,
            achieved_latency_us: None,
            stats: SolverStats::default(),
        }
    }

    /// Keeps every channel of every prunable group.
    pub fn identity(graph: &NetworkGraph) -> Result<Self> {
        let coupling = build_coupling_groups(graph)?;
        let groups = coupling.prunable_groups().map(|g| (g.group_id, (0..g.channel_count).collect())).collect();
        let mut plan = PrunePlan::from_keep_sets(groups);
        plan.finalize(graph)?;
        Ok(plan)
    }

    /// Recomputes the per-layer view and FLOPs fields from `groups` by
    /// applying the plan to `graph`.
    pub fn finalize(&mut self, graph: &NetworkGraph) -> Result<()> {
        let coupling = build_coupling_groups(graph)?;
        let pruned = crate::graph::apply_prune_plan(graph, self)?;
        self.original_flops = crate::graph::network_flops(graph)?;
        self.achieved_flops = crate::graph::network_flops(&pruned)?;
        self.achieved_ratio = prune_ratio(self.original_flops, self.achieved_flops);
        self.layers = BTreeMap::new();
        for (i, layer) in graph.layers().iter().enumerate() {
            let gid = coupling.group_of(i, Axis::Output);
            if let Some(kept) = self.groups.get(&gid) {
                self.layers.insert(layer.id.clone(), LayerKeep { kept_out: kept.clone() });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn from_json(document: &str) -> Result<Self> {
        let plan: PrunePlan = serde_json::from_str(document).map_err(Error::from_json)?;
        if plan.version != PLAN_VERSION {
            return Err(Error::PlanMismatch(format!("unsupported plan version {}", plan.version)));
        }
        Ok(plan)
    }
}

pub fn prune_ratio(original: u64, achieved: u64) -> f64 {
    if original == 0 {
        0.0
    } else {
        1.0 - achieved as f64 / original as f64
    }
}
