//! Per-layer accounting of a plan: kept and pruned output channels of every
//! weighted layer, totals, and solver bookkeeping.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{apply_prune_plan, network_flops, NetworkGraph};
use crate::plan::{prune_ratio, Budget, PrunePlan, SolverKind, SolverStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: String,
    pub kind: String,
    pub c_out: usize,
    pub kept: usize,
    pub pruned: usize,
    /// Pruned share of the output channels, in percent.
    pub prune_ratio_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub budget: Budget,
    pub target: f64,
    pub solver: SolverKind,
    pub original_flops: u64,
    pub achieved_flops: u64,
    pub achieved_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_latency_us: Option<f64>,
    /// Target minus achieved, in budget units.
    pub budget_residual: f64,
    pub total_channels: usize,
    pub kept_channels: usize,
    pub stats: SolverStats,
    pub layers: Vec<LayerRow>,
}

/// Builds the report by re-applying `plan` to `graph`; FLOPs totals are
/// recomputed, not copied from the plan.
pub fn emit_report(plan: &PrunePlan, graph: &NetworkGraph) -> Result<Report> {
    let pruned = apply_prune_plan(graph, plan)?;
    let original_flops = network_flops(graph)?;
    let achieved_flops = network_flops(&pruned)?;
    let target = plan.budget.target(original_flops);
    let achieved_metric = match plan.achieved_latency_us {
        Some(us) if plan.budget.is_latency() => us,
        _ => achieved_flops as f64,
    };

    let layers: Vec<LayerRow> = graph
        .layers()
        .iter()
        .zip(pruned.layers())
        .filter(|(l, _)| l.kind.is_compute())
        .map(|(before, after)| LayerRow {
            layer: before.id.clone(),
            kind: before.kind.to_string(),
            c_out: before.c_out,
            kept: after.c_out,
            pruned: before.c_out - after.c_out,
            prune_ratio_pct: 100.0 * (before.c_out - after.c_out) as f64 / before.c_out as f64,
        })
        .collect();

    Ok(Report {
        budget: plan.budget,
        target,
        solver: plan.solver,
        original_flops,
        achieved_flops,
        achieved_ratio: prune_ratio(original_flops, achieved_flops),
        achieved_latency_us: plan.achieved_latency_us,
        budget_residual: target - achieved_metric,
        total_channels: layers.iter().map(|r| r.c_out).sum(),
        kept_channels: layers.iter().map(|r| r.kept).sum(),
        stats: plan.stats.clone(),
        layers,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width table, one row per weighted layer.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let budget = match self.budget.kind {
            crate::plan::BudgetKind::FlopsAbsolute => format!("flops_absolute {}", self.budget.value),
            crate::plan::BudgetKind::FlopsFraction => format!("flops_fraction {}", self.budget.value),
            crate::plan::BudgetKind::LatencyAbsolute => format!("latency_absolute {} us", self.budget.value),
        };
        let solver = if self.stats.fell_back_to_greedy { format!("{} (dp over memory cap)", self.solver) } else { self.solver.to_string() };
        let _ = writeln!(out, "budget           {budget}");
        let _ = writeln!(out, "target           {:.1}", self.target);
        let _ = writeln!(out, "solver           {solver}");
        let _ = writeln!(out, "solver_calls     {}", self.stats.solver_calls);
        let _ = writeln!(out, "original_flops   {}", self.original_flops);
        let _ = writeln!(out, "achieved_flops   {}", self.achieved_flops);
        let _ = writeln!(out, "achieved_ratio   {:.4}%", 100.0 * self.achieved_ratio);
        if let Some(us) = self.achieved_latency_us {
            let _ = writeln!(out, "achieved_latency {us:.3} us");
        }
        let _ = writeln!(out, "budget_residual  {:.1}", self.budget_residual);
        let _ = writeln!(out);
        let width = self.layers.iter().map(|r| r.layer.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:<width$}  {:<14}  {:>6}  {:>6}  {:>6}  {:>9}", "layer", "kind", "c_out", "kept", "pruned", "ratio(%)");
        for r in &self.layers {
            let _ = writeln!(
                out,
                "{:<width$}  {:<14}  {:>6}  {:>6}  {:>6}  {:>9.4}",
                r.layer, r.kind, r.c_out, r.kept, r.pruned, r.prune_ratio_pct
            );
        }
        let pruned = self.total_channels - self.kept_channels;
        let pct = if self.total_channels == 0 { 0.0 } else { 100.0 * pruned as f64 / self.total_channels as f64 };
        let _ = writeln!(out, "{:<width$}  {:<14}  {:>6}  {:>6}  {:>6}  {:>9.4}", "total", "", self.total_channels, self.kept_channels, pruned, pct);
        out
    }
}
