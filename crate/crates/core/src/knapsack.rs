//! 0/1 knapsack solvers: exact dynamic programming, the greedy ratio
//! heuristic, and a brute-force oracle for small instances.

use crate::error::{Error, Result};

/// Default working-memory cap for [`solve_dp`]: 2 GiB.
pub const DEFAULT_MEM_CAP_BYTES: u64 = 2 << 30;

pub const MEM_CAP_ENV: &str = "PRUNEPACK_MEM_CAP_BYTES";

/// Largest instance [`brute_force_oracle`] accepts.
pub const BRUTE_FORCE_MAX_ITEMS: usize = 24;

/// Memory cap from `PRUNEPACK_MEM_CAP_BYTES`, or the default.
pub fn mem_cap_from_env() -> u64 {
    std::env::var(MEM_CAP_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_MEM_CAP_BYTES)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnapsackInstance {
    pub values: Vec<f64>,
    pub weights: Vec<u64>,
    pub capacity: u64,
}

impl KnapsackInstance {
    pub fn new(values: Vec<f64>, weights: Vec<u64>, capacity: u64) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!("{} values for {} weights", values.len(), weights.len())));
        }
        if let Some(index) = weights.iter().position(|&w| w == 0) {
            return Err(Error::ZeroWeight { index });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("knapsack value {index}")));
        }
        Ok(KnapsackInstance { values, weights, capacity })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn solution(&self, mut selected: Vec<usize>, exact: bool) -> KnapsackSolution {
        selected.sort_unstable();
        let total_value = selected.iter().map(|&i| self.values[i]).sum();
        let total_weight = selected.iter().map(|&i| self.weights[i]).sum();
        KnapsackSolution { selected, total_value, total_weight, exact }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnapsackSolution {
    /// Selected item indices, ascending.
    pub selected: Vec<usize>,
    pub total_value: f64,
    pub total_weight: u64,
    pub exact: bool,
}

/// Bytes needed by [`solve_dp`]: the `n x (capacity + 1)` keep bit matrix
/// plus two `f64` value rows.
pub fn dp_memory_bytes(n: usize, capacity: u64) -> u128 {
    let width = capacity as u128 + 1;
    (n as u128 * width).div_ceil(8) + 2 * width * 8
}

/// Exact solver with the default (or environment) memory cap.
pub fn solve_dp(instance: &KnapsackInstance) -> Result<KnapsackSolution> {
    solve_dp_with_cap(instance, mem_cap_from_env())
}

/// Exact dynamic program over capacities `0..=C` with two rolling value
/// rows and a keep bit per (item, capacity).
///
/// When taking and skipping an item give the same value the item is taken.
/// Backtracking walks items from last to first starting at capacity `C` and
/// subtracts the weight of each kept item.
pub fn solve_dp_with_cap(instance: &KnapsackInstance, mem_cap_bytes: u64) -> Result<KnapsackSolution> {
    if let Some(index) = instance.values.iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeValue { index, value: instance.values[index] });
    }
    let n = instance.len();
    let required = dp_memory_bytes(n, instance.capacity);
    if required > mem_cap_bytes as u128 {
        return Err(Error::MemoryCap { required, cap: mem_cap_bytes });
    }
    let cap = instance.capacity as usize;
    let width = cap + 1;

    let mut keep = vec![0u64; (n * width).div_ceil(64)];
    let mut prev = vec![0.0f64; width];
    let mut curr = vec![0.0f64; width];
    for (i, (&value, &weight)) in instance.values.iter().zip(&instance.weights).enumerate() {
        let row = i * width;
        for f in 0..width {
            let skip = prev[f];
            let fits = weight <= f as u64;
            if fits {
                let take = value + prev[f - weight as usize];
                if skip <= take {
                    curr[f] = take;
                    let bit = row + f;
                    keep[bit / 64] |= 1 << (bit % 64);
                    continue;
                }
            }
            curr[f] = skip;
        }
        std::mem::swap(&mut prev, &mut curr);
    }

    let mut selected = Vec::new();
    let mut remaining = cap;
    for i in (0..n).rev() {
        let bit = i * width + remaining;
        if keep[bit / 64] >> (bit % 64) & 1 == 1 {
            selected.push(i);
            remaining -= instance.weights[i] as usize;
        }
    }
    Ok(instance.solution(selected, true))
}

/// Greedy by value/weight ratio (descending; ties by smaller weight, then
/// lower index), packing every item that still fits. Returns the better of
/// that pack and the single most valuable feasible item, which guarantees
/// at least half the optimum.
pub fn solve_greedy(instance: &KnapsackInstance) -> KnapsackSolution {
    let mut order: Vec<usize> = (0..instance.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = instance.values[a] / instance.weights[a] as f64;
        let rb = instance.values[b] / instance.weights[b] as f64;
        rb.total_cmp(&ra).then(instance.weights[a].cmp(&instance.weights[b])).then(a.cmp(&b))
    });

    let mut packed = Vec::new();
    let mut used = 0u64;
    for i in order {
        if used + instance.weights[i] <= instance.capacity {
            used += instance.weights[i];
            packed.push(i);
        }
    }
    let packed = instance.solution(packed, false);

    let best_single = (0..instance.len())
        .filter(|&i| instance.weights[i] <= instance.capacity)
        .fold(None::<usize>, |best, i| match best {
            Some(b) if instance.values[b] >= instance.values[i] => Some(b),
            _ => Some(i),
        });
    match best_single {
        Some(i) if instance.values[i] > packed.total_value => instance.solution(vec![i], false),
        _ => packed,
    }
}

/// Enumerates every feasible subset depth first, adding values in index
/// order. For tests and tiny instances only.
pub fn brute_force_oracle(instance: &KnapsackInstance) -> Result<KnapsackSolution> {
    let n = instance.len();
    if n > BRUTE_FORCE_MAX_ITEMS {
        return Err(Error::TooManyItems { n, max: BRUTE_FORCE_MAX_ITEMS });
    }
    struct Search<'a> {
        inst: &'a KnapsackInstance,
        path: Vec<usize>,
        best: Vec<usize>,
        best_value: f64,
    }
    impl Search<'_> {
        fn visit(&mut self, next: usize, weight: u64, value: f64) {
            if value > self.best_value {
                self.best_value = value;
                self.best.clone_from(&self.path);
            }
            for i in next..self.inst.len() {
                let w = weight + self.inst.weights[i];
                if w <= self.inst.capacity {
                    self.path.push(i);
                    self.visit(i + 1, w, value + self.inst.values[i]);
                    self.path.pop();
                }
            }
        }
    }
    let mut search = Search { inst: instance, path: Vec::new(), best: Vec::new(), best_value: 0.0 };
    search.visit(0, 0, 0.0);
    Ok(instance.solution(search.best, true))
}
