//! Greedy and exact block packing over blob transactions, the four-way
//! block classification, and the delay/fee-loss metrics.
//!
//! The blob capacity is tiny (six per block), which makes the knapsack
//! exactly solvable: at most `capacity / b` candidates of blob class `b` can
//! ever be chosen, so pruning each class to its top earners by revenue
//! preserves an optimal solution, and branch-and-bound finishes the rest.

use crate::tx::{expand_group, BlobTx, BuilderRevenueView};
use crate::units::Wei;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Debug)]
pub struct PackingProblem {
    pub candidates: Vec<BuilderRevenueView>,
    pub blob_capacity: u32,
    /// Remaining block gas available for blob transactions, if enforced.
    pub gas_budget: Option<u64>,
}

impl PackingProblem {
    pub fn new(candidates: Vec<BuilderRevenueView>, blob_capacity: u32) -> Self {
        PackingProblem { candidates, blob_capacity, gas_budget: None }
    }

    pub fn with_gas_budget(mut self, budget: u64) -> Self {
        self.gas_budget = Some(budget);
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PackingResult {
    /// Chosen candidates as (tx id, option id), in canonical order.
    pub chosen: Vec<(String, Option<String>)>,
    pub total_blobs: u32,
    pub total_gas: u64,
    pub total_revenue: Wei,
}

/// Canonical candidate order: revenue descending, then fewer blobs, fewer
/// gas, lexicographic id. Used for greedy scanning, search exploration, and
/// tie-breaking, so identical inputs yield identical chosen sets.
fn canonical_cmp(a: &BuilderRevenueView, b: &BuilderRevenueView) -> Ordering {
    b.revenue
        .cmp(&a.revenue)
        .then(a.blobs.cmp(&b.blobs))
        .then(a.gas.cmp(&b.gas))
        .then(a.tx_id.cmp(&b.tx_id))
        .then(a.option_id.cmp(&b.option_id))
}

fn sorted_candidates(problem: &PackingProblem) -> Vec<BuilderRevenueView> {
    let mut cands: Vec<BuilderRevenueView> = problem
        .candidates
        .iter()
        .filter(|c| c.blobs >= 1 && c.blobs <= problem.blob_capacity)
        .cloned()
        .collect();
    cands.sort_by(canonical_cmp);
    cands
}

fn result_from(chosen: Vec<&BuilderRevenueView>) -> PackingResult {
    let total_blobs = chosen.iter().map(|c| c.blobs).sum();
    let total_gas = chosen.iter().map(|c| c.gas).sum();
    let total_revenue = chosen.iter().map(|c| c.revenue).sum();
    PackingResult {
        chosen: chosen.iter().map(|c| (c.tx_id.clone(), c.option_id.clone())).collect(),
        total_blobs,
        total_gas,
        total_revenue,
    }
}

/// Naive baseline: scan in descending-revenue order, take whatever still
/// fits (capacity, gas budget, group unused).
pub fn greedy_pack(problem: &PackingProblem) -> PackingResult {
    let cands = sorted_candidates(problem);
    let mut blobs_left = problem.blob_capacity;
    let mut gas_left = problem.gas_budget;
    let mut used_groups: HashSet<&str> = HashSet::new();
    let mut chosen = Vec::new();
    for cand in &cands {
        if cand.blobs > blobs_left {
            continue;
        }
        if let Some(g) = gas_left {
            if cand.gas > g {
                continue;
            }
        }
        if let Some(group) = cand.group_id.as_deref() {
            if used_groups.contains(group) {
                continue;
            }
            used_groups.insert(group);
        }
        blobs_left -= cand.blobs;
        if let Some(g) = gas_left.as_mut() {
            *g -= cand.gas;
        }
        chosen.push(cand);
    }
    result_from(chosen)
}

// Keep this many candidates per blob class beyond the fitting bound, as
// slack for gas-budget interactions.
const PRUNE_SLACK: usize = 6;
// Below this size the search runs on the full candidate set.
const PRUNE_THRESHOLD: usize = 28;

fn prune(cands: Vec<BuilderRevenueView>, capacity: u32, budgeted: bool) -> Vec<BuilderRevenueView> {
    if cands.len() <= PRUNE_THRESHOLD {
        return cands;
    }
    // Candidates arrive in canonical order, so "first k in a bucket" is
    // "top k by revenue" with deterministic ties.
    let mut kept: Vec<BuilderRevenueView> = Vec::new();
    if !budgeted {
        let mut per_class: BTreeMap<u32, usize> = BTreeMap::new();
        for cand in cands {
            let quota = (capacity / cand.blobs) as usize + PRUNE_SLACK;
            let seen = per_class.entry(cand.blobs).or_insert(0);
            if *seen < quota {
                *seen += 1;
                kept.push(cand);
            }
        }
    } else {
        // With a gas budget, bucket each blob class by gas quartile so cheap
        // high-revenue candidates are not shadowed by expensive ones.
        let mut class_gas: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for cand in &cands {
            class_gas.entry(cand.blobs).or_default().push(cand.gas);
        }
        for gas in class_gas.values_mut() {
            gas.sort_unstable();
        }
        let quartile = |blobs: u32, gas: u64| -> usize {
            let sorted = &class_gas[&blobs];
            let rank = sorted.partition_point(|&g| g < gas);
            rank * 4 / sorted.len().max(1)
        };
        let mut per_bucket: BTreeMap<(u32, usize), usize> = BTreeMap::new();
        for cand in cands {
            let quota = (capacity / cand.blobs) as usize + PRUNE_SLACK;
            let key = (cand.blobs, quartile(cand.blobs, cand.gas).min(3));
            let seen = per_bucket.entry(key).or_insert(0);
            if *seen < quota {
                *seen += 1;
                kept.push(cand);
            }
        }
    }
    kept
}

struct Search<'a> {
    cands: &'a [BuilderRevenueView],
    suffix_revenue: Vec<u128>,
    respect_groups: bool,
    best_revenue: Wei,
    best: Vec<usize>,
    current: Vec<usize>,
}

impl<'a> Search<'a> {
    fn run(
        cands: &'a [BuilderRevenueView],
        capacity: u32,
        gas_budget: Option<u64>,
        respect_groups: bool,
    ) -> Vec<usize> {
        let mut suffix_revenue = vec![0u128; cands.len() + 1];
        for i in (0..cands.len()).rev() {
            suffix_revenue[i] = suffix_revenue[i + 1] + cands[i].revenue.0;
        }
        let mut search = Search {
            cands,
            suffix_revenue,
            respect_groups,
            best_revenue: Wei::ZERO,
            best: Vec::new(),
            current: Vec::new(),
        };
        let mut used_groups: Vec<&str> = Vec::new();
        search.dfs(0, capacity, gas_budget, Wei::ZERO, &mut used_groups);
        search.best
    }

    fn dfs(
        &mut self,
        index: usize,
        blobs_left: u32,
        gas_left: Option<u64>,
        revenue: Wei,
        used_groups: &mut Vec<&'a str>,
    ) {
        if revenue > self.best_revenue {
            self.best_revenue = revenue;
            self.best = self.current.clone();
        }
        if index >= self.cands.len() || blobs_left == 0 {
            return;
        }
        // Upper bound: everything remaining, ignoring constraints.
        if revenue.0 + self.suffix_revenue[index] <= self.best_revenue.0 {
            return;
        }
        let cand = &self.cands[index];
        let fits_blobs = cand.blobs <= blobs_left;
        let fits_gas = gas_left.map_or(true, |g| cand.gas <= g);
        let group_free = !self.respect_groups
            || cand
                .group_id
                .as_deref()
                .map_or(true, |g| !used_groups.contains(&g));
        if fits_blobs && fits_gas && group_free {
            let pushed_group = if self.respect_groups {
                if let Some(g) = cand.group_id.as_deref() {
                    used_groups.push(g);
                    true
                } else {
                    false
                }
            } else {
                false
            };
            self.current.push(index);
            self.dfs(
                index + 1,
                blobs_left - cand.blobs,
                gas_left.map(|g| g - cand.gas),
                revenue + cand.revenue,
                used_groups,
            );
            self.current.pop();
            if pushed_group {
                used_groups.pop();
            }
        }
        self.dfs(index + 1, blobs_left, gas_left, revenue, used_groups);
    }
}

fn exact_pack(problem: &PackingProblem, respect_groups: bool) -> PackingResult {
    let cands = prune(
        sorted_candidates(problem),
        problem.blob_capacity,
        problem.gas_budget.is_some(),
    );
    let chosen_idx = Search::run(&cands, problem.blob_capacity, problem.gas_budget, respect_groups);
    result_from(chosen_idx.iter().map(|&i| &cands[i]).collect())
}

/// Revenue-maximizing selection under blob capacity and gas budget.
/// Candidates are treated as independent; use [`optimal_pack_subset`] when
/// subset-bid groups are present.
pub fn optimal_pack(problem: &PackingProblem) -> PackingResult {
    exact_pack(problem, false)
}

/// Like [`optimal_pack`] but additionally enforces at most one option per
/// subset-bid group. On inputs without groups the two coincide.
pub fn optimal_pack_subset(problem: &PackingProblem) -> PackingResult {
    exact_pack(problem, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Optimal,
    Suboptimal,
    Unknown,
    OutOfGas,
    NoBlobs,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Optimal => "optimal",
            Verdict::Suboptimal => "suboptimal",
            Verdict::Unknown => "unknown",
            Verdict::OutOfGas => "out_of_gas",
            Verdict::NoBlobs => "no_blobs",
        };
        f.write_str(s)
    }
}

impl FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(Verdict::Optimal),
            "suboptimal" => Ok(Verdict::Suboptimal),
            "unknown" => Ok(Verdict::Unknown),
            "out_of_gas" => Ok(Verdict::OutOfGas),
            "no_blobs" => Ok(Verdict::NoBlobs),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

/// Exact fraction `(optimal - actual) / optimal`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossRatio {
    pub numer: u128,
    pub denom: u128,
}

impl LossRatio {
    pub fn as_f64(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// Decimal rendering by long division, exact to the requested digits.
    pub fn to_decimal(&self, digits: usize) -> String {
        let int = self.numer / self.denom;
        let mut rem = self.numer % self.denom;
        let mut out = format!("{int}.");
        for _ in 0..digits {
            rem *= 10;
            out.push(char::from(b'0' + (rem / self.denom) as u8));
            rem %= self.denom;
        }
        out
    }
}

/// Relative builder fee loss. `None` when the optimal revenue is zero
/// (excluded from aggregates).
pub fn relative_fee_loss(actual_revenue: Wei, optimal_revenue: Wei) -> Option<LossRatio> {
    if optimal_revenue.is_zero() {
        return None;
    }
    debug_assert!(actual_revenue <= optimal_revenue);
    Some(LossRatio {
        numer: optimal_revenue.0.saturating_sub(actual_revenue.0),
        denom: optimal_revenue.0,
    })
}

/// Delay of an included transaction in `(milliseconds, blocks)`.
pub fn inclusion_delay(
    tx: &BlobTx,
    inclusion_time_ms: u64,
    inclusion_block: u64,
    first_possible_block: u64,
) -> (u64, u64) {
    (
        inclusion_time_ms.saturating_sub(tx.first_seen_ms),
        inclusion_block.saturating_sub(first_possible_block),
    )
}

/// Full audit of one block's packing.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockAudit {
    pub verdict: Verdict,
    pub actual_revenue: Wei,
    pub optimal_revenue: Wei,
    pub greedy_revenue: Wei,
    pub relative_loss: Option<LossRatio>,
    pub blobs_actual: u32,
    pub blobs_optimal: u32,
}

/// Classifies one block against the transactions its builder could have
/// packed. The optimal packing is computed without a gas budget; the gas
/// check is applied afterwards.
pub fn classify_block(
    actual_included: &[BlobTx],
    eligible: &[BlobTx],
    max_blobs: u32,
    block_gas_limit: u64,
    non_blob_gas_used: u64,
) -> Result<BlockAudit> {
    let blobs_actual: u32 = actual_included.iter().map(|tx| tx.num_blobs).sum();
    let actual_revenue: Wei = actual_included.iter().map(|tx| tx.revenue()).sum();
    if blobs_actual == 0 {
        return Ok(BlockAudit {
            verdict: Verdict::NoBlobs,
            actual_revenue,
            optimal_revenue: Wei::ZERO,
            greedy_revenue: Wei::ZERO,
            relative_loss: None,
            blobs_actual: 0,
            blobs_optimal: 0,
        });
    }

    // Actual transactions were demonstrably available: union them into the
    // candidate universe, deduplicated by id.
    let mut seen: HashSet<&str> = HashSet::new();
    let mut views = Vec::new();
    for tx in actual_included.iter().chain(eligible.iter()) {
        if seen.insert(tx.id.as_str()) {
            views.extend(expand_group(tx)?);
        }
    }
    let problem = PackingProblem::new(views, max_blobs);
    let opt = optimal_pack_subset(&problem);
    let grd = greedy_pack(&problem);

    let verdict = if non_blob_gas_used + opt.total_gas > block_gas_limit {
        Verdict::OutOfGas
    } else if actual_revenue < opt.total_revenue {
        Verdict::Suboptimal
    } else if actual_revenue == grd.total_revenue {
        Verdict::Unknown
    } else {
        Verdict::Optimal
    };

    Ok(BlockAudit {
        verdict,
        actual_revenue,
        optimal_revenue: opt.total_revenue,
        greedy_revenue: grd.total_revenue,
        relative_loss: relative_fee_loss(
            actual_revenue.min(opt.total_revenue),
            opt.total_revenue,
        ),
        blobs_actual,
        blobs_optimal: opt.total_blobs,
    })
}

/// Structural feasibility check used by tests.
pub fn is_feasible(result: &PackingResult, problem: &PackingProblem) -> bool {
    if result.total_blobs > problem.blob_capacity {
        return false;
    }
    if let Some(budget) = problem.gas_budget {
        if result.total_gas > budget {
            return false;
        }
    }
    let mut groups = HashSet::new();
    for (tx_id, option_id) in &result.chosen {
        let cand = problem
            .candidates
            .iter()
            .find(|c| &c.tx_id == tx_id && &c.option_id == option_id);
        let Some(cand) = cand else { return false };
        if let Some(g) = &cand.group_id {
            if !groups.insert(g.clone()) {
                return false;
            }
        }
    }
    true
}
