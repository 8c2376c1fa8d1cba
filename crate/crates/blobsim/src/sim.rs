//! Slot-by-slot simulation: builder selection, block assembly, fee-state
//! transitions, metric collection, and run persistence.

use crate::demand::{generate, BuilderConfig, BuilderStrategy, Scenario};
use crate::fees::{
    blob_base_fee, fee_1559, fee_4844, update_exec_base_fee, update_excess_blob_gas,
    BlockFeeState, FeeBreakdown,
};
use crate::ingest::{audit_blocks, write_blocks_csv, AuditRow, IncludedBlobTx, TraceBlock};
use crate::mempool::TimedPool;
use crate::packing::{
    greedy_pack, optimal_pack, optimal_pack_subset, LossRatio, PackingProblem, PackingResult,
    Verdict,
};
use crate::tx::{expand_group, write_tx_csv, BlobTx};
use crate::units::{BlobGas, Wei};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Per-slot record of fee state, packing, and fee flows.
#[derive(Clone, Debug)]
pub struct SlotRecord {
    pub block_number: u64,
    pub timestamp_ms: u64,
    pub builder: String,
    pub blob_base_fee: Wei,
    pub exec_base_fee: Wei,
    pub excess_blob_gas: u64,
    pub blobs_included: u32,
    pub gas_used: u64,
    pub builder_revenue: Wei,
    pub breakdown: FeeBreakdown,
    /// Both packings against the same eligible set, in shadow-pricing mode.
    pub shadow_greedy_revenue: Option<Wei>,
    pub shadow_optimal_revenue: Option<Wei>,
}

#[derive(Clone, Debug)]
pub struct TxRecord {
    pub id: String,
    pub sender: String,
    pub num_blobs: u32,
    pub gas_usage: u64,
    pub priority_fee_per_gas: Wei,
    pub first_seen_ms: u64,
    pub inclusion_block: u64,
    pub inclusion_time_ms: u64,
    pub delay_ms: u64,
    pub delay_blocks: u64,
    pub breakdown: FeeBreakdown,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub slots: Vec<SlotRecord>,
    pub txs: Vec<TxRecord>,
    pub blocks: Vec<TraceBlock>,
    /// Public transactions as submitted (reactive fees resolved); the
    /// mempool dump for replay.
    pub mempool_export: Vec<BlobTx>,
    /// Post-hoc classification over the produced trace, same pipeline as
    /// offline replay.
    pub audits: Vec<AuditRow>,
}

fn pick_builder<'a>(builders: &'a [BuilderConfig], rng: &mut ChaCha12Rng) -> &'a BuilderConfig {
    let total: f64 = builders.iter().map(|b| b.selection_weight).sum();
    let mut draw = rng.gen::<f64>() * total;
    for builder in builders {
        draw -= builder.selection_weight;
        if draw <= 0.0 {
            return builder;
        }
    }
    builders.last().expect("non-empty builders")
}

fn pack_with(strategy: &BuilderStrategy, problem: &PackingProblem) -> PackingResult {
    match strategy {
        BuilderStrategy::Greedy => greedy_pack(problem),
        BuilderStrategy::Optimal => optimal_pack(problem),
        BuilderStrategy::SubsetOptimal => optimal_pack_subset(problem),
    }
}

/// Runs one deterministic simulation. With `shadow_pricing`, greedy and
/// optimal packings are both evaluated against each slot's eligible set but
/// only the configured strategy mutates state.
pub fn run(scenario: &Scenario, shadow_pricing: bool) -> Result<RunOutput> {
    scenario.validate()?;
    if scenario.builders.is_empty() {
        return Err(Error::ZeroBuilderWeight);
    }
    let params = &scenario.params;
    let window = scenario.window();
    let slot_ms = params.slot_ms();
    let genesis = scenario.genesis_timestamp_ms;
    let gas_budget = params.block_gas_limit.saturating_sub(scenario.reserved_non_blob_gas);

    let arrivals = generate(scenario)?;
    let mut rng = ChaCha12Rng::seed_from_u64(scenario.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut pool = TimedPool::new();
    let mut mempool_export: Vec<BlobTx> = Vec::new();
    let mut arrival_idx = 0usize;

    let mut base_fee = scenario.initial_exec_base_fee;
    let mut excess = BlobGas::ZERO;

    let mut slots = Vec::with_capacity(scenario.horizon_slots as usize);
    let mut tx_records = Vec::new();
    let mut blocks = Vec::with_capacity(scenario.horizon_slots as usize);

    for slot in 0..scenario.horizon_slots {
        let block_number = slot + 1;
        let timestamp_ms = genesis + block_number * slot_ms;
        let blob_fee = blob_base_fee(excess, params)?;

        // Submissions up to the block's expected time enter the pool;
        // reactive senders set their fee against the state they observe.
        while arrival_idx < arrivals.len()
            && arrivals[arrival_idx].tx.first_seen_ms <= timestamp_ms
        {
            let arrival = &arrivals[arrival_idx];
            let mut tx = arrival.tx.clone();
            if let Some((threshold, multiplier)) = arrival.reactive {
                if blob_fee > threshold {
                    tx.priority_fee_per_gas = tx.priority_fee_per_gas.times(multiplier as u128);
                }
            }
            if !tx.is_private {
                mempool_export.push(tx.clone());
            }
            pool.insert(tx)?;
            arrival_idx += 1;
        }

        let builder = pick_builder(&scenario.builders, &mut rng);
        let averse = rng.gen::<f64>() < builder.blob_aversion_probability;
        let sees_private =
            scenario.private_flow_builder.as_deref() == Some(builder.name.as_str());
        let eligible = pool.eligible_at(timestamp_ms, &window, sees_private);

        let state = BlockFeeState {
            block_number,
            timestamp_ms,
            base_fee_per_gas: base_fee,
            excess_blob_gas: excess,
            gas_used: 0,
            blob_gas_used: BlobGas::ZERO,
        };

        // Affordability: the block cannot include transactions whose caps
        // no longer cover the current base fees.
        let mut views = Vec::new();
        for tx in &eligible {
            if tx.max_fee_per_gas >= base_fee && tx.max_fee_per_blob_gas >= blob_fee {
                views.extend(expand_group(tx)?);
            }
        }
        let problem =
            PackingProblem::new(views, params.max_blobs_per_block).with_gas_budget(gas_budget);

        let (shadow_greedy, shadow_optimal) = if shadow_pricing {
            (
                Some(greedy_pack(&problem).total_revenue),
                Some(optimal_pack_subset(&problem).total_revenue),
            )
        } else {
            (None, None)
        };

        let packed = if averse { PackingResult::default() } else { pack_with(&builder.strategy, &problem) };

        // Resolve chosen candidates to the concrete inclusions.
        let mut included: Vec<IncludedBlobTx> = Vec::new();
        let mut breakdown = FeeBreakdown::default();
        let mut removed_ids: Vec<String> = Vec::new();
        for (tx_id, option_id) in &packed.chosen {
            let tx = eligible
                .iter()
                .find(|t| &t.id == tx_id)
                .expect("chosen candidate came from the eligible set");
            let (blobs, gas, prio) = match option_id {
                None => (tx.num_blobs, tx.gas_usage, tx.priority_fee_per_gas),
                Some(opt_id) => {
                    let opt = tx
                        .subset_options
                        .as_ref()
                        .and_then(|g| g.options.iter().find(|o| &o.option_id == opt_id))
                        .expect("chosen option exists on its transaction");
                    (opt.num_blobs, opt.gas_usage, opt.priority_fee_per_gas)
                }
            };
            let (burned, tip) = fee_1559(gas, prio, &state)?;
            let blob_burned = fee_4844(blobs, &state, params)?;
            let tx_breakdown = FeeBreakdown {
                exec_base_burned: burned,
                exec_priority_to_builder: tip,
                blob_base_burned: blob_burned,
            };
            breakdown.accumulate(&tx_breakdown);
            included.push(IncludedBlobTx {
                id: tx.id.clone(),
                sender: tx.sender.clone(),
                num_blobs: blobs,
                gas_usage: gas,
                priority_fee_per_gas: prio,
            });
            let first_possible_block = ((tx.first_seen_ms + window.min_lead_ms)
                .saturating_sub(genesis))
            .div_ceil(slot_ms)
            .max(1);
            tx_records.push(TxRecord {
                id: tx.id.clone(),
                sender: tx.sender.clone(),
                num_blobs: blobs,
                gas_usage: gas,
                priority_fee_per_gas: prio,
                first_seen_ms: tx.first_seen_ms,
                inclusion_block: block_number,
                inclusion_time_ms: timestamp_ms,
                delay_ms: timestamp_ms - tx.first_seen_ms,
                delay_blocks: block_number.saturating_sub(first_possible_block),
                breakdown: tx_breakdown,
            });
            removed_ids.push(tx.id.clone());
        }
        pool.remove_included(removed_ids.iter().map(String::as_str))?;

        let gas_used = scenario.reserved_non_blob_gas + packed.total_gas;
        let blob_gas_used = BlobGas(packed.total_blobs as u64 * params.gas_per_blob);

        blocks.push(TraceBlock {
            number: block_number,
            timestamp_ms,
            builder: Some(builder.name.clone()),
            is_pbs: None,
            gas_used,
            gas_limit: params.block_gas_limit,
            base_fee_per_gas: base_fee,
            excess_blob_gas: excess.0,
            txs: included,
        });
        slots.push(SlotRecord {
            block_number,
            timestamp_ms,
            builder: builder.name.clone(),
            blob_base_fee: blob_fee,
            exec_base_fee: base_fee,
            excess_blob_gas: excess.0,
            blobs_included: packed.total_blobs,
            gas_used,
            builder_revenue: breakdown.exec_priority_to_builder,
            breakdown,
            shadow_greedy_revenue: shadow_greedy,
            shadow_optimal_revenue: shadow_optimal,
        });

        // Fees were charged at the current state; now advance for the next
        // block.
        excess = update_excess_blob_gas(excess, blob_gas_used, params);
        base_fee = update_exec_base_fee(base_fee, gas_used, params.gas_target(), params)?;
        pool.purge_older_than((timestamp_ms + slot_ms).saturating_sub(window.max_age_ms));
    }

    // Same classification pipeline as offline replay, so exported traces
    // re-ingest to identical verdicts.
    let audits = audit_blocks(&blocks, &mempool_export, &window, params.max_blobs_per_block)?;

    Ok(RunOutput { slots, txs: tx_records, blocks, mempool_export, audits })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunSummary {
    pub slots: u64,
    pub blob_blocks: u64,
    pub verdict_counts: BTreeMap<String, u64>,
    pub verdict_shares: BTreeMap<String, f64>,
    pub mean_relative_loss_suboptimal: Option<f64>,
    pub mean_delay_secs: Option<f64>,
    pub mean_delay_blocks: Option<f64>,
    pub p50_delay_blocks: Option<u64>,
    pub p90_delay_blocks: Option<u64>,
    pub included_txs: u64,
    pub total_blobs: u64,
    pub cumulative_burned_exec_wei: String,
    pub cumulative_burned_blob_wei: String,
    pub cumulative_builder_revenue_wei: String,
    pub peak_blob_base_fee_wei: String,
    pub final_blob_base_fee_wei: String,
}

/// Aggregates a completed run. Exact integer accumulation; shares rendered
/// as floats only at the report boundary.
pub fn summarize(output: &RunOutput) -> RunSummary {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for row in &output.audits {
        *counts.entry(row.audit.verdict.to_string()).or_insert(0) += 1;
    }
    let blob_blocks =
        output.audits.iter().filter(|r| r.audit.verdict != Verdict::NoBlobs).count() as u64;
    let mut shares = BTreeMap::new();
    if blob_blocks > 0 {
        for (verdict, count) in &counts {
            if verdict != "no_blobs" {
                shares.insert(verdict.clone(), *count as f64 / blob_blocks as f64);
            }
        }
    }
    let sub_losses: Vec<f64> = output
        .audits
        .iter()
        .filter(|r| r.audit.verdict == Verdict::Suboptimal)
        .filter_map(|r| r.audit.relative_loss.map(|l| l.as_f64()))
        .collect();

    let mut delays: Vec<u64> = output.txs.iter().map(|t| t.delay_blocks).collect();
    delays.sort_unstable();
    let percentile = |p: f64| -> Option<u64> {
        (!delays.is_empty()).then(|| delays[((delays.len() - 1) as f64 * p) as usize])
    };

    let mut burned_exec = Wei::ZERO;
    let mut burned_blob = Wei::ZERO;
    let mut builder_rev = Wei::ZERO;
    let mut peak_blob_fee = Wei::ZERO;
    for slot in &output.slots {
        burned_exec += slot.breakdown.exec_base_burned;
        burned_blob += slot.breakdown.blob_base_burned;
        builder_rev += slot.breakdown.exec_priority_to_builder;
        peak_blob_fee = peak_blob_fee.max(slot.blob_base_fee);
    }

    RunSummary {
        slots: output.slots.len() as u64,
        blob_blocks,
        verdict_counts: counts,
        verdict_shares: shares,
        mean_relative_loss_suboptimal: (!sub_losses.is_empty())
            .then(|| sub_losses.iter().sum::<f64>() / sub_losses.len() as f64),
        mean_delay_secs: (!output.txs.is_empty()).then(|| {
            output.txs.iter().map(|t| t.delay_ms as f64 / 1000.0).sum::<f64>()
                / output.txs.len() as f64
        }),
        mean_delay_blocks: (!delays.is_empty())
            .then(|| delays.iter().map(|&d| d as f64).sum::<f64>() / delays.len() as f64),
        p50_delay_blocks: percentile(0.5),
        p90_delay_blocks: percentile(0.9),
        included_txs: output.txs.len() as u64,
        total_blobs: output.slots.iter().map(|s| s.blobs_included as u64).sum(),
        cumulative_burned_exec_wei: burned_exec.to_string(),
        cumulative_burned_blob_wei: burned_blob.to_string(),
        cumulative_builder_revenue_wei: builder_rev.to_string(),
        peak_blob_base_fee_wei: peak_blob_fee.to_string(),
        final_blob_base_fee_wei: output
            .slots
            .last()
            .map(|s| s.blob_base_fee.to_string())
            .unwrap_or_default(),
    }
}

#[derive(Serialize)]
struct SlotCsvRow {
    block_number: u64,
    timestamp_unix_ms: u64,
    builder: String,
    blob_base_fee_wei: String,
    exec_base_fee_wei: String,
    excess_blob_gas: u64,
    blobs_included: u32,
    gas_used: u64,
    verdict: String,
    actual_revenue_wei: String,
    optimal_revenue_wei: String,
    greedy_revenue_wei: String,
    relative_loss: String,
    shadow_greedy_revenue_wei: String,
    shadow_optimal_revenue_wei: String,
    burned_exec_wei: String,
    burned_blob_wei: String,
    builder_revenue_wei: String,
}

#[derive(Serialize)]
struct TxCsvRow {
    id: String,
    sender: String,
    num_blobs: u32,
    gas_usage: u64,
    priority_fee_per_gas_wei: String,
    first_seen_unix_ms: u64,
    inclusion_block: u64,
    inclusion_time_unix_ms: u64,
    delay_ms: u64,
    delay_blocks: u64,
    exec_base_burned_wei: String,
    exec_priority_wei: String,
    blob_base_burned_wei: String,
}

#[derive(Serialize)]
struct CumulativeCsvRow {
    block_number: u64,
    cumulative_burned_exec_wei: String,
    cumulative_burned_blob_wei: String,
    cumulative_builder_revenue_wei: String,
}

fn loss_column(loss: &Option<LossRatio>) -> String {
    loss.map(|l| l.to_decimal(9)).unwrap_or_default()
}

/// Writes the run artifacts: `slots.csv`, `transactions.csv`,
/// `cumulative.csv`, `summary.json`, plus `blocks.csv` and `mempool.csv`
/// for replay through the classifier.
pub fn write_run(dir: &Path, output: &RunOutput, summary: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut slots = csv::Writer::from_path(dir.join("slots.csv"))?;
    for (slot, audit) in output.slots.iter().zip(&output.audits) {
        debug_assert_eq!(slot.block_number, audit.block_number);
        slots.serialize(SlotCsvRow {
            block_number: slot.block_number,
            timestamp_unix_ms: slot.timestamp_ms,
            builder: slot.builder.clone(),
            blob_base_fee_wei: slot.blob_base_fee.to_string(),
            exec_base_fee_wei: slot.exec_base_fee.to_string(),
            excess_blob_gas: slot.excess_blob_gas,
            blobs_included: slot.blobs_included,
            gas_used: slot.gas_used,
            verdict: audit.audit.verdict.to_string(),
            actual_revenue_wei: audit.audit.actual_revenue.to_string(),
            optimal_revenue_wei: audit.audit.optimal_revenue.to_string(),
            greedy_revenue_wei: audit.audit.greedy_revenue.to_string(),
            relative_loss: loss_column(&audit.audit.relative_loss),
            shadow_greedy_revenue_wei: slot
                .shadow_greedy_revenue
                .map(|w| w.to_string())
                .unwrap_or_default(),
            shadow_optimal_revenue_wei: slot
                .shadow_optimal_revenue
                .map(|w| w.to_string())
                .unwrap_or_default(),
            burned_exec_wei: slot.breakdown.exec_base_burned.to_string(),
            burned_blob_wei: slot.breakdown.blob_base_burned.to_string(),
            builder_revenue_wei: slot.breakdown.exec_priority_to_builder.to_string(),
        })?;
    }
    slots.flush()?;

    let mut txs = csv::Writer::from_path(dir.join("transactions.csv"))?;
    for tx in &output.txs {
        txs.serialize(TxCsvRow {
            id: tx.id.clone(),
            sender: tx.sender.clone(),
            num_blobs: tx.num_blobs,
            gas_usage: tx.gas_usage,
            priority_fee_per_gas_wei: tx.priority_fee_per_gas.to_string(),
            first_seen_unix_ms: tx.first_seen_ms,
            inclusion_block: tx.inclusion_block,
            inclusion_time_unix_ms: tx.inclusion_time_ms,
            delay_ms: tx.delay_ms,
            delay_blocks: tx.delay_blocks,
            exec_base_burned_wei: tx.breakdown.exec_base_burned.to_string(),
            exec_priority_wei: tx.breakdown.exec_priority_to_builder.to_string(),
            blob_base_burned_wei: tx.breakdown.blob_base_burned.to_string(),
        })?;
    }
    txs.flush()?;

    let mut cumulative = csv::Writer::from_path(dir.join("cumulative.csv"))?;
    let mut acc = FeeBreakdown::default();
    for slot in &output.slots {
        acc.accumulate(&slot.breakdown);
        cumulative.serialize(CumulativeCsvRow {
            block_number: slot.block_number,
            cumulative_burned_exec_wei: acc.exec_base_burned.to_string(),
            cumulative_burned_blob_wei: acc.blob_base_burned.to_string(),
            cumulative_builder_revenue_wei: acc.exec_priority_to_builder.to_string(),
        })?;
    }
    cumulative.flush()?;

    let mut summary_file = std::fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut summary_file, summary)?;
    summary_file.write_all(b"\n")?;

    write_blocks_csv(std::fs::File::create(dir.join("blocks.csv"))?, &output.blocks)?;
    write_tx_csv(std::fs::File::create(dir.join("mempool.csv"))?, &output.mempool_export)?;
    Ok(())
}
