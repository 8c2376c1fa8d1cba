//! Offline trace replay: block and mempool CSV loading, the eligibility
//! window, per-block classification, delay metrics, and private-flow shares.
//!
//! Per-block classification is independent once the inclusion index is
//! built, so it fans out across blocks with rayon when the `parallel`
//! feature is enabled.

use crate::mempool::EligibilityWindow;
use crate::packing::{classify_block, BlockAudit, Verdict};
use crate::tx::{BlobTx, TxRow};
use crate::units::Wei;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

/// A malformed input row: reported, never fatal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncludedBlobTx {
    pub id: String,
    pub sender: String,
    pub num_blobs: u32,
    pub gas_usage: u64,
    pub priority_fee_per_gas: Wei,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceBlock {
    pub number: u64,
    pub timestamp_ms: u64,
    pub builder: Option<String>,
    pub is_pbs: Option<bool>,
    pub gas_used: u64,
    pub gas_limit: u64,
    pub base_fee_per_gas: Wei,
    pub excess_blob_gas: u64,
    pub txs: Vec<IncludedBlobTx>,
}

impl TraceBlock {
    pub fn blob_count(&self) -> u32 {
        self.txs.iter().map(|tx| tx.num_blobs).sum()
    }

    /// Block gas not attributable to the listed blob transactions.
    pub fn non_blob_gas_used(&self) -> u64 {
        self.gas_used.saturating_sub(self.txs.iter().map(|tx| tx.gas_usage).sum())
    }
}

/// One row per included blob transaction; a block without blob transactions
/// is a single row with empty tx fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct BlockCsvRow {
    block_number: u64,
    timestamp_unix_ms: u64,
    #[serde(default)]
    builder: String,
    #[serde(default)]
    is_pbs: String,
    gas_used: u64,
    gas_limit: u64,
    base_fee_per_gas_wei: String,
    excess_blob_gas: u64,
    #[serde(default)]
    tx_id: String,
    #[serde(default)]
    tx_sender: String,
    #[serde(default)]
    tx_num_blobs: String,
    #[serde(default)]
    tx_gas_usage: String,
    #[serde(default)]
    tx_priority_fee_per_gas_wei: String,
}

pub fn read_blocks_csv<R: Read>(reader: R) -> (Vec<TraceBlock>, Vec<RowError>) {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut blocks: BTreeMap<u64, TraceBlock> = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.deserialize::<BlockCsvRow>().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError { line, msg: e.to_string() });
                continue;
            }
        };
        let base_fee = match row.base_fee_per_gas_wei.parse::<Wei>() {
            Ok(w) => w,
            Err(_) => {
                errors.push(RowError {
                    line,
                    msg: format!("bad base_fee_per_gas_wei {:?}", row.base_fee_per_gas_wei),
                });
                continue;
            }
        };
        let block = blocks.entry(row.block_number).or_insert_with(|| TraceBlock {
            number: row.block_number,
            timestamp_ms: row.timestamp_unix_ms,
            builder: (!row.builder.is_empty()).then(|| row.builder.clone()),
            is_pbs: match row.is_pbs.as_str() {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            },
            gas_used: row.gas_used,
            gas_limit: row.gas_limit,
            base_fee_per_gas: base_fee,
            excess_blob_gas: row.excess_blob_gas,
            txs: Vec::new(),
        });
        if row.tx_id.is_empty() {
            continue;
        }
        let parsed = (|| -> std::result::Result<IncludedBlobTx, String> {
            Ok(IncludedBlobTx {
                id: row.tx_id.clone(),
                sender: row.tx_sender.clone(),
                num_blobs: row.tx_num_blobs.parse().map_err(|_| "bad tx_num_blobs")?,
                gas_usage: row.tx_gas_usage.parse().map_err(|_| "bad tx_gas_usage")?,
                priority_fee_per_gas: row
                    .tx_priority_fee_per_gas_wei
                    .parse()
                    .map_err(|_| "bad tx_priority_fee_per_gas_wei")?,
            })
        })();
        match parsed {
            Ok(tx) => block.txs.push(tx),
            Err(msg) => errors.push(RowError { line, msg: msg.to_string() }),
        }
    }
    (blocks.into_values().collect(), errors)
}

pub fn write_blocks_csv<W: Write>(writer: W, blocks: &[TraceBlock]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for block in blocks {
        let base = BlockCsvRow {
            block_number: block.number,
            timestamp_unix_ms: block.timestamp_ms,
            builder: block.builder.clone().unwrap_or_default(),
            is_pbs: block.is_pbs.map(|b| b.to_string()).unwrap_or_default(),
            gas_used: block.gas_used,
            gas_limit: block.gas_limit,
            base_fee_per_gas_wei: block.base_fee_per_gas.to_string(),
            excess_blob_gas: block.excess_blob_gas,
            tx_id: String::new(),
            tx_sender: String::new(),
            tx_num_blobs: String::new(),
            tx_gas_usage: String::new(),
            tx_priority_fee_per_gas_wei: String::new(),
        };
        if block.txs.is_empty() {
            wtr.serialize(&base)?;
            continue;
        }
        for tx in &block.txs {
            let mut row = base.clone();
            row.tx_id = tx.id.clone();
            row.tx_sender = tx.sender.clone();
            row.tx_num_blobs = tx.num_blobs.to_string();
            row.tx_gas_usage = tx.gas_usage.to_string();
            row.tx_priority_fee_per_gas_wei = tx.priority_fee_per_gas.to_string();
            wtr.serialize(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads the mempool dump (transaction CSV schema). Duplicate ids collapse
/// to the earliest first-seen time.
pub fn read_mempool_csv<R: Read>(reader: R) -> (Vec<BlobTx>, Vec<RowError>) {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut txs: Vec<BlobTx> = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.deserialize::<TxRow>().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError { line, msg: e.to_string() });
                continue;
            }
        };
        let parse = |s: &str| s.parse::<Wei>();
        let (prio, max_gas, max_blob) = match (
            parse(&row.priority_fee_per_gas_wei),
            parse(&row.max_fee_per_gas_wei),
            parse(&row.max_fee_per_blob_gas_wei),
        ) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            _ => {
                errors.push(RowError { line, msg: "bad wei column".into() });
                continue;
            }
        };
        // Subset groups are not expected in mempool dumps; grouped rows are
        // kept as independent plain entries keyed by option id.
        let id = if row.option_id.is_empty() {
            row.id.clone()
        } else {
            format!("{}:{}", row.id, row.option_id)
        };
        let tx = BlobTx {
            id: id.clone(),
            sender: row.sender,
            num_blobs: row.num_blobs,
            gas_usage: row.gas_usage,
            priority_fee_per_gas: prio,
            max_fee_per_gas: max_gas,
            max_fee_per_blob_gas: max_blob,
            first_seen_ms: row.first_seen_unix_ms,
            is_private: row.is_private,
            subset_options: None,
        };
        match seen.get(&id) {
            Some(&idx) => {
                if tx.first_seen_ms < txs[idx].first_seen_ms {
                    txs[idx].first_seen_ms = tx.first_seen_ms;
                }
            }
            None => {
                seen.insert(id, txs.len());
                txs.push(tx);
            }
        }
    }
    (txs, errors)
}

/// Pinned classification output row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditCsvRow {
    pub block_number: u64,
    pub verdict: String,
    pub actual_revenue_wei: String,
    pub optimal_revenue_wei: String,
    pub greedy_revenue_wei: String,
    pub relative_loss: String,
    pub blobs_actual: u32,
    pub blobs_optimal: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditRow {
    pub block_number: u64,
    pub audit: BlockAudit,
}

impl AuditRow {
    pub fn to_csv_row(&self) -> AuditCsvRow {
        AuditCsvRow {
            block_number: self.block_number,
            verdict: self.audit.verdict.to_string(),
            actual_revenue_wei: self.audit.actual_revenue.to_string(),
            optimal_revenue_wei: self.audit.optimal_revenue.to_string(),
            greedy_revenue_wei: self.audit.greedy_revenue.to_string(),
            relative_loss: self
                .audit
                .relative_loss
                .map(|l| l.to_decimal(9))
                .unwrap_or_default(),
            blobs_actual: self.audit.blobs_actual,
            blobs_optimal: self.audit.blobs_optimal,
        }
    }
}

fn audit_one(
    block: &TraceBlock,
    mempool: &[BlobTx],
    inclusion: &HashMap<&str, u64>,
    first_seen: &HashMap<&str, u64>,
    window: &EligibilityWindow,
    max_blobs: u32,
) -> Result<AuditRow> {
    let actual: Vec<BlobTx> = block
        .txs
        .iter()
        .map(|tx| BlobTx {
            id: tx.id.clone(),
            sender: tx.sender.clone(),
            num_blobs: tx.num_blobs,
            gas_usage: tx.gas_usage,
            priority_fee_per_gas: tx.priority_fee_per_gas,
            max_fee_per_gas: tx.priority_fee_per_gas,
            max_fee_per_blob_gas: Wei::ZERO,
            first_seen_ms: first_seen.get(tx.id.as_str()).copied().unwrap_or(block.timestamp_ms),
            is_private: !first_seen.contains_key(tx.id.as_str()),
            subset_options: None,
        })
        .collect();
    // Candidates: window-eligible mempool transactions that were eventually
    // included at or after this block.
    let eligible: Vec<BlobTx> = mempool
        .iter()
        .filter(|tx| window.contains(tx.first_seen_ms, block.timestamp_ms))
        .filter(|tx| inclusion.get(tx.id.as_str()).is_some_and(|&b| b >= block.number))
        .cloned()
        .collect();
    let audit =
        classify_block(&actual, &eligible, max_blobs, block.gas_limit, block.non_blob_gas_used())?;
    Ok(AuditRow { block_number: block.number, audit })
}

fn inclusion_index(blocks: &[TraceBlock]) -> HashMap<&str, u64> {
    let mut index: HashMap<&str, u64> = HashMap::new();
    for block in blocks {
        for tx in &block.txs {
            index.entry(tx.id.as_str()).or_insert(block.number);
        }
    }
    index
}

fn first_seen_index(mempool: &[BlobTx]) -> HashMap<&str, u64> {
    mempool.iter().map(|tx| (tx.id.as_str(), tx.first_seen_ms)).collect()
}

/// Sequential per-block classification.
pub fn audit_blocks_seq(
    blocks: &[TraceBlock],
    mempool: &[BlobTx],
    window: &EligibilityWindow,
    max_blobs: u32,
) -> Result<Vec<AuditRow>> {
    let inclusion = inclusion_index(blocks);
    let first_seen = first_seen_index(mempool);
    blocks
        .iter()
        .map(|b| audit_one(b, mempool, &inclusion, &first_seen, window, max_blobs))
        .collect()
}

/// Rayon fan-out over blocks; identical output to [`audit_blocks_seq`].
#[cfg(feature = "parallel")]
pub fn audit_blocks_par(
    blocks: &[TraceBlock],
    mempool: &[BlobTx],
    window: &EligibilityWindow,
    max_blobs: u32,
) -> Result<Vec<AuditRow>> {
    use rayon::prelude::*;
    let inclusion = inclusion_index(blocks);
    let first_seen = first_seen_index(mempool);
    blocks
        .par_iter()
        .map(|b| audit_one(b, mempool, &inclusion, &first_seen, window, max_blobs))
        .collect()
}

/// Classifies every block in a trace, parallel when built with the
/// `parallel` feature.
pub fn audit_blocks(
    blocks: &[TraceBlock],
    mempool: &[BlobTx],
    window: &EligibilityWindow,
    max_blobs: u32,
) -> Result<Vec<AuditRow>> {
    #[cfg(feature = "parallel")]
    {
        audit_blocks_par(blocks, mempool, window, max_blobs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        audit_blocks_seq(blocks, mempool, window, max_blobs)
    }
}

pub fn write_audit_csv<W: Write>(writer: W, rows: &[AuditRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row.to_csv_row())?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct TxDelayRow {
    pub tx_id: String,
    pub sender: String,
    pub inclusion_block: u64,
    pub delay_ms: u64,
    pub delay_blocks: u64,
}

/// Delay of each included, mempool-observed transaction. The first possible
/// block is the earliest block whose eligibility window contains it.
pub fn trace_delays(
    blocks: &[TraceBlock],
    mempool: &[BlobTx],
    window: &EligibilityWindow,
) -> Vec<TxDelayRow> {
    let first_seen: HashMap<&str, u64> =
        mempool.iter().map(|tx| (tx.id.as_str(), tx.first_seen_ms)).collect();
    let mut rows = Vec::new();
    for block in blocks {
        for tx in &block.txs {
            let Some(&seen) = first_seen.get(tx.id.as_str()) else { continue };
            let first_possible = blocks
                .iter()
                .find(|b| window.contains(seen, b.timestamp_ms))
                .map(|b| b.number)
                .unwrap_or(block.number);
            rows.push(TxDelayRow {
                tx_id: tx.id.clone(),
                sender: tx.sender.clone(),
                inclusion_block: block.number,
                delay_ms: block.timestamp_ms.saturating_sub(seen),
                delay_blocks: block.number.saturating_sub(first_possible),
            });
        }
    }
    rows
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ClassifySummary {
    pub total_blocks: u64,
    pub blob_blocks: u64,
    pub verdict_counts: BTreeMap<String, u64>,
    /// Shares over blocks with at least one blob.
    pub verdict_shares: BTreeMap<String, f64>,
    pub mean_relative_loss_suboptimal: Option<f64>,
    pub mean_delay_blocks: Option<f64>,
    pub row_errors: u64,
    pub unresolved_tx_refs: u64,
}

pub fn summarize_audits(
    blocks: &[TraceBlock],
    mempool: &[BlobTx],
    rows: &[AuditRow],
    delays: &[TxDelayRow],
    row_errors: u64,
) -> ClassifySummary {
    let mempool_ids: HashSet<&str> = mempool.iter().map(|tx| tx.id.as_str()).collect();
    let unresolved = blocks
        .iter()
        .flat_map(|b| &b.txs)
        .filter(|tx| !mempool_ids.contains(tx.id.as_str()))
        .count() as u64;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for row in rows {
        *counts.entry(row.audit.verdict.to_string()).or_insert(0) += 1;
    }
    let blob_blocks = rows.iter().filter(|r| r.audit.verdict != Verdict::NoBlobs).count() as u64;
    let mut shares = BTreeMap::new();
    if blob_blocks > 0 {
        for (verdict, count) in &counts {
            if verdict != "no_blobs" {
                shares.insert(verdict.clone(), *count as f64 / blob_blocks as f64);
            }
        }
    }
    let sub_losses: Vec<f64> = rows
        .iter()
        .filter(|r| r.audit.verdict == Verdict::Suboptimal)
        .filter_map(|r| r.audit.relative_loss.map(|l| l.as_f64()))
        .collect();
    ClassifySummary {
        total_blocks: rows.len() as u64,
        blob_blocks,
        verdict_counts: counts,
        verdict_shares: shares,
        mean_relative_loss_suboptimal: (!sub_losses.is_empty())
            .then(|| sub_losses.iter().sum::<f64>() / sub_losses.len() as f64),
        mean_delay_blocks: (!delays.is_empty()).then(|| {
            delays.iter().map(|d| d.delay_blocks as f64).sum::<f64>() / delays.len() as f64
        }),
        row_errors,
        unresolved_tx_refs: unresolved,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrivateShareRow {
    pub day: u64,
    pub sender: String,
    pub total: u64,
    pub private: u64,
    pub share: f64,
}

const MS_PER_DAY: u64 = 86_400_000;

/// Daily share of blob transactions absent from the mempool dump. Rows are
/// emitted per sender plus an aggregate "ALL" row per day; an optional
/// sender filter restricts the breakdown.
pub fn private_share(
    blocks: &[TraceBlock],
    mempool: &[BlobTx],
    sender_filter: Option<&str>,
) -> Vec<PrivateShareRow> {
    let mempool_ids: HashSet<&str> = mempool.iter().map(|tx| tx.id.as_str()).collect();
    let mut buckets: BTreeMap<(u64, String), (u64, u64)> = BTreeMap::new();
    for block in blocks {
        let day = block.timestamp_ms / MS_PER_DAY;
        for tx in &block.txs {
            if sender_filter.is_some_and(|s| s != tx.sender) {
                continue;
            }
            let private = !mempool_ids.contains(tx.id.as_str()) as u64;
            for key in [(day, "ALL".to_string()), (day, tx.sender.clone())] {
                let entry = buckets.entry(key).or_insert((0, 0));
                entry.0 += 1;
                entry.1 += private;
            }
        }
    }
    buckets
        .into_iter()
        .map(|((day, sender), (total, private))| PrivateShareRow {
            day,
            sender,
            total,
            private,
            share: private as f64 / total as f64,
        })
        .collect()
}

/// Full replay pipeline over parsed inputs.
pub struct TraceReport {
    pub rows: Vec<AuditRow>,
    pub delays: Vec<TxDelayRow>,
    pub summary: ClassifySummary,
}

pub fn classify_trace(
    blocks: &[TraceBlock],
    mempool: &[BlobTx],
    window: &EligibilityWindow,
    max_blobs: u32,
    row_errors: u64,
) -> Result<TraceReport> {
    window.validate()?;
    let rows = audit_blocks(blocks, mempool, window, max_blobs)?;
    let delays = trace_delays(blocks, mempool, window);
    let summary = summarize_audits(blocks, mempool, &rows, &delays, row_errors);
    Ok(TraceReport { rows, delays, summary })
}

/// Convenience wrapper over files.
pub fn classify_trace_files(
    blocks_path: &std::path::Path,
    mempool_path: &std::path::Path,
    window: &EligibilityWindow,
    max_blobs: u32,
) -> Result<TraceReport> {
    let (blocks, mut errors) = read_blocks_csv(std::fs::File::open(blocks_path)?);
    let (mempool, mempool_errors) = read_mempool_csv(std::fs::File::open(mempool_path)?);
    errors.extend(mempool_errors);
    for err in &errors {
        eprintln!("warning: line {}: {}", err.line, err.msg);
    }
    classify_trace(&blocks, &mempool, window, max_blobs, errors.len() as u64)
}
