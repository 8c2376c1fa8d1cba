//! Type-3 transactions, subset-bid option groups, and the builder-revenue
//! view used by the packing engine.

use crate::fees::MIN_TX_GAS;
use crate::units::Wei;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// A blob-carrying (type-3) transaction.
///
/// Without `subset_options` inclusion is all-or-nothing. With them, a block
/// may include at most one of the mutually exclusive options.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobTx {
    pub id: String,
    pub sender: String,
    pub num_blobs: u32,
    pub gas_usage: u64,
    pub priority_fee_per_gas: Wei,
    pub max_fee_per_gas: Wei,
    pub max_fee_per_blob_gas: Wei,
    pub first_seen_ms: u64,
    #[serde(default)]
    pub is_private: bool,
    #[serde(default)]
    pub subset_options: Option<SubsetBidGroup>,
}

impl BlobTx {
    /// Builder-credited revenue if included whole.
    pub fn revenue(&self) -> Wei {
        revenue(self.gas_usage, self.priority_fee_per_gas)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blobs == 0 || self.num_blobs > 6 {
            return Err(Error::BlobCountOutOfRange(self.num_blobs, 6));
        }
        if self.gas_usage < MIN_TX_GAS {
            return Err(Error::GasTooLow(self.gas_usage));
        }
        if self.priority_fee_per_gas > self.max_fee_per_gas {
            return Err(Error::InvalidParams(format!(
                "tx {}: priority fee exceeds max fee per gas",
                self.id
            )));
        }
        if let Some(group) = &self.subset_options {
            group.validate()?;
        }
        Ok(())
    }
}

/// Mutually exclusive alternatives offered by one sender: a valid block
/// includes zero or one option from a group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetBidGroup {
    pub group_id: String,
    pub options: Vec<SubsetBidOption>,
}

impl SubsetBidGroup {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::GroupTooSmall(self.group_id.clone()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetBidOption {
    pub option_id: String,
    pub num_blobs: u32,
    pub gas_usage: u64,
    pub priority_fee_per_gas: Wei,
}

impl SubsetBidOption {
    pub fn revenue(&self) -> Wei {
        revenue(self.gas_usage, self.priority_fee_per_gas)
    }
}

/// Builder revenue from a transaction: priority fee only. Base fees from
/// both markets are burned.
pub fn revenue(gas_usage: u64, priority_fee_per_gas: Wei) -> Wei {
    priority_fee_per_gas.times(gas_usage as u128)
}

/// One packing candidate: either a whole plain transaction or a single
/// option from a subset-bid group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuilderRevenueView {
    pub tx_id: String,
    pub option_id: Option<String>,
    /// Exclusion group; candidates sharing a group id are mutually exclusive.
    pub group_id: Option<String>,
    pub blobs: u32,
    pub gas: u64,
    pub revenue: Wei,
}

/// Expands a transaction into its packing candidates.
pub fn expand_group(tx: &BlobTx) -> Result<Vec<BuilderRevenueView>> {
    match &tx.subset_options {
        None => Ok(vec![BuilderRevenueView {
            tx_id: tx.id.clone(),
            option_id: None,
            group_id: None,
            blobs: tx.num_blobs,
            gas: tx.gas_usage,
            revenue: tx.revenue(),
        }]),
        Some(group) => {
            group.validate()?;
            Ok(group
                .options
                .iter()
                .map(|opt| BuilderRevenueView {
                    tx_id: tx.id.clone(),
                    option_id: Some(opt.option_id.clone()),
                    group_id: Some(group.group_id.clone()),
                    blobs: opt.num_blobs,
                    gas: opt.gas_usage,
                    revenue: opt.revenue(),
                })
                .collect())
        }
    }
}

/// Row of the transaction CSV schema. Wei columns are decimal strings so the
/// round trip is exact. Empty group/option fields mean a plain transaction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TxRow {
    pub id: String,
    pub sender: String,
    pub num_blobs: u32,
    pub gas_usage: u64,
    pub priority_fee_per_gas_wei: String,
    pub max_fee_per_gas_wei: String,
    pub max_fee_per_blob_gas_wei: String,
    pub first_seen_unix_ms: u64,
    pub is_private: bool,
    #[serde(default)]
    pub group_id: String,
    #[serde(default)]
    pub option_id: String,
}

fn parse_wei(field: &str, line: u64, what: &str) -> Result<Wei> {
    field.parse().map_err(|_| Error::Schema {
        line,
        msg: format!("bad wei value in {what}: {field:?}"),
    })
}

/// Reads the transaction CSV, reassembling subset-bid groups. Rows sharing a
/// `group_id` become one transaction whose identity fields come from the
/// first row of the group.
pub fn read_tx_csv<R: std::io::Read>(reader: R) -> Result<Vec<BlobTx>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut txs: Vec<BlobTx> = Vec::new();
    let mut group_index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (i, row) in rdr.deserialize::<TxRow>().enumerate() {
        let line = i as u64 + 2; // header is line 1
        let row = row.map_err(|e| Error::Schema { line, msg: e.to_string() })?;
        let prio = parse_wei(&row.priority_fee_per_gas_wei, line, "priority_fee_per_gas_wei")?;
        if row.group_id.is_empty() {
            txs.push(BlobTx {
                id: row.id,
                sender: row.sender,
                num_blobs: row.num_blobs,
                gas_usage: row.gas_usage,
                priority_fee_per_gas: prio,
                max_fee_per_gas: parse_wei(&row.max_fee_per_gas_wei, line, "max_fee_per_gas_wei")?,
                max_fee_per_blob_gas: parse_wei(
                    &row.max_fee_per_blob_gas_wei,
                    line,
                    "max_fee_per_blob_gas_wei",
                )?,
                first_seen_ms: row.first_seen_unix_ms,
                is_private: row.is_private,
                subset_options: None,
            });
            continue;
        }
        let option = SubsetBidOption {
            option_id: if row.option_id.is_empty() {
                return Err(Error::Schema {
                    line,
                    msg: format!("group row {} missing option_id", row.id),
                });
            } else {
                row.option_id.clone()
            },
            num_blobs: row.num_blobs,
            gas_usage: row.gas_usage,
            priority_fee_per_gas: prio,
        };
        match group_index.get(&row.group_id) {
            Some(&idx) => {
                txs[idx]
                    .subset_options
                    .as_mut()
                    .expect("grouped tx has options")
                    .options
                    .push(option);
            }
            None => {
                group_index.insert(row.group_id.clone(), txs.len());
                txs.push(BlobTx {
                    id: row.id,
                    sender: row.sender,
                    num_blobs: row.num_blobs,
                    gas_usage: row.gas_usage,
                    priority_fee_per_gas: prio,
                    max_fee_per_gas: parse_wei(
                        &row.max_fee_per_gas_wei,
                        line,
                        "max_fee_per_gas_wei",
                    )?,
                    max_fee_per_blob_gas: parse_wei(
                        &row.max_fee_per_blob_gas_wei,
                        line,
                        "max_fee_per_blob_gas_wei",
                    )?,
                    first_seen_ms: row.first_seen_unix_ms,
                    is_private: row.is_private,
                    subset_options: Some(SubsetBidGroup {
                        group_id: row.group_id,
                        options: vec![option],
                    }),
                });
            }
        }
    }
    Ok(txs)
}

/// Writes transactions in the CSV schema, one row per plain transaction and
/// one row per option for grouped transactions.
pub fn write_tx_csv<W: std::io::Write>(writer: W, txs: &[BlobTx]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for tx in txs {
        match &tx.subset_options {
            None => wtr.serialize(TxRow {
                id: tx.id.clone(),
                sender: tx.sender.clone(),
                num_blobs: tx.num_blobs,
                gas_usage: tx.gas_usage,
                priority_fee_per_gas_wei: tx.priority_fee_per_gas.to_string(),
                max_fee_per_gas_wei: tx.max_fee_per_gas.to_string(),
                max_fee_per_blob_gas_wei: tx.max_fee_per_blob_gas.to_string(),
                first_seen_unix_ms: tx.first_seen_ms,
                is_private: tx.is_private,
                group_id: String::new(),
                option_id: String::new(),
            })?,
            Some(group) => {
                for opt in &group.options {
                    wtr.serialize(TxRow {
                        id: tx.id.clone(),
                        sender: tx.sender.clone(),
                        num_blobs: opt.num_blobs,
                        gas_usage: opt.gas_usage,
                        priority_fee_per_gas_wei: opt.priority_fee_per_gas.to_string(),
                        max_fee_per_gas_wei: tx.max_fee_per_gas.to_string(),
                        max_fee_per_blob_gas_wei: tx.max_fee_per_blob_gas.to_string(),
                        first_seen_unix_ms: tx.first_seen_ms,
                        is_private: tx.is_private,
                        group_id: group.group_id.clone(),
                        option_id: opt.option_id.clone(),
                    })?;
                }
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) fn plain_tx(id: &str, num_blobs: u32, gas: u64, prio: Wei, first_seen_ms: u64) -> BlobTx {
    BlobTx {
        id: id.into(),
        sender: "test".into(),
        num_blobs,
        gas_usage: gas,
        priority_fee_per_gas: prio,
        max_fee_per_gas: Wei(u128::MAX / 2),
        max_fee_per_blob_gas: Wei(u128::MAX / 2),
        first_seen_ms,
        is_private: false,
        subset_options: None,
    }
}
