//! Pricing and state-update rules for the two fee markets.
//!
//! The execution market (EIP-1559) charges a burned per-gas base fee plus a
//! per-gas priority fee credited to the builder. The blob market (EIP-4844)
//! charges a fully burned per-blob-gas fee that is exponential in the
//! accumulated excess blob gas.

use crate::units::{BlobGas, Wei};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Minimum gas any transaction consumes.
pub const MIN_TX_GAS: u64 = 21_000;

/// Protocol constants. Defaults are the deployed Cancun values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    pub max_blobs_per_block: u32,
    pub target_blobs_per_block: u32,
    pub gas_per_blob: u64,
    pub min_blob_base_fee: Wei,
    pub blob_fee_update_fraction: u64,
    pub block_gas_limit: u64,
    pub base_fee_max_change_denominator: u64,
    pub slot_seconds: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            max_blobs_per_block: 6,
            target_blobs_per_block: 3,
            gas_per_blob: 131_072,
            min_blob_base_fee: Wei(1),
            blob_fee_update_fraction: 3_338_477,
            block_gas_limit: 30_000_000,
            base_fee_max_change_denominator: 8,
            slot_seconds: 12,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_blobs_per_block > self.max_blobs_per_block {
            return Err(Error::InvalidParams(
                "target_blobs_per_block exceeds max_blobs_per_block".into(),
            ));
        }
        if self.max_blobs_per_block == 0
            || self.target_blobs_per_block == 0
            || self.gas_per_blob == 0
            || self.min_blob_base_fee.is_zero()
            || self.blob_fee_update_fraction == 0
            || self.block_gas_limit == 0
            || self.base_fee_max_change_denominator == 0
            || self.slot_seconds == 0
        {
            return Err(Error::InvalidParams("all parameters must be strictly positive".into()));
        }
        Ok(())
    }

    pub fn target_blob_gas(&self) -> BlobGas {
        BlobGas(self.gas_per_blob * self.target_blobs_per_block as u64)
    }

    pub fn max_blob_gas(&self) -> BlobGas {
        BlobGas(self.gas_per_blob * self.max_blobs_per_block as u64)
    }

    pub fn slot_ms(&self) -> u64 {
        self.slot_seconds * 1000
    }

    /// EIP-1559 gas target: half the block gas limit.
    pub fn gas_target(&self) -> u64 {
        self.block_gas_limit / 2
    }
}

/// Per-block protocol fee state. `excess_blob_gas` carries the accumulated
/// excess from all blocks before this one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockFeeState {
    pub block_number: u64,
    pub timestamp_ms: u64,
    pub base_fee_per_gas: Wei,
    pub excess_blob_gas: BlobGas,
    pub gas_used: u64,
    pub blob_gas_used: BlobGas,
}

/// How a transaction's total fee splits between the two burn sinks and the
/// builder. The blob part is never builder revenue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeBreakdown {
    pub exec_base_burned: Wei,
    pub exec_priority_to_builder: Wei,
    pub blob_base_burned: Wei,
}

impl FeeBreakdown {
    pub fn total(&self) -> Wei {
        self.exec_base_burned + self.exec_priority_to_builder + self.blob_base_burned
    }

    pub fn accumulate(&mut self, other: &FeeBreakdown) {
        self.exec_base_burned += other.exec_base_burned;
        self.exec_priority_to_builder += other.exec_priority_to_builder;
        self.blob_base_burned += other.blob_base_burned;
    }
}

/// Integer approximation of `factor * e^(numerator/denominator)`.
///
/// Standard accumulation loop: each Taylor term is derived from the previous
/// by `accum = accum * numerator / (denominator * i)` with truncating integer
/// division, so the whole evaluation is deterministic integer arithmetic.
pub fn fake_exponential(factor: Wei, numerator: u128, denominator: u128) -> Result<Wei> {
    if denominator == 0 {
        return Err(Error::ZeroDenominator);
    }
    let mut i: u128 = 1;
    let mut output: u128 = 0;
    let mut accum = factor
        .0
        .checked_mul(denominator)
        .ok_or(Error::Overflow("fake_exponential factor"))?;
    while accum > 0 {
        output = output
            .checked_add(accum)
            .ok_or(Error::Overflow("fake_exponential output"))?;
        accum = accum
            .checked_mul(numerator)
            .ok_or(Error::Overflow("fake_exponential accumulator"))?
            / (denominator * i);
        i += 1;
    }
    Ok(Wei(output / denominator))
}

/// Blob base fee per unit of blob gas for the given excess.
pub fn blob_base_fee(excess_blob_gas: BlobGas, params: &ProtocolParams) -> Result<Wei> {
    fake_exponential(
        params.min_blob_base_fee,
        excess_blob_gas.0 as u128,
        params.blob_fee_update_fraction as u128,
    )
}

/// Excess blob gas carried into the next block, clamped at zero.
pub fn update_excess_blob_gas(
    prev_excess: BlobGas,
    blob_gas_used_prev_block: BlobGas,
    params: &ProtocolParams,
) -> BlobGas {
    (prev_excess + blob_gas_used_prev_block).saturating_sub(params.target_blob_gas())
}

/// EIP-1559 base fee update from the previous block's gas usage, floored at
/// 1 wei.
pub fn update_exec_base_fee(
    prev_base_fee: Wei,
    gas_used: u64,
    gas_target: u64,
    params: &ProtocolParams,
) -> Result<Wei> {
    if gas_target == 0 {
        return Err(Error::ZeroGasTarget);
    }
    let denom = params.base_fee_max_change_denominator as u128;
    let next = if gas_used >= gas_target {
        let delta =
            prev_base_fee.0 * (gas_used - gas_target) as u128 / gas_target as u128 / denom;
        prev_base_fee.0 + delta
    } else {
        let delta =
            prev_base_fee.0 * (gas_target - gas_used) as u128 / gas_target as u128 / denom;
        prev_base_fee.0 - delta
    };
    Ok(Wei(next.max(1)))
}

/// Execution-market fee split: `(burned, to_builder)`.
pub fn fee_1559(
    gas_usage: u64,
    priority_fee_per_gas: Wei,
    state: &BlockFeeState,
) -> Result<(Wei, Wei)> {
    if gas_usage < MIN_TX_GAS {
        return Err(Error::GasTooLow(gas_usage));
    }
    let burned = state.base_fee_per_gas.times(gas_usage as u128);
    let to_builder = priority_fee_per_gas.times(gas_usage as u128);
    Ok((burned, to_builder))
}

/// Blob-market fee for a transaction: burned in full, never builder revenue.
pub fn fee_4844(num_blobs: u32, state: &BlockFeeState, params: &ProtocolParams) -> Result<Wei> {
    if num_blobs == 0 || num_blobs > params.max_blobs_per_block {
        return Err(Error::BlobCountOutOfRange(num_blobs, params.max_blobs_per_block));
    }
    let per_gas = blob_base_fee(state.excess_blob_gas, params)?;
    Ok(per_gas.times(num_blobs as u128 * params.gas_per_blob as u128))
}
