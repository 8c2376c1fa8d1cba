//! Deterministic simulator and offline auditor for the dual-fee blob
//! transaction market.
//!
//! The crate models the post-Cancun fee mechanism (an exponential blob base
//! fee driven by excess blob gas on top of the execution base fee), a timed
//! transaction pool with a builder-visibility window, and block packing under
//! the per-block blob cap. Completed blocks are classified against the
//! revenue-optimal packing of what was visible, and the same classifier runs
//! over externally captured block/mempool CSV traces.
//!
//! Enable the default `parallel` feature to audit blocks with rayon; disable
//! it for a fully sequential build.

pub mod demand;
pub mod fees;
pub mod ingest;
pub mod mempool;
pub mod packing;
pub mod sim;
pub mod tx;
pub mod units;

pub use fees::{blob_base_fee, fake_exponential, ProtocolParams};
pub use ingest::{audit_blocks, classify_trace_files};
pub use mempool::{EligibilityWindow, TimedPool};
pub use packing::{
    greedy_pack, optimal_pack, optimal_pack_subset, relative_fee_loss, BlockAudit, LossRatio,
    PackingProblem, PackingResult, Verdict,
};
pub use sim::{run, summarize, write_run, RunOutput, RunSummary};
pub use tx::{BlobTx, SubsetBidGroup, SubsetBidOption};
pub use units::{BlobGas, Wei};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate transaction id {0}")]
    DuplicateTx(String),
    #[error("unknown transaction id {0}")]
    UnknownTx(String),
    #[error("zero denominator in exponential approximation")]
    ZeroDenominator,
    #[error("gas target must be positive")]
    ZeroGasTarget,
    #[error("gas usage {0} below the 21000 minimum")]
    GasTooLow(u64),
    #[error("blob count {0} outside 1..={1}")]
    BlobCountOutOfRange(u32, u32),
    #[error("bid group {0} needs at least two options")]
    GroupTooSmall(String),
    #[error("unknown scenario preset {0}")]
    UnknownPreset(String),
    #[error("scenario has no sender strategies")]
    EmptyStrategies,
    #[error("builder selection weights must be positive")]
    ZeroBuilderWeight,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at line {line}: {msg}")]
    Schema { line: u64, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
