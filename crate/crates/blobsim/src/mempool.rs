//! Timed waiting area for blob transactions with the builder-visibility
//! eligibility window.

use crate::tx::BlobTx;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Pre-block interval during which a mempool transaction counts as visible
/// to a builder: first seen at least `min_lead` before the block's expected
/// time and no more than `max_age` prior. Both bounds are closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityWindow {
    pub min_lead_ms: u64,
    pub max_age_ms: u64,
}

impl Default for EligibilityWindow {
    fn default() -> Self {
        EligibilityWindow { min_lead_ms: 4_000, max_age_ms: 120_000 }
    }
}

impl EligibilityWindow {
    pub fn from_seconds(min_lead: u64, max_age: u64) -> Self {
        EligibilityWindow { min_lead_ms: min_lead * 1000, max_age_ms: max_age * 1000 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_lead_ms == 0 || self.min_lead_ms >= self.max_age_ms {
            return Err(Error::InvalidParams(
                "eligibility window requires 0 < min_lead < max_age".into(),
            ));
        }
        Ok(())
    }

    /// Closed-interval eligibility check.
    pub fn contains(&self, first_seen_ms: u64, expected_block_time_ms: u64) -> bool {
        first_seen_ms + self.min_lead_ms <= expected_block_time_ms
            && first_seen_ms + self.max_age_ms >= expected_block_time_ms
    }
}

/// Keyed by id; iteration order (and hence all derived candidate orders) is
/// lexicographic by id.
#[derive(Clone, Debug, Default)]
pub struct TimedPool {
    entries: BTreeMap<String, BlobTx>,
}

impl TimedPool {
    pub fn new() -> Self {
        TimedPool::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn insert(&mut self, tx: BlobTx) -> Result<()> {
        if self.entries.contains_key(&tx.id) {
            return Err(Error::DuplicateTx(tx.id));
        }
        self.entries.insert(tx.id.clone(), tx);
        Ok(())
    }

    /// Transactions visible to a builder for a block expected at the given
    /// time. Private transactions appear only when the builder is scoped to
    /// see the private flow.
    pub fn eligible_at(
        &self,
        expected_block_time_ms: u64,
        window: &EligibilityWindow,
        sees_private: bool,
    ) -> Vec<&BlobTx> {
        self.entries
            .values()
            .filter(|tx| !tx.is_private || sees_private)
            .filter(|tx| window.contains(tx.first_seen_ms, expected_block_time_ms))
            .collect()
    }

    pub fn remove_included<'a, I: IntoIterator<Item = &'a str>>(&mut self, ids: I) -> Result<()> {
        for id in ids {
            if self.entries.remove(id).is_none() {
                return Err(Error::UnknownTx(id.to_string()));
            }
        }
        Ok(())
    }

    /// Drops entries that can never become eligible again. Returns how many
    /// were removed.
    pub fn purge_older_than(&mut self, cutoff_first_seen_ms: u64) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, tx| tx.first_seen_ms >= cutoff_first_seen_ms);
        before - self.entries.len()
    }
}
