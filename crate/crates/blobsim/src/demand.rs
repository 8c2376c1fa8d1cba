//! Deterministic, seeded blob-transaction arrival streams built from
//! declarative sender strategies and congestion-spike events.

use crate::fees::ProtocolParams;
use crate::mempool::EligibilityWindow;
use crate::tx::BlobTx;
use crate::units::Wei;
use crate::{Error, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlobCountPolicy {
    Fixed { count: u32 },
    Cyclic { counts: Vec<u32> },
    Uniform { min: u32, max: u32 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GasPolicy {
    Fixed { gas: u64 },
    Uniform { min: u64, max: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorityFeePolicy {
    Fixed { wei: Wei },
    Uniform { min_wei: Wei, max_wei: Wei },
    /// Base fee-per-gas multiplied by `multiplier` whenever the blob base
    /// fee observed at submission time exceeds `threshold_wei`.
    Reactive { base_wei: Wei, threshold_wei: Wei, multiplier: u32 },
}

fn default_max_fee() -> Wei {
    // 10^18 wei per gas unit. Economically uncapped, but it bounds how far
    // excess blob gas can climb before demand stops affording blocks, which
    // keeps the integer exponential well inside u128.
    Wei(1_000_000_000_000_000_000)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SenderStrategy {
    pub sender: String,
    pub blob_count_policy: BlobCountPolicy,
    pub gas_policy: GasPolicy,
    pub priority_fee_policy: PriorityFeePolicy,
    /// Mean of the exponential inter-arrival time, seconds.
    pub submit_interval_secs: f64,
    #[serde(default)]
    pub privacy: bool,
    #[serde(default = "default_max_fee")]
    pub max_fee_per_gas: Wei,
    #[serde(default = "default_max_fee")]
    pub max_fee_per_blob_gas: Wei,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub start_secs: f64,
    pub duration_secs: f64,
    pub arrival_multiplier: f64,
    /// Ephemeral small senders active only during the spike, each emitting
    /// 1-blob minimum-gas transactions.
    #[serde(default)]
    pub extra_senders: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuilderStrategy {
    Greedy,
    Optimal,
    SubsetOptimal,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuilderConfig {
    pub name: String,
    pub strategy: BuilderStrategy,
    #[serde(default)]
    pub blob_aversion_probability: f64,
    pub selection_weight: f64,
}

fn default_reserved_gas() -> u64 {
    10_000_000
}

fn default_initial_base_fee() -> Wei {
    Wei::gwei(1)
}

/// Declarative demand plus builder configuration for one deterministic run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub horizon_slots: u64,
    pub strategies: Vec<SenderStrategy>,
    #[serde(default)]
    pub spikes: Vec<SpikeEvent>,
    #[serde(default)]
    pub params: ProtocolParams,
    pub builders: Vec<BuilderConfig>,
    #[serde(default)]
    pub window: Option<EligibilityWindow>,
    /// Block gas standing in for ordinary (non-blob) transactions.
    #[serde(default = "default_reserved_gas")]
    pub reserved_non_blob_gas: u64,
    #[serde(default = "default_initial_base_fee")]
    pub initial_exec_base_fee: Wei,
    #[serde(default)]
    pub genesis_timestamp_ms: u64,
    /// Builder that sees the private transaction flow, if any.
    #[serde(default)]
    pub private_flow_builder: Option<String>,
}

impl Scenario {
    pub fn horizon_secs(&self) -> f64 {
        (self.horizon_slots * self.params.slot_seconds) as f64
    }

    pub fn window(&self) -> EligibilityWindow {
        self.window.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.window().validate()?;
        if self.horizon_slots == 0 {
            return Err(Error::InvalidParams("horizon_slots must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::EmptyStrategies);
        }
        for s in &self.strategies {
            if s.submit_interval_secs <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "sender {}: submit interval must be positive",
                    s.sender
                )));
            }
        }
        for spike in &self.spikes {
            if spike.arrival_multiplier < 1.0 || spike.duration_secs <= 0.0 {
                return Err(Error::InvalidParams(
                    "spike needs multiplier >= 1 and positive duration".into(),
                ));
            }
        }
        if self.builders.iter().map(|b| b.selection_weight).sum::<f64>() <= 0.0 {
            return Err(Error::ZeroBuilderWeight);
        }
        Ok(())
    }
}

/// A generated submission. Reactive priority fees are resolved by the
/// harness against the fee state at submission time; the carried transaction
/// holds the base fee value.
#[derive(Clone, Debug, PartialEq)]
pub struct Arrival {
    pub tx: BlobTx,
    pub reactive: Option<(Wei, u32)>, // (threshold, multiplier)
}

struct SenderState {
    rng: ChaCha12Rng,
    cycle_pos: usize,
}

fn spike_multiplier(spikes: &[SpikeEvent], t: f64) -> f64 {
    spikes
        .iter()
        .filter(|s| t >= s.start_secs && t < s.start_secs + s.duration_secs)
        .map(|s| s.arrival_multiplier)
        .fold(1.0, f64::max)
}

/// Advances a Poisson clock with piecewise-constant rate (base rate scaled
/// by the active spike multiplier) until one unit-exponential draw is
/// consumed.
fn next_arrival_time(spikes: &[SpikeEvent], base_rate: f64, mut t: f64, exp_draw: f64) -> f64 {
    let mut remaining = exp_draw;
    loop {
        let rate = base_rate * spike_multiplier(spikes, t);
        // Next rate-change boundary strictly after t.
        let boundary = spikes
            .iter()
            .flat_map(|s| [s.start_secs, s.start_secs + s.duration_secs])
            .filter(|&b| b > t)
            .fold(f64::INFINITY, f64::min);
        let dt = remaining / rate;
        if t + dt <= boundary {
            return t + dt;
        }
        remaining -= (boundary - t) * rate;
        t = boundary;
    }
}

fn sample_blobs(policy: &BlobCountPolicy, state: &mut SenderState) -> u32 {
    match policy {
        BlobCountPolicy::Fixed { count } => *count,
        BlobCountPolicy::Cyclic { counts } => {
            let c = counts[state.cycle_pos % counts.len()];
            state.cycle_pos += 1;
            c
        }
        BlobCountPolicy::Uniform { min, max } => state.rng.gen_range(*min..=*max),
    }
}

fn sample_gas(policy: &GasPolicy, state: &mut SenderState) -> u64 {
    match policy {
        GasPolicy::Fixed { gas } => *gas,
        GasPolicy::Uniform { min, max } => state.rng.gen_range(*min..=*max),
    }
}

fn sample_priority(policy: &PriorityFeePolicy, state: &mut SenderState) -> (Wei, Option<(Wei, u32)>) {
    match policy {
        PriorityFeePolicy::Fixed { wei } => (*wei, None),
        PriorityFeePolicy::Uniform { min_wei, max_wei } => {
            (Wei(state.rng.gen_range(min_wei.0..=max_wei.0)), None)
        }
        PriorityFeePolicy::Reactive { base_wei, threshold_wei, multiplier } => {
            (*base_wei, Some((*threshold_wei, *multiplier)))
        }
    }
}

fn emit_sender(
    strategy: &SenderStrategy,
    spikes: &[SpikeEvent],
    active: Option<(f64, f64)>,
    horizon_secs: f64,
    seed: u64,
    out: &mut Vec<Arrival>,
) {
    let mut state = SenderState { rng: ChaCha12Rng::seed_from_u64(seed), cycle_pos: 0 };
    let base_rate = 1.0 / strategy.submit_interval_secs;
    let (start, end) = active.unwrap_or((0.0, horizon_secs));
    let end = end.min(horizon_secs);
    let mut t = start;
    let mut seq = 0u64;
    loop {
        let draw: f64 = Exp1.sample(&mut state.rng);
        t = next_arrival_time(spikes, base_rate, t, draw);
        if t >= end {
            break;
        }
        let num_blobs = sample_blobs(&strategy.blob_count_policy, &mut state);
        let gas_usage = sample_gas(&strategy.gas_policy, &mut state);
        let (priority, reactive) = sample_priority(&strategy.priority_fee_policy, &mut state);
        out.push(Arrival {
            tx: BlobTx {
                id: format!("{}-{seq:06}", strategy.sender),
                sender: strategy.sender.clone(),
                num_blobs,
                gas_usage,
                priority_fee_per_gas: priority,
                max_fee_per_gas: strategy.max_fee_per_gas,
                max_fee_per_blob_gas: strategy.max_fee_per_blob_gas,
                first_seen_ms: (t * 1000.0).round() as u64,
                is_private: strategy.privacy,
                subset_options: None,
            },
            reactive,
        });
        seq += 1;
    }
}

/// Produces the time-ordered arrival stream. Byte-identical output for a
/// fixed scenario.
pub fn generate(scenario: &Scenario) -> Result<Vec<Arrival>> {
    scenario.validate()?;
    let horizon = scenario.horizon_secs();
    let mut master = ChaCha12Rng::seed_from_u64(scenario.seed);
    let mut arrivals = Vec::new();
    for strategy in &scenario.strategies {
        let seed = master.next_u64();
        emit_sender(strategy, &scenario.spikes, None, horizon, seed, &mut arrivals);
    }
    for (si, spike) in scenario.spikes.iter().enumerate() {
        for j in 0..spike.extra_senders {
            let seed = master.next_u64();
            let strategy = SenderStrategy {
                sender: format!("spike{si}-s{j:03}"),
                blob_count_policy: BlobCountPolicy::Fixed { count: 1 },
                gas_policy: GasPolicy::Fixed { gas: 21_000 },
                priority_fee_policy: PriorityFeePolicy::Fixed { wei: Wei::gwei(1) },
                submit_interval_secs: 24.0,
                privacy: false,
                max_fee_per_gas: default_max_fee(),
                max_fee_per_blob_gas: default_max_fee(),
            };
            // Ephemeral senders are not themselves rate-boosted.
            emit_sender(
                &strategy,
                &[],
                Some((spike.start_secs, spike.start_secs + spike.duration_secs)),
                horizon,
                seed,
                &mut arrivals,
            );
        }
    }
    arrivals.sort_by(|a, b| {
        a.tx.first_seen_ms.cmp(&b.tx.first_seen_ms).then_with(|| a.tx.id.cmp(&b.tx.id))
    });
    Ok(arrivals)
}

/// Built-in scenarios: "calm", "blobscriptions", "layerzero".
pub fn preset(name: &str) -> Result<Scenario> {
    let fixed_blobs = |sender: &str, count: u32, interval: f64, prio: Wei| SenderStrategy {
        sender: sender.into(),
        blob_count_policy: BlobCountPolicy::Fixed { count },
        gas_policy: GasPolicy::Fixed { gas: 21_000 },
        priority_fee_policy: PriorityFeePolicy::Fixed { wei: prio },
        submit_interval_secs: interval,
        privacy: false,
        max_fee_per_gas: default_max_fee(),
        max_fee_per_blob_gas: default_max_fee(),
    };
    let one_builder = |strategy: BuilderStrategy| {
        vec![BuilderConfig {
            name: "builder-0".into(),
            strategy,
            blob_aversion_probability: 0.0,
            selection_weight: 1.0,
        }]
    };
    match name {
        // Aggregate demand stays below the 3-blob target.
        "calm" => Ok(Scenario {
            seed: 1,
            horizon_slots: 1_000,
            strategies: vec![
                fixed_blobs("roll-a", 1, 20.0, Wei::gwei(2)),
                fixed_blobs("roll-b", 1, 30.0, Wei::gwei(1)),
                fixed_blobs("roll-c", 2, 60.0, Wei::gwei(1)),
            ],
            spikes: vec![],
            params: ProtocolParams::default(),
            builders: one_builder(BuilderStrategy::Optimal),
            window: None,
            reserved_non_blob_gas: default_reserved_gas(),
            initial_exec_base_fee: default_initial_base_fee(),
            genesis_timestamp_ms: 0,
            private_flow_builder: None,
        }),
        // Many ephemeral small senders on top of sustained demand above the
        // 6-blob block maximum for over an hour.
        "blobscriptions" => Ok(Scenario {
            seed: 2,
            horizon_slots: 900,
            strategies: vec![
                fixed_blobs("roll-a", 3, 12.0, Wei::gwei(2)),
                fixed_blobs("roll-b", 3, 12.0, Wei::gwei(1)),
                fixed_blobs("roll-c", 1, 24.0, Wei::gwei(3)),
            ],
            spikes: vec![SpikeEvent {
                start_secs: 1_200.0,
                duration_secs: 4_800.0,
                arrival_multiplier: 2.0,
                extra_senders: 40,
            }],
            params: ProtocolParams::default(),
            builders: vec![
                BuilderConfig {
                    name: "greedy-0".into(),
                    strategy: BuilderStrategy::Greedy,
                    blob_aversion_probability: 0.05,
                    selection_weight: 0.7,
                },
                BuilderConfig {
                    name: "optimal-0".into(),
                    strategy: BuilderStrategy::Optimal,
                    blob_aversion_probability: 0.0,
                    selection_weight: 0.3,
                },
            ],
            window: None,
            reserved_non_blob_gas: default_reserved_gas(),
            initial_exec_base_fee: default_initial_base_fee(),
            genesis_timestamp_ms: 0,
            private_flow_builder: None,
        }),
        // Saturating demand sustained for the whole horizon with reactive
        // priority fees; drives the blob base fee across many orders of
        // magnitude.
        "layerzero" => {
            let reactive = |sender: &str| SenderStrategy {
                sender: sender.into(),
                blob_count_policy: BlobCountPolicy::Fixed { count: 6 },
                gas_policy: GasPolicy::Fixed { gas: 21_000 },
                priority_fee_policy: PriorityFeePolicy::Reactive {
                    base_wei: Wei::gwei(1),
                    threshold_wei: Wei(1_000_000),
                    multiplier: 10,
                },
                submit_interval_secs: 8.0,
                privacy: false,
                max_fee_per_gas: default_max_fee(),
                max_fee_per_blob_gas: default_max_fee(),
            };
            Ok(Scenario {
                seed: 3,
                horizon_slots: 5_000,
                strategies: vec![
                    reactive("drop-a"),
                    reactive("drop-b"),
                    reactive("drop-c"),
                    reactive("drop-d"),
                ],
                spikes: vec![],
                params: ProtocolParams::default(),
                builders: one_builder(BuilderStrategy::Optimal),
                window: None,
                reserved_non_blob_gas: default_reserved_gas(),
                initial_exec_base_fee: default_initial_base_fee(),
                genesis_timestamp_ms: 0,
                private_flow_builder: None,
            })
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_sender_scenario(interval: f64, horizon_slots: u64) -> Scenario {
        Scenario {
            seed: 11,
            horizon_slots,
            strategies: vec![SenderStrategy {
                sender: "s".into(),
                blob_count_policy: BlobCountPolicy::Fixed { count: 1 },
                gas_policy: GasPolicy::Fixed { gas: 21_000 },
                priority_fee_policy: PriorityFeePolicy::Fixed { wei: Wei(1) },
                submit_interval_secs: interval,
                privacy: false,
                max_fee_per_gas: default_max_fee(),
                max_fee_per_blob_gas: default_max_fee(),
            }],
            spikes: vec![],
            params: ProtocolParams::default(),
            builders: vec![BuilderConfig {
                name: "b".into(),
                strategy: BuilderStrategy::Optimal,
                blob_aversion_probability: 0.0,
                selection_weight: 1.0,
            }],
            window: None,
            reserved_non_blob_gas: 10_000_000,
            initial_exec_base_fee: Wei::gwei(1),
            genesis_timestamp_ms: 0,
            private_flow_builder: None,
        }
    }

    #[test]
    fn fixed_one_blob_rate() {
        let scenario = one_sender_scenario(60.0, 100);
        let arrivals = generate(&scenario).unwrap();
        // ~20 expected over 1200s; allow 3 sigma.
        assert!((7..=34).contains(&arrivals.len()), "{}", arrivals.len());
        assert!(arrivals.iter().all(|a| a.tx.num_blobs == 1));
        assert!(arrivals.windows(2).all(|w| w[0].tx.first_seen_ms <= w[1].tx.first_seen_ms));
    }

    #[test]
    fn rate_fidelity_three_sigma() {
        let scenario = one_sender_scenario(12.0, 2_000);
        let n = generate(&scenario).unwrap().len() as f64;
        let expected = 2_000.0;
        assert!((n - expected).abs() <= 3.0 * expected.sqrt(), "n = {n}");
    }

    #[test]
    fn spike_multiplies_arrival_rate() {
        let mut scenario = one_sender_scenario(12.0, 1_000); // 12000s horizon
        scenario.spikes = vec![SpikeEvent {
            start_secs: 6_000.0,
            duration_secs: 6_000.0,
            arrival_multiplier: 10.0,
            extra_senders: 0,
        }];
        let arrivals = generate(&scenario).unwrap();
        let calm = arrivals.iter().filter(|a| a.tx.first_seen_ms < 6_000_000).count() as f64;
        let hot = arrivals.iter().filter(|a| a.tx.first_seen_ms >= 6_000_000).count() as f64;
        // Expected 500 vs 5000; 3-sigma bands around the analytic rates.
        assert!((calm - 500.0).abs() <= 3.0 * 500.0f64.sqrt(), "calm = {calm}");
        assert!((hot - 5_000.0).abs() <= 3.0 * 5_000.0f64.sqrt(), "hot = {hot}");
    }

    #[test]
    fn six_blob_policy_sticks() {
        let mut scenario = one_sender_scenario(30.0, 200);
        scenario.strategies[0].blob_count_policy = BlobCountPolicy::Fixed { count: 6 };
        let arrivals = generate(&scenario).unwrap();
        assert!(!arrivals.is_empty());
        assert!(arrivals.iter().all(|a| a.tx.num_blobs == 6));
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let scenario = one_sender_scenario(12.0, 500);
        assert_eq!(generate(&scenario).unwrap(), generate(&scenario).unwrap());
    }

    #[test]
    fn empty_strategy_list_rejected() {
        let mut scenario = one_sender_scenario(12.0, 10);
        scenario.strategies.clear();
        assert!(matches!(generate(&scenario), Err(Error::EmptyStrategies)));
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn calm_preset_demand_below_target() {
        let scenario = preset("calm").unwrap();
        let arrivals = generate(&scenario).unwrap();
        let blobs: u64 = arrivals.iter().map(|a| a.tx.num_blobs as u64).sum();
        assert!((blobs as f64) / (scenario.horizon_slots as f64) < 3.0);
    }

    #[test]
    fn blobscriptions_preset_oversubscribes() {
        let scenario = preset("blobscriptions").unwrap();
        let arrivals = generate(&scenario).unwrap();
        // During the spike hour, demand must exceed 6 blobs per slot.
        let spike = &scenario.spikes[0];
        let (lo, hi) =
            ((spike.start_secs * 1000.0) as u64, ((spike.start_secs + spike.duration_secs) * 1000.0) as u64);
        let blobs: u64 = arrivals
            .iter()
            .filter(|a| a.tx.first_seen_ms >= lo && a.tx.first_seen_ms < hi)
            .map(|a| a.tx.num_blobs as u64)
            .sum();
        let slots = spike.duration_secs / 12.0;
        assert!(blobs as f64 / slots > 6.0, "blobs/slot = {}", blobs as f64 / slots);
        assert!(spike.duration_secs >= 3_600.0);
    }

    #[test]
    fn scenario_json_round_trip() {
        let scenario = preset("layerzero").unwrap();
        let json = serde_json::to_string(&scenario).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(generate(&scenario).unwrap(), generate(&back).unwrap());
    }
}
