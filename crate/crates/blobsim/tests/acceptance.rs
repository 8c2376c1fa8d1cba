//! End-to-end acceptance checks. Each test prints a single PASS line on
//! success; a failure panics with the offending values.

use blobsim::demand::{preset, BuilderStrategy};
use blobsim::fees::{blob_base_fee, fake_exponential, ProtocolParams};
use blobsim::ingest::classify_trace_files;
use blobsim::mempool::EligibilityWindow;
use blobsim::packing::{greedy_pack, optimal_pack, optimal_pack_subset, PackingProblem};
use blobsim::sim::{run, summarize, write_run};
use blobsim::tx::BuilderRevenueView;
use blobsim::units::{BlobGas, Wei};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn view(
    id: &str,
    option: Option<&str>,
    group: Option<&str>,
    blobs: u32,
    gas: u64,
    revenue: u128,
) -> BuilderRevenueView {
    BuilderRevenueView {
        tx_id: id.into(),
        option_id: option.map(String::from),
        group_id: group.map(String::from),
        blobs,
        gas,
        revenue: Wei(revenue),
    }
}

/// Exhaustive reference packer: tries every candidate subset, honoring the
/// blob cap, the gas budget, and mutual exclusion within groups.
fn brute_force_best(problem: &PackingProblem) -> Wei {
    let n = problem.candidates.len();
    assert!(n <= 20, "enumeration fixture too large");
    let mut best = Wei::ZERO;
    'mask: for mask in 0u32..(1 << n) {
        let mut blobs = 0u32;
        let mut gas = 0u64;
        let mut revenue = Wei::ZERO;
        let mut groups: Vec<&str> = Vec::new();
        for (i, cand) in problem.candidates.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            if let Some(g) = &cand.group_id {
                if groups.contains(&g.as_str()) {
                    continue 'mask;
                }
                groups.push(g);
            }
            blobs += cand.blobs;
            gas += cand.gas;
            revenue += cand.revenue;
        }
        if blobs > problem.blob_capacity {
            continue;
        }
        if problem.gas_budget.is_some_and(|b| gas > b) {
            continue;
        }
        best = best.max(revenue);
    }
    best
}

#[test]
fn criterion_1_worked_example_fidelity() {
    let started = Instant::now();
    let views = vec![
        view("a", None, None, 5, 1, 200),
        view("b", None, None, 3, 1, 199),
        view("c", None, None, 3, 1, 199),
    ];
    let problem = PackingProblem::new(views, 6);
    let greedy = greedy_pack(&problem);
    let optimal = optimal_pack(&problem);
    assert_eq!(greedy.total_revenue, Wei(200));
    assert_eq!(optimal.total_revenue, Wei(398));
    let loss = blobsim::packing::relative_fee_loss(greedy.total_revenue, optimal.total_revenue)
        .expect("optimal revenue is positive");
    assert!((loss.as_f64() - 0.497487).abs() < 1e-6, "loss {}", loss.as_f64());
    let elapsed = started.elapsed();
    assert!(elapsed.as_micros() < 1_000, "took {elapsed:?}");
    println!("criterion 1 (worked-example fidelity): PASS ({elapsed:?})");
}

#[test]
fn criterion_2_fee_cap_property() {
    let started = Instant::now();
    // Step ratios are measured at sub-wei precision (factor 10^6) so the
    // bracket is not blurred by flooring the fee to whole wei.
    let params = ProtocolParams::default();
    let scale = 1_000_000u128;
    let full_block = 6 * 131_072;
    let step = full_block - params.target_blob_gas().0;
    let lo_excess = (1000f64.ln() * params.blob_fee_update_fraction as f64) as u64;
    let hi_excess = (1.0e12f64.ln() * params.blob_fee_update_fraction as f64) as u64;
    let mut rng = StdRng::seed_from_u64(2_024);
    for _ in 0..10_000 {
        let excess = rng.gen_range(lo_excess..hi_excess);
        let lo = fake_exponential(
            Wei(scale),
            excess as u128,
            params.blob_fee_update_fraction as u128,
        )
        .unwrap();
        let hi = fake_exponential(
            Wei(scale),
            (excess + step) as u128,
            params.blob_fee_update_fraction as u128,
        )
        .unwrap();
        assert!(lo.0 >= 1000 * scale);
        let ratio = hi.0 as f64 / lo.0 as f64;
        assert!((1.124..=1.1251).contains(&ratio), "ratio {ratio} at excess {excess}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1, "took {elapsed:?}");
    println!("criterion 2 (fee-cap property): PASS ({elapsed:?})");
}

#[test]
fn criterion_3_order_of_magnitude_climb() {
    let params = ProtocolParams::default();
    let step = BlobGas(6 * 131_072 - params.target_blob_gas().0);
    // Start from several fee levels >= 10^3 wei and count full-usage blocks
    // until the fee reaches 10x.
    for start_fee_exp in [3u32, 6, 9, 12] {
        let target_fee = 10u128.pow(start_fee_exp);
        let mut excess = BlobGas(
            ((target_fee as f64).ln() * params.blob_fee_update_fraction as f64) as u64,
        );
        while blob_base_fee(excess, &params).unwrap().0 < target_fee {
            excess = excess + step;
        }
        let start = blob_base_fee(excess, &params).unwrap();
        let mut blocks = 0u32;
        while blob_base_fee(excess, &params).unwrap().0 < start.0 * 10 {
            excess = excess + step;
            blocks += 1;
        }
        assert!(blocks > 10, "only {blocks} blocks at 10^{start_fee_exp}");
        assert!(
            (19..=21).contains(&blocks),
            "10x climb took {blocks} blocks from 10^{start_fee_exp}"
        );
    }
    println!("criterion 3 (order-of-magnitude climb): PASS");
}

#[test]
fn criterion_4_price_discovery_scale() {
    let started = Instant::now();
    let mut scenario = preset("layerzero").unwrap();
    scenario.horizon_slots = 5_000;
    let output = run(&scenario, false).unwrap();
    let mut saturated_before = 0u64;
    let mut reached_at_saturated: Option<u64> = None;
    for slot in &output.slots {
        if slot.blob_base_fee.0 >= 1_000_000_000_000_000 {
            reached_at_saturated = Some(saturated_before);
            break;
        }
        if slot.blobs_included == 6 {
            saturated_before += 1;
        }
    }
    let saturated = reached_at_saturated.expect("fee reached 10^15 wei within the horizon");
    assert!(saturated >= 280, "reached 10^15 wei after only {saturated} saturated slots");
    assert!(saturated <= 2_400, "needed {saturated} saturated slots, over 8 simulated hours");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}");
    println!(
        "criterion 4 (price-discovery scale): PASS ({saturated} saturated slots, {elapsed:?})"
    );
}

#[test]
fn criterion_5_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(77);
    for instance in 0..1_000 {
        let with_groups = instance % 2 == 1;
        let with_budget = instance % 3 == 0;
        let n_items = rng.gen_range(1..=if with_groups { 4 } else { 12 });
        let mut views = Vec::new();
        for item in 0..n_items {
            if with_groups && rng.gen_bool(0.5) {
                let options = rng.gen_range(2..=3);
                for opt in 0..options {
                    views.push(view(
                        &format!("t{item}"),
                        Some(&format!("o{opt}")),
                        Some(&format!("g{item}")),
                        rng.gen_range(1..=6),
                        rng.gen_range(21_000..=2_000_000),
                        rng.gen_range(0..=1_000_000),
                    ));
                }
            } else {
                views.push(view(
                    &format!("t{item}"),
                    None,
                    None,
                    rng.gen_range(1..=6),
                    rng.gen_range(21_000..=2_000_000),
                    rng.gen_range(0..=1_000_000),
                ));
            }
        }
        views.truncate(12);
        let mut problem = PackingProblem::new(views, 6);
        if with_budget {
            problem = problem.with_gas_budget(rng.gen_range(21_000..=6_000_000));
        }
        let reference = brute_force_best(&problem);
        let subset = optimal_pack_subset(&problem);
        assert_eq!(subset.total_revenue, reference, "instance {instance}: {problem:?}");
        if !with_groups {
            assert_eq!(
                optimal_pack(&problem).total_revenue,
                reference,
                "instance {instance} (ungrouped)"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}");
    println!("criterion 5 (oracle equivalence): PASS ({elapsed:?})");
}

#[test]
fn criterion_6_fake_exponential_accuracy() {
    assert_eq!(fake_exponential(Wei(1), 0, 1).unwrap(), Wei(1));
    // Scaled factor exposes the sub-integer precision of the approximation.
    let scale = 1_000_000_000_000u128;
    for numerator in 0..=400u128 {
        let denominator = 10u128;
        let x = numerator as f64 / denominator as f64;
        if x > 40.0 {
            break;
        }
        let got = fake_exponential(Wei(scale), numerator, denominator).unwrap();
        let want = x.exp() * scale as f64;
        let rel = (got.0 as f64 - want).abs() / want;
        assert!(rel <= 1e-6, "x={x}: got {} want {want} rel {rel}", got.0);
    }
    println!("criterion 6 (integer exponential accuracy): PASS");
}

#[test]
fn criterion_7_conservation() {
    let mut scenario = preset("blobscriptions").unwrap();
    scenario.horizon_slots = 10_000;
    let output = run(&scenario, false).unwrap();
    assert_eq!(output.slots.len(), 10_000);
    let mut per_block: std::collections::HashMap<u64, (Wei, Wei, Wei)> =
        std::collections::HashMap::new();
    for tx in &output.txs {
        let entry = per_block.entry(tx.inclusion_block).or_insert((Wei::ZERO, Wei::ZERO, Wei::ZERO));
        entry.0 += tx.breakdown.exec_base_burned;
        entry.1 += tx.breakdown.blob_base_burned;
        entry.2 += tx.breakdown.exec_priority_to_builder;
    }
    let mut prev_cumulative = Wei::ZERO;
    let mut cumulative = Wei::ZERO;
    for slot in &output.slots {
        let (base, blob, tip) =
            per_block.get(&slot.block_number).copied().unwrap_or((Wei::ZERO, Wei::ZERO, Wei::ZERO));
        assert_eq!(slot.breakdown.exec_base_burned, base, "slot {}", slot.block_number);
        assert_eq!(slot.breakdown.blob_base_burned, blob, "slot {}", slot.block_number);
        assert_eq!(slot.breakdown.exec_priority_to_builder, tip, "slot {}", slot.block_number);
        cumulative += slot.breakdown.total();
        assert!(cumulative >= prev_cumulative);
        prev_cumulative = cumulative;
    }
    println!("criterion 7 (fee conservation over 10,000 slots): PASS");
}

#[test]
fn criterion_8_classification_round_trip() {
    let mut scenario = preset("blobscriptions").unwrap();
    scenario.horizon_slots = 2_000;
    let output = run(&scenario, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), &output, &summarize(&output)).unwrap();
    let report = classify_trace_files(
        &dir.path().join("blocks.csv"),
        &dir.path().join("mempool.csv"),
        &EligibilityWindow::default(),
        6,
    )
    .unwrap();
    assert_eq!(report.rows.len(), output.audits.len());
    let mut mismatches = 0u64;
    for (replayed, original) in report.rows.iter().zip(&output.audits) {
        assert_eq!(replayed.block_number, original.block_number);
        if replayed.audit != original.audit {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0, "verdict agreement below 100%");
    // The mixed scenario must actually exercise multiple verdict classes.
    let summary = summarize(&output);
    assert!(summary.verdict_counts.len() >= 2, "scenario not mixed: {:?}", summary.verdict_counts);
    println!("criterion 8 (classification round-trip over 2,000 slots): PASS");
}

#[test]
fn criterion_9_subset_bidding_gain() {
    // Congestion fixture: a 6-blob bidder at a low per-blob price and one
    // high-paying 1-blob bidder. Plain bidding wastes five blob slots.
    let plain = vec![
        view("large", None, None, 6, 600_000, 30),
        view("small", None, None, 1, 100_000, 50),
    ];
    let plain_best = optimal_pack_subset(&PackingProblem::new(plain, 6));
    assert_eq!(plain_best.total_blobs, 1);
    assert_eq!(plain_best.total_revenue, Wei(50));

    // Same bidder offering every blob count as a mutually exclusive option,
    // priced linearly at 5 per blob.
    let mut subset = vec![view("small", None, None, 1, 100_000, 50)];
    for k in 1..=6u32 {
        subset.push(view(
            "large",
            Some(&format!("k{k}")),
            Some("large"),
            k,
            100_000 * k as u64,
            5 * k as u128,
        ));
    }
    let subset_best = optimal_pack_subset(&PackingProblem::new(subset, 6));
    assert_eq!(subset_best.total_blobs, 6, "block should fill");
    assert_eq!(subset_best.total_revenue, Wei(75), "small bid plus five large blobs");
    assert!(subset_best.total_revenue > plain_best.total_revenue);

    // Replacing plain bids with option groups one-for-one (the plain bid
    // kept as one option among smaller fallbacks) never reduces revenue.
    let mut rng = StdRng::seed_from_u64(909);
    for instance in 0..500 {
        let n = rng.gen_range(1..=5);
        let mut plain_views = Vec::new();
        let mut grouped_views = Vec::new();
        for item in 0..n {
            let blobs = rng.gen_range(1..=6u32);
            let gas = rng.gen_range(21_000..=1_000_000u64);
            let revenue = rng.gen_range(1..=1_000u128);
            plain_views.push(view(&format!("t{item}"), None, None, blobs, gas, revenue));
            grouped_views.push(view(
                &format!("t{item}"),
                Some("full"),
                Some(&format!("g{item}")),
                blobs,
                gas,
                revenue,
            ));
            for k in 1..blobs {
                // Fallback options: fewer blobs, proportionally lower bid.
                grouped_views.push(view(
                    &format!("t{item}"),
                    Some(&format!("k{k}")),
                    Some(&format!("g{item}")),
                    k,
                    gas * k as u64 / blobs as u64,
                    revenue * k as u128 / blobs as u128,
                ));
            }
        }
        let plain_rev =
            optimal_pack_subset(&PackingProblem::new(plain_views, 6)).total_revenue;
        let grouped_rev =
            optimal_pack_subset(&PackingProblem::new(grouped_views, 6)).total_revenue;
        assert!(grouped_rev >= plain_rev, "instance {instance}: {grouped_rev:?} < {plain_rev:?}");
    }
    println!("criterion 9 (subset-bidding gain): PASS");
}

#[test]
fn optimal_builder_shadow_dominance_full_run() {
    // Shadow-pricing invariant across a mixed run: optimal never below
    // greedy on the same eligible set, and a congested run shows a strict
    // gap somewhere.
    let mut scenario = preset("blobscriptions").unwrap();
    scenario.horizon_slots = 1_000;
    scenario.builders.retain(|b| matches!(b.strategy, BuilderStrategy::Greedy));
    let output = run(&scenario, true).unwrap();
    let mut strict = false;
    for slot in &output.slots {
        let greedy = slot.shadow_greedy_revenue.unwrap();
        let optimal = slot.shadow_optimal_revenue.unwrap();
        assert!(optimal >= greedy, "slot {}", slot.block_number);
        strict |= optimal > greedy;
    }
    assert!(strict, "expected at least one strict greedy-vs-optimal gap");
}
