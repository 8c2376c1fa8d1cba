//! Randomized invariant checks over the fee curve, the packers, and the
//! eligibility window.

use blobsim::fees::{blob_base_fee, update_exec_base_fee, update_excess_blob_gas, ProtocolParams};
use blobsim::mempool::EligibilityWindow;
use blobsim::packing::{greedy_pack, optimal_pack, optimal_pack_subset, PackingProblem};
use blobsim::tx::BuilderRevenueView;
use blobsim::units::{BlobGas, Wei};
use proptest::prelude::*;

fn arb_view(max_items: usize) -> impl Strategy<Value = Vec<BuilderRevenueView>> {
    prop::collection::vec(
        (0..max_items as u32, 1..=6u32, 21_000..=2_000_000u64, 0..=1_000_000u128).prop_map(
            |(id, blobs, gas, revenue)| BuilderRevenueView {
                tx_id: format!("t{id:03}"),
                option_id: None,
                group_id: None,
                blobs,
                gas,
                revenue: Wei(revenue),
            },
        ),
        0..max_items,
    )
    .prop_map(|mut views| {
        // Candidate ids must be unique within a problem.
        views.sort_by(|a, b| a.tx_id.cmp(&b.tx_id));
        views.dedup_by(|a, b| a.tx_id == b.tx_id);
        views
    })
}

proptest! {
    #[test]
    fn blob_fee_monotone_in_excess(excess in 0u64..150_000_000, delta in 0u64..10_000_000) {
        let params = ProtocolParams::default();
        let lo = blob_base_fee(BlobGas(excess), &params).unwrap();
        let hi = blob_base_fee(BlobGas(excess + delta), &params).unwrap();
        prop_assert!(hi >= lo);
        prop_assert!(lo.0 >= 1);
    }

    #[test]
    fn blob_fee_one_block_step_bounded(excess in 0u64..150_000_000) {
        let params = ProtocolParams::default();
        let step = 6 * params.gas_per_blob - params.target_blob_gas().0;
        let lo = blob_base_fee(BlobGas(excess), &params).unwrap();
        let hi = blob_base_fee(BlobGas(excess + step), &params).unwrap();
        prop_assert!(hi >= lo);
        if lo.0 >= 1000 {
            let ratio = hi.0 as f64 / lo.0 as f64;
            // Wei flooring perturbs the ratio by up to ~1.125/lo.
            prop_assert!(ratio <= 1.1251 + 1.25 / lo.0 as f64, "ratio {}", ratio);
        }
    }

    #[test]
    fn excess_clamp_and_formula(prev in 0u64..10_000_000, used in 0u64..=786_432) {
        let params = ProtocolParams::default();
        let next = update_excess_blob_gas(BlobGas(prev), BlobGas(used), &params);
        let expected = (prev + used).saturating_sub(params.target_blob_gas().0);
        prop_assert_eq!(next.0, expected);
    }

    #[test]
    fn exec_base_fee_step_bounded(prev in 1u128..10_000_000_000_000u128, gas in 0u64..=30_000_000) {
        let params = ProtocolParams::default();
        let next = update_exec_base_fee(Wei(prev), gas, params.gas_target(), &params).unwrap();
        prop_assert!(next.0 >= 1);
        prop_assert!(next.0.abs_diff(prev) <= prev / 8);
    }

    #[test]
    fn optimal_dominates_greedy(views in arb_view(16), budget in proptest::option::of(21_000u64..6_000_000)) {
        let mut problem = PackingProblem::new(views, 6);
        if let Some(budget) = budget {
            problem = problem.with_gas_budget(budget);
        }
        let greedy = greedy_pack(&problem);
        let optimal = optimal_pack(&problem);
        prop_assert!(optimal.total_revenue >= greedy.total_revenue);
        prop_assert_eq!(optimal_pack_subset(&problem).total_revenue, optimal.total_revenue);
    }

    #[test]
    fn packings_are_feasible(views in arb_view(16), budget in proptest::option::of(21_000u64..6_000_000)) {
        let mut problem = PackingProblem::new(views, 6);
        if let Some(budget) = budget {
            problem = problem.with_gas_budget(budget);
        }
        for result in [greedy_pack(&problem), optimal_pack(&problem), optimal_pack_subset(&problem)] {
            prop_assert!(result.total_blobs <= 6);
            if let Some(budget) = problem.gas_budget {
                prop_assert!(result.total_gas <= budget);
            }
            // Totals must re-derive from the chosen candidates.
            let mut blobs = 0u32;
            let mut gas = 0u64;
            let mut revenue = Wei::ZERO;
            for (id, opt) in &result.chosen {
                let cand = problem
                    .candidates
                    .iter()
                    .find(|c| &c.tx_id == id && &c.option_id == opt)
                    .expect("chosen candidate exists");
                blobs += cand.blobs;
                gas += cand.gas;
                revenue += cand.revenue;
            }
            prop_assert_eq!(blobs, result.total_blobs);
            prop_assert_eq!(gas, result.total_gas);
            prop_assert_eq!(revenue, result.total_revenue);
        }
    }

    #[test]
    fn window_bounds_consistent(first_seen in 0u64..10_000_000, offset in 0u64..200_000) {
        let window = EligibilityWindow::default();
        let expected = first_seen + offset;
        let eligible = window.contains(first_seen, expected);
        prop_assert_eq!(eligible, (4_000..=120_000).contains(&offset));
    }
}
