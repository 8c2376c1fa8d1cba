//! Command line front end: run simulations, classify captured traces, and
//! measure private order flow share.

use anyhow::{Context, Result};
use blobsim::demand::{preset, Scenario};
use blobsim::ingest::{
    classify_trace_files, private_share, read_blocks_csv, read_mempool_csv, write_audit_csv,
};
use blobsim::mempool::EligibilityWindow;
use blobsim::sim::{run, summarize, write_run};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "blobsim", about = "Blob fee market simulator and block auditor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a deterministic simulation and write slot, transaction, and
    /// cumulative fee series plus a JSON summary.
    Simulate {
        /// Scenario JSON file or a preset name (calm, blobscriptions,
        /// layerzero).
        #[arg(long)]
        scenario: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario horizon in slots.
        #[arg(long)]
        slots: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also price every slot under both greedy and optimal packing.
        #[arg(long)]
        shadow_pricing: bool,
    },
    /// Classify blocks in a captured trace against the revenue-optimal
    /// packing of the concurrently visible mempool.
    Classify {
        /// Block trace CSV (one row per included blob transaction).
        #[arg(long)]
        blocks: PathBuf,
        /// Mempool dump CSV with first-seen timestamps.
        #[arg(long)]
        mempool: PathBuf,
        /// Minimum visibility lead, seconds.
        #[arg(long, default_value_t = 4)]
        min_lead: u64,
        /// Maximum transaction age, seconds.
        #[arg(long, default_value_t = 120)]
        max_age: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the share of included blob transactions that never appeared
    /// in the public mempool, per sender per day.
    PrivateShare {
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        mempool: PathBuf,
    },
}

fn load_scenario(spec: &str) -> Result<Scenario> {
    if Path::new(spec).exists() {
        let text = std::fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {spec}"))?)
    } else {
        Ok(preset(spec)?)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { scenario, seed, slots, out, shadow_pricing } => {
            let mut scenario = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            if let Some(slots) = slots {
                scenario.horizon_slots = slots;
            }
            let output = run(&scenario, shadow_pricing)?;
            let summary = summarize(&output);
            write_run(&out, &output, &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Classify { blocks, mempool, min_lead, max_age, out } => {
            let window = EligibilityWindow::from_seconds(min_lead, max_age);
            window.validate()?;
            let report = classify_trace_files(&blocks, &mempool, &window, 6)?;
            std::fs::create_dir_all(&out)?;
            write_audit_csv(
                std::fs::File::create(out.join("classification.csv"))?,
                &report.rows,
            )?;
            std::fs::write(
                out.join("summary.json"),
                serde_json::to_string_pretty(&report.summary)? + "\n",
            )?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
        }
        Command::PrivateShare { blocks, mempool } => {
            let (blocks, mut errors) = read_blocks_csv(std::fs::File::open(&blocks)?);
            let (mempool, mempool_errors) = read_mempool_csv(std::fs::File::open(&mempool)?);
            errors.extend(mempool_errors);
            for err in &errors {
                eprintln!("warning: line {}: {}", err.line, err.msg);
            }
            let rows = private_share(&blocks, &mempool, None);
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
    }
    Ok(())
}
