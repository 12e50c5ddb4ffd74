//! Command-line front end: synthetic dataset generation, deterministic
//! replays, evaluation report tables, and independent evidence verification.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/integrity error. The
//! `judge verify` subcommand instead exits 0 for not-proven, 10 for a proven
//! violation, and 2 on integrity errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use recaudit::error::Error;
use recaudit::harness::{
    bench_mpc, run_audit, run_replay, table_cluster_agreement, table_disjointness,
    table_group_proportions, table_success_rate, ExperimentConfig, ReportTable,
};
use recaudit::ingest::{synthesize_dataset, write_jsonl};
use recaudit::judge::{adjudicate, verify_evidence, Decision};
use recaudit::ledger::{Chain, EntryStore};
use recaudit::probing::Evidence;

#[derive(Parser)]
#[command(name = "recaudit", version, about = "Recommendation audit toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sparse rating dataset (JSONL).
    Synth {
        #[arg(long)]
        users: usize,
        #[arg(long)]
        items: usize,
        #[arg(long)]
        records: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        rating_levels: u32,
        #[arg(long, default_value_t = 1.1)]
        zipf_exponent: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a configured experiment and print a per-fraction summary.
    Replay {
        #[arg(long)]
        config: PathBuf,
        /// Also audit designated victims and write chain.json, entries.jsonl,
        /// and evidence.json for offline judge verification.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit an evaluation report table as CSV and aligned text.
    Report {
        #[command(subcommand)]
        table: ReportKind,
    },
    /// Independent verification of audit evidence against the ledger.
    Judge {
        #[command(subcommand)]
        action: JudgeAction,
    },
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ReportKind {
    /// Auxiliary vs platform-map cluster equality on probing targets.
    ClusterAgreement(ReportArgs),
    /// Proportion and history lengths of fully-contained (group-one) members.
    Groups(ReportArgs),
    /// Mean one-round detection rate over group-one victims.
    SuccessRate(ReportArgs),
    /// Share of probing targets disjoint from victims' history clusters.
    Disjointness(ReportArgs),
    /// Plaintext vs secret-shared similarity build timing and deviation.
    BenchMpc(ReportArgs),
}

#[derive(Subcommand)]
enum JudgeAction {
    Verify {
        /// JSON file: one evidence object or an array of them.
        #[arg(long)]
        evidence: PathBuf,
        /// JSON file holding the hash chain.
        #[arg(long)]
        chain: PathBuf,
        /// JSONL file of cleartext ledger entries.
        #[arg(long)]
        entries: PathBuf,
        /// Declared recommendation cluster size S.
        #[arg(long = "metadata-s")]
        metadata_s: usize,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let config: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    config.validate()?;
    Ok(config)
}

fn write_table(table: &ReportTable, out_dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(format!("{}.csv", table.name)), table.to_csv())?;
    std::fs::write(out_dir.join(format!("{}.txt", table.name)), table.to_text())?;
    println!("{}", table.to_text());
    Ok(())
}

fn cmd_replay(config_path: &Path, out: Option<&Path>) -> Result<(), Error> {
    let config = load_config(config_path)?;
    for fraction in config.community_fractions.clone() {
        let mut session = run_replay(&config, fraction)?;
        println!(
            "fraction {:.2}: members={} entries={} chain_head={} status={:?}",
            fraction,
            session.community.members.len(),
            session.chain.entry_count(),
            serde_json::to_string(&session.chain.head_hash())?,
            session.chain.verify(),
        );
        if let Some(dir) = out {
            let mut evidences = Vec::new();
            for (i, victim) in session.victims.clone().iter().enumerate() {
                let result = run_audit(&mut session, victim, config.community_seed + i as u64)?;
                println!(
                    "  victim {}: {:?} after {} round(s), verdict {:?}",
                    victim,
                    result.outcome.status,
                    result.outcome.rounds_used,
                    result.verdict.decision
                );
                evidences.extend(result.outcome.evidences);
            }
            std::fs::create_dir_all(dir)?;
            let tag = format!("{:.2}", fraction).replace('.', "_");
            std::fs::write(
                dir.join(format!("chain_{tag}.json")),
                serde_json::to_string_pretty(&session.chain)?,
            )?;
            std::fs::write(dir.join(format!("entries_{tag}.jsonl")), session.store.to_jsonl()?)?;
            std::fs::write(
                dir.join(format!("evidence_{tag}.json")),
                serde_json::to_string_pretty(&evidences)?,
            )?;
        }
    }
    Ok(())
}

fn cmd_report(kind: &ReportKind) -> Result<(), Error> {
    let (args, build): (&ReportArgs, Box<dyn Fn(&ExperimentConfig, f64) -> Result<ReportTable, Error>>) =
        match kind {
            ReportKind::ClusterAgreement(a) => (
                a,
                Box::new(|config, fraction| {
                    let mut config = config.clone();
                    config.maintain_oracle = true;
                    let session = run_replay(&config, fraction)?;
                    let oracle = session.oracle.as_ref().ok_or_else(|| {
                        Error::Config("oracle community unavailable".into())
                    })?;
                    Ok(table_cluster_agreement(&session.community, oracle))
                }),
            ),
            ReportKind::Groups(a) => (
                a,
                Box::new(|config, fraction| {
                    let session = run_replay(config, fraction)?;
                    Ok(table_group_proportions(&session.community))
                }),
            ),
            ReportKind::SuccessRate(a) => (
                a,
                Box::new(|config, fraction| {
                    let session = run_replay(config, fraction)?;
                    table_success_rate(&session)
                }),
            ),
            ReportKind::Disjointness(a) => (
                a,
                Box::new(|config, fraction| {
                    let session = run_replay(config, fraction)?;
                    table_disjointness(&session.community)
                }),
            ),
            ReportKind::BenchMpc(a) => (a, Box::new(bench_mpc)),
        };
    let config = load_config(&args.config)?;
    let mut merged: Option<ReportTable> = None;
    for fraction in config.community_fractions.clone() {
        let mut table = build(&config, fraction)?;
        for row in &mut table.rows {
            row.insert(0, format!("{:.2}", fraction));
        }
        match merged.as_mut() {
            None => {
                table.headers.insert(0, "fraction".into());
                merged = Some(table);
            }
            Some(m) => m.rows.extend(table.rows),
        }
    }
    write_table(&merged.expect("at least one fraction"), &args.out)
}

fn cmd_judge_verify(
    evidence_path: &Path,
    chain_path: &Path,
    entries_path: &Path,
    metadata_s: usize,
) -> Result<Decision, Error> {
    let evidence_text = std::fs::read_to_string(evidence_path)?;
    let evidences: Vec<Evidence> = match serde_json::from_str::<Vec<Evidence>>(&evidence_text) {
        Ok(list) => list,
        Err(_) => vec![serde_json::from_str(&evidence_text)?],
    };
    let chain: Chain = serde_json::from_str(&std::fs::read_to_string(chain_path)?)?;
    let store = EntryStore::from_jsonl(&std::fs::read_to_string(entries_path)?)?;
    let basis = evidences
        .iter()
        .enumerate()
        .map(|(i, ev)| verify_evidence(i, ev, &chain, &store, metadata_s))
        .collect();
    let verdict = adjudicate(basis, metadata_s);
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    Ok(verdict.decision)
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) | Error::FractionOutOfRange(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<ExitCode, Error> = match &cli.command {
        Command::Synth {
            users,
            items,
            records,
            seed,
            rating_levels,
            zipf_exponent,
            out,
        } => (|| {
            let data =
                synthesize_dataset(*users, *items, *records, *rating_levels, *zipf_exponent, *seed)?;
            std::fs::write(out, write_jsonl(&data))?;
            println!("wrote {} records to {}", data.len(), out.display());
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Replay { config, out } => {
            cmd_replay(config, out.as_deref()).map(|()| ExitCode::SUCCESS)
        }
        Command::Report { table } => cmd_report(table).map(|()| ExitCode::SUCCESS),
        Command::Judge {
            action:
                JudgeAction::Verify {
                    evidence,
                    chain,
                    entries,
                    metadata_s,
                },
        } => cmd_judge_verify(evidence, chain, entries, *metadata_s).map(|decision| {
            match decision {
                Decision::Violation => ExitCode::from(10),
                Decision::NotProven => ExitCode::SUCCESS,
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_for(&err)
        }
    }
}
