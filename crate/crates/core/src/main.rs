use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use blockprobe::cli::{
    cmd_build_library, cmd_decode, cmd_design, cmd_probe_op, cmd_run, cmd_sequence, cmd_verify, PipelineConfig,
    RunOutput,
};

/// Blocking-probe DNA computing simulator for graph 3-coloring.
#[derive(Parser)]
#[command(name = "blockprobe", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input graph (DIMACS), overriding `graph`.
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Worker threads, overriding `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Design codewords, splints and probes; write FASTA and a scheme manifest.
    Design,
    /// Assemble half-libraries, bridge them and convert to ssDNA.
    BuildLibrary,
    /// Run the probe operation up to PCR.
    ProbeOp,
    /// Simulate sequencing of the amplified pool.
    Sequence,
    /// Decode reads from FASTQ and report against the oracle.
    Decode {
        #[arg(long)]
        reads: PathBuf,
    },
    /// Diff a report's accepted solutions against the oracle.
    Verify {
        #[arg(long)]
        report: PathBuf,
    },
    /// The whole pipeline, gated by oracle verification.
    Run,
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(graph) = &g.graph {
        cfg.graph = Some(graph.clone());
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: &PipelineConfig) -> PathBuf {
    g.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn finish_run(run: RunOutput, out: &Path) -> ExitCode {
    print!("{}", run.report.to_table());
    println!("oracle solutions: {}", run.oracle.len());
    if run.diff.is_empty() {
        println!("verification: accepted set equals the oracle set");
    } else {
        println!("verification: MISMATCH");
        print!("{}", run.diff.render());
    }
    println!("outputs in {}", out.display());
    ExitCode::from(run.exit_code() as u8)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            // library errors already carry their cause in the message
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli.global)?;
    let out = out_dir(&cli.global, &cfg);
    match cli.command {
        Command::Design => {
            let (d, _) = cmd_design(cfg, Some(out.clone()))?;
            println!(
                "{} codewords, {} splints, {} blocking probes, {} selection probes",
                d.scheme.all_codewords().count(),
                d.splints.len(),
                d.blocking.len(),
                d.selection.len()
            );
            println!("outputs in {}", out.display());
        }
        Command::BuildLibrary => {
            let (lib, _) = cmd_build_library(cfg, Some(out.clone()))?;
            for (k, h) in lib.halves.iter().enumerate() {
                println!("half-library {}: {} strands", k + 1, h.len());
            }
            println!("full library: {} strands", lib.full.n_strands());
            println!("ssDNA yield {:.3}, purity {:.3}", lib.ssdna.yield_fraction, lib.ssdna.purity);
        }
        Command::ProbeOp => {
            let (op, _) = cmd_probe_op(cfg, Some(out.clone()))?;
            println!("{} strands, {} paperclipped", op.strands, op.paperclips);
            println!("{} truncated products, {} full products selected", op.residue.entries, op.selected.len());
            println!("PCR: {} cycles, {} amplified entries", op.cycles, op.amplified.len());
        }
        Command::Sequence => {
            let (reads, _) = cmd_sequence(cfg, Some(out.clone()))?;
            println!("{} reads written to {}", reads.len(), out.join("reads.fastq").display());
        }
        Command::Decode { reads } => {
            let run = cmd_decode(cfg, &reads, Some(out.clone()))?;
            return Ok(finish_run(run, &out));
        }
        Command::Verify { report } => {
            let graph = cfg.graph.clone().context("verify needs a graph: pass --graph or set `graph` in the config")?;
            let diff = cmd_verify(&report, &graph)?;
            print!("{}", diff.render());
            println!(
                "{} soundness violations, {} completeness misses",
                diff.soundness_violations.len(),
                diff.completeness_misses.len()
            );
            return Ok(ExitCode::from(diff.exit_code() as u8));
        }
        Command::Run => {
            let run = cmd_run(cfg, Some(out.clone()))?;
            return Ok(finish_run(run, &out));
        }
    }
    Ok(ExitCode::SUCCESS)
}
