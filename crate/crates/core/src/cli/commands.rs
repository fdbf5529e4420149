//! Pipeline stages behind each subcommand, snapshot writing and the run
//! manifest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, DecodeMode, PipelineConfig};
use super::stage_map::STAGE_MAP;
use crate::codec::{
    build_blocking_probes, build_edge_splints, build_selection_probes, design_fasta, generate_codewords,
    BlockingProbeSeq, CodecError, EncodingScheme, SelectionProbeSeq, Splint,
};
use crate::graph::{conflict_pairs, oracle_solutions, parse_dimacs, path_feasible_count, Color, Coloring, ConflictPair, Graph, GraphError};
use crate::library::{
    assemble_half_library, bridge_libraries, render_sequence, to_ssdna, Library, LibraryError, SsdnaOutcome, StrandPool,
};
use crate::probeop::{run_probe_operation, ProbeOpError, ProbeOpOutcome};
use crate::rng::derive_seed;
use crate::seqsim::{
    build_report, decode_read_candidates, decode_reads, simulate_reads, to_fastq, Decoded, Read, SeqSimError,
    SolutionReport,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no input graph: set `graph` in the config or pass --graph")]
    MissingGraph,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("design: {0}")]
    Codec(#[from] CodecError),
    #[error("library: {0}")]
    Library(#[from] LibraryError),
    #[error("probe operation: {0}")]
    ProbeOp(#[from] ProbeOpError),
    #[error("sequencing: {0}")]
    SeqSim(#[from] SeqSimError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("graph has {n} vertices but the scheme covers {positions} positions")]
    SchemeMismatch { n: usize, positions: usize },
    #[error("candidate decoding enumerates 3·2^(n−1) colorings and is limited to n ≤ {max}; got n = {n}")]
    CandidateSpaceTooLarge { n: usize, max: usize },
    #[error("cannot build a worker pool: {0}")]
    Threads(String),
}

const CANDIDATE_MAX_N: usize = 8;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn read_graph(path: &Path) -> Result<Graph, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_dimacs(&text)?.ensure_path()?)
}

/// Sub-seeds of the master seed, one per stochastic stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub design: u64,
    pub library: u64,
    pub probe_operation: u64,
    pub sequencing: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        Seeds {
            master,
            design: derive_seed(master, "design"),
            library: derive_seed(master, "library"),
            probe_operation: derive_seed(master, "probe-operation"),
            sequencing: derive_seed(master, "sequencing"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub entries: u128,
    pub copies: f64,
    pub snapshot: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentRecord {
    pub symbol: &'static str,
    pub component: &'static str,
    pub stage: &'static str,
    pub snapshots: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub path: Option<PathBuf>,
    pub vertices: usize,
    pub edges: usize,
    pub conflict_pairs: usize,
    pub ham_path: Vec<usize>,
    pub path_feasible: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutcomeRecord {
    pub oracle_solutions: usize,
    pub accepted: usize,
    pub soundness_violations: Vec<Coloring>,
    pub completeness_misses: Vec<Coloring>,
    pub exit_code: i32,
}

/// Run manifest: configuration, seeds, per-stage counts and the files each
/// probe-machine component produced.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seeds: Seeds,
    pub config: PipelineConfig,
    pub graph: GraphSummary,
    pub components: Vec<ComponentRecord>,
    pub stages: Vec<StageRecord>,
    pub notes: Vec<String>,
    pub outcome: Option<OutcomeRecord>,
}

const SUB_BAND_NOTE: &str = "extension products are modeled as full or truncated only; the two unidentified \
                             sub-bands below the single-strand band are not reproduced";

/// Set differences between accepted colorings and the oracle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyDiff {
    /// Accepted but not a proper coloring.
    pub soundness_violations: Vec<Coloring>,
    /// Proper colorings that were not accepted.
    pub completeness_misses: Vec<Coloring>,
}

impl VerifyDiff {
    pub fn new(accepted: &BTreeSet<Coloring>, oracle: &BTreeSet<Coloring>) -> Self {
        VerifyDiff {
            soundness_violations: accepted.difference(oracle).cloned().collect(),
            completeness_misses: oracle.difference(accepted).cloned().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.soundness_violations.is_empty() && self.completeness_misses.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.soundness_violations {
            out.push_str(&format!("+ {c}\tsoundness violation (accepted, not a proper coloring)\n"));
        }
        for c in &self.completeness_misses {
            out.push_str(&format!("- {c}\tcompleteness miss (proper coloring, not accepted)\n"));
        }
        out
    }
}

pub struct DesignOutput {
    pub scheme: EncodingScheme,
    pub pairs: Vec<ConflictPair>,
    pub splints: Vec<Splint>,
    pub blocking: Vec<BlockingProbeSeq>,
    pub selection: Vec<SelectionProbeSeq>,
}

#[derive(Serialize)]
struct SchemeManifest<'a> {
    n_positions: usize,
    codeword_len: usize,
    codewords: Vec<(usize, Color, String)>,
    tag: String,
    free_spacer: String,
    fwd_primer: String,
    rev_primer: String,
    splints: usize,
    conflict_pairs: &'a [ConflictPair],
    blocking_probes: &'a [BlockingProbeSeq],
    selection_probes: &'a [SelectionProbeSeq],
    violations: Vec<String>,
}

pub struct LibraryOutput {
    pub halves: Vec<StrandPool>,
    pub full: Library,
    pub ssdna: SsdnaOutcome,
}

pub struct RunOutput {
    pub report: SolutionReport,
    pub oracle: BTreeSet<Coloring>,
    pub diff: VerifyDiff,
    pub manifest: Manifest,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.diff.exit_code()
    }
}

/// One pipeline invocation: configuration, input graph and an optional
/// output directory for snapshots.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub graph: Graph,
    pub out: Option<PathBuf>,
    pub seeds: Seeds,
    stages: Vec<StageRecord>,
    snapshots: Vec<(&'static str, String)>,
    notes: Vec<String>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, graph: Graph, out: Option<PathBuf>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let seeds = Seeds::new(cfg.seed);
        Ok(Pipeline { cfg, graph, out, seeds, stages: Vec::new(), snapshots: Vec::new(), notes: Vec::new() })
    }

    /// Loads the graph named by the config.
    pub fn from_config(cfg: PipelineConfig, out: Option<PathBuf>) -> Result<Self, PipelineError> {
        let path = cfg.graph.clone().ok_or(PipelineError::MissingGraph)?;
        let graph = read_graph(&path)?;
        Pipeline::new(cfg, graph, out)
    }

    /// Runs `f` on a worker pool sized by `threads`.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| PipelineError::Threads(e.to_string()))?;
        Ok(pool.install(f))
    }

    fn write(&mut self, components: &[&'static str], name: &str, contents: &str) -> Result<Option<String>, PipelineError> {
        let Some(dir) = &self.out else { return Ok(None) };
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))?;
        for c in components {
            self.snapshots.push((c, name.to_string()));
        }
        Ok(Some(name.to_string()))
    }

    fn record(&mut self, stage: &str, entries: u128, copies: f64, snapshot: Option<String>) {
        self.stages.push(StageRecord { stage: stage.to_string(), entries, copies, snapshot });
    }

    fn write_pool(&mut self, components: &[&'static str], name: &str, pool: &StrandPool, scheme: &EncodingScheme) -> Result<(), PipelineError> {
        let snap = if self.out.is_some() { self.write(components, name, &pool.to_tsv(scheme))? } else { None };
        self.record(&pool.stage, pool.len() as u128, pool.total_copies(), snap);
        Ok(())
    }

    pub fn design(&mut self) -> Result<DesignOutput, PipelineError> {
        let n = self.graph.n();
        let scheme = generate_codewords(n, &self.cfg.codec, self.seeds.design)?;
        let path = self.graph.ham_path().ok_or(GraphError::MissingPath)?.to_vec();
        let pairs = conflict_pairs(&self.graph)?;
        let splints = build_edge_splints(&scheme, &path)?;
        let blocking = build_blocking_probes(&scheme, &pairs)?;
        let selection = build_selection_probes(&scheme)?;
        if self.out.is_some() {
            let fasta = design_fasta(&scheme, &splints, &blocking, &selection);
            self.write(&["Y", "σ2"], "design.fasta", &fasta)?;
            let manifest = SchemeManifest {
                n_positions: scheme.n_positions(),
                codeword_len: scheme.codeword_len(),
                codewords: scheme.all_codewords().map(|(p, c, w)| (p, c, w.to_string())).collect(),
                tag: scheme.tag.to_string(),
                free_spacer: scheme.free_spacer.to_string(),
                fwd_primer: scheme.fwd_primer.to_string(),
                rev_primer: scheme.rev_primer.to_string(),
                splints: splints.len(),
                conflict_pairs: &pairs,
                blocking_probes: &blocking,
                selection_probes: &selection,
                violations: scheme.violations(),
            };
            let json = serde_json::to_string_pretty(&manifest).expect("scheme manifest serializes");
            self.write(&["Y", "σ2"], "scheme.json", &json)?;
        }
        self.record("codewords", scheme.all_codewords().count() as u128, 0.0, None);
        self.record("splints", splints.len() as u128, 0.0, None);
        self.record("blocking probes", blocking.len() as u128, 0.0, None);
        self.record("selection probes", selection.len() as u128, 0.0, None);
        Ok(DesignOutput { scheme, pairs, splints, blocking, selection })
    }

    pub fn build_library(&mut self, d: &DesignOutput) -> Result<LibraryOutput, PipelineError> {
        let n = self.graph.n();
        if d.scheme.n_positions() != n {
            return Err(PipelineError::SchemeMismatch { n, positions: d.scheme.n_positions() });
        }
        let lp = self.cfg.library.params.clone();
        let seed = self.seeds.library;
        let (halves, full) = if n <= 3 {
            let g = assemble_half_library(&d.scheme, 0..=n.saturating_sub(1), &lp, derive_seed(seed, "g1"))?;
            (vec![g.clone()], Library::Pool(g.with_stage("full library")))
        } else {
            let mid = (n - 1) / 2;
            let (g1, g2) = self.install(|| {
                rayon::join(
                    || assemble_half_library(&d.scheme, 0..=mid, &lp, derive_seed(seed, "g1")),
                    || assemble_half_library(&d.scheme, mid..=n - 1, &lp, derive_seed(seed, "g2")),
                )
            })?;
            let (g1, g2) = (g1?, g2?);
            let full = bridge_libraries(&g1, &g2, &lp)?;
            (vec![g1, g2], full)
        };
        for (k, h) in halves.iter().enumerate() {
            self.write_pool(&["X", "σ1"], &format!("library_half{}.tsv", k + 1), h, &d.scheme)?;
        }
        let lc = self.cfg.library.clone();
        let ssdna = to_ssdna(&full, lc.digestion, lc.digestion_extent, &lc.yield_curve)?;
        for (name, lib) in [("library_full.tsv", &full), ("library_ss.tsv", &ssdna.library)] {
            match lib {
                Library::Pool(p) => self.write_pool(&["X", "σ1"], name, p, &d.scheme)?,
                Library::Product(p) => {
                    let stage = if name == "library_full.tsv" { "full library (product form)" } else { "ssDNA library (product form)" };
                    self.record(stage, p.n_strands(), p.total_copies(), None);
                }
            }
        }
        if matches!(full, Library::Product(_)) {
            self.notes.push(format!(
                "full library held in product form ({} strands > materialize_limit {}); full and ssDNA pools are \
                 summarized, not written",
                full.n_strands(),
                lc.params.materialize_limit
            ));
        }
        self.notes.push(format!(
            "ssDNA conversion: yield {:.3}, purity {:.3}",
            ssdna.yield_fraction, ssdna.purity
        ));
        Ok(LibraryOutput { halves, full, ssdna })
    }

    pub fn probe_operation(&mut self, d: &DesignOutput, lib: &LibraryOutput) -> Result<ProbeOpOutcome, PipelineError> {
        let cfg = self.cfg.protocol.clone();
        let pcr = self.cfg.pcr.clone();
        let seed = self.seeds.probe_operation;
        let out = self.install(|| {
            run_probe_operation(&lib.ssdna.library, &d.blocking, &d.selection, &cfg, &pcr, &d.scheme, seed)
        })??;
        self.record("paperclipped strands", out.paperclips, 0.0, None);
        match &out.extended {
            Some(ext) => self.write_pool(&["τ", "C"], "extended.tsv", ext, &d.scheme)?,
            None => {
                let snap = if self.out.is_some() {
                    let json = serde_json::to_string_pretty(&out.residue).expect("residue serializes");
                    self.write(&["τ", "C"], "residue.json", &json)?
                } else {
                    None
                };
                self.record("truncated products (streamed)", out.residue.entries, out.residue.copies, snap);
            }
        }
        self.write_pool(&["τ"], "selected.tsv", &out.selected, &d.scheme)?;
        self.write_pool(&["τ"], "amplified.tsv", &out.amplified, &d.scheme)?;
        self.notes.push(format!("PCR ran {} cycles", out.cycles));
        self.notes.push(SUB_BAND_NOTE.to_string());
        Ok(out)
    }

    /// Reads to draw: `n_reads`, raised so the rarest strand expects
    /// `coverage` reads, capped at `max_reads`.
    pub fn read_budget(&self, amplified: &StrandPool) -> usize {
        let s = &self.cfg.sequencing;
        let total = amplified.total_copies();
        let min = amplified.iter().map(|(_, a)| a).filter(|a| *a > 0.0).fold(f64::INFINITY, f64::min);
        let n = if s.coverage > 0.0 && min.is_finite() && total > 0.0 {
            s.n_reads.max((s.coverage * total / min).ceil() as usize)
        } else {
            s.n_reads
        };
        n.min(s.max_reads.max(s.n_reads))
    }

    pub fn sequence(&mut self, d: &DesignOutput, amplified: &StrandPool) -> Result<Vec<Read>, PipelineError> {
        if amplified.iter().all(|(_, a)| a <= 0.0) {
            self.notes.push("amplified pool is empty; sequencing skipped".into());
            self.record("reads", 0, 0.0, None);
            return Ok(Vec::new());
        }
        let n_reads = self.read_budget(amplified);
        let em = self.cfg.sequencing.error;
        let seed = self.seeds.sequencing;
        let reads = self.install(|| simulate_reads(amplified, n_reads, &em, &d.scheme, seed))??;
        let snap = if self.out.is_some() { self.write(&["η"], "reads.fastq", &to_fastq(&reads))? } else { None };
        self.record("reads", reads.len() as u128, 0.0, snap);
        Ok(reads)
    }

    pub fn decode(&mut self, d: &DesignOutput, reads: &[Read]) -> Result<Vec<Decoded>, PipelineError> {
        let band = self.cfg.sequencing.align_band;
        match self.cfg.sequencing.decode_mode {
            DecodeMode::Site => self.install(|| decode_reads(reads, &d.scheme, band)),
            DecodeMode::Candidates => {
                let n = self.graph.n();
                if n > CANDIDATE_MAX_N {
                    return Err(PipelineError::CandidateSpaceTooLarge { n, max: CANDIDATE_MAX_N });
                }
                let lp = crate::library::LibraryParams::default();
                let all = assemble_half_library(&d.scheme, 0..=n - 1, &lp, 0)?;
                let cands: Vec<(Coloring, crate::codec::Oligo)> = all
                    .iter()
                    .map(|(k, _)| (k.coloring.clone(), render_sequence(&k.coloring, &d.scheme)))
                    .collect();
                self.install(|| {
                    use rayon::prelude::*;
                    reads.par_iter().map(|r| decode_read_candidates(&r.bases, &cands)).collect()
                })
            }
        }
    }

    pub fn report(&mut self, decoded: &[Decoded], oracle: &BTreeSet<Coloring>) -> Result<SolutionReport, PipelineError> {
        let s = &self.cfg.sequencing;
        let report = build_report(decoded, oracle, s.min_reads, s.min_frac);
        if self.out.is_some() {
            self.write(&["Q", "C"], "report.json", &report.to_json())?;
            self.write(&["Q"], "report.txt", &report.to_table())?;
        }
        self.record("accepted solutions", report.solutions.len() as u128, 0.0, None);
        self.record("noise colorings", report.noise.len() as u128, 0.0, None);
        Ok(report)
    }

    pub fn oracle(&self) -> Result<BTreeSet<Coloring>, PipelineError> {
        Ok(oracle_solutions(&self.graph)?)
    }

    /// Assembles the manifest and, with an output directory, writes it.
    pub fn finish(&mut self, command: &str, outcome: Option<OutcomeRecord>) -> Result<Manifest, PipelineError> {
        if self.out.is_some() {
            self.snapshots.push(("λ", "manifest.json".into()));
        }
        let components = STAGE_MAP
            .iter()
            .map(|c| ComponentRecord {
                symbol: c.symbol,
                component: c.name,
                stage: c.stage,
                snapshots: self.snapshots.iter().filter(|(s, _)| *s == c.symbol).map(|(_, f)| f.clone()).collect(),
            })
            .collect();
        let g = &self.graph;
        let manifest = Manifest {
            command: command.to_string(),
            seeds: self.seeds,
            config: self.cfg.clone(),
            graph: GraphSummary {
                path: self.cfg.graph.clone(),
                vertices: g.n(),
                edges: g.edge_count(),
                conflict_pairs: conflict_pairs(g)?.len(),
                ham_path: g.ham_path().map(<[usize]>::to_vec).unwrap_or_default(),
                path_feasible: path_feasible_count(g)?,
            },
            components,
            stages: self.stages.clone(),
            notes: self.notes.clone(),
            outcome,
        };
        if let Some(dir) = &self.out {
            let path = dir.join("manifest.json");
            let json = serde_json::to_string_pretty(&manifest).map_err(|source| PipelineError::Json { path: path.clone(), source })?;
            std::fs::write(&path, json).map_err(io_err(&path))?;
        }
        Ok(manifest)
    }
}

pub fn cmd_design(cfg: PipelineConfig, out: Option<PathBuf>) -> Result<(DesignOutput, Manifest), PipelineError> {
    let mut p = Pipeline::from_config(cfg, out)?;
    let d = p.design()?;
    let m = p.finish("design", None)?;
    Ok((d, m))
}

pub fn cmd_build_library(cfg: PipelineConfig, out: Option<PathBuf>) -> Result<(LibraryOutput, Manifest), PipelineError> {
    let mut p = Pipeline::from_config(cfg, out)?;
    let d = p.design()?;
    let lib = p.build_library(&d)?;
    let m = p.finish("build-library", None)?;
    Ok((lib, m))
}

pub fn cmd_probe_op(cfg: PipelineConfig, out: Option<PathBuf>) -> Result<(ProbeOpOutcome, Manifest), PipelineError> {
    let mut p = Pipeline::from_config(cfg, out)?;
    let d = p.design()?;
    let lib = p.build_library(&d)?;
    let op = p.probe_operation(&d, &lib)?;
    let m = p.finish("probe-op", None)?;
    Ok((op, m))
}

pub fn cmd_sequence(cfg: PipelineConfig, out: Option<PathBuf>) -> Result<(Vec<Read>, Manifest), PipelineError> {
    let mut p = Pipeline::from_config(cfg, out)?;
    let d = p.design()?;
    let lib = p.build_library(&d)?;
    let op = p.probe_operation(&d, &lib)?;
    let reads = p.sequence(&d, &op.amplified)?;
    let m = p.finish("sequence", None)?;
    Ok((reads, m))
}

fn conclude(p: &mut Pipeline, command: &str, decoded: &[Decoded]) -> Result<RunOutput, PipelineError> {
    let oracle = p.oracle()?;
    let report = p.report(decoded, &oracle)?;
    let diff = VerifyDiff::new(&report.accepted(), &oracle);
    let outcome = OutcomeRecord {
        oracle_solutions: oracle.len(),
        accepted: report.solutions.len(),
        soundness_violations: diff.soundness_violations.clone(),
        completeness_misses: diff.completeness_misses.clone(),
        exit_code: diff.exit_code(),
    };
    let manifest = p.finish(command, Some(outcome))?;
    Ok(RunOutput { report, oracle, diff, manifest })
}

/// Decodes reads from FASTQ against the scheme designed from `cfg`.
pub fn cmd_decode(cfg: PipelineConfig, reads_path: &Path, out: Option<PathBuf>) -> Result<RunOutput, PipelineError> {
    let text = std::fs::read_to_string(reads_path).map_err(io_err(reads_path))?;
    let reads = crate::seqsim::parse_fastq(&text)?;
    let mut p = Pipeline::from_config(cfg, out)?;
    let d = p.design()?;
    p.record("reads", reads.len() as u128, 0.0, None);
    let decoded = p.decode(&d, &reads)?;
    conclude(&mut p, "decode", &decoded)
}

/// The whole pipeline on an already loaded graph.
pub fn run_pipeline(cfg: PipelineConfig, graph: Graph, out: Option<PathBuf>) -> Result<RunOutput, PipelineError> {
    let mut p = Pipeline::new(cfg, graph, out)?;
    let d = p.design()?;
    let lib = p.build_library(&d)?;
    let op = p.probe_operation(&d, &lib)?;
    let reads = p.sequence(&d, &op.amplified)?;
    let decoded = p.decode(&d, &reads)?;
    conclude(&mut p, "run", &decoded)
}

pub fn cmd_run(cfg: PipelineConfig, out: Option<PathBuf>) -> Result<RunOutput, PipelineError> {
    let path = cfg.graph.clone().ok_or(PipelineError::MissingGraph)?;
    let graph = read_graph(&path)?;
    run_pipeline(cfg, graph, out)
}

/// Set diff between a saved report's accepted colorings and the oracle.
pub fn cmd_verify(report_path: &Path, graph_path: &Path) -> Result<VerifyDiff, PipelineError> {
    let text = std::fs::read_to_string(report_path).map_err(io_err(report_path))?;
    let report: SolutionReport =
        serde_json::from_str(&text).map_err(|source| PipelineError::Json { path: report_path.to_path_buf(), source })?;
    let oracle = oracle_solutions(&read_graph(graph_path)?)?;
    Ok(VerifyDiff::new(&report.accepted(), &oracle))
}
