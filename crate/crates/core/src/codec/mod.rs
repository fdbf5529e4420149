//! DNA sequence design: oligos, sequence screening heuristics, the encoding
//! scheme mapping (path position, color) to codewords, and the splint and
//! probe sets derived from it.

mod design;
mod probes;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use design::{generate_codewords, DesignConstraints, EncodingScheme};
pub(crate) use probes::junction;
pub use probes::{
    build_blocking_probes, build_edge_splints, build_selection_probe, build_selection_probes, design_fasta,
    splints_for_positions,
    BlockingProbeSeq, SelectionProbeSeq, Splint,
};

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("empty oligo")]
    Empty,
    #[error("invalid base `{0}` (expected A, C, G or T)")]
    InvalidBase(char),
    #[error(
        "design exhausted after {attempts} candidate draws ({accepted}/{needed} {what} accepted); \
         most frequent rejection: {constraint}"
    )]
    DesignExhausted { attempts: u64, accepted: usize, needed: usize, what: &'static str, constraint: String },
    #[error("scheme has no codewords for the terminal position")]
    MissingTerminalCodewords,
    #[error("scheme covers {have} positions, {need} required")]
    SchemeTooShort { have: usize, need: usize },
    #[error("anchor length {anchor} must be shorter than codeword length {codeword}")]
    AnchorTooLong { anchor: usize, codeword: usize },
    #[error("invalid design constraint: {0}")]
    InvalidConstraint(String),
}

/// A DNA oligonucleotide over `{A, C, G, T}`, stored 5' to 3'.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Oligo(Vec<u8>);

impl Oligo {
    pub fn new(bases: impl Into<Vec<u8>>) -> Result<Self, CodecError> {
        let bases = bases.into();
        if bases.is_empty() {
            return Err(CodecError::Empty);
        }
        if let Some(&b) = bases.iter().find(|&&b| !matches!(b, b'A' | b'C' | b'G' | b'T')) {
            return Err(CodecError::InvalidBase(b as char));
        }
        Ok(Oligo(bases))
    }

    /// Caller guarantees the alphabet and non-emptiness.
    pub(crate) fn from_vec_unchecked(bases: Vec<u8>) -> Self {
        debug_assert!(!bases.is_empty() && bases.iter().all(|b| b"ACGT".contains(b)));
        Oligo(bases)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(parts: &[&Oligo]) -> Oligo {
        Oligo(parts.iter().flat_map(|o| o.0.iter().copied()).collect())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Oligo {
        Oligo::from_vec_unchecked(self.0[range].to_vec())
    }

    pub fn gc_count(&self) -> usize {
        self.0.iter().filter(|&&b| b == b'G' || b == b'C').count()
    }

    pub fn gc_fraction(&self) -> f64 {
        self.gc_count() as f64 / self.len() as f64
    }

    /// Length of the longest single-base run.
    pub fn max_homopolymer(&self) -> usize {
        max_homopolymer(&self.0)
    }
}

impl fmt::Display for Oligo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(std::str::from_utf8(&self.0).expect("ACGT is ascii"))
    }
}

impl FromStr for Oligo {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Oligo::new(s.as_bytes().to_vec())
    }
}

pub fn complement(b: u8) -> u8 {
    match b {
        b'A' => b'T',
        b'T' => b'A',
        b'C' => b'G',
        b'G' => b'C',
        other => other,
    }
}

pub fn revcomp_bytes(seq: &[u8]) -> Vec<u8> {
    seq.iter().rev().map(|&b| complement(b)).collect()
}

/// Watson-Crick reverse complement.
pub fn revcomp(o: &Oligo) -> Oligo {
    Oligo(revcomp_bytes(&o.0))
}

pub(crate) fn max_homopolymer(seq: &[u8]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for (k, &b) in seq.iter().enumerate() {
        run = if k > 0 && seq[k - 1] == b { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

/// Melting temperature estimate in °C: Wallace rule up to 14 nt, the
/// GC-content formula above that.
pub fn tm_estimate(o: &Oligo) -> f64 {
    let gc = o.gc_count() as f64;
    let at = (o.len() - o.gc_count()) as f64;
    if o.len() <= 14 {
        2.0 * at + 4.0 * gc
    } else {
        64.9 + 41.0 * (gc - 16.4) / o.len() as f64
    }
}

/// Longest `L` such that some `L`-substring of `a` is the reverse complement
/// of some `L`-substring of `b`.
pub fn cross_hyb_run(a: &Oligo, b: &Oligo) -> usize {
    longest_common_substring(&a.0, &revcomp_bytes(&b.0))
}

fn longest_common_substring(a: &[u8], b: &[u8]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

fn base_code(b: u8) -> u64 {
    match b {
        b'A' => 0,
        b'C' => 1,
        b'G' => 2,
        _ => 3,
    }
}

/// Counts hairpin stem candidates: position pairs `(i, j)` where the
/// `min_stem`-long window at `i` pairs with the window at `j`, and the loop
/// between them spans at least `min_loop` bases.
pub fn hairpin_score(o: &Oligo, min_stem: usize, min_loop: usize) -> usize {
    let seq = &o.0;
    if min_stem == 0 || seq.len() < 2 * min_stem + min_loop {
        return 0;
    }
    if min_stem > 31 {
        return hairpin_score_naive(seq, min_stem, min_loop);
    }
    let windows = seq.len() - min_stem + 1;
    let mask = (1u64 << (2 * min_stem)) - 1;
    let mut fwd = Vec::with_capacity(windows);
    let mut rc = Vec::with_capacity(windows);
    let (mut f, mut r) = (0u64, 0u64);
    let shift = 2 * (min_stem as u64 - 1);
    for (k, &b) in seq.iter().enumerate() {
        let c = base_code(b);
        f = ((f << 2) | c) & mask;
        r = (r >> 2) | ((3 - c) << shift);
        if k + 1 >= min_stem {
            fwd.push(f);
            rc.push(r);
        }
    }
    // windows j pair with i when fwd[i] == rc[j] and j >= i + min_stem + min_loop
    let gap = min_stem + min_loop;
    let mut counts: HashMap<u64, usize> = HashMap::new();
    let mut total = 0;
    let mut next_j = windows;
    for i in (0..windows).rev() {
        while next_j > i + gap {
            next_j -= 1;
            *counts.entry(rc[next_j]).or_default() += 1;
        }
        total += counts.get(&fwd[i]).copied().unwrap_or(0);
    }
    total
}

pub(crate) fn hairpin_score_naive(seq: &[u8], min_stem: usize, min_loop: usize) -> usize {
    let mut total = 0;
    for i in 0..seq.len() {
        for j in i + min_stem + min_loop..seq.len() {
            if j + min_stem > seq.len() {
                break;
            }
            if (0..min_stem).all(|k| seq[i + k] == complement(seq[j + min_stem - 1 - k])) {
                total += 1;
            }
        }
    }
    total
}

/// Hairpin stem candidates per nucleotide (stem 4, loop 3), capped at 1.
pub fn hairpin_density(o: &Oligo) -> f64 {
    (hairpin_score(o, 4, 3) as f64 / o.len() as f64).min(1.0)
}
