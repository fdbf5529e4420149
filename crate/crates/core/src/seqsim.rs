//! Sequencing readout: reads drawn from the amplified pool through a
//! substitution/insertion/deletion channel, site-wise decoding back to
//! colorings, and the final solution report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{EncodingScheme, Oligo};
use crate::graph::{Color, Coloring};
use crate::library::{render_segment, StrandPool};
use crate::rng::KeyedStreams;

#[derive(Debug, Error, PartialEq)]
pub enum SeqSimError {
    #[error("cannot sequence an empty pool")]
    EmptyPool,
    #[error("invalid error model: {0}")]
    InvalidErrorModel(String),
    #[error("malformed FASTQ at line {line}: {reason}")]
    MalformedFastq { line: usize, reason: String },
}

/// Per-base error probabilities of the sequencing channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub sub_rate: f64,
    pub ins_rate: f64,
    pub del_rate: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel { sub_rate: 0.03, ins_rate: 0.03, del_rate: 0.04 }
    }
}

impl ErrorModel {
    pub const NONE: ErrorModel = ErrorModel { sub_rate: 0.0, ins_rate: 0.0, del_rate: 0.0 };

    pub fn validate(&self) -> Result<(), SeqSimError> {
        for (name, r) in [("sub_rate", self.sub_rate), ("ins_rate", self.ins_rate), ("del_rate", self.del_rate)] {
            if !(0.0..0.5).contains(&r) {
                return Err(SeqSimError::InvalidErrorModel(format!("{name} = {r} outside [0, 0.5)")));
            }
        }
        if self.sub_rate + self.ins_rate + self.del_rate >= 1.0 {
            return Err(SeqSimError::InvalidErrorModel("rates must sum to less than 1".into()));
        }
        Ok(())
    }

    /// Passes `seq` through the channel. Each base is deleted or substituted,
    /// then followed by a random insertion with probability `ins_rate`.
    pub fn apply(&self, seq: &[u8], rng: &mut impl Rng) -> Vec<u8> {
        let mut out = Vec::with_capacity(seq.len() + seq.len() / 8);
        for &b in seq {
            let u: f64 = rng.random();
            if u < self.del_rate {
            } else if u < self.del_rate + self.sub_rate {
                let others: Vec<u8> = b"ACGT".iter().copied().filter(|&x| x != b).collect();
                out.push(others[rng.random_range(0..3)]);
            } else {
                out.push(b);
            }
            if self.ins_rate > 0.0 && rng.random::<f64>() < self.ins_rate {
                out.push(b"ACGT"[rng.random_range(0..4)]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Read {
    pub read_id: String,
    pub bases: Oligo,
    /// Ground truth; `None` for reads loaded from FASTQ.
    pub origin: Option<Coloring>,
}

/// Draws `n_reads` reads with probability proportional to abundance. Read
/// `k` uses its own keyed stream, so output is independent of scheduling.
pub fn simulate_reads(
    pool: &StrandPool,
    n_reads: usize,
    em: &ErrorModel,
    scheme: &EncodingScheme,
    seed: u64,
) -> Result<Vec<Read>, SeqSimError> {
    em.validate()?;
    let strands: Vec<(&Coloring, Oligo)> = pool
        .iter()
        .filter(|(_, a)| *a > 0.0)
        .map(|(k, _)| (&k.coloring, render_segment(k.start, &k.coloring, scheme)))
        .collect();
    if strands.is_empty() {
        return Err(SeqSimError::EmptyPool);
    }
    let cumulative: Vec<f64> = pool
        .iter()
        .filter(|(_, a)| *a > 0.0)
        .scan(0.0, |acc, (_, a)| {
            *acc += a;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("non-empty");
    let streams = KeyedStreams::new(seed);
    Ok((0..n_reads)
        .into_par_iter()
        .map(|k| {
            let mut rng = streams.stream(k as u64);
            let u = rng.random::<f64>() * total;
            let idx = cumulative.partition_point(|&c| c <= u).min(strands.len() - 1);
            let (coloring, seq) = &strands[idx];
            let bases = loop {
                let b = em.apply(seq.as_bytes(), &mut rng);
                if !b.is_empty() {
                    break b;
                }
            };
            Read {
                read_id: format!("read_{k}"),
                bases: Oligo::new(bases).expect("channel emits ACGT"),
                origin: Some((*coloring).clone()),
            }
        })
        .collect())
}

/// Fitting alignment of `pattern` against any substring of `text`, by
/// Myers' bit-parallel algorithm for patterns up to 64 nt. Returns the
/// minimal edit distance and the earliest end index in `text` (exclusive)
/// achieving it.
pub fn fitting_distance(pattern: &[u8], text: &[u8]) -> (usize, usize) {
    let m = pattern.len();
    if m == 0 {
        return (0, 0);
    }
    if m > 64 {
        return fitting_distance_long(pattern, text);
    }
    let mut peq = [0u64; 256];
    for (i, &c) in pattern.iter().enumerate() {
        peq[c as usize] |= 1 << i;
    }
    let high = 1u64 << (m - 1);
    let mut vp = if m == 64 { !0 } else { (1u64 << m) - 1 };
    let mut vn = 0u64;
    let mut score = m;
    let mut best = (m, 0);
    for (j, &c) in text.iter().enumerate() {
        let eq = peq[c as usize];
        let xv = eq | vn;
        let xh = ((eq & vp).wrapping_add(vp) ^ vp) | eq;
        let mut ph = vn | !(xh | vp);
        let mut mh = vp & xh;
        if ph & high != 0 {
            score += 1;
        } else if mh & high != 0 {
            score -= 1;
        }
        ph <<= 1;
        mh <<= 1;
        vp = mh | !(xv | ph);
        vn = ph & xv;
        if score < best.0 {
            best = (score, j + 1);
        }
    }
    best
}

fn fitting_distance_long(pattern: &[u8], text: &[u8]) -> (usize, usize) {
    let m = pattern.len();
    let mut col: Vec<usize> = (0..=m).collect();
    let mut next = vec![0; m + 1];
    let mut best = (m, 0);
    for (j, &t) in text.iter().enumerate() {
        for i in 1..=m {
            next[i] = (col[i - 1] + usize::from(pattern[i - 1] != t)).min(col[i] + 1).min(next[i - 1] + 1);
        }
        std::mem::swap(&mut col, &mut next);
        if col[m] < best.0 {
            best = (col[m], j + 1);
        }
    }
    best
}

/// Outcome of decoding one read.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Decoded {
    Coloring(Coloring),
    Ambiguous,
}

/// Largest accepted edit distance for a site.
pub const MAX_SITE_EDITS: usize = 6;
/// Required gap between the best and runner-up colors at a site.
pub const MIN_SITE_MARGIN: usize = 3;

/// Site-wise decoding. Each position's three codewords are aligned inside
/// `±align_band` nt of the expected site start, which tracks the end of the
/// previous site's best hit.
pub fn decode_read(read: &Oligo, scheme: &EncodingScheme, align_band: usize) -> Decoded {
    let bases = read.as_bytes();
    let l = scheme.codeword_len();
    let mut offset = 0usize;
    let mut colors = Vec::with_capacity(scheme.n_positions());
    for p in 0..scheme.n_positions() {
        let lo = offset.saturating_sub(align_band);
        let hi = (offset + l + align_band).min(bases.len());
        if lo >= hi {
            return Decoded::Ambiguous;
        }
        let window = &bases[lo..hi];
        let mut hits: Vec<(usize, usize, Color)> = Color::ALL
            .into_iter()
            .map(|c| {
                let (d, end) = fitting_distance(scheme.codeword(p, c).as_bytes(), window);
                (d, end, c)
            })
            .collect();
        hits.sort();
        if hits[0].0 > MAX_SITE_EDITS || hits[1].0 < hits[0].0 + MIN_SITE_MARGIN {
            return Decoded::Ambiguous;
        }
        colors.push(hits[0].2);
        offset = lo + hits[0].1;
    }
    Decoded::Coloring(Coloring(colors))
}

pub fn decode_reads(reads: &[Read], scheme: &EncodingScheme, align_band: usize) -> Vec<Decoded> {
    reads.par_iter().map(|r| decode_read(&r.bases, scheme, align_band)).collect()
}

/// Global edit distance.
pub fn edit_distance(a: &[u8], b: &[u8]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Whole-read alignment against an explicit candidate list, for small
/// instances. Accepts the nearest candidate when it is within a quarter of
/// the read length and at least `MIN_SITE_MARGIN` closer than the next.
pub fn decode_read_candidates(read: &Oligo, candidates: &[(Coloring, Oligo)]) -> Decoded {
    let mut d: Vec<(usize, &Coloring)> =
        candidates.iter().map(|(c, s)| (edit_distance(read.as_bytes(), s.as_bytes()), c)).collect();
    d.sort();
    match d.as_slice() {
        [] => Decoded::Ambiguous,
        [(best, c), rest @ ..] => {
            let margin_ok = rest.first().is_none_or(|(next, _)| *next >= best + MIN_SITE_MARGIN);
            if *best * 4 <= read.len() && margin_ok {
                Decoded::Coloring((*c).clone())
            } else {
                Decoded::Ambiguous
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub coloring: Coloring,
    pub count: usize,
    pub pct: f64,
    pub oracle_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub total_reads: usize,
    /// Accepted colorings, most reads first.
    pub solutions: Vec<ReportEntry>,
    /// Decoded colorings below the acceptance thresholds.
    pub noise: Vec<ReportEntry>,
    pub ambiguous_count: usize,
    /// Share of all reads that decode to accepted oracle solutions.
    pub valid_fraction: f64,
}

impl SolutionReport {
    pub fn accepted(&self) -> BTreeSet<Coloring> {
        self.solutions.iter().map(|e| e.coloring.clone()).collect()
    }

    /// Accepted colorings that are not oracle solutions.
    pub fn soundness_violations(&self) -> Vec<&Coloring> {
        self.solutions.iter().filter(|e| !e.oracle_valid).map(|e| &e.coloring).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("total reads: {}\n", self.total_reads);
        let _ = writeln!(out, "{:<32} {:>8} {:>8}  oracle", "coloring", "reads", "pct");
        for e in &self.solutions {
            let _ = writeln!(out, "{:<32} {:>8} {:>7.2}%  {}", e.coloring.to_string(), e.count, e.pct, if e.oracle_valid { "yes" } else { "NO" });
        }
        let noise_reads: usize = self.noise.iter().map(|e| e.count).sum();
        let _ = writeln!(out, "noise: {} colorings, {} reads", self.noise.len(), noise_reads);
        let _ = writeln!(out, "ambiguous: {} reads", self.ambiguous_count);
        let _ = writeln!(out, "valid fraction: {:.2}%", 100.0 * self.valid_fraction);
        out
    }
}

/// Tallies decoded reads. A coloring is accepted when it has at least
/// `min_reads` reads and at least `min_frac` of all reads.
pub fn build_report(decoded: &[Decoded], oracle: &BTreeSet<Coloring>, min_reads: usize, min_frac: f64) -> SolutionReport {
    let total_reads = decoded.len();
    let mut counts: BTreeMap<&Coloring, usize> = BTreeMap::new();
    let mut ambiguous_count = 0;
    for d in decoded {
        match d {
            Decoded::Coloring(c) => *counts.entry(c).or_default() += 1,
            Decoded::Ambiguous => ambiguous_count += 1,
        }
    }
    let pct = |count: usize| if total_reads == 0 { 0.0 } else { 100.0 * count as f64 / total_reads as f64 };
    let (mut solutions, mut noise): (Vec<ReportEntry>, Vec<ReportEntry>) = counts
        .into_iter()
        .map(|(c, count)| ReportEntry { coloring: c.clone(), count, pct: pct(count), oracle_valid: oracle.contains(c) })
        .partition(|e| e.count >= min_reads && e.count as f64 >= min_frac * total_reads as f64);
    let order = |a: &ReportEntry, b: &ReportEntry| b.count.cmp(&a.count).then_with(|| a.coloring.cmp(&b.coloring));
    solutions.sort_by(order);
    noise.sort_by(order);
    let valid: usize = solutions.iter().filter(|e| e.oracle_valid).map(|e| e.count).sum();
    SolutionReport {
        total_reads,
        solutions,
        noise,
        ambiguous_count,
        valid_fraction: if total_reads == 0 { 0.0 } else { valid as f64 / total_reads as f64 },
    }
}

/// FASTQ with a constant quality symbol.
pub fn to_fastq(reads: &[Read]) -> String {
    let mut out = String::new();
    for r in reads {
        let _ = write!(out, "@{}\n{}\n+\n{}\n", r.read_id, r.bases, "5".repeat(r.bases.len()));
    }
    out
}

pub fn parse_fastq(text: &str) -> Result<Vec<Read>, SeqSimError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let bad = |line: usize, reason: &str| SeqSimError::MalformedFastq { line, reason: reason.into() };
    if lines.len() % 4 != 0 {
        return Err(bad(lines.len(), "record count is not a multiple of four lines"));
    }
    lines
        .chunks(4)
        .enumerate()
        .map(|(k, rec)| {
            let line = 4 * k + 1;
            let id = rec[0].strip_prefix('@').ok_or_else(|| bad(line, "header must start with '@'"))?;
            if !rec[2].starts_with('+') {
                return Err(bad(line + 2, "separator must start with '+'"));
            }
            if rec[3].len() != rec[1].len() {
                return Err(bad(line + 3, "quality length differs from sequence length"));
            }
            let bases = rec[1].trim().parse::<Oligo>().map_err(|e| bad(line + 1, &e.to_string()))?;
            Ok(Read { read_id: id.split_whitespace().next().unwrap_or("").to_string(), bases, origin: None })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{generate_codewords, DesignConstraints};
    use crate::library::{render_sequence, Form, StrandKey};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scheme(n: usize) -> EncodingScheme {
        generate_codewords(n, &DesignConstraints::default(), 21).unwrap()
    }

    fn pool_of(colorings: &[(&str, f64)]) -> StrandPool {
        let mut p = StrandPool::new("test");
        for (c, a) in colorings {
            p.add(StrandKey::new(0, c.parse().unwrap(), Form::Ds), *a);
        }
        p
    }

    /// Semi-global DP: pattern aligned in full, text ends free.
    fn fitting_dp(pattern: &[u8], text: &[u8]) -> (usize, usize) {
        let m = pattern.len();
        let mut col: Vec<usize> = (0..=m).collect();
        let mut best = (m, 0);
        for (j, &t) in text.iter().enumerate() {
            let mut next = vec![0; m + 1];
            for i in 1..=m {
                next[i] = (col[i - 1] + usize::from(pattern[i - 1] != t)).min(col[i] + 1).min(next[i - 1] + 1);
            }
            col = next;
            if col[m] < best.0 {
                best = (col[m], j + 1);
            }
        }
        best
    }

    fn dna(max: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(prop::sample::select(b"ACGT".to_vec()), 1..max)
    }

    proptest! {
        #[test]
        fn myers_matches_dp(p in dna(64), t in dna(90)) {
            prop_assert_eq!(fitting_distance(&p, &t), fitting_dp(&p, &t));
        }

        #[test]
        fn long_patterns_match_dp(p in dna(100), t in dna(120)) {
            prop_assert_eq!(fitting_distance(&p, &t), fitting_dp(&p, &t));
        }

        #[test]
        fn error_free_reads_decode(colors in proptest::collection::vec(0usize..3, 9), seed in 0u64..50) {
            let sc = scheme(9);
            let c = Coloring(colors.into_iter().map(Color::from_index).collect());
            let pool = pool_of(&[(&c.to_string(), 1.0)]);
            let reads = simulate_reads(&pool, 3, &ErrorModel::NONE, &sc, seed).unwrap();
            for r in &reads {
                prop_assert_eq!(&r.bases, &render_sequence(&c, &sc));
                prop_assert_eq!(decode_read(&r.bases, &sc, 12), Decoded::Coloring(c.clone()));
            }
        }

        #[test]
        fn report_conserves_reads(ds in proptest::collection::vec(0usize..6, 0..400), min_reads in 0usize..60) {
            let names = ["RY", "YR", "RB", "BR", "YB"];
            let decoded: Vec<Decoded> = ds
                .iter()
                .map(|&k| if k == 5 { Decoded::Ambiguous } else { Decoded::Coloring(names[k].parse().unwrap()) })
                .collect();
            let oracle: BTreeSet<Coloring> = ["RY", "YR"].iter().map(|s| s.parse().unwrap()).collect();
            let r = build_report(&decoded, &oracle, min_reads, 0.001);
            let accepted: usize = r.solutions.iter().map(|e| e.count).sum();
            let noise: usize = r.noise.iter().map(|e| e.count).sum();
            prop_assert_eq!(accepted + noise + r.ambiguous_count, r.total_reads);
            if r.total_reads > 0 {
                let pct: f64 = r.solutions.iter().chain(&r.noise).map(|e| e.pct).sum::<f64>()
                    + 100.0 * r.ambiguous_count as f64 / r.total_reads as f64;
                prop_assert!((pct - 100.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_rate_channel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = b"ACGTACGGTTACCA".repeat(10);
        assert_eq!(ErrorModel::NONE.apply(&s, &mut rng), s);
    }

    #[test]
    fn two_strand_counts_are_binomial() {
        let sc = scheme(2);
        let pool = pool_of(&[("RY", 5.0), ("YB", 5.0)]);
        let reads = simulate_reads(&pool, 10_000, &ErrorModel::NONE, &sc, 3).unwrap();
        let ry = reads.iter().filter(|r| r.origin.as_ref().unwrap().to_string() == "RY").count() as f64;
        // sd = sqrt(10^4 / 4) = 50
        assert!((ry - 5000.0).abs() <= 150.0, "{ry}");
    }

    #[test]
    fn read_length_expectation() {
        let sc = scheme(27);
        let c = Coloring((0..27).map(|k| Color::from_index(k % 3)).collect());
        let pool = pool_of(&[(&c.to_string(), 1.0)]);
        let n = 2000;
        let reads = simulate_reads(&pool, n, &ErrorModel::default(), &sc, 8).unwrap();
        let mean = reads.iter().map(|r| r.bases.len() as f64).sum::<f64>() / n as f64;
        // per-base length contribution: 1 - del + ins, variance del(1-del) + ins(1-ins)
        let expect: f64 = 675.0 * (1.0 - 0.04 + 0.03);
        let sd = (675.0 * (0.04 * 0.96 + 0.03 * 0.97) / n as f64).sqrt();
        assert!((expect - 668.25).abs() < 1e-9);
        assert!((mean - expect).abs() <= 3.0 * sd, "{mean} vs {expect} (sd {sd})");
    }

    #[test]
    fn empty_pool_is_an_error() {
        let sc = scheme(2);
        assert_eq!(simulate_reads(&StrandPool::new("e"), 5, &ErrorModel::NONE, &sc, 0), Err(SeqSimError::EmptyPool));
    }

    #[test]
    fn invalid_error_model() {
        let em = ErrorModel { sub_rate: 0.6, ..Default::default() };
        assert!(matches!(em.validate(), Err(SeqSimError::InvalidErrorModel(_))));
    }

    fn decode_rate(n: usize, reads: usize, seed: u64) -> f64 {
        let sc = scheme(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = StrandPool::new("mix");
        for _ in 0..20 {
            let c = Coloring((0..n).map(|_| Color::from_index(rng.random_range(0..3))).collect());
            pool.add(StrandKey::new(0, c, Form::Ds), 1.0);
        }
        let reads = simulate_reads(&pool, reads, &ErrorModel::default(), &sc, seed).unwrap();
        let ok = reads
            .iter()
            .filter(|r| decode_read(&r.bases, &sc, 12) == Decoded::Coloring(r.origin.clone().unwrap()))
            .count();
        ok as f64 / reads.len() as f64
    }

    #[test]
    fn noisy_reads_decode_small_instance() {
        let rate = decode_rate(3, 10_000, 4);
        assert!(rate >= 0.95, "{rate}");
    }

    #[test]
    fn noisy_decoding_follows_per_site_rate() {
        // whole-read success decays as (1 - q)^n for a per-site failure rate q
        let q = 1.0 - decode_rate(1, 10_000, 6);
        let rate14 = decode_rate(14, 3_000, 6);
        let expect = (1.0 - q).powi(14);
        assert!(q < 0.03, "per-site failure {q}");
        assert!((rate14 - expect).abs() < 0.05, "{rate14} vs {expect}");
    }

    #[test]
    fn misdecodes_are_rare() {
        let sc = scheme(14);
        let c: Coloring = "RYBRYBRYBRYBRY".parse().unwrap();
        let pool = pool_of(&[(&c.to_string(), 1.0)]);
        let reads = simulate_reads(&pool, 3000, &ErrorModel::default(), &sc, 2).unwrap();
        let wrong = decode_reads(&reads, &sc, 12)
            .into_iter()
            .filter(|d| matches!(d, Decoded::Coloring(x) if *x != c))
            .count();
        assert!(wrong <= 3, "{wrong}");
    }

    #[test]
    fn random_sequences_are_ambiguous() {
        let sc = scheme(27);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let s: Vec<u8> = (0..675).map(|_| b"ACGT"[rng.random_range(0..4)]).collect();
            assert_eq!(decode_read(&Oligo::new(s).unwrap(), &sc, 12), Decoded::Ambiguous);
        }
    }

    #[test]
    fn candidate_mode_agrees_on_clean_reads() {
        let sc = scheme(4);
        let cands: Vec<(Coloring, Oligo)> = ["RYRY", "RYBY", "BRYB"]
            .iter()
            .map(|s| {
                let c: Coloring = s.parse().unwrap();
                let seq = render_sequence(&c, &sc);
                (c, seq)
            })
            .collect();
        let pool = pool_of(&[("RYBY", 1.0)]);
        let reads = simulate_reads(&pool, 50, &ErrorModel::default(), &sc, 1).unwrap();
        for r in &reads {
            assert_eq!(decode_read_candidates(&r.bases, &cands), Decoded::Coloring("RYBY".parse().unwrap()));
        }
        assert_eq!(decode_read_candidates(&cands[0].1, &[]), Decoded::Ambiguous);
    }

    #[test]
    fn report_thresholds() {
        let oracle: BTreeSet<Coloring> = ["RYB".parse().unwrap()].into();
        let all: Vec<Decoded> = vec![Decoded::Coloring("RYB".parse().unwrap()); 500];
        let r = build_report(&all, &oracle, 100, 0.001);
        assert_eq!(r.solutions.len(), 1);
        assert_eq!(r.solutions[0].pct, 100.0);
        assert_eq!(r.valid_fraction, 1.0);

        let mut mixed = all.clone();
        mixed.extend(vec![Decoded::Coloring("RYR".parse().unwrap()); 50]);
        mixed.push(Decoded::Ambiguous);
        let r = build_report(&mixed, &oracle, 100, 0.001);
        assert_eq!(r.accepted(), oracle);
        assert_eq!(r.noise.len(), 1);
        assert_eq!(r.noise[0].count, 50);
        assert!(!r.noise[0].oracle_valid);
        assert_eq!(r.ambiguous_count, 1);
        assert!(r.soundness_violations().is_empty());

        let loose = build_report(&mixed, &oracle, 10, 0.001);
        assert_eq!(loose.soundness_violations().len(), 1);
        let empty = build_report(&[], &oracle, 100, 0.001);
        assert_eq!((empty.total_reads, empty.valid_fraction), (0, 0.0));
    }

    #[test]
    fn report_json_fields() {
        let oracle: BTreeSet<Coloring> = ["RY".parse().unwrap()].into();
        let r = build_report(&[Decoded::Coloring("RY".parse().unwrap())], &oracle, 1, 0.0);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for f in ["total_reads", "solutions", "noise", "ambiguous_count", "valid_fraction"] {
            assert!(v.get(f).is_some(), "{f}");
        }
        assert_eq!(v["solutions"][0]["coloring"], "RY");
        assert_eq!(v["solutions"][0]["oracle_valid"], true);
        let back: SolutionReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("RY"));
    }

    #[test]
    fn fastq_round_trip() {
        let sc = scheme(3);
        let pool = pool_of(&[("RYB", 1.0), ("BRY", 2.0)]);
        let reads = simulate_reads(&pool, 20, &ErrorModel::default(), &sc, 5).unwrap();
        let parsed = parse_fastq(&to_fastq(&reads)).unwrap();
        assert_eq!(parsed.len(), 20);
        for (a, b) in reads.iter().zip(&parsed) {
            assert_eq!((&a.read_id, &a.bases), (&b.read_id, &b.bases));
        }
        assert!(matches!(parse_fastq("@r\nACGT\n-\nIIII\n"), Err(SeqSimError::MalformedFastq { line: 3, .. })));
        assert!(matches!(parse_fastq("@r\nACGT\n+\n"), Err(SeqSimError::MalformedFastq { .. })));
    }

    #[test]
    fn reads_are_schedule_independent() {
        let sc = scheme(6);
        let pool = pool_of(&[("RYBRYB", 1.0), ("BRYBRY", 3.0), ("YBRYBR", 0.5)]);
        let run = |t| {
            rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| {
                simulate_reads(&pool, 500, &ErrorModel::default(), &sc, 9).unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }
}
