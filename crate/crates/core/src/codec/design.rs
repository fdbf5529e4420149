use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_hyb_run, hamming, max_homopolymer, revcomp_bytes, CodecError, Oligo};
use crate::graph::Color;

/// Constraints for codeword, tag and primer design. Bounds named `max_*`
/// are exclusive: a run of length `max_cross_hyb` is already a violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConstraints {
    pub codeword_len: usize,
    pub min_distance: usize,
    pub gc_min: f64,
    pub gc_max: f64,
    pub max_cross_hyb: usize,
    pub max_homopolymer: usize,
    pub splint_left: usize,
    pub splint_right: usize,
    pub tag_len: usize,
    pub primer_len: usize,
    /// Complementary-run bound between tag/primers and codewords.
    pub tag_cross_hyb: usize,
    pub free_spacer_len: usize,
    pub anchor_len: usize,
    pub max_attempts: u64,
}

impl Default for DesignConstraints {
    fn default() -> Self {
        DesignConstraints {
            codeword_len: 25,
            min_distance: 10,
            gc_min: 0.40,
            gc_max: 0.60,
            max_cross_hyb: 8,
            max_homopolymer: 5,
            splint_left: 13,
            splint_right: 13,
            tag_len: 25,
            primer_len: 20,
            tag_cross_hyb: 12,
            free_spacer_len: 5,
            anchor_len: 20,
            max_attempts: 1_000_000,
        }
    }
}

impl DesignConstraints {
    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: String| Err(CodecError::InvalidConstraint(m));
        if self.codeword_len == 0 {
            return bad("codeword_len must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gc_min) || !(0.0..=1.0).contains(&self.gc_max) || self.gc_min > self.gc_max {
            return bad(format!("gc bounds [{}, {}] are not a sub-range of [0, 1]", self.gc_min, self.gc_max));
        }
        if self.splint_left == 0
            || self.splint_right == 0
            || self.splint_left > self.codeword_len
            || self.splint_right > self.codeword_len
        {
            return bad(format!(
                "splint halves {}/{} must lie in 1..={}",
                self.splint_left, self.splint_right, self.codeword_len
            ));
        }
        if self.anchor_len == 0 || self.anchor_len >= self.codeword_len {
            return Err(CodecError::AnchorTooLong { anchor: self.anchor_len, codeword: self.codeword_len });
        }
        if self.tag_len == 0 || self.primer_len == 0 || self.free_spacer_len == 0 {
            return bad("tag, primer and spacer lengths must be positive".into());
        }
        if self.max_homopolymer < 2 || self.max_cross_hyb == 0 || self.tag_cross_hyb == 0 {
            return bad("run-length bounds too small".into());
        }
        Ok(())
    }
}

/// The problem-to-DNA map: three codewords per path position plus the
/// shared tag, spacer and primer sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingScheme {
    pub constraints: DesignConstraints,
    codewords: Vec<[Oligo; 3]>,
    pub tag: Oligo,
    pub free_spacer: Oligo,
    pub fwd_primer: Oligo,
    pub rev_primer: Oligo,
}

impl EncodingScheme {
    /// Assembles a scheme from explicit parts. Invariants are not enforced
    /// here; see [`EncodingScheme::violations`].
    pub fn from_parts(
        constraints: DesignConstraints,
        codewords: Vec<[Oligo; 3]>,
        tag: Oligo,
        free_spacer: Oligo,
        fwd_primer: Oligo,
        rev_primer: Oligo,
    ) -> Self {
        EncodingScheme { constraints, codewords, tag, free_spacer, fwd_primer, rev_primer }
    }

    pub fn n_positions(&self) -> usize {
        self.codewords.len()
    }

    pub fn codeword_len(&self) -> usize {
        self.constraints.codeword_len
    }

    pub fn codeword(&self, pos: usize, color: Color) -> &Oligo {
        &self.codewords[pos][color.index()]
    }

    pub fn codewords_at(&self, pos: usize) -> &[Oligo; 3] {
        &self.codewords[pos]
    }

    pub fn all_codewords(&self) -> impl Iterator<Item = (usize, Color, &Oligo)> {
        self.codewords
            .iter()
            .enumerate()
            .flat_map(|(p, cws)| Color::ALL.into_iter().map(move |c| (p, c, &cws[c.index()])))
    }

    /// Length of extension beyond the solution strand: free spacer plus tag.
    pub fn extension_len(&self) -> usize {
        self.free_spacer.len() + self.tag.len()
    }

    /// Every invariant violation, checked with the exact (quadratic) screens.
    pub fn violations(&self) -> Vec<String> {
        let c = &self.constraints;
        let mut out = Vec::new();
        let words: Vec<(usize, Color, &Oligo)> = self.all_codewords().collect();
        for &(p, col, w) in &words {
            if w.len() != c.codeword_len {
                out.push(format!("v{p}_{col}: length {} != {}", w.len(), c.codeword_len));
            }
            let gc = w.gc_fraction();
            if gc < c.gc_min - 1e-12 || gc > c.gc_max + 1e-12 {
                out.push(format!("v{p}_{col}: GC {gc:.2} outside [{}, {}]", c.gc_min, c.gc_max));
            }
            if w.max_homopolymer() >= c.max_homopolymer {
                out.push(format!("v{p}_{col}: homopolymer run {}", w.max_homopolymer()));
            }
        }
        for (a_idx, &(pa, ca, a)) in words.iter().enumerate() {
            for &(pb, cb, b) in &words[a_idx + 1..] {
                let d = hamming(a.as_bytes(), b.as_bytes());
                if d < c.min_distance {
                    out.push(format!("v{pa}_{ca} / v{pb}_{cb}: Hamming {d}"));
                }
                let run = cross_hyb_run(a, b);
                if run >= c.max_cross_hyb {
                    out.push(format!("v{pa}_{ca} / v{pb}_{cb}: complementary run {run}"));
                }
            }
        }
        for (name, o) in [("tag", &self.tag), ("fwd", &self.fwd_primer), ("rev", &self.rev_primer)] {
            for &(p, col, w) in &words {
                let run = cross_hyb_run(o, w);
                if run >= c.tag_cross_hyb {
                    out.push(format!("{name} / v{p}_{col}: complementary run {run}"));
                }
            }
        }
        out
    }
}

/// Rejection-sampling state shared by all design phases.
struct Sampler<'a> {
    c: &'a DesignConstraints,
    rng: ChaCha8Rng,
    attempts: u64,
    rejections: BTreeMap<&'static str, u64>,
}

impl Sampler<'_> {
    fn draw(&mut self, len: usize) -> Option<Vec<u8>> {
        if self.attempts >= self.c.max_attempts {
            return None;
        }
        self.attempts += 1;
        Some((0..len).map(|_| b"ACGT"[self.rng.random_range(0..4)]).collect())
    }

    fn reject(&mut self, why: &'static str) {
        *self.rejections.entry(why).or_default() += 1;
    }

    fn base_ok(&mut self, cand: &[u8]) -> bool {
        let gc = cand.iter().filter(|&&b| b == b'G' || b == b'C').count() as f64 / cand.len() as f64;
        if gc < self.c.gc_min - 1e-12 || gc > self.c.gc_max + 1e-12 {
            self.reject("gc bounds");
            return false;
        }
        if max_homopolymer(cand) >= self.c.max_homopolymer {
            self.reject("max_homopolymer");
            return false;
        }
        true
    }

    fn exhausted(&self, accepted: usize, needed: usize, what: &'static str) -> CodecError {
        let constraint = self
            .rejections
            .iter()
            .max_by_key(|(_, &n)| n)
            .map(|(k, _)| k.to_string())
            .unwrap_or_else(|| "none".to_string());
        CodecError::DesignExhausted { attempts: self.attempts, accepted, needed, what, constraint }
    }
}

fn kmers(seq: &[u8], k: usize) -> impl Iterator<Item = &[u8]> {
    seq.windows(k)
}

/// Designs `3n` codewords plus tag, spacer and primers by seeded rejection
/// sampling. Candidates come from one sequential stream and are accepted in
/// stream order, so the result is a pure function of `(n, constraints, seed)`.
pub fn generate_codewords(n: usize, constraints: &DesignConstraints, seed: u64) -> Result<EncodingScheme, CodecError> {
    constraints.validate()?;
    let c = constraints;
    let needed = 3 * n;
    let mut s = Sampler { c, rng: ChaCha8Rng::seed_from_u64(seed), attempts: 0, rejections: BTreeMap::new() };
    if needed > 1 && c.min_distance > c.codeword_len {
        s.rejections.insert("min_distance exceeds codeword_len", 1);
        return Err(s.exhausted(0, needed, "codewords"));
    }

    let mut words: Vec<Vec<u8>> = Vec::with_capacity(needed);
    // k-mers of the reverse complements of accepted codewords
    let mut rc_kmers: HashSet<Vec<u8>> = HashSet::new();
    while words.len() < needed {
        let Some(cand) = s.draw(c.codeword_len) else {
            return Err(s.exhausted(words.len(), needed, "codewords"));
        };
        if !s.base_ok(&cand) {
            continue;
        }
        if words.iter().any(|w| hamming(w, &cand) < c.min_distance) {
            s.reject("min_distance");
            continue;
        }
        if c.max_cross_hyb <= cand.len() && kmers(&cand, c.max_cross_hyb).any(|k| rc_kmers.contains(k)) {
            s.reject("max_cross_hyb");
            continue;
        }
        if c.max_cross_hyb <= cand.len() {
            rc_kmers.extend(kmers(&revcomp_bytes(&cand), c.max_cross_hyb).map(<[u8]>::to_vec));
        }
        words.push(cand);
    }

    let mut word_rc_kmers: HashSet<Vec<u8>> = HashSet::new();
    for w in &words {
        word_rc_kmers.extend(kmers(&revcomp_bytes(w), c.tag_cross_hyb).map(<[u8]>::to_vec));
    }
    let flank = |s: &mut Sampler, len: usize, what: &'static str, guard: &mut HashSet<Vec<u8>>| loop {
        let Some(cand) = s.draw(len) else {
            return Err(s.exhausted(0, 1, what));
        };
        if !s.base_ok(&cand) {
            continue;
        }
        if kmers(&cand, c.tag_cross_hyb).any(|k| guard.contains(k)) {
            s.reject("tag_cross_hyb");
            continue;
        }
        guard.extend(kmers(&revcomp_bytes(&cand), c.tag_cross_hyb).map(<[u8]>::to_vec));
        return Ok(Oligo::from_vec_unchecked(cand));
    };
    let tag = flank(&mut s, c.tag_len, "tag", &mut word_rc_kmers)?;
    let fwd_primer = flank(&mut s, c.primer_len, "fwd primer", &mut word_rc_kmers)?;
    let rev_primer = flank(&mut s, c.primer_len, "rev primer", &mut word_rc_kmers)?;
    let free_spacer = Oligo::from_vec_unchecked(
        (0..c.free_spacer_len).map(|_| b"ACGT"[s.rng.random_range(0..4)]).collect(),
    );

    let mut it = words.into_iter().map(Oligo::from_vec_unchecked);
    let codewords = (0..n)
        .map(|_| {
            let mut next = || it.next().expect("3n codewords drawn");
            [next(), next(), next()]
        })
        .collect();
    Ok(EncodingScheme { constraints: c.clone(), codewords, tag, free_spacer, fwd_primer, rev_primer })
}
