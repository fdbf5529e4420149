//! Solution-space assembly: splint-templated half-libraries, bridging into the
//! full library, and dsDNA to ssDNA conversion.
//!
//! Every strand is identified symbolically by its coloring; its nucleotide
//! sequence is rendered on demand from the encoding scheme. Large full
//! libraries stay in product form (two half-library pools joined on the
//! shared position) and are streamed rather than materialized.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{hamming, junction, revcomp, splints_for_positions, CodecError, EncodingScheme, Oligo};
use crate::graph::{Color, Coloring};
use crate::rng::{stable_hash, KeyedStreams};

#[derive(Debug, Error, PartialEq)]
pub enum LibraryError {
    #[error("segment {start}..={end} must span at least 2 positions")]
    SegmentTooShort { start: usize, end: usize },
    #[error("segment {start}..={end} exceeds the scheme's {n} positions")]
    SegmentOutOfRange { start: usize, end: usize, n: usize },
    #[error("half-libraries must share exactly one position (left ends at {left_end}, right starts at {right_start})")]
    OverlapMismatch { left_end: usize, right_start: usize },
    #[error("pool mixes strands from different segments")]
    MixedSegments,
    #[error("empty pool")]
    EmptyPool,
    #[error("digestion extent {0} outside [0, 1]")]
    InvalidExtent(f64),
    #[error("site {0} is ambiguous")]
    AmbiguousSite(usize),
    #[error("sequence length {len} outside ±20% of {expected}")]
    LengthOutOfRange { len: usize, expected: usize },
    #[error("{0} strands exceed the materialization limit {1}")]
    TooLarge(u128, u128),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Ds,
    Ss,
}

/// Outcome of selection-probe extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Product {
    /// Extended over the whole strand; carries the tag primer site.
    Full,
    /// Arrested at a blocking probe.
    Truncated { length_nt: usize },
}

/// Identity of a pool entry. Equal keys accumulate abundance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StrandKey {
    /// First path position covered.
    pub start: usize,
    pub coloring: Coloring,
    pub form: Form,
    pub product: Option<Product>,
}

impl StrandKey {
    pub fn new(start: usize, coloring: Coloring, form: Form) -> Self {
        StrandKey { start, coloring, form, product: None }
    }

    /// Last path position covered.
    pub fn end(&self) -> usize {
        self.start + self.coloring.len() - 1
    }

    pub fn length_nt(&self, scheme: &EncodingScheme) -> usize {
        let base = self.coloring.len() * scheme.codeword_len();
        match self.product {
            None => base,
            Some(Product::Full) => base + scheme.extension_len(),
            Some(Product::Truncated { length_nt }) => length_nt,
        }
    }

    /// Key of the counter-based stream for per-strand draws. Depends only on
    /// the covered positions and colors.
    pub fn stream_key(&self) -> u64 {
        coloring_stream_key(self.start, self.coloring.colors())
    }

    pub fn form_label(&self) -> &'static str {
        match (self.form, self.product) {
            (Form::Ss, _) => "ss",
            (Form::Ds, None) => "ds",
            (Form::Ds, Some(Product::Full)) => "full",
            (Form::Ds, Some(Product::Truncated { .. })) => "truncated",
        }
    }
}

pub(crate) fn coloring_stream_key(start: usize, colors: &[Color]) -> u64 {
    let mut bytes = Vec::with_capacity(colors.len() + 8);
    bytes.extend_from_slice(&(start as u64).to_le_bytes());
    bytes.extend(colors.iter().map(|c| c.index() as u8));
    stable_hash(&bytes)
}

/// A strand with its rendered sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strand {
    pub key: StrandKey,
    pub sequence: Oligo,
    pub length: usize,
}

impl Strand {
    pub fn from_key(key: StrandKey, scheme: &EncodingScheme) -> Self {
        let sequence = render_segment(key.start, &key.coloring, scheme);
        let length = key.length_nt(scheme);
        Strand { key, sequence, length }
    }
}

/// Multiset of strands with abundances in copies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrandPool {
    entries: BTreeMap<StrandKey, f64>,
    pub stage: String,
}

impl StrandPool {
    pub fn new(stage: impl Into<String>) -> Self {
        StrandPool { entries: BTreeMap::new(), stage: stage.into() }
    }

    /// Adds copies to an entry; negative or non-finite amounts are ignored.
    pub fn add(&mut self, key: StrandKey, copies: f64) {
        if copies.is_finite() && copies >= 0.0 {
            *self.entries.entry(key).or_insert(0.0) += copies;
        }
    }

    pub fn get(&self, key: &StrandKey) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StrandKey, f64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_copies(&self) -> f64 {
        self.entries.values().fold(0.0, |s, a| s + a)
    }

    pub fn with_stage(mut self, stage: impl Into<String>) -> Self {
        self.stage = stage.into();
        self
    }

    pub fn is_single_stranded(&self) -> bool {
        self.entries.keys().all(|k| k.form == Form::Ss)
    }

    /// Max over min abundance among entries (1.0 for a uniform pool).
    pub fn uniformity_ratio(&self) -> Option<f64> {
        let min = self.entries.values().copied().reduce(f64::min)?;
        let max = self.entries.values().copied().reduce(f64::max)?;
        (min > 0.0).then(|| max / min)
    }

    /// Distinct colorings with their summed abundance.
    pub fn by_coloring(&self) -> BTreeMap<&Coloring, f64> {
        let mut out = BTreeMap::new();
        for (k, v) in &self.entries {
            *out.entry(&k.coloring).or_insert(0.0) += v;
        }
        out
    }

    fn map_abundance(&self, stage: &str, f: impl Fn(f64) -> f64, form: Form) -> StrandPool {
        let mut out = StrandPool::new(stage);
        for (k, &v) in &self.entries {
            out.add(StrandKey { form, ..k.clone() }, f(v));
        }
        out
    }

    /// Segment `(start, end)` shared by every entry.
    pub fn segment(&self) -> Result<(usize, usize), LibraryError> {
        let first = self.entries.keys().next().ok_or(LibraryError::EmptyPool)?;
        let seg = (first.start, first.end());
        if self.entries.keys().any(|k| (k.start, k.end()) != seg) {
            return Err(LibraryError::MixedSegments);
        }
        Ok(seg)
    }

    /// TSV with columns `coloring, form, length_nt, abundance`.
    pub fn to_tsv(&self, scheme: &EncodingScheme) -> String {
        let mut out = format!("# stage: {}\ncoloring\tform\tlength_nt\tabundance\n", self.stage);
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", k.coloring, k.form_label(), k.length_nt(scheme), v);
        }
        out
    }

    /// FASTA of the rendered strands.
    pub fn to_fasta(&self, scheme: &EncodingScheme) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let seq = render_segment(k.start, &k.coloring, scheme);
            let _ = writeln!(out, ">{}_{} start={} form={} copies={}\n{}", k.coloring, k.start, k.start, k.form_label(), v, seq);
        }
        out
    }
}

/// Full library held as two half-library pools joined on a shared position.
/// A joined strand's abundance is the geometric mean of its parents'.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductLibrary {
    left: Vec<(Vec<Color>, f64)>,
    /// Right-half entries grouped by the color at the shared position.
    right: [Vec<(Vec<Color>, f64)>; 3],
    overlap: usize,
    start: usize,
    end: usize,
    form: Form,
}

impl ProductLibrary {
    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn segment(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn left(&self) -> &[(Vec<Color>, f64)] {
        &self.left
    }

    /// Right-half entries (including the shared position) whose shared color is `c`.
    pub fn right_for(&self, c: Color) -> &[(Vec<Color>, f64)] {
        &self.right[c.index()]
    }

    pub fn n_strands(&self) -> u128 {
        self.left
            .iter()
            .map(|(l, _)| self.right_for(*l.last().expect("non-empty")).len() as u128)
            .sum()
    }

    pub fn total_copies(&self) -> f64 {
        let mut total = 0.0;
        self.for_each(|_, a| total += a);
        total
    }

    /// Visits every joined strand in canonical (left-major) order.
    pub fn for_each(&self, mut f: impl FnMut(&[Color], f64)) {
        let mut buf = Vec::with_capacity(self.end - self.start + 1);
        for (l, la) in &self.left {
            for (r, ra) in self.right_for(*l.last().expect("non-empty")) {
                buf.clear();
                buf.extend_from_slice(l);
                buf.extend_from_slice(&r[1..]);
                f(&buf, join_abundance(*la, *ra));
            }
        }
    }

    fn scaled(&self, factor: f64, form: Form) -> ProductLibrary {
        let scale = |v: &Vec<(Vec<Color>, f64)>| v.iter().map(|(c, a)| (c.clone(), a * factor)).collect::<Vec<_>>();
        ProductLibrary {
            left: scale(&self.left),
            right: [scale(&self.right[0]), scale(&self.right[1]), scale(&self.right[2])],
            overlap: self.overlap,
            start: self.start,
            end: self.end,
            form,
        }
    }

    pub fn materialize(&self, stage: &str) -> StrandPool {
        let mut pool = StrandPool::new(stage);
        self.for_each(|c, a| pool.add(StrandKey::new(self.start, Coloring(c.to_vec()), self.form), a));
        pool
    }
}

pub(crate) fn join_abundance(a: f64, b: f64) -> f64 {
    (a * b).sqrt()
}

/// The solution space in either explicit or product form.
#[derive(Debug, Clone, PartialEq)]
pub enum Library {
    Pool(StrandPool),
    Product(ProductLibrary),
}

impl Library {
    pub fn n_strands(&self) -> u128 {
        match self {
            Library::Pool(p) => p.len() as u128,
            Library::Product(p) => p.n_strands(),
        }
    }

    pub fn total_copies(&self) -> f64 {
        match self {
            Library::Pool(p) => p.total_copies(),
            Library::Product(p) => p.total_copies(),
        }
    }

    pub fn is_single_stranded(&self) -> bool {
        match self {
            Library::Pool(p) => p.is_single_stranded(),
            Library::Product(p) => p.form == Form::Ss,
        }
    }

    pub fn materialize(&self, stage: &str) -> StrandPool {
        match self {
            Library::Pool(p) => p.clone().with_stage(stage),
            Library::Product(p) => p.materialize(stage),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryParams {
    /// Copies per strand after assembly.
    pub initial_copies: f64,
    /// Per-strand ligation bias: abundance scaled by a seeded factor in
    /// `[1 - b, 1 + b]`. Zero gives a perfectly uniform pool.
    pub ligation_bias: f64,
    /// Full libraries with more strands than this stay in product form.
    pub materialize_limit: u128,
}

impl Default for LibraryParams {
    fn default() -> Self {
        LibraryParams { initial_copies: 1e4, ligation_bias: 0.0, materialize_limit: 1 << 20 }
    }
}

/// Splint-templated ligation over `segment`: a codeword at position `p` is
/// joined to one at `p + 1` only if a splint complementary to that junction
/// exists. The resulting ds pool holds every segment coloring with distinct
/// consecutive colors.
pub fn assemble_half_library(
    scheme: &EncodingScheme,
    segment: RangeInclusive<usize>,
    params: &LibraryParams,
    seed: u64,
) -> Result<StrandPool, LibraryError> {
    let (start, end) = (*segment.start(), *segment.end());
    if end <= start {
        return Err(LibraryError::SegmentTooShort { start, end });
    }
    if end >= scheme.n_positions() {
        return Err(LibraryError::SegmentOutOfRange { start, end, n: scheme.n_positions() });
    }
    let splints: HashSet<Oligo> =
        splints_for_positions(scheme, end + 1)?.into_iter().filter(|s| s.position >= start).map(|s| s.oligo).collect();
    let ligates = |p: usize, a: Color, b: Color| splints.contains(&revcomp(&junction(scheme, p, a, b)));

    let streams = KeyedStreams::new(seed);
    let mut pool = StrandPool::new(format!("half-library {start}..={end}"));
    let mut colors = Vec::with_capacity(end - start + 1);
    fn grow(
        p: usize,
        end: usize,
        colors: &mut Vec<Color>,
        ligates: &dyn Fn(usize, Color, Color) -> bool,
        emit: &mut dyn FnMut(&[Color]),
    ) {
        if p > end {
            emit(colors);
            return;
        }
        for c in Color::ALL {
            if let Some(&prev) = colors.last() {
                if !ligates(p - 1, prev, c) {
                    continue;
                }
            }
            colors.push(c);
            grow(p + 1, end, colors, ligates, emit);
            colors.pop();
        }
    }
    grow(start, end, &mut colors, &ligates, &mut |c| {
        let key = StrandKey::new(start, Coloring(c.to_vec()), Form::Ds);
        let factor = if params.ligation_bias > 0.0 {
            let u: f64 = streams.stream(key.stream_key()).random();
            1.0 + params.ligation_bias * (2.0 * u - 1.0)
        } else {
            1.0
        };
        pool.add(key, params.initial_copies * factor);
    });
    Ok(pool)
}

/// Joins two half-libraries sharing exactly one position. Strands pair only
/// when they agree on the shared color.
pub fn bridge_libraries(g1: &StrandPool, g2: &StrandPool, params: &LibraryParams) -> Result<Library, LibraryError> {
    let (s1, e1) = g1.segment()?;
    let (s2, e2) = g2.segment()?;
    if e1 != s2 || e2 <= s2 || e1 <= s1 {
        return Err(LibraryError::OverlapMismatch { left_end: e1, right_start: s2 });
    }
    let form = g1.iter().next().map(|(k, _)| k.form).unwrap_or(Form::Ds);
    let mut right: [Vec<(Vec<Color>, f64)>; 3] = Default::default();
    for (k, a) in g2.iter() {
        right[k.coloring.colors()[0].index()].push((k.coloring.colors().to_vec(), a));
    }
    let left = g1.iter().map(|(k, a)| (k.coloring.colors().to_vec(), a)).collect();
    let product = ProductLibrary { left, right, overlap: e1, start: s1, end: e2, form };
    if product.n_strands() <= params.materialize_limit {
        Ok(Library::Pool(product.materialize(&format!("full library {s1}..={e2}"))))
    } else {
        Ok(Library::Product(product))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Digestion {
    LambdaExo,
    LatePcr,
}

/// Piecewise-linear unimodal yield curve for single-strand generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigestionParams {
    pub peak_extent: f64,
    pub peak_yield: f64,
    /// Yield at full extent, after over-digestion.
    pub over_digest_yield: f64,
    pub lambda_exo_purity: f64,
    pub late_pcr_purity: f64,
}

impl Default for DigestionParams {
    fn default() -> Self {
        DigestionParams {
            peak_extent: 0.6,
            peak_yield: 0.8,
            over_digest_yield: 0.3,
            lambda_exo_purity: 0.95,
            late_pcr_purity: 0.6,
        }
    }
}

impl DigestionParams {
    pub fn yield_at(&self, extent: f64) -> f64 {
        if extent <= 0.0 {
            0.0
        } else if extent <= self.peak_extent {
            self.peak_yield * extent / self.peak_extent
        } else {
            let t = (extent - self.peak_extent) / (1.0 - self.peak_extent);
            self.peak_yield + (self.over_digest_yield - self.peak_yield) * t.min(1.0)
        }
    }

    pub fn purity(&self, method: Digestion) -> f64 {
        match method {
            Digestion::LambdaExo => self.lambda_exo_purity,
            Digestion::LatePcr => self.late_pcr_purity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsdnaOutcome {
    pub library: Library,
    /// Fraction of the product that is single-stranded; the rest is
    /// residual duplex, which does not proceed.
    pub purity: f64,
    pub yield_fraction: f64,
}

/// Converts a ds library to ssDNA. Abundances scale by the yield at `extent`.
pub fn to_ssdna(
    library: &Library,
    method: Digestion,
    extent: f64,
    params: &DigestionParams,
) -> Result<SsdnaOutcome, LibraryError> {
    if !(0.0..=1.0).contains(&extent) {
        return Err(LibraryError::InvalidExtent(extent));
    }
    let y = params.yield_at(extent);
    let library = match library {
        Library::Pool(p) => Library::Pool(p.map_abundance("ssDNA library", |a| a * y, Form::Ss)),
        Library::Product(p) => Library::Product(p.scaled(y, Form::Ss)),
    };
    Ok(SsdnaOutcome { library, purity: params.purity(method), yield_fraction: y })
}

/// Concatenated codewords for a segment coloring starting at `start`.
pub fn render_segment(start: usize, coloring: &Coloring, scheme: &EncodingScheme) -> Oligo {
    let parts: Vec<&Oligo> =
        coloring.colors().iter().enumerate().map(|(k, &c)| scheme.codeword(start + k, c)).collect();
    Oligo::concat(&parts)
}

pub fn render_sequence(coloring: &Coloring, scheme: &EncodingScheme) -> Oligo {
    render_segment(0, coloring, scheme)
}

/// Hamming classification of each codeword-length window. A site decodes
/// when its best color is within `max_mismatch_per_site` and the runner-up
/// is at least 3 worse.
pub fn decode_sequence(seq: &Oligo, scheme: &EncodingScheme, max_mismatch_per_site: usize) -> Result<Coloring, LibraryError> {
    let n = scheme.n_positions();
    let l = scheme.codeword_len();
    let expected = n * l;
    let len = seq.len();
    if len * 5 < expected * 4 || len * 5 > expected * 6 {
        return Err(LibraryError::LengthOutOfRange { len, expected });
    }
    let bytes = seq.as_bytes();
    (0..n)
        .map(|p| {
            let lo = (p * l).min(len);
            let window = &bytes[lo..((p + 1) * l).min(len)];
            let mut d: Vec<(usize, Color)> = Color::ALL
                .into_iter()
                .map(|c| (hamming(scheme.codeword(p, c).as_bytes(), window), c))
                .collect();
            d.sort();
            if d[0].0 <= max_mismatch_per_site && d[1].0 >= d[0].0 + 3 {
                Ok(d[0].1)
            } else {
                Err(LibraryError::AmbiguousSite(p))
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Coloring)
}
