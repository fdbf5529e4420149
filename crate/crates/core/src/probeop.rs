//! Probe operation: blocking-probe binding, selection-probe extension, gel
//! selection and PCR amplification.
//!
//! Binding and extension are strand-level events. A strand carrying both
//! recognition sites of a probe forms a paperclip with it unless the binding
//! draw fails; a paperclipped strand arrests extension unless the polymerase
//! leaks through. Every draw comes from a stream keyed by strand identity.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{hairpin_density, BlockingProbeSeq, EncodingScheme, SelectionProbeSeq};
use crate::graph::{Color, Coloring};
use crate::library::{
    render_segment, Form, Library, ProductLibrary, Product, StrandKey, StrandPool,
};
use crate::rng::{derive_seed, stable_hash, KeyedStreams};

#[derive(Debug, Error, PartialEq)]
pub enum ProbeOpError {
    #[error("probes act on single-stranded DNA; pool `{0}` has double-stranded entries")]
    NotSingleStranded(String),
    #[error("no selection probe for terminal color {0}")]
    MissingSelectionProbe(Color),
    #[error("invalid protocol parameter: {0}")]
    InvalidConfig(String),
    #[error("stochastic blocking on a {0}-strand product-form library; lower the library size or use a deterministic protocol")]
    RequiresMaterializedPool(u128),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// Slow anneal: secondary structure competes with probe binding.
    AnnealRamp,
    /// Probes added at high concentration, low temperature.
    DirectHighConc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolymeraseActivity {
    HeatActivated,
    NoHeatActivation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub mode: ProtocolMode,
    /// Probe to strand ratio. Below 1, the shortfall is an extra binding
    /// failure probability.
    pub probe_excess: f64,
    pub polymerase_activity: PolymeraseActivity,
    /// Recorded in the manifest; it does not enter the model.
    pub extension_temp: f64,
    pub block_leak_base: f64,
    /// Scales hairpin density into a binding failure probability under
    /// `anneal_ramp`.
    pub secondary_structure_penalty: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            mode: ProtocolMode::DirectHighConc,
            probe_excess: 3.0,
            polymerase_activity: PolymeraseActivity::NoHeatActivation,
            extension_temp: 37.0,
            block_leak_base: 0.0,
            secondary_structure_penalty: 0.0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProbeOpError> {
        if !(self.probe_excess > 0.0 && self.probe_excess.is_finite()) {
            return Err(ProbeOpError::InvalidConfig(format!("probe_excess must be positive, got {}", self.probe_excess)));
        }
        if !(0.0..=1.0).contains(&self.block_leak_base) {
            return Err(ProbeOpError::InvalidConfig(format!("block_leak_base {} outside [0, 1]", self.block_leak_base)));
        }
        if !(self.secondary_structure_penalty >= 0.0 && self.secondary_structure_penalty.is_finite()) {
            return Err(ProbeOpError::InvalidConfig(format!(
                "secondary_structure_penalty must be non-negative, got {}",
                self.secondary_structure_penalty
            )));
        }
        Ok(())
    }

    fn shortfall(&self) -> f64 {
        (1.0 - self.probe_excess).max(0.0)
    }

    /// Probability that one probe with both sites present fails to bind.
    pub fn binding_failure(&self, hairpin_density: f64) -> f64 {
        let base = match self.mode {
            ProtocolMode::AnnealRamp => (self.secondary_structure_penalty * hairpin_density).min(1.0),
            ProtocolMode::DirectHighConc => self.block_leak_base,
        };
        1.0 - (1.0 - base) * (1.0 - self.shortfall())
    }

    /// Probability that a paperclipped strand is still fully extended.
    pub fn extension_leak(&self) -> f64 {
        match self.polymerase_activity {
            PolymeraseActivity::HeatActivated => (2.0 * self.block_leak_base).min(1.0),
            PolymeraseActivity::NoHeatActivation => self.block_leak_base,
        }
    }

    /// True when binding and extension outcomes need no random draws.
    fn is_deterministic(&self) -> bool {
        let binding = match self.mode {
            ProtocolMode::AnnealRamp => self.secondary_structure_penalty == 0.0,
            ProtocolMode::DirectHighConc => self.block_leak_base == 0.0,
        };
        binding && self.shortfall() == 0.0 && self.extension_leak() == 0.0
    }
}

/// A strand with the probes bound to it.
#[derive(Debug, Clone, PartialEq)]
pub struct BindingState {
    pub key: StrandKey,
    pub abundance: f64,
    /// Indices into the probe list, ascending.
    pub bound_probes: Vec<usize>,
}

impl BindingState {
    pub fn paperclip(&self) -> bool {
        !self.bound_probes.is_empty()
    }
}

/// True when the strand carries both recognition sites of the probe.
pub fn has_sites(start: usize, colors: &[Color], probe: &BlockingProbeSeq) -> bool {
    let at = |p: usize| p.checked_sub(start).and_then(|k| colors.get(k)).copied();
    at(probe.pair.i) == Some(probe.color) && at(probe.pair.j) == Some(probe.color)
}

fn check_ss(pool: &StrandPool) -> Result<(), ProbeOpError> {
    if pool.is_single_stranded() {
        Ok(())
    } else {
        Err(ProbeOpError::NotSingleStranded(pool.stage.clone()))
    }
}

/// Applies all probes to the pool in one pass.
pub fn bind_probes(
    pool: &StrandPool,
    probes: &[BlockingProbeSeq],
    cfg: &ProtocolConfig,
    scheme: &EncodingScheme,
    seed: u64,
) -> Result<Vec<BindingState>, ProbeOpError> {
    cfg.validate()?;
    check_ss(pool)?;
    let streams = KeyedStreams::new(derive_seed(seed, "bind"));
    let entries: Vec<(&StrandKey, f64)> = pool.iter().collect();
    Ok(entries
        .par_iter()
        .map(|&(key, abundance)| {
            let colors = key.coloring.colors();
            let candidates: Vec<usize> =
                (0..probes.len()).filter(|&p| has_sites(key.start, colors, &probes[p])).collect();
            let bound_probes = if candidates.is_empty() {
                candidates
            } else {
                let density = match cfg.mode {
                    ProtocolMode::AnnealRamp if cfg.secondary_structure_penalty > 0.0 => {
                        hairpin_density(&render_segment(key.start, &key.coloring, scheme))
                    }
                    _ => 0.0,
                };
                let fail = cfg.binding_failure(density);
                let mut rng = streams.stream(key.stream_key());
                // one uniform per probe in index order, drawn even for
                // non-candidates, so a probe's outcome does not depend on the others
                let draws: Vec<f64> = (0..probes.len()).map(|_| rng.random()).collect();
                candidates.into_iter().filter(|&p| draws[p] >= fail).collect()
            };
            BindingState { key: key.clone(), abundance, bound_probes }
        })
        .collect())
}

/// Length of the product arrested by the bound probe nearest the 3' end.
fn truncated_length(n: usize, j_max: usize, scheme: &EncodingScheme) -> usize {
    (n - 1 - j_max) * scheme.codeword_len() + scheme.extension_len()
}

fn check_selection(colors: &[Color], sel_probes: &[SelectionProbeSeq]) -> Result<(), ProbeOpError> {
    let last = *colors.last().expect("non-empty coloring");
    if sel_probes.iter().any(|p| p.terminal_color == last) {
        Ok(())
    } else {
        Err(ProbeOpError::MissingSelectionProbe(last))
    }
}

/// Selection-probe extension. Unblocked strands become full products; a
/// paperclipped strand is arrested at its bound site nearest the 3' end
/// unless the polymerase leaks through.
pub fn extend(
    states: &[BindingState],
    probes: &[BlockingProbeSeq],
    sel_probes: &[SelectionProbeSeq],
    cfg: &ProtocolConfig,
    scheme: &EncodingScheme,
    seed: u64,
) -> Result<StrandPool, ProbeOpError> {
    cfg.validate()?;
    let streams = KeyedStreams::new(derive_seed(seed, "extend"));
    let leak = cfg.extension_leak();
    let mut pool = StrandPool::new("extension products");
    for s in states {
        let colors = s.key.coloring.colors();
        check_selection(colors, sel_probes)?;
        let product = if !s.paperclip() {
            Product::Full
        } else if leak > 0.0 && streams.stream(s.key.stream_key()).random::<f64>() < leak {
            Product::Full
        } else {
            let j_max = s.bound_probes.iter().map(|&p| probes[p].pair.j).max().expect("paperclip");
            Product::Truncated { length_nt: truncated_length(s.key.start + colors.len(), j_max, scheme) }
        };
        pool.add(StrandKey { form: Form::Ds, product: Some(product), ..s.key.clone() }, s.abundance);
    }
    Ok(pool)
}

/// Keeps entries whose length lies in `min_nt..=max_nt`.
pub fn gel_select(pool: &StrandPool, min_nt: usize, max_nt: usize, scheme: &EncodingScheme) -> StrandPool {
    let mut out = StrandPool::new(format!("gel band {min_nt}..={max_nt} nt"));
    for (k, a) in pool.iter() {
        if (min_nt..=max_nt).contains(&k.length_nt(scheme)) {
            out.add(k.clone(), a);
        }
    }
    out
}

/// Full-length extension product size for an `n`-position strand.
pub fn full_product_len(n: usize, scheme: &EncodingScheme) -> usize {
    n * scheme.codeword_len() + scheme.extension_len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimerPair {
    FwdTag,
    FwdRev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    FixedCycles,
    LateExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcrParams {
    pub cycles: u32,
    pub stop_rule: StopRule,
    /// Total copy number that ends the exponential phase.
    pub plateau: f64,
    pub max_cycles: u32,
    pub efficiency_min: f64,
    pub efficiency_max: f64,
}

impl Default for PcrParams {
    fn default() -> Self {
        PcrParams {
            cycles: 25,
            stop_rule: StopRule::LateExponential,
            plateau: 1e10,
            max_cycles: 60,
            efficiency_min: 0.75,
            efficiency_max: 0.95,
        }
    }
}

impl PcrParams {
    pub fn validate(&self) -> Result<(), ProbeOpError> {
        let ok = 0.0 < self.efficiency_min && self.efficiency_min <= self.efficiency_max && self.efficiency_max <= 1.0;
        if !ok {
            return Err(ProbeOpError::InvalidConfig(format!(
                "efficiency range [{}, {}] must lie in (0, 1]",
                self.efficiency_min, self.efficiency_max
            )));
        }
        if !(self.plateau > 0.0) {
            return Err(ProbeOpError::InvalidConfig("plateau must be positive".into()));
        }
        Ok(())
    }

    /// Per-strand efficiency: a stable hash of the sequence mapped into
    /// `[efficiency_min, efficiency_max)`.
    pub fn efficiency(&self, sequence: &[u8]) -> f64 {
        let frac = (stable_hash(sequence) >> 11) as f64 / (1u64 << 53) as f64;
        self.efficiency_min + (self.efficiency_max - self.efficiency_min) * frac
    }
}

fn has_primer_sites(key: &StrandKey, primers: PrimerPair) -> bool {
    match primers {
        PrimerPair::FwdRev => true,
        PrimerPair::FwdTag => key.product == Some(Product::Full),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcrOutcome {
    pub pool: StrandPool,
    pub cycles: u32,
}

/// Exponential amplification of entries carrying both primer sites; the
/// rest keep their abundance.
pub fn pcr_amplify(
    pool: &StrandPool,
    primers: PrimerPair,
    params: &PcrParams,
    scheme: &EncodingScheme,
) -> Result<PcrOutcome, ProbeOpError> {
    params.validate()?;
    let entries: Vec<(&StrandKey, f64, Option<f64>)> = pool
        .iter()
        .map(|(k, a)| {
            let e = has_primer_sites(k, primers)
                .then(|| params.efficiency(render_segment(k.start, &k.coloring, scheme).as_bytes()));
            (k, a, e)
        })
        .collect();
    let total_after = |c: u32| -> f64 { entries.iter().map(|(_, a, e)| a * e.map_or(1.0, |e| (1.0 + e).powi(c as i32))).sum() };
    let cycles = match params.stop_rule {
        StopRule::FixedCycles => params.cycles,
        StopRule::LateExponential if entries.iter().all(|(_, _, e)| e.is_none()) => 0,
        StopRule::LateExponential => (0..=params.max_cycles).find(|&c| total_after(c) >= params.plateau).unwrap_or(params.max_cycles),
    };
    let mut out = StrandPool::new(format!("PCR {cycles} cycles"));
    for (k, a, e) in entries {
        out.add(k.clone(), a * e.map_or(1.0, |e| (1.0 + e).powi(cycles as i32)));
    }
    Ok(PcrOutcome { pool: out, cycles })
}

/// Copy and entry counts of the non-full extension products.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResidueSummary {
    pub entries: u128,
    pub copies: f64,
    /// Entries per truncated product length.
    pub by_length: BTreeMap<usize, u128>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOpOutcome {
    /// Input strands, and those forming at least one paperclip.
    pub strands: u128,
    pub paperclips: u128,
    /// All extension products; `None` for product-form input, which is
    /// streamed.
    pub extended: Option<StrandPool>,
    pub residue: ResidueSummary,
    pub selected: StrandPool,
    pub amplified: StrandPool,
    pub cycles: u32,
}

/// Binding, extension, gel selection of the full-length band and PCR with
/// the forward and tag primers, all probes applied in a single pass.
#[allow(clippy::too_many_arguments)]
pub fn run_probe_operation(
    library: &Library,
    probes: &[BlockingProbeSeq],
    sel_probes: &[SelectionProbeSeq],
    cfg: &ProtocolConfig,
    params: &PcrParams,
    scheme: &EncodingScheme,
    seed: u64,
) -> Result<ProbeOpOutcome, ProbeOpError> {
    cfg.validate()?;
    params.validate()?;
    match library {
        Library::Pool(pool) => {
            let states = bind_probes(pool, probes, cfg, scheme, seed)?;
            let paperclips = states.iter().filter(|s| s.paperclip()).count() as u128;
            let extended = extend(&states, probes, sel_probes, cfg, scheme, seed)?;
            let mut residue = ResidueSummary::default();
            for (k, a) in extended.iter() {
                if let Some(Product::Truncated { length_nt }) = k.product {
                    residue.entries += 1;
                    residue.copies += a;
                    *residue.by_length.entry(length_nt).or_default() += 1;
                }
            }
            let full_len = pool.iter().next().map_or(0, |(k, _)| full_product_len(k.end() + 1, scheme));
            let selected = gel_select(&extended, full_len, full_len, scheme);
            let pcr = pcr_amplify(&selected, PrimerPair::FwdTag, params, scheme)?;
            Ok(ProbeOpOutcome {
                strands: states.len() as u128,
                paperclips,
                extended: Some(extended),
                residue,
                selected,
                amplified: pcr.pool,
                cycles: pcr.cycles,
            })
        }
        Library::Product(prod) => {
            if !cfg.is_deterministic() {
                return Err(ProbeOpError::RequiresMaterializedPool(prod.n_strands()));
            }
            if prod.form() != Form::Ss {
                return Err(ProbeOpError::NotSingleStranded("product-form library".into()));
            }
            let (full, residue) = stream_product(prod, probes, sel_probes, scheme)?;
            let full_len = full_product_len(prod.segment().1 + 1, scheme);
            let selected = gel_select(&full, full_len, full_len, scheme);
            let pcr = pcr_amplify(&selected, PrimerPair::FwdTag, params, scheme)?;
            Ok(ProbeOpOutcome {
                strands: prod.n_strands(),
                paperclips: residue.entries,
                extended: None,
                residue,
                selected,
                amplified: pcr.pool,
                cycles: pcr.cycles,
            })
        }
    }
}

/// Per-probe site bits of a half-library entry: bit `p` of `a` is set when
/// the entry carries site i of probe `p`, and likewise `b` for site j.
struct SiteMasks {
    a: Vec<u64>,
    b: Vec<u64>,
}

impl SiteMasks {
    fn of(start: usize, colors: &[Color], probes: &[BlockingProbeSeq]) -> Self {
        let words = probes.len().div_ceil(64).max(1);
        let mut m = SiteMasks { a: vec![0; words], b: vec![0; words] };
        let at = |p: usize| p.checked_sub(start).and_then(|k| colors.get(k)).copied();
        for (k, probe) in probes.iter().enumerate() {
            if at(probe.pair.i) == Some(probe.color) {
                m.a[k / 64] |= 1 << (k % 64);
            }
            if at(probe.pair.j) == Some(probe.color) {
                m.b[k / 64] |= 1 << (k % 64);
            }
        }
        m
    }

    fn joined_blocks(&self, other: &SiteMasks) -> bool {
        (0..self.a.len()).any(|w| (self.a[w] | other.a[w]) & (self.b[w] | other.b[w]) != 0)
    }
}

/// Deterministic binding over a product-form library: every strand with a
/// complete site pair is blocked, so only site-free joins are materialized.
fn stream_product(
    prod: &ProductLibrary,
    probes: &[BlockingProbeSeq],
    sel_probes: &[SelectionProbeSeq],
    scheme: &EncodingScheme,
) -> Result<(StrandPool, ResidueSummary), ProbeOpError> {
    let (start, end) = prod.segment();
    let n = end + 1;
    let overlap = prod.overlap();
    let right: Vec<Vec<(&[Color], f64, SiteMasks)>> = Color::ALL
        .into_iter()
        .map(|c| {
            prod.right_for(c)
                .iter()
                .map(|(colors, a)| (colors.as_slice(), a.sqrt(), SiteMasks::of(overlap, colors, probes)))
                .collect()
        })
        .collect();
    for c in Color::ALL {
        for (colors, _, _) in &right[c.index()] {
            check_selection(colors, sel_probes)?;
        }
    }
    type PerLeft = (Vec<(Vec<Color>, f64)>, Vec<(usize, f64)>);
    let per_left: Vec<PerLeft> = prod
        .left()
        .par_iter()
        .map(|(lc, la)| {
            let lm = SiteMasks::of(start, lc, probes);
            let la = la.sqrt();
            let mut full = Vec::new();
            let mut blocked = Vec::new();
            for (rc, ra, rm) in &right[lc.last().expect("non-empty").index()] {
                if lm.joined_blocks(rm) {
                    let j_max = probes
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| {
                            let (w, bit) = (k / 64, 1u64 << (k % 64));
                            (lm.a[w] | rm.a[w]) & (lm.b[w] | rm.b[w]) & bit != 0
                        })
                        .map(|(_, p)| p.pair.j)
                        .max()
                        .expect("blocked");
                    blocked.push((j_max, la * ra));
                } else {
                    let mut colors = lc.clone();
                    colors.extend_from_slice(&rc[1..]);
                    full.push((colors, la * ra));
                }
            }
            (full, blocked)
        })
        .collect();
    let mut pool = StrandPool::new("extension products");
    let mut residue = ResidueSummary::default();
    for (full, blocked) in per_left {
        for (colors, a) in full {
            let key = StrandKey { start, coloring: Coloring(colors), form: Form::Ds, product: Some(Product::Full) };
            pool.add(key, a);
        }
        for (j_max, a) in blocked {
            residue.entries += 1;
            residue.copies += a;
            *residue.by_length.entry(truncated_length(n, j_max, scheme)).or_default() += 1;
        }
    }
    Ok((pool, residue))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{build_blocking_probes, build_selection_probes, generate_codewords, DesignConstraints};
    use crate::graph::{conflict_pairs, oracle_solutions, parse_dimacs, random_path_instance, Graph};
    use crate::library::{assemble_half_library, bridge_libraries, to_ssdna, Digestion, DigestionParams, LibraryParams};

    struct Setup {
        scheme: EncodingScheme,
        probes: Vec<BlockingProbeSeq>,
        sel: Vec<SelectionProbeSeq>,
    }

    fn setup(g: &Graph) -> Setup {
        let scheme = generate_codewords(g.n(), &DesignConstraints::default(), 11).unwrap();
        let probes = build_blocking_probes(&scheme, &conflict_pairs(g).unwrap()).unwrap();
        let sel = build_selection_probes(&scheme).unwrap();
        Setup { scheme, probes, sel }
    }

    fn ss_library(scheme: &EncodingScheme, n: usize, limit: u128) -> Library {
        let p = LibraryParams { materialize_limit: limit, ..Default::default() };
        let lib = if n <= 3 {
            Library::Pool(assemble_half_library(scheme, 0..=n - 1, &p, 0).unwrap())
        } else {
            let mid = (n - 1) / 2;
            let g1 = assemble_half_library(scheme, 0..=mid, &p, 0).unwrap();
            let g2 = assemble_half_library(scheme, mid..=n - 1, &p, 0).unwrap();
            bridge_libraries(&g1, &g2, &p).unwrap()
        };
        to_ssdna(&lib, Digestion::LambdaExo, 0.6, &DigestionParams::default()).unwrap().library
    }

    fn triangle() -> Graph {
        parse_dimacs("p edge 3 3\ne 1 2\ne 2 3\ne 1 3\nx path 1 2 3\n").unwrap()
    }

    fn ss_pool(colorings: &[&str]) -> StrandPool {
        let mut pool = StrandPool::new("test");
        for c in colorings {
            pool.add(StrandKey::new(0, c.parse().unwrap(), Form::Ss), 100.0);
        }
        pool
    }

    #[test]
    fn site_membership() {
        let s = setup(&triangle());
        let cfg = ProtocolConfig::default();
        let states = bind_probes(&ss_pool(&["RYR", "RYB"]), &s.probes, &cfg, &s.scheme, 0).unwrap();
        let by: BTreeMap<String, Vec<Color>> = states
            .iter()
            .map(|st| (st.key.coloring.to_string(), st.bound_probes.iter().map(|&p| s.probes[p].color).collect()))
            .collect();
        assert_eq!(by["RYR"], vec![Color::R]);
        assert!(by["RYB"].is_empty());
    }

    #[test]
    fn sites_match_rendered_sequence() {
        // symbolic site membership agrees with hybridization of both probe sites
        let g = random_path_instance(7, 4, 3).unwrap();
        let s = setup(&g);
        let pool = ss_library(&s.scheme, 7, 1 << 20);
        let pool = pool.materialize("all");
        let l = s.scheme.codeword_len();
        for (k, _) in pool.iter() {
            let seq = render_segment(0, &k.coloring, &s.scheme);
            for probe in &s.probes {
                let w = |p: usize| seq.slice(p * l..(p + 1) * l);
                let hyb = crate::codec::revcomp(&w(probe.pair.i)) == probe.site_a
                    && crate::codec::revcomp(&w(probe.pair.j)) == probe.site_b;
                assert_eq!(hyb, has_sites(0, k.coloring.colors(), probe));
            }
        }
    }

    #[test]
    fn rejects_double_stranded_pool() {
        let s = setup(&triangle());
        let mut pool = StrandPool::new("ds");
        pool.add(StrandKey::new(0, "RYB".parse().unwrap(), Form::Ds), 1.0);
        assert_eq!(
            bind_probes(&pool, &s.probes, &ProtocolConfig::default(), &s.scheme, 0),
            Err(ProbeOpError::NotSingleStranded("ds".into()))
        );
    }

    #[test]
    fn escape_rate_matches_configured_probability() {
        let s = setup(&triangle());
        let cfg = ProtocolConfig { mode: ProtocolMode::AnnealRamp, secondary_structure_penalty: 1.0, ..Default::default() };
        let pool = ss_pool(&["RYR"]);
        let density = hairpin_density(&render_segment(0, &"RYR".parse().unwrap(), &s.scheme));
        let fail = cfg.binding_failure(density);
        assert!(fail > 0.05 && fail < 0.95, "density {density}");
        let trials = 10_000;
        let escaped = (0..trials)
            .filter(|&seed| !bind_probes(&pool, &s.probes, &cfg, &s.scheme, seed).unwrap()[0].paperclip())
            .count();
        let rate = escaped as f64 / trials as f64;
        assert!((rate - fail).abs() < 0.02, "rate {rate} vs {fail}");
    }

    #[test]
    fn failure_probability_formulas() {
        let mut cfg = ProtocolConfig { block_leak_base: 0.1, ..Default::default() };
        assert!((cfg.binding_failure(0.9) - 0.1).abs() < 1e-12);
        assert!((cfg.extension_leak() - 0.1).abs() < 1e-12);
        cfg.polymerase_activity = PolymeraseActivity::HeatActivated;
        assert!((cfg.extension_leak() - 0.2).abs() < 1e-12);
        cfg.block_leak_base = 0.7;
        assert_eq!(cfg.extension_leak(), 1.0);
        let ramp = ProtocolConfig { mode: ProtocolMode::AnnealRamp, secondary_structure_penalty: 2.0, ..Default::default() };
        assert!((ramp.binding_failure(0.2) - 0.4).abs() < 1e-12);
        assert_eq!(ramp.binding_failure(0.9), 1.0);
        let short = ProtocolConfig { probe_excess: 0.5, ..Default::default() };
        assert!((short.binding_failure(0.0) - 0.5).abs() < 1e-12);
        assert!(ProtocolConfig { probe_excess: 0.0, ..Default::default() }.validate().is_err());
        assert!(ProtocolConfig { block_leak_base: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn extension_lengths() {
        for (n, expect) in [(14, 380), (27, 705)] {
            let scheme = generate_codewords(n, &DesignConstraints::default(), 2).unwrap();
            assert_eq!(full_product_len(n, &scheme), expect);
        }
    }

    #[test]
    fn blocked_strand_truncates_without_leak() {
        let s = setup(&triangle());
        let cfg = ProtocolConfig::default();
        let states = bind_probes(&ss_pool(&["RYR", "RYB"]), &s.probes, &cfg, &s.scheme, 0).unwrap();
        let ext = extend(&states, &s.probes, &s.sel, &cfg, &s.scheme, 0).unwrap();
        let products: BTreeMap<String, Product> =
            ext.iter().map(|(k, _)| (k.coloring.to_string(), k.product.unwrap())).collect();
        assert_eq!(products["RYB"], Product::Full);
        // arrested at position 2, the last one: only the extension remains
        assert_eq!(products["RYR"], Product::Truncated { length_nt: 30 });
        let full = gel_select(&ext, 105, 105, &s.scheme);
        assert_eq!(full.len(), 1);
        assert_eq!(gel_select(&ext, 0, usize::MAX, &s.scheme).iter().count(), 2);
    }

    #[test]
    fn missing_selection_probe() {
        let s = setup(&triangle());
        let cfg = ProtocolConfig::default();
        let states = bind_probes(&ss_pool(&["RYB"]), &s.probes, &cfg, &s.scheme, 0).unwrap();
        let sel: Vec<_> = s.sel.iter().filter(|p| p.terminal_color != Color::B).cloned().collect();
        assert_eq!(
            extend(&states, &s.probes, &sel, &cfg, &s.scheme, 0),
            Err(ProbeOpError::MissingSelectionProbe(Color::B))
        );
    }

    #[test]
    fn pcr_closed_forms() {
        let scheme = generate_codewords(3, &DesignConstraints::default(), 2).unwrap();
        let mut pool = StrandPool::new("x");
        let full = StrandKey { product: Some(Product::Full), ..StrandKey::new(0, "RYB".parse().unwrap(), Form::Ds) };
        let trunc = StrandKey {
            product: Some(Product::Truncated { length_nt: 55 }),
            ..StrandKey::new(0, "RYR".parse().unwrap(), Form::Ds)
        };
        pool.add(full.clone(), 1.0);
        pool.add(trunc.clone(), 1.0);
        let fixed = |e: f64, cycles| PcrParams {
            cycles,
            stop_rule: StopRule::FixedCycles,
            efficiency_min: e,
            efficiency_max: e,
            ..Default::default()
        };
        let out = pcr_amplify(&pool, PrimerPair::FwdTag, &fixed(1.0, 10), &scheme).unwrap();
        assert_eq!(out.pool.get(&full), Some(1024.0));
        assert_eq!(out.pool.get(&trunc), Some(1.0));
        let out = pcr_amplify(&pool, PrimerPair::FwdTag, &fixed(0.8, 25), &scheme).unwrap();
        let expect = 1.8f64.powi(25);
        assert!((out.pool.get(&full).unwrap() - expect).abs() < 1e-6 * expect);
        // 25 * ln(1.8) = 14.6947, e^14.6947 = 2.4089e6
        assert!((expect - (25.0 * 1.8f64.ln()).exp()).abs() < 1e-3);
        assert!((expect - 2.4089e6).abs() < 1e2);
        let both = pcr_amplify(&pool, PrimerPair::FwdRev, &fixed(1.0, 3), &scheme).unwrap();
        assert_eq!(both.pool.get(&trunc), Some(8.0));
    }

    #[test]
    fn late_exponential_stops_at_plateau() {
        let scheme = generate_codewords(3, &DesignConstraints::default(), 2).unwrap();
        let mut pool = StrandPool::new("x");
        let full = StrandKey { product: Some(Product::Full), ..StrandKey::new(0, "RYB".parse().unwrap(), Form::Ds) };
        pool.add(full.clone(), 1000.0);
        let p = PcrParams { efficiency_min: 1.0, efficiency_max: 1.0, plateau: 1e6, ..Default::default() };
        let out = pcr_amplify(&pool, PrimerPair::FwdTag, &p, &scheme).unwrap();
        assert_eq!(out.cycles, 10);
        assert_eq!(out.pool.get(&full), Some(1_024_000.0));
        let empty = pcr_amplify(&StrandPool::new("e"), PrimerPair::FwdTag, &p, &scheme).unwrap();
        assert_eq!(empty.cycles, 0);
    }

    #[test]
    fn efficiency_in_range_and_stable() {
        let p = PcrParams::default();
        for k in 0..200u32 {
            let e = p.efficiency(&k.to_le_bytes());
            assert!((0.75..0.95).contains(&e));
        }
        assert_eq!(p.efficiency(b"ACGT"), p.efficiency(b"ACGT"));
    }

    #[test]
    fn triangle_survivors_are_the_oracle() {
        let g = triangle();
        let s = setup(&g);
        let lib = ss_library(&s.scheme, 3, 1 << 20);
        assert_eq!(lib.n_strands(), 12);
        let out = run_probe_operation(&lib, &s.probes, &s.sel, &ProtocolConfig::default(), &PcrParams::default(), &s.scheme, 1).unwrap();
        let survivors: std::collections::BTreeSet<Coloring> =
            out.amplified.iter().filter(|(_, a)| *a > 0.0).map(|(k, _)| k.coloring.clone()).collect();
        assert_eq!(survivors, oracle_solutions(&g).unwrap());
        assert_eq!(out.paperclips, 6);
        assert_eq!(out.residue.entries, 6);
        let none = run_probe_operation(&lib, &[], &s.sel, &ProtocolConfig::default(), &PcrParams::default(), &s.scheme, 1).unwrap();
        assert_eq!(none.amplified.len(), 12);
    }

    #[test]
    fn product_streaming_matches_materialized() {
        for seed in 0..4 {
            let g = random_path_instance(9, 5, seed).unwrap();
            let s = setup(&g);
            let pooled = ss_library(&s.scheme, 9, 1 << 20);
            let product = ss_library(&s.scheme, 9, 0);
            assert!(matches!(product, Library::Product(_)));
            let cfg = ProtocolConfig::default();
            let pcr = PcrParams::default();
            let a = run_probe_operation(&pooled, &s.probes, &s.sel, &cfg, &pcr, &s.scheme, 5).unwrap();
            let b = run_probe_operation(&product, &s.probes, &s.sel, &cfg, &pcr, &s.scheme, 5).unwrap();
            assert_eq!(a.amplified.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>(), b.amplified.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>());
            assert_eq!(a.cycles, b.cycles);
            assert_eq!((a.strands, a.paperclips), (b.strands, b.paperclips));
            assert_eq!(a.residue.by_length, b.residue.by_length);
            let stochastic = ProtocolConfig { block_leak_base: 0.1, ..cfg };
            assert_eq!(
                run_probe_operation(&product, &s.probes, &s.sel, &stochastic, &pcr, &s.scheme, 5).unwrap_err(),
                ProbeOpError::RequiresMaterializedPool(product.n_strands())
            );
        }
    }

    #[test]
    fn protocol_contrast_on_equal_seeds() {
        let g = random_path_instance(8, 6, 1).unwrap();
        let s = setup(&g);
        let lib = ss_library(&s.scheme, 8, 1 << 20);
        let oracle = oracle_solutions(&g).unwrap();
        let invalid = |cfg: &ProtocolConfig, seed| {
            let out = run_probe_operation(&lib, &s.probes, &s.sel, cfg, &PcrParams::default(), &s.scheme, seed).unwrap();
            out.amplified.iter().filter(|(k, _)| !oracle.contains(&k.coloring)).count()
        };
        let ramp = ProtocolConfig { mode: ProtocolMode::AnnealRamp, secondary_structure_penalty: 1.0, ..Default::default() };
        let direct = ProtocolConfig::default();
        for seed in 0..5 {
            assert_eq!(invalid(&direct, seed), 0);
            assert!(invalid(&ramp, seed) > 0);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn sound_and_complete_at_zero_leak(n in 3usize..9, chords in 1usize..8, seed in 0u64..1000) {
            let g = random_path_instance(n, chords.min(n), seed).unwrap();
            let s = setup(&g);
            let lib = ss_library(&s.scheme, n, 1 << 20);
            let out = run_probe_operation(&lib, &s.probes, &s.sel, &ProtocolConfig::default(), &PcrParams::default(), &s.scheme, seed).unwrap();
            let survivors: std::collections::BTreeSet<Coloring> = out.amplified.iter().map(|(k, _)| k.coloring.clone()).collect();
            proptest::prop_assert_eq!(&survivors, &oracle_solutions(&g).unwrap());
            // every oracle solution is amplified at least at the slowest rate
            let floor = lib.materialize("x").iter().map(|(_, a)| a).fold(f64::INFINITY, f64::min)
                * 1.75f64.powi(out.cycles as i32);
            for (_, a) in out.amplified.iter() {
                proptest::prop_assert!(a >= floor * (1.0 - 1e-9));
            }
        }

        #[test]
        fn skew_follows_efficiency(seed in 0u64..1000) {
            let g = random_path_instance(6, 2, seed).unwrap();
            let s = setup(&g);
            let lib = ss_library(&s.scheme, 6, 1 << 20);
            let pcr = PcrParams::default();
            let out = run_probe_operation(&lib, &s.probes, &s.sel, &ProtocolConfig::default(), &pcr, &s.scheme, seed).unwrap();
            let rows: Vec<(f64, f64)> = out
                .amplified
                .iter()
                .map(|(k, a)| (pcr.efficiency(render_segment(0, &k.coloring, &s.scheme).as_bytes()), a))
                .collect();
            for x in &rows {
                for y in &rows {
                    if x.0 > y.0 {
                        proptest::prop_assert!(x.1 > y.1);
                    }
                }
            }
        }

        #[test]
        fn deterministic_across_thread_counts(seed in 0u64..100) {
            let g = random_path_instance(7, 4, seed).unwrap();
            let s = setup(&g);
            let lib = ss_library(&s.scheme, 7, 1 << 20);
            let ramp = ProtocolConfig { mode: ProtocolMode::AnnealRamp, secondary_structure_penalty: 1.0, ..Default::default() };
            let run = |threads| {
                rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                    run_probe_operation(&lib, &s.probes, &s.sel, &ramp, &PcrParams::default(), &s.scheme, seed).unwrap()
                })
            };
            proptest::prop_assert_eq!(run(1), run(3));
        }
    }
}
