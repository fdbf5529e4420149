use serde::Serialize;

use super::{revcomp, CodecError, EncodingScheme, Oligo};
use crate::graph::{Color, ConflictPair};

/// Edge strand templating the ligation of `codeword(position, left)` to
/// `codeword(position + 1, right)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splint {
    pub position: usize,
    pub left: Color,
    pub right: Color,
    pub oligo: Oligo,
}

impl Splint {
    pub fn id(&self) -> String {
        format!("e{}_{}{}", self.position, self.left, self.right)
    }
}

/// The junction a splint must cover: tail of the left codeword followed by
/// the head of the right one.
pub(crate) fn junction(scheme: &EncodingScheme, position: usize, left: Color, right: Color) -> Oligo {
    let c = &scheme.constraints;
    let a = scheme.codeword(position, left);
    let b = scheme.codeword(position + 1, right);
    Oligo::concat(&[&a.slice(a.len() - c.splint_left..a.len()), &b.slice(0..c.splint_right)])
}

/// Six splints per path edge; same-color junctions are never synthesized.
pub fn build_edge_splints(scheme: &EncodingScheme, path: &[usize]) -> Result<Vec<Splint>, CodecError> {
    splints_for_positions(scheme, path.len())
}

pub fn splints_for_positions(scheme: &EncodingScheme, n: usize) -> Result<Vec<Splint>, CodecError> {
    if scheme.n_positions() < n {
        return Err(CodecError::SchemeTooShort { have: scheme.n_positions(), need: n });
    }
    let mut out = Vec::with_capacity(6 * n.saturating_sub(1));
    for position in 0..n.saturating_sub(1) {
        for left in Color::ALL {
            for right in Color::ALL {
                if left == right {
                    continue;
                }
                // revcomp(last l of left) placed after revcomp(first r of right)
                let oligo = revcomp(&junction(scheme, position, left, right));
                out.push(Splint { position, left, right, oligo });
            }
        }
    }
    Ok(out)
}

/// Probe with two recognition sites and a non-extendable 3' end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockingProbeSeq {
    pub pair: ConflictPair,
    pub color: Color,
    #[serde(serialize_with = "ser_oligo")]
    pub site_a: Oligo,
    #[serde(serialize_with = "ser_oligo")]
    pub site_b: Oligo,
    pub spacer_3p: bool,
}

impl BlockingProbeSeq {
    pub fn id(&self) -> String {
        format!("bp{}_{}_{}", self.pair.i, self.pair.j, self.color)
    }

    /// Full probe, 5' to 3'. It binds antiparallel to the strand, so the site
    /// for the downstream position comes first.
    pub fn sequence(&self) -> Oligo {
        Oligo::concat(&[&self.site_b, &self.site_a])
    }
}

pub fn build_blocking_probes(scheme: &EncodingScheme, pairs: &[ConflictPair]) -> Result<Vec<BlockingProbeSeq>, CodecError> {
    let need = pairs.iter().map(|p| p.j + 1).max().unwrap_or(0);
    if scheme.n_positions() < need {
        return Err(CodecError::SchemeTooShort { have: scheme.n_positions(), need });
    }
    Ok(pairs
        .iter()
        .flat_map(|&pair| {
            Color::ALL.into_iter().map(move |color| BlockingProbeSeq {
                pair,
                color,
                site_a: revcomp(scheme.codeword(pair.i, color)),
                site_b: revcomp(scheme.codeword(pair.j, color)),
                spacer_3p: true,
            })
        })
        .collect())
}

/// Three-part selection probe for strands ending in `terminal_color`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelectionProbeSeq {
    pub terminal_color: Color,
    /// Pairs with the bases preceding the strand's final 3' base.
    #[serde(serialize_with = "ser_oligo")]
    pub anchor: Oligo,
    #[serde(serialize_with = "ser_oligo")]
    pub free: Oligo,
    #[serde(serialize_with = "ser_oligo")]
    pub tag_template: Oligo,
}

impl SelectionProbeSeq {
    pub fn id(&self) -> String {
        format!("sel_{}", self.terminal_color)
    }

    /// 5'-tag, free spacer, anchor-3'.
    pub fn sequence(&self) -> Oligo {
        Oligo::concat(&[&self.tag_template, &self.free, &self.anchor])
    }

    pub fn parts(&self) -> [&Oligo; 3] {
        [&self.anchor, &self.free, &self.tag_template]
    }
}

/// Selection probe anchoring the terminal codeword of the given color. The
/// anchor covers the `anchor_len` bases before the last one.
pub fn build_selection_probe(scheme: &EncodingScheme, terminal_color: Color) -> Result<SelectionProbeSeq, CodecError> {
    let last = scheme.n_positions().checked_sub(1).ok_or(CodecError::MissingTerminalCodewords)?;
    let k = scheme.constraints.anchor_len;
    let cw = scheme.codeword(last, terminal_color);
    if k >= cw.len() {
        return Err(CodecError::AnchorTooLong { anchor: k, codeword: cw.len() });
    }
    let end = cw.len() - 1;
    Ok(SelectionProbeSeq {
        terminal_color,
        anchor: revcomp(&cw.slice(end - k..end)),
        free: scheme.free_spacer.clone(),
        tag_template: scheme.tag.clone(),
    })
}

/// One selection probe per terminal color, sharing spacer and tag.
pub fn build_selection_probes(scheme: &EncodingScheme) -> Result<Vec<SelectionProbeSeq>, CodecError> {
    Color::ALL.into_iter().map(|c| build_selection_probe(scheme, c)).collect()
}

fn ser_oligo<S: serde::Serializer>(o: &Oligo, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(o)
}

fn fasta_record(out: &mut String, id: &str, seq: &Oligo) {
    out.push('>');
    out.push_str(id);
    out.push('\n');
    out.push_str(&seq.to_string());
    out.push('\n');
}

/// FASTA of every designed sequence, in a fixed record order.
pub fn design_fasta(
    scheme: &EncodingScheme,
    splints: &[Splint],
    blocking: &[BlockingProbeSeq],
    selection: &[SelectionProbeSeq],
) -> String {
    let mut out = String::new();
    for (p, c, w) in scheme.all_codewords() {
        fasta_record(&mut out, &format!("v{p}_{c}"), w);
    }
    for s in splints {
        fasta_record(&mut out, &s.id(), &s.oligo);
    }
    for b in blocking {
        fasta_record(&mut out, &b.id(), &b.sequence());
    }
    for s in selection {
        fasta_record(&mut out, &s.id(), &s.sequence());
    }
    fasta_record(&mut out, "tag", &scheme.tag);
    fasta_record(&mut out, "fwd", &scheme.fwd_primer);
    fasta_record(&mut out, "rev", &scheme.rev_primer);
    out
}
