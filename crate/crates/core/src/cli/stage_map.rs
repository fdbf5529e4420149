//! The nine probe-machine components and the pipeline stages realizing them.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Component {
    pub symbol: &'static str,
    pub name: &'static str,
    pub stage: &'static str,
}

pub const STAGE_MAP: [Component; 9] = [
    Component { symbol: "X", name: "Data Library", stage: "library pools (half-libraries, full library, ssDNA)" },
    Component { symbol: "Y", name: "Probe Library", stage: "codec probe sets (blocking and selection probes)" },
    Component { symbol: "σ1", name: "Data Controller", stage: "library operations (assembly, bridging, digestion)" },
    Component { symbol: "σ2", name: "Probe Controller", stage: "probe construction" },
    Component { symbol: "τ", name: "Probe Operation", stage: "probe operation (binding, extension, gel, PCR)" },
    Component { symbol: "λ", name: "Computing Platform", stage: "simulator runtime" },
    Component { symbol: "η", name: "Detector", stage: "sequencing simulation and decoding" },
    Component { symbol: "Q", name: "True Solution Storage", stage: "accepted solutions in the report" },
    Component { symbol: "C", name: "Residue Collector", stage: "noise and truncated products" },
];

pub fn component(symbol: &str) -> Option<&'static Component> {
    STAGE_MAP.iter().find(|c| c.symbol == symbol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_is_total() {
        for s in ["X", "Y", "σ1", "σ2", "τ", "λ", "η", "Q", "C"] {
            assert!(component(s).is_some(), "{s}");
        }
        let mut symbols: Vec<_> = STAGE_MAP.iter().map(|c| c.symbol).collect();
        symbols.dedup();
        assert_eq!(symbols.len(), 9);
    }
}
