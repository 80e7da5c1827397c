use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{validate_model, FimsmModel, Layer};

/// Remediation list for `model`, grouped by layer from top to bottom.
///
/// A conformant model yields a single line ending in `no gaps`.
pub fn gap_report(model: &FimsmModel) -> String {
    let findings = validate_model(model);
    let title = if model.entity_name().is_empty() {
        "unnamed entity"
    } else {
        model.entity_name()
    };
    let mut out = String::new();
    if findings.is_empty() {
        let _ = writeln!(out, "{title}: no gaps");
        return out;
    }

    let mut by_layer: BTreeMap<Option<Layer>, Vec<_>> = BTreeMap::new();
    for f in &findings {
        let layer = f
            .layer
            .or_else(|| f.element_id.as_deref().and_then(|id| model.element(id)).map(|e| e.layer));
        by_layer.entry(layer).or_default().push(f);
    }

    let _ = writeln!(out, "{title}: {} finding(s)", findings.len());
    for (layer, group) in by_layer {
        let heading = layer.map_or("General", Layer::title);
        let _ = writeln!(out, "\n[{heading}]");
        for f in group {
            let _ = writeln!(out, "  - {} {}: {}", f.severity, f.rule_id, f.message);
            if let Some(suggestion) = &f.suggestion {
                let _ = writeln!(out, "    suggestion: {suggestion}");
            }
        }
    }
    out
}
