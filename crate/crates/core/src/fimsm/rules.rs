use std::collections::BTreeSet;

use super::{ElementKind, FimsmModel, Finding, Layer, LayeredElement, RelationKind, Severity};

/// Published rule identifiers with a one-line description each.
pub const RULE_CATALOGUE: &[(&str, &str)] = &[
    ("F1", "federation readiness of a federated AuthNZ business service"),
    ("L1", "layer coverage and serve/realize adjacency"),
    ("L2", "element kind placement"),
    ("M1", "model availability (informational)"),
];

/// What a federated AuthNZ business service needs before it can operate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Requirement {
    TrustedThirdPartyProcess,
    FimProtocolComponent,
    DiscoveryServiceUsage,
}

impl Requirement {
    pub const ALL: [Requirement; 3] = [
        Requirement::TrustedThirdPartyProcess,
        Requirement::FimProtocolComponent,
        Requirement::DiscoveryServiceUsage,
    ];

    pub fn layer(self) -> Layer {
        match self {
            Requirement::TrustedThirdPartyProcess => Layer::Business,
            Requirement::FimProtocolComponent => Layer::Application,
            Requirement::DiscoveryServiceUsage => Layer::ApplicationService,
        }
    }

    fn missing_message(self) -> &'static str {
        match self {
            Requirement::TrustedThirdPartyProcess => "no trusted third party process",
            Requirement::FimProtocolComponent => "no FIM protocol component",
            Requirement::DiscoveryServiceUsage => "no discovery service usage",
        }
    }

    fn suggestion(self) -> &'static str {
        match self {
            Requirement::TrustedThirdPartyProcess => "add trusted third party process to Business layer",
            Requirement::FimProtocolComponent => "add FIM protocol component to Application layer",
            Requirement::DiscoveryServiceUsage => {
                "add discovery service used by the web service to ApplicationService layer"
            }
        }
    }
}

fn words(name: &str) -> Vec<String> {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const FIM_PROTOCOL_WORDS: &[&str] = &["saml", "shibboleth", "oidc", "openid", "oauth", "adfs", "fim"];

pub(crate) fn is_federated_authnz_service(e: &LayeredElement) -> bool {
    e.layer == Layer::BusinessService
        && e.kind == ElementKind::Service
        && e.name.to_lowercase().contains("federat")
}

fn is_ttp_process(e: &LayeredElement) -> bool {
    let lower = e.name.to_lowercase();
    e.layer == Layer::Business
        && e.kind == ElementKind::Process
        && (lower.contains("trusted third party") || words(&e.name).iter().any(|w| w == "ttp"))
}

fn is_fim_protocol_component(e: &LayeredElement) -> bool {
    let ws = words(&e.name);
    e.layer == Layer::Application
        && e.kind == ElementKind::Component
        && (ws.iter().any(|w| FIM_PROTOCOL_WORDS.contains(&w.as_str()))
            || ws.windows(2).any(|pair| pair[0] == "ad" && pair[1] == "fs"))
}

fn is_discovery_service(e: &LayeredElement) -> bool {
    e.layer == Layer::ApplicationService
        && e.kind == ElementKind::Service
        && e.name.to_lowercase().contains("discovery")
}

fn satisfied(model: &FimsmModel, requirement: Requirement) -> bool {
    match requirement {
        Requirement::TrustedThirdPartyProcess => model.elements().iter().any(is_ttp_process),
        Requirement::FimProtocolComponent => model.elements().iter().any(is_fim_protocol_component),
        Requirement::DiscoveryServiceUsage => {
            let discovery: BTreeSet<&str> = model
                .elements()
                .iter()
                .filter(|e| is_discovery_service(e))
                .map(|e| e.id.as_str())
                .collect();
            model.relations().iter().any(|r| match r.kind {
                RelationKind::Uses => discovery.contains(r.target.as_str()),
                RelationKind::Serves => discovery.contains(r.source.as_str()),
                _ => false,
            })
        }
    }
}

/// Layer a `serves`/`realizes` relation from `source` must land on, if any.
fn allowed_target(kind: RelationKind, source: Layer) -> Option<Layer> {
    match (kind, source) {
        (RelationKind::Serves, Layer::BusinessService) => Some(Layer::External),
        (RelationKind::Serves, Layer::ApplicationService) => Some(Layer::Business),
        (RelationKind::Serves, Layer::TechnicalService) => Some(Layer::Application),
        (RelationKind::Realizes, Layer::Business) => Some(Layer::BusinessService),
        (RelationKind::Realizes, Layer::Application) => Some(Layer::ApplicationService),
        (RelationKind::Realizes, Layer::TechnicalService) => Some(Layer::TechnicalService),
        _ => None,
    }
}

fn finding(
    severity: Severity,
    rule_id: &str,
    message: String,
    element_id: Option<&str>,
    layer: Option<Layer>,
    suggestion: Option<String>,
) -> Finding {
    Finding {
        severity,
        rule_id: rule_id.to_owned(),
        message,
        element_id: element_id.map(str::to_owned),
        layer,
        suggestion,
    }
}

fn layer_rules(model: &FimsmModel, out: &mut Vec<Finding>) {
    let present = model.layers_present();
    for layer in Layer::ALL.into_iter().filter(|l| !present.contains(l)) {
        out.push(finding(
            Severity::Gap,
            "L1",
            format!("no elements on the {layer} layer"),
            None,
            Some(layer),
            Some(format!("add at least one element to {layer} layer")),
        ));
    }

    for relation in model.relations() {
        let (Some(src), Some(dst)) = (model.element(&relation.source), model.element(&relation.target)) else {
            continue;
        };
        let problem = match relation.kind {
            RelationKind::Serves | RelationKind::Realizes => {
                match allowed_target(relation.kind, src.layer) {
                    Some(expected) if expected == dst.layer => None,
                    Some(expected) => Some(format!(
                        "{} {} -> {}: {} must target the {} layer, not {}",
                        relation.kind.keyword(),
                        src.id,
                        dst.id,
                        src.layer,
                        expected,
                        dst.layer
                    )),
                    None if relation.kind == RelationKind::Serves => Some(format!(
                        "serves {} -> {}: only service layers serve the layer above, {} is not a service layer",
                        src.id, dst.id, src.layer
                    )),
                    None => Some(format!(
                        "realizes {} -> {}: {} is not an implementation layer",
                        src.id, dst.id, src.layer
                    )),
                }
            }
            RelationKind::AssignedTo if src.layer != dst.layer => Some(format!(
                "assigned-to {} -> {}: assignment must stay within one layer ({} vs {})",
                src.id, dst.id, src.layer, dst.layer
            )),
            RelationKind::AssignedTo | RelationKind::Uses => None,
        };
        if let Some(message) = problem {
            out.push(finding(
                Severity::Violation,
                "L1",
                message,
                Some(&src.id),
                Some(src.layer),
                Some(format!("reconnect {} according to the layer order", src.id)),
            ));
        }
    }
}

fn placement_rules(model: &FimsmModel, out: &mut Vec<Finding>) {
    for e in model.elements() {
        let home = match e.kind {
            ElementKind::Actor => Layer::External,
            ElementKind::Node => Layer::TechnicalService,
            _ => continue,
        };
        if e.layer != home {
            out.push(finding(
                Severity::Violation,
                "L2",
                format!(
                    "{} {} is placed on the {} layer; {}s belong to the {} layer",
                    e.kind.keyword(),
                    e.id,
                    e.layer,
                    e.kind.keyword(),
                    home
                ),
                Some(&e.id),
                Some(e.layer),
                Some(format!("move {} to {} layer", e.id, home)),
            ));
        }
    }
}

fn federation_rules(model: &FimsmModel, out: &mut Vec<Finding>) {
    if !model.elements().iter().any(is_federated_authnz_service) {
        return;
    }
    for requirement in Requirement::ALL {
        if !satisfied(model, requirement) {
            out.push(finding(
                Severity::Gap,
                "F1",
                requirement.missing_message().to_owned(),
                None,
                Some(requirement.layer()),
                Some(requirement.suggestion().to_owned()),
            ));
        }
    }
}

/// Checks a model against the rule catalogue.
///
/// Findings are sorted by `(rule_id, element_id, layer, message)`; an empty
/// result means the model is fully conformant.
pub fn validate_model(model: &FimsmModel) -> Vec<Finding> {
    let mut findings = Vec::new();
    federation_rules(model, &mut findings);
    layer_rules(model, &mut findings);
    placement_rules(model, &mut findings);
    findings.sort_by(|a, b| {
        (&a.rule_id, &a.element_id, a.layer, &a.message).cmp(&(&b.rule_id, &b.element_id, b.layer, &b.message))
    });
    findings
}
