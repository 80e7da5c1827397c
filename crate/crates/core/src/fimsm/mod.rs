//! Six-layer entity architecture models and their conformance rules.
//!
//! A model lists the elements an entity runs on each layer (external,
//! business service, business, application service, application, technical
//! service) and the relations between them. [`validate_model`] checks layer
//! placement and federation readiness; [`gap_report`] turns the findings into
//! a remediation list.

mod parse;
mod report;
mod rules;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use parse::{load_model, serialize_model, ModelError};
pub use report::gap_report;
pub use rules::{validate_model, Requirement, RULE_CATALOGUE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    External,
    BusinessService,
    Business,
    ApplicationService,
    Application,
    TechnicalService,
}

impl Layer {
    pub const ALL: [Layer; 6] = [
        Layer::External,
        Layer::BusinessService,
        Layer::Business,
        Layer::ApplicationService,
        Layer::Application,
        Layer::TechnicalService,
    ];

    /// Position from the top (0 = external).
    pub fn depth(self) -> usize {
        self as usize
    }

    pub fn is_service_layer(self) -> bool {
        matches!(
            self,
            Layer::BusinessService | Layer::ApplicationService | Layer::TechnicalService
        )
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Layer::External => "external",
            Layer::BusinessService => "business-service",
            Layer::Business => "business",
            Layer::ApplicationService => "application-service",
            Layer::Application => "application",
            Layer::TechnicalService => "technical-service",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Layer::External => "External",
            Layer::BusinessService => "BusinessService",
            Layer::Business => "Business",
            Layer::ApplicationService => "ApplicationService",
            Layer::Application => "Application",
            Layer::TechnicalService => "TechnicalService",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

fn normalise_keyword(text: &str) -> String {
    text.chars()
        .filter(|c| *c != '-' && *c != '_')
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for Layer {
    type Err = ();

    /// Accepts `business-service`, `business_service` and `BusinessService`.
    fn from_str(s: &str) -> Result<Self, ()> {
        let wanted = normalise_keyword(s);
        Layer::ALL
            .into_iter()
            .find(|layer| normalise_keyword(layer.keyword()) == wanted)
            .ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Actor,
    Service,
    Process,
    Function,
    Component,
    Node,
}

impl ElementKind {
    pub const ALL: [ElementKind; 6] = [
        ElementKind::Actor,
        ElementKind::Service,
        ElementKind::Process,
        ElementKind::Function,
        ElementKind::Component,
        ElementKind::Node,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ElementKind::Actor => "actor",
            ElementKind::Service => "service",
            ElementKind::Process => "process",
            ElementKind::Function => "function",
            ElementKind::Component => "component",
            ElementKind::Node => "node",
        }
    }
}

impl FromStr for ElementKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let wanted = s.to_ascii_lowercase();
        ElementKind::ALL
            .into_iter()
            .find(|k| k.keyword() == wanted)
            .ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationKind {
    Serves,
    Realizes,
    Uses,
    AssignedTo,
}

impl RelationKind {
    pub const ALL: [RelationKind; 4] = [
        RelationKind::Serves,
        RelationKind::Realizes,
        RelationKind::Uses,
        RelationKind::AssignedTo,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            RelationKind::Serves => "serves",
            RelationKind::Realizes => "realizes",
            RelationKind::Uses => "uses",
            RelationKind::AssignedTo => "assigned-to",
        }
    }
}

impl FromStr for RelationKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let wanted = normalise_keyword(s);
        RelationKind::ALL
            .into_iter()
            .find(|k| normalise_keyword(k.keyword()) == wanted)
            .ok_or(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LayeredElement {
    pub id: String,
    pub name: String,
    pub layer: Layer,
    pub kind: ElementKind,
}

impl LayeredElement {
    pub fn new(id: impl Into<String>, layer: Layer, kind: ElementKind, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            layer,
            kind,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub source: String,
    pub target: String,
}

impl Relation {
    pub fn new(kind: RelationKind, source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            kind,
            source: source.into(),
            target: target.into(),
        }
    }
}

/// Structural problems that make a model unusable.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("duplicate element id {0:?}")]
    DuplicateId(String),
    #[error("relation references unknown element {0:?}")]
    DanglingReference(String),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("unknown element kind {0:?}")]
    UnknownKind(String),
    #[error("unknown relation kind {0:?}")]
    UnknownRelation(String),
}

/// Declarative description of one entity's architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FimsmModel {
    entity_name: String,
    elements: Vec<LayeredElement>,
    relations: Vec<Relation>,
}

impl FimsmModel {
    pub fn empty(entity_name: impl Into<String>) -> Self {
        Self {
            entity_name: entity_name.into(),
            elements: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn new(
        entity_name: impl Into<String>,
        elements: Vec<LayeredElement>,
        relations: Vec<Relation>,
    ) -> Result<Self, SchemaError> {
        let mut model = Self::empty(entity_name);
        for element in elements {
            model.add_element(element)?;
        }
        for relation in relations {
            model.add_relation(relation)?;
        }
        Ok(model)
    }

    pub fn add_element(&mut self, element: LayeredElement) -> Result<(), SchemaError> {
        if self.element(&element.id).is_some() {
            return Err(SchemaError::DuplicateId(element.id));
        }
        self.elements.push(element);
        Ok(())
    }

    pub fn add_relation(&mut self, relation: Relation) -> Result<(), SchemaError> {
        for end in [&relation.source, &relation.target] {
            if self.element(end).is_none() {
                return Err(SchemaError::DanglingReference(end.clone()));
            }
        }
        self.relations.push(relation);
        Ok(())
    }

    pub fn entity_name(&self) -> &str {
        &self.entity_name
    }

    pub fn set_entity_name(&mut self, name: impl Into<String>) {
        self.entity_name = name.into();
    }

    pub fn elements(&self) -> &[LayeredElement] {
        &self.elements
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn element(&self, id: &str) -> Option<&LayeredElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn layers_present(&self) -> BTreeSet<Layer> {
        self.elements.iter().map(|e| e.layer).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Gap,
    Violation,
    Info,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Gap => "GAP",
            Severity::Violation => "VIOLATION",
            Severity::Info => "INFO",
        })
    }
}

/// One conformance finding. `layer` locates the finding for reports even when
/// no single element is to blame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub rule_id: String,
    pub message: String,
    pub element_id: Option<String>,
    pub layer: Option<Layer>,
    pub suggestion: Option<String>,
}

impl Finding {
    pub fn is_blocking(&self) -> bool {
        matches!(self.severity, Severity::Gap | Severity::Violation)
    }

    /// `<severity> <rule> [<element>] <message>` as used in golden files.
    pub fn summary_line(&self) -> String {
        format!(
            "{} {} [{}] {}",
            self.severity,
            self.rule_id,
            self.element_id.as_deref().unwrap_or("-"),
            self.message
        )
    }
}
