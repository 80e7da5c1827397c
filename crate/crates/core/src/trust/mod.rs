//! Federation operator: member registry, signed metadata aggregates,
//! collaboration agreements, level of assurance and trust decisions.

mod agreement;
mod metadata;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::PublicKey;

pub use agreement::{
    evaluate_trust, evaluate_trust_at, service_catalogue, Agreement, AgreementKind, CatalogueEntry, TrustDecision,
    TrustReason,
};
pub use metadata::{verify_metadata, FederationMetadata, MetadataError};

/// Ordered level of assurance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoaLevel {
    #[default]
    None = 0,
    Low = 1,
    Basic = 2,
    Advanced = 3,
    High = 4,
}

impl LoaLevel {
    pub const ALL: [LoaLevel; 5] = [
        LoaLevel::None,
        LoaLevel::Low,
        LoaLevel::Basic,
        LoaLevel::Advanced,
        LoaLevel::High,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    /// Authentication factors needed to reach this level.
    pub fn required_factor_count(self) -> u32 {
        match self {
            LoaLevel::None | LoaLevel::Low | LoaLevel::Basic => 1,
            LoaLevel::Advanced | LoaLevel::High => 2,
        }
    }

    /// Highest level reachable with `factors` verified factors, capped by the
    /// entity's own level.
    pub fn achievable(entity_loa: LoaLevel, factors: u32) -> LoaLevel {
        LoaLevel::ALL
            .into_iter()
            .filter(|l| *l <= entity_loa && l.required_factor_count() <= factors)
            .max()
            .unwrap_or(LoaLevel::None)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            LoaLevel::None => "none",
            LoaLevel::Low => "low",
            LoaLevel::Basic => "basic",
            LoaLevel::Advanced => "advanced",
            LoaLevel::High => "high",
        }
    }
}

impl fmt::Display for LoaLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for LoaLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let wanted = s.to_ascii_lowercase();
        LoaLevel::ALL
            .into_iter()
            .find(|l| l.keyword() == wanted)
            .ok_or_else(|| format!("unknown level of assurance {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Idp,
    Sp,
}

/// Credential family spoken at an endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Assertion,
    Token,
    Ticket,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Assertion => "assertion",
            Protocol::Token => "token",
            Protocol::Ticket => "ticket",
        })
    }
}

/// One member record of a federation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDescriptor {
    pub entity_id: String,
    pub display_name: String,
    pub roles: BTreeSet<Role>,
    pub protocol_endpoints: BTreeMap<Protocol, String>,
    pub verification_key: PublicKey,
    pub loa: LoaLevel,
    #[serde(default)]
    pub domains: BTreeSet<String>,
}

impl EntityDescriptor {
    pub fn validate(&self) -> Result<(), TrustError> {
        let invalid = |why: &str| Err(TrustError::InvalidDescriptor(format!("{}: {why}", self.entity_id)));
        if self.entity_id.trim().is_empty() {
            return invalid("empty entity id");
        }
        if self.roles.is_empty() {
            return invalid("no roles");
        }
        if self.protocol_endpoints.is_empty() {
            return invalid("roles without any protocol endpoint");
        }
        Ok(())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    pub fn speaks(&self, protocol: Protocol) -> bool {
        self.protocol_endpoints.contains_key(&protocol)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrustError {
    #[error("invalid descriptor {0}")]
    InvalidDescriptor(String),
    #[error("registry is empty")]
    EmptyRegistry,
    #[error("validity span must be positive")]
    InvalidValidity,
    #[error("unknown entity {0}")]
    UnknownEntity(String),
}

/// Member records held by the federation operator.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub federation_id: String,
    #[serde(default)]
    pub last_serial: u64,
    #[serde(default, rename = "entity")]
    entities: Vec<EntityDescriptor>,
}

impl Registry {
    pub fn new(federation_id: impl Into<String>) -> Self {
        Self {
            federation_id: federation_id.into(),
            last_serial: 0,
            entities: Vec::new(),
        }
    }

    /// Stores `descriptor`, replacing any record with the same entity id.
    pub fn register(&mut self, descriptor: EntityDescriptor) -> Result<(), TrustError> {
        descriptor.validate()?;
        match self.entities.iter_mut().find(|d| d.entity_id == descriptor.entity_id) {
            Some(existing) => *existing = descriptor,
            None => self.entities.push(descriptor),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, entity_id: &str) -> Option<&EntityDescriptor> {
        self.entities.iter().find(|d| d.entity_id == entity_id)
    }

    pub fn members(&self) -> impl Iterator<Item = &EntityDescriptor> {
        self.entities.iter()
    }

    /// Checks every stored record, e.g. after loading a registry file.
    pub fn validate(&self) -> Result<(), TrustError> {
        let mut seen = BTreeSet::new();
        for d in &self.entities {
            d.validate()?;
            if !seen.insert(&d.entity_id) {
                return Err(TrustError::InvalidDescriptor(format!("{}: duplicate entity id", d.entity_id)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::crypto::SigningKeyPair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub(crate) fn descriptor(id: &str, roles: &[Role], loa: LoaLevel, seed: u64) -> EntityDescriptor {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        EntityDescriptor {
            entity_id: id.into(),
            display_name: id.to_uppercase(),
            roles: roles.iter().copied().collect(),
            protocol_endpoints: BTreeMap::from([(Protocol::Assertion, format!("{id}/sso"))]),
            verification_key: SigningKeyPair::generate(&mut rng).public_key(),
            loa,
            domains: BTreeSet::new(),
        }
    }

    #[test]
    fn loa_order_and_factor_table() {
        for pair in LoaLevel::ALL.windows(2) {
            assert!(pair[0] < pair[1]);
            assert!(pair[0].required_factor_count() <= pair[1].required_factor_count());
        }
        assert_eq!(LoaLevel::Advanced.required_factor_count(), 2);
        assert_eq!(LoaLevel::Basic.required_factor_count(), 1);
        assert_eq!(LoaLevel::achievable(LoaLevel::Advanced, 1), LoaLevel::Basic);
        assert_eq!(LoaLevel::achievable(LoaLevel::Advanced, 2), LoaLevel::Advanced);
        assert_eq!(LoaLevel::achievable(LoaLevel::Low, 2), LoaLevel::Low);
        assert_eq!("Advanced".parse::<LoaLevel>(), Ok(LoaLevel::Advanced));
    }

    #[test]
    fn register_university_idp() {
        let mut registry = Registry::new("dfn-aai");
        registry
            .register(descriptor("https://idp.uni.example", &[Role::Idp], LoaLevel::Advanced, 1))
            .unwrap();
        assert_eq!(registry.len(), 1);
    }

    #[test]
    fn register_rejects_missing_roles_or_endpoints() {
        let mut registry = Registry::new("f");
        let no_roles = descriptor("a", &[], LoaLevel::Low, 1);
        assert!(matches!(registry.register(no_roles), Err(TrustError::InvalidDescriptor(_))));
        let mut no_endpoints = descriptor("b", &[Role::Sp], LoaLevel::Low, 1);
        no_endpoints.protocol_endpoints.clear();
        assert!(matches!(registry.register(no_endpoints), Err(TrustError::InvalidDescriptor(_))));
        assert!(registry.is_empty());
    }

    #[test]
    fn re_registration_replaces() {
        let mut registry = Registry::new("f");
        registry.register(descriptor("a", &[Role::Idp], LoaLevel::Low, 1)).unwrap();
        let second = descriptor("a", &[Role::Idp, Role::Sp], LoaLevel::High, 2);
        registry.register(second.clone()).unwrap();
        assert_eq!(registry.len(), 1);
        assert_eq!(registry.get("a"), Some(&second));
    }
}
