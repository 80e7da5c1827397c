use serde::{Deserialize, Serialize};

use super::{EntityDescriptor, Registry, TrustError};
use crate::crypto::{PublicKey, SigningKeyPair};
use crate::wire::{self, WireError};
use crate::Tick;

const SIGNATURE_LABEL: &str = "signature";

/// Signed aggregate of all member descriptors of one federation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationMetadata {
    pub federation_id: String,
    pub serial: u64,
    pub valid_from: Tick,
    pub valid_until: Tick,
    pub members: Vec<EntityDescriptor>,
    #[serde(skip)]
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetadataError {
    #[error("metadata signature does not verify")]
    BadSignature,
    #[error("metadata is outside its validity window")]
    Expired,
    #[error("malformed metadata: {0}")]
    Malformed(#[from] WireError),
}

impl FederationMetadata {
    /// Canonical bytes covered by the signature.
    pub fn signed_payload(&self) -> String {
        wire::canonical(self)
    }

    pub fn to_wire(&self) -> String {
        wire::encode_detached(&self.signed_payload(), SIGNATURE_LABEL, &self.signature)
    }

    pub fn member(&self, entity_id: &str) -> Option<&EntityDescriptor> {
        self.members.iter().find(|m| m.entity_id == entity_id)
    }

    pub fn is_current(&self, now: Tick) -> bool {
        self.valid_from <= now && now <= self.valid_until
    }
}

impl Registry {
    /// Publishes the next signed metadata aggregate.
    ///
    /// Members are sorted by entity id and the serial is bumped by one on
    /// every call, whether or not the registry changed.
    pub fn aggregate_metadata(
        &mut self,
        ttp_key: &SigningKeyPair,
        now: Tick,
        validity_span: u64,
    ) -> Result<FederationMetadata, TrustError> {
        if self.is_empty() {
            return Err(TrustError::EmptyRegistry);
        }
        if validity_span == 0 {
            return Err(TrustError::InvalidValidity);
        }
        let mut members: Vec<EntityDescriptor> = self.members().cloned().collect();
        members.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
        self.last_serial += 1;
        let mut metadata = FederationMetadata {
            federation_id: self.federation_id.clone(),
            serial: self.last_serial,
            valid_from: now,
            valid_until: now + validity_span,
            members,
            signature: Vec::new(),
        };
        metadata.signature = ttp_key.sign(metadata.signed_payload().as_bytes());
        Ok(metadata)
    }
}

/// Parses a published blob, checks the operator's signature and the
/// validity window at logical time `now`.
pub fn verify_metadata(blob: &[u8], ttp_key: &PublicKey, now: Tick) -> Result<FederationMetadata, MetadataError> {
    let (payload, signature) = wire::decode_detached(blob, SIGNATURE_LABEL)?;
    if !ttp_key.verify(payload.as_bytes(), &signature) {
        return Err(MetadataError::BadSignature);
    }
    let mut metadata: FederationMetadata = wire::parse_canonical(payload)?;
    metadata.signature = signature;
    if !metadata.is_current(now) {
        return Err(MetadataError::Expired);
    }
    Ok(metadata)
}
