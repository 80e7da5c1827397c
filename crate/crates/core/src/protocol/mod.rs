//! The three credential families and cross-protocol translation.
//!
//! | family    | integrity             | replay protection           |
//! |-----------|-----------------------|-----------------------------|
//! | assertion | Ed25519 by issuer     | request id seen-set         |
//! | token set | Ed25519 over id claims| single-use auth code        |
//! | ticket    | ChaCha20-Poly1305     | authenticator replay cache  |
//!
//! Id tokens are bearer credentials: they are accepted repeatedly until they
//! expire. Every time comparison uses the logical clock.

mod assertion;
mod kerberos;
mod oidc;
mod translate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{PublicKey, SigningKeyPair};
use crate::trust::LoaLevel;
use crate::wire::WireError;
use crate::Tick;

pub use assertion::{issue_assertion, validate_assertion, Assertion, AuthnRequest};
pub use kerberos::{
    ap_exchange, as_exchange, tgs_exchange, ApRequest, AsReply, Authenticator, AuthenticatorStamp, Kdc, KdcConfig, KerberosClient,
    KerberosError, KerberosService, MutualProof, PreAuth, TgsReply, Ticket, TicketContents, TGS_PRINCIPAL,
};
pub use oidc::{validate_id_token, IdClaims, IdToken, OAuthError, TokenIssuer, TokenSet};
pub use translate::{translate_credential, FederatedCredential, TranslateError, Translator};

/// Attribute that carries the subject's roles, comma separated.
pub const ROLE_ATTRIBUTE: &str = "role";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialError {
    #[error("signature does not verify")]
    BadSignature,
    #[error("credential is addressed to another audience")]
    WrongAudience,
    #[error("credential expired")]
    Expired,
    #[error("credential not yet valid")]
    NotYetValid,
    #[error("credential replayed")]
    Replayed,
    #[error("malformed credential: {0}")]
    Malformed(#[from] WireError),
}

/// Identity extracted from a credential that passed validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedIdentity {
    pub issuer: String,
    pub subject: String,
    pub attributes: BTreeMap<String, String>,
    pub achieved_loa: LoaLevel,
    pub issued_at: Tick,
    pub expires_at: Tick,
    pub request_id: String,
    pub via: Option<String>,
}

impl VerifiedIdentity {
    pub fn roles(&self) -> BTreeSet<String> {
        self.attributes
            .get(ROLE_ATTRIBUTE)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|r| !r.is_empty())
                    .map(str::to_owned)
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// An entity id together with the key it signs with.
#[derive(Clone, Debug)]
pub struct Issuer {
    pub entity_id: String,
    pub key: SigningKeyPair,
}

impl Issuer {
    pub fn new(entity_id: impl Into<String>, key: SigningKeyPair) -> Self {
        Self {
            entity_id: entity_id.into(),
            key,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }
}

/// Identifiers already consumed by a relying party.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplayCache {
    seen: BTreeSet<String>,
}

impl ReplayCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.seen.contains(id)
    }

    /// Records `id`; false if it had been recorded before.
    pub fn insert(&mut self, id: &str) -> bool {
        self.seen.insert(id.to_owned())
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

fn check_window(issued_at: Tick, expires_at: Tick, now: Tick) -> Result<(), CredentialError> {
    if now < issued_at {
        return Err(CredentialError::NotYetValid);
    }
    if now > expires_at {
        return Err(CredentialError::Expired);
    }
    Ok(())
}
