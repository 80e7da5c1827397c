use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{check_window, AuthnRequest, CredentialError, Issuer, VerifiedIdentity};
use crate::crypto::{random_hex, PublicKey};
use crate::trust::LoaLevel;
use crate::wire;
use crate::Tick;

const SIGNATURE_LABEL: &str = "signature";

/// Claims of an id token. Carries the same mandatory fields as an assertion;
/// `request_id` plays the role of the OIDC nonce.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdClaims {
    pub issuer: String,
    pub subject: String,
    pub audience: String,
    pub attributes: BTreeMap<String, String>,
    pub achieved_loa: LoaLevel,
    pub issued_at: Tick,
    pub expires_at: Tick,
    pub request_id: String,
    pub via: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdToken {
    pub claims: IdClaims,
    pub signature: Vec<u8>,
}

impl IdToken {
    pub(crate) fn sign(claims: IdClaims, issuer: &Issuer) -> Self {
        let signature = issuer.key.sign(wire::canonical(&claims).as_bytes());
        Self { claims, signature }
    }

    pub fn to_wire(&self) -> String {
        wire::encode_detached(&wire::canonical(&self.claims), SIGNATURE_LABEL, &self.signature)
    }

    pub fn from_wire(blob: &[u8]) -> Result<Self, CredentialError> {
        let (payload, signature) = wire::decode_detached(blob, SIGNATURE_LABEL)?;
        let claims = wire::parse_canonical(payload)?;
        Ok(Self { claims, signature })
    }

    pub fn verify_signature(&self, issuer_key: &PublicKey) -> bool {
        issuer_key.verify(wire::canonical(&self.claims).as_bytes(), &self.signature)
    }
}

/// Result of a code exchange. The access token is opaque and never checked
/// by service providers in this testbed; only the id token gates access.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSet {
    pub access_token: String,
    pub id_token: IdToken,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenSetWire {
    access_token: String,
    id_token: String,
}

impl TokenSet {
    pub fn to_wire(&self) -> String {
        wire::canonical(&TokenSetWire {
            access_token: self.access_token.clone(),
            id_token: self.id_token.to_wire(),
        })
    }

    pub fn from_wire(blob: &[u8]) -> Result<Self, CredentialError> {
        let text = std::str::from_utf8(blob).map_err(|_| wire::WireError::Utf8)?;
        let outer: TokenSetWire = wire::parse_canonical(text)?;
        Ok(Self {
            access_token: outer.access_token,
            id_token: IdToken::from_wire(outer.id_token.as_bytes())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OAuthError {
    #[error("unknown authorization code")]
    UnknownCode,
    #[error("authorization code already used")]
    CodeAlreadyUsed,
    #[error("authorization code was issued to another client")]
    WrongClient,
}

#[derive(Clone, Debug)]
struct CodeGrant {
    sp: String,
    subject: String,
    request_id: String,
    attributes: BTreeMap<String, String>,
    achieved_loa: LoaLevel,
    used: bool,
}

/// Authorization-code state of an OIDC provider.
#[derive(Debug)]
pub struct TokenIssuer {
    issuer: Issuer,
    token_lifetime: u64,
    rng: ChaCha20Rng,
    grants: BTreeMap<String, CodeGrant>,
}

impl TokenIssuer {
    pub fn new(issuer: Issuer, token_lifetime: u64, rng: ChaCha20Rng) -> Self {
        Self {
            issuer,
            token_lifetime: token_lifetime.max(1),
            rng,
            grants: BTreeMap::new(),
        }
    }

    pub fn issuer(&self) -> &Issuer {
        &self.issuer
    }

    /// Mints a one-time code bound to the requesting SP, the subject and the
    /// request id. Codes are 128 random bits from the seeded generator.
    pub fn issue_auth_code(
        &mut self,
        request: &AuthnRequest,
        subject: &str,
        attributes: BTreeMap<String, String>,
        achieved_loa: LoaLevel,
    ) -> String {
        let code = loop {
            let candidate = random_hex(&mut self.rng, 16);
            if !self.grants.contains_key(&candidate) {
                break candidate;
            }
        };
        self.grants.insert(
            code.clone(),
            CodeGrant {
                sp: request.sp.clone(),
                subject: subject.to_owned(),
                request_id: request.request_id.clone(),
                attributes,
                achieved_loa,
                used: false,
            },
        );
        code
    }

    /// Redeems `code` for a token set. Succeeds at most once per code and
    /// only for the client the code was bound to.
    pub fn exchange_code(&mut self, code: &str, presenting_sp: &str, now: Tick) -> Result<TokenSet, OAuthError> {
        let grant = self.grants.get_mut(code).ok_or(OAuthError::UnknownCode)?;
        if grant.used {
            return Err(OAuthError::CodeAlreadyUsed);
        }
        if grant.sp != presenting_sp {
            return Err(OAuthError::WrongClient);
        }
        grant.used = true;
        let claims = IdClaims {
            issuer: self.issuer.entity_id.clone(),
            subject: grant.subject.clone(),
            audience: grant.sp.clone(),
            attributes: grant.attributes.clone(),
            achieved_loa: grant.achieved_loa,
            issued_at: now,
            expires_at: now + self.token_lifetime,
            request_id: grant.request_id.clone(),
            via: None,
        };
        let id_token = IdToken::sign(claims, &self.issuer);
        Ok(TokenSet {
            access_token: random_hex(&mut self.rng, 16),
            id_token,
        })
    }
}

/// Checks signature, audience and validity window of an id token. There is
/// no replay check: id tokens are bearer credentials until they expire.
pub fn validate_id_token(
    id_token: &IdToken,
    expected_audience: &str,
    issuer_key: &PublicKey,
    now: Tick,
) -> Result<VerifiedIdentity, CredentialError> {
    if !id_token.verify_signature(issuer_key) {
        return Err(CredentialError::BadSignature);
    }
    let c = &id_token.claims;
    if c.audience != expected_audience {
        return Err(CredentialError::WrongAudience);
    }
    check_window(c.issued_at, c.expires_at, now)?;
    Ok(VerifiedIdentity {
        issuer: c.issuer.clone(),
        subject: c.subject.clone(),
        attributes: c.attributes.clone(),
        achieved_loa: c.achieved_loa,
        issued_at: c.issued_at,
        expires_at: c.expires_at,
        request_id: c.request_id.clone(),
        via: c.via.clone(),
    })
}
