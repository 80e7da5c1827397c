use rand_chacha::ChaCha20Rng;

use super::{
    validate_assertion, validate_id_token, Assertion, CredentialError, IdClaims, IdToken, Issuer, ReplayCache,
    TokenSet, VerifiedIdentity,
};
use crate::crypto::{random_hex, PublicKey};
use crate::trust::Protocol;
use crate::Tick;

/// Credentials a translation proxy accepts and emits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FederatedCredential {
    Assertion(Assertion),
    Tokens(TokenSet),
}

impl FederatedCredential {
    pub fn protocol(&self) -> Protocol {
        match self {
            FederatedCredential::Assertion(_) => Protocol::Assertion,
            FederatedCredential::Tokens(_) => Protocol::Token,
        }
    }

    pub fn issuer(&self) -> &str {
        match self {
            FederatedCredential::Assertion(a) => &a.issuer,
            FederatedCredential::Tokens(t) => &t.id_token.claims.issuer,
        }
    }

    pub fn expires_at(&self) -> Tick {
        match self {
            FederatedCredential::Assertion(a) => a.expires_at,
            FederatedCredential::Tokens(t) => t.id_token.claims.expires_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranslateError {
    #[error("input credential rejected: {0}")]
    InvalidInput(CredentialError),
    #[error("{0} credentials are not a translation target")]
    UnsupportedTarget(Protocol),
}

/// Signing identity and replay state of a translation proxy.
#[derive(Debug)]
pub struct Translator {
    issuer: Issuer,
    lifetime: u64,
    rng: ChaCha20Rng,
    seen: ReplayCache,
}

impl Translator {
    pub fn new(issuer: Issuer, lifetime: u64, rng: ChaCha20Rng) -> Self {
        Self {
            issuer,
            lifetime: lifetime.max(1),
            rng,
            seen: ReplayCache::new(),
        }
    }

    pub fn issuer(&self) -> &Issuer {
        &self.issuer
    }

    /// Validates `input` as addressed to this proxy.
    pub fn accept(
        &mut self,
        input: &FederatedCredential,
        origin_key: &PublicKey,
        now: Tick,
    ) -> Result<VerifiedIdentity, CredentialError> {
        match input {
            FederatedCredential::Assertion(a) => {
                validate_assertion(a, &self.issuer.entity_id, origin_key, now, &mut self.seen)
            }
            FederatedCredential::Tokens(t) => validate_id_token(&t.id_token, &self.issuer.entity_id, origin_key, now),
        }
    }

    /// Re-issues an already validated identity in `target` form for
    /// `target_audience`. Subject, attributes and level are copied verbatim;
    /// expiry is the earlier of the input's and the proxy's own lifetime.
    pub fn reissue(
        &mut self,
        identity: &VerifiedIdentity,
        target: Protocol,
        target_audience: &str,
        now: Tick,
    ) -> Result<FederatedCredential, TranslateError> {
        let expires_at = identity.expires_at.min(now + self.lifetime);
        if expires_at <= now {
            return Err(TranslateError::InvalidInput(CredentialError::Expired));
        }
        let via = Some(identity.via.clone().unwrap_or_else(|| identity.issuer.clone()));
        match target {
            Protocol::Assertion => {
                let mut assertion = Assertion {
                    issuer: self.issuer.entity_id.clone(),
                    subject: identity.subject.clone(),
                    audience: target_audience.to_owned(),
                    attributes: identity.attributes.clone(),
                    achieved_loa: identity.achieved_loa,
                    issued_at: now,
                    expires_at,
                    request_id: identity.request_id.clone(),
                    via,
                    signature: Vec::new(),
                };
                assertion.sign(&self.issuer);
                Ok(FederatedCredential::Assertion(assertion))
            }
            Protocol::Token => {
                let claims = IdClaims {
                    issuer: self.issuer.entity_id.clone(),
                    subject: identity.subject.clone(),
                    audience: target_audience.to_owned(),
                    attributes: identity.attributes.clone(),
                    achieved_loa: identity.achieved_loa,
                    issued_at: now,
                    expires_at,
                    request_id: identity.request_id.clone(),
                    via,
                };
                Ok(FederatedCredential::Tokens(TokenSet {
                    access_token: random_hex(&mut self.rng, 16),
                    id_token: IdToken::sign(claims, &self.issuer),
                }))
            }
            Protocol::Ticket => Err(TranslateError::UnsupportedTarget(Protocol::Ticket)),
        }
    }
}

/// Validates `input` (addressed to the proxy) and re-issues it for
/// `target_audience` in the `target` family, signed by the proxy.
pub fn translate_credential(
    translator: &mut Translator,
    input: &FederatedCredential,
    origin_key: &PublicKey,
    target: Protocol,
    target_audience: &str,
    now: Tick,
) -> Result<FederatedCredential, TranslateError> {
    if target == Protocol::Ticket {
        return Err(TranslateError::UnsupportedTarget(target));
    }
    let identity = translator
        .accept(input, origin_key, now)
        .map_err(TranslateError::InvalidInput)?;
    translator.reissue(&identity, target, target_audience, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SigningKeyPair;
    use crate::protocol::{issue_assertion, AuthnRequest};
    use crate::trust::LoaLevel;
    use rand::SeedableRng;
    use std::collections::BTreeMap;

    fn setup() -> (Issuer, Translator) {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let idp = Issuer::new("partner-idp", SigningKeyPair::generate(&mut rng));
        let proxy = Issuer::new("proxy", SigningKeyPair::generate(&mut rng));
        (idp, Translator::new(proxy, 300, rng))
    }

    fn upstream(idp: &Issuer, now: Tick, lifetime: u64) -> FederatedCredential {
        let req = AuthnRequest {
            request_id: "r-7".into(),
            sp: "proxy".into(),
            requested_loa: LoaLevel::Advanced,
            return_address: "proxy/acs".into(),
        };
        let attrs = BTreeMap::from([("mail".to_string(), "p@partner".to_string())]);
        FederatedCredential::Assertion(issue_assertion(idp, &req, "pat", attrs, LoaLevel::Advanced, now, lifetime))
    }

    #[test]
    fn assertion_to_token_set_preserves_identity() {
        let (idp, mut proxy) = setup();
        let input = upstream(&idp, Tick(1000), 200);
        let out = translate_credential(&mut proxy, &input, &idp.public_key(), Protocol::Token, "cloud", Tick(1000))
            .unwrap();
        let FederatedCredential::Tokens(tokens) = out else {
            panic!("expected a token set");
        };
        let c = &tokens.id_token.claims;
        assert_eq!(c.subject, "pat");
        assert_eq!(c.achieved_loa, LoaLevel::Advanced);
        assert_eq!(c.audience, "cloud");
        assert_eq!(c.issuer, "proxy");
        assert_eq!(c.via.as_deref(), Some("partner-idp"));
        assert_eq!(c.expires_at, Tick(1200), "never extends expiry");
    }

    #[test]
    fn ticket_target_and_tampered_input() {
        let (idp, mut proxy) = setup();
        let input = upstream(&idp, Tick(0), 50);
        assert_eq!(
            translate_credential(&mut proxy, &input, &idp.public_key(), Protocol::Ticket, "x", Tick(1)),
            Err(TranslateError::UnsupportedTarget(Protocol::Ticket))
        );
        let FederatedCredential::Assertion(mut a) = input else { unreachable!() };
        a.subject = "eve".into();
        assert_eq!(
            translate_credential(
                &mut proxy,
                &FederatedCredential::Assertion(a),
                &idp.public_key(),
                Protocol::Token,
                "cloud",
                Tick(1)
            ),
            Err(TranslateError::InvalidInput(CredentialError::BadSignature))
        );
    }
}
