use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_window, CredentialError, Issuer, ReplayCache, VerifiedIdentity};
use crate::crypto::PublicKey;
use crate::trust::LoaLevel;
use crate::wire;
use crate::Tick;

const SIGNATURE_LABEL: &str = "signature";

/// Authentication request a service provider hands to an identity provider.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthnRequest {
    pub request_id: String,
    pub sp: String,
    pub requested_loa: LoaLevel,
    pub return_address: String,
}

/// Signed statement about a subject, addressed to one audience.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub issuer: String,
    pub subject: String,
    pub audience: String,
    pub attributes: BTreeMap<String, String>,
    pub achieved_loa: LoaLevel,
    pub issued_at: Tick,
    pub expires_at: Tick,
    pub request_id: String,
    /// Original issuer when produced by a translation proxy.
    pub via: Option<String>,
    #[serde(skip)]
    pub signature: Vec<u8>,
}

impl Assertion {
    pub fn signed_payload(&self) -> String {
        wire::canonical(self)
    }

    pub(crate) fn sign(&mut self, issuer: &Issuer) {
        self.signature = issuer.key.sign(self.signed_payload().as_bytes());
    }

    pub fn to_wire(&self) -> String {
        wire::encode_detached(&self.signed_payload(), SIGNATURE_LABEL, &self.signature)
    }

    pub fn from_wire(blob: &[u8]) -> Result<Self, CredentialError> {
        let (payload, signature) = wire::decode_detached(blob, SIGNATURE_LABEL)?;
        let mut assertion: Assertion = wire::parse_canonical(payload)?;
        assertion.signature = signature;
        Ok(assertion)
    }

    pub fn verify_signature(&self, issuer_key: &PublicKey) -> bool {
        issuer_key.verify(self.signed_payload().as_bytes(), &self.signature)
    }
}

/// Issues a signed assertion answering `request`.
///
/// The caller is responsible for having filtered `attributes` to the released
/// set and for `achieved_loa` meeting the requested level. A zero lifetime is
/// treated as one tick so that `issued_at < expires_at` always holds.
pub fn issue_assertion(
    issuer: &Issuer,
    request: &AuthnRequest,
    subject: &str,
    attributes: BTreeMap<String, String>,
    achieved_loa: LoaLevel,
    now: Tick,
    lifetime: u64,
) -> Assertion {
    let mut assertion = Assertion {
        issuer: issuer.entity_id.clone(),
        subject: subject.to_owned(),
        audience: request.sp.clone(),
        attributes,
        achieved_loa,
        issued_at: now,
        expires_at: now + lifetime.max(1),
        request_id: request.request_id.clone(),
        via: None,
        signature: Vec::new(),
    };
    assertion.sign(issuer);
    assertion
}

/// Accepts an assertion iff the signature verifies, the audience matches,
/// `now` lies in the validity window and the request id is fresh. The request
/// id is recorded only on acceptance.
pub fn validate_assertion(
    assertion: &Assertion,
    expected_audience: &str,
    issuer_key: &PublicKey,
    now: Tick,
    seen_request_ids: &mut ReplayCache,
) -> Result<VerifiedIdentity, CredentialError> {
    if !assertion.verify_signature(issuer_key) {
        return Err(CredentialError::BadSignature);
    }
    if assertion.audience != expected_audience {
        return Err(CredentialError::WrongAudience);
    }
    check_window(assertion.issued_at, assertion.expires_at, now)?;
    if seen_request_ids.contains(&assertion.request_id) {
        return Err(CredentialError::Replayed);
    }
    seen_request_ids.insert(&assertion.request_id);
    Ok(VerifiedIdentity {
        issuer: assertion.issuer.clone(),
        subject: assertion.subject.clone(),
        attributes: assertion.attributes.clone(),
        achieved_loa: assertion.achieved_loa,
        issued_at: assertion.issued_at,
        expires_at: assertion.expires_at,
        request_id: assertion.request_id.clone(),
        via: assertion.via.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SigningKeyPair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn issuer() -> Issuer {
        Issuer::new("idp", SigningKeyPair::generate(&mut ChaCha20Rng::seed_from_u64(4)))
    }

    fn request(sp: &str) -> AuthnRequest {
        AuthnRequest {
            request_id: "req-1".into(),
            sp: sp.into(),
            requested_loa: LoaLevel::Basic,
            return_address: format!("{sp}/acs"),
        }
    }

    #[test]
    fn threads_audience_request_id_and_expiry() {
        let a = issue_assertion(&issuer(), &request("sp.example"), "alice", BTreeMap::new(), LoaLevel::Basic, Tick(1000), 300);
        assert_eq!(a.audience, "sp.example");
        assert_eq!(a.request_id, "req-1");
        assert_eq!(a.expires_at, Tick(1300));
        assert!(a.verify_signature(&issuer().public_key()));
    }

    #[test]
    fn replay_audience_and_window() {
        let idp = issuer();
        let a = issue_assertion(&idp, &request("A"), "alice", BTreeMap::new(), LoaLevel::Basic, Tick(10), 5);
        let mut seen = ReplayCache::new();
        assert_eq!(
            validate_assertion(&a, "B", &idp.public_key(), Tick(11), &mut seen),
            Err(CredentialError::WrongAudience)
        );
        assert_eq!(
            validate_assertion(&a, "A", &idp.public_key(), Tick(9), &mut seen),
            Err(CredentialError::NotYetValid)
        );
        assert_eq!(
            validate_assertion(&a, "A", &idp.public_key(), Tick(16), &mut seen),
            Err(CredentialError::Expired)
        );
        assert!(seen.is_empty(), "failed validations must not consume the request id");
        let ok = validate_assertion(&a, "A", &idp.public_key(), Tick(15), &mut seen).unwrap();
        assert_eq!(ok.subject, "alice");
        assert_eq!(
            validate_assertion(&a, "A", &idp.public_key(), Tick(15), &mut seen),
            Err(CredentialError::Replayed)
        );
    }

    #[test]
    fn wire_round_trip() {
        let a = issue_assertion(
            &issuer(),
            &request("A"),
            "alice",
            BTreeMap::from([("mail".into(), "a@x".into())]),
            LoaLevel::Advanced,
            Tick(0),
            10,
        );
        assert_eq!(Assertion::from_wire(a.to_wire().as_bytes()).unwrap(), a);
    }
}
