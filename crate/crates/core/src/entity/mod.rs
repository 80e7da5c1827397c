//! Entity state machines: identity provider, service provider, translation
//! proxy and the user agent that drives front-channel redirects.
//!
//! Each machine reacts to one [`Envelope`](crate::simnet::Envelope) at a time
//! and talks to the others only through the network.

mod agent;
mod federation;
mod idp;
mod message;
mod proxy;
mod sp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::protocol::{CredentialError, ROLE_ATTRIBUTE};
use crate::trust::{FederationMetadata, LoaLevel, Protocol, TrustDecision, TrustReason};
use crate::Tick;

pub use agent::{AgentOutcome, UserAgent};
pub use federation::FederationView;
pub use idp::{AuthError, IdentityProvider, IdpConfig, SsoError, DEFAULT_CREDENTIAL_LIFETIME, DEFAULT_SESSION_LIFETIME, OTP_WINDOW};
pub use message::{CredentialMsg, Message};
pub use proxy::{proxy_forward, Proxy, ProxyError, DEFAULT_TRANSLATION_LIFETIME};
pub use sp::{Resource, ServiceProvider};

/// One user account at an identity provider. The password is kept only as a
/// salted hash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitalIdentity {
    pub username: String,
    pub salt: Vec<u8>,
    pub credential_hash: [u8; 32],
    pub second_factor_secret: Option<Vec<u8>>,
    pub attributes: BTreeMap<String, String>,
    pub roles: BTreeSet<String>,
    pub home_domain: String,
    pub identity_verified: bool,
}

impl DigitalIdentity {
    pub fn new(
        username: impl Into<String>,
        password: &str,
        salt: Vec<u8>,
        home_domain: impl Into<String>,
    ) -> Self {
        let credential_hash = crate::crypto::hash_password(&salt, password);
        Self {
            username: username.into(),
            salt,
            credential_hash,
            second_factor_secret: None,
            attributes: BTreeMap::new(),
            roles: BTreeSet::new(),
            home_domain: home_domain.into(),
            identity_verified: false,
        }
    }

    pub fn password_matches(&self, password: &str) -> bool {
        crate::crypto::hash_password(&self.salt, password) == self.credential_hash
    }

    /// Attributes plus the roles pooled under [`ROLE_ATTRIBUTE`].
    pub fn attribute_view(&self) -> BTreeMap<String, String> {
        let mut view = self.attributes.clone();
        if !self.roles.is_empty() {
            let joined = self.roles.iter().cloned().collect::<Vec<_>>().join(",");
            view.insert(ROLE_ATTRIBUTE.to_owned(), joined);
        }
        view
    }

    pub fn login_hint(&self) -> String {
        format!("{}@{}", self.username, self.home_domain)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsoSession {
    pub session_id: String,
    pub subject: String,
    pub authn_time: Tick,
    pub factors_used: u32,
    pub achieved_loa: LoaLevel,
    pub expires_at: Tick,
}

/// Local permissions per role at one service provider.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PermissionMap {
    pub roles: BTreeMap<String, BTreeSet<String>>,
}

impl PermissionMap {
    pub fn grant<I, S>(mut self, role: &str, permissions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.roles
            .entry(role.to_owned())
            .or_default()
            .extend(permissions.into_iter().map(Into::into));
        self
    }

    /// Unknown roles contribute nothing.
    pub fn permissions_for<'a>(&self, roles: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
        roles
            .into_iter()
            .filter_map(|r| self.roles.get(r))
            .flatten()
            .cloned()
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub upstream_idp: String,
    pub served_sps: Vec<String>,
    #[serde(default)]
    pub translation_targets: BTreeMap<String, Protocol>,
}

impl ProxyConfig {
    pub fn serves(&self, sp: &str) -> bool {
        self.served_sps.iter().any(|s| s == sp)
    }

    /// Target family for `sp`; token sets unless configured otherwise.
    pub fn target_for(&self, sp: &str) -> Protocol {
        self.translation_targets.get(sp).copied().unwrap_or(Protocol::Token)
    }
}

/// Why an access attempt ended without access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    UnknownEntity,
    AmbiguousDomain,
    NoAgreement,
    Blacklisted,
    LoaInsufficient,
    MetadataExpired,
    NoPermission,
    StepUpRequired,
    IdpRefused,
    UnservedSp,
    ProtocolMismatch,
    UnknownUser,
    BadCredential,
    BadSecondFactor,
    BadSignature,
    WrongAudience,
    Expired,
    NotYetValid,
    Replayed,
    Malformed,
    CodeRejected,
    UnknownResource,
    Incomplete,
}

impl DenyReason {
    pub const ALL: [DenyReason; 23] = [
        DenyReason::UnknownEntity,
        DenyReason::AmbiguousDomain,
        DenyReason::NoAgreement,
        DenyReason::Blacklisted,
        DenyReason::LoaInsufficient,
        DenyReason::MetadataExpired,
        DenyReason::NoPermission,
        DenyReason::StepUpRequired,
        DenyReason::IdpRefused,
        DenyReason::UnservedSp,
        DenyReason::ProtocolMismatch,
        DenyReason::UnknownUser,
        DenyReason::BadCredential,
        DenyReason::BadSecondFactor,
        DenyReason::BadSignature,
        DenyReason::WrongAudience,
        DenyReason::Expired,
        DenyReason::NotYetValid,
        DenyReason::Replayed,
        DenyReason::Malformed,
        DenyReason::CodeRejected,
        DenyReason::UnknownResource,
        DenyReason::Incomplete,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            DenyReason::UnknownEntity => "unknown-entity",
            DenyReason::AmbiguousDomain => "ambiguous-domain",
            DenyReason::NoAgreement => "no-agreement",
            DenyReason::Blacklisted => "blacklisted",
            DenyReason::LoaInsufficient => "loa-insufficient",
            DenyReason::MetadataExpired => "metadata-expired",
            DenyReason::NoPermission => "no-permission",
            DenyReason::StepUpRequired => "step-up-required",
            DenyReason::IdpRefused => "idp-refused",
            DenyReason::UnservedSp => "unserved-sp",
            DenyReason::ProtocolMismatch => "protocol-mismatch",
            DenyReason::UnknownUser => "unknown-user",
            DenyReason::BadCredential => "bad-credential",
            DenyReason::BadSecondFactor => "bad-second-factor",
            DenyReason::BadSignature => "bad-signature",
            DenyReason::WrongAudience => "wrong-audience",
            DenyReason::Expired => "expired",
            DenyReason::NotYetValid => "not-yet-valid",
            DenyReason::Replayed => "replayed",
            DenyReason::Malformed => "malformed",
            DenyReason::CodeRejected => "code-rejected",
            DenyReason::UnknownResource => "unknown-resource",
            DenyReason::Incomplete => "incomplete",
        }
    }

    /// Maps a trust denial; `None` for an allowing decision.
    pub fn from_trust(reason: TrustReason) -> Option<DenyReason> {
        Some(match reason {
            TrustReason::Ok => return None,
            TrustReason::NoAgreement => DenyReason::NoAgreement,
            TrustReason::Blacklisted => DenyReason::Blacklisted,
            TrustReason::LoaInsufficient => DenyReason::LoaInsufficient,
            TrustReason::MetadataExpired => DenyReason::MetadataExpired,
            TrustReason::UnknownEntity => DenyReason::UnknownEntity,
        })
    }
}

impl From<CredentialError> for DenyReason {
    fn from(e: CredentialError) -> Self {
        match e {
            CredentialError::BadSignature => DenyReason::BadSignature,
            CredentialError::WrongAudience => DenyReason::WrongAudience,
            CredentialError::Expired => DenyReason::Expired,
            CredentialError::NotYetValid => DenyReason::NotYetValid,
            CredentialError::Replayed => DenyReason::Replayed,
            CredentialError::Malformed(_) => DenyReason::Malformed,
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for DenyReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DenyReason::ALL
            .into_iter()
            .find(|r| r.keyword() == s)
            .ok_or_else(|| format!("unknown deny reason {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessOutcome {
    Granted {
        permissions: BTreeSet<String>,
        loa: LoaLevel,
    },
    Denied(DenyReason),
}

impl AccessOutcome {
    pub fn is_granted(&self) -> bool {
        matches!(self, AccessOutcome::Granted { .. })
    }
}

impl fmt::Display for AccessOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessOutcome::Granted { permissions, loa } => {
                let perms = permissions.iter().cloned().collect::<Vec<_>>().join(",");
                write!(f, "granted {perms} at {loa}")
            }
            AccessOutcome::Denied(reason) => write!(f, "denied {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReleaseError {
    #[error("attributes cannot be released under a denying trust decision")]
    DeniedDecision,
}

/// The identity's attributes (roles included) restricted to the decision's
/// released names. Names the identity lacks are skipped.
pub fn release_attributes(
    identity: &DigitalIdentity,
    decision: &TrustDecision,
) -> Result<BTreeMap<String, String>, ReleaseError> {
    if !decision.allowed {
        return Err(ReleaseError::DeniedDecision);
    }
    let mut view = identity.attribute_view();
    view.retain(|name, _| decision.effective_attributes.contains(name));
    Ok(view)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiscoveryError {
    #[error("no federation member claims domain {0:?}")]
    UnknownDomain(String),
    #[error("domain {domain:?} is claimed by {claimants:?}")]
    AmbiguousDomain { domain: String, claimants: Vec<String> },
}

/// Resolves a `user@domain` or bare-domain hint to the one member claiming
/// that domain. Matching ignores ASCII case.
pub fn discover_idp(hint: &str, metadata: &FederationMetadata) -> Result<String, DiscoveryError> {
    let domain = hint.rsplit('@').next().unwrap_or(hint).trim().to_ascii_lowercase();
    let claimants: Vec<String> = metadata
        .members
        .iter()
        .filter(|m| m.domains.iter().any(|d| d.to_ascii_lowercase() == domain))
        .map(|m| m.entity_id.clone())
        .collect();
    match claimants.len() {
        0 => Err(DiscoveryError::UnknownDomain(domain)),
        1 => Ok(claimants.into_iter().next().expect("one claimant")),
        _ => Err(DiscoveryError::AmbiguousDomain { domain, claimants }),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::crypto::SigningKeyPair;
    use crate::trust::{tests::descriptor, Registry, Role};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub(crate) fn metadata_with_domains(claims: &[(&str, &[&str])]) -> FederationMetadata {
        let mut r = Registry::new("fed");
        for (i, (id, domains)) in claims.iter().enumerate() {
            let mut d = descriptor(id, &[Role::Idp], LoaLevel::Advanced, i as u64 + 1);
            d.domains = domains.iter().map(|s| s.to_string()).collect();
            r.register(d).unwrap();
        }
        let key = SigningKeyPair::generate(&mut ChaCha20Rng::seed_from_u64(99));
        r.aggregate_metadata(&key, Tick(0), 1000).unwrap()
    }

    fn alice() -> DigitalIdentity {
        let mut id = DigitalIdentity::new("alice", "pw", vec![1, 2, 3], "uni.example");
        id.attributes = BTreeMap::from([
            ("mail".into(), "alice@uni.example".into()),
            ("name".into(), "Alice".into()),
            ("dept".into(), "physics".into()),
        ]);
        id
    }

    fn decision(attrs: &[&str]) -> TrustDecision {
        TrustDecision::allow(attrs.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn release_is_intersection() {
        let got = release_attributes(&alice(), &decision(&["mail"])).unwrap();
        assert_eq!(got.keys().collect::<Vec<_>>(), vec!["mail"]);
        let got = release_attributes(&alice(), &decision(&["mail", "phone"])).unwrap();
        assert_eq!(got.keys().collect::<Vec<_>>(), vec!["mail"]);
        assert!(release_attributes(&alice(), &decision(&[])).unwrap().is_empty());
        assert_eq!(
            release_attributes(&alice(), &TrustDecision::deny(TrustReason::NoAgreement)),
            Err(ReleaseError::DeniedDecision)
        );
    }

    #[test]
    fn roles_are_released_as_one_attribute() {
        let mut id = alice();
        id.roles = ["staff", "student"].iter().map(|s| s.to_string()).collect();
        let got = release_attributes(&id, &decision(&["role"])).unwrap();
        assert_eq!(got.get(ROLE_ATTRIBUTE).map(String::as_str), Some("staff,student"));
    }

    #[test]
    fn password_is_not_stored_in_clear() {
        let id = alice();
        assert!(id.password_matches("pw"));
        assert!(!id.password_matches("pw "));
        assert_ne!(&id.credential_hash[..2], b"pw");
    }

    #[test]
    fn discovery() {
        let md = metadata_with_domains(&[("uni", &["uni.example"]), ("corp", &["corp.example"])]);
        assert_eq!(discover_idp("alice@uni.example", &md).unwrap(), "uni");
        assert_eq!(discover_idp("CORP.example", &md).unwrap(), "corp");
        assert_eq!(
            discover_idp("bob@hospital.example", &md),
            Err(DiscoveryError::UnknownDomain("hospital.example".into()))
        );
        let clash = metadata_with_domains(&[("a", &["x.example"]), ("b", &["x.example"])]);
        assert!(matches!(
            discover_idp("u@x.example", &clash),
            Err(DiscoveryError::AmbiguousDomain { .. })
        ));
    }

    #[test]
    fn unknown_roles_map_to_nothing() {
        let map = PermissionMap::default().grant("student", ["read"]);
        let roles = vec!["student".to_string(), "ghost".to_string()];
        assert_eq!(map.permissions_for(&roles), BTreeSet::from(["read".to_string()]));
        assert!(map.permissions_for(&vec!["ghost".to_string()]).is_empty());
    }

    #[test]
    fn outcome_rendering() {
        let g = AccessOutcome::Granted {
            permissions: ["read".to_string(), "write".to_string()].into(),
            loa: LoaLevel::Advanced,
        };
        assert_eq!(g.to_string(), "granted read,write at advanced");
        assert_eq!(AccessOutcome::Denied(DenyReason::UnknownEntity).to_string(), "denied unknown-entity");
        for r in DenyReason::ALL {
            assert_eq!(r.keyword().parse::<DenyReason>(), Ok(r));
        }
    }
}
