use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FederationMetadata, LoaLevel, Protocol, Role, TrustError};
use crate::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementKind {
    Contract,
    Whitelist,
    Blacklist,
}

/// Collaboration agreement between two entities, negotiated beforehand.
///
/// `qos` holds declared quality-of-service parameters; they are echoed in
/// traces and never enforced. A blacklist ignores `required_loa` and
/// `released_attributes`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub party_a: String,
    pub party_b: String,
    pub kind: AgreementKind,
    #[serde(default)]
    pub required_loa: LoaLevel,
    #[serde(default)]
    pub released_attributes: BTreeSet<String>,
    #[serde(default)]
    pub qos: BTreeMap<String, String>,
}

impl Agreement {
    pub fn new(party_a: impl Into<String>, party_b: impl Into<String>, kind: AgreementKind) -> Self {
        Self {
            party_a: party_a.into(),
            party_b: party_b.into(),
            kind,
            required_loa: LoaLevel::None,
            released_attributes: BTreeSet::new(),
            qos: BTreeMap::new(),
        }
    }

    pub fn with_loa(mut self, loa: LoaLevel) -> Self {
        self.required_loa = loa;
        self
    }

    pub fn releasing<I, S>(mut self, attributes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.released_attributes = attributes.into_iter().map(Into::into).collect();
        self
    }

    /// True when the agreement binds `x` and `y`, in either order.
    pub fn covers(&self, x: &str, y: &str) -> bool {
        (self.party_a == x && self.party_b == y) || (self.party_a == y && self.party_b == x)
    }

    pub fn is_self_referential(&self) -> bool {
        self.party_a == self.party_b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrustReason {
    Ok,
    NoAgreement,
    Blacklisted,
    LoaInsufficient,
    MetadataExpired,
    UnknownEntity,
}

impl fmt::Display for TrustReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrustReason::Ok => "ok",
            TrustReason::NoAgreement => "no-agreement",
            TrustReason::Blacklisted => "blacklisted",
            TrustReason::LoaInsufficient => "loa-insufficient",
            TrustReason::MetadataExpired => "metadata-expired",
            TrustReason::UnknownEntity => "unknown-entity",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustDecision {
    pub allowed: bool,
    pub reason: TrustReason,
    pub effective_attributes: BTreeSet<String>,
}

impl TrustDecision {
    pub fn allow(attributes: BTreeSet<String>) -> Self {
        Self {
            allowed: true,
            reason: TrustReason::Ok,
            effective_attributes: attributes,
        }
    }

    pub fn deny(reason: TrustReason) -> Self {
        debug_assert_ne!(reason, TrustReason::Ok);
        Self {
            allowed: false,
            reason,
            effective_attributes: BTreeSet::new(),
        }
    }
}

/// Decides whether `idp` may vouch for users towards `sp`.
///
/// Deny by default. A matching blacklist wins over any contract or whitelist.
/// Otherwise at least one contract/whitelist must match and the identity
/// provider's registered level must reach both the agreement's and the
/// request's level. Released attributes are the union over every satisfied
/// agreement.
pub fn evaluate_trust(
    idp: &str,
    sp: &str,
    metadata: &FederationMetadata,
    agreements: &[Agreement],
    requested_loa: LoaLevel,
) -> TrustDecision {
    let (Some(idp_record), Some(_)) = (metadata.member(idp), metadata.member(sp)) else {
        return TrustDecision::deny(TrustReason::UnknownEntity);
    };
    let matching: Vec<&Agreement> = agreements
        .iter()
        .filter(|a| !a.is_self_referential() && a.covers(idp, sp))
        .collect();
    if matching.iter().any(|a| a.kind == AgreementKind::Blacklist) {
        return TrustDecision::deny(TrustReason::Blacklisted);
    }
    let positive: Vec<&Agreement> = matching
        .into_iter()
        .filter(|a| matches!(a.kind, AgreementKind::Contract | AgreementKind::Whitelist))
        .collect();
    if positive.is_empty() {
        return TrustDecision::deny(TrustReason::NoAgreement);
    }
    let satisfied: Vec<&Agreement> = positive
        .into_iter()
        .filter(|a| idp_record.loa >= a.required_loa.max(requested_loa))
        .collect();
    if satisfied.is_empty() {
        return TrustDecision::deny(TrustReason::LoaInsufficient);
    }
    TrustDecision::allow(
        satisfied
            .iter()
            .flat_map(|a| a.released_attributes.iter().cloned())
            .collect(),
    )
}

/// [`evaluate_trust`] preceded by a validity check of the metadata at `now`.
pub fn evaluate_trust_at(
    idp: &str,
    sp: &str,
    metadata: &FederationMetadata,
    agreements: &[Agreement],
    requested_loa: LoaLevel,
    now: Tick,
) -> TrustDecision {
    if !metadata.is_current(now) {
        return TrustDecision::deny(TrustReason::MetadataExpired);
    }
    evaluate_trust(idp, sp, metadata, agreements, requested_loa)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogueEntry {
    pub entity_id: String,
    pub display_name: String,
    pub protocols: Vec<Protocol>,
}

/// Trusted services reachable by users of `for_entity`, sorted by entity id.
///
/// Lists every service provider that is neither blacklisted nor lacking an
/// agreement with `for_entity`; level-of-assurance shortfalls are left to the
/// access-time decision.
pub fn service_catalogue(
    metadata: &FederationMetadata,
    agreements: &[Agreement],
    for_entity: &str,
) -> Result<Vec<CatalogueEntry>, TrustError> {
    if metadata.member(for_entity).is_none() {
        return Err(TrustError::UnknownEntity(for_entity.to_owned()));
    }
    let mut entries: Vec<CatalogueEntry> = metadata
        .members
        .iter()
        .filter(|m| m.has_role(Role::Sp))
        .filter(|m| {
            let decision = evaluate_trust(for_entity, &m.entity_id, metadata, agreements, LoaLevel::None);
            !matches!(decision.reason, TrustReason::NoAgreement | TrustReason::Blacklisted)
        })
        .map(|m| CatalogueEntry {
            entity_id: m.entity_id.clone(),
            display_name: m.display_name.clone(),
            protocols: m.protocol_endpoints.keys().copied().collect(),
        })
        .collect();
    entries.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SigningKeyPair;
    use crate::trust::tests::descriptor;
    use crate::trust::Registry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn metadata() -> FederationMetadata {
        let mut r = Registry::new("fed");
        r.register(descriptor("uni", &[Role::Idp], LoaLevel::Advanced, 1)).unwrap();
        r.register(descriptor("partner", &[Role::Idp], LoaLevel::Advanced, 2)).unwrap();
        r.register(descriptor("company", &[Role::Sp], LoaLevel::Basic, 3)).unwrap();
        r.register(descriptor("journals", &[Role::Sp], LoaLevel::Basic, 4)).unwrap();
        r.register(descriptor("library", &[Role::Sp], LoaLevel::Basic, 5)).unwrap();
        let key = SigningKeyPair::generate(&mut ChaCha20Rng::seed_from_u64(0));
        r.aggregate_metadata(&key, Tick(0), 1000).unwrap()
    }

    #[test]
    fn contract_with_sufficient_loa_is_ok() {
        let agreements = [Agreement::new("company", "partner", AgreementKind::Contract)
            .with_loa(LoaLevel::Basic)
            .releasing(["mail"])];
        let d = evaluate_trust("partner", "company", &metadata(), &agreements, LoaLevel::None);
        assert_eq!(d, TrustDecision::allow(["mail".to_string()].into()));
    }

    #[test]
    fn no_agreement_denies_with_empty_attributes() {
        let d = evaluate_trust("uni", "company", &metadata(), &[], LoaLevel::None);
        assert_eq!(d.reason, TrustReason::NoAgreement);
        assert!(!d.allowed);
        assert!(d.effective_attributes.is_empty());
    }

    #[test]
    fn blacklist_beats_whitelist() {
        let agreements = [
            Agreement::new("uni", "company", AgreementKind::Whitelist),
            Agreement::new("company", "uni", AgreementKind::Blacklist),
        ];
        let d = evaluate_trust("uni", "company", &metadata(), &agreements, LoaLevel::None);
        assert_eq!(d.reason, TrustReason::Blacklisted);
    }

    #[test]
    fn requested_loa_can_exceed_agreement() {
        let agreements = [Agreement::new("uni", "company", AgreementKind::Contract).with_loa(LoaLevel::Low)];
        let md = metadata();
        assert!(evaluate_trust("uni", "company", &md, &agreements, LoaLevel::Advanced).allowed);
        assert_eq!(
            evaluate_trust("uni", "company", &md, &agreements, LoaLevel::High).reason,
            TrustReason::LoaInsufficient
        );
    }

    #[test]
    fn unknown_and_expired() {
        let md = metadata();
        assert_eq!(
            evaluate_trust("hospital", "company", &md, &[], LoaLevel::None).reason,
            TrustReason::UnknownEntity
        );
        assert_eq!(
            evaluate_trust_at("uni", "company", &md, &[], LoaLevel::None, Tick(1001)).reason,
            TrustReason::MetadataExpired
        );
    }

    #[test]
    fn catalogue_lists_contracted_not_blacklisted() {
        let md = metadata();
        let agreements = [
            Agreement::new("uni", "company", AgreementKind::Contract),
            Agreement::new("library", "uni", AgreementKind::Whitelist).with_loa(LoaLevel::High),
            Agreement::new("uni", "journals", AgreementKind::Blacklist),
        ];
        let ids: Vec<_> = service_catalogue(&md, &agreements, "uni")
            .unwrap()
            .into_iter()
            .map(|e| e.entity_id)
            .collect();
        assert_eq!(ids, ["company", "library"]);
        assert!(service_catalogue(&md, &[], "partner").unwrap().is_empty());
        assert_eq!(
            service_catalogue(&md, &agreements, "hospital"),
            Err(TrustError::UnknownEntity("hospital".into()))
        );
    }
}
