use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::federation::FederationView;
use super::{discover_idp, AccessOutcome, CredentialMsg, DenyReason, DiscoveryError, Message, PermissionMap};
use crate::crypto::random_hex;
use crate::protocol::{
    validate_assertion, validate_id_token, Assertion, AuthnRequest, ReplayCache, TokenSet, VerifiedIdentity,
};
use crate::simnet::{Envelope, Network};
use crate::trust::{evaluate_trust_at, LoaLevel};

/// A protected resource and what it takes to use it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resource {
    pub name: String,
    #[serde(default)]
    pub required_loa: LoaLevel,
    pub permission: String,
}

#[derive(Clone, Debug)]
struct PendingAccess {
    agent: String,
    resource: Resource,
    idp: String,
    expected_issuer: String,
    request_id: String,
}

/// Service provider: gates resources behind federated authentication and
/// maps the released roles to local permissions.
#[derive(Debug)]
pub struct ServiceProvider {
    entity_id: String,
    resources: BTreeMap<String, Resource>,
    permissions: PermissionMap,
    proxy_routes: BTreeMap<String, String>,
    federation: FederationView,
    seen: ReplayCache,
    pending: BTreeMap<String, PendingAccess>,
    codes: BTreeMap<String, String>,
    rng: ChaCha20Rng,
}

impl ServiceProvider {
    pub fn new(entity_id: impl Into<String>, permissions: PermissionMap, rng: ChaCha20Rng) -> Self {
        Self {
            entity_id: entity_id.into(),
            resources: BTreeMap::new(),
            permissions,
            proxy_routes: BTreeMap::new(),
            federation: FederationView::default(),
            seen: ReplayCache::new(),
            pending: BTreeMap::new(),
            codes: BTreeMap::new(),
            rng,
        }
    }

    pub fn entity_id(&self) -> &str {
        &self.entity_id
    }

    pub fn add_resource(&mut self, resource: Resource) {
        self.resources.insert(resource.name.clone(), resource);
    }

    pub fn resource(&self, name: &str) -> Option<&Resource> {
        self.resources.get(name)
    }

    /// Users of `idp` are sent through `proxy` instead of directly.
    pub fn route_via(&mut self, idp: impl Into<String>, proxy: impl Into<String>) {
        self.proxy_routes.insert(idp.into(), proxy.into());
    }

    pub fn set_federation(&mut self, federation: FederationView) {
        self.federation = federation;
    }

    pub fn federation(&self) -> &FederationView {
        &self.federation
    }

    fn send(&self, net: &mut Network, to: &str, correlation: &str, message: &Message) {
        if net.send(&self.entity_id, to, correlation, message.encode()).is_err() {
            net.record(&self.entity_id, "unreachable", correlation, to.to_owned());
        }
    }

    fn conclude(&self, net: &mut Network, agent: &str, correlation: &str, outcome: AccessOutcome, subject: &str) {
        let event = if outcome.is_granted() { "access-granted" } else { "access-denied" };
        net.record(&self.entity_id, event, correlation, format!("{subject}: {outcome}"));
        self.send(net, agent, correlation, &Message::AccessResult { outcome });
    }

    pub fn handle(&mut self, envelope: &Envelope, message: Message, net: &mut Network) {
        let correlation = envelope.correlation_id.as_str();
        let me = self.entity_id.clone();
        match message {
            Message::MetadataPush { metadata } => self.federation.install(&me, &metadata, net, correlation),
            Message::AccessRequest { resource, hint } => {
                match self.begin_access(&envelope.from, &resource, &hint, net, correlation) {
                    Ok((target, request)) => {
                        net.record(&me, "authn-redirect", correlation, format!("{hint} -> {target}"));
                        self.send(net, &envelope.from, correlation, &Message::AuthnRedirect { idp: target, request });
                    }
                    Err(reason) => self.conclude(net, &envelope.from, correlation, AccessOutcome::Denied(reason), &hint),
                }
            }
            Message::CredentialPost { request_id, credential } => {
                let Some(pending) = self.pending.remove(&request_id) else {
                    self.conclude(net, &envelope.from, correlation, AccessOutcome::Denied(DenyReason::Replayed), "-");
                    return;
                };
                match credential {
                    CredentialMsg::Code { code, issuer } => {
                        if issuer != pending.expected_issuer {
                            self.conclude(net, &pending.agent, correlation, AccessOutcome::Denied(DenyReason::BadSignature), "-");
                            return;
                        }
                        net.record(&me, "code-redeem", correlation, format!("at {issuer}"));
                        let exchange = Message::CodeExchange {
                            code: code.clone(),
                            client: me.clone(),
                        };
                        self.codes.insert(code, request_id);
                        self.pending.insert(pending.request_id.clone(), pending.clone());
                        self.send(net, &issuer, correlation, &exchange);
                    }
                    other => {
                        let result = self.validate(&pending, &other, net);
                        self.finish(net, &pending, result, correlation);
                    }
                }
            }
            Message::TokenResponse { code, tokens, error } => {
                let Some(pending) = self.codes.remove(&code).and_then(|rid| self.pending.remove(&rid)) else {
                    net.record(&me, "ignored", correlation, "unsolicited token response");
                    return;
                };
                let result = match (tokens, error) {
                    (Some(wire), None) => self.validate(&pending, &CredentialMsg::Tokens(wire), net),
                    (_, e) => {
                        net.record(&me, "code-rejected", correlation, e.unwrap_or_default());
                        Err(DenyReason::CodeRejected)
                    }
                };
                self.finish(net, &pending, result, correlation);
            }
            Message::AuthnFailed { request_id, reason } => {
                if let Some(pending) = self.pending.remove(&request_id) {
                    self.conclude(net, &pending.agent, correlation, AccessOutcome::Denied(reason), "-");
                }
            }
            other => net.record(&me, "ignored", correlation, other.kind()),
        }
    }

    fn begin_access(
        &mut self,
        agent: &str,
        resource: &str,
        hint: &str,
        net: &mut Network,
        correlation: &str,
    ) -> Result<(String, AuthnRequest), DenyReason> {
        let resource = self.resources.get(resource).cloned().ok_or(DenyReason::UnknownResource)?;
        let metadata = self.federation.metadata.as_ref().ok_or(DenyReason::UnknownEntity)?;
        let idp = discover_idp(hint, metadata).map_err(|e| {
            net.record(&self.entity_id, "discovery", correlation, e.to_string());
            match e {
                DiscoveryError::UnknownDomain(_) => DenyReason::UnknownEntity,
                DiscoveryError::AmbiguousDomain { .. } => DenyReason::AmbiguousDomain,
            }
        })?;
        net.record(&self.entity_id, "discovery", correlation, format!("{hint} -> {idp}"));
        let decision = evaluate_trust_at(
            &idp,
            &self.entity_id,
            metadata,
            &self.federation.agreements,
            resource.required_loa,
            net.now(),
        );
        net.record(&self.entity_id, "trust-decision", correlation, format!("{idp}: {}", decision.reason));
        if let Some(reason) = DenyReason::from_trust(decision.reason) {
            return Err(reason);
        }
        let request = AuthnRequest {
            request_id: random_hex(&mut self.rng, 12),
            sp: self.entity_id.clone(),
            requested_loa: resource.required_loa,
            return_address: self.entity_id.clone(),
        };
        let target = self.proxy_routes.get(&idp).cloned().unwrap_or_else(|| idp.clone());
        self.pending.insert(
            request.request_id.clone(),
            PendingAccess {
                agent: agent.to_owned(),
                resource,
                idp,
                expected_issuer: target.clone(),
                request_id: request.request_id.clone(),
            },
        );
        Ok((target, request))
    }

    fn validate(
        &mut self,
        pending: &PendingAccess,
        credential: &CredentialMsg,
        net: &mut Network,
    ) -> Result<VerifiedIdentity, DenyReason> {
        let key = self
            .federation
            .member(&pending.expected_issuer)
            .map(|d| d.verification_key)
            .ok_or(DenyReason::UnknownEntity)?;
        let now = net.now();
        let identity = match credential {
            CredentialMsg::Assertion(wire) => {
                let assertion = Assertion::from_wire(wire.as_bytes())?;
                if assertion.request_id != pending.request_id {
                    return Err(DenyReason::Replayed);
                }
                validate_assertion(&assertion, &self.entity_id, &key, now, &mut self.seen)?
            }
            CredentialMsg::Tokens(wire) => {
                let tokens = TokenSet::from_wire(wire.as_bytes())?;
                if tokens.id_token.claims.request_id != pending.request_id {
                    return Err(DenyReason::Replayed);
                }
                validate_id_token(&tokens.id_token, &self.entity_id, &key, now)?
            }
            CredentialMsg::Code { .. } => return Err(DenyReason::Malformed),
        };
        let vouched_for = identity.via.as_deref().unwrap_or(&identity.issuer);
        if vouched_for != pending.idp {
            return Err(DenyReason::UnknownEntity);
        }
        Ok(identity)
    }

    fn finish(
        &mut self,
        net: &mut Network,
        pending: &PendingAccess,
        result: Result<VerifiedIdentity, DenyReason>,
        correlation: &str,
    ) {
        let identity = match result {
            Ok(identity) => identity,
            Err(reason) => {
                net.record(&self.entity_id, "credential-rejected", correlation, reason.to_string());
                self.conclude(net, &pending.agent, correlation, AccessOutcome::Denied(reason), "-");
                return;
            }
        };
        net.record(
            &self.entity_id,
            "credential-accepted",
            correlation,
            format!("{} from {} loa={}", identity.subject, identity.issuer, identity.achieved_loa),
        );
        let outcome = if identity.achieved_loa < pending.resource.required_loa {
            AccessOutcome::Denied(DenyReason::LoaInsufficient)
        } else {
            let permissions = self.permissions.permissions_for(&identity.roles());
            if permissions.contains(&pending.resource.permission) {
                AccessOutcome::Granted {
                    permissions,
                    loa: identity.achieved_loa,
                }
            } else {
                AccessOutcome::Denied(DenyReason::NoPermission)
            }
        };
        self.conclude(net, &pending.agent, correlation, outcome, &identity.subject);
    }
}
