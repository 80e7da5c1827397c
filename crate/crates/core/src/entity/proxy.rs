use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;

use super::federation::FederationView;
use super::{CredentialMsg, DenyReason, Message, ProxyConfig};
use crate::crypto::{random_hex, PublicKey, SigningKeyPair};
use crate::protocol::{
    validate_assertion, validate_id_token, Assertion, AuthnRequest, CredentialError, FederatedCredential, Issuer,
    ReplayCache, TokenSet, TranslateError, Translator,
};
use crate::simnet::{Envelope, Network};
use crate::trust::Protocol;
use crate::Tick;

pub const DEFAULT_TRANSLATION_LIFETIME: u64 = 300;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProxyError {
    #[error("{0} is not served by this proxy")]
    UnservedSp(String),
    #[error("upstream provider unknown to the federation")]
    UnknownUpstream,
    #[error("upstream credential rejected: {0}")]
    InvalidInput(CredentialError),
    #[error("cannot translate to {0}")]
    UnsupportedTarget(Protocol),
}

impl From<ProxyError> for DenyReason {
    fn from(e: ProxyError) -> Self {
        match e {
            ProxyError::UnservedSp(_) => DenyReason::UnservedSp,
            ProxyError::UnknownUpstream => DenyReason::UnknownEntity,
            ProxyError::InvalidInput(c) => c.into(),
            ProxyError::UnsupportedTarget(_) => DenyReason::ProtocolMismatch,
        }
    }
}

#[derive(Clone, Debug)]
struct Downstream {
    agent: String,
    request: AuthnRequest,
}

/// Translation proxy in front of one upstream identity provider. It is the
/// single relying party of that provider and re-issues each credential to
/// the served service providers in their own family.
#[derive(Debug)]
pub struct Proxy {
    config: ProxyConfig,
    translator: Translator,
    federation: FederationView,
    upstream_key: Option<PublicKey>,
    seen: BTreeMap<String, ReplayCache>,
    downstream: BTreeMap<String, Downstream>,
    codes: BTreeMap<String, String>,
    rng: ChaCha20Rng,
}

impl Proxy {
    pub fn new(entity_id: impl Into<String>, config: ProxyConfig, key: SigningKeyPair, mut rng: ChaCha20Rng) -> Self {
        use rand::SeedableRng;
        let translator_rng = ChaCha20Rng::from_rng(&mut rng).expect("chacha seeding is infallible");
        Self {
            config,
            translator: Translator::new(Issuer::new(entity_id, key), DEFAULT_TRANSLATION_LIFETIME, translator_rng),
            federation: FederationView::default(),
            upstream_key: None,
            seen: BTreeMap::new(),
            downstream: BTreeMap::new(),
            codes: BTreeMap::new(),
            rng,
        }
    }

    pub fn entity_id(&self) -> &str {
        &self.translator.issuer().entity_id
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    pub fn public_key(&self) -> PublicKey {
        self.translator.issuer().public_key()
    }

    pub fn set_federation(&mut self, federation: FederationView) {
        self.federation = federation;
    }

    pub fn federation(&self) -> &FederationView {
        &self.federation
    }

    /// Pins the upstream key directly instead of taking it from metadata.
    pub fn set_upstream_key(&mut self, key: PublicKey) {
        self.upstream_key = Some(key);
    }

    fn upstream_key(&self) -> Option<PublicKey> {
        self.upstream_key
            .or_else(|| self.federation.member(&self.config.upstream_idp).map(|d| d.verification_key))
    }

    /// Validates an upstream credential addressed to the proxy and re-issues
    /// it to `sp`. Replay protection is per served provider, so one upstream
    /// credential can reach each served provider once. `request_id` rebinds
    /// the output to the downstream request when given.
    pub fn forward(
        &mut self,
        sp: &str,
        credential: &FederatedCredential,
        request_id: Option<&str>,
        now: Tick,
    ) -> Result<FederatedCredential, ProxyError> {
        if !self.config.serves(sp) {
            return Err(ProxyError::UnservedSp(sp.to_owned()));
        }
        let key = self.upstream_key().ok_or(ProxyError::UnknownUpstream)?;
        let me = self.entity_id().to_owned();
        let mut identity = match credential {
            FederatedCredential::Assertion(a) => {
                validate_assertion(a, &me, &key, now, self.seen.entry(sp.to_owned()).or_default())
            }
            FederatedCredential::Tokens(t) => validate_id_token(&t.id_token, &me, &key, now),
        }
        .map_err(ProxyError::InvalidInput)?;
        if let Some(rid) = request_id {
            identity.request_id = rid.to_owned();
        }
        self.translator
            .reissue(&identity, self.config.target_for(sp), sp, now)
            .map_err(|e| match e {
                TranslateError::InvalidInput(c) => ProxyError::InvalidInput(c),
                TranslateError::UnsupportedTarget(p) => ProxyError::UnsupportedTarget(p),
            })
    }

    fn send(&self, net: &mut Network, to: &str, correlation: &str, message: &Message) {
        if net.send(self.entity_id(), to, correlation, message.encode()).is_err() {
            net.record(self.entity_id(), "unreachable", correlation, to.to_owned());
        }
    }

    fn fail(&self, net: &mut Network, down: &Downstream, correlation: &str, reason: DenyReason) {
        net.record(self.entity_id(), "proxy-failure", correlation, reason.to_string());
        let message = Message::SsoFailure {
            target: down.request.return_address.clone(),
            request_id: down.request.request_id.clone(),
            reason,
        };
        self.send(net, &down.agent, correlation, &message);
    }

    pub fn handle(&mut self, envelope: &Envelope, message: Message, net: &mut Network) {
        let correlation = envelope.correlation_id.as_str();
        let me = self.entity_id().to_owned();
        match message {
            Message::MetadataPush { metadata } => self.federation.install(&me, &metadata, net, correlation),
            Message::SsoRequest { request, .. } => {
                let down = Downstream {
                    agent: envelope.from.clone(),
                    request,
                };
                if !self.config.serves(&down.request.sp) {
                    self.fail(net, &down, correlation, DenyReason::UnservedSp);
                    return;
                }
                let upstream = AuthnRequest {
                    request_id: random_hex(&mut self.rng, 12),
                    sp: me.clone(),
                    requested_loa: down.request.requested_loa,
                    return_address: me.clone(),
                };
                net.record(
                    &me,
                    "proxy-request",
                    correlation,
                    format!("for {} via {}", down.request.sp, self.config.upstream_idp),
                );
                self.downstream.insert(upstream.request_id.clone(), down);
                let redirect = Message::AuthnRedirect {
                    idp: self.config.upstream_idp.clone(),
                    request: upstream,
                };
                self.send(net, &envelope.from, correlation, &redirect);
            }
            Message::CredentialPost { request_id, credential } => {
                let Some(down) = self.downstream.remove(&request_id) else {
                    net.record(&me, "ignored", correlation, "unsolicited credential");
                    return;
                };
                let parsed = match credential {
                    CredentialMsg::Code { code, issuer } => {
                        if issuer != self.config.upstream_idp {
                            self.fail(net, &down, correlation, DenyReason::BadSignature);
                            return;
                        }
                        self.codes.insert(code.clone(), request_id.clone());
                        self.downstream.insert(request_id, down);
                        let exchange = Message::CodeExchange { code, client: me.clone() };
                        self.send(net, &issuer, correlation, &exchange);
                        return;
                    }
                    CredentialMsg::Assertion(wire) => Assertion::from_wire(wire.as_bytes()).map(FederatedCredential::Assertion),
                    CredentialMsg::Tokens(wire) => TokenSet::from_wire(wire.as_bytes()).map(FederatedCredential::Tokens),
                };
                self.relay(down, parsed, net, correlation);
            }
            Message::TokenResponse { code, tokens, error } => {
                let Some(down) = self.codes.remove(&code).and_then(|rid| self.downstream.remove(&rid)) else {
                    net.record(&me, "ignored", correlation, "unsolicited token response");
                    return;
                };
                match (tokens, error) {
                    (Some(wire), None) => {
                        let parsed = TokenSet::from_wire(wire.as_bytes()).map(FederatedCredential::Tokens);
                        self.relay(down, parsed, net, correlation);
                    }
                    _ => self.fail(net, &down, correlation, DenyReason::CodeRejected),
                }
            }
            Message::AuthnFailed { request_id, reason } => {
                if let Some(down) = self.downstream.remove(&request_id) {
                    self.fail(net, &down, correlation, reason);
                }
            }
            other => net.record(&me, "ignored", correlation, other.kind()),
        }
    }

    fn relay(
        &mut self,
        down: Downstream,
        parsed: Result<FederatedCredential, CredentialError>,
        net: &mut Network,
        correlation: &str,
    ) {
        let result = parsed
            .map_err(ProxyError::InvalidInput)
            .and_then(|c| self.forward(&down.request.sp, &c, Some(&down.request.request_id), net.now()));
        match result {
            Ok(out) => {
                let (credential, subject, loa, attrs) = match &out {
                    FederatedCredential::Assertion(a) => (
                        CredentialMsg::Assertion(a.to_wire()),
                        a.subject.clone(),
                        a.achieved_loa,
                        a.attributes.keys().cloned().collect::<Vec<_>>(),
                    ),
                    FederatedCredential::Tokens(t) => (
                        CredentialMsg::Tokens(t.to_wire()),
                        t.id_token.claims.subject.clone(),
                        t.id_token.claims.achieved_loa,
                        t.id_token.claims.attributes.keys().cloned().collect::<Vec<_>>(),
                    ),
                };
                net.record(
                    self.entity_id(),
                    "credential-translated",
                    correlation,
                    format!(
                        "to={} kind={} subject={subject} loa={loa} attrs={} via={}",
                        down.request.sp,
                        credential.kind(),
                        attrs.join(","),
                        self.config.upstream_idp
                    ),
                );
                let response = Message::SsoResponse {
                    target: down.request.return_address.clone(),
                    request_id: down.request.request_id.clone(),
                    session: None,
                    credential,
                };
                self.send(net, &down.agent, correlation, &response);
            }
            Err(e) => self.fail(net, &down, correlation, e.into()),
        }
    }
}

/// Forwards one upstream credential to a served provider; see
/// [`Proxy::forward`].
pub fn proxy_forward(
    proxy: &mut Proxy,
    sp: &str,
    credential: &FederatedCredential,
    now: Tick,
) -> Result<FederatedCredential, ProxyError> {
    proxy.forward(sp, credential, None, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::issue_assertion;
    use crate::trust::LoaLevel;
    use rand::SeedableRng;

    fn setup() -> (Issuer, Proxy) {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let adfs = Issuer::new("adfs", SigningKeyPair::generate(&mut rng));
        let config = ProxyConfig {
            upstream_idp: "adfs".into(),
            served_sps: vec!["cloud".into(), "files".into(), "hr".into()],
            translation_targets: BTreeMap::from([("files".to_string(), Protocol::Assertion)]),
        };
        let key = SigningKeyPair::generate(&mut rng);
        let mut proxy = Proxy::new("proxy", config, key, rng);
        proxy.set_upstream_key(adfs.public_key());
        (adfs, proxy)
    }

    fn upstream(adfs: &Issuer) -> FederatedCredential {
        let request = AuthnRequest {
            request_id: "up-1".into(),
            sp: "proxy".into(),
            requested_loa: LoaLevel::Basic,
            return_address: "proxy".into(),
        };
        let attrs = BTreeMap::from([("mail".to_string(), "pat@corp".to_string())]);
        FederatedCredential::Assertion(issue_assertion(adfs, &request, "pat", attrs, LoaLevel::Basic, Tick(0), 100))
    }

    #[test]
    fn one_upstream_credential_reaches_each_served_sp() {
        let (adfs, mut proxy) = setup();
        let input = upstream(&adfs);
        let mut outputs = Vec::new();
        for sp in ["cloud", "hr"] {
            let out = proxy_forward(&mut proxy, sp, &input, Tick(1)).unwrap();
            let FederatedCredential::Tokens(t) = &out else { panic!("token set expected") };
            assert_eq!(t.id_token.claims.subject, "pat");
            assert_eq!(t.id_token.claims.audience, sp);
            outputs.push(out);
        }
        let files = proxy_forward(&mut proxy, "files", &input, Tick(1)).unwrap();
        assert_eq!(files.protocol(), Protocol::Assertion);
        outputs.push(files);
        assert_ne!(outputs[0], outputs[1]);
        assert_eq!(
            proxy_forward(&mut proxy, "cloud", &input, Tick(2)),
            Err(ProxyError::InvalidInput(CredentialError::Replayed))
        );
    }

    #[test]
    fn unserved_sp() {
        let (adfs, mut proxy) = setup();
        assert_eq!(
            proxy_forward(&mut proxy, "wiki", &upstream(&adfs), Tick(1)),
            Err(ProxyError::UnservedSp("wiki".into()))
        );
    }
}
