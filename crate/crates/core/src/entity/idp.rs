use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::federation::FederationView;
use super::{release_attributes, CredentialMsg, DenyReason, DigitalIdentity, Message, SsoSession};
use crate::crypto::{random_hex, verify_one_time_code, PublicKey, SigningKeyPair};
use crate::protocol::{issue_assertion, AuthnRequest, Issuer, TokenIssuer};
use crate::simnet::{Envelope, Network};
use crate::trust::{evaluate_trust_at, LoaLevel, Protocol, TrustDecision, TrustReason};
use crate::Tick;

pub const DEFAULT_SESSION_LIFETIME: u64 = 600;
pub const DEFAULT_CREDENTIAL_LIFETIME: u64 = 300;
/// One-time codes are accepted for the tick they were minted in and the next.
pub const OTP_WINDOW: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdpConfig {
    pub entity_id: String,
    pub loa: LoaLevel,
    pub protocols: BTreeSet<Protocol>,
    pub session_lifetime: u64,
    pub credential_lifetime: u64,
    /// Set for providers that answer exactly one relying party.
    pub single_sp: Option<String>,
}

impl IdpConfig {
    pub fn new(entity_id: impl Into<String>, loa: LoaLevel, protocols: impl IntoIterator<Item = Protocol>) -> Self {
        Self {
            entity_id: entity_id.into(),
            loa,
            protocols: protocols.into_iter().collect(),
            session_lifetime: DEFAULT_SESSION_LIFETIME,
            credential_lifetime: DEFAULT_CREDENTIAL_LIFETIME,
            single_sp: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("no such user")]
    UnknownUser,
    #[error("password rejected")]
    BadCredential,
    #[error("second factor rejected")]
    BadSecondFactor,
}

impl From<AuthError> for DenyReason {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::UnknownUser => DenyReason::UnknownUser,
            AuthError::BadCredential => DenyReason::BadCredential,
            AuthError::BadSecondFactor => DenyReason::BadSecondFactor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SsoError {
    #[error("no such session")]
    NoSession,
    #[error("session expired")]
    Expired,
    #[error("session level of assurance below the required level")]
    StepUpRequired,
}

#[derive(Clone, Debug)]
struct PendingSso {
    request: AuthnRequest,
    agent: String,
}

/// Identity provider: user store, SSO sessions, credential issuance.
#[derive(Debug)]
pub struct IdentityProvider {
    config: IdpConfig,
    issuer: Issuer,
    tokens: TokenIssuer,
    users: BTreeMap<String, DigitalIdentity>,
    sessions: BTreeMap<String, SsoSession>,
    pending: BTreeMap<String, PendingSso>,
    verifications: BTreeMap<String, u64>,
    federation: FederationView,
    rng: ChaCha20Rng,
}

impl IdentityProvider {
    pub fn new(config: IdpConfig, key: SigningKeyPair, mut rng: ChaCha20Rng) -> Self {
        let issuer = Issuer::new(config.entity_id.clone(), key);
        let token_rng = ChaCha20Rng::from_rng(&mut rng).expect("chacha seeding is infallible");
        let tokens = TokenIssuer::new(issuer.clone(), config.credential_lifetime, token_rng);
        Self {
            config,
            issuer,
            tokens,
            users: BTreeMap::new(),
            sessions: BTreeMap::new(),
            pending: BTreeMap::new(),
            verifications: BTreeMap::new(),
            federation: FederationView::default(),
            rng,
        }
    }

    pub fn entity_id(&self) -> &str {
        &self.config.entity_id
    }

    pub fn config(&self) -> &IdpConfig {
        &self.config
    }

    pub fn public_key(&self) -> PublicKey {
        self.issuer.public_key()
    }

    pub fn set_federation(&mut self, federation: FederationView) {
        self.federation = federation;
    }

    pub fn federation(&self) -> &FederationView {
        &self.federation
    }

    /// Adds an account; false if the username is taken.
    pub fn add_user(&mut self, identity: DigitalIdentity) -> bool {
        if self.users.contains_key(&identity.username) {
            return false;
        }
        self.users.insert(identity.username.clone(), identity);
        true
    }

    pub fn user(&self, username: &str) -> Option<&DigitalIdentity> {
        self.users.get(username)
    }

    /// Password checks performed for `username` so far.
    pub fn password_verifications(&self, username: &str) -> u64 {
        self.verifications.get(username).copied().unwrap_or(0)
    }

    pub fn total_password_verifications(&self) -> u64 {
        self.verifications.values().sum()
    }

    pub fn session(&self, session_id: &str) -> Option<&SsoSession> {
        self.sessions.get(session_id)
    }

    /// Verifies the password and, if given, the one-time code, then opens a
    /// session. One factor caps the level at Basic; two reach the entity's
    /// own level.
    pub fn authenticate(
        &mut self,
        username: &str,
        password: &str,
        second_factor_code: Option<&str>,
        now: Tick,
    ) -> Result<SsoSession, AuthError> {
        let identity = self.users.get(username).ok_or(AuthError::UnknownUser)?;
        *self.verifications.entry(username.to_owned()).or_default() += 1;
        if !identity.password_matches(password) {
            return Err(AuthError::BadCredential);
        }
        let factors = match second_factor_code {
            None => 1,
            Some(code) => {
                let secret = identity.second_factor_secret.as_deref().ok_or(AuthError::BadSecondFactor)?;
                if !verify_one_time_code(secret, code, now.0, OTP_WINDOW) {
                    return Err(AuthError::BadSecondFactor);
                }
                2
            }
        };
        let session = SsoSession {
            session_id: random_hex(&mut self.rng, 16),
            subject: username.to_owned(),
            authn_time: now,
            factors_used: factors,
            achieved_loa: LoaLevel::achievable(self.config.loa, factors),
            expires_at: now + self.config.session_lifetime.max(1),
        };
        self.sessions.insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    /// Returns the live session if it is unexpired and strong enough. Never
    /// touches credentials.
    pub fn resolve_sso(&self, session_id: &str, required_loa: LoaLevel, now: Tick) -> Result<SsoSession, SsoError> {
        let session = self.sessions.get(session_id).ok_or(SsoError::NoSession)?;
        if now > session.expires_at {
            return Err(SsoError::Expired);
        }
        if session.achieved_loa < required_loa {
            return Err(SsoError::StepUpRequired);
        }
        Ok(session.clone())
    }

    fn reply(&self, net: &mut Network, to: &str, correlation: &str, message: &Message) {
        // Replies only go to the sender of the triggering envelope, which is
        // always registered.
        let _ = net.send(&self.config.entity_id, to, correlation, message.encode());
    }

    fn fail(&self, net: &mut Network, pending: &PendingSso, correlation: &str, reason: DenyReason) {
        net.record(&self.config.entity_id, "sso-failure", correlation, reason.to_string());
        let message = Message::SsoFailure {
            target: pending.request.return_address.clone(),
            request_id: pending.request.request_id.clone(),
            reason,
        };
        self.reply(net, &pending.agent, correlation, &message);
    }

    pub fn handle(&mut self, envelope: &Envelope, message: Message, net: &mut Network) {
        let correlation = envelope.correlation_id.as_str();
        let me = self.config.entity_id.clone();
        match message {
            Message::MetadataPush { metadata } => self.federation.install(&me, &metadata, net, correlation),
            Message::SsoRequest { request, session } => {
                let pending = PendingSso {
                    request,
                    agent: envelope.from.clone(),
                };
                self.on_sso_request(pending, session, net, correlation);
            }
            Message::LoginSubmit {
                request_id,
                username,
                password,
                otp,
            } => {
                let Some(pending) = self.pending.remove(&request_id) else {
                    net.record(&me, "ignored", correlation, format!("no pending request {request_id}"));
                    return;
                };
                match self.authenticate(&username, &password, otp.as_deref(), net.now()) {
                    Err(e) => {
                        net.record(&me, "authenticate", correlation, format!("{username}: {e}"));
                        self.fail(net, &pending, correlation, e.into());
                    }
                    Ok(session) => {
                        net.record(
                            &me,
                            "authenticate",
                            correlation,
                            format!("{username}: factors={} loa={}", session.factors_used, session.achieved_loa),
                        );
                        if session.achieved_loa < pending.request.requested_loa {
                            self.fail(net, &pending, correlation, DenyReason::StepUpRequired);
                        } else {
                            self.issue(&session, &pending, net, correlation);
                        }
                    }
                }
            }
            Message::LoginAbort { request_id } => {
                if let Some(pending) = self.pending.remove(&request_id) {
                    self.fail(net, &pending, correlation, DenyReason::StepUpRequired);
                }
            }
            Message::CodeExchange { code, client } => {
                let presenting = envelope.from.as_str();
                let response = if client != presenting {
                    Message::TokenResponse {
                        code,
                        tokens: None,
                        error: Some("client mismatch".into()),
                    }
                } else {
                    match self.tokens.exchange_code(&code, presenting, net.now()) {
                        Ok(tokens) => Message::TokenResponse {
                            code,
                            tokens: Some(tokens.to_wire()),
                            error: None,
                        },
                        Err(e) => Message::TokenResponse {
                            code,
                            tokens: None,
                            error: Some(e.to_string()),
                        },
                    }
                };
                let outcome = match &response {
                    Message::TokenResponse { error: None, .. } => "issued".to_owned(),
                    Message::TokenResponse { error: Some(e), .. } => e.clone(),
                    _ => unreachable!(),
                };
                net.record(&me, "code-exchange", correlation, format!("client={presenting} {outcome}"));
                self.reply(net, presenting, correlation, &response);
            }
            Message::Login { username, password, otp } => {
                let result = match self.authenticate(&username, &password, otp.as_deref(), net.now()) {
                    Ok(s) => {
                        net.record(
                            &me,
                            "authenticate",
                            correlation,
                            format!("{username}: factors={} loa={}", s.factors_used, s.achieved_loa),
                        );
                        Message::LoginResult {
                            session: Some(s.session_id),
                            loa: Some(s.achieved_loa),
                            error: None,
                        }
                    }
                    Err(e) => {
                        net.record(&me, "authenticate", correlation, format!("{username}: {e}"));
                        Message::LoginResult {
                            session: None,
                            loa: None,
                            error: Some(e.into()),
                        }
                    }
                };
                self.reply(net, &envelope.from, correlation, &result);
            }
            other => net.record(&me, "ignored", correlation, other.kind()),
        }
    }

    fn on_sso_request(&mut self, pending: PendingSso, cookie: Option<String>, net: &mut Network, correlation: &str) {
        let me = self.config.entity_id.clone();
        let request = &pending.request;
        net.record(
            &me,
            "sso-request",
            correlation,
            format!("sp={} loa={}", request.sp, request.requested_loa),
        );
        if let Some(only) = &self.config.single_sp {
            if *only != request.sp {
                self.fail(net, &pending, correlation, DenyReason::IdpRefused);
                return;
            }
        }
        if request.requested_loa > self.config.loa {
            self.fail(net, &pending, correlation, DenyReason::LoaInsufficient);
            return;
        }
        let needs_second_factor = match cookie.as_deref() {
            Some(sid) => match self.resolve_sso(sid, request.requested_loa, net.now()) {
                Ok(session) => {
                    net.record(&me, "sso-reuse", correlation, format!("{} loa={}", session.subject, session.achieved_loa));
                    self.issue(&session, &pending, net, correlation);
                    return;
                }
                Err(SsoError::StepUpRequired) => true,
                Err(e) => {
                    net.record(&me, "sso-miss", correlation, e.to_string());
                    request.requested_loa.required_factor_count() >= 2
                }
            },
            None => request.requested_loa.required_factor_count() >= 2,
        };
        let challenge = Message::LoginChallenge {
            request_id: request.request_id.clone(),
            second_factor: needs_second_factor,
        };
        let agent = pending.agent.clone();
        self.pending.insert(request.request_id.clone(), pending);
        self.reply(net, &agent, correlation, &challenge);
    }

    fn issue(&mut self, session: &SsoSession, pending: &PendingSso, net: &mut Network, correlation: &str) {
        let me = self.config.entity_id.clone();
        let request = &pending.request;
        let now = net.now();
        let decision = match &self.federation.metadata {
            Some(md) => evaluate_trust_at(&me, &request.sp, md, &self.federation.agreements, request.requested_loa, now),
            None => TrustDecision::deny(TrustReason::UnknownEntity),
        };
        let Some(identity) = self.users.get(&session.subject) else {
            self.fail(net, pending, correlation, DenyReason::UnknownUser);
            return;
        };
        let attributes = match release_attributes(identity, &decision) {
            Ok(a) => a,
            Err(_) => {
                let reason = DenyReason::from_trust(decision.reason).unwrap_or(DenyReason::NoAgreement);
                self.fail(net, pending, correlation, reason);
                return;
            }
        };
        let sp_speaks = |p: Protocol| self.federation.member(&request.sp).is_some_and(|d| d.speaks(p));
        let protocol = [Protocol::Assertion, Protocol::Token]
            .into_iter()
            .find(|p| self.config.protocols.contains(p) && sp_speaks(*p));
        let attr_names = attributes.keys().cloned().collect::<Vec<_>>().join(",");
        let credential = match protocol {
            Some(Protocol::Assertion) => {
                let assertion = issue_assertion(
                    &self.issuer,
                    request,
                    &session.subject,
                    attributes,
                    session.achieved_loa,
                    now,
                    self.config.credential_lifetime,
                );
                CredentialMsg::Assertion(assertion.to_wire())
            }
            Some(_) => {
                let code = self
                    .tokens
                    .issue_auth_code(request, &session.subject, attributes, session.achieved_loa);
                CredentialMsg::Code { code, issuer: me.clone() }
            }
            None => {
                self.fail(net, pending, correlation, DenyReason::ProtocolMismatch);
                return;
            }
        };
        net.record(
            &me,
            "credential-issued",
            correlation,
            format!(
                "to={} kind={} subject={} loa={} attrs={}",
                request.sp,
                credential.kind(),
                session.subject,
                session.achieved_loa,
                attr_names
            ),
        );
        let response = Message::SsoResponse {
            target: request.return_address.clone(),
            request_id: request.request_id.clone(),
            session: Some(session.session_id.clone()),
            credential,
        };
        self.reply(net, &pending.agent, correlation, &response);
    }
}
