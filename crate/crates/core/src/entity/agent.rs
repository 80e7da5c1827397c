use std::collections::BTreeMap;

use super::{AccessOutcome, DenyReason, Message};
use crate::crypto::one_time_code;
use crate::simnet::{Envelope, Network};
use crate::trust::LoaLevel;

/// Result the agent saw for the flow it started last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AgentOutcome {
    Access(AccessOutcome),
    Login(Result<LoaLevel, DenyReason>),
}

/// Browser of one user: follows redirects, answers login challenges and
/// keeps one session cookie per identity provider.
#[derive(Debug)]
pub struct UserAgent {
    endpoint: String,
    username: String,
    password: String,
    second_factor_secret: Option<Vec<u8>>,
    hint: String,
    cookies: BTreeMap<String, String>,
    use_second_factor: bool,
    password_override: Option<String>,
    outcome: Option<AgentOutcome>,
}

impl UserAgent {
    pub fn new(
        endpoint: impl Into<String>,
        username: impl Into<String>,
        password: impl Into<String>,
        hint: impl Into<String>,
        second_factor_secret: Option<Vec<u8>>,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            username: username.into(),
            password: password.into(),
            second_factor_secret,
            hint: hint.into(),
            cookies: BTreeMap::new(),
            use_second_factor: false,
            password_override: None,
            outcome: None,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn hint(&self) -> &str {
        &self.hint
    }

    pub fn cookie(&self, idp: &str) -> Option<&str> {
        self.cookies.get(idp).map(String::as_str)
    }

    /// Settings for the next flow; clears the previous outcome.
    pub fn prepare(&mut self, use_second_factor: bool, password_override: Option<String>) {
        self.use_second_factor = use_second_factor;
        self.password_override = password_override;
        self.outcome = None;
    }

    pub fn take_outcome(&mut self) -> Option<AgentOutcome> {
        self.outcome.take()
    }

    fn password(&self) -> String {
        self.password_override.clone().unwrap_or_else(|| self.password.clone())
    }

    fn otp(&self, net: &Network) -> Option<String> {
        if !self.use_second_factor {
            return None;
        }
        self.second_factor_secret
            .as_deref()
            .map(|secret| one_time_code(secret, net.now().0))
    }

    pub fn access_request(&self, resource: &str) -> Message {
        Message::AccessRequest {
            resource: resource.to_owned(),
            hint: self.hint.clone(),
        }
    }

    pub fn login_request(&self, net: &Network) -> Message {
        Message::Login {
            username: self.username.clone(),
            password: self.password(),
            otp: self.otp(net),
        }
    }

    fn send(&self, net: &mut Network, to: &str, correlation: &str, message: &Message) {
        if net.send(&self.endpoint, to, correlation, message.encode()).is_err() {
            net.record(&self.endpoint, "unreachable", correlation, to.to_owned());
        }
    }

    pub fn handle(&mut self, envelope: &Envelope, message: Message, net: &mut Network) {
        let correlation = envelope.correlation_id.as_str();
        match message {
            Message::AuthnRedirect { idp, request } => {
                let session = self.cookies.get(&idp).cloned();
                self.send(net, &idp, correlation, &Message::SsoRequest { request, session });
            }
            Message::LoginChallenge {
                request_id,
                second_factor,
            } => {
                let otp = self.otp(net);
                let reply = if second_factor && otp.is_none() {
                    net.record(&self.endpoint, "login-abort", correlation, "second factor not offered");
                    Message::LoginAbort { request_id }
                } else {
                    Message::LoginSubmit {
                        request_id,
                        username: self.username.clone(),
                        password: self.password(),
                        otp,
                    }
                };
                self.send(net, &envelope.from, correlation, &reply);
            }
            Message::SsoResponse {
                target,
                request_id,
                session,
                credential,
            } => {
                if let Some(sid) = session {
                    self.cookies.insert(envelope.from.clone(), sid);
                }
                self.send(net, &target, correlation, &Message::CredentialPost { request_id, credential });
            }
            Message::SsoFailure {
                target,
                request_id,
                reason,
            } => {
                self.send(net, &target, correlation, &Message::AuthnFailed { request_id, reason });
            }
            Message::AccessResult { outcome } => {
                net.record(&self.endpoint, "outcome", correlation, outcome.to_string());
                self.outcome = Some(AgentOutcome::Access(outcome));
            }
            Message::LoginResult { session, loa, error } => {
                let result = match (session, loa, error) {
                    (Some(sid), Some(loa), None) => {
                        self.cookies.insert(envelope.from.clone(), sid);
                        Ok(loa)
                    }
                    (_, _, e) => Err(e.unwrap_or(DenyReason::Malformed)),
                };
                self.outcome = Some(AgentOutcome::Login(result));
            }
            other => net.record(&self.endpoint, "ignored", correlation, other.kind()),
        }
    }
}
