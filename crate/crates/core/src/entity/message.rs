use serde::{Deserialize, Serialize};

use super::{AccessOutcome, DenyReason};
use crate::protocol::AuthnRequest;
use crate::trust::LoaLevel;
use crate::wire;

/// A credential as carried on the front channel. Signed and sealed objects
/// travel in their wire form so that every hop re-parses them strictly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CredentialMsg {
    Assertion(String),
    Code { code: String, issuer: String },
    Tokens(String),
}

impl CredentialMsg {
    pub fn kind(&self) -> &'static str {
        match self {
            CredentialMsg::Assertion(_) => "assertion",
            CredentialMsg::Code { .. } => "code",
            CredentialMsg::Tokens(_) => "tokens",
        }
    }
}

/// Everything entities say to each other over the simulated network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Message {
    /// User agent asks a service provider for a resource.
    AccessRequest { resource: String, hint: String },
    /// Redirect of the user agent to an identity provider (or proxy).
    AuthnRedirect { idp: String, request: AuthnRequest },
    /// User agent presents an authentication request, with its session
    /// cookie for that provider if it holds one.
    SsoRequest {
        request: AuthnRequest,
        session: Option<String>,
    },
    LoginChallenge { request_id: String, second_factor: bool },
    LoginSubmit {
        request_id: String,
        username: String,
        password: String,
        otp: Option<String>,
    },
    LoginAbort { request_id: String },
    /// Credential for `target`; the user agent posts it on.
    SsoResponse {
        target: String,
        request_id: String,
        session: Option<String>,
        credential: CredentialMsg,
    },
    SsoFailure {
        target: String,
        request_id: String,
        reason: DenyReason,
    },
    CredentialPost { request_id: String, credential: CredentialMsg },
    AuthnFailed { request_id: String, reason: DenyReason },
    /// Back channel: a relying party redeems an authorization code.
    CodeExchange { code: String, client: String },
    TokenResponse {
        code: String,
        tokens: Option<String>,
        error: Option<String>,
    },
    /// Direct login at an identity provider.
    Login {
        username: String,
        password: String,
        otp: Option<String>,
    },
    LoginResult {
        session: Option<String>,
        loa: Option<LoaLevel>,
        error: Option<DenyReason>,
    },
    AccessResult { outcome: AccessOutcome },
    MetadataPush { metadata: String },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::AccessRequest { .. } => "access-request",
            Message::AuthnRedirect { .. } => "authn-redirect",
            Message::SsoRequest { .. } => "sso-request",
            Message::LoginChallenge { .. } => "login-challenge",
            Message::LoginSubmit { .. } => "login-submit",
            Message::LoginAbort { .. } => "login-abort",
            Message::SsoResponse { .. } => "sso-response",
            Message::SsoFailure { .. } => "sso-failure",
            Message::CredentialPost { .. } => "credential-post",
            Message::AuthnFailed { .. } => "authn-failed",
            Message::CodeExchange { .. } => "code-exchange",
            Message::TokenResponse { .. } => "token-response",
            Message::Login { .. } => "login",
            Message::LoginResult { .. } => "login-result",
            Message::AccessResult { .. } => "access-result",
            Message::MetadataPush { .. } => "metadata-push",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        wire::canonical(self).into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, wire::WireError> {
        let text = std::str::from_utf8(bytes).map_err(|_| wire::WireError::Utf8)?;
        wire::parse_canonical(text)
    }
}
