//! Realm-local ticket flows carried over the simulated network. They use no
//! federation machinery at all.

use serde::{Deserialize, Serialize};

use crate::crypto::{Sealed, SymmetricKey};
use crate::protocol::{
    ap_exchange, as_exchange, tgs_exchange, AsReply, Authenticator, AuthenticatorStamp, Kdc, KerberosClient,
    KerberosError, KerberosService, MutualProof, PreAuth, TgsReply, Ticket,
};
use crate::simnet::{Envelope, Network};
use crate::wire;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KrbMessage {
    AsReq { principal: String, preauth: PreAuth },
    AsRep { tgt: String, enc_part: Sealed },
    TgsReq { tgt: String, service: String },
    TgsRep { ticket: String, enc_part: Sealed },
    ApReq { ticket: String, authenticator: Authenticator },
    ApRep { proof: MutualProof },
    KrbError { code: String },
}

impl KrbMessage {
    pub fn encode(&self) -> Vec<u8> {
        wire::canonical(self).into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Option<KrbMessage> {
        wire::parse_canonical(std::str::from_utf8(bytes).ok()?).ok()
    }

    fn kind(&self) -> &'static str {
        match self {
            KrbMessage::AsReq { .. } => "as-req",
            KrbMessage::AsRep { .. } => "as-rep",
            KrbMessage::TgsReq { .. } => "tgs-req",
            KrbMessage::TgsRep { .. } => "tgs-rep",
            KrbMessage::ApReq { .. } => "ap-req",
            KrbMessage::ApRep { .. } => "ap-rep",
            KrbMessage::KrbError { .. } => "krb-error",
        }
    }
}

pub fn error_code(e: &KerberosError) -> &'static str {
    match e {
        KerberosError::UnknownPrincipal => "unknown-principal",
        KerberosError::BadProof => "bad-proof",
        KerberosError::BadTicket => "bad-ticket",
        KerberosError::Expired => "expired",
        KerberosError::UnknownService => "unknown-service",
        KerberosError::BadAuthenticator => "bad-authenticator",
        KerberosError::StaleAuthenticator => "stale-authenticator",
        KerberosError::Replayed => "replayed",
        KerberosError::BadReply => "bad-reply",
    }
}

fn send(net: &mut Network, from: &str, to: &str, correlation: &str, message: &KrbMessage) {
    if net.send(from, to, correlation, message.encode()).is_err() {
        net.record(from, "unreachable", correlation, to.to_owned());
    }
}

#[derive(Debug)]
pub struct KdcNode {
    pub id: String,
    pub kdc: Kdc,
}

impl KdcNode {
    pub fn handle(&mut self, envelope: &Envelope, net: &mut Network) {
        let correlation = envelope.correlation_id.as_str();
        let now = net.now();
        let reply = match KrbMessage::decode(&envelope.payload) {
            Some(KrbMessage::AsReq { principal, preauth }) => match as_exchange(&mut self.kdc, &principal, &preauth, now) {
                Ok(AsReply { tgt, enc_part }) => {
                    net.record(&self.id, "as-exchange", correlation, format!("{principal}: tgt until {}", tgt.expires_at));
                    KrbMessage::AsRep {
                        tgt: tgt.to_wire(),
                        enc_part,
                    }
                }
                Err(e) => {
                    net.record(&self.id, "as-exchange", correlation, format!("{principal}: {}", error_code(&e)));
                    KrbMessage::KrbError {
                        code: error_code(&e).into(),
                    }
                }
            },
            Some(KrbMessage::TgsReq { tgt, service }) => {
                let result = Ticket::from_wire(tgt.as_bytes()).and_then(|t| tgs_exchange(&mut self.kdc, &t, &service, now));
                match result {
                    Ok(TgsReply { ticket, enc_part }) => {
                        net.record(
                            &self.id,
                            "tgs-exchange",
                            correlation,
                            format!("{} -> {service}: ticket until {}", ticket.client_principal, ticket.expires_at),
                        );
                        KrbMessage::TgsRep {
                            ticket: ticket.to_wire(),
                            enc_part,
                        }
                    }
                    Err(e) => {
                        net.record(&self.id, "tgs-exchange", correlation, format!("{service}: {}", error_code(&e)));
                        KrbMessage::KrbError {
                            code: error_code(&e).into(),
                        }
                    }
                }
            }
            other => {
                let what = other.as_ref().map_or("malformed", KrbMessage::kind);
                net.record(&self.id, "ignored", correlation, what);
                return;
            }
        };
        send(net, &self.id, &envelope.from, correlation, &reply);
    }
}

#[derive(Debug)]
pub struct ServiceNode {
    pub service: KerberosService,
}

impl ServiceNode {
    pub fn handle(&mut self, envelope: &Envelope, net: &mut Network) {
        let id = self.service.principal().to_owned();
        let correlation = envelope.correlation_id.as_str();
        let Some(KrbMessage::ApReq { ticket, authenticator }) = KrbMessage::decode(&envelope.payload) else {
            net.record(&id, "ignored", correlation, "unexpected message");
            return;
        };
        let result = Ticket::from_wire(ticket.as_bytes())
            .and_then(|t| ap_exchange(&mut self.service, &t, &authenticator, net.now()));
        let reply = match result {
            Ok(proof) => {
                net.record(&id, "ap-exchange", correlation, format!("{}: accepted", authenticator.client_principal));
                KrbMessage::ApRep { proof }
            }
            Err(e) => {
                net.record(&id, "ap-exchange", correlation, format!("{}: {}", authenticator.client_principal, error_code(&e)));
                KrbMessage::KrbError {
                    code: error_code(&e).into(),
                }
            }
        };
        send(net, &id, &envelope.from, correlation, &reply);
    }
}

/// Client workstation of one principal.
#[derive(Debug)]
pub struct ClientNode {
    pub endpoint: String,
    pub kdc: String,
    pub client: KerberosClient,
    /// Password used for the next login instead of the configured one.
    pub override_client: Option<KerberosClient>,
    service: Option<String>,
    replay: bool,
    session: Option<(SymmetricKey, AuthenticatorStamp)>,
    results: Vec<Result<String, String>>,
}

impl ClientNode {
    pub fn new(endpoint: impl Into<String>, kdc: impl Into<String>, client: KerberosClient) -> Self {
        Self {
            endpoint: endpoint.into(),
            kdc: kdc.into(),
            client,
            override_client: None,
            service: None,
            replay: false,
            session: None,
            results: Vec::new(),
        }
    }

    pub fn start_login(&mut self, net: &mut Network, correlation: &str) {
        self.results.clear();
        self.service = None;
        let client = self.override_client.as_ref().unwrap_or(&self.client);
        let message = KrbMessage::AsReq {
            principal: client.principal().to_owned(),
            preauth: client.preauth(net.now()),
        };
        send(net, &self.endpoint, &self.kdc, correlation, &message);
    }

    /// Starts TGS and AP exchanges for `service`; false without a TGT.
    pub fn start_access(&mut self, service: &str, replay: bool, net: &mut Network, correlation: &str) -> bool {
        self.results.clear();
        self.override_client = None;
        let Some(tgt) = self.client.tgt() else {
            return false;
        };
        self.service = Some(service.to_owned());
        self.replay = replay;
        let message = KrbMessage::TgsReq {
            tgt: tgt.to_wire(),
            service: service.to_owned(),
        };
        send(net, &self.endpoint, &self.kdc, correlation, &message);
        true
    }

    /// One entry per reply received: `Ok(event)` or `Err(error code)`.
    pub fn take_results(&mut self) -> Vec<Result<String, String>> {
        std::mem::take(&mut self.results)
    }

    pub fn handle(&mut self, envelope: &Envelope, net: &mut Network) {
        let correlation = envelope.correlation_id.as_str();
        match KrbMessage::decode(&envelope.payload) {
            Some(KrbMessage::AsRep { tgt, enc_part }) => {
                let result = Ticket::from_wire(tgt.as_bytes()).and_then(|tgt| {
                    let reply = AsReply { tgt, enc_part };
                    match self.override_client.take() {
                        // A login with another password replaces the workstation's client.
                        Some(mut other) => {
                            other.accept_as_reply(&reply)?;
                            self.client = other;
                            Ok(())
                        }
                        None => self.client.accept_as_reply(&reply),
                    }
                });
                self.push(net, correlation, result.map(|_| "authenticated".to_owned()));
            }
            Some(KrbMessage::TgsRep { ticket, enc_part }) => {
                let result = Ticket::from_wire(ticket.as_bytes()).and_then(|ticket| {
                    self.client.accept_tgs_reply(&TgsReply { ticket, enc_part })
                });
                match result {
                    Ok((ticket, session_key)) => {
                        let (authenticator, stamp) = self.client.authenticator(&session_key, net.now());
                        let message = KrbMessage::ApReq {
                            ticket: ticket.to_wire(),
                            authenticator,
                        };
                        let service = self.service.clone().unwrap_or_default();
                        send(net, &self.endpoint, &service, correlation, &message);
                        if self.replay {
                            net.record(&self.endpoint, "replay", correlation, "presenting the same authenticator again");
                            send(net, &self.endpoint, &service, correlation, &message);
                        }
                        self.session = Some((session_key, stamp));
                    }
                    Err(e) => self.push(net, correlation, Err(e)),
                }
            }
            Some(KrbMessage::ApRep { proof }) => {
                let service = self.service.clone().unwrap_or_default();
                let verified = self
                    .session
                    .as_ref()
                    .is_some_and(|(key, stamp)| proof.verify(key, &service, *stamp));
                let result = if verified {
                    Ok("mutual-auth".to_owned())
                } else {
                    Err(KerberosError::BadReply)
                };
                self.push(net, correlation, result);
            }
            Some(KrbMessage::KrbError { code }) => {
                net.record(&self.endpoint, "krb-error", correlation, code.clone());
                self.override_client = None;
                self.results.push(Err(code));
            }
            other => {
                let what = other.as_ref().map_or("malformed", KrbMessage::kind);
                net.record(&self.endpoint, "ignored", correlation, what);
            }
        }
    }

    fn push(&mut self, net: &mut Network, correlation: &str, result: Result<String, KerberosError>) {
        let entry = result.map_err(|e| error_code(&e).to_owned());
        let shown = match &entry {
            Ok(s) => s.clone(),
            Err(e) => e.clone(),
        };
        net.record(&self.endpoint, "result", correlation, shown);
        self.results.push(entry);
    }
}
