//! Ticket-based authentication inside one realm: a key distribution center
//! made of an authentication server (AS exchange) and a ticket-granting
//! service (TGS exchange), plus the client/service AP exchange with mutual
//! authentication. Everything is symmetric: tickets are sealed under the
//! target's long-term key, session keys under the requester's key.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{random_nonce, Sealed, SymmetricKey};
use crate::wire;
use crate::Tick;

/// Service principal of the ticket-granting service itself.
pub const TGS_PRINCIPAL: &str = "krbtgt";

const SEAL_LABEL: &str = "seal";
const AS_REP_AAD: &[u8] = b"fedweaver/as-rep";
const TGS_REP_AAD: &[u8] = b"fedweaver/tgs-rep";
const AUTHENTICATOR_AAD: &[u8] = b"fedweaver/ap-req";
const AP_REP_AAD: &[u8] = b"fedweaver/ap-rep";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KerberosError {
    #[error("principal not registered with the KDC")]
    UnknownPrincipal,
    #[error("pre-authentication proof rejected")]
    BadProof,
    #[error("ticket cannot be opened or is inconsistent")]
    BadTicket,
    #[error("ticket expired")]
    Expired,
    #[error("service principal not registered with the KDC")]
    UnknownService,
    #[error("authenticator cannot be opened or names another client")]
    BadAuthenticator,
    #[error("authenticator outside the allowed clock skew")]
    StaleAuthenticator,
    #[error("authenticator replayed")]
    Replayed,
    #[error("reply cannot be opened with the expected key")]
    BadReply,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TicketHeader {
    client_principal: String,
    service_principal: String,
    auth_time: Tick,
    expires_at: Tick,
}

/// Decrypted part of a ticket.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TicketContents {
    pub client_principal: String,
    pub service_principal: String,
    pub session_key: SymmetricKey,
    pub auth_time: Tick,
    pub expires_at: Tick,
}

/// A ticket as it travels: clear header (bound as associated data) plus the
/// contents sealed under the service's long-term key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ticket {
    pub client_principal: String,
    pub service_principal: String,
    pub auth_time: Tick,
    pub expires_at: Tick,
    pub sealed: Sealed,
}

impl Ticket {
    fn seal<R: RngCore + ?Sized>(contents: &TicketContents, service_key: &SymmetricKey, rng: &mut R) -> Ticket {
        let header = TicketHeader {
            client_principal: contents.client_principal.clone(),
            service_principal: contents.service_principal.clone(),
            auth_time: contents.auth_time,
            expires_at: contents.expires_at,
        };
        let aad = wire::canonical(&header);
        let sealed = service_key.seal(
            random_nonce(rng),
            wire::canonical(contents).as_bytes(),
            aad.as_bytes(),
        );
        Ticket {
            client_principal: header.client_principal,
            service_principal: header.service_principal,
            auth_time: header.auth_time,
            expires_at: header.expires_at,
            sealed,
        }
    }

    fn header(&self) -> String {
        wire::canonical(&TicketHeader {
            client_principal: self.client_principal.clone(),
            service_principal: self.service_principal.clone(),
            auth_time: self.auth_time,
            expires_at: self.expires_at,
        })
    }

    /// Opens the sealed part with `key`; `None` unless `key` is the key the
    /// ticket was sealed for and the header is untouched.
    pub fn open(&self, key: &SymmetricKey) -> Option<TicketContents> {
        let plain = key.open(&self.sealed, self.header().as_bytes())?;
        let contents: TicketContents = wire::parse_canonical(std::str::from_utf8(&plain).ok()?).ok()?;
        let consistent = contents.client_principal == self.client_principal
            && contents.service_principal == self.service_principal
            && contents.auth_time == self.auth_time
            && contents.expires_at == self.expires_at;
        consistent.then_some(contents)
    }

    pub fn to_wire(&self) -> String {
        let mut raw = self.sealed.nonce.to_vec();
        raw.extend_from_slice(&self.sealed.ciphertext);
        wire::encode_detached(&self.header(), SEAL_LABEL, &raw)
    }

    pub fn from_wire(blob: &[u8]) -> Result<Ticket, KerberosError> {
        let (payload, raw) = wire::decode_detached(blob, SEAL_LABEL).map_err(|_| KerberosError::BadTicket)?;
        let header: TicketHeader = wire::parse_canonical(payload).map_err(|_| KerberosError::BadTicket)?;
        if raw.len() < crate::crypto::NONCE_LEN {
            return Err(KerberosError::BadTicket);
        }
        let (nonce, ciphertext) = raw.split_at(crate::crypto::NONCE_LEN);
        Ok(Ticket {
            client_principal: header.client_principal,
            service_principal: header.service_principal,
            auth_time: header.auth_time,
            expires_at: header.expires_at,
            sealed: Sealed {
                nonce: nonce.try_into().expect("split at nonce length"),
                ciphertext: ciphertext.to_vec(),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdcConfig {
    pub realm: String,
    pub tgt_lifetime: u64,
    pub service_lifetime: u64,
    /// Allowed clock skew for pre-authentication and authenticators.
    pub skew: u64,
}

impl KdcConfig {
    pub fn new(realm: impl Into<String>) -> Self {
        Self {
            realm: realm.into(),
            tgt_lifetime: 100,
            service_lifetime: 50,
            skew: 2,
        }
    }
}

/// Key distribution center: authentication server and ticket-granting
/// service sharing one principal database.
#[derive(Debug)]
pub struct Kdc {
    config: KdcConfig,
    tgs_key: SymmetricKey,
    clients: BTreeMap<String, SymmetricKey>,
    services: BTreeMap<String, SymmetricKey>,
    rng: ChaCha20Rng,
}

impl Kdc {
    pub fn new(config: KdcConfig, mut rng: ChaCha20Rng) -> Self {
        let tgs_key = SymmetricKey::generate(&mut rng);
        Self {
            config,
            tgs_key,
            clients: BTreeMap::new(),
            services: BTreeMap::new(),
            rng,
        }
    }

    pub fn config(&self) -> &KdcConfig {
        &self.config
    }

    pub fn register_client(&mut self, principal: &str, password: &str) {
        let key = SymmetricKey::from_password(&self.config.realm, principal, password);
        self.clients.insert(principal.to_owned(), key);
    }

    /// Registers a service and returns the long-term key it must be installed with.
    pub fn register_service(&mut self, principal: &str) -> SymmetricKey {
        let key = SymmetricKey::generate(&mut self.rng);
        self.services.insert(principal.to_owned(), key.clone());
        key
    }

    pub fn tgs_key(&self) -> &SymmetricKey {
        &self.tgs_key
    }
}

/// Pre-authentication: a MAC over principal and timestamp under the
/// client's long-term key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreAuth {
    pub timestamp: Tick,
    pub mac: Vec<u8>,
}

impl PreAuth {
    fn message(principal: &str, timestamp: Tick) -> Vec<u8> {
        format!("fedweaver/pa-enc-timestamp\0{principal}\0{timestamp}").into_bytes()
    }

    pub fn new(client_key: &SymmetricKey, principal: &str, now: Tick) -> Self {
        Self {
            timestamp: now,
            mac: client_key.mac(&Self::message(principal, now)),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionGrant {
    session_key: SymmetricKey,
    service_principal: String,
    expires_at: Tick,
}

/// AS reply: the TGT plus its session key sealed under the client's key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsReply {
    pub tgt: Ticket,
    pub enc_part: Sealed,
}

/// TGS reply: the service ticket plus its session key sealed under the TGT
/// session key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TgsReply {
    pub ticket: Ticket,
    pub enc_part: Sealed,
}

/// Authentication-server exchange: issues a ticket-granting ticket sealed
/// under the TGS key after checking the client's pre-authentication.
pub fn as_exchange(
    kdc: &mut Kdc,
    client_principal: &str,
    proof: &PreAuth,
    now: Tick,
) -> Result<AsReply, KerberosError> {
    let client_key = kdc
        .clients
        .get(client_principal)
        .ok_or(KerberosError::UnknownPrincipal)?
        .clone();
    let fresh = proof.timestamp.abs_diff(now) <= kdc.config.skew;
    if !fresh || !client_key.verify_mac(&PreAuth::message(client_principal, proof.timestamp), &proof.mac) {
        return Err(KerberosError::BadProof);
    }
    let session_key = SymmetricKey::generate(&mut kdc.rng);
    let contents = TicketContents {
        client_principal: client_principal.to_owned(),
        service_principal: TGS_PRINCIPAL.to_owned(),
        session_key: session_key.clone(),
        auth_time: now,
        expires_at: now + kdc.config.tgt_lifetime,
    };
    let tgt = Ticket::seal(&contents, &kdc.tgs_key, &mut kdc.rng);
    let grant = SessionGrant {
        session_key,
        service_principal: TGS_PRINCIPAL.to_owned(),
        expires_at: contents.expires_at,
    };
    let enc_part = client_key.seal(
        random_nonce(&mut kdc.rng),
        wire::canonical(&grant).as_bytes(),
        AS_REP_AAD,
    );
    Ok(AsReply { tgt, enc_part })
}

/// Ticket-granting exchange. The service ticket never outlives the TGT.
pub fn tgs_exchange(
    kdc: &mut Kdc,
    tgt: &Ticket,
    service_principal: &str,
    now: Tick,
) -> Result<TgsReply, KerberosError> {
    let contents = tgt.open(&kdc.tgs_key).ok_or(KerberosError::BadTicket)?;
    if contents.service_principal != TGS_PRINCIPAL {
        return Err(KerberosError::BadTicket);
    }
    if now > contents.expires_at {
        return Err(KerberosError::Expired);
    }
    let service_key = kdc
        .services
        .get(service_principal)
        .ok_or(KerberosError::UnknownService)?
        .clone();
    let session_key = SymmetricKey::generate(&mut kdc.rng);
    let service_contents = TicketContents {
        client_principal: contents.client_principal,
        service_principal: service_principal.to_owned(),
        session_key: session_key.clone(),
        auth_time: contents.auth_time,
        expires_at: contents.expires_at.min(now + kdc.config.service_lifetime),
    };
    let ticket = Ticket::seal(&service_contents, &service_key, &mut kdc.rng);
    let grant = SessionGrant {
        session_key,
        service_principal: service_principal.to_owned(),
        expires_at: service_contents.expires_at,
    };
    let enc_part = contents.session_key.seal(
        random_nonce(&mut kdc.rng),
        wire::canonical(&grant).as_bytes(),
        TGS_REP_AAD,
    );
    Ok(TgsReply { ticket, enc_part })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuthenticatorBody {
    client_principal: String,
    timestamp: Tick,
    sequence: u32,
}

/// Timestamped proof of session-key possession sent with a service ticket.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Authenticator {
    pub client_principal: String,
    pub sealed: Sealed,
}

/// What the client remembers about an authenticator to check the reply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuthenticatorStamp {
    pub timestamp: Tick,
    pub sequence: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApRequest {
    pub ticket: Ticket,
    pub authenticator: Authenticator,
}

/// Service's answer, sealed under the session key: proves the service could
/// open the ticket.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutualProof {
    pub sealed: Sealed,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MutualBody {
    service_principal: String,
    timestamp: Tick,
    sequence: u32,
}

impl MutualProof {
    pub fn verify(&self, session_key: &SymmetricKey, service_principal: &str, stamp: AuthenticatorStamp) -> bool {
        let Some(plain) = session_key.open(&self.sealed, AP_REP_AAD) else {
            return false;
        };
        let Ok(text) = std::str::from_utf8(&plain) else {
            return false;
        };
        match wire::parse_canonical::<MutualBody>(text) {
            Ok(body) => {
                body.service_principal == service_principal
                    && body.timestamp == stamp.timestamp
                    && body.sequence == stamp.sequence
            }
            Err(_) => false,
        }
    }
}

/// A kerberised service holding its long-term key and replay cache.
#[derive(Debug)]
pub struct KerberosService {
    principal: String,
    key: SymmetricKey,
    skew: u64,
    seen: BTreeSet<(String, Tick, u32)>,
    rng: ChaCha20Rng,
}

impl KerberosService {
    pub fn new(principal: impl Into<String>, key: SymmetricKey, skew: u64, rng: ChaCha20Rng) -> Self {
        Self {
            principal: principal.into(),
            key,
            skew,
            seen: BTreeSet::new(),
            rng,
        }
    }

    pub fn principal(&self) -> &str {
        &self.principal
    }
}

/// AP exchange at the service: opens the ticket, checks the authenticator's
/// freshness and uniqueness and answers with a proof for the client.
pub fn ap_exchange(
    service: &mut KerberosService,
    ticket: &Ticket,
    authenticator: &Authenticator,
    now: Tick,
) -> Result<MutualProof, KerberosError> {
    let contents = ticket.open(&service.key).ok_or(KerberosError::BadTicket)?;
    if contents.service_principal != service.principal {
        return Err(KerberosError::BadTicket);
    }
    if now > contents.expires_at {
        return Err(KerberosError::Expired);
    }
    let plain = contents
        .session_key
        .open(&authenticator.sealed, AUTHENTICATOR_AAD)
        .ok_or(KerberosError::BadAuthenticator)?;
    let body: AuthenticatorBody = std::str::from_utf8(&plain)
        .ok()
        .and_then(|t| wire::parse_canonical(t).ok())
        .ok_or(KerberosError::BadAuthenticator)?;
    if body.client_principal != contents.client_principal || authenticator.client_principal != body.client_principal {
        return Err(KerberosError::BadAuthenticator);
    }
    if body.timestamp.abs_diff(now) > service.skew {
        return Err(KerberosError::StaleAuthenticator);
    }
    if !service
        .seen
        .insert((body.client_principal.clone(), body.timestamp, body.sequence))
    {
        return Err(KerberosError::Replayed);
    }
    let reply = MutualBody {
        service_principal: service.principal.clone(),
        timestamp: body.timestamp,
        sequence: body.sequence,
    };
    let sealed = contents.session_key.seal(
        random_nonce(&mut service.rng),
        wire::canonical(&reply).as_bytes(),
        AP_REP_AAD,
    );
    Ok(MutualProof { sealed })
}

/// Client side: long-term key, cached TGT and helpers to open replies.
#[derive(Debug)]
pub struct KerberosClient {
    principal: String,
    long_term_key: SymmetricKey,
    rng: ChaCha20Rng,
    tgt: Option<(Ticket, SymmetricKey)>,
}

impl KerberosClient {
    pub fn new(realm: &str, principal: impl Into<String>, password: &str, rng: ChaCha20Rng) -> Self {
        let principal = principal.into();
        let long_term_key = SymmetricKey::from_password(realm, &principal, password);
        Self {
            principal,
            long_term_key,
            rng,
            tgt: None,
        }
    }

    pub fn principal(&self) -> &str {
        &self.principal
    }

    pub fn preauth(&self, now: Tick) -> PreAuth {
        PreAuth::new(&self.long_term_key, &self.principal, now)
    }

    fn open_grant(key: &SymmetricKey, sealed: &Sealed, aad: &[u8]) -> Result<SessionGrant, KerberosError> {
        let plain = key.open(sealed, aad).ok_or(KerberosError::BadReply)?;
        std::str::from_utf8(&plain)
            .ok()
            .and_then(|t| wire::parse_canonical(t).ok())
            .ok_or(KerberosError::BadReply)
    }

    /// Opens the AS reply with the long-term key and caches the TGT.
    pub fn accept_as_reply(&mut self, reply: &AsReply) -> Result<(), KerberosError> {
        let grant = Self::open_grant(&self.long_term_key, &reply.enc_part, AS_REP_AAD)?;
        if grant.service_principal != TGS_PRINCIPAL || grant.expires_at != reply.tgt.expires_at {
            return Err(KerberosError::BadReply);
        }
        self.tgt = Some((reply.tgt.clone(), grant.session_key));
        Ok(())
    }

    pub fn tgt(&self) -> Option<&Ticket> {
        self.tgt.as_ref().map(|(t, _)| t)
    }

    pub fn forget_tgt(&mut self) {
        self.tgt = None;
    }

    /// Opens a TGS reply with the cached TGT session key.
    pub fn accept_tgs_reply(&self, reply: &TgsReply) -> Result<(Ticket, SymmetricKey), KerberosError> {
        let (_, tgt_session) = self.tgt.as_ref().ok_or(KerberosError::BadReply)?;
        let grant = Self::open_grant(tgt_session, &reply.enc_part, TGS_REP_AAD)?;
        if grant.service_principal != reply.ticket.service_principal || grant.expires_at != reply.ticket.expires_at {
            return Err(KerberosError::BadReply);
        }
        Ok((reply.ticket.clone(), grant.session_key))
    }

    pub fn authenticator(&mut self, session_key: &SymmetricKey, now: Tick) -> (Authenticator, AuthenticatorStamp) {
        let stamp = AuthenticatorStamp {
            timestamp: now,
            sequence: self.rng.next_u32(),
        };
        let body = AuthenticatorBody {
            client_principal: self.principal.clone(),
            timestamp: stamp.timestamp,
            sequence: stamp.sequence,
        };
        let sealed = session_key.seal(
            random_nonce(&mut self.rng),
            wire::canonical(&body).as_bytes(),
            AUTHENTICATOR_AAD,
        );
        (
            Authenticator {
                client_principal: self.principal.clone(),
                sealed,
            },
            stamp,
        )
    }
}
