//! Deterministic desk-scale testbed for federated identity management.
//!
//! The crate is organised along the six-layer service model it embodies:
//!
//! - [`fimsm`] parses declarative entity-architecture documents and checks them
//!   against layering and federation-readiness rules.
//! - [`trust`] is the federation operator: registry, signed metadata,
//!   collaboration agreements, level of assurance and the trust decision.
//! - [`protocol`] holds the three credential families (assertions, OAuth/OIDC
//!   token sets, Kerberos tickets) plus cross-protocol translation.
//! - [`entity`] contains the entity state: identity providers, service
//!   providers, discovery and the translation proxy.
//! - [`simnet`] is the in-process message transport with a logical clock and
//!   an append-only audit log.
//! - [`scenario`] loads scenario files, wires entities onto the network and
//!   runs scripted user actions.
//!
//! Nothing in the crate reads wall-clock time; every timestamp is a [`Tick`].

pub mod crypto;
pub mod entity;
pub mod fimsm;
pub mod protocol;
pub mod scenario;
pub mod simnet;
mod time;
pub mod trust;
pub mod wire;

pub use time::Tick;
