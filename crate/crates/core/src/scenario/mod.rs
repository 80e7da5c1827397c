//! Declarative scenarios: load a scenario file, wire its entities over the
//! simulated network, run the script and check each step's expectation.
//!
//! # File format
//!
//! Scenarios are TOML documents:
//!
//! ```toml
//! name = "university"
//!
//! [network]                 # optional
//! base_latency = 1
//! drop_probability = 0.0
//!
//! [[federation]]
//! id = "campus-fed"
//! ttp = "campus-ttp"        # endpoint id of the operator
//! validity = 5000           # ticks each metadata aggregate stays valid
//! members = ["uni-idp", "library"]
//!
//! [[federation.agreement]]
//! party_a = "uni-idp"
//! party_b = "library"
//! kind = "contract"         # contract | whitelist | blacklist
//! required_loa = "basic"
//! released_attributes = ["mail", "role"]
//!
//! [[entity]]
//! id = "uni-idp"
//! roles = ["idp"]
//! protocols = ["assertion"]
//! loa = "advanced"
//! domains = ["uni.example"]
//! model = "../models/university.fimsm"
//!
//! [[entity.user]]
//! username = "alice"
//! password = "s3cret"
//! second_factor = "otp seed"
//! roles = ["student"]
//! attributes = { mail = "alice@uni.example" }
//!
//! [[entity]]
//! id = "library"
//! roles = ["sp"]
//! protocols = ["assertion"]
//! [[entity.resource]]
//! name = "catalogue"
//! required_loa = "basic"
//! permission = "read"
//! [entity.permissions]
//! student = ["read"]
//!
//! [[step]]
//! kind = "publish-metadata"
//! federation = "campus-fed"
//! expect = "ok"
//!
//! [[step]]
//! kind = "access"
//! user = "alice@uni.example"
//! sp = "library"
//! resource = "catalogue"
//! expect = "granted read"
//! ```
//!
//! Entity keys: `display_name`, `session_lifetime`, `credential_lifetime`,
//! `single_sp` (provider answering one relying party only), `proxy`
//! (`upstream_idp`, `served_sps`, `translation_targets`) and `proxy_routes`
//! (identity provider → proxy, on a service provider).
//!
//! A `[kerberos]` table declares `realm`, `kdc`, lifetimes, `skew`,
//! `[[kerberos.principal]]` (`name`, `password`) and `[[kerberos.service]]`
//! (`name`).
//!
//! Step kinds and their fields:
//!
//! | kind               | fields                                   |
//! |--------------------|------------------------------------------|
//! | `publish-metadata` | `federation`                             |
//! | `login`            | `user`, `mfa`, `password`                |
//! | `access`           | `user`, `sp`, `resource`, `mfa`, `password` |
//! | `advance-clock`    | `ticks`                                  |
//! | `kerberos-login`   | `principal`, `password`                  |
//! | `kerberos-access`  | `principal`, `service`, `replay`         |
//!
//! `user` is `username@home_domain`. `password` overrides the configured
//! one for that step. `expect` matches the step outcome exactly or as a
//! leading run of words, so `granted read` matches `granted read at basic`.

mod config;
mod kerberos;
mod report;
mod runner;

use crate::fimsm::ModelError;
use crate::simnet::NetError;

pub use config::{
    load_scenario, parse_scenario, EntityConfig, FederationConfig, KerberosConfig, NetworkSettings, PrincipalConfig,
    ScenarioConfig, ScriptStep, ServiceConfig, Step, UserConfig,
};
pub use kerberos::KrbMessage;
pub use report::{
    emit_model_reports, expectation_matches, model_not_provided, ModelReport, ScenarioReport, StepReport,
    VerificationCount,
};
pub use runner::run_scenario;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("undeclared reference: {0}")]
    DanglingReference(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("model of {entity}: {error}")]
    Model { entity: String, error: ModelError },
    #[error(transparent)]
    Net(#[from] NetError),
}
