use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::ScenarioError;
use crate::entity::{PermissionMap, ProxyConfig, Resource};
use crate::fimsm::{load_model, FimsmModel};
use crate::simnet::{NetworkPolicy, DEFAULT_MAX_EVENTS};
use crate::trust::{Agreement, LoaLevel, Protocol, Role};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSettings {
    #[serde(default = "one")]
    pub base_latency: u64,
    #[serde(default)]
    pub drop_probability: f64,
    #[serde(default = "default_max_events")]
    pub max_events: usize,
}

fn one() -> u64 {
    1
}

fn default_max_events() -> usize {
    DEFAULT_MAX_EVENTS
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self {
            base_latency: 1,
            drop_probability: 0.0,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

impl NetworkSettings {
    pub fn policy(&self, seed: u64) -> NetworkPolicy {
        NetworkPolicy {
            base_latency: self.base_latency,
            drop_probability: self.drop_probability,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub id: String,
    /// Endpoint id of the federation operator.
    pub ttp: String,
    #[serde(default = "default_validity")]
    pub validity: u64,
    pub members: Vec<String>,
    #[serde(default, rename = "agreement")]
    pub agreements: Vec<Agreement>,
}

fn default_validity() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub username: String,
    pub password: String,
    /// Defaults to the entity's first domain.
    #[serde(default)]
    pub home_domain: Option<String>,
    /// Shared secret for one-time codes.
    #[serde(default)]
    pub second_factor: Option<String>,
    #[serde(default)]
    pub roles: BTreeSet<String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub identity_verified: bool,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityConfig {
    pub id: String,
    #[serde(default)]
    pub display_name: Option<String>,
    pub roles: BTreeSet<Role>,
    #[serde(default)]
    pub loa: LoaLevel,
    #[serde(default)]
    pub domains: BTreeSet<String>,
    pub protocols: BTreeSet<Protocol>,
    /// Path of the layer model, relative to the scenario file.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub session_lifetime: Option<u64>,
    #[serde(default)]
    pub credential_lifetime: Option<u64>,
    #[serde(default)]
    pub single_sp: Option<String>,
    #[serde(default)]
    pub proxy: Option<ProxyConfig>,
    /// Upstream identity provider → proxy to send its users through.
    #[serde(default)]
    pub proxy_routes: BTreeMap<String, String>,
    #[serde(default, rename = "user")]
    pub users: Vec<UserConfig>,
    #[serde(default, rename = "resource")]
    pub resources: Vec<Resource>,
    #[serde(default)]
    pub permissions: PermissionMap,
    #[serde(skip)]
    pub parsed_model: Option<FimsmModel>,
}

impl EntityConfig {
    pub fn display_name(&self) -> &str {
        self.display_name.as_deref().unwrap_or(&self.id)
    }

    pub fn is_idp(&self) -> bool {
        self.roles.contains(&Role::Idp)
    }

    pub fn is_sp(&self) -> bool {
        self.roles.contains(&Role::Sp)
    }

    pub fn home_domain_of<'a>(&'a self, user: &'a UserConfig) -> &'a str {
        user.home_domain
            .as_deref()
            .or_else(|| self.domains.iter().next().map(String::as_str))
            .unwrap_or(&self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipalConfig {
    pub name: String,
    pub password: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KerberosConfig {
    pub realm: String,
    /// Endpoint id of the key distribution center.
    pub kdc: String,
    #[serde(default = "tgt_lifetime")]
    pub tgt_lifetime: u64,
    #[serde(default = "service_lifetime")]
    pub service_lifetime: u64,
    #[serde(default = "skew")]
    pub skew: u64,
    #[serde(default, rename = "principal")]
    pub principals: Vec<PrincipalConfig>,
    #[serde(default, rename = "service")]
    pub services: Vec<ServiceConfig>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(skip)]
    pub parsed_model: Option<FimsmModel>,
}

fn tgt_lifetime() -> u64 {
    100
}

fn service_lifetime() -> u64 {
    50
}

fn skew() -> u64 {
    2
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    PublishMetadata {
        federation: String,
    },
    Login {
        user: String,
        mfa: bool,
        password: Option<String>,
    },
    AccessResource {
        user: String,
        sp: String,
        resource: String,
        mfa: bool,
        password: Option<String>,
    },
    AdvanceClock {
        ticks: u64,
    },
    KerberosLogin {
        principal: String,
        password: Option<String>,
    },
    KerberosAccess {
        principal: String,
        service: String,
        replay: bool,
    },
}

impl Step {
    pub fn kind(&self) -> &'static str {
        match self {
            Step::PublishMetadata { .. } => "publish-metadata",
            Step::Login { .. } => "login",
            Step::AccessResource { .. } => "access",
            Step::AdvanceClock { .. } => "advance-clock",
            Step::KerberosLogin { .. } => "kerberos-login",
            Step::KerberosAccess { .. } => "kerberos-access",
        }
    }

    /// Short human-readable form for reports.
    pub fn summary(&self) -> String {
        match self {
            Step::PublishMetadata { federation } => format!("publish-metadata {federation}"),
            Step::Login { user, mfa, .. } => format!("login {user}{}", if *mfa { " +otp" } else { "" }),
            Step::AccessResource {
                user, sp, resource, mfa, ..
            } => format!("access {user} -> {sp}/{resource}{}", if *mfa { " +otp" } else { "" }),
            Step::AdvanceClock { ticks } => format!("advance-clock {ticks}"),
            Step::KerberosLogin { principal, .. } => format!("kerberos-login {principal}"),
            Step::KerberosAccess {
                principal,
                service,
                replay,
            } => format!(
                "kerberos-access {principal} -> {service}{}",
                if *replay { " (replayed)" } else { "" }
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptStep {
    pub step: Step,
    pub expect: Option<String>,
    pub note: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    kind: String,
    #[serde(default)]
    user: Option<String>,
    #[serde(default)]
    sp: Option<String>,
    #[serde(default)]
    resource: Option<String>,
    #[serde(default)]
    mfa: bool,
    #[serde(default)]
    password: Option<String>,
    #[serde(default)]
    federation: Option<String>,
    #[serde(default)]
    ticks: Option<u64>,
    #[serde(default)]
    principal: Option<String>,
    #[serde(default)]
    service: Option<String>,
    #[serde(default)]
    replay: bool,
    #[serde(default)]
    expect: Option<String>,
    #[serde(default)]
    note: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    network: NetworkSettings,
    #[serde(default, rename = "federation")]
    federations: Vec<FederationConfig>,
    #[serde(default, rename = "entity")]
    entities: Vec<EntityConfig>,
    #[serde(default)]
    kerberos: Option<KerberosConfig>,
    #[serde(default, rename = "step")]
    steps: Vec<RawStep>,
}

/// A fully resolved scenario: every reference in the script points at a
/// declared entity, user, resource, federation or principal.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub network: NetworkSettings,
    pub federations: Vec<FederationConfig>,
    pub entities: Vec<EntityConfig>,
    pub kerberos: Option<KerberosConfig>,
    pub script: Vec<ScriptStep>,
}

impl ScenarioConfig {
    pub fn entity(&self, id: &str) -> Option<&EntityConfig> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn federation(&self, id: &str) -> Option<&FederationConfig> {
        self.federations.iter().find(|f| f.id == id)
    }

    /// Federation `entity_id` belongs to, if any.
    pub fn federation_of(&self, entity_id: &str) -> Option<&FederationConfig> {
        self.federations.iter().find(|f| f.members.iter().any(|m| m == entity_id))
    }

    /// `(identity provider, user)` for a `username@home_domain` key.
    pub fn user(&self, key: &str) -> Option<(&EntityConfig, &UserConfig)> {
        self.entities.iter().filter(|e| e.is_idp() && e.proxy.is_none()).find_map(|e| {
            e.users
                .iter()
                .find(|u| format!("{}@{}", u.username, e.home_domain_of(u)) == key)
                .map(|u| (e, u))
        })
    }

    /// `(step index, expected outcome)` for every step that declares one.
    pub fn expectations(&self) -> Vec<(usize, &str)> {
        self.script
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.expect.as_deref().map(|e| (i, e)))
            .collect()
    }
}

/// Reads a scenario file; model paths resolve against its directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario(&text, &mut |reference: &str| {
        let model_path: PathBuf = base.join(reference);
        std::fs::read_to_string(&model_path).map_err(|e| format!("{}: {e}", model_path.display()))
    })
}

/// Parses scenario text. `resolve_model` maps a model reference to the
/// model document.
pub fn parse_scenario(
    text: &str,
    resolve_model: &mut dyn FnMut(&str) -> Result<String, String>,
) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut entities = raw.entities;
    for entity in &mut entities {
        if let Some(reference) = entity.model.clone() {
            entity.parsed_model = Some(read_model(&entity.id, &reference, resolve_model)?);
        }
    }
    let mut kerberos = raw.kerberos;
    if let Some(k) = kerberos.as_mut() {
        if let Some(reference) = k.model.clone() {
            k.parsed_model = Some(read_model(&k.kdc, &reference, resolve_model)?);
        }
    }
    let mut config = ScenarioConfig {
        name: raw.name,
        description: raw.description,
        network: raw.network,
        federations: raw.federations,
        entities,
        kerberos,
        script: Vec::new(),
    };
    check_declarations(&config)?;
    config.script = raw
        .steps
        .into_iter()
        .enumerate()
        .map(|(i, s)| resolve_step(&config, i, s))
        .collect::<Result<_, _>>()?;
    Ok(config)
}

fn read_model(
    owner: &str,
    reference: &str,
    resolve_model: &mut dyn FnMut(&str) -> Result<String, String>,
) -> Result<FimsmModel, ScenarioError> {
    let text = resolve_model(reference).map_err(|message| ScenarioError::Io {
        path: reference.to_owned(),
        message,
    })?;
    let mut model = load_model(&text).map_err(|error| ScenarioError::Model {
        entity: owner.to_owned(),
        error,
    })?;
    if model.entity_name().is_empty() {
        model.set_entity_name(owner);
    }
    Ok(model)
}

fn dangling(what: String) -> ScenarioError {
    ScenarioError::DanglingReference(what)
}

fn check_declarations(config: &ScenarioConfig) -> Result<(), ScenarioError> {
    let mut ids = BTreeSet::new();
    let kerberos_ids = config
        .kerberos
        .iter()
        .flat_map(|k| std::iter::once(k.kdc.clone()).chain(k.services.iter().map(|s| s.name.clone())));
    let all_ids = config
        .entities
        .iter()
        .map(|e| e.id.clone())
        .chain(config.federations.iter().map(|f| f.ttp.clone()))
        .chain(kerberos_ids);
    for id in all_ids {
        if id.trim().is_empty() || id.contains(char::is_whitespace) {
            return Err(ScenarioError::Invalid(format!("invalid endpoint id {id:?}")));
        }
        if !ids.insert(id.clone()) {
            return Err(ScenarioError::Invalid(format!("endpoint {id:?} declared twice")));
        }
    }
    let entity = |id: &str| config.entity(id);
    for e in &config.entities {
        if e.roles.is_empty() {
            return Err(ScenarioError::Invalid(format!("{}: no roles", e.id)));
        }
        if e.protocols.is_empty() {
            return Err(ScenarioError::Invalid(format!("{}: no protocols", e.id)));
        }
        if let Some(sp) = &e.single_sp {
            entity(sp).ok_or_else(|| dangling(format!("{}: single_sp {sp}", e.id)))?;
        }
        for (idp, proxy) in &e.proxy_routes {
            entity(idp).ok_or_else(|| dangling(format!("{}: proxy route for {idp}", e.id)))?;
            let p = entity(proxy).ok_or_else(|| dangling(format!("{}: proxy {proxy}", e.id)))?;
            if p.proxy.is_none() {
                return Err(ScenarioError::Invalid(format!("{}: {proxy} is not a proxy", e.id)));
            }
        }
        if let Some(proxy) = &e.proxy {
            let up = entity(&proxy.upstream_idp)
                .ok_or_else(|| dangling(format!("{}: upstream {}", e.id, proxy.upstream_idp)))?;
            if !up.is_idp() {
                return Err(ScenarioError::Invalid(format!("{}: upstream is not an identity provider", e.id)));
            }
            for sp in proxy.served_sps.iter().chain(proxy.translation_targets.keys()) {
                entity(sp).ok_or_else(|| dangling(format!("{}: served provider {sp}", e.id)))?;
            }
        }
        let mut names = BTreeSet::new();
        for u in &e.users {
            if !names.insert(&u.username) {
                return Err(ScenarioError::Invalid(format!("{}: user {} declared twice", e.id, u.username)));
            }
        }
    }
    let mut membership: BTreeMap<&str, &str> = BTreeMap::new();
    for f in &config.federations {
        for m in &f.members {
            entity(m).ok_or_else(|| dangling(format!("federation {}: member {m}", f.id)))?;
            if let Some(other) = membership.insert(m, &f.id) {
                return Err(ScenarioError::Invalid(format!(
                    "{m} is a member of both {other} and {}",
                    f.id
                )));
            }
        }
        for a in &f.agreements {
            for party in [&a.party_a, &a.party_b] {
                if !f.members.contains(party) {
                    return Err(dangling(format!("federation {}: agreement party {party}", f.id)));
                }
            }
        }
    }
    Ok(())
}

fn resolve_step(config: &ScenarioConfig, index: usize, raw: RawStep) -> Result<ScriptStep, ScenarioError> {
    let at = |what: &str| format!("step {}: {what}", index + 1);
    let need = |field: Option<String>, name: &str| field.ok_or_else(|| ScenarioError::Invalid(at(&format!("missing {name}"))));
    let check_user = |user: &str| {
        config
            .user(user)
            .map(|_| ())
            .ok_or_else(|| dangling(at(&format!("user {user}"))))
    };
    let kerberos = || {
        config
            .kerberos
            .as_ref()
            .ok_or_else(|| dangling(at("kerberos realm (no [kerberos] section)")))
    };
    let step = match raw.kind.as_str() {
        "publish-metadata" => {
            let federation = need(raw.federation, "federation")?;
            config
                .federation(&federation)
                .ok_or_else(|| dangling(at(&format!("federation {federation}"))))?;
            Step::PublishMetadata { federation }
        }
        "login" => {
            let user = need(raw.user, "user")?;
            check_user(&user)?;
            Step::Login {
                user,
                mfa: raw.mfa,
                password: raw.password,
            }
        }
        "access" => {
            let user = need(raw.user, "user")?;
            let sp = need(raw.sp, "sp")?;
            let resource = need(raw.resource, "resource")?;
            check_user(&user)?;
            let sp_config = config.entity(&sp).ok_or_else(|| dangling(at(&format!("sp {sp}"))))?;
            if !sp_config.is_sp() || sp_config.proxy.is_some() {
                return Err(ScenarioError::Invalid(at(&format!("{sp} is not a service provider"))));
            }
            if !sp_config.resources.iter().any(|r| r.name == resource) {
                return Err(dangling(at(&format!("resource {resource} at {sp}"))));
            }
            Step::AccessResource {
                user,
                sp,
                resource,
                mfa: raw.mfa,
                password: raw.password,
            }
        }
        "advance-clock" => {
            let ticks = raw.ticks.unwrap_or(0);
            if ticks == 0 {
                return Err(ScenarioError::Invalid(at("advance-clock needs ticks > 0")));
            }
            Step::AdvanceClock { ticks }
        }
        "kerberos-login" => {
            let principal = need(raw.principal, "principal")?;
            if !kerberos()?.principals.iter().any(|p| p.name == principal) {
                return Err(dangling(at(&format!("principal {principal}"))));
            }
            Step::KerberosLogin {
                principal,
                password: raw.password,
            }
        }
        "kerberos-access" => {
            let principal = need(raw.principal, "principal")?;
            let service = need(raw.service, "service")?;
            let k = kerberos()?;
            if !k.principals.iter().any(|p| p.name == principal) {
                return Err(dangling(at(&format!("principal {principal}"))));
            }
            if !k.services.iter().any(|s| s.name == service) {
                return Err(dangling(at(&format!("service {service}"))));
            }
            Step::KerberosAccess {
                principal,
                service,
                replay: raw.replay,
            }
        }
        other => return Err(ScenarioError::Invalid(at(&format!("unknown step kind {other:?}")))),
    };
    Ok(ScriptStep {
        step,
        expect: raw.expect,
        note: raw.note,
    })
}
