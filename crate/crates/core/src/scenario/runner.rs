use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::config::{ScenarioConfig, Step};
use super::kerberos::{ClientNode, KdcNode, ServiceNode};
use super::report::{emit_model_reports, expectation_matches, ScenarioReport, StepReport, VerificationCount};
use super::ScenarioError;
use crate::crypto::SigningKeyPair;
use crate::entity::{
    AgentOutcome, DenyReason, DigitalIdentity, FederationView, IdentityProvider, IdpConfig, Message, Proxy,
    ServiceProvider, UserAgent,
};
use crate::protocol::{Kdc, KdcConfig, KerberosClient, KerberosService};
use crate::simnet::{Envelope, Network, Router};
use crate::trust::{EntityDescriptor, Registry};

const HARNESS: &str = "harness";

/// Federated entity: an identity provider, a service provider, both, or a
/// proxy.
#[derive(Debug)]
struct EntityNode {
    idp: Option<IdentityProvider>,
    sp: Option<ServiceProvider>,
    proxy: Option<Proxy>,
}

impl EntityNode {
    fn handle(&mut self, envelope: &Envelope, message: Message, net: &mut Network) {
        if let Some(proxy) = self.proxy.as_mut() {
            return proxy.handle(envelope, message, net);
        }
        let for_idp = matches!(
            message,
            Message::SsoRequest { .. }
                | Message::LoginSubmit { .. }
                | Message::LoginAbort { .. }
                | Message::CodeExchange { .. }
                | Message::Login { .. }
        );
        match (&mut self.idp, &mut self.sp) {
            (Some(idp), Some(sp)) => {
                if let Message::MetadataPush { .. } = message {
                    idp.handle(envelope, message.clone(), net);
                    sp.handle(envelope, message, net);
                } else if for_idp {
                    idp.handle(envelope, message, net);
                } else {
                    sp.handle(envelope, message, net);
                }
            }
            (Some(idp), None) => idp.handle(envelope, message, net),
            (None, Some(sp)) => sp.handle(envelope, message, net),
            (None, None) => {}
        }
    }

    fn metadata_serial(&self) -> Option<u64> {
        let view = if let Some(p) = &self.proxy {
            p.federation()
        } else if let Some(i) = &self.idp {
            i.federation()
        } else {
            self.sp.as_ref()?.federation()
        };
        view.metadata.as_ref().map(|m| m.serial)
    }
}

#[derive(Debug)]
struct TtpNode {
    registry: Registry,
    key: SigningKeyPair,
    validity: u64,
    members: Vec<String>,
}

#[derive(Debug)]
enum Node {
    Entity(Box<EntityNode>),
    Agent(Box<UserAgent>),
    Kdc(Box<KdcNode>),
    Service(Box<ServiceNode>),
    Client(Box<ClientNode>),
    Ttp,
}

#[derive(Debug, Default)]
struct World {
    nodes: BTreeMap<String, Node>,
    ttps: BTreeMap<String, TtpNode>,
}

impl Router for World {
    fn deliver(&mut self, envelope: Envelope, net: &mut Network) {
        let Some(node) = self.nodes.get_mut(&envelope.to) else {
            return;
        };
        match node {
            Node::Kdc(k) => k.handle(&envelope, net),
            Node::Service(s) => s.handle(&envelope, net),
            Node::Client(c) => c.handle(&envelope, net),
            Node::Ttp => net.record(&envelope.to, "ignored", &envelope.correlation_id, "operator takes no requests"),
            Node::Entity(_) | Node::Agent(_) => match Message::decode(&envelope.payload) {
                Err(e) => net.record(&envelope.to, "malformed", &envelope.correlation_id, e.to_string()),
                Ok(message) => match node {
                    Node::Entity(e) => e.handle(&envelope, message, net),
                    Node::Agent(a) => a.handle(&envelope, message, net),
                    _ => unreachable!(),
                },
            },
        }
    }
}

impl World {
    fn agent(&mut self, endpoint: &str) -> &mut UserAgent {
        match self.nodes.get_mut(endpoint) {
            Some(Node::Agent(a)) => a,
            _ => panic!("no user agent {endpoint}"),
        }
    }

    fn client(&mut self, endpoint: &str) -> &mut ClientNode {
        match self.nodes.get_mut(endpoint) {
            Some(Node::Client(c)) => c,
            _ => panic!("no kerberos client {endpoint}"),
        }
    }

    fn identity_providers(&self) -> impl Iterator<Item = &IdentityProvider> {
        self.nodes.values().filter_map(|n| match n {
            Node::Entity(e) => e.idp.as_ref(),
            _ => None,
        })
    }

    fn total_verifications(&self) -> u64 {
        self.identity_providers().map(IdentityProvider::total_password_verifications).sum()
    }
}

fn agent_endpoint(user: &str) -> String {
    format!("browser:{user}")
}

fn client_endpoint(principal: &str) -> String {
    format!("krb:{principal}")
}

fn child_rng(master: &mut ChaCha20Rng) -> ChaCha20Rng {
    ChaCha20Rng::from_rng(master).expect("chacha seeding is infallible")
}

fn build(config: &ScenarioConfig, master: &mut ChaCha20Rng, net: &mut Network) -> World {
    let mut world = World::default();
    let mut ttp_keys = BTreeMap::new();
    for f in &config.federations {
        let key = SigningKeyPair::generate(master);
        ttp_keys.insert(f.id.clone(), key.public_key());
        world.ttps.insert(
            f.ttp.clone(),
            TtpNode {
                registry: Registry::new(f.id.clone()),
                key,
                validity: f.validity,
                members: f.members.clone(),
            },
        );
        world.nodes.insert(f.ttp.clone(), Node::Ttp);
        net.register(f.ttp.clone());
    }

    for e in &config.entities {
        let key = SigningKeyPair::generate(master);
        let mut rng = child_rng(master);
        let view = config
            .federation_of(&e.id)
            .map(|f| FederationView::new(ttp_keys[&f.id], f.agreements.clone()))
            .unwrap_or_default();
        let descriptor = EntityDescriptor {
            entity_id: e.id.clone(),
            display_name: e.display_name().to_owned(),
            roles: e.roles.clone(),
            protocol_endpoints: e.protocols.iter().map(|p| (*p, format!("sim://{}/{p}", e.id))).collect(),
            verification_key: key.public_key(),
            loa: e.loa,
            domains: e.domains.clone(),
        };
        if let Some(f) = config.federation_of(&e.id) {
            let ttp = world.ttps.get_mut(&f.ttp).expect("operator registered above");
            // Checked at load time: roles and protocols are non-empty.
            let _ = ttp.registry.register(descriptor);
        }

        let mut node = EntityNode {
            idp: None,
            sp: None,
            proxy: None,
        };
        if let Some(proxy_config) = &e.proxy {
            let mut proxy = Proxy::new(e.id.clone(), proxy_config.clone(), key, rng);
            proxy.set_federation(view);
            node.proxy = Some(proxy);
        } else {
            if e.is_idp() {
                let mut idp_config = IdpConfig::new(e.id.clone(), e.loa, e.protocols.iter().copied());
                if let Some(l) = e.session_lifetime {
                    idp_config.session_lifetime = l;
                }
                if let Some(l) = e.credential_lifetime {
                    idp_config.credential_lifetime = l;
                }
                idp_config.single_sp = e.single_sp.clone();
                let mut idp = IdentityProvider::new(idp_config, key.clone(), child_rng(&mut rng));
                idp.set_federation(view.clone());
                for u in &e.users {
                    let mut salt = vec![0u8; 16];
                    rng.fill_bytes(&mut salt);
                    let home = e.home_domain_of(u).to_owned();
                    let mut identity = DigitalIdentity::new(u.username.clone(), &u.password, salt, home.clone());
                    identity.second_factor_secret = u.second_factor.as_ref().map(|s| s.as_bytes().to_vec());
                    identity.attributes = u.attributes.clone();
                    identity.roles = u.roles.clone();
                    identity.identity_verified = u.identity_verified;
                    idp.add_user(identity);

                    let hint = format!("{}@{home}", u.username);
                    let endpoint = agent_endpoint(&hint);
                    let agent = UserAgent::new(
                        endpoint.clone(),
                        u.username.clone(),
                        u.password.clone(),
                        hint,
                        u.second_factor.as_ref().map(|s| s.as_bytes().to_vec()),
                    );
                    net.register(endpoint.clone());
                    world.nodes.insert(endpoint, Node::Agent(Box::new(agent)));
                }
                node.idp = Some(idp);
            }
            if e.is_sp() {
                let mut sp = ServiceProvider::new(e.id.clone(), e.permissions.clone(), child_rng(&mut rng));
                for r in &e.resources {
                    sp.add_resource(r.clone());
                }
                for (idp, proxy) in &e.proxy_routes {
                    sp.route_via(idp.clone(), proxy.clone());
                }
                sp.set_federation(view);
                node.sp = Some(sp);
            }
        }
        net.register(e.id.clone());
        world.nodes.insert(e.id.clone(), Node::Entity(Box::new(node)));
    }

    if let Some(k) = &config.kerberos {
        let mut kdc = Kdc::new(
            KdcConfig {
                realm: k.realm.clone(),
                tgt_lifetime: k.tgt_lifetime,
                service_lifetime: k.service_lifetime,
                skew: k.skew,
            },
            child_rng(master),
        );
        for p in &k.principals {
            kdc.register_client(&p.name, &p.password);
            let endpoint = client_endpoint(&p.name);
            let client = KerberosClient::new(&k.realm, p.name.clone(), &p.password, child_rng(master));
            net.register(endpoint.clone());
            world
                .nodes
                .insert(endpoint.clone(), Node::Client(Box::new(ClientNode::new(endpoint, k.kdc.clone(), client))));
        }
        for s in &k.services {
            let key = kdc.register_service(&s.name);
            let service = KerberosService::new(s.name.clone(), key, k.skew, child_rng(master));
            net.register(s.name.clone());
            world.nodes.insert(s.name.clone(), Node::Service(Box::new(ServiceNode { service })));
        }
        net.register(k.kdc.clone());
        world.nodes.insert(
            k.kdc.clone(),
            Node::Kdc(Box::new(KdcNode {
                id: k.kdc.clone(),
                kdc,
            })),
        );
    }
    world
}

fn agent_outcome(outcome: Option<AgentOutcome>) -> String {
    match outcome {
        Some(AgentOutcome::Access(o)) => o.to_string(),
        Some(AgentOutcome::Login(Ok(loa))) => format!("logged-in {loa}"),
        Some(AgentOutcome::Login(Err(reason))) => format!("denied {reason}"),
        None => format!("denied {}", DenyReason::Incomplete),
    }
}

fn kerberos_outcome(results: Vec<Result<String, String>>, replay: bool) -> String {
    let render = |r: &Result<String, String>| match r {
        Ok(s) if s == "authenticated" => s.clone(),
        Ok(s) => format!("granted {s}"),
        Err(code) => format!("denied {code}"),
    };
    match results.as_slice() {
        [] => format!("denied {}", DenyReason::Incomplete),
        [first, second, ..] if replay => format!("{}; replay {}", render(first), render(second)),
        [first, ..] => render(first),
    }
}

/// Runs the script and checks every expectation. Randomness (keys, salts,
/// codes, drops) is derived from `seed` alone.
pub fn run_scenario(config: &ScenarioConfig, seed: u64) -> Result<ScenarioReport, ScenarioError> {
    let mut master = ChaCha20Rng::seed_from_u64(seed);
    let policy = config.network.policy(master.next_u64());
    let mut net = Network::new(policy).with_max_events(config.network.max_events);
    let mut world = build(config, &mut master, &mut net);
    let mut steps = Vec::with_capacity(config.script.len());

    for (i, script_step) in config.script.iter().enumerate() {
        let correlation = format!("s{:02}", i + 1);
        let summary = script_step.step.summary();
        net.record(HARNESS, "step", &correlation, summary.clone());
        let outcome = match &script_step.step {
            Step::PublishMetadata { federation } => {
                let f = config.federation(federation).expect("checked at load time");
                let ttp = world.ttps.get_mut(&f.ttp).expect("operator per federation");
                match ttp.registry.aggregate_metadata(&ttp.key, net.now(), ttp.validity) {
                    Err(e) => format!("failed {e}"),
                    Ok(md) => {
                        let blob = md.to_wire();
                        let members = ttp.members.clone();
                        net.record(&f.ttp, "metadata-published", &correlation, format!("serial {}", md.serial));
                        for m in &members {
                            let push = Message::MetadataPush { metadata: blob.clone() };
                            net.send(&f.ttp, m, &correlation, push.encode())?;
                        }
                        net.run_until_idle(&mut world)?;
                        let installed = members.iter().all(|m| match world.nodes.get(m) {
                            Some(Node::Entity(e)) => e.metadata_serial() == Some(md.serial),
                            _ => false,
                        });
                        if installed { "ok".to_owned() } else { "partial".to_owned() }
                    }
                }
            }
            Step::Login { user, mfa, password } => {
                let (idp, _) = config.user(user).expect("checked at load time");
                let endpoint = agent_endpoint(user);
                let agent = world.agent(&endpoint);
                agent.prepare(*mfa, password.clone());
                let message = agent.login_request(&net);
                net.send(&endpoint, &idp.id, &correlation, message.encode())?;
                net.run_until_idle(&mut world)?;
                agent_outcome(world.agent(&endpoint).take_outcome())
            }
            Step::AccessResource {
                user,
                sp,
                resource,
                mfa,
                password,
            } => {
                let endpoint = agent_endpoint(user);
                let agent = world.agent(&endpoint);
                agent.prepare(*mfa, password.clone());
                let message = agent.access_request(resource);
                net.send(&endpoint, sp, &correlation, message.encode())?;
                net.run_until_idle(&mut world)?;
                agent_outcome(world.agent(&endpoint).take_outcome())
            }
            Step::AdvanceClock { ticks } => {
                net.advance_clock(*ticks);
                "ok".to_owned()
            }
            Step::KerberosLogin { principal, password } => {
                let k = config.kerberos.as_ref().expect("checked at load time");
                let override_client = password
                    .as_ref()
                    .map(|pw| KerberosClient::new(&k.realm, principal.clone(), pw, child_rng(&mut master)));
                let client = world.client(&client_endpoint(principal));
                client.override_client = override_client;
                client.start_login(&mut net, &correlation);
                net.run_until_idle(&mut world)?;
                kerberos_outcome(world.client(&client_endpoint(principal)).take_results(), false)
            }
            Step::KerberosAccess {
                principal,
                service,
                replay,
            } => {
                let client = world.client(&client_endpoint(principal));
                if client.start_access(service, *replay, &mut net, &correlation) {
                    net.run_until_idle(&mut world)?;
                    kerberos_outcome(world.client(&client_endpoint(principal)).take_results(), *replay)
                } else {
                    "denied no-ticket".to_owned()
                }
            }
        };
        let passed = script_step
            .expect
            .as_deref()
            .is_none_or(|e| expectation_matches(&outcome, e));
        net.record(
            HARNESS,
            "outcome",
            &correlation,
            match &script_step.expect {
                Some(e) => format!("{outcome} [{}: {e}]", if passed { "pass" } else { "FAIL" }),
                None => outcome.clone(),
            },
        );
        steps.push(StepReport {
            index: i + 1,
            kind: script_step.step.kind().to_owned(),
            summary,
            outcome,
            expected: script_step.expect.clone(),
            passed,
            clock: net.now(),
            password_verifications: world.total_verifications(),
        });
    }

    let mut verifications = Vec::new();
    for idp in world.identity_providers() {
        for e in config.entities.iter().filter(|e| e.id == idp.entity_id()) {
            for u in &e.users {
                verifications.push(VerificationCount {
                    idp: e.id.clone(),
                    username: u.username.clone(),
                    count: idp.password_verifications(&u.username),
                });
            }
        }
    }

    Ok(ScenarioReport {
        scenario: config.name.clone(),
        seed,
        steps,
        models: emit_model_reports(config),
        verifications,
        trace: net.take_log(),
        trace_path: None,
    })
}
