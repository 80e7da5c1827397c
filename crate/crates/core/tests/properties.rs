mod common;

use std::collections::BTreeMap;

use fedweaver_core::crypto::SigningKeyPair;
use fedweaver_core::entity::discover_idp;
use fedweaver_core::fimsm::{
    load_model, serialize_model, validate_model, ElementKind, FimsmModel, Layer, LayeredElement, Relation,
    RelationKind,
};
use fedweaver_core::protocol::{issue_assertion, validate_assertion, AuthnRequest, FederatedCredential, Issuer, ReplayCache, Translator};
use fedweaver_core::simnet::{Envelope, Network, NetworkPolicy};
use fedweaver_core::trust::{evaluate_trust, Agreement, AgreementKind, LoaLevel, Protocol, Registry, Role};
use fedweaver_core::Tick;
use proptest::prelude::*;

use common::{descriptor, rng};

const KINDS: [ElementKind; 6] = [
    ElementKind::Actor,
    ElementKind::Service,
    ElementKind::Process,
    ElementKind::Function,
    ElementKind::Component,
    ElementKind::Node,
];
const RELATIONS: [RelationKind; 4] = [
    RelationKind::Serves,
    RelationKind::Realizes,
    RelationKind::Uses,
    RelationKind::AssignedTo,
];

fn arb_model() -> impl Strategy<Value = FimsmModel> {
    let element = (0..6usize, 0..6usize, "[A-Za-z \"\\\\#-]{1,24}");
    (
        "[A-Za-z ]{0,16}",
        prop::collection::vec(element, 0..12),
        prop::collection::vec((0..4usize, any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..16),
    )
        .prop_map(|(entity, elements, relations)| {
            let mut model = FimsmModel::empty(entity);
            for (i, (layer, kind, name)) in elements.iter().enumerate() {
                model
                    .add_element(LayeredElement::new(format!("e{i}"), Layer::ALL[*layer], KINDS[*kind], name.clone()))
                    .unwrap();
            }
            if !elements.is_empty() {
                for (kind, s, t) in relations {
                    let source = format!("e{}", s.index(elements.len()));
                    let target = format!("e{}", t.index(elements.len()));
                    let _ = model.add_relation(Relation::new(RELATIONS[kind], source, target));
                }
            }
            model
        })
}

fn arb_loa() -> impl Strategy<Value = LoaLevel> {
    (0..LoaLevel::ALL.len()).prop_map(|i| LoaLevel::ALL[i])
}

fn arb_kind() -> impl Strategy<Value = AgreementKind> {
    prop_oneof![
        Just(AgreementKind::Contract),
        Just(AgreementKind::Whitelist),
        Just(AgreementKind::Blacklist)
    ]
}

fn pair_metadata(idp_loa: LoaLevel) -> fedweaver_core::trust::FederationMetadata {
    let key = SigningKeyPair::generate(&mut rng(1));
    let mut registry = Registry::new("fed");
    registry.register(descriptor("idp", &[Role::Idp], idp_loa, &key)).unwrap();
    registry.register(descriptor("sp", &[Role::Sp], LoaLevel::None, &key)).unwrap();
    registry.aggregate_metadata(&key, Tick(0), 10).unwrap()
}

fn agreements(entries: &[(AgreementKind, LoaLevel, bool)]) -> Vec<Agreement> {
    entries.iter()
        .map(|(kind, loa, reversed)| {
            let (a, b) = if *reversed { ("sp", "idp") } else { ("idp", "sp") };
            Agreement::new(a, b, *kind).with_loa(*loa)
        })
        .collect()
}

proptest! {
    #[test]
    fn model_round_trips_through_text(model in arb_model()) {
        let text = serialize_model(&model);
        let parsed = load_model(&text).unwrap();
        prop_assert_eq!(&parsed, &model);
        prop_assert_eq!(serialize_model(&parsed), text);
    }

    #[test]
    fn findings_are_deterministic_and_sorted(model in arb_model()) {
        let first = validate_model(&model);
        prop_assert_eq!(&first, &validate_model(&model.clone()));
        let keys: Vec<_> = first.iter().map(|f| (f.rule_id.clone(), f.element_id.clone(), f.layer, f.message.clone())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        prop_assert_eq!(keys, sorted);
    }

    #[test]
    fn blacklist_dominates(
        entries in prop::collection::vec((arb_kind(), arb_loa(), any::<bool>()), 0..5),
        idp_loa in arb_loa(),
        requested in arb_loa(),
        reversed in any::<bool>(),
    ) {
        let mut all = agreements(&entries);
        let (a, b) = if reversed { ("sp", "idp") } else { ("idp", "sp") };
        all.push(Agreement::new(a, b, AgreementKind::Blacklist));
        let decision = evaluate_trust("idp", "sp", &pair_metadata(idp_loa), &all, requested);
        prop_assert!(!decision.allowed);
        prop_assert!(decision.effective_attributes.is_empty());
    }

    #[test]
    fn raising_idp_loa_never_revokes_trust(
        entries in prop::collection::vec((arb_kind(), arb_loa(), any::<bool>()), 0..5),
        low in arb_loa(),
        high in arb_loa(),
        requested in arb_loa(),
    ) {
        prop_assume!(low <= high);
        let all = agreements(&entries);
        let before = evaluate_trust("idp", "sp", &pair_metadata(low), &all, requested);
        let after = evaluate_trust("idp", "sp", &pair_metadata(high), &all, requested);
        prop_assert!(!before.allowed || after.allowed);
        prop_assert!(before.effective_attributes.is_subset(&after.effective_attributes));
    }

    #[test]
    fn translation_keeps_identity_and_never_extends(
        subject in "[a-z]{1,12}",
        attrs in prop::collection::btree_map("[a-z]{1,6}", "[ -~]{0,12}", 0..5),
        loa in arb_loa(),
        now in 0u64..10_000,
        lifetime in 1u64..500,
        to_token in any::<bool>(),
    ) {
        let origin = Issuer::new("idp", SigningKeyPair::generate(&mut rng(2)));
        let proxy_key = SigningKeyPair::generate(&mut rng(3));
        let mut proxy = Translator::new(Issuer::new("proxy", proxy_key.clone()), 100, rng(4));
        let request = AuthnRequest {
            request_id: "r".into(),
            sp: "proxy".into(),
            requested_loa: loa,
            return_address: "proxy".into(),
        };
        let assertion = issue_assertion(&origin, &request, &subject, attrs.clone(), loa, Tick(now), lifetime);
        let input = FederatedCredential::Assertion(assertion);
        let identity = proxy.accept(&input, &origin.public_key(), Tick(now)).unwrap();
        let target = if to_token { Protocol::Token } else { Protocol::Assertion };
        let output = proxy.reissue(&identity, target, "sp", Tick(now)).unwrap();
        prop_assert!(output.expires_at() <= input.expires_at());
        let out = match &output {
            FederatedCredential::Assertion(a) => {
                validate_assertion(a, "sp", &proxy_key.public_key(), Tick(now), &mut ReplayCache::new()).unwrap()
            }
            FederatedCredential::Tokens(t) => {
                fedweaver_core::protocol::validate_id_token(&t.id_token, "sp", &proxy_key.public_key(), Tick(now)).unwrap()
            }
        };
        prop_assert_eq!(out.subject, subject);
        prop_assert_eq!(out.attributes, attrs);
        prop_assert_eq!(out.achieved_loa, loa);
    }

    #[test]
    fn network_is_fifo_per_link_and_conserves_messages(
        sends in prop::collection::vec((0..3usize, 0..3usize), 0..60),
        drop in prop_oneof![Just(0.0), Just(0.3), Just(1.0)],
        seed in any::<u64>(),
    ) {
        let nodes = ["a", "b", "c"];
        let mut net = Network::new(NetworkPolicy { base_latency: 1, drop_probability: drop, seed });
        for n in nodes {
            net.register(n);
        }
        for (i, (from, to)) in sends.iter().enumerate() {
            net.send(nodes[*from], nodes[*to], "c", i.to_string().into_bytes()).unwrap();
        }
        let mut delivered: Vec<Envelope> = Vec::new();
        net.run_until_idle(&mut |e: Envelope, _: &mut Network| delivered.push(e)).unwrap();
        let (sent, got, dropped) = net.counters();
        prop_assert_eq!(sent, sends.len() as u64);
        prop_assert_eq!(sent, got + dropped);
        prop_assert_eq!(got, delivered.len() as u64);
        let mut last: BTreeMap<(String, String), u64> = BTreeMap::new();
        for e in &delivered {
            let key = (e.from.clone(), e.to.clone());
            if let Some(prev) = last.insert(key, e.seq) {
                prop_assert!(prev < e.seq);
            }
        }
    }

    #[test]
    fn discovery_ignores_registration_order(
        domains in prop::collection::btree_set("[a-z]{1,5}\\.example", 1..6),
        pick in any::<prop::sample::Index>(),
        shuffle_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let key = SigningKeyPair::generate(&mut rng(5));
        let mut order: Vec<(usize, &String)> = domains.iter().enumerate().collect();
        let forward = {
            let mut registry = Registry::new("fed");
            for (i, d) in &order {
                let mut desc = descriptor(&format!("idp{i}"), &[Role::Idp], LoaLevel::Basic, &key);
                desc.domains = [(*d).clone()].into();
                registry.register(desc).unwrap();
            }
            registry.aggregate_metadata(&key, Tick(0), 10).unwrap()
        };
        order.shuffle(&mut rng(shuffle_seed));
        let shuffled = {
            let mut registry = Registry::new("fed");
            for (i, d) in &order {
                let mut desc = descriptor(&format!("idp{i}"), &[Role::Idp], LoaLevel::Basic, &key);
                desc.domains = [(*d).clone()].into();
                registry.register(desc).unwrap();
            }
            registry.aggregate_metadata(&key, Tick(0), 10).unwrap()
        };
        let target = domains.iter().nth(pick.index(domains.len())).unwrap();
        let hint = format!("someone@{}", target.to_uppercase());
        let a = discover_idp(&hint, &forward).unwrap();
        prop_assert_eq!(&a, &discover_idp(&hint, &shuffled).unwrap());
        let expected = format!("idp{}", domains.iter().position(|d| d == target).unwrap());
        prop_assert_eq!(a, expected);
    }
}
