#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use fedweaver_core::crypto::SigningKeyPair;
use fedweaver_core::fimsm::{load_model, FimsmModel};
use fedweaver_core::scenario::{load_scenario, ScenarioConfig};
use fedweaver_core::trust::{EntityDescriptor, LoaLevel, Protocol, Role};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const SCENARIOS: [&str; 4] = ["university", "company", "hospital", "kerberos"];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn scenario(name: &str) -> ScenarioConfig {
    let path = fixtures().join("scenarios").join(format!("{name}.scn"));
    load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn model(name: &str) -> FimsmModel {
    let path = fixtures().join("models").join(format!("{name}.fimsm"));
    let text = std::fs::read_to_string(&path).unwrap();
    load_model(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Expected summary lines, one per finding.
pub fn golden(name: &str) -> Vec<String> {
    let path = fixtures().join("golden").join(format!("{name}.findings"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn descriptor(id: &str, roles: &[Role], loa: LoaLevel, key: &SigningKeyPair) -> EntityDescriptor {
    EntityDescriptor {
        entity_id: id.into(),
        display_name: id.into(),
        roles: roles.iter().copied().collect(),
        protocol_endpoints: BTreeMap::from([(Protocol::Assertion, format!("sim://{id}/assertion"))]),
        verification_key: key.public_key(),
        loa,
        domains: [format!("{id}.example")].into(),
    }
}

/// Every single-bit flip of every byte of `original`.
pub fn bit_flips(original: &[u8]) -> impl Iterator<Item = Vec<u8>> + '_ {
    (0..original.len()).flat_map(move |i| {
        (0..8).map(move |bit| {
            let mut m = original.to_vec();
            m[i] ^= 1 << bit;
            m
        })
    })
}
