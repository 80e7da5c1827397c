//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function takes plain strings and returns a JSON document, so
//! the page needs no bundler. The same functions are callable natively.

use fedweaver_core::crypto::SigningKeyPair;
use fedweaver_core::fimsm::{gap_report, load_model, validate_model, Finding};
use fedweaver_core::scenario::{parse_scenario, run_scenario, ScenarioConfig};
use fedweaver_core::trust::{
    evaluate_trust, Agreement, AgreementKind, EntityDescriptor, LoaLevel, Protocol, Registry, Role,
};
use fedweaver_core::Tick;
use serde::de::DeserializeOwned;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SCENARIOS: [(&str, &str); 4] = [
    ("university", include_str!("../../../fixtures/scenarios/university.scn")),
    ("company", include_str!("../../../fixtures/scenarios/company.scn")),
    ("hospital", include_str!("../../../fixtures/scenarios/hospital.scn")),
    ("kerberos", include_str!("../../../fixtures/scenarios/kerberos.scn")),
];

const MODELS: [(&str, &str); 4] = [
    ("university", include_str!("../../../fixtures/models/university.fimsm")),
    ("company", include_str!("../../../fixtures/models/company.fimsm")),
    ("hospital", include_str!("../../../fixtures/models/hospital.fimsm")),
    ("kerberos", include_str!("../../../fixtures/models/kerberos.fimsm")),
];

fn keyword<T: DeserializeOwned>(what: &str, text: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(text.trim().to_lowercase()))
        .map_err(|_| format!("unknown {what} {text:?}"))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo values serialize")
}

#[derive(Serialize)]
struct TrustCell {
    idp_loa: LoaLevel,
    required_loa: LoaLevel,
    allowed: bool,
    reason: String,
}

fn member(id: &str, role: Role, loa: LoaLevel, key: &SigningKeyPair) -> EntityDescriptor {
    EntityDescriptor {
        entity_id: id.into(),
        display_name: id.into(),
        roles: [role].into(),
        protocol_endpoints: [(Protocol::Assertion, format!("sim://{id}/assertion"))].into(),
        verification_key: key.public_key(),
        loa,
        domains: Default::default(),
    }
}

/// Decision for every pair of identity-provider level and required level
/// under one agreement kind (`contract`, `whitelist`, `blacklist` or `none`).
pub fn trust_matrix_json(kind: &str) -> Result<String, String> {
    let kind: Option<AgreementKind> = match kind.trim() {
        "none" | "" => None,
        other => Some(keyword("agreement kind", other)?),
    };
    let key = SigningKeyPair::from_secret_bytes([7; 32]);
    let mut cells = Vec::new();
    for idp_loa in LoaLevel::ALL {
        let mut registry = Registry::new("demo");
        registry.register(member("idp", Role::Idp, idp_loa, &key)).map_err(|e| e.to_string())?;
        registry.register(member("sp", Role::Sp, LoaLevel::None, &key)).map_err(|e| e.to_string())?;
        let metadata = registry.aggregate_metadata(&key, Tick(0), 1).map_err(|e| e.to_string())?;
        for required_loa in LoaLevel::ALL {
            let agreements: Vec<Agreement> = kind
                .map(|k| Agreement::new("idp", "sp", k).with_loa(required_loa))
                .into_iter()
                .collect();
            let decision = evaluate_trust("idp", "sp", &metadata, &agreements, required_loa);
            cells.push(TrustCell {
                idp_loa,
                required_loa,
                allowed: decision.allowed,
                reason: decision.reason.to_string(),
            });
        }
    }
    Ok(json(&cells))
}

#[derive(Serialize)]
struct Validation {
    findings: Vec<Finding>,
    report: String,
    blocking: bool,
}

pub fn validate_model_json(text: &str) -> Result<String, String> {
    let model = load_model(text).map_err(|e| e.to_string())?;
    let findings = validate_model(&model);
    Ok(json(&Validation {
        blocking: findings.iter().any(Finding::is_blocking),
        report: gap_report(&model),
        findings,
    }))
}

/// Text of a shipped layer model, for pre-filling the editor.
pub fn fixture_model(name: &str) -> Option<&'static str> {
    MODELS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

fn fixture_scenario(name: &str) -> Result<ScenarioConfig, String> {
    let text = SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| format!("no fixture named {name:?}"))?;
    parse_scenario(text, &mut |reference: &str| {
        let stem = reference.rsplit('/').next().unwrap_or(reference).trim_end_matches(".fimsm");
        fixture_model(stem)
            .map(str::to_owned)
            .ok_or_else(|| format!("no embedded model {reference}"))
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Run {
    rendered: String,
    passed: bool,
    trace: String,
}

pub fn run_fixture_json(name: &str, seed: u64) -> Result<String, String> {
    let config = fixture_scenario(name)?;
    let report = run_scenario(&config, seed).map_err(|e| e.to_string())?;
    Ok(json(&Run {
        rendered: report.render(),
        passed: report.exit_code() == 0,
        trace: report.trace.to_text(),
    }))
}

#[wasm_bindgen]
pub fn trust_matrix(kind: &str) -> Result<String, JsValue> {
    trust_matrix_json(kind).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn validate(text: &str) -> Result<String, JsValue> {
    validate_model_json(text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn model_fixture(name: &str) -> String {
    fixture_model(name).unwrap_or_default().to_owned()
}

/// `seed` arrives as a JS number; fractions are truncated.
#[wasm_bindgen]
pub fn run_fixture(name: &str, seed: f64) -> Result<String, JsValue> {
    run_fixture_json(name, seed.max(0.0) as u64).map_err(|e| JsValue::from_str(&e))
}
