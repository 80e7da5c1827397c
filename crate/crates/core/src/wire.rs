//! Canonical text encoding shared by metadata and all credentials.
//!
//! A payload is compact JSON with object keys sorted and no insignificant
//! whitespace. Signed or sealed artifacts append one detached line:
//!
//! ```text
//! <canonical payload>\n
//! <label> <base64>\n
//! ```
//!
//! Decoding is strict: the payload must re-encode to the exact same bytes and
//! the base64 must be canonical, so no two distinct blobs decode to the same
//! value.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("blob is not valid UTF-8")]
    Utf8,
    #[error("blob layout: {0}")]
    Layout(&'static str),
    #[error("detached line is not valid base64")]
    Base64,
    #[error("payload: {0}")]
    Json(String),
    #[error("payload is not in canonical form")]
    NonCanonical,
}

/// Key-sorted, whitespace-free JSON for `value`.
pub fn canonical<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json::Map is a BTreeMap, so routing through Value sorts every key.
    let tree = serde_json::to_value(value).expect("domain types serialise to JSON");
    serde_json::to_string(&tree).expect("JSON values always serialise")
}

/// Parses `payload` and insists it was already canonical.
pub fn parse_canonical<T: Serialize + DeserializeOwned>(payload: &str) -> Result<T, WireError> {
    let value: T = serde_json::from_str(payload).map_err(|e| WireError::Json(e.to_string()))?;
    if canonical(&value) != payload {
        return Err(WireError::NonCanonical);
    }
    Ok(value)
}

pub fn encode_detached(payload: &str, label: &str, detached: &[u8]) -> String {
    format!("{payload}\n{label} {}\n", B64.encode(detached))
}

/// Splits a blob produced by [`encode_detached`] back into payload and bytes.
pub fn decode_detached<'a>(blob: &'a [u8], label: &str) -> Result<(&'a str, Vec<u8>), WireError> {
    let text = std::str::from_utf8(blob).map_err(|_| WireError::Utf8)?;
    let body = text
        .strip_suffix('\n')
        .ok_or(WireError::Layout("missing trailing newline"))?;
    let (payload, detached_line) = body
        .split_once('\n')
        .ok_or(WireError::Layout("missing detached line"))?;
    let encoded = detached_line
        .strip_prefix(label)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or(WireError::Layout("unexpected detached label"))?;
    if encoded.contains('\n') {
        return Err(WireError::Layout("too many lines"));
    }
    let bytes = B64.decode(encoded).map_err(|_| WireError::Base64)?;
    Ok((payload, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Serialize, serde::Deserialize, Debug, PartialEq)]
    struct Sample {
        zeta: u32,
        alpha: String,
        nested: BTreeMap<String, String>,
    }

    fn sample() -> Sample {
        Sample {
            zeta: 3,
            alpha: "a b".into(),
            nested: BTreeMap::from([("k".into(), "v".into())]),
        }
    }

    #[test]
    fn canonical_sorts_keys_without_whitespace() {
        assert_eq!(
            canonical(&sample()),
            r#"{"alpha":"a b","nested":{"k":"v"},"zeta":3}"#
        );
    }

    #[test]
    fn non_canonical_payload_rejected() {
        let spaced = r#"{"alpha":"a b", "nested":{"k":"v"},"zeta":3}"#;
        assert_eq!(parse_canonical::<Sample>(spaced), Err(WireError::NonCanonical));
        let reordered = r#"{"zeta":3,"alpha":"a b","nested":{"k":"v"}}"#;
        assert_eq!(parse_canonical::<Sample>(reordered), Err(WireError::NonCanonical));
        let good = canonical(&sample());
        assert_eq!(parse_canonical::<Sample>(&good).unwrap(), sample());
    }

    #[test]
    fn detached_round_trip_and_layout_errors() {
        let blob = encode_detached("{}", "signature", &[1, 2, 3]);
        assert_eq!(blob, "{}\nsignature AQID\n");
        assert_eq!(
            decode_detached(blob.as_bytes(), "signature").unwrap(),
            ("{}", vec![1, 2, 3])
        );
        assert_eq!(
            decode_detached(b"{}\nsignature AQID", "signature"),
            Err(WireError::Layout("missing trailing newline"))
        );
        assert_eq!(
            decode_detached(b"{}\nseal AQID\n", "signature"),
            Err(WireError::Layout("unexpected detached label"))
        );
        assert_eq!(
            decode_detached(b"{}\nsignature AQI*\n", "signature"),
            Err(WireError::Base64)
        );
        assert_eq!(decode_detached(&[0xff, b'\n'], "signature"), Err(WireError::Utf8));
    }
}
