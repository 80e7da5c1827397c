//! One-line key files: `ed25519-secret <base64>` and `ed25519-public <base64>`.

use anyhow::{anyhow, bail, Context, Result};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use fedweaver_core::crypto::{PublicKey, SigningKeyPair};
use rand::rngs::OsRng;

const SECRET_TAG: &str = "ed25519-secret";
const PUBLIC_TAG: &str = "ed25519-public";

pub fn generate() -> SigningKeyPair {
    SigningKeyPair::generate(&mut OsRng)
}

pub fn secret_file(pair: &SigningKeyPair) -> String {
    format!("{SECRET_TAG} {}\n", B64.encode(pair.secret_bytes()))
}

pub fn public_file(key: &PublicKey) -> String {
    format!("{PUBLIC_TAG} {}\n", key.to_base64())
}

fn body<'a>(text: &'a str, tag: &str) -> Result<&'a str> {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| anyhow!("empty key file"))?;
    match line.split_once(' ') {
        Some((t, b)) if t == tag => Ok(b.trim()),
        Some((t, _)) => bail!("expected a {tag} key, found {t}"),
        None => bail!("expected `{tag} <base64>`"),
    }
}

pub fn read_public(text: &str) -> Result<PublicKey> {
    Ok(PublicKey::from_base64(body(text, PUBLIC_TAG)?)?)
}

pub fn read_secret(text: &str) -> Result<SigningKeyPair> {
    let raw = B64.decode(body(text, SECRET_TAG)?).context("secret key is not base64")?;
    let secret: [u8; 32] = raw
        .try_into()
        .map_err(|raw: Vec<u8>| anyhow!("secret key has {} bytes, expected 32", raw.len()))?;
    Ok(SigningKeyPair::from_secret_bytes(secret))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secret_round_trip_keeps_public_key() {
        let pair = generate();
        let back = read_secret(&secret_file(&pair)).unwrap();
        assert_eq!(back.public_key(), pair.public_key());
        assert_eq!(read_public(&public_file(&pair.public_key())).unwrap(), pair.public_key());
    }

    #[test]
    fn tags_are_checked() {
        let pair = generate();
        assert!(read_public(&secret_file(&pair)).is_err());
        assert!(read_secret("").is_err());
        assert!(read_secret("ed25519-secret").is_err());
    }
}
