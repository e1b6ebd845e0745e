//! Identity and session credentials, the authentication handshake, and
//! signed rights assertions.
//!
//! Every signature in the system is Ed25519 over a canonical JSON encoding:
//! object keys sorted, no insignificant whitespace, UTF-8.

mod assertion;
mod files;
mod handshake;
mod identity;

use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::rngs::OsRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

pub use assertion::{
    canonical_bytes, sign_assertion, verify_assertion, verify_assertion_at, Assertion,
    AssertionBody, AssertionError, TrustedIssuers, VerifiedRights, ASSERTION_VERSION,
    DEFAULT_ASSERTION_LIFETIME,
};
pub use files::{
    write_atomic, write_private_atomic, IdentityFile, IdentityFileError, KeyFile, SessionFile, TrustRootFile,
    DEFAULT_KDF_ITERATIONS,
};
pub use handshake::{
    authenticate_peer, authenticate_peer_with_nonce, prove_identity, AuthenticatedPeer,
    HandshakeError, AUTH_CONTEXT,
};
pub use identity::{
    CredentialError, IdentityCredential, SessionCredential, DEFAULT_SESSION_LIFETIME,
};

/// Tolerated clock skew, in seconds. Applied to start-of-validity only.
pub const CLOCK_SKEW: i64 = 300;

/// An Ed25519 public key, base64 in every serialized form.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; 32] = bytes.try_into().ok()?;
        VerifyingKey::from_bytes(&arr).ok().map(Self)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn to_base64(&self) -> String {
        B64.encode(self.0.as_bytes())
    }

    pub fn from_base64(s: &str) -> Option<Self> {
        Self::from_bytes(&decode_b64(s)?)
    }

    pub fn verify(&self, message: &[u8], signature: &SignatureBytes) -> bool {
        let sig = Signature::from_bytes(&signature.0);
        self.0.verify_strict(message, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_base64())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_base64(&s).ok_or_else(|| serde::de::Error::custom("bad public key"))
    }
}

/// An Ed25519 private key.
#[derive(Clone)]
pub struct SecretKey(SigningKey);

impl SecretKey {
    pub fn generate() -> Self {
        Self(SigningKey::generate(&mut OsRng))
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        Self(SigningKey::from_bytes(bytes))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.verifying_key())
    }

    pub fn sign(&self, message: &[u8]) -> SignatureBytes {
        SignatureBytes(self.0.sign(message).to_bytes())
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({:?})", self.public_key())
    }
}

/// A 64-byte Ed25519 signature, base64 when serialized.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SignatureBytes(pub [u8; 64]);

impl SignatureBytes {
    pub fn to_base64(&self) -> String {
        B64.encode(self.0)
    }

    pub fn from_base64(s: &str) -> Option<Self> {
        let bytes = decode_b64(s)?;
        Some(Self(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for SignatureBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_base64())
    }
}

impl Serialize for SignatureBytes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for SignatureBytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_base64(&s).ok_or_else(|| serde::de::Error::custom("bad signature encoding"))
    }
}

/// Strict base64: canonical padding and zero trailing bits only, so every
/// byte string has exactly one accepted encoding.
pub(crate) fn decode_b64(s: &str) -> Option<Vec<u8>> {
    let bytes = B64.decode(s).ok()?;
    (B64.encode(&bytes) == s).then_some(bytes)
}

pub(crate) fn encode_b64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

/// Canonical JSON: keys sorted by byte order, no whitespace.
pub fn canonical_json(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                // Serializing a plain string cannot fail.
                out.extend(serde_json::to_vec(k).expect("string serializes"));
                out.push(b':');
                write_canonical(v, out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(v, out);
            }
            out.push(b']');
        }
        scalar => out.extend(serde_json::to_vec(scalar).expect("scalar serializes")),
    }
}

pub(crate) fn canonical_bytes_of<T: Serialize>(value: &T) -> Vec<u8> {
    canonical_json(&serde_json::to_value(value).expect("credential types serialize"))
}
