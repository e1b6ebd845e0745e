use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::authz::RightsSet;
use crate::model::{RightsTuple, SubjectDn};
use crate::text;
use crate::time::Timestamp;

use super::{canonical_bytes_of, canonical_json, PublicKey, SecretKey, SignatureBytes, CLOCK_SKEW};

pub const ASSERTION_VERSION: u32 = 1;
/// Default assertion lifetime: 12 hours.
pub const DEFAULT_ASSERTION_LIFETIME: i64 = 12 * 3600;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssertionError {
    #[error("issuer {0} is not trusted")]
    UntrustedIssuer(SubjectDn),
    #[error("assertion signature does not verify")]
    BadSignature,
    #[error("assertion not valid before {0}")]
    NotYetValid(Timestamp),
    #[error("assertion expired at {0}")]
    Expired(Timestamp),
    #[error("malformed assertion: {0}")]
    Malformed(String),
}

impl AssertionError {
    /// Stable reason code for audit records and error frames.
    pub fn code(&self) -> &'static str {
        match self {
            AssertionError::UntrustedIssuer(_) => "untrusted-issuer",
            AssertionError::BadSignature => "bad-signature",
            AssertionError::NotYetValid(_) => "not-yet-valid",
            AssertionError::Expired(_) => "expired",
            AssertionError::Malformed(_) => "malformed",
        }
    }
}

fn malformed(reason: impl Into<String>) -> AssertionError {
    AssertionError::Malformed(reason.into())
}

/// The signed content of an assertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertionBody {
    pub version: u32,
    pub issuer: SubjectDn,
    pub subject: SubjectDn,
    #[serde(with = "serial_hex")]
    pub serial: u128,
    pub issued_at: Timestamp,
    pub not_after: Timestamp,
    pub rights: Vec<RightsTuple>,
}

mod serial_hex {
    use super::*;

    pub fn serialize<S: Serializer>(serial: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{serial:032x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        let ok = s.len() == 32 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if !ok {
            return Err(serde::de::Error::custom("serial must be 32 lowercase hex digits"));
        }
        u128::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

impl AssertionBody {
    /// A fresh body with a random serial and sorted rights.
    pub fn new(
        issuer: SubjectDn,
        subject: SubjectDn,
        issued_at: Timestamp,
        not_after: Timestamp,
        rights: RightsSet,
    ) -> Self {
        Self {
            version: ASSERTION_VERSION,
            issuer,
            subject,
            serial: rand::random(),
            issued_at,
            not_after,
            rights: rights.into_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), AssertionError> {
        if self.version != ASSERTION_VERSION {
            return Err(malformed(format!("unsupported version {}", self.version)));
        }
        if self.issued_at >= self.not_after {
            return Err(malformed("issued_at is not before not_after"));
        }
        if !self.rights.windows(2).all(|w| w[0] < w[1]) {
            return Err(malformed("rights are not sorted and duplicate-free"));
        }
        Ok(())
    }
}

/// Canonical encoding of a body: sorted-key compact JSON.
pub fn canonical_bytes(body: &AssertionBody) -> Result<Vec<u8>, AssertionError> {
    body.validate()?;
    Ok(canonical_bytes_of(body))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assertion {
    pub body: AssertionBody,
    pub signature: SignatureBytes,
}

impl Assertion {
    /// The body object with a `signature` member added.
    pub fn to_value(&self) -> Value {
        let mut v = serde_json::to_value(&self.body).expect("assertion body serializes");
        v.as_object_mut()
            .expect("body is an object")
            .insert("signature".into(), Value::String(self.signature.to_base64()));
        v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        canonical_json(&self.to_value())
    }

    pub fn from_value(value: Value) -> Result<Self, AssertionError> {
        let Value::Object(mut map) = value else {
            return Err(malformed("not a JSON object"));
        };
        let signature = match map.remove("signature") {
            Some(Value::String(s)) => SignatureBytes::from_base64(&s)
                .ok_or_else(|| malformed("signature is not 64 bytes of canonical base64"))?,
            _ => return Err(malformed("missing signature")),
        };
        let body: AssertionBody =
            serde_json::from_value(Value::Object(map)).map_err(|e| malformed(e.to_string()))?;
        body.validate()?;
        Ok(Self { body, signature })
    }

    /// Parses a serialized assertion. Only the canonical encoding is
    /// accepted, so any byte-level change is rejected even where JSON would
    /// otherwise tolerate it.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AssertionError> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
        let assertion = Self::from_value(value)?;
        if assertion.to_bytes() != bytes {
            return Err(malformed("not in canonical form"));
        }
        Ok(assertion)
    }
}

impl Serialize for Assertion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Assertion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Assertion::from_value(v).map_err(serde::de::Error::custom)
    }
}

pub fn sign_assertion(body: AssertionBody, issuer_key: &SecretKey) -> Result<Assertion, AssertionError> {
    let bytes = canonical_bytes(&body)?;
    let signature = issuer_key.sign(&bytes);
    Ok(Assertion { body, signature })
}

/// Issuer DNs and the keys their assertions must be signed with.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustedIssuers(BTreeMap<SubjectDn, PublicKey>);

impl TrustedIssuers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, issuer: SubjectDn, key: PublicKey) {
        self.0.insert(issuer, key);
    }

    pub fn with(mut self, issuer: SubjectDn, key: PublicKey) -> Self {
        self.insert(issuer, key);
        self
    }

    pub fn get(&self, issuer: &SubjectDn) -> Option<&PublicKey> {
        self.0.get(issuer)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SubjectDn, &PublicKey)> {
        self.0.iter()
    }

    /// Parses `"<issuer-dn>" <base64-public-key>` lines.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut out = Self::new();
        for (line, fields) in text::records(text) {
            let fields = fields.map_err(|e| format!("line {line}: {e}"))?;
            let [dn, key] = fields.as_slice() else {
                return Err(format!("line {line}: expected \"<issuer-dn>\" <public-key>"));
            };
            let dn = SubjectDn::new(dn.as_str()).map_err(|e| format!("line {line}: {e}"))?;
            let key = PublicKey::from_base64(key)
                .ok_or_else(|| format!("line {line}: bad public key"))?;
            out.insert(dn, key);
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        self.0
            .iter()
            .map(|(dn, k)| format!("\"{dn}\" {}\n", k.to_base64()))
            .collect()
    }
}

/// The outcome of a successful verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedRights {
    pub issuer: SubjectDn,
    pub subject: SubjectDn,
    pub rights: RightsSet,
    pub serial: u128,
    pub not_after: Timestamp,
}

/// Checks issuer trust, signature and validity window, in that order.
/// The window is `[issued_at, not_after)`, with clock skew tolerated at the
/// start only.
pub fn verify_assertion(
    assertion: &Assertion,
    trusted: &TrustedIssuers,
    now: Timestamp,
) -> Result<VerifiedRights, AssertionError> {
    verify_assertion_at(assertion, trusted, now, CLOCK_SKEW)
}

/// [`verify_assertion`] with an explicit skew allowance in seconds.
pub fn verify_assertion_at(
    assertion: &Assertion,
    trusted: &TrustedIssuers,
    now: Timestamp,
    skew: i64,
) -> Result<VerifiedRights, AssertionError> {
    let body = &assertion.body;
    let bytes = canonical_bytes(body)?;
    let key = trusted
        .get(&body.issuer)
        .ok_or_else(|| AssertionError::UntrustedIssuer(body.issuer.clone()))?;
    if !key.verify(&bytes, &assertion.signature) {
        return Err(AssertionError::BadSignature);
    }
    if now < body.issued_at.minus(skew) {
        return Err(AssertionError::NotYetValid(body.issued_at));
    }
    if now >= body.not_after {
        return Err(AssertionError::Expired(body.not_after));
    }
    Ok(VerifiedRights {
        issuer: body.issuer.clone(),
        subject: body.subject.clone(),
        rights: RightsSet::new(body.rights.iter().cloned()),
        serial: body.serial,
        not_after: body.not_after,
    })
}
