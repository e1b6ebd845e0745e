use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SubjectDn;
use crate::time::Timestamp;

use super::{canonical_bytes_of, PublicKey, SecretKey, SignatureBytes, CLOCK_SKEW};

/// Default session (proxy) lifetime: 12 hours.
pub const DEFAULT_SESSION_LIFETIME: i64 = 12 * 3600;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CredentialError {
    #[error("validity window is empty: not_before {not_before} is not before not_after {not_after}")]
    EmptyWindow {
        not_before: Timestamp,
        not_after: Timestamp,
    },
    #[error("session would outlive its identity, which expires at {identity_not_after}")]
    OutlivesIdentity { identity_not_after: Timestamp },
    #[error("private key does not match the identity credential")]
    KeyMismatch,
    #[error("identity credential is not signed by the trust root")]
    BadIdentitySignature,
    #[error("session credential is not signed by the identity key")]
    BadDelegationSignature,
    #[error("{what} expired at {at}")]
    Expired { what: &'static str, at: Timestamp },
    #[error("{what} not valid before {at}")]
    NotYetValid { what: &'static str, at: Timestamp },
}

/// A long-term identity certified by the trust root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityCredential {
    pub subject: SubjectDn,
    pub public_key: PublicKey,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub signature: SignatureBytes,
}

#[derive(Serialize)]
struct IdentityTbs<'a> {
    subject: &'a SubjectDn,
    public_key: &'a PublicKey,
    not_before: Timestamp,
    not_after: Timestamp,
}

impl IdentityCredential {
    /// Certifies `public_key` as `subject` under the trust root key.
    pub fn issue(
        trust_root: &SecretKey,
        subject: SubjectDn,
        public_key: PublicKey,
        not_before: Timestamp,
        not_after: Timestamp,
    ) -> Result<Self, CredentialError> {
        if not_before >= not_after {
            return Err(CredentialError::EmptyWindow {
                not_before,
                not_after,
            });
        }
        let tbs = canonical_bytes_of(&IdentityTbs {
            subject: &subject,
            public_key: &public_key,
            not_before,
            not_after,
        });
        let signature = trust_root.sign(&tbs);
        Ok(Self {
            subject,
            public_key,
            not_before,
            not_after,
            signature,
        })
    }

    pub fn to_be_signed(&self) -> Vec<u8> {
        canonical_bytes_of(&IdentityTbs {
            subject: &self.subject,
            public_key: &self.public_key,
            not_before: self.not_before,
            not_after: self.not_after,
        })
    }

    pub fn verify(&self, trust_root: &PublicKey, now: Timestamp) -> Result<(), CredentialError> {
        if self.not_before >= self.not_after {
            return Err(CredentialError::EmptyWindow {
                not_before: self.not_before,
                not_after: self.not_after,
            });
        }
        if !trust_root.verify(&self.to_be_signed(), &self.signature) {
            return Err(CredentialError::BadIdentitySignature);
        }
        if now < self.not_before.minus(CLOCK_SKEW) {
            return Err(CredentialError::NotYetValid {
                what: "identity credential",
                at: self.not_before,
            });
        }
        if now >= self.not_after {
            return Err(CredentialError::Expired {
                what: "identity credential",
                at: self.not_after,
            });
        }
        Ok(())
    }
}

/// A short-lived key delegated from an identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionCredential {
    pub identity: IdentityCredential,
    pub session_public_key: PublicKey,
    pub not_after: Timestamp,
    pub delegation_signature: SignatureBytes,
}

#[derive(Serialize)]
struct DelegationTbs<'a> {
    subject: &'a SubjectDn,
    session_public_key: &'a PublicKey,
    not_after: Timestamp,
}

impl SessionCredential {
    /// Delegates from `identity` to `session_public_key`. The session may not
    /// outlive the identity.
    pub fn delegate(
        identity: &IdentityCredential,
        identity_key: &SecretKey,
        session_public_key: PublicKey,
        not_after: Timestamp,
    ) -> Result<Self, CredentialError> {
        if identity_key.public_key() != identity.public_key {
            return Err(CredentialError::KeyMismatch);
        }
        if not_after > identity.not_after {
            return Err(CredentialError::OutlivesIdentity {
                identity_not_after: identity.not_after,
            });
        }
        let tbs = canonical_bytes_of(&DelegationTbs {
            subject: &identity.subject,
            session_public_key: &session_public_key,
            not_after,
        });
        Ok(Self {
            identity: identity.clone(),
            session_public_key,
            not_after,
            delegation_signature: identity_key.sign(&tbs),
        })
    }

    pub fn subject(&self) -> &SubjectDn {
        &self.identity.subject
    }

    /// Verifies the whole chain: trust root → identity → session.
    pub fn verify(&self, trust_root: &PublicKey, now: Timestamp) -> Result<(), CredentialError> {
        self.identity.verify(trust_root, now)?;
        if self.not_after > self.identity.not_after {
            return Err(CredentialError::OutlivesIdentity {
                identity_not_after: self.identity.not_after,
            });
        }
        let tbs = canonical_bytes_of(&DelegationTbs {
            subject: &self.identity.subject,
            session_public_key: &self.session_public_key,
            not_after: self.not_after,
        });
        if !self
            .identity
            .public_key
            .verify(&tbs, &self.delegation_signature)
        {
            return Err(CredentialError::BadDelegationSignature);
        }
        if now >= self.not_after {
            return Err(CredentialError::Expired {
                what: "session credential",
                at: self.not_after,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_unix(s)
    }

    fn setup() -> (SecretKey, SecretKey, IdentityCredential) {
        let root = SecretKey::generate();
        let user = SecretKey::generate();
        let id = IdentityCredential::issue(
            &root,
            SubjectDn::new("/O=x/CN=A").unwrap(),
            user.public_key(),
            ts(1000),
            ts(100_000),
        )
        .unwrap();
        (root, user, id)
    }

    #[test]
    fn chain_verifies() {
        let (root, user, id) = setup();
        let sess = SecretKey::generate();
        let s = SessionCredential::delegate(&id, &user, sess.public_key(), ts(50_000)).unwrap();
        assert_eq!(s.verify(&root.public_key(), ts(2000)), Ok(()));
        assert!(matches!(
            s.verify(&root.public_key(), ts(50_000)),
            Err(CredentialError::Expired { .. })
        ));
        assert!(matches!(
            s.verify(&SecretKey::generate().public_key(), ts(2000)),
            Err(CredentialError::BadIdentitySignature)
        ));
    }

    #[test]
    fn session_cannot_outlive_identity() {
        let (_, user, id) = setup();
        let err = SessionCredential::delegate(&id, &user, SecretKey::generate().public_key(), ts(100_001));
        assert_eq!(
            err,
            Err(CredentialError::OutlivesIdentity {
                identity_not_after: ts(100_000)
            })
        );
    }

    #[test]
    fn forged_delegation_rejected() {
        let (root, _, id) = setup();
        let imposter = SecretKey::generate();
        assert_eq!(
            SessionCredential::delegate(&id, &imposter, imposter.public_key(), ts(2000)),
            Err(CredentialError::KeyMismatch)
        );
        // A delegation signed by another certified key of the same subject
        // does not transfer to this identity.
        let other_key = SecretKey::generate();
        let other = IdentityCredential::issue(
            &root,
            id.subject.clone(),
            other_key.public_key(),
            ts(1000),
            ts(100_000),
        )
        .unwrap();
        let mut s =
            SessionCredential::delegate(&other, &other_key, imposter.public_key(), ts(5000)).unwrap();
        s.identity = id;
        assert_eq!(
            s.verify(&root.public_key(), ts(2000)),
            Err(CredentialError::BadDelegationSignature)
        );
    }

    #[test]
    fn identity_skew_applies_to_start_only() {
        let (root, _, id) = setup();
        assert!(id.verify(&root.public_key(), ts(1000 - CLOCK_SKEW)).is_ok());
        assert!(matches!(
            id.verify(&root.public_key(), ts(1000 - CLOCK_SKEW - 1)),
            Err(CredentialError::NotYetValid { .. })
        ));
        assert!(id.verify(&root.public_key(), ts(99_999)).is_ok());
        assert!(id.verify(&root.public_key(), ts(100_000)).is_err());
    }
}
