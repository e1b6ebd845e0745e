//! Challenge-response authentication of a session credential.
//!
//! ```text
//! verifier                              prover
//!    ── challenge {nonce: 32 random bytes, hex} ──▶
//!    ◀── auth {session chain, sig(nonce ‖ AUTH_CONTEXT)} ──
//! ```
//!
//! The signature is made with the session private key, so a captured `auth`
//! frame is useless against any later nonce.

use std::io::{Read, Write};

use rand::RngCore;
use thiserror::Error;

use crate::model::SubjectDn;
use crate::time::Timestamp;
use crate::wire::{read_message, write_message, Message, WireError};

use super::{CredentialError, PublicKey, SecretKey, SessionCredential};

/// Domain-separation string appended to the nonce before signing. `v1` is
/// Ed25519 over canonical JSON credentials.
pub const AUTH_CONTEXT: &[u8] = b"vo-authz-auth-v1";

#[derive(Debug, Error)]
pub enum HandshakeError {
    #[error("credential chain invalid: {0}")]
    ChainInvalid(CredentialError),
    #[error("credential expired: {0}")]
    Expired(CredentialError),
    #[error("nonce signature does not verify")]
    NonceMismatch,
    #[error("handshake timed out")]
    Timeout,
    #[error("handshake protocol error: {0}")]
    Protocol(WireError),
}

impl HandshakeError {
    pub fn code(&self) -> &'static str {
        match self {
            HandshakeError::ChainInvalid(_) => "chain-invalid",
            HandshakeError::Expired(_) => "expired",
            HandshakeError::NonceMismatch => "nonce-mismatch",
            HandshakeError::Timeout => "timeout",
            HandshakeError::Protocol(_) => "protocol-error",
        }
    }
}

impl From<WireError> for HandshakeError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Timeout => HandshakeError::Timeout,
            other => HandshakeError::Protocol(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthenticatedPeer {
    pub subject: SubjectDn,
    pub session_public_key: PublicKey,
}

fn signed_message(nonce: &[u8; 32]) -> Vec<u8> {
    let mut m = nonce.to_vec();
    m.extend_from_slice(AUTH_CONTEXT);
    m
}

/// Verifier side: challenges the peer and checks its reply.
pub fn authenticate_peer<C: Read + Write>(
    channel: &mut C,
    trust_root: &PublicKey,
    now: Timestamp,
) -> Result<AuthenticatedPeer, HandshakeError> {
    let mut nonce = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut nonce);
    authenticate_peer_with_nonce(channel, trust_root, now, nonce)
}

/// [`authenticate_peer`] with a caller-chosen nonce. Only useful for tests
/// that need to replay a transcript.
pub fn authenticate_peer_with_nonce<C: Read + Write>(
    channel: &mut C,
    trust_root: &PublicKey,
    now: Timestamp,
    nonce: [u8; 32],
) -> Result<AuthenticatedPeer, HandshakeError> {
    write_message(
        channel,
        &Message::Challenge {
            nonce: hex::encode(nonce),
        },
    )?;
    let (session, signature) = match read_message(channel)? {
        Message::Auth { session, signature } => (session, signature),
        other => {
            return Err(HandshakeError::Protocol(WireError::Unexpected {
                got: other.kind(),
                expected: "auth",
            }))
        }
    };
    session.verify(trust_root, now).map_err(|e| match e {
        CredentialError::Expired { .. } | CredentialError::NotYetValid { .. } => {
            HandshakeError::Expired(e)
        }
        other => HandshakeError::ChainInvalid(other),
    })?;
    if !session
        .session_public_key
        .verify(&signed_message(&nonce), &signature)
    {
        return Err(HandshakeError::NonceMismatch);
    }
    Ok(AuthenticatedPeer {
        subject: session.identity.subject.clone(),
        session_public_key: session.session_public_key,
    })
}

/// Prover side: answers the verifier's challenge with the session chain.
pub fn prove_identity<C: Read + Write>(
    channel: &mut C,
    session: &SessionCredential,
    session_key: &SecretKey,
) -> Result<(), HandshakeError> {
    let nonce = match read_message(channel)? {
        Message::Challenge { nonce } => nonce,
        Message::Error(e) => {
            return Err(HandshakeError::Protocol(WireError::Malformed(format!(
                "server refused: {} {}",
                e.reason, e.message
            ))))
        }
        other => {
            return Err(HandshakeError::Protocol(WireError::Unexpected {
                got: other.kind(),
                expected: "challenge",
            }))
        }
    };
    let nonce: [u8; 32] = hex::decode(&nonce)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| HandshakeError::Protocol(WireError::Malformed("bad nonce".into())))?;
    let signature = session_key.sign(&signed_message(&nonce));
    write_message(
        channel,
        &Message::Auth {
            session: session.clone(),
            signature,
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::IdentityCredential;
    use std::io::Cursor;
    use std::os::unix::net::UnixStream;
    use std::thread;

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_unix(s)
    }

    struct Fixture {
        root: SecretKey,
        session: SessionCredential,
        session_key: SecretKey,
    }

    fn fixture(session_not_after: i64) -> Fixture {
        let root = SecretKey::generate();
        let user = SecretKey::generate();
        let id = IdentityCredential::issue(
            &root,
            SubjectDn::new("/O=x/CN=A").unwrap(),
            user.public_key(),
            ts(0),
            ts(100_000),
        )
        .unwrap();
        let session_key = SecretKey::generate();
        let session =
            SessionCredential::delegate(&id, &user, session_key.public_key(), ts(session_not_after))
                .unwrap();
        Fixture {
            root,
            session,
            session_key,
        }
    }

    fn run(f: &Fixture, now: i64) -> Result<AuthenticatedPeer, HandshakeError> {
        let (mut a, mut b) = UnixStream::pair().unwrap();
        let session = f.session.clone();
        let key = f.session_key.clone();
        let prover = thread::spawn(move || prove_identity(&mut b, &session, &key));
        let out = authenticate_peer(&mut a, &f.root.public_key(), ts(now));
        prover.join().unwrap().unwrap();
        out
    }

    #[test]
    fn valid_chain_authenticates() {
        let f = fixture(50_000);
        let peer = run(&f, 1000).unwrap();
        assert_eq!(peer.subject.as_str(), "/O=x/CN=A");
        assert_eq!(peer.session_public_key, f.session_key.public_key());
    }

    #[test]
    fn expired_session_rejected() {
        let f = fixture(50_000);
        assert!(matches!(run(&f, 50_000), Err(HandshakeError::Expired(_))));
    }

    #[test]
    fn wrong_trust_root_rejected() {
        let mut f = fixture(50_000);
        f.root = SecretKey::generate();
        assert!(matches!(run(&f, 1000), Err(HandshakeError::ChainInvalid(_))));
    }

    #[test]
    fn replayed_signature_fails_against_fresh_nonce() {
        let f = fixture(50_000);
        // Record a genuine reply to a known nonce.
        let nonce = [7u8; 32];
        let mut challenge = Vec::new();
        write_message(&mut challenge, &Message::Challenge { nonce: hex::encode(nonce) }).unwrap();
        let mut duplex = Duplex::new(challenge);
        prove_identity(&mut duplex, &f.session, &f.session_key).unwrap();
        let recorded = duplex.written;

        // First use against the recorded nonce works.
        let mut replay = Duplex::new(recorded.clone());
        assert!(authenticate_peer_with_nonce(&mut replay, &f.root.public_key(), ts(10), nonce).is_ok());

        // Replaying it against a fresh nonce fails.
        let mut replay = Duplex::new(recorded);
        assert!(matches!(
            authenticate_peer(&mut replay, &f.root.public_key(), ts(10)),
            Err(HandshakeError::NonceMismatch)
        ));
    }

    #[test]
    fn silence_times_out() {
        let f = fixture(50_000);
        let (mut a, _b) = UnixStream::pair().unwrap();
        a.set_read_timeout(Some(std::time::Duration::from_millis(50))).unwrap();
        assert!(matches!(
            authenticate_peer(&mut a, &f.root.public_key(), ts(10)),
            Err(HandshakeError::Timeout)
        ));
    }

    /// Reads from a fixed script, records writes.
    struct Duplex {
        input: Cursor<Vec<u8>>,
        written: Vec<u8>,
    }

    impl Duplex {
        fn new(input: Vec<u8>) -> Self {
            Self {
                input: Cursor::new(input),
                written: Vec::new(),
            }
        }
    }

    impl Read for Duplex {
        fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
            self.input.read(buf)
        }
    }

    impl Write for Duplex {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.written.write(buf)
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }
}
