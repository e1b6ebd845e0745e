//! On-disk forms of keys and credentials. All are single JSON documents.

use std::io::Write;
use std::path::Path;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::model::SubjectDn;

use super::{decode_b64, encode_b64, IdentityCredential, PublicKey, SecretKey, SessionCredential};

/// Writes `bytes` to `path` via a temporary file in the same directory and a
/// rename, leaving the file readable by its owner only.
pub fn write_private_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    write_atomic(path, bytes, 0o400)
}

/// Atomic replace of `path` with the given POSIX mode (ignored elsewhere).
pub fn write_atomic(path: &Path, bytes: &[u8], mode: u32) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    #[cfg(not(unix))]
    let _ = mode;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(mode))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn secret_to_b64(k: &SecretKey) -> String {
    encode_b64(&k.to_bytes())
}

fn secret_from_b64(s: &str) -> Option<SecretKey> {
    let bytes: [u8; 32] = decode_b64(s)?.try_into().ok()?;
    Some(SecretKey::from_bytes(&bytes))
}

/// A service's own signing identity: its DN and private key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFile {
    pub subject: SubjectDn,
    pub secret_key: String,
}

impl KeyFile {
    pub fn new(subject: SubjectDn, key: &SecretKey) -> Self {
        Self {
            subject,
            secret_key: secret_to_b64(key),
        }
    }

    pub fn key(&self) -> Option<SecretKey> {
        secret_from_b64(&self.secret_key)
    }
}

/// The public half of the trust root that certifies identities.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustRootFile {
    pub public_key: PublicKey,
}

/// A delegated session credential together with its private key, kept in
/// the client's credential directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub session: SessionCredential,
    pub session_secret_key: String,
}

impl SessionFile {
    pub fn new(session: SessionCredential, key: &SecretKey) -> Self {
        Self {
            session,
            session_secret_key: secret_to_b64(key),
        }
    }

    pub fn key(&self) -> Option<SecretKey> {
        secret_from_b64(&self.session_secret_key)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityFileError {
    #[error("wrong passphrase or corrupted identity file")]
    WrongPassphrase,
    #[error("malformed identity file: {0}")]
    Malformed(&'static str),
}

pub const DEFAULT_KDF_ITERATIONS: u32 = 100_000;

/// A long-term identity with its private key sealed under a passphrase
/// (PBKDF2-HMAC-SHA256 into ChaCha20-Poly1305, credential bytes as AAD).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityFile {
    pub credential: IdentityCredential,
    pub kdf: String,
    pub iterations: u32,
    pub salt: String,
    pub nonce: String,
    pub sealed_key: String,
}

const KDF_NAME: &str = "pbkdf2-hmac-sha256";

fn derive(passphrase: &str, salt: &[u8], iterations: u32) -> ChaCha20Poly1305 {
    let mut key = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(passphrase.as_bytes(), salt, iterations, &mut key);
    ChaCha20Poly1305::new(&key.into())
}

impl IdentityFile {
    pub fn seal(
        credential: IdentityCredential,
        key: &SecretKey,
        passphrase: &str,
        iterations: u32,
    ) -> Self {
        let mut salt = [0u8; 16];
        let mut nonce = [0u8; 12];
        rand::rngs::OsRng.fill_bytes(&mut salt);
        rand::rngs::OsRng.fill_bytes(&mut nonce);
        let aad = credential.to_be_signed();
        let sealed = derive(passphrase, &salt, iterations)
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: &key.to_bytes(),
                    aad: &aad,
                },
            )
            .expect("encrypting 32 bytes cannot fail");
        Self {
            credential,
            kdf: KDF_NAME.to_string(),
            iterations,
            salt: encode_b64(&salt),
            nonce: encode_b64(&nonce),
            sealed_key: encode_b64(&sealed),
        }
    }

    pub fn unseal(&self, passphrase: &str) -> Result<SecretKey, IdentityFileError> {
        if self.kdf != KDF_NAME {
            return Err(IdentityFileError::Malformed("unsupported kdf"));
        }
        if self.iterations == 0 {
            return Err(IdentityFileError::Malformed("zero kdf iterations"));
        }
        let salt = decode_b64(&self.salt).ok_or(IdentityFileError::Malformed("salt"))?;
        let nonce: [u8; 12] = decode_b64(&self.nonce)
            .and_then(|n| n.try_into().ok())
            .ok_or(IdentityFileError::Malformed("nonce"))?;
        let sealed = decode_b64(&self.sealed_key).ok_or(IdentityFileError::Malformed("sealed_key"))?;
        let aad = self.credential.to_be_signed();
        let plain = derive(passphrase, &salt, self.iterations)
            .decrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: &sealed,
                    aad: &aad,
                },
            )
            .map_err(|_| IdentityFileError::WrongPassphrase)?;
        let bytes: [u8; 32] = plain
            .try_into()
            .map_err(|_| IdentityFileError::Malformed("key length"))?;
        let key = SecretKey::from_bytes(&bytes);
        if key.public_key() != self.credential.public_key {
            return Err(IdentityFileError::Malformed("key does not match credential"));
        }
        Ok(key)
    }
}
