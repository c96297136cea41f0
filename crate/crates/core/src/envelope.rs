//! Authenticated symmetric encryption envelopes for quality documents.
//!
//! Binary layout (all integers big-endian):
//!
//! ```text
//! offset  size  field
//! 0       6     magic "QAENC1"
//! 6       1     algorithm id (0x01 = AES-256-GCM)
//! 7       2     key_id length L
//! 9       L     key_id, UTF-8
//! 9+L     12    nonce
//! 21+L    n+16  ciphertext followed by the 16-byte tag
//! ```
//!
//! Bytes `0..9+L` are bound to the ciphertext as associated data, so any
//! modification of the header is caught by authentication.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"QAENC1";
pub const ALG_AES_256_GCM: u8 = 0x01;
pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
const HEADER_FIXED_LEN: usize = MAGIC.len() + 1 + 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    /// Wrong key and tampered ciphertext are deliberately not told apart.
    #[error("envelope authentication failed")]
    AuthenticationFailure,
    #[error("unsupported envelope algorithm id 0x{0:02x}")]
    UnsupportedAlgorithm(u8),
    #[error("malformed envelope: {0}")]
    EnvelopeFormat(String),
    #[error("key generation failed: {0}")]
    KeyGenerationFailure(String),
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("key file {path}: {reason}")]
    KeyFile { path: PathBuf, reason: String },
}

#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey {
    bytes: [u8; KEY_LEN],
    key_id: String,
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricKey")
            .field("key_id", &self.key_id)
            .finish_non_exhaustive()
    }
}

impl SymmetricKey {
    pub fn new(bytes: &[u8], key_id: &str) -> Result<Self, CryptoError> {
        let bytes: [u8; KEY_LEN] = bytes.try_into().map_err(|_| {
            CryptoError::InvalidKey(format!("expected {KEY_LEN} key bytes, got {}", bytes.len()))
        })?;
        check_key_id(key_id)?;
        Ok(Self {
            bytes,
            key_id: key_id.to_owned(),
        })
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.bytes)
    }

    /// Parses the single-line key file body (64 lowercase hex characters).
    pub fn from_hex(line: &str, key_id: &str) -> Result<Self, CryptoError> {
        let line = line.trim_end_matches(['\n', '\r']);
        if line.len() != KEY_LEN * 2
            || !line.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
        {
            return Err(CryptoError::InvalidKey(
                "expected 64 lowercase hex characters".into(),
            ));
        }
        let bytes = hex::decode(line).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Self::new(&bytes, key_id)
    }

    /// Sidecar file holding the key id next to a key file.
    pub fn id_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".id");
        PathBuf::from(name)
    }

    /// Writes the hex key file (mode 0600 on unix) and its `.id` sidecar.
    pub fn write_to(&self, path: &Path) -> Result<(), CryptoError> {
        let file_err = |e: std::io::Error| CryptoError::KeyFile {
            path: path.to_owned(),
            reason: e.to_string(),
        };
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create_new(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(path).map_err(file_err)?;
        writeln!(f, "{}", self.to_hex()).map_err(file_err)?;
        fs::write(Self::id_path(path), format!("{}\n", self.key_id)).map_err(file_err)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, CryptoError> {
        let file_err = |p: &Path, e: std::io::Error| CryptoError::KeyFile {
            path: p.to_owned(),
            reason: e.to_string(),
        };
        let body = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
        let id_path = Self::id_path(path);
        let key_id = fs::read_to_string(&id_path).map_err(|e| file_err(&id_path, e))?;
        Self::from_hex(&body, key_id.trim())
    }
}

fn check_key_id(key_id: &str) -> Result<(), CryptoError> {
    if key_id.is_empty() {
        return Err(CryptoError::InvalidKey("key_id is empty".into()));
    }
    if key_id.len() > u16::MAX as usize {
        return Err(CryptoError::InvalidKey(
            "key_id longer than 65535 bytes".into(),
        ));
    }
    if key_id.contains(['\n', '\r']) {
        return Err(CryptoError::InvalidKey(
            "key_id must be a single line".into(),
        ));
    }
    Ok(())
}

pub fn generate_key(key_id: &str) -> Result<SymmetricKey, CryptoError> {
    check_key_id(key_id)?;
    let mut bytes = [0u8; KEY_LEN];
    OsRng
        .try_fill_bytes(&mut bytes)
        .map_err(|e| CryptoError::KeyGenerationFailure(e.to_string()))?;
    SymmetricKey::new(&bytes, key_id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedEnvelope {
    pub algorithm_id: u8,
    pub key_id: String,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext_with_tag: Vec<u8>,
}

impl EncryptedEnvelope {
    fn header(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_FIXED_LEN + self.key_id.len());
        out.extend_from_slice(MAGIC);
        out.push(self.algorithm_id);
        out.extend_from_slice(&(self.key_id.len() as u16).to_be_bytes());
        out.extend_from_slice(self.key_id.as_bytes());
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header();
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext_with_tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let fmt_err = |m: &str| CryptoError::EnvelopeFormat(m.to_owned());
        if bytes.len() < HEADER_FIXED_LEN {
            return Err(fmt_err("shorter than the fixed header"));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(fmt_err("bad magic"));
        }
        let algorithm_id = bytes[6];
        if algorithm_id != ALG_AES_256_GCM {
            return Err(CryptoError::UnsupportedAlgorithm(algorithm_id));
        }
        let id_len = u16::from_be_bytes([bytes[7], bytes[8]]) as usize;
        let rest = &bytes[HEADER_FIXED_LEN..];
        if rest.len() < id_len + NONCE_LEN + TAG_LEN {
            return Err(fmt_err("truncated"));
        }
        let key_id = std::str::from_utf8(&rest[..id_len])
            .map_err(|_| fmt_err("key_id is not UTF-8"))?
            .to_owned();
        let nonce: [u8; NONCE_LEN] = rest[id_len..id_len + NONCE_LEN]
            .try_into()
            .expect("length checked");
        Ok(Self {
            algorithm_id,
            key_id,
            nonce,
            ciphertext_with_tag: rest[id_len + NONCE_LEN..].to_vec(),
        })
    }

    /// Total encoded length.
    pub fn encoded_len(&self) -> usize {
        HEADER_FIXED_LEN + self.key_id.len() + NONCE_LEN + self.ciphertext_with_tag.len()
    }
}

/// Encrypts with a fresh nonce from the operating system's CSPRNG.
pub fn encrypt(plaintext: &[u8], key: &SymmetricKey) -> Result<EncryptedEnvelope, CryptoError> {
    encrypt_with_rng(plaintext, key, &mut OsRng)
}

/// Encrypts drawing the nonce from `rng`. Seeded generators are for tests only.
pub fn encrypt_with_rng<R: RngCore + CryptoRng>(
    plaintext: &[u8],
    key: &SymmetricKey,
    rng: &mut R,
) -> Result<EncryptedEnvelope, CryptoError> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.try_fill_bytes(&mut nonce)
        .map_err(|e| CryptoError::KeyGenerationFailure(e.to_string()))?;
    let mut envelope = EncryptedEnvelope {
        algorithm_id: ALG_AES_256_GCM,
        key_id: key.key_id.clone(),
        nonce,
        ciphertext_with_tag: Vec::new(),
    };
    let aad = envelope.header();
    let cipher = Aes256Gcm::new_from_slice(&key.bytes).expect("32-byte key");
    envelope.ciphertext_with_tag = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: &aad,
            },
        )
        .map_err(|_| CryptoError::EnvelopeFormat("plaintext too large".into()))?;
    Ok(envelope)
}

pub fn decrypt(envelope: &EncryptedEnvelope, key: &SymmetricKey) -> Result<Vec<u8>, CryptoError> {
    if envelope.algorithm_id != ALG_AES_256_GCM {
        return Err(CryptoError::UnsupportedAlgorithm(envelope.algorithm_id));
    }
    if envelope.key_id.len() > u16::MAX as usize {
        return Err(CryptoError::EnvelopeFormat("key_id too long".into()));
    }
    let aad = envelope.header();
    let cipher = Aes256Gcm::new_from_slice(&key.bytes).expect("32-byte key");
    cipher
        .decrypt(
            Nonce::from_slice(&envelope.nonce),
            Payload {
                msg: &envelope.ciphertext_with_tag,
                aad: &aad,
            },
        )
        .map_err(|_| CryptoError::AuthenticationFailure)
}

/// Parses and decrypts an encoded envelope.
pub fn decrypt_bytes(bytes: &[u8], key: &SymmetricKey) -> Result<Vec<u8>, CryptoError> {
    decrypt(&EncryptedEnvelope::from_bytes(bytes)?, key)
}
