//! Deterministic in-process token ledger with a hash-chained transaction log.
//!
//! The contract semantics: user-chosen token ids, one owner per token, an
//! append-only history of `ipfs://` URIs that only the current owner may
//! extend, and ownership transfer. Every accepted call becomes a
//! [`Transaction`]; rejected calls leave no trace.
//!
//! # Hash encoding
//!
//! `tx_hash = sha256(enc)` where `enc` is the concatenation of
//! `u32_be(len(field)) || field` for each field in order:
//!
//! 1. `seq` as 8 bytes big-endian
//! 2. kind tag, ASCII: `Deploy`, `Mint`, `AppendUri` or `Transfer`
//! 3. the kind's payload fields in declaration order; strings as UTF-8,
//!    addresses as their 20 raw bytes, token ids as 8 bytes big-endian
//! 4. `prev_hash`, 32 bytes (all zero for `seq = 0`)

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cas::{Cid, URI_SCHEME};

pub type TokenId = u64;

const LEDGER_FORMAT: &str = "pf-ledger/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("invalid collection: {0}")]
    InvalidCollection(String),
    #[error("token {0} already exists")]
    TokenExists(TokenId),
    #[error("token {0} not found")]
    TokenNotFound(TokenId),
    #[error("{caller} is not the owner of token {token_id}")]
    Unauthorized { caller: Address, token_id: TokenId },
    #[error("invalid token URI {0:?}: expected ipfs://<cid>")]
    InvalidUri(String),
    #[error("recipient must not be the zero address")]
    InvalidRecipient,
    #[error("invalid address {0:?}")]
    InvalidAddress(String),
    #[error("ledger log is corrupt: {0}")]
    CorruptLog(String),
    #[error("ledger file {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// A 20-byte account address, rendered as `0x` + 40 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl FromStr for Address {
    type Err = LedgerError;

    /// Accepts mixed-case hex on input; output is always lowercase.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || LedgerError::InvalidAddress(s.to_owned());
        let body = s.strip_prefix("0x").ok_or_else(err)?;
        if body.len() != 40 {
            return Err(err());
        }
        let mut out = [0u8; 20];
        hex::decode_to_slice(body, &mut out).map_err(|_| err())?;
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let addr: Address = s.parse().map_err(serde::de::Error::custom)?;
        if addr.to_string() != s {
            return Err(serde::de::Error::custom(
                "address is not in canonical lowercase form",
            ));
        }
        Ok(addr)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", hex::encode(self.0))
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom(
                "expected 64 lowercase hex characters",
            ));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Hash32(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum TxKind {
    Deploy {
        collection_name: String,
        collection_symbol: String,
    },
    Mint {
        minter: Address,
        owner: Address,
        token_id: TokenId,
        uri: String,
    },
    AppendUri {
        actor: Address,
        token_id: TokenId,
        uri: String,
    },
    Transfer {
        from: Address,
        to: Address,
        token_id: TokenId,
    },
}

impl TxKind {
    pub fn tag(&self) -> &'static str {
        match self {
            TxKind::Deploy { .. } => "Deploy",
            TxKind::Mint { .. } => "Mint",
            TxKind::AppendUri { .. } => "AppendUri",
            TxKind::Transfer { .. } => "Transfer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub seq: u64,
    pub kind: TxKind,
    pub prev_hash: Hash32,
    pub tx_hash: Hash32,
}

/// Length-prefixed field encoding hashed into `tx_hash`.
pub fn encode_for_hash(seq: u64, kind: &TxKind, prev_hash: &Hash32) -> Vec<u8> {
    fn field(out: &mut Vec<u8>, bytes: &[u8]) {
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(bytes);
    }
    let mut out = Vec::with_capacity(160);
    field(&mut out, &seq.to_be_bytes());
    field(&mut out, kind.tag().as_bytes());
    match kind {
        TxKind::Deploy {
            collection_name,
            collection_symbol,
        } => {
            field(&mut out, collection_name.as_bytes());
            field(&mut out, collection_symbol.as_bytes());
        }
        TxKind::Mint {
            minter,
            owner,
            token_id,
            uri,
        } => {
            field(&mut out, &minter.0);
            field(&mut out, &owner.0);
            field(&mut out, &token_id.to_be_bytes());
            field(&mut out, uri.as_bytes());
        }
        TxKind::AppendUri {
            actor,
            token_id,
            uri,
        } => {
            field(&mut out, &actor.0);
            field(&mut out, &token_id.to_be_bytes());
            field(&mut out, uri.as_bytes());
        }
        TxKind::Transfer { from, to, token_id } => {
            field(&mut out, &from.0);
            field(&mut out, &to.0);
            field(&mut out, &token_id.to_be_bytes());
        }
    }
    field(&mut out, &prev_hash.0);
    out
}

pub fn hash_transaction(seq: u64, kind: &TxKind, prev_hash: &Hash32) -> Hash32 {
    Hash32(Sha256::digest(encode_for_hash(seq, kind, prev_hash)).into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token_id: TokenId,
    pub owner: Address,
    pub uri_history: Vec<String>,
    pub minted_at_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerState {
    collection_name: String,
    collection_symbol: String,
    tokens: BTreeMap<TokenId, TokenRecord>,
    log: Vec<Transaction>,
}

/// Checks `uri` is exactly `ipfs://<canonical cid>`.
pub fn validate_uri(uri: &str) -> Result<Cid, LedgerError> {
    let invalid = || LedgerError::InvalidUri(uri.to_owned());
    let text = uri.strip_prefix(URI_SCHEME).ok_or_else(invalid)?;
    let cid: Cid = text.parse().map_err(|_| invalid())?;
    if cid.to_string() != text {
        return Err(invalid());
    }
    Ok(cid)
}

/// Applies one transaction kind to a token map, validating contract rules.
/// Leaves `tokens` untouched on error.
fn apply(
    tokens: &mut BTreeMap<TokenId, TokenRecord>,
    seq: u64,
    kind: &TxKind,
) -> Result<(), LedgerError> {
    match kind {
        TxKind::Deploy { .. } => Err(LedgerError::CorruptLog(format!("Deploy at seq {seq}"))),
        TxKind::Mint {
            owner,
            token_id,
            uri,
            ..
        } => {
            if tokens.contains_key(token_id) {
                return Err(LedgerError::TokenExists(*token_id));
            }
            if owner.is_zero() {
                return Err(LedgerError::InvalidRecipient);
            }
            validate_uri(uri)?;
            tokens.insert(
                *token_id,
                TokenRecord {
                    token_id: *token_id,
                    owner: *owner,
                    uri_history: vec![uri.clone()],
                    minted_at_seq: seq,
                },
            );
            Ok(())
        }
        TxKind::AppendUri {
            actor,
            token_id,
            uri,
        } => {
            let token = tokens
                .get_mut(token_id)
                .ok_or(LedgerError::TokenNotFound(*token_id))?;
            if token.owner != *actor {
                return Err(LedgerError::Unauthorized {
                    caller: *actor,
                    token_id: *token_id,
                });
            }
            validate_uri(uri)?;
            token.uri_history.push(uri.clone());
            Ok(())
        }
        TxKind::Transfer { from, to, token_id } => {
            let token = tokens
                .get_mut(token_id)
                .ok_or(LedgerError::TokenNotFound(*token_id))?;
            if token.owner != *from {
                return Err(LedgerError::Unauthorized {
                    caller: *from,
                    token_id: *token_id,
                });
            }
            if to.is_zero() {
                return Err(LedgerError::InvalidRecipient);
            }
            token.owner = *to;
            Ok(())
        }
    }
}

impl LedgerState {
    pub fn deploy(collection_name: &str, collection_symbol: &str) -> Result<Self, LedgerError> {
        if collection_name.trim().is_empty() {
            return Err(LedgerError::InvalidCollection(
                "collection name is empty".into(),
            ));
        }
        if collection_symbol.trim().is_empty() {
            return Err(LedgerError::InvalidCollection(
                "collection symbol is empty".into(),
            ));
        }
        let kind = TxKind::Deploy {
            collection_name: collection_name.to_owned(),
            collection_symbol: collection_symbol.to_owned(),
        };
        let prev_hash = Hash32::default();
        let tx_hash = hash_transaction(0, &kind, &prev_hash);
        Ok(Self {
            collection_name: collection_name.to_owned(),
            collection_symbol: collection_symbol.to_owned(),
            tokens: BTreeMap::new(),
            log: vec![Transaction {
                seq: 0,
                kind,
                prev_hash,
                tx_hash,
            }],
        })
    }

    pub fn collection_name(&self) -> &str {
        &self.collection_name
    }

    pub fn collection_symbol(&self) -> &str {
        &self.collection_symbol
    }

    pub fn tokens(&self) -> &BTreeMap<TokenId, TokenRecord> {
        &self.tokens
    }

    pub fn token(&self, token_id: TokenId) -> Result<&TokenRecord, LedgerError> {
        self.tokens
            .get(&token_id)
            .ok_or(LedgerError::TokenNotFound(token_id))
    }

    pub fn log(&self) -> &[Transaction] {
        &self.log
    }

    /// Mutable access to the raw log, for tamper-injection tests.
    #[doc(hidden)]
    pub fn log_mut(&mut self) -> &mut Vec<Transaction> {
        &mut self.log
    }

    pub fn head_hash(&self) -> Hash32 {
        self.log.last().map(|t| t.tx_hash).unwrap_or_default()
    }

    fn commit(&mut self, kind: TxKind) -> Result<&Transaction, LedgerError> {
        let seq = self.log.len() as u64;
        apply(&mut self.tokens, seq, &kind)?;
        let prev_hash = self.head_hash();
        let tx_hash = hash_transaction(seq, &kind, &prev_hash);
        self.log.push(Transaction {
            seq,
            kind,
            prev_hash,
            tx_hash,
        });
        Ok(self.log.last().expect("just pushed"))
    }

    /// Mints `token_id` to `owner` with `uri` as the first history entry.
    ///
    /// Minting is open to any caller; the caller is recorded as `minter`.
    pub fn mint_token(
        &mut self,
        caller: Address,
        owner: Address,
        token_id: TokenId,
        uri: &str,
    ) -> Result<&Transaction, LedgerError> {
        self.commit(TxKind::Mint {
            minter: caller,
            owner,
            token_id,
            uri: uri.to_owned(),
        })
    }

    pub fn add_token_uri(
        &mut self,
        caller: Address,
        token_id: TokenId,
        uri: &str,
    ) -> Result<&Transaction, LedgerError> {
        self.commit(TxKind::AppendUri {
            actor: caller,
            token_id,
            uri: uri.to_owned(),
        })
    }

    pub fn transfer(
        &mut self,
        caller: Address,
        to: Address,
        token_id: TokenId,
    ) -> Result<&Transaction, LedgerError> {
        self.commit(TxKind::Transfer {
            from: caller,
            to,
            token_id,
        })
    }

    pub fn owner_of(&self, token_id: TokenId) -> Result<Address, LedgerError> {
        self.token(token_id).map(|t| t.owner)
    }

    pub fn token_uris(&self, token_id: TokenId) -> Result<&[String], LedgerError> {
        self.token(token_id).map(|t| t.uri_history.as_slice())
    }

    /// True iff every hash recomputes, every link holds, and replaying the
    /// log reproduces the collection and token map exactly.
    pub fn verify_chain(&self) -> bool {
        match replay(&self.log) {
            Ok(replayed) => {
                replayed.collection_name == self.collection_name
                    && replayed.collection_symbol == self.collection_symbol
                    && replayed.tokens == self.tokens
            }
            Err(_) => false,
        }
    }

    /// Rebuilds a state from a log, checking hashes, links and contract rules.
    pub fn from_log(log: Vec<Transaction>) -> Result<Self, LedgerError> {
        replay(&log)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = LedgerFile {
            format: LEDGER_FORMAT.to_owned(),
            log: self.log.clone(),
        };
        let mut out = serde_json::to_vec_pretty(&file).expect("ledger serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, LedgerError> {
        let file: LedgerFile = serde_json::from_slice(bytes)
            .map_err(|e| LedgerError::CorruptLog(format!("unparseable ledger: {e}")))?;
        if file.format != LEDGER_FORMAT {
            return Err(LedgerError::CorruptLog(format!(
                "unknown ledger format {:?}",
                file.format
            )));
        }
        let state = replay(&file.log)?;
        debug_assert!(state.verify_chain());
        Ok(state)
    }

    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&bytes)
    }

    /// Atomically replaces the ledger file (write temp, fsync, rename).
    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("ledger");
        let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
        let result = (|| {
            let mut f = File::create(&tmp)?;
            f.write_all(&self.to_json())?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        })();
        result.map_err(|e| {
            let _ = fs::remove_file(&tmp);
            io_err(path, e)
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LedgerFile {
    format: String,
    log: Vec<Transaction>,
}

fn io_err(path: &Path, e: std::io::Error) -> LedgerError {
    LedgerError::Io {
        path: path.to_owned(),
        reason: e.to_string(),
    }
}

fn replay(log: &[Transaction]) -> Result<LedgerState, LedgerError> {
    let corrupt = |m: String| LedgerError::CorruptLog(m);
    let first = log.first().ok_or_else(|| corrupt("empty log".into()))?;
    let TxKind::Deploy {
        collection_name,
        collection_symbol,
    } = &first.kind
    else {
        return Err(corrupt("first transaction is not Deploy".into()));
    };
    let mut prev = Hash32::default();
    let mut tokens = BTreeMap::new();
    for (i, tx) in log.iter().enumerate() {
        if tx.seq != i as u64 {
            return Err(corrupt(format!("transaction {i} has seq {}", tx.seq)));
        }
        if tx.prev_hash != prev {
            return Err(corrupt(format!(
                "transaction {i} does not link to its predecessor"
            )));
        }
        if hash_transaction(tx.seq, &tx.kind, &tx.prev_hash) != tx.tx_hash {
            return Err(corrupt(format!("transaction {i} hash does not recompute")));
        }
        if i > 0 {
            apply(&mut tokens, tx.seq, &tx.kind)
                .map_err(|e| corrupt(format!("transaction {i} is invalid: {e}")))?;
        }
        prev = tx.tx_hash;
    }
    if collection_name.trim().is_empty() || collection_symbol.trim().is_empty() {
        return Err(corrupt("empty collection name or symbol".into()));
    }
    Ok(LedgerState {
        collection_name: collection_name.clone(),
        collection_symbol: collection_symbol.clone(),
        tokens,
        log: log.to_vec(),
    })
}

/// Exclusive advisory lock guarding a ledger file against concurrent writers.
///
/// Held on a `<ledger>.lock` sidecar so the ledger itself can be replaced by
/// rename while locked.
#[derive(Debug)]
pub struct LedgerLock {
    _file: File,
}

impl LedgerLock {
    pub fn acquire(ledger_path: &Path) -> Result<Self, LedgerError> {
        let mut name = ledger_path.as_os_str().to_owned();
        name.push(".lock");
        let lock_path = PathBuf::from(name);
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| io_err(&lock_path, e))?;
        file.lock().map_err(|e| io_err(&lock_path, e))?;
        Ok(Self { _file: file })
    }
}

/// Loads a ledger, distinguishing a missing file from a corrupt one.
pub fn load_if_exists(path: &Path) -> Result<Option<LedgerState>, LedgerError> {
    match fs::read(path) {
        Ok(bytes) => LedgerState::from_json(&bytes).map(Some),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path, e)),
    }
}
