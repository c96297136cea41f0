//! Content addressing (CIDv0: sha2-256 multihash, base58btc) and blob storage.
//!
//! Local layout under the store root:
//!
//! ```text
//! <root>/blobs/<cid>     one file per blob, named by its CID text form
//! <root>/pins.json       sorted JSON array of pinned CID strings
//! ```
//!
//! The remote backend speaks the IPFS HTTP API (`/api/v0/add`, `/api/v0/cat`,
//! `/api/v0/pin/add`). CIDs are always computed locally; a node answering
//! with a different CID is reported as [`StoreError::CidMismatch`].

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MULTIHASH_SHA2_256: u8 = 0x12;
pub const DIGEST_LEN: u8 = 0x20;
pub const URI_SCHEME: &str = "ipfs://";
/// Non-standard synonym accepted on input.
pub const LEGACY_URI_SCHEME: &str = "ipfs_hash://";

const MAX_REMOTE_BLOB: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("invalid CID {0:?}")]
    InvalidCid(String),
    #[error("invalid blob URI {0:?}")]
    InvalidUri(String),
    #[error("blob {0} not found")]
    NotFound(Cid),
    #[error("blob {0} does not match its content address")]
    IntegrityViolation(Cid),
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("remote node error (HTTP {status}): {message}")]
    RemoteError { status: u16, message: String },
    #[error("remote node returned CID {remote}, expected {expected}")]
    CidMismatch { expected: Cid, remote: String },
}

/// A CIDv0 content identifier: `0x12 0x20` followed by the sha2-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cid([u8; 34]);

impl Cid {
    pub fn from_digest(digest: [u8; 32]) -> Self {
        let mut mh = [0u8; 34];
        mh[0] = MULTIHASH_SHA2_256;
        mh[1] = DIGEST_LEN;
        mh[2..].copy_from_slice(&digest);
        Cid(mh)
    }

    pub fn from_multihash(bytes: &[u8]) -> Result<Self, StoreError> {
        let mh: [u8; 34] = bytes
            .try_into()
            .map_err(|_| StoreError::InvalidCid(hex::encode(bytes)))?;
        if mh[0] != MULTIHASH_SHA2_256 || mh[1] != DIGEST_LEN {
            return Err(StoreError::InvalidCid(hex::encode(bytes)));
        }
        Ok(Cid(mh))
    }

    pub fn multihash(&self) -> &[u8; 34] {
        &self.0
    }

    pub fn digest(&self) -> &[u8] {
        &self.0[2..]
    }

    /// `ipfs://<cid>`
    pub fn to_uri(&self) -> String {
        format!("{URI_SCHEME}{self}")
    }

    /// Accepts `ipfs://<cid>` and `ipfs_hash://<cid>`.
    pub fn from_uri(uri: &str) -> Result<Self, StoreError> {
        let rest = uri
            .strip_prefix(URI_SCHEME)
            .or_else(|| uri.strip_prefix(LEGACY_URI_SCHEME))
            .ok_or_else(|| StoreError::InvalidUri(uri.to_owned()))?;
        rest.parse()
            .map_err(|_| StoreError::InvalidUri(uri.to_owned()))
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&bs58::encode(&self.0).into_string())
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({self})")
    }
}

impl FromStr for Cid {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = bs58::decode(s)
            .into_vec()
            .map_err(|_| StoreError::InvalidCid(s.to_owned()))?;
        Cid::from_multihash(&bytes).map_err(|_| StoreError::InvalidCid(s.to_owned()))
    }
}

impl Serialize for Cid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

pub fn compute_cid(bytes: &[u8]) -> Cid {
    Cid::from_digest(Sha256::digest(bytes).into())
}

pub fn verify(cid: &Cid, bytes: &[u8]) -> bool {
    compute_cid(bytes) == *cid
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backing {
    LocalDirectory(PathBuf),
    RemoteNode(String),
}

#[derive(Debug, Clone)]
pub struct BlobStore {
    backing: Backing,
    agent: Option<ureq::Agent>,
    read_only: bool,
}

impl BlobStore {
    /// Opens (creating if needed) a local directory store.
    pub fn local(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("blobs")).map_err(|e| unavailable(&root, e))?;
        Ok(Self {
            backing: Backing::LocalDirectory(root),
            agent: None,
            read_only: false,
        })
    }

    /// Uses an IPFS HTTP API endpoint such as `http://127.0.0.1:5001`.
    pub fn remote(endpoint: &str) -> Result<Self, StoreError> {
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(StoreError::StoreUnavailable(format!(
                "endpoint {endpoint:?} is not an http(s) URL"
            )));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Ok(Self {
            backing: Backing::RemoteNode(endpoint.trim_end_matches('/').to_owned()),
            agent: Some(agent),
            read_only: false,
        })
    }

    /// `http(s)://…` selects the remote backend, anything else a local directory.
    pub fn open(location: &str) -> Result<Self, StoreError> {
        if location.starts_with("http://") || location.starts_with("https://") {
            Self::remote(location)
        } else {
            Self::local(location)
        }
    }

    /// Opens a store for reading only: nothing is created on disk and
    /// `put`/`pin` fail with [`StoreError::StoreUnavailable`].
    pub fn open_read_only(location: &str) -> Result<Self, StoreError> {
        let mut store = if location.starts_with("http://") || location.starts_with("https://") {
            Self::remote(location)?
        } else {
            let root = PathBuf::from(location);
            if !root.join("blobs").is_dir() {
                return Err(StoreError::StoreUnavailable(format!(
                    "no blob store at {}",
                    root.display()
                )));
            }
            Self {
                backing: Backing::LocalDirectory(root),
                agent: None,
                read_only: false,
            }
        };
        store.read_only = true;
        Ok(store)
    }

    pub fn is_read_only(&self) -> bool {
        self.read_only
    }

    fn check_writable(&self) -> Result<(), StoreError> {
        if self.read_only {
            return Err(StoreError::StoreUnavailable(
                "store was opened read-only".into(),
            ));
        }
        Ok(())
    }

    pub fn backing(&self) -> &Backing {
        &self.backing
    }

    /// Stores `bytes` and pins them. Idempotent.
    pub fn put(&self, bytes: &[u8]) -> Result<Cid, StoreError> {
        self.check_writable()?;
        let cid = compute_cid(bytes);
        match &self.backing {
            Backing::LocalDirectory(root) => {
                self.local_put(root, &cid, bytes)?;
                self.pin(&cid)?;
            }
            Backing::RemoteNode(endpoint) => {
                self.remote_add(endpoint, &cid, bytes)?;
                self.pin(&cid)?;
            }
        }
        Ok(cid)
    }

    /// Fetches the blob, re-verifying its digest before returning it.
    pub fn get(&self, cid: &Cid) -> Result<Vec<u8>, StoreError> {
        let bytes = match &self.backing {
            Backing::LocalDirectory(root) => match fs::read(blob_path(root, cid)) {
                Ok(b) => b,
                Err(e) if e.kind() == ErrorKind::NotFound => {
                    return Err(StoreError::NotFound(*cid))
                }
                Err(e) => return Err(unavailable(root, e)),
            },
            Backing::RemoteNode(endpoint) => self.remote_cat(endpoint, cid)?,
        };
        if !verify(cid, &bytes) {
            return Err(StoreError::IntegrityViolation(*cid));
        }
        Ok(bytes)
    }

    pub fn contains(&self, cid: &Cid) -> Result<bool, StoreError> {
        match &self.backing {
            Backing::LocalDirectory(root) => Ok(blob_path(root, cid).is_file()),
            Backing::RemoteNode(_) => match self.get(cid) {
                Ok(_) => Ok(true),
                Err(StoreError::NotFound(_)) => Ok(false),
                Err(e) => Err(e),
            },
        }
    }

    pub fn pin(&self, cid: &Cid) -> Result<(), StoreError> {
        self.check_writable()?;
        match &self.backing {
            Backing::LocalDirectory(root) => {
                let _lock = lock_file(root)?;
                let mut pins = read_pins(root)?;
                if pins.insert(*cid) {
                    let body = serde_json::to_vec(&pins).expect("CIDs serialize");
                    write_atomic(root, &root.join("pins.json"), &body)?;
                }
                Ok(())
            }
            Backing::RemoteNode(endpoint) => {
                let url = format!("{endpoint}/api/v0/pin/add");
                self.remote_call(url, cid, None).map(|_| ())
            }
        }
    }

    pub fn pinned(&self) -> Result<BTreeSet<Cid>, StoreError> {
        match &self.backing {
            Backing::LocalDirectory(root) => read_pins(root),
            Backing::RemoteNode(_) => Err(StoreError::StoreUnavailable(
                "listing pins is only supported for local stores".into(),
            )),
        }
    }

    /// Every blob CID held by a local store.
    pub fn list(&self) -> Result<Vec<Cid>, StoreError> {
        let Backing::LocalDirectory(root) = &self.backing else {
            return Err(StoreError::StoreUnavailable(
                "listing is only supported for local stores".into(),
            ));
        };
        let dir = root.join("blobs");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| unavailable(&dir, e))? {
            let entry = entry.map_err(|e| unavailable(&dir, e))?;
            if let Some(cid) = entry.file_name().to_str().and_then(|n| n.parse().ok()) {
                out.push(cid);
            }
        }
        out.sort();
        Ok(out)
    }

    /// On-disk path of a blob in a local store.
    pub fn blob_path(&self, cid: &Cid) -> Option<PathBuf> {
        match &self.backing {
            Backing::LocalDirectory(root) => Some(blob_path(root, cid)),
            Backing::RemoteNode(_) => None,
        }
    }

    fn local_put(&self, root: &Path, cid: &Cid, bytes: &[u8]) -> Result<(), StoreError> {
        let path = blob_path(root, cid);
        if let Ok(existing) = fs::read(&path) {
            if verify(cid, &existing) {
                return Ok(());
            }
        }
        write_atomic(root, &path, bytes)
    }

    fn remote_add(&self, endpoint: &str, cid: &Cid, bytes: &[u8]) -> Result<(), StoreError> {
        let boundary = format!("pf-boundary-{}", hex::encode(&cid.digest()[..8]));
        let mut body = Vec::with_capacity(bytes.len() + 256);
        write!(
            body,
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{cid}\"\r\n\
             Content-Type: application/octet-stream\r\n\r\n"
        )
        .expect("vec write");
        body.extend_from_slice(bytes);
        write!(body, "\r\n--{boundary}--\r\n").expect("vec write");

        let url = format!("{endpoint}/api/v0/add");
        let response = self
            .agent()
            .post(&url)
            .query("cid-version", "0")
            .query("pin", "true")
            .header(
                "Content-Type",
                &format!("multipart/form-data; boundary={boundary}"),
            )
            .send(&body[..])
            .map_err(|e| StoreError::StoreUnavailable(e.to_string()))?;
        let body = read_response(response, cid)?;

        #[derive(Deserialize)]
        struct AddResponse {
            #[serde(rename = "Hash")]
            hash: String,
        }
        // Some nodes stream one JSON object per line; the last names the root.
        let last = body
            .split(|b| *b == b'\n')
            .rfind(|l| !l.iter().all(u8::is_ascii_whitespace))
            .unwrap_or_default();
        let parsed: AddResponse =
            serde_json::from_slice(last).map_err(|e| StoreError::RemoteError {
                status: 200,
                message: format!("unparseable add response: {e}"),
            })?;
        if parsed.hash != cid.to_string() {
            return Err(StoreError::CidMismatch {
                expected: *cid,
                remote: parsed.hash,
            });
        }
        Ok(())
    }

    fn remote_cat(&self, endpoint: &str, cid: &Cid) -> Result<Vec<u8>, StoreError> {
        self.remote_call(format!("{endpoint}/api/v0/cat"), cid, Some(MAX_REMOTE_BLOB))
    }

    fn remote_call(
        &self,
        url: String,
        cid: &Cid,
        limit: Option<u64>,
    ) -> Result<Vec<u8>, StoreError> {
        let response = self
            .agent()
            .post(&url)
            .query("arg", cid.to_string())
            .send_empty()
            .map_err(|e| StoreError::StoreUnavailable(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 404 {
            return Err(StoreError::NotFound(*cid));
        }
        let mut body = response.into_body();
        let bytes = body
            .with_config()
            .limit(limit.unwrap_or(1024 * 1024))
            .read_to_vec()
            .map_err(|e| StoreError::StoreUnavailable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(remote_failure(status, &bytes, cid));
        }
        Ok(bytes)
    }

    fn agent(&self) -> &ureq::Agent {
        self.agent.as_ref().expect("remote store carries an agent")
    }
}

fn read_response(
    response: ureq::http::Response<ureq::Body>,
    cid: &Cid,
) -> Result<Vec<u8>, StoreError> {
    let status = response.status().as_u16();
    let bytes = response
        .into_body()
        .with_config()
        .limit(1024 * 1024)
        .read_to_vec()
        .map_err(|e| StoreError::StoreUnavailable(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(remote_failure(status, &bytes, cid));
    }
    Ok(bytes)
}

// Kubo reports missing blocks as HTTP 500 with a "not found" message.
fn remote_failure(status: u16, body: &[u8], cid: &Cid) -> StoreError {
    let message = String::from_utf8_lossy(body).into_owned();
    if message.to_ascii_lowercase().contains("not found") {
        StoreError::NotFound(*cid)
    } else {
        StoreError::RemoteError { status, message }
    }
}

fn blob_path(root: &Path, cid: &Cid) -> PathBuf {
    root.join("blobs").join(cid.to_string())
}

fn unavailable(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::StoreUnavailable(format!("{}: {e}", path.display()))
}

fn read_pins(root: &Path) -> Result<BTreeSet<Cid>, StoreError> {
    let path = root.join("pins.json");
    match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map_err(|e| StoreError::StoreUnavailable(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(BTreeSet::new()),
        Err(e) => Err(unavailable(&path, e)),
    }
}

fn lock_file(root: &Path) -> Result<File, StoreError> {
    let path = root.join(".lock");
    let f = File::options()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .map_err(|e| unavailable(&path, e))?;
    f.lock().map_err(|e| unavailable(&path, e))?;
    Ok(f)
}

/// Write-temp-then-rename inside `root`, so readers never see partial blobs.
fn write_atomic(root: &Path, dest: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = dest.parent().unwrap_or(root);
    let tmp = tempfile_in(dir)?;
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, dest)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(unavailable(dest, e));
    }
    Ok(())
}

fn tempfile_in(dir: &Path) -> Result<PathBuf, StoreError> {
    use rand::RngCore;
    let mut suffix = [0u8; 8];
    rand::thread_rng().fill_bytes(&mut suffix);
    if !dir.is_dir() {
        return Err(StoreError::StoreUnavailable(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    Ok(dir.join(format!(".tmp-{}", hex::encode(suffix))))
}
