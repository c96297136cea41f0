//! End-to-end pipeline: report → document → envelope → store → metadata →
//! token, and the reverse walk that verifies a token's full trail.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aas::{self, AasError, QualityRecordDocument};
use crate::canonical;
use crate::cas::{BlobStore, Cid, StoreError};
use crate::envelope::{self, CryptoError, SymmetricKey};
use crate::ledger::{Address, LedgerError, LedgerState, TokenId, Transaction};
use crate::quality::{self, FeatureSpec, QualityError, QualityReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProvenanceError {
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Aas(#[from] AasError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("metadata violates schema: {0}")]
    Schema(String),
}

/// Display fields of the token metadata document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataHeader {
    pub name: String,
    pub description: String,
    /// `ipfs://<cid>` of the display image.
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenContent {
    pub ipfs_hash: String,
}

/// The public token metadata. Only the referenced payload is encrypted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NftMetadata {
    pub name: String,
    pub description: String,
    pub image: String,
    pub attributes: Vec<serde_json::Value>,
    #[serde(rename = "hidden content")]
    pub hidden_content: HiddenContent,
}

impl NftMetadata {
    pub fn payload_cid(&self) -> Result<Cid, ProvenanceError> {
        Cid::from_uri(&self.hidden_content.ipfs_hash).map_err(|_| {
            ProvenanceError::Schema(format!("bad ipfs_hash {:?}", self.hidden_content.ipfs_hash))
        })
    }
}

pub fn build_metadata(
    header: &MetadataHeader,
    payload_cid: &Cid,
) -> Result<Vec<u8>, ProvenanceError> {
    for (field, value) in [
        ("name", &header.name),
        ("description", &header.description),
        ("image", &header.image),
    ] {
        if value.trim().is_empty() {
            return Err(ProvenanceError::Schema(format!(
                "missing header field {field:?}"
            )));
        }
    }
    let image = Cid::from_uri(&header.image).map_err(|_| {
        ProvenanceError::Schema(format!("image {:?} is not an ipfs:// URI", header.image))
    })?;
    let metadata = NftMetadata {
        name: header.name.clone(),
        description: header.description.clone(),
        image: image.to_uri(),
        attributes: Vec::new(),
        hidden_content: HiddenContent {
            ipfs_hash: payload_cid.to_uri(),
        },
    };
    Ok(canonical::to_canonical_bytes(&metadata).expect("metadata serializes"))
}

/// Accepts both `ipfs://` and `ipfs_hash://` for the hidden payload reference.
pub fn parse_metadata(bytes: &[u8]) -> Result<NftMetadata, ProvenanceError> {
    let metadata: NftMetadata =
        serde_json::from_slice(bytes).map_err(|e| ProvenanceError::Schema(e.to_string()))?;
    metadata.payload_cid()?;
    Ok(metadata)
}

/// Everything needed to publish one manufacturing step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub report: &'a QualityReport,
    pub specs: &'a [FeatureSpec],
    pub header: &'a MetadataHeader,
    pub producer: &'a str,
    pub step_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PublishedStep {
    pub metadata_cid: Cid,
    pub payload_cid: Cid,
}

pub fn publish_step(
    step: StepInput<'_>,
    key: &SymmetricKey,
    store: &BlobStore,
) -> Result<PublishedStep, ProvenanceError> {
    publish_step_with_rng(step, key, store, &mut OsRng)
}

/// Like [`publish_step`] with an explicit nonce source.
pub fn publish_step_with_rng<R: RngCore + CryptoRng>(
    step: StepInput<'_>,
    key: &SymmetricKey,
    store: &BlobStore,
    rng: &mut R,
) -> Result<PublishedStep, ProvenanceError> {
    step.report
        .validate()
        .map_err(|e| AasError::SpecReportMismatch(e.to_string()))?;
    let doc = aas::build_document(step.report, step.specs, step.producer, step.step_index)?;
    let envelope = envelope::encrypt_with_rng(&aas::serialize_canonical(&doc), key, rng)?;
    // Build metadata before touching the store so header errors leave it untouched.
    let payload_bytes = envelope.to_bytes();
    let payload_cid = crate::cas::compute_cid(&payload_bytes);
    let metadata = build_metadata(step.header, &payload_cid)?;
    store.put(&payload_bytes)?;
    let metadata_cid = store.put(&metadata)?;
    Ok(PublishedStep {
        metadata_cid,
        payload_cid,
    })
}

pub fn mint_quality_nft<'s>(
    state: &'s mut LedgerState,
    caller: Address,
    owner: Address,
    token_id: TokenId,
    metadata_cid: &Cid,
) -> Result<&'s Transaction, LedgerError> {
    state.mint_token(caller, owner, token_id, &metadata_cid.to_uri())
}

pub fn append_manufacturing_step<'s>(
    state: &'s mut LedgerState,
    caller: Address,
    token_id: TokenId,
    metadata_cid: &Cid,
) -> Result<&'s Transaction, LedgerError> {
    state.add_token_uri(caller, token_id, &metadata_cid.to_uri())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepVerification {
    pub uri: String,
    /// Metadata blob fetched and matched its CID.
    pub metadata_ok: bool,
    /// Hidden envelope fetched, CID verified, decrypted and parsed.
    pub payload_ok: bool,
    /// Stored verdicts agree with verdicts recomputed from the supplied specs.
    pub verdicts_ok: bool,
    pub payload_uri: Option<String>,
    pub producer: Option<String>,
    pub step_index: Option<u64>,
    pub asset_id: Option<String>,
    /// Feature id → stored in-spec verdict.
    pub in_spec_summary: BTreeMap<String, bool>,
    pub disagreements: Vec<String>,
    pub errors: Vec<String>,
}

impl StepVerification {
    fn new(uri: &str) -> Self {
        Self {
            uri: uri.to_owned(),
            metadata_ok: false,
            payload_ok: false,
            verdicts_ok: false,
            payload_uri: None,
            producer: None,
            step_index: None,
            asset_id: None,
            in_spec_summary: BTreeMap::new(),
            disagreements: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn verified(&self) -> bool {
        self.metadata_ok && self.payload_ok && self.verdicts_ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceReport {
    pub token_id: TokenId,
    pub owner: Address,
    pub collection: String,
    pub steps: Vec<StepVerification>,
    pub chain_ok: bool,
    pub overall_ok: bool,
}

impl fmt::Display for ProvenanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(
            f,
            "token {} in {:?}, owner {}",
            self.token_id, self.collection, self.owner
        )?;
        writeln!(f, "ledger chain: {}", flag(self.chain_ok))?;
        for (i, step) in self.steps.iter().enumerate() {
            writeln!(
                f,
                "step {} {}: metadata {}, payload {}, verdicts {}",
                i + 1,
                step.uri,
                flag(step.metadata_ok),
                flag(step.payload_ok),
                flag(step.verdicts_ok),
            )?;
            if let (Some(producer), Some(idx)) = (&step.producer, step.step_index) {
                writeln!(f, "  producer {producer}, manufacturing step {idx}")?;
            }
            for (feature, in_spec) in &step.in_spec_summary {
                writeln!(
                    f,
                    "  {feature}: {}",
                    if *in_spec { "True" } else { "False" }
                )?;
            }
            for d in &step.disagreements {
                writeln!(f, "  disagreement: {d}")?;
            }
            for e in &step.errors {
                writeln!(f, "  error: {e}")?;
            }
        }
        write!(
            f,
            "overall: {}",
            if self.overall_ok {
                "VERIFIED"
            } else {
                "NOT VERIFIED"
            }
        )
    }
}

/// Feature specs a recipient holds, per manufacturing step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepSpecs {
    pub by_step: BTreeMap<u64, Vec<FeatureSpec>>,
    /// Used for any step without an explicit entry.
    pub fallback: Option<Vec<FeatureSpec>>,
}

impl StepSpecs {
    pub fn for_all_steps(specs: Vec<FeatureSpec>) -> Self {
        Self {
            by_step: BTreeMap::new(),
            fallback: Some(specs),
        }
    }

    pub fn get(&self, step_index: u64) -> Option<&[FeatureSpec]> {
        self.by_step
            .get(&step_index)
            .or(self.fallback.as_ref())
            .map(Vec::as_slice)
    }
}

impl From<BTreeMap<u64, Vec<FeatureSpec>>> for StepSpecs {
    fn from(by_step: BTreeMap<u64, Vec<FeatureSpec>>) -> Self {
        Self {
            by_step,
            fallback: None,
        }
    }
}

/// Walks the token's URI history and verifies each step independently.
///
/// Read-only: neither the ledger nor the store is modified. Per-step
/// failures are collected in the report; only an unknown token is an error.
pub fn verify_provenance(
    state: &LedgerState,
    token_id: TokenId,
    key: &SymmetricKey,
    store: &BlobStore,
    specs_by_step: &StepSpecs,
) -> Result<ProvenanceReport, ProvenanceError> {
    let token = state.token(token_id)?;
    let chain_ok = state.verify_chain();
    let steps: Vec<StepVerification> = token
        .uri_history
        .iter()
        .map(|uri| verify_step(uri, key, store, specs_by_step))
        .collect();
    let overall_ok = chain_ok && !steps.is_empty() && steps.iter().all(StepVerification::verified);
    Ok(ProvenanceReport {
        token_id,
        owner: token.owner,
        collection: state.collection_name().to_owned(),
        steps,
        chain_ok,
        overall_ok,
    })
}

fn verify_step(
    uri: &str,
    key: &SymmetricKey,
    store: &BlobStore,
    specs_by_step: &StepSpecs,
) -> StepVerification {
    let mut step = StepVerification::new(uri);
    let metadata = match Cid::from_uri(uri)
        .map_err(ProvenanceError::from)
        .and_then(|cid| Ok(store.get(&cid)?))
        .and_then(|bytes| parse_metadata(&bytes))
    {
        Ok(m) => m,
        Err(e) => {
            step.errors.push(format!("metadata: {e}"));
            return step;
        }
    };
    step.metadata_ok = true;
    step.payload_uri = Some(metadata.hidden_content.ipfs_hash.clone());

    let doc = match fetch_document(&metadata, key, store) {
        Ok(doc) => doc,
        Err(e) => {
            step.errors.push(format!("payload: {e}"));
            return step;
        }
    };
    step.payload_ok = true;
    step.producer = Some(doc.producer.clone());
    step.step_index = Some(doc.step_index);
    step.asset_id = Some(doc.asset_id.clone());
    step.in_spec_summary = doc.in_spec_summary();

    match specs_by_step.get(doc.step_index) {
        Some(specs) => {
            step.disagreements = recheck_verdicts(&doc, specs);
            step.verdicts_ok = step.disagreements.is_empty();
        }
        None => step.errors.push(format!(
            "no feature specs supplied for manufacturing step {}",
            doc.step_index
        )),
    }
    step
}

/// Fetches, authenticates and parses the encrypted payload a metadata document points at.
pub fn fetch_document(
    metadata: &NftMetadata,
    key: &SymmetricKey,
    store: &BlobStore,
) -> Result<QualityRecordDocument, ProvenanceError> {
    let cid = metadata.payload_cid()?;
    let bytes = store.get(&cid)?;
    let plaintext = envelope::decrypt_bytes(&bytes, key)?;
    Ok(aas::parse_document(&plaintext)?)
}

/// Recomputes each verdict from the stored actual value and compares it with
/// the stored `QualityInSpec`. Returns one message per disagreement.
pub fn recheck_verdicts(doc: &QualityRecordDocument, specs: &[FeatureSpec]) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for spec in specs {
        seen.insert(spec.feature_id.as_str());
        let Some(element) = doc.element(&spec.feature_id) else {
            out.push(format!("{}: missing from document", spec.feature_id));
            continue;
        };
        match quality::evaluate_feature(spec, element.quality_actual_value) {
            Ok(rec) if rec.in_spec == element.quality_in_spec => {}
            Ok(rec) => out.push(format!(
                "{}: stored QualityInSpec {} but recomputed {} (actual {}, deviation {})",
                spec.feature_id,
                element.quality_in_spec,
                rec.in_spec,
                rec.actual_mm,
                rec.deviation_mm.to_signed_string()
            )),
            Err(e) => out.push(format!("{}: {e}", spec.feature_id)),
        }
    }
    for feature in doc.in_spec_summary().keys() {
        if !seen.contains(feature.as_str()) {
            out.push(format!("{feature}: no spec supplied"));
        }
    }
    out
}
