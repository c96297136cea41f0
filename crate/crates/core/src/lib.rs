//! Quality provenance records for machined workpieces.
//!
//! Measured features are evaluated against their tolerances ([`quality`]),
//! written into a submodel-shaped document ([`aas`]), encrypted
//! ([`envelope`]), stored by content address ([`cas`]) and anchored in a
//! token ledger ([`ledger`]). [`provenance`] ties the steps together and
//! verifies a token's trail end to end.

pub mod aas;
pub mod canonical;
pub mod cas;
pub mod decimal;
pub mod envelope;
pub mod ledger;
pub mod provenance;
pub mod quality;

pub use aas::{
    build_document, parse_document, serialize_canonical, AasError, MetrologyElement,
    QualityRecordDocument,
};
pub use cas::{compute_cid, BlobStore, Cid, StoreError};
pub use decimal::Millimetres;
pub use envelope::{decrypt, encrypt, generate_key, CryptoError, EncryptedEnvelope, SymmetricKey};
pub use ledger::{Address, LedgerError, LedgerState, TokenId, TokenRecord, Transaction, TxKind};
pub use provenance::{
    build_metadata, publish_step, verify_provenance, MetadataHeader, NftMetadata, ProvenanceError,
    ProvenanceReport, PublishedStep, StepInput, StepSpecs, StepVerification,
};
pub use quality::{
    evaluate_feature, evaluate_workpiece, FeatureKind, FeatureSpec, MeasurementRecord,
    QualityError, QualityReport, WorkpieceDefinition,
};
