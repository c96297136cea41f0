use std::fmt;
use std::path::Path;

use pf_core::aas::AasError;
use pf_core::{CryptoError, LedgerError, ProvenanceError, QualityError, StoreError};

/// Process exit codes. CI pipelines branch on these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    VerificationFailed = 1,
    /// Missing or invalid input, unknown token, missing measurement.
    Input = 2,
    /// Token already exists, caller not authorised.
    Conflict = 3,
    Storage = 4,
    /// Corrupt ledger, tampered blob, failed authentication.
    Integrity = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(Exit::Input, message)
    }

    pub fn file(path: &Path, e: impl fmt::Display) -> Self {
        Self::input(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<QualityError> for CliError {
    fn from(e: QualityError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<AasError> for CliError {
    fn from(e: AasError) -> Self {
        match e {
            AasError::SpecReportMismatch(_) => Self::input(e.to_string()),
            AasError::Parse(_) | AasError::Schema(_) => Self::new(Exit::Integrity, e.to_string()),
        }
    }
}

impl From<CryptoError> for CliError {
    fn from(e: CryptoError) -> Self {
        let exit = match e {
            CryptoError::AuthenticationFailure
            | CryptoError::UnsupportedAlgorithm(_)
            | CryptoError::EnvelopeFormat(_) => Exit::Integrity,
            CryptoError::KeyGenerationFailure(_) => Exit::Storage,
            CryptoError::InvalidKey(_) | CryptoError::KeyFile { .. } => Exit::Input,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let exit = match e {
            StoreError::InvalidCid(_) | StoreError::InvalidUri(_) | StoreError::NotFound(_) => {
                Exit::Input
            }
            StoreError::IntegrityViolation(_) | StoreError::CidMismatch { .. } => Exit::Integrity,
            StoreError::StoreUnavailable(_) | StoreError::RemoteError { .. } => Exit::Storage,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        let exit = match e {
            LedgerError::TokenExists(_) | LedgerError::Unauthorized { .. } => Exit::Conflict,
            LedgerError::CorruptLog(_) => Exit::Integrity,
            LedgerError::Io { .. } => Exit::Storage,
            LedgerError::TokenNotFound(_)
            | LedgerError::InvalidCollection(_)
            | LedgerError::InvalidUri(_)
            | LedgerError::InvalidRecipient
            | LedgerError::InvalidAddress(_) => Exit::Input,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<ProvenanceError> for CliError {
    fn from(e: ProvenanceError) -> Self {
        match e {
            ProvenanceError::Quality(e) => e.into(),
            ProvenanceError::Aas(e) => e.into(),
            ProvenanceError::Crypto(e) => e.into(),
            ProvenanceError::Store(e) => e.into(),
            ProvenanceError::Ledger(e) => e.into(),
            ProvenanceError::Schema(m) => Self::input(format!("metadata: {m}")),
        }
    }
}
