use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use chrono::Utc;
use pf_core::envelope::{self, EncryptedEnvelope};
use pf_core::ledger::{self, LedgerLock};
use pf_core::provenance::{self, publish_step_with_rng, StepSpecs};
use pf_core::{
    aas, Address, BlobStore, Cid, LedgerState, MetadataHeader, Millimetres, PublishedStep,
    QualityReport, StepInput, SymmetricKey, WorkpieceDefinition,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, Exit};
use crate::render;
use crate::{Cli, Command, Format, StepArgs};

const DEFAULT_DESCRIPTION: &str =
    "Deviation of the manufactured workpiece from its target geometry";

pub fn run(cli: &Cli) -> Result<Exit, CliError> {
    match &cli.command {
        Command::Init { name, symbol } => init(cli, name, symbol),
        Command::Evaluate {
            workpiece,
            measurements,
            workpiece_id,
            out,
            created_at,
        } => evaluate(
            cli,
            workpiece,
            measurements,
            workpiece_id.as_deref(),
            out.as_deref(),
            *created_at,
        ),
        Command::Keygen { key_id, out } => keygen(cli, key_id, out.as_deref()),
        Command::Publish {
            report,
            workpiece,
            token_id,
            owner,
            caller,
            step,
        } => {
            let owner = parse_address(owner)?;
            let caller = caller
                .as_deref()
                .map(parse_address)
                .transpose()?
                .unwrap_or(owner);
            publish(cli, report, workpiece, step, *token_id, |state, cid| {
                provenance::mint_quality_nft(state, caller, owner, *token_id, cid).map(|_| ())
            })
        }
        Command::Append {
            report,
            workpiece,
            token_id,
            caller,
            step,
        } => {
            let caller = parse_address(caller)?;
            publish(cli, report, workpiece, step, *token_id, |state, cid| {
                provenance::append_manufacturing_step(state, caller, *token_id, cid).map(|_| ())
            })
        }
        Command::Mint {
            token_id,
            owner,
            caller,
            metadata,
        } => {
            let owner = parse_address(owner)?;
            let caller = caller
                .as_deref()
                .map(parse_address)
                .transpose()?
                .unwrap_or(owner);
            let cid = Cid::from_uri(metadata)?;
            with_ledger(cli, |state| {
                provenance::mint_quality_nft(state, caller, owner, *token_id, &cid)?;
                Ok(())
            })?;
            emit(
                cli,
                &json!({ "token_id": token_id, "metadata_uri": cid.to_uri() }),
                || format!("minted token {token_id} -> {}", cid.to_uri()),
            );
            Ok(Exit::Ok)
        }
        Command::Transfer {
            token_id,
            caller,
            to,
        } => {
            let caller = parse_address(caller)?;
            let to = parse_address(to)?;
            with_ledger(cli, |state| {
                state.transfer(caller, to, *token_id)?;
                Ok(())
            })?;
            emit(
                cli,
                &json!({ "token_id": token_id, "owner": to.to_string() }),
                || format!("token {token_id} now owned by {to}"),
            );
            Ok(Exit::Ok)
        }
        Command::Verify { token_id, specs } => verify(cli, *token_id, specs),
        Command::Inspect { uri } => inspect(cli, uri),
        Command::Decrypt { uri, out } => decrypt(cli, uri, out.as_deref()),
        Command::Token { token_id } => token(cli, *token_id),
    }
}

fn init(cli: &Cli, name: &str, symbol: &str) -> Result<Exit, CliError> {
    let _lock = LedgerLock::acquire(&cli.ledger)?;
    if cli.ledger.exists() {
        return Err(CliError::new(
            Exit::Conflict,
            format!("{} already exists", cli.ledger.display()),
        ));
    }
    let state = LedgerState::deploy(name, symbol)?;
    state.save(&cli.ledger)?;
    emit(
        cli,
        &json!({ "collection": name, "symbol": symbol, "head": state.head_hash().to_string() }),
        || {
            format!(
                "deployed collection {name:?} ({symbol}) to {}",
                cli.ledger.display()
            )
        },
    );
    Ok(Exit::Ok)
}

fn evaluate(
    cli: &Cli,
    workpiece: &Path,
    measurements: &Path,
    workpiece_id: Option<&str>,
    out: Option<&Path>,
    created_at: Option<chrono::DateTime<Utc>>,
) -> Result<Exit, CliError> {
    let def: WorkpieceDefinition = read_json(workpiece)?;
    let actuals: BTreeMap<String, Millimetres> = read_json(measurements)?;
    let id = workpiece_id.unwrap_or(&def.product_name);
    let report = def.evaluate(&actuals, id, created_at.unwrap_or_else(Utc::now))?;
    if let Some(out) = out {
        write_new(out, &pretty(&report))?;
    }
    match cli.format {
        Format::Json => println!(
            "{}",
            String::from_utf8(pretty(&report)).expect("JSON is UTF-8")
        ),
        Format::Text => print!("{}", render::evaluation_table(&report, &def.features)),
    }
    Ok(Exit::Ok)
}

fn keygen(cli: &Cli, key_id: &str, out: Option<&Path>) -> Result<Exit, CliError> {
    let path = out
        .or(cli.key.as_deref())
        .ok_or_else(|| CliError::input("no key file: pass --out, --key or set PF_KEY_FILE"))?;
    let key = envelope::generate_key(key_id)?;
    key.write_to(path)?;
    emit(cli, &json!({ "key_id": key_id, "path": path }), || {
        format!(
            "wrote key {key_id:?} to {} (keep it private; share only with authorised partners)",
            path.display()
        )
    });
    Ok(Exit::Ok)
}

fn publish(
    cli: &Cli,
    report_path: &Path,
    workpiece_path: &Path,
    step: &StepArgs,
    token_id: u64,
    anchor: impl Fn(&mut LedgerState, &Cid) -> Result<(), pf_core::LedgerError>,
) -> Result<Exit, CliError> {
    if step.seed_nonce.is_some() && !cfg!(debug_assertions) {
        return Err(CliError::input(
            "--seed-nonce is only available in debug builds",
        ));
    }
    let report: QualityReport = read_json(report_path)?;
    let def: WorkpieceDefinition = read_json(workpiece_path)?;
    let header = MetadataHeader {
        name: step.name.clone().unwrap_or_else(|| {
            format!(
                "Proof of quality {} product ID {token_id}",
                def.product_name
            )
        }),
        description: step
            .description
            .clone()
            .unwrap_or_else(|| DEFAULT_DESCRIPTION.to_owned()),
        image: step.image.clone(),
    };

    let published = with_ledger(cli, |state| {
        // Reject conflicts on a scratch copy before anything is written to the store.
        anchor(&mut state.clone(), &pf_core::compute_cid(b""))?;

        let key = load_key(cli)?;
        let store = BlobStore::open(&cli.store)?;
        let input = StepInput {
            report: &report,
            specs: &def.features,
            header: &header,
            producer: &step.producer,
            step_index: step.step,
        };
        let published = match step.seed_nonce {
            Some(seed) => {
                publish_step_with_rng(input, &key, &store, &mut ChaCha20Rng::seed_from_u64(seed))?
            }
            None => provenance::publish_step(input, &key, &store)?,
        };
        anchor(state, &published.metadata_cid)?;
        Ok(published)
    })?;
    print_published(cli, token_id, &published);
    Ok(Exit::Ok)
}

fn print_published(cli: &Cli, token_id: u64, p: &PublishedStep) {
    emit(
        cli,
        &json!({
            "token_id": token_id,
            "metadata_cid": p.metadata_cid.to_string(),
            "payload_cid": p.payload_cid.to_string(),
            "metadata_uri": p.metadata_cid.to_uri(),
        }),
        || {
            format!(
                "token_id     {token_id}\nmetadata_cid {}\npayload_cid  {}",
                p.metadata_cid, p.payload_cid
            )
        },
    );
}

fn verify(cli: &Cli, token_id: u64, spec_args: &[String]) -> Result<Exit, CliError> {
    let state = load_ledger(&cli.ledger)?;
    let key = load_key(cli)?;
    let store = BlobStore::open_read_only(&cli.store)?;
    let mut specs = StepSpecs::default();
    for arg in spec_args {
        match arg.split_once('=') {
            Some((step, path)) if step.bytes().all(|b| b.is_ascii_digit()) && !step.is_empty() => {
                let step: u64 = step
                    .parse()
                    .map_err(|_| CliError::input(format!("bad step in {arg:?}")))?;
                let def: WorkpieceDefinition = read_json(Path::new(path))?;
                specs.by_step.insert(step, def.features);
            }
            _ => {
                let def: WorkpieceDefinition = read_json(Path::new(arg))?;
                specs.fallback = Some(def.features);
            }
        }
    }
    let report = provenance::verify_provenance(&state, token_id, &key, &store, &specs)?;
    match cli.format {
        Format::Json => println!(
            "{}",
            String::from_utf8(pretty(&report)).expect("JSON is UTF-8")
        ),
        Format::Text => println!("{report}"),
    }
    if !report.overall_ok {
        for (i, step) in report
            .steps
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.verified())
        {
            eprintln!("pf: step {} ({}) failed verification", i + 1, step.uri);
        }
        if !report.chain_ok {
            eprintln!("pf: ledger chain failed verification");
        }
        return Ok(Exit::VerificationFailed);
    }
    Ok(Exit::Ok)
}

fn inspect(cli: &Cli, uri: &str) -> Result<Exit, CliError> {
    let store = BlobStore::open_read_only(&cli.store)?;
    let cid = parse_cid(uri)?;
    let bytes = store.get(&cid)?;
    if let Ok(metadata) = provenance::parse_metadata(&bytes) {
        let value = serde_json::to_value(&metadata).expect("metadata serializes");
        println!("{}", serde_json::to_string_pretty(&value).expect("JSON"));
        return Ok(Exit::Ok);
    }
    let env = EncryptedEnvelope::from_bytes(&bytes).map_err(|_| {
        CliError::input(format!(
            "{cid} is neither token metadata nor an encrypted envelope"
        ))
    })?;
    emit(
        cli,
        &json!({
            "cid": cid.to_string(),
            "envelope": {
                "algorithm_id": env.algorithm_id,
                "key_id": env.key_id,
                "nonce": env.nonce.iter().map(|b| format!("{b:02x}")).collect::<String>(),
                "ciphertext_len": env.ciphertext_with_tag.len(),
            }
        }),
        || {
            format!(
                "{cid}: encrypted envelope, algorithm 0x{:02x}, key_id {:?}, {} ciphertext bytes",
                env.algorithm_id,
                env.key_id,
                env.ciphertext_with_tag.len()
            )
        },
    );
    Ok(Exit::Ok)
}

fn decrypt(cli: &Cli, uri: &str, out: Option<&Path>) -> Result<Exit, CliError> {
    let store = BlobStore::open_read_only(&cli.store)?;
    let key = load_key(cli)?;
    let cid = parse_cid(uri)?;
    let bytes = store.get(&cid)?;
    let doc = match provenance::parse_metadata(&bytes) {
        Ok(metadata) => provenance::fetch_document(&metadata, &key, &store)?,
        Err(_) => aas::parse_document(&envelope::decrypt_bytes(&bytes, &key)?)?,
    };
    match out {
        Some(path) => write_new(path, &aas::serialize_canonical(&doc))?,
        None => println!(
            "{}",
            String::from_utf8(pretty(&doc)).expect("JSON is UTF-8")
        ),
    }
    Ok(Exit::Ok)
}

fn token(cli: &Cli, token_id: u64) -> Result<Exit, CliError> {
    let state = load_ledger(&cli.ledger)?;
    let record = state.token(token_id)?;
    emit(
        cli,
        &serde_json::to_value(record).expect("record serializes"),
        || {
            let mut s = format!("token {token_id}\nowner {}\n", record.owner);
            for (i, uri) in record.uri_history.iter().enumerate() {
                s.push_str(&format!("  [{}] {uri}\n", i + 1));
            }
            s.trim_end().to_owned()
        },
    );
    Ok(Exit::Ok)
}

fn with_ledger<T>(
    cli: &Cli,
    f: impl FnOnce(&mut LedgerState) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let _lock = LedgerLock::acquire(&cli.ledger)?;
    let mut state = load_ledger(&cli.ledger)?;
    let out = f(&mut state)?;
    state.save(&cli.ledger)?;
    Ok(out)
}

fn load_ledger(path: &Path) -> Result<LedgerState, CliError> {
    match ledger::load_if_exists(path)? {
        Some(state) => Ok(state),
        None => Err(CliError::input(format!(
            "ledger {} not found; create one with `pf init`",
            path.display()
        ))),
    }
}

fn load_key(cli: &Cli) -> Result<SymmetricKey, CliError> {
    let path = cli
        .key
        .as_deref()
        .ok_or_else(|| CliError::input("no key file: pass --key or set PF_KEY_FILE"))?;
    Ok(SymmetricKey::read_from(path)?)
}

fn parse_address(s: &str) -> Result<Address, CliError> {
    Ok(s.parse::<Address>()?)
}

fn parse_cid(s: &str) -> Result<Cid, CliError> {
    if s.contains("://") {
        Ok(Cid::from_uri(s)?)
    } else {
        Ok(s.parse::<Cid>()?)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::file(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::file(path, e))
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| match e.kind() {
        ErrorKind::NotFound => CliError::file(path, e),
        _ => CliError::new(Exit::Storage, format!("{}: {e}", path.display())),
    })
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(value).expect("value serializes")
}

fn emit(cli: &Cli, json: &serde_json::Value, text: impl FnOnce() -> String) {
    match cli.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(json).expect("JSON")),
        Format::Text => println!("{}", text()),
    }
}
