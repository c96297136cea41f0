//! A small, fully published ledger: two tokens, seven manufacturing steps,
//! ten transactions, every URI backed by real blobs in a temporary store.

// Shared across test targets; not every target uses every item.
#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::DateTime;
use pf_core::ledger::Address;
use pf_core::provenance::publish_step_with_rng;
use pf_core::quality::diamond_circle_square;
use pf_core::{
    BlobStore, Cid, LedgerState, MetadataHeader, Millimetres, StepInput, StepSpecs, SymmetricKey,
    TokenId,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

pub const IMAGE: &str = "ipfs://Qmb2Bf5Tvh37knbMzsZmWRKpxpmVeA1zkEPNWu3bPMh3YQ";

pub fn addr(n: u8) -> Address {
    let mut a = [0u8; 20];
    a[0] = 0xa0;
    a[19] = n;
    Address(a)
}

pub fn header(token_id: TokenId) -> MetadataHeader {
    MetadataHeader {
        name: format!("Proof of quality DiamondCicleSquare product ID {token_id}"),
        description: "Deviation of the machined workpiece from the target workpiece".into(),
        image: IMAGE.into(),
    }
}

/// Actuals that shift slightly with the step so each payload differs.
pub fn actuals(step: u64) -> BTreeMap<String, Millimetres> {
    let drift = |t: i64| Millimetres::from_thousandths(t + (step as i64 % 3) * 10, 2);
    [
        ("Height_Surface_1", drift(2050)),
        ("Diameter_Surface_3", drift(25_040)),
        ("Diameter_Hole_1", drift(14_970)),
        ("Height_Surface_3", drift(1950)),
        ("Flatness_Surface_1", drift(60)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect()
}

pub struct Published {
    pub dir: TempDir,
    pub store: BlobStore,
    pub key: SymmetricKey,
    pub state: LedgerState,
    pub specs: StepSpecs,
    /// Every stored blob with the token whose trail references it.
    pub blobs: Vec<(Cid, TokenId)>,
}

impl Published {
    pub fn publish(
        &mut self,
        rng: &mut ChaCha20Rng,
        token_id: TokenId,
        step: u64,
        producer: &str,
    ) -> Cid {
        let def = diamond_circle_square();
        let report = def
            .evaluate(&actuals(step), &token_id.to_string(), DateTime::UNIX_EPOCH)
            .unwrap();
        let input = StepInput {
            report: &report,
            specs: &def.features,
            header: &header(token_id),
            producer,
            step_index: step,
        };
        let published = publish_step_with_rng(input, &self.key, &self.store, rng).unwrap();
        self.blobs.push((published.metadata_cid, token_id));
        self.blobs.push((published.payload_cid, token_id));
        published.metadata_cid
    }
}

pub fn ten_transactions() -> Published {
    let dir = tempfile::tempdir().unwrap();
    let store = BlobStore::local(dir.path().join("store")).unwrap();
    let key = SymmetricKey::new(&[7u8; 32], "fixture-key").unwrap();
    let mut p = Published {
        store,
        key,
        state: LedgerState::deploy("DSC Product QualityTest", "DSCQ").unwrap(),
        specs: StepSpecs::for_all_steps(diamond_circle_square().features),
        blobs: Vec::new(),
        dir,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let (a, b, c) = (addr(1), addr(2), addr(3));

    let m = p.publish(&mut rng, 3, 1, "Company A");
    p.state.mint_token(a, a, 3, &m.to_uri()).unwrap();
    let m = p.publish(&mut rng, 3, 2, "Company A");
    p.state.add_token_uri(a, 3, &m.to_uri()).unwrap();
    let m = p.publish(&mut rng, 3, 3, "Company A");
    p.state.add_token_uri(a, 3, &m.to_uri()).unwrap();
    p.state.transfer(a, b, 3).unwrap();
    let m = p.publish(&mut rng, 3, 4, "Company B");
    p.state.add_token_uri(b, 3, &m.to_uri()).unwrap();

    let m = p.publish(&mut rng, 4, 1, "Company B");
    p.state.mint_token(b, b, 4, &m.to_uri()).unwrap();
    let m = p.publish(&mut rng, 4, 2, "Company B");
    p.state.add_token_uri(b, 4, &m.to_uri()).unwrap();
    p.state.transfer(b, c, 4).unwrap();
    let m = p.publish(&mut rng, 4, 3, "Company C");
    p.state.add_token_uri(c, 4, &m.to_uri()).unwrap();

    assert_eq!(p.state.log().len(), 10);
    p
}
