//! A reference model of the token contract, and a checker that runs an
//! operation sequence against both the model and the real ledger.

// Shared across test targets; not every target uses every item.
#![allow(dead_code)]

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use pf_core::ledger::Address;
use pf_core::{compute_cid, LedgerError, LedgerState, TokenId};
use rand::Rng;

#[derive(Debug, Clone)]
pub enum Op {
    Mint {
        caller: u8,
        owner: u8,
        token_id: TokenId,
        uri: usize,
    },
    Append {
        caller: u8,
        token_id: TokenId,
        uri: usize,
    },
    Transfer {
        caller: u8,
        to: u8,
        token_id: TokenId,
    },
}

/// Account 0 is the zero address.
pub const ACCOUNTS: u8 = 4;
pub const TOKENS: TokenId = 5;

pub fn account(n: u8) -> Address {
    let mut a = [0u8; 20];
    if n != 0 {
        a[0] = 0xb0;
        a[19] = n;
    }
    Address(a)
}

/// Valid URIs first, then two the ledger must refuse.
pub fn uri_pool() -> Vec<String> {
    let mut pool: Vec<String> = (0..4u8).map(|i| compute_cid(&[i]).to_uri()).collect();
    pool.push(format!("ipfs_hash://{}", compute_cid(b"legacy")));
    pool.push("ipfs://not-a-cid".into());
    pool
}

pub fn random_op<R: Rng>(rng: &mut R, pool_len: usize) -> Op {
    let token_id = rng.gen_range(0..TOKENS);
    match rng.gen_range(0..3) {
        0 => Op::Mint {
            caller: rng.gen_range(0..ACCOUNTS),
            owner: rng.gen_range(0..ACCOUNTS),
            token_id,
            uri: rng.gen_range(0..pool_len),
        },
        1 => Op::Append {
            caller: rng.gen_range(0..ACCOUNTS),
            token_id,
            uri: rng.gen_range(0..pool_len),
        },
        _ => Op::Transfer {
            caller: rng.gen_range(0..ACCOUNTS),
            to: rng.gen_range(0..ACCOUNTS),
            token_id,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Ok,
    TokenExists,
    TokenNotFound,
    Unauthorized,
    InvalidRecipient,
    InvalidUri,
}

fn classify(e: &LedgerError) -> Outcome {
    match e {
        LedgerError::TokenExists(_) => Outcome::TokenExists,
        LedgerError::TokenNotFound(_) => Outcome::TokenNotFound,
        LedgerError::Unauthorized { .. } => Outcome::Unauthorized,
        LedgerError::InvalidRecipient => Outcome::InvalidRecipient,
        LedgerError::InvalidUri(_) => Outcome::InvalidUri,
        other => panic!("unexpected ledger error {other:?}"),
    }
}

#[derive(Default)]
struct Model {
    tokens: BTreeMap<TokenId, (u8, Vec<String>)>,
}

impl Model {
    fn apply(&mut self, op: &Op, pool: &[String]) -> Outcome {
        let valid = |uri: usize| uri < 4;
        match *op {
            Op::Mint {
                owner,
                token_id,
                uri,
                ..
            } => match self.tokens.entry(token_id) {
                Entry::Occupied(_) => Outcome::TokenExists,
                Entry::Vacant(_) if owner == 0 => Outcome::InvalidRecipient,
                Entry::Vacant(_) if !valid(uri) => Outcome::InvalidUri,
                Entry::Vacant(slot) => {
                    slot.insert((owner, vec![pool[uri].clone()]));
                    Outcome::Ok
                }
            },
            Op::Append {
                caller,
                token_id,
                uri,
            } => match self.tokens.get_mut(&token_id) {
                None => Outcome::TokenNotFound,
                Some((owner, _)) if *owner != caller => Outcome::Unauthorized,
                Some(_) if !valid(uri) => Outcome::InvalidUri,
                Some((_, uris)) => {
                    uris.push(pool[uri].clone());
                    Outcome::Ok
                }
            },
            Op::Transfer {
                caller,
                to,
                token_id,
            } => match self.tokens.get_mut(&token_id) {
                None => Outcome::TokenNotFound,
                Some((owner, _)) if *owner != caller => Outcome::Unauthorized,
                Some(_) if to == 0 => Outcome::InvalidRecipient,
                Some((owner, _)) => {
                    *owner = to;
                    Outcome::Ok
                }
            },
        }
    }
}

/// Runs `ops`, checking after every step that the ledger agrees with the
/// model, the log is append-only, rejected calls leave no trace, and the
/// chain verifies and survives a save/load round trip.
pub fn check_sequence(ops: &[Op]) -> Result<(), String> {
    let pool = uri_pool();
    let mut model = Model::default();
    let mut state = LedgerState::deploy("Model", "MDL").unwrap();
    for (i, op) in ops.iter().enumerate() {
        let before = state.clone();
        let result = match *op {
            Op::Mint {
                caller,
                owner,
                token_id,
                uri,
            } => state
                .mint_token(account(caller), account(owner), token_id, &pool[uri])
                .map(|_| ()),
            Op::Append {
                caller,
                token_id,
                uri,
            } => state
                .add_token_uri(account(caller), token_id, &pool[uri])
                .map(|_| ()),
            Op::Transfer {
                caller,
                to,
                token_id,
            } => state
                .transfer(account(caller), account(to), token_id)
                .map(|_| ()),
        };
        let got = result.as_ref().map_or_else(classify, |_| Outcome::Ok);
        let want = model.apply(op, &pool);
        let fail = |what: &str| Err(format!("op {i} {op:?}: {what}"));
        if got != want {
            return fail(&format!("ledger said {got:?}, model said {want:?}"));
        }
        if got == Outcome::Ok {
            if state.log().len() != before.log().len() + 1
                || state.log()[..before.log().len()] != *before.log()
            {
                return fail("log is not an append-only extension");
            }
        } else if state != before {
            return fail("rejected call changed the ledger");
        }
        for (id, before_token) in before.tokens() {
            let uris = state.token_uris(*id).map_err(|e| e.to_string())?;
            if !uris.starts_with(&before_token.uri_history) {
                return fail("a token's URI history was rewritten");
            }
        }
        if state.tokens().len() != model.tokens.len() {
            return fail("token count differs from model");
        }
        for (id, (owner, uris)) in &model.tokens {
            if state.owner_of(*id).ok() != Some(account(*owner))
                || state.token_uris(*id).ok() != Some(uris.as_slice())
            {
                return fail(&format!("token {id} differs from model"));
            }
        }
        if !state.verify_chain() {
            return fail("chain does not verify");
        }
    }
    match LedgerState::from_json(&state.to_json()) {
        Ok(reloaded) if reloaded == state => Ok(()),
        Ok(_) => Err("reloaded ledger differs".into()),
        Err(e) => Err(format!("reload failed: {e}")),
    }
}
