//! Single-field mutations of serialized transactions.

// Shared across test targets; not every target uses every item.
#![allow(dead_code)]

use serde_json::Value;

const TAGS: [&str; 4] = ["Deploy", "Mint", "AppendUri", "Transfer"];

fn flip_hex_char(s: &str, at: usize) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    chars[at] = if chars[at] == '0' { '1' } else { '0' };
    chars.into_iter().collect()
}

/// Every single-field change of `tx` to a different, well-formed value.
/// `alt_uri` is substituted into URI fields.
pub fn single_field_mutations(tx: &Value, alt_uri: &str) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    let mut push = |label: String, f: &dyn Fn(&mut Value)| {
        let mut m = tx.clone();
        f(&mut m);
        assert_ne!(&m, tx, "mutation {label} is a no-op");
        out.push((label, m));
    };

    push("seq".into(), &|m| {
        m["seq"] = (m["seq"].as_u64().unwrap() + 1).into()
    });
    for field in ["prev_hash", "tx_hash"] {
        for at in [0, 31, 63] {
            push(format!("{field}[{at}]"), &|m| {
                m[field] = flip_hex_char(m[field].as_str().unwrap(), at).into();
            });
        }
    }
    let kind = tx["kind"].as_object().unwrap();
    for tag in TAGS.iter().filter(|t| **t != kind["type"]) {
        push(format!("kind.type={tag}"), &|m| {
            m["kind"]["type"] = (*tag).into()
        });
    }
    for (name, value) in kind.iter().filter(|(k, _)| *k != "type") {
        let label = format!("kind.{name}");
        match value {
            Value::Number(n) => push(label, &|m| {
                m["kind"][name] = (n.as_u64().unwrap() + 1).into()
            }),
            Value::String(s) if s.starts_with("0x") => push(label, &|m| {
                m["kind"][name] = flip_hex_char(s, s.len() - 1).into();
            }),
            Value::String(s) if s.starts_with("ipfs://") => {
                push(label, &|m| m["kind"][name] = alt_uri.into())
            }
            Value::String(s) => push(label, &|m| m["kind"][name] = format!("{s}x").into()),
            other => panic!("unexpected field {name}: {other}"),
        }
    }
    out
}
