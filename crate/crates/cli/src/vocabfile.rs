//! Plain-text vocabulary: `action <name>`, `object <name>` and
//! `pair <action> <object> <seen|unseen>` lines, indices in declaration order.

use std::fmt::Write as _;

use lowrank_adapt::decomp::HoiVocabulary;
use lowrank_adapt::{Error, Result};

pub fn vocab_to_text(v: &HoiVocabulary) -> String {
    let mut s = String::new();
    for a in &v.actions {
        let _ = writeln!(s, "action {a}");
    }
    for o in &v.objects {
        let _ = writeln!(s, "object {o}");
    }
    for (&(a, o), &seen) in v.pairs.iter().zip(&v.seen) {
        let _ = writeln!(s, "pair {a} {o} {}", if seen { "seen" } else { "unseen" });
    }
    s
}

pub fn parse_vocab(text: &str) -> Result<HoiVocabulary> {
    let (mut actions, mut objects, mut pairs, mut seen) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Format(format!("vocabulary line {}: {line:?}", n + 1));
        let (tag, rest) = line.split_once(' ').ok_or_else(bad)?;
        match tag {
            "action" => actions.push(rest.trim().to_string()),
            "object" => objects.push(rest.trim().to_string()),
            "pair" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                let [a, o, s] = f[..] else { return Err(bad()) };
                pairs.push((a.parse().map_err(|_| bad())?, o.parse().map_err(|_| bad())?));
                seen.push(match s {
                    "seen" => true,
                    "unseen" => false,
                    _ => return Err(bad()),
                });
            }
            _ => return Err(bad()),
        }
    }
    HoiVocabulary::new(actions, objects, pairs, seen)
}
