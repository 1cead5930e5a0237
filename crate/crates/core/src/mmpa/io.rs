//! JSON-lines rule files.
//!
//! Line 1 is a header `{"format_version":1,"provenance":{...},"fragment_index":{...}}`;
//! every following line holds one rule
//! `{"frag_a":..,"frag_b":..,"delta_mean":..,"delta_std":..,"count":..}`,
//! sorted by `(frag_a, frag_b)`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rules::{Provenance, Rule, RuleSet};
use crate::error::{Error, Result};

pub const RULE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    provenance: Provenance,
    fragment_index: BTreeMap<String, usize>,
}

pub fn write_rules<W: Write>(rs: &RuleSet, mut w: W) -> Result<()> {
    let header = Header {
        format_version: RULE_FORMAT_VERSION,
        provenance: rs.provenance.clone(),
        fragment_index: rs.fragment_index.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for r in &rs.rules {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn rules_to_string(rs: &RuleSet) -> String {
    let mut buf = Vec::new();
    write_rules(rs, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_rules<R: BufRead>(r: R) -> Result<RuleSet> {
    let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Format("empty rule file".into()))?;
    let header: Header = serde_json::from_str(&first?)
        .map_err(|e| Error::Format(format!("line 1: {e}")))?;
    if header.format_version != RULE_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    let mut rules = Vec::new();
    for (lineno, line) in lines {
        let rule: Rule = serde_json::from_str(&line?)
            .map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
        rules.push(rule);
    }
    let rs = RuleSet {
        rules,
        fragment_index: header.fragment_index,
        provenance: header.provenance,
    };
    rs.check()?;
    Ok(rs)
}

pub fn save_rules(rs: &RuleSet, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_rules(rs, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_rules(path: &Path) -> Result<RuleSet> {
    let f = std::fs::File::open(path)?;
    read_rules(std::io::BufReader::new(f))
}
