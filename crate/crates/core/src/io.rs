//! JSON files for patterns, stats and manifests, and the plain-text token format.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::IoError;
use crate::pattern::Pattern;
use crate::stitch::assign_stitch_tags_in_place;
use crate::synth::{Manifest, MANIFEST_FILE};

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| IoError::json(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| IoError::json(path, e))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

/// Reads a pattern; stitch tags and flags are recomputed when either is absent.
pub fn load_pattern(path: &Path) -> Result<Pattern, IoError> {
    let mut pattern: Pattern = load_json(path)?;
    if pattern.panels.iter().any(|p| p.stitch_tags.is_empty() || p.stitch_flags.is_empty()) {
        assign_stitch_tags_in_place(&mut pattern)?;
    }
    Ok(pattern)
}

pub fn save_pattern(path: &Path, pattern: &Pattern) -> Result<(), IoError> {
    save_json(path, pattern)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, IoError> {
    load_json(&dir.join(MANIFEST_FILE))
}

/// Header fields of a token file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenFileHeader {
    pub vocab: usize,
    pub k: usize,
}

/// Writes `#vocab=<V> K=<K>` followed by one space-separated sequence per line.
pub fn write_token_file(path: &Path, header: TokenFileHeader, seqs: &[Vec<u32>]) -> Result<(), IoError> {
    let mut out = Vec::new();
    writeln!(out, "#vocab={} K={}", header.vocab, header.k).expect("write to Vec");
    for seq in seqs {
        let line: Vec<String> = seq.iter().map(u32::to_string).collect();
        writeln!(out, "{}", line.join(" ")).expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| IoError::io(path, e))
}

pub fn read_token_file(path: &Path) -> Result<(Option<TokenFileHeader>, Vec<Vec<u32>>), IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_token_text(&text).map_err(|m| IoError::format(path, m))
}

pub fn parse_token_text(text: &str) -> Result<(Option<TokenFileHeader>, Vec<Vec<u32>>), String> {
    let mut header = None;
    let mut seqs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if ln != 0 {
                return Err(format!("line {}: header only allowed on line 1", ln + 1));
            }
            header = Some(parse_header(rest).ok_or_else(|| format!("bad header {line:?}"))?);
            continue;
        }
        let seq = line
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|_| format!("line {}: bad token {t:?}", ln + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        seqs.push(seq);
    }
    Ok((header, seqs))
}

fn parse_header(rest: &str) -> Option<TokenFileHeader> {
    let mut vocab = None;
    let mut k = None;
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=')?;
        match key {
            "vocab" => vocab = value.parse().ok(),
            "K" => k = value.parse().ok(),
            _ => return None,
        }
    }
    Some(TokenFileHeader { vocab: vocab?, k: k? })
}
