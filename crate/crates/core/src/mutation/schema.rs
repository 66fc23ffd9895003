use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{chunked, lines, query, raw, MutationError, Objective};

/// A broken format rule and the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub offset: usize,
}

impl Violation {
    pub fn new(rule: &'static str, offset: usize) -> Self {
        Violation { rule, offset }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.rule, self.offset)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkedRules {
    /// Leading file signature, ASCII.
    pub magic: String,
    /// Chunk types the generator draws from; any four `[A-Z ]` bytes validate.
    pub chunk_types: Vec<String>,
    pub end_type: String,
    pub max_chunk_len: u32,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRules {
    pub methods: Vec<String>,
    pub version: String,
    /// Header names the generator draws from; any `[A-Za-z0-9-]+` validates.
    pub header_names: Vec<String>,
    pub max_line_len: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRules {
    pub tables: Vec<String>,
    pub columns: Vec<String>,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRules {
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rules {
    ChunkedBinary(ChunkedRules),
    LineProtocol(LineRules),
    QueryText(QueryRules),
    RawBytes(RawRules),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatSchema {
    pub format_id: String,
    pub rules: Rules,
}

pub const KNOWN_FORMATS: [&str; 4] = ["chunked-binary", "line-protocol", "query-text", "raw-bytes"];

impl FormatSchema {
    pub fn load(path: &Path) -> Result<Self, MutationError> {
        let text = std::fs::read_to_string(path).map_err(|e| MutationError::Schema(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, MutationError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| MutationError::Schema(e.to_string()))?;
        let id = value
            .get("format_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| MutationError::Schema("missing format_id".into()))?;
        if !KNOWN_FORMATS.contains(&id) {
            return Err(MutationError::UnknownFormat(id.to_string()));
        }
        let schema: FormatSchema = serde_json::from_value(value).map_err(|e| MutationError::Schema(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<(), MutationError> {
        let expected = match &self.rules {
            Rules::ChunkedBinary(r) => {
                if r.magic.is_empty() || r.end_type.len() != 4 || r.chunk_types.iter().any(|t| t.len() != 4) {
                    return Err(MutationError::Schema("chunk types must be 4 bytes and magic non-empty".into()));
                }
                "chunked-binary"
            }
            Rules::LineProtocol(r) => {
                if r.methods.is_empty() || r.version.is_empty() {
                    return Err(MutationError::Schema("line protocol needs methods and a version".into()));
                }
                "line-protocol"
            }
            Rules::QueryText(r) => {
                if r.tables.is_empty() || r.columns.is_empty() {
                    return Err(MutationError::Schema("query text needs tables and columns".into()));
                }
                "query-text"
            }
            Rules::RawBytes(_) => "raw-bytes",
        };
        if self.format_id != expected {
            return Err(MutationError::Schema(format!(
                "format_id {} does not match rule kind {expected}",
                self.format_id
            )));
        }
        Ok(())
    }

    pub fn max_len(&self) -> usize {
        match &self.rules {
            Rules::ChunkedBinary(r) => r.max_len,
            Rules::LineProtocol(r) => r.max_len,
            Rules::QueryText(r) => r.max_len,
            Rules::RawBytes(r) => r.max_len,
        }
    }

    /// All violations found, in input order; empty means valid.
    pub fn violations(&self, input: &[u8]) -> Vec<Violation> {
        match &self.rules {
            Rules::ChunkedBinary(r) => chunked::validate(input, r),
            Rules::LineProtocol(r) => lines::validate(input, r),
            Rules::QueryText(r) => query::validate(input, r),
            Rules::RawBytes(r) => raw::validate(input, r),
        }
    }

    pub fn is_valid(&self, input: &[u8]) -> bool {
        self.violations(input).is_empty()
    }

    /// Rule-based repair. `None` when the input has no recognizable
    /// structure to repair from.
    pub fn sanitize(&self, input: &[u8]) -> Option<Vec<u8>> {
        match &self.rules {
            Rules::ChunkedBinary(r) => chunked::sanitize(input, r),
            Rules::LineProtocol(r) => lines::sanitize(input, r),
            Rules::QueryText(r) => query::sanitize(input, r),
            Rules::RawBytes(r) => raw::sanitize(input, r),
        }
    }

    pub fn generate(&self, rng: &mut impl Rng) -> Vec<u8> {
        match &self.rules {
            Rules::ChunkedBinary(r) => chunked::generate(rng, r),
            Rules::LineProtocol(r) => lines::generate(rng, r),
            Rules::QueryText(r) => query::generate(rng, r),
            Rules::RawBytes(r) => raw::generate(rng, r),
        }
    }

    pub fn mutate(&self, seed: &[u8], objective: Objective, rng: &mut impl Rng) -> Vec<u8> {
        match &self.rules {
            Rules::ChunkedBinary(r) => chunked::mutate(seed, objective, rng, r),
            Rules::LineProtocol(r) => lines::mutate(seed, objective, rng, r),
            Rules::QueryText(r) => query::mutate(seed, objective, rng, r),
            Rules::RawBytes(r) => raw::mutate(seed, objective, rng, r),
        }
    }

    /// Plain-language constraints for the grammar section of a prompt.
    pub fn describe(&self) -> String {
        match &self.rules {
            Rules::ChunkedBinary(r) => format!(
                "Input starts with the ASCII signature \"{}\", followed by chunks. Each chunk is a 4-byte big-endian \
                 data length (at most {}), a 4-byte type of uppercase letters or spaces (known: {}), then the data. \
                 The last chunk has type \"{}\" and nothing may follow it.",
                r.magic,
                r.max_chunk_len,
                r.chunk_types.join(", "),
                r.end_type
            ),
            Rules::LineProtocol(r) => format!(
                "First line is METHOD TARGET {} with METHOD one of {}. Each further line is Name: value \
                 (known names: {}). A blank line ends the headers; a body may follow. Printable ASCII only, \
                 lines at most {} bytes.",
                r.version,
                r.methods.join(", "),
                r.header_names.join(", "),
                r.max_line_len
            ),
            Rules::QueryText(r) => format!(
                "One statement: SELECT [DISTINCT] columns|*|AGG(col) FROM table [INNER|LEFT|CROSS JOIN table \
                 [ON a = b]] [WHERE col op literal {{AND|OR ...}}] [GROUP BY col] [HAVING AGG(col) op n] \
                 [ORDER BY col [ASC|DESC]] [LIMIT n [OFFSET n]]; terminated by a semicolon. \
                 Tables: {}. Columns: {}.",
                r.tables.join(", "),
                r.columns.join(", ")
            ),
            Rules::RawBytes(r) => format!("Any bytes, at most {} in total.", r.max_len),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_format_rejected() {
        let e = FormatSchema::parse(r#"{"format_id": "xml", "rules": {"kind": "raw_bytes", "max_len": 4}}"#);
        assert!(matches!(e, Err(MutationError::UnknownFormat(_))));
        let e = FormatSchema::parse(r#"{"format_id": "query-text", "rules": {"kind": "raw_bytes", "max_len": 4}}"#);
        assert!(matches!(e, Err(MutationError::Schema(_))));
        let ok = FormatSchema::parse(r#"{"format_id": "raw-bytes", "rules": {"kind": "raw_bytes", "max_len": 4}}"#);
        assert!(ok.unwrap().is_valid(b"abcd"));
    }
}
