use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ManifestError;

/// Security-relevant API classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiCategory {
    FileIo,
    Network,
    StringParsing,
    MemoryAlloc,
    Other,
}

impl ApiCategory {
    pub const ALL: [ApiCategory; 5] = [
        ApiCategory::FileIo,
        ApiCategory::Network,
        ApiCategory::StringParsing,
        ApiCategory::MemoryAlloc,
        ApiCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ApiCategory::FileIo => "file_io",
            ApiCategory::Network => "network",
            ApiCategory::StringParsing => "string_parsing",
            ApiCategory::MemoryAlloc => "memory_alloc",
            ApiCategory::Other => "other",
        }
    }
}

impl fmt::Display for ApiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ApiCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ApiCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown api category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSource {
    Builtin,
    UserSupplied,
}

/// Name-pattern to category map.
///
/// A pattern is either an exact name (`read`) or a prefix glob with a single
/// trailing star (`recv*`). Lookup picks the most specific match: the longest
/// literal part wins, and an exact pattern beats a prefix of equal length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiCategoryTable {
    entries: BTreeMap<String, ApiCategory>,
    source: TableSource,
}

// Standard C library, common parser/codec/database libraries, and functions
// that recur in CVE reports.
const BUILTIN: &[(&str, ApiCategory)] = &[
    ("fopen", ApiCategory::FileIo),
    ("fdopen", ApiCategory::FileIo),
    ("freopen", ApiCategory::FileIo),
    ("fread", ApiCategory::FileIo),
    ("fwrite", ApiCategory::FileIo),
    ("fgets", ApiCategory::FileIo),
    ("fputs", ApiCategory::FileIo),
    ("fseek", ApiCategory::FileIo),
    ("fclose", ApiCategory::FileIo),
    ("fscanf", ApiCategory::FileIo),
    ("open", ApiCategory::FileIo),
    ("openat", ApiCategory::FileIo),
    ("read", ApiCategory::FileIo),
    ("write", ApiCategory::FileIo),
    ("pread*", ApiCategory::FileIo),
    ("pwrite*", ApiCategory::FileIo),
    ("mmap", ApiCategory::FileIo),
    ("png_init_io", ApiCategory::FileIo),
    ("sqlite3_open*", ApiCategory::FileIo),
    ("gzopen", ApiCategory::FileIo),
    ("gzread", ApiCategory::FileIo),
    ("socket", ApiCategory::Network),
    ("connect", ApiCategory::Network),
    ("bind", ApiCategory::Network),
    ("listen", ApiCategory::Network),
    ("accept*", ApiCategory::Network),
    ("recv*", ApiCategory::Network),
    ("send*", ApiCategory::Network),
    ("getaddrinfo", ApiCategory::Network),
    ("gethostbyname", ApiCategory::Network),
    ("inet_*", ApiCategory::Network),
    ("ntohs", ApiCategory::Network),
    ("ntohl", ApiCategory::Network),
    ("pcap_*", ApiCategory::Network),
    ("SSL_read", ApiCategory::Network),
    ("SSL_write", ApiCategory::Network),
    ("BIO_read", ApiCategory::Network),
    ("str*", ApiCategory::StringParsing),
    ("sscanf", ApiCategory::StringParsing),
    ("scanf", ApiCategory::StringParsing),
    ("sprintf", ApiCategory::StringParsing),
    ("snprintf", ApiCategory::StringParsing),
    ("vsnprintf", ApiCategory::StringParsing),
    ("atoi", ApiCategory::StringParsing),
    ("atol", ApiCategory::StringParsing),
    ("json_*", ApiCategory::StringParsing),
    ("xml*", ApiCategory::StringParsing),
    ("png_read_*", ApiCategory::StringParsing),
    ("sqlite3_prepare*", ApiCategory::StringParsing),
    ("inflate*", ApiCategory::StringParsing),
    ("malloc", ApiCategory::MemoryAlloc),
    ("calloc", ApiCategory::MemoryAlloc),
    ("realloc", ApiCategory::MemoryAlloc),
    ("free", ApiCategory::MemoryAlloc),
    ("mem*", ApiCategory::MemoryAlloc),
    ("alloca", ApiCategory::MemoryAlloc),
    ("aligned_alloc", ApiCategory::MemoryAlloc),
    ("png_malloc", ApiCategory::MemoryAlloc),
    ("sqlite3_malloc*", ApiCategory::MemoryAlloc),
    ("OPENSSL_malloc", ApiCategory::MemoryAlloc),
    ("bcopy", ApiCategory::MemoryAlloc),
];

#[derive(Deserialize)]
struct TableFile {
    entries: BTreeMap<String, String>,
}

impl ApiCategoryTable {
    pub fn builtin() -> Self {
        ApiCategoryTable {
            entries: BUILTIN.iter().map(|&(p, c)| (p.to_string(), c)).collect(),
            source: TableSource::Builtin,
        }
    }

    /// Builds a user table. Patterns must be non-empty.
    pub fn user(entries: BTreeMap<String, ApiCategory>) -> Result<Self, ManifestError> {
        if entries.keys().any(|p| p.is_empty() || p == "*") {
            return Err(ManifestError::Validation(
                "api table: empty pattern".to_string(),
            ));
        }
        Ok(ApiCategoryTable {
            entries,
            source: TableSource::UserSupplied,
        })
    }

    /// Loads `{"entries": {"pattern": "category", ...}}`.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: TableFile = serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut entries = BTreeMap::new();
        for (pattern, cat) in file.entries {
            let cat = cat.parse::<ApiCategory>().map_err(|e| {
                ManifestError::Validation(format!("api table pattern {pattern:?}: {e}"))
            })?;
            entries.insert(pattern, cat);
        }
        Self::user(entries)
    }

    pub fn source(&self) -> TableSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn categorize(&self, name: &str) -> ApiCategory {
        categorize_api(name, self)
    }
}

fn specificity(pattern: &str, name: &str) -> Option<usize> {
    match pattern.strip_suffix('*') {
        Some(prefix) => name.starts_with(prefix).then(|| 2 * prefix.len()),
        None => (pattern == name).then(|| 2 * pattern.len() + 1),
    }
}

/// Total lookup: most specific matching pattern, `Other` when nothing matches.
pub fn categorize_api(name: &str, table: &ApiCategoryTable) -> ApiCategory {
    let mut best: Option<(usize, ApiCategory)> = None;
    // BTreeMap order makes ties resolve to the lexicographically smallest pattern.
    for (pattern, &cat) in &table.entries {
        if let Some(score) = specificity(pattern, name) {
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, cat));
            }
        }
    }
    best.map_or(ApiCategory::Other, |(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_examples() {
        let t = ApiCategoryTable::builtin();
        assert_eq!(t.categorize("memcpy"), ApiCategory::MemoryAlloc);
        assert_eq!(t.categorize("recvfrom"), ApiCategory::Network);
        assert_eq!(t.categorize(""), ApiCategory::Other);
        assert_eq!(t.categorize("strndup"), ApiCategory::StringParsing);
        assert_eq!(t.categorize("fread"), ApiCategory::FileIo);
        assert_eq!(t.categorize("frobnicate"), ApiCategory::Other);
        assert_eq!(t.source(), TableSource::Builtin);
        assert!((55..=70).contains(&t.len()));
    }

    #[test]
    fn longest_match_wins() {
        let mut m = BTreeMap::new();
        m.insert("s*".to_string(), ApiCategory::Network);
        m.insert("str*".to_string(), ApiCategory::StringParsing);
        m.insert("strcpy".to_string(), ApiCategory::MemoryAlloc);
        m.insert("strc*".to_string(), ApiCategory::FileIo);
        let t = ApiCategoryTable::user(m).unwrap();
        assert_eq!(t.categorize("socket"), ApiCategory::Network);
        assert_eq!(t.categorize("strlen"), ApiCategory::StringParsing);
        assert_eq!(t.categorize("strcat"), ApiCategory::FileIo);
        assert_eq!(t.categorize("strcpy"), ApiCategory::MemoryAlloc);
    }

    #[test]
    fn exact_beats_prefix_of_same_length() {
        let mut m = BTreeMap::new();
        m.insert("mem*".to_string(), ApiCategory::MemoryAlloc);
        m.insert("mem".to_string(), ApiCategory::Other);
        let t = ApiCategoryTable::user(m).unwrap();
        assert_eq!(t.categorize("mem"), ApiCategory::Other);
        assert_eq!(t.categorize("memset"), ApiCategory::MemoryAlloc);
    }

    #[test]
    fn empty_pattern_rejected() {
        let mut m = BTreeMap::new();
        m.insert(String::new(), ApiCategory::Other);
        assert!(ApiCategoryTable::user(m).is_err());
    }

    #[test]
    fn load_user_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        std::fs::write(&p, r#"{"entries": {"png_*": "string_parsing", "zz": "network"}}"#).unwrap();
        let t = ApiCategoryTable::load(&p).unwrap();
        assert_eq!(t.source(), TableSource::UserSupplied);
        assert_eq!(t.categorize("png_crc"), ApiCategory::StringParsing);
        assert_eq!(t.categorize("malloc"), ApiCategory::Other);

        std::fs::write(&p, r#"{"entries": {"x": "bogus"}}"#).unwrap();
        assert!(matches!(
            ApiCategoryTable::load(&p),
            Err(ManifestError::Validation(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn lookup_is_total(name in ".{0,24}") {
            let t = ApiCategoryTable::builtin();
            let c = t.categorize(&name);
            proptest::prop_assert!(ApiCategory::ALL.contains(&c));
            proptest::prop_assert_eq!(c, t.categorize(&name));
        }
    }
}
