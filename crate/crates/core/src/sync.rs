//! Directory queue shared between fuzzers.
//!
//! Each fuzzer writes only under `<root>/<fuzzer_id>/queue/`. An entry is a
//! file holding the raw input bytes; its name carries all metadata:
//! `id:<seq>,src:<parent|none>,adm:<admission>,nov:<score|na>`. Entries are
//! written to a dot-prefixed temp file and renamed into place, so readers
//! never see a partial entry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scheduler::{Admission, QueueEntry};

pub const DEFAULT_SYNC_INTERVAL_SECS: u64 = 5;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("queue I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed queue entry name {0:?}")]
    BadName(String),
    #[error("no entries to choose from")]
    EmptyList,
    #[error("invalid fuzzer id {0:?}")]
    BadFuzzerId(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SyncError + '_ {
    move |source| SyncError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueDirLayout {
    pub root: PathBuf,
}

impl QueueDirLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        QueueDirLayout { root: root.into() }
    }

    pub fn queue_dir(&self, fuzzer_id: &str) -> PathBuf {
        self.root.join(fuzzer_id).join("queue")
    }
}

/// Metadata encoded in an entry's file name.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryName {
    pub seq: u64,
    pub src: Option<String>,
    pub admission: Admission,
    pub novelty: Option<f64>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.')
}

impl EntryName {
    pub fn render(&self) -> String {
        let mut s = format!("id:{:06},src:", self.seq);
        match &self.src {
            Some(p) => s.push_str(p),
            None => s.push_str("none"),
        }
        write!(s, ",adm:{},nov:", self.admission).unwrap();
        match self.novelty {
            Some(n) => write!(s, "{n:.4}").unwrap(),
            None => s.push_str("na"),
        }
        s
    }

    pub fn parse(name: &str) -> Result<Self, SyncError> {
        let bad = || SyncError::BadName(name.to_string());
        let mut fields = name.split(',');
        let mut field = |key: &str| {
            fields
                .next()
                .and_then(|f| f.strip_prefix(key))
                .and_then(|f| f.strip_prefix(':'))
        };
        let id = field("id").ok_or_else(bad)?;
        let src = field("src").ok_or_else(bad)?;
        let adm = field("adm").ok_or_else(bad)?;
        let nov = field("nov").ok_or_else(bad)?;
        if fields.next().is_some() {
            return Err(bad());
        }
        if id.len() < 6 || !id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let seq = id.parse().map_err(|_| bad())?;
        let src = match src {
            "none" => None,
            s if valid_token(s) => Some(s.to_string()),
            _ => return Err(bad()),
        };
        let admission = Admission::parse(adm).ok_or_else(bad)?;
        let novelty = match nov {
            "na" => None,
            s => {
                let v: f64 = s.parse().map_err(|_| bad())?;
                if !v.is_finite() {
                    return Err(bad());
                }
                Some(v)
            }
        };
        Ok(EntryName {
            seq,
            src,
            admission,
            novelty,
        })
    }
}

/// An entry read back from a peer's queue.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedEntry {
    pub peer: String,
    pub name: EntryName,
    pub bytes: Vec<u8>,
}

/// Per-peer highest sequence number already consumed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncCursor {
    pub last_seen: BTreeMap<String, u64>,
}

impl SyncCursor {
    fn accepts(&self, peer: &str, seq: u64) -> bool {
        self.last_seen.get(peer).is_none_or(|&last| seq > last)
    }

    fn advance(&mut self, peer: &str, seq: u64) {
        let slot = self.last_seen.entry(peer.to_string()).or_insert(seq);
        *slot = (*slot).max(seq);
    }
}

type BeforeRename = Box<dyn FnMut(&Path) -> io::Result<()> + Send>;

/// Append-only writer for one fuzzer's queue directory.
pub struct QueueWriter {
    dir: PathBuf,
    next_seq: u64,
    before_rename: Option<BeforeRename>,
}

impl std::fmt::Debug for QueueWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueueWriter")
            .field("dir", &self.dir)
            .field("next_seq", &self.next_seq)
            .finish()
    }
}

impl QueueWriter {
    /// Opens (creating if needed) the queue of `fuzzer_id`; numbering
    /// continues after the highest existing entry.
    pub fn open(layout: &QueueDirLayout, fuzzer_id: &str) -> Result<Self, SyncError> {
        if !valid_token(fuzzer_id) || fuzzer_id.starts_with('.') {
            return Err(SyncError::BadFuzzerId(fuzzer_id.to_string()));
        }
        let dir = layout.queue_dir(fuzzer_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut next_seq = 0;
        for name in list_names(&dir)? {
            if let Ok(n) = EntryName::parse(&name) {
                next_seq = next_seq.max(n.seq + 1);
            }
        }
        Ok(QueueWriter {
            dir,
            next_seq,
            before_rename: None,
        })
    }

    /// Installs a hook run after the temp file is written and before it is
    /// renamed into place. An error from the hook aborts the publish.
    pub fn set_before_rename(&mut self, hook: impl FnMut(&Path) -> io::Result<()> + Send + 'static) {
        self.before_rename = Some(Box::new(hook));
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn publish(&mut self, entry: &QueueEntry) -> Result<String, SyncError> {
        let src = entry.parent.as_ref().filter(|p| valid_token(p)).cloned();
        let name = EntryName {
            seq: self.next_seq,
            src,
            admission: entry.admission,
            novelty: entry.novelty_score,
        }
        .render();
        let tmp = self
            .dir
            .join(format!(".tmp-{:06}-{}", self.next_seq, std::process::id()));
        fs::write(&tmp, &entry.bytes).map_err(io_err(&tmp))?;
        if let Some(hook) = self.before_rename.as_mut() {
            hook(&tmp).map_err(io_err(&tmp))?;
        }
        let dest = self.dir.join(&name);
        fs::rename(&tmp, &dest).map_err(io_err(&dest))?;
        self.next_seq += 1;
        Ok(name)
    }
}

/// One-shot publish; opens the writer, which rescans the directory.
pub fn publish(layout: &QueueDirLayout, fuzzer_id: &str, entry: &QueueEntry) -> Result<String, SyncError> {
    QueueWriter::open(layout, fuzzer_id)?.publish(entry)
}

fn list_names(dir: &Path) -> Result<Vec<String>, SyncError> {
    let mut names = Vec::new();
    for item in fs::read_dir(dir).map_err(io_err(dir))? {
        let item = item.map_err(io_err(dir))?;
        if let Some(name) = item.file_name().to_str() {
            if !name.starts_with('.') {
                names.push(name.to_string());
            }
        }
    }
    Ok(names)
}

/// Every peer entry newer than `cursor`, in (peer, sequence) order.
///
/// Files with malformed names or unreadable contents are skipped with a
/// warning; an unreadable entry with a valid name still advances the cursor.
pub fn scan_new(layout: &QueueDirLayout, self_id: &str, cursor: &mut SyncCursor) -> Result<Vec<SyncedEntry>, SyncError> {
    let mut peers = Vec::new();
    match fs::read_dir(&layout.root) {
        Ok(it) => {
            for item in it {
                let item = item.map_err(io_err(&layout.root))?;
                if let Some(name) = item.file_name().to_str() {
                    if name != self_id && !name.starts_with('.') && item.path().join("queue").is_dir() {
                        peers.push(name.to_string());
                    }
                }
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&layout.root)(e)),
    }
    peers.sort();

    let mut out = Vec::new();
    for peer in peers {
        let dir = layout.queue_dir(&peer);
        let mut fresh = Vec::new();
        for file in list_names(&dir)? {
            match EntryName::parse(&file) {
                Ok(n) if cursor.accepts(&peer, n.seq) => fresh.push((n, file)),
                Ok(_) => {}
                Err(_) => log::warn!("skipping malformed queue entry {}", dir.join(&file).display()),
            }
        }
        fresh.sort_by_key(|(n, _)| n.seq);
        for (name, file) in fresh {
            let seq = name.seq;
            match fs::read(dir.join(&file)) {
                Ok(bytes) => out.push(SyncedEntry {
                    peer: peer.clone(),
                    name,
                    bytes,
                }),
                Err(e) => log::warn!("skipping unreadable queue entry {}: {e}", dir.join(&file).display()),
            }
            cursor.advance(&peer, seq);
        }
    }
    Ok(out)
}

/// The entry with the most new edges; ties go to the most recent.
pub fn select_inspirational(entries: &[QueueEntry]) -> Result<&QueueEntry, SyncError> {
    entries
        .iter()
        .max_by_key(|e| (e.new_edges, e.created_at))
        .ok_or(SyncError::EmptyList)
}
