//! Short-term observation window, long-term notes and persisted rules.
//!
//! Long-term entries and rules live in two append-only JSON-lines files under
//! the data directory. Rule files are a log of `save`/`delete` operations so
//! that a deletion never rewrites earlier lines.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{TaskPlan, TriggerPredicate};

pub const SHORT_TERM_CAPACITY: usize = 32;
pub const MEMORY_FILE: &str = "memory.jsonl";
pub const RULES_FILE: &str = "rules.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Observation,
    Summary,
    PreferenceNote,
}

impl std::str::FromStr for MemoryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "observation" => Ok(MemoryKind::Observation),
            "summary" => Ok(MemoryKind::Summary),
            "preference_note" => Ok(MemoryKind::PreferenceNote),
            other => Err(format!("unknown memory kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryEntry {
    pub kind: MemoryKind,
    pub text: String,
    pub clock: u64,
    pub conversation_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: u64,
    pub trigger: TriggerPredicate,
    pub plan: TaskPlan,
    pub created_clock: u64,
    pub enabled: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum RuleRecord {
    Save { rule: Rule },
    Delete { id: u64 },
}

/// A line that could not be decoded while loading; it is skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorruptRecord {
    pub file: String,
    pub line: usize,
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("no rule with id {0}")]
    NoSuchRule(u64),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    dir: Option<PathBuf>,
    short_term: VecDeque<MemoryEntry>,
    long_term: Vec<MemoryEntry>,
    rules: BTreeMap<u64, Rule>,
    clock: u64,
    corrupt: Vec<CorruptRecord>,
}

impl MemoryStore {
    /// A store that never touches the disk.
    pub fn in_memory() -> Self {
        MemoryStore::default()
    }

    /// Opens (creating if needed) the store under `dir` and replays both files.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StorageError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut store = MemoryStore {
            dir: Some(dir.clone()),
            ..MemoryStore::default()
        };

        let memory_path = dir.join(MEMORY_FILE);
        for (line, text) in read_lines(&memory_path)? {
            match serde_json::from_str::<MemoryEntry>(&text) {
                Ok(e) => store.long_term.push(e),
                Err(_) => store.corrupt_line(MEMORY_FILE, line),
            }
        }
        let rules_path = dir.join(RULES_FILE);
        for (line, text) in read_lines(&rules_path)? {
            match serde_json::from_str::<RuleRecord>(&text) {
                Ok(RuleRecord::Save { rule }) => {
                    store.rules.insert(rule.id, rule);
                }
                Ok(RuleRecord::Delete { id }) => {
                    store.rules.remove(&id);
                }
                Err(_) => store.corrupt_line(RULES_FILE, line),
            }
        }
        store.clock = store
            .long_term
            .iter()
            .map(|e| e.clock)
            .chain(store.rules.values().map(|r| r.created_clock))
            .max()
            .unwrap_or(0);
        Ok(store)
    }

    fn corrupt_line(&mut self, file: &str, line: usize) {
        tracing::warn!("skipping corrupt record at {file}:{line}");
        self.corrupt.push(CorruptRecord {
            file: file.to_string(),
            line,
        });
    }

    pub fn corrupt_records(&self) -> &[CorruptRecord] {
        &self.corrupt
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Keeps the store's clock at least `clock`, so new entries sort after
    /// events the caller has already seen.
    pub fn observe_clock(&mut self, clock: u64) {
        self.clock = self.clock.max(clock);
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn append_short_term(&mut self, kind: MemoryKind, text: &str, conversation_id: &str) {
        let clock = self.tick();
        if self.short_term.len() == SHORT_TERM_CAPACITY {
            self.short_term.pop_front();
        }
        self.short_term.push_back(MemoryEntry {
            kind,
            text: text.to_string(),
            clock,
            conversation_id: conversation_id.to_string(),
        });
    }

    pub fn short_term(&self) -> Vec<&MemoryEntry> {
        self.short_term.iter().collect()
    }

    pub fn render_short_term(&self) -> String {
        if self.short_term.is_empty() {
            return "(nothing yet)".to_string();
        }
        self.short_term
            .iter()
            .map(|e| format!("- [{}] {}", e.clock, e.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn append_long_term(
        &mut self,
        kind: MemoryKind,
        text: &str,
        conversation_id: &str,
    ) -> Result<MemoryEntry, StorageError> {
        let entry = MemoryEntry {
            kind,
            text: text.to_string(),
            clock: self.clock + 1,
            conversation_id: conversation_id.to_string(),
        };
        if let Some(dir) = &self.dir {
            append_record(&dir.join(MEMORY_FILE), &entry)?;
        }
        self.clock += 1;
        self.long_term.push(entry.clone());
        Ok(entry)
    }

    pub fn long_term(&self) -> &[MemoryEntry] {
        &self.long_term
    }

    /// All entries of `kind` (or every entry), short-term first, in clock order.
    pub fn entries(&self, kind: Option<MemoryKind>) -> Vec<&MemoryEntry> {
        let mut out: Vec<&MemoryEntry> = self
            .short_term
            .iter()
            .chain(self.long_term.iter())
            .filter(|e| kind.is_none_or(|k| e.kind == k))
            .collect();
        out.sort_by_key(|e| e.clock);
        out
    }

    /// Up to `k` long-term entries sharing the most distinct tokens with
    /// `needle`; ties go to the more recent entry. Entries with no shared
    /// token are never returned.
    pub fn query_long_term(&self, needle: &str, k: usize) -> Vec<&MemoryEntry> {
        let wanted = tokens(needle);
        let mut scored: Vec<(usize, &MemoryEntry)> = self
            .long_term
            .iter()
            .map(|e| (tokens(&e.text).intersection(&wanted).count(), e))
            .filter(|(score, _)| *score > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.clock.cmp(&a.1.clock)));
        scored.into_iter().take(k).map(|(_, e)| e).collect()
    }

    pub fn save_rule(
        &mut self,
        trigger: TriggerPredicate,
        plan: TaskPlan,
        created_clock: u64,
    ) -> Result<u64, StorageError> {
        let id = self.rules.keys().next_back().map_or(1, |m| m + 1);
        let rule = Rule {
            id,
            trigger,
            plan,
            created_clock,
            enabled: true,
        };
        if let Some(dir) = &self.dir {
            append_record(&dir.join(RULES_FILE), &RuleRecord::Save { rule: rule.clone() })?;
        }
        self.observe_clock(created_clock);
        self.rules.insert(id, rule);
        Ok(id)
    }

    pub fn delete_rule(&mut self, id: u64) -> Result<Rule, StorageError> {
        if !self.rules.contains_key(&id) {
            return Err(StorageError::NoSuchRule(id));
        }
        if let Some(dir) = &self.dir {
            append_record(&dir.join(RULES_FILE), &RuleRecord::Delete { id })?;
        }
        Ok(self.rules.remove(&id).expect("checked above"))
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    pub fn rule(&self, id: u64) -> Option<&Rule> {
        self.rules.get(&id)
    }
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, StorageError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).split(b'\n').enumerate() {
        let bytes = line.map_err(io_err(path))?;
        let text = String::from_utf8_lossy(&bytes);
        if text.trim().is_empty() {
            continue;
        }
        out.push((i + 1, text.into_owned()));
    }
    Ok(out)
}

/// Appends one JSON line. A torn final line left by an earlier crash is
/// terminated first so the new record stays on a line of its own.
fn append_record<T: Serialize>(path: &Path, record: &T) -> Result<(), StorageError> {
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let len = file.metadata().map_err(io_err(path))?.len();
    let mut line = String::new();
    if len > 0 {
        let mut last = [0u8; 1];
        file.seek(SeekFrom::End(-1)).map_err(io_err(path))?;
        file.read_exact(&mut last).map_err(io_err(path))?;
        if last[0] != b'\n' {
            line.push('\n');
        }
    }
    line.push_str(&serde_json::to_string(record).expect("records serialize"));
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}
