//! Disk persistence: the content-addressed response cache and the append-only
//! cost ledger, both living inside (or beside) a run directory.

use labelcrew_core::ledger::{LedgerEntry, LedgerError, LedgerSink};
use labelcrew_core::provider::{ProviderError, ResponseStore, StoredResponse};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Write `bytes` to `path` atomically (same-directory temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// One JSON file per cache key. Keys are hex SHA-256 digests, so they are
/// filesystem-safe by construction.
pub struct DiskStore {
    dir: PathBuf,
}

impl DiskStore {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }
}

impl ResponseStore for DiskStore {
    fn get(&self, key: &str) -> Result<Option<StoredResponse>, ProviderError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ProviderError::Store(format!("{}: {e}", path.display()))),
        };
        let stored = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Store(format!("{}: {e}", path.display())))?;
        Ok(Some(stored))
    }

    fn put(&self, key: &str, response: &StoredResponse) -> Result<(), ProviderError> {
        let bytes = serde_json::to_vec_pretty(response)
            .map_err(|e| ProviderError::Store(e.to_string()))?;
        write_atomic(&self.path_for(key), &bytes)
            .map_err(|e| ProviderError::Store(format!("{}: {e}", self.dir.display())))
    }
}

/// JSONL ledger file; one entry per line, append-only.
pub struct DiskLedger {
    file: Mutex<File>,
}

impl DiskLedger {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }

    /// Read a ledger file back; tolerates a trailing blank line, nothing else.
    pub fn read_entries(path: &Path) -> std::io::Result<Vec<LedgerEntry>> {
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{} line {}: {e}", path.display(), i + 1),
                )
            })?;
            entries.push(entry);
        }
        Ok(entries)
    }
}

impl LedgerSink for DiskLedger {
    fn append(&self, entry: &LedgerEntry) -> Result<(), LedgerError> {
        let mut line = serde_json::to_string(entry).map_err(|e| LedgerError::Io(e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().expect("ledger lock poisoned");
        file.write_all(line.as_bytes())
            .map_err(|e| LedgerError::Io(e.to_string()))
    }
}
