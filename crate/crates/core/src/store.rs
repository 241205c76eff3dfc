//! Append-only keyed record stores.
//!
//! Used both for the translation cache and for recorded model completions.
//! A key maps to exactly one value for the lifetime of a store: writes go
//! through [`KeyedStore::put_if_absent`], and the first writer wins.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store record at {path}:{line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub trait KeyedStore: Send + Sync {
    fn get(&self, key: &str) -> Result<Option<Value>, StoreError>;

    /// Stores `value` unless the key is already present. Returns the value that
    /// is stored under the key afterwards, which is the earlier one on conflict.
    fn put_if_absent(&self, key: &str, value: Value) -> Result<Value, StoreError>;

    fn len(&self) -> Result<usize, StoreError>;

    fn is_empty(&self) -> Result<bool, StoreError> {
        Ok(self.len()? == 0)
    }
}

/// Where a store lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "path", rename_all = "lowercase")]
pub enum StoreLocation {
    Memory,
    /// Single append-only line-delimited file.
    Jsonl(PathBuf),
    /// Directory with one file per key.
    Dir(PathBuf),
}

impl StoreLocation {
    pub fn open(&self) -> Result<Box<dyn KeyedStore>, StoreError> {
        Ok(match self {
            StoreLocation::Memory => Box::new(MemoryStore::default()),
            StoreLocation::Jsonl(p) => Box::new(JsonlStore::open(p)?),
            StoreLocation::Dir(p) => Box::new(DirStore::open(p)?),
        })
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    entries: Mutex<HashMap<String, Value>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl KeyedStore for MemoryStore {
    fn get(&self, key: &str) -> Result<Option<Value>, StoreError> {
        Ok(self.entries.lock().unwrap().get(key).cloned())
    }

    fn put_if_absent(&self, key: &str, value: Value) -> Result<Value, StoreError> {
        let mut entries = self.entries.lock().unwrap();
        Ok(entries.entry(key.to_string()).or_insert(value).clone())
    }

    fn len(&self) -> Result<usize, StoreError> {
        Ok(self.entries.lock().unwrap().len())
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    value: Value,
}

/// Reads a line-delimited JSON file, tolerating a torn final line (a crash
/// mid-append). Returns the parsed lines and the byte length of the valid
/// prefix. Corruption anywhere but the last line is an error.
pub fn read_jsonl_prefix(path: &Path) -> Result<(Vec<Value>, u64), StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(StoreError::io(path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut valid = 0u64;
    let mut line_no = 0usize;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| StoreError::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.last() == Some(&b'\n');
        let parsed = std::str::from_utf8(&buf)
            .ok()
            .and_then(|s| serde_json::from_str::<Value>(s.trim_end()).ok());
        match (parsed, complete) {
            (Some(v), true) => {
                out.push(v);
                valid += n as u64;
            }
            (_, false) => {
                tracing::warn!(path = %path.display(), line = line_no, "dropping torn trailing record");
                break;
            }
            (None, true) if buf.iter().all(|b| b.is_ascii_whitespace()) => {
                valid += n as u64;
            }
            (None, true) => {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: line_no,
                    message: "unparseable record".into(),
                })
            }
        }
    }
    Ok((out, valid))
}

/// Opens `path` for appending after truncating any torn trailing record.
pub fn open_append(path: &Path, valid_len: u64) -> Result<File, StoreError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| StoreError::io(path, e))?;
        }
    }
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .write(true)
        .truncate(false)
        .open(path)
        .map_err(|e| StoreError::io(path, e))?;
    file.set_len(valid_len).map_err(|e| StoreError::io(path, e))?;
    file.seek(SeekFrom::End(0)).map_err(|e| StoreError::io(path, e))?;
    Ok(file)
}

pub struct JsonlStore {
    path: PathBuf,
    inner: Mutex<(HashMap<String, Value>, File)>,
}

impl JsonlStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let (lines, valid) = read_jsonl_prefix(path)?;
        let mut entries = HashMap::new();
        for (idx, line) in lines.into_iter().enumerate() {
            let entry: Entry = serde_json::from_value(line).map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            entries.entry(entry.key).or_insert(entry.value);
        }
        let file = open_append(path, valid)?;
        Ok(JsonlStore {
            path: path.to_path_buf(),
            inner: Mutex::new((entries, file)),
        })
    }
}

impl KeyedStore for JsonlStore {
    fn get(&self, key: &str) -> Result<Option<Value>, StoreError> {
        Ok(self.inner.lock().unwrap().0.get(key).cloned())
    }

    fn put_if_absent(&self, key: &str, value: Value) -> Result<Value, StoreError> {
        let mut guard = self.inner.lock().unwrap();
        let (entries, file) = &mut *guard;
        if let Some(existing) = entries.get(key) {
            return Ok(existing.clone());
        }
        let mut line = serde_json::to_string(&Entry {
            key: key.to_string(),
            value: value.clone(),
        })
        .expect("json values serialize");
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| StoreError::io(&self.path, e))?;
        entries.insert(key.to_string(), value.clone());
        Ok(value)
    }

    fn len(&self) -> Result<usize, StoreError> {
        Ok(self.inner.lock().unwrap().0.len())
    }
}

/// One JSON file per key, named by the key. Keys must be filesystem-safe
/// (the callers use hex digests).
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(root).map_err(|e| StoreError::io(root, e))?;
        Ok(DirStore {
            root: root.to_path_buf(),
        })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        let safe: String = key
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.root.join(format!("{safe}.json"))
    }

    fn read(&self, path: &Path) -> Result<Option<Value>, StoreError> {
        match fs::read_to_string(path) {
            Ok(text) => {
                let entry: Entry = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: 1,
                    message: e.to_string(),
                })?;
                Ok(Some(entry.value))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::io(path, e)),
        }
    }
}

impl KeyedStore for DirStore {
    fn get(&self, key: &str) -> Result<Option<Value>, StoreError> {
        self.read(&self.path_for(key))
    }

    fn put_if_absent(&self, key: &str, value: Value) -> Result<Value, StoreError> {
        let target = self.path_for(key);
        if let Some(existing) = self.read(&target)? {
            return Ok(existing);
        }
        // Write to a unique temp file, then hard-link into place: the link
        // fails if another writer got there first.
        let tmp = self.root.join(format!(
            ".{}.{}.{:?}.tmp",
            target.file_name().unwrap().to_string_lossy(),
            std::process::id(),
            std::thread::current().id()
        ));
        let body = serde_json::to_string(&Entry {
            key: key.to_string(),
            value: value.clone(),
        })
        .expect("json values serialize");
        fs::write(&tmp, body).map_err(|e| StoreError::io(&tmp, e))?;
        let linked = fs::hard_link(&tmp, &target);
        let _ = fs::remove_file(&tmp);
        match linked {
            Ok(()) => Ok(value),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Ok(self.read(&target)?.unwrap_or(value))
            }
            Err(e) => Err(StoreError::io(&target, e)),
        }
    }

    fn len(&self) -> Result<usize, StoreError> {
        let rd = fs::read_dir(&self.root).map_err(|e| StoreError::io(&self.root, e))?;
        Ok(rd
            .filter_map(|e| e.ok())
            .filter(|e| {
                let name = e.file_name();
                let name = name.to_string_lossy();
                name.ends_with(".json") && !name.starts_with('.')
            })
            .count())
    }
}
