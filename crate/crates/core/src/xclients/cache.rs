use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ClientError;

type Cell = Arc<OnceLock<Result<Value, ClientError>>>;

#[derive(Serialize, Deserialize)]
struct Line {
    key: Value,
    value: Value,
}

/// Request-keyed response memo, optionally persisted as append-only JSONL.
///
/// Keys are the canonical JSON of the request (object keys sorted). Each key is
/// computed at most once per process, even under concurrent lookups; failures
/// are memoized for the run but never persisted.
#[derive(Default)]
pub struct ResponseCache {
    cells: Mutex<HashMap<String, Cell>>,
    log: Option<Mutex<File>>,
    write_failures: AtomicUsize,
}

fn canonical<K: Serialize>(key: &K) -> (Value, String) {
    let value = serde_json::to_value(key).expect("request types serialize to JSON");
    let text = value.to_string();
    (value, text)
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads earlier entries from `path` (if it exists) and appends new ones to it.
    /// Unparseable lines, e.g. a torn final write, are skipped.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut cells = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(Line { key, value }) = serde_json::from_str::<Line>(&line) {
                    let cell = OnceLock::new();
                    let _ = cell.set(Ok(value));
                    cells.insert(key.to_string(), Arc::new(cell));
                }
            }
        } else if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResponseCache {
            cells: Mutex::new(cells),
            log: Some(Mutex::new(file)),
            write_failures: AtomicUsize::new(0),
        })
    }

    /// Number of keys with a successful response.
    pub fn len(&self) -> usize {
        let cells = self.cells.lock().unwrap_or_else(|e| e.into_inner());
        cells.values().filter(|c| matches!(c.get(), Some(Ok(_)))).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_failures(&self) -> usize {
        self.write_failures.load(Ordering::Relaxed)
    }

    pub fn get_or_try<K, V, F>(&self, key: &K, compute: F) -> Result<V, ClientError>
    where
        K: Serialize,
        V: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<V, ClientError>,
    {
        let (key_value, key_text) = canonical(key);
        let cell = {
            let mut cells = self.cells.lock().unwrap_or_else(|e| e.into_inner());
            cells.entry(key_text).or_default().clone()
        };
        let stored = cell.get_or_init(|| {
            let value = compute()?;
            let value = serde_json::to_value(&value).expect("responses serialize to JSON");
            self.persist(&key_value, &value);
            Ok(value)
        });
        match stored {
            Ok(value) => serde_json::from_value(value.clone()).map_err(|e| ClientError::Protocol {
                message: format!("cached response does not match expected shape: {e}"),
                raw: value.to_string(),
            }),
            Err(e) => Err(e.clone()),
        }
    }

    fn persist(&self, key: &Value, value: &Value) {
        let Some(log) = &self.log else { return };
        let line = serde_json::to_string(&Line { key: key.clone(), value: value.clone() })
            .expect("JSON values serialize");
        let mut file = log.lock().unwrap_or_else(|e| e.into_inner());
        if writeln!(file, "{line}").and_then(|_| file.flush()).is_err() {
            self.write_failures.fetch_add(1, Ordering::Relaxed);
        }
    }
}
