//! JSON-lines event log of one run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

pub struct RunLog {
    out: Mutex<Option<BufWriter<File>>>,
}

impl RunLog {
    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            out: Mutex::new(Some(BufWriter::new(File::create(path)?))),
        })
    }

    /// A log that drops every event.
    pub fn disabled() -> Self {
        Self { out: Mutex::new(None) }
    }

    /// Appends `{"ts_ms", "event", ...fields}` as one line.
    pub fn event(&self, event: &str, fields: Value) {
        let mut guard = self.out.lock().expect("log lock");
        let Some(w) = guard.as_mut() else {
            return;
        };
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let mut obj = Map::new();
        obj.insert("ts_ms".into(), json!(ts));
        obj.insert("event".into(), json!(event));
        if let Value::Object(extra) = fields {
            obj.extend(extra);
        }
        let _ = writeln!(w, "{}", Value::Object(obj));
    }

    pub fn flush(&self) {
        if let Some(w) = self.out.lock().expect("log lock").as_mut() {
            let _ = w.flush();
        }
    }
}

impl Drop for RunLog {
    fn drop(&mut self) {
        self.flush();
    }
}
