//! Provenance block embedded in every JSON the binary writes.
//!
//! Wall-clock fields (`started_unix_ms`, `timings`) live only here, so two runs
//! on identical inputs differ only inside the manifest.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
    pub threads: usize,
    pub started_unix_ms: u64,
    pub timings: Vec<StageTiming>,
}

impl RunManifest {
    pub fn start(threads: usize) -> Self {
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command_line: std::env::args().collect(),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            threads,
            started_unix_ms,
            timings: Vec::new(),
        }
    }

    /// Hashes `path` and records it under `role`.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let digest = Sha256::digest(&bytes);
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push(InputHash {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Runs `f` and records its wall-clock time as `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.record(stage, t);
        out
    }

    /// Records the time elapsed since `since` as `stage`.
    pub fn record(&mut self, stage: &str, since: Instant) {
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: since.elapsed().as_secs_f64(),
        });
    }
}

/// Serializes `body` (a JSON object) with the manifest appended as its last
/// key, pretty-printed with a trailing newline.
pub fn with_manifest(body: impl Serialize, manifest: &RunManifest) -> String {
    let mut value = serde_json::to_value(body).expect("output serializes");
    if let serde_json::Value::Object(map) = &mut value {
        map.insert(
            "manifest".to_string(),
            serde_json::to_value(manifest).expect("manifest serializes"),
        );
    }
    serde_json::to_string_pretty(&value).expect("output serializes") + "\n"
}

pub fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, "abc").unwrap();
        let mut m = RunManifest::start(1);
        m.add_input("x", &p).unwrap();
        assert_eq!(
            m.inputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(m.add_input("y", &dir.path().join("missing")).is_err());
    }

    #[test]
    fn manifest_is_last_key() {
        let m = RunManifest::start(2);
        let text = with_manifest(serde_json::json!({"a": 1, "b": [2]}), &m);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["a", "b", "manifest"]);
        assert_eq!(v["manifest"]["threads"], 2);
    }
}
