//! Recorded request/response pairs, one JSON file per request hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::canonical::{to_canonical_string, CanonicalFormat};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureMetadata {
    pub recorded_at: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub request_hash: String,
    pub response_text: String,
    pub metadata: FixtureMetadata,
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, request_hash: &str) -> PathBuf {
        self.dir.join(format!("{request_hash}.json"))
    }

    pub fn get(&self, request_hash: &str) -> Result<Option<Fixture>, GatewayError> {
        let path = self.path_for(request_hash);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        let fixture: Fixture = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
        Ok(Some(fixture))
    }

    pub fn put(&self, fixture: &Fixture) -> Result<PathBuf, GatewayError> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&fixture.request_hash);
        let value = serde_json::to_value(fixture).expect("fixture serializes");
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, to_canonical_string(&value, CanonicalFormat { significant_digits: None, pretty: true }))?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// All fixtures, sorted by hash.
    pub fn list(&self) -> Result<Vec<Fixture>, GatewayError> {
        if !self.dir.exists() {
            return Ok(Vec::new());
        }
        let mut hashes: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_string)
            })
            .collect();
        hashes.sort();
        let mut out = Vec::with_capacity(hashes.len());
        for h in hashes {
            if let Some(f) = self.get(&h)? {
                out.push(f);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_list() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(dir.path().join("fixtures"));
        assert!(store.list().unwrap().is_empty());
        let f = Fixture {
            request_hash: "abc".into(),
            response_text: "hello\n```json\n{}\n```".into(),
            metadata: FixtureMetadata { recorded_at: "2024-01-01T00:00:00Z".into(), model_id: "m".into() },
        };
        store.put(&f).unwrap();
        assert_eq!(store.get("abc").unwrap(), Some(f.clone()));
        assert_eq!(store.get("zzz").unwrap(), None);
        assert_eq!(store.list().unwrap(), vec![f]);
    }
}
