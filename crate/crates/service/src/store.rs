//! One directory per job under a root; every write goes through a temporary
//! file and a rename so a crash never leaves a torn file behind.

use std::fs;
use std::path::{Component, Path, PathBuf};

use demo2plan::canonical::{to_canonical_string, CanonicalFormat};
use serde::Serialize;

use crate::job::JobRecord;
use crate::PipelineError;

pub const RECORD_FILE: &str = "job.json";

const PRETTY: CanonicalFormat = CanonicalFormat { significant_digits: None, pretty: true };

#[derive(Debug, Clone)]
pub struct JobStore {
    root: PathBuf,
}

/// Rejects absolute paths and `..` so uploads stay inside the job directory.
pub fn safe_relative(path: &str) -> Result<PathBuf, PipelineError> {
    let p = Path::new(path);
    let clean: PathBuf = p
        .components()
        .map(|c| match c {
            Component::Normal(s) => Ok(s),
            _ => Err(PipelineError::InvalidArgument(format!("unsafe path `{path}`"))),
        })
        .collect::<Result<_, _>>()?;
    if clean.as_os_str().is_empty() {
        return Err(PipelineError::InvalidArgument("empty file name".into()));
    }
    Ok(clean)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("artifact serializes");
    to_canonical_string(&value, PRETTY)
}

impl JobStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        JobStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn job_dir(&self, job_id: &str) -> PathBuf {
        self.root.join(job_id)
    }

    fn check_id(job_id: &str) -> Result<(), PipelineError> {
        if job_id.parse::<ulid::Ulid>().is_err() {
            return Err(PipelineError::NotFound(job_id.to_string()));
        }
        Ok(())
    }

    pub fn exists(&self, job_id: &str) -> bool {
        Self::check_id(job_id).is_ok() && self.job_dir(job_id).join(RECORD_FILE).exists()
    }

    pub fn load(&self, job_id: &str) -> Result<JobRecord, PipelineError> {
        Self::check_id(job_id)?;
        let path = self.job_dir(job_id).join(RECORD_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(PipelineError::NotFound(job_id.into())),
            Err(e) => return Err(PipelineError::Storage(format!("{}: {e}", path.display()))),
        };
        serde_json::from_str(&text).map_err(|e| PipelineError::Storage(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, record: &JobRecord) -> Result<(), PipelineError> {
        self.write_text(&record.job_id, RECORD_FILE, &canonical_json(record))
    }

    pub fn write_bytes(&self, job_id: &str, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.job_dir(job_id).join(safe_relative(rel)?);
        write_atomic(&path, bytes).map_err(|e| PipelineError::Storage(format!("{}: {e}", path.display())))
    }

    pub fn write_text(&self, job_id: &str, rel: &str, text: &str) -> Result<(), PipelineError> {
        self.write_bytes(job_id, rel, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&self, job_id: &str, rel: &str, value: &T) -> Result<(), PipelineError> {
        self.write_text(job_id, rel, &canonical_json(value))
    }

    pub fn read_text(&self, job_id: &str, rel: &str) -> Result<String, PipelineError> {
        let path = self.job_dir(job_id).join(safe_relative(rel)?);
        fs::read_to_string(&path).map_err(|e| PipelineError::Storage(format!("{}: {e}", path.display())))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, job_id: &str, rel: &str) -> Result<T, PipelineError> {
        let text = self.read_text(job_id, rel)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Storage(format!("{rel}: {e}")))
    }

    /// All job records, oldest first (ULIDs sort by creation time).
    pub fn list(&self) -> Result<Vec<JobRecord>, PipelineError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = fs::read_dir(&self.root)
            .map_err(|e| PipelineError::Storage(e.to_string()))?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|name| self.exists(name))
            .collect();
        ids.sort();
        ids.iter().map(|id| self.load(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsafe_paths_are_rejected() {
        assert!(safe_relative("../x").is_err());
        assert!(safe_relative("/etc/passwd").is_err());
        assert!(safe_relative("").is_err());
        assert_eq!(safe_relative("depth/00001.png").unwrap(), PathBuf::from("depth/00001.png"));
    }

    #[test]
    fn records_round_trip_and_ids_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let store = JobStore::new(dir.path());
        let id = ulid::Ulid::new().to_string();
        let record = JobRecord::new(id.clone(), "2026-01-01T00:00:00Z".into());
        store.save(&record).unwrap();
        assert_eq!(store.load(&id).unwrap(), record);
        assert_eq!(store.list().unwrap().len(), 1);
        assert!(matches!(store.load("../../etc"), Err(PipelineError::NotFound(_))));
        assert!(!dir.path().join(&id).join("job.json.tmp").exists());
    }
}
