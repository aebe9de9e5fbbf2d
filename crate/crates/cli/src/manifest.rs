//! Per-stage manifests: what a stage read, what it wrote, and checksums
//! that downstream stages verify before trusting an artifact.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{AugMethod, PipelineConfig};

pub const MANIFEST_DIR: &str = "manifests";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

/// Mean metrics of one evaluated configuration, as reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub method: AugMethod,
    pub fraction: f64,
    /// Training examples seen by the classifier, synthetic ones included.
    pub n_train: usize,
    /// Weight of synthetic examples; `None` for the baseline.
    pub weight: Option<f64>,
    pub ks: Vec<usize>,
    pub precision: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub psp: Vec<f64>,
    pub psndcg: Vec<f64>,
    pub evaluated: usize,
    pub skipped_empty_gold: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub seed: u64,
    pub stage_seed: u64,
    pub config: PipelineConfig,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub elapsed_ms: u64,
    /// Stage-specific details (counts, loss curves).
    #[serde(default)]
    pub details: serde_json::Value,
    #[serde(default)]
    pub eval: Option<EvalSummary>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn manifest_path(run_dir: &Path, stage: &str) -> PathBuf {
    run_dir.join(MANIFEST_DIR).join(format!("{stage}.json"))
}

impl RunManifest {
    pub fn save(&self, run_dir: &Path) -> Result<PathBuf> {
        let path = manifest_path(run_dir, &self.stage);
        fs::create_dir_all(path.parent().expect("manifest dir"))?;
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn output(&self, rel: &str) -> Option<&Artifact> {
        self.outputs.iter().find(|a| a.path == rel)
    }
}

pub fn artifact(run_dir: &Path, rel: &str) -> Result<Artifact> {
    Ok(Artifact {
        path: rel.to_string(),
        sha256: sha256_file(&run_dir.join(rel))?,
    })
}

/// Checks that `rel` exists and still matches the checksum recorded by the
/// stage that produced it.
pub fn verify_upstream(run_dir: &Path, producer: &str, rel: &str) -> Result<Artifact> {
    let mpath = manifest_path(run_dir, producer);
    if !mpath.exists() {
        bail!("missing upstream artifact: run `{producer}` first ({} not found)", mpath.display());
    }
    let manifest = RunManifest::load(&mpath)?;
    let Some(recorded) = manifest.output(rel) else {
        bail!("missing upstream artifact: stage `{producer}` did not produce {rel}");
    };
    let actual = artifact(run_dir, rel).with_context(|| format!("missing upstream artifact {rel}"))?;
    if actual.sha256 != recorded.sha256 {
        bail!("checksum mismatch for {rel}: it changed after stage `{producer}` wrote it");
    }
    Ok(actual)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tampered_artifacts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path();
        fs::write(run.join("a.txt"), "one").unwrap();
        let m = RunManifest {
            stage: "ingest".into(),
            seed: 0,
            stage_seed: 0,
            config: PipelineConfig::default(),
            inputs: vec![],
            outputs: vec![artifact(run, "a.txt").unwrap()],
            elapsed_ms: 0,
            details: serde_json::Value::Null,
            eval: None,
        };
        m.save(run).unwrap();
        assert!(verify_upstream(run, "ingest", "a.txt").is_ok());
        assert!(verify_upstream(run, "ingest", "b.txt").is_err());
        assert!(verify_upstream(run, "pairs", "a.txt").is_err());
        fs::write(run.join("a.txt"), "two").unwrap();
        let err = verify_upstream(run, "ingest", "a.txt").unwrap_err().to_string();
        assert!(err.contains("checksum mismatch"), "{err}");
    }
}
