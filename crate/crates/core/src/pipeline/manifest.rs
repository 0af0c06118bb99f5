use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const STAGE_MANIFEST: &str = "stage.json";

/// Record of one stage's execution. Paths are relative to the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    /// Upstream artifacts consumed, with their content hashes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// False while the stage is running or after it failed.
    pub complete: bool,
}

pub fn file_hash(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::Input(format!("cannot read artifact {}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl StageManifest {
    pub fn path(root: &Path, stage: &str) -> PathBuf {
        root.join(stage).join(STAGE_MANIFEST)
    }

    pub fn read(root: &Path, stage: &str) -> Result<Option<Self>> {
        let p = Self::path(root, stage);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&fs::read(&p)?)?))
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let p = Self::path(root, &self.stage);
        fs::create_dir_all(p.parent().expect("stage dir"))?;
        let tmp = p.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        fs::rename(tmp, p)?;
        Ok(())
    }

    /// Hashes every file below `root/stage` except the manifest itself.
    pub fn hash_outputs(root: &Path, stage: &str) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        let dir = root.join(stage);
        let mut names: Vec<_> = fs::read_dir(&dir)?.collect::<std::io::Result<Vec<_>>>()?;
        names.sort_by_key(|e| e.file_name());
        for e in names {
            let name = e.file_name().to_string_lossy().into_owned();
            if name == STAGE_MANIFEST || !e.file_type()?.is_file() {
                continue;
            }
            out.insert(format!("{stage}/{name}"), file_hash(&e.path())?);
        }
        Ok(out)
    }

    /// Checks that every recorded output exists with its recorded hash.
    pub fn verify_outputs(&self, root: &Path) -> Result<()> {
        for (rel, want) in &self.outputs {
            let p = root.join(rel);
            if !p.exists() {
                return Err(Error::Input(format!("missing artifact {rel} (rerun `{}`)", self.stage)));
            }
            let found = file_hash(&p)?;
            if &found != want {
                return Err(Error::Input(format!("stale artifact {rel}: expected hash {want}, found {found} (rerun `{}`)", self.stage)));
            }
        }
        Ok(())
    }
}

/// Loads an upstream stage's manifest and checks it is complete, produced
/// under `expected_hash` and matches the files on disk.
pub fn require_stage(root: &Path, stage: &str, expected_hash: &str) -> Result<StageManifest> {
    let m = StageManifest::read(root, stage)?.ok_or_else(|| {
        Error::Input(format!("missing artifact {}: run `{stage}` first", StageManifest::path(root, stage).display()))
    })?;
    if !m.complete {
        return Err(Error::Input(format!("stage `{stage}` did not complete; its outputs are partial (rerun `{stage}`)")));
    }
    if m.config_hash != expected_hash {
        return Err(Error::Input(format!(
            "stale artifact {stage}: produced under config hash {}, current config hash is {expected_hash} (rerun `{stage}`)",
            m.config_hash
        )));
    }
    m.verify_outputs(root)?;
    Ok(m)
}
