//! Vehicle-side install: the vehicle trusts only the market key.

use std::fs;
use std::path::{Path, PathBuf};

use ed25519_dalek::VerifyingKey;
use thiserror::Error;

use super::market::{verify_signature, VerifyError};
use super::package::AppPackage;
use crate::manifest::{detect_conflicts, parse_manifest, AppManifest, ConflictError, ConflictFinding};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstallError {
    #[error("bad signature: {0}")]
    BadSignature(VerifyError),
    #[error("package was modified after signing")]
    Tampered,
    #[error("conflicts with installed apps: {}", .0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; "))]
    Conflict(Vec<ConflictFinding>),
    #[error(transparent)]
    Duplicate(#[from] ConflictError),
    #[error("malformed package: {0}")]
    Malformed(String),
}

/// Checks the signature, then the candidate's resource claims against the
/// installed apps. Returns the manifest to record on success.
pub fn verify_and_install(
    pkg: &AppPackage,
    key: &VerifyingKey,
    installed: &[AppManifest],
) -> Result<AppManifest, InstallError> {
    match verify_signature(pkg, key) {
        Ok(()) => {}
        Err(VerifyError::Tampered) => return Err(InstallError::Tampered),
        Err(e) => return Err(InstallError::BadSignature(e)),
    }
    let manifest = parse_manifest(&pkg.manifest_xml).map_err(|e| InstallError::Malformed(e.to_string()))?;
    let conflicts = detect_conflicts(installed, &manifest)?;
    if !conflicts.is_empty() {
        return Err(InstallError::Conflict(conflicts));
    }
    Ok(manifest)
}

/// Installed apps of one vehicle, one package directory per app under
/// `<root>/apps/`.
#[derive(Debug, Clone)]
pub struct VehicleStore {
    pub root: PathBuf,
}

impl VehicleStore {
    pub fn new(root: &Path) -> Self {
        VehicleStore { root: root.to_path_buf() }
    }

    fn apps_dir(&self) -> PathBuf {
        self.root.join("apps")
    }

    pub fn installed(&self) -> std::io::Result<Vec<AppManifest>> {
        let dir = self.apps_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<_> = fs::read_dir(dir)?.filter_map(Result::ok).map(|e| e.path()).collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            let text = fs::read_to_string(p.join("manifest.xml"))?;
            let m = parse_manifest(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
            out.push(m);
        }
        Ok(out)
    }

    pub fn install(&self, pkg: &AppPackage, key: &VerifyingKey) -> Result<AppManifest, InstallError> {
        let installed = self.installed().map_err(|e| InstallError::Malformed(e.to_string()))?;
        let m = verify_and_install(pkg, key, &installed)?;
        let tmp = self.apps_dir().join(format!(".{}.partial", m.app_id));
        let dest = self.apps_dir().join(&m.app_id);
        pkg.write_dir(&tmp)
            .and_then(|_| fs::rename(&tmp, &dest))
            .map_err(|e| InstallError::Malformed(e.to_string()))?;
        Ok(m)
    }
}
