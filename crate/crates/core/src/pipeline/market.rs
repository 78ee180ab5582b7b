//! Market signing, approval records and the on-disk registry.
//!
//! `signature.bin` holds a magic line, the SHA-256 digest of the package's
//! canonical bytes and an Ed25519 signature over that digest. Verifying the
//! signature first and the digest second tells a forged signature apart
//! from a package modified after signing.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::package::AppPackage;

const SIG_MAGIC: &[u8] = b"AVSIG 1\n";
const SIG_LEN: usize = SIG_MAGIC.len() + 32 + 64;

pub fn package_digest(pkg: &AppPackage) -> [u8; 32] {
    Sha256::digest(pkg.canonical_bytes()).into()
}

pub fn generate_key(seed: Option<u64>) -> SigningKey {
    let mut bytes = [0u8; 32];
    match seed {
        Some(s) => {
            use rand::SeedableRng;
            rand_chacha::ChaCha20Rng::seed_from_u64(s).fill_bytes(&mut bytes);
        }
        None => rand::rngs::OsRng.fill_bytes(&mut bytes),
    }
    SigningKey::from_bytes(&bytes)
}

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("key file {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("key file {0} is not 32 hex-encoded bytes")]
    Malformed(String),
}

fn read_key_bytes(path: &Path) -> Result<[u8; 32], KeyError> {
    let text = fs::read_to_string(path).map_err(|source| KeyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    hex::decode(text.trim())
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| KeyError::Malformed(path.display().to_string()))
}

pub fn read_signing_key(path: &Path) -> Result<SigningKey, KeyError> {
    read_key_bytes(path).map(|b| SigningKey::from_bytes(&b))
}

pub fn read_verifying_key(path: &Path) -> Result<VerifyingKey, KeyError> {
    let b = read_key_bytes(path)?;
    VerifyingKey::from_bytes(&b).map_err(|_| KeyError::Malformed(path.display().to_string()))
}

/// Evidence that a specific package build passed vetting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalRecord {
    pub app_id: String,
    pub version: String,
    /// Hex SHA-256 of the package's canonical bytes.
    pub package_sha256: String,
}

impl ApprovalRecord {
    pub fn for_package(app_id: &str, pkg: &AppPackage) -> Self {
        ApprovalRecord {
            app_id: app_id.to_string(),
            version: pkg.version.clone(),
            package_sha256: hex::encode(package_digest(pkg)),
        }
    }

    pub fn covers(&self, pkg: &AppPackage) -> bool {
        self.version == pkg.version && self.package_sha256 == hex::encode(package_digest(pkg))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignError {
    #[error("package {0} has no approval record for these exact bytes")]
    NotApproved(String),
}

/// Signs `pkg` if one of `approvals` covers its exact bytes.
pub fn sign_package(
    pkg: &AppPackage,
    key: &SigningKey,
    approvals: &[ApprovalRecord],
) -> Result<AppPackage, SignError> {
    if !approvals.iter().any(|a| a.covers(pkg)) {
        return Err(SignError::NotApproved(pkg.version.clone()));
    }
    let digest = package_digest(pkg);
    let sig = key.sign(&digest);
    let mut blob = SIG_MAGIC.to_vec();
    blob.extend_from_slice(&digest);
    blob.extend_from_slice(&sig.to_bytes());
    Ok(AppPackage {
        signature: Some(blob),
        ..pkg.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("package is not signed")]
    Missing,
    #[error("signature does not verify under the market key")]
    BadSignature,
    #[error("package bytes differ from the signed bytes")]
    Tampered,
}

pub fn verify_signature(pkg: &AppPackage, key: &VerifyingKey) -> Result<(), VerifyError> {
    let blob = pkg.signature.as_deref().ok_or(VerifyError::Missing)?;
    if blob.len() != SIG_LEN || !blob.starts_with(SIG_MAGIC) {
        return Err(VerifyError::BadSignature);
    }
    let (digest, sig) = blob[SIG_MAGIC.len()..].split_at(32);
    let sig = Signature::from_slice(sig).map_err(|_| VerifyError::BadSignature)?;
    key.verify(digest, &sig).map_err(|_| VerifyError::BadSignature)?;
    if digest != package_digest(pkg) {
        return Err(VerifyError::Tampered);
    }
    Ok(())
}

/// Replaces `path` with `bytes` through a temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub version: String,
    pub package_sha256: String,
    pub approval: ApprovalRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryIndex {
    pub market_public_key: String,
    pub apps: BTreeMap<String, IndexEntry>,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry io at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("registry file {path} is corrupt: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Sign(#[from] SignError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Directory-backed market:
/// `index.json`, `market.key`, `market.pub`, `approvals/<id>-<version>.json`
/// and signed copies under `packages/<id>-<version>.avpkg`.
#[derive(Debug, Clone)]
pub struct MarketRegistry {
    pub root: PathBuf,
}

impl MarketRegistry {
    /// Creates the registry layout and a market key pair if absent.
    pub fn init(root: &Path, seed: Option<u64>) -> Result<Self, RegistryError> {
        let reg = MarketRegistry { root: root.to_path_buf() };
        fs::create_dir_all(root.join("approvals")).map_err(io_err(root))?;
        fs::create_dir_all(root.join("packages")).map_err(io_err(root))?;
        if !reg.key_path().exists() {
            let key = generate_key(seed);
            atomic_write(&reg.key_path(), hex::encode(key.to_bytes()).as_bytes())
                .map_err(io_err(&reg.key_path()))?;
            atomic_write(&reg.pub_path(), hex::encode(key.verifying_key().to_bytes()).as_bytes())
                .map_err(io_err(&reg.pub_path()))?;
        }
        if !reg.index_path().exists() {
            let index = RegistryIndex {
                market_public_key: hex::encode(reg.verifying_key()?.to_bytes()),
                apps: BTreeMap::new(),
            };
            reg.write_index(&index)?;
        }
        Ok(reg)
    }

    pub fn open(root: &Path) -> Result<Self, RegistryError> {
        let reg = MarketRegistry { root: root.to_path_buf() };
        reg.index()?;
        Ok(reg)
    }

    pub fn key_path(&self) -> PathBuf {
        self.root.join("market.key")
    }

    pub fn pub_path(&self) -> PathBuf {
        self.root.join("market.pub")
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    pub fn signing_key(&self) -> Result<SigningKey, RegistryError> {
        Ok(read_signing_key(&self.key_path())?)
    }

    pub fn verifying_key(&self) -> Result<VerifyingKey, RegistryError> {
        Ok(read_verifying_key(&self.pub_path())?)
    }

    pub fn index(&self) -> Result<RegistryIndex, RegistryError> {
        let path = self.index_path();
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| RegistryError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    fn write_index(&self, index: &RegistryIndex) -> Result<(), RegistryError> {
        let path = self.index_path();
        let text = serde_json::to_string_pretty(index).expect("index serializes");
        atomic_write(&path, text.as_bytes()).map_err(io_err(&path))
    }

    pub fn record_approval(&self, record: &ApprovalRecord) -> Result<PathBuf, RegistryError> {
        let path = self
            .root
            .join("approvals")
            .join(format!("{}-{}.json", record.app_id, record.version));
        let text = serde_json::to_string_pretty(record).expect("approval serializes");
        atomic_write(&path, text.as_bytes()).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn approvals(&self) -> Result<Vec<ApprovalRecord>, RegistryError> {
        let dir = self.root.join("approvals");
        let mut out = Vec::new();
        let mut entries: Vec<_> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            out.push(serde_json::from_str(&text).map_err(|e| RegistryError::Corrupt {
                path: path.display().to_string(),
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }

    /// Signs an approved package, stores the signed copy and indexes it.
    pub fn sign(&self, app_id: &str, pkg: &AppPackage) -> Result<AppPackage, RegistryError> {
        let signed = sign_package(pkg, &self.signing_key()?, &self.approvals()?)?;
        let approval = ApprovalRecord::for_package(app_id, pkg);
        let dir = self.root.join("packages").join(format!("{app_id}-{}.avpkg", pkg.version));
        signed.write_dir(&dir).map_err(io_err(&dir))?;
        let mut index = self.index()?;
        index.apps.insert(
            app_id.to_string(),
            IndexEntry {
                version: pkg.version.clone(),
                package_sha256: approval.package_sha256.clone(),
                approval,
            },
        );
        self.write_index(&index)?;
        Ok(signed)
    }
}
