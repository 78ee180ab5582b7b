//! App packages: on-disk layout and canonical byte serialization.
//!
//! A package directory holds `manifest.xml`, `program.avir`, `VERSION`,
//! an `assets/` directory and, once signed, `signature.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::ir::{parse_program, AppProgram};
use crate::manifest::{parse_manifest, AppManifest};
use crate::sim::road::parse_path_csv;

const MAGIC: &[u8] = b"AVPKG 1\n";

#[derive(Debug, Error)]
pub enum PackageError {
    #[error("package unreadable: {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("malformed package bytes: {0}")]
    Malformed(String),
}

fn unreadable(path: &Path, message: impl ToString) -> PackageError {
    PackageError::Unreadable {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppPackage {
    pub manifest_xml: String,
    pub program_text: String,
    pub version: String,
    pub assets: BTreeMap<String, Vec<u8>>,
    pub signature: Option<Vec<u8>>,
}

/// Manifest and program parsed from a package, with tables bound to assets.
#[derive(Debug, Clone)]
pub struct LoadedApp {
    pub manifest: AppManifest,
    pub program: Arc<AppProgram>,
}

impl AppPackage {
    pub fn read_dir(dir: &Path) -> Result<Self, PackageError> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name)).map_err(|e| unreadable(&dir.join(name), e))
        };
        let manifest_xml = read("manifest.xml")?;
        let program_text = read("program.avir")?;
        let version = read("VERSION")?.trim().to_string();
        let mut assets = BTreeMap::new();
        let asset_dir = dir.join("assets");
        if asset_dir.is_dir() {
            for entry in fs::read_dir(&asset_dir).map_err(|e| unreadable(&asset_dir, e))? {
                let entry = entry.map_err(|e| unreadable(&asset_dir, e))?;
                let path = entry.path();
                if path.is_file() {
                    let name = entry.file_name().to_string_lossy().into_owned();
                    assets.insert(name, fs::read(&path).map_err(|e| unreadable(&path, e))?);
                }
            }
        }
        let sig_path = dir.join("signature.bin");
        let signature = if sig_path.exists() {
            Some(fs::read(&sig_path).map_err(|e| unreadable(&sig_path, e))?)
        } else {
            None
        };
        Ok(AppPackage {
            manifest_xml,
            program_text,
            version,
            assets,
            signature,
        })
    }

    /// Writes the package into `dir`, replacing files of the same name.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir.join("assets"))?;
        fs::write(dir.join("manifest.xml"), &self.manifest_xml)?;
        fs::write(dir.join("program.avir"), &self.program_text)?;
        fs::write(dir.join("VERSION"), format!("{}\n", self.version))?;
        for (name, bytes) in &self.assets {
            fs::write(dir.join("assets").join(name), bytes)?;
        }
        let sig = dir.join("signature.bin");
        match &self.signature {
            Some(s) => fs::write(sig, s)?,
            None if sig.exists() => fs::remove_file(sig)?,
            None => {}
        }
        Ok(())
    }

    /// Deterministic serialization of everything the signature covers
    /// (all but the signature itself). Each section is length-prefixed.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let mut section = |tag: &str, body: &[u8]| {
            out.extend_from_slice(format!("{tag} {}\n", body.len()).as_bytes());
            out.extend_from_slice(body);
            out.push(b'\n');
        };
        section("version", self.version.as_bytes());
        section("manifest", self.manifest_xml.as_bytes());
        section("program", self.program_text.as_bytes());
        for (name, bytes) in &self.assets {
            section("asset", name.as_bytes());
            section("data", bytes);
        }
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, PackageError> {
        let bad = |m: &str| PackageError::Malformed(m.to_string());
        let mut rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("missing header"))?;
        let mut next = |want: &str| -> Result<Option<Vec<u8>>, PackageError> {
            if rest.is_empty() {
                return Ok(None);
            }
            let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated"))?;
            let head = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("bad section header"))?;
            let (tag, len) = head.split_once(' ').ok_or_else(|| bad("bad section header"))?;
            if tag != want {
                return Err(bad(&format!("expected section {want}, found {tag}")));
            }
            let len: usize = len.parse().map_err(|_| bad("bad section length"))?;
            let body = rest.get(nl + 1..nl + 1 + len).ok_or_else(|| bad("truncated"))?;
            if rest.get(nl + 1 + len) != Some(&b'\n') {
                return Err(bad("missing section terminator"));
            }
            let body = body.to_vec();
            rest = &rest[nl + 2 + len..];
            Ok(Some(body))
        };
        let text = |b: Option<Vec<u8>>| -> Result<String, PackageError> {
            String::from_utf8(b.ok_or_else(|| bad("missing section"))?)
                .map_err(|_| bad("section is not UTF-8"))
        };
        let version = text(next("version")?)?;
        let manifest_xml = text(next("manifest")?)?;
        let program_text = text(next("program")?)?;
        let mut assets = BTreeMap::new();
        while let Some(name) = next("asset")? {
            let name = String::from_utf8(name).map_err(|_| bad("asset name is not UTF-8"))?;
            let data = next("data")?.ok_or_else(|| bad("asset without data"))?;
            assets.insert(name, data);
        }
        Ok(AppPackage {
            manifest_xml,
            program_text,
            version,
            assets,
            signature: None,
        })
    }

    /// Parses the manifest and program and binds each table to the asset it
    /// names. Parse errors are reported as text for the caller's report.
    pub fn load(&self) -> Result<LoadedApp, String> {
        let manifest = parse_manifest(&self.manifest_xml).map_err(|e| format!("manifest: {e}"))?;
        let mut program = parse_program(&self.program_text).map_err(|e| format!("program: {e}"))?;
        let bindings: Vec<(String, String)> = program
            .tables
            .iter()
            .map(|t| (t.name.clone(), t.asset.clone()))
            .collect();
        for (table, asset) in bindings {
            let bytes = self
                .assets
                .get(&asset)
                .ok_or_else(|| format!("table {table}: missing asset {asset:?}"))?;
            let text = std::str::from_utf8(bytes).map_err(|_| format!("asset {asset} is not text"))?;
            let rows = parse_path_csv(text).map_err(|e| format!("asset {asset}: {e}"))?;
            program.bind_table(&table, rows);
        }
        if manifest.app_id != program.app_id {
            return Err(format!(
                "manifest app id {:?} differs from program app id {:?}",
                manifest.app_id, program.app_id
            ));
        }
        Ok(LoadedApp {
            manifest,
            program: Arc::new(program),
        })
    }
}
