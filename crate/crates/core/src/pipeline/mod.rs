//! Package handling, signing, the market registry and the vetting pipeline.

pub mod install;
pub mod market;
pub mod package;
pub mod vet;

pub use install::{verify_and_install, InstallError, VehicleStore};
pub use market::{
    generate_key, package_digest, sign_package, verify_signature, ApprovalRecord, MarketRegistry, RegistryError,
    SignError, VerifyError,
};
pub use package::{AppPackage, LoadedApp, PackageError};
pub use vet::{vet_loaded, vet_package, FinalVerdict, ScenarioFile, ScenarioKind, VetError, VetReport};
