//! Key files for a prover deployment.

use std::path::{Path, PathBuf};

use anyhow::Context;
use puppy_core::crypto::SigningKeypair;
use puppy_core::tee::keys::{armor, MANUFACTURER_PUBLIC_LABEL, MANUFACTURER_SECRET_LABEL, OWNER_PSK_LABEL};
use rand::RngCore;

#[derive(Clone, Debug)]
pub struct KeyFiles {
    pub manufacturer_key: PathBuf,
    pub manufacturer_pub: PathBuf,
    pub owner_key: PathBuf,
}

impl KeyFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            manufacturer_key: dir.join("manufacturer.key"),
            manufacturer_pub: dir.join("manufacturer.pub"),
            owner_key: dir.join("owner.key"),
        }
    }
}

fn write_new(path: &Path, text: &str, force: bool, secret: bool) -> anyhow::Result<()> {
    if path.exists() && !force {
        anyhow::bail!("{} exists; pass --force to replace it", path.display());
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    #[cfg(unix)]
    if secret {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))?;
    }
    Ok(())
}

/// Writes a fresh simulated-manufacturer key pair and owner key into `dir`.
pub fn generate(dir: &Path, force: bool) -> anyhow::Result<KeyFiles> {
    std::fs::create_dir_all(dir)?;
    let files = KeyFiles::in_dir(dir);
    let maker = SigningKeypair::generate();
    let mut psk = zeroize::Zeroizing::new([0u8; 32]);
    rand::rngs::OsRng.fill_bytes(&mut *psk);
    write_new(
        &files.manufacturer_key,
        &armor(MANUFACTURER_SECRET_LABEL, &maker.secret_bytes()),
        force,
        true,
    )?;
    write_new(
        &files.manufacturer_pub,
        &armor(MANUFACTURER_PUBLIC_LABEL, maker.verifying_key().as_bytes()),
        force,
        false,
    )?;
    write_new(&files.owner_key, &armor(OWNER_PSK_LABEL, &*psk), force, true)?;
    Ok(files)
}
