use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Content-addressed files under `root/<first two hex>/<digest>`. Writes go
/// to a temporary file that is synced and then renamed into place, so a
/// blob is either absent or complete.
#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn valid_digest(d: &str) -> bool {
    d.len() == 64 && d.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl BlobStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.root.join(&digest[..2]).join(digest)
    }

    pub fn put(&self, bytes: &[u8]) -> io::Result<String> {
        let digest = digest_hex(bytes);
        let path = self.path(&digest);
        if path.exists() {
            return Ok(digest);
        }
        let dir = path.parent().expect("blob paths have a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{digest}.{}.tmp", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        sync_dir(dir)?;
        Ok(digest)
    }

    pub fn get(&self, digest: &str) -> io::Result<Vec<u8>> {
        if !valid_digest(digest) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "not a blob digest"));
        }
        let bytes = fs::read(self.path(digest))?;
        if digest_hex(&bytes) != digest {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "blob content does not match its digest"));
        }
        Ok(bytes)
    }

    pub fn contains(&self, digest: &str) -> bool {
        valid_digest(digest) && self.path(digest).exists()
    }
}

pub(crate) fn sync_dir(dir: &Path) -> io::Result<()> {
    #[cfg(unix)]
    fs::File::open(dir)?.sync_all()?;
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}
