use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Prefix of in-flight temporary files; anything left with it is debris from
/// an interrupted write and is removed when a store opens.
pub const TEMP_PREFIX: &str = ".tmp-";

/// Where a simulated crash interrupts [`atomic_write_with_fault`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Temp file written and synced, rename never happens.
    BeforeRename,
    /// Temp file half written, never synced or renamed.
    MidWrite,
}

/// Replaces `path` with `bytes` via temp file, fsync, rename, directory fsync.
/// Readers see the old content or the new content, never a mix.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write_with_fault(path, bytes, None)
}

pub fn atomic_write_with_fault(path: &Path, bytes: &[u8], fault: Option<FaultPoint>) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(TEMP_PREFIX)
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))?;
    if fault == Some(FaultPoint::MidWrite) {
        tmp.write_all(&bytes[..bytes.len() / 2]).map_err(|e| Error::io(tmp.path(), e))?;
        let _ = tmp.keep();
        return Err(Error::io(path, std::io::Error::other("injected fault mid-write")));
    }
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    if fault == Some(FaultPoint::BeforeRename) {
        let _ = tmp.keep();
        return Err(Error::io(path, std::io::Error::other("injected fault before rename")));
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    sync_dir(dir)
}

pub fn sync_dir(dir: &Path) -> Result<()> {
    // Directory fsync is how a rename becomes durable on POSIX systems.
    #[cfg(unix)]
    File::open(dir)
        .and_then(|d| d.sync_all())
        .map_err(|e| Error::io(dir, e))?;
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}

/// Removes leftover temporary files under `root`, returning how many.
pub fn sweep_temp_files(root: &Path) -> Result<usize> {
    let mut removed = 0;
    if !root.exists() {
        return Ok(0);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            let ty = entry.file_type().map_err(|e| Error::io(&path, e))?;
            if ty.is_dir() {
                stack.push(path);
            } else if entry.file_name().to_string_lossy().starts_with(TEMP_PREFIX) {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                removed += 1;
            }
        }
    }
    Ok(removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replaces_content() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("a/b.json");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
    }

    #[test]
    fn faults_leave_previous_version() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("x.json");
        atomic_write(&p, b"old").unwrap();
        for f in [FaultPoint::BeforeRename, FaultPoint::MidWrite] {
            assert!(atomic_write_with_fault(&p, b"new content", Some(f)).is_err());
            assert_eq!(fs::read(&p).unwrap(), b"old");
        }
        assert_eq!(sweep_temp_files(d.path()).unwrap(), 2);
        assert_eq!(fs::read_dir(d.path()).unwrap().count(), 1);
    }
}
