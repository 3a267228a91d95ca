use std::fs;
use std::path::{Path, PathBuf};

use maskeval::report::OutputFile;

use crate::Failure;

/// Writes every file or none: contents go to hidden temporaries first and
/// are renamed into place only once all of them were written.
pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(files.len());
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for f in files {
        let tmp = dir.join(format!(".{}.partial", f.name));
        if let Err(e) = fs::write(&tmp, &f.contents) {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(Failure::Config(format!("cannot write {}: {e}", tmp.display())));
        }
        staged.push((tmp, dir.join(&f.name)));
    }
    for (i, (tmp, dest)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, dest) {
            cleanup(&staged[i..]);
            return Err(Failure::Config(format!("cannot write {}: {e}", dest.display())));
        }
    }
    Ok(())
}

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}
