//! All-or-nothing output: files are staged in memory, written to temporary
//! siblings and only renamed into place once every write succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".partial{}", std::process::id()));
    path.with_file_name(name)
}

impl Outputs {
    pub fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.files.push((path, bytes.into()));
    }

    pub fn commit(self) -> Result<(), CliError> {
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(self.files.len());
        let cleanup = |staged: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in staged {
                let _ = fs::remove_file(tmp);
            }
        };
        if let Some((path, _)) = self.files.iter().find(|(p, _)| p.is_dir()) {
            return Err(CliError::Data(format!(
                "{} exists and is a directory",
                path.display()
            )));
        }
        for (path, bytes) in &self.files {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                if let Err(e) = fs::create_dir_all(parent) {
                    cleanup(&staged);
                    return Err(CliError::Internal(format!("{}: {e}", parent.display())));
                }
            }
            let tmp = temp_path(path);
            if let Err(e) = fs::write(&tmp, bytes) {
                let _ = fs::remove_file(&tmp);
                cleanup(&staged);
                return Err(CliError::Internal(format!("{}: {e}", path.display())));
            }
            staged.push((tmp, path.clone()));
        }
        for (i, (tmp, path)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, path) {
                cleanup(&staged[i..]);
                return Err(CliError::Internal(format!("{}: {e}", path.display())));
            }
        }
        Ok(())
    }
}
