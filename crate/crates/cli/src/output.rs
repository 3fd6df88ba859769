//! Run directory handling: exclusive lock and hashed CSV files.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

const LOCK_NAME: &str = ".rmlab.lock";

/// Output directory held for the duration of a run. The lock file is removed
/// on drop.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    lock: PathBuf,
    hash: String,
}

impl RunDir {
    pub fn acquire(root: &Path, hash: String) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        let lock = root.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(CliError::Locked(lock));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            root: root.to_path_buf(),
            lock,
            hash,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `header`, the rows and a trailing `# config_hash=` line.
    pub fn write_csv<I, S>(&self, name: &str, header: &str, rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut body = String::with_capacity(1024);
        body.push_str(header);
        body.push('\n');
        for row in rows {
            body.push_str(row.as_ref());
            body.push('\n');
        }
        self.write_raw(name, body)
    }

    /// Writes CSV text that already carries its header.
    pub fn write_raw(&self, name: &str, mut body: String) -> Result<PathBuf, CliError> {
        body.push_str("# config_hash=");
        body.push_str(&self.hash);
        body.push('\n');
        let path = self.path(name);
        let mut f = File::create(&path)?;
        f.write_all(body.as_bytes())?;
        Ok(path)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Quotes a CSV field when needed.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a, b"), "\"a, b\"");
        assert_eq!(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
    }
}
