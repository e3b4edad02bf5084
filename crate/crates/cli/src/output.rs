//! `out/<spec-hash>/<subcommand>/<timestamp>/` run directories with atomic
//! file writes.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};

use crate::error::CliError;

pub const TIMESTAMP_FORMAT: &str = "%Y%m%dT%H%M%S%.3fZ";

/// A run directory, claimed on the first write so failed validations leave
/// nothing behind.
#[derive(Debug)]
pub struct RunDir {
    parent: PathBuf,
    stamp: String,
    claimed: Mutex<Option<PathBuf>>,
}

impl RunDir {
    pub fn new(root: &Path, spec_hash: &str, subcommand: &str, started: DateTime<Utc>) -> Self {
        Self {
            parent: root.join(spec_hash).join(subcommand),
            stamp: started.format(TIMESTAMP_FORMAT).to_string(),
            claimed: Mutex::new(None),
        }
    }

    /// Creates the directory, adding `-1`, `-2`, ... on collisions.
    pub fn path(&self) -> Result<PathBuf, CliError> {
        let mut claimed = self.claimed.lock().expect("run dir lock");
        if let Some(p) = claimed.as_ref() {
            return Ok(p.clone());
        }
        fs::create_dir_all(&self.parent).map_err(|e| CliError::io(self.parent.display(), e))?;
        for i in 0u32.. {
            let name = if i == 0 {
                self.stamp.clone()
            } else {
                format!("{}-{i}", self.stamp)
            };
            let p = self.parent.join(name);
            match fs::create_dir(&p) {
                Ok(()) => {
                    *claimed = Some(p.clone());
                    return Ok(p);
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(CliError::io(p.display(), e)),
            }
        }
        unreachable!("u32 suffixes exhausted")
    }

    /// Writes `rel` under the run directory through a temporary sibling and
    /// a rename.
    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.path()?.join(rel);
        write_atomic(&target, bytes)?;
        Ok(target)
    }
}

pub fn write_atomic(target: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = target.parent().expect("target has a parent");
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let name = target.file_name().expect("target has a file name").to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(tmp.display(), e))?;
    f.write_all(bytes)
        .and_then(|()| f.sync_all())
        .map_err(|e| CliError::io(tmp.display(), e))?;
    fs::rename(&tmp, target).map_err(|e| CliError::io(target.display(), e))
}

/// CSV table whose first column carries the schema version.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: &'static str,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &'static str, columns: &'static [&'static str]) -> Self {
        Self {
            schema,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.schema);
        self.rows.push(row);
    }

    pub fn header(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(std::iter::once("schema").chain(self.columns.iter().copied()))
            .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(std::iter::once("schema").chain(self.columns.iter().copied()))
            .expect("in-memory write");
        for row in &self.rows {
            w.write_record(std::iter::once(self.schema).chain(row.iter().map(String::as_str)))
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collisions_get_suffixes() {
        let root = tempfile::tempdir().unwrap();
        let t = Utc::now();
        let a = RunDir::new(root.path(), "h", "analyze", t);
        let b = RunDir::new(root.path(), "h", "analyze", t);
        let pa = a.path().unwrap();
        let pb = b.path().unwrap();
        assert_ne!(pa, pb);
        assert!(pb.file_name().unwrap().to_string_lossy().ends_with("-1"));
        assert_eq!(a.path().unwrap(), pa);
    }

    #[test]
    fn unwritten_dirs_are_not_created() {
        let root = tempfile::tempdir().unwrap();
        let _ = RunDir::new(root.path(), "h", "sweep", Utc::now());
        assert!(!root.path().join("h").exists());
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let root = tempfile::tempdir().unwrap();
        let d = RunDir::new(root.path(), "h", "sweep", Utc::now());
        let p = d.write("points/000.csv", b"x\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"x\n");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn table_quotes_commas() {
        let mut t = Table::new("t/1", &["a", "b"]);
        t.push(vec!["f(k=1,n=2)".into(), "3".into()]);
        let s = String::from_utf8(t.to_csv()).unwrap();
        assert_eq!(s, "schema,a,b\nt/1,\"f(k=1,n=2)\",3\n");
    }
}
