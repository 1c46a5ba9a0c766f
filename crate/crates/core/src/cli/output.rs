use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{rows_to_csv, Failure};
use crate::sim::Row;

/// Files rendered in memory and written together, each through a temporary
/// file renamed into place.
pub(super) struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub(super) fn new() -> Self {
        OutputSet { files: Vec::new() }
    }

    pub(super) fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure {
            code: super::EXIT_INPUT,
            message: format!("json error: {e}"),
        })?;
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
        Ok(())
    }

    pub(super) fn csv(&mut self, name: &str, rows: &[Row]) -> Result<(), Failure> {
        self.files.push((name.into(), rows_to_csv(rows)?));
        Ok(())
    }

    pub(super) fn text(&mut self, name: &str, text: String) {
        self.files.push((name.into(), text.into_bytes()));
    }

    pub(super) fn commit(self, dir: &Path) -> Result<(), Failure> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(&bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(dir.join(name)).map_err(|e| Failure::from(e.error))?;
        }
        Ok(())
    }
}
