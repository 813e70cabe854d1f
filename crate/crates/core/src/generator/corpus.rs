//! On-disk corpus: one hex file per program plus a metadata sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bytecode::BytecodeProgram;
use crate::engine::program_key;
use crate::opspec::PathId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub opcode: String,
    pub intended_path: Option<PathId>,
    pub provenance: String,
    pub rng_seed: u64,
}

#[derive(Debug, Clone)]
pub struct CorpusDir {
    root: PathBuf,
}

impl CorpusDir {
    pub fn new(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(CorpusDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes the program and its sidecar; returns the entry key.
    pub fn put(&self, program: &BytecodeProgram, meta: &CorpusMeta) -> std::io::Result<String> {
        let key = program_key(program);
        std::fs::write(self.root.join(format!("{key}.hex")), program.to_hex())?;
        let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
        std::fs::write(self.root.join(format!("{key}.json")), json + "\n")?;
        Ok(key)
    }

    pub fn get(&self, key: &str) -> Option<BytecodeProgram> {
        let text = std::fs::read_to_string(self.root.join(format!("{key}.hex"))).ok()?;
        BytecodeProgram::from_hex(text.trim()).ok()
    }

    pub fn meta(&self, key: &str) -> Option<CorpusMeta> {
        let text = std::fs::read_to_string(self.root.join(format!("{key}.json"))).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn remove(&self, key: &str) -> std::io::Result<()> {
        std::fs::remove_file(self.root.join(format!("{key}.hex")))?;
        let _ = std::fs::remove_file(self.root.join(format!("{key}.json")));
        Ok(())
    }

    /// Entry keys in sorted order.
    pub fn keys(&self) -> std::io::Result<Vec<String>> {
        let mut keys: Vec<String> = std::fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".hex").map(str::to_string)
            })
            .collect();
        keys.sort();
        Ok(keys)
    }
}
