//! The record placed at the head of every artifact the tool writes.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub seed: Option<u64>,
    pub bounds: BTreeMap<String, u64>,
    pub flags: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            inputs: Vec::new(),
            seed: None,
            bounds: BTreeMap::new(),
            flags: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    /// `# {json}` comment line for text artifacts.
    pub fn comment(&self) -> String {
        format!("# {}\n", self.json())
    }

    /// Line-delimited record form, tagged like the other records.
    pub fn record(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v["kind"] = "manifest".into();
        format!("{v}\n")
    }
}
