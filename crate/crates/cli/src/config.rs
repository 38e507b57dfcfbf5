//! Run configuration: TOML file sections layered under command-line flags.
//!
//! Every subcommand's flags are `Option`s. A value given on the command line
//! wins, then the matching key in the config file section, then the built-in
//! default. The fully resolved configuration is hashed and stamped into the
//! command's outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Bad invocation: missing argument, missing input file, unreadable config.
/// Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn require<T: Clone>(value: &Option<T>, name: &str) -> Result<T> {
    value.clone().ok_or_else(|| usage(format!("missing required setting `{name}` (flag or config file)")))
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    root: Option<Value>,
    path: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        require_file(path, "config file")?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        Ok(Self {
            root: Some(serde_json::to_value(table)?),
            path: Some(path.to_path_buf()),
        })
    }

    fn section(&self, name: &str) -> Option<&Value> {
        self.root.as_ref()?.get(name)
    }

    /// Overlays non-null flag values on the file section `name`.
    pub fn layer<T: Serialize + DeserializeOwned>(&self, name: &str, flags: &T) -> Result<T> {
        let mut merged = self.section(name).cloned().unwrap_or_else(|| Value::Object(Default::default()));
        let Value::Object(map) = &mut merged else {
            return Err(usage(format!("config section `{name}` must be a table")));
        };
        if let Value::Object(over) = serde_json::to_value(flags)? {
            for (k, v) in over {
                if !v.is_null() {
                    map.insert(k, v);
                }
            }
        }
        serde_json::from_value(merged).map_err(|e| {
            let file = self.path.as_ref().map_or("<flags>".into(), |p| p.display().to_string());
            usage(format!("invalid `[{name}]` settings in {file}: {e}"))
        })
    }
}

/// Provenance attached to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: Value,
}

impl Stamp {
    /// `config` must already have every default filled in.
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        // serde_json maps are sorted, so this text is canonical.
        let canonical = serde_json::to_string(&config).expect("config serializes");
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hex::encode(Sha256::digest(canonical.as_bytes())),
            seed,
            config,
        }
    }

    pub fn short(&self) -> String {
        format!("config_hash={} seed={}", &self.config_hash[..16], self.seed)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("stamp serializes")
    }
}

/// Writes pretty JSON with the stamp under a `"stamp"` key.
pub fn write_stamped_json<T: Serialize>(path: &Path, body: &T, stamp: &Stamp) -> Result<()> {
    let mut value = serde_json::to_value(body)?;
    match &mut value {
        Value::Object(map) => {
            map.insert("stamp".into(), stamp.to_value());
        }
        other => {
            value = serde_json::json!({ "value": other.take(), "stamp": stamp.to_value() });
        }
    }
    write_text(path, &(serde_json::to_string_pretty(&value)? + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Section {
        a: Option<u32>,
        b: Option<String>,
    }

    fn file(text: &str) -> ConfigFile {
        ConfigFile {
            root: Some(serde_json::to_value(toml::from_str::<toml::Table>(text).unwrap()).unwrap()),
            path: None,
        }
    }

    #[test]
    fn flags_override_file() {
        let cfg = file("[s]\na = 1\nb = \"file\"\n");
        let flags = Section { a: None, b: Some("flag".into()) };
        let merged = cfg.layer("s", &flags).unwrap();
        assert_eq!(merged, Section { a: Some(1), b: Some("flag".into()) });
    }

    #[test]
    fn missing_section_uses_flags_only() {
        let merged = ConfigFile::default().layer("s", &Section { a: Some(3), b: None }).unwrap();
        assert_eq!(merged.a, Some(3));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let err = file("[s]\nc = 1\n").layer("s", &Section::default()).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn stamp_hash_ignores_key_order() {
        let a = Stamp::new("x", 1, serde_json::json!({"p": 1, "q": 2}));
        let b = Stamp::new("x", 1, serde_json::json!({"q": 2, "p": 1}));
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, Stamp::new("x", 1, serde_json::json!({"p": 2, "q": 2})).config_hash);
    }
}
