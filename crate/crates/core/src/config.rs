//! Plain-text `key = value` defaults for CLI flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

pub const CONFIG_FILE: &str = "emotionbox.conf";

/// Keys a config file may set; each names the CLI flag it provides a default for.
pub const KNOWN_KEYS: &[&str] = &[
    "corpus",
    "ckpt",
    "labels_ckpt",
    "mode",
    "epochs",
    "batch",
    "lr",
    "hidden",
    "window",
    "stride",
    "seed",
    "emotion",
    "tonic",
    "threshold",
    "temperature",
    "length",
    "samples",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: line {line}: expected key = value")]
    Syntax { path: String, line: usize },
    #[error("{path}: unknown config key {key:?}")]
    UnknownKey { path: String, key: String },
    #[error("config key {key:?}: cannot parse {value:?}: {msg}")]
    BadValue { key: String, value: String, msg: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppConfig {
    values: BTreeMap<String, String>,
}

impl AppConfig {
    /// Parses config text. Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
            })?;
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    path: origin.to_string(),
                    key,
                });
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(AppConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Loads `path` if given, else `emotionbox.conf` in the working directory
    /// when present, else an empty config.
    pub fn discover(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None if Path::new(CONFIG_FILE).is_file() => Self::load(Path::new(CONFIG_FILE)),
            None => Ok(Self::default()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if given, else the parsed config value, else `default`.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.resolve_opt(flag, key)?.unwrap_or(default))
    }

    /// Like [`resolve`](Self::resolve) without a built-in default.
    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
                msg: e.to_string(),
            }),
        }
    }
}
