//! Optional TOML configuration that command-line flags override.
//!
//! ```toml
//! seed = 7
//!
//! [noise]
//! multipliers = [1, 5, 10, 25]
//! trials = 5
//!
//! [serve]
//! listen = "0.0.0.0:8765"
//! ```
//!
//! Keys in a subcommand's table use the flag names with dashes replaced by
//! underscores. Unknown keys in the table of the running subcommand are
//! errors; tables of other subcommands are ignored.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;

#[derive(Debug, Default)]
pub struct Settings {
    table: toml::Table,
    used: RefCell<BTreeSet<String>>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Self { table, used: RefCell::default() })
    }

    fn lookup(&self, section: Option<&str>, key: &str) -> Option<&toml::Value> {
        match section {
            None => self.table.get(key),
            Some(s) => self.table.get(s)?.as_table()?.get(key),
        }
    }

    /// Value of `key` from the top level (`section = None`) or a subcommand table.
    pub fn get<T: DeserializeOwned>(&self, section: Option<&str>, key: &str) -> Result<Option<T>> {
        let Some(v) = self.lookup(section, key) else {
            return Ok(None);
        };
        let name = section.map_or(key.to_string(), |s| format!("{s}.{key}"));
        self.used.borrow_mut().insert(name.clone());
        let parsed = v.clone().try_into().with_context(|| format!("config key `{name}` has the wrong type"))?;
        Ok(Some(parsed))
    }

    /// Flag if given, else the config value, else the default.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, section: &str, key: &str, default: T) -> Result<T> {
        let from_file = self.get(Some(section), key)?;
        Ok(flag.or(from_file).unwrap_or(default))
    }

    /// Like [`Settings::pick`] for comma-separated list flags.
    pub fn pick_list<T: DeserializeOwned>(&self, flag: Vec<T>, section: &str, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: Clone,
    {
        let from_file: Option<Vec<T>> = self.get(Some(section), key)?;
        Ok(if !flag.is_empty() { flag } else { from_file.unwrap_or_else(|| default.to_vec()) })
    }

    /// Rejects keys in `section` (and top-level scalars) that nothing read.
    pub fn finish(&self, section: &str) -> Result<()> {
        let used = self.used.borrow();
        let mut unknown = Vec::new();
        for (k, v) in &self.table {
            match v {
                toml::Value::Table(t) if k == section => {
                    unknown.extend(t.keys().map(|kk| format!("{k}.{kk}")).filter(|n| !used.contains(n)));
                }
                toml::Value::Table(_) => {}
                _ if !used.contains(k) => unknown.push(k.clone()),
                _ => {}
            }
        }
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        Ok(())
    }
}
