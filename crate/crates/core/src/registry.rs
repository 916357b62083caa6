//! Name-keyed registries for interchangeable strategies.
//!
//! Each strategy family (rigid registration, inverse kinematics) exposes a
//! trait; concrete implementations are registered under a stable name and
//! looked up at runtime from the scenario config or the CLI.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown {family} strategy `{name}` (available: {})", available.join(", "))]
pub struct UnknownStrategy {
    pub family: &'static str,
    pub name: String,
    pub available: Vec<String>,
}

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `strategy` under `name`, returning any entry it replaced.
    pub fn register(&mut self, name: impl Into<String>, strategy: Arc<T>) -> Option<Arc<T>> {
        self.entries.insert(name.into(), strategy)
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>, UnknownStrategy> {
        self.entries.get(name).cloned().ok_or_else(|| UnknownStrategy {
            family: self.family,
            name: name.to_string(),
            available: self.names(),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}
