//! Name-keyed registries of interchangeable strategies.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Anything that can be looked up by name.
pub trait Named {
    fn name(&self) -> &'static str;
}

/// Ordered collection of strategies behind a common trait.
pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: Vec<Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Add a strategy, replacing any previous entry with the same name.
    pub fn register(&mut self, entry: Arc<T>) -> &mut Self {
        let name = entry.name();
        self.entries.retain(|e| e.name() != name);
        self.entries.push(entry);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
