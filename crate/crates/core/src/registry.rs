//! Name-keyed registries of interchangeable strategies.
//!
//! Linear solvers, saddle-point preconditioners and manufactured cases all
//! live behind trait objects and are looked up by the name that appears in
//! run configurations.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Anything that can be registered must report a stable name.
pub trait Named {
    fn name(&self) -> &str;
}

pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item` under its own name, replacing any previous entry.
    pub fn register(&mut self, item: Arc<T>) {
        self.entries.insert(item.name().to_string(), item);
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dummy(&'static str);
    impl Named for Dummy {
        fn name(&self) -> &str {
            self.0
        }
    }

    #[test]
    fn lookup_by_name() {
        let mut reg: Registry<Dummy> = Registry::new("dummy");
        reg.register(Arc::new(Dummy("b")));
        reg.register(Arc::new(Dummy("a")));
        assert_eq!(reg.names(), vec!["a", "b"]);
        assert_eq!(reg.get("a").unwrap().name(), "a");
        let err = reg.get("zz").err().unwrap().to_string();
        assert!(err.contains("unknown dummy 'zz'"));
        assert!(err.contains("a, b"));
    }
}
