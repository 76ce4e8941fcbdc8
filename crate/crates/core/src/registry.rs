//! Named strategy registries.
//!
//! Channel builders, ensemble builders and seminorm methods are trait objects
//! registered under a string key and looked up at runtime, so descriptors in
//! configuration files select an implementation by name.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

pub trait Named: Send + Sync {
    fn name(&self) -> &str;
}

pub struct Registry<T: ?Sized + Named> {
    what: &'static str,
    entries: RwLock<BTreeMap<String, Arc<T>>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(what: &'static str) -> Self {
        Self {
            what,
            entries: RwLock::new(BTreeMap::new()),
        }
    }

    /// Registers `item`, replacing any earlier entry with the same name.
    pub fn register(&self, item: Arc<T>) {
        self.entries
            .write()
            .unwrap_or_else(|e| panic!("{} registry poisoned: {e}", self.what))
            .insert(item.name().to_string(), item);
    }

    pub fn get(&self, name: &str) -> Option<Arc<T>> {
        self.entries
            .read()
            .unwrap_or_else(|e| panic!("{} registry poisoned: {e}", self.what))
            .get(name)
            .cloned()
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<String> {
        self.entries
            .read()
            .unwrap_or_else(|e| panic!("{} registry poisoned: {e}", self.what))
            .keys()
            .cloned()
            .collect()
    }

    pub fn what(&self) -> &'static str {
        self.what
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Named {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Named for Hello {
        fn name(&self) -> &str {
            "hello"
        }
    }
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[test]
    fn register_and_lookup() {
        let reg: Registry<dyn Greeter> = Registry::new("greeter");
        assert!(reg.get("hello").is_none());
        reg.register(Arc::new(Hello));
        assert_eq!(reg.get("hello").unwrap().greet(), "hi");
        assert_eq!(reg.names(), vec!["hello".to_string()]);
    }
}
