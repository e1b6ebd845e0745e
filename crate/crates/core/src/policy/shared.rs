use std::sync::{Arc, Mutex, PoisonError, RwLock};

use super::PolicyStore;

/// A policy store shared between one writer and many readers.
///
/// Readers take an `Arc` to the current version and keep a consistent view
/// for as long as they hold it. Writers are serialized and publish a whole
/// new version at once.
#[derive(Debug, Default)]
pub struct SharedPolicy {
    current: RwLock<Arc<PolicyStore>>,
    writer: Mutex<()>,
}

impl SharedPolicy {
    pub fn new(store: PolicyStore) -> Self {
        Self {
            current: RwLock::new(Arc::new(store)),
            writer: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<PolicyStore> {
        self.current
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .clone()
    }

    /// Runs `f` against the current version and, if it returns a new store,
    /// publishes it. `f` may perform side effects such as persisting the new
    /// version; nothing is published when it fails.
    pub fn update<T, E>(
        &self,
        f: impl FnOnce(&PolicyStore) -> Result<(PolicyStore, T), E>,
    ) -> Result<T, E> {
        let _guard = self.writer.lock().unwrap_or_else(PoisonError::into_inner);
        let base = self.snapshot();
        let (next, out) = f(&base)?;
        *self.current.write().unwrap_or_else(PoisonError::into_inner) = Arc::new(next);
        Ok(out)
    }
}
