//! Freshness registries: bundle parameters, session keys and PRF labels are
//! single-use within their scope.

use std::collections::HashSet;
use std::hash::Hash;

use rand::Rng;

use crate::bundle::BundleParams;
use crate::error::{Error, Result};

/// Issues bundle parameters with unique serial numbers and rejects a second
/// use of any of them.
#[derive(Clone, Debug, Default)]
pub struct ParamsRegistry {
    next_id: u64,
    consumed: HashSet<u64>,
}

impl ParamsRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn issue<R: Rng + ?Sized>(
        &mut self,
        width: u32,
        bundle_size: usize,
        entropy_bound: f64,
        rng: &mut R,
    ) -> Result<BundleParams> {
        let id = self.next_id;
        self.next_id += 1;
        BundleParams::random(id, width, bundle_size, entropy_bound, rng)
    }

    pub fn consume(&mut self, pp: &BundleParams) -> Result<()> {
        if !self.consumed.insert(pp.id) {
            return Err(Error::ParamsReused);
        }
        Ok(())
    }

    pub fn consumed(&self) -> usize {
        self.consumed.len()
    }
}

/// Generic set of items that may be used once.
#[derive(Clone, Debug)]
pub struct OnceSet<T> {
    seen: HashSet<T>,
}

impl<T: Hash + Eq> Default for OnceSet<T> {
    fn default() -> Self {
        OnceSet {
            seen: HashSet::new(),
        }
    }
}

impl<T: Hash + Eq> OnceSet<T> {
    /// `true` on first use, `false` if already seen.
    pub fn insert(&mut self, item: T) -> bool {
        self.seen.insert(item)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}
