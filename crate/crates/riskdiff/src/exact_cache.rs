//! Shared exact-test lattices keyed by arm sizes.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use riskdiff_core::exact::{ExactSource, ExactTestResult, Lattice, Ordering, DEFAULT_GRID};
use riskdiff_core::{Error, Result};

struct Entry {
    lattice: Lattice,
    /// Supremum and argsup per tail group, filled on first use.
    sup: Vec<OnceLock<(f64, f64)>>,
}

/// Thread-safe memo of lattices and their per-group suprema. Results are
/// pure functions of the arguments, so concurrent fills agree.
pub struct LatticeCache {
    grid: usize,
    ordering: Ordering,
    entries: RwLock<HashMap<(u64, u64), Arc<Entry>>>,
}

impl LatticeCache {
    pub fn new(grid: usize, ordering: Ordering) -> Self {
        LatticeCache { grid, ordering, entries: RwLock::new(HashMap::new()) }
    }

    fn entry(&self, n1: u64, n0: u64) -> Result<Arc<Entry>> {
        if let Some(e) = self.entries.read().expect("lattice cache poisoned").get(&(n1, n0)) {
            return Ok(e.clone());
        }
        let lattice = Lattice::new(n1, n0, self.grid, self.ordering)?;
        let sup = (0..lattice.groups()).map(|_| OnceLock::new()).collect();
        let entry = Arc::new(Entry { lattice, sup });
        let mut map = self.entries.write().expect("lattice cache poisoned");
        Ok(map.entry((n1, n0)).or_insert(entry).clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("lattice cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for LatticeCache {
    fn default() -> Self {
        LatticeCache::new(DEFAULT_GRID, Ordering::AbsZ)
    }
}

impl ExactSource for LatticeCache {
    fn ss_test(&self, k1: u64, n1: u64, k0: u64, n0: u64) -> Result<ExactTestResult> {
        if self.grid < 100 {
            return Err(Error::Invalid("exact test grid must have at least 100 points".into()));
        }
        let e = self.entry(n1, n0)?;
        if k1 > n1 || k0 > n0 {
            return Err(Error::Invalid("responders exceed arm size".into()));
        }
        let g = e.lattice.group(k1, k0);
        let &(p_value, theta_argsup) = e.sup[g].get_or_init(|| e.lattice.group_sup(g));
        Ok(ExactTestResult {
            z_obs: riskdiff_core::exact::pooled_z(k1, n1, k0, n0),
            p_value,
            theta_argsup,
            grid_points: self.grid,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use riskdiff_core::exact::DirectExact;

    #[test]
    fn matches_direct_computation() {
        let cache = LatticeCache::default();
        let direct = DirectExact::default();
        for (k1, n1, k0, n0) in [(3, 10, 1, 12), (5, 5, 0, 5), (0, 7, 0, 9), (12, 20, 4, 18), (3, 10, 1, 12)] {
            assert_eq!(cache.ss_test(k1, n1, k0, n0).unwrap(), direct.ss_test(k1, n1, k0, n0).unwrap());
        }
        assert_eq!(cache.len(), 4);
    }
}
