//! Suissa–Shuster exact unconditional test for two independent binomials.
//!
//! The p-value of an outcome `(k1, k0)` is the supremum over the common
//! response probability θ of the null probability of all lattice points at
//! least as extreme. A [`Lattice`] evaluates the θ grid once for every
//! threshold of an `(n1, n0)` lattice; refinement around the best grid point
//! happens per queried threshold.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::log_choose;

/// Tie tolerance when comparing ordering statistics.
pub const TIE_TOL: f64 = 1e-12;
pub const DEFAULT_GRID: usize = 1000;
const THETA_LO: f64 = 1e-6;
const THETA_HI: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Ordering {
    /// Two-sided, by the pooled-variance score statistic `|Z|`.
    #[default]
    AbsZ,
    /// One-sided, by the raw difference `δ̂ = k1/n1 − k0/n0`.
    DeltaHat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactTestResult {
    /// Standardized statistic of the observed table (signed).
    pub z_obs: f64,
    pub p_value: f64,
    /// θ attaining the supremum.
    pub theta_argsup: f64,
    pub grid_points: usize,
}

/// Pooled-variance Z; defined as 0 when the pooled proportion is 0 or 1.
pub fn pooled_z(k1: u64, n1: u64, k0: u64, n0: u64) -> f64 {
    let (n1f, n0f) = (n1 as f64, n0 as f64);
    let pooled = (k1 + k0) as f64 / (n1f + n0f);
    let var = pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n0f);
    if var <= 0.0 {
        return 0.0;
    }
    (k1 as f64 / n1f - k0 as f64 / n0f) / libm::sqrt(var)
}

fn ordering_stat(ordering: Ordering, k1: u64, n1: u64, k0: u64, n0: u64) -> f64 {
    match ordering {
        Ordering::AbsZ => pooled_z(k1, n1, k0, n0).abs(),
        Ordering::DeltaHat => k1 as f64 / n1 as f64 - k0 as f64 / n0 as f64,
    }
}

/// Binomial pmf vector for `Bin(n, θ)`, computed in log space.
fn binom_pmf(log_coef: &[f64], theta: f64, out: &mut [f64]) {
    let n = log_coef.len() - 1;
    let (lt, l1t) = (libm::log(theta), libm::log1p(-theta));
    for (k, o) in out.iter_mut().enumerate() {
        *o = libm::exp(log_coef[k] + k as f64 * lt + (n - k) as f64 * l1t);
    }
}

/// Null probability machinery for one `(n1, n0)` lattice.
#[derive(Debug, Clone)]
pub struct Lattice {
    n1: u64,
    n0: u64,
    ordering: Ordering,
    grid: Vec<f64>,
    coef1: Vec<f64>,
    coef0: Vec<f64>,
    /// Outcomes `(k1, k0)` sorted by decreasing ordering statistic.
    sorted: Vec<(u32, u32)>,
    /// Per outcome index `k1 * (n0 + 1) + k0`: group id of its tail.
    group_of: Vec<u32>,
    /// Per group: exclusive end of the tail prefix within `sorted`.
    group_end: Vec<u32>,
    /// Per group: best grid value and its grid index.
    grid_best: Vec<(f64, u32)>,
}

impl Lattice {
    pub fn new(n1: u64, n0: u64, grid: usize, ordering: Ordering) -> Result<Self> {
        if n1 == 0 || n0 == 0 {
            return Err(Error::Invalid("exact test needs both arms non-empty".into()));
        }
        if grid < 2 {
            return Err(Error::Invalid("exact test grid needs at least two points".into()));
        }
        let coef1: Vec<f64> = (0..=n1).map(|k| log_choose(n1, k)).collect::<Result<_>>()?;
        let coef0: Vec<f64> = (0..=n0).map(|k| log_choose(n0, k)).collect::<Result<_>>()?;
        let step = (THETA_HI - THETA_LO) / (grid - 1) as f64;
        let grid_pts: Vec<f64> = (0..grid).map(|i| THETA_LO + step * i as f64).collect();

        let mut sorted: Vec<(u32, u32, f64)> = Vec::with_capacity(((n1 + 1) * (n0 + 1)) as usize);
        for k1 in 0..=n1 {
            for k0 in 0..=n0 {
                sorted.push((k1 as u32, k0 as u32, ordering_stat(ordering, k1, n1, k0, n0)));
            }
        }
        sorted.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

        // Tail of the outcome at sorted position i is the prefix of all
        // outcomes with statistic >= stat_i - TIE_TOL.
        let m = sorted.len();
        let mut end_of = vec![0u32; m];
        let mut j = 0;
        for i in 0..m {
            let thr = sorted[i].2 - TIE_TOL;
            if j < i + 1 {
                j = i + 1;
            }
            while j < m && sorted[j].2 >= thr {
                j += 1;
            }
            end_of[i] = j as u32;
        }
        let mut group_end: Vec<u32> = end_of.clone();
        group_end.dedup();
        let mut group_of = vec![0u32; m];
        let stride = (n0 + 1) as usize;
        let mut g = 0usize;
        for i in 0..m {
            while group_end[g] != end_of[i] {
                g += 1;
            }
            let (k1, k0, _) = sorted[i];
            group_of[k1 as usize * stride + k0 as usize] = g as u32;
        }

        let mut lattice = Lattice {
            n1,
            n0,
            ordering,
            grid: grid_pts,
            coef1,
            coef0,
            sorted: sorted.iter().map(|&(a, b, _)| (a, b)).collect(),
            group_of,
            group_end,
            grid_best: Vec::new(),
        };
        lattice.scan_grid();
        Ok(lattice)
    }

    fn scan_grid(&mut self) {
        let mut best = vec![(f64::NEG_INFINITY, 0u32); self.group_end.len()];
        let mut b1 = vec![0.0; self.n1 as usize + 1];
        let mut b0 = vec![0.0; self.n0 as usize + 1];
        for (t, &theta) in self.grid.iter().enumerate() {
            binom_pmf(&self.coef1, theta, &mut b1);
            binom_pmf(&self.coef0, theta, &mut b0);
            let mut cum = 0.0;
            let mut pos = 0usize;
            for (g, &end) in self.group_end.iter().enumerate() {
                while pos < end as usize {
                    let (k1, k0) = self.sorted[pos];
                    cum += b1[k1 as usize] * b0[k0 as usize];
                    pos += 1;
                }
                if cum > best[g].0 {
                    best[g] = (cum, t as u32);
                }
            }
        }
        self.grid_best = best;
    }

    pub fn n1(&self) -> u64 {
        self.n1
    }

    pub fn n0(&self) -> u64 {
        self.n0
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn grid_points(&self) -> usize {
        self.grid.len()
    }

    /// Number of distinct tail sets.
    pub fn groups(&self) -> usize {
        self.group_end.len()
    }

    /// Tail group of outcome `(k1, k0)`.
    pub fn group(&self, k1: u64, k0: u64) -> usize {
        self.group_of[k1 as usize * (self.n0 as usize + 1) + k0 as usize] as usize
    }

    /// Null probability of the tail of group `g` at `theta`.
    pub fn tail_prob(&self, g: usize, theta: f64) -> f64 {
        let mut b1 = vec![0.0; self.n1 as usize + 1];
        let mut b0 = vec![0.0; self.n0 as usize + 1];
        binom_pmf(&self.coef1, theta, &mut b1);
        binom_pmf(&self.coef0, theta, &mut b0);
        self.sorted[..self.group_end[g] as usize]
            .iter()
            .map(|&(k1, k0)| b1[k1 as usize] * b0[k0 as usize])
            .sum()
    }

    /// Supremum for tail group `g`: best grid point refined by golden-section
    /// search on the neighbouring grid interval. Returns `(p, θ)`.
    pub fn group_sup(&self, g: usize) -> (f64, f64) {
        let (grid_val, idx) = self.grid_best[g];
        let idx = idx as usize;
        let mut best = (grid_val, self.grid[idx]);
        if self.group_end[g] as usize == self.sorted.len() {
            return (1.0, best.1);
        }
        let lo = self.grid[idx.saturating_sub(1)];
        let hi = self.grid[(idx + 1).min(self.grid.len() - 1)];
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = self.tail_prob(g, c);
        let mut fd = self.tail_prob(g, d);
        for _ in 0..60 {
            if b - a < 1e-12 {
                break;
            }
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = self.tail_prob(g, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = self.tail_prob(g, d);
            }
        }
        for (v, t) in [(fc, c), (fd, d)] {
            if v > best.0 {
                best = (v, t);
            }
        }
        (best.0.min(1.0), best.1)
    }

    /// Test result for the observed outcome `(k1, k0)`.
    pub fn test(&self, k1: u64, k0: u64) -> Result<ExactTestResult> {
        if k1 > self.n1 || k0 > self.n0 {
            return Err(Error::Invalid("responders exceed arm size".into()));
        }
        let (p, theta) = self.group_sup(self.group(k1, k0));
        Ok(ExactTestResult {
            z_obs: pooled_z(k1, self.n1, k0, self.n0),
            p_value: p,
            theta_argsup: theta,
            grid_points: self.grid.len(),
        })
    }

    /// p-value of every outcome, indexed `k1 * (n0 + 1) + k0`.
    pub fn all_p_values(&self) -> Vec<f64> {
        let sup: Vec<f64> = (0..self.groups()).map(|g| self.group_sup(g).0).collect();
        self.group_of.iter().map(|&g| sup[g as usize]).collect()
    }
}

/// Two-sided Suissa–Shuster test with `|Z|` ordering.
pub fn ss_test(k1: u64, n1: u64, k0: u64, n0: u64, grid: usize) -> Result<ExactTestResult> {
    ss_test_with(k1, n1, k0, n0, grid, Ordering::AbsZ)
}

pub fn ss_test_with(
    k1: u64,
    n1: u64,
    k0: u64,
    n0: u64,
    grid: usize,
    ordering: Ordering,
) -> Result<ExactTestResult> {
    if grid < 100 {
        return Err(Error::Invalid("exact test grid must have at least 100 points".into()));
    }
    Lattice::new(n1, n0, grid, ordering)?.test(k1, k0)
}

/// Exact probability, at common response probability `theta`, that the test
/// rejects at level `alpha`.
pub fn exact_rejection_prob(n1: u64, n0: u64, theta: f64, alpha: f64, grid: usize) -> Result<f64> {
    let lattice = Lattice::new(n1, n0, grid, Ordering::AbsZ)?;
    rejection_prob(&lattice, &lattice.all_p_values(), theta, alpha)
}

/// Rejection probability from precomputed lattice p-values.
pub fn rejection_prob(lattice: &Lattice, p_values: &[f64], theta: f64, alpha: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain("theta must lie in (0, 1)"));
    }
    let (n1, n0) = (lattice.n1 as usize, lattice.n0 as usize);
    let mut b1 = vec![0.0; n1 + 1];
    let mut b0 = vec![0.0; n0 + 1];
    binom_pmf(&lattice.coef1, theta, &mut b1);
    binom_pmf(&lattice.coef0, theta, &mut b0);
    let mut total = 0.0;
    for k1 in 0..=n1 {
        for k0 in 0..=n0 {
            if p_values[k1 * (n0 + 1) + k0] <= alpha {
                total += b1[k1] * b0[k0];
            }
        }
    }
    Ok(total)
}

/// Source of exact test results; lets callers share lattices across tests.
pub trait ExactSource {
    fn ss_test(&self, k1: u64, n1: u64, k0: u64, n0: u64) -> Result<ExactTestResult>;
}

/// Builds a fresh lattice per call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectExact {
    pub grid: usize,
    pub ordering: Ordering,
}

impl Default for DirectExact {
    fn default() -> Self {
        DirectExact { grid: DEFAULT_GRID, ordering: Ordering::AbsZ }
    }
}

impl ExactSource for DirectExact {
    fn ss_test(&self, k1: u64, n1: u64, k0: u64, n0: u64) -> Result<ExactTestResult> {
        ss_test_with(k1, n1, k0, n0, self.grid, self.ordering)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    // Direct double sum with exact binomial coefficients, no lattice reuse.
    fn brute_tail(k1: u64, n1: u64, k0: u64, n0: u64, theta: f64) -> f64 {
        let z_obs = pooled_z(k1, n1, k0, n0).abs();
        let choose = |n: u64, k: u64| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
        let mut s = 0.0;
        for a in 0..=n1 {
            for b in 0..=n0 {
                if pooled_z(a, n1, b, n0).abs() >= z_obs - TIE_TOL {
                    s += choose(n1, a) * choose(n0, b) * theta.powi((a + b) as i32)
                        * (1.0 - theta).powi((n1 + n0 - a - b) as i32);
                }
            }
        }
        s
    }

    #[test]
    fn equal_proportions_give_p_one() {
        let r = ss_test(3, 10, 3, 10, 1000).unwrap();
        assert_eq!(r.z_obs, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = ss_test(0, 7, 0, 9, 1000).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn five_of_five_against_dense_oracle() {
        let r = ss_test(5, 5, 0, 5, 1000).unwrap();
        let mut best: f64 = 0.0;
        let pts = 100_000;
        for i in 0..pts {
            let theta = 1e-6 + (1.0 - 2e-6) * i as f64 / (pts - 1) as f64;
            best = best.max(brute_tail(5, 5, 0, 5, theta));
        }
        assert!((r.p_value - best).abs() < 1e-6, "{} vs {}", r.p_value, best);
        assert!((r.theta_argsup - 0.5).abs() < 1e-3);
    }

    #[test]
    fn symmetry_and_relabeling() {
        let mut rng = CounterRng::keyed(11, &[]);
        for _ in 0..30 {
            let n1 = 2 + rng.next_index(12) as u64;
            let n0 = 2 + rng.next_index(12) as u64;
            let k1 = rng.next_index(n1 as usize + 1) as u64;
            let k0 = rng.next_index(n0 as usize + 1) as u64;
            let p = ss_test(k1, n1, k0, n0, 500).unwrap().p_value;
            let swapped = ss_test(k0, n0, k1, n1, 500).unwrap().p_value;
            let flipped = ss_test(n1 - k1, n1, n0 - k0, n0, 500).unwrap().p_value;
            assert!((p - swapped).abs() < 1e-12, "{p} {swapped}");
            assert!((p - flipped).abs() < 1e-12, "{p} {flipped}");
        }
    }

    #[test]
    fn grid_refinement_is_stable() {
        let mut rng = CounterRng::keyed(5, &[]);
        for _ in 0..200 {
            let n1 = 1 + rng.next_index(15) as u64;
            let n0 = 1 + rng.next_index(15) as u64;
            let k1 = rng.next_index(n1 as usize + 1) as u64;
            let k0 = rng.next_index(n0 as usize + 1) as u64;
            let a = ss_test(k1, n1, k0, n0, 500).unwrap().p_value;
            let b = ss_test(k1, n1, k0, n0, 1000).unwrap().p_value;
            assert!((a - b).abs() < 1e-4, "({k1},{n1},{k0},{n0}) {a} {b}");
        }
    }

    #[test]
    fn rejection_probability_properties() {
        assert_eq!(exact_rejection_prob(10, 10, 0.3, 0.0, 1000).unwrap(), 0.0);
        assert!(exact_rejection_prob(10, 10, 0.3, 0.05, 1000).unwrap() <= 0.05 + 1e-9);
        let a = exact_rejection_prob(15, 15, 0.2, 0.01, 1000).unwrap();
        let b = exact_rejection_prob(15, 15, 0.2, 0.05, 1000).unwrap();
        assert!(a <= b);
    }

    #[test]
    fn one_sided_ordering() {
        let two = ss_test(8, 10, 2, 10, 1000).unwrap().p_value;
        let one = ss_test_with(8, 10, 2, 10, 1000, Ordering::DeltaHat).unwrap().p_value;
        assert!(one < two);
        assert!(one > 0.5 * two * 0.9);
        let rev = ss_test_with(2, 10, 8, 10, 1000, Ordering::DeltaHat).unwrap().p_value;
        assert!(rev > 0.9);
    }

    #[test]
    fn rejects_small_grid_and_bad_counts() {
        assert!(ss_test(1, 5, 1, 5, 50).is_err());
        assert!(ss_test(6, 5, 1, 5, 200).is_err());
        assert!(ss_test(0, 0, 1, 5, 200).is_err());
    }
}
