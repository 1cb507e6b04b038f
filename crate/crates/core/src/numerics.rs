//! Special functions, the normal and chi-square(1) distributions, and a small
//! dense SPD solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// `ln C(n, k)` via log-gamma.
pub fn log_choose(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain("log_choose requires k <= n"));
    }
    if k == 0 || k == n {
        return Ok(0.0);
    }
    let (n, k) = (n as f64, k as f64);
    Ok(libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0))
}

/// Standard normal distribution function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * libm::exp(-0.5 * z * z)
}

/// Inverse of [`norm_cdf`]: a rational starting point refined by a Halley step.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("norm_quantile requires 0 < p < 1"));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log1p(-p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement; the error term uses the upper tail when x > 0 so
    // that p close to 1 keeps its relative accuracy.
    let e = if x > 0.0 {
        (1.0 - p) - 0.5 * libm::erfc(x / SQRT_2)
    } else {
        norm_cdf(x) - p
    };
    let u = e / norm_pdf(x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Survival function of the chi-square distribution with one degree of freedom.
pub fn chisq1_sf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain("chisq1_sf requires x >= 0"));
    }
    Ok(libm::erfc(libm::sqrt(0.5 * x)))
}

pub fn expit(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + libm::exp(-u))
    } else {
        let e = libm::exp(u);
        e / (1.0 + e)
    }
}

pub fn logit(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain("logit requires 0 < q < 1"));
    }
    Ok(libm::log(q) - libm::log1p(-q))
}

/// `ln expit(u)` without overflow.
pub(crate) fn log_expit(u: f64) -> f64 {
    if u >= 0.0 {
        -libm::log1p(libm::exp(-u))
    } else {
        u - libm::log1p(libm::exp(u))
    }
}

/// Two-sided Wald interval and test for an estimate with variance `var`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wald {
    pub se: f64,
    pub ci: (f64, f64),
    pub p_value: f64,
    /// Whether the interval was clipped to `[-1, 1]`.
    pub truncated: bool,
}

/// Wald interval truncated to `[-1, 1]`; a zero standard error gives `p = 1`
/// for a zero estimate and `p = 0` otherwise.
pub fn wald(estimate: f64, var: f64, alpha: f64) -> Result<Wald> {
    if !(var >= 0.0) || !var.is_finite() {
        return Err(Error::NumericalDegeneracy("variance is negative or not finite"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("alpha must lie in (0, 1)"));
    }
    let se = libm::sqrt(var);
    let half = norm_quantile(1.0 - 0.5 * alpha)? * se;
    let (lo, hi) = (estimate - half, estimate + half);
    let truncated = lo < -1.0 || hi > 1.0;
    let p_value = if se > 0.0 {
        chisq1_sf((estimate / se) * (estimate / se))?
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(Wald { se, ci: (lo.max(-1.0), hi.min(1.0)), p_value, truncated })
}

/// Dense symmetric matrix stored in full row-major form.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix needs dim >= 1");
        SymMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        let mut m = Self::zeros(dim);
        m.data.iter_mut().for_each(|v| *v = value);
        m
    }

    /// Builds from rows, rejecting non-square or asymmetric input.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Domain("SymMatrix rows must form a non-empty square"));
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let (a, b) = (rows[i][j], rows[j][i]);
                let scale = a.abs().max(b.abs()).max(1.0);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::Domain("SymMatrix input is not symmetric"));
                }
                m.data[i * dim + j] = 0.5 * (a + b);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    /// Adds `scale * v vᵀ`.
    pub fn add_outer(&mut self, v: &[f64], scale: f64) {
        let d = self.dim;
        for i in 0..d {
            let s = scale * v[i];
            for j in 0..d {
                self.data[i * d + j] += s * v[j];
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| self.data[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `gᵀ M g`.
    pub fn quad_form(&self, g: &[f64]) -> f64 {
        self.mul_vec(g).iter().zip(g).map(|(a, b)| a * b).sum()
    }

    pub fn mul(&self, other: &SymMatrix) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                for j in 0..d {
                    out[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    /// `A B A` for symmetric `A` and `B`; only the upper triangle is computed.
    pub fn sandwich(&self, meat: &SymMatrix) -> SymMatrix {
        let d = self.dim;
        let ab = self.mul(meat);
        let mut out = SymMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += ab[i * d + k] * self.data[k * d + j];
                }
                out.data[i * d + j] = s;
                out.data[j * d + i] = s;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(m: &SymMatrix) -> Result<Self> {
        Self::with_tolerance(m, 0.0)
    }

    /// Fails when a pivot is not above `rel_tol` times the matching diagonal
    /// entry of the input.
    pub fn with_tolerance(m: &SymMatrix, rel_tol: f64) -> Result<Self> {
        let d = m.dim;
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut s = m.get(j, j);
            for k in 0..j {
                s -= l[j * d + k] * l[j * d + k];
            }
            let floor = rel_tol * m.get(j, j).abs();
            if !(s > floor) || !s.is_finite() {
                return Err(Error::Singular { pivot: j });
            }
            let ljj = libm::sqrt(s);
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Cholesky { dim: d, l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = rhs.to_vec();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * d + k] * y[k];
            }
            y[i] = s / self.l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= self.l[k * d + i] * y[k];
            }
            y[i] = s / self.l[i * d + i];
        }
        y
    }

    pub fn inverse(&self) -> SymMatrix {
        let d = self.dim;
        let mut inv = SymMatrix::zeros(d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in j..d {
                inv.data[i * d + j] = col[i];
            }
        }
        for i in 0..d {
            for j in (i + 1)..d {
                inv.data[i * d + j] = inv.data[j * d + i];
            }
        }
        inv
    }

    /// `ln det` of the factored matrix.
    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| 2.0 * libm::log(self.l[i * self.dim + i])).sum()
    }
}

pub fn spd_solve(m: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.dim {
        return Err(Error::Domain("spd_solve: rhs length does not match matrix"));
    }
    Ok(Cholesky::new(m)?.solve(rhs))
}

pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(Cholesky::new(m)?.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Bisection on an erf Taylor series, independent of libm's erfc.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        2.0 / core::f64::consts::PI.sqrt() * sum
    }

    fn quantile_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (-8.0, 8.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let cdf = 0.5 * (1.0 + erf_series(mid / SQRT_2));
            if cdf < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn log_choose_small_values() {
        assert_eq!(log_choose(5, 0).unwrap(), 0.0);
        assert!((log_choose(4, 2).unwrap() - 6f64.ln()).abs() < 1e-12);
        assert!(log_choose(3, 4).is_err());
    }

    #[test]
    fn log_choose_matches_log_sum() {
        let oracle: f64 = (1..=75).map(|i| ((75 + i) as f64).ln() - (i as f64).ln()).sum();
        assert!((log_choose(150, 75).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn log_choose_pascal() {
        for n in 1..=60u64 {
            for k in 1..n {
                let lhs = log_choose(n, k).unwrap().exp();
                let rhs = log_choose(n - 1, k - 1).unwrap().exp() + log_choose(n - 1, k).unwrap().exp();
                assert!((lhs - rhs).abs() <= 1e-9 * rhs, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn normal_quantile_against_series_oracle() {
        assert_eq!(norm_cdf(0.0), 0.5);
        let q = norm_quantile(0.975).unwrap();
        assert!((q - 1.959_964_0).abs() < 1e-7);
        assert!((q - quantile_oracle(0.975)).abs() < 1e-7);
        for p in [0.01, 0.2, 0.6, 0.9] {
            assert!((norm_quantile(p).unwrap() - quantile_oracle(p)).abs() < 1e-7);
        }
        for z in [0.5, 1.0, 2.0] {
            assert!((norm_cdf(-z) + norm_cdf(z) - 1.0).abs() < 1e-15);
        }
        assert!(norm_quantile(0.0).is_err());
        assert!(norm_quantile(1.0).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let mut p = 1e-8;
        while p < 1.0 - 1e-8 {
            let r = (norm_cdf(norm_quantile(p).unwrap()) - p).abs();
            assert!(r < 1e-10, "p={p} residual={r}");
            p = if p < 0.01 { p * 3.0 } else { p + 0.0137 };
        }
        let mut z = -6.0;
        while z <= 6.0 {
            assert!((norm_quantile(norm_cdf(z)).unwrap() - z).abs() < 1e-8, "z={z}");
            z += 0.05;
        }
    }

    #[test]
    fn chisq1_survival() {
        assert_eq!(chisq1_sf(0.0).unwrap(), 1.0);
        let c = norm_quantile(0.975).unwrap().powi(2);
        assert!((chisq1_sf(c).unwrap() - 0.05).abs() < 1e-9);
        assert!((chisq1_sf(3.841_458_8).unwrap() - 0.05).abs() < 1e-6);
        let z: f64 = 1.2;
        assert!((chisq1_sf(z * z).unwrap() - 2.0 * (1.0 - norm_cdf(z))).abs() < 1e-14);
        for a in [0.2, 0.1, 0.05, 0.01] {
            let q = norm_quantile(1.0 - a / 2.0).unwrap();
            assert!((chisq1_sf(q * q).unwrap() - a).abs() < 1e-9);
        }
        assert!(chisq1_sf(-1.0).is_err());
    }

    #[test]
    fn logistic_pair() {
        assert_eq!(expit(0.0), 0.5);
        assert!((logit(0.2).unwrap() - (-1.386_294_4)).abs() < 1e-7);
        assert!((expit(logit(0.07).unwrap()) - 0.07).abs() < 1e-14);
        let tiny = expit(-800.0);
        assert!(tiny == 0.0 || tiny.is_subnormal() || tiny > 0.0);
        assert!(!tiny.is_nan());
        assert_eq!(expit(800.0), 1.0);
        assert!(logit(0.0).is_err() && logit(1.0).is_err());
        for q in [1e-10, 1e-5, 0.3, 0.5, 0.99, 1.0 - 1e-10] {
            assert!((expit(logit(q).unwrap()) - q).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_examples() {
        let id = SymMatrix::identity(3);
        assert_eq!(spd_solve(&id, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let m = SymMatrix::from_rows(&[&[4.0, 1.0], &[1.0, 3.0]]).unwrap();
        let x = spd_solve(&m, &[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14 && (x[1] - 7.0 / 11.0).abs() < 1e-14);
        assert_eq!(spd_solve(&SymMatrix::zeros(2), &[1.0, 1.0]), Err(Error::Singular { pivot: 0 }));
    }

    fn spd_from(b: &[f64], d: usize) -> SymMatrix {
        let mut m = SymMatrix::identity(d);
        for i in 0..d {
            for j in 0..d {
                let v: f64 = (0..d).map(|k| b[k * d + i] * b[k * d + j]).sum();
                m.data[i * d + j] += v;
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn spd_solve_residual(d in 1usize..=6, raw in proptest::collection::vec(-3.0f64..3.0, 36), rhs in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let m = spd_from(&raw[..d * d], d);
            let x = spd_solve(&m, &rhs[..d]).unwrap();
            let mx = m.mul_vec(&x);
            let norm: f64 = rhs[..d].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let res: f64 = mx.iter().zip(&rhs[..d]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!(res <= 1e-9 * norm.max(1.0));
            let inv = spd_inverse(&m).unwrap();
            let prod = m.mul(&inv);
            for i in 0..d { for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((prod[i * d + j] - target).abs() < 1e-9);
            }}
        }
    }
}
