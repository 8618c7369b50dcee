//! Interval estimates, exact distances and frequency batteries shared by the
//! experiments and tests. Intervals are 95% Wilson unless stated otherwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::primitives::BitVector;

/// Two-sided 95% standard-normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub fn wilson(successes: u64, trials: u64, z: f64) -> Interval {
    if trials == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // pin the endpoints exactly at the boundary counts
    Interval {
        lo: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
        hi: if successes == trials { 1.0 } else { (center + half).min(1.0) },
    }
}

/// Count of successes out of trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        Proportion { successes, trials }
    }

    pub fn estimate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn wilson95(&self) -> Interval {
        wilson(self.successes, self.trials, Z95)
    }

    pub fn add(&mut self, success: bool) {
        self.trials += 1;
        self.successes += success as u64;
    }

    pub fn merge(&mut self, other: Proportion) {
        self.trials += other.trials;
        self.successes += other.successes;
    }
}

/// Difference of two independent proportions with Newcombe's hybrid Wilson
/// interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Difference {
    pub diff: f64,
    pub ci: Interval,
}

pub fn newcombe(a: Proportion, b: Proportion) -> Difference {
    let (pa, pb) = (a.estimate(), b.estimate());
    let (la, lb) = (a.wilson95(), b.wilson95());
    let d = pa - pb;
    let lo = d - ((pa - la.lo).powi(2) + (lb.hi - pb).powi(2)).sqrt();
    let hi = d + ((la.hi - pa).powi(2) + (pb - lb.lo).powi(2)).sqrt();
    Difference {
        diff: d,
        ci: Interval { lo, hi },
    }
}

/// `|Pr_a[stat] - Pr_b[stat]|` with the paired interval of the difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Advantage {
    pub advantage: f64,
    pub ci: Interval,
    pub a: Proportion,
    pub b: Proportion,
}

impl Advantage {
    pub fn from_counts(a: Proportion, b: Proportion) -> Self {
        let d = newcombe(a, b);
        Advantage {
            advantage: d.diff.abs(),
            ci: d.ci,
            a,
            b,
        }
    }

    /// The advantage is no larger than the width of its own 95% interval.
    pub fn within_ci_width(&self) -> bool {
        self.advantage <= self.ci.width()
    }
}

/// Runs `trials` draws of each sampler and compares a 0/1 statistic.
pub fn distinguisher_advantage<A, B, S, T>(
    mut sample_a: A,
    mut sample_b: B,
    stat: S,
    trials: u64,
) -> Advantage
where
    A: FnMut(u64) -> T,
    B: FnMut(u64) -> T,
    S: Fn(&T) -> bool,
{
    let mut pa = Proportion::default();
    let mut pb = Proportion::default();
    for i in 0..trials {
        pa.add(stat(&sample_a(i)));
        pb.add(stat(&sample_b(i)));
    }
    Advantage::from_counts(pa, pb)
}

/// `(1/2) sum |p - q|` over a common explicit support.
pub fn tv_distance_exact<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> Result<f64> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::Invalid("laws have different supports".into()));
    }
    Ok(0.5 * a.values().zip(b.values()).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

/// TV distance between two laws indexed by position.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// TV distance between two laws given as maps; missing keys count as zero.
pub fn tv_distance_sparse<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut total = 0.0;
    for (k, p) in a {
        total += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in b {
        if !a.contains_key(k) {
            total += q.abs();
        }
    }
    0.5 * total
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if p == 0.0 {
        return (k == 0) as u8 as f64;
    }
    if p == 1.0 {
        return (k == n) as u8 as f64;
    }
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// Monobit frequency test: standardized excess of ones.
pub fn monobit_z(bits: &BitVector) -> f64 {
    let n = bits.len() as f64;
    let s = 2.0 * bits.weight() as f64 - n;
    s / n.sqrt()
}

/// Overlapping 2-bit serial test: chi-square on pattern counts with the
/// one-bit counts removed (2 degrees of freedom), returned as a p-value.
pub fn serial_p_value(bits: &BitVector) -> f64 {
    let n = bits.len();
    if n < 4 {
        return 1.0;
    }
    let mut c2 = [0f64; 4];
    let mut c1 = [0f64; 2];
    for i in 0..n {
        let a = bits.get(i) as usize;
        let b = bits.get((i + 1) % n) as usize;
        c2[2 * a + b] += 1.0;
        c1[a] += 1.0;
    }
    let nf = n as f64;
    let psi2 = 4.0 / nf * c2.iter().map(|c| c * c).sum::<f64>() - nf;
    let psi1 = 2.0 / nf * c1.iter().map(|c| c * c).sum::<f64>() - nf;
    let stat = (psi2 - psi1).max(0.0);
    let chi = ChiSquared::new(2.0).expect("valid dof");
    1.0 - chi.cdf(stat)
}

/// Wald-Wolfowitz runs test as a standard score.
pub fn runs_z(bits: &BitVector) -> f64 {
    let n = bits.len() as f64;
    if bits.len() < 2 {
        return 0.0;
    }
    let ones = bits.weight() as f64;
    let zeros = n - ones;
    if ones == 0.0 || zeros == 0.0 {
        return f64::INFINITY;
    }
    let mut runs = 1.0;
    for i in 1..bits.len() {
        if bits.get(i) != bits.get(i - 1) {
            runs += 1.0;
        }
    }
    let mu = 2.0 * ones * zeros / n + 1.0;
    let var = (mu - 1.0) * (mu - 2.0) / (n - 1.0);
    (runs - mu) / var.sqrt()
}

/// Monobit, serial and runs tests at two-sided level `alpha` each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryResult {
    pub monobit_z: f64,
    pub serial_p: f64,
    pub runs_z: f64,
    pub passed: bool,
}

pub fn frequency_battery(bits: &BitVector, alpha: f64) -> BatteryResult {
    let zcrit = normal_quantile(1.0 - alpha / 2.0);
    let m = monobit_z(bits);
    let s = serial_p_value(bits);
    let r = runs_z(bits);
    BatteryResult {
        monobit_z: m,
        serial_p: s,
        runs_z: r,
        passed: m.abs() <= zcrit && s >= alpha && r.abs() <= zcrit,
    }
}

pub fn normal_quantile(q: f64) -> f64 {
    use statrs::distribution::Normal;
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(q)
}

pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_examples() {
        let a: BTreeMap<u8, f64> = [(0, 0.5), (1, 0.5)].into();
        let b: BTreeMap<u8, f64> = [(0, 0.75), (1, 0.25)].into();
        assert_eq!(tv_distance_exact(&a, &a).unwrap(), 0.0);
        assert!((tv_distance_exact(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        let c: BTreeMap<u8, f64> = [(0, 1.0), (1, 0.0)].into();
        let d: BTreeMap<u8, f64> = [(0, 0.0), (1, 1.0)].into();
        assert_eq!(tv_distance_exact(&c, &d).unwrap(), 1.0);
        let e: BTreeMap<u8, f64> = [(0, 1.0)].into();
        assert!(tv_distance_exact(&a, &e).is_err());
    }

    #[test]
    fn wilson_brackets_estimate() {
        let ci = wilson(20, 100, Z95);
        assert!(ci.lo < 0.2 && 0.2 < ci.hi);
        // statsmodels proportion_confint(20, 100, method="wilson")
        assert!((ci.lo - 0.133_367).abs() < 1e-5);
        assert!((ci.hi - 0.288_829).abs() < 1e-5);
        let zero = wilson(0, 50, Z95);
        assert_eq!(zero.lo, 0.0);
    }

    #[test]
    fn identical_samplers_have_small_advantage() {
        let a = Proportion::new(500, 1000);
        let adv = Advantage::from_counts(a, a);
        assert_eq!(adv.advantage, 0.0);
        assert!(adv.within_ci_width());
        let far = Advantage::from_counts(Proportion::new(1000, 1000), Proportion::new(0, 1000));
        assert_eq!(far.advantage, 1.0);
        assert!(!far.within_ci_width());
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        let s: f64 = (0..=40).map(|k| binomial_pmf(40, k, 0.3)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn battery_rejects_constant_stream() {
        let bits = BitVector::zeros(10_000);
        assert!(!frequency_battery(&bits, 0.01).passed);
        let alt = BitVector::from_bits(&(0..10_000).map(|i| (i % 2) as u8).collect::<Vec<_>>());
        assert!(!frequency_battery(&alt, 0.01).passed);
    }
}
