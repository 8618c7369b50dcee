//! Distinguishers: the two decoding-stability tests against public
//! pseudorandom codes, and the two-block low-bi-degree Fourier score
//! against non-interactive correlated-bit protocols.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_crossover, Error, Result};
use crate::harness::stats::{wilson, Interval, Proportion, Z95};
use crate::lspn::{IterationSampler, LspnParams};
use crate::primitives::{flip_packed, BitVector};

/// Default cap on `|L_d|`.
pub const DEFAULT_INDEX_CAP: u64 = 1_000_000;
/// Constant `C` in `m = C |L_d| / delta^4`.
pub const DEFAULT_SAMPLE_CONSTANT: f64 = 16.0;

// ---------------------------------------------------------------------------
// public pseudorandom codes

/// A two-message code over `{0,1}^n` with a public decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrcScheme {
    /// `n = 1`, `D_b` the point mass at `b`, decoder the identity.
    Identity,
    /// `D_b` the point mass at `b^n`, majority decoder.
    Repetition { n: usize },
    /// `D_0 = D_1` uniform, majority decoder.
    Uniform { n: usize },
}

impl PrcScheme {
    pub fn n(&self) -> usize {
        match *self {
            PrcScheme::Identity => 1,
            PrcScheme::Repetition { n } | PrcScheme::Uniform { n } => n,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            PrcScheme::Identity => "identity".into(),
            PrcScheme::Repetition { n } => format!("repetition-{n}"),
            PrcScheme::Uniform { n } => format!("uniform-{n}"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, b: u8, rng: &mut R) -> BitVector {
        match *self {
            PrcScheme::Identity => BitVector::from_bits(&[b & 1]),
            PrcScheme::Repetition { n } => {
                if b & 1 == 1 {
                    BitVector::ones(n)
                } else {
                    BitVector::zeros(n)
                }
            }
            PrcScheme::Uniform { n } => BitVector::random(n, rng),
        }
    }

    /// A draw from `(D_0 + D_1) / 2`.
    pub fn sample_average<R: Rng + ?Sized>(&self, rng: &mut R) -> BitVector {
        let b = rng.random::<u8>() & 1;
        self.sample(b, rng)
    }

    pub fn decode(&self, x: &BitVector) -> u8 {
        match self {
            PrcScheme::Identity => x.get(0),
            _ => majority(x),
        }
    }
}

/// Majority with ties to 0.
pub fn majority(x: &BitVector) -> u8 {
    (2 * x.weight() > x.len()) as u8
}

fn noisy(x: &BitVector, p: f64, rng: &mut (impl Rng + ?Sized)) -> BitVector {
    let mut y = x.clone();
    flip_packed(&mut y, p, rng);
    y
}

/// Empirical `Pr[f(X xor E1) != f(X xor E2)]`.
pub fn prc_test1<F, S, R>(f: F, mut source: S, p: f64, trials: u64, rng: &mut R) -> Result<Proportion>
where
    F: Fn(&BitVector) -> u8,
    S: FnMut(&mut R) -> BitVector,
    R: Rng + ?Sized,
{
    check_crossover("p", p)?;
    let mut out = Proportion::default();
    for _ in 0..trials {
        let x = source(rng);
        let y1 = noisy(&x, p, rng);
        let y2 = noisy(&x, p, rng);
        out.add(f(&y1) != f(&y2));
    }
    Ok(out)
}

/// `E[g(X xor E)]` for `g = (-1)^f`, with its 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedBias {
    pub mean: f64,
    pub ci: Interval,
    /// Draws with `f = 1`.
    pub ones: Proportion,
}

impl SignedBias {
    fn from_ones(ones: Proportion) -> Self {
        let w = ones.wilson95();
        SignedBias {
            mean: 1.0 - 2.0 * ones.estimate(),
            ci: Interval {
                lo: 1.0 - 2.0 * w.hi,
                hi: 1.0 - 2.0 * w.lo,
            },
            ones,
        }
    }
}

pub fn prc_test2<F, S, R>(f: F, mut source: S, p: f64, trials: u64, rng: &mut R) -> Result<SignedBias>
where
    F: Fn(&BitVector) -> u8,
    S: FnMut(&mut R) -> BitVector,
    R: Rng + ?Sized,
{
    check_crossover("p", p)?;
    let mut ones = Proportion::default();
    for _ in 0..trials {
        let x = source(rng);
        ones.add(f(&noisy(&x, p, rng)) == 1);
    }
    Ok(SignedBias::from_ones(ones))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrcReport {
    pub scheme: PrcScheme,
    pub p: f64,
    /// Decoding error `Pr[f(X xor E) != b]` for uniform `b`.
    pub epsilon_hat: f64,
    pub epsilon_ci: Interval,
    pub test1_average: Proportion,
    pub test1_uniform: Proportion,
    pub test2_average: SignedBias,
    pub test2_uniform: SignedBias,
    /// Larger of the two tests' advantages between the average codeword
    /// law and uniform.
    pub advantage: f64,
}

impl PrcReport {
    /// Either the error is at least `p/4 - eps_tol` or a test separates
    /// the codeword law from uniform by at least `adv_tol`.
    pub fn dichotomy_holds(&self, eps_tol: f64, adv_tol: f64) -> bool {
        self.epsilon_hat >= self.p / 4.0 - eps_tol || self.advantage >= adv_tol
    }
}

pub fn prc_bound_check<R: Rng + ?Sized>(scheme: PrcScheme, p: f64, trials: u64, rng: &mut R) -> Result<PrcReport> {
    check_crossover("p", p)?;
    let n = scheme.n();
    let mut errors = Proportion::default();
    for _ in 0..trials {
        let b = rng.random::<u8>() & 1;
        let x = scheme.sample(b, rng);
        errors.add(scheme.decode(&noisy(&x, p, rng)) != b);
    }
    let f = |x: &BitVector| scheme.decode(x);
    let t1a = prc_test1(f, |r: &mut R| scheme.sample_average(r), p, trials, rng)?;
    let t1u = prc_test1(f, |r: &mut R| BitVector::random(n, r), p, trials, rng)?;
    let t2a = prc_test2(f, |r: &mut R| scheme.sample_average(r), p, trials, rng)?;
    let t2u = prc_test2(f, |r: &mut R| BitVector::random(n, r), p, trials, rng)?;
    let advantage = (t1a.estimate() - t1u.estimate())
        .abs()
        .max((t2a.ones.estimate() - t2u.ones.estimate()).abs());
    Ok(PrcReport {
        scheme,
        p,
        epsilon_hat: errors.estimate(),
        epsilon_ci: errors.wilson95(),
        test1_average: t1a,
        test1_uniform: t1u,
        test2_average: t2a,
        test2_uniform: t2u,
        advantage,
    })
}

/// The three shipped schemes.
pub fn shipped_prc_schemes() -> Vec<PrcScheme> {
    vec![
        PrcScheme::Identity,
        PrcScheme::Repetition { n: 101 },
        PrcScheme::Uniform { n: 101 },
    ]
}

// ---------------------------------------------------------------------------
// low-bi-degree Fourier score

fn subsets_up_to(ell: usize, d: usize) -> Vec<u64> {
    fn rec(start: usize, ell: usize, left: usize, mask: u64, out: &mut Vec<u64>) {
        out.push(mask);
        if left == 0 {
            return;
        }
        for i in start..ell {
            rec(i + 1, ell, left - 1, mask | 1 << i, out);
        }
    }
    let mut out = Vec::new();
    rec(0, ell, d, 0, &mut out);
    out.sort_by_key(|m| (m.count_ones(), m.reverse_bits()));
    out
}

fn binomial_sum(ell: usize, d: usize) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for i in 0..=d.min(ell) {
        total += c;
        c = c * (ell - i) as u128 / (i + 1) as u128;
    }
    total
}

/// `|L_d| = (sum_{i<=d} C(ell_A,i)) (sum_{j<=d} C(ell_B,j))`.
pub fn bi_degree_count(ell_a: usize, ell_b: usize, d: usize) -> u128 {
    binomial_sum(ell_a, d) * binomial_sum(ell_b, d)
}

/// All `(S, T)` with `|S|, |T| <= d`, as bit masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiDegreeIndex {
    pub ell_a: usize,
    pub ell_b: usize,
    pub d: usize,
    pub sets_a: Vec<u64>,
    pub sets_b: Vec<u64>,
}

impl BiDegreeIndex {
    pub fn new(ell_a: usize, ell_b: usize, d: usize, cap: u64) -> Result<Self> {
        if ell_a == 0 || ell_b == 0 || ell_a > 64 || ell_b > 64 {
            return Err(Error::Invalid(format!(
                "block lengths must be in 1..=64, got {ell_a} and {ell_b}"
            )));
        }
        let count = bi_degree_count(ell_a, ell_b, d);
        if count > cap as u128 {
            return Err(Error::IndexCap {
                count: count.min(u64::MAX as u128) as u64,
                cap,
            });
        }
        Ok(BiDegreeIndex {
            ell_a,
            ell_b,
            d,
            sets_a: subsets_up_to(ell_a, d),
            sets_b: subsets_up_to(ell_b, d),
        })
    }

    pub fn len(&self) -> usize {
        self.sets_a.len() * self.sets_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(S, T)` of coefficient position `i` (row-major in `S`).
    pub fn pair(&self, i: usize) -> (u64, u64) {
        let nb = self.sets_b.len();
        (self.sets_a[i / nb], self.sets_b[i % nb])
    }
}

fn chi(mask: u64, x: u64) -> i64 {
    if (mask & x).count_ones() & 1 == 0 {
        1
    } else {
        -1
    }
}

/// Largest `2^ell_A * |T-sets|` table the sorted path allocates.
const FAST_TABLE_CAP: usize = 1 << 24;
/// Samples buffered before a sort-and-reduce pass.
const CHUNK: usize = 1 << 22;

enum AccMode {
    /// Samples are packed as `k | x | y`, buffered, radix-sorted by `x`,
    /// and each run of equal `x` is reduced over the `T` sets with
    /// bit-sliced popcounts. Coefficients come from a Walsh-Hadamard
    /// transform over `x` at the end.
    Sorted {
        /// Column-major: `table[t * 2^ell_A + x]`.
        table: Vec<i32>,
        buf: Vec<u64>,
        scratch: Vec<u64>,
        /// Plane indices of each `T`, padded with the all-zero plane 64.
        t_planes: Vec<u8>,
    },
    Direct {
        sums: Vec<i64>,
    },
}

/// Streaming estimator of `c_{S,T} = E[k chi_S(x) chi_T(y)]` over a
/// bi-degree index.
pub struct CoefficientAccumulator {
    index: BiDegreeIndex,
    m: u64,
    mode: AccMode,
}

impl CoefficientAccumulator {
    pub fn new(index: BiDegreeIndex) -> Self {
        let nb = index.sets_b.len();
        let fast = index.ell_a <= 20 && index.ell_a + index.ell_b <= 63 && (nb << index.ell_a) <= FAST_TABLE_CAP;
        let mode = if fast {
            let d = index.d.max(1);
            let mut t_planes = Vec::with_capacity(nb * d);
            for &t in &index.sets_b {
                let mut bits: Vec<u8> = (0..64).filter(|&c| t >> c & 1 == 1).collect();
                bits.resize(d, 64);
                t_planes.extend(bits);
            }
            AccMode::Sorted {
                table: vec![0; nb << index.ell_a],
                buf: Vec::with_capacity(CHUNK),
                scratch: Vec::new(),
                t_planes,
            }
        } else {
            AccMode::Direct {
                sums: vec![0; index.len()],
            }
        };
        CoefficientAccumulator { index, m: 0, mode }
    }

    pub fn samples(&self) -> u64 {
        self.m
    }

    /// Adds one sample; `k` is `+1` or `-1`.
    pub fn push(&mut self, x: u64, y: u64, k: i8) {
        self.m += 1;
        assert!(self.m < i32::MAX as u64, "too many samples for one block");
        let (ell_a, ell_b) = (self.index.ell_a, self.index.ell_b);
        let xm = x & mask_bits(ell_a);
        let ym = y & mask_bits(ell_b);
        match &mut self.mode {
            AccMode::Sorted {
                table,
                buf,
                scratch,
                t_planes,
            } => {
                buf.push(ym | xm << ell_b | ((k < 0) as u64) << 63);
                if buf.len() == CHUNK {
                    reduce_chunk(&self.index, t_planes, table, buf, scratch);
                }
            }
            AccMode::Direct { sums } => {
                let fa: Vec<i64> = self.index.sets_a.iter().map(|&s| chi(s, xm)).collect();
                let fb: Vec<i64> = self.index.sets_b.iter().map(|&t| chi(t, ym)).collect();
                let kk = k as i64;
                let nb = fb.len();
                for (i, &a) in fa.iter().enumerate() {
                    let row = &mut sums[i * nb..(i + 1) * nb];
                    for (s, &b) in row.iter_mut().zip(&fb) {
                        *s += kk * a * b;
                    }
                }
            }
        }
    }

    /// Coefficient estimates, row-major over `(S, T)`.
    pub fn finish(self) -> Vec<f64> {
        let m = self.m.max(1) as f64;
        let index = self.index;
        match self.mode {
            AccMode::Direct { sums } => sums.into_iter().map(|s| s as f64 / m).collect(),
            AccMode::Sorted {
                mut table,
                mut buf,
                mut scratch,
                t_planes,
            } => {
                reduce_chunk(&index, &t_planes, &mut table, &mut buf, &mut scratch);
                let nb = index.sets_b.len();
                let rows = 1usize << index.ell_a;
                let mut out = vec![0.0; index.len()];
                // |partial sums| <= m < 2^31, so the transform stays in i32
                for (t, col) in table.chunks_mut(rows).enumerate() {
                    walsh_hadamard_i32(col);
                    for (si, &s) in index.sets_a.iter().enumerate() {
                        out[si * nb + t] = col[s as usize] as f64 / m;
                    }
                }
                out
            }
        }
    }
}

fn mask_bits(ell: usize) -> u64 {
    if ell >= 64 {
        !0
    } else {
        (1u64 << ell) - 1
    }
}

/// LSD radix sort of `buf` by the `x` field, then one reduction per run.
fn reduce_chunk(
    index: &BiDegreeIndex,
    t_planes: &[u8],
    table: &mut [i32],
    buf: &mut Vec<u64>,
    scratch: &mut Vec<u64>,
) {
    if buf.is_empty() {
        return;
    }
    let (ell_a, ell_b) = (index.ell_a, index.ell_b);
    scratch.resize(buf.len(), 0);
    let mut shift = ell_b;
    let end = ell_b + ell_a;
    while shift < end {
        let bits = 8.min(end - shift);
        let mask = (1u64 << bits) - 1;
        let mut counts = [0usize; 257];
        for &v in buf.iter() {
            counts[((v >> shift) & mask) as usize + 1] += 1;
        }
        for i in 1..257 {
            counts[i] += counts[i - 1];
        }
        for &v in buf.iter() {
            let d = ((v >> shift) & mask) as usize;
            scratch[counts[d]] = v;
            counts[d] += 1;
        }
        std::mem::swap(buf, scratch);
        shift += bits;
    }
    let xmask = mask_bits(ell_a);
    let mut i = 0;
    while i < buf.len() {
        let x = (buf[i] >> ell_b) & xmask;
        let mut j = i + 1;
        while j < buf.len() && j - i < 64 && (buf[j] >> ell_b) & xmask == x {
            j += 1;
        }
        flush_bucket(index, t_planes, table, &buf[i..j], x as usize);
        i = j;
    }
    buf.clear();
}

fn flush_bucket(index: &BiDegreeIndex, t_planes: &[u8], table: &mut [i32], bucket: &[u64], xi: usize) {
    let g = bucket.len();
    let valid = if g == 64 { !0u64 } else { (1u64 << g) - 1 };
    let mut planes = [0u64; 65];
    let mut kplane = 0u64;
    for (i, &v) in bucket.iter().enumerate() {
        kplane |= (v >> 63) << i;
        let mut y = v & mask_bits(index.ell_b);
        while y != 0 {
            planes[y.trailing_zeros() as usize] |= 1 << i;
            y &= y - 1;
        }
    }
    let rows = 1usize << index.ell_a;
    let d = index.d.max(1);
    for (t, idx) in t_planes.chunks_exact(d).enumerate() {
        let mut w = kplane;
        for &c in idx {
            w ^= planes[c as usize];
        }
        let neg = (w & valid).count_ones() as i32;
        table[t * rows + xi] += g as i32 - 2 * neg;
    }
}

fn walsh_hadamard_i32(v: &mut [i32]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// In-place unnormalized Walsh-Hadamard transform; length a power of two.
pub fn walsh_hadamard(v: &mut [i64]) {
    let n = v.len();
    assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Where a batch of samples came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Protocol,
    Null,
}

/// Explicit i.i.d. samples `(x, y, k)` with `k` in `{-1, +1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub ell_a: usize,
    pub ell_b: usize,
    pub source: Source,
    pub samples: Vec<(u64, u64, i8)>,
}

impl SampleBatch {
    pub fn draw<S: PairSampler, R: Rng + ?Sized>(sampler: &mut S, source: Source, m: usize, rng: &mut R) -> Self {
        SampleBatch {
            ell_a: sampler.ell_a(),
            ell_b: sampler.ell_b(),
            source,
            samples: (0..m).map(|_| sampler.sample(rng)).collect(),
        }
    }
}

pub fn batch_coefficients(batch: &SampleBatch, index: &BiDegreeIndex) -> Result<Vec<f64>> {
    if batch.ell_a != index.ell_a || batch.ell_b != index.ell_b {
        return Err(Error::LengthMismatch {
            expected: index.ell_a,
            got: batch.ell_a,
        });
    }
    let mut acc = CoefficientAccumulator::new(index.clone());
    for &(x, y, k) in &batch.samples {
        acc.push(x, y, k);
    }
    Ok(acc.finish())
}

/// `Score = sum_{(S,T) in L_d} c1_{S,T} c2_{S,T}`.
pub fn low_degree_score(batch1: &SampleBatch, batch2: &SampleBatch, d: usize, cap: u64) -> Result<f64> {
    let index = BiDegreeIndex::new(batch1.ell_a, batch1.ell_b, d, cap)?;
    let c1 = batch_coefficients(batch1, &index)?;
    let c2 = batch_coefficients(batch2, &index)?;
    Ok(dot(&c1, &c2))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A non-interactive protocol seen by an eavesdropper: public messages
/// `x`, `y` and Alice's key bit as `+1`/`-1`.
pub trait PairSampler {
    fn ell_a(&self) -> usize;
    fn ell_b(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (u64, u64, i8);
}

/// Uniform `x`, `y`; `k = chi_S(x) chi_T(y)`, flipped with probability
/// `flip`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedParity {
    pub ell_a: usize,
    pub ell_b: usize,
    pub s: u64,
    pub t: u64,
    pub flip: f64,
}

impl PlantedParity {
    /// Planted pair with correlation `delta = 1 - 2 flip`.
    pub fn with_correlation(ell_a: usize, ell_b: usize, s: u64, t: u64, delta: f64) -> Self {
        PlantedParity {
            ell_a,
            ell_b,
            s,
            t,
            flip: (1.0 - delta) / 2.0,
        }
    }
}

impl PairSampler for PlantedParity {
    fn ell_a(&self) -> usize {
        self.ell_a
    }

    fn ell_b(&self) -> usize {
        self.ell_b
    }

    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (u64, u64, i8) {
        let x = rng.next_u64() & mask_bits(self.ell_a);
        let y = rng.next_u64() & mask_bits(self.ell_b);
        let mut k = (chi(self.s, x) * chi(self.t, y)) as i8;
        if rng.random::<f64>() < self.flip {
            k = -k;
        }
        (x, y, k)
    }
}

/// Independent uniform `x`, `y`, `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformNull {
    pub ell_a: usize,
    pub ell_b: usize,
}

impl PairSampler for UniformNull {
    fn ell_a(&self) -> usize {
        self.ell_a
    }

    fn ell_b(&self) -> usize {
        self.ell_b
    }

    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (u64, u64, i8) {
        // one word carries x, y and k when they fit
        if self.ell_a + self.ell_b < 64 {
            let w = rng.next_u64();
            let x = w & mask_bits(self.ell_a);
            let y = (w >> self.ell_a) & mask_bits(self.ell_b);
            let k = if w >> 63 & 1 == 1 { -1 } else { 1 };
            return (x, y, k);
        }
        let x = rng.next_u64() & mask_bits(self.ell_a);
        let y = rng.next_u64() & mask_bits(self.ell_b);
        let k = if rng.random::<bool>() { -1 } else { 1 };
        (x, y, k)
    }
}

/// The messages of `inner` with an independent uniform key: the matched
/// null for `inner`.
#[derive(Clone, Debug)]
pub struct MatchedNull<S>(pub S);

impl<S: PairSampler> PairSampler for MatchedNull<S> {
    fn ell_a(&self) -> usize {
        self.0.ell_a()
    }

    fn ell_b(&self) -> usize {
        self.0.ell_b()
    }

    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (u64, u64, i8) {
        let (x, y, _) = self.0.sample(rng);
        let k = if rng.random::<bool>() { -1 } else { 1 };
        (x, y, k)
    }
}

/// One LSPN iteration: the sketches as sent and Alice's bit.
#[derive(Clone, Debug)]
pub struct LspnIteration(pub IterationSampler);

impl LspnIteration {
    pub fn new<R: Rng + ?Sized>(params: LspnParams, rng: &mut R) -> Result<Self> {
        if params.n > 64 {
            return Err(Error::Invalid(format!(
                "iteration sampler needs n <= 64, got {}",
                params.n
            )));
        }
        Ok(LspnIteration(IterationSampler::new(params, rng)))
    }
}

impl PairSampler for LspnIteration {
    fn ell_a(&self) -> usize {
        self.0.params.n
    }

    fn ell_b(&self) -> usize {
        self.0.params.n
    }

    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (u64, u64, i8) {
        let (a, b, k) = self.0.sample(rng).expect("dimensions fixed at construction");
        let k = if k == 0 { 1 } else { -1 };
        (a.words()[0], b.words()[0], k)
    }
}

/// `m = C |L_d| / delta^4`.
pub fn required_samples(index_size: u64, delta: f64, constant: f64) -> u64 {
    (constant * index_size as f64 / delta.powi(4)).ceil() as u64
}

/// Degree `min { t : rho^(t+1) <= delta^2/4 }` from the stability argument.
pub fn proof_degree(rho: f64, delta: f64) -> usize {
    let target = delta * delta / 4.0;
    let mut t = 0;
    let mut r = rho;
    while r > target && t < 64 {
        r *= rho;
        t += 1;
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub score: f64,
    pub threshold: f64,
    pub verdict: Source,
    pub m: u64,
    pub m_required: u64,
    pub index_size: u64,
    /// Set when `m` is below the requirement: the correlation level the
    /// drawn sample size does support.
    pub achievable_delta: Option<f64>,
}

/// Two blocks of `m` samples each; verdict `protocol` iff
/// `Score >= delta^2 / 4`.
pub fn run_attack<S: PairSampler, R: Rng + ?Sized>(
    sampler: &mut S,
    d: usize,
    delta: f64,
    m: u64,
    rng: &mut R,
) -> Result<AttackReport> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain {
            name: "delta",
            value: delta,
            domain: "(0, 1]",
        });
    }
    let index = BiDegreeIndex::new(sampler.ell_a(), sampler.ell_b(), d, DEFAULT_INDEX_CAP)?;
    let size = index.len() as u64;
    let mut blocks = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut acc = CoefficientAccumulator::new(index.clone());
        for _ in 0..m {
            let (x, y, k) = sampler.sample(rng);
            acc.push(x, y, k);
        }
        blocks.push(acc.finish());
    }
    let score = dot(&blocks[0], &blocks[1]);
    let threshold = delta * delta / 4.0;
    let m_required = required_samples(size, delta, DEFAULT_SAMPLE_CONSTANT);
    let achievable_delta =
        (m < m_required).then(|| (DEFAULT_SAMPLE_CONSTANT * size as f64 / m.max(1) as f64).powf(0.25));
    Ok(AttackReport {
        score,
        threshold,
        verdict: if score >= threshold {
            Source::Protocol
        } else {
            Source::Null
        },
        m,
        m_required,
        index_size: size,
        achievable_delta,
    })
}

/// Wilson interval of a verdict count, for reporting repetition rates.
pub fn verdict_rate(correct: u64, reps: u64) -> (f64, Interval) {
    (correct as f64 / reps.max(1) as f64, wilson(correct, reps, Z95))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::trial_rng;

    #[test]
    fn index_count_closed_form() {
        let idx = BiDegreeIndex::new(16, 16, 2, DEFAULT_INDEX_CAP).unwrap();
        assert_eq!(idx.len(), 137 * 137);
        assert_eq!(bi_degree_count(16, 16, 2), 18_769);
        assert!(matches!(
            BiDegreeIndex::new(64, 64, 4, DEFAULT_INDEX_CAP),
            Err(Error::IndexCap { .. })
        ));
    }

    #[test]
    fn bucketed_matches_direct() {
        let mut rng = trial_rng(2, 2, 2);
        let idx = BiDegreeIndex::new(6, 7, 2, DEFAULT_INDEX_CAP).unwrap();
        let mut fast = CoefficientAccumulator::new(idx.clone());
        let mut slow = CoefficientAccumulator {
            index: idx.clone(),
            m: 0,
            mode: AccMode::Direct {
                sums: vec![0; idx.len()],
            },
        };
        let mut src = PlantedParity::with_correlation(6, 7, 0b11, 0b100, 0.5);
        for _ in 0..5000 {
            let (x, y, k) = src.sample(&mut rng);
            fast.push(x, y, k);
            slow.push(x, y, k);
        }
        let a = fast.finish();
        let b = slow.finish();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn walsh_hadamard_of_delta() {
        let mut v = vec![0i64; 8];
        v[0] = 1;
        walsh_hadamard(&mut v);
        assert!(v.iter().all(|&x| x == 1));
    }

    #[test]
    fn proof_degree_examples() {
        assert_eq!(proof_degree(0.5, 1.0), 1);
        assert_eq!(proof_degree(0.1, 1.0), 0);
    }
}
