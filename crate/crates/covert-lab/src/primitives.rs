//! Bit-level foundations: packed GF(2) vectors, the binary symmetric channel
//! with sender feedback, seeded randomness fan-out, and the inner-product
//! extractor family `ext_(a,b)(x) = <a,x> xor b`.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_crossover, check_prob, Error, Result};

/// The generator used everywhere. Every randomized operation takes one
/// explicitly, so identical seeds give bit-identical runs.
pub type LabRng = ChaCha8Rng;

/// Per-trial generator for `(master, domain, index)`.
///
/// The ChaCha key is the first 32 bytes of
/// `SHA-256("covert-lab/fanout/v1" || master_be || domain_be)` and the stream
/// id is `index`, so each trial owns an independent keystream no matter
/// which worker runs it or in what order.
pub fn trial_rng(master: u64, domain: u64, index: u64) -> LabRng {
    let mut h = Sha256::new();
    h.update(b"covert-lab/fanout/v1");
    h.update(master.to_be_bytes());
    h.update(domain.to_be_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Stable 64-bit tag for a textual domain name, for use with [`trial_rng`].
pub fn domain_tag(name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    u64::from_be_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// A vector over GF(2), 64 bits per word, little-endian bit order within
/// words. Bits past `len` in the last word are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = BitVector {
            words: vec![!0; words_for(len)],
            len,
        };
        v.trim();
        v
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b & 1 == 1 {
                v.words[i / 64] |= 1 << (i % 64);
            }
        }
        v
    }

    /// Takes ownership of packed words; stray high bits are cleared.
    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::LengthMismatch {
                expected: words_for(len),
                got: words.len(),
            });
        }
        let mut v = BitVector { words, len };
        v.trim();
        Ok(v)
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        let bits: Vec<u8> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Malformed(format!("bit string contains {c:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self::from_bits(&bits))
    }

    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let words = (0..words_for(len)).map(|_| rng.next_u64()).collect();
        let mut v = BitVector { words, len };
        v.trim();
        v
    }

    /// Each coordinate independently Bernoulli(p), exactly.
    pub fn bernoulli<R: RngCore + ?Sized>(len: usize, p: f64, rng: &mut R) -> Self {
        let words = (0..words_for(len))
            .map(|_| bernoulli_word(p, rng))
            .collect();
        let mut v = BitVector { words, len };
        v.trim();
        v
    }

    fn trim(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> u8 {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        ((self.words[i / 64] >> (i % 64)) & 1) as u8
    }

    pub fn set(&mut self, i: usize, bit: u8) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if bit & 1 == 1 {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn push(&mut self, bit: u8) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn check_len(&self, other: &BitVector) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                got: other.len,
            });
        }
        Ok(())
    }

    pub fn xor(&self, other: &BitVector) -> Result<BitVector> {
        let mut out = self.clone();
        out.xor_assign(other)?;
        Ok(out)
    }

    pub fn xor_assign(&mut self, other: &BitVector) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVector) -> Result<u8> {
        self.check_len(other)?;
        let acc = self
            .words
            .iter()
            .zip(&other.words)
            .fold(0u64, |acc, (a, b)| acc ^ (a & b));
        Ok((acc.count_ones() & 1) as u8)
    }

    /// Positions of set bits, ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.weight());
        for (wi, &w) in self.words.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                out.push(wi * 64 + w.trailing_zeros() as usize);
                w &= w - 1;
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.iter().collect()
    }

    /// Bits `[start, start+len)` as a new vector.
    pub fn slice(&self, start: usize, len: usize) -> BitVector {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = BitVector::zeros(len);
        for i in 0..len {
            out.set(i, self.get(start + i));
        }
        out
    }

    pub fn extend_from(&mut self, other: &BitVector) {
        for b in other.iter() {
            self.push(b);
        }
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

/// 64 independent exact Bernoulli(p) bits.
///
/// Walks the finite binary expansion of `p` from its last 1-digit up to the
/// most significant digit, combining fresh uniform words with OR on a 1-digit
/// and AND on a 0-digit. The cost is one word per binary digit, so dyadic
/// rates such as 1/16 take four words.
pub fn bernoulli_word<R: RngCore + ?Sized>(p: f64, rng: &mut R) -> u64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return !0;
    }
    let bits = p.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let (mant, exp) = if raw_exp == 0 {
        (bits & ((1 << 52) - 1), -1074i64)
    } else {
        ((bits & ((1 << 52) - 1)) | (1 << 52), raw_exp - 1075)
    };
    // p = mant * 2^exp = odd * 2^-digits
    let tz = mant.trailing_zeros() as i64;
    let odd = mant >> tz;
    let digits = -(exp + tz);
    let mut x = 0u64;
    for i in 0..digits {
        let u = rng.next_u64();
        let d = if i < 64 { (odd >> i) & 1 } else { 0 };
        x = if d == 1 { u | x } else { u & x };
    }
    x
}

/// XORs Bernoulli(p) noise into every coordinate of `v`.
pub fn flip_packed<R: RngCore + ?Sized>(v: &mut BitVector, p: f64, rng: &mut R) {
    for w in v.words.iter_mut() {
        *w ^= bernoulli_word(p, rng);
    }
    v.trim();
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Crossovers {
    Constant { p: f64, uses: usize },
    Schedule(Vec<f64>),
}

/// Planned crossover probability of each channel use, plus the global bound
/// the signaling schemes design against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    crossovers: Crossovers,
    bound: f64,
}

impl ChannelSpec {
    /// `uses` channel uses, all with crossover `p`; the bound is `p` itself.
    pub fn constant(p: f64, uses: usize) -> Result<Self> {
        check_crossover("crossover", p)?;
        Ok(ChannelSpec {
            crossovers: Crossovers::Constant { p, uses },
            bound: p,
        })
    }

    pub fn schedule(crossovers: Vec<f64>, bound: f64) -> Result<Self> {
        check_crossover("bound", bound)?;
        for &c in &crossovers {
            check_crossover("crossover", c)?;
            if c > bound {
                return Err(Error::Invalid(format!(
                    "crossover {c} exceeds channel bound {bound}"
                )));
            }
        }
        Ok(ChannelSpec {
            crossovers: Crossovers::Schedule(crossovers),
            bound,
        })
    }

    pub fn len(&self) -> usize {
        match &self.crossovers {
            Crossovers::Constant { uses, .. } => *uses,
            Crossovers::Schedule(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Crossover for use `t`.
    pub fn crossover(&self, t: usize) -> f64 {
        match &self.crossovers {
            Crossovers::Constant { p, uses } => {
                assert!(t < *uses, "channel use {t} beyond schedule of {uses}");
                *p
            }
            Crossovers::Schedule(v) => v[t],
        }
    }

    /// `Some(p)` when every use has the same crossover.
    pub fn constant_crossover(&self) -> Option<f64> {
        match &self.crossovers {
            Crossovers::Constant { p, .. } => Some(*p),
            Crossovers::Schedule(v) => {
                let first = *v.first()?;
                v.iter().all(|&c| c == first).then_some(first)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelUse {
    pub sent: u8,
    pub received: u8,
    pub flipped: bool,
    pub crossover: f64,
}

/// One channel use at crossover `p`; the returned record is the sender's
/// feedback.
pub fn bsc_use<R: RngCore + ?Sized>(bit: u8, p: f64, rng: &mut R) -> ChannelUse {
    let flipped = p > 0.0 && rng.random_bool(p);
    ChannelUse {
        sent: bit,
        received: bit ^ flipped as u8,
        flipped,
        crossover: p,
    }
}

/// A channel session walking through a [`ChannelSpec`] one use at a time.
#[derive(Clone, Debug)]
pub struct Bsc {
    spec: ChannelSpec,
    cursor: usize,
}

impl Bsc {
    pub fn new(spec: ChannelSpec) -> Self {
        Bsc { spec, cursor: 0 }
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn used(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.spec.len() - self.cursor
    }

    /// Crossover of the next use, known to the sender in advance.
    pub fn next_crossover(&self) -> Option<f64> {
        (self.cursor < self.spec.len()).then(|| self.spec.crossover(self.cursor))
    }

    pub fn send_bit<R: RngCore + ?Sized>(&mut self, bit: u8, rng: &mut R) -> Result<ChannelUse> {
        let p = self.next_crossover().ok_or(Error::ChannelExhausted {
            requested: 1,
            remaining: 0,
        })?;
        self.cursor += 1;
        Ok(bsc_use(bit & 1, p, rng))
    }

    pub fn transmit<R: RngCore + ?Sized>(
        &mut self,
        bits: &BitVector,
        rng: &mut R,
    ) -> Result<Vec<ChannelUse>> {
        if bits.len() > self.remaining() {
            return Err(Error::ChannelExhausted {
                requested: bits.len(),
                remaining: self.remaining(),
            });
        }
        bits.iter().map(|b| self.send_bit(b, rng)).collect()
    }
}

/// Sends `bits` over a fresh session of `spec`.
pub fn bsc_transmit<R: RngCore + ?Sized>(
    bits: &BitVector,
    spec: &ChannelSpec,
    rng: &mut R,
) -> Result<Vec<ChannelUse>> {
    Bsc::new(spec.clone()).transmit(bits, rng)
}

pub fn received_bits(uses: &[ChannelUse]) -> BitVector {
    let bits: Vec<u8> = uses.iter().map(|u| u.received).collect();
    BitVector::from_bits(&bits)
}

pub fn hamming_distance(a: &BitVector, b: &BitVector) -> Result<usize> {
    a.check_len(b)?;
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum())
}

/// Uniform weight-`k` subset of `0..n`, ascending.
pub fn sample_sparse_support<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::Invalid(format!("sparsity {k} exceeds dimension {n}")));
    }
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Uniform vector of Hamming weight exactly `k`.
pub fn sample_sparse<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<BitVector> {
    let mut v = BitVector::zeros(n);
    for i in sample_sparse_support(n, k, rng)? {
        v.set(i, 1);
    }
    Ok(v)
}

/// Largest canonical width; keeps seed indices inside a u64.
pub const MAX_WIDTH: u32 = 62;

/// Seed `(a, b)` of the inner-product family over `w`-bit inputs; the seed
/// length is `d = w + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractorSeed {
    pub a: u64,
    pub b: u8,
    pub width: u32,
}

impl ExtractorSeed {
    pub fn new(a: u64, b: u8, width: u32) -> Result<Self> {
        if width == 0 || width > MAX_WIDTH {
            return Err(Error::Invalid(format!(
                "extractor width {width} outside 1..={MAX_WIDTH}"
            )));
        }
        if width < 64 && a >> width != 0 {
            return Err(Error::Invalid(format!("seed a={a:#x} wider than {width} bits")));
        }
        Ok(ExtractorSeed { a, b: b & 1, width })
    }

    pub fn seed_len(&self) -> u32 {
        self.width + 1
    }

    /// Seed number `index` in `0..2^(w+1)`: low bit is `b`, the rest is `a`.
    pub fn from_index(index: u64, width: u32) -> Result<Self> {
        Self::new(index >> 1, (index & 1) as u8, width)
    }

    pub fn index(&self) -> u64 {
        (self.a << 1) | self.b as u64
    }

    pub fn random<R: Rng + ?Sized>(width: u32, rng: &mut R) -> Result<Self> {
        let a = rng.next_u64() & width_mask(width);
        Self::new(a, rng.random::<u8>() & 1, width)
    }
}

pub fn width_mask(width: u32) -> u64 {
    if width >= 64 {
        !0
    } else {
        (1u64 << width) - 1
    }
}

/// Folds a bit string to `width` bits by XOR of consecutive `width`-bit
/// blocks. Injective only for inputs of at most `width` bits.
pub fn canonicalize(bits: &BitVector, width: u32) -> u64 {
    let mut acc = 0u64;
    let w = width as usize;
    let mut block = 0u64;
    for (i, b) in bits.iter().enumerate() {
        block |= (b as u64) << (i % w);
        if i % w == w - 1 {
            acc ^= block;
            block = 0;
        }
    }
    acc ^ block
}

/// `<a, x> xor b` on a canonical `width`-bit input.
#[inline]
pub fn ext_canonical(seed: &ExtractorSeed, x: u64) -> u8 {
    ((seed.a & x).count_ones() as u8 & 1) ^ seed.b
}

pub fn ext_bit(seed: &ExtractorSeed, input: &BitVector) -> u8 {
    ext_canonical(seed, canonicalize(input, seed.width))
}

/// Extractor-error bound `(1/2) 2^((1-c)/2)` for min-entropy `c`.
pub fn lhl_epsilon(min_entropy: f64) -> f64 {
    0.5 * 2f64.powf((1.0 - min_entropy) / 2.0)
}

pub fn min_entropy(probs: &[f64]) -> f64 {
    let max = probs.iter().cloned().fold(0.0, f64::max);
    -max.log2()
}

/// `E_s |Pr[ext(s,X)=1] - 1/2|` over all `2^(w+1)` seeds, for a source
/// given as `(canonical value, probability)` atoms. The offset bit only
/// flips the sign, so only the `2^w` values of `a` are enumerated.
pub fn mean_seed_bias(source: &[(u64, f64)], width: u32) -> Result<f64> {
    if width > 24 {
        return Err(Error::SeedSpaceTooLarge {
            bits: width + 1,
            cap_bits: 25,
        });
    }
    for &(_, p) in source {
        check_prob("atom probability", p)?;
    }
    let n = 1u64 << width;
    let mut total = 0.0;
    for a in 0..n {
        let p1: f64 = source
            .iter()
            .filter(|(x, _)| (a & x).count_ones() & 1 == 1)
            .map(|(_, p)| p)
            .sum();
        total += (p1 - 0.5).abs();
    }
    Ok(total / n as f64)
}
