//! Key exchange from learning sparse parities with noise, run directly over
//! a binary symmetric channel without feedback.
//!
//! Each of `ell` parallel iterations exchanges the noisy sketches
//! `a = C s + e` and `b^T = r^T C + f^T` for weight-`k` secrets; the parties
//! keep `k_A = b~^T s` and `k_B = r^T a~`. Alice then sends either `k_A`
//! masked by Bernoulli(eta) noise (`kappa_A = 0`) or a uniform string
//! (`kappa_A = 1`), and Bob decides by the distance to `k_B`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_crossover, Error, Result};
use crate::primitives::{flip_packed, hamming_distance, sample_sparse_support, BitVector, ChannelSpec};

/// Dense GF(2) matrix, rows packed 64 bits per word.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitMatrix({}x{})", self.rows, self.cols)
    }
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(rows, cols);
        let tail = cols % 64;
        for i in 0..rows {
            for w in 0..m.stride {
                m.data[i * m.stride + w] = rng.next_u64();
            }
            if tail != 0 {
                m.data[i * m.stride + m.stride - 1] &= (1u64 << tail) - 1;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        assert!(i < self.rows && j < self.cols);
        (self.data[i * self.stride + j / 64] >> (j % 64) & 1) as u8
    }

    pub fn set(&mut self, i: usize, j: usize, bit: u8) {
        assert!(i < self.rows && j < self.cols);
        let w = &mut self.data[i * self.stride + j / 64];
        if bit & 1 == 1 {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    fn row_words(&self, i: usize) -> &[u64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    pub fn row(&self, i: usize) -> BitVector {
        BitVector::from_words(self.row_words(i).to_vec(), self.cols).expect("row width")
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.get(i, j) == 1 {
                    t.set(j, i, 1);
                }
            }
        }
        t
    }

    /// `M v`.
    pub fn mul_vec(&self, v: &BitVector) -> Result<BitVector> {
        if v.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        let bits: Vec<u8> = (0..self.rows)
            .map(|i| {
                let ones: u32 = self
                    .row_words(i)
                    .iter()
                    .zip(v.words())
                    .map(|(a, b)| (a & b).count_ones())
                    .sum();
                (ones & 1) as u8
            })
            .collect();
        Ok(BitVector::from_bits(&bits))
    }

    /// `v^T M`.
    pub fn vec_mul(&self, v: &BitVector) -> Result<BitVector> {
        if v.len() != self.rows {
            return Err(Error::LengthMismatch {
                expected: self.rows,
                got: v.len(),
            });
        }
        Ok(self.xor_rows(&v.support()))
    }

    /// XOR of the listed rows.
    pub fn xor_rows(&self, rows: &[usize]) -> BitVector {
        let mut acc = vec![0u64; self.stride];
        for &i in rows {
            for (a, w) in acc.iter_mut().zip(self.row_words(i)) {
                *a ^= w;
            }
        }
        BitVector::from_words(acc, self.cols).expect("row width")
    }
}

/// The public matrix with its transpose, so both sketches cost `k` row
/// XORs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicMatrix {
    pub c: BitMatrix,
    ct: BitMatrix,
}

impl PublicMatrix {
    pub fn new(c: BitMatrix) -> Result<Self> {
        if c.rows() != c.cols() {
            return Err(Error::Invalid(format!(
                "public matrix must be square, got {}x{}",
                c.rows(),
                c.cols()
            )));
        }
        let ct = c.transpose();
        Ok(PublicMatrix { c, ct })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::new(BitMatrix::random(n, n, rng)).expect("square")
    }

    pub fn n(&self) -> usize {
        self.c.rows()
    }

    /// `C s` for `s` given by its support.
    pub fn apply(&self, support: &[usize]) -> BitVector {
        self.ct.xor_rows(support)
    }

    /// `r^T C` for `r` given by its support.
    pub fn apply_left(&self, support: &[usize]) -> BitVector {
        self.c.xor_rows(support)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LspnParams {
    pub n: usize,
    pub k: usize,
    pub eta: f64,
    pub p: f64,
    pub lambda: usize,
    pub ell: usize,
}

impl LspnParams {
    /// Parameters with the smallest `ell` strictly above
    /// [`ell_min`](Self::ell_min).
    pub fn new(n: usize, k: usize, eta: f64, p: f64, lambda: usize) -> Result<Self> {
        let mut params = LspnParams {
            n,
            k,
            eta,
            p,
            lambda,
            ell: 1,
        };
        params.validate_shape()?;
        params.ell = params.ell_min().floor() as usize + 1;
        Ok(params)
    }

    pub fn with_ell(n: usize, k: usize, eta: f64, p: f64, lambda: usize, ell: usize) -> Result<Self> {
        let params = LspnParams {
            n,
            k,
            eta,
            p,
            lambda,
            ell,
        };
        params.validate_shape()?;
        if (ell as f64) <= params.ell_min() {
            return Err(Error::Invalid(format!(
                "ell = {ell} does not exceed the minimum {:.1}",
                params.ell_min()
            )));
        }
        Ok(params)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.n == 0 || self.k > self.n {
            return Err(Error::Invalid(format!(
                "need 0 <= k <= n and n >= 1, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if self.lambda == 0 {
            return Err(Error::Invalid("lambda must be at least 1".into()));
        }
        check_crossover("eta", self.eta)?;
        check_crossover("p", self.p)
    }

    /// `zeta = 2 tau theta`, the bias of one sketch coordinate after the
    /// sender's noise and the channel, with `tau = 1/2 - eta` and
    /// `theta = 1/2 - p`.
    pub fn zeta(&self) -> f64 {
        2.0 * (0.5 - self.eta) * (0.5 - self.p)
    }

    /// `Pr[k_A,i != k_B,i] = 1/2 - 2^(2k-1) zeta^(2k)`.
    pub fn xor_flip_prob(&self) -> f64 {
        0.5 - 0.5 * (2.0 * self.zeta()).powi(2 * self.k as i32)
    }

    /// Bias of one coordinate of `t~ xor k_B` when `kappa_A = 0`:
    /// `(1/2) (4 tau theta)^(2k+1)`.
    pub fn agreement_bias(&self) -> f64 {
        let x = 4.0 * (0.5 - self.eta) * (0.5 - self.p);
        0.5 * x.powi(2 * self.k as i32 + 1)
    }

    /// `4 lambda / bias^2`: above it the expected distance for
    /// `kappa_A = 0` sits `2 sqrt(lambda ell)` below `ell/2`.
    pub fn ell_min(&self) -> f64 {
        4.0 * self.lambda as f64 / self.agreement_bias().powi(2)
    }

    /// `ell/2 - sqrt(lambda ell)`.
    pub fn threshold(&self) -> f64 {
        self.ell as f64 / 2.0 - (self.lambda as f64 * self.ell as f64).sqrt()
    }

    /// Channel uses of a session: both sketches per iteration, then `t`.
    pub fn channel_uses(&self) -> usize {
        self.ell * (2 * self.n + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundSecrets {
    pub s: Vec<usize>,
    pub e: BitVector,
    pub r: Vec<usize>,
    pub f: BitVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundMessages {
    pub a: BitVector,
    pub b: BitVector,
    pub secrets: RoundSecrets,
}

/// One iteration's sketches.
pub fn round_messages<R: Rng + ?Sized>(
    c: &PublicMatrix,
    params: &LspnParams,
    rng: &mut R,
) -> Result<RoundMessages> {
    if c.n() != params.n {
        return Err(Error::LengthMismatch {
            expected: params.n,
            got: c.n(),
        });
    }
    let s = sample_sparse_support(params.n, params.k, rng)?;
    let r = sample_sparse_support(params.n, params.k, rng)?;
    assert_eq!(s.len(), params.k);
    assert_eq!(r.len(), params.k);
    let e = BitVector::bernoulli(params.n, params.eta, rng);
    let f = BitVector::bernoulli(params.n, params.eta, rng);
    let a = c.apply(&s).xor(&e)?;
    let b = c.apply_left(&r).xor(&f)?;
    Ok(RoundMessages {
        a,
        b,
        secrets: RoundSecrets { s, e, r, f },
    })
}

fn dot_support(v: &BitVector, support: &[usize]) -> u8 {
    support.iter().fold(0, |acc, &i| acc ^ v.get(i))
}

/// `(k_A, k_B) = (b~^T s, r^T a~)`.
pub fn derive_bits(secrets: &RoundSecrets, a_received: &BitVector, b_received: &BitVector) -> Result<(u8, u8)> {
    let n = secrets.e.len();
    for v in [a_received, b_received] {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    Ok((
        dot_support(b_received, &secrets.s),
        dot_support(a_received, &secrets.r),
    ))
}

pub fn final_message<R: Rng + ?Sized>(k_a: &BitVector, kappa_a: u8, eta: f64, rng: &mut R) -> BitVector {
    if kappa_a & 1 == 1 {
        BitVector::random(k_a.len(), rng)
    } else {
        let mut t = k_a.clone();
        flip_packed(&mut t, eta, rng);
        t
    }
}

/// `kappa_B = 1` iff `d(t~, k_B) > ell/2 - sqrt(lambda ell)`.
pub fn final_decision(t_received: &BitVector, k_b: &BitVector, lambda: usize) -> Result<u8> {
    let d = hamming_distance(t_received, k_b)? as f64;
    let ell = k_b.len() as f64;
    Ok((d > ell / 2.0 - (lambda as f64 * ell).sqrt()) as u8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LspnSession {
    pub params: LspnParams,
    pub c: PublicMatrix,
    pub k_a: BitVector,
    pub k_b: BitVector,
    pub kappa_a: u8,
    pub kappa_b: u8,
    pub t: BitVector,
    pub t_received: BitVector,
    /// `d(t~, k_B)`.
    pub distance: usize,
    /// Agreements of `k_A` and `k_B`.
    pub bit_agreements: usize,
    /// Per iteration: sent and received sketches, when retained.
    pub sketches: Option<Vec<SketchPair>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchPair {
    pub a: BitVector,
    pub b: BitVector,
    pub a_received: BitVector,
    pub b_received: BitVector,
}

impl LspnSession {
    pub fn agreed(&self) -> bool {
        self.kappa_a == self.kappa_b
    }
}

/// Full protocol with the sketches retained.
pub fn run_protocol<R: Rng + ?Sized>(params: &LspnParams, channel: &ChannelSpec, rng: &mut R) -> Result<LspnSession> {
    run_protocol_with(params, channel, true, rng)
}

pub fn run_protocol_with<R: Rng + ?Sized>(
    params: &LspnParams,
    channel: &ChannelSpec,
    keep_sketches: bool,
    rng: &mut R,
) -> Result<LspnSession> {
    let p = match channel.constant_crossover() {
        Some(p) if (p - params.p).abs() <= 1e-15 => p,
        _ => {
            return Err(Error::Invalid(format!(
                "channel must have constant crossover p = {}",
                params.p
            )))
        }
    };
    if channel.len() < params.channel_uses() {
        return Err(Error::ChannelExhausted {
            requested: params.channel_uses(),
            remaining: channel.len(),
        });
    }
    let c = PublicMatrix::random(params.n, rng);
    let mut k_a = BitVector::zeros(params.ell);
    let mut k_b = BitVector::zeros(params.ell);
    let mut sketches = keep_sketches.then(|| Vec::with_capacity(params.ell));
    for i in 0..params.ell {
        let m = round_messages(&c, params, rng)?;
        let mut a_rx = m.a.clone();
        flip_packed(&mut a_rx, p, rng);
        let mut b_rx = m.b.clone();
        flip_packed(&mut b_rx, p, rng);
        let (ka, kb) = derive_bits(&m.secrets, &a_rx, &b_rx)?;
        k_a.set(i, ka);
        k_b.set(i, kb);
        if let Some(v) = sketches.as_mut() {
            v.push(SketchPair {
                a: m.a,
                b: m.b,
                a_received: a_rx,
                b_received: b_rx,
            });
        }
    }
    let kappa_a = rng.random::<u8>() & 1;
    let t = final_message(&k_a, kappa_a, params.eta, rng);
    let mut t_received = t.clone();
    flip_packed(&mut t_received, p, rng);
    let kappa_b = final_decision(&t_received, &k_b, params.lambda)?;
    let distance = hamming_distance(&t_received, &k_b)?;
    let bit_agreements = params.ell - hamming_distance(&k_a, &k_b)?;
    Ok(LspnSession {
        params: *params,
        c,
        k_a,
        k_b,
        kappa_a,
        kappa_b,
        t,
        t_received,
        distance,
        bit_agreements,
        sketches,
    })
}

/// One iteration as a non-interactive protocol: the public sketches and
/// Alice's bit `k_A`.
#[derive(Clone, Debug)]
pub struct IterationSampler {
    pub params: LspnParams,
    pub c: PublicMatrix,
}

impl IterationSampler {
    pub fn new<R: Rng + ?Sized>(params: LspnParams, rng: &mut R) -> Self {
        let c = PublicMatrix::random(params.n, rng);
        IterationSampler { params, c }
    }

    /// `(a, b, k_A)` with the sketches as sent.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(BitVector, BitVector, u8)> {
        let m = round_messages(&self.c, &self.params, rng)?;
        let mut b_rx = m.b.clone();
        flip_packed(&mut b_rx, self.params.p, rng);
        let k_a = dot_support(&b_rx, &m.secrets.s);
        Ok((m.a, m.b, k_a))
    }
}

/// Bias `2^(m-1) prod bias_i` of the XOR of independent bits with biases
/// `bias_i = 1/2 - p_i`.
pub fn piling_up_bias(probs: &[f64]) -> f64 {
    if probs.is_empty() {
        return 0.5;
    }
    probs
        .iter()
        .fold(0.5, |acc, &p| 2.0 * acc * (0.5 - p))
}

/// Same bias by enumerating all `2^m` outcomes.
pub fn piling_up_brute_force(probs: &[f64]) -> Result<f64> {
    if probs.len() > 20 {
        return Err(Error::EnumerationCap {
            count: 1u64 << probs.len().min(63),
            cap: 1 << 20,
        });
    }
    let m = probs.len();
    let mut zero = 0.0;
    for code in 0u64..1 << m {
        let mut w = 1.0;
        for (i, &p) in probs.iter().enumerate() {
            w *= if code >> i & 1 == 1 { p } else { 1.0 - p };
        }
        if code.count_ones() % 2 == 0 {
            zero += w;
        }
    }
    Ok(zero - 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::trial_rng;

    #[test]
    fn desk_ell_min() {
        let p = LspnParams::new(256, 3, 0.0625, 0.0625, 8).unwrap();
        assert!(p.ell as f64 > p.ell_min());
        assert!((p.ell_min() - 5_382.505_534).abs() < 1e-5);
        assert_eq!(p.ell, 5383);
    }

    #[test]
    fn noiseless_agrees() {
        let params = LspnParams::new(32, 1, 0.0, 0.0, 4).unwrap();
        let ch = ChannelSpec::constant(0.0, params.channel_uses()).unwrap();
        let mut rng = trial_rng(1, 2, 3);
        for _ in 0..20 {
            let s = run_protocol_with(&params, &ch, false, &mut rng).unwrap();
            assert_eq!(s.k_a, s.k_b);
            assert!(s.agreed());
        }
    }

    #[test]
    fn matrix_products_match_dense() {
        let mut rng = trial_rng(4, 4, 4);
        let c = PublicMatrix::random(70, &mut rng);
        let s = vec![3, 17, 69];
        let mut v = BitVector::zeros(70);
        for &i in &s {
            v.set(i, 1);
        }
        assert_eq!(c.apply(&s), c.c.mul_vec(&v).unwrap());
        assert_eq!(c.apply_left(&s), c.c.vec_mul(&v).unwrap());
    }

    #[test]
    fn piling_up_matches_enumeration() {
        let probs = [0.1, 0.25, 0.4, 0.05, 0.3];
        let a = piling_up_bias(&probs);
        let b = piling_up_brute_force(&probs).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
