//! Two-message key exchange with uniform-looking transcripts.
//!
//! `ToyGroup` is Diffie-Hellman in the quadratic-residue subgroup of a safe
//! prime `q = 2r + 1`. Subgroup elements map bijectively onto `[0, r)`, and
//! a value `v` is sent as `v + j r` for uniform `j < floor(2^ell / r)` with
//! `ell = bits(r) + 16`, which is within `2^-16` of uniform on `ell` bits.
//! `Ideal` sends exactly uniform strings and hashes both messages into the
//! key.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mockmodel::Speaker;
use crate::primitives::BitVector;

/// Safe prime near `2^16`, used by the exhaustive tests.
pub const SMALL_SAFE_PRIME: u64 = 65_543;
/// Safe prime near `2^31`, the default toy group.
pub const DEFAULT_SAFE_PRIME: u64 = 2_147_483_783;

/// Padding bits beyond `bits(r)` in the toy encoding.
pub const ENCODING_SLACK_BITS: u32 = 16;

pub fn mod_pow(base: u64, mut exp: u64, m: u64) -> u64 {
    let m128 = m as u128;
    let mut acc = 1u128 % m128;
    let mut b = base as u128 % m128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m128;
        }
        b = b * b % m128;
        exp >>= 1;
    }
    acc as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyGroup {
    /// Safe prime `q = 2r + 1`.
    pub q: u64,
    /// Key length in bits.
    pub lambda: usize,
    /// Label mixed into the key derivation.
    pub session_label: u64,
}

impl ToyGroup {
    pub fn new(q: u64, lambda: usize, session_label: u64) -> Result<Self> {
        if !(7..1 << 40).contains(&q) || q % 4 != 3 {
            return Err(Error::Invalid(format!(
                "toy group modulus {q} must be a safe prime below 2^40"
            )));
        }
        let r = (q - 1) / 2;
        // Fermat checks catch typos; the shipped moduli are verified primes
        for a in [2u64, 3, 5, 7] {
            if a % q != 0 && (mod_pow(a, q - 1, q) != 1 || (a % r != 0 && mod_pow(a, r - 1, r) != 1)) {
                return Err(Error::Invalid(format!("{q} is not a safe prime")));
            }
        }
        if lambda == 0 || lambda > 256 {
            return Err(Error::Invalid(format!("key length {lambda} outside 1..=256")));
        }
        Ok(ToyGroup {
            q,
            lambda,
            session_label,
        })
    }

    /// Prime order of the subgroup.
    pub fn order(&self) -> u64 {
        (self.q - 1) / 2
    }

    /// Generator of the subgroup of quadratic residues.
    pub fn generator(&self) -> u64 {
        4
    }

    pub fn message_len(&self) -> usize {
        let r = self.order();
        (64 - r.leading_zeros() + ENCODING_SLACK_BITS) as usize
    }

    fn multiplier_range(&self) -> u64 {
        let ell = self.message_len() as u32;
        (1u64 << ell) / self.order()
    }

    pub fn is_residue(&self, x: u64) -> bool {
        mod_pow(x, self.order(), self.q) == 1
    }

    /// Subgroup element to `[0, r)`.
    pub fn element_to_index(&self, h: u64) -> u64 {
        h.min(self.q - h) - 1
    }

    /// Inverse of [`element_to_index`](Self::element_to_index).
    pub fn index_to_element(&self, v: u64) -> u64 {
        let x = v % self.order() + 1;
        if self.is_residue(x) {
            x
        } else {
            self.q - x
        }
    }

    pub fn encode<R: Rng + ?Sized>(&self, h: u64, rng: &mut R) -> BitVector {
        let v = self.element_to_index(h);
        let j = rng.random_range(0..self.multiplier_range());
        bits_of(v + j * self.order(), self.message_len())
    }

    pub fn decode(&self, m: &BitVector) -> Result<u64> {
        check_len(m, self.message_len())?;
        Ok(self.index_to_element(value_of(m) % self.order()))
    }

    /// Exact statistical distance of the encoding of a uniform subgroup
    /// element from uniform `ell`-bit strings.
    pub fn encoding_distance(&self) -> f64 {
        let ell = self.message_len() as u32;
        let used = self.multiplier_range() * self.order();
        ((1u64 << ell) - used) as f64 / (1u64 << ell) as f64
    }

    fn kdf(&self, shared: u64) -> BitVector {
        let mut h = Sha256::new();
        h.update(b"covert-lab/toy-dh/kdf/v1");
        h.update(self.session_label.to_be_bytes());
        h.update(shared.to_be_bytes());
        truncate_digest(&h.finalize(), self.lambda)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealPrke {
    pub message_len: usize,
    pub lambda: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrkeBackend {
    ToyGroup(ToyGroup),
    Ideal(IdealPrke),
}

/// A party's private state after sending its message.
#[derive(Clone, Debug, PartialEq)]
pub struct PrkeSecret {
    pub speaker: Speaker,
    pub message: BitVector,
    pub exponent: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrkeMessages {
    pub m_a: BitVector,
    pub m_b: BitVector,
    pub secret_a: PrkeSecret,
    pub secret_b: PrkeSecret,
}

impl PrkeBackend {
    pub fn ideal(message_len: usize, lambda: usize, seed: u64) -> Self {
        PrkeBackend::Ideal(IdealPrke {
            message_len,
            lambda,
            seed,
        })
    }

    pub fn message_len(&self) -> usize {
        match self {
            PrkeBackend::ToyGroup(g) => g.message_len(),
            PrkeBackend::Ideal(i) => i.message_len,
        }
    }

    pub fn key_len(&self) -> usize {
        match self {
            PrkeBackend::ToyGroup(g) => g.lambda,
            PrkeBackend::Ideal(i) => i.lambda,
        }
    }

    /// Transcript length `T` in bits.
    pub fn transcript_len(&self) -> usize {
        2 * self.message_len()
    }

    /// One party's message; it never depends on the other party's.
    pub fn keygen<R: Rng + ?Sized>(&self, speaker: Speaker, rng: &mut R) -> (BitVector, PrkeSecret) {
        match self {
            PrkeBackend::ToyGroup(g) => {
                let x = rng.random_range(0..g.order());
                let h = mod_pow(g.generator(), x, g.q);
                let m = g.encode(h, rng);
                let s = PrkeSecret {
                    speaker,
                    message: m.clone(),
                    exponent: x,
                };
                (m, s)
            }
            PrkeBackend::Ideal(i) => {
                let m = BitVector::random(i.message_len, rng);
                let s = PrkeSecret {
                    speaker,
                    message: m.clone(),
                    exponent: 0,
                };
                (m, s)
            }
        }
    }

    pub fn derive(&self, own: &PrkeSecret, other: &BitVector) -> Result<BitVector> {
        check_len(other, self.message_len())?;
        match self {
            PrkeBackend::ToyGroup(g) => {
                let h = g.decode(other)?;
                Ok(g.kdf(mod_pow(h, own.exponent, g.q)))
            }
            PrkeBackend::Ideal(i) => {
                let (ma, mb) = match own.speaker {
                    Speaker::A => (&own.message, other),
                    Speaker::B => (other, &own.message),
                };
                let mut h = Sha256::new();
                h.update(b"covert-lab/ideal-prke/v1");
                h.update(i.seed.to_be_bytes());
                h.update(bytes_of(ma));
                h.update(bytes_of(mb));
                Ok(truncate_digest(&h.finalize(), i.lambda))
            }
        }
    }
}

pub fn prke_messages<R: Rng + ?Sized>(backend: &PrkeBackend, rng: &mut R) -> PrkeMessages {
    let (m_a, secret_a) = backend.keygen(Speaker::A, rng);
    let (m_b, secret_b) = backend.keygen(Speaker::B, rng);
    PrkeMessages {
        m_a,
        m_b,
        secret_a,
        secret_b,
    }
}

pub fn prke_derive(backend: &PrkeBackend, own: &PrkeSecret, other: &BitVector) -> Result<BitVector> {
    backend.derive(own, other)
}

fn check_len(m: &BitVector, expected: usize) -> Result<()> {
    if m.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: m.len(),
        });
    }
    Ok(())
}

/// Little-endian bits of `v`.
pub fn bits_of(v: u64, len: usize) -> BitVector {
    let bits: Vec<u8> = (0..len).map(|i| if i < 64 { (v >> i & 1) as u8 } else { 0 }).collect();
    BitVector::from_bits(&bits)
}

pub fn value_of(m: &BitVector) -> u64 {
    m.iter()
        .take(64)
        .enumerate()
        .fold(0u64, |acc, (i, b)| acc | (b as u64) << i)
}

/// Length-prefixed packed bytes of a bit vector.
pub fn bytes_of(v: &BitVector) -> Vec<u8> {
    let mut out = (v.len() as u64).to_be_bytes().to_vec();
    for w in v.words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

fn truncate_digest(d: &[u8], bits: usize) -> BitVector {
    let v: Vec<u8> = (0..bits).map(|i| (d[i / 8] >> (i % 8)) & 1).collect();
    BitVector::from_bits(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::trial_rng;

    #[test]
    fn shipped_moduli_accepted() {
        assert!(ToyGroup::new(SMALL_SAFE_PRIME, 128, 0).is_ok());
        assert!(ToyGroup::new(DEFAULT_SAFE_PRIME, 128, 0).is_ok());
        assert!(ToyGroup::new(65_537, 128, 0).is_err());
    }

    #[test]
    fn index_map_roundtrip() {
        let g = ToyGroup::new(1019, 64, 0).unwrap();
        let mut h = 1;
        for _ in 0..g.order() {
            assert_eq!(g.index_to_element(g.element_to_index(h)), h);
            h = h * g.generator() % g.q;
        }
    }

    #[test]
    fn toy_keys_agree() {
        let b = PrkeBackend::ToyGroup(ToyGroup::new(DEFAULT_SAFE_PRIME, 128, 7).unwrap());
        let mut rng = trial_rng(5, 5, 5);
        for _ in 0..200 {
            let m = prke_messages(&b, &mut rng);
            let ka = b.derive(&m.secret_a, &m.m_b).unwrap();
            let kb = b.derive(&m.secret_b, &m.m_a).unwrap();
            assert_eq!(ka, kb);
            assert_eq!(ka.len(), 128);
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let b = PrkeBackend::ideal(32, 128, 0);
        let mut rng = trial_rng(1, 1, 1);
        let m = prke_messages(&b, &mut rng);
        assert!(b.derive(&m.secret_a, &BitVector::zeros(31)).is_err());
    }
}
