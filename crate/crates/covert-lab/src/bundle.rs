//! The bundle sampler: publish one candidate out of `L` i.i.d. draws so the
//! published sample has exactly the source law while its extractor label
//! carries a masked bit.
//!
//! Two embedding paths share one partition rule. [`embed`] works from plain
//! sample access and chooses an index. [`embed_atoms`] works on an enumerable
//! source by drawing multinomial atom counts, then choosing a class and an
//! atom proportional to its count; conditioned on the counts, candidate
//! positions are exchangeable, so both paths give the published atom the same
//! law.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::registry::ParamsRegistry;
use crate::harness::stats::{wilson, Interval, Z95};
use crate::mockmodel::{MockModel, ResponseLaw};
use crate::primitives::{ext_canonical, lhl_epsilon, ExtractorSeed};

/// Constant in `L = ceil(C * lambda / eps^2)`.
pub const BUNDLE_SIZE_CONSTANT: f64 = 8.0;

/// Default cap on the number of seed bits enumerated by exact mode.
pub const DEFAULT_SEED_CAP_BITS: u32 = 20;

/// Bundle size for security parameter `lambda` and entropy bound `c`.
pub fn bundle_size(lambda: u32, entropy_bound: f64) -> usize {
    let eps = lhl_epsilon(entropy_bound);
    (BUNDLE_SIZE_CONSTANT * lambda as f64 / (eps * eps)).ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleParams {
    /// Serial number from the issuing registry; distinguishes fresh
    /// parameters that happen to share a seed.
    pub id: u64,
    pub seed: ExtractorSeed,
    pub mask: u8,
    pub bundle_size: usize,
    pub entropy_bound: f64,
}

impl BundleParams {
    pub fn new(
        id: u64,
        seed: ExtractorSeed,
        mask: u8,
        bundle_size: usize,
        entropy_bound: f64,
    ) -> Result<Self> {
        if bundle_size == 0 {
            return Err(Error::Invalid("bundle size must be at least 1".into()));
        }
        Ok(BundleParams {
            id,
            seed,
            mask: mask & 1,
            bundle_size,
            entropy_bound,
        })
    }

    /// Uniform seed and mask bit.
    pub fn random<R: Rng + ?Sized>(
        id: u64,
        width: u32,
        bundle_size: usize,
        entropy_bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let seed = ExtractorSeed::random(width, rng)?;
        let mask = rng.random::<u8>() & 1;
        Self::new(id, seed, mask, bundle_size, entropy_bound)
    }

    pub fn label(&self, canonical: u64) -> u8 {
        ext_canonical(&self.seed, canonical)
    }
}

pub fn decode(pp: &BundleParams, canonical: u64) -> u8 {
    pp.label(canonical) ^ pp.mask
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Star,
    Labeled,
}

/// `(|I0|, |I1|, |I*|)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub i0: usize,
    pub i1: usize,
    pub star: usize,
}

impl PartitionSizes {
    pub fn from_counts(i0: usize, i1: usize) -> Self {
        PartitionSizes {
            i0,
            i1,
            star: i0.abs_diff(i1),
        }
    }

    pub fn total(&self) -> usize {
        self.i0 + self.i1
    }

    /// Label of the surplus class, `None` when balanced.
    pub fn majority(&self) -> Option<u8> {
        match self.i0.cmp(&self.i1) {
            std::cmp::Ordering::Greater => Some(0),
            std::cmp::Ordering::Less => Some(1),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Probability that masked bit `beta` is published with the wrong label.
    pub fn error_given_beta(&self, beta: u8) -> f64 {
        match self.majority() {
            Some(m) if m != beta => self.star as f64 / self.total() as f64,
            _ => 0.0,
        }
    }
}

/// Index partition of a bundle: the first `m` indices of each label class
/// and the leftover set `I*`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub i0: Vec<usize>,
    pub i1: Vec<usize>,
    pub star: Vec<usize>,
    pub sizes: PartitionSizes,
}

impl Partition {
    pub fn new(labels: &[u8]) -> Self {
        let all0: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        let all1: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let sizes = PartitionSizes::from_counts(all0.len(), all1.len());
        let m = all0.len().min(all1.len());
        let mut star: Vec<usize> = all0[m..].iter().chain(&all1[m..]).copied().collect();
        star.sort_unstable();
        Partition {
            i0: all0[..m].to_vec(),
            i1: all1[..m].to_vec(),
            star,
            sizes,
        }
    }

    pub fn len(&self) -> usize {
        self.sizes.total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labeled(&self, beta: u8) -> &[usize] {
        if beta == 0 {
            &self.i0
        } else {
            &self.i1
        }
    }

    /// Exact law of the published index for masked bit `beta`.
    pub fn choice_law(&self, beta: u8) -> Vec<(usize, f64)> {
        let l = self.len() as f64;
        let mut out = Vec::with_capacity(self.len());
        let star_mass = self.star.len() as f64 / l;
        for &i in &self.star {
            out.push((i, star_mass / self.star.len() as f64));
        }
        let lab = self.labeled(beta);
        for &i in lab {
            out.push((i, (1.0 - star_mass) / lab.len() as f64));
        }
        out
    }

    pub fn choose<R: Rng + ?Sized>(&self, beta: u8, rng: &mut R) -> (usize, Branch) {
        let l = self.len();
        let lab = self.labeled(beta);
        // one uniform draw in [0, L): the first |I*| values land in I*
        let u = rng.random_range(0..l);
        if u < self.star.len() {
            (self.star[rng.random_range(0..self.star.len())], Branch::Star)
        } else {
            (lab[rng.random_range(0..lab.len())], Branch::Labeled)
        }
    }
}

/// A bundle summarized as `(canonical value, multiplicity)` pairs, sorted by
/// value. Everything `compute_bsc` needs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleCounts {
    pub entries: Vec<(u64, u64)>,
}

impl BundleCounts {
    pub fn from_candidates(candidates: &[u64]) -> Self {
        let mut m = BTreeMap::new();
        for &x in candidates {
            *m.entry(x).or_insert(0u64) += 1;
        }
        BundleCounts {
            entries: m.into_iter().collect(),
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut m = BTreeMap::new();
        for (x, n) in pairs {
            if n > 0 {
                *m.entry(x).or_insert(0u64) += n;
            }
        }
        BundleCounts {
            entries: m.into_iter().collect(),
        }
    }

    pub fn len(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `|I*|` under extractor vector `a`; the offset bit never changes it.
    pub fn star_size(&self, a: u64) -> u64 {
        let signed: i64 = self
            .entries
            .iter()
            .map(|&(x, n)| {
                if (a & x).count_ones() & 1 == 0 {
                    n as i64
                } else {
                    -(n as i64)
                }
            })
            .sum();
        signed.unsigned_abs()
    }

    pub fn sizes(&self, seed: &ExtractorSeed) -> PartitionSizes {
        let mut n = [0usize; 2];
        for &(x, c) in &self.entries {
            n[ext_canonical(seed, x) as usize] += c as usize;
        }
        PartitionSizes::from_counts(n[0], n[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleOutcome<S> {
    pub published: S,
    pub canonical: u64,
    /// Index `J` for the index path; position of the atom for the atom path.
    pub index: usize,
    pub branch: Branch,
    pub decode_correct: bool,
    pub sizes: PartitionSizes,
    pub bundle: BundleCounts,
}

#[allow(clippy::too_many_arguments)]
fn finish<S>(
    pp: &BundleParams,
    b: u8,
    published: S,
    canonical: u64,
    index: usize,
    branch: Branch,
    sizes: PartitionSizes,
    bundle: BundleCounts,
) -> BundleOutcome<S> {
    let decode_correct = decode(pp, canonical) == b & 1;
    debug_assert!(branch == Branch::Star || decode_correct);
    BundleOutcome {
        published,
        canonical,
        index,
        branch,
        decode_correct,
        sizes,
        bundle,
    }
}

/// Embeds bit `b` using only sample access. `sampler` returns a sample and
/// its canonical encoding.
pub fn embed<S, R, F>(pp: &BundleParams, b: u8, mut sampler: F, rng: &mut R) -> Result<BundleOutcome<S>>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<(S, u64)>,
{
    let mut samples = Vec::with_capacity(pp.bundle_size);
    let mut canon = Vec::with_capacity(pp.bundle_size);
    for _ in 0..pp.bundle_size {
        let (s, x) = sampler(rng)?;
        samples.push(s);
        canon.push(x);
    }
    let (j, branch, sizes) = embed_from_bundle(pp, &canon, b, rng);
    let x = canon[j];
    let bundle = BundleCounts::from_candidates(&canon);
    let published = samples.swap_remove(j);
    Ok(finish(pp, b, published, x, j, branch, sizes, bundle))
}

/// Partition and index choice for an already drawn bundle.
pub fn embed_from_bundle<R: Rng + ?Sized>(
    pp: &BundleParams,
    candidates: &[u64],
    b: u8,
    rng: &mut R,
) -> (usize, Branch, PartitionSizes) {
    let labels: Vec<u8> = candidates.iter().map(|&x| pp.label(x)).collect();
    let part = Partition::new(&labels);
    let (j, branch) = part.choose((b ^ pp.mask) & 1, rng);
    (j, branch, part.sizes)
}

/// An enumerable source: canonical encodings with their probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomTable {
    pub canonical: Vec<u64>,
    pub probs: Vec<f64>,
}

impl AtomTable {
    pub fn new(canonical: Vec<u64>, probs: Vec<f64>) -> Result<Self> {
        if canonical.len() != probs.len() || canonical.is_empty() {
            return Err(Error::LengthMismatch {
                expected: canonical.len(),
                got: probs.len(),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < 0.0) {
            return Err(Error::Invalid(format!("atom masses sum to {total}")));
        }
        Ok(AtomTable { canonical, probs })
    }

    /// The response law of `prompt` with each message folded to `width`.
    pub fn from_model(model: &MockModel, prompt: &str, width: u32, cap: usize) -> Result<(Self, ResponseLaw)> {
        let law = ResponseLaw::enumerate(model, prompt, cap)?;
        let canonical = law.atoms.iter().map(|m| model.canonical(m, width)).collect();
        Ok((AtomTable::new(canonical, law.probs.clone())?, law))
    }

    pub fn len(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    /// Multinomial atom counts of `l` i.i.d. draws.
    pub fn sample_counts<R: Rng + ?Sized>(&self, l: usize, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; self.len()];
        let mut left = l as u64;
        let mut mass = 1.0f64;
        for (j, &p) in self.probs.iter().enumerate() {
            if left == 0 {
                break;
            }
            if j + 1 == self.len() || p >= mass {
                counts[j] = left;
                break;
            }
            let q = (p / mass).clamp(0.0, 1.0);
            let n = Binomial::new(left, q).expect("valid binomial").sample(rng);
            counts[j] = n;
            left -= n;
            mass -= p;
        }
        counts
    }
}

/// Exact law of the published atom given atom counts, for masked bit `beta`.
pub fn counts_choice_law(pp: &BundleParams, atoms: &AtomTable, counts: &[u64], beta: u8) -> Vec<f64> {
    let labels: Vec<u8> = atoms.canonical.iter().map(|&x| pp.label(x)).collect();
    let mut n = [0u64; 2];
    for (j, &c) in counts.iter().enumerate() {
        n[labels[j] as usize] += c;
    }
    let sizes = PartitionSizes::from_counts(n[0] as usize, n[1] as usize);
    let l = sizes.total() as f64;
    let mut class_mass = [0.0f64; 2];
    if let Some(maj) = sizes.majority() {
        class_mass[maj as usize] += sizes.star as f64 / l;
    }
    class_mass[beta as usize] += 1.0 - sizes.star as f64 / l;
    counts
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let k = labels[j] as usize;
            if n[k] == 0 {
                0.0
            } else {
                class_mass[k] * c as f64 / n[k] as f64
            }
        })
        .collect()
}

/// Embeds bit `b` into an enumerable source via atom counts. The published
/// value is an atom position in `atoms`.
pub fn embed_atoms<R: Rng + ?Sized>(
    pp: &BundleParams,
    atoms: &AtomTable,
    b: u8,
    rng: &mut R,
) -> BundleOutcome<usize> {
    let counts = atoms.sample_counts(pp.bundle_size, rng);
    embed_atoms_with_counts(pp, atoms, &counts, b, rng)
}

pub fn embed_atoms_with_counts<R: Rng + ?Sized>(
    pp: &BundleParams,
    atoms: &AtomTable,
    counts: &[u64],
    b: u8,
    rng: &mut R,
) -> BundleOutcome<usize> {
    let beta = (b ^ pp.mask) & 1;
    let labels: Vec<u8> = atoms.canonical.iter().map(|&x| pp.label(x)).collect();
    let mut n = [0u64; 2];
    for (j, &c) in counts.iter().enumerate() {
        n[labels[j] as usize] += c;
    }
    let sizes = PartitionSizes::from_counts(n[0] as usize, n[1] as usize);
    let u = rng.random_range(0..sizes.total());
    let (class, branch) = if u < sizes.star {
        (sizes.majority().expect("nonempty star has a majority"), Branch::Star)
    } else {
        (beta, Branch::Labeled)
    };
    let mut k = rng.random_range(0..n[class as usize]);
    let mut pick = 0;
    for (j, &c) in counts.iter().enumerate() {
        if labels[j] != class {
            continue;
        }
        if k < c {
            pick = j;
            break;
        }
        k -= c;
    }
    let bundle = BundleCounts::from_pairs(atoms.canonical.iter().copied().zip(counts.iter().copied()));
    finish(pp, b, pick, atoms.canonical[pick], pick, branch, sizes, bundle)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BscMode {
    /// Exact value; rejects bundles whose effective seed space exceeds
    /// `2^cap_bits`.
    Exact { cap_bits: u32 },
    /// Average over `draws` uniform seeds.
    MonteCarlo { draws: u64 },
}

impl Default for BscMode {
    fn default() -> Self {
        BscMode::Exact {
            cap_bits: DEFAULT_SEED_CAP_BITS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BscEstimate {
    pub p: f64,
    /// Present in Monte-Carlo mode: Wilson interval of per-seed error
    /// indicators.
    pub ci: Option<Interval>,
    /// Seeds actually evaluated (after reduction in exact mode).
    pub seeds_evaluated: u64,
}

/// Crossover `p(B) = E_s |I*(s,B)| / 2L` of a realized bundle.
pub fn compute_bsc<R: Rng + ?Sized>(
    bundle: &BundleCounts,
    width: u32,
    mode: BscMode,
    rng: &mut R,
) -> Result<BscEstimate> {
    match mode {
        BscMode::Exact { cap_bits } => compute_bsc_exact(bundle, cap_bits),
        BscMode::MonteCarlo { draws } => Ok(compute_bsc_monte_carlo(bundle, width, draws, rng)),
    }
}

/// Reference evaluation: every `a` in `0..2^w` (the offset bit leaves `|I*|`
/// unchanged, so it is not enumerated).
pub fn compute_bsc_direct(bundle: &BundleCounts, width: u32, cap_bits: u32) -> Result<f64> {
    if width + 1 > cap_bits {
        return Err(Error::SeedSpaceTooLarge {
            bits: width + 1,
            cap_bits,
        });
    }
    let l = bundle.len() as f64;
    let total: u64 = (0..1u64 << width).map(|a| bundle.star_size(a)).sum();
    Ok(total as f64 / (2.0 * l * (1u64 << width) as f64))
}

/// Exact evaluation on the span of `x_i xor x_0`.
///
/// `|sum_i n_i (-1)^<a,x_i>|` depends on `a` only through the inner products
/// of `a` with a basis of that span, and each pattern of inner products is
/// hit by the same number of seeds, so averaging over `2^rank` patterns is
/// exact.
pub fn compute_bsc_exact(bundle: &BundleCounts, cap_bits: u32) -> Result<BscEstimate> {
    if bundle.is_empty() {
        return Err(Error::Invalid("empty bundle".into()));
    }
    let x0 = bundle.entries[0].0;
    // reduced echelon basis keyed by pivot bit
    let mut basis: Vec<(u32, u64)> = Vec::new();
    for &(x, _) in &bundle.entries {
        let mut v = x ^ x0;
        for &(piv, bv) in &basis {
            if v >> piv & 1 == 1 {
                v ^= bv;
            }
        }
        if v != 0 {
            let piv = 63 - v.leading_zeros();
            for e in basis.iter_mut() {
                if e.1 >> piv & 1 == 1 {
                    e.1 ^= v;
                }
            }
            basis.push((piv, v));
        }
    }
    let rank = basis.len() as u32;
    if rank + 1 > cap_bits {
        return Err(Error::SeedSpaceTooLarge {
            bits: rank + 1,
            cap_bits,
        });
    }
    // coordinates of each x xor x0 in the basis: with distinct pivots and
    // cleared pivot columns, coordinate i is the pivot bit itself
    let coords: Vec<(u64, i64)> = bundle
        .entries
        .iter()
        .map(|&(x, n)| {
            let v = x ^ x0;
            let mut c = 0u64;
            for (i, &(piv, _)) in basis.iter().enumerate() {
                c |= (v >> piv & 1) << i;
            }
            (c, n as i64)
        })
        .collect();
    let patterns = 1u64 << rank;
    let mut total = 0u64;
    for y in 0..patterns {
        let s: i64 = coords
            .iter()
            .map(|&(c, n)| if (c & y).count_ones() & 1 == 0 { n } else { -n })
            .sum();
        total += s.unsigned_abs();
    }
    let l = bundle.len() as f64;
    Ok(BscEstimate {
        p: total as f64 / (2.0 * l * patterns as f64),
        ci: None,
        seeds_evaluated: patterns,
    })
}

pub fn compute_bsc_monte_carlo<R: Rng + ?Sized>(
    bundle: &BundleCounts,
    width: u32,
    draws: u64,
    rng: &mut R,
) -> BscEstimate {
    let l = bundle.len() as f64;
    let mut sum = 0.0;
    let mut hits = 0u64;
    let mask = crate::primitives::width_mask(width);
    for _ in 0..draws {
        let a = rng.next_u64() & mask;
        let ps = bundle.star_size(a) as f64 / (2.0 * l);
        sum += ps;
        hits += (rng.random::<f64>() < ps) as u64;
    }
    BscEstimate {
        p: sum / draws as f64,
        ci: Some(wilson(hits, draws, Z95)),
        seeds_evaluated: draws,
    }
}

/// Exact law of the published atom over `L`-tuples of i.i.d. atoms, index
/// choice and a uniform bit, for fixed parameters. Index-level: this is the
/// reference the atom path is checked against.
pub fn published_law(pp: &BundleParams, atoms: &AtomTable, cap: u64) -> Result<Vec<f64>> {
    let k = atoms.len() as u64;
    let l = pp.bundle_size as u32;
    let count = k.checked_pow(l).unwrap_or(u64::MAX);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let labels: Vec<u8> = atoms.canonical.iter().map(|&x| pp.label(x)).collect();
    let mut law = vec![0.0; atoms.len()];
    let mut tuple = vec![0usize; l as usize];
    for code in 0..count {
        let mut c = code;
        let mut p = 1.0;
        for slot in tuple.iter_mut() {
            *slot = (c % k) as usize;
            c /= k;
            p *= atoms.probs[*slot];
        }
        if p == 0.0 {
            continue;
        }
        let lab: Vec<u8> = tuple.iter().map(|&j| labels[j]).collect();
        let part = Partition::new(&lab);
        for b in 0..2u8 {
            for (i, q) in part.choice_law((b ^ pp.mask) & 1) {
                law[tuple[i]] += 0.5 * p * q;
            }
        }
    }
    Ok(law)
}

/// Exact decoding error over the mask bit and index choice with the seed
/// and bundle fixed. The mask makes `b xor r` uniform, so the value is the
/// same for both payload bits.
pub fn error_given_bundle(bundle: &BundleCounts, seed: &ExtractorSeed) -> f64 {
    let sizes = bundle.sizes(seed);
    0.5 * (sizes.error_given_beta(0) + sizes.error_given_beta(1))
}

/// Result of embedding a bit sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamOutcome {
    pub published: Vec<usize>,
    pub feedback: Vec<bool>,
    pub crossovers: Vec<f64>,
}

/// Embeds `bits[t]` into `sources[t]` with parameters `pps[t]`, consuming
/// each parameter set in `registry`.
pub fn embed_stream<R: Rng + ?Sized>(
    registry: &mut ParamsRegistry,
    pps: &[BundleParams],
    bits: &[u8],
    sources: &[AtomTable],
    mode: BscMode,
    rng: &mut R,
) -> Result<StreamOutcome> {
    if pps.len() != bits.len() || sources.len() != bits.len() {
        return Err(Error::LengthMismatch {
            expected: bits.len(),
            got: pps.len().min(sources.len()),
        });
    }
    let mut out = StreamOutcome {
        published: Vec::with_capacity(bits.len()),
        feedback: Vec::with_capacity(bits.len()),
        crossovers: Vec::with_capacity(bits.len()),
    };
    for ((pp, &b), src) in pps.iter().zip(bits).zip(sources) {
        registry.consume(pp)?;
        let o = embed_atoms(pp, src, b, rng);
        let p = compute_bsc(&o.bundle, pp.seed.width, mode, rng)?.p;
        out.published.push(o.published);
        out.feedback.push(o.decode_correct);
        out.crossovers.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::trial_rng;

    fn pp(a: u64, b: u8, mask: u8, l: usize, w: u32) -> BundleParams {
        BundleParams::new(0, ExtractorSeed::new(a, b, w).unwrap(), mask, l, 1.0).unwrap()
    }

    #[test]
    fn bundle_size_rule() {
        assert_eq!(bundle_size(16, 2.0), 1024);
        assert_eq!(bundle_size(16, 1.0), 512);
        assert_eq!(bundle_size(16, 3.0), 2048);
    }

    #[test]
    fn partition_takes_first_m() {
        let p = Partition::new(&[1, 0, 1, 1, 0, 1]);
        assert_eq!(p.i0, vec![1, 4]);
        assert_eq!(p.i1, vec![0, 2]);
        assert_eq!(p.star, vec![3, 5]);
        assert_eq!(p.sizes, PartitionSizes { i0: 2, i1: 4, star: 2 });
        let law: f64 = p.choice_law(0).iter().map(|e| e.1).sum();
        assert!((law - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_bundle_is_half() {
        let b = BundleCounts::from_candidates(&[5]);
        assert_eq!(compute_bsc_exact(&b, 20).unwrap().p, 0.5);
        assert_eq!(compute_bsc_direct(&b, 4, 20).unwrap(), 0.5);
    }

    #[test]
    fn reduced_matches_direct() {
        let mut rng = trial_rng(3, 3, 3);
        for _ in 0..50 {
            let cands: Vec<u64> = (0..7).map(|_| rng.random_range(0..256u64)).collect();
            let b = BundleCounts::from_candidates(&cands);
            let fast = compute_bsc_exact(&b, 20).unwrap().p;
            let slow = compute_bsc_direct(&b, 8, 20).unwrap();
            assert!((fast - slow).abs() < 1e-15, "{fast} vs {slow}");
        }
    }

    #[test]
    fn direct_mode_cap() {
        let b = BundleCounts::from_candidates(&[1, 2]);
        assert!(matches!(
            compute_bsc_direct(&b, 30, 20),
            Err(Error::SeedSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn point_mass_publishes_the_point() {
        let atoms = AtomTable::new(vec![9], vec![1.0]).unwrap();
        let mut rng = trial_rng(1, 0, 0);
        for mask in 0..2 {
            let p = pp(0b1001, 0, mask, 4, 4);
            let o = embed_atoms(&p, &atoms, 0, &mut rng);
            assert_eq!(o.canonical, 9);
        }
    }

    #[test]
    fn labeled_branch_always_decodes() {
        let mut rng = trial_rng(2, 0, 0);
        let atoms = AtomTable::new(vec![1, 2, 3, 4], vec![0.25; 4]).unwrap();
        for t in 0..2000u64 {
            let p = pp(t % 8, (t % 3 == 0) as u8, (t % 5 == 0) as u8, 7, 3);
            let b = (t % 2) as u8;
            let o = embed_atoms(&p, &atoms, b, &mut rng);
            assert_eq!(o.decode_correct, decode(&p, o.canonical) == b);
            if o.branch == Branch::Labeled {
                assert!(o.decode_correct);
            }
            assert_eq!(o.sizes.total(), 7);
        }
    }
}
