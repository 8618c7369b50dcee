use std::collections::HashMap;

use covert_lab::harness::stats::wilson;
use covert_lab::primitives::*;
use proptest::prelude::*;

fn rng(domain: &str, i: u64) -> LabRng {
    trial_rng(11, domain_tag(domain), i)
}

#[test]
fn bsc_flip_rate_matches_crossover() {
    let spec = ChannelSpec::constant(0.2, 10_000).unwrap();
    let uses = bsc_transmit(&BitVector::zeros(10_000), &spec, &mut rng("bsc", 0)).unwrap();
    let flips = uses.iter().filter(|u| u.flipped).count() as u64;
    assert_eq!(received_bits(&uses).weight() as u64, flips);
    let ci = wilson(flips, 10_000, 1.959963984540054);
    assert!(ci.lo <= 0.2 && 0.2 <= ci.hi, "{ci:?}");
    assert!((flips as f64 / 1e4 - 0.2).abs() <= 0.02);
}

#[test]
fn schedule_follows_per_use_crossovers() {
    let spec = ChannelSpec::schedule(vec![0.0, 0.3, 0.0], 0.3).unwrap();
    let mut r = rng("schedule", 0);
    let mut flips_mid = 0;
    for _ in 0..2000 {
        let uses = bsc_transmit(&BitVector::parse("111").unwrap(), &spec, &mut r).unwrap();
        assert!(!uses[0].flipped && !uses[2].flipped);
        flips_mid += uses[1].flipped as u64;
    }
    let ci = wilson(flips_mid, 2000, 3.0);
    assert!(ci.lo <= 0.3 && 0.3 <= ci.hi);
    assert!(ChannelSpec::schedule(vec![0.1, 0.4], 0.3).is_err());
}

// Chi-square over the 28 supports of weight-2 vectors in dimension 8;
// 55.476 is the 0.999 quantile with 27 degrees of freedom (scipy).
#[test]
fn sparse_supports_are_uniform() {
    let mut r = rng("sparse", 0);
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    let draws = 100_000u64;
    for _ in 0..draws {
        let v = sample_sparse(8, 2, &mut r).unwrap();
        assert_eq!(v.weight(), 2);
        *counts.entry(v.support()).or_default() += 1;
    }
    assert_eq!(counts.len(), 28);
    let expect = draws as f64 / 28.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    assert!(chi2 < 55.47602020574521, "chi2 = {chi2}");
}

#[test]
fn sparse_rejects_weight_above_dimension() {
    assert!(sample_sparse(4, 5, &mut rng("sparse", 1)).is_err());
}

// For x != y, the pair (ext(s,x), ext(s,y)) over all 2^(w+1) seeds hits
// each of the four patterns exactly a quarter of the time.
#[test]
fn extractor_is_pairwise_independent_exhaustively() {
    let w = 6;
    let n = 1u64 << (w + 1);
    for x in 0..(1u64 << w) {
        for y in (x + 1)..(1u64 << w) {
            let mut hits = [0u64; 4];
            for idx in 0..n {
                let s = ExtractorSeed::from_index(idx, w).unwrap();
                hits[(ext_canonical(&s, x) * 2 + ext_canonical(&s, y)) as usize] += 1;
            }
            assert_eq!(hits, [n / 4; 4], "x={x} y={y}");
        }
    }
}

#[test]
fn mean_seed_bias_respects_lhl_bound() {
    // Flat sources of 2^k points at w = 10 plus a skewed source.
    let w = 10;
    for k in 1..=6u32 {
        let pts = 1u64 << k;
        let src: Vec<(u64, f64)> = (0..pts).map(|i| (i * 7 + 3, 1.0 / pts as f64)).collect();
        let bias = mean_seed_bias(&src, w).unwrap();
        assert!(bias <= lhl_epsilon(k as f64) + 1e-12, "k={k}: {bias}");
    }
    let skew = [(1u64, 0.5), (2, 0.25), (4, 0.125), (8, 0.125)];
    let probs: Vec<f64> = skew.iter().map(|s| s.1).collect();
    let bias = mean_seed_bias(&skew, w).unwrap();
    assert!(bias <= lhl_epsilon(min_entropy(&probs)) + 1e-12);
}

// Exact value: a point mass has seed bias 1/2 for every seed.
#[test]
fn point_mass_bias_is_half() {
    assert!((mean_seed_bias(&[(5, 1.0)], 8).unwrap() - 0.5).abs() < 1e-15);
}

fn bits(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, 0..max)
}

proptest! {
    #[test]
    fn xor_is_an_involution(a in bits(300), seed in any::<u64>()) {
        let x = BitVector::from_bits(&a);
        let y = BitVector::random(a.len(), &mut trial_rng(seed, 0, 0));
        prop_assert_eq!(x.xor(&y).unwrap().xor(&y).unwrap(), x.clone());
        prop_assert_eq!(hamming_distance(&x, &y).unwrap(), x.xor(&y).unwrap().weight());
    }

    #[test]
    fn dot_is_bilinear(a in bits(200), seed in any::<u64>()) {
        let mut r = trial_rng(seed, 1, 0);
        let x = BitVector::from_bits(&a);
        let y = BitVector::random(a.len(), &mut r);
        let z = BitVector::random(a.len(), &mut r);
        let lhs = x.xor(&y).unwrap().dot(&z).unwrap();
        prop_assert_eq!(lhs, x.dot(&z).unwrap() ^ y.dot(&z).unwrap());
        let naive = a.iter().zip(z.to_bits()).map(|(p, q)| p & q).fold(0, |s, b| s ^ b);
        prop_assert_eq!(x.dot(&z).unwrap(), naive);
    }

    #[test]
    fn display_parse_roundtrip(a in bits(150)) {
        let x = BitVector::from_bits(&a);
        prop_assert_eq!(BitVector::parse(&x.to_string()).unwrap(), x.clone());
        prop_assert_eq!(x.to_bits(), a);
    }

    #[test]
    fn canonical_fits_width(a in bits(400), w in 1u32..=MAX_WIDTH) {
        let x = BitVector::from_bits(&a);
        prop_assert_eq!(canonicalize(&x, w) & !width_mask(w), 0);
    }

    #[test]
    fn ext_is_affine_in_input(x in any::<u64>(), y in any::<u64>(), idx in any::<u64>(), w in 1u32..=20) {
        let m = width_mask(w);
        let s = ExtractorSeed::from_index(idx & ((1 << (w + 1)) - 1), w).unwrap();
        let (x, y) = (x & m, y & m);
        let z = ExtractorSeed::from_index(s.index() & !1, w).unwrap();
        prop_assert_eq!(ext_canonical(&s, x) ^ ext_canonical(&s, y), ext_canonical(&z, x ^ y));
    }

    #[test]
    fn sparse_weight_is_exact(n in 0usize..200, k in 0usize..50, seed in any::<u64>()) {
        let k = k.min(n);
        let v = sample_sparse(n, k, &mut trial_rng(seed, 2, 0)).unwrap();
        prop_assert_eq!((v.len(), v.weight()), (n, k));
    }
}
