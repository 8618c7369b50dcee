use covert_lab::harness::stats::wilson;
use covert_lab::lspn::*;
use covert_lab::primitives::{domain_tag, trial_rng, BitVector, ChannelSpec, LabRng};
use covert_lab::Error;
use proptest::prelude::*;

const Z: f64 = 1.959963984540054;

fn rng(domain: &str, i: u64) -> LabRng {
    trial_rng(23, domain_tag(domain), i)
}

fn naive_mul(m: &BitMatrix, v: &BitVector) -> BitVector {
    let bits: Vec<u8> = (0..m.rows())
        .map(|i| (0..m.cols()).fold(0, |acc, j| acc ^ (m.get(i, j) & v.get(j))))
        .collect();
    BitVector::from_bits(&bits)
}

// Reference values from tests/oracles/lspn_prke_oracle.py.
#[test]
fn parameter_formulas_match_oracle() {
    let p = LspnParams::with_ell(128, 2, 0.05, 0.05, 8, 2000).unwrap();
    assert!((p.zeta() - 2.0 * 0.45 * 0.45).abs() < 1e-15);
    assert!((p.xor_flip_prob() - 0.284766395).abs() < 1e-12);
    assert!((p.agreement_bias() - 0.17433922005).abs() < 1e-12);
    assert!((p.ell_min() - 1052.8337075161548).abs() < 1e-8);
    assert_eq!(LspnParams::new(128, 2, 0.05, 0.05, 8).unwrap().ell, 1053);
    assert!(LspnParams::with_ell(128, 2, 0.05, 0.05, 8, 1052).is_err());
    assert_eq!(p.channel_uses(), 2000 * 257);
    assert!((p.threshold() - (1000.0 - (8.0f64 * 2000.0).sqrt())).abs() < 1e-12);
}

#[test]
fn rejects_bad_shapes() {
    assert!(LspnParams::new(0, 0, 0.1, 0.1, 4).is_err());
    assert!(LspnParams::new(8, 9, 0.1, 0.1, 4).is_err());
    assert!(LspnParams::new(8, 2, 0.5, 0.1, 4).is_err());
    assert!(LspnParams::new(8, 2, 0.1, 0.1, 0).is_err());
    assert!(PublicMatrix::new(BitMatrix::zeros(3, 4)).is_err());
}

#[test]
fn noiseless_iterations_always_agree() {
    let params = LspnParams::new(48, 3, 0.0, 0.0, 1).unwrap();
    let c = PublicMatrix::random(48, &mut rng("c", 0));
    let mut r = rng("clean", 0);
    for _ in 0..500 {
        let m = round_messages(&c, &params, &mut r).unwrap();
        let (ka, kb) = derive_bits(&m.secrets, &m.a, &m.b).unwrap();
        assert_eq!(ka, kb);
        assert_eq!(m.secrets.s.len(), 3);
    }
}

#[test]
fn iteration_flip_rate_matches_piling_up() {
    let params = LspnParams::with_ell(64, 2, 0.05, 0.05, 8, 2000).unwrap();
    let c = PublicMatrix::random(64, &mut rng("c", 1));
    let mut r = rng("flip", 0);
    let trials = 20_000u64;
    let mut flips = 0;
    for _ in 0..trials {
        let m = round_messages(&c, &params, &mut r).unwrap();
        let mut a = m.a.clone();
        let mut b = m.b.clone();
        covert_lab::primitives::flip_packed(&mut a, params.p, &mut r);
        covert_lab::primitives::flip_packed(&mut b, params.p, &mut r);
        let (ka, kb) = derive_bits(&m.secrets, &a, &b).unwrap();
        flips += (ka != kb) as u64;
    }
    let ci = wilson(flips, trials, Z);
    let want = params.xor_flip_prob();
    assert!(ci.lo <= want && want <= ci.hi, "{ci:?} vs {want}");
}

#[test]
fn final_decision_threshold() {
    // ell = 16, lambda = 1: threshold 8 - 4 = 4
    let k_b = BitVector::zeros(16);
    let mut t = BitVector::zeros(16);
    for i in 0..4 {
        t.set(i, 1);
    }
    assert_eq!(final_decision(&t, &k_b, 1).unwrap(), 0);
    t.set(4, 1);
    assert_eq!(final_decision(&t, &k_b, 1).unwrap(), 1);
    assert!(final_decision(&BitVector::zeros(15), &k_b, 1).is_err());
}

#[test]
fn sessions_agree_at_small_parameters() {
    let params = LspnParams::new(32, 1, 0.02, 0.02, 4).unwrap();
    let spec = ChannelSpec::constant(0.02, params.channel_uses()).unwrap();
    let sessions = 300u64;
    let mut failed = 0;
    let mut ones = 0;
    for i in 0..sessions {
        let s = run_protocol_with(&params, &spec, false, &mut rng("session", i)).unwrap();
        failed += !s.agreed() as u64;
        ones += s.kappa_a as u64;
        assert_eq!(s.k_a.len(), params.ell);
        assert_eq!(s.distance, covert_lab::primitives::hamming_distance(&s.t_received, &s.k_b).unwrap());
        assert!(s.sketches.is_none());
    }
    // Hoeffding: each kappa fails with probability at most e^(-2 lambda)
    let ci = wilson(failed, sessions, Z);
    assert!(ci.lo <= (-8.0f64).exp(), "{ci:?}");
    let ci = wilson(ones, sessions, Z);
    assert!(ci.lo <= 0.5 && 0.5 <= ci.hi);
}

#[test]
fn retained_sketches_have_sketch_shape() {
    let params = LspnParams::new(16, 1, 0.02, 0.02, 2).unwrap();
    let spec = ChannelSpec::constant(0.02, params.channel_uses()).unwrap();
    let s = run_protocol(&params, &spec, &mut rng("keep", 0)).unwrap();
    let sk = s.sketches.unwrap();
    assert_eq!(sk.len(), params.ell);
    assert!(sk.iter().all(|p| p.a.len() == 16 && p.b_received.len() == 16));
}

#[test]
fn channel_must_match_parameters() {
    let params = LspnParams::new(16, 1, 0.02, 0.02, 2).unwrap();
    let short = ChannelSpec::constant(0.02, params.channel_uses() - 1).unwrap();
    assert!(matches!(run_protocol(&params, &short, &mut rng("short", 0)), Err(Error::ChannelExhausted { .. })));
    let wrong = ChannelSpec::constant(0.03, params.channel_uses()).unwrap();
    assert!(run_protocol(&params, &wrong, &mut rng("wrong", 0)).is_err());
}

#[test]
fn sampler_bit_is_balanced() {
    let params = LspnParams::new(32, 2, 0.05, 0.05, 2).unwrap();
    let s = IterationSampler::new(params, &mut rng("sampler", 0));
    let mut r = rng("sampler", 1);
    let n = 10_000u64;
    let ones: u64 = (0..n).map(|_| s.sample(&mut r).unwrap().2 as u64).sum();
    let ci = wilson(ones, n, Z);
    assert!(ci.lo <= 0.5 && 0.5 <= ci.hi, "{ci:?}");
}

proptest! {
    #[test]
    fn packed_products_match_naive(rows in 1usize..90, cols in 1usize..90, seed in any::<u64>()) {
        let mut r = trial_rng(seed, 0, 0);
        let m = BitMatrix::random(rows, cols, &mut r);
        let v = BitVector::random(cols, &mut r);
        prop_assert_eq!(m.mul_vec(&v).unwrap(), naive_mul(&m, &v));
        let u = BitVector::random(rows, &mut r);
        prop_assert_eq!(m.vec_mul(&u).unwrap(), naive_mul(&m.transpose(), &u));
        prop_assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn sparse_products_match_dense(n in 1usize..100, k in 0usize..8, seed in any::<u64>()) {
        let mut r = trial_rng(seed, 1, 0);
        let c = PublicMatrix::random(n, &mut r);
        let k = k.min(n);
        let s = covert_lab::primitives::sample_sparse(n, k, &mut r).unwrap();
        prop_assert_eq!(c.apply(&s.support()), c.c.mul_vec(&s).unwrap());
        prop_assert_eq!(c.apply_left(&s.support()), c.c.vec_mul(&s).unwrap());
    }

    #[test]
    fn piling_up_matches_enumeration(probs in prop::collection::vec(0.0f64..1.0, 0..12)) {
        let b = piling_up_bias(&probs);
        prop_assert!((b - piling_up_brute_force(&probs).unwrap()).abs() < 1e-12);
    }
}
