use covert_lab::harness::stats::wilson;
use covert_lab::mockmodel::Speaker;
use covert_lab::primitives::{domain_tag, trial_rng, LabRng};
use covert_lab::prke::*;
use proptest::prelude::*;

fn rng(domain: &str, i: u64) -> LabRng {
    trial_rng(29, domain_tag(domain), i)
}

fn small() -> ToyGroup {
    ToyGroup::new(SMALL_SAFE_PRIME, 128, 7).unwrap()
}

// Reference values from tests/oracles/lspn_prke_oracle.py.
#[test]
fn small_group_encoding_shape() {
    let g = small();
    assert_eq!(g.order(), 32_771);
    assert_eq!(g.message_len(), 32);
    assert!((g.encoding_distance() - 8.381903171539307e-09).abs() < 1e-20);
    assert!(g.encoding_distance() <= 2f64.powi(-16));
    assert!(g.is_residue(g.generator()));
}

#[test]
fn subgroup_index_map_is_a_bijection() {
    let g = small();
    let mut seen = vec![false; g.order() as usize];
    for v in 0..g.order() {
        let h = g.index_to_element(v);
        assert!(g.is_residue(h));
        assert_eq!(g.element_to_index(h), v);
        assert!(!std::mem::replace(&mut seen[v as usize], true));
    }
}

#[test]
fn encode_decode_roundtrip() {
    let g = small();
    let mut r = rng("enc", 0);
    for x in 0..2000u64 {
        let h = mod_pow(g.generator(), x, g.q);
        let m = g.encode(h, &mut r);
        assert_eq!(m.len(), 32);
        assert_eq!(g.decode(&m).unwrap(), h);
    }
}

#[test]
fn rejects_non_safe_moduli() {
    assert!(ToyGroup::new(65_537, 128, 0).is_err());
    assert!(ToyGroup::new(31, 128, 0).is_err());
    assert!(ToyGroup::new(23, 128, 0).is_ok());
    assert!(ToyGroup::new(SMALL_SAFE_PRIME, 0, 0).is_err());
    assert!(ToyGroup::new(DEFAULT_SAFE_PRIME, 256, 0).is_ok());
}

#[test]
fn both_backends_agree() {
    let backends = [
        PrkeBackend::ToyGroup(small()),
        PrkeBackend::ToyGroup(ToyGroup::new(DEFAULT_SAFE_PRIME, 64, 1).unwrap()),
        PrkeBackend::ideal(40, 128, 3),
    ];
    for b in &backends {
        for i in 0..300 {
            let m = prke_messages(b, &mut rng("agree", i));
            let ka = prke_derive(b, &m.secret_a, &m.m_b).unwrap();
            let kb = prke_derive(b, &m.secret_b, &m.m_a).unwrap();
            assert_eq!(ka, kb);
            assert_eq!(ka.len(), b.key_len());
            assert_eq!(m.m_a.len(), b.message_len());
        }
        assert_eq!(b.transcript_len(), 2 * b.message_len());
    }
}

#[test]
fn corrupted_message_changes_the_key() {
    for b in [PrkeBackend::ToyGroup(small()), PrkeBackend::ideal(24, 64, 0)] {
        let m = prke_messages(&b, &mut rng("corrupt", 0));
        let good = prke_derive(&b, &m.secret_a, &m.m_b).unwrap();
        let mut bad = m.m_b.clone();
        bad.flip(0);
        assert_ne!(prke_derive(&b, &m.secret_a, &bad).unwrap(), good);
        assert!(prke_derive(&b, &m.secret_a, &bad.slice(0, 3)).is_err());
    }
}

#[test]
fn message_bits_look_uniform() {
    for b in [PrkeBackend::ToyGroup(small()), PrkeBackend::ideal(32, 64, 5)] {
        let n = 4000u64;
        let mut r = rng("uniform", 0);
        let mut ones = vec![0u64; 32];
        for _ in 0..n {
            let (m, _) = b.keygen(Speaker::A, &mut r);
            for (i, bit) in m.iter().enumerate() {
                ones[i] += bit as u64;
            }
        }
        // Bonferroni over 32 coordinates
        for (i, &c) in ones.iter().enumerate() {
            let ci = wilson(c, n, 3.4);
            assert!(ci.lo <= 0.5 && 0.5 <= ci.hi, "bit {i}: {ci:?}");
        }
    }
}

proptest! {
    #[test]
    fn bits_roundtrip(v in any::<u64>(), len in 64usize..100) {
        prop_assert_eq!(value_of(&bits_of(v, len)), v);
        prop_assert_eq!(bits_of(v, len).len(), len);
    }

    #[test]
    fn mod_pow_matches_repeated_multiplication(base in 0u64..1000, exp in 0u64..40, m in 2u64..5000) {
        let naive = (0..exp).fold(1 % m, |acc, _| acc * (base % m) % m);
        prop_assert_eq!(mod_pow(base, exp, m), naive);
    }
}
