use std::collections::BTreeMap;

use covert_lab::harness::stats::wilson;
use covert_lab::mockmodel::fixtures::{self, Fixture};
use covert_lab::mockmodel::*;
use covert_lab::primitives::{domain_tag, trial_rng, LabRng};
use proptest::prelude::*;

const Z: f64 = 1.959963984540054;

fn rng(domain: &str, i: u64) -> LabRng {
    trial_rng(5, domain_tag(domain), i)
}

fn first_token_rate(f: &Fixture, draws: u64) -> u64 {
    let model = &f.parties.models[0];
    let mut r = rng(&f.name, 0);
    (0..draws)
        .filter(|_| sample_response(model, "coin", &mut r).unwrap() == vec![1])
        .count() as u64
}

#[test]
fn fair_coin_frequency() {
    let ones = first_token_rate(&fixtures::fair_coin(), 100_000);
    let ci = wilson(ones, 100_000, Z);
    assert!(ci.lo <= 0.5 && 0.5 <= ci.hi, "{ci:?}");
}

#[test]
fn biased_coin_frequency() {
    let ones = first_token_rate(&fixtures::biased_coin(), 100_000);
    let ci = wilson(ones, 100_000, Z);
    assert!(ci.lo <= 0.25 && 0.25 <= ci.hi, "{ci:?}");
}

// 16.266 is the 0.999 chi-square quantile with 3 degrees of freedom.
#[test]
fn skewed_messages_follow_their_law() {
    let f = fixtures::skewed_two_token();
    let model = &f.parties.models[0];
    let law = ResponseLaw::enumerate(model, "eligible", 64).unwrap();
    assert_eq!(law.len(), 4);
    let mut sorted = law.probs.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert_eq!(sorted, vec![0.5, 0.25, 0.125, 0.125]);
    let mut r = rng("skewed", 0);
    let mut counts = [0u64; 4];
    let n = 80_000u64;
    for _ in 0..n {
        let m = sample_response(model, "eligible", &mut r).unwrap();
        counts[law.atoms.iter().position(|a| *a == m).unwrap()] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&law.probs)
        .map(|(&c, &p)| (c as f64 - n as f64 * p).powi(2) / (n as f64 * p))
        .sum();
    assert!(chi2 < 16.266_236_196_238_13, "chi2 = {chi2}");
}

#[test]
fn deterministic_fixture_is_seed_independent() {
    let f = fixtures::deterministic();
    let a = run_conversation(&f.parties, 6, &mut rng("det", 0)).unwrap();
    let b = run_conversation(&f.parties, 6, &mut rng("det", 1)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total_entropy(), 0.0);
    assert!(a.rounds.iter().all(|r| r.message == vec![0, 1, 0]));
}

#[test]
fn eligibility_is_the_length_test() {
    for f in [fixtures::constant_min_entropy(2), fixtures::interleaved(2)] {
        let t = run_conversation(&f.parties, 100, &mut rng(&f.name, 2)).unwrap();
        assert_eq!(t.len(), 100);
        for (i, r) in t.rounds.iter().enumerate() {
            assert_eq!(r.eligible, r.message.len() > f.parties.k);
            assert_eq!(r.speaker, Speaker::for_round(i));
        }
        let listed = eligible_rounds(&t, f.parties.k, None);
        let flagged: Vec<usize> = (0..t.len()).filter(|&i| t.rounds[i].eligible).collect();
        assert_eq!(listed, flagged);
    }
    let t = run_conversation(&fixtures::interleaved(2).parties, 8, &mut rng("il", 0)).unwrap();
    assert_eq!(eligible_rounds(&t, 4, None), vec![0, 1, 4, 5]);
    assert_eq!(eligible_rounds(&t, 4, Some(Speaker::B)), vec![1, 5]);
}

#[test]
fn eligible_rounds_on_alternating_lengths() {
    let rounds = (0..8)
        .map(|i| Round {
            speaker: Speaker::for_round(i),
            prompt: "p".into(),
            message: vec![0; if i % 2 == 0 { 3 } else { 9 }],
            empirical_entropy: 0.0,
            eligible: i % 2 == 1,
        })
        .collect();
    let t = Transcript { rounds };
    assert_eq!(eligible_rounds(&t, 5, None), vec![1, 3, 5, 7]);
    assert!(eligible_rounds(&t, 9, None).is_empty());
    assert_eq!(eligible_rounds(&t, 2, None).len(), 8);
}

#[test]
fn every_fixture_law_is_normalized_and_consistent() {
    for f in fixtures::library() {
        for model in &f.parties.models {
            for prompt in model.prompts.keys() {
                let law = match ResponseLaw::enumerate(model, prompt, 1 << 16) {
                    Err(covert_lab::Error::EnumerationCap { .. }) => continue,
                    other => other.unwrap(),
                };
                let total: f64 = law.probs.iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "{} {prompt}", f.name);
                for (a, &p) in law.atoms.iter().zip(&law.probs) {
                    assert!((response_probability(model, prompt, a).unwrap() - p).abs() < 1e-15);
                }
                let shannon = law.shannon_entropy();
                assert!(law.min_entropy() <= shannon + 1e-12);
            }
        }
    }
}

#[test]
fn parametric_names_resolve() {
    assert_eq!(fixtures::by_name("bit-per-token-64").unwrap().min_entropy, Some(64.0));
    assert_eq!(fixtures::by_name("high-entropy-20").unwrap().width, 40);
    assert!(fixtures::by_name("const-minent-9").is_err());
    assert!(fixtures::by_name("nonsense").is_err());
}

fn positional_model(probs: &[f64], max_len: usize) -> MockModel {
    let positions = probs
        .iter()
        .map(|&p| Dist::new(vec![(0, 1.0 - p), (1, p)]).unwrap())
        .collect();
    let prompts: BTreeMap<String, PromptTable> = [("p".to_string(), PromptTable::positional(positions))].into();
    MockModel::new(vec!["0".into(), "1".into()], "$".into(), max_len, prompts).unwrap()
}

proptest! {
    #[test]
    fn entropy_is_the_sum_of_token_surprisals(
        probs in prop::collection::vec(0.05f64..0.95, 1..12),
        seed in any::<u64>(),
    ) {
        let m = positional_model(&probs, probs.len());
        let msg = sample_response(&m, "p", &mut trial_rng(seed, 0, 0)).unwrap();
        prop_assert_eq!(msg.len(), probs.len());
        let expected: f64 = msg
            .iter()
            .zip(&probs)
            .map(|(&t, &p)| -(if t == 1 { p } else { 1.0 - p }).log2())
            .sum();
        prop_assert!((empirical_entropy(&m, "p", &msg).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn encoding_is_injective(
        a in prop::collection::vec(0u16..2, 0..10),
        b in prop::collection::vec(0u16..2, 0..10),
    ) {
        let m = positional_model(&[0.5; 10], 10);
        prop_assert_eq!(m.encode(&a) == m.encode(&b), a == b);
    }

    #[test]
    fn transcripts_replay_from_their_seed(seed in any::<u64>(), t in 0usize..12) {
        let f = fixtures::interleaved(3);
        let x = run_conversation(&f.parties, t, &mut trial_rng(seed, 1, 0)).unwrap();
        let y = run_conversation(&f.parties, t, &mut trial_rng(seed, 1, 0)).unwrap();
        prop_assert_eq!(x.len(), t);
        prop_assert_eq!(x, y);
    }
}
