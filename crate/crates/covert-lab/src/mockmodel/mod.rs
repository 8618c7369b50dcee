//! Finite-table language models and the two-party conversation engine.
//!
//! A model maps `(prompt, prefix)` to a next-token distribution. Responses
//! stop at the terminator or are forcibly terminated at `max_response_len`.
//! Messages are stored without the terminator.

pub mod fixtures;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{canonicalize, BitVector};

pub type Token = u16;

/// Next-token distribution: `(token, probability)` with positive masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dist {
    entries: Vec<(Token, f64)>,
}

impl Dist {
    pub fn new(mut entries: Vec<(Token, f64)>) -> Result<Self> {
        entries.retain(|&(_, p)| p != 0.0);
        entries.sort_by_key(|&(t, _)| t);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Invalid(format!("token {} listed twice", w[0].0)));
            }
        }
        let mut total = 0.0;
        for &(_, p) in &entries {
            crate::error::check_prob("token probability", p)?;
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "distribution sums to {total}, not 1"
            )));
        }
        Ok(Dist { entries })
    }

    pub fn point(token: Token) -> Self {
        Dist {
            entries: vec![(token, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(Token, f64)] {
        &self.entries
    }

    pub fn prob(&self, token: Token) -> f64 {
        self.entries
            .iter()
            .find(|&&(t, _)| t == token)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn is_point(&self) -> bool {
        self.entries.len() == 1
    }

    /// Inverse-CDF lookup: the first token whose cumulative mass reaches `u`.
    pub fn quantile(&self, u: f64) -> Token {
        let mut acc = 0.0;
        for &(t, p) in &self.entries {
            acc += p;
            if u < acc {
                return t;
            }
        }
        self.entries.last().expect("nonempty distribution").0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Token {
        if self.entries.len() == 1 {
            return self.entries[0].0;
        }
        self.quantile(rng.random::<f64>())
    }
}

/// Next-token rule for one prompt: a distribution per position, with
/// optional overrides keyed by the exact prefix. Past the last position the
/// terminator is forced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTable {
    pub positions: Vec<Dist>,
    pub overrides: BTreeMap<Vec<Token>, Dist>,
}

impl PromptTable {
    pub fn positional(positions: Vec<Dist>) -> Self {
        PromptTable {
            positions,
            overrides: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockModel {
    /// Token names; the terminator is the last entry.
    pub alphabet: Vec<String>,
    pub max_response_len: usize,
    pub prompts: BTreeMap<String, PromptTable>,
}

impl MockModel {
    pub fn new(
        tokens: Vec<String>,
        terminator: String,
        max_response_len: usize,
        prompts: BTreeMap<String, PromptTable>,
    ) -> Result<Self> {
        if max_response_len == 0 {
            return Err(Error::Invalid("max_response_len must be positive".into()));
        }
        let mut alphabet = tokens;
        alphabet.push(terminator);
        let model = MockModel {
            alphabet,
            max_response_len,
            prompts,
        };
        let n = model.alphabet.len() as Token;
        for (id, table) in &model.prompts {
            let all = table.positions.iter().chain(table.overrides.values());
            for d in all {
                if d.entries.iter().any(|&(t, _)| t >= n) {
                    return Err(Error::Invalid(format!("prompt {id:?} uses unknown token")));
                }
            }
        }
        Ok(model)
    }

    pub fn terminator(&self) -> Token {
        (self.alphabet.len() - 1) as Token
    }

    pub fn token_id(&self, name: &str) -> Option<Token> {
        self.alphabet.iter().position(|t| t == name).map(|i| i as Token)
    }

    fn table(&self, prompt: &str) -> Result<&PromptTable> {
        self.prompts
            .get(prompt)
            .ok_or_else(|| Error::UnknownPrompt(prompt.to_string()))
    }

    /// Distribution of the token after `prefix`, or `None` once the length
    /// bound forces termination.
    pub fn next_dist(&self, prompt: &str, prefix: &[Token]) -> Result<Option<Dist>> {
        if prefix.len() >= self.max_response_len {
            return Ok(None);
        }
        let t = self.table(prompt)?;
        if let Some(d) = t.overrides.get(prefix) {
            return Ok(Some(d.clone()));
        }
        Ok(Some(
            t.positions
                .get(prefix.len())
                .cloned()
                .unwrap_or_else(|| Dist::point(self.terminator())),
        ))
    }

    /// Bits per token in the canonical encoding: token `i` is written as the
    /// code `i + 1`, so the all-zero code marks the end of a message.
    pub fn bits_per_token(&self) -> u32 {
        let n = (self.alphabet.len() - 1) as u32;
        32 - n.leading_zeros()
    }

    /// Injective bit encoding of a message (terminator excluded).
    pub fn encode(&self, message: &[Token]) -> BitVector {
        let b = self.bits_per_token();
        let mut v = BitVector::zeros(message.len() * b as usize);
        for (j, &t) in message.iter().enumerate() {
            let code = t as u64 + 1;
            for i in 0..b {
                v.set(j * b as usize + i as usize, ((code >> i) & 1) as u8);
            }
        }
        v
    }

    pub fn canonical(&self, message: &[Token], width: u32) -> u64 {
        canonicalize(&self.encode(message), width)
    }

    pub fn render(&self, message: &[Token]) -> String {
        message
            .iter()
            .map(|&t| self.alphabet[t as usize].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Samples tokens until the terminator or the length bound.
pub fn sample_response<R: Rng + ?Sized>(
    model: &MockModel,
    prompt: &str,
    rng: &mut R,
) -> Result<Vec<Token>> {
    let term = model.terminator();
    let mut msg = Vec::new();
    while let Some(d) = model.next_dist(prompt, &msg)? {
        let t = d.sample(rng);
        if t == term {
            break;
        }
        msg.push(t);
    }
    Ok(msg)
}

/// Exact probability of producing `message` (including its termination).
pub fn response_probability(model: &MockModel, prompt: &str, message: &[Token]) -> Result<f64> {
    let mut p = 1.0;
    for j in 0..=message.len() {
        let Some(d) = model.next_dist(prompt, &message[..j])? else {
            if j == message.len() {
                break;
            }
            return Ok(0.0);
        };
        let tok = if j < message.len() {
            message[j]
        } else {
            model.terminator()
        };
        p *= d.prob(tok);
    }
    Ok(p)
}

/// `-log2 Pr[message]` in bits.
pub fn empirical_entropy(model: &MockModel, prompt: &str, message: &[Token]) -> Result<f64> {
    let p = response_probability(model, prompt, message)?;
    if p <= 0.0 {
        return Err(Error::ZeroProbability(model.render(message)));
    }
    Ok((-p.log2()).max(0.0))
}

/// The full response law of one prompt, enumerated exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseLaw {
    pub atoms: Vec<Vec<Token>>,
    pub probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ResponseLaw {
    pub fn enumerate(model: &MockModel, prompt: &str, cap: usize) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut probs = Vec::new();
        let mut stack = vec![(Vec::<Token>::new(), 1.0f64)];
        let term = model.terminator();
        while let Some((prefix, p)) = stack.pop() {
            let Some(d) = model.next_dist(prompt, &prefix)? else {
                atoms.push(prefix);
                probs.push(p);
                continue;
            };
            for &(t, q) in d.entries().iter().rev() {
                if t == term {
                    atoms.push(prefix.clone());
                    probs.push(p * q);
                } else {
                    let mut next = prefix.clone();
                    next.push(t);
                    stack.push((next, p * q));
                }
            }
            if atoms.len() + stack.len() > cap {
                return Err(Error::EnumerationCap {
                    count: (atoms.len() + stack.len()) as u64,
                    cap: cap as u64,
                });
            }
        }
        Ok(Self::from_atoms(atoms, probs))
    }

    pub fn from_atoms(atoms: Vec<Vec<Token>>, probs: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| atoms[i].cmp(&atoms[j]));
        let atoms: Vec<_> = order.iter().map(|&i| atoms[i].clone()).collect();
        let probs: Vec<f64> = order.iter().map(|&i| probs[i]).collect();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        ResponseLaw {
            atoms,
            probs,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.atoms.len() - 1)
    }

    pub fn shannon_entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| -p * p.log2())
            .sum()
    }

    pub fn min_entropy(&self) -> f64 {
        crate::primitives::min_entropy(&self.probs)
    }

    pub fn min_len(&self) -> usize {
        self.atoms.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn max_len(&self) -> usize {
        self.atoms.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    /// Alice speaks on rounds 0, 2, 4, ... (the odd rounds when counting
    /// from one).
    pub fn for_round(round: usize) -> Speaker {
        if round.is_multiple_of(2) {
            Speaker::A
        } else {
            Speaker::B
        }
    }

    pub fn other(self) -> Speaker {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Speaker::A => 'A',
            Speaker::B => 'B',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Deterministic prompt selection from private context, private state and
/// the public transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PromptSelector {
    /// Walks a fixed list of prompts, one per own turn.
    Cycle(Vec<String>),
    /// Picks `long` when the last public message was longer than `k`
    /// tokens, otherwise `short`.
    Reply { short: String, long: String, k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationPolicy {
    pub private_context: String,
    pub selector: PromptSelector,
}

impl ConversationPolicy {
    pub fn constant(prompt: &str) -> Self {
        Self::cycle(&[prompt])
    }

    pub fn cycle(prompts: &[&str]) -> Self {
        ConversationPolicy {
            private_context: String::new(),
            selector: PromptSelector::Cycle(prompts.iter().map(|s| s.to_string()).collect()),
        }
    }

    /// Returns the prompt for the next own turn and the new private state.
    pub fn select(&self, state: u64, transcript: &Transcript) -> (String, u64) {
        match &self.selector {
            PromptSelector::Cycle(list) => {
                let p = list[(state as usize) % list.len()].clone();
                (p, state + 1)
            }
            PromptSelector::Reply { short, long, k } => {
                let last = transcript.rounds.last().map_or(0, |r| r.message.len());
                let p = if last > *k { long } else { short };
                (p.clone(), state + 1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub speaker: Speaker,
    pub prompt: String,
    pub message: Vec<Token>,
    pub empirical_entropy: f64,
    pub eligible: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub rounds: Vec<Round>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn total_entropy(&self) -> f64 {
        self.rounds.iter().map(|r| r.empirical_entropy).sum()
    }
}

/// The two parties of an honest conversation.
#[derive(Clone, Debug, PartialEq)]
pub struct Parties {
    pub models: [MockModel; 2],
    pub policies: [ConversationPolicy; 2],
    /// Eligibility threshold: rounds with more than `k` tokens.
    pub k: usize,
}

/// Stepwise conversation driver: overlays pick each message themselves
/// while the driver keeps speakers, prompts and accounting honest.
#[derive(Clone, Debug)]
pub struct Conversation<'a> {
    parties: &'a Parties,
    states: [u64; 2],
    pub transcript: Transcript,
}

impl<'a> Conversation<'a> {
    pub fn new(parties: &'a Parties) -> Self {
        Conversation {
            parties,
            states: [0, 0],
            transcript: Transcript::default(),
        }
    }

    pub fn next_speaker(&self) -> Speaker {
        Speaker::for_round(self.transcript.len())
    }

    /// Prompt of the next round without advancing private state.
    pub fn peek_prompt(&self) -> String {
        let s = self.next_speaker();
        self.parties.policies[s.index()]
            .select(self.states[s.index()], &self.transcript)
            .0
    }

    pub fn model(&self, speaker: Speaker) -> &'a MockModel {
        &self.parties.models[speaker.index()]
    }

    /// Records `message` as the next round under the selected prompt.
    pub fn push(&mut self, message: Vec<Token>) -> Result<&Round> {
        let s = self.next_speaker();
        let (prompt, state) =
            self.parties.policies[s.index()].select(self.states[s.index()], &self.transcript);
        let model = self.model(s);
        let h = empirical_entropy(model, &prompt, &message)?;
        self.states[s.index()] = state;
        self.transcript.rounds.push(Round {
            speaker: s,
            prompt,
            eligible: message.len() > self.parties.k,
            message,
            empirical_entropy: h,
        });
        Ok(self.transcript.rounds.last().expect("just pushed"))
    }

    /// Samples the next round honestly.
    pub fn step_honest<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&Round> {
        let prompt = self.peek_prompt();
        let msg = sample_response(self.model(self.next_speaker()), &prompt, rng)?;
        self.push(msg)
    }
}

/// Honest execution of `t` rounds, Alice first.
pub fn run_conversation<R: Rng + ?Sized>(
    parties: &Parties,
    t: usize,
    rng: &mut R,
) -> Result<Transcript> {
    let mut c = Conversation::new(parties);
    for _ in 0..t {
        c.step_honest(rng)?;
    }
    Ok(c.transcript)
}

/// Indices of rounds with more than `k` tokens, optionally for one speaker.
pub fn eligible_rounds(t: &Transcript, k: usize, speaker: Option<Speaker>) -> Vec<usize> {
    t.rounds
        .iter()
        .enumerate()
        .filter(|(_, r)| r.message.len() > k && speaker.is_none_or(|s| r.speaker == s))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::trial_rng;

    fn binary_model(positions: Vec<Vec<(Token, f64)>>) -> MockModel {
        let table = PromptTable::positional(
            positions
                .into_iter()
                .map(|e| Dist::new(e).unwrap())
                .collect(),
        );
        MockModel::new(
            vec!["0".into(), "1".into()],
            "$".into(),
            8,
            [("p".to_string(), table)].into(),
        )
        .unwrap()
    }

    #[test]
    fn entropy_examples() {
        let det = binary_model(vec![vec![(0, 1.0)], vec![(2, 1.0)]]);
        assert_eq!(empirical_entropy(&det, "p", &[0]).unwrap(), 0.0);
        let mixed = binary_model(vec![
            vec![(0, 0.5), (1, 0.5)],
            vec![(0, 0.25), (1, 0.75)],
        ]);
        assert!((empirical_entropy(&mixed, "p", &[1, 0]).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(
            empirical_entropy(&det, "p", &[1]),
            Err(Error::ZeroProbability(_))
        ));
        assert!(matches!(
            empirical_entropy(&det, "q", &[0]),
            Err(Error::UnknownPrompt(_))
        ));
    }

    #[test]
    fn uniform_eight_gives_three_bits() {
        let half = vec![(0, 0.5), (1, 0.5)];
        let m = binary_model(vec![half.clone(), half.clone(), half]);
        let law = ResponseLaw::enumerate(&m, "p", 64).unwrap();
        assert_eq!(law.len(), 8);
        for a in &law.atoms {
            assert!((empirical_entropy(&m, "p", a).unwrap() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_termination_at_bound() {
        let half = vec![(0, 0.5), (1, 0.5)];
        let m = binary_model(vec![half; 12]);
        let mut rng = trial_rng(1, 1, 1);
        for _ in 0..20 {
            assert_eq!(sample_response(&m, "p", &mut rng).unwrap().len(), 8);
        }
        assert!((response_probability(&m, "p", &[0; 8]).unwrap() - 2f64.powi(-8)).abs() < 1e-18);
    }

    #[test]
    fn zero_rounds_is_empty() {
        let m = binary_model(vec![vec![(0, 1.0)]]);
        let parties = Parties {
            models: [m.clone(), m],
            policies: [
                ConversationPolicy::constant("p"),
                ConversationPolicy::constant("p"),
            ],
            k: 0,
        };
        let t = run_conversation(&parties, 0, &mut trial_rng(0, 0, 0)).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn encoding_is_injective_across_lengths() {
        let m = binary_model(vec![vec![(0, 1.0)]]);
        assert_eq!(m.bits_per_token(), 2);
        assert_ne!(m.canonical(&[0], 8), m.canonical(&[0, 0], 8));
        assert_ne!(m.canonical(&[], 8), m.canonical(&[0], 8));
    }
}
