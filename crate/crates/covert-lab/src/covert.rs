//! Steganographic overlays on honest conversations.
//!
//! Shared-key overlays draw every token by keyed sampling: the PRF unit `r`
//! of the token's label picks token 1 iff `r <= Pr[1]`, so under a uniform
//! key each token keeps its honest law. The keyless pipeline carries a
//! uniform-transcript key exchange through bundle embeddings, one channel
//! use per eligible round.
//!
//! PRF input, bit-exact: `"covert-lab/prf/v1" || len(key) as u32 BE || key
//! || hypothesis u8 || t u64 BE || speaker u8 (A = 0, B = 1) || j u64 BE`,
//! hashed with SHA-256. The unit is `(top53 + 1/2) / 2^53` of the digest
//! read big-endian, so it lies strictly inside `(0, 1)`. Hypothesis bytes 0
//! and 1 are the two virtual keys; 0xff is the plain PRF.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::{
    bundle_size, compute_bsc, counts_choice_law, decode, embed_atoms, embed_atoms_with_counts, AtomTable,
    BscMode, BundleCounts, BundleParams,
};
use crate::error::{Error, Result};
use crate::harness::registry::{OnceSet, ParamsRegistry};
use crate::harness::stats::tv_distance_sparse;
use crate::lspn::BitMatrix;
use crate::mockmodel::fixtures::Fixture;
use crate::mockmodel::{
    sample_response, Conversation, Dist, MockModel, Parties, ResponseLaw, Speaker, Token, Transcript,
};
use crate::primitives::{ext_canonical, hamming_distance, BitVector, ExtractorSeed};
use crate::prke::prke_messages;
use crate::signaling::{decode_stream, BlockStream, Compiler, Design};

pub const PRF_DOMAIN: &[u8] = b"covert-lab/prf/v1";
/// Hypothesis byte of the plain PRF.
pub const PLAIN_HYPOTHESIS: u8 = 0xff;
/// Default outer repetition code length.
pub const DEFAULT_REPETITION: usize = 5;
/// One-sided 1% normal quantile used by watermark detection.
pub const WATERMARK_Z: f64 = 2.326_347_874_040_841;
/// Default cap on response-law enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyOrigin {
    Given,
    Exchanged,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionKey {
    bytes: Vec<u8>,
    pub origin: KeyOrigin,
}

impl SessionKey {
    pub fn new(bytes: Vec<u8>, origin: KeyOrigin) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::Invalid("session key must be nonempty".into()));
        }
        Ok(SessionKey { bytes, origin })
    }

    /// `lambda` uniform bits; `lambda` must be a positive multiple of 8.
    pub fn random<R: Rng + ?Sized>(lambda: usize, rng: &mut R) -> Result<Self> {
        if lambda == 0 || !lambda.is_multiple_of(8) {
            return Err(Error::Invalid(format!("key length {lambda} is not a positive multiple of 8")));
        }
        let mut bytes = vec![0u8; lambda / 8];
        rng.fill(&mut bytes[..]);
        Self::new(bytes, KeyOrigin::Given)
    }

    /// Packs bits little-endian within each byte.
    pub fn from_bits(bits: &BitVector, origin: KeyOrigin) -> Result<Self> {
        if bits.is_empty() || !bits.len().is_multiple_of(8) {
            return Err(Error::Invalid(format!(
                "key of {} bits is not a positive multiple of 8",
                bits.len()
            )));
        }
        let bytes = (0..bits.len() / 8)
            .map(|i| (0..8).fold(0u8, |acc, j| acc | bits.get(8 * i + j) << j))
            .collect();
        Self::new(bytes, origin)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn lambda(&self) -> usize {
        self.bytes.len() * 8
    }
}

/// Rejects a key already used for another conversation.
#[derive(Clone, Debug, Default)]
pub struct KeyRegistry {
    seen: OnceSet<Vec<u8>>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: &SessionKey) -> Result<()> {
        if !self.seen.insert(key.bytes.clone()) {
            return Err(Error::KeyReused);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrfLabel {
    pub round: u64,
    pub speaker: Speaker,
    pub index: u64,
}

impl PrfLabel {
    pub fn new(round: usize, speaker: Speaker, index: usize) -> Self {
        PrfLabel {
            round: round as u64,
            speaker,
            index: index as u64,
        }
    }

    pub fn to_bytes(&self) -> [u8; 17] {
        let mut out = [0u8; 17];
        out[..8].copy_from_slice(&self.round.to_be_bytes());
        out[8] = self.speaker.index() as u8;
        out[9..].copy_from_slice(&self.index.to_be_bytes());
        out
    }
}

/// Labels consumed within one conversation.
#[derive(Clone, Debug, Default)]
pub struct LabelRegistry {
    seen: OnceSet<PrfLabel>,
}

impl LabelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn consume(&mut self, label: PrfLabel) -> Result<()> {
        if !self.seen.insert(label) {
            return Err(Error::LabelReused {
                round: label.round,
                speaker: label.speaker.index() as u8,
                index: label.index,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

fn keyed_unit(key: &SessionKey, hypothesis: u8, label: &PrfLabel) -> f64 {
    let mut h = Sha256::new();
    h.update(PRF_DOMAIN);
    h.update((key.bytes.len() as u32).to_be_bytes());
    h.update(&key.bytes);
    h.update([hypothesis]);
    h.update(label.to_bytes());
    let d = h.finalize();
    let top = u64::from_be_bytes(d[..8].try_into().expect("digest has 8 bytes")) >> 11;
    (top as f64 + 0.5) / (1u64 << 53) as f64
}

/// Plain PRF unit in `(0, 1)`.
pub fn prf_unit(key: &SessionKey, label: &PrfLabel) -> f64 {
    keyed_unit(key, PLAIN_HYPOTHESIS, label)
}

/// PRF unit under the virtual key of hypothesis `b`.
pub fn virtual_unit(key: &SessionKey, b: u8, label: &PrfLabel) -> f64 {
    keyed_unit(key, b & 1, label)
}

pub fn cgz_sample_token(p1: f64, r: f64) -> u8 {
    (r <= p1) as u8
}

/// Keyed draw from `dist`: the binary rule for `{0, 1}` supports, inverse
/// CDF otherwise.
pub fn keyed_token(dist: &Dist, r: f64) -> Token {
    match dist.entries() {
        [(0, _), (1, p1)] => cgz_sample_token(*p1, r) as Token,
        _ => dist.quantile(r),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisDecision {
    pub bit: u8,
    /// Tokens matching each hypothesis' prediction.
    pub scores: [usize; 2],
}

impl HypothesisDecision {
    fn from_scores(scores: [usize; 2]) -> Self {
        HypothesisDecision {
            bit: (scores[1] > scores[0]) as u8,
            scores,
        }
    }
}

fn check_labels(n: usize, labels: &[PrfLabel]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    Ok(())
}

/// Binary tokens with per-token `Pr[1] = probs[j]`, drawn under the virtual
/// key of `b`.
pub fn steg_embed_message(
    key: &SessionKey,
    b: u8,
    probs: &[f64],
    labels: &[PrfLabel],
    registry: &mut LabelRegistry,
) -> Result<Vec<u8>> {
    check_labels(probs.len(), labels)?;
    for &p in probs {
        crate::error::check_prob("token probability", p)?;
    }
    for l in labels {
        registry.consume(*l)?;
    }
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, l)| cgz_sample_token(p, virtual_unit(key, b, l)))
        .collect())
}

/// Counts matches against both hypotheses; ties go to 0.
pub fn steg_decode_message(
    key: &SessionKey,
    tokens: &[u8],
    probs: &[f64],
    labels: &[PrfLabel],
) -> Result<HypothesisDecision> {
    check_labels(tokens.len(), labels)?;
    check_labels(probs.len(), labels)?;
    let mut scores = [0usize; 2];
    for ((&t, &p), l) in tokens.iter().zip(probs).zip(labels) {
        for (h, s) in scores.iter_mut().enumerate() {
            *s += (cgz_sample_token(p, virtual_unit(key, h as u8, l)) == t) as usize;
        }
    }
    Ok(HypothesisDecision::from_scores(scores))
}

/// One model response drawn under the virtual key of `b`, labels
/// `(round, speaker, j)`.
pub fn steg_embed_response(
    key: &SessionKey,
    b: u8,
    model: &MockModel,
    prompt: &str,
    round: usize,
    speaker: Speaker,
    registry: &mut LabelRegistry,
) -> Result<Vec<Token>> {
    let term = model.terminator();
    let mut msg = Vec::new();
    while let Some(d) = model.next_dist(prompt, &msg)? {
        let label = PrfLabel::new(round, speaker, msg.len());
        registry.consume(label)?;
        let t = keyed_token(&d, virtual_unit(key, b, &label));
        if t == term {
            break;
        }
        msg.push(t);
    }
    Ok(msg)
}

pub fn steg_decode_response(
    key: &SessionKey,
    model: &MockModel,
    prompt: &str,
    round: usize,
    speaker: Speaker,
    message: &[Token],
) -> Result<HypothesisDecision> {
    let mut scores = [0usize; 2];
    for j in 0..=message.len() {
        let Some(d) = model.next_dist(prompt, &message[..j])? else {
            break;
        };
        let observed = message.get(j).copied().unwrap_or(model.terminator());
        let label = PrfLabel::new(round, speaker, j);
        for (h, s) in scores.iter_mut().enumerate() {
            *s += (keyed_token(&d, virtual_unit(key, h as u8, &label)) == observed) as usize;
        }
    }
    Ok(HypothesisDecision::from_scores(scores))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionOutcome<S> {
    pub sample: S,
    pub canonical: u64,
    pub tries: usize,
    /// No draw had extractor bit `b`; `sample` is the last draw.
    pub aborted: bool,
}

/// Redraws until `Ext(seed, x) = b`, at most `max_tries` times.
pub fn embed_rejection<S, R, F>(
    seed: &ExtractorSeed,
    b: u8,
    mut sampler: F,
    max_tries: usize,
    rng: &mut R,
) -> Result<RejectionOutcome<S>>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<(S, u64)>,
{
    if max_tries == 0 {
        return Err(Error::Invalid("rejection embedding needs at least one try".into()));
    }
    let mut tries = 0;
    loop {
        let (sample, canonical) = sampler(rng)?;
        tries += 1;
        let hit = ext_canonical(seed, canonical) == b & 1;
        if hit || tries == max_tries {
            return Ok(RejectionOutcome {
                sample,
                canonical,
                tries,
                aborted: !hit,
            });
        }
    }
}

/// Exact law of the published atom of [`embed_rejection`].
pub fn rejection_law(seed: &ExtractorSeed, b: u8, atoms: &AtomTable, max_tries: usize) -> Vec<f64> {
    let hit: Vec<bool> = atoms
        .canonical
        .iter()
        .map(|&x| ext_canonical(seed, x) == b & 1)
        .collect();
    let q: f64 = atoms.probs.iter().zip(&hit).filter(|(_, &h)| h).map(|(p, _)| p).sum();
    let miss_all = (1.0 - q).powi(max_tries as i32);
    let accept = if q > 0.0 { (1.0 - miss_all) / q } else { 0.0 };
    let abort = if q < 1.0 { miss_all / (1.0 - q) } else { 0.0 };
    atoms
        .probs
        .iter()
        .zip(&hit)
        .map(|(&p, &h)| if h { p * accept } else { p * abort })
        .collect()
}

/// TV distance from the honest law when `b` is a uniform bit.
pub fn rejection_tv(seed: &ExtractorSeed, atoms: &AtomTable, max_tries: usize) -> f64 {
    let l0 = rejection_law(seed, 0, atoms, max_tries);
    let l1 = rejection_law(seed, 1, atoms, max_tries);
    0.5 * atoms
        .probs
        .iter()
        .zip(l0.iter().zip(&l1))
        .map(|(&p, (a, b))| (0.5 * (a + b) - p).abs())
        .sum::<f64>()
}

/// Enumerated response law of one prompt with its canonical atoms.
#[derive(Clone, Debug)]
pub struct RoundSource {
    pub atoms: AtomTable,
    pub law: ResponseLaw,
    /// Every response is longer than the fixture's threshold `K`.
    pub eligible: bool,
}

/// Response laws and exact crossovers, memoized across runs.
#[derive(Clone, Debug, Default)]
pub struct SourceCache {
    ids: HashMap<(Speaker, String), usize>,
    sources: Vec<Arc<RoundSource>>,
    crossovers: HashMap<(usize, Vec<u64>), f64>,
}

impl SourceCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Source id and table for `speaker`'s `prompt`.
    pub fn source(
        &mut self,
        fixture: &Fixture,
        speaker: Speaker,
        prompt: &str,
        cap: usize,
    ) -> Result<(usize, Arc<RoundSource>)> {
        let key = (speaker, prompt.to_string());
        if let Some(&id) = self.ids.get(&key) {
            return Ok((id, self.sources[id].clone()));
        }
        let model = &fixture.parties.models[speaker.index()];
        let (atoms, law) = AtomTable::from_model(model, prompt, fixture.width, cap)?;
        let k = fixture.parties.k;
        let eligible = law.min_len() > k;
        if !eligible && law.max_len() > k {
            return Err(Error::Invalid(format!(
                "prompt {prompt:?} of fixture {} mixes eligible and ineligible responses",
                fixture.name
            )));
        }
        let id = self.sources.len();
        self.sources.push(Arc::new(RoundSource { atoms, law, eligible }));
        self.ids.insert(key, id);
        Ok((id, self.sources[id].clone()))
    }

    /// Crossover of the bundle with atom `counts` from source `id`.
    pub fn crossover<R: Rng + ?Sized>(
        &mut self,
        id: usize,
        counts: &[u64],
        width: u32,
        mode: BscMode,
        rng: &mut R,
    ) -> Result<f64> {
        let exact = matches!(mode, BscMode::Exact { .. });
        if exact {
            if let Some(&p) = self.crossovers.get(&(id, counts.to_vec())) {
                return Ok(p);
            }
        }
        let atoms = &self.sources[id].atoms;
        let bundle = BundleCounts::from_pairs(atoms.canonical.iter().copied().zip(counts.iter().copied()));
        let p = compute_bsc(&bundle, width, mode, rng)?.p;
        if exact {
            self.crossovers.insert((id, counts.to_vec()), p);
        }
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Bundle size `L`.
    pub bundle_size: usize,
    /// Per-eligible-round min-entropy the bundle parameters assume.
    pub entropy_bound: f64,
    pub max_rounds: usize,
    pub enumeration_cap: usize,
    pub bsc_mode: BscMode,
}

impl PipelineConfig {
    /// `L` from `lambda` and the fixture's declared min-entropy.
    pub fn for_fixture(fixture: &Fixture, lambda: u32, max_rounds: usize) -> Result<Self> {
        let c = fixture
            .min_entropy
            .filter(|&c| c > 0.0)
            .ok_or_else(|| Error::Invalid(format!("fixture {} declares no positive min-entropy", fixture.name)))?;
        Ok(PipelineConfig {
            bundle_size: bundle_size(lambda, c),
            entropy_bound: c,
            max_rounds,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            bsc_mode: BscMode::default(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovertKeRun {
    pub transcript: Transcript,
    /// Public bundle parameters of each round; `None` for honest rounds.
    pub params: Vec<Option<BundleParams>>,
    pub key_a: BitVector,
    pub key_b: BitVector,
    pub agreed: bool,
    pub embedded_rounds: usize,
    pub bit_errors: usize,
    pub infeasible_steps: usize,
    pub mean_crossover: f64,
}

/// Runs the compiled key exchange inside an honest conversation. Each
/// eligible round of a speaker whose stream is unfinished carries one
/// channel use; every other round is sampled honestly.
pub fn run_covert_ke<R: Rng + ?Sized>(
    fixture: &Fixture,
    compiler: &Compiler,
    cfg: &PipelineConfig,
    cache: &mut SourceCache,
    registry: &mut ParamsRegistry,
    rng: &mut R,
) -> Result<CovertKeRun> {
    let design = &compiler.design;
    let msgs = prke_messages(&compiler.backend, rng);
    let mut streams = [BlockStream::new(design, &msgs.m_a)?, BlockStream::new(design, &msgs.m_b)?];
    let totals = [msgs.m_a.len() * design.n(), msgs.m_b.len() * design.n()];
    let mut received = [BitVector::zeros(0), BitVector::zeros(0)];
    let mut conv = Conversation::new(&fixture.parties);
    let mut params = Vec::new();
    let mut crossover_sum = 0.0;
    while !(streams[0].is_done() && streams[1].is_done()) {
        if conv.transcript.len() >= cfg.max_rounds {
            let s = if streams[0].is_done() { Speaker::B } else { Speaker::A };
            return Err(Error::RoundBudget {
                needed: totals[s.index()] - streams[s.index()].uses(),
                speaker: s.as_char(),
                rounds: cfg.max_rounds,
            });
        }
        let s = conv.next_speaker();
        let prompt = conv.peek_prompt();
        let (id, src) = cache.source(fixture, s, &prompt, cfg.enumeration_cap)?;
        let stream = &mut streams[s.index()];
        if !src.eligible || stream.is_done() {
            conv.step_honest(rng)?;
            params.push(None);
            continue;
        }
        let pp = registry.issue(fixture.width, cfg.bundle_size, cfg.entropy_bound, rng)?;
        registry.consume(&pp)?;
        let counts = src.atoms.sample_counts(pp.bundle_size, rng);
        let p_b = cache.crossover(id, &counts, fixture.width, cfg.bsc_mode, rng)?;
        let x = stream.sender_bit(p_b, rng);
        let out = embed_atoms_with_counts(&pp, &src.atoms, &counts, x, rng);
        let message = src.law.atoms[out.published].clone();
        // what the receiver computes from the public message
        let y = decode(&pp, fixture.parties.models[s.index()].canonical(&message, fixture.width));
        stream.observe(y);
        received[s.index()].push(y);
        crossover_sum += p_b;
        conv.push(message)?;
        params.push(Some(pp));
    }
    let got_a = decode_stream(design, &received[0])?;
    let got_b = decode_stream(design, &received[1])?;
    let key_a = compiler.backend.derive(&msgs.secret_a, &got_b)?;
    let key_b = compiler.backend.derive(&msgs.secret_b, &got_a)?;
    let embedded = received[0].len() + received[1].len();
    Ok(CovertKeRun {
        transcript: conv.transcript,
        params,
        agreed: key_a == key_b,
        key_a,
        key_b,
        embedded_rounds: embedded,
        bit_errors: hamming_distance(&got_a, &msgs.m_a)? + hamming_distance(&got_b, &msgs.m_b)?,
        infeasible_steps: streams[0].infeasible_steps() + streams[1].infeasible_steps(),
        mean_crossover: crossover_sum / embedded.max(1) as f64,
    })
}

/// A short conversation whose eligible rounds embed fresh uniform bits with
/// fresh bundle parameters.
pub fn bundle_overlay_transcript<R: Rng + ?Sized>(
    fixture: &Fixture,
    cfg: &PipelineConfig,
    cache: &mut SourceCache,
    rounds: usize,
    rng: &mut R,
) -> Result<Transcript> {
    let mut registry = ParamsRegistry::new();
    let mut conv = Conversation::new(&fixture.parties);
    for _ in 0..rounds {
        let s = conv.next_speaker();
        let prompt = conv.peek_prompt();
        let (_, src) = cache.source(fixture, s, &prompt, cfg.enumeration_cap)?;
        if !src.eligible {
            conv.step_honest(rng)?;
            continue;
        }
        let pp = registry.issue(fixture.width, cfg.bundle_size, cfg.entropy_bound, rng)?;
        registry.consume(&pp)?;
        let b = rng.random::<u8>() & 1;
        let out = embed_atoms(&pp, &src.atoms, b, rng);
        conv.push(src.law.atoms[out.published].clone())?;
    }
    Ok(conv.transcript)
}

/// A short conversation whose eligible rounds carry a uniform bit by
/// rejection sampling under a fresh extractor seed.
pub fn rejection_overlay_transcript<R: Rng + ?Sized>(
    fixture: &Fixture,
    max_tries: usize,
    rounds: usize,
    rng: &mut R,
) -> Result<Transcript> {
    let mut conv = Conversation::new(&fixture.parties);
    for _ in 0..rounds {
        let s = conv.next_speaker();
        let prompt = conv.peek_prompt();
        let model = conv.model(s);
        let seed = ExtractorSeed::random(fixture.width, rng)?;
        let b = rng.random::<u8>() & 1;
        let out = embed_rejection(
            &seed,
            b,
            |r| {
                let m = sample_response(model, &prompt, r)?;
                let x = model.canonical(&m, fixture.width);
                Ok((m, x))
            },
            max_tries,
            rng,
        )?;
        if out.sample.len() > fixture.parties.k {
            conv.push(out.sample)?;
        } else {
            // ineligible rounds are not used for embedding
            conv.step_honest(rng)?;
        }
    }
    Ok(conv.transcript)
}

/// Adversary's view of one embedded round: the public parameter index
/// (`seed index * 2 + mask`) and the published atom.
pub type RoundView = (u64, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptLaws {
    pub overlay: BTreeMap<Vec<RoundView>, f64>,
    pub honest: BTreeMap<Vec<RoundView>, f64>,
}

impl TranscriptLaws {
    pub fn tv(&self) -> f64 {
        tv_distance_sparse(&self.overlay, &self.honest)
    }
}

/// Every composition of `l` into `probs.len()` parts with its multinomial
/// mass.
pub fn count_vectors(probs: &[f64], l: u64) -> Vec<(Vec<u64>, f64)> {
    fn walk(probs: &[f64], left: u64, prefix: &mut Vec<u64>, out: &mut Vec<(Vec<u64>, f64)>, coef: f64, mass: f64) {
        let j = prefix.len();
        if j + 1 == probs.len() {
            prefix.push(left);
            let m = mass * probs[j].powi(left as i32) / factorial(left);
            out.push((prefix.clone(), coef * m));
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            walk(probs, left - c, prefix, out, coef, mass * probs[j].powi(c as i32) / factorial(c));
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    walk(probs, l, &mut Vec::new(), &mut out, factorial(l), 1.0);
    out
}

fn factorial(n: u64) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Exact law of the public view (parameters and published atoms) of the
/// keyless pipeline carrying one uniform bit per party, against honest
/// rounds with independent uniform parameters. Every round must be
/// eligible and small enough to enumerate.
pub fn overlay_law_exact(fixture: &Fixture, design: &Design, bundle_len: usize, cap: usize) -> Result<TranscriptLaws> {
    let w = fixture.width;
    if w + 2 > 12 {
        return Err(Error::EnumerationCap {
            count: 1 << (w + 2),
            cap: 1 << 12,
        });
    }
    let entropy = fixture.min_entropy.unwrap_or(1.0);
    let mut pps = Vec::new();
    for i in 0..1u64 << (w + 1) {
        for mask in 0..2u8 {
            pps.push(BundleParams::new(0, ExtractorSeed::from_index(i, w)?, mask, bundle_len, entropy)?);
        }
    }
    let rounds = 2 * design.n();
    let mut ctx = LawContext {
        fixture,
        pps,
        cap,
        cache: SourceCache::new(),
        counts: HashMap::new(),
        rng: crate::primitives::trial_rng(0, 0, 0),
    };
    let mut overlay = BTreeMap::new();
    let mut honest = BTreeMap::new();
    for (ma, mb) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
        let streams = [
            BlockStream::new(design, &BitVector::from_bits(&[ma]))?,
            BlockStream::new(design, &BitVector::from_bits(&[mb]))?,
        ];
        let conv = Conversation::new(&fixture.parties);
        ctx.walk_overlay(conv, streams, Vec::new(), 0.25, rounds, &mut overlay)?;
    }
    ctx.walk_honest(Conversation::new(&fixture.parties), Vec::new(), 1.0, rounds, &mut honest)?;
    Ok(TranscriptLaws { overlay, honest })
}

/// Every atom-count vector of a bundle with its probability.
type PatternCounts = Arc<Vec<(Vec<u64>, f64)>>;

struct LawContext<'a> {
    fixture: &'a Fixture,
    pps: Vec<BundleParams>,
    cap: usize,
    cache: SourceCache,
    counts: HashMap<usize, PatternCounts>,
    // unused by exact crossovers; required by the cache signature
    rng: crate::primitives::LabRng,
}

impl LawContext<'_> {
    fn round_source(&mut self, conv: &Conversation) -> Result<(usize, Arc<RoundSource>, PatternCounts)> {
        let prompt = conv.peek_prompt();
        let (id, src) = self.cache.source(self.fixture, conv.next_speaker(), &prompt, self.cap)?;
        if !src.eligible {
            return Err(Error::Invalid(format!("prompt {prompt:?} is not eligible")));
        }
        let l = self.pps[0].bundle_size as u64;
        let counts = self
            .counts
            .entry(id)
            .or_insert_with(|| Arc::new(count_vectors(&src.atoms.probs, l)))
            .clone();
        Ok((id, src, counts))
    }

    fn walk_overlay(
        &mut self,
        conv: Conversation,
        streams: [BlockStream; 2],
        view: Vec<RoundView>,
        mass: f64,
        left: usize,
        out: &mut BTreeMap<Vec<RoundView>, f64>,
    ) -> Result<()> {
        if left == 0 {
            *out.entry(view).or_insert(0.0) += mass;
            return Ok(());
        }
        let s = conv.next_speaker().index();
        let (id, src, counts) = self.round_source(&conv)?;
        let w = self.fixture.width;
        let pp_mass = 1.0 / self.pps.len() as f64;
        for pi in 0..self.pps.len() {
            let pp = self.pps[pi];
            let mut law = vec![0.0; src.atoms.len()];
            for (c, pc) in counts.iter() {
                let p_b = self.cache.crossover(id, c, w, BscMode::default(), &mut self.rng)?;
                let a = streams[s].sender_bias(p_b).a;
                for x in 0..2u8 {
                    let px = if x == 1 { a } else { 1.0 - a };
                    if px == 0.0 {
                        continue;
                    }
                    let choice = counts_choice_law(&pp, &src.atoms, c, (x ^ pp.mask) & 1);
                    for (l, q) in law.iter_mut().zip(choice) {
                        *l += pc * px * q;
                    }
                }
            }
            for (j, &q) in law.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                let y = decode(&pp, src.atoms.canonical[j]);
                let mut next_streams = streams.clone();
                next_streams[s].observe(y);
                let mut next_conv = conv.clone();
                next_conv.push(src.law.atoms[j].clone())?;
                let mut v = view.clone();
                v.push((pp.seed.index() * 2 + pp.mask as u64, j));
                self.walk_overlay(next_conv, next_streams, v, mass * pp_mass * q, left - 1, out)?;
            }
        }
        Ok(())
    }

    fn walk_honest(
        &mut self,
        conv: Conversation,
        view: Vec<RoundView>,
        mass: f64,
        left: usize,
        out: &mut BTreeMap<Vec<RoundView>, f64>,
    ) -> Result<()> {
        if left == 0 {
            *out.entry(view).or_insert(0.0) += mass;
            return Ok(());
        }
        let (_, src, _) = self.round_source(&conv)?;
        let pp_mass = 1.0 / self.pps.len() as f64;
        for pp in self.pps.clone() {
            for (j, &q) in src.atoms.probs.iter().enumerate() {
                let mut next_conv = conv.clone();
                next_conv.push(src.law.atoms[j].clone())?;
                let mut v = view.clone();
                v.push((pp.seed.index() * 2 + pp.mask as u64, j));
                self.walk_honest(next_conv, v, mass * pp_mass * q, left - 1, out)?;
            }
        }
        Ok(())
    }
}

/// Public hash `h(k) = A k xor b` over GF(2).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairwiseHash {
    pub matrix: BitMatrix,
    pub offset: BitVector,
}

impl PairwiseHash {
    pub fn random<R: Rng + ?Sized>(in_bits: usize, out_bits: usize, rng: &mut R) -> Self {
        PairwiseHash {
            matrix: BitMatrix::random(out_bits, in_bits, rng),
            offset: BitVector::random(out_bits, rng),
        }
    }

    pub fn apply(&self, k: &BitVector) -> Result<BitVector> {
        self.matrix.mul_vec(k)?.xor(&self.offset)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub detected: bool,
    pub z: f64,
    pub tokens: usize,
    pub matches: usize,
}

/// The next speaker watermarks its round under `h(k_A)`; the listener tests
/// it under `h(k_B)` with a one-sided 1% z-test on prediction matches.
pub fn wm_verify_amplify(
    k_a: &BitVector,
    k_b: &BitVector,
    hash: &PairwiseHash,
    conv: &mut Conversation,
) -> Result<Verification> {
    let key_a = SessionKey::from_bits(&hash.apply(k_a)?, KeyOrigin::Exchanged)?;
    let key_b = SessionKey::from_bits(&hash.apply(k_b)?, KeyOrigin::Exchanged)?;
    let round = conv.transcript.len();
    let speaker = conv.next_speaker();
    let prompt = conv.peek_prompt();
    let model = conv.model(speaker);
    let term = model.terminator();
    let mut msg = Vec::new();
    while let Some(d) = model.next_dist(&prompt, &msg)? {
        let t = keyed_token(&d, prf_unit(&key_a, &PrfLabel::new(round, speaker, msg.len())));
        if t == term {
            break;
        }
        msg.push(t);
    }
    let mut matches = 0usize;
    let mut excess = 0.0;
    let mut var = 0.0;
    let mut tokens = 0usize;
    for j in 0..=msg.len() {
        let Some(d) = model.next_dist(&prompt, &msg[..j])? else {
            break;
        };
        let observed = msg.get(j).copied().unwrap_or(term);
        let pred = keyed_token(&d, prf_unit(&key_b, &PrfLabel::new(round, speaker, j)));
        let pi = d.prob(pred);
        let hit = (pred == observed) as usize;
        matches += hit;
        excess += hit as f64 - pi;
        var += pi * (1.0 - pi);
        tokens += 1;
    }
    conv.push(msg)?;
    let z = if var > 0.0 { excess / var.sqrt() } else { 0.0 };
    Ok(Verification {
        detected: var > 0.0 && z >= WATERMARK_Z,
        z,
        tokens,
        matches,
    })
}

/// Covert payload of each party and the outer repetition length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayloadPolicy {
    pub bits: [BitVector; 2],
    pub repetition: usize,
}

impl PayloadPolicy {
    pub fn empty() -> Self {
        PayloadPolicy {
            bits: [BitVector::zeros(0), BitVector::zeros(0)],
            repetition: DEFAULT_REPETITION,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(BitVector::is_empty)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovertRun {
    pub transcript: Transcript,
    pub sent: [BitVector; 2],
    /// Receiver-side decoding from the transcript alone, truncated to the
    /// payload length.
    pub recovered: [BitVector; 2],
    /// Tokens whose two hypothesis predictions differed.
    pub informative: [usize; 2],
}

impl CovertRun {
    pub fn recovered_bits(&self) -> usize {
        self.recovered.iter().map(BitVector::len).sum()
    }

    /// Every recovered bit equals the sent bit at its position.
    pub fn error_free(&self) -> bool {
        self.recovered
            .iter()
            .zip(&self.sent)
            .all(|(r, s)| r.iter().zip(s.iter()).all(|(a, b)| a == b))
    }

    pub fn total_entropy(&self) -> f64 {
        self.transcript.total_entropy()
    }

    /// Recovered bits never exceed the transcript's empirical entropy.
    pub fn within_rate_ceiling(&self) -> bool {
        self.recovered_bits() as f64 <= self.total_entropy() + 1e-9
    }
}

fn repeat(bits: &BitVector, r: usize) -> BitVector {
    let mut out = BitVector::zeros(0);
    for b in bits.iter() {
        for _ in 0..r {
            out.push(b);
        }
    }
    out
}

/// Majority per complete block of `r`; ties go to 0.
fn majority_blocks(coded: &BitVector, r: usize) -> BitVector {
    let mut out = BitVector::zeros(0);
    for i in 0..coded.len() / r {
        let ones = (0..r).filter(|&j| coded.get(i * r + j) == 1).count();
        out.push((2 * ones > r) as u8);
    }
    out
}

/// Both hypothesis predictions for the token at `label`.
fn predictions(key: &SessionKey, d: &Dist, label: &PrfLabel) -> [Token; 2] {
    [
        keyed_token(d, virtual_unit(key, 0, label)),
        keyed_token(d, virtual_unit(key, 1, label)),
    ]
}

/// `rounds` rounds of keyed sampling. A token is informative when the two
/// virtual keys predict different tokens; the speaker then publishes the
/// prediction of its next coded bit. Other tokens follow hypothesis 0.
pub fn covert_conversation<R: Rng + ?Sized>(
    parties: &Parties,
    payload: &PayloadPolicy,
    key: &SessionKey,
    keys: &mut KeyRegistry,
    rounds: usize,
    rng: &mut R,
) -> Result<CovertRun> {
    keys.register(key)?;
    if payload.repetition == 0 {
        return Err(Error::Invalid("repetition length must be at least 1".into()));
    }
    let mut conv = Conversation::new(parties);
    if payload.is_empty() {
        for _ in 0..rounds {
            conv.step_honest(rng)?;
        }
        return Ok(CovertRun {
            transcript: conv.transcript,
            sent: payload.bits.clone(),
            recovered: [BitVector::zeros(0), BitVector::zeros(0)],
            informative: [0, 0],
        });
    }
    let coded = [
        repeat(&payload.bits[0], payload.repetition),
        repeat(&payload.bits[1], payload.repetition),
    ];
    let mut pos = [0usize; 2];
    let mut labels = LabelRegistry::new();
    for t in 0..rounds {
        let s = conv.next_speaker();
        let prompt = conv.peek_prompt();
        let model = conv.model(s);
        let term = model.terminator();
        let mut msg = Vec::new();
        while let Some(d) = model.next_dist(&prompt, &msg)? {
            let label = PrfLabel::new(t, s, msg.len());
            labels.consume(label)?;
            let pred = predictions(key, &d, &label);
            let i = s.index();
            let tok = if pred[0] != pred[1] && pos[i] < coded[i].len() {
                pos[i] += 1;
                pred[coded[i].get(pos[i] - 1) as usize]
            } else {
                pred[0]
            };
            if tok == term {
                break;
            }
            msg.push(tok);
        }
        conv.push(msg)?;
    }
    let (decoded, informative) = decode_covert(parties, key, &conv.transcript, payload.repetition)?;
    let recovered = [0, 1].map(|i| {
        let n = decoded[i].len().min(payload.bits[i].len());
        decoded[i].slice(0, n)
    });
    Ok(CovertRun {
        transcript: conv.transcript,
        sent: payload.bits.clone(),
        recovered,
        informative,
    })
}

/// Receiver side: replays both virtual keys over the public transcript and
/// majority-decodes the informative tokens of each speaker.
pub fn decode_covert(
    parties: &Parties,
    key: &SessionKey,
    transcript: &Transcript,
    repetition: usize,
) -> Result<([BitVector; 2], [usize; 2])> {
    let mut coded = [BitVector::zeros(0), BitVector::zeros(0)];
    for (t, round) in transcript.rounds.iter().enumerate() {
        let s = round.speaker;
        let model = &parties.models[s.index()];
        let msg = &round.message;
        for j in 0..=msg.len() {
            let Some(d) = model.next_dist(&round.prompt, &msg[..j])? else {
                break;
            };
            let pred = predictions(key, &d, &PrfLabel::new(t, s, j));
            if pred[0] != pred[1] {
                let observed = msg.get(j).copied().unwrap_or(model.terminator());
                coded[s.index()].push((observed == pred[1]) as u8);
            }
        }
    }
    let informative = [coded[0].len(), coded[1].len()];
    Ok((coded.map(|c| majority_blocks(&c, repetition)), informative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mockmodel::fixtures;
    use crate::primitives::trial_rng;

    #[test]
    fn prf_units_are_interior() {
        let key = SessionKey::new(vec![1, 2, 3, 4], KeyOrigin::Given).unwrap();
        for j in 0..1000 {
            let u = prf_unit(&key, &PrfLabel::new(0, Speaker::A, j));
            assert!(u > 0.0 && u < 1.0);
        }
        assert_eq!(cgz_sample_token(0.0, 1e-300), 0);
    }

    #[test]
    fn repetition_roundtrip() {
        let bits = BitVector::from_bits(&[1, 0, 1, 1]);
        assert_eq!(majority_blocks(&repeat(&bits, 3), 3), bits);
    }

    #[test]
    fn count_vectors_sum_to_one() {
        let v = count_vectors(&[0.2, 0.3, 0.5], 4);
        assert_eq!(v.len(), 15);
        let total: f64 = v.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn micro_overlay_is_exact() {
        let f = fixtures::micro();
        let design = Design::optimal(1, 0.25).unwrap();
        let laws = overlay_law_exact(&f, &design, 4, 64).unwrap();
        assert!(laws.tv() < 1e-12, "tv {}", laws.tv());
    }

    #[test]
    fn key_reuse_rejected() {
        let f = fixtures::bit_per_token(8);
        let mut rng = trial_rng(1, 2, 3);
        let key = SessionKey::random(64, &mut rng).unwrap();
        let mut keys = KeyRegistry::new();
        let payload = PayloadPolicy {
            bits: [BitVector::from_bits(&[1, 0]), BitVector::zeros(0)],
            repetition: 1,
        };
        covert_conversation(&f.parties, &payload, &key, &mut keys, 2, &mut rng).unwrap();
        assert_eq!(
            covert_conversation(&f.parties, &payload, &key, &mut keys, 2, &mut rng).unwrap_err(),
            Error::KeyReused
        );
    }
}
