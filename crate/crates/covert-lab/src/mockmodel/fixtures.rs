//! Shipped conversation fixtures and their declarative TOML format.
//!
//! Probabilities in fixture files are strings (`"0.25"` or `"1/3"`) so a
//! value is never routed through a float literal parser on the way in.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ConversationPolicy, Dist, MockModel, Parties, PromptSelector, PromptTable, Token};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// A conversation fixture: both parties plus the public constants every
/// participant and auditor shares.
#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub parties: Parties,
    /// Canonical width `w` for extractor inputs.
    pub width: u32,
    /// Declared per-eligible-round min-entropy, if the fixture has one.
    pub min_entropy: Option<f64>,
    pub description: String,
}

/// Parses `"0.125"`, `"1/3"`, `"1"` and the like.
pub fn parse_probability(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad numerator in {s:?}")))?;
        let d: u64 = d
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad denominator in {s:?}")))?;
        if d == 0 {
            return Err(Error::Config(format!("zero denominator in {s:?}")));
        }
        n as f64 / d as f64
    } else {
        if !s.chars().all(|c| c.is_ascii_digit() || c == '.') || s.is_empty() {
            return Err(Error::Config(format!("{s:?} is not a decimal string")));
        }
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("{s:?} is not a decimal string")))?
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("probability {s:?} outside [0, 1]")));
    }
    Ok(v)
}

fn binary_model(prompts: BTreeMap<String, PromptTable>, max_len: usize) -> MockModel {
    MockModel::new(vec!["0".into(), "1".into()], "$".into(), max_len, prompts)
        .expect("fixture model is well formed")
}

fn fair() -> Dist {
    Dist::new(vec![(0, 0.5), (1, 0.5)]).expect("fair coin")
}

fn point(t: Token) -> Dist {
    Dist::point(t)
}

fn both(model: MockModel, a: ConversationPolicy, b: ConversationPolicy, k: usize) -> Parties {
    Parties {
        models: [model.clone(), model],
        policies: [a, b],
        k,
    }
}

/// Eligible messages: `c` fair binary tokens then zeros, six tokens in all;
/// min-entropy exactly `c` bits. K = 4, width 12.
pub fn constant_min_entropy(c: usize) -> Fixture {
    assert!((1..=6).contains(&c), "c must be in 1..=6");
    let mut positions: Vec<Dist> = (0..c).map(|_| fair()).collect();
    positions.extend((c..6).map(|_| point(0)));
    let prompts = [("eligible".to_string(), PromptTable::positional(positions))].into();
    let model = binary_model(prompts, 8);
    Fixture {
        name: format!("const-minent-{c}"),
        parties: both(
            model,
            ConversationPolicy::constant("eligible"),
            ConversationPolicy::constant("eligible"),
            4,
        ),
        width: 12,
        min_entropy: Some(c as f64),
        description: format!("every round eligible, {c} fair tokens then zero padding"),
    }
}

/// Like [`constant_min_entropy`] with skewed atoms: the free tokens have
/// law (1/2, 1/4, 1/8, 1/8) over four messages, min-entropy 1.
pub fn skewed_two_token() -> Fixture {
    let first = Dist::new(vec![(0, 0.5), (1, 0.5)]).expect("fair");
    let mut overrides = BTreeMap::new();
    overrides.insert(vec![0], point(0));
    overrides.insert(vec![1], Dist::new(vec![(0, 0.5), (1, 0.5)]).expect("fair"));
    overrides.insert(vec![1, 1], Dist::new(vec![(0, 0.5), (1, 0.5)]).expect("fair"));
    let mut positions = vec![first, point(0), point(0)];
    positions.extend((3..6).map(|_| point(0)));
    let table = PromptTable {
        positions,
        overrides,
    };
    let model = binary_model([("eligible".to_string(), table)].into(), 8);
    Fixture {
        name: "skewed".into(),
        parties: both(
            model,
            ConversationPolicy::constant("eligible"),
            ConversationPolicy::constant("eligible"),
            4,
        ),
        width: 12,
        min_entropy: Some(1.0),
        description: "four eligible messages with masses 1/2, 1/4, 1/8, 1/8".into(),
    }
}

/// `h` fair tokens per eligible round (high-entropy regime). K = 4.
pub fn high_entropy(h: usize) -> Fixture {
    assert!(h > 4 && 2 * h <= 62, "need 4 < h <= 31");
    let positions = (0..h).map(|_| fair()).collect();
    let model = binary_model([("eligible".to_string(), PromptTable::positional(positions))].into(), h);
    Fixture {
        name: format!("high-entropy-{h}"),
        parties: both(
            model,
            ConversationPolicy::constant("eligible"),
            ConversationPolicy::constant("eligible"),
            4,
        ),
        width: (2 * h) as u32,
        min_entropy: Some(h as f64),
        description: format!("every round eligible, {h} fair tokens"),
    }
}

/// Point-mass responses only.
pub fn deterministic() -> Fixture {
    let positions = vec![point(0), point(1), point(0)];
    let model = binary_model([("fixed".to_string(), PromptTable::positional(positions))].into(), 8);
    Fixture {
        name: "deterministic".into(),
        parties: both(
            model,
            ConversationPolicy::constant("fixed"),
            ConversationPolicy::constant("fixed"),
            4,
        ),
        width: 12,
        min_entropy: Some(0.0),
        description: "every response is the forced string 0 1 0".into(),
    }
}

/// Each party alternates an eligible constant-entropy round with a short
/// deterministic filler (lengths 6, 6, 1, 1, 6, 6, ...).
pub fn interleaved(c: usize) -> Fixture {
    let mut positions: Vec<Dist> = (0..c).map(|_| fair()).collect();
    positions.extend((c..6).map(|_| point(0)));
    let prompts = [
        ("eligible".to_string(), PromptTable::positional(positions)),
        ("filler".to_string(), PromptTable::positional(vec![point(1)])),
    ]
    .into();
    let model = binary_model(prompts, 8);
    Fixture {
        name: format!("interleaved-{c}"),
        parties: both(
            model,
            ConversationPolicy::cycle(&["eligible", "filler"]),
            ConversationPolicy::cycle(&["eligible", "filler"]),
            4,
        ),
        width: 12,
        min_entropy: Some(c as f64),
        description: format!("{c}-bit eligible rounds interleaved with deterministic fillers"),
    }
}

/// One fair token per response: the coin-flip model.
pub fn fair_coin() -> Fixture {
    coin("fair-coin", 0.5)
}

/// One token, `1` with probability 1/4.
pub fn biased_coin() -> Fixture {
    coin("biased-coin", 0.25)
}

fn coin(name: &str, p1: f64) -> Fixture {
    let d = Dist::new(vec![(0, 1.0 - p1), (1, p1)]).expect("coin");
    let model = binary_model([("coin".to_string(), PromptTable::positional(vec![d]))].into(), 1);
    Fixture {
        name: name.into(),
        parties: both(
            model,
            ConversationPolicy::constant("coin"),
            ConversationPolicy::constant("coin"),
            0,
        ),
        width: 2,
        min_entropy: Some(-(p1.max(1.0 - p1)).log2()),
        description: format!("single token, Pr[1] = {p1}"),
    }
}

/// Messages of `len` fair tokens: one bit of entropy per token.
pub fn bit_per_token(len: usize) -> Fixture {
    let positions = (0..len).map(|_| fair()).collect();
    let model = binary_model([("free".to_string(), PromptTable::positional(positions))].into(), len);
    Fixture {
        name: format!("bit-per-token-{len}"),
        parties: both(
            model,
            ConversationPolicy::constant("free"),
            ConversationPolicy::constant("free"),
            0,
        ),
        width: (2 * len).min(62) as u32,
        min_entropy: Some(len as f64),
        description: format!("{len} fair tokens per message"),
    }
}

/// Two-atom rounds: a single token, `1` with probability 2/3. Small enough
/// for full end-to-end enumeration.
pub fn micro() -> Fixture {
    let d = Dist::new(vec![(0, 1.0 / 3.0), (1, 2.0 / 3.0)]).expect("micro");
    let model = binary_model([("coin".to_string(), PromptTable::positional(vec![d]))].into(), 1);
    Fixture {
        name: "micro".into(),
        parties: both(
            model,
            ConversationPolicy::constant("coin"),
            ConversationPolicy::constant("coin"),
            0,
        ),
        width: 2,
        min_entropy: Some(-(2f64 / 3.0).log2()),
        description: "one token per round, masses 1/3 and 2/3".into(),
    }
}

/// Every shipped fixture, by name.
pub fn library() -> Vec<Fixture> {
    vec![
        constant_min_entropy(1),
        constant_min_entropy(2),
        constant_min_entropy(3),
        skewed_two_token(),
        high_entropy(30),
        deterministic(),
        interleaved(2),
        fair_coin(),
        biased_coin(),
        bit_per_token(8),
        micro(),
    ]
}

/// A shipped fixture, or a member of a parametric family such as
/// `bit-per-token-64` or `high-entropy-20`.
pub fn by_name(name: &str) -> Result<Fixture> {
    if let Some(f) = library().into_iter().find(|f| f.name == name) {
        return Ok(f);
    }
    let unknown = || Error::Config(format!("unknown fixture {name:?}"));
    let (family, size) = name.rsplit_once('-').ok_or_else(unknown)?;
    let size: usize = size.parse().map_err(|_| unknown())?;
    match family {
        "const-minent" if (1..=6).contains(&size) => Ok(constant_min_entropy(size)),
        "high-entropy" if size > 4 && size <= 31 => Ok(high_entropy(size)),
        "bit-per-token" if (1..=4096).contains(&size) => Ok(bit_per_token(size)),
        "interleaved" if (1..=6).contains(&size) => Ok(interleaved(size)),
        _ => Err(unknown()),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    schema: u32,
    name: String,
    #[serde(default)]
    description: String,
    eligibility_k: usize,
    width: u32,
    #[serde(default)]
    min_entropy: Option<String>,
    models: BTreeMap<String, ModelFile>,
    parties: PartiesFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartiesFile {
    a: PolicyFile,
    b: PolicyFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    tokens: Vec<String>,
    terminator: String,
    max_response_len: usize,
    prompts: BTreeMap<String, PromptFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptFile {
    positions: Vec<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    overrides: Vec<OverrideFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideFile {
    prefix: Vec<String>,
    dist: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    model: String,
    #[serde(default)]
    context: String,
    #[serde(default)]
    cycle: Vec<String>,
    #[serde(default)]
    reply: Option<ReplyFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplyFile {
    short: String,
    long: String,
    k: usize,
}

fn dist_from_file(model_tokens: &[String], m: &BTreeMap<String, String>) -> Result<Dist> {
    let mut entries = Vec::new();
    for (name, p) in m {
        let t = model_tokens
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| Error::Config(format!("unknown token {name:?}")))?;
        entries.push((t as Token, parse_probability(p)?));
    }
    Dist::new(entries).map_err(|e| Error::Config(e.to_string()))
}

fn dist_to_file(model: &MockModel, d: &Dist) -> BTreeMap<String, String> {
    d.entries()
        .iter()
        .map(|&(t, p)| (model.alphabet[t as usize].clone(), format!("{p}")))
        .collect()
}

fn model_from_file(f: &ModelFile) -> Result<MockModel> {
    let mut all = f.tokens.clone();
    all.push(f.terminator.clone());
    let mut prompts = BTreeMap::new();
    for (id, pf) in &f.prompts {
        let positions = pf
            .positions
            .iter()
            .map(|m| dist_from_file(&all, m))
            .collect::<Result<Vec<_>>>()?;
        let mut overrides = BTreeMap::new();
        for o in &pf.overrides {
            let prefix = o
                .prefix
                .iter()
                .map(|n| {
                    f.tokens
                        .iter()
                        .position(|x| x == n)
                        .map(|i| i as Token)
                        .ok_or_else(|| Error::Config(format!("unknown token {n:?} in prefix")))
                })
                .collect::<Result<Vec<_>>>()?;
            overrides.insert(prefix, dist_from_file(&all, &o.dist)?);
        }
        prompts.insert(id.clone(), PromptTable { positions, overrides });
    }
    MockModel::new(f.tokens.clone(), f.terminator.clone(), f.max_response_len, prompts)
        .map_err(|e| Error::Config(e.to_string()))
}

fn model_to_file(m: &MockModel) -> ModelFile {
    let n = m.alphabet.len() - 1;
    ModelFile {
        tokens: m.alphabet[..n].to_vec(),
        terminator: m.alphabet[n].clone(),
        max_response_len: m.max_response_len,
        prompts: m
            .prompts
            .iter()
            .map(|(id, t)| {
                let positions = t.positions.iter().map(|d| dist_to_file(m, d)).collect();
                let overrides = t
                    .overrides
                    .iter()
                    .map(|(prefix, d)| OverrideFile {
                        prefix: prefix.iter().map(|&x| m.alphabet[x as usize].clone()).collect(),
                        dist: dist_to_file(m, d),
                    })
                    .collect();
                (id.clone(), PromptFile { positions, overrides })
            })
            .collect(),
    }
}

fn policy_from_file(p: &PolicyFile) -> Result<ConversationPolicy> {
    let selector = match (&p.reply, p.cycle.is_empty()) {
        (Some(r), true) => PromptSelector::Reply {
            short: r.short.clone(),
            long: r.long.clone(),
            k: r.k,
        },
        (None, false) => PromptSelector::Cycle(p.cycle.clone()),
        _ => {
            return Err(Error::Config(
                "policy needs exactly one of `cycle` or `reply`".into(),
            ))
        }
    };
    Ok(ConversationPolicy {
        private_context: p.context.clone(),
        selector,
    })
}

fn policy_to_file(model: &str, p: &ConversationPolicy) -> PolicyFile {
    let (cycle, reply) = match &p.selector {
        PromptSelector::Cycle(v) => (v.clone(), None),
        PromptSelector::Reply { short, long, k } => (
            Vec::new(),
            Some(ReplyFile {
                short: short.clone(),
                long: long.clone(),
                k: *k,
            }),
        ),
    };
    PolicyFile {
        model: model.into(),
        context: p.private_context.clone(),
        cycle,
        reply,
    }
}

impl Fixture {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: FixtureFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if f.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "fixture schema {} unsupported (expected {SCHEMA_VERSION})",
                f.schema
            )));
        }
        let get = |name: &str| -> Result<MockModel> {
            let mf = f
                .models
                .get(name)
                .ok_or_else(|| Error::Config(format!("unknown model {name:?}")))?;
            model_from_file(mf)
        };
        let ma = get(&f.parties.a.model)?;
        let mb = get(&f.parties.b.model)?;
        let min_entropy = f
            .min_entropy
            .as_deref()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad min_entropy {s:?}")))
            })
            .transpose()?;
        Ok(Fixture {
            name: f.name,
            parties: Parties {
                models: [ma, mb],
                policies: [
                    policy_from_file(&f.parties.a)?,
                    policy_from_file(&f.parties.b)?,
                ],
                k: f.eligibility_k,
            },
            width: f.width,
            min_entropy,
            description: f.description,
        })
    }

    pub fn to_toml(&self) -> String {
        let mut models = BTreeMap::new();
        models.insert("a".to_string(), model_to_file(&self.parties.models[0]));
        let b_name = if self.parties.models[1] == self.parties.models[0] {
            "a"
        } else {
            models.insert("b".to_string(), model_to_file(&self.parties.models[1]));
            "b"
        };
        let file = FixtureFile {
            schema: SCHEMA_VERSION,
            name: self.name.clone(),
            description: self.description.clone(),
            eligibility_k: self.parties.k,
            width: self.width,
            min_entropy: self.min_entropy.map(|c| format!("{c}")),
            models,
            parties: PartiesFile {
                a: policy_to_file("a", &self.parties.policies[0]),
                b: policy_to_file(b_name, &self.parties.policies[1]),
            },
        };
        toml::to_string(&file).expect("fixture serializes")
    }
}
