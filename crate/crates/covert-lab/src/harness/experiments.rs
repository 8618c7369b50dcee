//! The experiment registry. Every experiment is a pure function of its
//! config: per-trial generators come from `trial_rng(seed, domain, i)` and
//! results are folded in trial order, so the worker count never changes a
//! report.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

use super::config::{ExperimentConfig, Prob};
use super::report::{Metric, Report};
use super::stats::{Advantage, Interval, Proportion};
use crate::attacks::{
    prc_bound_check, required_samples, run_attack, shipped_prc_schemes, BiDegreeIndex, LspnIteration,
    MatchedNull, PlantedParity, Source, UniformNull, DEFAULT_INDEX_CAP,
};
use crate::bundle::{
    bundle_size, compute_bsc_exact, counts_choice_law, embed_atoms_with_counts, published_law, AtomTable,
    BundleCounts, BundleParams, DEFAULT_SEED_CAP_BITS,
};
use crate::covert::{
    count_vectors, covert_conversation, overlay_law_exact, rejection_overlay_transcript, run_covert_ke,
    bundle_overlay_transcript, KeyRegistry, PayloadPolicy, PipelineConfig, SessionKey, SourceCache,
};
use crate::error::{Error, Result};
use crate::harness::registry::ParamsRegistry;
use crate::harness::stats::tv_distance;
use crate::lspn::{run_protocol_with, LspnParams};
use crate::mockmodel::fixtures::{self, Fixture};
use crate::mockmodel::{run_conversation, Conversation, Speaker, Transcript};
use crate::primitives::{domain_tag, ext_canonical, lhl_epsilon, trial_rng, BitVector, ChannelSpec, ExtractorSeed};
use crate::prke::PrkeBackend;
use crate::signaling::{
    beta_for_p, channel_budget, compile_prke, exact_received_laws, lambda_p, optimal_error_bound,
    optimal_n_per_bit, run_majority_signaling, run_optimal_signaling, Design, HTable, Scheme,
};

/// Worker-count override for trial fan-out.
pub const WORKERS_ENV: &str = "COVERT_LAB_WORKERS";

type RunFn = fn(&ExperimentConfig) -> Result<Vec<Metric>>;

pub struct ExperimentInfo {
    pub id: &'static str,
    pub criterion: Option<u8>,
    pub summary: &'static str,
    run: RunFn,
}

static EXPERIMENTS: &[ExperimentInfo] = &[
    ExperimentInfo {
        id: "bundle-exactness",
        criterion: Some(1),
        summary: "exact published law of small bundles equals the source law",
        run: bundle_exactness,
    },
    ExperimentInfo {
        id: "bundle-bsc",
        criterion: Some(2),
        summary: "computed bundle crossover against empirical flips; crossover bound",
        run: bundle_bsc,
    },
    ExperimentInfo {
        id: "majority-signaling",
        criterion: Some(3),
        summary: "majority signaling: exact uniformity, bias odds, error scaling",
        run: majority_signaling,
    },
    ExperimentInfo {
        id: "optimal-signaling",
        criterion: Some(4),
        summary: "posterior matching: fairness, Bhattacharyya decay, error",
        run: optimal_signaling,
    },
    ExperimentInfo {
        id: "compiler",
        criterion: Some(5),
        summary: "ideal uniform-transcript key exchange compiled over a BSC",
        run: compiler,
    },
    ExperimentInfo {
        id: "lspn",
        criterion: Some(6),
        summary: "LSPN key exchange agreement and per-bit XOR bias",
        run: lspn,
    },
    ExperimentInfo {
        id: "prc-dichotomy",
        criterion: Some(7),
        summary: "public PRC error-or-distinguisher dichotomy on shipped schemes",
        run: prc_dichotomy,
    },
    ExperimentInfo {
        id: "fourier-attack",
        criterion: Some(8),
        summary: "two-block low-bi-degree Fourier score attack",
        run: fourier_attack,
    },
    ExperimentInfo {
        id: "keyless-pipeline",
        criterion: Some(9),
        summary: "covert key exchange through bundle embeddings; exact micro law",
        run: keyless_pipeline,
    },
    ExperimentInfo {
        id: "shared-key-overlay",
        criterion: Some(10),
        summary: "shared-key covert conversation throughput and zero-payload identity",
        run: shared_key_overlay,
    },
    ExperimentInfo {
        id: "undetectability-battery",
        criterion: Some(11),
        summary: "honest against overlay transcripts under five canned statistics",
        run: undetectability_battery,
    },
];

pub fn experiments() -> &'static [ExperimentInfo] {
    EXPERIMENTS
}

pub fn find_experiment(id: &str) -> Result<&'static ExperimentInfo> {
    EXPERIMENTS
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::UnknownExperiment(id.to_string()))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let info = find_experiment(&cfg.experiment)?;
    let start = Instant::now();
    let mut metrics = (info.run)(cfg)?;
    let passed = metrics.iter().filter(|m| m.pass).count();
    let total = metrics.len();
    if let Some(c) = info.criterion {
        metrics.push(Metric::new(
            &format!("criterion.{c}"),
            passed as f64 / total.max(1) as f64,
            "every check above passes",
            passed == total,
        ));
    }
    Ok(Report {
        config: cfg.clone(),
        criterion: info.criterion,
        metrics,
        runtime: start.elapsed(),
    })
}

/// One default config per registered experiment.
pub fn default_suite(seed: u64) -> Vec<ExperimentConfig> {
    EXPERIMENTS.iter().map(|e| ExperimentConfig::new(e.id, seed)).collect()
}

pub fn run_suite(seed: u64) -> Result<Vec<Report>> {
    default_suite(seed).iter().map(run_experiment).collect()
}

/// Re-runs the config echoed by `report_text`; `true` when the new report
/// is byte-identical.
pub fn replay(report_text: &str) -> Result<(Report, bool)> {
    let cfg = super::report::config_of_report(report_text)?;
    let report = run_experiment(&cfg)?;
    let same = report.to_jsonl() == report_text;
    Ok((report, same))
}

fn pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("worker pool")
}

/// `f(0..n)` on the worker pool, results in index order.
fn par_trials<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    pool().install(|| (0..n).into_par_iter().map(f).collect())
}

/// Like [`par_trials`] with a per-worker scratch value.
fn par_trials_with<T, S, I, F>(n: u64, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, u64) -> T + Sync + Send,
{
    pool().install(|| (0..n).into_par_iter().map_init(init, f).collect())
}

fn rng_for(cfg: &ExperimentConfig, domain: &str, i: u64) -> crate::primitives::LabRng {
    trial_rng(cfg.seed, domain_tag(&format!("{}/{domain}", cfg.experiment)), i)
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn proportion(flags: impl IntoIterator<Item = bool>) -> Proportion {
    let mut p = Proportion::default();
    for f in flags {
        p.add(f);
    }
    p
}

fn rate_metric(id: &str, p: Proportion, min: f64, allow_ci: bool) -> Metric {
    let ci = p.wilson95();
    let pass = if allow_ci { ci.hi >= min } else { p.estimate() >= min };
    let bound = if allow_ci {
        format!(">= {min} - CI")
    } else {
        format!(">= {min}")
    };
    Metric::new(id, p.estimate(), bound, pass).with_ci(ci)
}

// ---------------------------------------------------------------------------

fn default_fixture_names() -> Vec<String> {
    fixtures::library().into_iter().map(|f| f.name).collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ExactnessParams {
    fixtures: Vec<String>,
    bundle_sizes: Vec<usize>,
    max_atoms: usize,
    tolerance: f64,
}

impl Default for ExactnessParams {
    fn default() -> Self {
        ExactnessParams {
            fixtures: default_fixture_names(),
            bundle_sizes: vec![1, 2, 3, 4],
            max_atoms: 8,
            tolerance: 1e-12,
        }
    }
}

/// Prompts of both parties with their atom tables, skipping any whose law
/// has more than `max_atoms` atoms.
fn small_sources(f: &Fixture, max_atoms: usize) -> Result<Vec<(String, AtomTable)>> {
    let mut out: Vec<(String, AtomTable)> = Vec::new();
    for model in &f.parties.models {
        for prompt in model.prompts.keys() {
            if out.iter().any(|(p, _)| p == prompt) {
                continue;
            }
            match AtomTable::from_model(model, prompt, f.width, max_atoms) {
                Ok((atoms, _)) if atoms.len() <= max_atoms => out.push((prompt.clone(), atoms)),
                Ok(_) | Err(Error::EnumerationCap { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

fn bundle_exactness(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: ExactnessParams = cfg.params()?;
    let pps_per_case = cfg.trials_or(16);
    let mut cases = Vec::new();
    for name in &prm.fixtures {
        let f = fixtures::by_name(name)?;
        for (prompt, atoms) in small_sources(&f, prm.max_atoms)? {
            for &l in &prm.bundle_sizes {
                if l == 0 || l > 4 {
                    return Err(Error::Config(format!("bundle size {l} outside 1..=4")));
                }
                cases.push((f.name.clone(), f.width, f.min_entropy.unwrap_or(1.0), prompt.clone(), atoms.clone(), l));
            }
        }
    }
    let n = cases.len() as u64 * pps_per_case;
    let tvs = collect(par_trials(n, |i| -> Result<(f64, f64)> {
        let (name, w, c, prompt, atoms, l) = &cases[(i / pps_per_case) as usize];
        let mut rng = rng_for(cfg, &format!("{name}/{prompt}/{l}"), i % pps_per_case);
        let pp = BundleParams::random(i, *w, *l, *c, &mut rng)?;
        let index_law = published_law(&pp, atoms, 1 << 20)?;
        let mut atom_law = vec![0.0; atoms.len()];
        for (counts, pc) in count_vectors(&atoms.probs, *l as u64) {
            for beta in 0..2u8 {
                for (a, q) in atom_law.iter_mut().zip(counts_choice_law(&pp, atoms, &counts, beta)) {
                    *a += 0.5 * pc * q;
                }
            }
        }
        Ok((tv_distance(&index_law, &atoms.probs)?, tv_distance(&atom_law, &atoms.probs)?))
    }))?;
    let max_index = tvs.iter().map(|t| t.0).fold(0.0, f64::max);
    let max_atom = tvs.iter().map(|t| t.1).fold(0.0, f64::max);
    let bound = format!("<= {:e}", prm.tolerance);
    Ok(vec![
        Metric::new("cases", n as f64, "> 0", n > 0),
        Metric::new("max_tv_index_path", max_index, bound.clone(), max_index <= prm.tolerance),
        Metric::new("max_tv_atom_path", max_atom, bound, max_atom <= prm.tolerance),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BscParams {
    fixtures: Vec<String>,
    lambda: u32,
    bound_fraction: Prob,
}

impl Default for BscParams {
    fn default() -> Self {
        BscParams {
            fixtures: vec!["const-minent-1".into(), "const-minent-2".into(), "const-minent-3".into()],
            lambda: 16,
            bound_fraction: Prob::new("0.99").expect("literal"),
        }
    }
}

fn bundle_bsc(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: BscParams = cfg.params()?;
    let trials = cfg.trials_or(100_000);
    let mut metrics = Vec::new();
    for name in &prm.fixtures {
        let f = fixtures::by_name(name)?;
        let c = f
            .min_entropy
            .ok_or_else(|| Error::Config(format!("fixture {name} declares no min-entropy")))?;
        let prompt = Conversation::new(&f.parties).peek_prompt();
        let (atoms, _) = AtomTable::from_model(&f.parties.models[0], &prompt, f.width, 1 << 16)?;
        let l = bundle_size(prm.lambda, c);
        let eps = lhl_epsilon(c);
        let mut within = Proportion::default();
        for b in 0..2u8 {
            let rows = collect(par_trials(trials, |i| -> Result<(bool, f64)> {
                let mut rng = rng_for(cfg, &format!("{name}/{b}"), i);
                let pp = BundleParams::random(i, f.width, l, c, &mut rng)?;
                let counts = atoms.sample_counts(l, &mut rng);
                let out = embed_atoms_with_counts(&pp, &atoms, &counts, b, &mut rng);
                let bundle = BundleCounts::from_pairs(atoms.canonical.iter().copied().zip(counts));
                let p = compute_bsc_exact(&bundle, DEFAULT_SEED_CAP_BITS)?.p;
                Ok((!out.decode_correct, p))
            }))?;
            let flips = proportion(rows.iter().map(|r| r.0));
            let mean_p = rows.iter().map(|r| r.1).sum::<f64>() / trials as f64;
            within.merge(proportion(rows.iter().map(|r| r.1 <= 2.0 * eps)));
            let ci = flips.wilson95();
            metrics.push(
                Metric::new(
                    &format!("{name}.b{b}.flip_rate"),
                    flips.estimate(),
                    format!("CI contains mean computed crossover {mean_p:.6}"),
                    ci.contains(mean_p),
                )
                .with_ci(ci),
            );
        }
        metrics.push(
            Metric::new(
                &format!("{name}.crossover_within_2eps"),
                within.estimate(),
                format!(">= {} (L = {l}, 2 eps = {:.4})", prm.bound_fraction.value(), 2.0 * eps),
                within.estimate() >= prm.bound_fraction.value(),
            )
            .with_ci(within.wilson95()),
        );
    }
    Ok(metrics)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MajorityParams {
    p: Prob,
    exact_max_n: usize,
    odds_max_n: usize,
    n_small: usize,
    n_large: usize,
    ratio_lo: f64,
    ratio_hi: f64,
}

impl Default for MajorityParams {
    fn default() -> Self {
        MajorityParams {
            p: Prob::new("0.2").expect("literal"),
            exact_max_n: 12,
            odds_max_n: 64,
            n_small: 101,
            n_large: 401,
            ratio_lo: 1.6,
            ratio_hi: 2.4,
        }
    }
}

fn signaling_errors(cfg: &ExperimentConfig, domain: &str, trials: u64, run: impl Fn(i8, &mut crate::primitives::LabRng) -> Result<bool> + Sync + Send) -> Result<Proportion> {
    let flags = collect(par_trials(trials, |i| {
        let mut rng = rng_for(cfg, domain, i);
        let o = if i % 2 == 0 { 1 } else { -1 };
        run(o, &mut rng)
    }))?;
    Ok(proportion(flags))
}

fn majority_signaling(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: MajorityParams = cfg.params()?;
    let p = prm.p.value();
    let beta = beta_for_p(p)?;
    let mut worst_uniform = 0.0f64;
    for n in (1..=prm.exact_max_n).filter(|n| n % 2 == 1) {
        let laws = exact_received_laws(&Design::majority(n, p)?)?;
        let target = 0.5f64.powi(n as i32 - 1);
        for (pp, pm) in laws {
            worst_uniform = worst_uniform.max((pp + pm - target).abs());
        }
    }
    let mut worst_odds = 0.0f64;
    for n in (1..=prm.odds_max_n).filter(|n| n % 2 == 1) {
        let table = HTable::build(n, beta)?;
        for r in 1..=n {
            let half = (n - r) as i64;
            for s in (-half..=half).step_by(2) {
                let q = table.next_bias(r, s);
                worst_odds = worst_odds.max((q / (1.0 - q)).ln().abs() / (2.0 * beta));
            }
        }
    }
    let trials = cfg.trials_or(100_000);
    let err = |n: usize| {
        let spec = ChannelSpec::constant(p, n)?;
        signaling_errors(cfg, &format!("n{n}"), trials, |o, rng| {
            Ok(run_majority_signaling(o, n, &spec, rng)?.error())
        })
    };
    let small = err(prm.n_small)?;
    let large = err(prm.n_large)?;
    let ratio = small.estimate() / large.estimate().max(f64::MIN_POSITIVE);
    Ok(vec![
        Metric::new("uniformity_max_error", worst_uniform, "<= 1e-10", worst_uniform <= 1e-10),
        Metric::new(
            "odds_ratio_max_log_over_2beta",
            worst_odds,
            "<= 1 (odds within [e^-2beta, e^2beta])",
            worst_odds <= 1.0 + 1e-9,
        ),
        Metric::new(&format!("error_n{}", prm.n_small), small.estimate(), "reported", true).with_ci(small.wilson95()),
        Metric::new(&format!("error_n{}", prm.n_large), large.estimate(), "reported", true).with_ci(large.wilson95()),
        Metric::new(
            "error_ratio",
            ratio,
            format!("in [{}, {}]", prm.ratio_lo, prm.ratio_hi),
            (prm.ratio_lo..=prm.ratio_hi).contains(&ratio),
        ),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OptimalParams {
    p: Prob,
    n: usize,
    fairness_runs: u64,
    exact_max_n: usize,
}

impl Default for OptimalParams {
    fn default() -> Self {
        OptimalParams {
            p: Prob::new("0.1").expect("literal"),
            n: 40,
            fairness_runs: 10_000,
            exact_max_n: 12,
        }
    }
}

fn optimal_signaling(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: OptimalParams = cfg.params()?;
    let p = prm.p.value();
    let spec = ChannelSpec::constant(p, prm.n)?;
    let fair = collect(par_trials(prm.fairness_runs, |i| -> Result<f64> {
        let mut rng = rng_for(cfg, "fairness", i);
        let o = if i % 2 == 0 { 1 } else { -1 };
        let run = run_optimal_signaling(o, prm.n, &spec, &mut rng)?;
        Ok(run
            .posterior
            .iter()
            .map(|s| (s.w * s.q_plus + (1.0 - s.w) * s.q_minus - 0.5).abs())
            .fold(0.0, f64::max))
    }))?;
    let worst_fair = fair.into_iter().fold(0.0, f64::max);
    let mut worst_bhat = 0.0f64;
    for n in 1..=prm.exact_max_n {
        let laws = exact_received_laws(&Design::optimal(n, p)?)?;
        let b: f64 = laws.iter().map(|(a, c)| (a * c).sqrt()).sum();
        worst_bhat = worst_bhat.max(b / lambda_p(p).powi(n as i32));
    }
    let trials = cfg.trials_or(100_000);
    let errors = signaling_errors(cfg, "error", trials, |o, rng| Ok(run_optimal_signaling(o, prm.n, &spec, rng)?.error()))?;
    let bound = optimal_error_bound(prm.n, p);
    let ci = errors.wilson95();
    Ok(vec![
        Metric::new("fairness_max_deviation", worst_fair, "<= 1e-12", worst_fair <= 1e-12),
        Metric::new(
            "bhattacharyya_over_lambda_pow_n",
            worst_bhat,
            "<= 1 for n <= 12",
            worst_bhat <= 1.0 + 1e-12,
        ),
        Metric::new("error_rate", errors.estimate(), format!("<= {bound:.6} + CI"), ci.lo <= bound).with_ci(ci),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CompilerParams {
    message_len: usize,
    key_len: usize,
    eta: Prob,
    p: Prob,
    min_agreement: f64,
}

impl Default for CompilerParams {
    fn default() -> Self {
        CompilerParams {
            message_len: 32,
            key_len: 128,
            eta: Prob::new("0.01").expect("literal"),
            p: Prob::new("0.1").expect("literal"),
            min_agreement: 0.99,
        }
    }
}

fn compiler(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: CompilerParams = cfg.params()?;
    let backend = PrkeBackend::ideal(prm.message_len, prm.key_len, cfg.seed);
    let t = backend.transcript_len();
    let n = optimal_n_per_bit(t, prm.eta.value(), prm.p.value());
    let comp = compile_prke(backend, Scheme::Optimal, n, prm.p.value())?;
    let spec = ChannelSpec::constant(prm.p.value(), prm.message_len * n)?;
    let runs = collect(par_trials(cfg.trials_or(1000), |i| {
        let mut rng = rng_for(cfg, "session", i);
        comp.run_bsc(&spec, &mut rng).map(|s| (s.agreed, s.channel_uses))
    }))?;
    let agree = proportion(runs.iter().map(|r| r.0));
    let max_uses = runs.iter().map(|r| r.1).max().unwrap_or(0);
    let budget = channel_budget(t, n);
    let log_budget = t as f64 * (t as f64 / prm.eta.value()).log2();
    Ok(vec![
        rate_metric("key_agreement", agree, prm.min_agreement, true),
        Metric::new(
            "channel_uses",
            max_uses as f64,
            format!("<= T n = {t} x {n} = {budget}"),
            max_uses <= budget,
        ),
        Metric::new("uses_over_t_log_t_over_eta", budget as f64 / log_budget, "reported", true),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LspnExpParams {
    n: usize,
    k: usize,
    eta: Prob,
    p: Prob,
    lambda: usize,
    min_agreement: f64,
    min_bits: u64,
}

impl Default for LspnExpParams {
    fn default() -> Self {
        LspnExpParams {
            n: 256,
            k: 3,
            eta: Prob::new("0.0625").expect("literal"),
            p: Prob::new("0.0625").expect("literal"),
            lambda: 8,
            min_agreement: 0.99,
            min_bits: 1_000_000,
        }
    }
}

fn lspn(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: LspnExpParams = cfg.params()?;
    let params = LspnParams::new(prm.n, prm.k, prm.eta.value(), prm.p.value(), prm.lambda)?;
    let spec = ChannelSpec::constant(prm.p.value(), params.channel_uses())?;
    let runs = collect(par_trials(cfg.trials_or(1000), |i| {
        let mut rng = rng_for(cfg, "session", i);
        run_protocol_with(&params, &spec, false, &mut rng).map(|s| (s.agreed(), s.bit_agreements))
    }))?;
    let agree = proportion(runs.iter().map(|r| r.0));
    let bits = runs.len() as u64 * params.ell as u64;
    let flips = Proportion::new(bits - runs.iter().map(|r| r.1 as u64).sum::<u64>(), bits);
    let expected = params.xor_flip_prob();
    let ci = flips.wilson95();
    Ok(vec![
        rate_metric("key_agreement", agree, prm.min_agreement, false),
        Metric::new("ell", params.ell as f64, format!("> ell_min = {:.4}", params.ell_min()), params.ell as f64 > params.ell_min()),
        Metric::new(
            "bit_flip_rate",
            flips.estimate(),
            format!("CI contains piling-up value {expected:.6} over >= {} bits", prm.min_bits),
            ci.contains(expected) && bits >= prm.min_bits,
        )
        .with_ci(ci),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PrcParams {
    p: Prob,
    eps_tol: Prob,
    adv_tol: Prob,
}

impl Default for PrcParams {
    fn default() -> Self {
        PrcParams {
            p: Prob::new("0.1").expect("literal"),
            eps_tol: Prob::new("0.02").expect("literal"),
            adv_tol: Prob::new("0.05").expect("literal"),
        }
    }
}

fn prc_dichotomy(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: PrcParams = cfg.params()?;
    let schemes = shipped_prc_schemes();
    let trials = cfg.trials_or(20_000);
    let reports = collect(par_trials(schemes.len() as u64, |i| {
        let s = schemes[i as usize];
        let mut rng = rng_for(cfg, &s.name(), 0);
        prc_bound_check(s, prm.p.value(), trials, &mut rng)
    }))?;
    let mut metrics = Vec::new();
    for r in reports {
        let name = r.scheme.name();
        metrics.push(Metric::new(&format!("{name}.epsilon_hat"), r.epsilon_hat, "reported", true).with_ci(r.epsilon_ci));
        metrics.push(Metric::new(
            &format!("{name}.dichotomy"),
            r.advantage,
            format!(
                "eps_hat >= p/4 - {} or advantage >= {}",
                prm.eps_tol.value(),
                prm.adv_tol.value()
            ),
            r.dichotomy_holds(prm.eps_tol.value(), prm.adv_tol.value()),
        ));
    }
    Ok(metrics)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FourierParams {
    delta: Prob,
    d: usize,
    ell: usize,
    sample_constant: f64,
    min_correct: f64,
    lspn_n: usize,
    lspn_k: usize,
    lspn_eta: Prob,
    lspn_p: Prob,
    lspn_m: u64,
    lspn_reps: u64,
    min_sigma: f64,
}

impl Default for FourierParams {
    fn default() -> Self {
        FourierParams {
            delta: Prob::new("0.3").expect("literal"),
            d: 2,
            ell: 16,
            sample_constant: 16.0,
            min_correct: 2.0 / 3.0,
            lspn_n: 16,
            lspn_k: 1,
            lspn_eta: Prob::new("0.0625").expect("literal"),
            lspn_p: Prob::new("0.0625").expect("literal"),
            lspn_m: 1 << 20,
            lspn_reps: 5,
            min_sigma: 3.0,
        }
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

fn fourier_attack(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: FourierParams = cfg.params()?;
    let delta = prm.delta.value();
    let size = BiDegreeIndex::new(prm.ell, prm.ell, prm.d, DEFAULT_INDEX_CAP)?.len() as u64;
    let m = required_samples(size, delta, prm.sample_constant);
    let reps = cfg.trials_or(30);
    let planted = PlantedParity::with_correlation(prm.ell, prm.ell, 1 << 3, 1 << 11, delta);
    let null = UniformNull {
        ell_a: prm.ell,
        ell_b: prm.ell,
    };
    let rows = collect(par_trials(2 * reps, |i| {
        let mut rng = rng_for(cfg, "planted", i);
        if i % 2 == 0 {
            run_attack(&mut planted.clone(), prm.d, delta, m, &mut rng).map(|r| (r.verdict == Source::Protocol, r.score))
        } else {
            run_attack(&mut null.clone(), prm.d, delta, m, &mut rng).map(|r| (r.verdict == Source::Null, r.score))
        }
    }))?;
    let proto = proportion(rows.iter().step_by(2).map(|r| r.0));
    let nul = proportion(rows.iter().skip(1).step_by(2).map(|r| r.0));
    let proto_scores: Vec<f64> = rows.iter().step_by(2).map(|r| r.1).collect();
    let null_scores: Vec<f64> = rows.iter().skip(1).step_by(2).map(|r| r.1).collect();

    let lp = LspnParams::new(prm.lspn_n, prm.lspn_k, prm.lspn_eta.value(), prm.lspn_p.value(), 8)?;
    let sampler = LspnIteration::new(lp, &mut rng_for(cfg, "lspn-matrix", 0))?;
    let lrows = collect(par_trials(2 * prm.lspn_reps, |i| {
        let mut rng = rng_for(cfg, "lspn", i);
        if i % 2 == 0 {
            run_attack(&mut sampler.clone(), prm.d, delta, prm.lspn_m, &mut rng).map(|r| r.score)
        } else {
            run_attack(&mut MatchedNull(sampler.clone()), prm.d, delta, prm.lspn_m, &mut rng).map(|r| r.score)
        }
    }))?;
    let lp_scores: Vec<f64> = lrows.iter().step_by(2).copied().collect();
    let ln_scores: Vec<f64> = lrows.iter().skip(1).step_by(2).copied().collect();
    let (mp, vp) = mean_var(&lp_scores);
    let (mn, vn) = mean_var(&ln_scores);
    let sigma = ((vp + vn) / prm.lspn_reps as f64).sqrt();
    let z = (mp - mn) / sigma.max(f64::MIN_POSITIVE);
    Ok(vec![
        Metric::new("samples_per_block", m as f64, format!("= 16 |L_d| / delta^4, |L_d| = {size}"), true),
        rate_metric("protocol_verdict_rate", proto, prm.min_correct, false),
        rate_metric("null_verdict_rate", nul, prm.min_correct, false),
        Metric::new("protocol_mean_score", mean_var(&proto_scores).0, format!("threshold {}", delta * delta / 4.0), true),
        Metric::new("null_mean_score", mean_var(&null_scores).0, "reported", true),
        Metric::new("lspn_iteration_mean_score", mp, "reported", true),
        Metric::new("lspn_matched_null_mean_score", mn, "reported", true),
        Metric::new("lspn_separation_sigma", z, format!(">= {}", prm.min_sigma), z >= prm.min_sigma),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PipelineParams {
    fixture: String,
    message_len: usize,
    key_len: usize,
    eta: Prob,
    design_p: Prob,
    bundle_lambda: u32,
    max_rounds: usize,
    min_agreement: f64,
    micro_fixture: String,
    micro_bundle_size: usize,
    micro_design_p: Prob,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            fixture: "const-minent-2".into(),
            message_len: 32,
            key_len: 128,
            eta: Prob::new("0.01").expect("literal"),
            design_p: Prob::new("0.2").expect("literal"),
            bundle_lambda: 16,
            max_rounds: 100_000,
            min_agreement: 0.97,
            micro_fixture: "micro".into(),
            micro_bundle_size: 4,
            micro_design_p: Prob::new("0.25").expect("literal"),
        }
    }
}

fn keyless_pipeline(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: PipelineParams = cfg.params()?;
    let f = fixtures::by_name(&prm.fixture)?;
    let backend = PrkeBackend::ideal(prm.message_len, prm.key_len, cfg.seed);
    let n = optimal_n_per_bit(backend.transcript_len(), prm.eta.value(), prm.design_p.value());
    let comp = compile_prke(backend, Scheme::Optimal, n, prm.design_p.value())?;
    let pcfg = PipelineConfig::for_fixture(&f, prm.bundle_lambda, prm.max_rounds)?;
    let runs = collect(par_trials_with(cfg.trials_or(1000), SourceCache::new, |cache, i| {
        let mut rng = rng_for(cfg, "session", i);
        let mut registry = ParamsRegistry::new();
        run_covert_ke(&f, &comp, &pcfg, cache, &mut registry, &mut rng)
            .map(|r| (r.agreed, r.mean_crossover, r.infeasible_steps, r.transcript.len()))
    }))?;
    let agree = proportion(runs.iter().map(|r| r.0));
    let mean_cross = runs.iter().map(|r| r.1).sum::<f64>() / runs.len().max(1) as f64;
    let infeasible: usize = runs.iter().map(|r| r.2).sum();
    let rounds = runs.iter().map(|r| r.3).max().unwrap_or(0);
    let micro = fixtures::by_name(&prm.micro_fixture)?;
    let design = Design::optimal(1, prm.micro_design_p.value())?;
    let tv = overlay_law_exact(&micro, &design, prm.micro_bundle_size, 1 << 12)?.tv();
    Ok(vec![
        rate_metric("key_agreement", agree, prm.min_agreement, false),
        Metric::new("uses_per_bit", n as f64, format!("design crossover {}", prm.design_p.value()), true),
        Metric::new("mean_crossover", mean_cross, "reported", true),
        Metric::new("infeasible_steps", infeasible as f64, "reported", true),
        Metric::new("max_rounds_used", rounds as f64, format!("<= {}", prm.max_rounds), rounds <= prm.max_rounds),
        Metric::new("micro_transcript_tv", tv, "<= 1e-10", tv <= 1e-10),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OverlayParams {
    tokens_per_message: usize,
    rounds: usize,
    payload_bits: usize,
    repetition: usize,
    min_bits: usize,
    min_success: f64,
    identical_runs: u64,
}

impl Default for OverlayParams {
    fn default() -> Self {
        OverlayParams {
            tokens_per_message: 64,
            rounds: 8,
            payload_bits: 128,
            repetition: 3,
            min_bits: 64,
            min_success: 0.99,
            identical_runs: 100,
        }
    }
}

fn shared_key_overlay(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: OverlayParams = cfg.params()?;
    let f = fixtures::bit_per_token(prm.tokens_per_message);
    let runs = collect(par_trials(cfg.trials_or(1000), |i| -> Result<(bool, usize, bool)> {
        let mut rng = rng_for(cfg, "run", i);
        let key = SessionKey::random(128, &mut rng)?;
        let payload = PayloadPolicy {
            bits: [
                BitVector::random(prm.payload_bits, &mut rng),
                BitVector::random(prm.payload_bits, &mut rng),
            ],
            repetition: prm.repetition,
        };
        let run = covert_conversation(&f.parties, &payload, &key, &mut KeyRegistry::new(), prm.rounds, &mut rng)?;
        let ok = run.error_free() && run.recovered_bits() >= prm.min_bits;
        Ok((ok, run.recovered_bits(), run.within_rate_ceiling()))
    }))?;
    let success = proportion(runs.iter().map(|r| r.0));
    let min_bits = runs.iter().map(|r| r.1).min().unwrap_or(0);
    let ceiling = runs.iter().all(|r| r.2);
    let identical = collect(par_trials(prm.identical_runs, |i| -> Result<bool> {
        let key = SessionKey::random(128, &mut rng_for(cfg, "zero-key", i))?;
        let covert = covert_conversation(
            &f.parties,
            &PayloadPolicy::empty(),
            &key,
            &mut KeyRegistry::new(),
            prm.rounds,
            &mut rng_for(cfg, "zero", i),
        )?;
        let honest = run_conversation(&f.parties, prm.rounds, &mut rng_for(cfg, "zero", i))?;
        Ok(serde_json::to_vec(&covert.transcript).expect("transcript serializes")
            == serde_json::to_vec(&honest).expect("transcript serializes"))
    }))?;
    let identical = proportion(identical);
    Ok(vec![
        rate_metric("error_free_with_min_bits", success, prm.min_success, false),
        Metric::new("min_recovered_bits", min_bits as f64, "reported", true),
        Metric::new("rate_ceiling_respected", ceiling as u8 as f64, "recovered bits <= empirical entropy", ceiling),
        rate_metric("zero_payload_identical", identical, 1.0, false),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BatteryParams {
    bundle_fixture: String,
    rejection_fixture: String,
    rounds: usize,
    bundle_lambda: u32,
    max_tries: usize,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            bundle_fixture: "const-minent-2".into(),
            rejection_fixture: "high-entropy-30".into(),
            rounds: 2,
            bundle_lambda: 16,
            max_tries: 16,
        }
    }
}

pub const BATTERY_STATISTICS: [&str; 5] = ["first_token", "second_token", "first_tokens_xor", "fixed_seed_ext", "second_round_weight_parity"];

/// The five canned 0/1 statistics of a transcript.
pub fn battery_statistics(f: &Fixture, seed: &ExtractorSeed, t: &Transcript) -> [bool; 5] {
    let r0 = &t.rounds[0].message;
    let r1 = &t.rounds[1].message;
    let tok = |m: &Vec<u16>, j: usize| m.get(j).copied().unwrap_or(0) == 1;
    let x = f.parties.models[0].canonical(r0, f.width);
    [
        tok(r0, 0),
        tok(r0, 1),
        tok(r0, 0) ^ tok(r1, 0),
        ext_canonical(seed, x) == 1,
        r1.iter().filter(|&&t| t == 1).count() % 2 == 1,
    ]
}

fn battery_path<F>(cfg: &ExperimentConfig, path: &str, f: &Fixture, rounds: usize, overlay: F) -> Result<Vec<Metric>>
where
    F: Fn(&mut SourceCache, &mut crate::primitives::LabRng) -> Result<Transcript> + Sync + Send,
{
    if rounds < 2 {
        return Err(Error::Config("the battery needs at least two rounds".into()));
    }
    let seed = ExtractorSeed::from_index(domain_tag(path) & ((1 << (f.width + 1)) - 1), f.width)?;
    let trials = cfg.trials_or(100_000);
    let honest = collect(par_trials(trials, |i| {
        let mut rng = rng_for(cfg, &format!("{path}/honest"), i);
        run_conversation(&f.parties, rounds, &mut rng).map(|t| battery_statistics(f, &seed, &t))
    }))?;
    let covert = collect(par_trials_with(trials, SourceCache::new, |cache, i| {
        let mut rng = rng_for(cfg, &format!("{path}/overlay"), i);
        overlay(cache, &mut rng).map(|t| battery_statistics(f, &seed, &t))
    }))?;
    Ok(BATTERY_STATISTICS
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let adv = Advantage::from_counts(
                proportion(honest.iter().map(|h| h[s])),
                proportion(covert.iter().map(|h| h[s])),
            );
            Metric::new(
                &format!("{path}.{name}"),
                adv.advantage,
                format!("<= CI width {:.6}", adv.ci.width()),
                adv.within_ci_width(),
            )
            .with_ci(adv.ci)
        })
        .collect())
}

fn undetectability_battery(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let prm: BatteryParams = cfg.params()?;
    let fb = fixtures::by_name(&prm.bundle_fixture)?;
    let pcfg = PipelineConfig::for_fixture(&fb, prm.bundle_lambda, prm.rounds)?;
    let mut metrics = battery_path(cfg, "bundle", &fb, prm.rounds, |cache, rng| {
        bundle_overlay_transcript(&fb, &pcfg, cache, prm.rounds, rng)
    })?;
    let fr = fixtures::by_name(&prm.rejection_fixture)?;
    metrics.extend(battery_path(cfg, "rejection", &fr, prm.rounds, |_, rng| {
        rejection_overlay_transcript(&fr, prm.max_tries, prm.rounds, rng)
    })?);
    Ok(metrics)
}

/// Interval of a mean of 0/1 flags, for callers outside the registry.
pub fn flag_interval(flags: &[bool]) -> Interval {
    proportion(flags.iter().copied()).wilson95()
}

/// Speaker of round `i`, re-exported for report consumers.
pub fn speaker_of_round(i: usize) -> Speaker {
    Speaker::for_round(i)
}

/// Uniform bit helper kept for config-driven payloads.
pub fn random_payload<R: Rng + ?Sized>(len: usize, rng: &mut R) -> BitVector {
    BitVector::random(len, rng)
}
