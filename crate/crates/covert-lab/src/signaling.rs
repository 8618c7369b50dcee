//! Signaling one uniform bit `o` over a binary symmetric channel with
//! noiseless feedback so the received bits are exactly uniform.
//!
//! Bits are `+1`/`-1` here; on the wire `+1` is the bit 1. Two schemes:
//! majority signaling reweights the uniform law by `2 sigma(beta S)` of the
//! terminal sum and decodes by sign; optimal signaling pins the less likely
//! hypothesis at `p` and decodes by MAP on the running posterior.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_crossover, Error, Result};
use crate::harness::stats::binomial_pmf;
use crate::prke::{prke_messages, PrkeBackend};
use crate::primitives::{hamming_distance, BitVector, Bsc, ChannelSpec};

/// Largest block length accepted by either scheme.
pub const MAX_BLOCK: usize = 10_000;

/// Log-odds magnitude beyond which posteriors are handled only as log-odds.
pub const LOG_ODDS_GUARD: f64 = 30.0;

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `beta` with `sigma(2 beta) = 1 - p`. Natural log.
pub fn beta_for_p(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "(0, 1/2)",
        });
    }
    Ok(0.5 * ((1.0 - p) / p).ln())
}

/// Bhattacharyya contraction per step of optimal signaling.
pub fn lambda_p(p: f64) -> f64 {
    (p.sqrt() + (1.0 - p).sqrt()) / std::f64::consts::SQRT_2
}

fn to_pm(bit: u8) -> i8 {
    if bit & 1 == 1 {
        1
    } else {
        -1
    }
}

fn to_bit(y: i8) -> u8 {
    (y > 0) as u8
}

/// `H[r][s] = E[w(s + W_r)]`, `w(s) = 2 sigma(beta s)`, stored for
/// `|s| <= n - r`, which is every entry the sequential sampler touches.
#[derive(Clone, Debug, PartialEq)]
pub struct HTable {
    n: usize,
    beta: f64,
    rows: Vec<Vec<f64>>,
}

impl HTable {
    pub fn build(n: usize, beta: f64) -> Result<Self> {
        if n == 0 || n > MAX_BLOCK {
            return Err(Error::Invalid(format!("horizon {n} outside 1..={MAX_BLOCK}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain {
                name: "beta",
                value: beta,
                domain: "[0, inf)",
            });
        }
        let mut rows = Vec::with_capacity(n + 1);
        let w0: Vec<f64> = (-(n as i64)..=n as i64)
            .map(|s| 2.0 * sigmoid(beta * s as f64))
            .collect();
        rows.push(w0);
        for r in 1..=n {
            let prev = &rows[r - 1];
            let half = (n - r) as i64;
            // prev is indexed from -(n-r+1)
            let row: Vec<f64> = (-half..=half)
                .map(|s| {
                    let i = (s + half + 1) as usize;
                    0.5 * prev[i + 1] + 0.5 * prev[i - 1]
                })
                .collect();
            rows.push(row);
        }
        Ok(HTable { n, beta, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn get(&self, r: usize, s: i64) -> f64 {
        let half = (self.n - r) as i64;
        assert!(s.abs() <= half, "H[{r}, {s}] outside the stored triangle");
        self.rows[r][(s + half) as usize]
    }

    /// Next aligned-bit probability with `r` steps remaining at aligned sum
    /// `s`.
    pub fn next_bias(&self, r: usize, s: i64) -> f64 {
        assert!(r >= 1 && r <= self.n);
        let up = self.get(r - 1, s + 1);
        let down = self.get(r - 1, s - 1);
        up / (up + down)
    }
}

pub fn build_h_table(n: usize, beta: f64) -> Result<HTable> {
    HTable::build(n, beta)
}

pub fn next_bias_majority(table: &HTable, r: usize, s: i64) -> f64 {
    table.next_bias(r, s)
}

/// Sender bias `a` giving received probability exactly `q` through
/// `BSC(p_t)`.
pub fn realize_bias(q: f64, p_t: f64) -> Result<f64> {
    check_crossover("p_t", p_t)?;
    const SLACK: f64 = 1e-12;
    if q < p_t - SLACK || q > 1.0 - p_t + SLACK {
        return Err(Error::Domain {
            name: "q",
            value: q,
            domain: "[p_t, 1 - p_t]",
        });
    }
    Ok(((q - p_t) / (1.0 - 2.0 * p_t)).clamp(0.0, 1.0))
}

/// `(q+, q-)` for posterior `w` and design bound `p`.
pub fn optimal_next_biases(w: f64, p: f64) -> (f64, f64) {
    optimal_biases_split(w, 1.0 - w, p)
}

/// Same as [`optimal_next_biases`] with `1 - w` supplied separately so it
/// keeps full precision near `w = 1`.
fn optimal_biases_split(w: f64, wc: f64, p: f64) -> (f64, f64) {
    if w >= 0.5 {
        ((0.5 - wc * p) / w, p)
    } else {
        (p, (0.5 - w * p) / wc)
    }
}

/// `w' = 2 w q+` after `+1`, `2 w (1 - q+)` after `-1`.
pub fn posterior_update(w: f64, q_plus: f64, y: i8) -> f64 {
    if y > 0 {
        2.0 * w * q_plus
    } else {
        2.0 * w * (1.0 - q_plus)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Majority,
    Optimal,
}

/// A block design shared by sender and receiver.
#[derive(Clone, Debug)]
pub enum Design {
    Majority { table: Arc<HTable> },
    Optimal { p: f64, n: usize },
}

impl Design {
    /// Majority design for odd `n` and channel bound `p`.
    pub fn majority(n: usize, p: f64) -> Result<Self> {
        Self::majority_with_beta(n, beta_for_p(p)?)
    }

    pub fn majority_with_beta(n: usize, beta: f64) -> Result<Self> {
        if n.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "majority signaling needs odd n, got {n}"
            )));
        }
        Ok(Design::Majority {
            table: Arc::new(HTable::build(n, beta)?),
        })
    }

    pub fn optimal(n: usize, p: f64) -> Result<Self> {
        // p = 0 is the noiseless limit: the first use carries the bit and
        // the posterior jumps to 0 or 1
        check_crossover("p", p)?;
        if n > MAX_BLOCK {
            return Err(Error::Invalid(format!("horizon {n} above {MAX_BLOCK}")));
        }
        Ok(Design::Optimal { p, n })
    }

    pub fn new(scheme: Scheme, n: usize, p: f64) -> Result<Self> {
        match scheme {
            Scheme::Majority => Self::majority(n, p),
            Scheme::Optimal => Self::optimal(n, p),
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            Design::Majority { .. } => Scheme::Majority,
            Design::Optimal { .. } => Scheme::Optimal,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Design::Majority { table } => table.n(),
            Design::Optimal { n, .. } => *n,
        }
    }

    /// Design bound: the crossover every target bias is feasible for.
    pub fn bound(&self) -> f64 {
        match self {
            Design::Majority { table } => sigmoid(-2.0 * table.beta()),
            Design::Optimal { p, .. } => *p,
        }
    }

    pub fn start(&self) -> BlockState {
        BlockState {
            design: self.clone(),
            t: 0,
            sum: 0,
            log_odds: 0.0,
        }
    }
}

/// Public state of one block after a received prefix. Sender and receiver
/// each hold one and update it from the same received bits.
#[derive(Clone, Debug)]
pub struct BlockState {
    design: Design,
    t: usize,
    sum: i64,
    log_odds: f64,
}

impl BlockState {
    pub fn step(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.design.n()
    }

    /// Posterior `Pr[o = +1 | prefix]` under the design (optimal scheme).
    pub fn posterior(&self) -> f64 {
        sigmoid(self.log_odds)
    }

    pub fn log_odds(&self) -> f64 {
        self.log_odds
    }

    pub fn sum(&self) -> i64 {
        self.sum
    }

    /// `(Pr[Y=+1 | o=+1], Pr[Y=+1 | o=-1])` for the next use.
    pub fn targets(&self) -> (f64, f64) {
        match &self.design {
            Design::Majority { table } => {
                let r = table.n() - self.t;
                (table.next_bias(r, self.sum), 1.0 - table.next_bias(r, -self.sum))
            }
            Design::Optimal { p, .. } => {
                let (w, wc) = (sigmoid(self.log_odds), sigmoid(-self.log_odds));
                optimal_biases_split(w, wc, *p)
            }
        }
    }

    pub fn observe(&mut self, y: i8) {
        if let Design::Optimal { .. } = self.design {
            let (qp, qm) = self.targets();
            self.log_odds += if y > 0 {
                (qp / qm).ln()
            } else {
                ((1.0 - qp) / (1.0 - qm)).ln()
            };
        }
        self.sum += y as i64;
        self.t += 1;
    }

    /// Sign of the sum (majority) or MAP with ties to `+1` (optimal).
    pub fn decode(&self) -> i8 {
        match self.design {
            Design::Majority { .. } => {
                if self.sum >= 0 {
                    1
                } else {
                    -1
                }
            }
            Design::Optimal { .. } => {
                if self.log_odds >= 0.0 {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

/// Sender choice for one use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenderStep {
    /// `Pr[X = +1]`.
    pub a: f64,
    /// Target `Pr[Y = +1]` for the sender's objective.
    pub target: f64,
    /// The crossover exceeded the design bound and the step was realized
    /// by the fallback rule.
    pub infeasible: bool,
}

/// Sender bias for objective `o` at actual crossover `p_t`.
///
/// When `p_t` exceeds the design bound the majority scheme clamps `a` to
/// `[0, 1]`. The optimal scheme instead keeps `w a+ + (1-w) a- = 1/2` with
/// the largest separation, so received bits stay exactly fair.
pub fn sender_step(state: &BlockState, o: i8, p_t: f64) -> SenderStep {
    let (qp, qm) = state.targets();
    let target = if o > 0 { qp } else { qm };
    let denom = 1.0 - 2.0 * p_t;
    let feasible = |q: f64| q >= p_t - 1e-12 && q <= 1.0 - p_t + 1e-12;
    if feasible(qp) && feasible(qm) {
        return SenderStep {
            a: ((target - p_t) / denom).clamp(0.0, 1.0),
            target,
            infeasible: false,
        };
    }
    let a = match state.design {
        Design::Majority { .. } => ((target - p_t) / denom).clamp(0.0, 1.0),
        Design::Optimal { .. } => {
            let w = state.posterior();
            let (ap, am) = if w >= 0.5 {
                (0.5 / w, 0.0)
            } else {
                (1.0, (0.5 - w) / (1.0 - w))
            };
            if o > 0 {
                ap
            } else {
                am
            }
        }
    };
    SenderStep {
        a,
        target: p_t + denom * a,
        infeasible: true,
    }
}

/// A channel with feedback whose next crossover the sender learns before
/// choosing the bit.
pub trait FeedbackChannel {
    /// Crossover of the next use.
    fn prepare<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64>;
    /// Sends `bit` on the prepared use and returns the received bit.
    fn send<R: Rng + ?Sized>(&mut self, bit: u8, rng: &mut R) -> Result<u8>;
}

impl FeedbackChannel for Bsc {
    fn prepare<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> Result<f64> {
        self.next_crossover().ok_or(Error::ChannelExhausted {
            requested: 1,
            remaining: 0,
        })
    }

    fn send<R: Rng + ?Sized>(&mut self, bit: u8, rng: &mut R) -> Result<u8> {
        Ok(self.send_bit(bit, rng)?.received)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorStep {
    pub w: f64,
    pub q_plus: f64,
    pub q_minus: f64,
    pub y: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalingRun {
    pub scheme: Scheme,
    pub objective: i8,
    pub sent: Vec<i8>,
    pub received: Vec<i8>,
    pub crossovers: Vec<f64>,
    pub biases: Vec<f64>,
    pub posterior: Vec<PosteriorStep>,
    pub decoded: i8,
    pub infeasible_steps: usize,
}

impl SignalingRun {
    pub fn error(&self) -> bool {
        self.decoded != self.objective
    }
}

/// Runs one block of `design` for objective `o` over `channel`.
pub fn run_block<C: FeedbackChannel, R: Rng + ?Sized>(
    design: &Design,
    o: i8,
    channel: &mut C,
    rng: &mut R,
) -> Result<SignalingRun> {
    if o != 1 && o != -1 {
        return Err(Error::Invalid(format!("objective must be +1 or -1, got {o}")));
    }
    let n = design.n();
    let mut state = design.start();
    let mut run = SignalingRun {
        scheme: design.scheme(),
        objective: o,
        sent: Vec::with_capacity(n),
        received: Vec::with_capacity(n),
        crossovers: Vec::with_capacity(n),
        biases: Vec::with_capacity(n),
        posterior: Vec::new(),
        decoded: 1,
        infeasible_steps: 0,
    };
    for _ in 0..n {
        let p_t = channel.prepare(rng)?;
        let step = sender_step(&state, o, p_t);
        let x: i8 = if rng.random::<f64>() < step.a { 1 } else { -1 };
        let y = to_pm(channel.send(to_bit(x), rng)?);
        if design.scheme() == Scheme::Optimal {
            let (qp, qm) = state.targets();
            run.posterior.push(PosteriorStep {
                w: state.posterior(),
                q_plus: qp,
                q_minus: qm,
                y,
            });
        }
        state.observe(y);
        run.sent.push(x);
        run.received.push(y);
        run.crossovers.push(p_t);
        run.biases.push(step.a);
        run.infeasible_steps += step.infeasible as usize;
    }
    run.decoded = state.decode();
    Ok(run)
}

/// Majority signaling with `beta` set from the channel bound.
pub fn run_majority_signaling<R: Rng + ?Sized>(
    o: i8,
    n: usize,
    channel: &ChannelSpec,
    rng: &mut R,
) -> Result<SignalingRun> {
    let design = Design::majority(n, channel.bound())?;
    run_block(&design, o, &mut Bsc::new(channel.clone()), rng)
}

pub fn run_optimal_signaling<R: Rng + ?Sized>(
    o: i8,
    n: usize,
    channel: &ChannelSpec,
    rng: &mut R,
) -> Result<SignalingRun> {
    if n == 0 {
        // no channel uses: the receiver can only guess its prior
        return Ok(SignalingRun {
            scheme: Scheme::Optimal,
            objective: o,
            sent: vec![],
            received: vec![],
            crossovers: vec![],
            biases: vec![],
            posterior: vec![],
            decoded: 1,
            infeasible_steps: 0,
        });
    }
    let design = Design::optimal(n, channel.bound())?;
    run_block(&design, o, &mut Bsc::new(channel.clone()), rng)
}

/// `E[sigma(-beta |W_n|)]` for a simple random walk `W_n`.
pub fn majority_exact_error(n: usize, beta: f64) -> f64 {
    (0..=n as u64)
        .map(|k| {
            let s = (2 * k as i64 - n as i64).unsigned_abs() as f64;
            binomial_pmf(n as u64, k, 0.5) * sigmoid(-beta * s)
        })
        .sum()
}

/// `(1/2) lambda(p)^n`.
pub fn optimal_error_bound(n: usize, p: f64) -> f64 {
    0.5 * lambda_p(p).powi(n as i32)
}

/// Smallest `n` with `(1/2) lambda(p)^n <= eta / T`.
pub fn optimal_n_per_bit(t: usize, eta: f64, p: f64) -> usize {
    let n = (t as f64 / (2.0 * eta)).ln() / (1.0 / lambda_p(p)).ln();
    n.ceil().max(1.0) as usize
}

/// Smallest odd `n` with `T * E[sigma(-beta |W_n|)] <= eta`.
pub fn majority_n_per_bit(t: usize, eta: f64, p: f64) -> Result<usize> {
    let beta = beta_for_p(p)?;
    let mut n = 1;
    while n <= MAX_BLOCK {
        if t as f64 * majority_exact_error(n, beta) <= eta {
            return Ok(n);
        }
        n += 2;
    }
    Err(Error::Invalid(format!(
        "no odd n <= {MAX_BLOCK} reaches error {eta} over {t} bits at p = {p}"
    )))
}

/// Channel-use budget `T * n_per_bit`.
pub fn channel_budget(t: usize, n_per_bit: usize) -> usize {
    t * n_per_bit
}

/// Exact laws `(Pr[Y=y | +1], Pr[Y=y | -1])` of every received string,
/// indexed by `y` read as bits (bit `i` set means `y_i = +1`), when every
/// use has crossover at most the design bound.
pub fn exact_received_laws(design: &Design) -> Result<Vec<(f64, f64)>> {
    let n = design.n();
    if n > 20 {
        return Err(Error::EnumerationCap {
            count: 1 << n.min(63),
            cap: 1 << 20,
        });
    }
    let mut out = vec![(0.0, 0.0); 1 << n];
    fn walk(state: BlockState, code: usize, depth: usize, pp: f64, pm: f64, out: &mut [(f64, f64)]) {
        if state.is_done() {
            out[code] = (pp, pm);
            return;
        }
        let (qp, qm) = state.targets();
        for y in [1i8, -1] {
            let mut next = state.clone();
            next.observe(y);
            let (fp, fm) = if y > 0 { (qp, qm) } else { (1.0 - qp, 1.0 - qm) };
            let c = code | ((y > 0) as usize) << depth;
            walk(next, c, depth + 1, pp * fp, pm * fm, out);
        }
    }
    walk(design.start(), 0, 0, 1.0, 1.0, &mut out);
    Ok(out)
}

/// A bit string sent as consecutive blocks of one design, one block per
/// bit. Sender and receiver both advance it from the received bits.
#[derive(Clone, Debug)]
pub struct BlockStream {
    design: Design,
    objectives: Vec<i8>,
    block: usize,
    state: BlockState,
    decoded: BitVector,
    uses: usize,
    infeasible: usize,
}

impl BlockStream {
    pub fn new(design: &Design, bits: &BitVector) -> Result<Self> {
        if design.n() == 0 {
            return Err(Error::Invalid("a stream needs at least one use per bit".into()));
        }
        Ok(BlockStream {
            design: design.clone(),
            objectives: bits.iter().map(to_pm).collect(),
            block: 0,
            state: design.start(),
            decoded: BitVector::zeros(0),
            uses: 0,
            infeasible: 0,
        })
    }

    pub fn is_done(&self) -> bool {
        self.block >= self.objectives.len()
    }

    pub fn uses(&self) -> usize {
        self.uses
    }

    pub fn infeasible_steps(&self) -> usize {
        self.infeasible
    }

    /// Block state of the current bit.
    pub fn state(&self) -> &BlockState {
        &self.state
    }

    /// `Pr[X = 1]` for the next use at crossover `p_t`.
    pub fn sender_bias(&self, p_t: f64) -> SenderStep {
        assert!(!self.is_done(), "stream already complete");
        sender_step(&self.state, self.objectives[self.block], p_t)
    }

    /// Draws the next sender bit at crossover `p_t`.
    pub fn sender_bit<R: Rng + ?Sized>(&mut self, p_t: f64, rng: &mut R) -> u8 {
        let step = self.sender_bias(p_t);
        self.infeasible += step.infeasible as usize;
        (rng.random::<f64>() < step.a) as u8
    }

    /// Feeds back the received bit.
    pub fn observe(&mut self, y: u8) {
        assert!(!self.is_done(), "stream already complete");
        self.state.observe(to_pm(y));
        self.uses += 1;
        if self.state.is_done() {
            self.decoded.push(to_bit(self.state.decode()));
            self.block += 1;
            self.state = self.design.start();
        }
    }

    pub fn decoded(&self) -> &BitVector {
        &self.decoded
    }
}

/// Receiver-side decoding of a stream from its received bits alone.
pub fn decode_stream(design: &Design, received: &BitVector) -> Result<BitVector> {
    let n = design.n();
    if n == 0 || !received.len().is_multiple_of(n) {
        return Err(Error::LengthMismatch {
            expected: n * (received.len() / n.max(1)),
            got: received.len(),
        });
    }
    let mut out = BitVector::zeros(0);
    let mut state = design.start();
    for y in received.iter() {
        state.observe(to_pm(y));
        if state.is_done() {
            out.push(to_bit(state.decode()));
            state = design.start();
        }
    }
    Ok(out)
}

/// Sends `bits` over `channel`, returning the stream and the received bits.
pub fn send_stream<C: FeedbackChannel, R: Rng + ?Sized>(
    design: &Design,
    bits: &BitVector,
    channel: &mut C,
    rng: &mut R,
) -> Result<(BlockStream, BitVector)> {
    let mut stream = BlockStream::new(design, bits)?;
    let mut received = BitVector::zeros(0);
    while !stream.is_done() {
        let p_t = channel.prepare(rng)?;
        let x = stream.sender_bit(p_t, rng);
        let y = channel.send(x, rng)?;
        stream.observe(y);
        received.push(y);
    }
    Ok((stream, received))
}

/// A PR-KE compiled into a key exchange over feedback channels: every
/// message bit becomes one signaling block.
#[derive(Clone, Debug)]
pub struct Compiler {
    pub backend: PrkeBackend,
    pub design: Design,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledSession {
    /// Received bits of Alice's and Bob's streams: the public transcript.
    pub received_a: BitVector,
    pub received_b: BitVector,
    pub key_a: BitVector,
    pub key_b: BitVector,
    pub agreed: bool,
    pub channel_uses: usize,
    /// Message bits decoded wrongly, both directions.
    pub bit_errors: usize,
    pub infeasible_steps: usize,
}

pub fn compile_prke(backend: PrkeBackend, scheme: Scheme, n_per_bit: usize, p: f64) -> Result<Compiler> {
    if n_per_bit == 0 {
        return Err(Error::Invalid("n_per_bit must be at least 1".into()));
    }
    Ok(Compiler {
        backend,
        design: Design::new(scheme, n_per_bit, p)?,
    })
}

impl Compiler {
    /// PR-KE transcript length `T`.
    pub fn transcript_len(&self) -> usize {
        self.backend.transcript_len()
    }

    pub fn channel_uses(&self) -> usize {
        channel_budget(self.transcript_len(), self.design.n())
    }

    pub fn run<CA, CB, R>(&self, chan_a: &mut CA, chan_b: &mut CB, rng: &mut R) -> Result<CompiledSession>
    where
        CA: FeedbackChannel,
        CB: FeedbackChannel,
        R: Rng + ?Sized,
    {
        let msgs = prke_messages(&self.backend, rng);
        let (sa, received_a) = send_stream(&self.design, &msgs.m_a, chan_a, rng)?;
        let (sb, received_b) = send_stream(&self.design, &msgs.m_b, chan_b, rng)?;
        let got_a = decode_stream(&self.design, &received_a)?;
        let got_b = decode_stream(&self.design, &received_b)?;
        debug_assert_eq!(&got_a, sa.decoded());
        let key_a = self.backend.derive(&msgs.secret_a, &got_b)?;
        let key_b = self.backend.derive(&msgs.secret_b, &got_a)?;
        let bit_errors = hamming_distance(&got_a, &msgs.m_a)? + hamming_distance(&got_b, &msgs.m_b)?;
        Ok(CompiledSession {
            agreed: key_a == key_b,
            channel_uses: sa.uses() + sb.uses(),
            infeasible_steps: sa.infeasible_steps() + sb.infeasible_steps(),
            received_a,
            received_b,
            key_a,
            key_b,
            bit_errors,
        })
    }

    /// Both directions over independent BSCs with the same schedule.
    pub fn run_bsc<R: Rng + ?Sized>(&self, spec: &ChannelSpec, rng: &mut R) -> Result<CompiledSession> {
        let mut a = Bsc::new(spec.clone());
        let mut b = Bsc::new(spec.clone());
        self.run(&mut a, &mut b, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_inverts_sigmoid() {
        for p in [0.1, 0.2, 0.3] {
            let b = beta_for_p(p).unwrap();
            assert!((sigmoid(2.0 * b) - (1.0 - p)).abs() < 1e-12);
        }
        assert!(beta_for_p(0.5).is_err());
        assert!(beta_for_p(0.0).is_err());
    }

    #[test]
    fn h_table_edges() {
        let t = HTable::build(10, 0.0).unwrap();
        for r in 0..=10 {
            for s in -((10 - r) as i64)..=(10 - r) as i64 {
                assert_eq!(t.get(r, s), 1.0);
            }
        }
        let t = HTable::build(10, 0.7).unwrap();
        assert!((t.get(1, 0) - 1.0).abs() < 1e-15);
        for r in 0..=10 {
            for s in 0..=(10 - r) as i64 {
                assert!((t.get(r, s) + t.get(r, -s) - 2.0).abs() < 1e-12);
            }
        }
        // at s = 0 the aligned bit leans toward the objective
        for r in 1..=10 {
            assert!((t.next_bias(r, 0) - t.get(r - 1, 1) / 2.0).abs() < 1e-15);
        }
        assert!((t.next_bias(1, 0) - sigmoid(0.7)).abs() < 1e-15);
        let flat = HTable::build(9, 0.0).unwrap();
        assert_eq!(flat.next_bias(5, 2), 0.5);
    }

    #[test]
    fn realize_bias_edges() {
        assert_eq!(realize_bias(0.1, 0.1).unwrap(), 0.0);
        assert_eq!(realize_bias(0.9, 0.1).unwrap(), 1.0);
        assert_eq!(realize_bias(0.5, 0.3).unwrap(), 0.5);
        assert!(realize_bias(0.05, 0.1).is_err());
    }

    #[test]
    fn optimal_bias_edges() {
        let (qp, qm) = optimal_next_biases(0.5, 0.2);
        assert!((qp - 0.8).abs() < 1e-15 && qm == 0.2);
        let (qp, _) = optimal_next_biases(1.0, 0.2);
        assert_eq!(qp, 0.5);
        assert_eq!(posterior_update(0.5, 0.5, 1), 0.5);
        assert!((posterior_update(0.5, 0.8, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn even_majority_rejected() {
        assert!(Design::majority(4, 0.2).is_err());
    }

    #[test]
    fn n_per_bit_helpers() {
        assert_eq!(optimal_n_per_bit(64, 0.01, 0.1), 73);
        let n = majority_n_per_bit(16, 0.01, 1e-4).unwrap();
        assert!(n % 2 == 1);
        assert!(16.0 * majority_exact_error(n, beta_for_p(1e-4).unwrap()) <= 0.01);
        assert!(16.0 * majority_exact_error(n - 2, beta_for_p(1e-4).unwrap()) > 0.01);
    }

    #[test]
    fn compiled_ideal_agrees_without_noise() {
        let c = compile_prke(PrkeBackend::ideal(8, 32, 1), Scheme::Optimal, 5, 0.0).unwrap();
        let spec = ChannelSpec::constant(0.0, 40).unwrap();
        let mut rng = crate::primitives::trial_rng(3, 3, 3);
        for _ in 0..50 {
            let s = c.run_bsc(&spec, &mut rng).unwrap();
            assert!(s.agreed);
            assert_eq!(s.channel_uses, c.channel_uses());
            assert_eq!(s.bit_errors, 0);
        }
    }

    #[test]
    fn stream_decodes_like_receiver() {
        let d = Design::optimal(7, 0.2).unwrap();
        let bits = BitVector::parse("1011001").unwrap();
        let mut ch = Bsc::new(ChannelSpec::constant(0.2, 49).unwrap());
        let mut rng = crate::primitives::trial_rng(9, 9, 9);
        let (st, rx) = send_stream(&d, &bits, &mut ch, &mut rng).unwrap();
        assert_eq!(&decode_stream(&d, &rx).unwrap(), st.decoded());
        assert_eq!(rx.len(), 49);
    }
}
