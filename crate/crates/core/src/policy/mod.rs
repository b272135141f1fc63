//! Hashed linear softmax policy over a closed token vocabulary.
//!
//! Logit of token `v` at position `i` after previous token `p` is the sum of
//! weights at slots `hash(facet, i, p, v)` over the context facets plus an
//! always-present `bias` facet. A current-observation facet of the form
//! `name+k=v` is also read as an aligned facet `name+@=v` by the `k`-th item
//! of the emission, keyed by the offset inside that item, so one weight serves
//! every item. The model is linear in the weights, so every gradient is
//! closed-form.

mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{Dialect, MacroMode, TokenClass, Vocabulary, END_TOKEN, SEP_TOKEN};
use crate::mdp::Context;
use crate::seeding::{hash_str, mix64};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

pub const DEFAULT_TABLE_BITS: u32 = 18;
const BIAS_FACET: &str = "bias";
/// Previous-token sentinel at position 0.
const BOS: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub dialect: Dialect,
    pub mode: MacroMode,
    pub table_bits: u32,
}

impl FeatureConfig {
    /// Identifies the feature map; weights are only meaningful under an equal hash.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = format!("hashed-softmax/v2|{:?}|{}|{}", self.dialect, self.mode, self.table_bits);
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Facet hashes of one context, computed once per turn.
#[derive(Clone, Debug)]
pub struct Features {
    hashes: Vec<u64>,
    /// `(item, hash)` of aligned facets.
    aligned: Vec<(usize, u64)>,
}

fn aligned_facet(facet: &str) -> Option<(usize, u64)> {
    let (lhs, value) = facet.split_once('=')?;
    let (name, k) = lhs.rsplit_once('+')?;
    let k: usize = k.parse().ok()?;
    Some((k, hash_str(&format!("{name}+@={value}"))))
}

impl Features {
    pub fn new(ctx: &Context) -> Self {
        let mut hashes = vec![hash_str(BIAS_FACET)];
        hashes.extend(ctx.facets().iter().map(|f| hash_str(f)));
        let aligned = ctx.current.facets.iter().filter_map(|f| aligned_facet(f)).collect();
        Self { hashes, aligned }
    }

    pub fn bias_only() -> Self {
        Self { hashes: vec![hash_str(BIAS_FACET)], aligned: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }
}

fn position_key(facet: u64, position: usize, prev: u64) -> u64 {
    mix64(facet ^ mix64((position as u64).wrapping_mul(0x9E37_79B9) ^ prev.rotate_left(17)))
}

#[derive(Clone, Debug)]
pub struct SoftmaxSequencePolicy {
    config: FeatureConfig,
    vocab: Vocabulary,
    weights: Vec<f64>,
    max_tokens: usize,
    /// Default sampling temperature.
    pub temperature: f64,
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("temperature must be positive and finite, got {t}")))
    }
}

/// Log-softmax of `logits / temperature`, max-shifted.
pub fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scaled.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    scaled.iter().map(|s| s - lse).collect()
}

/// Per-logit gradient of `A * log p_sampled`: `(1 - p_s) A` at the sampled
/// index and `-p_v A` elsewhere.
pub fn logit_gradient(probabilities: &[f64], sampled: usize, advantage: f64) -> Vec<f64> {
    probabilities
        .iter()
        .enumerate()
        .map(|(v, &p)| if v == sampled { (1.0 - p) * advantage } else { -p * advantage })
        .collect()
}

/// Entropy in nats of a log-probability vector.
pub fn entropy(logprobs: &[f64]) -> f64 {
    -logprobs.iter().map(|&lp| if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() * lp }).sum::<f64>()
}

impl SoftmaxSequencePolicy {
    /// All-zero weights: uniform over the vocabulary at every position.
    pub fn new(dialect: Dialect, mode: MacroMode, table_bits: u32) -> Result<Self> {
        if !(4..=26).contains(&table_bits) {
            return Err(Error::domain(format!("table_bits must lie in 4..=26, got {table_bits}")));
        }
        let vocab = Vocabulary::new(dialect);
        let max_tokens = vocab.max_action_tokens(mode);
        Ok(Self {
            config: FeatureConfig { dialect, mode, table_bits },
            vocab,
            weights: vec![0.0; 1 << table_bits],
            max_tokens,
            temperature: 0.8,
        })
    }

    /// Adds `strength` to the bias weight of every grammatical continuation.
    pub fn init_syntax_prior(&mut self, strength: f64) {
        let bias = hash_str(BIAS_FACET);
        let table = self.vocab.syntax_table(self.config.mode);
        for (i, row) in table.iter().enumerate() {
            for (prev_class, allowed) in row {
                let prevs: Vec<u64> = match prev_class {
                    None => vec![BOS],
                    Some(c) => self.vocab.tokens_of(*c).map(u64::from).collect(),
                };
                for prev in prevs {
                    let key = position_key(bias, i, prev);
                    for class in allowed {
                        for v in self.vocab.tokens_of(*class).collect::<Vec<_>>() {
                            let s = self.slot(key, v);
                            self.weights[s] += strength;
                        }
                    }
                }
            }
        }
    }

    /// Adds `strength` to the separator wherever another item may follow, so
    /// sampled macros lean toward their maximum length.
    pub fn init_continuation_prior(&mut self, strength: f64) {
        let bias = hash_str(BIAS_FACET);
        let table = self.vocab.syntax_table(self.config.mode);
        for (i, row) in table.iter().enumerate() {
            for (prev_class, allowed) in row {
                if !allowed.contains(&TokenClass::Sep) {
                    continue;
                }
                let prevs: Vec<u64> = match prev_class {
                    None => vec![BOS],
                    Some(c) => self.vocab.tokens_of(*c).map(u64::from).collect(),
                };
                for prev in prevs {
                    let s = self.slot(position_key(bias, i, prev), SEP_TOKEN);
                    self.weights[s] += strength;
                }
            }
        }
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn set_weights(&mut self, w: Vec<f64>) -> Result<()> {
        if w.len() != self.weights.len() {
            return Err(Error::domain(format!("expected {} weights, got {}", self.weights.len(), w.len())));
        }
        self.weights = w;
        Ok(())
    }

    #[inline]
    fn slot(&self, key: u64, v: u32) -> usize {
        (mix64(key ^ u64::from(v).wrapping_add(1).wrapping_mul(0xD6E8_FEB8_6659_FD93)) & ((1 << self.config.table_bits) - 1))
            as usize
    }

    /// Slot keys for the token following `prefix`.
    fn keys(&self, f: &Features, prefix: &[u32]) -> Vec<u64> {
        let prev = prefix.last().map_or(BOS, |&t| u64::from(t));
        let mut keys: Vec<u64> = f.hashes.iter().map(|&h| position_key(h, prefix.len(), prev)).collect();
        if !f.aligned.is_empty() {
            let item = prefix.iter().filter(|&&t| t == SEP_TOKEN).count();
            let offset = prefix.len() - prefix.iter().rposition(|&t| t == SEP_TOKEN).map_or(0, |i| i + 1);
            keys.extend(f.aligned.iter().filter(|(k, _)| *k == item).map(|&(_, h)| position_key(h, offset, prev)));
        }
        keys
    }

    /// Raw logits of the token following `prefix`.
    pub fn logits(&self, f: &Features, prefix: &[u32]) -> Vec<f64> {
        self.logits_from_keys(&self.keys(f, prefix))
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.len() > self.max_tokens {
            return Err(Error::domain(format!("{} tokens exceed the {} token limit", tokens.len(), self.max_tokens)));
        }
        match tokens.iter().find(|&&t| t as usize >= self.vocab.len()) {
            Some(t) => Err(Error::domain(format!("token {t} outside vocabulary"))),
            None => Ok(()),
        }
    }

    /// Total and per-token log-probabilities at temperature 1.
    pub fn action_logprob(&self, ctx: &Context, tokens: &[u32]) -> Result<(f64, Vec<f64>)> {
        self.action_logprob_at(&Features::new(ctx), tokens, 1.0)
    }

    /// Per-token log-probabilities of `tokens` under `softmax(logits / temperature)`.
    pub fn action_logprob_at(&self, f: &Features, tokens: &[u32], temperature: f64) -> Result<(f64, Vec<f64>)> {
        check_temperature(temperature)?;
        self.check_tokens(tokens)?;
        let per: Vec<f64> = tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| log_softmax(&self.logits(f, &tokens[..i]), temperature)[t as usize])
            .collect();
        Ok((per.iter().sum(), per))
    }

    /// Sample until the end token or the length limit.
    /// Returns tokens and their log-probabilities at `temperature`.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        ctx: &Context,
        temperature: f64,
        rng: &mut R,
    ) -> Result<(Vec<u32>, Vec<f64>)> {
        self.sample_with(&Features::new(ctx), temperature, rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        f: &Features,
        temperature: f64,
        rng: &mut R,
    ) -> Result<(Vec<u32>, Vec<f64>)> {
        self.sample_with_entropy(f, temperature, rng).map(|(t, l, _)| (t, l))
    }

    /// As [`Self::sample_with`], also returning the temperature-1 entropy at
    /// each sampled position.
    pub fn sample_with_entropy<R: Rng + ?Sized>(
        &self,
        f: &Features,
        temperature: f64,
        rng: &mut R,
    ) -> Result<(Vec<u32>, Vec<f64>, Vec<f64>)> {
        check_temperature(temperature)?;
        let mut tokens = Vec::new();
        let mut lps = Vec::new();
        let mut entropies = Vec::new();
        while tokens.len() < self.max_tokens {
            let logits = self.logits(f, &tokens);
            entropies.push(entropy(&log_softmax(&logits, 1.0)));
            let lp = log_softmax(&logits, temperature);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            // Fall back to the most likely token if rounding leaves `u` uncovered.
            let mut pick = argmax(&lp);
            for (v, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    pick = v;
                    break;
                }
            }
            tokens.push(pick as u32);
            lps.push(lp[pick]);
            if pick as u32 == END_TOKEN {
                break;
            }
        }
        Ok((tokens, lps, entropies))
    }

    /// Adds `coefficient * d/dθ Σ_i log π(tokens_i)` at `temperature` into `acc`.
    pub fn accumulate(
        &self,
        acc: &mut GradientAccumulator,
        f: &Features,
        tokens: &[u32],
        coefficient: f64,
        temperature: f64,
    ) -> Result<()> {
        self.logprob_and_accumulate(acc, f, tokens, temperature, |_| Ok(coefficient)).map(|_| ())
    }

    /// One forward pass: computes the per-token log-probabilities at
    /// `temperature`, asks `coefficient` for the turn's coefficient, then adds
    /// `coefficient * d/dθ Σ_i log π(tokens_i)` into `acc`. The coefficient is
    /// a constant; no gradient flows through it.
    pub fn logprob_and_accumulate(
        &self,
        acc: &mut GradientAccumulator,
        f: &Features,
        tokens: &[u32],
        temperature: f64,
        coefficient: impl FnOnce(&[f64]) -> Result<f64>,
    ) -> Result<Vec<f64>> {
        check_temperature(temperature)?;
        self.check_tokens(tokens)?;
        if acc.grad.len() != self.weights.len() {
            return Err(Error::domain("accumulator does not match the policy"));
        }
        let v_len = self.vocab.len();
        let mut slots = Vec::with_capacity(tokens.len());
        let mut logps = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let keys = self.keys(f, &tokens[..i]);
            // Vocabulary-major: slots of token v are `s[v * keys.len()..][..keys.len()]`.
            let s: Vec<usize> = (0..v_len as u32).flat_map(|v| keys.iter().map(move |&k| (k, v))).map(|(k, v)| self.slot(k, v)).collect();
            let logits: Vec<f64> = s.chunks(keys.len()).map(|c| c.iter().map(|&j| self.weights[j]).sum()).collect();
            logps.push(log_softmax(&logits, temperature));
            slots.push(s);
        }
        let per: Vec<f64> = tokens.iter().zip(&logps).map(|(&t, lp)| lp[t as usize]).collect();
        let c = coefficient(&per)?;
        if !c.is_finite() {
            return Err(Error::NonFinite(format!("gradient coefficient {c}")));
        }
        if c != 0.0 {
            for ((&t, lp), s) in tokens.iter().zip(&logps).zip(&slots) {
                let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
                let g = logit_gradient(&probs, t as usize, c / temperature);
                for (gv, chunk) in g.iter().zip(s.chunks(s.len() / v_len)) {
                    for &j in chunk {
                        acc.add(j, *gv);
                    }
                }
            }
        }
        Ok(per)
    }

    fn logits_from_keys(&self, keys: &[u64]) -> Vec<f64> {
        (0..self.vocab.len() as u32).map(|v| keys.iter().map(|&k| self.weights[self.slot(k, v)]).sum()).collect()
    }

    /// Mean per-position entropy (nats, temperature 1) along the given token prefixes.
    pub fn mean_entropy<'a>(&self, items: impl IntoIterator<Item = (&'a Features, &'a [u32])>) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for (f, tokens) in items {
            for i in 0..tokens.len().min(self.max_tokens) {
                total += entropy(&log_softmax(&self.logits(f, &tokens[..i]), 1.0));
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }

    /// θ ← θ + lr · g. Fails without touching θ if any entry would be non-finite.
    pub fn apply_gradient(&mut self, acc: &mut GradientAccumulator, learning_rate: f64) -> Result<()> {
        if acc.grad.len() != self.weights.len() {
            return Err(Error::domain("accumulator does not match the policy"));
        }
        acc.compact();
        let mut next = Vec::with_capacity(acc.touched.len());
        for &i in &acc.touched {
            let w = self.weights[i as usize] + learning_rate * acc.grad[i as usize];
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("updated weight at slot {i}")));
            }
            next.push(w);
        }
        for (&i, w) in acc.touched.iter().zip(next) {
            self.weights[i as usize] = w;
        }
        Ok(())
    }

    /// Which token classes end an emission; used by diagnostics.
    pub fn is_end(&self, token: u32) -> bool {
        self.vocab.class(token) == TokenClass::End
    }
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter().enumerate().fold(0, |b, (i, &x)| if x > xs[b] { i } else { b })
}

/// Dense gradient aligned with the policy weights. Nonzero slots are
/// tracked so clearing, scaling and applying cost only what was touched.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientAccumulator {
    pub grad: Vec<f64>,
    touched: Vec<u32>,
}

impl GradientAccumulator {
    pub fn zeros(policy: &SoftmaxSequencePolicy) -> Self {
        Self { grad: vec![0.0; policy.weights.len()], touched: Vec::new() }
    }

    #[inline]
    pub fn add(&mut self, slot: usize, value: f64) {
        if self.grad[slot] == 0.0 {
            self.touched.push(slot as u32);
        }
        self.grad[slot] += value;
    }

    /// Sort and deduplicate the touched-slot list.
    fn compact(&mut self) {
        self.touched.sort_unstable();
        self.touched.dedup();
    }

    pub fn merge(&mut self, other: &GradientAccumulator) {
        let mut idx = other.touched.clone();
        idx.sort_unstable();
        idx.dedup();
        for i in idx {
            self.add(i as usize, other.grad[i as usize]);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.compact();
        for &i in &self.touched {
            self.grad[i as usize] *= s;
        }
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.grad[i as usize] = 0.0;
        }
        self.touched.clear();
    }

    /// Slots that may hold a nonzero gradient, sorted.
    pub fn touched_slots(&mut self) -> &[u32] {
        self.compact();
        &self.touched
    }

    pub fn is_finite(&self) -> bool {
        self.touched.iter().all(|&i| self.grad[i as usize].is_finite())
    }

    pub fn norm(&mut self) -> f64 {
        self.compact();
        self.touched.iter().map(|&i| self.grad[i as usize].powi(2)).sum::<f64>().sqrt()
    }
}
