//! Greedy decoding and nucleus (top-p) sampling with per-step instrumentation.
//!
//! Ordering is total everywhere: tokens are ranked by probability
//! (descending) and then by id (ascending). The nucleus is the shortest
//! prefix of that ranking whose cumulative probability reaches `top_p`, so a
//! token holding at least `top_p` of the mass forms a nucleus on its own and
//! the step degenerates to greedy.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::lm::LanguageModel;
use crate::{rng, Error, Result, TokenId, EOS_ID};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase", deny_unknown_fields)]
pub enum Strategy {
    Greedy,
    Nucleus { top_p: f64 },
}

impl Strategy {
    /// `"greedy"` or `"p=<top_p>"`.
    pub fn label(&self) -> alloc::string::String {
        match self {
            Strategy::Greedy => "greedy".into(),
            Strategy::Nucleus { top_p } => format!("p={top_p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    #[serde(flatten)]
    pub strategy: Strategy,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            temperature: 1.0,
            max_new_tokens: 512,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Strategy::Nucleus { top_p } = self.strategy {
            validate_top_p(top_p, "decode.top_p")?;
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config(
                "decode.temperature",
                "must be finite and > 0",
            ));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::config("decode.max_new_tokens", "must be at least 1"));
        }
        Ok(())
    }
}

pub(crate) fn validate_top_p(top_p: f64, field: &str) -> Result<()> {
    if top_p > 0.0 && top_p <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{top_p} is outside (0, 1]")))
    }
}

/// What happened at one generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(rename = "i")]
    pub step_index: usize,
    #[serde(rename = "tok")]
    pub chosen_token: TokenId,
    /// Probability of the chosen token after truncation and renormalization.
    #[serde(rename = "p")]
    pub chosen_prob: f64,
    /// Largest probability before truncation.
    #[serde(rename = "pmax")]
    pub raw_max_prob: f64,
    #[serde(rename = "nsz")]
    pub nucleus_size: usize,
    /// The nucleus held a single token, so the step could not be random.
    #[serde(rename = "det")]
    pub deterministic: bool,
    /// Pre-truncation mass inside the nucleus.
    #[serde(rename = "mass")]
    pub cumulative_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Eos,
    Cap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    /// Teacher-forced probability of each prefix token after the first.
    pub prefix_probs: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub generated: Vec<TokenId>,
    pub stop_reason: StopReason,
}

impl DecodeTrace {
    pub fn deterministic_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.deterministic).count()
    }
}

/// Highest-probability token; ties go to the lowest id.
///
/// # Panics
///
/// Panics on an empty distribution.
pub fn greedy_pick(dist: &[f64]) -> TokenId {
    assert!(!dist.is_empty(), "empty distribution");
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate().skip(1) {
        if p > dist[best] {
            best = i;
        }
    }
    best as TokenId
}

/// The truncated, renormalized distribution nucleus sampling draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct Nucleus {
    /// Tokens in rank order (probability descending, id ascending).
    pub tokens: Vec<TokenId>,
    /// Renormalized probabilities, parallel to `tokens`.
    pub probs: Vec<f64>,
    /// Pre-truncation mass of the nucleus.
    pub mass: f64,
}

impl Nucleus {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Tokens ranked by probability descending, then id ascending.
pub fn rank_tokens(dist: &[f64]) -> Vec<TokenId> {
    let mut order: Vec<TokenId> = (0..dist.len() as TokenId).collect();
    order.sort_by(|&a, &b| {
        dist[b as usize]
            .total_cmp(&dist[a as usize])
            .then(a.cmp(&b))
    });
    order
}

/// Shortest rank-order prefix whose cumulative probability is `>= top_p`,
/// renormalized to sum to one. If rounding keeps the running sum below
/// `top_p`, the whole vocabulary is the nucleus.
pub fn nucleus_truncate(dist: &[f64], top_p: f64) -> Nucleus {
    assert!(!dist.is_empty(), "empty distribution");
    let best = greedy_pick(dist);
    let max = dist[best as usize];
    if max >= top_p {
        return Nucleus {
            tokens: alloc::vec![best],
            probs: alloc::vec![1.0],
            mass: max,
        };
    }
    let order = rank_tokens(dist);
    let mut mass = 0.0;
    let mut cut = order.len();
    for (i, &t) in order.iter().enumerate() {
        mass += dist[t as usize];
        if mass >= top_p {
            cut = i + 1;
            break;
        }
    }
    let tokens: Vec<TokenId> = order[..cut].to_vec();
    let probs = tokens.iter().map(|&t| dist[t as usize] / mass).collect();
    Nucleus {
        tokens,
        probs,
        mass,
    }
}

/// Inverse-CDF pick for a uniform draw `u` in `[0, 1)`: the first token whose
/// cumulative renormalized probability exceeds `u`.
pub fn sample_with_uniform(nucleus: &Nucleus, u: f64) -> TokenId {
    let mut acc = 0.0;
    for (&t, &p) in nucleus.tokens.iter().zip(&nucleus.probs) {
        acc += p;
        if u < acc {
            return t;
        }
    }
    // Rounding left `acc` a hair below one: take the last token with mass.
    let last = nucleus
        .probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(nucleus.len() - 1);
    nucleus.tokens[last]
}

/// Draws one token from the nucleus. A singleton nucleus returns its token
/// without touching the generator.
pub fn sample_token(nucleus: &Nucleus, rng: &mut rng::Rng) -> TokenId {
    if nucleus.len() == 1 {
        return nucleus.tokens[0];
    }
    sample_with_uniform(nucleus, rng.gen::<f64>())
}

/// Rescales `p_i` to `p_i^(1/T)` and renormalizes. `T == 1` is the identity.
pub fn apply_temperature(dist: &mut [f64], temperature: f64) {
    if temperature == 1.0 {
        return;
    }
    let inv = 1.0 / temperature;
    let mut total = 0.0;
    for p in dist.iter_mut() {
        *p = libm::pow(*p, inv);
        total += *p;
    }
    for p in dist.iter_mut() {
        *p /= total;
    }
}

/// Probability of each token of `tokens` after the first, given the tokens
/// before it.
pub fn trace_prefix<M: LanguageModel + ?Sized>(model: &M, tokens: &[TokenId]) -> Vec<f64> {
    (1..tokens.len())
        .map(|i| model.token_prob(&tokens[..i], tokens[i]))
        .collect()
}

/// Seed of the generator used for one probe.
pub fn probe_seed(seed: u64, probe_id: &str) -> u64 {
    rng::mix(seed, probe_id)
}

/// Continues `prefix` until the model emits end-of-sequence or
/// `max_new_tokens` tokens were produced.
///
/// The sampling generator is seeded from `(config.seed, probe_id)` alone, so
/// the trace does not depend on what else runs or in which order.
pub fn generate<M: LanguageModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    config: &DecodeConfig,
    probe_id: &str,
) -> Result<DecodeTrace> {
    if prefix.is_empty() {
        return Err(Error::Usage("generation needs a non-empty prefix".into()));
    }
    config.validate()?;
    let mut rng = <rng::Rng as rand::SeedableRng>::seed_from_u64(probe_seed(config.seed, probe_id));
    let mut context = prefix.to_vec();
    let mut dist = Vec::with_capacity(model.vocab_size());
    let mut steps = Vec::new();
    let mut generated = Vec::new();
    let mut stop_reason = StopReason::Cap;

    for step_index in 0..config.max_new_tokens {
        model.next_distribution_into(&context, &mut dist);
        apply_temperature(&mut dist, config.temperature);
        let record = match config.strategy {
            Strategy::Greedy => {
                let tok = greedy_pick(&dist);
                let pmax = dist[tok as usize];
                StepRecord {
                    step_index,
                    chosen_token: tok,
                    chosen_prob: 1.0,
                    raw_max_prob: pmax,
                    nucleus_size: 1,
                    deterministic: true,
                    cumulative_mass: pmax,
                }
            }
            Strategy::Nucleus { top_p } => {
                let nucleus = nucleus_truncate(&dist, top_p);
                let tok = sample_token(&nucleus, &mut rng);
                let pos = nucleus.tokens.iter().position(|&t| t == tok).unwrap();
                StepRecord {
                    step_index,
                    chosen_token: tok,
                    chosen_prob: nucleus.probs[pos],
                    raw_max_prob: dist[nucleus.tokens[0] as usize],
                    nucleus_size: nucleus.len(),
                    deterministic: nucleus.len() == 1,
                    cumulative_mass: nucleus.mass,
                }
            }
        };
        let tok = record.chosen_token;
        steps.push(record);
        generated.push(tok);
        context.push(tok);
        if tok == EOS_ID {
            stop_reason = StopReason::Eos;
            break;
        }
    }

    Ok(DecodeTrace {
        prefix_probs: trace_prefix(model, prefix),
        steps,
        generated,
        stop_reason,
    })
}
