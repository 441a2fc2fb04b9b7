//! Reliability model for repeated extraction and majority-vote validation.
//!
//! Discovery: an entity is found if at least one of `m_e` independent
//! attempts finds it, `1 - prod(1 - p_i)`. Validation: `m_v` independent
//! voters, each correct with probability `p`, decide by majority; the
//! outcome of an exact tie depends on the [`TieRule`]. Closed forms are
//! cross-checked by a seeded Monte Carlo simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::par_map;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TheoryError {
    #[error("{name} = {value} is outside {range}")]
    Range {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

fn check_prob(name: &'static str, value: f64) -> Result<(), TheoryError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(TheoryError::Range {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// A tie accepts (at least half the votes).
    AcceptTie,
    /// A tie accepts with weight one half.
    #[default]
    HalfTie,
    /// A tie rejects (strict majority).
    RejectTie,
}

impl TieRule {
    pub fn weight(self) -> f64 {
        match self {
            TieRule::AcceptTie => 1.0,
            TieRule::HalfTie => 0.5,
            TieRule::RejectTie => 0.0,
        }
    }
}

impl std::str::FromStr for TieRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "accept_tie" | "accept" => Ok(TieRule::AcceptTie),
            "half_tie" | "half" => Ok(TieRule::HalfTie),
            "reject_tie" | "reject" => Ok(TieRule::RejectTie),
            other => Err(format!("unknown tie rule {other:?}")),
        }
    }
}

/// Probability that at least one attempt succeeds.
pub fn discovery_probability(p_extract: &[f64]) -> Result<f64, TheoryError> {
    let mut miss = 1.0;
    for &p in p_extract {
        check_prob("p_extract", p)?;
        miss *= 1.0 - p;
    }
    Ok(if p_extract.is_empty() { 0.0 } else { 1.0 - miss })
}

/// `C(n, k)`: exact integer arithmetic up to n = 30, log-space beyond.
pub fn binomial_coefficient(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n <= 30 {
        let mut c: u64 = 1;
        for i in 0..k as u64 {
            c = c * (n as u64 - i) / (i + 1);
        }
        c as f64
    } else {
        ln_binomial(n, k).exp()
    }
}

fn ln_binomial(n: u32, k: u32) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// P(exactly k of n succeed) for success probability p.
pub fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let q = 1.0 - p;
    if n <= 30 {
        binomial_coefficient(n, k) * p.powi(k as i32) * q.powi((n - k) as i32)
    } else {
        if (p == 0.0 && k > 0) || (q == 0.0 && k < n) {
            return 0.0;
        }
        let lp = if k == 0 { 0.0 } else { k as f64 * p.ln() };
        let lq = if k == n { 0.0 } else { (n - k) as f64 * q.ln() };
        (ln_binomial(n, k) + lp + lq).exp()
    }
}

/// Probability that a majority vote of `m` voters, each correct with
/// probability `p`, reaches the correct decision.
pub fn vote_accept_probability(p: f64, m: u32, tie_rule: TieRule) -> Result<f64, TheoryError> {
    check_prob("p_validate", p)?;
    if m == 0 {
        return Err(TheoryError::Invalid("at least one voter is required".into()));
    }
    let majority: f64 = (m / 2 + 1..=m).map(|k| binomial_pmf(m, k, p)).sum();
    let tie = if m.is_multiple_of(2) {
        tie_rule.weight() * binomial_pmf(m, m / 2, p)
    } else {
        0.0
    };
    Ok((majority + tie).min(1.0))
}

/// Hoeffding-style bound on the majority-vote error,
/// `2 exp(-(m/2) (1 - 2(1 - p))^2)`. Only meaningful for `p > 1/2`.
pub fn chernoff_error_bound(p: f64, m: u32) -> Result<f64, TheoryError> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(TheoryError::Range {
            name: "p_validate",
            value: p,
            range: "(0.5, 1]",
        });
    }
    let margin = 1.0 - 2.0 * (1.0 - p);
    Ok(2.0 * (-(m as f64) / 2.0 * margin * margin).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub m_e: u32,
    pub m_v: u32,
    pub p_extract: Vec<f64>,
    pub p_validate: f64,
    pub tie_rule: TieRule,
}

impl Default for TheoryParams {
    /// Four extraction attempts at 0.6 and four validators at 0.8 with
    /// half-weighted ties.
    fn default() -> Self {
        TheoryParams {
            m_e: 4,
            m_v: 4,
            p_extract: vec![0.6; 4],
            p_validate: 0.8,
            tie_rule: TieRule::HalfTie,
        }
    }
}

impl TheoryParams {
    pub fn homogeneous(m_e: u32, p_e: f64, m_v: u32, p_v: f64, tie_rule: TieRule) -> Self {
        TheoryParams {
            m_e,
            m_v,
            p_extract: vec![p_e; m_e as usize],
            p_validate: p_v,
            tie_rule,
        }
    }

    pub fn validate(&self) -> Result<(), TheoryError> {
        if self.m_e == 0 || self.m_v == 0 {
            return Err(TheoryError::Invalid("m_e and m_v must be positive".into()));
        }
        if self.p_extract.len() != self.m_e as usize {
            return Err(TheoryError::Invalid(format!(
                "{} extraction probabilities given for m_e = {}",
                self.p_extract.len(),
                self.m_e
            )));
        }
        for &p in &self.p_extract {
            if !(p > 0.0 && p <= 1.0) {
                return Err(TheoryError::Range {
                    name: "p_extract",
                    value: p,
                    range: "(0, 1]",
                });
            }
        }
        if !(self.p_validate > 0.0 && self.p_validate <= 1.0) {
            return Err(TheoryError::Range {
                name: "p_validate",
                value: self.p_validate,
                range: "(0, 1]",
            });
        }
        Ok(())
    }
}

/// Single-pass reference values: one extraction, one validator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub discovery: f64,
    pub vote_accept: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub params: TheoryParams,
    pub discovery: f64,
    pub vote_accept: f64,
    /// `None` when `p_validate <= 0.5`, where the bound says nothing.
    pub chernoff_bound: Option<f64>,
    pub combined: f64,
    pub baseline: Baseline,
    /// Enumerated UCA paths over the count the structure admits. Skeleton
    /// enumeration always covers every path.
    pub explored_coverage: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloEstimate>,
}

pub fn combined_success(params: &TheoryParams) -> Result<TheoryReport, TheoryError> {
    params.validate()?;
    let discovery = discovery_probability(&params.p_extract)?;
    let vote_accept = vote_accept_probability(params.p_validate, params.m_v, params.tie_rule)?;
    let chernoff_bound = chernoff_error_bound(params.p_validate, params.m_v).ok();
    let baseline = Baseline {
        discovery: params.p_extract[0],
        vote_accept: params.p_validate,
        combined: params.p_extract[0] * params.p_validate,
    };
    Ok(TheoryReport {
        params: params.clone(),
        discovery,
        vote_accept,
        chernoff_bound,
        combined: discovery * vote_accept,
        baseline,
        explored_coverage: coverage_ratio(1, 1),
        monte_carlo: None,
    })
}

/// Fraction of the admissible UCA paths actually enumerated.
pub fn coverage_ratio(enumerated: u64, admissible: u64) -> f64 {
    if admissible == 0 {
        1.0
    } else {
        enumerated as f64 / admissible as f64
    }
}

const SHARD_TRIALS: u64 = 8192;

fn simulate_shard(params: &TheoryParams, trials: u64, seed: u64, shard: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    let mut successes = 0;
    for _ in 0..trials {
        let found = params.p_extract.iter().fold(false, |hit, &p| rng.gen_bool(p) | hit);
        let correct = (0..params.m_v).filter(|_| rng.gen_bool(params.p_validate)).count() as u32;
        let accepted = if 2 * correct > params.m_v {
            true
        } else if 2 * correct == params.m_v {
            match params.tie_rule {
                TieRule::AcceptTie => true,
                TieRule::RejectTie => false,
                TieRule::HalfTie => rng.gen_bool(0.5),
            }
        } else {
            false
        };
        if found && accepted {
            successes += 1;
        }
    }
    successes
}

/// Simulates `trials` independent extraction-plus-vote runs. Trials are
/// split into fixed-size shards, each with its own ChaCha stream, so the
/// result does not depend on how many threads run them.
pub fn monte_carlo(params: &TheoryParams, trials: u64, seed: u64) -> Result<MonteCarloEstimate, TheoryError> {
    params.validate()?;
    if trials == 0 {
        return Err(TheoryError::Invalid("trials must be positive".into()));
    }
    let shards: Vec<(u64, u64)> = (0..trials.div_ceil(SHARD_TRIALS))
        .map(|i| (i, SHARD_TRIALS.min(trials - i * SHARD_TRIALS)))
        .collect();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let successes: u64 = par_map(&shards, workers, |&(shard, n)| simulate_shard(params, n, seed, shard))
        .into_iter()
        .sum();
    let estimate = successes as f64 / trials as f64;
    Ok(MonteCarloEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / trials as f64).sqrt(),
        trials,
        seed,
    })
}

/// `(m, 1 - (1 - p)^m)` for `m = 1..=m_max`.
pub fn recall_curve(p: f64, m_max: u32) -> Result<Vec<(u32, f64)>, TheoryError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(TheoryError::Range {
            name: "p",
            value: p,
            range: "(0, 1]",
        });
    }
    if m_max == 0 {
        return Err(TheoryError::Invalid("m_max must be positive".into()));
    }
    Ok((1..=m_max).map(|m| (m, 1.0 - (1.0 - p).powi(m as i32))).collect())
}

/// One row of the simulate CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: u32,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub stderr: f64,
}

/// Discovery curve with a Monte Carlo estimate per point. The simulation
/// uses a perfect validator so only discovery is measured.
pub fn discovery_curve(p: f64, m_max: u32, trials: u64, seed: u64) -> Result<Vec<CurvePoint>, TheoryError> {
    recall_curve(p, m_max)?
        .into_iter()
        .map(|(m, closed_form)| {
            let params = TheoryParams::homogeneous(m, p, 1, 1.0, TieRule::AcceptTie);
            let mc = monte_carlo(&params, trials, seed.wrapping_add(m as u64))?;
            Ok(CurvePoint {
                m,
                closed_form,
                monte_carlo: mc.estimate,
                stderr: mc.stderr,
            })
        })
        .collect()
}
