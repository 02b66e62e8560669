//! Probability that an attacker controlling a share `p` of the total
//! reputation inserts a malicious block: it must win the harvester ticket
//! and hold at least `f + 1` of the `3f + 1` supporter seats.

use serde::{Deserialize, Serialize};

use crate::consensus::{view_for_attempt, Electorate};
use crate::crypto::sha256_concat;
use crate::error::{Error, Result};
use crate::identity::{NodeId, NodeKind};
use crate::ledger::ReputationTable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    /// Attackers' share of the total reputation.
    pub p: f64,
    pub f: usize,
}

impl AttackModel {
    pub fn new(p: f64, f: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("attacker share {p} outside [0, 1]")));
        }
        if f == 0 {
            return Err(Error::config("fault tolerance must be >= 1"));
        }
        Ok(AttackModel { p, f })
    }

    pub fn supporters(&self) -> usize {
        3 * self.f + 1
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

/// Binomial pmf `P(M = k)` for `k = 0..=n`, evaluated in the log domain.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    if p <= 0.0 {
        return (0..=n).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect();
    }
    if p >= 1.0 {
        return (0..=n).map(|k| if k == n { 1.0 } else { 0.0 }).collect();
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|k| (ln_choose(n, k) + k as f64 * lp + (n - k) as f64 * lq).exp())
        .collect()
}

/// `p * P(M >= f + 1)` with `M ~ Binomial(3f + 1, p)`.
pub fn attack_success_probability(model: &AttackModel) -> f64 {
    let n = model.supporters();
    // summing the upper tail directly avoids cancellation in 1 - CDF
    let tail: f64 = binomial_pmf(n, model.p)[model.f + 1..].iter().sum();
    (model.p * tail).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub frequency: f64,
    pub stderr: f64,
    pub trials: usize,
    /// Attacker share actually realized by the integer population.
    pub realized_p: f64,
}

/// Default synthetic population size for the Monte Carlo estimate.
pub const MC_POPULATION: usize = 1000;

fn synthetic_id(seed: u64, index: usize) -> NodeId {
    let digest = sha256_concat(&[b"roadchain/mc-node", &seed.to_be_bytes(), &(index as u64).to_be_bytes()]);
    NodeId::new(digest.0, NodeKind::Vehicle)
}

/// Builds `size` unit-stake participants of which `round(p * size)` are
/// attackers. Errors when that rounding misses `p` by more than 0.1%.
pub fn synthetic_population(
    p: f64,
    size: usize,
    seed: u64,
) -> Result<(ReputationTable, Vec<bool>, f64)> {
    let attackers = (p * size as f64).round() as usize;
    let realized = attackers as f64 / size as f64;
    if (realized - p).abs() > 1e-3 {
        return Err(Error::config(format!(
            "population of {size} cannot realize attacker share {p} within 0.1%"
        )));
    }
    let ids: Vec<NodeId> = (0..size).map(|i| synthetic_id(seed, i)).collect();
    let table: ReputationTable = ids.iter().map(|id| (*id, 1)).collect();
    // attackers are the first `attackers` identities in table order
    let flags: Vec<bool> = (0..size).map(|i| i < attackers).collect();
    Ok((table, flags, realized))
}

/// Runs `trials` elections through the real lottery and counts how often a
/// malicious harvester is backed by at least `f + 1` malicious supporters.
pub fn monte_carlo_attack_probability(
    model: &AttackModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    monte_carlo_with_population(model, trials, seed, MC_POPULATION)
}

pub fn monte_carlo_with_population(
    model: &AttackModel,
    trials: usize,
    seed: u64,
    population: usize,
) -> Result<MonteCarloEstimate> {
    if trials < 10_000 {
        return Err(Error::config("Monte Carlo needs at least 10^4 trials"));
    }
    let (table, malicious, realized_p) = synthetic_population(model.p, population, seed)?;
    let electorate = Electorate::new(&table);
    let index: std::collections::HashMap<NodeId, bool> = table
        .ids()
        .copied()
        .zip(malicious.iter().copied())
        .collect();

    let seed_hash = sha256_concat(&[b"roadchain/mc-view", &seed.to_be_bytes()]);
    let mut successes = 0usize;
    for trial in 0..trials {
        let view = view_for_attempt(&seed_hash, trial as u64);
        let committee = electorate.elect(&view, model.f)?;
        if !index[&committee.harvester] {
            continue;
        }
        let bad = committee.supporters.iter().filter(|s| index[*s]).count();
        if bad > model.f {
            successes += 1;
        }
    }
    let frequency = successes as f64 / trials as f64;
    let stderr = (frequency * (1.0 - frequency) / trials as f64).sqrt();
    Ok(MonteCarloEstimate {
        frequency,
        stderr,
        trials,
        realized_p,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub f: usize,
    pub analytic: f64,
    pub monte_carlo: f64,
    pub stderr: f64,
}

/// Closed form and Monte Carlo estimate over a `(p, f)` grid. With
/// `trials == 0` the Monte Carlo columns are left at zero.
pub fn sweep_attack_grid(
    p_grid: &[f64],
    f_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if p_grid.is_empty() || f_values.is_empty() {
        return Err(Error::config("sweep grids must be nonempty"));
    }
    let mut rows = Vec::with_capacity(p_grid.len() * f_values.len());
    for &f in f_values {
        for &p in p_grid {
            let model = AttackModel::new(p, f)?;
            let analytic = attack_success_probability(&model);
            let (monte_carlo, stderr) = if trials > 0 {
                let est = monte_carlo_attack_probability(&model, trials, seed)?;
                (est.frequency, est.stderr)
            } else {
                (0.0, 0.0)
            };
            rows.push(SweepRow {
                p,
                f,
                analytic,
                monte_carlo,
                stderr,
            });
        }
    }
    Ok(rows)
}

/// `0.00, 0.05, ..., 1.00`.
pub fn default_p_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(p: f64, f: usize) -> f64 {
        attack_success_probability(&AttackModel::new(p, f).unwrap())
    }

    #[test]
    fn degenerate_shares() {
        for f in 1..=8 {
            assert_eq!(prob(0.0, f), 0.0);
            assert!((prob(1.0, f) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        for f in 1..=20 {
            for i in 0..=20 {
                let p = i as f64 / 20.0;
                let total: f64 = binomial_pmf(3 * f + 1, p).iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "f={f} p={p} sum={total}");
            }
        }
    }

    #[test]
    fn never_exceeds_harvester_share() {
        for f in 1..=8 {
            for i in 0..=1000 {
                let p = i as f64 / 1000.0;
                assert!(prob(p, f) <= p + 1e-15);
            }
        }
    }

    #[test]
    fn monotone_in_share() {
        for f in 1..=8 {
            let mut last = 0.0;
            for i in 0..=1000 {
                let v = prob(i as f64 / 1000.0, f);
                assert!(v + 1e-15 >= last, "f={f} i={i}");
                last = v;
            }
        }
    }

    #[test]
    fn rejects_bad_models() {
        assert!(AttackModel::new(1.5, 2).is_err());
        assert!(AttackModel::new(0.5, 0).is_err());
    }

    #[test]
    fn large_f_stays_finite() {
        let v = prob(0.4, 200);
        assert!(v.is_finite() && (0.0..=0.4).contains(&v));
    }
}
