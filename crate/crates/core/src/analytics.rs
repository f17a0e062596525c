//! Closed-form decoding probabilities and expected losses.
//!
//! With `N` received packets and class `l` chosen with probability
//! `Gamma_l` per packet, the number of packets landing in class `l` is
//! `Binomial(N, Gamma_l)`. Summing the multinomial over all compositions
//! with `n_l >= k_l` therefore reduces to a binomial tail.

use serde::{Deserialize, Serialize};

use crate::blockmat::ClassProfile;
use crate::error::{Error, Result};
use crate::coding::Strategy;
use crate::latency::{binomial_pmf, LatencyModel};
use crate::simrun::{Estimate, Experiment, ExperimentConfig, SweepAxis};

/// How the arrival count at a deadline is paired with the conditional loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CountConvention {
    /// `w` arrivals are decoded with `w` packets.
    #[default]
    Exact,
    /// `w` arrivals are decoded with `max(w - 1, 0)` packets.
    Lagged,
}

impl CountConvention {
    pub fn packets(self, arrivals: usize) -> usize {
        match self {
            CountConvention::Exact => arrivals,
            CountConvention::Lagged => arrivals.saturating_sub(1),
        }
    }
}

/// Per-block variances of Gaussian inputs: `E|C_np|^2 = M U Q var_A[n] var_B[p]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub row_variances: Vec<f64>,
    pub col_variances: Vec<f64>,
    pub inner: usize,
    pub block_rows: usize,
    pub block_cols: usize,
}

impl VarianceProfile {
    pub fn new(
        row_variances: Vec<f64>,
        col_variances: Vec<f64>,
        inner: usize,
        block_rows: usize,
        block_cols: usize,
    ) -> Result<Self> {
        if row_variances
            .iter()
            .chain(&col_variances)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidParameters("block variances must be positive".into()));
        }
        if row_variances.is_empty() || col_variances.is_empty() {
            return Err(Error::InvalidParameters("no blocks in variance profile".into()));
        }
        Ok(VarianceProfile {
            row_variances,
            col_variances,
            inner,
            block_rows,
            block_cols,
        })
    }

    /// Expected squared Frobenius norm of `C_np`.
    pub fn subproduct_energy(&self, n: usize, p: usize) -> f64 {
        (self.inner * self.block_rows * self.block_cols) as f64
            * self.row_variances[n]
            * self.col_variances[p]
    }

    /// Energies in flat `n * P + p` order.
    pub fn energies(&self) -> Vec<f64> {
        let p_blocks = self.col_variances.len();
        (0..self.row_variances.len() * p_blocks)
            .map(|i| self.subproduct_energy(i / p_blocks, i % p_blocks))
            .collect()
    }

    /// `E|C|_F^2`.
    pub fn total_energy(&self) -> f64 {
        self.energies().iter().sum()
    }

    /// Expected energy of each product class.
    pub fn class_weights(&self, profile: &ClassProfile) -> Result<Vec<f64>> {
        if profile.row_blocks() != self.row_variances.len()
            || profile.col_blocks() != self.col_variances.len()
        {
            return Err(Error::DimensionMismatch(format!(
                "variance profile has {}x{} blocks, class profile {}x{}",
                self.row_variances.len(),
                self.col_variances.len(),
                profile.row_blocks(),
                profile.col_blocks()
            )));
        }
        let p_blocks = profile.col_blocks();
        let mut w = vec![0.0; profile.num_classes()];
        for (i, e) in self.energies().into_iter().enumerate() {
            w[profile.class_of(i / p_blocks, i % p_blocks)] += e;
        }
        Ok(w)
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_tail(n: usize, p: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    binomial_pmf(n, p)[k..].iter().sum()
}

fn check_gamma(gamma: &[f64], classes: usize) -> Result<()> {
    if gamma.len() != classes {
        return Err(Error::InvalidDistribution(format!(
            "{} window probabilities for {classes} classes",
            gamma.len()
        )));
    }
    let total: f64 = gamma.iter().sum();
    if gamma.iter().any(|g| g.is_nan() || *g < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("{gamma:?} is not a distribution")));
    }
    Ok(())
}

/// Upper bound on the probability that NOW decoding recovers class `l`
/// after `received` packets: `P(Binomial(received, Gamma_l) >= k_l)`.
pub fn now_decoding_bound(gamma: &[f64], class_counts: &[usize], received: usize) -> Result<Vec<f64>> {
    check_gamma(gamma, class_counts.len())?;
    Ok(gamma
        .iter()
        .zip(class_counts)
        .map(|(&g, &k)| binomial_tail(received, g, k))
        .collect())
}

/// Normalized NOW loss after exactly `received` packets.
pub fn now_loss_given_received(
    gamma: &[f64],
    class_counts: &[usize],
    class_weights: &[f64],
    received: usize,
) -> Result<f64> {
    let bound = now_decoding_bound(gamma, class_counts, received)?;
    let total: f64 = class_weights.iter().sum();
    Ok(bound
        .iter()
        .zip(class_weights)
        .map(|(pd, w)| (1.0 - pd) * w)
        .sum::<f64>()
        / total)
}

/// Normalized MDS loss after `received` packets: 1 below `k`, 0 from `k` on.
pub fn mds_loss_given_received(subproducts: usize, received: usize) -> f64 {
    if received < subproducts {
        1.0
    } else {
        0.0
    }
}

/// Expected loss at a deadline, absolute and normalized by `E|C|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedLoss {
    pub loss: f64,
    pub normalized: f64,
}

/// Expected NOW loss at deadline `t` with `workers` workers.
pub fn expected_loss_now(
    gamma: &[f64],
    profile: &ClassProfile,
    variances: &VarianceProfile,
    latency: &LatencyModel,
    workers: usize,
    t: f64,
    convention: CountConvention,
) -> Result<ExpectedLoss> {
    let weights = variances.class_weights(profile)?;
    let counts = profile.class_counts();
    let pmf = latency.arrival_pmf(workers, t);
    let mut normalized = 0.0;
    for (w, pw) in pmf.iter().enumerate() {
        if *pw > 0.0 {
            normalized += pw * now_loss_given_received(gamma, counts, &weights, convention.packets(w))?;
        }
    }
    let total = variances.total_energy();
    Ok(ExpectedLoss {
        loss: normalized * total,
        normalized,
    })
}

/// Expected normalized MDS loss: probability that fewer than `k` workers
/// finished by `t`.
pub fn expected_loss_mds(subproducts: usize, latency: &LatencyModel, workers: usize, t: f64) -> Result<f64> {
    if subproducts > workers {
        return Err(Error::InvalidParameters(format!(
            "MDS needs at least {subproducts} workers, got {workers}"
        )));
    }
    Ok(latency.arrival_pmf(workers, t)[..subproducts].iter().sum())
}

/// Monte Carlo estimate of the normalized EW loss at deadline `t`, using the
/// full encode, arrival and decode pipeline of `config`.
pub fn ew_expected_loss_mc(config: &ExperimentConfig, t: f64) -> Result<Estimate> {
    let config = ExperimentConfig {
        strategies: vec![Strategy::Ew],
        deadlines: vec![t],
        ..config.clone()
    };
    let points = Experiment::new(config)?.sweep(SweepAxis::Deadline)?;
    Ok(points[0].loss)
}
