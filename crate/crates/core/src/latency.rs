//! Worker completion-time models and the arrival-count distribution.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyKind {
    #[default]
    Exponential,
}

/// I.i.d. worker completion times with CDF `F(s * t)`, where `s` is a rate
/// multiplier used to compare configurations with different worker counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    #[serde(default)]
    pub kind: LatencyKind,
    pub rate: f64,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl LatencyModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::scaled(rate, 1.0)
    }

    pub fn scaled(rate: f64, scale: f64) -> Result<Self> {
        let model = LatencyModel {
            kind: LatencyKind::Exponential,
            rate,
            scale,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "latency rate must be positive, got {}",
                self.rate
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "latency scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Rate of the scaled completion time.
    pub fn effective_rate(&self) -> f64 {
        self.rate * self.scale
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.effective_rate()
    }

    /// Probability that one worker has finished by time `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.kind {
            LatencyKind::Exponential => -(-self.effective_rate() * t).exp_m1(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            LatencyKind::Exponential => Exp::new(self.effective_rate())
                .expect("validated rate")
                .sample(rng),
        }
    }

    /// Completion times of `workers` independent workers.
    pub fn sample_arrivals<R: Rng + ?Sized>(&self, workers: usize, rng: &mut R) -> Vec<f64> {
        (0..workers).map(|_| self.sample(rng)).collect()
    }

    /// `P(N(t) = w)` for `w = 0..=workers`.
    pub fn arrival_pmf(&self, workers: usize, t: f64) -> Vec<f64> {
        binomial_pmf(workers, self.cdf(t))
    }
}

/// `P(X = i)` for `X ~ Binomial(n, p)`, `i = 0..=n`.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[n] = 1.0;
        return out;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut log_choose = 0.0;
    for (i, slot) in out.iter_mut().enumerate() {
        if i > 0 {
            log_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        *slot = (log_choose + i as f64 * lp + (n - i) as f64 * lq).exp();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_mean() {
        let m = LatencyModel::exponential(0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let mean = m.sample_arrivals(n, &mut rng).iter().sum::<f64>() / n as f64;
        assert!((mean - 4.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn scaled_mean() {
        let m = LatencyModel::scaled(0.25, 9.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let mean = m.sample_arrivals(n, &mut rng).iter().sum::<f64>() / n as f64;
        assert!((mean - 4.0 / 9.0).abs() < 0.003, "{mean}");
    }

    #[test]
    fn replay_is_identical() {
        let m = LatencyModel::exponential(0.5).unwrap();
        let a = m.sample_arrivals(10, &mut ChaCha8Rng::seed_from_u64(3));
        let b = m.sample_arrivals(10, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn pmf_edges() {
        assert_eq!(binomial_pmf(4, 0.0), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let m = LatencyModel::exponential(1.0).unwrap();
        assert_eq!(m.arrival_pmf(3, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
        let half = binomial_pmf(2, 0.5);
        for (a, b) in half.iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        for w in [1, 9, 40, 200] {
            for p in [1e-6, 0.1, 0.5, 0.93, 1.0 - 1e-9] {
                let s: f64 = binomial_pmf(w, p).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "w={w} p={p} sum={s}");
            }
        }
    }

    #[test]
    fn fewer_than_nine_of_forty_at_t1() {
        let m = LatencyModel::exponential(0.25).unwrap();
        let below: f64 = m.arrival_pmf(40, 1.0)[..9].iter().sum();
        assert!((below - 0.4615).abs() < 1e-3, "{below}");
    }

    #[test]
    fn pmf_matches_empirical_counts() {
        let m = LatencyModel::exponential(0.25).unwrap();
        let (w, t, trials) = (10, 2.0, 100_000);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = vec![0usize; w + 1];
        for _ in 0..trials {
            let n = m.sample_arrivals(w, &mut rng).iter().filter(|&&a| a < t).count();
            counts[n] += 1;
        }
        let pmf = m.arrival_pmf(w, t);
        let chi2: f64 = counts
            .iter()
            .zip(&pmf)
            .filter(|(_, &p)| p * trials as f64 >= 5.0)
            .map(|(&c, &p)| {
                let e = p * trials as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 10 degrees of freedom at most; 0.999 quantile is 29.6
        assert!(chi2 < 29.6, "chi2 = {chi2}");
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(LatencyModel::exponential(0.0).is_err());
        assert!(LatencyModel::scaled(1.0, -2.0).is_err());
    }
}
