//! Seeded Monte Carlo engine: generate inputs, encode, sample arrivals,
//! decode at each deadline and score the loss.
//!
//! Each trial draws its randomness from ChaCha streams keyed by
//! `(master seed, component, trial index)`. Input matrices and arrival times
//! are shared by all strategies of a trial, the coding coefficients are drawn
//! per strategy. Results are gathered in trial order, so the output does not
//! depend on how many threads run the trials.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{CountConvention, VarianceProfile};
use crate::blockmat::{classify_by_norm, synthetic_matrix, BlockPartition, ClassMerge, ClassProfile, Classifier, Side};
use crate::coding::{CodedTask, Encoder, Strategy, WindowDistribution, WindowMode, WindowSampling};
use crate::decode::{decode, recovered_mask, Received, ReceivedSet, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::field::{Field, FieldKind, Fp};
use crate::latency::LatencyModel;
use crate::matio::read_matrix;
use crate::matrix::Matrix;

/// Version tag written at the top of every CSV.
pub const CSV_VERSION: &str = "uepmm-csv v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub row_blocks: usize,
    pub col_blocks: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    pub inner: usize,
    /// Entry variance of every row block of `A` (synthetic inputs).
    #[serde(default)]
    pub row_variances: Vec<f64>,
    /// Entry variance of every column block of `B` (synthetic inputs).
    #[serde(default)]
    pub col_variances: Vec<f64>,
    /// Fixed left matrix (`.csv` or raw binary); replaces the synthetic `A`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub count: usize,
    /// Norm thresholds (`count - 1` of them); quantile ranking when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// `[row level, column level, class]` triples, 1-based. Defaults to the
    /// grouped merge for three levels and one class per level pair otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge: Option<Vec<[usize; 3]>>,
}

impl Default for LevelSpec {
    fn default() -> Self {
        LevelSpec {
            count: 3,
            thresholds: None,
            merge: None,
        }
    }
}

impl LevelSpec {
    pub fn classifier(&self) -> Classifier {
        match &self.thresholds {
            Some(t) => Classifier::Thresholds(t.clone()),
            None => Classifier::Quantile,
        }
    }

    pub fn class_merge(&self) -> Result<ClassMerge> {
        match &self.merge {
            None => Ok(ClassMerge::grouped(self.count)),
            Some(entries) => {
                let mut converted = Vec::with_capacity(entries.len());
                for &[a, b, c] in entries {
                    if a == 0 || b == 0 || c == 0 {
                        return Err(Error::InvalidParameters(
                            "merge entries are 1-based level and class indices".into(),
                        ));
                    }
                    converted.push(((a - 1, b - 1), c - 1));
                }
                ClassMerge::from_entries(self.count, &converted)
            }
        }
    }
}

/// One reproducible experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub strategies: Vec<Strategy>,
    pub workers: usize,
    pub gamma: Vec<f64>,
    pub latency: LatencyModel,
    /// Deadlines for the time sweep.
    #[serde(default)]
    pub deadlines: Vec<f64>,
    /// Packet counts for the received-count sweep.
    #[serde(default)]
    pub received: Vec<usize>,
    #[serde(default)]
    pub field: FieldKind,
    #[serde(default)]
    pub window_mode: WindowMode,
    #[serde(default)]
    pub window_sampling: WindowSampling,
    /// Applied to NOW and EW only; MDS and uncoded baselines always decode
    /// every arrival.
    #[serde(default)]
    pub count_convention: CountConvention,
    /// Decode the actual products instead of scoring the recovery mask
    /// against the sub-product energies.
    #[serde(default)]
    pub full_decode: bool,
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub levels: LevelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_trials() -> usize {
    10_000
}

impl ExperimentConfig {
    /// The reference setup: 3x3 blocks of size 5 with inner dimension 100,
    /// block variances (10, 1, 0.1) on both sides, 40 workers with
    /// exponential latency of rate 0.25 and window probabilities
    /// (0.35, 0.35, 0.3).
    pub fn reference() -> Self {
        ExperimentConfig {
            seed: 1,
            trials: default_trials(),
            strategies: vec![Strategy::Now, Strategy::Ew, Strategy::Mds],
            workers: 40,
            gamma: vec![0.35, 0.35, 0.3],
            latency: LatencyModel::exponential(0.25).expect("positive rate"),
            deadlines: (0..14).map(|i| i as f64 / 5.0).collect(),
            received: Vec::new(),
            field: FieldKind::Real,
            window_mode: WindowMode::Pairwise,
            window_sampling: WindowSampling::ClassThenPair,
            count_convention: CountConvention::Exact,
            full_decode: false,
            matrix: MatrixSpec {
                row_blocks: 3,
                col_blocks: 3,
                block_rows: 5,
                block_cols: 5,
                inner: 100,
                row_variances: vec![10.0, 1.0, 0.1],
                col_variances: vec![10.0, 1.0, 0.1],
                left: None,
                right: None,
            },
            levels: LevelSpec::default(),
            output: None,
        }
    }
}

/// Mean of per-trial values with a 95% normal-approximation half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub ci: f64,
}

impl Estimate {
    /// Sequential, order-fixed reduction.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, ci: f64::NAN };
        }
        let mean = values.iter().fold(0.0, |acc, v| acc + v) / n as f64;
        if n == 1 {
            return Estimate { mean, ci: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Estimate {
            mean,
            ci: 1.96 * (var / n as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    /// Normalized loss per sweep point.
    pub losses: Vec<f64>,
    /// Whether every sub-product of class `l` was recovered, per sweep point.
    pub class_decoded: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub x: f64,
    pub strategy: Strategy,
    pub loss: Estimate,
    /// Fraction of trials that recovered each class completely.
    pub class_decoded: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Deadline,
    Received,
}

struct FixedInputs {
    a: BlockPartition<f64>,
    b: BlockPartition<f64>,
}

struct TrialInputs {
    a: BlockPartition<f64>,
    b: BlockPartition<f64>,
    subproducts: Vec<Matrix<f64>>,
}

/// A validated configuration with its class profile resolved.
pub struct Experiment {
    config: ExperimentConfig,
    profile: ClassProfile,
    gamma: WindowDistribution,
    variances: Option<VarianceProfile>,
    fixed: Option<FixedInputs>,
    /// Sub-product energies used to score a recovery mask: expected values
    /// for synthetic inputs, actual values for fixed inputs.
    energies: Vec<f64>,
    total_energy: f64,
}

const MATRIX_STREAM: u64 = 0;
const ARRIVAL_STREAM: u64 = 1;

fn trial_rng(seed: u64, component: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ component.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(trial);
    rng
}

fn coding_component(strategy: Strategy) -> u64 {
    2 + Strategy::ALL.iter().position(|&s| s == strategy).expect("listed") as u64
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let m = &config.matrix;
        if m.row_blocks == 0 || m.col_blocks == 0 || m.block_rows == 0 || m.block_cols == 0 || m.inner == 0 {
            return Err(Error::InvalidParameters("matrix dimensions must be positive".into()));
        }
        if config.strategies.is_empty() {
            return Err(Error::InvalidParameters("no strategies selected".into()));
        }
        if config.trials == 0 {
            return Err(Error::InvalidParameters("trials must be at least 1".into()));
        }
        if config.deadlines.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(Error::InvalidParameters("deadlines must be nonnegative".into()));
        }
        if let Some(&n) = config.received.iter().find(|&&n| n > config.workers) {
            return Err(Error::InvalidParameters(format!(
                "received count {n} exceeds {} workers",
                config.workers
            )));
        }
        if config.full_decode && config.field == FieldKind::Prime {
            return Err(Error::InvalidParameters(
                "full decoding needs real-valued products; use field = \"real\"".into(),
            ));
        }
        config.latency.validate()?;
        let gamma = WindowDistribution::new(config.gamma.clone())?;
        let classifier = config.levels.classifier();
        let merge = config.levels.class_merge()?;

        let (fixed, variances, row_norms, col_norms) = match (&m.left, &m.right) {
            (Some(l), Some(r)) => {
                let a = BlockPartition::new(read_matrix(l)?, m.row_blocks, m.block_rows, Side::Left)?;
                let b = BlockPartition::new(read_matrix(r)?, m.col_blocks, m.block_cols, Side::Right)?;
                if a.inner() != m.inner || b.inner() != m.inner {
                    return Err(Error::DimensionMismatch(format!(
                        "input inner dimensions {} and {}, config says {}",
                        a.inner(),
                        b.inner(),
                        m.inner
                    )));
                }
                let (rn, cn) = (a.block_norms(), b.block_norms());
                (Some(FixedInputs { a, b }), None, rn, cn)
            }
            (None, None) => {
                if m.row_variances.len() != m.row_blocks || m.col_variances.len() != m.col_blocks {
                    return Err(Error::DimensionMismatch(format!(
                        "{} row and {} column variances for {}x{} blocks",
                        m.row_variances.len(),
                        m.col_variances.len(),
                        m.row_blocks,
                        m.col_blocks
                    )));
                }
                let vp = VarianceProfile::new(
                    m.row_variances.clone(),
                    m.col_variances.clone(),
                    m.inner,
                    m.block_rows,
                    m.block_cols,
                )?;
                let rn = vp.row_variances.iter().map(|v| v.sqrt()).collect();
                let cn = vp.col_variances.iter().map(|v| v.sqrt()).collect();
                (None, Some(vp), rn, cn)
            }
            _ => {
                return Err(Error::InvalidParameters(
                    "give both `left` and `right` matrix files, or neither".into(),
                ))
            }
        };
        let row_levels = classify_by_norm(&row_norms, config.levels.count, &classifier)?;
        let col_levels = classify_by_norm(&col_norms, config.levels.count, &classifier)?;
        let profile = ClassProfile::new(row_levels, col_levels, merge)?;

        let energies = match (&variances, &fixed) {
            (Some(vp), _) => vp.energies(),
            (None, Some(f)) => {
                let bb = f.b.all_blocks();
                f.a.all_blocks()
                    .iter()
                    .flat_map(|an| bb.iter().map(move |bp| an.matmul(bp).frobenius_sq()))
                    .collect()
            }
            (None, None) => unreachable!("inputs are synthetic or fixed"),
        };
        let total_energy = energies.iter().sum();
        let exp = Experiment {
            config,
            profile,
            gamma,
            variances,
            fixed,
            energies,
            total_energy,
        };
        for &s in &exp.config.strategies {
            exp.encoder(s).validate(&exp.profile)?;
        }
        Ok(exp)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn profile(&self) -> &ClassProfile {
        &self.profile
    }

    pub fn variances(&self) -> Option<&VarianceProfile> {
        self.variances.as_ref()
    }

    pub fn encoder(&self, strategy: Strategy) -> Encoder {
        Encoder {
            strategy,
            workers: self.config.workers,
            gamma: self.gamma.clone(),
            mode: self.config.window_mode,
            sampling: self.config.window_sampling,
        }
    }

    fn inputs(&self, trial: u64) -> Result<TrialInputs> {
        let m = &self.config.matrix;
        let (a, b) = match &self.fixed {
            Some(f) => (f.a.clone(), f.b.clone()),
            None => {
                let mut rng = trial_rng(self.config.seed, MATRIX_STREAM, trial);
                let a = synthetic_matrix(&mut rng, Side::Left, &m.row_variances, m.block_rows, m.inner);
                let b = synthetic_matrix(&mut rng, Side::Right, &m.col_variances, m.block_cols, m.inner);
                (
                    BlockPartition::new(a, m.row_blocks, m.block_rows, Side::Left)?,
                    BlockPartition::new(b, m.col_blocks, m.block_cols, Side::Right)?,
                )
            }
        };
        let (ab, bb) = (a.all_blocks(), b.all_blocks());
        let subproducts: Vec<Matrix<f64>> = ab
            .iter()
            .flat_map(|an| bb.iter().map(move |bp| an.matmul(bp)))
            .collect();
        Ok(TrialInputs { a, b, subproducts })
    }


    /// Energy of the sub-products the mask leaves unrecovered. For synthetic
    /// inputs this is the expected loss given the mask, since coefficients
    /// and arrivals are independent of the matrix entries.
    fn mask_loss(&self, mask: &[bool]) -> f64 {
        mask.iter()
            .zip(&self.energies)
            .filter(|(r, _)| !**r)
            .fold(0.0, |acc, (_, e)| acc + e)
    }

    fn class_decoded(&self, mask: &[bool]) -> Vec<bool> {
        let p = self.profile.col_blocks();
        let mut out = vec![true; self.profile.num_classes()];
        for (i, &r) in mask.iter().enumerate() {
            if !r {
                out[self.profile.class_of(i / p, i % p)] = false;
            }
        }
        out
    }

    /// Packets decoded at every sweep point, in the order the sweep lists them.
    fn packet_counts(&self, strategy: Strategy, axis: SweepAxis, arrivals: &[f64]) -> Vec<usize> {
        match axis {
            SweepAxis::Received => self.config.received.clone(),
            SweepAxis::Deadline => self
                .config
                .deadlines
                .iter()
                .map(|&t| {
                    let w = arrivals.iter().filter(|&&a| a < t).count();
                    if strategy.is_uep() {
                        self.config.count_convention.packets(w)
                    } else {
                        w
                    }
                })
                .collect(),
        }
    }

    /// One trial for one strategy over the chosen sweep axis.
    pub fn run_trial(&self, strategy: Strategy, axis: SweepAxis, trial: u64) -> Result<TrialOutcome> {
        match self.config.field {
            FieldKind::Real if self.config.full_decode => {
                let inputs = self.inputs(trial)?;
                self.run_trial_in::<f64>(strategy, axis, trial, |tasks, arrivals, _| {
                    self.decoded_loss(tasks, arrivals, &inputs)
                })
            }
            FieldKind::Real => self.run_trial_in::<f64>(strategy, axis, trial, |_, _, m| Ok(self.mask_loss(m))),
            FieldKind::Prime => self.run_trial_in::<Fp>(strategy, axis, trial, |_, _, m| Ok(self.mask_loss(m))),
        }
    }

    fn run_trial_in<T: Field>(
        &self,
        strategy: Strategy,
        axis: SweepAxis,
        trial: u64,
        score: impl Fn(&[CodedTask<T>], &[f64], &[bool]) -> Result<f64>,
    ) -> Result<TrialOutcome> {
        let mut arrival_rng = trial_rng(self.config.seed, ARRIVAL_STREAM, trial);
        let arrivals = self.config.latency.sample_arrivals(self.config.workers, &mut arrival_rng);
        let mut coding_rng = trial_rng(self.config.seed, coding_component(strategy), trial);
        let tasks: Vec<CodedTask<T>> = self.encoder(strategy).encode_all(&self.profile, &mut coding_rng)?;
        // packets reach the decoder in completion order on both axes
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.sort_by(|&x, &y| arrivals[x].total_cmp(&arrivals[y]).then(x.cmp(&y)));
        let tasks: Vec<CodedTask<T>> = order.iter().map(|&i| tasks[i].clone()).collect();
        let arrival_of: Vec<f64> = order.iter().map(|&i| arrivals[i]).collect();
        let rows: Vec<Vec<T>> = tasks.iter().map(CodedTask::coefficient_row).collect();
        let counts = self.packet_counts(strategy, axis, &arrivals);
        let k = self.profile.subproducts();

        let mut masks: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
        let mut unique: Vec<usize> = counts.clone();
        unique.sort_unstable();
        unique.dedup();
        let mut full_at = None;
        for &c in &unique {
            let mask = match full_at {
                Some(f) if c >= f => vec![true; k],
                _ => recovered_mask(&rows[..c], k, DEFAULT_TOLERANCE),
            };
            if full_at.is_none() && mask.iter().all(|&r| r) {
                full_at = Some(c);
            }
            masks.insert(c, mask);
        }

        let mut losses = Vec::with_capacity(counts.len());
        let mut class_decoded = Vec::with_capacity(counts.len());
        for &c in &counts {
            let mask = &masks[&c];
            let loss = score(&tasks[..c], &arrival_of[..c], mask)?;
            losses.push(loss / self.total_energy);
            class_decoded.push(self.class_decoded(mask));
        }
        Ok(TrialOutcome { losses, class_decoded })
    }

    /// Runs the elimination decoder on the real products and measures
    /// `|C - C_hat|^2` directly.
    fn decoded_loss(&self, tasks: &[CodedTask<f64>], arrivals: &[f64], inputs: &TrialInputs) -> Result<f64> {
        let received: Vec<Received<f64>> = tasks
            .iter()
            .zip(arrivals)
            .map(|(t, &arrival)| Received {
                coefficients: t.coefficient_row(),
                product: t.product_from_subproducts(&inputs.subproducts),
                arrival,
            })
            .collect();
        let set = ReceivedSet::new(received, f64::INFINITY)?;
        let m = &self.config.matrix;
        let report = decode(&set, &self.profile, m.block_rows, m.block_cols, DEFAULT_TOLERANCE)?;
        let c = inputs.a.matrix().matmul(inputs.b.matrix());
        Ok(c.distance_sq(&report.estimate))
    }

    /// Every trial of every strategy, aggregated per sweep point.
    pub fn sweep(&self, axis: SweepAxis) -> Result<Vec<SweepPoint>> {
        let xs: Vec<f64> = match axis {
            SweepAxis::Deadline => self.config.deadlines.clone(),
            SweepAxis::Received => self.config.received.iter().map(|&n| n as f64).collect(),
        };
        let mut points = Vec::new();
        for &strategy in &self.config.strategies {
            let outcomes: Vec<TrialOutcome> = (0..self.config.trials as u64)
                .into_par_iter()
                .map(|trial| self.run_trial(strategy, axis, trial))
                .collect::<Result<_>>()?;
            for (i, &x) in xs.iter().enumerate() {
                let samples: Vec<f64> = outcomes.iter().map(|o| o.losses[i]).collect();
                let mut decoded = vec![0usize; self.profile.num_classes()];
                for o in &outcomes {
                    for (d, &ok) in decoded.iter_mut().zip(&o.class_decoded[i]) {
                        *d += usize::from(ok);
                    }
                }
                points.push(SweepPoint {
                    x,
                    strategy,
                    loss: Estimate::from_samples(&samples),
                    class_decoded: decoded
                        .into_iter()
                        .map(|d| d as f64 / self.config.trials as f64)
                        .collect(),
                });
            }
        }
        Ok(points)
    }
}

/// Plain decimal for ordinary magnitudes, scientific notation for very small
/// or very large ones. Both forms round-trip exactly.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{}", v + 0.0)
    } else {
        format!("{v:e}")
    }
}

/// Long-format figure table: `x,strategy,value,ci`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FigureTable {
    pub title: String,
    pub x_label: String,
    pub rows: Vec<(f64, String, f64, f64)>,
}

impl FigureTable {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>) -> Self {
        FigureTable {
            title: title.into(),
            x_label: x_label.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64, strategy: impl Into<String>, value: f64, ci: f64) {
        self.rows.push((x, strategy.into(), value, ci));
    }

    pub fn extend_sweep(&mut self, points: &[SweepPoint]) {
        for p in points {
            self.push(p.x, p.strategy.name(), p.loss.mean, p.loss.ci);
        }
    }

    pub fn value(&self, x: f64, strategy: &str) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .find(|r| r.0 == x && r.1 == strategy)
            .map(|r| (r.2, r.3))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# {CSV_VERSION}: {}\n{},strategy,value,ci\n", self.title, self.x_label);
        for (x, s, v, ci) in &self.rows {
            out.push_str(&format!("{},{s},{},{}\n", format_value(*x), format_value(*v), format_value(*ci)));
        }
        out
    }
}
