//! Gradient products computed through simulated straggling workers.
//!
//! For `a x b`, rows of `a` and columns of `b` are sorted by descending norm,
//! zero-padded to multiples of three and cut into a 3x3 grid of
//! sub-products. The blocks of each side take levels 0, 1, 2 in order. Tasks
//! are encoded for the workers of the chosen encoding, and the products that
//! arrive before the deadline are decoded. Unrecovered blocks stay zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uepmm::blockmat::{norm_permutation, Axis, BlockPartition, ClassMerge, ClassProfile, Side};
use uepmm::coding::{CodedTask, Encoder, Strategy, WindowDistribution, WindowMode, WindowSampling};
use uepmm::decode::{decode, Received, ReceivedSet, DEFAULT_TOLERANCE};
use uepmm::latency::LatencyModel;
use uepmm::Matrix;

use crate::error::{Error, Result};
use crate::net::GradProducts;

/// Blocks per side of every coded product.
pub const GRID: usize = 3;

/// Worker count of the uncoded reference, one worker per sub-product.
pub const REFERENCE_WORKERS: usize = GRID * GRID;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// Single full-precision worker, no straggling.
    Baseline,
    Uncoded,
    Now,
    Ew,
    BlockRep,
}

impl Encoding {
    pub const ALL: [Encoding; 5] = [
        Encoding::Baseline,
        Encoding::Uncoded,
        Encoding::Now,
        Encoding::Ew,
        Encoding::BlockRep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Encoding::Baseline => "baseline",
            Encoding::Uncoded => "uncoded",
            Encoding::Now => "now",
            Encoding::Ew => "ew",
            Encoding::BlockRep => "block-rep",
        }
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Encoding::Baseline => None,
            Encoding::Uncoded => Some(Strategy::Uncoded),
            Encoding::Now => Some(Strategy::Now),
            Encoding::Ew => Some(Strategy::Ew),
            Encoding::BlockRep => Some(Strategy::BlockRep),
        }
    }

    pub fn workers(self) -> usize {
        match self {
            Encoding::Baseline => 1,
            Encoding::Uncoded => 9,
            Encoding::Now | Encoding::Ew => 15,
            Encoding::BlockRep => 18,
        }
    }

    /// Compute-budget factor `s` of the encoding.
    pub fn budget_scale(self) -> f64 {
        match self {
            Encoding::Baseline | Encoding::Uncoded => 1.0,
            Encoding::Now | Encoding::Ew => 9.0 / 15.0,
            Encoding::BlockRep => 2.0,
        }
    }

    /// Per-worker latency: rate `lambda * W_ref / (W * s)`.
    pub fn worker_latency(self, lambda: f64) -> Result<LatencyModel> {
        let scale = REFERENCE_WORKERS as f64 / (self.workers() as f64 * self.budget_scale());
        Ok(LatencyModel::scaled(lambda, scale)?)
    }
}

impl std::fmt::Display for Encoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Encoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Encoding::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Encoding::ALL.iter().map(|e| e.name()).collect();
                Error::Config(format!("unknown encoding `{s}`, expected one of: {}", valid.join(", ")))
            })
    }
}

/// Outcome of one coded product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProductReport {
    pub layer: usize,
    pub arrived: usize,
    pub recovered: usize,
}

const ARRIVAL_KEY: u64 = 0xA5A5_0001;
const CODING_KEY: u64 = 0xA5A5_0002;

/// [`GradProducts`] that routes weight-gradient products (and optionally
/// input-gradient products) through encode, straggle and decode.
pub struct CodedProducts {
    pub encoding: Encoding,
    pub latency: LatencyModel,
    pub deadline: f64,
    pub gamma: WindowDistribution,
    pub mode: WindowMode,
    pub code_grad_input: bool,
    seed: u64,
    step: u64,
    /// Reports of the products computed since the last [`CodedProducts::set_step`].
    pub reports: Vec<ProductReport>,
}

impl CodedProducts {
    pub fn new(
        encoding: Encoding,
        lambda: f64,
        deadline: f64,
        gamma: WindowDistribution,
        mode: WindowMode,
        seed: u64,
    ) -> Result<Self> {
        if gamma.len() != 3 {
            return Err(Error::Config(format!(
                "window distribution needs 3 entries for the 3x3 grid, got {}",
                gamma.len()
            )));
        }
        Ok(CodedProducts {
            encoding,
            latency: encoding.worker_latency(lambda)?,
            deadline,
            gamma,
            mode,
            code_grad_input: false,
            seed,
            step: 0,
            reports: Vec::new(),
        })
    }

    /// Selects the random streams of SGD step `step`. Arrival times depend
    /// only on `(seed, step, product)`, so runs that differ in the deadline
    /// see the same worker completion times.
    pub fn set_step(&mut self, step: u64) {
        self.step = step;
        self.reports.clear();
    }

    fn rng(&self, key: u64, slot: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ key);
        rng.set_stream(self.step * 64 + slot);
        rng
    }

    /// `a x b` through the straggler pipeline. `slot` names the product within
    /// the step.
    pub fn product(&mut self, layer: usize, slot: u64, a: &Matrix<f64>, b: &Matrix<f64>) -> Result<Matrix<f64>> {
        let Some(strategy) = self.encoding.strategy() else {
            return Ok(a.matmul(b));
        };
        if a.cols() != b.rows() {
            return Err(Error::Shape(format!(
                "{}x{} times {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        let (m, n) = (a.rows(), b.cols());
        let row_perm = norm_permutation(a, Axis::Rows);
        let col_perm = norm_permutation(b, Axis::Columns);
        let (mp, np) = (m.div_ceil(GRID) * GRID, n.div_ceil(GRID) * GRID);
        let ap = row_perm.apply(a, Axis::Rows).padded(mp, a.cols());
        let bp = col_perm.apply(b, Axis::Columns).padded(b.rows(), np);
        let pa = BlockPartition::new(ap, GRID, mp / GRID, Side::Left)?;
        let pb = BlockPartition::new(bp, GRID, np / GRID, Side::Right)?;
        // blocks are already in descending-norm order, so position is the quantile
        // level; all-zero blocks would otherwise empty the upper levels
        let levels: Vec<usize> = (0..GRID).collect();
        let profile = ClassProfile::new(levels.clone(), levels, ClassMerge::grouped(GRID))?;

        let encoder = Encoder {
            strategy,
            workers: self.encoding.workers(),
            gamma: self.gamma.clone(),
            mode: self.mode,
            sampling: WindowSampling::ClassThenPair,
        };
        let tasks: Vec<CodedTask<f64>> = encoder.encode_all(&profile, &mut self.rng(CODING_KEY, slot))?;
        let arrivals = self
            .latency
            .sample_arrivals(tasks.len(), &mut self.rng(ARRIVAL_KEY, slot));
        let received: Vec<Received<f64>> = tasks
            .iter()
            .zip(&arrivals)
            .filter(|(_, &t)| t < self.deadline)
            .map(|(task, &arrival)| Received {
                coefficients: task.coefficient_row(),
                product: task.worker_product(&pa, &pb),
                arrival,
            })
            .collect();
        let arrived = received.len();
        let set = ReceivedSet::new(received, self.deadline)?;
        let report = decode(&set, &profile, mp / GRID, np / GRID, DEFAULT_TOLERANCE)?;
        self.reports.push(ProductReport {
            layer,
            arrived,
            recovered: report.recovered_count(),
        });
        let cropped = report.estimate.submatrix(0, 0, m, n);
        Ok(col_perm.undo(&row_perm.undo(&cropped, Axis::Rows), Axis::Columns))
    }

    /// Whether every coded product of the current step recovered all blocks.
    pub fn all_recovered(&self) -> bool {
        self.reports.iter().all(|r| r.recovered == REFERENCE_WORKERS)
    }
}

impl GradProducts for CodedProducts {
    fn weight_grad(&mut self, layer: usize, act_t: &Matrix<f64>, delta: &Matrix<f64>) -> Result<Matrix<f64>> {
        self.product(layer, 2 * layer as u64, act_t, delta)
    }

    fn input_grad(&mut self, layer: usize, delta: &Matrix<f64>, w_t: &Matrix<f64>) -> Result<Matrix<f64>> {
        if self.code_grad_input {
            self.product(layer, 2 * layer as u64 + 1, delta, w_t)
        } else {
            Ok(delta.matmul(w_t))
        }
    }
}
