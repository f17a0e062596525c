//! SGD training loop with periodic held-out evaluation.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uepmm::coding::{WindowDistribution, WindowMode};

use crate::coded::{CodedProducts, Encoding};
use crate::data::{load_mnist, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::net::{DenseNet, LAYER_SIZES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DatasetSource {
    /// Directory holding the four standard MNIST IDX files.
    Mnist { dir: PathBuf },
    Synthetic(SyntheticSpec),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

impl DatasetSource {
    /// Train and test sets, truncated to the requested sizes.
    pub fn load(&self, train: usize, test: usize) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSource::Mnist { dir } => {
                let (tr, te) = load_mnist(dir)?;
                Ok((tr.truncated(train), te.truncated(test)))
            }
            DatasetSource::Synthetic(spec) => Ok((spec.generate(train, 0), spec.generate(test, 1))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Held-out accuracy is recorded every `eval_every` iterations and after the last one.
    pub eval_every: usize,
    pub lambda: f64,
    pub gamma: WindowDistribution,
    pub window_mode: WindowMode,
    pub code_grad_input: bool,
    pub encodings: Vec<Encoding>,
    pub deadlines: Vec<f64>,
    pub dataset: DatasetSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1,
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 1,
            train_samples: 10_000,
            test_samples: 2_000,
            eval_every: 50,
            lambda: 0.5,
            gamma: WindowDistribution::new(vec![0.35, 0.35, 0.3]).expect("valid distribution"),
            window_mode: WindowMode::Pairwise,
            code_grad_input: false,
            encodings: Encoding::ALL.to_vec(),
            deadlines: vec![0.25, 0.5, 1.0, 2.0],
            dataset: DatasetSource::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 {
            return bad("batch_size, epochs and eval_every must be at least 1");
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return bad("train_samples and test_samples must be at least 1");
        }
        if self.deadlines.iter().any(|t| t.is_nan() || *t < 0.0) {
            return bad("deadlines must be nonnegative");
        }
        if self.encodings.is_empty() {
            return bad("at least one encoding is required");
        }
        Ok(())
    }

    pub fn iterations(&self, train_len: usize) -> usize {
        self.epochs * train_len.div_ceil(self.batch_size)
    }
}

/// Held-out accuracy over training for one encoding and deadline.
#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyCurve {
    pub encoding: Encoding,
    pub deadline: f64,
    /// `(iteration, accuracy)`; iteration 0 is the untrained network.
    pub points: Vec<(usize, f64)>,
    /// Fraction of coded products that recovered every block.
    pub full_recovery: f64,
}

impl AccuracyCurve {
    pub fn final_accuracy(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,accuracy\n");
        for (it, acc) in &self.points {
            out.push_str(&format!("{it},{acc}\n"));
        }
        out
    }
}

/// Trains one network for `encoding` at `deadline`. Initial weights, batch
/// order and worker arrival times depend only on `config.seed`, so curves
/// for different encodings and deadlines share their randomness.
pub fn train_and_evaluate(
    config: &TrainConfig,
    encoding: Encoding,
    deadline: f64,
    train: &Dataset,
    test: &Dataset,
) -> Result<AccuracyCurve> {
    config.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("training and test sets must be nonempty".into()));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = DenseNet::new(&LAYER_SIZES, &mut init_rng);
    let mut products = CodedProducts::new(
        encoding,
        config.lambda,
        deadline,
        config.gamma.clone(),
        config.window_mode,
        config.seed,
    )?;
    products.code_grad_input = config.code_grad_input;

    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0BAD);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut points = vec![(0, net.accuracy(&test.features, &test.labels)?)];
    let (mut coded, mut full) = (0usize, 0usize);
    let mut iteration = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = train.batch(chunk);
            products.set_step(iteration as u64);
            let fwd = net.forward(&x)?;
            let grads = net.backward(&fwd, &y, &mut products)?;
            net.apply(&grads, config.learning_rate);
            coded += products.reports.len();
            full += products.reports.iter().filter(|r| r.recovered == crate::coded::REFERENCE_WORKERS).count();
            iteration += 1;
            if iteration % config.eval_every == 0 {
                points.push((iteration, net.accuracy(&test.features, &test.labels)?));
            }
        }
    }
    if points.last().map(|p| p.0) != Some(iteration) {
        points.push((iteration, net.accuracy(&test.features, &test.labels)?));
    }
    Ok(AccuracyCurve {
        encoding,
        deadline,
        points,
        full_recovery: if coded == 0 { 1.0 } else { full as f64 / coded as f64 },
    })
}

/// One SGD step on `(x, y)` through `products`; returns the updated network.
pub fn coded_grad_step(
    net: &DenseNet,
    x: &uepmm::Matrix<f64>,
    y: &[u8],
    products: &mut CodedProducts,
    learning_rate: f64,
) -> Result<DenseNet> {
    let fwd = net.forward(x)?;
    let grads = net.backward(&fwd, y, products)?;
    let mut next = net.clone();
    next.apply(&grads, learning_rate);
    Ok(next)
}
