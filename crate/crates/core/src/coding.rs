//! Random-linear-code encoders for coded block matrix multiplication.
//!
//! Worker `w` receives `W_A = sum_n alpha_n A_n` and `W_B = sum_p beta_p B_p`
//! and returns `W_A W_B = sum_{n,p} alpha_n beta_p C_np`. The decoder only
//! sees the coefficient row `g = alpha (x) beta` over the `N*P` sub-products.
//!
//! NOW windows cover one importance class, EW windows cover a class and every
//! more important one. With [`WindowMode::Pairwise`] a window is a rectangle
//! of row levels times column levels, so each packet is one rank-1 product.
//! [`WindowMode::ClassWide`] instead draws an independent coefficient for every
//! sub-product in the window (a worker then evaluates a sum of block products).

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blockmat::{BlockPartition, ClassProfile};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Now,
    Ew,
    Mds,
    Uncoded,
    BlockRep,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Now,
        Strategy::Ew,
        Strategy::Mds,
        Strategy::Uncoded,
        Strategy::BlockRep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Now => "now",
            Strategy::Ew => "ew",
            Strategy::Mds => "mds",
            Strategy::Uncoded => "uncoded",
            Strategy::BlockRep => "block-rep",
        }
    }

    pub fn is_uep(self) -> bool {
        matches!(self, Strategy::Now | Strategy::Ew)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidParameters(format!(
                    "unknown strategy `{s}`, expected one of: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// Window = row levels x column levels; every packet is a rank-1 product.
    #[default]
    Pairwise,
    /// Window = set of product classes; independent coefficient per sub-product.
    ClassWide,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowSampling {
    /// Draw the product class from Gamma, then one of its ordered level pairs
    /// with probability proportional to the sub-products it holds.
    #[default]
    ClassThenPair,
    /// Draw a row level and a column level independently from Gamma
    /// (Gamma then has one entry per importance level).
    IndependentSides,
}

/// Window selection probabilities `Gamma_l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WindowDistribution {
    gamma: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WindowDistribution {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if gamma.iter().any(|g| g.is_nan() || *g < 0.0) {
            return Err(Error::InvalidDistribution(format!("negative entry in {gamma:?}")));
        }
        let total: f64 = gamma.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "{gamma:?} sums to {total}, not 1"
            )));
        }
        let mut acc = 0.0;
        let cumulative = gamma
            .iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect();
        Ok(WindowDistribution { gamma, cumulative })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.gamma
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Draws a class index in `0..len()`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let last = self.gamma.len() - 1;
        let idx = self.cumulative.partition_point(|&c| c <= u).min(last);
        // never return a zero-probability class through rounding at the top
        if self.gamma[idx] == 0.0 {
            return self.gamma.iter().rposition(|&g| g > 0.0).unwrap_or(last);
        }
        idx
    }
}

impl TryFrom<Vec<f64>> for WindowDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WindowDistribution> for Vec<f64> {
    fn from(d: WindowDistribution) -> Vec<f64> {
        d.gamma
    }
}

/// A sampled window: the product class and, for pairwise windows, the
/// constituent `(row level, column level)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub class: usize,
    pub pair: (usize, usize),
}

pub fn sample_window<R: Rng + ?Sized>(
    dist: &WindowDistribution,
    profile: &ClassProfile,
    sampling: WindowSampling,
    rng: &mut R,
) -> Result<Window> {
    match sampling {
        WindowSampling::ClassThenPair => {
            let class = dist.sample(rng);
            let pairs = profile.pairs_in_class(class);
            let total: usize = pairs.iter().map(|p| p.count).sum();
            if total == 0 {
                return Err(Error::InvalidParameters(format!(
                    "window class {} holds no sub-products",
                    class + 1
                )));
            }
            let mut pick = rng.random_range(0..total);
            for pw in &pairs {
                if pick < pw.count {
                    return Ok(Window { class, pair: pw.pair });
                }
                pick -= pw.count;
            }
            unreachable!("pick < total")
        }
        WindowSampling::IndependentSides => {
            if dist.len() != profile.levels() {
                return Err(Error::InvalidDistribution(format!(
                    "independent side sampling needs one probability per level ({}), got {}",
                    profile.levels(),
                    dist.len()
                )));
            }
            let pair = (dist.sample(rng), dist.sample(rng));
            let class = profile.merge().class_of(pair.0, pair.1)?;
            Ok(Window { class, pair })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Coefficients<T> {
    /// `alpha` over row blocks, `beta` over column blocks.
    Outer { alpha: Vec<T>, beta: Vec<T> },
    /// One coefficient per sub-product, flat index `n * P + p`.
    Dense(Vec<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodedTask<T> {
    pub worker: usize,
    pub strategy: Strategy,
    pub window: Option<Window>,
    pub coefficients: Coefficients<T>,
}

impl<T: Field> CodedTask<T> {
    /// The decoder's view of this task: `g[n * P + p] = alpha[n] * beta[p]`.
    pub fn coefficient_row(&self) -> Vec<T> {
        match &self.coefficients {
            Coefficients::Outer { alpha, beta } => alpha
                .iter()
                .flat_map(|&a| beta.iter().map(move |&b| a * b))
                .collect(),
            Coefficients::Dense(g) => g.clone(),
        }
    }

    /// Flat indices of the sub-products this task touches.
    pub fn support(&self) -> Vec<usize> {
        self.coefficient_row()
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_zero())
            .map(|(i, _)| i)
            .collect()
    }

    /// `(W_A, W_B)` for rank-1 tasks.
    pub fn coded_inputs(
        &self,
        a: &BlockPartition<T>,
        b: &BlockPartition<T>,
    ) -> Option<(Matrix<T>, Matrix<T>)> {
        match &self.coefficients {
            Coefficients::Outer { alpha, beta } => {
                Some((linear_combination(a, alpha), linear_combination(b, beta)))
            }
            Coefficients::Dense(_) => None,
        }
    }

    /// What the worker returns, computed from the encoded inputs.
    pub fn worker_product(&self, a: &BlockPartition<T>, b: &BlockPartition<T>) -> Matrix<T> {
        match &self.coefficients {
            Coefficients::Outer { .. } => {
                let (wa, wb) = self.coded_inputs(a, b).expect("outer task");
                wa.matmul(&wb)
            }
            Coefficients::Dense(g) => {
                let p_blocks = b.blocks();
                let mut out = Matrix::zeros(a.block_size(), b.block_size());
                for (idx, &c) in g.iter().enumerate() {
                    if !c.is_zero() {
                        let prod = a.block(idx / p_blocks).matmul(&b.block(idx % p_blocks));
                        out.add_scaled(c, &prod);
                    }
                }
                out
            }
        }
    }

    /// Same product as [`CodedTask::worker_product`], assembled from
    /// precomputed sub-products `C_np` (flat order).
    pub fn product_from_subproducts(&self, subproducts: &[Matrix<T>]) -> Matrix<T> {
        let (r, c) = subproducts[0].shape();
        let mut out = Matrix::zeros(r, c);
        for (g, sub) in self.coefficient_row().into_iter().zip(subproducts) {
            if !g.is_zero() {
                out.add_scaled(g, sub);
            }
        }
        out
    }
}

fn linear_combination<T: Field>(part: &BlockPartition<T>, coeffs: &[T]) -> Matrix<T> {
    let first = part.block(0);
    let mut out = Matrix::zeros(first.rows(), first.cols());
    for (i, &c) in coeffs.iter().enumerate() {
        if !c.is_zero() {
            out.add_scaled(c, &part.block(i));
        }
    }
    out
}

fn random_on<T: Field, R: Rng + ?Sized>(mask: impl Iterator<Item = bool>, rng: &mut R) -> Vec<T> {
    mask.map(|on| if on { T::random_coefficient(rng) } else { T::zero() })
        .collect()
}

fn outer_on_levels<T: Field, R: Rng + ?Sized>(
    profile: &ClassProfile,
    window: Window,
    row_ok: impl Fn(usize) -> bool,
    col_ok: impl Fn(usize) -> bool,
    rng: &mut R,
) -> Result<Coefficients<T>> {
    let rows_on = profile.row_levels().iter().any(|&s| row_ok(s));
    let cols_on = profile.col_levels().iter().any(|&s| col_ok(s));
    if !rows_on || !cols_on {
        return Err(Error::EmptyWindow(window.pair.0 + 1, window.pair.1 + 1));
    }
    let alpha = random_on(profile.row_levels().iter().map(|&s| row_ok(s)), rng);
    let beta = random_on(profile.col_levels().iter().map(|&s| col_ok(s)), rng);
    Ok(Coefficients::Outer { alpha, beta })
}

fn dense_on_classes<T: Field, R: Rng + ?Sized>(
    profile: &ClassProfile,
    window: Window,
    class_ok: impl Fn(usize) -> bool,
    rng: &mut R,
) -> Result<Coefficients<T>> {
    let p = profile.col_blocks();
    let mask: Vec<bool> = (0..profile.subproducts())
        .map(|i| class_ok(profile.class_of(i / p, i % p)))
        .collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyWindow(window.pair.0 + 1, window.pair.1 + 1));
    }
    Ok(Coefficients::Dense(random_on(mask.into_iter(), rng)))
}

/// NOW window: coefficients only on the selected level pair (pairwise) or the
/// selected class (class-wide).
pub fn encode_now<T: Field, R: Rng + ?Sized>(
    profile: &ClassProfile,
    window: Window,
    mode: WindowMode,
    rng: &mut R,
) -> Result<Coefficients<T>> {
    let (sa, sb) = window.pair;
    match mode {
        WindowMode::Pairwise => outer_on_levels(profile, window, |s| s == sa, |s| s == sb, rng),
        WindowMode::ClassWide => dense_on_classes(profile, window, |c| c == window.class, rng),
    }
}

/// EW window: every level up to the selected one on each side (pairwise), or
/// every class up to the selected one (class-wide).
pub fn encode_ew<T: Field, R: Rng + ?Sized>(
    profile: &ClassProfile,
    window: Window,
    mode: WindowMode,
    rng: &mut R,
) -> Result<Coefficients<T>> {
    let (sa, sb) = window.pair;
    match mode {
        WindowMode::Pairwise => outer_on_levels(profile, window, |s| s <= sa, |s| s <= sb, rng),
        WindowMode::ClassWide => dense_on_classes(profile, window, |c| c <= window.class, rng),
    }
}

/// Random dense row over all `k` sub-products; any `k` such rows are
/// invertible with high probability.
pub fn encode_mds<T: Field, R: Rng + ?Sized>(subproducts: usize, rng: &mut R) -> Coefficients<T> {
    Coefficients::Dense(random_on(std::iter::repeat_n(true, subproducts), rng))
}

/// Unit coefficients selecting sub-product `index` (flat `n * P + p`).
pub fn encode_unit<T: Field>(profile: &ClassProfile, index: usize) -> Coefficients<T> {
    let (n, p) = (index / profile.col_blocks(), index % profile.col_blocks());
    let mut alpha = vec![T::zero(); profile.row_blocks()];
    let mut beta = vec![T::zero(); profile.col_blocks()];
    alpha[n] = T::one();
    beta[p] = T::one();
    Coefficients::Outer { alpha, beta }
}

/// Everything needed to produce the tasks of one coded multiplication.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub strategy: Strategy,
    pub workers: usize,
    pub gamma: WindowDistribution,
    pub mode: WindowMode,
    pub sampling: WindowSampling,
}

impl Encoder {
    pub fn validate(&self, profile: &ClassProfile) -> Result<()> {
        let k = profile.subproducts();
        match self.strategy {
            Strategy::Uncoded if self.workers != k => Err(Error::InvalidParameters(format!(
                "uncoded needs exactly one worker per sub-product ({k}), got {}",
                self.workers
            ))),
            Strategy::BlockRep if self.workers == 0 || !self.workers.is_multiple_of(k) => {
                Err(Error::InvalidParameters(format!(
                    "block repetition needs a multiple of {k} workers, got {}",
                    self.workers
                )))
            }
            Strategy::Now | Strategy::Ew => {
                let needed = match self.sampling {
                    WindowSampling::ClassThenPair => profile.num_classes(),
                    WindowSampling::IndependentSides => profile.levels(),
                };
                if self.gamma.len() != needed {
                    return Err(Error::InvalidDistribution(format!(
                        "expected {needed} window probabilities, got {}",
                        self.gamma.len()
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn encode_task<T: Field, R: Rng + ?Sized>(
        &self,
        profile: &ClassProfile,
        worker: usize,
        rng: &mut R,
    ) -> Result<CodedTask<T>> {
        let k = profile.subproducts();
        let (window, coefficients) = match self.strategy {
            Strategy::Now | Strategy::Ew => {
                let window = sample_window(&self.gamma, profile, self.sampling, rng)?;
                let coeffs = if self.strategy == Strategy::Now {
                    encode_now(profile, window, self.mode, rng)?
                } else {
                    encode_ew(profile, window, self.mode, rng)?
                };
                (Some(window), coeffs)
            }
            Strategy::Mds => (None, encode_mds(k, rng)),
            // round-robin: worker w carries sub-product w mod k
            Strategy::Uncoded | Strategy::BlockRep => (None, encode_unit(profile, worker % k)),
        };
        Ok(CodedTask {
            worker,
            strategy: self.strategy,
            window,
            coefficients,
        })
    }

    /// Tasks for workers `0..workers`, drawn in worker order from `rng`.
    pub fn encode_all<T: Field, R: Rng + ?Sized>(
        &self,
        profile: &ClassProfile,
        rng: &mut R,
    ) -> Result<Vec<CodedTask<T>>> {
        self.validate(profile)?;
        (0..self.workers)
            .map(|w| self.encode_task(profile, w, rng))
            .collect()
    }
}

/// Run-log CSV: worker, strategy, class, pair, support (1-based, `n:p` list).
pub fn tasks_to_csv<T: Field>(tasks: &[CodedTask<T>], col_blocks: usize) -> String {
    let mut out = String::from("worker,strategy,class,pair,support\n");
    for t in tasks {
        let (class, pair) = match t.window {
            Some(w) => (
                (w.class + 1).to_string(),
                format!("{}:{}", w.pair.0 + 1, w.pair.1 + 1),
            ),
            None => (String::new(), String::new()),
        };
        let support: Vec<String> = t
            .support()
            .into_iter()
            .map(|i| format!("{}:{}", i / col_blocks + 1, i % col_blocks + 1))
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t.worker + 1,
            t.strategy,
            class,
            pair,
            support.join(" ")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmat::{synthetic_matrix, ClassMerge, Side};
    use crate::field::Fp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_profile() -> ClassProfile {
        ClassProfile::new(vec![0, 1, 2], vec![0, 1, 2], ClassMerge::grouped(3)).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn distribution_validation() {
        assert!(WindowDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(WindowDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(WindowDistribution::new(vec![0.35, 0.35, 0.3]).is_ok());
    }

    #[test]
    fn degenerate_distribution_always_first() {
        let d = WindowDistribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        let mut r = rng(1);
        assert!((0..10_000).all(|_| d.sample(&mut r) == 0));
    }

    #[test]
    fn class_frequencies_follow_gamma() {
        let d = WindowDistribution::new(vec![0.35, 0.35, 0.3]).unwrap();
        let mut r = rng(2);
        let mut counts = [0usize; 3];
        let draws = 1_000_000;
        for _ in 0..draws {
            counts[d.sample(&mut r)] += 1;
        }
        for (c, g) in counts.iter().zip([0.35, 0.35, 0.3]) {
            assert!((*c as f64 / draws as f64 - g).abs() < 0.003);
        }
    }

    #[test]
    fn composite_class_pairs_split_evenly() {
        let profile = reference_profile();
        let d = WindowDistribution::new(vec![0.0, 1.0, 0.0]).unwrap();
        let mut r = rng(3);
        let draws = 1_000_000;
        let hm = (0..draws)
            .filter(|_| {
                let w = sample_window(&d, &profile, WindowSampling::ClassThenPair, &mut r).unwrap();
                assert_eq!(w.class, 1);
                w.pair == (0, 1)
            })
            .count();
        assert!((hm as f64 / draws as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn pair_weighting_by_subproduct_count() {
        // class 0 = {(0,0)} with 2x1 sub-products, class 1 holds (0,1),(1,0),(1,1)
        let merge = ClassMerge::from_entries(2, &[((0, 0), 0), ((0, 1), 1), ((1, 1), 1)]).unwrap();
        let profile = ClassProfile::new(vec![0, 0, 1], vec![0, 1], merge).unwrap();
        // (0,1): 2 sub-products, (1,0): 1, (1,1): 1
        let d = WindowDistribution::new(vec![0.0, 1.0]).unwrap();
        let mut r = rng(4);
        let draws = 400_000;
        let mut c01 = 0;
        for _ in 0..draws {
            if sample_window(&d, &profile, WindowSampling::ClassThenPair, &mut r).unwrap().pair == (0, 1) {
                c01 += 1;
            }
        }
        assert!((c01 as f64 / draws as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn now_pairwise_supports() {
        let profile = reference_profile();
        let mut r = rng(5);
        let c: Coefficients<f64> =
            encode_now(&profile, Window { class: 0, pair: (0, 0) }, WindowMode::Pairwise, &mut r).unwrap();
        let Coefficients::Outer { alpha, beta } = c else { panic!() };
        assert_eq!(alpha.iter().filter(|a| **a != 0.0).count(), 1);
        assert_eq!(beta.iter().filter(|b| **b != 0.0).count(), 1);
    }

    #[test]
    fn now_single_level_is_full_rlc() {
        let profile = ClassProfile::new(vec![0; 3], vec![0; 3], ClassMerge::per_pair(1)).unwrap();
        let mut r = rng(6);
        let c: Coefficients<f64> =
            encode_now(&profile, Window { class: 0, pair: (0, 0) }, WindowMode::Pairwise, &mut r).unwrap();
        let task = CodedTask { worker: 0, strategy: Strategy::Now, window: None, coefficients: c };
        assert_eq!(task.support(), (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn now_high_medium_product() {
        let profile = reference_profile();
        let mut r = rng(7);
        let mut mr = rng(8);
        let a: Matrix<f64> = synthetic_matrix(&mut mr, Side::Left, &[10.0, 1.0, 0.1], 5, 20);
        let b: Matrix<f64> = synthetic_matrix(&mut mr, Side::Right, &[10.0, 1.0, 0.1], 5, 20);
        let pa = BlockPartition::new(a, 3, 5, Side::Left).unwrap();
        let pb = BlockPartition::new(b, 3, 5, Side::Right).unwrap();
        let window = Window { class: 1, pair: (0, 1) };
        let c = encode_now(&profile, window, WindowMode::Pairwise, &mut r).unwrap();
        let task = CodedTask { worker: 0, strategy: Strategy::Now, window: Some(window), coefficients: c };
        let Coefficients::Outer { alpha, beta } = &task.coefficients else { panic!() };
        let mut expected = pa.block(0).matmul(&pb.block(1));
        expected.scale(alpha[0] * beta[1]);
        let got = task.worker_product(&pa, &pb);
        assert!(got.distance_sq(&expected) <= 1e-20 * expected.frobenius_sq());
        assert_eq!(task.support(), vec![1]);
    }

    #[test]
    fn ew_full_window() {
        let profile = reference_profile();
        let mut r = rng(9);
        let c: Coefficients<f64> =
            encode_ew(&profile, Window { class: 2, pair: (2, 2) }, WindowMode::Pairwise, &mut r).unwrap();
        let Coefficients::Outer { alpha, beta } = c else { panic!() };
        assert!(alpha.iter().all(|a| *a != 0.0));
        assert!(beta.iter().all(|b| *b != 0.0));
    }

    #[test]
    fn ew_first_window_matches_now() {
        let profile = reference_profile();
        let w = Window { class: 0, pair: (0, 0) };
        let now: Coefficients<f64> = encode_now(&profile, w, WindowMode::Pairwise, &mut rng(10)).unwrap();
        let ew: Coefficients<f64> = encode_ew(&profile, w, WindowMode::Pairwise, &mut rng(10)).unwrap();
        assert_eq!(now, ew);
    }

    #[test]
    fn ew_medium_high_touches_two_subproducts() {
        let profile = reference_profile();
        let w = Window { class: 1, pair: (1, 0) };
        let c: Coefficients<f64> = encode_ew(&profile, w, WindowMode::Pairwise, &mut rng(11)).unwrap();
        let task = CodedTask { worker: 0, strategy: Strategy::Ew, window: Some(w), coefficients: c };
        // C_HH is index 0, C_MH is index 3
        assert_eq!(task.support(), vec![0, 3]);
    }

    #[test]
    fn class_wide_supports() {
        let profile = reference_profile();
        let w = Window { class: 1, pair: (0, 1) };
        let now: Coefficients<f64> = encode_now(&profile, w, WindowMode::ClassWide, &mut rng(12)).unwrap();
        let ew: Coefficients<f64> = encode_ew(&profile, w, WindowMode::ClassWide, &mut rng(12)).unwrap();
        let t = |c| CodedTask { worker: 0, strategy: Strategy::Now, window: Some(w), coefficients: c };
        assert_eq!(t(now).support(), vec![1, 3]);
        assert_eq!(t(ew).support(), vec![0, 1, 3]);
    }

    #[test]
    fn empty_window_is_an_error() {
        let profile = ClassProfile::new(vec![0, 0], vec![0, 1], ClassMerge::per_pair(2)).unwrap();
        let res: Result<Coefficients<f64>> =
            encode_now(&profile, Window { class: 2, pair: (1, 1) }, WindowMode::Pairwise, &mut rng(13));
        assert!(matches!(res, Err(Error::EmptyWindow(2, 2))));
    }

    #[test]
    fn coefficient_rows() {
        let task = |alpha: Vec<f64>, beta: Vec<f64>| CodedTask {
            worker: 0,
            strategy: Strategy::Now,
            window: None,
            coefficients: Coefficients::Outer { alpha, beta },
        };
        let g = task(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]).coefficient_row();
        assert_eq!(g, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let g = task(vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]).coefficient_row();
        assert_eq!(g, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn coefficient_row_is_outer_product() {
        let profile = reference_profile();
        let mut r = rng(14);
        for _ in 0..50 {
            let w = Window { class: 2, pair: (2, 1) };
            let c: Coefficients<Fp> = encode_ew(&profile, w, WindowMode::Pairwise, &mut r).unwrap();
            let Coefficients::Outer { alpha, beta } = c.clone() else { panic!() };
            let g = CodedTask { worker: 0, strategy: Strategy::Ew, window: Some(w), coefficients: c }
                .coefficient_row();
            for n in 0..3 {
                for p in 0..3 {
                    assert_eq!(g[n * 3 + p], alpha[n] * beta[p]);
                }
            }
        }
    }

    #[test]
    fn uncoded_is_bijection_and_block_rep_doubles() {
        let profile = reference_profile();
        let gamma = WindowDistribution::new(vec![1.0]).unwrap();
        let mut enc = Encoder {
            strategy: Strategy::Uncoded,
            workers: 9,
            gamma,
            mode: WindowMode::Pairwise,
            sampling: WindowSampling::ClassThenPair,
        };
        let tasks: Vec<CodedTask<f64>> = enc.encode_all(&profile, &mut rng(15)).unwrap();
        let mut seen: Vec<usize> = tasks.iter().map(|t| t.support()[0]).collect();
        seen.sort();
        assert_eq!(seen, (0..9).collect::<Vec<_>>());

        enc.strategy = Strategy::BlockRep;
        enc.workers = 18;
        let tasks: Vec<CodedTask<f64>> = enc.encode_all(&profile, &mut rng(15)).unwrap();
        let mut counts = [0; 9];
        tasks.iter().for_each(|t| counts[t.support()[0]] += 1);
        assert_eq!(counts, [2; 9]);

        enc.workers = 10;
        assert!(enc.encode_all::<f64, _>(&profile, &mut rng(15)).is_err());
        enc.strategy = Strategy::Uncoded;
        assert!(enc.encode_all::<f64, _>(&profile, &mut rng(15)).is_err());
    }

    #[test]
    fn seeded_encoding_reproducible() {
        let profile = reference_profile();
        let enc = Encoder {
            strategy: Strategy::Ew,
            workers: 40,
            gamma: WindowDistribution::new(vec![0.35, 0.35, 0.3]).unwrap(),
            mode: WindowMode::Pairwise,
            sampling: WindowSampling::ClassThenPair,
        };
        let a: Vec<CodedTask<f64>> = enc.encode_all(&profile, &mut rng(16)).unwrap();
        let b: Vec<CodedTask<f64>> = enc.encode_all(&profile, &mut rng(16)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn independent_sides_needs_level_sized_gamma() {
        let profile = ClassProfile::new(vec![0, 1], vec![0, 1], ClassMerge::per_pair(2)).unwrap();
        let d = WindowDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert!(sample_window(&d, &profile, WindowSampling::IndependentSides, &mut rng(17)).is_err());
        let d = WindowDistribution::new(vec![0.5, 0.5]).unwrap();
        let w = sample_window(&d, &profile, WindowSampling::IndependentSides, &mut rng(17)).unwrap();
        assert_eq!(w.class, profile.merge().class_of(w.pair.0, w.pair.1).unwrap());
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!("block-rep".parse::<Strategy>().unwrap(), Strategy::BlockRep);
        let err = "raptor".parse::<Strategy>().unwrap_err().to_string();
        assert!(err.contains("now, ew, mds, uncoded, block-rep"));
    }

    #[test]
    fn task_log_lists_support() {
        let profile = reference_profile();
        let tasks = vec![CodedTask::<f64> {
            worker: 0,
            strategy: Strategy::Uncoded,
            window: None,
            coefficients: encode_unit(&profile, 5),
        }];
        assert_eq!(tasks_to_csv(&tasks, 3), "worker,strategy,class,pair,support\n1,uncoded,,,2:3\n");
    }
}
