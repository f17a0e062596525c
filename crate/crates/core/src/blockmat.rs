//! Block partitioning, norm-based importance levels and product classes.
//!
//! A left matrix `A` (`N*U x M`) is cut into `N` row blocks `A_n`, a right
//! matrix `B` (`M x P*Q`) into `P` column blocks `B_p`. Each block gets an
//! importance level in `0..S` (level 0 holds the largest norms) and every
//! sub-product `C_np = A_n B_p` falls in a product class given by a
//! [`ClassMerge`] over unordered level pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// `A`, split into row blocks.
    Left,
    /// `B`, split into column blocks.
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockPartition<T> {
    matrix: Matrix<T>,
    side: Side,
    blocks: usize,
    block_size: usize,
}

impl<T: Field> BlockPartition<T> {
    /// Splits `matrix` into `blocks` blocks of `block_size` rows (left side)
    /// or columns (right side).
    pub fn new(matrix: Matrix<T>, blocks: usize, block_size: usize, side: Side) -> Result<Self> {
        let split_dim = match side {
            Side::Left => matrix.rows(),
            Side::Right => matrix.cols(),
        };
        if blocks == 0 || block_size == 0 || split_dim != blocks * block_size {
            return Err(Error::DimensionMismatch(format!(
                "{:?} matrix {}x{} cannot be split into {blocks} blocks of {block_size}",
                side,
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(BlockPartition {
            matrix,
            side,
            blocks,
            block_size,
        })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// `N` for a left partition, `P` for a right one.
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// `U` for a left partition, `Q` for a right one.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Shared dimension `M`.
    pub fn inner(&self) -> usize {
        match self.side {
            Side::Left => self.matrix.cols(),
            Side::Right => self.matrix.rows(),
        }
    }

    pub fn block(&self, i: usize) -> Matrix<T> {
        let (m, s) = (self.inner(), self.block_size);
        match self.side {
            Side::Left => self.matrix.submatrix(i * s, 0, s, m),
            Side::Right => self.matrix.submatrix(0, i * s, m, s),
        }
    }

    pub fn all_blocks(&self) -> Vec<Matrix<T>> {
        (0..self.blocks).map(|i| self.block(i)).collect()
    }

    pub fn block_norms(&self) -> Vec<f64> {
        (0..self.blocks)
            .map(|i| self.block(i).frobenius_sq().sqrt())
            .collect()
    }

    /// Concatenates the blocks back into one matrix.
    pub fn reassemble(&self) -> Matrix<T> {
        let (rows, cols) = self.matrix.shape();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..self.blocks {
            let b = self.block(i);
            match self.side {
                Side::Left => out.set_submatrix(i * self.block_size, 0, &b),
                Side::Right => out.set_submatrix(0, i * self.block_size, &b),
            }
        }
        out
    }
}

/// Rule for turning block norms into importance levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Classifier {
    /// Rank blocks by descending norm and cut the ranking into `S` equal buckets.
    #[default]
    Quantile,
    /// `S - 1` nonnegative, strictly decreasing thresholds; a block takes the
    /// first level whose threshold its norm strictly exceeds.
    Thresholds(Vec<f64>),
}

/// Assigns a level in `0..levels` to every norm; level 0 is most important.
/// Zero-norm blocks always land in the last level.
pub fn classify_by_norm(norms: &[f64], levels: usize, classifier: &Classifier) -> Result<Vec<usize>> {
    if levels == 0 {
        return Err(Error::InvalidClassifier("at least one level is required".into()));
    }
    let last = levels - 1;
    match classifier {
        Classifier::Quantile => {
            let mut order: Vec<usize> = (0..norms.len()).collect();
            // stable: ties keep the lower original index first
            order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
            let count = norms.len();
            let mut out = vec![last; count];
            for (rank, &idx) in order.iter().enumerate() {
                if norms[idx] > 0.0 {
                    out[idx] = rank * levels / count;
                }
            }
            Ok(out)
        }
        Classifier::Thresholds(th) => {
            if th.len() != last {
                return Err(Error::InvalidClassifier(format!(
                    "{} thresholds given for {levels} levels",
                    th.len()
                )));
            }
            if th.iter().any(|t| t.is_nan() || *t < 0.0) || th.windows(2).any(|w| w[0] <= w[1]) {
                return Err(Error::InvalidClassifier(
                    "thresholds must be nonnegative and strictly decreasing".into(),
                ));
            }
            Ok(norms
                .iter()
                .map(|&n| th.iter().position(|&t| n > t).unwrap_or(last))
                .collect())
        }
    }
}

/// Symmetric map from unordered level pairs to product classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMerge {
    levels: usize,
    // row-major levels x levels table, symmetric
    table: Vec<Option<usize>>,
}

impl ClassMerge {
    /// Builds a merge from `((level_a, level_b), class)` entries; the order of
    /// the two levels does not matter.
    pub fn from_entries(levels: usize, entries: &[((usize, usize), usize)]) -> Result<Self> {
        let mut table = vec![None; levels * levels];
        for &((a, b), class) in entries {
            if a >= levels || b >= levels {
                return Err(Error::InvalidParameters(format!(
                    "level pair ({a}, {b}) out of range for {levels} levels"
                )));
            }
            for (x, y) in [(a, b), (b, a)] {
                match table[x * levels + y] {
                    Some(c) if c != class => {
                        return Err(Error::InvalidParameters(format!(
                            "level pair ({a}, {b}) mapped to both class {c} and {class}"
                        )))
                    }
                    _ => table[x * levels + y] = Some(class),
                }
            }
        }
        Ok(ClassMerge { levels, table })
    }

    /// One class per unordered level pair, in lexicographic order of
    /// `(min, max)`: `L = S(S+1)/2`.
    pub fn per_pair(levels: usize) -> Self {
        let mut entries = Vec::new();
        let mut class = 0;
        for a in 0..levels {
            for b in a..levels {
                entries.push(((a, b), class));
                class += 1;
            }
        }
        Self::from_entries(levels, &entries).expect("per-pair merge is total")
    }

    /// For three levels: high x high, high x medium, everything else.
    /// Other level counts fall back to [`ClassMerge::per_pair`].
    pub fn grouped(levels: usize) -> Self {
        if levels != 3 {
            return Self::per_pair(levels);
        }
        let entries = [
            ((0, 0), 0),
            ((0, 1), 1),
            ((0, 2), 2),
            ((1, 1), 2),
            ((1, 2), 2),
            ((2, 2), 2),
        ];
        Self::from_entries(3, &entries).expect("grouped merge is total")
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn class_of(&self, a: usize, b: usize) -> Result<usize> {
        self.table
            .get(a * self.levels + b)
            .copied()
            .flatten()
            .ok_or(Error::IncompleteMerge(a, b))
    }

    pub fn num_classes(&self) -> usize {
        self.table.iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// `((a, b), class)` for every unordered pair `a <= b`.
    pub fn entries(&self) -> Vec<((usize, usize), usize)> {
        let mut out = Vec::new();
        for a in 0..self.levels {
            for b in a..self.levels {
                if let Some(c) = self.table[a * self.levels + b] {
                    out.push(((a, b), c));
                }
            }
        }
        out
    }
}

/// An ordered `(row level, column level)` pair together with the number of
/// sub-products it holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairWeight {
    pub pair: (usize, usize),
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassProfile {
    levels: usize,
    row_levels: Vec<usize>,
    col_levels: Vec<usize>,
    merge: ClassMerge,
    num_classes: usize,
    // class of every sub-product, index n * P + p
    class_of: Vec<usize>,
    class_counts: Vec<usize>,
}

impl ClassProfile {
    pub fn new(row_levels: Vec<usize>, col_levels: Vec<usize>, merge: ClassMerge) -> Result<Self> {
        let levels = merge.levels();
        if let Some(&bad) = row_levels.iter().chain(&col_levels).find(|&&s| s >= levels) {
            return Err(Error::InvalidParameters(format!(
                "level {bad} out of range for {levels} levels"
            )));
        }
        for a in 0..levels {
            for b in 0..levels {
                merge.class_of(a, b)?;
            }
        }
        let num_classes = merge.num_classes();
        let mut class_of = Vec::with_capacity(row_levels.len() * col_levels.len());
        let mut class_counts = vec![0; num_classes];
        for &a in &row_levels {
            for &b in &col_levels {
                let c = merge.class_of(a, b)?;
                class_counts[c] += 1;
                class_of.push(c);
            }
        }
        Ok(ClassProfile {
            levels,
            row_levels,
            col_levels,
            merge,
            num_classes,
            class_of,
            class_counts,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn row_blocks(&self) -> usize {
        self.row_levels.len()
    }

    pub fn col_blocks(&self) -> usize {
        self.col_levels.len()
    }

    pub fn subproducts(&self) -> usize {
        self.class_of.len()
    }

    pub fn row_levels(&self) -> &[usize] {
        &self.row_levels
    }

    pub fn col_levels(&self) -> &[usize] {
        &self.col_levels
    }

    pub fn merge(&self) -> &ClassMerge {
        &self.merge
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `k_l`: number of sub-products per class.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn class_of(&self, n: usize, p: usize) -> usize {
        self.class_of[n * self.col_levels.len() + p]
    }

    /// Flat sub-product indices (`n * P + p`) belonging to class `class`.
    pub fn subproducts_in_class(&self, class: usize) -> Vec<usize> {
        (0..self.class_of.len())
            .filter(|&i| self.class_of[i] == class)
            .collect()
    }

    /// Number of row (column) blocks per level: `n_A^s` (`n_B^s`).
    pub fn level_sizes(&self) -> (Vec<usize>, Vec<usize>) {
        let mut a = vec![0; self.levels];
        let mut b = vec![0; self.levels];
        self.row_levels.iter().for_each(|&s| a[s] += 1);
        self.col_levels.iter().for_each(|&s| b[s] += 1);
        (a, b)
    }

    /// Ordered level pairs of class `class` that hold at least one sub-product.
    pub fn pairs_in_class(&self, class: usize) -> Vec<PairWeight> {
        let (na, nb) = self.level_sizes();
        let mut out = Vec::new();
        for a in 0..self.levels {
            for b in 0..self.levels {
                let count = na[a] * nb[b];
                if count > 0 && self.merge.class_of(a, b).ok() == Some(class) {
                    out.push(PairWeight { pair: (a, b), count });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Rows,
    Columns,
}

/// A reordering of rows or columns with its inverse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    /// `order[i]` is the original index placed at position `i`.
    pub order: Vec<usize>,
    /// `inverse[order[i]] == i`.
    pub inverse: Vec<usize>,
}

impl Permutation {
    pub fn from_order(order: Vec<usize>) -> Self {
        let mut inverse = vec![0; order.len()];
        for (i, &o) in order.iter().enumerate() {
            inverse[o] = i;
        }
        Permutation { order, inverse }
    }

    pub fn identity(len: usize) -> Self {
        Self::from_order((0..len).collect())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn apply<T: Field>(&self, m: &Matrix<T>, axis: Axis) -> Matrix<T> {
        match axis {
            Axis::Rows => m.select_rows(&self.order),
            Axis::Columns => m.select_cols(&self.order),
        }
    }

    pub fn undo<T: Field>(&self, m: &Matrix<T>, axis: Axis) -> Matrix<T> {
        match axis {
            Axis::Rows => m.select_rows(&self.inverse),
            Axis::Columns => m.select_cols(&self.inverse),
        }
    }
}

/// Orders rows or columns by descending Euclidean norm, ties by original index.
pub fn norm_permutation<T: Field>(m: &Matrix<T>, axis: Axis) -> Permutation {
    let norms = match axis {
        Axis::Rows => m.row_norms(),
        Axis::Columns => m.col_norms(),
    };
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    Permutation::from_order(order)
}

/// Random matrix for one side with i.i.d. entries of variance `variances[i]`
/// inside block `i` (Gaussian for reals, uniform for exact fields).
pub fn synthetic_matrix<T: Field, R: Rng + ?Sized>(
    rng: &mut R,
    side: Side,
    variances: &[f64],
    block_size: usize,
    inner: usize,
) -> Matrix<T> {
    let blocks = variances.len();
    match side {
        Side::Left => Matrix::from_fn(blocks * block_size, inner, |i, _| {
            T::random_entry(rng, variances[i / block_size])
        }),
        Side::Right => Matrix::from_fn(inner, blocks * block_size, |_, j| {
            T::random_entry(rng, variances[j / block_size])
        }),
    }
}
