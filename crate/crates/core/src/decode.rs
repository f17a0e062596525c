//! Elimination decoder for received coded products.
//!
//! A sub-product `C_np` is recoverable when the unit vector `e_np` lies in the
//! row space of the received coefficient rows. Reducing the stacked rows to
//! reduced row echelon form answers this for every unknown at once: `e_j` is
//! in the row space iff some reduced row has its pivot at `j` and no other
//! nonzero entry. Applying the same row operations to the received products
//! yields the recovered blocks.

use crate::blockmat::ClassProfile;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::matrix::Matrix;

/// Entries at or below this magnitude count as zero after every coefficient
/// row has been scaled to unit max-abs. Ignored for exact fields.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Received<T> {
    /// Coefficient row over the `N*P` sub-products (flat `n * P + p`).
    pub coefficients: Vec<T>,
    /// The worker's `U x Q` product.
    pub product: Matrix<T>,
    pub arrival: f64,
}

/// Products that arrived strictly before the deadline.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedSet<T> {
    entries: Vec<Received<T>>,
    deadline: f64,
}

impl<T: Field> ReceivedSet<T> {
    /// Keeps the entries with `arrival < deadline`, in arrival order.
    pub fn new(entries: Vec<Received<T>>, deadline: f64) -> Result<Self> {
        let mut entries: Vec<_> = entries.into_iter().filter(|e| e.arrival < deadline).collect();
        if let Some(first) = entries.first() {
            let shape = first.product.shape();
            let k = first.coefficients.len();
            if let Some(bad) = entries
                .iter()
                .find(|e| e.product.shape() != shape || e.coefficients.len() != k)
            {
                return Err(Error::DimensionMismatch(format!(
                    "received product {:?} with {} coefficients, expected {shape:?} with {k}",
                    bad.product.shape(),
                    bad.coefficients.len()
                )));
            }
        }
        entries.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
        Ok(ReceivedSet { entries, deadline })
    }

    pub fn entries(&self) -> &[Received<T>] {
        &self.entries
    }

    pub fn deadline(&self) -> f64 {
        self.deadline
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeReport<T> {
    /// Recovery flag per sub-product, flat `n * P + p`.
    pub recovered: Vec<bool>,
    /// `NU x PQ` estimate with zero blocks where nothing was recovered.
    pub estimate: Matrix<T>,
    /// Rank of the received coefficient matrix.
    pub rank: usize,
}

impl<T: Field> DecodeReport<T> {
    pub fn recovered_count(&self) -> usize {
        self.recovered.iter().filter(|&&r| r).count()
    }

    /// Recovered sub-products per class.
    pub fn recovered_per_class(&self, profile: &ClassProfile) -> Vec<usize> {
        let p = profile.col_blocks();
        let mut out = vec![0; profile.num_classes()];
        for (i, _) in self.recovered.iter().enumerate().filter(|(_, r)| **r) {
            out[profile.class_of(i / p, i % p)] += 1;
        }
        out
    }

    /// CSV with one line per sub-product: `n,p,recovered` (1-based blocks).
    pub fn to_csv(&self, col_blocks: usize) -> String {
        let mut out = String::from("n,p,recovered\n");
        for (i, r) in self.recovered.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                i / col_blocks + 1,
                i % col_blocks + 1,
                u8::from(*r)
            ));
        }
        out
    }
}

struct Reduced<T> {
    rows: Vec<Vec<T>>,
    /// Pivot column of row `i`, for `i < rank`.
    pivots: Vec<usize>,
}

fn negligible<T: Field>(x: T, tol: f64) -> bool {
    if T::EXACT {
        x.is_zero()
    } else {
        x.magnitude() <= tol
    }
}

/// Gauss-Jordan elimination with partial pivoting; `rhs[i]` follows row `i`.
fn reduce<T: Field>(mut rows: Vec<Vec<T>>, cols: usize, tol: f64, rhs: &mut [Matrix<T>]) -> Reduced<T> {
    let track = !rhs.is_empty();
    if !T::EXACT {
        for (i, row) in rows.iter_mut().enumerate() {
            let big = row
                .iter()
                .copied()
                .fold(T::zero(), |m, x| if x.magnitude() > m.magnitude() { x } else { m });
            if !big.is_zero() {
                let s = big.inv();
                row.iter_mut().for_each(|x| *x = *x * s);
                if track {
                    rhs[i].scale(s);
                }
            }
        }
    }
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows.len() {
            break;
        }
        let (best, mag) = (rank..rows.len())
            .map(|r| (r, rows[r][col].magnitude()))
            .fold((rank, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if negligible_mag::<T>(mag, tol) {
            continue;
        }
        rows.swap(rank, best);
        if track {
            rhs.swap(rank, best);
        }
        let inv = rows[rank][col].inv();
        rows[rank].iter_mut().for_each(|x| *x = *x * inv);
        rows[rank][col] = T::one();
        if track {
            rhs[rank].scale(inv);
        }
        let pivot_row = rows[rank].clone();
        let pivot_rhs = if track { Some(rhs[rank].clone()) } else { None };
        for r in 0..rows.len() {
            if r == rank {
                continue;
            }
            let f = rows[r][col];
            if f.is_zero() {
                continue;
            }
            for (x, &p) in rows[r].iter_mut().zip(&pivot_row) {
                *x -= f * p;
            }
            rows[r][col] = T::zero();
            if let Some(pr) = &pivot_rhs {
                rhs[r].add_scaled(-f, pr);
            }
        }
        pivots.push(col);
        rank += 1;
    }
    Reduced { rows, pivots }
}

fn negligible_mag<T: Field>(mag: f64, tol: f64) -> bool {
    if T::EXACT {
        mag == 0.0
    } else {
        mag <= tol
    }
}

/// Recovery flags for `unknowns` sub-products given the coefficient rows.
pub fn recovered_mask<T: Field>(rows: &[Vec<T>], unknowns: usize, tol: f64) -> Vec<bool> {
    let reduced = reduce(rows.to_vec(), unknowns, tol, &mut []);
    mask_from(&reduced, unknowns, tol)
}

fn mask_from<T: Field>(reduced: &Reduced<T>, unknowns: usize, tol: f64) -> Vec<bool> {
    let mut mask = vec![false; unknowns];
    for (row, &pc) in reduced.rows.iter().zip(&reduced.pivots) {
        let isolated = row
            .iter()
            .enumerate()
            .all(|(j, &x)| j == pc || negligible(x, tol));
        if isolated {
            mask[pc] = true;
        }
    }
    mask
}

/// Rank of the stacked coefficient rows.
pub fn rank<T: Field>(rows: &[Vec<T>], unknowns: usize, tol: f64) -> usize {
    reduce(rows.to_vec(), unknowns, tol, &mut []).pivots.len()
}

/// Whether sub-product `target` lies in the row space of `rows`.
pub fn recoverable<T: Field>(rows: &[Vec<T>], target: usize, tol: f64) -> bool {
    let unknowns = rows.first().map_or(target + 1, Vec::len);
    recovered_mask(rows, unknowns, tol)[target]
}

/// Recovers every sub-product the received products determine and assembles
/// the `NU x PQ` estimate, leaving unrecovered blocks at zero.
pub fn decode<T: Field>(
    received: &ReceivedSet<T>,
    profile: &ClassProfile,
    block_rows: usize,
    block_cols: usize,
    tol: f64,
) -> Result<DecodeReport<T>> {
    let k = profile.subproducts();
    let (n_blocks, p_blocks) = (profile.row_blocks(), profile.col_blocks());
    let mut estimate = Matrix::zeros(n_blocks * block_rows, p_blocks * block_cols);
    if received.is_empty() {
        return Ok(DecodeReport {
            recovered: vec![false; k],
            estimate,
            rank: 0,
        });
    }
    let first = &received.entries[0];
    if first.coefficients.len() != k || first.product.shape() != (block_rows, block_cols) {
        return Err(Error::DimensionMismatch(format!(
            "received {} coefficients and {:?} products, profile needs {k} and {:?}",
            first.coefficients.len(),
            first.product.shape(),
            (block_rows, block_cols)
        )));
    }
    let rows: Vec<Vec<T>> = received.entries.iter().map(|e| e.coefficients.clone()).collect();
    let mut rhs: Vec<Matrix<T>> = received.entries.iter().map(|e| e.product.clone()).collect();
    let reduced = reduce(rows, k, tol, &mut rhs);
    let recovered = mask_from(&reduced, k, tol);
    for (i, &pc) in reduced.pivots.iter().enumerate() {
        if recovered[pc] {
            estimate.set_submatrix((pc / p_blocks) * block_rows, (pc % p_blocks) * block_cols, &rhs[i]);
        }
    }
    Ok(DecodeReport {
        recovered,
        estimate,
        rank: reduced.pivots.len(),
    })
}

/// Squared Frobenius norm of `c - c_hat`.
pub fn loss(c: &Matrix<f64>, c_hat: &Matrix<f64>) -> f64 {
    c.distance_sq(c_hat)
}

/// [`loss`] divided by the squared Frobenius norm of `c`. A zero `c` gives 0
/// for a zero estimate and infinity otherwise.
pub fn normalized_loss(c: &Matrix<f64>, c_hat: &Matrix<f64>) -> f64 {
    let l = loss(c, c_hat);
    let norm = c.frobenius_sq();
    if norm > 0.0 {
        l / norm
    } else if l == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}
