//! Stacked linear least squares and the one-dimensional grid minimizer.
//!
//! Every identification step in this crate reduces to the same shape: each
//! sample contributes a small block of equations `a_k x = b_k`, the blocks
//! are stacked, and the unweighted least-squares solution is taken. The
//! solver works on a Householder QR factorization of the stacked matrix; the
//! normal equations are never formed.

use std::convert::Infallible;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

/// Relative singular-value threshold below which a column direction is
/// considered numerically absent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum LsqError {
    #[error("block {block} has shape {rows}x{cols}, expected {expected_cols} columns and a matching rhs")]
    ShapeMismatch {
        block: usize,
        rows: usize,
        cols: usize,
        expected_cols: usize,
    },
    #[error("system is empty")]
    Empty,
    #[error("system has {rows} rows but {cols} unknowns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("system is rank deficient (numerical rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },
    #[error("system contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError<E> {
    #[error("grid must be nonempty, strictly increasing and positive")]
    InvalidGrid,
    #[error("objective is not finite at candidate {candidate}")]
    NonFiniteObjective { candidate: f64 },
    #[error("objective failed at candidate {candidate}: {source}")]
    Objective { candidate: f64, source: E },
}

/// Stacked regression problem `a x ≈ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Number of per-sample blocks that were stacked.
    pub row_blocks: usize,
}

impl LinearSystem {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// Multiply every row of `a` and `b` by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        LinearSystem {
            a: &self.a * factor,
            b: &self.b * factor,
            row_blocks: self.row_blocks,
        }
    }
}

/// Incrementally assembles a [`LinearSystem`] from fixed-width row blocks
/// without allocating a matrix per sample.
#[derive(Debug, Clone)]
pub struct SystemBuilder {
    cols: usize,
    a_rows: Vec<f64>,
    b: Vec<f64>,
    blocks: usize,
}

impl SystemBuilder {
    pub fn new(cols: usize) -> Self {
        SystemBuilder {
            cols,
            a_rows: Vec::new(),
            b: Vec::new(),
            blocks: 0,
        }
    }

    pub fn with_capacity(cols: usize, rows: usize) -> Self {
        SystemBuilder {
            cols,
            a_rows: Vec::with_capacity(rows * cols),
            b: Vec::with_capacity(rows),
            blocks: 0,
        }
    }

    /// Append one equation. `row` must have exactly `cols` entries.
    pub fn push_row(&mut self, row: &[f64], rhs: f64) {
        assert_eq!(row.len(), self.cols, "row width does not match system");
        self.a_rows.extend_from_slice(row);
        self.b.push(rhs);
    }

    /// Mark the end of a sample block.
    pub fn end_block(&mut self) {
        self.blocks += 1;
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn finish(self) -> LinearSystem {
        let rows = self.b.len();
        LinearSystem {
            a: DMatrix::from_row_slice(rows, self.cols, &self.a_rows),
            b: DVector::from_vec(self.b),
            row_blocks: self.blocks,
        }
    }
}

/// Vertically concatenate per-sample blocks in input order.
pub fn stack<'a, I>(blocks: I) -> Result<LinearSystem, LsqError>
where
    I: IntoIterator<Item = (&'a DMatrix<f64>, &'a DVector<f64>)>,
{
    let mut builder: Option<SystemBuilder> = None;
    for (index, (a, b)) in blocks.into_iter().enumerate() {
        let builder = builder.get_or_insert_with(|| SystemBuilder::new(a.ncols()));
        if a.ncols() != builder.cols || a.nrows() != b.len() {
            return Err(LsqError::ShapeMismatch {
                block: index,
                rows: a.nrows(),
                cols: a.ncols(),
                expected_cols: builder.cols,
            });
        }
        for r in 0..a.nrows() {
            let row: Vec<f64> = a.row(r).iter().copied().collect();
            builder.push_row(&row, b[r]);
        }
        builder.end_block();
    }
    builder.map(SystemBuilder::finish).ok_or(LsqError::Empty)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub x: DVector<f64>,
    /// Root mean square over all residual entries.
    pub rmse: f64,
    pub residual_norm: f64,
}

/// Ordinary least squares through Householder QR.
///
/// Rank is judged on the singular values of the triangular factor, which
/// equal those of `a`.
pub fn solve_ols(sys: &LinearSystem) -> Result<LsqSolution, LsqError> {
    let (rows, cols) = sys.a.shape();
    if cols == 0 || rows == 0 {
        return Err(LsqError::Empty);
    }
    if rows < cols {
        return Err(LsqError::Underdetermined { rows, cols });
    }
    if sys.a.iter().chain(sys.b.iter()).any(|v| !v.is_finite()) {
        return Err(LsqError::NonFinite);
    }

    let qr = sys.a.clone().qr();
    let r = qr.r();
    let singular = r.singular_values();
    let largest = singular.max();
    let rank = singular
        .iter()
        .filter(|&&s| largest > 0.0 && s > RANK_TOLERANCE * largest)
        .count();
    if rank < cols {
        return Err(LsqError::RankDeficient { rank, cols });
    }

    let mut qtb = sys.b.clone();
    qr.q_tr_mul(&mut qtb);
    let x = r
        .solve_upper_triangular(&qtb.rows(0, cols).into_owned())
        .ok_or(LsqError::RankDeficient { rank: cols - 1, cols })?;

    let residual = &sys.b - &sys.a * &x;
    let residual_norm = residual.norm();
    Ok(LsqSolution {
        x,
        rmse: residual_norm / (rows as f64).sqrt(),
        residual_norm,
    })
}

/// Outcome of a one-dimensional grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub best: f64,
    pub best_index: usize,
    pub best_value: f64,
    /// `(candidate, objective)` in grid order.
    pub curve: Vec<(f64, f64)>,
}

impl GridSearch {
    /// Whether the minimum sits on the first or last grid point of a grid
    /// with more than one candidate.
    pub fn on_boundary(&self) -> bool {
        self.curve.len() > 1 && (self.best_index == 0 || self.best_index + 1 == self.curve.len())
    }
}

fn valid_grid(grid: &[f64]) -> bool {
    !grid.is_empty()
        && grid.iter().all(|g| g.is_finite() && *g > 0.0)
        && grid.windows(2).all(|w| w[0] < w[1])
}

/// Evaluate a fallible objective on every grid point and return the minimum.
///
/// Candidates are evaluated in parallel; the curve is returned in grid order
/// and ties go to the smaller candidate.
pub fn try_grid_minimize<F, E>(grid: &[f64], objective: F) -> Result<GridSearch, GridError<E>>
where
    F: Fn(f64) -> Result<f64, E> + Sync,
    E: Send,
{
    if !valid_grid(grid) {
        return Err(GridError::InvalidGrid);
    }
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&c| objective(c).map_err(|source| GridError::Objective { candidate: c, source }))
        .collect::<Result<_, _>>()?;

    let mut best_index = 0;
    for (i, (&candidate, &value)) in grid.iter().zip(&values).enumerate() {
        if !value.is_finite() {
            return Err(GridError::NonFiniteObjective { candidate });
        }
        if value < values[best_index] {
            best_index = i;
        }
    }
    Ok(GridSearch {
        best: grid[best_index],
        best_index,
        best_value: values[best_index],
        curve: grid.iter().copied().zip(values).collect(),
    })
}

pub fn grid_minimize<F>(grid: &[f64], objective: F) -> Result<GridSearch, GridError<Infallible>>
where
    F: Fn(f64) -> f64 + Sync,
{
    try_grid_minimize(grid, |c| Ok::<_, Infallible>(objective(c)))
}

/// Golden-section search for a minimum of a unimodal objective on
/// `[lo, hi]`, carried out in `ln x`. Stops once the bracket is narrower than
/// `rel_tol` in relative terms and returns the best point evaluated.
pub fn try_golden_minimize<F, E>(lo: f64, hi: f64, rel_tol: f64, objective: F) -> Result<(f64, f64), E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective(c.exp())?;
    let mut fd = objective(d.exp())?;
    let tol = rel_tol.max(1e-15).ln_1p();
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective(d.exp())?;
        }
    }
    Ok(if fc <= fd { (c.exp(), fc) } else { (d.exp(), fd) })
}

/// `points` logarithmically spaced values on `[min, max]`, endpoints included.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (lo, hi) = (min.ln(), max.ln());
            (0..points)
                .map(|i| {
                    if i == 0 {
                        min
                    } else if i + 1 == points {
                        max
                    } else {
                        (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}
