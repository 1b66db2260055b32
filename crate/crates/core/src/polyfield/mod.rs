//! Bivariate polynomial fields, the Σ matrix and the rank test.
//!
//! A diffusion driven by `dX1 = dW1`, `dX2 = dW2`, `dX3 = σ1 dW1 + σ2 dW2`
//! with polynomial `σ1, σ2` reduces to monomial integrals of the driving
//! Brownian motion. [`check_phc`] decides the Hörmander condition by the rank
//! of the matrix built from `∂1^{l+1} ∂2^m φ`.

mod poly;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdecore::{order_key, MonomialIndex};

pub use poly::{BivariatePolyVec, PolyLiteral, PolyTerm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("output dimension must be positive")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("term ({l},{m}) exceeds degree bound {bound}")]
    DegreeExceeded { l: u32, m: u32, bound: u32 },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("axis must be 1 or 2, got {0}")]
    InvalidAxis(u8),
    #[error("Hörmander condition fails: rank {rank} < {required}")]
    PhcFails { rank: usize, required: usize },
    #[error("inconsistent start: solve residual {residual:e} exceeds tolerance")]
    InconsistentStart { residual: f64 },
}

/// `φ = σ2 − ∫_{w1}^{x1} ∂2 σ1(u, x2) du`.
pub fn compute_phi(
    sigma1: &BivariatePolyVec,
    sigma2: &BivariatePolyVec,
    w1: f64,
) -> Result<BivariatePolyVec, PolyError> {
    if sigma1.dim_out() != sigma2.dim_out() {
        return Err(PolyError::DimensionMismatch {
            expected: sigma1.dim_out(),
            found: sigma2.dim_out(),
        });
    }
    let n = sigma1.max_degree().max(sigma2.max_degree());
    let corr = sigma1.partial(2)?.antiderivative_x1(w1);
    sigma2.sub(&corr)?.with_max_degree(n)
}

/// `Ψ1 = ∫_{w1}^{x1} σ1(u, x2) du`.
pub fn compute_psi1(sigma1: &BivariatePolyVec, w1: f64) -> BivariatePolyVec {
    sigma1.antiderivative_x1(w1)
}

/// Columns of Σ as monomial indices `(l+1, m)`, sorted by the ≺ order.
pub fn sigma_columns(n: u32) -> Vec<MonomialIndex> {
    let mut cols: Vec<MonomialIndex> = (1..=n)
        .flat_map(|a| (0..=n - a).map(move |b| MonomialIndex::new(a, b)))
        .collect();
    cols.sort_by_key(|idx| order_key(*idx, n));
    cols
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaMatrix {
    pub entries: DMatrix<f64>,
    /// Column `k` holds `∂1^{a} ∂2^{b} φ` for `col_index[k] = (a, b)`, i.e. `(l+1, m)`.
    pub col_index: Vec<MonomialIndex>,
}

impl SigmaMatrix {
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Numerical rank with threshold `max(rows, cols) · ε · σ_max`.
    pub fn rank(&self) -> usize {
        let sv = self.entries.clone().svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        if smax == 0.0 {
            return 0;
        }
        let tol = self.rank_tolerance(smax);
        sv.iter().filter(|s| **s > tol).count()
    }

    fn rank_tolerance(&self, smax: f64) -> f64 {
        self.rows().max(self.cols()) as f64 * f64::EPSILON * smax
    }

    /// Minimum-norm least-squares solution of `Σ z = rhs`.
    pub fn solve_min_norm(&self, rhs: &[f64]) -> Result<Vec<f64>, PolyError> {
        if rhs.len() != self.rows() {
            return Err(PolyError::DimensionMismatch {
                expected: self.rows(),
                found: rhs.len(),
            });
        }
        let b = DVector::from_column_slice(rhs);
        let svd = self.entries.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if smax == 0.0 {
            return Ok(vec![0.0; self.cols()]);
        }
        let z = svd
            .solve(&b, self.rank_tolerance(smax))
            .expect("both singular vector sets were computed");
        Ok(z.iter().copied().collect())
    }
}

pub fn build_sigma_matrix(phi: &BivariatePolyVec, n: u32, w1: f64, w2: f64) -> SigmaMatrix {
    let col_index = sigma_columns(n);
    let mut entries = DMatrix::zeros(phi.dim_out(), col_index.len());
    for (k, idx) in col_index.iter().enumerate() {
        let col = phi.eval_derivative(idx.a, idx.b, w1, w2);
        for (j, v) in col.into_iter().enumerate() {
            entries[(j, k)] = v;
        }
    }
    SigmaMatrix { entries, col_index }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhcVerdict {
    pub holds: bool,
    pub rank: usize,
    pub cols: usize,
}

pub fn check_phc(
    sigma1: &BivariatePolyVec,
    sigma2: &BivariatePolyVec,
    w1: f64,
    w2: f64,
    n: u32,
) -> Result<PhcVerdict, PolyError> {
    let phi = compute_phi(sigma1, sigma2, w1)?;
    let sigma = build_sigma_matrix(&phi, n, w1, w2);
    let rank = sigma.rank();
    Ok(PhcVerdict {
        holds: rank == phi.dim_out(),
        rank,
        cols: sigma.cols(),
    })
}

/// Starting point `(w1, w2, w3)` of a polynomial-driven diffusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartPoint {
    pub w1: f64,
    pub w2: f64,
    pub w3: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reduction {
    #[serde(skip)]
    pub phi: BivariatePolyVec,
    #[serde(skip)]
    pub psi1: BivariatePolyVec,
    pub verdict: PhcVerdict,
    pub columns: Vec<MonomialIndex>,
    pub z3: Vec<f64>,
    pub z3_tilde: Vec<f64>,
}

impl Reduction {
    /// Starting values of the monomial integrals `I_(a,b)` equivalent to `z`:
    /// the normalized coordinate for column `(a, b)` is `I_(a,b) / (a! b!)`.
    pub fn initial_integrals(&self, z: &[f64]) -> Vec<(MonomialIndex, f64)> {
        self.columns
            .iter()
            .zip(z)
            .map(|(idx, zk)| (*idx, zk * factorial(idx.a) * factorial(idx.b)))
            .collect()
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

const SOLVE_REL_TOL: f64 = 1e-10;

pub fn reduce_to_monomials(
    sigma1: &BivariatePolyVec,
    sigma2: &BivariatePolyVec,
    start: &StartPoint,
    start_tilde: &StartPoint,
    n: u32,
) -> Result<Reduction, PolyError> {
    let phi = compute_phi(sigma1, sigma2, start.w1)?;
    let sigma = build_sigma_matrix(&phi, n, start.w1, start.w2);
    let rank = sigma.rank();
    let verdict = PhcVerdict {
        holds: rank == phi.dim_out(),
        rank,
        cols: sigma.cols(),
    };
    if !verdict.holds {
        return Err(PolyError::PhcFails {
            rank,
            required: phi.dim_out(),
        });
    }
    let solve = |w3: &[f64]| -> Result<Vec<f64>, PolyError> {
        let z = sigma.solve_min_norm(w3)?;
        let back = &sigma.entries * DVector::from_column_slice(&z);
        let rhs = DVector::from_column_slice(w3);
        let residual = (back - &rhs).norm();
        if residual > SOLVE_REL_TOL * rhs.norm().max(1.0) {
            return Err(PolyError::InconsistentStart { residual });
        }
        Ok(z)
    };
    let z3 = solve(&start.w3)?;
    let z3_tilde = solve(&start_tilde.w3)?;
    Ok(Reduction {
        psi1: compute_psi1(sigma1, start.w1),
        phi,
        verdict,
        columns: sigma.col_index,
        z3,
        z3_tilde,
    })
}

/// Fields of the Heisenberg group: `σ1 = −x2`, `σ2 = x1`.
pub fn heisenberg_fields() -> (BivariatePolyVec, BivariatePolyVec) {
    let s1 = BivariatePolyVec::from_terms(1, 1, [(0, 1, vec![-1.0])]).expect("valid literal");
    let s2 = BivariatePolyVec::from_terms(1, 1, [(1, 0, vec![1.0])]).expect("valid literal");
    (s1, s2)
}
