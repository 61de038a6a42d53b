//! Pivoted incomplete Cholesky factors of Gaussian Gram matrices and a
//! low-rank proxy representation whose trace products cost `O(r²N + r³)`.
//!
//! With `L̄ = HL` the centered factor, the push-through identity gives
//! `L̄(L̄ᵀL̄ + εN·I_r)⁻¹L̄ᵀ = Ḡ(Ḡ + εN·I)⁻¹` whenever `Ḡ = L̄L̄ᵀ`, so a proxy is
//! stored as `R = U K Uᵀ` with `U = L̄` (N×r) and `K` the r×r inverse.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::kernels::{row, sq_dist, KernelConfig};
use crate::operators::{FairnessStatistic, Notion};

/// Pivot values below this are numerical breakdown rather than round-off.
const NEGATIVE_PIVOT: f64 = -1e-10;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_RANK: usize = 256;

/// Gaussian product kernel over one or more blocks of columns, evaluated on
/// demand. A single block is the plain RBF kernel.
#[derive(Debug, Clone)]
pub struct ProductKernel {
    blocks: Vec<(Vec<Vec<f64>>, KernelConfig)>,
    n: usize,
}

impl ProductKernel {
    pub fn new(data: &DMatrix<f64>, config: KernelConfig) -> Self {
        Self {
            n: data.nrows(),
            blocks: vec![(rows(data), config)],
        }
    }

    /// Adds a factor `k_block` to the product kernel.
    pub fn times(mut self, data: &DMatrix<f64>, config: KernelConfig) -> Result<Self> {
        if data.nrows() != self.n {
            return Err(Error::Dimension(format!(
                "product kernel: {} vs {} rows",
                self.n,
                data.nrows()
            )));
        }
        self.blocks.push((rows(data), config));
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval(&self, i: usize, j: usize) -> f64 {
        let mut exponent = 0.0;
        for (rows, k) in &self.blocks {
            exponent += sq_dist(&rows[i], &rows[j]) / (2.0 * k.sigma() * k.sigma());
        }
        (-exponent).exp()
    }
}

fn rows(data: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..data.nrows()).map(|i| row(data, i)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    /// N×r factor with `LLᵀ ≈ G`.
    pub l: DMatrix<f64>,
    pub pivots: Vec<usize>,
    /// `Tr[G − LLᵀ]`.
    pub residual_trace: f64,
    pub tolerance: f64,
}

impl CholeskyFactor {
    pub fn rank(&self) -> usize {
        self.l.ncols()
    }
}

/// Greedy pivoted Cholesky of the RBF Gram matrix of `data`.
pub fn incomplete_cholesky(
    data: &DMatrix<f64>,
    config: &KernelConfig,
    tol: f64,
    max_rank: usize,
) -> Result<CholeskyFactor> {
    incomplete_cholesky_kernel(&ProductKernel::new(data, *config), tol, max_rank)
}

/// Greedy pivoted Cholesky of any unit-diagonal product kernel. Stops once
/// the residual trace is at most `tol·N` or `max_rank` columns exist.
pub fn incomplete_cholesky_kernel(
    kernel: &ProductKernel,
    tol: f64,
    max_rank: usize,
) -> Result<CholeskyFactor> {
    let n = kernel.n();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "incomplete Cholesky of an empty set".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if max_rank == 0 || max_rank > n {
        return Err(Error::InvalidArgument(format!(
            "max rank {max_rank} outside 1..={n}"
        )));
    }
    let threshold = tol * n as f64;
    let mut diag = vec![1.0; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut residual: f64 = n as f64;
    while cols.len() < max_rank && residual > threshold {
        let (p, &dp) = diag
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| {
                if *cur.1 > *best.1 {
                    cur
                } else {
                    best
                }
            });
        if dp < NEGATIVE_PIVOT {
            return Err(Error::Numerical(format!(
                "negative pivot {dp} at rank {}",
                cols.len()
            )));
        }
        if dp <= 0.0 {
            break;
        }
        let pivot = dp.sqrt();
        let mut col: Vec<f64> = (0..n).map(|i| kernel.eval(i, p)).collect();
        for prev in &cols {
            let lp = prev[p];
            if lp != 0.0 {
                for (c, l) in col.iter_mut().zip(prev) {
                    *c -= l * lp;
                }
            }
        }
        for c in col.iter_mut() {
            *c /= pivot;
        }
        for (d, c) in diag.iter_mut().zip(&col) {
            *d -= c * c;
        }
        diag[p] = 0.0;
        pivots.push(p);
        cols.push(col);
        residual = diag.iter().map(|d| d.max(0.0)).sum();
    }
    let r = cols.len();
    let l = DMatrix::from_fn(n, r, |i, k| cols[k][i]);
    Ok(CholeskyFactor {
        l,
        pivots,
        residual_trace: residual.max(0.0),
        tolerance: tol,
    })
}

/// Implicit proxy `R = U K Uᵀ` with `U = HL` and `K = (UᵀU + εN·I_r)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankProxy {
    pub u: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub epsilon: f64,
}

pub fn proxy_lowrank(factor: &CholeskyFactor, epsilon: f64) -> Result<LowRankProxy> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let n = factor.l.nrows();
    let r = factor.rank();
    let mut u = factor.l.clone();
    for k in 0..r {
        let mean = u.column(k).sum() / n as f64;
        u.column_mut(k).add_scalar_mut(-mean);
    }
    let mut gram = u.transpose() * &u;
    for i in 0..r {
        gram[(i, i)] += epsilon * n as f64;
    }
    let k = Cholesky::new(gram)
        .ok_or_else(|| Error::Numerical("singular r×r system in low-rank proxy".into()))?
        .inverse();
    Ok(LowRankProxy { u, k, epsilon })
}

impl LowRankProxy {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Dense `N×N` matrix; only for checks on small inputs.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.u * &self.k * self.u.transpose()
    }

    /// `Tr[R_1 R_2 ⋯ R_m]` for any sequence of proxies on the same samples.
    pub fn trace_chain(chain: &[&LowRankProxy]) -> Result<f64> {
        let Some(first) = chain.first() else {
            return Ok(0.0);
        };
        if chain.iter().any(|p| p.n() != first.n()) {
            return Err(Error::Dimension(
                "low-rank proxies have different sample counts".into(),
            ));
        }
        if chain.iter().any(|p| p.rank() == 0) {
            return Ok(0.0);
        }
        // R_i = U_i K_i U_iᵀ, so the trace folds into r×r products
        // K_1 (U_1ᵀU_2) K_2 (U_2ᵀU_3) ⋯ K_m (U_mᵀU_1).
        let m = chain.len();
        let mut acc = chain[0].k.clone();
        for i in 0..m {
            let next = chain[(i + 1) % m];
            let cross = chain[i].u.transpose() * &next.u;
            acc = acc * cross;
            if i + 1 < m {
                acc *= &next.k;
            }
        }
        Ok(acc.trace())
    }

    pub fn trace_pair(a: &Self, b: &Self) -> Result<f64> {
        Self::trace_chain(&[a, b])
    }

    pub fn trace_triple(a: &Self, b: &Self, c: &Self) -> Result<f64> {
        Self::trace_chain(&[a, b, c])
    }

    /// `Tr[R_a R_c R_b R_c]`.
    pub fn trace_sandwich(a: &Self, b: &Self, c: &Self) -> Result<f64> {
        Self::trace_chain(&[a, c, b, c])
    }
}

/// Low-rank proxies in the roles of [`crate::operators::ProxySet`].
#[derive(Debug, Clone, Copy)]
pub enum LowRankSet<'a> {
    Unconditional {
        first: &'a LowRankProxy,
        second: &'a LowRankProxy,
    },
    Conditional {
        first: &'a LowRankProxy,
        extended: &'a LowRankProxy,
        given: &'a LowRankProxy,
    },
}

/// `‖R_a − R_a R_c‖²_HS = Tr[aa] − 2Tr[aac] + Tr[aacc]`.
fn residual_norm_sq(a: &LowRankProxy, c: &LowRankProxy) -> Result<f64> {
    Ok(
        LowRankProxy::trace_pair(a, a)? - 2.0 * LowRankProxy::trace_triple(a, a, c)?
            + LowRankProxy::trace_chain(&[a, a, c, c])?,
    )
}

pub fn faircocco_score_lowrank(notion: Notion, set: LowRankSet<'_>) -> Result<FairnessStatistic> {
    let (value, na, nb) = match (notion, set) {
        (Notion::Dp, LowRankSet::Unconditional { first, second }) => (
            LowRankProxy::trace_pair(first, second)?,
            LowRankProxy::trace_pair(first, first)?,
            LowRankProxy::trace_pair(second, second)?,
        ),
        (
            Notion::Eo | Notion::Cal,
            LowRankSet::Conditional {
                first,
                extended,
                given,
            },
        ) => (
            LowRankProxy::trace_pair(first, extended)?
                - 2.0 * LowRankProxy::trace_triple(first, extended, given)?
                + LowRankProxy::trace_sandwich(first, extended, given)?,
            residual_norm_sq(first, given)?,
            residual_norm_sq(extended, given)?,
        ),
        (n, _) => {
            return Err(Error::InvalidArgument(format!(
                "notion {n} does not match the supplied proxy set"
            )))
        }
    };
    let (na, nb) = (na.max(0.0).sqrt(), nb.max(0.0).sqrt());
    if na <= 1e-12 || nb <= 1e-12 {
        return Ok(FairnessStatistic::degenerate(notion));
    }
    let value = value.max(0.0);
    Ok(FairnessStatistic {
        notion,
        value,
        normalized_score: value / (na * nb),
        degenerate: false,
    })
}
